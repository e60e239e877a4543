use metron_core::bundle::{amari_dual, gauge_act, Connection, MetricField};
use metron_core::corpus::{self, hyperbolic, nilpotent, nilpotent_matrix, unit_square};
use metron_core::fe_solver::{
    hom_curvature_action, solve_fe, solve_parallel_forms, stabilized_constraint_subspace, SolutionSpace, SolveOptions,
};
use metron_core::linalg::{max_abs, vec_row_major};
use metron_core::transport::{ParallelSystem, Symmetry};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

mod common;
use common::{elimination_rank, invariant_symmetric_forms, loop_holonomies};

fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a, b, c, d])
}

/// Distance from `m` to the span of the (orthonormal) solution basis.
fn distance_to_span(space: &SolutionSpace, m: &DMatrix<f64>) -> f64 {
    let mut rest = m.clone();
    for b in &space.basis {
        rest -= b * b.dot(m);
    }
    max_abs(&rest)
}

fn certified(space: &SolutionSpace) {
    assert!(space.is_exact(), "prolongation did not stabilize: {:?}", space.constraint.dims_by_order);
    assert!(space.certified_residual <= 1e-7, "transport residual {}", space.certified_residual);
    assert!(space.substitution_residual <= 1e-6, "substitution residual {}", space.substitution_residual);
}

fn opts() -> SolveOptions {
    SolveOptions::default()
}

#[test]
fn curvature_action_of_flat_pair_vanishes() {
    let flat = corpus::flat(2);
    assert_eq!(max_abs(&hom_curvature_action(&flat, &flat, &[0.1, 0.2], 0, 1).unwrap()), 0.0);
}

#[test]
fn identity_is_in_the_kernel_of_the_self_action() {
    let d = unit_square();
    let nabla = corpus::random_polynomial_connection(&mut corpus::rng(30), &d, 3, 2);
    for x in d.sample_points().iter().step_by(7) {
        let a = hom_curvature_action(&nabla, &nabla, x, 0, 1).unwrap();
        assert!((a * vec_row_major(&DMatrix::identity(3, 3))).amax() < 1e-12);
    }
}

#[test]
fn nilpotent_curvature_action_kernel_is_spanned_by_identity_and_n() {
    // With A = [[a, b], [c, d]]: [N, A] = [[c, d − a], [0, −c]], so the
    // kernel is {a I + b N}.
    let nabla = nilpotent();
    let a = hom_curvature_action(&nabla, &nabla, &[0.3, -0.4], 0, 1).unwrap();
    assert_eq!(elimination_rank(&a, 1e-12), 2);
    for k in [DMatrix::identity(2, 2), nilpotent_matrix()] {
        assert_eq!((&a * vec_row_major(&k)).amax(), 0.0);
    }
}

#[test]
fn flat_constraint_subspace_is_everything() {
    let flat = corpus::flat(2);
    let sys = ParallelSystem::hom(&flat, &flat).unwrap();
    let k = stabilized_constraint_subspace(&sys, &[0.0, 0.0], 3, 1e-8).unwrap();
    assert_eq!((k.dimension(), k.stabilized_at), (4, Some(0)));
}

#[test]
fn nilpotent_constraint_subspace_stabilizes_immediately() {
    let nabla = nilpotent();
    let sys = ParallelSystem::hom(&nabla, &nabla).unwrap();
    let k = stabilized_constraint_subspace(&sys, &[0.0, 0.0], 3, 1e-8).unwrap();
    assert_eq!((k.dimension(), k.stabilized_at), (2, Some(0)));
    for m in [DMatrix::identity(2, 2), nilpotent_matrix()] {
        let c = sys.coordinates(&m);
        let proj = &k.basis * (k.basis.transpose() * &c);
        assert!((proj - c).amax() < 1e-12);
    }
}

#[test]
fn generic_constraint_subspaces_agree_with_pointwise_kernels() {
    // K at a point lies in the kernel of the curvature action there, and its
    // dimension cannot depend on the point since parallel sections are
    // determined by one value.
    let d = unit_square();
    let mut rng = corpus::rng(31);
    let nabla = corpus::random_polynomial_connection(&mut rng, &d, 2, 2);
    let other = corpus::random_polynomial_connection(&mut rng, &d, 2, 2);
    for (target, expected) in [(&nabla, 1), (&other, 0)] {
        let sys = ParallelSystem::hom(&nabla, target).unwrap();
        for x in [[0.0, 0.0], [0.5, 0.5], [-0.5, 0.25], [0.75, -0.75], [-1.0, 1.0]] {
            let k = stabilized_constraint_subspace(&sys, &x, 3, 1e-8).unwrap();
            assert_eq!(k.dimension(), expected, "at {x:?}");
            let action = hom_curvature_action(&nabla, target, &x, 0, 1).unwrap();
            let kernel_dim = 4 - elimination_rank(&action, 1e-9 * max_abs(&action));
            assert!(kernel_dim >= k.dimension());
            for c in k.basis.column_iter() {
                let phi = sys.embed(&c.into_owned());
                assert!((&action * vec_row_major(&phi)).amax() < 1e-8 * max_abs(&action));
            }
        }
    }
}

#[test]
fn flat_solution_space_is_all_matrices() {
    let flat = corpus::flat(2);
    let j = solve_fe(&flat, &flat, &opts()).unwrap();
    assert_eq!(j.dimension(), 4);
    assert!(j.certified_residual <= 1e-10);
    certified(&j);
    let euclid = amari_dual(&MetricField::identity(unit_square(), 2), &flat).unwrap();
    assert_eq!(solve_fe(&flat, &euclid, &opts()).unwrap().dimension(), 4);
}

#[test]
fn nilpotent_solutions_are_identity_and_n() {
    let nabla = nilpotent();
    let j = solve_fe(&nabla, &nabla, &opts()).unwrap();
    certified(&j);
    assert_eq!(j.dimension(), 2);
    assert!(distance_to_span(&j, &DMatrix::identity(2, 2)) < 1e-10);
    assert!(distance_to_span(&j, &nilpotent_matrix()) < 1e-10);
}

#[test]
fn flat_parallel_forms_are_constants() {
    let flat = corpus::flat(2);
    let s = solve_parallel_forms(&flat, Symmetry::Symmetric, &opts()).unwrap();
    let w = solve_parallel_forms(&flat, Symmetry::Antisymmetric, &opts()).unwrap();
    certified(&s);
    certified(&w);
    assert_eq!((s.dimension(), w.dimension()), (3, 1));
}

// Constant forms Q with Γ_i(x) Q + Q Γ_i(x)ᵀ = 0 at every sample point,
// counted by brute-force elimination over the entries of Q.
fn constant_parallel_forms(nabla: &Connection, symmetry: Symmetry) -> usize {
    let r = nabla.rank();
    let unknowns: Vec<(usize, usize)> = match symmetry {
        Symmetry::Symmetric => (0..r).flat_map(|a| (a..r).map(move |b| (a, b))).collect(),
        Symmetry::Antisymmetric => (0..r).flat_map(|a| (a + 1..r).map(move |b| (a, b))).collect(),
    };
    let sign = if symmetry == Symmetry::Symmetric { 1.0 } else { -1.0 };
    let unit = |(a, b): (usize, usize)| {
        let mut q = DMatrix::zeros(r, r);
        q[(a, b)] = 1.0;
        q[(b, a)] = if a == b { 1.0 } else { sign };
        q
    };
    let mut rows = Vec::new();
    for x in nabla.domain().sample_points() {
        for g in nabla.eval(&x).unwrap() {
            let cols: Vec<DVector<f64>> =
                unknowns.iter().map(|&u| vec_row_major(&(&g * unit(u) + unit(u) * g.transpose()))).collect();
            rows.push(DMatrix::from_columns(&cols));
        }
    }
    let mut stacked = DMatrix::zeros(rows.len() * r * r, unknowns.len());
    for (k, block) in rows.iter().enumerate() {
        stacked.view_mut((k * r * r, 0), (r * r, unknowns.len())).copy_from(block);
    }
    unknowns.len() - elimination_rank(&stacked, 1e-12)
}

#[test]
fn nilpotent_parallel_forms_match_brute_force() {
    // ∂_1 Q = 0 and ∂_2 Q = x1 (N Q + Q Nᵀ) force Q constant with
    // N Q + Q Nᵀ = 0, so parallel forms are exactly the constant ones.
    let nabla = nilpotent();
    let s = solve_parallel_forms(&nabla, Symmetry::Symmetric, &opts()).unwrap();
    let w = solve_parallel_forms(&nabla, Symmetry::Antisymmetric, &opts()).unwrap();
    certified(&s);
    certified(&w);
    assert_eq!(s.dimension(), constant_parallel_forms(&nabla, Symmetry::Symmetric));
    assert_eq!(w.dimension(), constant_parallel_forms(&nabla, Symmetry::Antisymmetric));
    assert_eq!((s.dimension(), w.dimension()), (1, 1));
    assert!(distance_to_span(&s, &m2(1.0, 0.0, 0.0, 0.0)) < 1e-10);
    assert!(distance_to_span(&w, &m2(0.0, 1.0, -1.0, 0.0)) < 1e-10);
}

#[test]
fn hyperbolic_parallel_symmetric_forms_are_multiples_of_the_metric() {
    let nabla = hyperbolic();
    let s = solve_parallel_forms(&nabla, Symmetry::Symmetric, &opts()).unwrap();
    certified(&s);
    assert_eq!(s.dimension(), 1);
    let g0 = corpus::hyperbolic_metric().eval(&s.base_point).unwrap();
    let q = &s.basis[0];
    assert!(max_abs(&(q * g0.norm() - &g0 * (q.dot(&g0).signum() * q.norm()))) < 1e-9);
    let hs = loop_holonomies(&nabla, &s.base_point, &[(0.5, 0.5), (-0.6, 0.4), (0.3, -0.7)]);
    assert_eq!(invariant_symmetric_forms(&hs, 1e-6), s.dimension());
}

#[test]
fn hyperbolic_self_solutions_are_identity_and_rotation() {
    // Γ_1 = J / x2 and Γ_2 = −I / x2 with J = [[0, 1], [−1, 0]] both commute
    // with I and J, so the constants I and J solve FE(∇, ∇).
    let nabla = hyperbolic();
    let j = solve_fe(&nabla, &nabla, &opts()).unwrap();
    certified(&j);
    assert_eq!(j.dimension(), 2);
    assert!(distance_to_span(&j, &DMatrix::identity(2, 2)) < 1e-9);
    assert!(distance_to_span(&j, &m2(0.0, 1.0, -1.0, 0.0)) < 1e-9);
}

#[test]
fn exact_sequence_counts_on_named_examples() {
    for (nabla, g) in [
        (corpus::flat(2), MetricField::identity(unit_square(), 2)),
        (nilpotent(), MetricField::identity(unit_square(), 2)),
        (nilpotent(), MetricField::constant(unit_square(), &m2(2.0, 0.5, 0.5, 1.0)).unwrap()),
        (hyperbolic(), corpus::hyperbolic_metric()),
        (hyperbolic(), MetricField::identity(corpus::half_plane_box(), 2)),
    ] {
        let j = solve_fe(&nabla, &amari_dual(&g, &nabla).unwrap(), &opts()).unwrap();
        let s = solve_parallel_forms(&nabla, Symmetry::Symmetric, &opts()).unwrap();
        let w = solve_parallel_forms(&nabla, Symmetry::Antisymmetric, &opts()).unwrap();
        for space in [&j, &s, &w] {
            certified(space);
        }
        assert_eq!(j.dimension(), s.dimension() + w.dimension());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn identity_always_solves_the_self_equation(seed in any::<u64>()) {
        let nabla = corpus::random_polynomial_connection(&mut corpus::rng(seed), &unit_square(), 2, 2);
        let j = solve_fe(&nabla, &nabla, &opts()).unwrap();
        prop_assert!(j.dimension() >= 1);
        prop_assert!(distance_to_span(&j, &DMatrix::identity(2, 2)) < 1e-8);
    }

    #[test]
    fn solution_dimension_is_gauge_invariant(seed in any::<u64>(), which in 0usize..3) {
        let mut rng = corpus::rng(seed);
        let d = unit_square();
        let (nabla, target) = match which {
            0 => (nilpotent(), nilpotent()),
            1 => (corpus::flat(2), corpus::flat(2)),
            _ => {
                let n = corpus::random_polynomial_connection(&mut rng, &d, 2, 2);
                (n.clone(), n)
            }
        };
        let phi = corpus::random_gauge(&mut rng, &d, 2).unwrap();
        let before = solve_fe(&nabla, &target, &opts()).unwrap();
        let after = solve_fe(&gauge_act(&phi, &nabla).unwrap(), &gauge_act(&phi, &target).unwrap(), &opts()).unwrap();
        prop_assert_eq!(before.dimension(), after.dimension());
        prop_assert!(after.substitution_residual <= 1e-6);
    }

    #[test]
    fn exact_sequence_for_random_metrics(seed in any::<u64>(), which in 0usize..3) {
        let mut rng = corpus::rng(seed);
        let d = unit_square();
        let nabla = match which {
            0 => nilpotent(),
            1 => corpus::flat(2),
            _ => corpus::random_polynomial_connection(&mut rng, &d, 2, 2),
        };
        let g = corpus::random_constant_metric(&mut rng, &d, 2);
        let j = solve_fe(&nabla, &amari_dual(&g, &nabla).unwrap(), &opts()).unwrap();
        let s = solve_parallel_forms(&nabla, Symmetry::Symmetric, &opts()).unwrap();
        let w = solve_parallel_forms(&nabla, Symmetry::Antisymmetric, &opts()).unwrap();
        prop_assert_eq!(j.dimension(), s.dimension() + w.dimension());
    }
}
