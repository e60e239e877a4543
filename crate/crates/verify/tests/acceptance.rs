//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. The determinism criterion runs the `metron` binary from
//! the same target directory, so build the workspace first.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use metron_core::bundle::{
    amari_dual, covariant_derivative_of_metric, gauge_act, max_coefficient_difference, quasi_commutativity_check,
    Connection, MetricField,
};
use metron_core::corpus::{self, hyperbolic, hyperbolic_metric, nilpotent, nilpotent_matrix, unit_square};
use metron_core::fe_solver::SolveOptions;
use metron_core::linalg::{max_abs, vec_row_major};
use metron_core::metricity::{decide_metricity, index_report, prop3_check, IndDecision, MetricityCertificate, Verdict};
use metron_core::stat_models::{alpha_scan, Family, StatisticalFamily};
use metron_core::transport::{transport_hom, PolylinePath};
use nalgebra::DMatrix;

#[path = "../../core/tests/common/mod.rs"]
mod common;
use common::quadrature::fisher_oracle;

const TIME_LIMIT: Duration = Duration::from_secs(60);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn opts() -> SolveOptions {
    SolveOptions::default()
}

/// 50 seeded pairs of a degree-2 polynomial connection and a constant
/// regular metric on the unit square, alternating r = 2 and r = 3.
fn random_pairs() -> Vec<(Connection, MetricField)> {
    let d = unit_square();
    let mut rng = corpus::rng(20_240_601);
    (0..50)
        .map(|k| {
            let r = 2 + k % 2;
            let nabla = corpus::random_polynomial_connection(&mut rng, &d, r, 2);
            let g = corpus::random_constant_metric(&mut rng, &d, r);
            (nabla, g)
        })
        .collect()
}

/// Connections of criteria 1–4 followed by the hyperbolic Levi-Civita one.
fn corpus_connections() -> Vec<(String, Connection)> {
    let mut out: Vec<(String, Connection)> =
        random_pairs().into_iter().enumerate().map(|(k, (n, _))| (format!("random[{k}]"), n)).collect();
    out.push(("flat".into(), corpus::flat(2)));
    out.push(("nilpotent".into(), nilpotent()));
    out.push(("hyperbolic".into(), hyperbolic()));
    out
}

fn involution() -> Outcome {
    let mut worst = 0.0f64;
    for (nabla, g) in random_pairs() {
        let twice = amari_dual(&g, &amari_dual(&g, &nabla).unwrap()).unwrap();
        worst = worst.max(max_coefficient_difference(&twice, &nabla).unwrap());
    }
    outcome(worst <= 1e-9, format!("50 pairs, max |g.(g.∇) − ∇| = {worst:.2e} (tol 1e-9)"))
}

fn quasi_commutativity() -> Outcome {
    let pairs = random_pairs();
    let mut rng = corpus::rng(20_240_602);
    let mut worst = 0.0f64;
    let mut checks = 0;
    for (nabla, g) in &pairs {
        for _ in 0..20 {
            let phi = corpus::random_gauge(&mut rng, nabla.domain(), nabla.rank()).unwrap();
            worst = worst.max(quasi_commutativity_check(&phi, g, nabla).unwrap());
            checks += 1;
        }
    }
    outcome(worst <= 1e-8, format!("{checks} (pair, gauge) checks, max residual {worst:.2e} (tol 1e-8)"))
}

fn flat_baseline() -> Outcome {
    let rep = index_report(&corpus::flat(2), &[], &opts()).unwrap();
    let c = &rep.certificate;
    let pass = (c.dim_j, c.dim_s2, c.dim_omega2) == (4, 3, 1)
        && c.exact_sequence_holds
        && c.verdict == Verdict::RegularlyMetric
        && c.certified
        && rep.sb == 0
        && rep.ind_decision == IndDecision::Zero;
    outcome(
        pass,
        format!(
            "dimJ {} = dimS2 {} + dimOmega2 {}, {}, certified {}, s^b {}, ind {:?}",
            c.dim_j,
            c.dim_s2,
            c.dim_omega2,
            c.verdict.label(),
            c.certified,
            rep.sb,
            rep.ind_decision
        ),
    )
}

// Null space of a stacked linear system by SVD, as columns.
fn null_space(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    let padded = if a.nrows() < n { a.clone().resize_vertically(n, 0.0) } else { a.clone() };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let cols: Vec<_> = (0..n)
        .filter(|&k| svd.singular_values[k] <= tol)
        .map(|k| v_t.row(k).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

// Brute-force oracle for the nilpotent connection Γ_1 = 0, Γ_2 = x1 N.
// From ∂_1 X = 0 a parallel X depends on x2 only, and ∂_2 X = x1 (N X + X Nᵀ)
// at x1 = 0 forces ∂_2 X = 0, so X is constant with N X + X Nᵀ = 0. The same
// holds for FE(∇, g0.∇) with g0 the identity, whose dual is −Γᵀ. Each
// algebraic solution is then substituted into the local system on the grid.
fn nilpotent_oracle(nabla: &Connection) -> (usize, usize, usize, usize, f64) {
    let n = nilpotent_matrix();
    let e = |a: usize, b: usize| DMatrix::from_fn(2, 2, |i, j| f64::from((i, j) == (a, b)));
    let symmetric = [e(0, 0), e(1, 1), e(0, 1) + e(1, 0)];
    let antisymmetric = [e(0, 1) - e(1, 0)];
    let general = [e(0, 0), e(0, 1), e(1, 0), e(1, 1)];
    let solve = |basis: &[DMatrix<f64>]| -> Vec<DMatrix<f64>> {
        let cols: Vec<_> = basis.iter().map(|x| vec_row_major(&(&n * x + x * n.transpose()))).collect();
        let kernel = null_space(&DMatrix::from_columns(&cols), 1e-12);
        kernel
            .column_iter()
            .map(|c| basis.iter().zip(c.iter()).fold(DMatrix::zeros(2, 2), |acc, (b, &w)| acc + b * w))
            .collect()
    };
    let (s2, w2, j) = (solve(&symmetric), solve(&antisymmetric), solve(&general));
    let mut worst = 0.0f64;
    for x in nabla.domain().sample_points() {
        let gamma = nabla.eval(&x).unwrap();
        for sol in s2.iter().chain(&w2).chain(&j) {
            for gi in &gamma {
                worst = worst.max(max_abs(&(gi * sol + sol * gi.transpose())));
            }
        }
    }
    let max_rank = s2.iter().map(|q| q.rank(1e-12)).max().unwrap_or(0);
    (s2.len(), w2.len(), j.len(), max_rank, worst)
}

fn nilpotent_obstruction() -> Outcome {
    let nabla = nilpotent();
    let rep = index_report(&nabla, &[], &opts()).unwrap();
    let c = &rep.certificate;
    let (s2, w2, j, rank, substituted) = nilpotent_oracle(&nabla);
    let pass = c.dim_s2 == 1
        && rep.max_parallel_metric_rank == 1
        && c.verdict == (Verdict::SingularMetricOnly { max_rank: 1 })
        && rep.ind_decision == IndDecision::AtLeastOne
        && c.certified
        && (c.dim_s2, c.dim_omega2, c.dim_j, rep.max_parallel_metric_rank) == (s2, w2, j, rank)
        && substituted <= 1e-12;
    outcome(
        pass,
        format!(
            "solver (S2 {}, Omega2 {}, J {}, rank {}) vs oracle ({s2}, {w2}, {j}, {rank}), oracle substitution {substituted:.1e}, {}, ind {:?}, certified {}",
            c.dim_s2,
            c.dim_omega2,
            c.dim_j,
            rep.max_parallel_metric_rank,
            c.verdict.label(),
            rep.ind_decision,
            c.certified
        ),
    )
}

fn certificates() -> Vec<(String, Connection, MetricityCertificate)> {
    corpus_connections()
        .into_iter()
        .map(|(name, nabla)| {
            let c = decide_metricity(&nabla, &opts()).unwrap();
            (name, nabla, c)
        })
        .collect()
}

fn exact_sequence() -> Outcome {
    let certs = certificates();
    let failing: Vec<String> = certs
        .iter()
        .filter(|(_, _, c)| !(c.exact_sequence_holds && c.dim_j == c.dim_s2 + c.dim_omega2))
        .map(|(name, _, c)| format!("{name}: {} != {} + {}", c.dim_j, c.dim_s2, c.dim_omega2))
        .collect();
    let named: Vec<String> = certs[certs.len() - 3..]
        .iter()
        .map(|(name, _, c)| format!("{name} {}={}+{}", c.dim_j, c.dim_s2, c.dim_omega2))
        .collect();
    outcome(
        failing.is_empty(),
        format!("{} items, {} violations; {}{}", certs.len(), failing.len(), named.join(", "), failing.join("; ")),
    )
}

type Invariants = (usize, usize, usize, usize, Verdict);

fn invariants(nabla: &Connection, options: &SolveOptions) -> Invariants {
    let rep = index_report(nabla, &[], options).unwrap();
    let c = &rep.certificate;
    (c.dim_j, c.dim_s2, c.dim_omega2, rep.sb, c.verdict.clone())
}

fn gauge_invariance() -> Outcome {
    // Substitution residuals do not enter any of the compared integers.
    let options = SolveOptions {
        skip_substitution: true,
        ..opts()
    };
    let mut rng = corpus::rng(20_240_606);
    let mut changed = Vec::new();
    let mut checks = 0;
    let items = corpus_connections();
    for (name, nabla) in &items {
        let before = invariants(nabla, &options);
        for k in 0..20 {
            let phi = corpus::random_gauge(&mut rng, nabla.domain(), nabla.rank()).unwrap();
            let after = invariants(&gauge_act(&phi, nabla).unwrap(), &options);
            checks += 1;
            if after != before {
                changed.push(format!("{name} gauge {k}: {before:?} -> {after:?}"));
            }
        }
    }
    outcome(
        changed.is_empty(),
        format!("{} items x 20 gauges ({checks} checks), {} changed {}", items.len(), changed.len(), changed.join("; ")),
    )
}

fn parallel_induced_forms() -> Outcome {
    let mut worst = 0.0f64;
    let mut ranks_ok = true;
    let mut solutions = 0;
    let mut uncertified = 0;
    for (_, nabla, c) in certificates() {
        let j = &c.j;
        if j.dimension() == 0 {
            continue;
        }
        if j.certified_residual > c.tolerances.transport || j.substitution_residual > c.tolerances.substitution {
            uncertified += 1;
            continue;
        }
        let g = MetricField::identity(nabla.domain().clone(), nabla.rank());
        let mut coeffs: Vec<Vec<f64>> =
            (0..j.dimension()).map(|k| (0..j.dimension()).map(|i| f64::from(i == k)).collect()).collect();
        coeffs.push((0..j.dimension()).map(|i| 0.3 + 0.7 * i as f64).collect());
        for cf in coeffs {
            let rep = prop3_check(&nabla, &g, j, &cf, &opts()).unwrap();
            worst = worst.max(rep.nabla_q).max(rep.nabla_omega);
            ranks_ok &= rep.rank_constant;
            solutions += 1;
        }
    }
    // The hyperbolic example with its own metric as well.
    let (nabla, g) = (hyperbolic(), hyperbolic_metric());
    let j = metron_core::fe_solver::solve_fe(&nabla, &amari_dual(&g, &nabla).unwrap(), &opts()).unwrap();
    for k in 0..j.dimension() {
        let cf: Vec<f64> = (0..j.dimension()).map(|i| f64::from(i == k)).collect();
        let rep = prop3_check(&nabla, &g, &j, &cf, &opts()).unwrap();
        worst = worst.max(rep.nabla_q).max(rep.nabla_omega);
        ranks_ok &= rep.rank_constant;
        solutions += 1;
    }
    outcome(
        worst <= 1e-6 && ranks_ok && uncertified == 0,
        format!(
            "{solutions} solutions, max |∇q|, |∇ω| = {worst:.2e} (tol 1e-6), rank(Φ) constant {ranks_ok}, uncertified {uncertified}"
        ),
    )
}

fn statistical_suite() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for family in [Family::Gaussian1d, Family::Bernoulli] {
        let sf = StatisticalFamily::new(family);
        let g = sf.fisher_metric().unwrap();
        let mut fisher = 0.0f64;
        for x in sf.domain().sample_points().iter().step_by(7).take(5) {
            fisher = fisher.max((g.eval(x).unwrap() - fisher_oracle(family, x)).amax());
        }
        let parallel = covariant_derivative_of_metric(&sf.alpha_connection(0.0).unwrap(), &g).unwrap().residual;
        let mut dual = 0.0f64;
        for alpha in [-1.0, -0.5, 0.5, 1.0] {
            let d = amari_dual(&g, &sf.alpha_connection(alpha).unwrap()).unwrap();
            dual = dual.max(max_coefficient_difference(&d, &sf.alpha_connection(-alpha).unwrap()).unwrap());
        }
        let scan = alpha_scan(&sf, &[-1.0, -0.5, 0.0, 0.5, 1.0], &opts()).unwrap();
        let irregular: Vec<String> = scan
            .alphas
            .iter()
            .zip(&scan.per_alpha)
            .filter(|(_, c)| !c.verdict.is_regular())
            .map(|(a, c)| format!("α={a}: {}", c.verdict.label()))
            .collect();
        let ok = fisher <= 1e-6 && parallel <= 1e-8 && dual <= 1e-8 && irregular.is_empty() && scan.theorem4_consistent;
        pass &= ok;
        notes.push(format!(
            "{family}: fisher {fisher:.1e}, ∇⁰g {parallel:.1e}, dual {dual:.1e}, theorem4Consistent {}, not regular [{}]",
            scan.theorem4_consistent,
            irregular.join(", ")
        ));
    }
    outcome(pass, notes.join("; "))
}

fn zigzag(corners: &[[f64; 2]], steps: usize) -> PolylinePath {
    PolylinePath::new(corners.iter().map(|c| c.to_vec()).collect(), steps).unwrap()
}

fn transport_order() -> Outcome {
    let pairs = random_pairs();
    let square = [[-0.8, -0.6], [0.5, -0.2], [0.1, 0.7], [0.8, 0.9]];
    let half_plane = [[-0.8, 0.6], [0.5, 0.9], [0.1, 1.7], [0.8, 1.9]];
    let items = [
        ("random[0]", pairs[0].0.clone(), square),
        ("random[1]", pairs[1].0.clone(), square),
        ("hyperbolic", hyperbolic(), half_plane),
    ];
    let mut ratios = Vec::new();
    for (name, nabla, corners) in &items {
        let r = nabla.rank();
        let phi0 = DMatrix::from_fn(r, r, |a, b| if a == b { 1.0 } else { 0.25 });
        let at = |steps: usize| transport_hom(nabla, nabla, &zigzag(corners, steps), &phi0).unwrap().end_frame;
        let (a, b, c) = (at(8), at(16), at(32));
        // Discrepancy against the half-step run, at two step sizes.
        let (coarse, fine) = (max_abs(&(&a - &b)), max_abs(&(&b - &c)));
        ratios.push((name, coarse, coarse / fine));
    }
    let pass = ratios.iter().all(|(_, _, q)| (4.0..=64.0).contains(q));
    let shown: Vec<String> = ratios.iter().map(|(n, e, q)| format!("{n} {q:.1} (discrepancy {e:.1e})")).collect();
    outcome(pass, format!("error ratio per step halving (expect 16, accept 4..64): {}", shown.join(", ")))
}

// target/<profile>/deps/acceptance-<hash> → target/<profile>/metron
fn metron_binary() -> PathBuf {
    let exe = std::env::current_exe().expect("test binary path");
    let profile_dir = exe.parent().and_then(Path::parent).expect("target layout");
    profile_dir.join(format!("metron{}", std::env::consts::EXE_SUFFIX))
}

fn determinism() -> Outcome {
    let problems = Path::new(env!("CARGO_MANIFEST_DIR")).join("../cli/problems");
    let binary = metron_binary();
    if !binary.is_file() {
        return outcome(false, format!("{} not found; build the workspace first", binary.display()));
    }
    let file = |n: &str| problems.join(n).to_string_lossy().into_owned();
    let runs: Vec<Vec<String>> = vec![
        vec!["metricity".into(), file("flat2x2.json")],
        vec!["index".into(), file("nilpotent.json"), "--seed".into(), "7".into()],
        vec!["solve-fe".into(), file("hyperbolic.json")],
        vec!["gauge-check".into(), file("nilpotent.json"), "--seed".into(), "7".into()],
        vec!["curvature".into(), file("hyperbolic.json")],
        vec!["alpha-scan".into(), "--family".into(), "bernoulli".into(), "--seed".into(), "7".into()],
    ];
    let mut differing = Vec::new();
    for args in &runs {
        let run = || {
            Command::new(&binary)
                .args(args)
                .arg("--quiet")
                .output()
                .expect("binary runs")
        };
        let (a, b) = (run(), run());
        if a.stdout.is_empty() || a.stdout != b.stdout || a.status.code() != b.status.code() {
            differing.push(args[0].clone());
        }
    }
    outcome(
        differing.is_empty(),
        format!("{} commands run twice, differing: [{}]", runs.len(), differing.join(", ")),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("involution", involution),
        ("quasi-commutativity", quasi_commutativity),
        ("flat baseline", flat_baseline),
        ("nilpotent obstruction", nilpotent_obstruction),
        ("exact sequence", exact_sequence),
        ("gauge invariance", gauge_invariance),
        ("parallel q and ω", parallel_induced_forms),
        ("statistical suite", statistical_suite),
        ("transport order", transport_order),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| outcome(false, format!("panicked: {}", panic_message(&e))));
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed < TIME_LIMIT;
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {} [{:.1} s]",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn panic_message(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}
