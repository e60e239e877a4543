//! Built-in statistical families and their α-connections.
//!
//! Coordinates: `gaussian1d` uses `x1 = μ`, `x2 = σ`; the one-parameter
//! families use `x1` for `p` or `λ`. With `ℓ` the log-likelihood,
//!
//! ```text
//! g_ij   = E[∂_i ℓ ∂_j ℓ]
//! T_ijk  = E[∂_i ℓ ∂_j ℓ ∂_k ℓ]
//! Γ^(α)[i][j][k] = Γ^(0)[i][j][k] − (α/2) Σ_l g^{kl} T_ijl
//! ```
//!
//! where `Γ^(0)` is the Levi-Civita connection of `g` and
//! `Γ[i][j][k]` is the coefficient of `∂_k` in `∇_{∂_i} ∂_j`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{levi_civita, ChartDomain, Connection, ExprMatrix, MetricField};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fe_solver::SolveOptions;
use crate::metricity::{decide_metricity, MetricityCertificate, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian1d,
    Bernoulli,
    Poisson,
    Exponential,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Gaussian1d, Family::Bernoulli, Family::Poisson, Family::Exponential];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian1d => "gaussian1d",
            Family::Bernoulli => "bernoulli",
            Family::Poisson => "poisson",
            Family::Exponential => "exponential",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Family::Gaussian1d => 2,
            _ => 1,
        }
    }

    /// Default parameter box, away from the boundary of the natural domain.
    pub fn default_domain(self) -> ChartDomain {
        let (lo, hi) = match self {
            Family::Gaussian1d => (vec![-1.0, 0.5], vec![1.0, 2.0]),
            Family::Bernoulli => (vec![0.2], vec![0.8]),
            Family::Poisson | Family::Exponential => (vec![0.5], vec![3.0]),
        };
        ChartDomain::new(lo, hi, 9).expect("valid default box")
    }

    /// Whether a closed box lies strictly inside the natural parameter space.
    pub fn admits(self, domain: &ChartDomain) -> bool {
        if domain.dim() != self.dim() {
            return false;
        }
        match self {
            Family::Gaussian1d => domain.lower()[1] > 0.0,
            Family::Bernoulli => domain.lower()[0] > 0.0 && domain.upper()[0] < 1.0,
            Family::Poisson | Family::Exponential => domain.lower()[0] > 0.0,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown family `{s}` (expected gaussian1d, bernoulli, poisson or exponential)")))
    }
}

/// A family together with the parameter box it is analysed on.
#[derive(Debug, Clone)]
pub struct StatisticalFamily {
    family: Family,
    domain: ChartDomain,
}

fn x(i: usize) -> Expr {
    Expr::var(i)
}

fn c(v: f64) -> Expr {
    Expr::constant(v)
}

impl StatisticalFamily {
    pub fn new(family: Family) -> Self {
        StatisticalFamily {
            family,
            domain: family.default_domain(),
        }
    }

    pub fn with_domain(family: Family, domain: ChartDomain) -> Result<Self> {
        if !family.admits(&domain) {
            return Err(Error::Domain(format!(
                "parameter box {:?}..{:?} is not inside the natural domain of {family}",
                domain.lower(),
                domain.upper()
            )));
        }
        Ok(StatisticalFamily { family, domain })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    fn fisher_matrix(&self) -> ExprMatrix {
        match self.family {
            Family::Gaussian1d => {
                let s2 = x(1).powi(-2);
                ExprMatrix::from_fn(2, 2, |a, b| match (a, b) {
                    (0, 0) => s2.clone(),
                    (1, 1) => c(2.0) * &s2,
                    _ => Expr::zero(),
                })
            }
            Family::Bernoulli => ExprMatrix::from_fn(1, 1, |_, _| Expr::one() / (x(0) * (Expr::one() - x(0)))),
            Family::Poisson => ExprMatrix::from_fn(1, 1, |_, _| Expr::one() / x(0)),
            Family::Exponential => ExprMatrix::from_fn(1, 1, |_, _| x(0).powi(-2)),
        }
    }

    /// The Fisher information metric.
    pub fn fisher_metric(&self) -> Result<MetricField> {
        MetricField::regular(self.domain.clone(), self.fisher_matrix())
    }

    /// `T[i][j][k] = E[∂_i ℓ ∂_j ℓ ∂_k ℓ]`, totally symmetric.
    pub fn amari_chentsov_tensor(&self) -> Vec<Vec<Vec<Expr>>> {
        let m = self.dim();
        let mut t = vec![vec![vec![Expr::zero(); m]; m]; m];
        match self.family {
            Family::Gaussian1d => {
                let s3 = x(1).powi(-3);
                let two = c(2.0) * &s3;
                for (i, j, k) in [(0, 0, 1), (0, 1, 0), (1, 0, 0)] {
                    t[i][j][k] = two.clone();
                }
                t[1][1][1] = c(8.0) * &s3;
            }
            Family::Bernoulli => {
                let p = x(0);
                let v = p.clone() * (Expr::one() - p.clone());
                t[0][0][0] = (Expr::one() - c(2.0) * p) / v.powi(2);
            }
            Family::Poisson => t[0][0][0] = x(0).powi(-2),
            Family::Exponential => t[0][0][0] = c(-2.0) * x(0).powi(-3),
        }
        t
    }

    /// The α-connection on the tangent bundle of the parameter box.
    pub fn alpha_connection(&self, alpha: f64) -> Result<Connection> {
        let g = self.fisher_metric()?;
        let lc = levi_civita(&g)?;
        if alpha == 0.0 {
            return Ok(lc);
        }
        let m = self.dim();
        let (ginv, _) = g.matrix().inverse()?;
        let t = self.amari_chentsov_tensor();
        let weight = c(-alpha / 2.0);
        let blocks = (0..m)
            .map(|i| {
                ExprMatrix::from_fn(m, m, |j, k| {
                    let correction: Expr = (0..m).map(|l| ginv.get(k, l) * &t[i][j][l]).sum();
                    lc.coefficients(i).get(j, k) + &weight * &correction
                })
            })
            .collect();
        Connection::new(self.domain.clone(), m, blocks)
    }
}

/// Metricity verdicts along a list of α values.
#[derive(Debug, Clone)]
pub struct AlphaScanReport {
    pub family: Family,
    /// Sorted ascending.
    pub alphas: Vec<f64>,
    pub per_alpha: Vec<MetricityCertificate>,
    /// False only when every positive α in the scan is regularly metric
    /// while some α in the scan is not.
    pub theorem4_consistent: bool,
    /// Description of the offending α values when inconsistent.
    pub counter_signal: Option<String>,
}

/// Runs [`decide_metricity`] for each α (concurrently).
pub fn alpha_scan(family: &StatisticalFamily, alphas: &[f64], options: &SolveOptions) -> Result<AlphaScanReport> {
    if alphas.iter().any(|a| !a.is_finite()) {
        return Err(Error::Invalid("alpha values must be finite".into()));
    }
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let per_alpha = sorted
        .par_iter()
        .map(|&a| decide_metricity(&family.alpha_connection(a)?, options))
        .collect::<Result<Vec<_>>>()?;
    let positive: Vec<&MetricityCertificate> =
        sorted.iter().zip(&per_alpha).filter(|(a, _)| **a > 0.0).map(|(_, c)| c).collect();
    let hypothesis = !positive.is_empty() && positive.iter().all(|c| c.verdict.is_regular());
    let failing: Vec<String> = sorted
        .iter()
        .zip(&per_alpha)
        .filter(|(_, c)| c.verdict != Verdict::RegularlyMetric)
        .map(|(a, c)| format!("alpha = {a}: {}", c.verdict.label()))
        .collect();
    let theorem4_consistent = !(hypothesis && !failing.is_empty());
    Ok(AlphaScanReport {
        family: family.family(),
        alphas: sorted,
        per_alpha,
        theorem4_consistent,
        counter_signal: (!theorem4_consistent).then(|| {
            format!(
                "every positive alpha is regularly metric but {}",
                failing.join("; ")
            )
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{amari_dual, covariant_derivative_of_metric, curvature, max_coefficient_difference};

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
            assert!(f.admits(&f.default_domain()));
        }
        assert!("cauchy".parse::<Family>().is_err());
        let bad = ChartDomain::new(vec![0.0], vec![0.5], 5).unwrap();
        assert!(StatisticalFamily::with_domain(Family::Bernoulli, bad).is_err());
    }

    #[test]
    fn zero_connection_is_fisher_parallel_and_self_dual() {
        for f in Family::ALL {
            let s = StatisticalFamily::new(f);
            let g = s.fisher_metric().unwrap();
            let lc = s.alpha_connection(0.0).unwrap();
            assert!(covariant_derivative_of_metric(&lc, &g).unwrap().residual <= 1e-8, "{f}");
            assert!(max_coefficient_difference(&amari_dual(&g, &lc).unwrap(), &lc).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn dual_pairs() {
        for f in Family::ALL {
            let s = StatisticalFamily::new(f);
            let g = s.fisher_metric().unwrap();
            for a in [0.5, 1.0] {
                let d = amari_dual(&g, &s.alpha_connection(a).unwrap()).unwrap();
                let minus = s.alpha_connection(-a).unwrap();
                assert!(max_coefficient_difference(&d, &minus).unwrap() <= 1e-8, "{f} {a}");
            }
        }
    }

    #[test]
    fn gaussian_exponential_and_mixture_connections_are_flat() {
        let s = StatisticalFamily::new(Family::Gaussian1d);
        for a in [-1.0, 1.0] {
            let r = curvature(&s.alpha_connection(a).unwrap());
            assert!(r.max_abs(&s.domain().sample_points()).unwrap() <= 1e-8);
        }
        let r0 = curvature(&s.alpha_connection(0.0).unwrap());
        assert!(r0.max_abs(&s.domain().sample_points()).unwrap() > 0.1);
    }
}
