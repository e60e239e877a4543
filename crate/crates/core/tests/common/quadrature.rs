use metron_core::stat_models::Family;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Golub–Welsch: nodes and weights of the Gauss rule for the Jacobi matrix
/// with the given recurrence, normalised to a probability measure.
pub fn gauss_rule(diag: &[f64], off: &[f64]) -> Vec<(f64, f64)> {
    let n = diag.len();
    let jac = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag[i]
        } else if i + 1 == j {
            off[i]
        } else if j + 1 == i {
            off[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jac);
    (0..n).map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2))).collect()
}

/// Weight `e^{−t²}/√π`.
pub fn hermite_rule(n: usize) -> Vec<(f64, f64)> {
    let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    gauss_rule(&vec![0.0; n], &off)
}

/// Weight `e^{−u}` on `[0, ∞)`.
pub fn laguerre_rule(n: usize) -> Vec<(f64, f64)> {
    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + 1.0).collect();
    let off: Vec<f64> = (1..n).map(|k| k as f64).collect();
    gauss_rule(&diag, &off)
}

/// `E_θ[f(score)]` with the score `∂ log p(x; θ)` computed by hand.
pub fn score_expectation(family: Family, theta: &[f64], f: impl Fn(&DVector<f64>) -> f64) -> f64 {
    match family {
        Family::Gaussian1d => {
            let (mu, sigma) = (theta[0], theta[1]);
            hermite_rule(40)
                .into_iter()
                .map(|(t, w)| {
                    let z = 2f64.sqrt() * t;
                    let x = mu + sigma * z;
                    let s = DVector::from_vec(vec![(x - mu) / sigma.powi(2), -1.0 / sigma + (x - mu).powi(2) / sigma.powi(3)]);
                    w * f(&s)
                })
                .sum()
        }
        Family::Bernoulli => {
            let p = theta[0];
            let s1 = DVector::from_vec(vec![1.0 / p]);
            let s0 = DVector::from_vec(vec![-1.0 / (1.0 - p)]);
            p * f(&s1) + (1.0 - p) * f(&s0)
        }
        Family::Poisson => {
            let lambda = theta[0];
            let mut pk = (-lambda).exp();
            let mut total = 0.0;
            for k in 0.. {
                let s = DVector::from_vec(vec![k as f64 / lambda - 1.0]);
                total += pk * f(&s);
                let ratio = lambda / (k as f64 + 1.0);
                pk *= ratio;
                // The remaining mass is at most pk / (1 − ratio) once ratio < 1,
                // and the score moments grow only polynomially in k.
                if ratio < 0.5 && pk * (k as f64 + 2.0).powi(3) < 1e-13 {
                    break;
                }
            }
            total
        }
        Family::Exponential => {
            let lambda = theta[0];
            laguerre_rule(30)
                .into_iter()
                .map(|(u, w)| w * f(&DVector::from_vec(vec![1.0 / lambda - u / lambda])))
                .sum()
        }
    }
}

pub fn fisher_oracle(family: Family, theta: &[f64]) -> DMatrix<f64> {
    let m = family.dim();
    DMatrix::from_fn(m, m, |i, j| score_expectation(family, theta, |s| s[i] * s[j]))
}
