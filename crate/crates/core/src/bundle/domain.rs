use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::MAX_VARS;

/// An axis-aligned box chart with a deterministic interior sample grid.
///
/// Grid node `k` on axis `i` sits at `lower[i] + (k + 1) * (upper[i] - lower[i]) / (n + 1)`,
/// so every node is strictly inside the box. Nodes are enumerated with the
/// first axis varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChartDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    samples_per_axis: usize,
}

impl ChartDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, samples_per_axis: usize) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Domain(format!(
                "{} lower bounds but {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        if lower.is_empty() || lower.len() > MAX_VARS {
            return Err(Error::Domain(format!("dimension {} outside 1..={MAX_VARS}", lower.len())));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Domain(format!("axis {}: need lower < upper, got [{lo}, {hi}]", i + 1)));
            }
        }
        if samples_per_axis == 0 {
            return Err(Error::Domain("need at least one sample per axis".into()));
        }
        Ok(ChartDomain {
            lower,
            upper,
            samples_per_axis,
        })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64, samples_per_axis: usize) -> Result<Self> {
        ChartDomain::new(vec![lo; dim], vec![hi; dim], samples_per_axis)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn samples_per_axis(&self) -> usize {
        self.samples_per_axis
    }

    pub fn with_samples(&self, samples_per_axis: usize) -> Self {
        ChartDomain {
            samples_per_axis,
            ..self.clone()
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Closed-box membership with a relative slack of 1e-12.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(i, &v)| {
                let slack = 1e-12 * (self.upper[i] - self.lower[i]);
                v >= self.lower[i] - slack && v <= self.upper[i] + slack
            })
    }

    pub fn axis_nodes(&self, axis: usize) -> Vec<f64> {
        let n = self.samples_per_axis;
        let (lo, hi) = (self.lower[axis], self.upper[axis]);
        (0..n).map(|k| lo + (k + 1) as f64 * (hi - lo) / (n + 1) as f64).collect()
    }

    pub fn node_count(&self) -> usize {
        self.samples_per_axis.pow(self.dim() as u32)
    }

    /// Grid multi-index of node number `flat`.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let n = self.samples_per_axis;
        let mut idx = vec![0; self.dim()];
        for slot in idx.iter_mut().rev() {
            *slot = flat % n;
            flat /= n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &k| acc * self.samples_per_axis + k)
    }

    pub fn node(&self, idx: &[usize]) -> Vec<f64> {
        let n = self.samples_per_axis;
        idx.iter()
            .enumerate()
            .map(|(i, &k)| {
                let (lo, hi) = (self.lower[i], self.upper[i]);
                lo + (k + 1) as f64 * (hi - lo) / (n + 1) as f64
            })
            .collect()
    }

    /// All grid nodes in flat-index order.
    pub fn sample_points(&self) -> Vec<Vec<f64>> {
        (0..self.node_count()).map(|f| self.node(&self.multi_index(f))).collect()
    }

    /// Multi-index of the node equal to `x` (within 1e-9 of the spacing).
    pub fn node_index_of(&self, x: &[f64]) -> Option<Vec<usize>> {
        if x.len() != self.dim() {
            return None;
        }
        let n = self.samples_per_axis as f64;
        let mut idx = Vec::with_capacity(x.len());
        for (i, &v) in x.iter().enumerate() {
            let h = (self.upper[i] - self.lower[i]) / (n + 1.0);
            let k = (v - self.lower[i]) / h - 1.0;
            let r = k.round();
            if (k - r).abs() > 1e-9 || r < 0.0 || r >= n {
                return None;
            }
            idx.push(r as usize);
        }
        Some(idx)
    }

    /// Grid node closest to the box center.
    pub fn central_node(&self) -> Vec<f64> {
        let mid = (self.samples_per_axis - 1) / 2;
        self.node(&vec![mid; self.dim()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_strictly_interior() {
        let d = ChartDomain::new(vec![0.0, -1.0], vec![1.0, 1.0], 3).unwrap();
        assert_eq!(d.axis_nodes(0), vec![0.25, 0.5, 0.75]);
        let pts = d.sample_points();
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[1], vec![0.25, 0.0]);
        assert_eq!(d.node_index_of(&[0.5, 0.5]), Some(vec![1, 2]));
        assert_eq!(d.node_index_of(&[0.4, 0.5]), None);
        assert_eq!(d.central_node(), d.center());
    }

    #[test]
    fn rejects_bad_boxes() {
        assert!(ChartDomain::new(vec![1.0], vec![1.0], 3).is_err());
        assert!(ChartDomain::new(vec![0.0, 0.0], vec![1.0], 3).is_err());
        assert!(ChartDomain::new(vec![], vec![], 3).is_err());
    }
}
