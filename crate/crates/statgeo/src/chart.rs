//! Coordinate charts: named coordinates over a closed box.
//!
//! Every field in the engine lives over a chart. Boxes are convex, so the
//! axis-aligned staircase paths used for one-form integration and parallel
//! frame transport are always admissible.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chart {
    names: Vec<String>,
    /// Closed intervals `[lo_i, hi_i]` per coordinate.
    box_: Vec<[f64; 2]>,
    basepoint: Vec<f64>,
}

impl Chart {
    pub fn new(names: &[&str], box_: &[[f64; 2]], basepoint: &[f64]) -> Result<Chart> {
        let chart = Chart {
            names: names.iter().map(|s| s.to_string()).collect(),
            box_: box_.to_vec(),
            basepoint: basepoint.to_vec(),
        };
        chart.validate()?;
        Ok(chart)
    }

    fn validate(&self) -> Result<()> {
        let n = self.names.len();
        if n == 0 {
            return Err(Error::validation("chart", "dimension must be positive"));
        }
        if self.box_.len() != n || self.basepoint.len() != n {
            return Err(Error::validation(
                "chart",
                format!(
                    "coordinate count mismatch: {} names, {} intervals, {} basepoint entries",
                    n,
                    self.box_.len(),
                    self.basepoint.len()
                ),
            ));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if self.names[i] == self.names[j] {
                    return Err(Error::validation(
                        "chart",
                        format!("duplicate coordinate name `{}`", self.names[i]),
                    ));
                }
            }
        }
        for (i, itv) in self.box_.iter().enumerate() {
            if !(itv[0] < itv[1]) {
                return Err(Error::validation(
                    "chart",
                    format!("interval {} is empty: [{}, {}]", self.names[i], itv[0], itv[1]),
                ));
            }
            if !(self.basepoint[i] > itv[0] && self.basepoint[i] < itv[1]) {
                return Err(Error::validation(
                    "chart",
                    format!(
                        "basepoint coordinate {} = {} is not strictly inside [{}, {}]",
                        self.names[i], self.basepoint[i], itv[0], itv[1]
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.names.iter().map(|s| s.as_str()).collect()
    }

    pub fn box_intervals(&self) -> &[[f64; 2]] {
        &self.box_
    }

    pub fn basepoint(&self) -> &[f64] {
        &self.basepoint
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(&self.box_)
                .all(|(x, itv)| *x >= itv[0] && *x <= itv[1])
    }

    pub fn shortest_edge(&self) -> f64 {
        self.box_
            .iter()
            .map(|itv| itv[1] - itv[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// A validation grid of `m` points per axis, inset from the box edges so
    /// that finite-difference stencils at grid points stay inside the box.
    ///
    /// The inset fraction is 0.12 of each edge, which leaves room for the
    /// widest stencil allowed by `FdConfig` (offset 2h with h ≤ edge/10).
    pub fn grid(&self, m: usize) -> Vec<Vec<f64>> {
        self.grid_with_margin(m, 0.12)
    }

    pub fn grid_with_margin(&self, m: usize, margin: f64) -> Vec<Vec<f64>> {
        assert!(m >= 1);
        let n = self.dim();
        let mut axes: Vec<Vec<f64>> = Vec::with_capacity(n);
        for itv in &self.box_ {
            let span = itv[1] - itv[0];
            let lo = itv[0] + margin * span;
            let hi = itv[1] - margin * span;
            let axis: Vec<f64> = if m == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..m)
                    .map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64)
                    .collect()
            };
            axes.push(axis);
        }
        let mut out = Vec::with_capacity(m.pow(n as u32));
        let mut idx = vec![0usize; n];
        loop {
            out.push((0..n).map(|i| axes[i][idx[i]]).collect());
            let mut d = 0;
            loop {
                idx[d] += 1;
                if idx[d] < m {
                    break;
                }
                idx[d] = 0;
                d += 1;
                if d == n {
                    return out;
                }
            }
        }
    }

    /// Intersection box of two charts over the same coordinates, if nonempty.
    pub fn overlap(&self, other: &Chart) -> Option<Vec<[f64; 2]>> {
        if self.dim() != other.dim() {
            return None;
        }
        let mut out = Vec::with_capacity(self.dim());
        for (a, b) in self.box_.iter().zip(&other.box_) {
            let lo = a[0].max(b[0]);
            let hi = a[1].min(b[1]);
            if !(lo < hi) {
                return None;
            }
            out.push([lo, hi]);
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_invariants_enforced() {
        assert!(Chart::new(&["u"], &[[0.0, 1.0]], &[0.5]).is_ok());
        assert!(Chart::new(&["u"], &[[1.0, 1.0]], &[1.0]).is_err());
        assert!(Chart::new(&["u"], &[[0.0, 1.0]], &[0.0]).is_err());
        assert!(Chart::new(&["u", "u"], &[[0.0, 1.0], [0.0, 1.0]], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn grids_stay_interior() {
        let c = Chart::new(&["u", "v"], &[[0.0, 1.0], [-2.0, 2.0]], &[0.5, 0.0]).unwrap();
        let g = c.grid(5);
        assert_eq!(g.len(), 25);
        for p in &g {
            assert!(p[0] >= 0.12 - 1e-12 && p[0] <= 0.88 + 1e-12);
            assert!(c.contains(p));
        }
    }

    #[test]
    fn overlap_boxes() {
        let a = Chart::new(&["t"], &[[-0.6, 0.2]], &[-0.2]).unwrap();
        let b = Chart::new(&["t"], &[[-0.2, 0.6]], &[0.2]).unwrap();
        let o = a.overlap(&b).unwrap();
        assert_eq!(o, vec![[-0.2, 0.2]]);
        let c = Chart::new(&["t"], &[[0.3, 0.6]], &[0.4]).unwrap();
        assert!(a.overlap(&c).is_none());
    }
}
