//! Possibly degenerate metrics: symmetric (0,2) tensor fields with rank
//! reporting via singular values.
//!
//! Operations that must invert the metric fail loudly with the offending
//! point and its smallest singular value; silent regularization would paper
//! over exactly the phenomenon this engine exists to expose.

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::fd::{self, FdConfig};
use crate::field::{Component, Symmetry, TensorField};
use nalgebra::DMatrix;

pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-8;
pub const DEFAULT_SYMMETRY_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct MetricField {
    field: TensorField,
    /// Relative rank cutoff: singular values below `tol * sigma_max` count
    /// as zero.
    degeneracy_tol: f64,
}

impl MetricField {
    pub fn new(field: TensorField, degeneracy_tol: f64) -> Result<MetricField> {
        if field.rank() != (0, 2) {
            return Err(Error::validation("metric", "must be a (0,2) tensor field"));
        }
        let m = MetricField {
            field,
            degeneracy_tol,
        };
        let res = m.asymmetry_residual(5);
        if res > DEFAULT_SYMMETRY_TOL {
            return Err(Error::validation(
                "metric",
                format!("not symmetric: residual {res:.3e}"),
            ));
        }
        Ok(m)
    }

    /// Metric from an n*n component list in row-major order.
    pub fn from_components(chart: Chart, comps: Vec<Component>) -> Result<MetricField> {
        let field = TensorField::new(chart, 0, 2, comps, vec![Symmetry::Pair(0, 1)])?;
        MetricField::new(field, DEFAULT_DEGENERACY_TOL)
    }

    pub fn from_matrix_fn(
        chart: Chart,
        f: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Result<MetricField> {
        let n = chart.dim();
        let f = std::sync::Arc::new(f);
        let mut comps = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let f = f.clone();
                comps.push(Component::func(move |p| f(p)[(i, j)]));
            }
        }
        MetricField::from_components(chart, comps)
    }

    fn asymmetry_residual(&self, m: usize) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for p in self.chart().grid(m) {
            let g = self.mat_at(&p);
            for i in 0..n {
                for j in (i + 1)..n {
                    worst = worst.max((g[(i, j)] - g[(j, i)]).abs());
                }
            }
        }
        worst
    }

    pub fn chart(&self) -> &Chart {
        self.field.chart()
    }

    pub fn dim(&self) -> usize {
        self.chart().dim()
    }

    pub fn field(&self) -> &TensorField {
        &self.field
    }

    pub fn degeneracy_tol(&self) -> f64 {
        self.degeneracy_tol
    }

    pub fn comp(&self, i: usize, j: usize) -> &Component {
        self.field.comp(&[i, j])
    }

    pub fn mat_at(&self, point: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.field.eval(&[i, j], point))
    }

    pub fn singular_values_at(&self, point: &[f64]) -> Vec<f64> {
        let mut sv: Vec<f64> = self
            .mat_at(point)
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    pub fn min_singular_at(&self, point: &[f64]) -> f64 {
        *self
            .singular_values_at(point)
            .last()
            .expect("metric has dimension >= 1")
    }

    /// Rank with the relative cutoff `degeneracy_tol * sigma_max`, floored
    /// at 1e-12 so a numerically-zero matrix (closure-backed components
    /// carry finite-difference noise) does not count as full rank.
    pub fn rank_at(&self, point: &[f64]) -> usize {
        let sv = self.singular_values_at(point);
        let cutoff = (self.degeneracy_tol * sv[0]).max(1e-12);
        sv.iter().filter(|s| **s > cutoff).count()
    }

    pub fn is_degenerate_at(&self, point: &[f64]) -> bool {
        self.rank_at(point) < self.dim()
    }

    /// Error with the worst point if the metric drops rank anywhere on the
    /// validation grid.
    pub fn require_nondegenerate_on_grid(&self, m: usize) -> Result<()> {
        for p in self.chart().grid(m) {
            if self.is_degenerate_at(&p) {
                return Err(Error::DegenerateMetric {
                    point: p.clone(),
                    min_singular: self.min_singular_at(&p),
                });
            }
        }
        Ok(())
    }

    /// Inverse metric at a point; fails with the degeneracy diagnostics.
    pub fn inverse_at(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.mat_at(point);
        let sv = self.singular_values_at(point);
        let cutoff = (self.degeneracy_tol * sv[0]).max(1e-12);
        if sv[sv.len() - 1] <= cutoff {
            return Err(Error::DegenerateMetric {
                point: point.to_vec(),
                min_singular: sv[sv.len() - 1],
            });
        }
        g.clone().try_inverse().ok_or(Error::DegenerateMetric {
            point: point.to_vec(),
            min_singular: sv[sv.len() - 1],
        })
    }

    /// Partial derivatives of all metric components along `axis`.
    pub fn d_mat_at(&self, axis: usize, point: &[f64], cfg: FdConfig) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| fd::partial(self.comp(i, j), point, axis, cfg))
    }

    /// Euclidean metric on the chart.
    pub fn euclidean(chart: Chart) -> MetricField {
        let n = chart.dim();
        let comps = (0..n * n)
            .map(|f| Component::constant(if f / n == f % n { 1.0 } else { 0.0 }))
            .collect();
        MetricField::from_components(chart, comps).expect("identity metric is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart1() -> Chart {
        Chart::new(&["t"], &[[-1.0, 1.0]], &[0.5]).unwrap()
    }

    #[test]
    fn rank_and_degeneracy() {
        let chart = Chart::new(&["u", "v"], &[[-1.0, 1.0], [-1.0, 1.0]], &[0.3, 0.3]).unwrap();
        let comps = vec![
            Component::constant(1.0),
            Component::constant(0.0),
            Component::constant(0.0),
            Component::from_expr("u^2", &["u", "v"]).unwrap(),
        ];
        let g = MetricField::from_components(chart, comps).unwrap();
        assert_eq!(g.rank_at(&[0.5, 0.0]), 2);
        assert_eq!(g.rank_at(&[0.0, 0.0]), 1);
        assert!(g.is_degenerate_at(&[0.0, 0.5]));
        assert!(g.inverse_at(&[0.0, 0.5]).is_err());
        assert!(g.inverse_at(&[0.5, 0.5]).is_ok());
    }

    #[test]
    fn symmetry_enforced() {
        let chart = Chart::new(&["u", "v"], &[[-1.0, 1.0], [-1.0, 1.0]], &[0.3, 0.3]).unwrap();
        let comps = vec![
            Component::constant(1.0),
            Component::constant(0.5),
            Component::constant(-0.5),
            Component::constant(1.0),
        ];
        assert!(MetricField::from_components(chart, comps).is_err());
    }

    #[test]
    fn degenerate_line_metric() {
        let comps = vec![Component::from_expr("t^2", &["t"]).unwrap()];
        let g = MetricField::from_components(chart1(), comps).unwrap();
        assert!(g.is_degenerate_at(&[0.0]));
        assert!(!g.is_degenerate_at(&[0.5]));
        assert!(g.require_nondegenerate_on_grid(4).is_ok());
        // a grid hitting t = 0 reports the degeneracy
        assert!(g.require_nondegenerate_on_grid(5).is_err());
    }
}
