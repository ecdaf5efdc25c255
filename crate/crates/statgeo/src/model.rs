//! Parametric statistical models over finite sample spaces, intervals and
//! the real line, with the Fisher-Rao metric, the cubic tensor of third
//! log-derivative moments, and the alpha-connection family.
//!
//! All moments are quadratures of log-density expressions; derivatives in
//! the parameters are finite differences, so exactly one accuracy knob
//! (`score_fd`) governs every integrand.

use crate::chart::Chart;
use crate::conn::AffineConnection;
use crate::error::{Error, Result};
use crate::fd::{self, FdConfig};
use crate::field::{Component, Symmetry, TensorField};
use crate::metric::{MetricField, DEFAULT_DEGENERACY_TOL};
use crate::quad::QuadratureRule;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub enum SampleSpace {
    /// Enumerated points with unit weights; sums are exact.
    Finite(Vec<f64>),
    Interval { a: f64, b: f64, nodes: usize },
    RealLine { nodes: usize },
}

impl SampleSpace {
    pub fn rule(&self) -> Result<QuadratureRule> {
        match self {
            SampleSpace::Finite(pts) => Ok(QuadratureRule::finite_sum(pts)),
            SampleSpace::Interval { a, b, nodes } => QuadratureRule::gauss_legendre(*nodes, *a, *b),
            SampleSpace::RealLine { nodes } => QuadratureRule::gauss_hermite(*nodes),
        }
    }
}

/// A parametric statistical model: a log-density `l(x, ζ)` whose expression
/// variables are ordered `[x, ζ_1, ..., ζ_n]`, a sample space, and a chart
/// for the parameters.
#[derive(Clone)]
pub struct StatisticalModel {
    chart: Chart,
    log_density: Component,
    rule: Arc<QuadratureRule>,
    /// Finite-difference config for scores (parameter derivatives of `l`).
    score_fd: FdConfig,
}

pub const NORMALIZATION_TOL: f64 = 1e-8;

impl StatisticalModel {
    pub fn new(space: SampleSpace, log_density: Component, chart: Chart) -> Result<Self> {
        let model = StatisticalModel {
            chart,
            log_density,
            rule: Arc::new(space.rule()?),
            score_fd: FdConfig::new(1e-3, crate::fd::Scheme::Central4, true),
        };
        model.validate_normalization(3, NORMALIZATION_TOL)?;
        Ok(model)
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    /// `∫ exp(l) dx` at the given parameters.
    pub fn normalization(&self, zeta: &[f64]) -> Result<f64> {
        let mut vals = Vec::with_capacity(1 + zeta.len());
        vals.push(0.0);
        vals.extend_from_slice(zeta);
        let mut bad = false;
        let v = self.rule.integrate(|x| {
            vals[0] = x;
            let l = self.log_density.eval(&vals);
            if !l.is_finite() {
                bad = true;
            }
            l.exp()
        });
        if bad || !v.is_finite() {
            return Err(Error::non_finite("model normalization", zeta));
        }
        Ok(v)
    }

    pub fn validate_normalization(&self, grid_m: usize, tol: f64) -> Result<()> {
        for zeta in self.chart.grid(grid_m) {
            let v = self.normalization(&zeta)?;
            if (v - 1.0).abs() > tol {
                return Err(Error::validation(
                    "statistical model",
                    format!("density not normalized at ζ = {zeta:?}: ∫p = {v}"),
                ));
            }
        }
        Ok(())
    }

    /// Log-density at prebuilt `[x, ζ...]` values.
    #[inline]
    pub fn log_density_at(&self, vals: &[f64]) -> f64 {
        self.log_density.eval(vals)
    }

    #[inline]
    fn with_x(&self, x: f64, zeta: &[f64]) -> Vec<f64> {
        let mut vals = Vec::with_capacity(1 + zeta.len());
        vals.push(x);
        vals.extend_from_slice(zeta);
        vals
    }

    /// Score `∂ l / ∂ ζ_i` at a sample point.
    pub fn score(&self, i: usize, x: f64, zeta: &[f64]) -> f64 {
        let vals = self.with_x(x, zeta);
        fd::partial(&self.log_density, &vals, 1 + i, self.score_fd)
    }

    /// Second parameter derivative `∂_i ∂_j l` at a sample point.
    pub fn dd_log(&self, i: usize, j: usize, x: f64, zeta: &[f64]) -> f64 {
        let vals = self.with_x(x, zeta);
        let ld = self.log_density.clone();
        let f = move |p: &[f64]| ld.eval(p);
        fd::mixed_partial(&f, &vals, &[1 + i, 1 + j], &[self.score_fd])
    }

    fn weighted_moment(&self, zeta: &[f64], f: impl Fn(f64, &[f64]) -> f64) -> Result<f64> {
        let mut bad = false;
        let v = self.rule.integrate(|x| {
            let vals = self.with_x(x, zeta);
            let l = self.log_density.eval(&vals);
            if !l.is_finite() {
                bad = true;
                return 0.0;
            }
            f(x, zeta) * l.exp()
        });
        if bad || !v.is_finite() {
            return Err(Error::non_finite("model moment", zeta));
        }
        Ok(v)
    }

    pub fn fisher_entry(&self, i: usize, j: usize, zeta: &[f64]) -> Result<f64> {
        self.weighted_moment(zeta, |x, z| self.score(i, x, z) * self.score(j, x, z))
    }

    pub fn fisher_mat(&self, zeta: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.fisher_entry(i, j, zeta)?;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    pub fn cubic_entry(&self, i: usize, j: usize, k: usize, zeta: &[f64]) -> Result<f64> {
        self.weighted_moment(zeta, |x, z| {
            self.score(i, x, z) * self.score(j, x, z) * self.score(k, x, z)
        })
    }

    /// Lowered alpha-connection symbol
    /// `Γ^{(α)}_{ij,k} = E[(∂_i∂_j l + (1-α)/2 ∂_i l ∂_j l) ∂_k l]`.
    pub fn alpha_gamma_lowered(
        &self,
        alpha: f64,
        i: usize,
        j: usize,
        k: usize,
        zeta: &[f64],
    ) -> Result<f64> {
        self.weighted_moment(zeta, |x, z| {
            (self.dd_log(i, j, x, z) + 0.5 * (1.0 - alpha) * self.score(i, x, z) * self.score(j, x, z))
                * self.score(k, x, z)
        })
    }
}

/// Fisher-Rao metric as a metric field backed by model quadrature. Returned
/// even when degenerate; only index raising requires nondegeneracy.
pub fn fisher_metric(model: &StatisticalModel) -> MetricField {
    let n = model.dim();
    let mut comps = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let m = model.clone();
            comps.push(
                Component::func(move |z| m.fisher_entry(i, j, z).unwrap_or(f64::NAN)).cached(),
            );
        }
    }
    let field = TensorField::new(
        model.chart().clone(),
        0,
        2,
        comps,
        vec![Symmetry::Pair(0, 1)],
    )
    .expect("component count");
    MetricField::new(field, DEFAULT_DEGENERACY_TOL).expect("fisher matrix is symmetric")
}

/// The totally symmetric cubic tensor of third score moments.
pub fn model_cubic(model: &StatisticalModel) -> TensorField {
    let n = model.dim();
    let mut comps = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let m = model.clone();
                comps.push(
                    Component::func(move |z| m.cubic_entry(i, j, k, z).unwrap_or(f64::NAN))
                        .cached(),
                );
            }
        }
    }
    TensorField::new(model.chart().clone(), 0, 3, comps, vec![Symmetry::Total])
        .expect("component count")
}

/// The alpha-connection with the index raised by the inverse Fisher metric.
/// Fails if the metric drops rank on the validation grid.
pub fn alpha_connection(
    model: &StatisticalModel,
    alpha: f64,
    grid_m: usize,
) -> Result<AffineConnection> {
    let g = fisher_metric(model);
    g.require_nondegenerate_on_grid(grid_m)?;
    let n = model.dim();
    Ok(AffineConnection::from_fn(
        model.chart().clone(),
        |k, i, j| {
            let model = model.clone();
            let g = g.clone();
            Component::func(move |z| {
                let ginv = match g.inverse_at(z) {
                    Ok(m) => m,
                    Err(_) => return f64::NAN,
                };
                let mut rhs = DVector::zeros(n);
                for l in 0..n {
                    rhs[l] = match model.alpha_gamma_lowered(alpha, i, j, l, z) {
                        Ok(v) => v,
                        Err(_) => return f64::NAN,
                    };
                }
                (ginv.row(k) * rhs)[(0, 0)]
            })
            .cached()
        },
    ))
}

/// Max residual of the duality equation for `(g, ∇^{(α)}, ∇^{(-α)})` over a
/// parameter grid, evaluated at the lowered level:
/// `|∂_i g_jk - Γ^{(α)}_{ij,k} - Γ^{(-α)}_{ik,j}|`.
pub fn alpha_duality_check(
    model: &StatisticalModel,
    alpha: f64,
    grid_m: usize,
    fd_cfg: FdConfig,
) -> Result<f64> {
    let g = fisher_metric(model);
    g.require_nondegenerate_on_grid(grid_m)?;
    let n = model.dim();
    let mut worst = 0.0f64;
    for z in model.chart().grid(grid_m) {
        for i in 0..n {
            let dg = g.d_mat_at(i, &z, fd_cfg);
            for j in 0..n {
                for k in 0..n {
                    let r = dg[(j, k)]
                        - model.alpha_gamma_lowered(alpha, i, j, k, &z)?
                        - model.alpha_gamma_lowered(-alpha, i, k, j, &z)?;
                    worst = worst.max(r.abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Bernoulli model on {0, 1} with success parameter `z`.
pub fn bernoulli(chart: Chart) -> Result<StatisticalModel> {
    let name = chart.names()[0].to_string();
    let l = Component::from_expr(
        &format!("x*log({name}) + (1-x)*log(1-{name})"),
        &["x", &name],
    )?;
    StatisticalModel::new(SampleSpace::Finite(vec![0.0, 1.0]), l, chart)
}

/// Gaussian location-scale model with parameters `(mu, sigma)`.
pub fn gaussian(chart: Chart, nodes: usize) -> Result<StatisticalModel> {
    let names = chart.names();
    let (m, s) = (names[0].to_string(), names[1].to_string());
    let l = Component::from_expr(
        &format!("-(x-{m})^2/(2*{s}^2) - log({s}) - 0.5*log(2*pi)"),
        &["x", &m, &s],
    )?;
    StatisticalModel::new(SampleSpace::RealLine { nodes }, l, chart)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conn::{duality_residual, levi_civita};

    fn bernoulli_chart() -> Chart {
        Chart::new(&["z"], &[[0.1, 0.9]], &[0.5]).unwrap()
    }

    fn gaussian_chart() -> Chart {
        Chart::new(&["mu", "sigma"], &[[-0.5, 0.5], [0.6, 1.5]], &[0.0, 1.0]).unwrap()
    }

    #[test]
    fn bernoulli_closed_forms() {
        let m = bernoulli(bernoulli_chart()).unwrap();
        // g(ζ) = 1/(ζ(1-ζ)): 4 at 1/2, 16/3 at 1/4
        let g_half = m.fisher_entry(0, 0, &[0.5]).unwrap();
        assert!((g_half - 4.0).abs() < 1e-10, "got {g_half}");
        let g_quarter = m.fisher_entry(0, 0, &[0.25]).unwrap();
        assert!((g_quarter - 16.0 / 3.0).abs() < 1e-10, "got {g_quarter}");
        // C(ζ) = 1/ζ^2 - 1/(1-ζ)^2 = 128/9 at 1/4
        let c = m.cubic_entry(0, 0, 0, &[0.25]).unwrap();
        assert!((c - 128.0 / 9.0).abs() < 1e-10, "got {c}");
    }

    #[test]
    fn gaussian_closed_forms() {
        let m = gaussian(gaussian_chart(), 64).unwrap();
        let g = m.fisher_mat(&[0.0, 1.0]).unwrap();
        assert!((g[(0, 0)] - 1.0).abs() < 1e-8, "g00 {}", g[(0, 0)]);
        assert!((g[(1, 1)] - 2.0).abs() < 1e-8, "g11 {}", g[(1, 1)]);
        assert!(g[(0, 1)].abs() < 1e-9);
        // C(∂mu, ∂mu, ∂sigma) = 2/sigma^3
        let c = m.cubic_entry(0, 0, 1, &[0.0, 1.0]).unwrap();
        assert!((c - 2.0).abs() < 1e-7, "got {c}");
    }

    #[test]
    fn gaussian_alpha_duality_and_levi_civita() {
        let m = gaussian(gaussian_chart(), 64).unwrap();
        for alpha in [0.0, 0.7, 1.0] {
            let r = alpha_duality_check(&m, alpha, 3, FdConfig::inner()).unwrap();
            assert!(r < 1e-6, "alpha {alpha}: residual {r}");
        }
        // ∇^{(0)} is the Levi-Civita connection of the Fisher metric
        let g = fisher_metric(&m);
        let lc = levi_civita(&g, FdConfig::inner());
        let conn0 = alpha_connection(&m, 0.0, 3).unwrap();
        for z in m.chart().grid(2) {
            for k in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        let d = (conn0.gamma(k, i, j, &z) - lc.comp(k, i, j).eval(&z)).abs();
                        assert!(d < 1e-6, "Γ^0 vs LC at {z:?}: {d}");
                    }
                }
            }
        }
    }

    #[test]
    fn gaussian_zero_connection_self_dual() {
        // the metric-level dual of ∇^{(0)} is ∇^{(0)} itself
        let m = gaussian(gaussian_chart(), 64).unwrap();
        let g = fisher_metric(&m);
        let conn0 = alpha_connection(&m, 0.0, 3).unwrap();
        let r = duality_residual(&g, &conn0, &conn0, FdConfig::inner(), 3);
        assert!(r < 1e-6, "residual {r}");
    }

    #[test]
    fn bernoulli_alpha_duality_exact_sum() {
        let m = bernoulli(bernoulli_chart()).unwrap();
        let r = alpha_duality_check(&m, 1.0, 5, FdConfig::inner()).unwrap();
        assert!(r < 1e-8, "residual {r}");
    }

    #[test]
    fn natural_parameter_family_has_flat_one_connection() {
        // Gaussian in natural parameters: l = t1 x + t2 x^2 - psi(t1,t2),
        // psi = -t1^2/(4 t2) + log(pi / (-t2)) / 2.
        let chart = Chart::new(
            &["t1", "t2"],
            &[[-0.4, 0.4], [-1.3, -0.7]],
            &[0.0, -1.0],
        )
        .unwrap();
        let l = Component::from_expr(
            "t1*x + t2*x^2 + t1^2/(4*t2) - 0.5*log(pi/(-t2))",
            &["x", "t1", "t2"],
        )
        .unwrap();
        let m = StatisticalModel::new(SampleSpace::RealLine { nodes: 64 }, l, chart).unwrap();
        for z in m.chart().grid(2) {
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        let v = m.alpha_gamma_lowered(1.0, i, j, k, &z).unwrap();
                        assert!(v.abs() < 1e-8, "Γ^(1)_{i}{j},{k} = {v} at {z:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn overparametrized_bernoulli_rank_one() {
        let chart = Chart::new(
            &["z1", "z2"],
            &[[-0.5, 0.5], [-0.5, 0.5]],
            &[0.1, 0.0],
        )
        .unwrap();
        let l = Component::from_expr(
            "x*log((1+tanh((z1+z2)/2))/2) + (1-x)*log((1-tanh((z1+z2)/2))/2)",
            &["x", "z1", "z2"],
        )
        .unwrap();
        let m = StatisticalModel::new(SampleSpace::Finite(vec![0.0, 1.0]), l, chart).unwrap();
        let g = m.fisher_mat(&[0.1, 0.2]).unwrap();
        let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
        assert!(det.abs() < 1e-12, "det {det}");
        let gf = fisher_metric(&m);
        assert_eq!(gf.rank_at(&[0.1, 0.2]), 1);
        // index raising must refuse
        assert!(matches!(
            alpha_connection(&m, 0.0, 3),
            Err(Error::DegenerateMetric { .. })
        ));
        // but the metric and cubic themselves are returned
        let c = model_cubic(&m);
        assert!(c.eval(&[0, 0, 0], &[0.1, 0.2]).is_finite());
    }

    #[test]
    fn unnormalized_density_rejected() {
        let chart = bernoulli_chart();
        let l = Component::from_expr("x*log(z) + (1-x)*log(1-z) + 0.1", &["x", "z"]).unwrap();
        assert!(StatisticalModel::new(SampleSpace::Finite(vec![0.0, 1.0]), l, chart).is_err());
    }

    #[test]
    fn fisher_metric_is_psd_on_grid() {
        let m = gaussian(gaussian_chart(), 64).unwrap();
        let g = fisher_metric(&m);
        for z in m.chart().grid(3) {
            let eig = nalgebra::SymmetricEigen::new(g.mat_at(&z));
            for ev in eig.eigenvalues.iter() {
                assert!(*ev >= -1e-10, "eigenvalue {ev} at {z:?}");
            }
        }
    }
}
