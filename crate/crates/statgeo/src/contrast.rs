//! Two-point functions on chart × chart, mixed diagonal derivatives, and the
//! extraction of metric, cubic tensor and dual connections from a contrast
//! function.
//!
//! The inverse direction — building a weak contrast function from a possibly
//! degenerate metric and a totally symmetric cubic tensor — uses a chart-local
//! cubic polynomial in the point difference whose coefficients are tuned so
//! the diagonal derivative relations hold identically. The construction never
//! inverts the metric, so it is safe on degeneracy loci.

use crate::chart::Chart;
use crate::conn::AffineConnection;
use crate::error::{Error, Result};
use crate::fd::{self, FdConfig, Scheme};
use crate::field::{Component, TensorField};
use crate::metric::MetricField;
use crate::model::StatisticalModel;
use std::sync::Arc;

/// Step schedule for mixed diagonal derivatives, one config per total order.
/// The order-4 level drops to a plain second-order stencil with a larger
/// step to keep roundoff amplification in check; order-4 identities are
/// asserted at the relaxed 1e-4 tolerance.
#[derive(Debug, Clone, Copy)]
pub struct RhoFd {
    pub o1: FdConfig,
    pub o2: FdConfig,
    pub o3: FdConfig,
    pub o4: FdConfig,
}

impl Default for RhoFd {
    fn default() -> Self {
        RhoFd {
            o1: FdConfig::new(1e-4, Scheme::Central4, true),
            o2: FdConfig::new(1e-3, Scheme::Central4, true),
            o3: FdConfig::new(2e-3, Scheme::Central4, true),
            o4: FdConfig::new(1e-3, Scheme::Central2, false),
        }
    }
}

impl RhoFd {
    pub fn for_order(&self, order: usize) -> FdConfig {
        match order {
            0 | 1 => self.o1,
            2 => self.o2,
            3 => self.o3,
            _ => self.o4,
        }
    }
}

/// A function on a neighborhood of the diagonal of chart × chart. The
/// underlying component's variables are the first-slot coordinates followed
/// by the second-slot coordinates.
#[derive(Clone)]
pub struct TwoPointFunction {
    chart: Chart,
    comp: Component,
}

pub const DIAG_VALUE_TOL: f64 = 1e-10;
pub const DIAG_GRAD_TOL: f64 = 1e-8;

impl TwoPointFunction {
    /// Wraps without validating; see [`TwoPointFunction::validated`].
    pub fn new_unchecked(chart: Chart, comp: Component) -> TwoPointFunction {
        TwoPointFunction { chart, comp }
    }

    /// Validates the diagonal conditions: the function and both slot
    /// gradients vanish on the diagonal over a validation grid.
    pub fn validated(chart: Chart, comp: Component, grid_m: usize) -> Result<TwoPointFunction> {
        let rho = TwoPointFunction::new_unchecked(chart, comp);
        rho.require_diagonal_conditions(grid_m)?;
        Ok(rho)
    }

    /// Parse an expression in `p_*`/`q_*` variables over the chart.
    pub fn from_expr(chart: Chart, source: &str, grid_m: usize) -> Result<TwoPointFunction> {
        let mut vars: Vec<String> = Vec::new();
        for name in chart.names() {
            vars.push(format!("p_{name}"));
        }
        for name in chart.names() {
            vars.push(format!("q_{name}"));
        }
        let refs: Vec<&str> = vars.iter().map(|s| s.as_str()).collect();
        let comp = Component::from_expr(source, &refs)?;
        TwoPointFunction::validated(chart, comp, grid_m)
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn eval(&self, p: &[f64], q: &[f64]) -> f64 {
        let mut vals = Vec::with_capacity(p.len() + q.len());
        vals.extend_from_slice(p);
        vals.extend_from_slice(q);
        self.comp.eval(&vals)
    }

    /// (max |ρ(r,r)|, max |slot gradient| at the diagonal) over a grid.
    pub fn diagonal_residuals(&self, grid_m: usize) -> Result<(f64, f64)> {
        let n = self.chart.dim();
        let cfg = RhoFd::default();
        let mut val = 0.0f64;
        let mut grad = 0.0f64;
        for r in self.chart.grid(grid_m) {
            let v = self.eval(&r, &r);
            if !v.is_finite() {
                return Err(Error::non_finite("two-point function", &r));
            }
            val = val.max(v.abs());
            for i in 0..n {
                grad = grad.max(rho_derivative(self, &[i], &[], &r, &cfg)?.abs());
                grad = grad.max(rho_derivative(self, &[], &[i], &r, &cfg)?.abs());
            }
        }
        Ok((val, grad))
    }

    pub fn require_diagonal_conditions(&self, grid_m: usize) -> Result<()> {
        let (v, g) = self.diagonal_residuals(grid_m)?;
        if v > DIAG_VALUE_TOL {
            return Err(Error::NotAContrastCandidate {
                which: "vanishing on the diagonal".into(),
                residual: v,
            });
        }
        if g > DIAG_GRAD_TOL {
            return Err(Error::NotAContrastCandidate {
                which: "first derivatives on the diagonal".into(),
                residual: g,
            });
        }
        Ok(())
    }
}

impl std::fmt::Debug for TwoPointFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TwoPointFunction({:?})", self.comp)
    }
}

/// Mixed diagonal derivative `ρ[∂_left | ∂_right](point)`: first-slot
/// derivatives along `left`, second-slot derivatives along `right`,
/// evaluated at `p = q = point`. Total order at most 4.
pub fn rho_derivative(
    rho: &TwoPointFunction,
    left: &[usize],
    right: &[usize],
    point: &[f64],
    cfg: &RhoFd,
) -> Result<f64> {
    let n = rho.chart.dim();
    let order = left.len() + right.len();
    if order > 4 {
        return Err(Error::validation(
            "rho_derivative",
            format!("total order {order} exceeds 4"),
        ));
    }
    let level = cfg.for_order(order);
    // nested stencils step at most order * max_offset from the center
    let margin = level.max_offset() * order as f64;
    for &axis in left.iter().chain(right.iter()) {
        let itv = rho.chart.box_intervals()[axis];
        if point[axis] - margin < itv[0] || point[axis] + margin > itv[1] {
            return Err(Error::StencilOutOfDomain {
                axis,
                point: point.to_vec(),
            });
        }
    }
    let mut axes: Vec<usize> = Vec::with_capacity(order);
    axes.extend(left.iter().copied());
    axes.extend(right.iter().map(|a| a + n));
    let comp = rho.comp.clone();
    let f = move |vals: &[f64]| comp.eval(vals);
    let mut doubled = Vec::with_capacity(2 * n);
    doubled.extend_from_slice(point);
    doubled.extend_from_slice(point);
    let v = fd::mixed_partial(&f, &doubled, &axes, &[level]);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::non_finite("rho_derivative", point))
    }
}

/// Everything a contrast function induces: the metric, the cubic tensor, and
/// (when the metric is invertible) the pair of dual connections.
#[derive(Debug, Clone)]
pub struct ContrastStructure {
    pub metric: MetricField,
    pub cubic: TensorField,
    pub connections: Option<(AffineConnection, AffineConnection)>,
}

/// Extract `(h, C, ∇, ∇*)` from a two-point function satisfying the diagonal
/// conditions: `h_ij = -ρ[∂_i|∂_j]`, `Γ_{ij,k} = -ρ[∂_i∂_j|∂_k]`,
/// `Γ*_{ik,j} = -ρ[∂_j|∂_i∂_k]`, `C_ijk = -ρ[∂_k|∂_i∂_j] + ρ[∂_i∂_j|∂_k]`.
///
/// The connections are solved for only where the induced pairing is
/// invertible; a degenerate metric still yields `(h, C)`.
pub fn structure_from_contrast(
    rho: &TwoPointFunction,
    grid_m: usize,
) -> Result<ContrastStructure> {
    let n = rho.chart.dim();
    rho.require_diagonal_conditions(grid_m)?;

    let rho_arc = Arc::new(rho.clone());
    let mut h_comps = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let rho = rho_arc.clone();
            h_comps.push(
                Component::func(move |r| {
                    -rho_derivative(&rho, &[i], &[j], r, &RhoFd::default()).unwrap_or(f64::NAN)
                })
                .cached(),
            );
        }
    }
    let metric = MetricField::from_components(rho.chart.clone(), h_comps)?;

    let mut c_comps = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let rho = rho_arc.clone();
                c_comps.push(
                    Component::func(move |r| {
                        let cfg = RhoFd::default();
                        let a = rho_derivative(&rho, &[k], &[i, j], r, &cfg).unwrap_or(f64::NAN);
                        let b = rho_derivative(&rho, &[i, j], &[k], r, &cfg).unwrap_or(f64::NAN);
                        -a + b
                    })
                    .cached(),
                );
            }
        }
    }
    let cubic = TensorField::new(rho.chart.clone(), 0, 3, c_comps, vec![])?;

    let connections = if metric.require_nondegenerate_on_grid(grid_m).is_ok() {
        let primal = AffineConnection::from_fn(rho.chart.clone(), |m, i, j| {
            let rho = rho_arc.clone();
            let metric = metric.clone();
            Component::func(move |r| {
                let ginv = match metric.inverse_at(r) {
                    Ok(g) => g,
                    Err(_) => return f64::NAN,
                };
                let mut out = 0.0;
                for k in 0..ginv.nrows() {
                    let lowered = -rho_derivative(&rho, &[i, j], &[k], r, &RhoFd::default())
                        .unwrap_or(f64::NAN);
                    out += ginv[(m, k)] * lowered;
                }
                out
            })
        });
        let dual = AffineConnection::from_fn(rho.chart.clone(), |m, i, k| {
            let rho = rho_arc.clone();
            let metric = metric.clone();
            Component::func(move |r| {
                // h_{jm} Γ*^m_{ik} = -ρ[∂_j | ∂_i ∂_k], solved over j
                let gmat = metric.mat_at(r);
                let nn = gmat.nrows();
                let mut rhs = nalgebra::DVector::zeros(nn);
                for j in 0..nn {
                    rhs[j] = -rho_derivative(&rho, &[j], &[i, k], r, &RhoFd::default())
                        .unwrap_or(f64::NAN);
                }
                match gmat.lu().solve(&rhs) {
                    Some(sol) => sol[m],
                    None => f64::NAN,
                }
            })
        });
        Some((primal, dual))
    } else {
        None
    };

    Ok(ContrastStructure {
        metric,
        cubic,
        connections,
    })
}

/// Weak contrast function from a symmetric (0,2) tensor and a totally
/// symmetric cubic tensor:
///
/// ```text
/// ρ(p,q) = h_ij(q) Δ^i Δ^j / 2 + D_ijk(q) Δ^i Δ^j Δ^k / 6,   Δ = p - q,
/// D_ijk  = (∂_i h_jk + ∂_j h_ik + ∂_k h_ij - C_ijk) / 2.
/// ```
///
/// With this choice the diagonal derivative relations recover `h` three ways
/// and `C` exactly; no inverse of `h` appears anywhere.
pub fn weak_contrast_from(
    h: &MetricField,
    cubic: &TensorField,
    grid_m: usize,
    sym_tol: f64,
) -> Result<TwoPointFunction> {
    if cubic.rank() != (0, 3) {
        return Err(Error::validation("cubic", "must be a (0,3) tensor field"));
    }
    let residual = crate::conn::total_symmetry_residual(cubic, grid_m);
    if residual > sym_tol {
        return Err(Error::AsymmetricCubic {
            residual,
            tol: sym_tol,
        });
    }
    let n = h.dim();
    let h = h.clone();
    let cubic = cubic.clone();
    // inner derivatives of h use a coarse high-order stencil so the outer
    // stencils differentiating ρ do not amplify their roundoff
    let dh_cfg = FdConfig::new(1e-2, Scheme::Central4, true);
    let chart = h.chart().clone();
    // Mixed diagonal derivatives fix q across whole sub-stencils of p
    // evaluations, so the q-dependent coefficients are worth memoizing.
    type QData = (Vec<f64>, Vec<f64>); // h_ij(q) and D_ijk(q), flat
    let memo: std::sync::Mutex<std::collections::HashMap<Vec<u64>, std::sync::Arc<QData>>> =
        std::sync::Mutex::new(std::collections::HashMap::new());
    let comp = Component::func(move |vals: &[f64]| {
        let (p, q) = vals.split_at(n);
        let key: Vec<u64> = q.iter().map(|x| x.to_bits()).collect();
        let data = {
            let hit = memo.lock().unwrap().get(&key).cloned();
            match hit {
                Some(d) => d,
                None => {
                    let mut hq = vec![0.0; n * n];
                    for i in 0..n {
                        for j in 0..n {
                            hq[i * n + j] = h.comp(i, j).eval(q);
                        }
                    }
                    let mut dh = Vec::with_capacity(n);
                    for a in 0..n {
                        dh.push(h.d_mat_at(a, q, dh_cfg));
                    }
                    let mut dq = vec![0.0; n * n * n];
                    for i in 0..n {
                        for j in 0..n {
                            for k in 0..n {
                                dq[(i * n + j) * n + k] = 0.5
                                    * (dh[i][(j, k)] + dh[j][(i, k)] + dh[k][(i, j)]
                                        - cubic.eval(&[i, j, k], q));
                            }
                        }
                    }
                    let data = std::sync::Arc::new((hq, dq));
                    let mut guard = memo.lock().unwrap();
                    if guard.len() >= 1 << 14 {
                        guard.clear();
                    }
                    guard.insert(key, data.clone());
                    data
                }
            }
        };
        let (hq, dq) = (&data.0, &data.1);
        let mut acc = 0.0;
        for i in 0..n {
            let di = p[i] - q[i];
            for j in 0..n {
                let dj = p[j] - q[j];
                acc += 0.5 * hq[i * n + j] * di * dj;
                for k in 0..n {
                    acc += dq[(i * n + j) * n + k] * di * dj * (p[k] - q[k]) / 6.0;
                }
            }
        }
        acc
    });
    Ok(TwoPointFunction::new_unchecked(chart, comp))
}

/// Residuals of the diagonal derivative relations for a weak contrast
/// function against its source data.
#[derive(Debug, Clone)]
pub struct EguchiReport {
    pub diag_value: f64,
    pub diag_gradient: f64,
    /// max |−ρ[X|Y] − h|
    pub metric_mixed: f64,
    /// max |ρ[XY|−] − h|
    pub metric_left: f64,
    /// max |ρ[−|XY] − h|
    pub metric_right: f64,
    /// max |−ρ[Z|XY] + ρ[XY|Z] − C|
    pub cubic: f64,
}

impl EguchiReport {
    pub fn worst(&self) -> f64 {
        self.diag_value
            .max(self.diag_gradient)
            .max(self.metric_mixed)
            .max(self.metric_left)
            .max(self.metric_right)
            .max(self.cubic)
    }
}

pub fn eguchi_report(
    rho: &TwoPointFunction,
    h: &MetricField,
    cubic: &TensorField,
    grid_m: usize,
) -> Result<EguchiReport> {
    let n = rho.chart.dim();
    let cfg = RhoFd::default();
    let (diag_value, diag_gradient) = rho.diagonal_residuals(grid_m)?;
    let mut mm = 0.0f64;
    let mut ml = 0.0f64;
    let mut mr = 0.0f64;
    let mut cc = 0.0f64;
    for r in rho.chart.grid(grid_m) {
        let gmat = h.mat_at(&r);
        for i in 0..n {
            for j in 0..n {
                let hij = gmat[(i, j)];
                mm = mm.max((-rho_derivative(rho, &[i], &[j], &r, &cfg)? - hij).abs());
                ml = ml.max((rho_derivative(rho, &[i, j], &[], &r, &cfg)? - hij).abs());
                mr = mr.max((rho_derivative(rho, &[], &[i, j], &r, &cfg)? - hij).abs());
                for k in 0..n {
                    let c = cubic.eval(&[i, j, k], &r);
                    let v = -rho_derivative(rho, &[k], &[i, j], &r, &cfg)?
                        + rho_derivative(rho, &[i, j], &[k], &r, &cfg)?;
                    cc = cc.max((v - c).abs());
                }
            }
        }
    }
    Ok(EguchiReport {
        diag_value,
        diag_gradient,
        metric_mixed: mm,
        metric_left: ml,
        metric_right: mr,
        cubic: cc,
    })
}

/// Leibniz consistency residual `max |X ρ[Y|Z] - ρ[XY|Z] - ρ[Y|XZ]|` over a
/// grid; the left side differentiates the diagonal restriction directly.
pub fn leibniz_residual(rho: &TwoPointFunction, grid_m: usize) -> Result<f64> {
    let n = rho.chart.dim();
    let cfg = RhoFd::default();
    let outer = FdConfig::new(1e-2, Scheme::Central4, true);
    let mut worst = 0.0f64;
    for r in rho.chart.grid(grid_m) {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let rho2 = rho.clone();
                    let diag = move |p: &[f64]| {
                        rho_derivative(&rho2, &[j], &[k], p, &RhoFd::default())
                            .unwrap_or(f64::NAN)
                    };
                    let lhs = fd::deriv1(
                        |x| {
                            let mut q = r.clone();
                            q[i] = x;
                            diag(&q)
                        },
                        r[i],
                        outer,
                    );
                    let rhs = rho_derivative(rho, &[i, j], &[k], &r, &cfg)?
                        + rho_derivative(rho, &[j], &[i, k], &r, &cfg)?;
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// The relative-entropy contrast of a statistical model, oriented so the
/// extracted primal connection is the exponential (α = 1) connection:
/// `ρ(ζ_p, ζ_q) = ∫ p(x, ζ_q) (l(x, ζ_q) - l(x, ζ_p)) dx`.
pub fn kl_contrast(model: &StatisticalModel) -> TwoPointFunction {
    let n = model.dim();
    let model = model.clone();
    let chart = model.chart().clone();
    let comp = Component::func(move |vals: &[f64]| {
        let (zp, zq) = vals.split_at(n);
        model.rule().integrate(|x| {
            let mut vq = Vec::with_capacity(1 + n);
            vq.push(x);
            vq.extend_from_slice(zq);
            let mut vp = Vec::with_capacity(1 + n);
            vp.push(x);
            vp.extend_from_slice(zp);
            let lq = model.log_density_at(&vq);
            let lp = model.log_density_at(&vp);
            lq.exp() * (lq - lp)
        })
    });
    TwoPointFunction::new_unchecked(chart, comp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Symmetry;
    use crate::model::{alpha_connection, bernoulli, fisher_metric};

    fn chart1() -> Chart {
        Chart::new(&["u"], &[[-1.0, 1.0]], &[0.2]).unwrap()
    }

    #[test]
    fn quadratic_contrast_derivatives() {
        // ρ = (p-q)^2/2: ρ[∂|∂] = -1, ρ[∂∂|-] = 1, diagonal conditions hold
        let rho =
            TwoPointFunction::from_expr(chart1(), "(p_u - q_u)^2 / 2", 5).unwrap();
        let cfg = RhoFd::default();
        let v = rho_derivative(&rho, &[0], &[0], &[0.1], &cfg).unwrap();
        assert!((v + 1.0).abs() < 1e-9, "got {v}");
        let w = rho_derivative(&rho, &[0, 0], &[], &[0.1], &cfg).unwrap();
        assert!((w - 1.0).abs() < 1e-9, "got {w}");
    }

    #[test]
    fn order_cap_enforced() {
        let rho = TwoPointFunction::from_expr(chart1(), "(p_u - q_u)^2 / 2", 3).unwrap();
        assert!(rho_derivative(&rho, &[0, 0, 0], &[0, 0], &[0.0], &RhoFd::default()).is_err());
    }

    #[test]
    fn euclidean_contrast_extracts_trivial_structure() {
        let chart = Chart::new(&["u", "v"], &[[-1.0, 1.0], [-1.0, 1.0]], &[0.1, 0.1]).unwrap();
        let rho = TwoPointFunction::from_expr(
            chart,
            "((p_u - q_u)^2 + (p_v - q_v)^2) / 2",
            4,
        )
        .unwrap();
        let s = structure_from_contrast(&rho, 4).unwrap();
        let p = [0.2, -0.3];
        let g = s.metric.mat_at(&p);
        assert!((g[(0, 0)] - 1.0).abs() < 1e-8 && (g[(1, 1)] - 1.0).abs() < 1e-8);
        assert!(g[(0, 1)].abs() < 1e-9);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    assert!(s.cubic.eval(&[i, j, k], &p).abs() < 1e-7);
                }
            }
        }
        let (gp, gd) = s.connections.expect("identity metric is invertible");
        assert!(gp.gamma(0, 0, 0, &p).abs() < 1e-7);
        assert!(gd.gamma(1, 0, 1, &p).abs() < 1e-7);
    }

    #[test]
    fn non_contrast_rejected() {
        // ρ = p - q has nonvanishing slot gradients on the diagonal
        assert!(matches!(
            TwoPointFunction::from_expr(chart1(), "p_u - q_u", 3),
            Err(Error::NotAContrastCandidate { .. })
        ));
    }

    #[test]
    fn bernoulli_kl_matches_alpha_connections() {
        let chart = Chart::new(&["z"], &[[0.15, 0.85]], &[0.5]).unwrap();
        let model = bernoulli(chart).unwrap();
        let rho = kl_contrast(&model);
        rho.require_diagonal_conditions(3).unwrap();
        // ρ[∂|∂](1/2) = -4 = minus the Fisher information
        let v = rho_derivative(&rho, &[0], &[0], &[0.5], &RhoFd::default()).unwrap();
        assert!((v + 4.0).abs() < 1e-7, "got {v}");
        let s = structure_from_contrast(&rho, 4).unwrap();
        let g = fisher_metric(&model);
        let c1 = alpha_connection(&model, 1.0, 4).unwrap();
        let cm1 = alpha_connection(&model, -1.0, 4).unwrap();
        let (gp, gd) = s.connections.expect("fisher metric invertible");
        for z in model.chart().grid(3) {
            assert!((s.metric.mat_at(&z)[(0, 0)] - g.mat_at(&z)[(0, 0)]).abs() < 1e-6);
            assert!(
                (gp.gamma(0, 0, 0, &z) - c1.gamma(0, 0, 0, &z)).abs() < 1e-5,
                "primal vs alpha=1 at {z:?}"
            );
            assert!(
                (gd.gamma(0, 0, 0, &z) - cm1.gamma(0, 0, 0, &z)).abs() < 1e-5,
                "dual vs alpha=-1 at {z:?}"
            );
        }
    }

    #[test]
    fn weak_contrast_construction_1d() {
        // h = du^2, C = 6 du^3: D_111 = -3 and the relations recover C = 6
        let h = MetricField::euclidean(chart1());
        let cubic = TensorField::new(
            chart1(),
            0,
            3,
            vec![Component::constant(6.0)],
            vec![Symmetry::Total],
        )
        .unwrap();
        let rho = weak_contrast_from(&h, &cubic, 4, 1e-9).unwrap();
        // D appears as the cubic coefficient: ρ(p,q) = Δ²/2 - 3 Δ³/6
        let d = 0.3f64;
        let expect = d * d / 2.0 - 3.0 * d.powi(3) / 6.0;
        assert!((rho.eval(&[0.1 + d], &[0.1]) - expect).abs() < 1e-9);
        let rep = eguchi_report(&rho, &h, &cubic, 4).unwrap();
        assert!(rep.cubic < 1e-8, "cubic residual {}", rep.cubic);
        assert!(rep.worst() < 1e-7, "worst {}", rep.worst());
    }

    #[test]
    fn weak_contrast_safe_on_degenerate_metric() {
        let chart = Chart::new(&["u", "v"], &[[-1.0, 1.0], [-1.0, 1.0]], &[0.2, 0.1]).unwrap();
        // h = diag(1, u^2) degenerates on u = 0
        let h = MetricField::from_components(
            chart.clone(),
            vec![
                Component::constant(1.0),
                Component::constant(0.0),
                Component::constant(0.0),
                Component::from_expr("u^2", &["u", "v"]).unwrap(),
            ],
        )
        .unwrap();
        let cubic = TensorField::new(
            chart.clone(),
            0,
            3,
            vec![Component::constant(0.0); 8],
            vec![Symmetry::Total],
        )
        .unwrap();
        let rho = weak_contrast_from(&h, &cubic, 4, 1e-9).unwrap();
        let rep = eguchi_report(&rho, &h, &cubic, 5).unwrap();
        // grid includes u = 0 where rank(h) = 1; the relations still hold
        assert!(rep.worst() < 1e-6, "worst {}", rep.worst());
        // extraction returns (h, C) but no connections
        let s = structure_from_contrast(&rho, 5).unwrap();
        assert!(s.connections.is_none());
        assert!((s.metric.mat_at(&[0.0, 0.3])[(1, 1)]).abs() < 1e-7);
    }

    #[test]
    fn round_trip_reproduces_inputs() {
        let chart = Chart::new(&["u", "v"], &[[-1.0, 1.0], [-1.0, 1.0]], &[0.2, 0.1]).unwrap();
        let h = MetricField::from_components(
            chart.clone(),
            vec![
                Component::from_expr("2 + sin(u)*0.3", &["u", "v"]).unwrap(),
                Component::from_expr("0.2*u*v", &["u", "v"]).unwrap(),
                Component::from_expr("0.2*u*v", &["u", "v"]).unwrap(),
                Component::from_expr("1.5 + 0.2*cos(v)", &["u", "v"]).unwrap(),
            ],
        )
        .unwrap();
        let mut c_comps = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let (i, j, k) = (i as f64, j as f64, k as f64);
                    let coef = 0.1 * (1.0 + i + j + k);
                    c_comps.push(Component::func(move |p: &[f64]| {
                        coef * (1.0 + 0.3 * p[0])
                    }));
                }
            }
        }
        let cubic = TensorField::new(chart, 0, 3, c_comps, vec![Symmetry::Total]).unwrap();
        let rho = weak_contrast_from(&h, &cubic, 4, 1e-9).unwrap();
        let s = structure_from_contrast(&rho, 4).unwrap();
        for p in h.chart().grid(3) {
            let g0 = h.mat_at(&p);
            let g1 = s.metric.mat_at(&p);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((g0[(i, j)] - g1[(i, j)]).abs() < 1e-6);
                }
            }
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        let a = cubic.eval(&[i, j, k], &p);
                        let b = s.cubic.eval(&[i, j, k], &p);
                        assert!((a - b).abs() < 1e-6, "C at {p:?}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn leibniz_identity_holds() {
        let h = MetricField::from_components(
            chart1(),
            vec![Component::from_expr("1 + 0.5*u^2", &["u"]).unwrap()],
        )
        .unwrap();
        let cubic = TensorField::new(
            chart1(),
            0,
            3,
            vec![Component::from_expr("u", &["u"]).unwrap()],
            vec![Symmetry::Total],
        )
        .unwrap();
        let rho = weak_contrast_from(&h, &cubic, 4, 1e-9).unwrap();
        let r = leibniz_residual(&rho, 3).unwrap();
        assert!(r < 1e-6, "residual {r}");
    }
}
