//! Central finite differences with optional Richardson extrapolation.
//!
//! All derivatives in the engine are finite differences of component
//! evaluations; there is no symbolic differentiation. Accuracy is governed
//! by one small configuration struct so that every proposition check states
//! its error budget explicitly.

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::field::{Component, MatrixField, TensorField};
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Central2,
    Central4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdConfig {
    pub step: f64,
    pub scheme: Scheme,
    pub richardson: bool,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            step: 1e-5,
            scheme: Scheme::Central4,
            richardson: true,
        }
    }
}

impl FdConfig {
    pub fn new(step: f64, scheme: Scheme, richardson: bool) -> FdConfig {
        FdConfig {
            step,
            scheme,
            richardson,
        }
    }

    pub fn central2(step: f64) -> FdConfig {
        FdConfig::new(step, Scheme::Central2, false)
    }

    pub fn central4(step: f64) -> FdConfig {
        FdConfig::new(step, Scheme::Central4, false)
    }

    /// Step used by derived-field closures that are differentiated again by
    /// an outer stencil. A larger inner step keeps the inner roundoff from
    /// being amplified by the outer divided differences.
    pub fn inner() -> FdConfig {
        FdConfig::new(1e-3, Scheme::Central4, true)
    }

    /// Widest sample offset from the expansion point.
    pub fn max_offset(&self) -> f64 {
        match self.scheme {
            Scheme::Central2 => self.step,
            Scheme::Central4 => 2.0 * self.step,
        }
    }

    /// Checks the `step < shortest_edge / 10` invariant against a chart.
    pub fn validate_for(&self, chart: &Chart) -> Result<()> {
        if !(self.step > 0.0) {
            return Err(Error::validation("fd config", "step must be positive"));
        }
        let limit = chart.shortest_edge() / 10.0;
        if self.step >= limit {
            return Err(Error::validation(
                "fd config",
                format!(
                    "step {:.3e} is not smaller than a tenth of the shortest box edge ({:.3e})",
                    self.step, limit
                ),
            ));
        }
        Ok(())
    }
}

fn stencil(f: &mut dyn FnMut(f64) -> f64, x: f64, h: f64, scheme: Scheme) -> f64 {
    match scheme {
        Scheme::Central2 => (f(x + h) - f(x - h)) / (2.0 * h),
        Scheme::Central4 => {
            (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
        }
    }
}

/// First derivative of a scalar function of one variable.
pub fn deriv1(mut f: impl FnMut(f64) -> f64, x: f64, cfg: FdConfig) -> f64 {
    let d_h = stencil(&mut f, x, cfg.step, cfg.scheme);
    if !cfg.richardson {
        return d_h;
    }
    let d_h2 = stencil(&mut f, x, cfg.step / 2.0, cfg.scheme);
    match cfg.scheme {
        Scheme::Central2 => (4.0 * d_h2 - d_h) / 3.0,
        Scheme::Central4 => (16.0 * d_h2 - d_h) / 15.0,
    }
}

/// Partial derivative of a component along a coordinate axis. No domain
/// check; see [`partial_in_chart`] for the checked variant.
pub fn partial(comp: &Component, point: &[f64], axis: usize, cfg: FdConfig) -> f64 {
    let mut buf = point.to_vec();
    deriv1(
        |x| {
            buf[axis] = x;
            comp.eval(&buf)
        },
        point[axis],
        cfg,
    )
}

/// Partial derivative with the stencil kept inside the chart box.
pub fn partial_in_chart(
    comp: &Component,
    chart: &Chart,
    point: &[f64],
    axis: usize,
    cfg: FdConfig,
) -> Result<f64> {
    check_stencil(chart, point, axis, cfg)?;
    let v = partial(comp, point, axis, cfg);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::non_finite("finite difference", point))
    }
}

pub fn check_stencil(chart: &Chart, point: &[f64], axis: usize, cfg: FdConfig) -> Result<()> {
    if !chart.contains(point) {
        return Err(Error::StencilOutOfDomain {
            axis,
            point: point.to_vec(),
        });
    }
    let itv = chart.box_intervals()[axis];
    let off = cfg.max_offset();
    if point[axis] - off < itv[0] || point[axis] + off > itv[1] {
        return Err(Error::StencilOutOfDomain {
            axis,
            point: point.to_vec(),
        });
    }
    Ok(())
}

/// Componentwise partial derivative of a tensor field at a point.
pub fn fd_partial(
    field: &TensorField,
    axis: usize,
    point: &[f64],
    cfg: FdConfig,
) -> Result<Vec<f64>> {
    cfg.validate_for(field.chart())?;
    check_stencil(field.chart(), point, axis, cfg)?;
    let mut out = Vec::with_capacity(field.components().len());
    for comp in field.components() {
        let v = partial(comp, point, axis, cfg);
        if !v.is_finite() {
            return Err(Error::non_finite("fd_partial", point));
        }
        out.push(v);
    }
    Ok(out)
}

/// Entrywise partial derivative of a matrix field along a coordinate axis.
pub fn d_matrix(m: &MatrixField, axis: usize, point: &[f64], cfg: FdConfig) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |r, c| {
        partial(m.comp(r, c), point, axis, cfg)
    })
}

/// Nested mixed partial along `axes` (applied right to left), one config per
/// level. `cfgs` may be shorter than `axes`; the last entry is reused.
pub fn mixed_partial(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    point: &[f64],
    axes: &[usize],
    cfgs: &[FdConfig],
) -> f64 {
    fn go(
        f: &(dyn Fn(&[f64]) -> f64 + Sync),
        point: &mut Vec<f64>,
        axes: &[usize],
        cfgs: &[FdConfig],
    ) -> f64 {
        match axes.split_last() {
            None => f(point),
            Some((&axis, rest)) => {
                let cfg = cfgs[rest.len().min(cfgs.len() - 1)];
                let x0 = point[axis];
                let v = deriv1(
                    |x| {
                        point[axis] = x;
                        go(f, point, rest, cfgs)
                    },
                    x0,
                    cfg,
                );
                point[axis] = x0;
                v
            }
        }
    }
    assert!(!cfgs.is_empty());
    let mut buf = point.to_vec();
    go(f, &mut buf, axes, cfgs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;

    #[test]
    fn polynomial_exact_under_central2() {
        // f(u) = u^2 at u = 1: derivative 2, exact at machine tolerance.
        let c = Component::from_expr("u^2", &["u"]).unwrap();
        let d = partial(&c, &[1.0], 0, FdConfig::central2(1e-3));
        assert!((d - 2.0).abs() < 1e-11, "got {d}");
    }

    #[test]
    fn sin_derivative_high_order() {
        let c = Component::from_expr("sin(u)", &["u"]).unwrap();
        let d = partial(&c, &[0.0], 0, FdConfig::default());
        assert!((d - 1.0).abs() < 1e-10, "got {d}");
    }

    #[test]
    fn constant_derivative_is_zero() {
        let c = Component::constant(5.0);
        let d = partial(&c, &[0.3], 0, FdConfig::default());
        assert_eq!(d, 0.0);
    }

    #[test]
    fn stencil_domain_enforced() {
        let chart = Chart::new(&["u"], &[[0.0, 1.0]], &[0.5]).unwrap();
        let c = Component::from_expr("u^2", &["u"]).unwrap();
        let cfg = FdConfig::central4(0.05);
        assert!(partial_in_chart(&c, &chart, &[0.5], 0, cfg).is_ok());
        assert!(matches!(
            partial_in_chart(&c, &chart, &[0.05], 0, cfg),
            Err(Error::StencilOutOfDomain { .. })
        ));
    }

    #[test]
    fn non_finite_detected() {
        let chart = Chart::new(&["u"], &[[-1.0, 1.0]], &[0.5]).unwrap();
        let c = Component::from_expr("log(u)", &["u"]).unwrap();
        let r = partial_in_chart(&c, &chart, &[0.0], 0, FdConfig::central2(1e-3));
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn mixed_partial_of_product() {
        // d^2/du dv (u^2 v) = 2u
        let c = Component::from_expr("u^2*v", &["u", "v"]).unwrap();
        let f = move |p: &[f64]| c.eval(p);
        let v = mixed_partial(&f, &[1.5, 0.7], &[0, 1], &[FdConfig::central4(1e-3)]);
        assert!((v - 3.0).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn richardson_improves_central2() {
        let c = Component::from_expr("exp(u)", &["u"]).unwrap();
        let plain = partial(&c, &[0.0], 0, FdConfig::central2(1e-2));
        let rich = partial(&c, &[0.0], 0, FdConfig::new(1e-2, Scheme::Central2, true));
        assert!((rich - 1.0).abs() < (plain - 1.0).abs() / 10.0);
    }
}
