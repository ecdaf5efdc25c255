//! Integration of one-forms along axis-aligned staircase paths.
//!
//! Charts are boxes, hence convex, so the staircase from one point to another
//! (one segment per coordinate, in coordinate order) always stays inside the
//! chart. Integrating in the reversed coordinate order gives an independent
//! value whose discrepancy serves as an integrability residual: it vanishes
//! for closed forms.

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::field::Component;
use crate::quad::QuadratureRule;

#[derive(Debug, Clone, Copy)]
pub struct PathIntegral {
    pub value: f64,
    /// |forward-order value - reversed-order value|
    pub order_residual: f64,
}

/// Integrate `sum_i a_i du_i` along the staircase from `from` to `to`.
pub fn path_integrate_oneform(
    comps: &[Component],
    chart: &Chart,
    from: &[f64],
    to: &[f64],
) -> Result<PathIntegral> {
    let n = chart.dim();
    assert_eq!(comps.len(), n);
    if !chart.contains(from) || !chart.contains(to) {
        return Err(Error::validation(
            "path_integrate_oneform",
            "endpoints must lie in the chart box",
        ));
    }
    let order: Vec<usize> = (0..n).collect();
    let fwd = integrate_along(comps, from, to, &order)?;
    let rev_order: Vec<usize> = (0..n).rev().collect();
    let rev = integrate_along(comps, from, to, &rev_order)?;
    Ok(PathIntegral {
        value: fwd,
        order_residual: (fwd - rev).abs(),
    })
}

/// Staircase integral with an explicit axis order; used internally by the
/// Legendre-embedding construction, which wants both orders separately.
pub fn integrate_along(
    comps: &[Component],
    from: &[f64],
    to: &[f64],
    order: &[usize],
) -> Result<f64> {
    let mut pos = from.to_vec();
    let mut acc = 0.0f64;
    for &axis in order {
        let a = pos[axis];
        let b = to[axis];
        if a != b {
            let rule = QuadratureRule::gauss_legendre(64, a.min(b), a.max(b))?;
            let sign = if b >= a { 1.0 } else { -1.0 };
            let mut bad = false;
            let seg = rule.integrate(|x| {
                pos[axis] = x;
                let v = comps[axis].eval(&pos);
                if !v.is_finite() {
                    bad = true;
                }
                v
            });
            if bad || !seg.is_finite() {
                return Err(Error::non_finite("path segment", &pos));
            }
            acc += sign * seg;
        }
        pos[axis] = b;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart2() -> Chart {
        Chart::new(&["u", "v"], &[[-1.0, 3.0], [-1.0, 3.0]], &[0.0, 0.0]).unwrap()
    }

    #[test]
    fn exact_form_du() {
        let chart = Chart::new(&["u"], &[[-1.0, 2.0]], &[0.0]).unwrap();
        let comps = vec![Component::constant(1.0)];
        let r = path_integrate_oneform(&comps, &chart, &[0.0], &[1.0]).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14);
        assert_eq!(r.order_residual, 0.0);
    }

    #[test]
    fn potential_difference_of_d_uv() {
        // a = v du + u dv = d(uv); from (0,0) to (1,2) the value is 2.
        let comps = vec![
            Component::from_expr("v", &["u", "v"]).unwrap(),
            Component::from_expr("u", &["u", "v"]).unwrap(),
        ];
        let r = path_integrate_oneform(&comps, &chart2(), &[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12, "got {}", r.value);
        assert!(r.order_residual < 1e-12);
    }

    #[test]
    fn non_closed_form_shows_order_dependence() {
        // a = -v du + u dv; the two staircase orders over the unit square
        // differ by the enclosed curl integral, which is 2.
        let comps = vec![
            Component::from_expr("-v", &["u", "v"]).unwrap(),
            Component::from_expr("u", &["u", "v"]).unwrap(),
        ];
        let r = path_integrate_oneform(&comps, &chart2(), &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((r.order_residual - 2.0).abs() < 1e-12, "got {}", r.order_residual);
    }

    #[test]
    fn additive_under_concatenation() {
        let comps = vec![
            Component::from_expr("v*cos(u)", &["u", "v"]).unwrap(),
            Component::from_expr("sin(u)", &["u", "v"]).unwrap(),
        ];
        let chart = chart2();
        let a = [0.0, 0.0];
        let m = [0.7, 1.1];
        let b = [1.5, 2.0];
        let whole = path_integrate_oneform(&comps, &chart, &a, &b).unwrap();
        let first = path_integrate_oneform(&comps, &chart, &a, &m).unwrap();
        let second = path_integrate_oneform(&comps, &chart, &m, &b).unwrap();
        assert!(
            (whole.value - first.value - second.value).abs() < 1e-10,
            "additivity residual {}",
            (whole.value - first.value - second.value).abs()
        );
    }

    #[test]
    fn endpoints_must_be_inside() {
        let chart = Chart::new(&["u"], &[[0.0, 1.0]], &[0.5]).unwrap();
        let comps = vec![Component::constant(1.0)];
        assert!(path_integrate_oneform(&comps, &chart, &[0.0], &[2.0]).is_err());
    }
}
