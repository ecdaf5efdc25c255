//! Property tests for the numeric substrate: polynomial exactness of the
//! stencils and rules, closedness of exact one-forms, and parser round trips.

use proptest::prelude::*;
use statgeo::chart::Chart;
use statgeo::fd::{self, FdConfig, Scheme};
use statgeo::field::Component;
use statgeo::path::path_integrate_oneform;
use statgeo::quad::{quad_integrate, QuadratureRule};
use statgeo::Program;

fn coeff() -> impl Strategy<Value = f64> {
    // well-scaled coefficients keep roundoff comparisons meaningful
    (-4i32..=4).prop_map(|k| k as f64 * 0.25)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn central4_differentiates_cubics_exactly(a in coeff(), b in coeff(), c in coeff(), d in coeff(), x in -0.8f64..0.8) {
        let f = Component::func(move |p: &[f64]| {
            let u = p[0];
            a + b * u + c * u * u + d * u * u * u
        });
        let got = fd::partial(&f, &[x], 0, FdConfig::new(1e-3, Scheme::Central4, false));
        let expect = b + 2.0 * c * x + 3.0 * d * x * x;
        prop_assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly(c0 in coeff(), c1 in coeff(), c4 in coeff(), a in -1.0f64..0.0, span in 0.5f64..2.0) {
        let b = a + span;
        let rule = QuadratureRule::gauss_legendre(16, a, b).unwrap();
        let f = Component::func(move |p: &[f64]| {
            let x = p[0];
            c0 + c1 * x + c4 * x.powi(4)
        });
        let got = quad_integrate(&f, &rule, &[]).unwrap();
        let anti = |x: f64| c0 * x + c1 * x * x / 2.0 + c4 * x.powi(5) / 5.0;
        prop_assert!((got - (anti(b) - anti(a))).abs() < 1e-12);
    }

    #[test]
    fn exact_one_forms_integrate_to_potential_differences(
        c20 in coeff(), c02 in coeff(), c11 in coeff(), c30 in coeff(),
        fx in -0.9f64..0.9, fy in -0.9f64..0.9, tx in -0.9f64..0.9, ty in -0.9f64..0.9,
    ) {
        // potential F = c20 u^2 + c02 v^2 + c11 u v + c30 u^3
        let chart = Chart::new(&["u", "v"], &[[-1.0, 1.0], [-1.0, 1.0]], &[0.0, 0.1]).unwrap();
        let du = Component::func(move |p: &[f64]| 2.0 * c20 * p[0] + c11 * p[1] + 3.0 * c30 * p[0] * p[0]);
        let dv = Component::func(move |p: &[f64]| 2.0 * c02 * p[1] + c11 * p[0]);
        let potential = move |u: f64, v: f64| c20 * u * u + c02 * v * v + c11 * u * v + c30 * u.powi(3);
        let r = path_integrate_oneform(&[du, dv], &chart, &[fx, fy], &[tx, ty]).unwrap();
        let expect = potential(tx, ty) - potential(fx, fy);
        prop_assert!((r.value - expect).abs() < 1e-11, "{} vs {expect}", r.value);
        prop_assert!(r.order_residual < 1e-11);
    }

    #[test]
    fn parser_evaluates_like_rust(a in coeff(), b in coeff(), x in 0.1f64..2.0, y in -1.5f64..1.5) {
        let src = format!("{a} * sin(x*y) + exp({b}*y) / sqrt(x) - x^3");
        let p = Program::parse(&src, &["x", "y"]).unwrap();
        let got = p.eval(&[x, y]);
        let expect = a * (x * y).sin() + (b * y).exp() / x.sqrt() - x.powi(3);
        prop_assert!((got - expect).abs() <= 1e-12 * (1.0 + expect.abs()), "{got} vs {expect}");
    }

    #[test]
    fn richardson_never_hurts_polynomials(c in coeff(), x in -0.5f64..0.5) {
        let f = Component::func(move |p: &[f64]| c * p[0].powi(4));
        let plain = fd::partial(&f, &[x], 0, FdConfig::central2(1e-2));
        let rich = fd::partial(&f, &[x], 0, FdConfig::new(1e-2, Scheme::Central2, true));
        let expect = 4.0 * c * x.powi(3);
        prop_assert!((rich - expect).abs() <= (plain - expect).abs() + 1e-13);
    }
}
