//! Reconstruction pipeline: parallel frames to Legendre embeddings to
//! affine transition maps, exercised on closed-form examples.

use nalgebra::{DMatrix, DVector};
use statgeo::atlas::{build_atlas, local_embedding, overlap_samples, transition};
use statgeo::chart::Chart;
use statgeo::conn::AffineConnection;
use statgeo::fd::FdConfig;
use statgeo::field::{Component, MatrixField};
use statgeo::metric::MetricField;
use statgeo::qcs::{
    canonical_from_codazzi, BundleConnection, QuasiCodazziStructure, StructurePolicy,
};
use statgeo::testgen;
use statgeo::Error;

fn cusp_structure(box_: [f64; 2]) -> QuasiCodazziStructure {
    let chart = Chart::new(&["t"], &[box_], &[0.5 * (box_[0] + box_[1])]).unwrap();
    QuasiCodazziStructure::new(
        chart,
        MatrixField::identity(1),
        MatrixField::new(1, 1, vec![Component::from_expr("6*t", &["t"]).unwrap()]),
        MatrixField::new(1, 1, vec![Component::from_expr("3*t^2", &["t"]).unwrap()]),
        BundleConnection::zero(1, 1),
        BundleConnection::zero(1, 1),
        StructurePolicy::default(),
    )
    .unwrap()
}

#[test]
fn flat_euclidean_single_chart() {
    let chart = testgen::chart2();
    let h = MetricField::euclidean(chart.clone());
    let s = canonical_from_codazzi(
        &h,
        &AffineConnection::zero(chart.clone()),
        None,
        StructurePolicy::default(),
        1e-9,
    )
    .unwrap();
    let atlas = build_atlas(
        &s,
        &[("main".to_string(), chart.clone())],
        3,
        FdConfig::inner(),
        1e-6,
    )
    .unwrap();
    assert_eq!(atlas.description.transitions.len(), 0);
    let emb = &atlas.embeddings[0].1;
    let bp = chart.basepoint();
    for u in chart.grid(3) {
        let (x, p, z) = emb.eval(&u);
        for k in 0..2 {
            assert!((x[k] - (u[k] - bp[k])).abs() < 1e-9, "x at {u:?}");
            // Φ⁻ = h/2 = id/2, so the dual side moves at half speed
            assert!((p[k] - 0.5 * (u[k] - bp[k])).abs() < 1e-9, "p at {u:?}");
        }
        let z_expect = 0.25 * ((u[0] - bp[0]).powi(2) + (u[1] - bp[1]).powi(2));
        assert!((z - z_expect).abs() < 1e-9, "z at {u:?}: {z} vs {z_expect}");
    }
}

#[test]
fn cusp_embedding_recovers_closed_form() {
    // basepoint at the cusp point itself: the anchored embedding is exactly
    // (3t^2, t^3) with lift (6/5) t^5
    let chart = Chart::new(&["t"], &[[-0.6, 0.6]], &[0.0]).unwrap();
    let s = QuasiCodazziStructure::new(
        chart.clone(),
        MatrixField::identity(1),
        MatrixField::new(1, 1, vec![Component::from_expr("6*t", &["t"]).unwrap()]),
        MatrixField::new(1, 1, vec![Component::from_expr("3*t^2", &["t"]).unwrap()]),
        BundleConnection::zero(1, 1),
        BundleConnection::zero(1, 1),
        StructurePolicy::default(),
    )
    .unwrap();
    let emb = local_embedding(&s, &chart, 4, FdConfig::inner()).unwrap();
    for t in [-0.55f64, -0.3, -0.01, 0.0, 0.2, 0.5] {
        let (x, p, z) = emb.eval(&[t]);
        assert!((x[0] - 3.0 * t * t).abs() < 1e-7, "x({t}) = {}", x[0]);
        assert!((p[0] - t * t * t).abs() < 1e-7, "p({t}) = {}", p[0]);
        assert!((z - 1.2 * t.powi(5)).abs() < 1e-7, "z({t}) = {z}");
    }
    let (df, dz) = emb.embedding_residuals(3, FdConfig::inner());
    assert!(df < 1e-6 && dz < 1e-6, "df {df}, dz {dz}");
    // metric off the embedding agrees with the pullback, including at t = 0
    for t in [-0.4f64, 0.0, 0.4] {
        let m = emb.metric_from_embedding(&[t]);
        assert!((m[(0, 0)] - 36.0 * t.powi(3)).abs() < 1e-8);
    }
}

#[test]
fn cusp_two_chart_atlas() {
    let s = cusp_structure([-0.6, 0.6]);
    let chart_u = Chart::new(&["t"], &[[-0.6, 0.2]], &[-0.2]).unwrap();
    let chart_v = Chart::new(&["t"], &[[-0.2, 0.6]], &[0.2]).unwrap();
    let atlas = build_atlas(
        &s,
        &[
            ("left".to_string(), chart_u),
            ("right".to_string(), chart_v),
        ],
        4,
        FdConfig::inner(),
        1e-6,
    )
    .unwrap();
    assert_eq!(atlas.description.transitions.len(), 1);
    let t = &atlas.description.transitions[0];
    assert!(t.report.map_residual < 1e-7, "{:?}", t.report);
    assert!(
        t.report.dual_block_residual < 1e-8 && t.report.offset_constraint_residual < 1e-8,
        "constraints: {:?}",
        t.report
    );
    // anchors differ, so the offsets are the basepoint value differences
    let b = &t.report.map.b;
    let expect_b = 3.0 * 0.2f64.powi(2) - 3.0 * 0.2f64.powi(2); // x_U(t) - x_V(t) shift
    // f_U(t) = 3t^2 - 0.12, f_V(t) = 3t^2 - 0.12: identical, so b = 0 here
    assert!((b[0] - expect_b).abs() < 1e-8);
    let bd = &t.report.map.b_dual;
    // p_U(t) = t^3 + 0.008, p_V(t) = t^3 - 0.008: offset -0.016
    assert!((bd[0] + 0.016).abs() < 1e-8, "b' = {}", bd[0]);
    // per-chart embeddings match the closed form up to constants
    for (name, emb) in &atlas.embeddings {
        let mut dx = Vec::new();
        let mut dp = Vec::new();
        for u in emb.chart().grid(5) {
            let (x, p, _z) = emb.eval(&u);
            dx.push(x[0] - 3.0 * u[0] * u[0]);
            dp.push(p[0] - u[0].powi(3));
        }
        let spread = |v: &[f64]| {
            v.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b))
                - v.iter().fold(f64::INFINITY, |a, b| a.min(*b))
        };
        assert!(spread(&dx) < 1e-6, "{name}: x spread {}", spread(&dx));
        assert!(spread(&dp) < 1e-6, "{name}: p spread {}", spread(&dp));
    }
}

/// The quartic-potential structure: `h = Hess(u^4/2 + v^4/2)`-style data
/// with coordinate-flat primal connection, optionally gauged.
fn quartic_structure(gauged: bool) -> (QuasiCodazziStructure, Chart) {
    let chart = Chart::new(&["u", "v"], &[[-0.9, 0.9], [-0.9, 0.9]], &[0.2, 0.15]).unwrap();
    let h = MetricField::from_components(
        chart.clone(),
        vec![
            Component::from_expr("6*u^2", &["u", "v"]).unwrap(),
            Component::constant(0.0),
            Component::constant(0.0),
            Component::from_expr("6*v^2", &["u", "v"]).unwrap(),
        ],
    )
    .unwrap();
    let s = canonical_from_codazzi(
        &h,
        &AffineConnection::zero(chart.clone()),
        None,
        StructurePolicy::default(),
        1e-6,
    )
    .unwrap();
    let s = if gauged {
        let gp = MatrixField::new(
            2,
            2,
            vec![
                Component::from_expr("1 + 0.1*sin(u)", &["u", "v"]).unwrap(),
                Component::from_expr("0.05*v", &["u", "v"]).unwrap(),
                Component::constant(0.0),
                Component::constant(1.0),
            ],
        );
        let gm = MatrixField::new(
            2,
            2,
            vec![
                Component::constant(1.0),
                Component::constant(0.0),
                Component::from_expr("0.08*cos(v)", &["u", "v"]).unwrap(),
                Component::from_expr("1 - 0.06*u", &["u", "v"]).unwrap(),
            ],
        );
        s.gauge_transform(&gp, &gm).unwrap()
    } else {
        s
    };
    (s, chart)
}

#[test]
fn quartic_potential_embedding_is_half_gradient_graph() {
    let (s, chart) = quartic_structure(false);
    let emb = local_embedding(&s, &chart, 3, FdConfig::inner()).unwrap();
    let bp = chart.basepoint();
    for u in chart.grid(3) {
        let (x, p, _z) = emb.eval(&u);
        for k in 0..2 {
            assert!((x[k] - (u[k] - bp[k])).abs() < 1e-7);
            // Φ⁻ = h/2 integrates to the half-gradient of the potential
            let expect = u[k].powi(3) - bp[k].powi(3);
            assert!((p[k] - expect).abs() < 1e-7, "p[{k}] at {u:?}");
        }
    }
}

#[test]
fn quartic_three_chart_cocycle() {
    let (s, _chart) = quartic_structure(true);
    let charts = vec![
        (
            "a".to_string(),
            Chart::new(&["u", "v"], &[[-0.9, 0.1], [-0.9, 0.1]], &[-0.4, -0.4]).unwrap(),
        ),
        (
            "b".to_string(),
            Chart::new(&["u", "v"], &[[-0.45, 0.45], [-0.45, 0.45]], &[0.0, 0.0]).unwrap(),
        ),
        (
            "c".to_string(),
            Chart::new(&["u", "v"], &[[-0.1, 0.9], [-0.1, 0.9]], &[0.4, 0.4]).unwrap(),
        ),
    ];
    let atlas = build_atlas(&s, &charts, 3, FdConfig::inner(), 1e-6).unwrap();
    assert_eq!(atlas.description.transitions.len(), 3);
    for t in &atlas.description.transitions {
        assert!(
            t.report.dual_block_residual < 1e-8,
            "{} -> {}: {:?}",
            t.from,
            t.to,
            t.report
        );
        assert!(t.report.offset_constraint_residual < 1e-8);
        assert!(t.report.map_residual < 1e-6);
    }
    assert_eq!(atlas.description.cocycles.len(), 1);
    assert!(
        atlas.description.cocycles[0].residual < 1e-6,
        "cocycle residual {}",
        atlas.description.cocycles[0].residual
    );
    // the gauged frames make the transition genuinely non-identity
    let a = &atlas.description.transitions[0].report.map;
    assert!(a.deviation_from_identity() > 1e-3);
}

#[test]
fn reconstruction_round_trip_from_gradient_graph() {
    // start from the known Lagrange embedding u -> (u, ∇ψ(u)) with
    // ψ = (u^4 + v^4)/4 (degenerate Hessian at the origin), rebuild the
    // canonical structure, reconstruct, and compare up to one affine
    // Legendre equivalence fitted by least squares.
    let (s, chart) = quartic_structure(true);
    let emb = local_embedding(&s, &chart, 3, FdConfig::inner()).unwrap();
    let bp = chart.basepoint().to_vec();
    let truth = |u: &[f64]| {
        let x = DVector::from_column_slice(u);
        let p = DVector::from_vec(vec![u[0].powi(3), u[1].powi(3)]);
        let z = 0.25 * (u[0].powi(4) + u[1].powi(4));
        (x, p, z)
    };
    let _ = bp;
    // fit x_rec = A x_true + b and p_rec = A' p_true + b'
    let samples = chart.grid(4);
    let fit_affine = |get_true: &dyn Fn(&[f64]) -> DVector<f64>,
                      get_rec: &dyn Fn(&[f64]) -> DVector<f64>| {
        let n = 2;
        let m = samples.len();
        let mut design = DMatrix::<f64>::zeros(m, n + 1);
        let mut targets = vec![DVector::<f64>::zeros(m); n];
        for (row, sample) in samples.iter().enumerate() {
            let t = get_true(sample);
            let r = get_rec(sample);
            for k in 0..n {
                design[(row, k)] = t[k];
                targets[k][row] = r[k];
            }
            design[(row, n)] = 1.0;
        }
        let gram = design.transpose() * &design;
        let lu = gram.lu();
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for k in 0..n {
            let rhs = design.transpose() * &targets[k];
            let sol = lu.solve(&rhs).unwrap();
            for c in 0..n {
                a[(k, c)] = sol[c];
            }
            b[k] = sol[n];
        }
        (a, b)
    };
    let (a, b) = fit_affine(&|u| truth(u).0, &|u| emb.eval(u).0);
    let (ad, bd) = fit_affine(&|u| truth(u).1, &|u| emb.eval(u).1);
    // affine Legendre constraints are emergent
    let c1 = (&ad * a.transpose() - DMatrix::<f64>::identity(2, 2)).abs().max();
    assert!(c1 < 1e-6, "A' (A^T) = I residual {c1}");
    // z relation: z_rec = z_true + c^T x_true + d with c = A^T b'
    let mut worst = 0.0f64;
    let c_vec = a.transpose() * &bd;
    // d from one sample, checked on the rest
    let s0 = &samples[0];
    let d = emb.eval(s0).2 - truth(s0).2 - c_vec.dot(&truth(s0).0);
    for sample in &samples {
        let (xt, _pt, zt) = truth(sample);
        let zr = emb.eval(sample).2;
        worst = worst.max((zr - zt - c_vec.dot(&xt) - d).abs());
    }
    assert!(worst < 1e-6, "lift mismatch {worst}");
    // the recovered blocks really map the embeddings onto each other
    let mut emb_residual = 0.0f64;
    for sample in &samples {
        let (xt, pt, _zt) = truth(sample);
        let (xr, pr, _zr) = emb.eval(sample);
        emb_residual = emb_residual
            .max((&a * xt + &b - xr).abs().max())
            .max((&ad * pt + &bd - pr).abs().max());
    }
    assert!(emb_residual < 1e-6, "embedding map residual {emb_residual}");
}

#[test]
fn transition_is_sample_set_invariant() {
    let s = cusp_structure([-0.6, 0.6]);
    let chart_u = Chart::new(&["t"], &[[-0.6, 0.25]], &[-0.2]).unwrap();
    let chart_v = Chart::new(&["t"], &[[-0.25, 0.6]], &[0.2]).unwrap();
    let eu = local_embedding(&s, &chart_u, 4, FdConfig::inner()).unwrap();
    let ev = local_embedding(&s, &chart_v, 4, FdConfig::inner()).unwrap();
    let overlap = chart_u.overlap(&chart_v).unwrap();
    let set1 = overlap_samples(&overlap, 1);
    let set2: Vec<Vec<f64>> = vec![
        vec![-0.21],
        vec![-0.1],
        vec![0.03],
        vec![0.11],
        vec![0.19],
    ];
    let r1 = transition(&eu, &ev, &set1).unwrap();
    let r2 = transition(&eu, &ev, &set2).unwrap();
    assert!((r1.map.a[0][0] - r2.map.a[0][0]).abs() < 1e-7);
    assert!((r1.map.b[0] - r2.map.b[0]).abs() < 1e-7);
    assert!((r1.map.b_dual[0] - r2.map.b_dual[0]).abs() < 1e-7);
    assert!((r1.map.c[0] - r2.map.c[0]).abs() < 1e-7);
    assert!((r1.map.d - r2.map.d).abs() < 1e-7);
}

#[test]
fn same_embedding_gives_identity_transition() {
    let s = cusp_structure([-0.6, 0.6]);
    let chart = Chart::new(&["t"], &[[-0.4, 0.4]], &[0.1]).unwrap();
    let emb = local_embedding(&s, &chart, 4, FdConfig::inner()).unwrap();
    let samples = overlap_samples(chart.box_intervals(), 1);
    let rep = transition(&emb, &emb, &samples).unwrap();
    assert!(rep.map.deviation_from_identity() < 1e-9, "{:?}", rep.map);
}

#[test]
fn integrability_violation_detected() {
    // flat connections but a bundle map that is not relatively torsion-free
    let chart = testgen::chart2();
    let phi_plus = MatrixField::new(
        2,
        2,
        vec![
            Component::constant(1.0),
            Component::from_expr("u", &["u", "v"]).unwrap(),
            Component::constant(0.0),
            Component::constant(1.0),
        ],
    );
    // Φ⁻ = ((Φ⁺)⁻¹)ᵀ keeps the image Lagrangian
    let phi_minus = MatrixField::new(
        2,
        2,
        vec![
            Component::constant(1.0),
            Component::constant(0.0),
            Component::from_expr("-u", &["u", "v"]).unwrap(),
            Component::constant(1.0),
        ],
    );
    let s = QuasiCodazziStructure::new(
        chart.clone(),
        MatrixField::identity(2),
        phi_plus,
        phi_minus,
        BundleConnection::zero(2, 2),
        BundleConnection::zero(2, 2),
        StructurePolicy::default(),
    )
    .unwrap();
    assert!(matches!(
        local_embedding(&s, &chart, 3, FdConfig::inner()),
        Err(Error::IntegrabilityViolated { .. })
    ));
}

#[test]
fn atlas_refuses_structures_failing_the_conditions() {
    let chart = testgen::chart2();
    let s = testgen::structure_with_torsion(&chart, 9, testgen::TorsionMode::Generic).unwrap();
    assert!(build_atlas(
        &s,
        &[("main".to_string(), chart)],
        3,
        FdConfig::inner(),
        1e-6
    )
    .is_err());
}
