//! Command implementations: each builds objects from the scene, runs the
//! relevant verification sweep, and fills a report. Exit-code classification
//! of failures lives in main.

use crate::report::Report;
use crate::scene::Scene;
use nalgebra::DMatrix;
use statgeo::atlas::build_atlas;
use statgeo::blowup::dual_blowup_probe;
use statgeo::conn::{codazzi_report, duality_residual, levi_civita};
use statgeo::contrast::{eguchi_report, structure_from_contrast};
use statgeo::error::Error as CoreError;
use statgeo::fd::FdConfig;
use statgeo::model::{alpha_connection, alpha_duality_check, fisher_metric, model_cubic};
use statgeo::qcs::{contrast_relations_check, isomorphism_check, quasi_codazzi_report};

pub enum CmdError {
    /// Scene parse / validation problems.
    Validate(String),
    /// A mathematical precondition of the requested operation fails.
    Precondition(String),
    /// Numerical breakdown (non-finite values, ill conditioning and kin).
    Numeric(String),
}

/// Classify a core error: precondition violations versus numerical failure.
pub fn classify(e: CoreError) -> CmdError {
    match e {
        CoreError::Parse { .. } | CoreError::Validation { .. } => CmdError::Validate(e.to_string()),
        CoreError::DegenerateMetric { .. }
        | CoreError::NotDegenerateAtOrigin { .. }
        | CoreError::NotFlat { .. }
        | CoreError::RankDeficientPhi { .. }
        | CoreError::LagrangeViolated { .. }
        | CoreError::AsymmetricCubic { .. }
        | CoreError::NotAContrastCandidate { .. }
        | CoreError::IntegrabilityViolated { .. }
        | CoreError::StencilOutOfDomain { .. }
        | CoreError::UnequalEigenRanks { .. } => CmdError::Precondition(e.to_string()),
        CoreError::NonFinite { .. }
        | CoreError::QuadratureFailure { .. }
        | CoreError::EigenvalueTrackingAmbiguous { .. }
        | CoreError::PathDependence { .. }
        | CoreError::NonConstantPairing { .. }
        | CoreError::NonConstantOffset { .. }
        | CoreError::IllConditionedOverlap { .. }
        | CoreError::SingularF { .. } => CmdError::Numeric(e.to_string()),
    }
}

fn vstr(e: String) -> CmdError {
    CmdError::Validate(e)
}

#[derive(Clone, Copy)]
pub struct RunOptions {
    pub grid: usize,
    pub tol_scale: f64,
    pub fd: FdConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            grid: 4,
            tol_scale: 1.0,
            fd: FdConfig::inner(),
        }
    }
}

pub fn fisher(
    scene: &Scene,
    object: &str,
    opt: RunOptions,
    out_dir: Option<&std::path::Path>,
) -> Result<Report, CmdError> {
    let model = scene.model(object).map_err(vstr)?;
    let mut rep = Report::new("fisher", &scene.name, object);
    let t = |x: f64| x * opt.tol_scale;

    let mut norm = 0.0f64;
    for z in model.chart().grid(opt.grid.min(3)) {
        let v = model.normalization(&z).map_err(classify)?;
        norm = norm.max((v - 1.0).abs());
    }
    rep.check("normalization", "density-normalization", norm, t(1e-8));

    let g = fisher_metric(&model);
    let mut psd = 0.0f64;
    for z in model.chart().grid(opt.grid.min(3)) {
        let eig = nalgebra::SymmetricEigen::new(g.mat_at(&z));
        for ev in eig.eigenvalues.iter() {
            psd = psd.max((-ev).max(0.0));
        }
    }
    rep.check(
        "fisher-positive-semidefinite",
        "score-covariance-psd",
        psd,
        t(1e-10),
    );

    let cubic = model_cubic(&model);
    rep.check(
        "cubic-total-symmetry",
        "third-score-moment-symmetry",
        statgeo::conn::total_symmetry_residual(&cubic, opt.grid.min(3)),
        t(1e-7),
    );

    let bp = model.chart().basepoint().to_vec();
    let gm = g.mat_at(&bp);
    for i in 0..model.dim() {
        for j in i..model.dim() {
            rep.value(&format!("g[{i}][{j}] at basepoint"), gm[(i, j)]);
        }
    }
    let det = gm.determinant();
    rep.value("det g at basepoint", det);
    rep.value("rank at basepoint", g.rank_at(&bp) as f64);
    if let Some(expected) = scene
        .file
        .models
        .get(object)
        .and_then(|spec| spec.expected_rank)
    {
        let rank = g.rank_at(&bp);
        rep.check(
            "fisher-rank",
            "expected-metric-rank",
            (rank as f64 - expected as f64).abs(),
            0.5,
        );
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| CmdError::Numeric(format!("cannot create out dir: {e}")))?;
        let path = dir.join(format!("fisher_{object}.csv"));
        std::fs::write(&path, metric_csv(&g, opt.grid.min(4)))
            .map_err(|e| CmdError::Numeric(format!("cannot write csv: {e}")))?;
        rep.data_files.push(path.display().to_string());
    }
    Ok(rep)
}

pub fn alpha_check(
    scene: &Scene,
    object: &str,
    alphas: &[f64],
    opt: RunOptions,
) -> Result<Report, CmdError> {
    let model = scene.model(object).map_err(vstr)?;
    let mut rep = Report::new("alpha-check", &scene.name, object);
    let t = |x: f64| x * opt.tol_scale;
    for &alpha in alphas {
        let r = alpha_duality_check(&model, alpha, opt.grid.min(3), opt.fd).map_err(classify)?;
        rep.check(
            &format!("alpha-duality[{alpha}]"),
            "dual-connection-compatibility",
            r,
            t(1e-5),
        );
        if alpha == 0.0 {
            let g = fisher_metric(&model);
            let lc = levi_civita(&g, opt.fd);
            let conn0 = alpha_connection(&model, 0.0, opt.grid.min(3)).map_err(classify)?;
            let mut worst = 0.0f64;
            for z in model.chart().grid(2) {
                for k in 0..model.dim() {
                    for i in 0..model.dim() {
                        for j in 0..model.dim() {
                            worst = worst
                                .max((conn0.gamma(k, i, j, &z) - lc.comp(k, i, j).eval(&z)).abs());
                        }
                    }
                }
            }
            rep.check(
                "zero-connection-is-levi-civita",
                "self-dual-connection",
                worst,
                t(1e-6),
            );
        }
    }
    Ok(rep)
}

pub fn codazzi_check(scene: &Scene, object: &str, opt: RunOptions) -> Result<Report, CmdError> {
    let model = scene.model(object).map_err(vstr)?;
    let mut rep = Report::new("codazzi-check", &scene.name, object);
    let t = |x: f64| x * opt.tol_scale;
    let g = fisher_metric(&model);
    let c1 = alpha_connection(&model, 1.0, opt.grid.min(3)).map_err(classify)?;
    let cm1 = alpha_connection(&model, -1.0, opt.grid.min(3)).map_err(classify)?;
    let r = codazzi_report(&g, &c1, &cm1, opt.fd, opt.grid.min(3), t(1e-5)).map_err(classify)?;
    rep.check("torsion-free-primal", "codazzi-conditions", r.torsion_primal, t(1e-5));
    rep.check("torsion-free-dual", "codazzi-conditions", r.torsion_dual, t(1e-5));
    rep.check("cubic-total-symmetry", "codazzi-conditions", r.cubic_symmetry, t(1e-5));
    rep.check(
        "mean-connection-is-levi-civita",
        "codazzi-conditions",
        r.mean_is_levi_civita,
        t(1e-5),
    );
    rep.check(
        "duality-compatibility",
        "dual-connection-compatibility",
        duality_residual(&g, &c1, &cm1, opt.fd, opt.grid.min(3)),
        t(1e-5),
    );
    Ok(rep)
}

pub fn contrast_extract(scene: &Scene, object: &str, opt: RunOptions) -> Result<Report, CmdError> {
    let rho = scene.contrast(object).map_err(vstr)?;
    let mut rep = Report::new("contrast-extract", &scene.name, object);
    let t = |x: f64| x * opt.tol_scale;
    let (dv, dg) = rho.diagonal_residuals(opt.grid.min(3)).map_err(classify)?;
    rep.check("diagonal-vanishing", "contrast-conditions", dv, t(1e-10));
    rep.check("diagonal-gradients", "contrast-conditions", dg, t(1e-8));
    let s = structure_from_contrast(&rho, opt.grid.min(3)).map_err(classify)?;
    rep.value(
        "metric rank at basepoint",
        s.metric.rank_at(rho.chart().basepoint()) as f64,
    );
    let compare = scene
        .file
        .contrasts
        .get(object)
        .and_then(|c| c.compare_model.clone());
    if let Some(model_name) = compare {
        let model = scene.model(&model_name).map_err(vstr)?;
        let g = fisher_metric(&model);
        let mut worst = 0.0f64;
        for z in model.chart().grid(opt.grid.min(3)) {
            worst = worst.max((s.metric.mat_at(&z) - g.mat_at(&z)).abs().max());
        }
        rep.check("metric-matches-fisher", "contrast-induced-metric", worst, t(1e-5));
        let (gp, gd) = s
            .connections
            .as_ref()
            .ok_or_else(|| CmdError::Precondition("extracted metric is degenerate".into()))?;
        let c1 = alpha_connection(&model, 1.0, opt.grid.min(3)).map_err(classify)?;
        let cm1 = alpha_connection(&model, -1.0, opt.grid.min(3)).map_err(classify)?;
        let n = model.dim();
        let mut w1 = 0.0f64;
        let mut w2 = 0.0f64;
        for z in model.chart().grid(2) {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        w1 = w1.max((gp.gamma(k, i, j, &z) - c1.gamma(k, i, j, &z)).abs());
                        w2 = w2.max((gd.gamma(k, i, j, &z) - cm1.gamma(k, i, j, &z)).abs());
                    }
                }
            }
        }
        rep.check(
            "primal-matches-exponential-connection",
            "contrast-induced-connections",
            w1,
            t(1e-4),
        );
        rep.check(
            "dual-matches-mixture-connection",
            "contrast-induced-connections",
            w2,
            t(1e-4),
        );
    }
    Ok(rep)
}

pub fn contrast_build(scene: &Scene, object: &str, opt: RunOptions) -> Result<Report, CmdError> {
    let spec = scene
        .file
        .contrasts
        .get(object)
        .ok_or_else(|| CmdError::Validate(format!("unknown contrast `{object}`")))?;
    let rho = scene.contrast(object).map_err(vstr)?;
    let mut rep = Report::new("contrast-build", &scene.name, object);
    let t = |x: f64| x * opt.tol_scale;

    let (h, cubic) = if let Some(cf) = &spec.construct_from {
        (
            scene.metric(&cf.metric).map_err(vstr)?,
            scene.cubic(&cf.cubic).map_err(vstr)?,
        )
    } else if let Some(sname) = &spec.construct_from_structure {
        let s = scene.structure(sname).map_err(vstr)?;
        (s.pullback_metric(), s.cubic())
    } else {
        return Err(CmdError::Validate(format!(
            "contrast `{object}` is not a constructed weak contrast"
        )));
    };

    let eg = eguchi_report(&rho, &h, &cubic, opt.grid.min(3)).map_err(classify)?;
    rep.check("diagonal-vanishing", "contrast-conditions", eg.diag_value, t(1e-9));
    rep.check("diagonal-gradients", "contrast-conditions", eg.diag_gradient, t(1e-8));
    rep.check("metric-mixed-derivative", "metric-three-ways", eg.metric_mixed, t(1e-7));
    rep.check("metric-left-derivative", "metric-three-ways", eg.metric_left, t(1e-7));
    rep.check("metric-right-derivative", "metric-three-ways", eg.metric_right, t(1e-7));
    rep.check("cubic-identity", "cubic-from-contrast", eg.cubic, t(1e-6));

    if let Some(sname) = &spec.construct_from_structure {
        let s = scene.structure(sname).map_err(vstr)?;
        let points = s.chart().grid(opt.grid.min(3));
        let rel = contrast_relations_check(&s, &rho, &points, opt.fd).map_err(classify)?;
        rep.check("kossowski-minus-half-cubic", "contrast-structure-relations", rel.mixed_left, t(1e-4));
        rep.check("kossowski-plus-half-cubic", "contrast-structure-relations", rel.mixed_right, t(1e-4));
        rep.check("plus-connection-pairing", "contrast-structure-relations", rel.refined_plus, t(1e-4));
        rep.check("minus-connection-pairing", "contrast-structure-relations", rel.refined_minus, t(1e-4));
        rep.check("curvature-third-derivative-plus", "contrast-structure-relations", rel.curvature_plus, t(1e-4));
        rep.check("curvature-third-derivative-minus", "contrast-structure-relations", rel.curvature_minus, t(1e-4));
    }
    Ok(rep)
}

pub fn blowup_probe_cmd(scene: &Scene, object: &str, opt: RunOptions) -> Result<Report, CmdError> {
    let spec = scene
        .file
        .probes
        .get(object)
        .ok_or_else(|| CmdError::Validate(format!("unknown probe `{object}`")))?;
    let h = scene.metric(&spec.metric).map_err(vstr)?;
    let curve: Vec<statgeo::field::Component> = spec
        .curve
        .iter()
        .map(|src| statgeo::field::Component::from_expr(src, &["t"]))
        .collect::<Result<_, _>>()
        .map_err(classify)?;
    let table = dual_blowup_probe(&h, &curve, &spec.t_values).map_err(classify)?;
    let mut rep = Report::new("blowup-probe", &scene.name, object);
    for s in &table.samples {
        rep.value(&format!("ratio at t={}", s.t), s.ratio);
    }
    rep.value("fitted exponent", table.fitted_exponent);
    if let (Some(expect), Some(tol)) = (spec.expect_exponent, spec.exponent_tol) {
        rep.check(
            "divergence-exponent",
            "dual-connection-blowup",
            (table.fitted_exponent - expect).abs(),
            tol * opt.tol_scale,
        );
    }
    if let Some(r) = &spec.expect_ratio {
        let sample = table
            .samples
            .iter()
            .min_by(|a, b| (a.t - r.t).abs().total_cmp(&(b.t - r.t).abs()))
            .ok_or_else(|| CmdError::Numeric("empty probe table".into()))?;
        rep.check(
            &format!("ratio-magnitude at t={}", r.t),
            "dual-connection-blowup",
            (sample.ratio - r.value).abs() / r.value.abs(),
            r.rel_tol * opt.tol_scale,
        );
    }
    Ok(rep)
}

pub fn quasi_codazzi_check(scene: &Scene, object: &str, opt: RunOptions) -> Result<Report, CmdError> {
    let s = scene.structure(object).map_err(vstr)?;
    let mut rep = Report::new("quasi-codazzi-check", &scene.name, object);
    let t = |x: f64| x * opt.tol_scale;
    let r = quasi_codazzi_report(&s, opt.grid, t(1e-5));
    rep.check("relative-torsion-plus", "coherent-tangent-bundle", r.torsion_plus, t(1e-5));
    rep.check("relative-torsion-minus", "coherent-tangent-bundle", r.torsion_minus, t(1e-5));
    rep.check("cubic-total-symmetry", "generalized-cubic-symmetry", r.cubic_symmetry, t(1e-5));
    rep.check("kossowski-identity", "kossowski-compatibility", r.kossowski_identity, t(1e-5));
    rep.check("lagrange-image", "lagrange-subbundle", r.lagrange, t(1e-9));
    rep.check("half-pairing", "half-pairing-identity", r.half_pairing, t(1e-9));
    rep.check(
        "torsion-pairing-symmetric",
        "torsion-pairing-equivalences",
        r.pairing_sym,
        t(1e-6),
    );
    rep.check(
        "torsion-pairing-antisymmetric",
        "torsion-pairing-equivalences",
        r.pairing_anti,
        t(1e-6),
    );
    rep.check(
        "connection-duality",
        "dual-connection-compatibility",
        s.connection_duality_residual(opt.grid),
        t(1e-7),
    );
    rep.check(
        "curvature-duality",
        "curvature-duality",
        s.curvature_duality_residual(opt.grid.min(3), opt.fd),
        t(1e-5),
    );
    let h = s.pullback_metric();
    let nondeg = h.require_nondegenerate_on_grid(opt.grid).is_ok();
    rep.check_bool(
        "condition-implication-pattern",
        "condition-logic",
        r.implications_consistent(nondeg, nondeg),
    );
    rep.value("bundle-map min singular value", s.phi_min_singular());
    Ok(rep)
}

pub fn iso_check(scene: &Scene, object: &str, opt: RunOptions) -> Result<Report, CmdError> {
    let (s1, s2, f) = scene.iso_map(object).map_err(vstr)?;
    let mut rep = Report::new("iso-check", &scene.name, object);
    let t = |x: f64| x * opt.tol_scale;
    let r = isomorphism_check(&f, &s1, &s2, opt.grid.min(3), opt.fd, t(1e-6)).map_err(classify)?;
    rep.check("maps-bundle-map", "isomorphism-conditions", r.maps_phi, t(1e-6));
    rep.check(
        "commutes-with-involution",
        "isomorphism-conditions",
        r.commutes_involution,
        t(1e-6),
    );
    rep.check("fiber-metric-isometry", "isomorphism-conditions", r.isometry, t(1e-6));
    rep.check(
        "connection-equivariance",
        "isomorphism-conditions",
        r.equivariance,
        t(1e-6),
    );
    rep.check("metrics-agree", "isomorphism-invariants", r.metrics_agree, t(1e-7));
    rep.check("cubics-agree", "isomorphism-invariants", r.cubics_agree, t(1e-7));
    rep.check(
        "curvatures-conjugate",
        "isomorphism-invariants",
        r.curvature_conjugate,
        t(1e-5),
    );
    Ok(rep)
}

pub fn reconstruct(
    scene: &Scene,
    object: &str,
    opt: RunOptions,
    out_dir: Option<&std::path::Path>,
) -> Result<Report, CmdError> {
    let spec = scene
        .file
        .atlases
        .get(object)
        .ok_or_else(|| CmdError::Validate(format!("unknown atlas `{object}`")))?;
    let s = scene.structure(&spec.structure).map_err(vstr)?;
    let charts: Vec<(String, statgeo::chart::Chart)> = spec
        .charts
        .iter()
        .map(|c| scene.chart(c).map(|chart| (c.clone(), chart)))
        .collect::<Result<_, _>>()
        .map_err(vstr)?;
    let t = |x: f64| x * opt.tol_scale;
    let atlas =
        build_atlas(&s, &charts, opt.grid.min(4), opt.fd, t(1e-5)).map_err(classify)?;
    let mut rep = Report::new("reconstruct", &scene.name, object);
    for c in &atlas.description.charts {
        rep.check(
            &format!("df-matches-bundle-map[{}]", c.name),
            "embedding-differential",
            c.df_residual,
            t(1e-6),
        );
        rep.check(
            &format!("dz-matches-lift[{}]", c.name),
            "legendre-lift",
            c.dz_residual,
            t(1e-6),
        );
        rep.check(
            &format!("metric-from-embedding[{}]", c.name),
            "embedding-metric",
            c.metric_agreement,
            t(1e-6),
        );
    }
    for tr in &atlas.description.transitions {
        let tag = format!("{}->{}", tr.from, tr.to);
        rep.check(
            &format!("dual-block-constraint[{tag}]"),
            "affine-legendre-constraints",
            tr.report.dual_block_residual,
            t(1e-8),
        );
        rep.check(
            &format!("offset-constraint[{tag}]"),
            "affine-legendre-constraints",
            tr.report.offset_constraint_residual,
            t(1e-8),
        );
        rep.check(
            &format!("transition-map[{tag}]"),
            "transition-fit",
            tr.report.map_residual,
            t(1e-6),
        );
        rep.value(&format!("transition-d[{tag}]"), tr.report.map.d);
    }
    for c in &atlas.description.cocycles {
        rep.check(
            &format!("cocycle[{}|{}|{}]", c.charts[0], c.charts[1], c.charts[2]),
            "transition-cocycle",
            c.residual,
            t(1e-6),
        );
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| CmdError::Numeric(format!("cannot create out dir: {e}")))?;
        let atlas_path = dir.join("atlas.json");
        let json = serde_json::to_string_pretty(&atlas.description)
            .map_err(|e| CmdError::Numeric(format!("atlas serialization: {e}")))?;
        std::fs::write(&atlas_path, json)
            .map_err(|e| CmdError::Numeric(format!("cannot write atlas: {e}")))?;
        rep.data_files.push(atlas_path.display().to_string());
        for c in &atlas.description.charts {
            let csv_path = dir.join(format!("grid_{}.csv", c.name));
            let n = c.basepoint.len();
            let mut csv = String::new();
            let mut header: Vec<String> = (0..n).map(|i| format!("u{i}")).collect();
            header.extend((0..n).map(|i| format!("x{i}")));
            header.extend((0..n).map(|i| format!("p{i}")));
            header.push("z".to_string());
            csv.push_str(&header.join(","));
            csv.push('\n');
            for row in &c.samples {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
                csv.push_str(&cells.join(","));
                csv.push('\n');
            }
            std::fs::write(&csv_path, csv)
                .map_err(|e| CmdError::Numeric(format!("cannot write csv: {e}")))?;
            rep.data_files.push(csv_path.display().to_string());
        }
    }
    Ok(rep)
}

pub fn front_cmd(scene: &Scene, object: &str, opt: RunOptions) -> Result<Report, CmdError> {
    let front = scene.front(object).map_err(vstr)?;
    let built = front.build(scene.policy).map_err(classify)?;
    let s = &built.structure;
    let mut rep = Report::new("front", &scene.name, object);
    let t = |x: f64| x * opt.tol_scale;

    rep.check(
        "lagrange-image",
        "lagrange-subbundle",
        s.lagrange_residual(opt.grid),
        t(1e-9),
    );
    // relative torsions on a grid straddling the singular locus
    let chart = s.chart().clone();
    let grid = chart.grid(5);
    let mut tp = 0.0f64;
    let mut tm = 0.0f64;
    for p in &grid {
        tp = tp.max(s.torsion_plus(0, 1, p).abs().max());
        tm = tm.max(s.torsion_minus(0, 1, p).abs().max());
    }
    rep.check("relative-torsion-plus", "coherent-tangent-bundle", tp, t(1e-6));
    rep.check("relative-torsion-minus", "coherent-tangent-bundle", tm, t(1e-6));
    rep.check(
        "half-pairing",
        "half-pairing-identity",
        s.half_pairing_residual(opt.grid),
        t(1e-9),
    );
    if let Some(expected) = scene.front_expected_h(object).map_err(vstr)? {
        let h = s.pullback_metric();
        let mut worst = 0.0f64;
        for p in &grid {
            worst = worst.max((h.mat_at(p)[(0, 0)] - expected.eval(p)).abs());
        }
        rep.check("metric-profile", "front-pullback-metric", worst, t(1e-6));
    }
    rep.value("bundle-map min singular value", s.phi_min_singular());
    Ok(rep)
}

pub fn metric_csv(h: &statgeo::metric::MetricField, grid_m: usize) -> String {
    let n = h.dim();
    let mut out = String::new();
    let mut header: Vec<String> = (0..n).map(|i| format!("u{i}")).collect();
    for i in 0..n {
        for j in 0..n {
            header.push(format!("g{i}{j}"));
        }
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for p in h.chart().grid(grid_m) {
        let m: DMatrix<f64> = h.mat_at(&p);
        let mut cells: Vec<String> = p.iter().map(|v| format!("{v:.17e}")).collect();
        for i in 0..n {
            for j in 0..n {
                cells.push(format!("{:.17e}", m[(i, j)]));
            }
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
