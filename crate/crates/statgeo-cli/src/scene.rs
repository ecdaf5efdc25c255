//! Scene files: named geometric objects with expression components and
//! cross-references, validated eagerly and in full.
//!
//! A scene is JSON with sections of named objects. Components are expression
//! strings over the owning chart's coordinate names (two-point functions use
//! `p_<name>` / `q_<name>`; model log-densities use `x` plus the parameter
//! names; probe curves use `t`). Connection forms for bundle structures are
//! given in the frame adapted to the eigen-splitting, direction-major.

use serde::Deserialize;
use statgeo::bundle::ParaHermitianBundle;
use statgeo::chart::Chart;
use statgeo::conn::AffineConnection;
use statgeo::contrast::{kl_contrast, weak_contrast_from, TwoPointFunction};
use statgeo::field::{Component, MatrixField, Symmetry, TensorField};
use statgeo::front::{FrontConfig, FrontSurface};
use statgeo::metric::MetricField;
use statgeo::model::{SampleSpace, StatisticalModel};
use statgeo::qcs::{
    canonical_from_codazzi, dual_bundle_connection, BundleConnection, BundleMapField,
    QuasiCodazziStructure, StructurePolicy,
};
use std::collections::BTreeMap;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub version: String,
    /// Default finite-difference configuration for derived fields.
    #[serde(default)]
    pub fd: Option<FdSpec>,
    #[serde(default)]
    pub charts: BTreeMap<String, ChartSpec>,
    #[serde(default)]
    pub metrics: BTreeMap<String, MetricSpec>,
    #[serde(default)]
    pub cubics: BTreeMap<String, CubicSpec>,
    #[serde(default)]
    pub connections: BTreeMap<String, ConnectionSpec>,
    #[serde(default)]
    pub models: BTreeMap<String, ModelSpec>,
    #[serde(default)]
    pub contrasts: BTreeMap<String, ContrastSpec>,
    #[serde(default)]
    pub bundles: BTreeMap<String, BundleSpec>,
    #[serde(default)]
    pub structures: BTreeMap<String, StructureSpec>,
    #[serde(default)]
    pub probes: BTreeMap<String, ProbeSpec>,
    #[serde(default)]
    pub fronts: BTreeMap<String, FrontSpec>,
    #[serde(default)]
    pub isomorphisms: BTreeMap<String, IsoSpec>,
    #[serde(default)]
    pub atlases: BTreeMap<String, AtlasSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdSpec {
    pub step: f64,
    #[serde(default)]
    pub scheme: Option<String>, // central2 | central4
    #[serde(default)]
    pub richardson: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub names: Vec<String>,
    #[serde(rename = "box")]
    pub box_intervals: Vec<[f64; 2]>,
    pub basepoint: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub chart: String,
    pub components: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubicSpec {
    pub chart: String,
    pub components: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionSpec {
    pub chart: String,
    /// n^3 strings, layout `gamma[k][i][j]` flattened k-major.
    pub gamma: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub chart: String,
    pub space: SpaceSpec,
    pub logdensity: String,
    #[serde(default)]
    pub expected_rank: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub kind: String, // finite | interval | real_line
    #[serde(default)]
    pub points: Option<Vec<f64>>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub nodes: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastSpec {
    #[serde(default)]
    pub chart: Option<String>,
    /// Expression in `p_*` / `q_*` variables.
    #[serde(default)]
    pub expression: Option<String>,
    /// Build the relative-entropy contrast of a model.
    #[serde(default)]
    pub kl_of_model: Option<String>,
    /// Build a weak contrast function from named (metric, cubic).
    #[serde(default)]
    pub construct_from: Option<ConstructFrom>,
    /// Build a weak contrast function from a structure's (h, C).
    #[serde(default)]
    pub construct_from_structure: Option<String>,
    /// For extraction commands: compare against this model's geometry.
    #[serde(default)]
    pub compare_model: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructFrom {
    pub metric: String,
    pub cubic: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleSpec {
    pub chart: String,
    /// 2n x 2n expression strings, row-major.
    pub tau: Vec<String>,
    pub involution: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSpec {
    #[serde(default)]
    pub bundle: Option<String>,
    /// 2n x n expression strings in the bundle's ambient frame, row-major.
    #[serde(default)]
    pub phi: Option<Vec<String>>,
    /// Connection forms on E+ in the adapted frame: per direction, an
    /// n x n block row-major; directions concatenated.
    #[serde(default)]
    pub plus_forms: Option<Vec<String>>,
    #[serde(default)]
    pub minus_forms: Option<Vec<String>>,
    #[serde(default)]
    pub minus_dual_of_plus: Option<bool>,
    /// Alternative: the canonical structure of classical Codazzi data.
    #[serde(default)]
    pub canonical_from: Option<CanonicalFrom>,
    /// Alternative: the structure of a wavefront.
    #[serde(default)]
    pub front: Option<String>,
    /// Optional frame gauge applied after construction.
    #[serde(default)]
    pub gauge: Option<GaugeSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanonicalFrom {
    pub metric: String,
    pub connection: String,
    #[serde(default)]
    pub dual: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeSpec {
    pub plus: Vec<String>,
    pub minus: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub metric: String,
    /// Curve components as expressions in `t`.
    pub curve: Vec<String>,
    pub t_values: Vec<f64>,
    #[serde(default)]
    pub expect_exponent: Option<f64>,
    #[serde(default)]
    pub exponent_tol: Option<f64>,
    #[serde(default)]
    pub expect_ratio: Option<RatioSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioSpec {
    pub t: f64,
    pub value: f64,
    pub rel_tol: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontSpec {
    pub chart: String,
    pub map: [String; 3],
    #[serde(default)]
    pub expected_h_uu: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsoSpec {
    pub from: String,
    #[serde(default)]
    pub to: Option<String>,
    /// When set, the target is the canonical model and F the explicit map.
    #[serde(default)]
    pub canonical: Option<bool>,
    #[serde(default)]
    pub f_plus: Option<Vec<String>>,
    #[serde(default)]
    pub f_minus: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtlasSpec {
    pub structure: String,
    pub charts: Vec<String>,
}

/// A parsed, fully validated scene.
pub struct Scene {
    pub name: String,
    pub file: SceneFile,
    pub charts: BTreeMap<String, Chart>,
    pub policy: StructurePolicy,
}

pub fn parse_errors_to_string(errors: &[String]) -> String {
    let mut out = String::from("scene validation failed:\n");
    for e in errors {
        out.push_str("  - ");
        out.push_str(e);
        out.push('\n');
    }
    out
}

impl Scene {
    /// Parses and validates; all violations are collected and reported
    /// together rather than stopping at the first.
    pub fn load(
        text: &str,
        name: &str,
        mut policy: StructurePolicy,
        fd_override: Option<f64>,
    ) -> Result<Scene, Vec<String>> {
        let file: SceneFile =
            serde_json::from_str(text).map_err(|e| vec![format!("json parse: {e}")])?;
        let mut errors: Vec<String> = Vec::new();
        if file.version != "1" {
            errors.push(format!("unsupported scene version `{}`", file.version));
        }
        if let Some(fd) = &file.fd {
            let scheme = match fd.scheme.as_deref() {
                None | Some("central4") => statgeo::fd::Scheme::Central4,
                Some("central2") => statgeo::fd::Scheme::Central2,
                Some(other) => {
                    errors.push(format!("unknown fd scheme `{other}`"));
                    statgeo::fd::Scheme::Central4
                }
            };
            if !(fd.step > 0.0) {
                errors.push("fd step must be positive".into());
            }
            policy.fd = statgeo::fd::FdConfig::new(fd.step, scheme, fd.richardson.unwrap_or(true));
        }
        if let Some(step) = fd_override {
            policy.fd = statgeo::fd::FdConfig::new(step, statgeo::fd::Scheme::Central4, true);
        }
        let mut charts = BTreeMap::new();
        for (name, spec) in &file.charts {
            let refs: Vec<&str> = spec.names.iter().map(|s| s.as_str()).collect();
            match Chart::new(&refs, &spec.box_intervals, &spec.basepoint) {
                Ok(c) => {
                    charts.insert(name.clone(), c);
                }
                Err(e) => errors.push(format!("chart {name}: {e}")),
            }
        }
        let scene = Scene {
            name: name.to_string(),
            file,
            charts,
            policy,
        };
        scene.validate(&mut errors);
        if errors.is_empty() {
            Ok(scene)
        } else {
            Err(errors)
        }
    }

    fn validate(&self, errors: &mut Vec<String>) {
        // Every object is built once at load; construction runs the full
        // invariant checks of the core types.
        for name in self.file.metrics.keys() {
            if let Err(e) = self.metric(name) {
                errors.push(format!("metric {name}: {e}"));
            }
        }
        for name in self.file.cubics.keys() {
            if let Err(e) = self.cubic(name) {
                errors.push(format!("cubic {name}: {e}"));
            }
        }
        for name in self.file.connections.keys() {
            if let Err(e) = self.connection(name) {
                errors.push(format!("connection {name}: {e}"));
            }
        }
        for name in self.file.models.keys() {
            if let Err(e) = self.model(name) {
                errors.push(format!("model {name}: {e}"));
            }
        }
        for name in self.file.bundles.keys() {
            if let Err(e) = self.bundle(name) {
                errors.push(format!("bundle {name}: {e}"));
            }
        }
        for name in self.file.fronts.keys() {
            if let Err(e) = self.front(name) {
                errors.push(format!("front {name}: {e}"));
            }
        }
        for name in self.file.structures.keys() {
            if let Err(e) = self.structure(name) {
                errors.push(format!("structure {name}: {e}"));
            }
        }
        for name in self.file.contrasts.keys() {
            if let Err(e) = self.contrast(name) {
                errors.push(format!("contrast {name}: {e}"));
            }
        }
        for (name, spec) in &self.file.probes {
            if let Err(e) = self.metric(&spec.metric) {
                errors.push(format!("probe {name}: metric {}: {e}", spec.metric));
            }
        }
        for (name, spec) in &self.file.isomorphisms {
            if let Err(e) = self.structure(&spec.from) {
                errors.push(format!("isomorphism {name}: from {}: {e}", spec.from));
            }
            if let Some(to) = &spec.to {
                if let Err(e) = self.structure(to) {
                    errors.push(format!("isomorphism {name}: to {to}: {e}"));
                }
            }
        }
        for (name, spec) in &self.file.atlases {
            if !self.file.structures.contains_key(&spec.structure) {
                errors.push(format!(
                    "atlas {name}: unknown structure `{}`",
                    spec.structure
                ));
            }
            for c in &spec.charts {
                if !self.charts.contains_key(c) {
                    errors.push(format!("atlas {name}: unknown chart `{c}`"));
                }
            }
        }
    }

    pub fn chart(&self, name: &str) -> Result<Chart, String> {
        self.charts
            .get(name)
            .cloned()
            .ok_or_else(|| format!("unknown chart `{name}`"))
    }

    fn chart_vars(chart: &Chart) -> Vec<String> {
        chart.names().iter().map(|s| s.to_string()).collect()
    }

    fn components(
        chart: &Chart,
        sources: &[String],
        what: &str,
    ) -> Result<Vec<Component>, String> {
        let vars = Self::chart_vars(chart);
        let refs: Vec<&str> = vars.iter().map(|s| s.as_str()).collect();
        sources
            .iter()
            .enumerate()
            .map(|(idx, s)| {
                Component::from_expr(s, &refs).map_err(|e| format!("{what}[{idx}]: {e}"))
            })
            .collect()
    }

    pub fn metric(&self, name: &str) -> Result<MetricField, String> {
        let spec = self
            .file
            .metrics
            .get(name)
            .ok_or_else(|| format!("unknown metric `{name}`"))?;
        let chart = self.chart(&spec.chart)?;
        let n = chart.dim();
        if spec.components.len() != n * n {
            return Err(format!(
                "metric `{name}` needs {} components, has {}",
                n * n,
                spec.components.len()
            ));
        }
        let comps = Self::components(&chart, &spec.components, "components")?;
        MetricField::from_components(chart, comps).map_err(|e| e.to_string())
    }

    pub fn cubic(&self, name: &str) -> Result<TensorField, String> {
        let spec = self
            .file
            .cubics
            .get(name)
            .ok_or_else(|| format!("unknown cubic `{name}`"))?;
        let chart = self.chart(&spec.chart)?;
        let n = chart.dim();
        if spec.components.len() != n * n * n {
            return Err(format!(
                "cubic `{name}` needs {} components, has {}",
                n * n * n,
                spec.components.len()
            ));
        }
        let comps = Self::components(&chart, &spec.components, "components")?;
        let t = TensorField::new(chart, 0, 3, comps, vec![Symmetry::Total])
            .map_err(|e| e.to_string())?;
        t.validate_symmetry(5, 1e-9).map_err(|e| e.to_string())?;
        Ok(t)
    }

    pub fn connection(&self, name: &str) -> Result<AffineConnection, String> {
        let spec = self
            .file
            .connections
            .get(name)
            .ok_or_else(|| format!("unknown connection `{name}`"))?;
        let chart = self.chart(&spec.chart)?;
        let n = chart.dim();
        if spec.gamma.len() != n * n * n {
            return Err(format!(
                "connection `{name}` needs {} symbols, has {}",
                n * n * n,
                spec.gamma.len()
            ));
        }
        let comps = Self::components(&chart, &spec.gamma, "gamma")?;
        AffineConnection::new(chart, comps).map_err(|e| e.to_string())
    }

    pub fn model(&self, name: &str) -> Result<StatisticalModel, String> {
        let spec = self
            .file
            .models
            .get(name)
            .ok_or_else(|| format!("unknown model `{name}`"))?;
        let chart = self.chart(&spec.chart)?;
        let space = match spec.space.kind.as_str() {
            "finite" => SampleSpace::Finite(
                spec.space
                    .points
                    .clone()
                    .ok_or("finite space needs points")?,
            ),
            "interval" => SampleSpace::Interval {
                a: spec.space.a.ok_or("interval needs a")?,
                b: spec.space.b.ok_or("interval needs b")?,
                nodes: spec.space.nodes.unwrap_or(64),
            },
            "real_line" => SampleSpace::RealLine {
                nodes: spec.space.nodes.unwrap_or(64),
            },
            other => return Err(format!("unknown sample space kind `{other}`")),
        };
        let mut vars = vec!["x".to_string()];
        vars.extend(Self::chart_vars(&chart));
        let refs: Vec<&str> = vars.iter().map(|s| s.as_str()).collect();
        let l = Component::from_expr(&spec.logdensity, &refs).map_err(|e| e.to_string())?;
        StatisticalModel::new(space, l, chart).map_err(|e| e.to_string())
    }

    pub fn contrast(&self, name: &str) -> Result<TwoPointFunction, String> {
        let spec = self
            .file
            .contrasts
            .get(name)
            .ok_or_else(|| format!("unknown contrast `{name}`"))?;
        if let Some(expr) = &spec.expression {
            let chart_name = spec
                .chart
                .as_ref()
                .ok_or("expression contrast needs a chart")?;
            let chart = self.chart(chart_name)?;
            return TwoPointFunction::from_expr(chart, expr, 4).map_err(|e| e.to_string());
        }
        if let Some(model) = &spec.kl_of_model {
            let m = self.model(model)?;
            let rho = kl_contrast(&m);
            rho.require_diagonal_conditions(3)
                .map_err(|e| e.to_string())?;
            return Ok(rho);
        }
        if let Some(cf) = &spec.construct_from {
            let h = self.metric(&cf.metric)?;
            let c = self.cubic(&cf.cubic)?;
            return weak_contrast_from(&h, &c, 4, 1e-9).map_err(|e| e.to_string());
        }
        if let Some(sname) = &spec.construct_from_structure {
            let s = self.structure(sname)?;
            let h = s.pullback_metric();
            let c = s.cubic();
            return weak_contrast_from(&h, &c, 4, 1e-6).map_err(|e| e.to_string());
        }
        Err(format!("contrast `{name}` specifies no construction"))
    }

    pub fn bundle(&self, name: &str) -> Result<ParaHermitianBundle, String> {
        let spec = self
            .file
            .bundles
            .get(name)
            .ok_or_else(|| format!("unknown bundle `{name}`"))?;
        let chart = self.chart(&spec.chart)?;
        let n = chart.dim();
        let r = 2 * n;
        if spec.tau.len() != r * r || spec.involution.len() != r * r {
            return Err(format!("bundle `{name}` needs {}x{} tau and involution", r, r));
        }
        let tau_comps = Self::components(&chart, &spec.tau, "tau")?;
        let inv_comps = Self::components(&chart, &spec.involution, "involution")?;
        let tau = MatrixField::new(r, r, tau_comps);
        let invol = MatrixField::new(r, r, inv_comps);
        ParaHermitianBundle::new(chart, tau, invol).map_err(|e| e.to_string())
    }

    pub fn front(&self, name: &str) -> Result<FrontSurface, String> {
        let spec = self
            .file
            .fronts
            .get(name)
            .ok_or_else(|| format!("unknown front `{name}`"))?;
        let chart = self.chart(&spec.chart)?;
        let vars = Self::chart_vars(&chart);
        let refs: Vec<&str> = vars.iter().map(|s| s.as_str()).collect();
        let map = [
            Component::from_expr(&spec.map[0], &refs).map_err(|e| e.to_string())?,
            Component::from_expr(&spec.map[1], &refs).map_err(|e| e.to_string())?,
            Component::from_expr(&spec.map[2], &refs).map_err(|e| e.to_string())?,
        ];
        FrontSurface::new(chart, map, FrontConfig::default()).map_err(|e| e.to_string())
    }

    pub fn front_expected_h(&self, name: &str) -> Result<Option<Component>, String> {
        let spec = self
            .file
            .fronts
            .get(name)
            .ok_or_else(|| format!("unknown front `{name}`"))?;
        match &spec.expected_h_uu {
            None => Ok(None),
            Some(src) => {
                let chart = self.chart(&spec.chart)?;
                let vars = Self::chart_vars(&chart);
                let refs: Vec<&str> = vars.iter().map(|s| s.as_str()).collect();
                Component::from_expr(src, &refs)
                    .map(Some)
                    .map_err(|e| e.to_string())
            }
        }
    }

    pub fn structure(&self, name: &str) -> Result<QuasiCodazziStructure, String> {
        let spec = self
            .file
            .structures
            .get(name)
            .ok_or_else(|| format!("unknown structure `{name}`"))?;
        let mut built: Option<QuasiCodazziStructure> = None;

        if let Some(cf) = &spec.canonical_from {
            let h = self.metric(&cf.metric)?;
            let conn = self.connection(&cf.connection)?;
            let dual = match &cf.dual {
                Some(d) => Some(self.connection(d)?),
                None => None,
            };
            built = Some(
                canonical_from_codazzi(&h, &conn, dual.as_ref(), self.policy, 1e-5)
                    .map_err(|e| e.to_string())?,
            );
        }
        if let Some(front_name) = &spec.front {
            if built.is_some() {
                return Err(format!("structure `{name}` has conflicting constructions"));
            }
            let front = self.front(front_name)?;
            built = Some(
                front
                    .build(self.policy)
                    .map_err(|e| e.to_string())?
                    .structure,
            );
        }
        if let Some(bundle_name) = &spec.bundle {
            if built.is_some() {
                return Err(format!("structure `{name}` has conflicting constructions"));
            }
            let bundle = self.bundle(bundle_name)?;
            let chart = bundle.chart().clone();
            let n = chart.dim();
            let split = bundle.eigen_split(4).map_err(|e| e.to_string())?;
            let phi_src = spec
                .phi
                .as_ref()
                .ok_or_else(|| format!("structure `{name}` needs phi"))?;
            if phi_src.len() != 2 * n * n {
                return Err(format!(
                    "structure `{name}` needs {} phi entries",
                    2 * n * n
                ));
            }
            let phi_comps = Self::components(&chart, phi_src, "phi")?;
            let phi_raw = MatrixField::new(2 * n, n, phi_comps);
            let (phi_plus, phi_minus) = split.adapt_map(&phi_raw);
            let pairing = split.pairing(&bundle);
            let forms = |src: &Vec<String>, what: &str| -> Result<BundleConnection, String> {
                if src.len() != n * n * n {
                    return Err(format!(
                        "structure `{name}`: {what} needs {} entries",
                        n * n * n
                    ));
                }
                let mut out = Vec::with_capacity(n);
                for dir in 0..n {
                    let block: Vec<String> =
                        src[dir * n * n..(dir + 1) * n * n].to_vec();
                    let comps = Self::components(&chart, &block, what)?;
                    out.push(MatrixField::new(n, n, comps));
                }
                Ok(BundleConnection::from_forms(out))
            };
            let plus = forms(
                spec.plus_forms
                    .as_ref()
                    .ok_or_else(|| format!("structure `{name}` needs plus_forms"))?,
                "plus_forms",
            )?;
            let minus = if spec.minus_dual_of_plus.unwrap_or(false) {
                dual_bundle_connection(&pairing, &plus, self.policy.fd)
            } else {
                forms(
                    spec.minus_forms
                        .as_ref()
                        .ok_or_else(|| format!("structure `{name}` needs minus_forms or minus_dual_of_plus"))?,
                    "minus_forms",
                )?
            };
            built = Some(
                QuasiCodazziStructure::new(
                    chart, pairing, phi_plus, phi_minus, plus, minus, self.policy,
                )
                .map_err(|e| e.to_string())?,
            );
        }

        let mut s = built.ok_or_else(|| format!("structure `{name}` specifies no construction"))?;
        if let Some(g) = &spec.gauge {
            let chart = s.chart().clone();
            let n = chart.dim();
            if g.plus.len() != n * n || g.minus.len() != n * n {
                return Err(format!("structure `{name}`: gauge blocks must be {n}x{n}"));
            }
            let gp = MatrixField::new(n, n, Self::components(&chart, &g.plus, "gauge.plus")?);
            let gm = MatrixField::new(n, n, Self::components(&chart, &g.minus, "gauge.minus")?);
            s = s.gauge_transform(&gp, &gm).map_err(|e| e.to_string())?;
        }
        Ok(s)
    }

    pub fn iso_map(
        &self,
        name: &str,
    ) -> Result<(QuasiCodazziStructure, QuasiCodazziStructure, BundleMapField), String> {
        let spec = self
            .file
            .isomorphisms
            .get(name)
            .ok_or_else(|| format!("unknown isomorphism `{name}`"))?;
        let s1 = self.structure(&spec.from)?;
        if spec.canonical.unwrap_or(false) {
            let (target, f) = statgeo::qcs::canonical_model_and_iso(&s1, 4)
                .map_err(|e| e.to_string())?;
            return Ok((s1, target, f));
        }
        let to = spec
            .to
            .as_ref()
            .ok_or("isomorphism needs `to` or `canonical: true`")?;
        let s2 = self.structure(to)?;
        let n = s1.dim();
        let chart = s1.chart().clone();
        let fp = MatrixField::new(
            n,
            n,
            Self::components(
                &chart,
                spec.f_plus
                    .as_ref()
                    .ok_or("explicit isomorphism needs f_plus")?,
                "f_plus",
            )?,
        );
        let fm = MatrixField::new(
            n,
            n,
            Self::components(
                &chart,
                spec.f_minus
                    .as_ref()
                    .ok_or("explicit isomorphism needs f_minus")?,
                "f_minus",
            )?,
        );
        Ok((s1, s2, BundleMapField::block_diagonal(&fp, &fm)))
    }
}
