//! Deterministic generators of random smooth geometric data, used by the
//! randomized verification suites. Everything is seeded; two runs with the
//! same seed produce identical fields.

use crate::chart::Chart;
use crate::conn::{connections_from_cubic, AffineConnection};
use crate::error::Result;
use crate::fd::FdConfig;
use crate::field::{Component, MatrixField, Symmetry, TensorField};
use crate::metric::MetricField;
use crate::qcs::{canonical_from_codazzi, QuasiCodazziStructure, StructurePolicy};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn chart2() -> Chart {
    Chart::new(&["u", "v"], &[[-0.8, 0.8], [-0.8, 0.8]], &[0.1, 0.05]).unwrap()
}

/// A smooth scalar of bounded amplitude: `amp * sin(a u + b v + c)` plus a
/// constant, with coefficients drawn from the rng.
fn smooth_scalar(rng: &mut ChaCha8Rng, amp: f64) -> impl Fn(&[f64]) -> f64 + Send + Sync {
    let a: f64 = rng.gen_range(-1.0..1.0);
    let b: f64 = rng.gen_range(-1.0..1.0);
    let c: f64 = rng.gen_range(-3.0..3.0);
    let d: f64 = rng.gen_range(-amp..amp);
    move |p: &[f64]| {
        let v = if p.len() > 1 { p[1] } else { 0.0 };
        d + amp * (a * p[0] + b * v + c).sin()
    }
}

/// Uniformly positive-definite random metric: a constant SPD core plus a
/// small smooth symmetric perturbation.
pub fn random_metric(chart: &Chart, seed: u64) -> MetricField {
    let n = chart.dim();
    let mut r = rng(seed);
    let m = DMatrix::<f64>::from_fn(n, n, |_, _| r.gen_range(-0.5..0.5));
    let core = &m * m.transpose() + DMatrix::<f64>::identity(n, n) * (n as f64);
    let mut perts: Vec<Box<dyn Fn(&[f64]) -> f64 + Send + Sync>> = Vec::new();
    for _ in 0..n * n {
        perts.push(Box::new(smooth_scalar(&mut r, 0.15)));
    }
    MetricField::from_matrix_fn(chart.clone(), move |p| {
        let mut g = core.clone();
        for i in 0..n {
            for j in i..n {
                let v = perts[i * n + j](p);
                g[(i, j)] += v;
                if i != j {
                    g[(j, i)] += v;
                }
            }
        }
        g
    })
    .expect("symmetric by construction")
}

/// A rank-deficient symmetric field: `J(u)ᵀ D(u) J(u)` with a diagonal factor
/// vanishing along a hyperplane through the box.
pub fn random_rank_deficient_metric(chart: &Chart, seed: u64) -> MetricField {
    let n = chart.dim();
    let mut r = rng(seed);
    let j = DMatrix::<f64>::from_fn(n, n, |a, b| {
        if a == b {
            1.0
        } else {
            r.gen_range(-0.3..0.3)
        }
    });
    let offset: f64 = r.gen_range(-0.2..0.2);
    MetricField::from_matrix_fn(chart.clone(), move |p| {
        let mut d = DMatrix::<f64>::identity(n, n);
        // first diagonal entry vanishes quadratically on u_1 = offset
        d[(0, 0)] = (p[0] - offset) * (p[0] - offset);
        j.transpose() * d * &j
    })
    .expect("symmetric by construction")
}

/// Totally symmetric random cubic tensor with smooth coefficients.
pub fn random_cubic(chart: &Chart, seed: u64, amp: f64) -> TensorField {
    let n = chart.dim();
    let mut r = rng(seed ^ 0x9e3779b97f4a7c15);
    // coefficients indexed by sorted index triples so symmetry is exact
    let mut coef: std::collections::BTreeMap<[usize; 3], (f64, f64, f64)> =
        std::collections::BTreeMap::new();
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                coef.insert(
                    [i, j, k],
                    (
                        r.gen_range(-amp..amp),
                        r.gen_range(-1.0..1.0),
                        r.gen_range(-amp..amp),
                    ),
                );
            }
        }
    }
    let mut comps = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut key = [i, j, k];
                key.sort_unstable();
                let (c0, freq, c1) = *coef.get(&key).unwrap();
                comps.push(Component::func(move |p: &[f64]| {
                    let v = if p.len() > 1 { p[1] } else { 0.0 };
                    c0 + c1 * (freq * (p[0] + 0.7 * v)).cos()
                }));
            }
        }
    }
    TensorField::new(chart.clone(), 0, 3, comps, vec![Symmetry::Total]).expect("count")
}

/// Random Codazzi data: a positive metric, a totally symmetric cubic, and
/// the mutually dual torsion-free pair they induce.
pub fn random_codazzi(
    chart: &Chart,
    seed: u64,
) -> Result<(MetricField, TensorField, AffineConnection, AffineConnection)> {
    let h = random_metric(chart, seed);
    let c = random_cubic(chart, seed.wrapping_add(1), 0.4);
    let (g, gd) = connections_from_cubic(&h, &c, FdConfig::inner(), 4, 1e-9)?;
    Ok((h, c, g, gd))
}

/// Invertible smooth gauge block: identity plus a small smooth matrix.
pub fn random_gauge(chart: &Chart, seed: u64) -> MatrixField {
    let n = chart.dim();
    let mut r = rng(seed ^ 0x5bd1e995);
    let mut perts: Vec<Box<dyn Fn(&[f64]) -> f64 + Send + Sync>> = Vec::new();
    for _ in 0..n * n {
        perts.push(Box::new(smooth_scalar(&mut r, 0.12)));
    }
    MatrixField::from_matrix_fn(n, n, move |p| {
        DMatrix::from_fn(n, n, |a, b| {
            let base = if a == b { 1.0 } else { 0.0 };
            base + perts[a * n + b](p)
        })
    })
}

/// A random quasi-Codazzi structure: the canonical structure of random
/// Codazzi data, pushed through random frame gauges on both eigenbundles.
/// Gauging preserves every invariant, so the result is a genuine structure
/// with nontrivial pairing and connection forms.
pub fn random_structure(chart: &Chart, seed: u64) -> Result<QuasiCodazziStructure> {
    let (h, _c, g, gd) = random_codazzi(chart, seed)?;
    let s = canonical_from_codazzi(&h, &g, Some(&gd), StructurePolicy::default(), 1e-5)?;
    let gp = random_gauge(chart, seed.wrapping_add(11));
    let gm = random_gauge(chart, seed.wrapping_add(23));
    s.gauge_transform(&gp, &gm)
}

/// How to perturb the eigenbundle connections of a canonical structure while
/// keeping the pairing-duality between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TorsionMode {
    /// Perturbation chosen so the generalized cubic stays totally symmetric
    /// (the symmetric torsion pairing vanishes) while everything else breaks.
    KeepCubicSymmetry,
    /// Perturbation chosen so the Kossowski identity keeps holding (the
    /// antisymmetric torsion pairing vanishes) while everything else breaks.
    KeepKossowski,
    /// Unstructured perturbation; generically all four conditions fail.
    Generic,
}

/// Canonical structure of random Codazzi data with both connection forms
/// perturbed as `W_i += h^{-1} K_i`, `Θ_i = -W_iᵀ` (duality preserved since
/// the pairing is the identity). Antisymmetric `K_i` kill the symmetric
/// torsion pairing; symmetric `K_i` kill the antisymmetric one.
pub fn structure_with_torsion(
    chart: &Chart,
    seed: u64,
    mode: TorsionMode,
) -> Result<QuasiCodazziStructure> {
    let (h, _c, g, gd) = random_codazzi(chart, seed)?;
    let s = canonical_from_codazzi(&h, &g, Some(&gd), StructurePolicy::default(), 1e-5)?;
    let n = chart.dim();
    let mut r = rng(seed ^ 0xabcdef);
    let mut ks: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let raw = DMatrix::<f64>::from_fn(n, n, |_, _| r.gen_range(0.2..0.6));
        let k = match mode {
            TorsionMode::KeepCubicSymmetry => (&raw - raw.transpose()) * 0.5,
            TorsionMode::KeepKossowski => (&raw + raw.transpose()) * 0.5,
            TorsionMode::Generic => raw,
        };
        ks.push(k);
    }
    let w_forms: Vec<MatrixField> = (0..n)
        .map(|i| {
            let base = s.conn_plus().forms[i].clone();
            let h = h.clone();
            let k = ks[i].clone();
            MatrixField::from_matrix_fn(n, n, move |p| {
                let d = match h.inverse_at(p) {
                    Ok(hinv) => hinv * &k,
                    Err(_) => DMatrix::from_element(n, n, f64::NAN),
                };
                base.eval_mat(p) + d
            })
        })
        .collect();
    let theta_forms: Vec<MatrixField> = w_forms
        .iter()
        .map(|w| {
            let w = w.clone();
            MatrixField::from_matrix_fn(n, n, move |p| -w.eval_mat(p).transpose())
        })
        .collect();
    QuasiCodazziStructure::new(
        chart.clone(),
        MatrixField::identity(n),
        s.phi_plus().clone(),
        s.phi_minus().clone(),
        crate::qcs::BundleConnection::from_forms(w_forms),
        crate::qcs::BundleConnection::from_forms(theta_forms),
        StructurePolicy::default(),
    )
}

/// Adds an artificial torsion to a connection: `Γ^k_{ij} += t^k_{ij}` with an
/// antisymmetric (in i, j) constant perturbation.
pub fn torsion_perturbed(gamma: &AffineConnection, seed: u64, amp: f64) -> AffineConnection {
    let n = gamma.dim();
    let mut r = rng(seed ^ 0xdeadbeef);
    let mut t = vec![0.0f64; n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in (i + 1)..n {
                let v = r.gen_range(0.5 * amp..amp);
                t[(k * n + i) * n + j] = v;
                t[(k * n + j) * n + i] = -v;
            }
        }
    }
    let gamma = gamma.clone();
    AffineConnection::from_fn(gamma.chart().clone(), move |k, i, j| {
        let gamma = gamma.clone();
        let tv = t[(k * n + i) * n + j];
        Component::func(move |p| gamma.gamma(k, i, j, p) + tv)
    })
}
