//! Reconstruction of quasi-Hessian data from a quasi-Codazzi structure with
//! dually flat connections: per-chart Lagrange embeddings obtained by
//! integrating the bundle map in a normalized parallel frame, Legendre lifts,
//! and recovery of the affine transition maps gluing the charts.
//!
//! The embedding components and the lift are anchored to zero at each chart
//! basepoint; the resulting constant ambiguities are exactly the offset
//! freedom of an affine Legendre equivalence, and the transitions absorb
//! them. The transition constraints `A' = (Aᵀ)⁻¹` and `b' = A'c` are never
//! imposed during fitting — they are recovered and asserted.

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::fd::{self, FdConfig};
use crate::frame::{normalize_dual_pairing, parallel_frame, ParallelFrame, CELLS_PER_AXIS};
use crate::qcs::{quasi_codazzi_report, QuasiCodazziStructure};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const INTEGRABILITY_TOL: f64 = 1e-5;
pub const EMBEDDING_TOL: f64 = 1e-6;
pub const OFFSET_TOL: f64 = 1e-6;
pub const CONDITION_LIMIT: f64 = 1e6;

/// A chart realized inside the doubled affine space: `u ↦ (x(u), p(u))` with
/// the Legendre lift `z(u)` satisfying `dz = Σ p_i dx_i`. Evaluations are
/// staircase integrations from the basepoint, memoized per point.
pub struct LagrangeEmbedding {
    structure: QuasiCodazziStructure,
    frame: ParallelFrame,
    chart: Chart,
    memo: std::sync::Mutex<
        std::collections::HashMap<Vec<u64>, (DVector<f64>, DVector<f64>, f64)>,
    >,
}

impl LagrangeEmbedding {
    /// Bundle map components in the normalized parallel frame.
    pub fn phi_in_frame(&self, u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let ep = self.frame.plus.eval(u);
        let em = self.frame.minus.eval(u);
        let fp = ep
            .lu()
            .solve(&self.structure.phi_plus_at(u))
            .unwrap_or_else(|| DMatrix::from_element(self.dim(), self.dim(), f64::NAN));
        let fm = em
            .lu()
            .solve(&self.structure.phi_minus_at(u))
            .unwrap_or_else(|| DMatrix::from_element(self.dim(), self.dim(), f64::NAN));
        (fp, fm)
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn structure(&self) -> &QuasiCodazziStructure {
        &self.structure
    }

    /// `(x, p, z)` at a point: the joint staircase integration of
    /// `dx = Φ⁺_frame du`, `dp = Φ⁻_frame du`, `dz = Σ p_i dx_i` from the
    /// chart basepoint, anchored to zero there.
    pub fn eval(&self, u: &[f64]) -> (DVector<f64>, DVector<f64>, f64) {
        let key: Vec<u64> = u.iter().map(|x| x.to_bits()).collect();
        if let Some(hit) = self.memo.lock().unwrap().get(&key) {
            return hit.clone();
        }
        let n = self.dim();
        let mut x = DVector::zeros(n);
        let mut p = DVector::zeros(n);
        let mut z = 0.0f64;
        let mut ep = self.frame.plus.eval(self.chart.basepoint());
        let mut em = self.frame.minus.eval(self.chart.basepoint());
        let mut pos = self.chart.basepoint().to_vec();
        for axis in 0..n {
            self.integrate_segment(axis, u[axis], &mut pos, &mut ep, &mut em, &mut x, &mut p, &mut z);
        }
        let mut guard = self.memo.lock().unwrap();
        if guard.len() >= 1 << 14 {
            guard.clear();
        }
        guard.insert(key, (x.clone(), p.clone(), z));
        (x, p, z)
    }

    #[allow(clippy::too_many_arguments)]
    fn integrate_segment(
        &self,
        axis: usize,
        to: f64,
        pos: &mut Vec<f64>,
        ep: &mut DMatrix<f64>,
        em: &mut DMatrix<f64>,
        x: &mut DVector<f64>,
        p: &mut DVector<f64>,
        z: &mut f64,
    ) {
        let itv = self.chart.box_intervals()[axis];
        let cell = (itv[1] - itv[0]) / CELLS_PER_AXIS as f64;
        let from = pos[axis];
        if from == to {
            return;
        }
        let dir = if to > from { 1.0 } else { -1.0 };
        let n = self.dim();
        // joint state: frames, x, p, z
        let deriv = |xx: f64,
                     ep: &DMatrix<f64>,
                     em: &DMatrix<f64>,
                     pv: &DVector<f64>,
                     pos: &mut Vec<f64>|
         -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>, DVector<f64>, f64) {
            pos[axis] = xx;
            let wp = self.structure.conn_plus().form_at(axis, pos);
            let wm = self.structure.conn_minus().form_at(axis, pos);
            let dep = -&wp * ep;
            let dem = -&wm * em;
            let dx = ep
                .clone()
                .lu()
                .solve(&self.structure.phi_plus_at(pos).column(axis).into_owned())
                .unwrap_or_else(|| DVector::from_element(n, f64::NAN));
            let dp = em
                .clone()
                .lu()
                .solve(&self.structure.phi_minus_at(pos).column(axis).into_owned())
                .unwrap_or_else(|| DVector::from_element(n, f64::NAN));
            let dz = pv.dot(&dx);
            (dep, dem, dx, dp, dz)
        };
        let mut xx = from;
        while (to - xx) * dir > 1e-15 * cell.abs().max(1e-300) {
            let steps = (xx - itv[0]) / cell;
            let mut k = if dir > 0.0 {
                steps.floor() + 1.0
            } else {
                steps.ceil() - 1.0
            };
            let mut next_boundary = itv[0] + k * cell;
            // rounding can land the boundary back on xx; force progress
            if (next_boundary - xx) * dir < 1e-9 * cell {
                k += dir;
                next_boundary = itv[0] + k * cell;
            }
            let x_next = if (to - next_boundary) * dir > 0.0 {
                next_boundary
            } else {
                to
            };
            let h = x_next - xx;
            let (k1e, k1m, k1x, k1p, k1z) = deriv(xx, ep, em, p, pos);
            let (k2e, k2m, k2x, k2p, k2z) = deriv(
                xx + 0.5 * h,
                &(&*ep + &k1e * (0.5 * h)),
                &(&*em + &k1m * (0.5 * h)),
                &(&*p + &k1p * (0.5 * h)),
                pos,
            );
            let (k3e, k3m, k3x, k3p, k3z) = deriv(
                xx + 0.5 * h,
                &(&*ep + &k2e * (0.5 * h)),
                &(&*em + &k2m * (0.5 * h)),
                &(&*p + &k2p * (0.5 * h)),
                pos,
            );
            let (k4e, k4m, k4x, k4p, k4z) = deriv(
                xx + h,
                &(&*ep + &k3e * h),
                &(&*em + &k3m * h),
                &(&*p + &k3p * h),
                pos,
            );
            *ep += (k1e + k2e * 2.0 + k3e * 2.0 + k4e) * (h / 6.0);
            *em += (k1m + k2m * 2.0 + k3m * 2.0 + k4m) * (h / 6.0);
            *x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
            *p += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
            *z += (k1z + 2.0 * k2z + 2.0 * k3z + k4z) * (h / 6.0);
            xx = x_next;
        }
        pos[axis] = to;
    }

    /// Max integrability residual `|∂_i Φ_kj - ∂_j Φ_ki|` of the bundle map
    /// in the parallel frame, over both halves and a grid.
    pub fn integrability_residual(&self, grid_m: usize, cfg: FdConfig) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for pt in self.chart.grid(grid_m) {
            for i in 0..n {
                for j in (i + 1)..n {
                    let di = self.d_phi_frame(i, &pt, cfg);
                    let dj = self.d_phi_frame(j, &pt, cfg);
                    for k in 0..n {
                        worst = worst.max((di.0[(k, j)] - dj.0[(k, i)]).abs());
                        worst = worst.max((di.1[(k, j)] - dj.1[(k, i)]).abs());
                    }
                }
            }
        }
        worst
    }

    fn d_phi_frame(&self, axis: usize, pt: &[f64], cfg: FdConfig) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.dim();
        let mut buf = pt.to_vec();
        let x0 = buf[axis];
        let mut dp = DMatrix::zeros(n, n);
        let mut dm = DMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                dp[(r, c)] = fd::deriv1(
                    |x| {
                        buf[axis] = x;
                        self.phi_in_frame(&buf).0[(r, c)]
                    },
                    x0,
                    cfg,
                );
                dm[(r, c)] = fd::deriv1(
                    |x| {
                        buf[axis] = x;
                        self.phi_in_frame(&buf).1[(r, c)]
                    },
                    x0,
                    cfg,
                );
                buf[axis] = x0;
            }
        }
        (dp, dm)
    }

    /// Residuals of `df = Φ` (frame components) and `dz = Σ p_i dx_i` over a
    /// grid; both should sit at the integrator tolerance.
    pub fn embedding_residuals(&self, grid_m: usize, cfg: FdConfig) -> (f64, f64) {
        let n = self.dim();
        let mut df = 0.0f64;
        let mut dz = 0.0f64;
        for pt in self.chart.grid(grid_m) {
            let (fp, fm) = self.phi_in_frame(&pt);
            let (_, pvec, _) = self.eval(&pt);
            for i in 0..n {
                let mut buf = pt.clone();
                let x0 = buf[i];
                let mut dzi = 0.0;
                for k in 0..n {
                    let dxk = fd::deriv1(
                        |x| {
                            buf[i] = x;
                            self.eval(&buf).0[k]
                        },
                        x0,
                        cfg,
                    );
                    buf[i] = x0;
                    df = df.max((dxk - fp[(k, i)]).abs());
                    let dpk = fd::deriv1(
                        |x| {
                            buf[i] = x;
                            self.eval(&buf).1[k]
                        },
                        x0,
                        cfg,
                    );
                    buf[i] = x0;
                    df = df.max((dpk - fm[(k, i)]).abs());
                    dzi += pvec[k] * dxk;
                }
                let dz_fd = fd::deriv1(
                    |x| {
                        buf[i] = x;
                        self.eval(&buf).2
                    },
                    x0,
                    cfg,
                );
                buf[i] = x0;
                dz = dz.max((dz_fd - dzi).abs());
            }
        }
        (df, dz)
    }

    /// The induced metric read off the embedding:
    /// `2 Σ_k ∂_i x^k ∂_j p^k` with the unit pairing of the normalized frame.
    pub fn metric_from_embedding(&self, u: &[f64]) -> DMatrix<f64> {
        let (fp, fm) = self.phi_in_frame(u);
        let s = fp.transpose() * fm;
        &s + s.transpose()
    }
}

/// Builds the Lagrange embedding of one chart: parallel frames for both
/// halves, dual-pairing normalization, integrability gate, then the
/// staircase integration (lazily, per evaluation).
pub fn local_embedding(
    structure: &QuasiCodazziStructure,
    chart: &Chart,
    grid_m: usize,
    cfg: FdConfig,
) -> Result<LagrangeEmbedding> {
    let plus = parallel_frame(structure.conn_plus(), chart, grid_m, cfg)?;
    let minus = parallel_frame(structure.conn_minus(), chart, grid_m, cfg)?;
    let frame = normalize_dual_pairing(&plus, &minus, structure.pairing(), grid_m)?;
    let emb = LagrangeEmbedding {
        structure: structure.clone(),
        frame,
        chart: chart.clone(),
        memo: Default::default(),
    };
    let integ = emb.integrability_residual(grid_m, cfg);
    if integ > INTEGRABILITY_TOL {
        return Err(Error::IntegrabilityViolated { residual: integ });
    }
    Ok(emb)
}

/// An affine Legendre equivalence
/// `(x, p, z) ↦ (A x + b, A' p + b', z + cᵀ x + d)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffineLegendreEquivalence {
    pub a: Vec<Vec<f64>>,
    pub a_dual: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub b_dual: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
}

fn to_mat(v: &[Vec<f64>]) -> DMatrix<f64> {
    let n = v.len();
    DMatrix::from_fn(n, v[0].len(), |r, c| v[r][c])
}

fn from_mat(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

impl AffineLegendreEquivalence {
    pub fn identity(n: usize) -> Self {
        let id = from_mat(&DMatrix::identity(n, n));
        AffineLegendreEquivalence {
            a: id.clone(),
            a_dual: id,
            b: vec![0.0; n],
            b_dual: vec![0.0; n],
            c: vec![0.0; n],
            d: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn apply(&self, x: &DVector<f64>, p: &DVector<f64>, z: f64) -> (DVector<f64>, DVector<f64>, f64) {
        let a = to_mat(&self.a);
        let ad = to_mat(&self.a_dual);
        let b = DVector::from_column_slice(&self.b);
        let bd = DVector::from_column_slice(&self.b_dual);
        let c = DVector::from_column_slice(&self.c);
        (&a * x + b, &ad * p + bd, z + c.dot(x) + self.d)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let a1 = to_mat(&other.a);
        let a2 = to_mat(&self.a);
        let ad1 = to_mat(&other.a_dual);
        let ad2 = to_mat(&self.a_dual);
        let b1 = DVector::from_column_slice(&other.b);
        let b2 = DVector::from_column_slice(&self.b);
        let bd1 = DVector::from_column_slice(&other.b_dual);
        let bd2 = DVector::from_column_slice(&self.b_dual);
        let c1 = DVector::from_column_slice(&other.c);
        let c2 = DVector::from_column_slice(&self.c);
        AffineLegendreEquivalence {
            a: from_mat(&(&a2 * &a1)),
            a_dual: from_mat(&(&ad2 * &ad1)),
            b: (&a2 * b1.clone() + b2).as_slice().to_vec(),
            b_dual: (&ad2 * bd1 + bd2).as_slice().to_vec(),
            c: (c1 + a1.transpose() * c2.clone()).as_slice().to_vec(),
            d: other.d + self.d + c2.dot(&b1),
        }
    }

    pub fn inverse(&self) -> Self {
        let a = to_mat(&self.a);
        let ad = to_mat(&self.a_dual);
        let a_inv = a.clone().try_inverse().expect("transition is invertible");
        let ad_inv = ad.clone().try_inverse().expect("transition is invertible");
        let b = DVector::from_column_slice(&self.b);
        let bd = DVector::from_column_slice(&self.b_dual);
        let c = DVector::from_column_slice(&self.c);
        let c_inv = -a_inv.transpose() * c.clone();
        let d_inv = c.dot(&(&a_inv * &b)) - self.d;
        AffineLegendreEquivalence {
            a: from_mat(&a_inv),
            a_dual: from_mat(&ad_inv),
            b: (-&a_inv * b).as_slice().to_vec(),
            b_dual: (-&ad_inv * bd).as_slice().to_vec(),
            c: c_inv.as_slice().to_vec(),
            d: d_inv,
        }
    }

    /// Residuals of the defining constraints `A' = (Aᵀ)⁻¹`, `b' = A' c`.
    pub fn constraint_residuals(&self) -> (f64, f64) {
        let a = to_mat(&self.a);
        let ad = to_mat(&self.a_dual);
        let c = DVector::from_column_slice(&self.c);
        let bd = DVector::from_column_slice(&self.b_dual);
        let r1 = (&ad * a.transpose() - DMatrix::<f64>::identity(self.dim(), self.dim()))
            .abs()
            .max();
        let r2 = (&ad * c - bd).abs().max();
        (r1, r2)
    }

    /// Max deviation from the identity over all blocks.
    pub fn deviation_from_identity(&self) -> f64 {
        let n = self.dim();
        let id = DMatrix::<f64>::identity(n, n);
        let mut worst = (to_mat(&self.a) - &id).abs().max();
        worst = worst.max((to_mat(&self.a_dual) - &id).abs().max());
        for v in [&self.b, &self.b_dual, &self.c] {
            for x in v {
                worst = worst.max(x.abs());
            }
        }
        worst.max(self.d.abs())
    }
}

/// Fit statistics of a recovered transition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionReport {
    pub map: AffineLegendreEquivalence,
    /// Worst-case mismatch of the transported embedding over the samples.
    pub map_residual: f64,
    /// Deviation of the offsets from constancy.
    pub offset_deviation: f64,
    /// Residuals of the affine Legendre constraints (never imposed in the
    /// fit: recovered and asserted).
    pub dual_block_residual: f64,
    pub offset_constraint_residual: f64,
}

/// Recovers the affine Legendre equivalence carrying `emb_u` to `emb_v` on
/// shared overlap samples. `A` and `A'` are fitted independently by least
/// squares on the frame components of the bundle map (the derivatives of the
/// embedding), the offsets from the embedding values, and `(c, d)` from the
/// lift offsets.
pub fn transition(
    emb_u: &LagrangeEmbedding,
    emb_v: &LagrangeEmbedding,
    samples: &[Vec<f64>],
) -> Result<TransitionReport> {
    let n = emb_u.dim();
    if samples.len() < n + 1 {
        return Err(Error::validation(
            "transition",
            format!("need at least {} overlap samples, got {}", n + 1, samples.len()),
        ));
    }
    // least squares A: minimize Σ |A df_u - df_v|^2 over sample columns
    let fit_block = |minus: bool| -> Result<DMatrix<f64>> {
        let mut gram = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DMatrix::<f64>::zeros(n, n);
        for s in samples {
            let (du_p, du_m) = emb_u.phi_in_frame(s);
            let (dv_p, dv_m) = emb_v.phi_in_frame(s);
            let (du, dv) = if minus { (du_m, dv_m) } else { (du_p, dv_p) };
            gram += &du * du.transpose();
            rhs += &dv * du.transpose();
        }
        let svd = gram.clone().svd(false, false);
        let sv = &svd.singular_values;
        let cond = sv[0] / sv[sv.len() - 1].max(f64::MIN_POSITIVE);
        if !cond.is_finite() || cond > CONDITION_LIMIT {
            return Err(Error::IllConditionedOverlap { cond });
        }
        gram.transpose()
            .lu()
            .solve(&rhs.transpose())
            .map(|m| m.transpose())
            .ok_or(Error::IllConditionedOverlap { cond })
    };
    let a = fit_block(false)?;
    let a_dual = fit_block(true)?;

    // offsets: b = x_v - A x_u must be constant over the overlap
    use rayon::prelude::*;
    let xs: Vec<_> = samples
        .par_iter()
        .map(|s| {
            let (xu, pu, zu) = emb_u.eval(s);
            let (xv, pv, zv) = emb_v.eval(s);
            (xu, pu, zu, xv, pv, zv)
        })
        .collect();
    let mean_offset = |f: &dyn Fn(&(DVector<f64>, DVector<f64>, f64, DVector<f64>, DVector<f64>, f64)) -> DVector<f64>| {
        let mut mean = DVector::<f64>::zeros(n);
        for row in &xs {
            mean += f(row);
        }
        mean /= xs.len() as f64;
        let mut dev = 0.0f64;
        for row in &xs {
            dev = dev.max((f(row) - &mean).abs().max());
        }
        (mean, dev)
    };
    let (b, dev_b) = mean_offset(&|row| &row.3 - &a * &row.0);
    let (b_dual, dev_bd) = mean_offset(&|row| &row.4 - &a_dual * &row.1);
    let offset_deviation = dev_b.max(dev_bd);
    if offset_deviation > OFFSET_TOL {
        return Err(Error::NonConstantOffset {
            deviation: offset_deviation,
        });
    }

    // lift: z_v = z_u + c^T x_u + d by least squares over samples
    let mut design = DMatrix::<f64>::zeros(samples.len(), n + 1);
    let mut target = DVector::<f64>::zeros(samples.len());
    for (row, data) in xs.iter().enumerate() {
        for k in 0..n {
            design[(row, k)] = data.0[k];
        }
        design[(row, n)] = 1.0;
        target[row] = data.5 - data.2;
    }
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * target;
    let sol = gram
        .lu()
        .solve(&rhs)
        .ok_or(Error::IllConditionedOverlap { cond: f64::INFINITY })?;
    let c: Vec<f64> = (0..n).map(|k| sol[k]).collect();
    let d = sol[n];

    let map = AffineLegendreEquivalence {
        a: from_mat(&a),
        a_dual: from_mat(&a_dual),
        b: b.as_slice().to_vec(),
        b_dual: b_dual.as_slice().to_vec(),
        c,
        d,
    };
    let (r1, r2) = map.constraint_residuals();

    // how well the recovered map actually carries one embedding to the other
    let mut map_residual = 0.0f64;
    for row in &xs {
        let (mx, mp, mz) = map.apply(&row.0, &row.1, row.2);
        map_residual = map_residual
            .max((mx - &row.3).abs().max())
            .max((mp - &row.4).abs().max())
            .max((mz - row.5).abs());
    }

    Ok(TransitionReport {
        map,
        map_residual,
        offset_deviation,
        dual_block_residual: r1,
        offset_constraint_residual: r2,
    })
}

/// A serializable description of the reconstructed atlas.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtlasDescription {
    pub charts: Vec<AtlasChart>,
    pub transitions: Vec<AtlasTransition>,
    pub cocycles: Vec<AtlasCocycle>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtlasChart {
    pub name: String,
    pub box_intervals: Vec<[f64; 2]>,
    pub basepoint: Vec<f64>,
    /// Sampled rows `(u..., x..., p..., z)`.
    pub samples: Vec<Vec<f64>>,
    pub df_residual: f64,
    pub dz_residual: f64,
    pub metric_agreement: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtlasTransition {
    pub from: String,
    pub to: String,
    pub report: TransitionReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtlasCocycle {
    pub charts: [String; 3],
    pub residual: f64,
}

pub struct QuasiHessianAtlas {
    pub embeddings: Vec<(String, LagrangeEmbedding)>,
    pub description: AtlasDescription,
}

/// Assembles the atlas: per-chart embeddings, pairwise transitions over
/// overlaps, and the cocycle check on chart triples.
pub fn build_atlas(
    structure: &QuasiCodazziStructure,
    charts: &[(String, Chart)],
    grid_m: usize,
    cfg: FdConfig,
    condition_tol: f64,
) -> Result<QuasiHessianAtlas> {
    // the reconstruction hypotheses, enforced as runtime checks
    let report = quasi_codazzi_report(structure, grid_m, condition_tol);
    if !report.all_pass() {
        return Err(Error::validation(
            "atlas",
            format!("structure is not quasi-Codazzi at tolerance {condition_tol}: {report:?}"),
        ));
    }
    let dual = structure.curvature_duality_residual(grid_m, cfg);
    if dual > 1e-5 {
        return Err(Error::validation(
            "atlas",
            format!("curvature duality residual {dual:.3e}"),
        ));
    }

    // per-chart embeddings in parallel; results keep the input order so the
    // output is independent of the worker count
    use rayon::prelude::*;
    let built: Vec<Result<(String, LagrangeEmbedding, AtlasChart)>> = charts
        .par_iter()
        .map(|(name, chart)| {
            let emb = local_embedding(structure, chart, grid_m, cfg)?;
            let (df, dz) = emb.embedding_residuals(grid_m.min(3), cfg);
            if df.max(dz) > EMBEDDING_TOL {
                return Err(Error::validation(
                    "atlas",
                    format!("embedding residuals on chart {name}: df {df:.3e}, dz {dz:.3e}"),
                ));
            }
            let pullback = structure.pullback_metric();
            let grid = chart.grid(grid_m.min(4));
            let rows: Vec<(Vec<f64>, f64)> = grid
                .par_iter()
                .map(|u| {
                    let (x, p, z) = emb.eval(u);
                    let mut row = u.clone();
                    row.extend(x.iter().copied());
                    row.extend(p.iter().copied());
                    row.push(z);
                    let agree = (emb.metric_from_embedding(u) - pullback.mat_at(u)).abs().max();
                    (row, agree)
                })
                .collect();
            let metric_agreement = rows.iter().fold(0.0f64, |a, r| a.max(r.1));
            let samples = rows.into_iter().map(|r| r.0).collect();
            let desc = AtlasChart {
                name: name.clone(),
                box_intervals: chart.box_intervals().to_vec(),
                basepoint: chart.basepoint().to_vec(),
                samples,
                df_residual: df,
                dz_residual: dz,
                metric_agreement,
            };
            Ok((name.clone(), emb, desc))
        })
        .collect();
    let mut embeddings: Vec<(String, LagrangeEmbedding)> = Vec::new();
    let mut chart_descs = Vec::new();
    for item in built {
        let (name, emb, desc) = item?;
        embeddings.push((name, emb));
        chart_descs.push(desc);
    }

    let mut pairs = Vec::new();
    for i in 0..embeddings.len() {
        for j in (i + 1)..embeddings.len() {
            if let Some(overlap) = embeddings[i].1.chart().overlap(embeddings[j].1.chart()) {
                pairs.push((i, j, overlap));
            }
        }
    }
    let fitted: Vec<Result<(usize, usize, TransitionReport)>> = pairs
        .par_iter()
        .map(|(i, j, overlap)| {
            let samples = overlap_samples(overlap, embeddings[*i].1.dim());
            let rep = transition(&embeddings[*i].1, &embeddings[*j].1, &samples).map_err(|e| {
                Error::validation(
                    "atlas",
                    format!(
                        "transition {} -> {}: {e}",
                        embeddings[*i].0, embeddings[*j].0
                    ),
                )
            })?;
            Ok((*i, *j, rep))
        })
        .collect();
    let mut transitions = Vec::new();
    let mut maps: std::collections::BTreeMap<(usize, usize), AffineLegendreEquivalence> =
        std::collections::BTreeMap::new();
    for item in fitted {
        let (i, j, rep) = item?;
        maps.insert((i, j), rep.map.clone());
        transitions.push(AtlasTransition {
            from: embeddings[i].0.clone(),
            to: embeddings[j].0.clone(),
            report: rep,
        });
    }

    let mut cocycles = Vec::new();
    for i in 0..embeddings.len() {
        for j in (i + 1)..embeddings.len() {
            for k in (j + 1)..embeddings.len() {
                if let (Some(lij), Some(ljk), Some(lik)) =
                    (maps.get(&(i, j)), maps.get(&(j, k)), maps.get(&(i, k)))
                {
                    let composite = lik.inverse().compose(&ljk.compose(lij));
                    cocycles.push(AtlasCocycle {
                        charts: [
                            embeddings[i].0.clone(),
                            embeddings[j].0.clone(),
                            embeddings[k].0.clone(),
                        ],
                        residual: composite.deviation_from_identity(),
                    });
                }
            }
        }
    }

    Ok(QuasiHessianAtlas {
        embeddings,
        description: AtlasDescription {
            charts: chart_descs,
            transitions,
            cocycles,
        },
    })
}

/// Interior samples of an overlap box, inset from the edges.
pub fn overlap_samples(overlap: &[[f64; 2]], n: usize) -> Vec<Vec<f64>> {
    let m = if n == 1 { 7 } else { 3 };
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(n);
    for itv in overlap {
        let span = itv[1] - itv[0];
        let lo = itv[0] + 0.2 * span;
        let hi = itv[1] - 0.2 * span;
        axes.push(
            (0..m)
                .map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64)
                .collect(),
        );
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        out.push((0..n).map(|i| axes[i][idx[i]]).collect());
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == n {
                return out;
            }
        }
    }
}
