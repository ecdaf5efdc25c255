//! Quasi-Codazzi structures: a Lagrange bundle map into a para-Hermitian
//! bundle, a connection on each eigenbundle with the pairing-duality between
//! them, the induced (possibly degenerate) metric, the generalized cubic
//! tensor, the Kossowski trilinear form, curvature duality, the condition
//! ledger, canonical constructions, gauge changes, and isomorphism checks.
//!
//! Everything is stored in a smooth frame adapted to the eigen-splitting:
//!
//! - `pairing`: `P_kl = tau(a_k, b_l)` (n × n, invertible);
//! - `phi_plus` / `phi_minus`: column i holds the frame components of the
//!   image of the i-th coordinate field;
//! - connection forms per direction: `∇_{∂i} a_k = Σ_m (W_i)_{mk} a_m`.
//!
//! In this representation `tau(ξ⁺, η⁻) = ξ⁺ᵀ P η⁻`, the Lagrange condition
//! is the symmetry of `S = Φ⁺ᵀ P Φ⁻`, and the induced metric is `h = S + Sᵀ`.

use crate::chart::Chart;
use crate::conn::AffineConnection;
use crate::error::{Error, Result};
use crate::fd::{self, FdConfig};
use crate::field::{Component, MatrixField, Symmetry, TensorField};
use crate::metric::MetricField;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// A connection on one eigenbundle, as form matrices per base direction.
#[derive(Clone, Debug)]
pub struct BundleConnection {
    pub forms: Vec<MatrixField>,
}

impl BundleConnection {
    pub fn zero(dirs: usize, rank: usize) -> BundleConnection {
        BundleConnection {
            forms: (0..dirs).map(|_| MatrixField::zeros(rank, rank)).collect(),
        }
    }

    pub fn from_forms(forms: Vec<MatrixField>) -> BundleConnection {
        BundleConnection { forms }
    }

    pub fn rank(&self) -> usize {
        self.forms[0].rows()
    }

    pub fn form_at(&self, i: usize, point: &[f64]) -> DMatrix<f64> {
        self.forms[i].eval_mat(point)
    }

    /// Curvature matrix `R(∂_i, ∂_j)` acting on frame components.
    pub fn curvature_at(&self, i: usize, j: usize, point: &[f64], cfg: FdConfig) -> DMatrix<f64> {
        let wi = self.form_at(i, point);
        let wj = self.form_at(j, point);
        let dwj = fd::d_matrix(&self.forms[j], i, point, cfg);
        let dwi = fd::d_matrix(&self.forms[i], j, point, cfg);
        dwj - dwi + &wi * &wj - &wj * &wi
    }

    pub fn curvature_norm(&self, chart: &Chart, grid_m: usize, cfg: FdConfig) -> f64 {
        let n = chart.dim();
        let mut worst = 0.0f64;
        for p in chart.grid(grid_m) {
            for i in 0..n {
                for j in (i + 1)..n {
                    worst = worst.max(self.curvature_at(i, j, &p, cfg).abs().max());
                }
            }
        }
        worst
    }
}

/// Dual connection on the opposite eigenbundle, from
/// `X tau(ν⁺, ν⁻) = tau(∇⁺_X ν⁺, ν⁻) + tau(ν⁺, ∇⁻_X ν⁻)`:
/// `Θ_i = P⁻¹ (∂_i P - W_iᵀ P)`.
pub fn dual_bundle_connection(
    pairing: &MatrixField,
    conn_plus: &BundleConnection,
    cfg: FdConfig,
) -> BundleConnection {
    let n = conn_plus.forms.len();
    let rank = conn_plus.rank();
    let pairing = Arc::new(pairing.clone());
    let conn = Arc::new(conn_plus.clone());
    let forms = (0..n)
        .map(|i| {
            let pairing = pairing.clone();
            let conn = conn.clone();
            MatrixField::from_matrix_fn(rank, rank, move |p| {
                let pm = pairing.eval_mat(p);
                let dp = fd::d_matrix(&pairing, i, p, cfg);
                let wi = conn.form_at(i, p);
                let rhs = dp - wi.transpose() * &pm;
                pm.lu()
                    .solve(&rhs)
                    .unwrap_or_else(|| DMatrix::from_element(rank, rank, f64::NAN))
            })
            .cached()
        })
        .collect();
    BundleConnection { forms }
}

/// Mirror of [`dual_bundle_connection`]: the connection on E⁺ dual to a
/// given ∇⁻. Applying it after `dual_bundle_connection` tests the
/// involution `(∇*)* = ∇`.
pub fn dual_bundle_connection_rev(
    pairing: &MatrixField,
    conn_minus: &BundleConnection,
    cfg: FdConfig,
) -> BundleConnection {
    let n = conn_minus.forms.len();
    let rank = conn_minus.rank();
    let pairing = Arc::new(pairing.clone());
    let conn = Arc::new(conn_minus.clone());
    let forms = (0..n)
        .map(|i| {
            let pairing = pairing.clone();
            let conn = conn.clone();
            MatrixField::from_matrix_fn(rank, rank, move |p| {
                let pm = pairing.eval_mat(p);
                let dp = fd::d_matrix(&pairing, i, p, cfg);
                let th = conn.form_at(i, p);
                // ∂_i P = Wᵀ P + P Θ  =>  W = P⁻ᵀ (∂_i P - P Θ)ᵀ
                let rhs = (dp - &pm * th).transpose();
                pm.transpose()
                    .lu()
                    .solve(&rhs)
                    .unwrap_or_else(|| DMatrix::from_element(rank, rank, f64::NAN))
            })
        })
        .collect();
    BundleConnection { forms }
}

#[derive(Debug, Clone, Copy)]
pub struct StructurePolicy {
    pub grid_m: usize,
    pub lagrange_tol: f64,
    /// Derived-field finite differences.
    pub fd: FdConfig,
}

impl Default for StructurePolicy {
    fn default() -> Self {
        StructurePolicy {
            grid_m: 4,
            lagrange_tol: 1e-9,
            fd: FdConfig::inner(),
        }
    }
}

struct Data {
    chart: Chart,
    pairing: MatrixField,
    phi_plus: MatrixField,
    phi_minus: MatrixField,
    conn_plus: BundleConnection,
    conn_minus: BundleConnection,
    policy: StructurePolicy,
    /// Smallest singular value of the full 2n × n bundle map over the
    /// validation grid; a diagnostic, not a gate, because natural examples
    /// drop rank on isolated degeneracy loci.
    phi_min_singular: f64,
}

#[derive(Clone)]
pub struct QuasiCodazziStructure(Arc<Data>);

impl std::fmt::Debug for QuasiCodazziStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "QuasiCodazziStructure(n = {}, phi_min_singular = {:.3e})",
            self.dim(),
            self.0.phi_min_singular
        )
    }
}

impl QuasiCodazziStructure {
    pub fn new(
        chart: Chart,
        pairing: MatrixField,
        phi_plus: MatrixField,
        phi_minus: MatrixField,
        conn_plus: BundleConnection,
        conn_minus: BundleConnection,
        policy: StructurePolicy,
    ) -> Result<QuasiCodazziStructure> {
        let n = chart.dim();
        for (name, m, rows, cols) in [
            ("pairing", &pairing, n, n),
            ("phi_plus", &phi_plus, n, n),
            ("phi_minus", &phi_minus, n, n),
        ] {
            if m.rows() != rows || m.cols() != cols {
                return Err(Error::validation(
                    "structure",
                    format!("{name} must be {rows}x{cols}"),
                ));
            }
        }
        if conn_plus.forms.len() != n || conn_minus.forms.len() != n {
            return Err(Error::validation(
                "structure",
                "need one connection form per coordinate direction",
            ));
        }

        let mut phi_min = f64::INFINITY;
        for p in chart.grid(policy.grid_m) {
            let pm = pairing.eval_mat(&p);
            if pm.clone().lu().try_inverse().is_none() {
                return Err(Error::validation(
                    "structure",
                    format!("pairing block is singular at {p:?}"),
                ));
            }
            let s = phi_plus.eval_mat(&p).transpose() * &pm * phi_minus.eval_mat(&p);
            let asym = (&s - &s.transpose()).abs().max();
            if asym > policy.lagrange_tol {
                return Err(Error::LagrangeViolated { residual: asym });
            }
            // stacked 2n x n bundle map for the rank diagnostic
            let mut full = DMatrix::zeros(2 * n, n);
            full.view_mut((0, 0), (n, n)).copy_from(&phi_plus.eval_mat(&p));
            full.view_mut((n, 0), (n, n)).copy_from(&phi_minus.eval_mat(&p));
            let sv = full.svd(false, false).singular_values;
            for s in sv.iter() {
                phi_min = phi_min.min(*s);
            }
        }

        Ok(QuasiCodazziStructure(Arc::new(Data {
            chart,
            pairing,
            phi_plus,
            phi_minus,
            conn_plus,
            conn_minus,
            policy,
            phi_min_singular: phi_min,
        })))
    }

    pub fn chart(&self) -> &Chart {
        &self.0.chart
    }

    pub fn dim(&self) -> usize {
        self.0.chart.dim()
    }

    pub fn policy(&self) -> StructurePolicy {
        self.0.policy
    }

    pub fn pairing(&self) -> &MatrixField {
        &self.0.pairing
    }

    pub fn phi_plus(&self) -> &MatrixField {
        &self.0.phi_plus
    }

    pub fn phi_minus(&self) -> &MatrixField {
        &self.0.phi_minus
    }

    pub fn conn_plus(&self) -> &BundleConnection {
        &self.0.conn_plus
    }

    pub fn conn_minus(&self) -> &BundleConnection {
        &self.0.conn_minus
    }

    pub fn phi_min_singular(&self) -> f64 {
        self.0.phi_min_singular
    }

    pub fn pairing_at(&self, p: &[f64]) -> DMatrix<f64> {
        self.0.pairing.eval_mat(p)
    }

    pub fn phi_plus_at(&self, p: &[f64]) -> DMatrix<f64> {
        self.0.phi_plus.eval_mat(p)
    }

    pub fn phi_minus_at(&self, p: &[f64]) -> DMatrix<f64> {
        self.0.phi_minus.eval_mat(p)
    }

    /// `S_ab = tau(Φ⁺ ∂_a, Φ⁻ ∂_b)`.
    pub fn half_pairing_at(&self, p: &[f64]) -> DMatrix<f64> {
        self.phi_plus_at(p).transpose() * self.pairing_at(p) * self.phi_minus_at(p)
    }

    /// Covariant derivative of the i-th Φ⁺ column section:
    /// components of `∇⁺_{∂i} Φ⁺(∂_j)`.
    pub fn d_phi_plus(&self, i: usize, j: usize, p: &[f64]) -> DVector<f64> {
        let cfg = self.0.policy.fd;
        let n = self.dim();
        let w = self.0.conn_plus.form_at(i, p);
        let phi = self.phi_plus_at(p);
        let mut out = DVector::zeros(n);
        for r in 0..n {
            out[r] = fd::partial(self.0.phi_plus.comp(r, j), p, i, cfg);
        }
        out + w * phi.column(j)
    }

    pub fn d_phi_minus(&self, i: usize, j: usize, p: &[f64]) -> DVector<f64> {
        let cfg = self.0.policy.fd;
        let n = self.dim();
        let w = self.0.conn_minus.form_at(i, p);
        let phi = self.phi_minus_at(p);
        let mut out = DVector::zeros(n);
        for r in 0..n {
            out[r] = fd::partial(self.0.phi_minus.comp(r, j), p, i, cfg);
        }
        out + w * phi.column(j)
    }

    /// Relative torsion of the plus half on coordinate fields.
    pub fn torsion_plus(&self, i: usize, j: usize, p: &[f64]) -> DVector<f64> {
        self.d_phi_plus(i, j, p) - self.d_phi_plus(j, i, p)
    }

    pub fn torsion_minus(&self, i: usize, j: usize, p: &[f64]) -> DVector<f64> {
        self.d_phi_minus(i, j, p) - self.d_phi_minus(j, i, p)
    }

    /// The pulled-back metric `h(Y,Z) = tau(ΦY, ΦZ) = S + Sᵀ`.
    pub fn pullback_metric(&self) -> MetricField {
        let this = self.clone();
        MetricField::from_matrix_fn(self.0.chart.clone(), move |p| {
            let s = this.half_pairing_at(p);
            &s + s.transpose()
        })
        .expect("pullback is symmetric by construction")
    }

    /// Max over the grid of `|S_ab - h_ab / 2|`, the half-pairing identity.
    pub fn half_pairing_residual(&self, grid_m: usize) -> f64 {
        let mut worst = 0.0f64;
        for p in self.0.chart.grid(grid_m) {
            let s = self.half_pairing_at(&p);
            let h = &s + s.transpose();
            let r = (&s - h * 0.5).abs().max();
            worst = worst.max(r);
        }
        worst
    }

    pub fn lagrange_residual(&self, grid_m: usize) -> f64 {
        let mut worst = 0.0f64;
        for p in self.0.chart.grid(grid_m) {
            let s = self.half_pairing_at(&p);
            worst = worst.max((&s - s.transpose()).abs().max());
        }
        worst
    }

    /// Generalized cubic tensor
    /// `C(∂_i,∂_j,∂_k) = -2 { tau(∇⁺_i Φ⁺∂_j, Φ⁻∂_k) - tau(Φ⁺∂_k, ∇⁻_i Φ⁻∂_j) }`;
    /// symmetric in the last two slots by construction of the structure.
    pub fn cubic(&self) -> TensorField {
        let n = self.dim();
        let mut comps = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let this = self.clone();
                    comps.push(Component::func(move |p| this.cubic_at(i, j, k, p)));
                }
            }
        }
        TensorField::new(self.0.chart.clone(), 0, 3, comps, vec![Symmetry::Pair(1, 2)])
            .expect("component count")
    }

    pub fn cubic_at(&self, i: usize, j: usize, k: usize, p: &[f64]) -> f64 {
        let pm = self.pairing_at(p);
        let a = (self.d_phi_plus(i, j, p).transpose() * &pm * self.phi_minus_at(p).column(k))
            [(0, 0)];
        let b = (self.phi_plus_at(p).column(k).transpose() * &pm * self.d_phi_minus(i, j, p))
            [(0, 0)];
        -2.0 * (a - b)
    }

    /// Kossowski trilinear form on coordinate fields:
    /// `Γ(∂_i,∂_j,∂_k) = ∂_i S_jk + ∂_j S_ki - ∂_k S_ij` with
    /// `S_ab = tau(Φ⁺∂_a, Φ⁻∂_b)`. Defined with no inversion of `h`.
    pub fn kossowski(&self, i: usize, j: usize, k: usize, p: &[f64]) -> f64 {
        let cfg = self.0.policy.fd;
        let this = self.clone();
        let s_entry = move |a: usize, b: usize, q: &[f64]| -> f64 {
            this.half_pairing_at(q)[(a, b)]
        };
        let mut buf = p.to_vec();
        let d = |axis: usize, a: usize, b: usize, buf: &mut Vec<f64>| -> f64 {
            let x0 = buf[axis];
            let v = fd::deriv1(
                |x| {
                    buf[axis] = x;
                    s_entry(a, b, buf)
                },
                x0,
                cfg,
            );
            buf[axis] = x0;
            v
        };
        d(i, j, k, &mut buf) + d(j, k, i, &mut buf) - d(k, i, j, &mut buf)
    }

    /// Residual of the compatibility condition
    /// `Γ(X,Y,Z) = tau(∇⁺_X η⁺, ζ⁻) + tau(ζ⁺, ∇⁻_X η⁻)`.
    pub fn kossowski_identity_at(&self, i: usize, j: usize, k: usize, p: &[f64]) -> f64 {
        let pm = self.pairing_at(p);
        let a = (self.d_phi_plus(i, j, p).transpose() * &pm * self.phi_minus_at(p).column(k))
            [(0, 0)];
        let b = (self.phi_plus_at(p).column(k).transpose() * &pm * self.d_phi_minus(i, j, p))
            [(0, 0)];
        self.kossowski(i, j, k, p) - a - b
    }

    /// `tau(T⁺(∂_i,∂_j), Φ⁻∂_k)` and `tau(Φ⁺∂_k, T⁻(∂_i,∂_j))`, the two
    /// pairings whose equality/anti-equality characterizes total symmetry of
    /// the cubic and the Kossowski identity respectively.
    pub fn torsion_pairings(&self, i: usize, j: usize, k: usize, p: &[f64]) -> (f64, f64) {
        let pm = self.pairing_at(p);
        let a = (self.torsion_plus(i, j, p).transpose() * &pm * self.phi_minus_at(p).column(k))
            [(0, 0)];
        let b = (self.phi_plus_at(p).column(k).transpose() * &pm * self.torsion_minus(i, j, p))
            [(0, 0)];
        (a, b)
    }

    pub fn curvature_plus_at(&self, i: usize, j: usize, p: &[f64], cfg: FdConfig) -> DMatrix<f64> {
        self.0.conn_plus.curvature_at(i, j, p, cfg)
    }

    pub fn curvature_minus_at(&self, i: usize, j: usize, p: &[f64], cfg: FdConfig) -> DMatrix<f64> {
        self.0.conn_minus.curvature_at(i, j, p, cfg)
    }

    /// Max residual of `tau(R⁺(X,Y)ν⁺, ν⁻) + tau(ν⁺, R⁻(X,Y)ν⁻) = 0` over
    /// grid points, frame pairs and coordinate bivectors.
    pub fn curvature_duality_residual(&self, grid_m: usize, cfg: FdConfig) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for p in self.0.chart.grid(grid_m) {
            let pm = self.pairing_at(&p);
            for i in 0..n {
                for j in (i + 1)..n {
                    let rp = self.curvature_plus_at(i, j, &p, cfg);
                    let rm = self.curvature_minus_at(i, j, &p, cfg);
                    let resid = rp.transpose() * &pm + &pm * rm;
                    worst = worst.max(resid.abs().max());
                }
            }
        }
        worst
    }

    pub fn curvature_norms(&self, grid_m: usize, cfg: FdConfig) -> (f64, f64) {
        (
            self.0.conn_plus.curvature_norm(&self.0.chart, grid_m, cfg),
            self.0.conn_minus.curvature_norm(&self.0.chart, grid_m, cfg),
        )
    }

    /// Residual of the duality between ∇⁺ and ∇⁻ against the pairing:
    /// `∂_i P - W_iᵀ P - P Θ_i`.
    pub fn connection_duality_residual(&self, grid_m: usize) -> f64 {
        let cfg = self.0.policy.fd;
        let n = self.dim();
        let mut worst = 0.0f64;
        for p in self.0.chart.grid(grid_m) {
            let pm = self.pairing_at(&p);
            for i in 0..n {
                let dp = fd::d_matrix(&self.0.pairing, i, &p, cfg);
                let wi = self.0.conn_plus.form_at(i, &p);
                let th = self.0.conn_minus.form_at(i, &p);
                let r = dp - wi.transpose() * &pm - &pm * th;
                worst = worst.max(r.abs().max());
            }
        }
        worst
    }

    /// Induced tangent-bundle connections `Φ±(∇̃±_X Y) = ∇±_X Φ±(Y)`;
    /// requires both projections invertible, i.e. `h` nondegenerate.
    pub fn induced_tm_connections(
        &self,
        grid_m: usize,
    ) -> Result<(AffineConnection, AffineConnection)> {
        let h = self.pullback_metric();
        h.require_nondegenerate_on_grid(grid_m)?;
        let make = |plus: bool| {
            let this = self.clone();
            AffineConnection::from_fn(self.0.chart.clone(), move |m, i, j| {
                let this = this.clone();
                Component::func(move |p| {
                    let (phi, dcol) = if plus {
                        (this.phi_plus_at(p), this.d_phi_plus(i, j, p))
                    } else {
                        (this.phi_minus_at(p), this.d_phi_minus(i, j, p))
                    };
                    match phi.lu().solve(&dcol) {
                        Some(sol) => sol[m],
                        None => f64::NAN,
                    }
                })
            })
        };
        Ok((make(true), make(false)))
    }

    /// Frame change by invertible blocks `G⁺`, `G⁻`: transforms the pairing,
    /// the bundle map components and the connection forms by the gauge law.
    /// All residual diagnostics are invariant under this operation.
    pub fn gauge_transform(
        &self,
        g_plus: &MatrixField,
        g_minus: &MatrixField,
    ) -> Result<QuasiCodazziStructure> {
        let n = self.dim();
        let cfg = self.0.policy.fd;
        let gp = Arc::new(g_plus.clone());
        let gm = Arc::new(g_minus.clone());

        let pairing = {
            let (gp, gm) = (gp.clone(), gm.clone());
            let base = self.0.pairing.clone();
            MatrixField::from_matrix_fn(n, n, move |p| {
                gp.eval_mat(p).transpose() * base.eval_mat(p) * gm.eval_mat(p)
            })
            .cached()
        };
        let phi_block = |g: Arc<MatrixField>, phi: MatrixField| {
            MatrixField::from_matrix_fn(n, n, move |p| {
                g.eval_mat(p)
                    .lu()
                    .solve(&phi.eval_mat(p))
                    .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN))
            })
        };
        let phi_plus = phi_block(gp.clone(), self.0.phi_plus.clone()).cached();
        let phi_minus = phi_block(gm.clone(), self.0.phi_minus.clone()).cached();
        let conn_block = |g: Arc<MatrixField>, conn: BundleConnection| {
            let forms = (0..n)
                .map(|i| {
                    let g = g.clone();
                    let conn = conn.clone();
                    MatrixField::from_matrix_fn(n, n, move |p| {
                        let gm = g.eval_mat(p);
                        let dg = fd::d_matrix(&g, i, p, cfg);
                        let rhs = dg + conn.form_at(i, p) * &gm;
                        gm.lu()
                            .solve(&rhs)
                            .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN))
                    })
                    .cached()
                })
                .collect();
            BundleConnection { forms }
        };
        let conn_plus = conn_block(gp, self.0.conn_plus.clone());
        let conn_minus = conn_block(gm, self.0.conn_minus.clone());
        QuasiCodazziStructure::new(
            self.0.chart.clone(),
            pairing,
            phi_plus,
            phi_minus,
            conn_plus,
            conn_minus,
            self.0.policy,
        )
    }
}

/// Standalone Lagrange check with the rank precondition: fails with
/// RankDeficientPhi when the stacked bundle map drops rank on the grid,
/// otherwise returns the worst antisymmetry residual of `S`.
pub fn lagrange_check(
    pairing: &MatrixField,
    phi_plus: &MatrixField,
    phi_minus: &MatrixField,
    chart: &Chart,
    grid_m: usize,
) -> Result<f64> {
    let n = chart.dim();
    let mut worst = 0.0f64;
    for p in chart.grid(grid_m) {
        let mut full = DMatrix::zeros(2 * n, n);
        full.view_mut((0, 0), (n, n)).copy_from(&phi_plus.eval_mat(&p));
        full.view_mut((n, 0), (n, n)).copy_from(&phi_minus.eval_mat(&p));
        let sv = full.svd(false, false).singular_values;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for s in sv.iter() {
            lo = lo.min(*s);
            hi = hi.max(*s);
        }
        if lo <= 1e-10 * hi.max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficientPhi {
                point: p.clone(),
                min_singular: lo,
            });
        }
        let s = phi_plus.eval_mat(&p).transpose() * pairing.eval_mat(&p) * phi_minus.eval_mat(&p);
        worst = worst.max((&s - s.transpose()).abs().max());
    }
    Ok(worst)
}

/// Condition ledger of a structure: relative torsions, total symmetry of the
/// cubic, the Kossowski identity, and the two torsion-pairing identities
/// that characterize the last two conditions.
#[derive(Debug, Clone)]
pub struct QuasiCodazziReport {
    pub torsion_plus: f64,
    pub torsion_minus: f64,
    pub cubic_symmetry: f64,
    pub kossowski_identity: f64,
    /// max |tau(T⁺,ζ⁻) - tau(ζ⁺,T⁻)|: vanishes iff the cubic is symmetric.
    pub pairing_sym: f64,
    /// max |tau(T⁺,ζ⁻) + tau(ζ⁺,T⁻)|: vanishes iff the Kossowski identity holds.
    pub pairing_anti: f64,
    pub lagrange: f64,
    pub half_pairing: f64,
    pub tol: f64,
}

impl QuasiCodazziReport {
    /// Verdicts for conditions (relative torsion ⁺, relative torsion ⁻,
    /// cubic symmetry, Kossowski identity).
    pub fn conditions(&self) -> [bool; 4] {
        [
            self.torsion_plus < self.tol,
            self.torsion_minus < self.tol,
            self.cubic_symmetry < self.tol,
            self.kossowski_identity < self.tol,
        ]
    }

    pub fn all_pass(&self) -> bool {
        self.conditions().iter().all(|v| *v)
    }

    /// Checks the implication pattern of the condition logic on this
    /// verdict vector: both torsions imply the rest; with an invertible
    /// plus (resp. minus) projection, the first torsion plus either derived
    /// condition forces the other torsion.
    pub fn implications_consistent(&self, plus_invertible: bool, minus_invertible: bool) -> bool {
        let [c1, c2, c3, c4] = self.conditions();
        if c1 && c2 && !(c3 && c4) {
            return false;
        }
        if plus_invertible && c1 && (c3 || c4) && !c2 {
            return false;
        }
        if minus_invertible && c2 && (c3 || c4) && !c1 {
            return false;
        }
        if plus_invertible && minus_invertible {
            let k = [c1, c2, c3, c4].iter().filter(|v| **v).count();
            if k >= 2 && k != 4 {
                return false;
            }
        }
        true
    }
}

pub fn quasi_codazzi_report(
    s: &QuasiCodazziStructure,
    grid_m: usize,
    tol: f64,
) -> QuasiCodazziReport {
    use rayon::prelude::*;
    let n = s.dim();
    let grid = s.chart().grid(grid_m);
    let per_point: Vec<[f64; 6]> = grid
        .par_iter()
        .map(|p| {
            let mut acc = [0.0f64; 6];
            for i in 0..n {
                for j in 0..n {
                    if i < j {
                        acc[0] = acc[0].max(s.torsion_plus(i, j, p).abs().max());
                        acc[1] = acc[1].max(s.torsion_minus(i, j, p).abs().max());
                    }
                    for k in 0..n {
                        if i < j {
                            let (a, b) = s.torsion_pairings(i, j, k, p);
                            acc[4] = acc[4].max((a - b).abs());
                            acc[5] = acc[5].max((a + b).abs());
                        }
                        acc[2] =
                            acc[2].max((s.cubic_at(i, j, k, p) - s.cubic_at(j, i, k, p)).abs());
                        acc[3] = acc[3].max(s.kossowski_identity_at(i, j, k, p).abs());
                    }
                }
            }
            acc
        })
        .collect();
    let mut worst = [0.0f64; 6];
    for acc in per_point {
        for (w, v) in worst.iter_mut().zip(acc) {
            *w = w.max(v);
        }
    }
    let [tp, tm, cs, ki, ps, pa] = worst;
    QuasiCodazziReport {
        torsion_plus: tp,
        torsion_minus: tm,
        cubic_symmetry: cs,
        kossowski_identity: ki,
        pairing_sym: ps,
        pairing_anti: pa,
        lagrange: s.lagrange_residual(grid_m),
        half_pairing: s.half_pairing_residual(grid_m),
        tol,
    }
}

/// The canonical structure over the Whitney-sum bundle from metric data:
/// `Φ = (id, h/2)` in the coordinate frame/coframe, `∇⁺` the given tangent
/// connection, `∇⁻` its pairing-dual (`Θ_i = -W_iᵀ` since `P = id`).
///
/// With nondegenerate `h` and a supplied dual the classical condition report
/// is validated first; with degenerate `h` the construction is accepted and
/// judged by the structure's own condition ledger.
pub fn canonical_from_codazzi(
    h: &MetricField,
    gamma: &AffineConnection,
    gamma_dual: Option<&AffineConnection>,
    policy: StructurePolicy,
    tol: f64,
) -> Result<QuasiCodazziStructure> {
    let chart = h.chart().clone();
    let n = chart.dim();
    if let Some(gd) = gamma_dual {
        if h.require_nondegenerate_on_grid(policy.grid_m).is_ok() {
            let report =
                crate::conn::codazzi_report(h, gamma, gd, policy.fd, policy.grid_m, tol)?;
            if !report.all_pass() {
                return Err(Error::validation(
                    "canonical structure",
                    format!(
                        "classical conditions fail: torsions {:.3e}/{:.3e}, symmetry {:.3e}, mean {:.3e}",
                        report.torsion_primal,
                        report.torsion_dual,
                        report.cubic_symmetry,
                        report.mean_is_levi_civita
                    ),
                ));
            }
        }
    }
    let pairing = MatrixField::identity(n);
    let phi_plus = MatrixField::identity(n);
    let h2 = h.clone();
    let phi_minus = MatrixField::from_matrix_fn(n, n, move |p| h2.mat_at(p) * 0.5);
    let gamma = Arc::new(gamma.clone());
    let wforms: Vec<MatrixField> = (0..n)
        .map(|i| {
            let gamma = gamma.clone();
            MatrixField::from_fn(n, n, move |m, k| {
                let gamma = gamma.clone();
                Component::func(move |p| gamma.gamma(m, i, k, p))
            })
        })
        .collect();
    let theta_forms: Vec<MatrixField> = (0..n)
        .map(|i| {
            let gamma = gamma.clone();
            MatrixField::from_fn(n, n, move |m, k| {
                let gamma = gamma.clone();
                Component::func(move |p| -gamma.gamma(k, i, m, p))
            })
        })
        .collect();
    QuasiCodazziStructure::new(
        chart,
        pairing,
        phi_plus,
        phi_minus,
        BundleConnection::from_forms(wforms),
        BundleConnection::from_forms(theta_forms),
        policy,
    )
}

/// A bundle map between two structures, as a full 2n × 2n matrix of
/// components from the adapted frame of the source to the adapted frame of
/// the target (blocks: [E⁺→E⁺, E⁻→E⁺; E⁺→E⁻, E⁻→E⁻]).
#[derive(Clone, Debug)]
pub struct BundleMapField {
    pub mat: MatrixField,
}

impl BundleMapField {
    pub fn block_diagonal(plus: &MatrixField, minus: &MatrixField) -> BundleMapField {
        let n = plus.rows();
        let plus = Arc::new(plus.clone());
        let minus = Arc::new(minus.clone());
        let mat = MatrixField::from_fn(2 * n, 2 * n, move |r, c| {
            if r < n && c < n {
                plus.comp(r, c).clone()
            } else if r >= n && c >= n {
                minus.comp(r - n, c - n).clone()
            } else {
                Component::constant(0.0)
            }
        });
        BundleMapField { mat }
    }

    pub fn identity(n: usize) -> BundleMapField {
        BundleMapField {
            mat: MatrixField::identity(2 * n),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IsomorphismReport {
    /// `F ∘ Φ_1 = Φ_2`
    pub maps_phi: f64,
    /// `F ∘ I_1 = I_2 ∘ F` (off-diagonal blocks of F)
    pub commutes_involution: f64,
    /// `tau_1 = tau_2(F·, F·)`
    pub isometry: f64,
    /// connection equivariance on both eigenbundles
    pub equivariance: f64,
    /// consequence: induced metrics agree
    pub metrics_agree: f64,
    /// consequence: cubic tensors agree
    pub cubics_agree: f64,
    /// consequence: curvatures are conjugate
    pub curvature_conjugate: f64,
    pub tol: f64,
}

impl IsomorphismReport {
    pub fn conditions_pass(&self) -> bool {
        self.maps_phi < self.tol
            && self.commutes_involution < self.tol
            && self.isometry < self.tol
            && self.equivariance < self.tol
    }
}

pub fn isomorphism_check(
    f_map: &BundleMapField,
    s1: &QuasiCodazziStructure,
    s2: &QuasiCodazziStructure,
    grid_m: usize,
    cfg: FdConfig,
    tol: f64,
) -> Result<IsomorphismReport> {
    let n = s1.dim();
    assert_eq!(n, s2.dim());
    let mut maps_phi = 0.0f64;
    let mut offdiag = 0.0f64;
    let mut isometry = 0.0f64;
    let mut equi = 0.0f64;
    let mut metrics = 0.0f64;
    let mut cubics = 0.0f64;
    let mut curv = 0.0f64;

    let assemble_tau = |s: &QuasiCodazziStructure, p: &[f64]| -> DMatrix<f64> {
        let pm = s.pairing_at(p);
        let mut t = DMatrix::zeros(2 * n, 2 * n);
        t.view_mut((0, n), (n, n)).copy_from(&pm);
        t.view_mut((n, 0), (n, n)).copy_from(&pm.transpose());
        t
    };

    for p in s1.chart().grid(grid_m) {
        let f = f_map.mat.eval_mat(&p);
        if f.clone().lu().try_inverse().is_none() {
            return Err(Error::SingularF { point: p.clone() });
        }
        let fpp = f.view((0, 0), (n, n)).into_owned();
        let fmm = f.view((n, n), (n, n)).into_owned();
        offdiag = offdiag
            .max(f.view((0, n), (n, n)).abs().max())
            .max(f.view((n, 0), (n, n)).abs().max());

        // F Φ1 = Φ2 blockwise
        let r_plus = &fpp * s1.phi_plus_at(&p) - s2.phi_plus_at(&p);
        let r_minus = &fmm * s1.phi_minus_at(&p) - s2.phi_minus_at(&p);
        maps_phi = maps_phi.max(r_plus.abs().max()).max(r_minus.abs().max());

        // tau_1(ν,κ) = tau_2(Fν, Fκ)
        let t1 = assemble_tau(s1, &p);
        let t2 = assemble_tau(s2, &p);
        isometry = isometry.max((f.transpose() * &t2 * &f - t1).abs().max());

        // connection equivariance: F⁺ W1_i - ∂_i F⁺ - W2_i F⁺ (and minus)
        for i in 0..n {
            let df = fd::d_matrix(&f_map.mat, i, &p, cfg);
            let dfpp = df.view((0, 0), (n, n)).into_owned();
            let dfmm = df.view((n, n), (n, n)).into_owned();
            let e_plus = &fpp * s1.conn_plus().form_at(i, &p)
                - &dfpp
                - s2.conn_plus().form_at(i, &p) * &fpp;
            let e_minus = &fmm * s1.conn_minus().form_at(i, &p)
                - &dfmm
                - s2.conn_minus().form_at(i, &p) * &fmm;
            equi = equi.max(e_plus.abs().max()).max(e_minus.abs().max());
            for j in (i + 1)..n {
                let c_plus = &fpp * s1.curvature_plus_at(i, j, &p, cfg)
                    - s2.curvature_plus_at(i, j, &p, cfg) * &fpp;
                let c_minus = &fmm * s1.curvature_minus_at(i, j, &p, cfg)
                    - s2.curvature_minus_at(i, j, &p, cfg) * &fmm;
                curv = curv.max(c_plus.abs().max()).max(c_minus.abs().max());
            }
        }

        let h1 = s1.half_pairing_at(&p);
        let h2 = s2.half_pairing_at(&p);
        metrics = metrics.max(((&h1 + h1.transpose()) - (&h2 + h2.transpose())).abs().max());
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    cubics = cubics
                        .max((s1.cubic_at(i, j, k, &p) - s2.cubic_at(i, j, k, &p)).abs());
                }
            }
        }
    }

    Ok(IsomorphismReport {
        maps_phi,
        commutes_involution: 2.0 * offdiag,
        isometry,
        equivariance: equi,
        metrics_agree: metrics,
        cubics_agree: cubics,
        curvature_conjugate: curv,
        tol,
    })
}

/// Second covariant derivative of a bundle-map column section:
/// components of `∇⁺_i ∇⁺_j Φ⁺(∂_k)` (and the minus mirror).
impl QuasiCodazziStructure {
    pub fn dd_phi_plus(&self, i: usize, j: usize, k: usize, p: &[f64]) -> DVector<f64> {
        let cfg = self.0.policy.fd;
        let n = self.dim();
        let mut buf = p.to_vec();
        let x0 = buf[i];
        let mut out = DVector::zeros(n);
        for r in 0..n {
            out[r] = crate::fd::deriv1(
                |x| {
                    buf[i] = x;
                    self.d_phi_plus(j, k, &buf)[r]
                },
                x0,
                cfg,
            );
            buf[i] = x0;
        }
        out + self.0.conn_plus.form_at(i, p) * self.d_phi_plus(j, k, p)
    }

    pub fn dd_phi_minus(&self, i: usize, j: usize, k: usize, p: &[f64]) -> DVector<f64> {
        let cfg = self.0.policy.fd;
        let n = self.dim();
        let mut buf = p.to_vec();
        let x0 = buf[i];
        let mut out = DVector::zeros(n);
        for r in 0..n {
            out[r] = crate::fd::deriv1(
                |x| {
                    buf[i] = x;
                    self.d_phi_minus(j, k, &buf)[r]
                },
                x0,
                cfg,
            );
            buf[i] = x0;
        }
        out + self.0.conn_minus.form_at(i, p) * self.d_phi_minus(j, k, p)
    }
}

/// Residuals of the identities tying a weak contrast function built from a
/// structure's `(h, C)` back to the structure itself: the two mixed
/// third-derivative relations through the Kossowski form, the two refined
/// single-connection relations, and the two curvature-versus-fourth-
/// derivative identities. Order-4 stencils cap the achievable accuracy, so
/// callers assert these at the relaxed 1e-4 tolerance.
#[derive(Debug, Clone)]
pub struct ContrastRelationsReport {
    /// `-ρ[XY|Z] = Γ(X,Y,Z) - C(X,Y,Z)/2`
    pub mixed_left: f64,
    /// `-ρ[Z|XY] = Γ(X,Y,Z) + C(X,Y,Z)/2`
    pub mixed_right: f64,
    /// `tau(∇⁺_X η⁺, ζ⁻) = -ρ[XY|Z]/2`
    pub refined_plus: f64,
    /// `tau(ζ⁺, ∇⁻_X η⁻) = -ρ[Z|XY]/2`
    pub refined_minus: f64,
    /// curvature of ∇⁺ against second derivatives and `ρ[XYZ|W]` terms
    pub curvature_plus: f64,
    /// curvature of ∇⁻ against second derivatives and `ρ[W|XYZ]` terms
    pub curvature_minus: f64,
}

impl ContrastRelationsReport {
    pub fn worst(&self) -> f64 {
        self.mixed_left
            .max(self.mixed_right)
            .max(self.refined_plus)
            .max(self.refined_minus)
            .max(self.curvature_plus)
            .max(self.curvature_minus)
    }
}

pub fn contrast_relations_check(
    s: &QuasiCodazziStructure,
    rho: &crate::contrast::TwoPointFunction,
    points: &[Vec<f64>],
    fd_cfg: FdConfig,
) -> Result<ContrastRelationsReport> {
    use crate::contrast::{rho_derivative, RhoFd};
    let n = s.dim();
    let rcfg = RhoFd::default();
    let mut rep = ContrastRelationsReport {
        mixed_left: 0.0,
        mixed_right: 0.0,
        refined_plus: 0.0,
        refined_minus: 0.0,
        curvature_plus: 0.0,
        curvature_minus: 0.0,
    };
    for p in points {
        let pm = s.pairing_at(p);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let gamma = s.kossowski(i, j, k, p);
                    let cubic = s.cubic_at(i, j, k, p);
                    let left = rho_derivative(rho, &[i, j], &[k], p, &rcfg)?;
                    let right = rho_derivative(rho, &[k], &[i, j], p, &rcfg)?;
                    rep.mixed_left = rep.mixed_left.max((-left - (gamma - 0.5 * cubic)).abs());
                    rep.mixed_right = rep.mixed_right.max((-right - (gamma + 0.5 * cubic)).abs());
                    let tau_plus = self_dphi_pair(s, i, j, k, p, &pm, true);
                    let tau_minus = self_dphi_pair(s, i, j, k, p, &pm, false);
                    rep.refined_plus = rep.refined_plus.max((tau_plus + 0.5 * left).abs());
                    rep.refined_minus = rep.refined_minus.max((tau_minus + 0.5 * right).abs());
                }
            }
        }
        // curvature identities on coordinate quadruples
        for i in 0..n {
            for j in (i + 1)..n {
                let rp = s.curvature_plus_at(i, j, p, fd_cfg);
                let rm = s.curvature_minus_at(i, j, p, fd_cfg);
                for k in 0..n {
                    for l in 0..n {
                        let lhs_p = (rp.clone() * s.phi_plus_at(p).column(k)).transpose()
                            * &pm
                            * s.phi_minus_at(p).column(l);
                        let second_p = (s.dd_phi_plus(i, j, k, p)
                            - s.dd_phi_plus(j, i, k, p))
                        .transpose()
                            * &pm
                            * s.phi_minus_at(p).column(l);
                        let rho_p = 0.5 * rho_derivative(rho, &[i, j, k], &[l], p, &rcfg)?
                            - 0.5 * rho_derivative(rho, &[j, i, k], &[l], p, &rcfg)?;
                        rep.curvature_plus = rep
                            .curvature_plus
                            .max((lhs_p[(0, 0)] - second_p[(0, 0)] - rho_p).abs());

                        let lhs_m = s.phi_plus_at(p).column(l).transpose()
                            * &pm
                            * (rm.clone() * s.phi_minus_at(p).column(k));
                        let second_m = s.phi_plus_at(p).column(l).transpose()
                            * &pm
                            * (s.dd_phi_minus(i, j, k, p) - s.dd_phi_minus(j, i, k, p));
                        let rho_m = 0.5 * rho_derivative(rho, &[l], &[i, j, k], p, &rcfg)?
                            - 0.5 * rho_derivative(rho, &[l], &[j, i, k], p, &rcfg)?;
                        rep.curvature_minus = rep
                            .curvature_minus
                            .max((lhs_m[(0, 0)] - second_m[(0, 0)] - rho_m).abs());
                    }
                }
            }
        }
    }
    Ok(rep)
}

fn self_dphi_pair(
    s: &QuasiCodazziStructure,
    i: usize,
    j: usize,
    k: usize,
    p: &[f64],
    pm: &DMatrix<f64>,
    plus: bool,
) -> f64 {
    if plus {
        (s.d_phi_plus(i, j, p).transpose() * pm * s.phi_minus_at(p).column(k))[(0, 0)]
    } else {
        (s.phi_plus_at(p).column(k).transpose() * pm * s.d_phi_minus(i, j, p))[(0, 0)]
    }
}

/// The canonical model of a nondegenerate structure together with the
/// explicit isomorphism `F = (Φ⁺)⁻¹ ⊕ (h/2) ∘ (Φ⁻)⁻¹` onto it.
pub fn canonical_model_and_iso(
    s: &QuasiCodazziStructure,
    grid_m: usize,
) -> Result<(QuasiCodazziStructure, BundleMapField)> {
    let h = s.pullback_metric();
    h.require_nondegenerate_on_grid(grid_m)?;
    let (tilde_plus, tilde_minus) = s.induced_tm_connections(grid_m)?;
    let target = canonical_from_codazzi(&h, &tilde_plus, Some(&tilde_minus), s.policy(), 1e-5)?;
    let n = s.dim();
    let s_plus = s.clone();
    let f_plus = MatrixField::from_matrix_fn(n, n, move |p| {
        s_plus
            .phi_plus_at(p)
            .try_inverse()
            .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN))
    });
    let s_minus = s.clone();
    let h2 = h.clone();
    let f_minus = MatrixField::from_matrix_fn(n, n, move |p| {
        match s_minus.phi_minus_at(p).try_inverse() {
            Some(inv) => h2.mat_at(p) * 0.5 * inv,
            None => DMatrix::from_element(n, n, f64::NAN),
        }
    });
    Ok((target, BundleMapField::block_diagonal(&f_plus, &f_minus)))
}
