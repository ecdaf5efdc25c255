//! Parallel frames for flat bundle connections, by integrating the linear
//! frame equation `∂_i E = -W_i E` along axis-aligned staircase paths from
//! the chart basepoint.
//!
//! Integration uses classical RK4 over a fixed partition of each axis (256
//! cells anchored at the box edge), so the value at a point depends smoothly
//! on the point and path-independence across the staircase orders is a
//! meaningful flatness diagnostic rather than integrator noise.

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::fd::FdConfig;
use crate::field::MatrixField;
use crate::qcs::BundleConnection;
use nalgebra::DMatrix;

pub const CELLS_PER_AXIS: usize = 256;
pub const FLATNESS_TOL: f64 = 1e-5;
pub const PATH_TOL: f64 = 1e-6;
pub const PAIRING_CONST_TOL: f64 = 1e-8;

/// One parallel frame half: the n sections of one eigenbundle, represented
/// by the matrix of their components `E(u)` with `E(basepoint) = initial`.
///
/// Evaluations integrate from the basepoint and are memoized per point;
/// finite-difference sweeps over the frame revisit identical points heavily.
#[derive(Clone)]
pub struct FrameHalf {
    chart: Chart,
    conn: BundleConnection,
    initial: DMatrix<f64>,
    memo: std::sync::Arc<std::sync::Mutex<std::collections::HashMap<Vec<u64>, DMatrix<f64>>>>,
}

impl FrameHalf {
    fn rk4_segment(&self, pos: &mut [f64], axis: usize, to: f64, e: &mut DMatrix<f64>) {
        let itv = self.chart.box_intervals()[axis];
        let cell = (itv[1] - itv[0]) / CELLS_PER_AXIS as f64;
        let from = pos[axis];
        if from == to {
            return;
        }
        let dir = if to > from { 1.0 } else { -1.0 };
        // fixed cell boundaries anchored at the box edge keep the
        // integration error smooth in the endpoints
        let mut x = from;
        while (to - x) * dir > 1e-15 * cell {
            let steps = (x - itv[0]) / cell;
            let mut k = if dir > 0.0 {
                steps.floor() + 1.0
            } else {
                steps.ceil() - 1.0
            };
            let mut next_boundary = itv[0] + k * cell;
            // rounding can land the boundary back on x; force progress
            if (next_boundary - x) * dir < 1e-9 * cell {
                k += dir;
                next_boundary = itv[0] + k * cell;
            }
            let x_next = if (to - next_boundary) * dir > 0.0 {
                next_boundary
            } else {
                to
            };
            let h = x_next - x;
            let f = |xx: f64, ee: &DMatrix<f64>, pos: &mut [f64]| -> DMatrix<f64> {
                pos[axis] = xx;
                -self.conn.forms[axis].eval_mat(pos) * ee
            };
            let k1 = f(x, e, pos);
            let k2 = f(x + 0.5 * h, &(&*e + &k1 * (0.5 * h)), pos);
            let k3 = f(x + 0.5 * h, &(&*e + &k2 * (0.5 * h)), pos);
            let k4 = f(x + h, &(&*e + &k3 * h), pos);
            *e += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            x = x_next;
        }
        pos[axis] = to;
    }

    fn eval_with_order(&self, point: &[f64], order: &[usize]) -> DMatrix<f64> {
        let mut e = self.initial.clone();
        let mut pos = self.chart.basepoint().to_vec();
        for &axis in order {
            self.rk4_segment(&mut pos, axis, point[axis], &mut e);
        }
        e
    }

    /// Frame components at a point (staircase in coordinate order).
    pub fn eval(&self, point: &[f64]) -> DMatrix<f64> {
        let key: Vec<u64> = point.iter().map(|x| x.to_bits()).collect();
        if let Some(hit) = self.memo.lock().unwrap().get(&key) {
            return hit.clone();
        }
        let order: Vec<usize> = (0..self.chart.dim()).collect();
        let e = self.eval_with_order(point, &order);
        let mut guard = self.memo.lock().unwrap();
        if guard.len() >= 1 << 14 {
            guard.clear();
        }
        guard.insert(key, e.clone());
        e
    }

    pub fn with_initial(&self, initial: DMatrix<f64>) -> FrameHalf {
        FrameHalf {
            chart: self.chart.clone(),
            conn: self.conn.clone(),
            initial,
            memo: Default::default(),
        }
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }
}

/// Integrates a parallel frame for one eigenbundle connection.
///
/// Preconditions enforced numerically: the connection must be flat
/// (curvature below [`FLATNESS_TOL`]), and the integration must be
/// path-independent across staircase orders (below [`PATH_TOL`]).
pub fn parallel_frame(
    conn: &BundleConnection,
    chart: &Chart,
    grid_m: usize,
    cfg: FdConfig,
) -> Result<FrameHalf> {
    let rank = conn.rank();
    let curv = conn.curvature_norm(chart, grid_m, cfg);
    if curv > FLATNESS_TOL {
        return Err(Error::NotFlat {
            curvature_norm: curv,
        });
    }
    let half = FrameHalf {
        chart: chart.clone(),
        conn: conn.clone(),
        initial: DMatrix::identity(rank, rank),
        memo: Default::default(),
    };
    let fwd: Vec<usize> = (0..chart.dim()).collect();
    let rev: Vec<usize> = (0..chart.dim()).rev().collect();
    let mut worst = 0.0f64;
    for p in chart.grid(grid_m) {
        let a = half.eval_with_order(&p, &fwd);
        let b = half.eval_with_order(&p, &rev);
        worst = worst.max((a - b).abs().max());
    }
    if worst > PATH_TOL {
        return Err(Error::PathDependence { residual: worst });
    }
    Ok(half)
}

/// A dual pair of parallel frames with unit pairing.
#[derive(Clone)]
pub struct ParallelFrame {
    pub plus: FrameHalf,
    pub minus: FrameHalf,
    /// Max deviation of the raw pairing from its basepoint value.
    pub pairing_deviation: f64,
}

/// Normalizes `tau(e⁺_k, e⁻_l)` to the Kronecker delta.
///
/// For genuinely dual connections the pairing of parallel frames is a
/// constant matrix; this is checked on the grid and a non-constant pairing
/// is reported as such (it means the minus connection is not the dual of
/// the plus one). The plus half is then recombined by the inverse so the
/// pairing becomes the identity without disturbing parallelism.
pub fn normalize_dual_pairing(
    plus: &FrameHalf,
    minus: &FrameHalf,
    pairing: &MatrixField,
    grid_m: usize,
) -> Result<ParallelFrame> {
    let chart = plus.chart.clone();
    let bp = chart.basepoint().to_vec();
    let at = |p: &[f64]| -> DMatrix<f64> {
        plus.eval(p).transpose() * pairing.eval_mat(p) * minus.eval(p)
    };
    let a0 = at(&bp);
    let scale = a0.abs().max().max(1e-300);
    let mut dev = 0.0f64;
    for p in chart.grid(grid_m) {
        dev = dev.max((at(&p) - &a0).abs().max());
    }
    if dev > PAIRING_CONST_TOL * scale.max(1.0) {
        return Err(Error::NonConstantPairing { deviation: dev });
    }
    // replace e⁺_k by sum_j (a^{-1})_{kj} e⁺_j: pairing becomes identity
    let a_inv = a0.clone().try_inverse().ok_or(Error::NonConstantPairing {
        deviation: f64::INFINITY,
    })?;
    let plus_norm = plus.with_initial(plus.initial.clone() * a_inv.transpose());
    Ok(ParallelFrame {
        plus: plus_norm,
        minus: minus.clone(),
        pairing_deviation: dev,
    })
}

/// Max norm of `∂_i E + W_i E` over a grid: how parallel the frame really is.
pub fn parallel_residual(
    half: &FrameHalf,
    conn: &BundleConnection,
    grid_m: usize,
    cfg: FdConfig,
) -> f64 {
    let chart = &half.chart;
    let n = chart.dim();
    let mut worst = 0.0f64;
    for p in chart.grid(grid_m) {
        for i in 0..n {
            let mut buf = p.clone();
            let x0 = buf[i];
            let e0 = half.eval(&p);
            let rank = e0.nrows();
            let mut de = DMatrix::zeros(rank, rank);
            for r in 0..rank {
                for c in 0..rank {
                    de[(r, c)] = crate::fd::deriv1(
                        |x| {
                            buf[i] = x;
                            half.eval(&buf)[(r, c)]
                        },
                        x0,
                        cfg,
                    );
                    buf[i] = x0;
                }
            }
            let resid = de + conn.forms[i].eval_mat(&p) * e0;
            worst = worst.max(resid.abs().max());
        }
    }
    worst
}
