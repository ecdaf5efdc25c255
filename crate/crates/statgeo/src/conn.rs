//! Affine connections on the tangent bundle: torsion, curvature, the
//! Levi-Civita connection, duals with respect to a metric, condition reports
//! for Codazzi structures, and the construction of mutually dual connections
//! from a totally symmetric cubic tensor.

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::fd::{self, FdConfig};
use crate::field::{Component, Symmetry, TensorField};
use crate::metric::MetricField;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Christoffel symbols `gamma[k][i][j] = Γ^k_{ij}`, meaning the coefficient
/// of `∂_k` in `∇_{∂_i} ∂_j`.
#[derive(Clone, Debug)]
pub struct AffineConnection {
    chart: Chart,
    comps: Vec<Component>, // flat layout k*n*n + i*n + j
}

impl AffineConnection {
    pub fn new(chart: Chart, comps: Vec<Component>) -> Result<AffineConnection> {
        let n = chart.dim();
        if comps.len() != n * n * n {
            return Err(Error::validation(
                "connection",
                format!(
                    "expected {} Christoffel components, got {}",
                    n * n * n,
                    comps.len()
                ),
            ));
        }
        Ok(AffineConnection { chart, comps })
    }

    pub fn zero(chart: Chart) -> AffineConnection {
        let n = chart.dim();
        AffineConnection {
            comps: vec![Component::constant(0.0); n * n * n],
            chart,
        }
    }

    pub fn from_fn(
        chart: Chart,
        f: impl Fn(usize, usize, usize) -> Component,
    ) -> AffineConnection {
        let n = chart.dim();
        let mut comps = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    comps.push(f(k, i, j));
                }
            }
        }
        AffineConnection { chart, comps }
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn comp(&self, k: usize, i: usize, j: usize) -> &Component {
        let n = self.dim();
        &self.comps[(k * n + i) * n + j]
    }

    #[inline]
    pub fn gamma(&self, k: usize, i: usize, j: usize, point: &[f64]) -> f64 {
        self.comp(k, i, j).eval(point)
    }

    /// The matrix `[Γ(i)]_{kj} = Γ^k_{ij}` for a fixed derivative direction.
    pub fn gamma_mat(&self, i: usize, point: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |k, j| self.gamma(k, i, j, point))
    }

    /// Torsion `T^k_{ij} = Γ^k_{ij} - Γ^k_{ji}` as a (1,2) tensor field.
    pub fn torsion(&self) -> TensorField {
        let n = self.dim();
        let mut comps = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let t = self.clone();
                    comps.push(Component::func(move |p| {
                        t.gamma(k, i, j, p) - t.gamma(k, j, i, p)
                    }));
                }
            }
        }
        TensorField::new(self.chart.clone(), 1, 2, comps, vec![]).expect("component count")
    }

    /// Coordinate curvature component `⟨du^l, R(∂_i, ∂_j) ∂_k⟩`.
    pub fn riemann(
        &self,
        l: usize,
        i: usize,
        j: usize,
        k: usize,
        point: &[f64],
        cfg: FdConfig,
    ) -> f64 {
        let n = self.dim();
        let d_i = fd::partial(self.comp(l, j, k), point, i, cfg);
        let d_j = fd::partial(self.comp(l, i, k), point, j, cfg);
        let mut quad = 0.0;
        for m in 0..n {
            quad += self.gamma(l, i, m, point) * self.gamma(m, j, k, point)
                - self.gamma(l, j, m, point) * self.gamma(m, i, k, point);
        }
        d_i - d_j + quad
    }

    /// Curvature as a (1,3) tensor field with index order `[l; i, j, k]`
    /// meaning `⟨du^l, R(∂_i, ∂_j) ∂_k⟩`.
    pub fn curvature(&self, cfg: FdConfig) -> TensorField {
        let n = self.dim();
        let mut comps = Vec::with_capacity(n * n * n * n);
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let t = self.clone();
                        comps.push(Component::func(move |p| t.riemann(l, i, j, k, p, cfg)));
                    }
                }
            }
        }
        TensorField::new(self.chart.clone(), 1, 3, comps, vec![]).expect("component count")
    }

    /// Max |R| over grid and index combinations.
    pub fn curvature_norm(&self, grid_m: usize, cfg: FdConfig) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for p in self.chart.grid(grid_m) {
            for l in 0..n {
                for i in 0..n {
                    for j in (i + 1)..n {
                        for k in 0..n {
                            worst = worst.max(self.riemann(l, i, j, k, &p, cfg).abs());
                        }
                    }
                }
            }
        }
        worst
    }

    pub fn torsion_norm(&self, grid_m: usize) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for p in self.chart.grid(grid_m) {
            for k in 0..n {
                for i in 0..n {
                    for j in (i + 1)..n {
                        worst =
                            worst.max((self.gamma(k, i, j, &p) - self.gamma(k, j, i, &p)).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Levi-Civita connection of `h` as pointwise closures (Koszul formula with
/// finite-difference metric derivatives). Evaluations at degenerate points
/// produce NaN, which consuming operations surface as NonFinite.
pub fn levi_civita(h: &MetricField, cfg: FdConfig) -> AffineConnection {
    let n = h.dim();
    AffineConnection::from_fn(h.chart().clone(), |k, i, j| {
        let h = h.clone();
        Component::func(move |p| {
            let ginv = match h.inverse_at(p) {
                Ok(g) => g,
                Err(_) => return f64::NAN,
            };
            let mut out = 0.0;
            for l in 0..n {
                out += ginv[(k, l)] * levi_civita_lowered(&h, i, j, l, p, cfg);
            }
            out
        })
    })
}

/// Lowered Levi-Civita symbol `Γ⁰_{ij,k} = h(∇⁰_{∂i} ∂j, ∂k)` by the Koszul
/// formula alone; never inverts the metric, so it is defined for degenerate
/// `h` as well.
pub fn levi_civita_lowered(
    h: &MetricField,
    i: usize,
    j: usize,
    k: usize,
    point: &[f64],
    cfg: FdConfig,
) -> f64 {
    let di = fd::partial(h.comp(j, k), point, i, cfg);
    let dj = fd::partial(h.comp(i, k), point, j, cfg);
    let dk = fd::partial(h.comp(i, j), point, k, cfg);
    0.5 * (di + dj - dk)
}

/// The dual connection of `gamma` with respect to `h`, defined by
/// `X h(Y,Z) = h(∇_X Y, Z) + h(Y, ∇*_X Z)`.
///
/// Nondegeneracy is validated on a grid up front; the returned closures
/// produce NaN at degenerate points, surfacing as NonFinite downstream.
pub fn dual_connection(
    h: &MetricField,
    gamma: &AffineConnection,
    cfg: FdConfig,
    grid_m: usize,
) -> Result<AffineConnection> {
    h.require_nondegenerate_on_grid(grid_m)?;
    let n = h.dim();
    let h = Arc::new(h.clone());
    let gamma = Arc::new(gamma.clone());
    Ok(AffineConnection::from_fn(h.chart().clone(), |m, i, k| {
        let h = h.clone();
        let gamma = gamma.clone();
        Component::func(move |p| {
            // solve h_{jm} Γ*^m_{ik} = ∂_i h_{jk} - Γ^l_{ij} h_{lk} over j
            let g = h.mat_at(p);
            let dh = h.d_mat_at(i, p, cfg);
            let gam_i = gamma.gamma_mat(i, p);
            let mut rhs = DVector::zeros(n);
            for j in 0..n {
                let mut v = dh[(j, k)];
                for l in 0..n {
                    v -= gam_i[(l, j)] * g[(l, k)];
                }
                rhs[j] = v;
            }
            match g.lu().solve(&rhs) {
                Some(sol) => sol[m],
                None => f64::NAN,
            }
        })
    }))
}

/// Max residual of the duality equation over a grid:
/// `|∂_i h_{jk} - h(∇_i ∂_j, ∂_k) - h(∂_j, ∇*_i ∂_k)|`.
pub fn duality_residual(
    h: &MetricField,
    gamma: &AffineConnection,
    gamma_dual: &AffineConnection,
    cfg: FdConfig,
    grid_m: usize,
) -> f64 {
    let n = h.dim();
    let mut worst = 0.0f64;
    for p in h.chart().grid(grid_m) {
        let g = h.mat_at(&p);
        for i in 0..n {
            let dh = h.d_mat_at(i, &p, cfg);
            let gi = gamma.gamma_mat(i, &p);
            let gi_dual = gamma_dual.gamma_mat(i, &p);
            for j in 0..n {
                for k in 0..n {
                    let mut r = dh[(j, k)];
                    for l in 0..n {
                        r -= gi[(l, j)] * g[(l, k)] + g[(j, l)] * gi_dual[(l, k)];
                    }
                    worst = worst.max(r.abs());
                }
            }
        }
    }
    worst
}

/// Covariant derivative of the metric, `C(X,Y,Z) = (∇_X h)(Y,Z)`, as a (0,3)
/// tensor field. For a Codazzi structure this is the cubic tensor.
pub fn nabla_h(h: &MetricField, gamma: &AffineConnection, cfg: FdConfig) -> TensorField {
    let n = h.dim();
    let mut comps = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let h = h.clone();
                let gamma = gamma.clone();
                comps.push(Component::func(move |p| {
                    let g = h.mat_at(p);
                    let mut v = fd::partial(h.comp(j, k), p, i, cfg);
                    for l in 0..h.dim() {
                        v -= gamma.gamma(l, i, j, p) * g[(l, k)]
                            + gamma.gamma(l, i, k, p) * g[(j, l)];
                    }
                    v
                }));
            }
        }
    }
    TensorField::new(h.chart().clone(), 0, 3, comps, vec![Symmetry::Pair(1, 2)])
        .expect("component count")
}

/// Residual ledger for the four classical conditions: primal torsion, dual
/// torsion, total symmetry of `∇h`, and whether the mean connection is
/// Levi-Civita.
#[derive(Debug, Clone)]
pub struct CodazziReport {
    pub torsion_primal: f64,
    pub torsion_dual: f64,
    pub cubic_symmetry: f64,
    pub mean_is_levi_civita: f64,
    pub tol: f64,
}

impl CodazziReport {
    pub fn verdicts(&self) -> [bool; 4] {
        [
            self.torsion_primal < self.tol,
            self.torsion_dual < self.tol,
            self.cubic_symmetry < self.tol,
            self.mean_is_levi_civita < self.tol,
        ]
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts().iter().all(|v| *v)
    }

    /// Whether the verdict pattern is consistent with "any two conditions
    /// imply the rest": either at most one condition holds, or all four do.
    pub fn pattern_consistent(&self) -> bool {
        let k = self.verdicts().iter().filter(|v| **v).count();
        k <= 1 || k == 4
    }
}

pub fn codazzi_report(
    h: &MetricField,
    gamma: &AffineConnection,
    gamma_dual: &AffineConnection,
    cfg: FdConfig,
    grid_m: usize,
    tol: f64,
) -> Result<CodazziReport> {
    h.require_nondegenerate_on_grid(grid_m)?;
    let n = h.dim();
    let cubic = nabla_h(h, gamma, cfg);
    let lc = levi_civita(h, cfg);
    let mut sym = 0.0f64;
    let mut mean = 0.0f64;
    for p in h.chart().grid(grid_m) {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let c_ijk = cubic.eval(&[i, j, k], &p);
                    let c_jik = cubic.eval(&[j, i, k], &p);
                    sym = sym.max((c_ijk - c_jik).abs());
                    let m = 0.5 * (gamma.gamma(k, i, j, &p) + gamma_dual.gamma(k, i, j, &p));
                    mean = mean.max((m - lc.comp(k, i, j).eval(&p)).abs());
                }
            }
        }
    }
    Ok(CodazziReport {
        torsion_primal: gamma.torsion_norm(grid_m),
        torsion_dual: gamma_dual.torsion_norm(grid_m),
        cubic_symmetry: sym,
        mean_is_levi_civita: mean,
        tol,
    })
}

/// Mutually dual torsion-free connections from a totally symmetric cubic
/// tensor: `h(∇_X Y, Z) = h(∇⁰_X Y, Z) ∓ C(X,Y,Z)/2`.
pub fn connections_from_cubic(
    h: &MetricField,
    cubic: &TensorField,
    cfg: FdConfig,
    grid_m: usize,
    sym_tol: f64,
) -> Result<(AffineConnection, AffineConnection)> {
    if cubic.rank() != (0, 3) {
        return Err(Error::validation("cubic", "must be a (0,3) tensor field"));
    }
    h.require_nondegenerate_on_grid(grid_m)?;
    let residual = total_symmetry_residual(cubic, grid_m);
    if residual > sym_tol {
        return Err(Error::AsymmetricCubic {
            residual,
            tol: sym_tol,
        });
    }
    let make = |sign: f64| {
        let h = h.clone();
        let cubic = cubic.clone();
        AffineConnection::from_fn(h.chart().clone(), move |k, i, j| {
            let h = h.clone();
            let cubic = cubic.clone();
            Component::func(move |p| {
                let ginv = match h.inverse_at(p) {
                    Ok(g) => g,
                    Err(_) => return f64::NAN,
                };
                let mut out = 0.0;
                for l in 0..h.dim() {
                    let lowered = levi_civita_lowered(&h, i, j, l, p, cfg)
                        + sign * 0.5 * cubic.eval(&[i, j, l], p);
                    out += ginv[(k, l)] * lowered;
                }
                out
            })
        })
    };
    Ok((make(-1.0), make(1.0)))
}

/// Max residual of `h(R(X,Y)Z, W) + h(Z, R*(X,Y)W) = 0` over a grid, the
/// curvature duality of a mutually dual pair on the tangent bundle.
pub fn curvature_duality_residual_tm(
    h: &MetricField,
    gamma: &AffineConnection,
    gamma_dual: &AffineConnection,
    cfg: FdConfig,
    grid_m: usize,
) -> f64 {
    let n = h.dim();
    let mut worst = 0.0f64;
    for p in h.chart().grid(grid_m) {
        let g = h.mat_at(&p);
        for i in 0..n {
            for j in (i + 1)..n {
                for k in 0..n {
                    for m in 0..n {
                        let mut r = 0.0;
                        for l in 0..n {
                            r += gamma.riemann(l, i, j, k, &p, cfg) * g[(l, m)]
                                + g[(k, l)] * gamma_dual.riemann(l, i, j, m, &p, cfg);
                        }
                        worst = worst.max(r.abs());
                    }
                }
            }
        }
    }
    worst
}

/// Max asymmetry of a (0,3) field under slot transpositions.
pub fn total_symmetry_residual(cubic: &TensorField, grid_m: usize) -> f64 {
    let n = cubic.chart().dim();
    let mut worst = 0.0f64;
    for p in cubic.chart().grid(grid_m) {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = cubic.eval(&[i, j, k], &p);
                    worst = worst.max((v - cubic.eval(&[j, i, k], &p)).abs());
                    worst = worst.max((v - cubic.eval(&[i, k, j], &p)).abs());
                }
            }
        }
    }
    worst
}
