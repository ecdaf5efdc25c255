//! Para-Hermitian vector bundles of rank 2n over an n-dimensional chart:
//! a fiber metric of signature (n, n), an involution anti-compatible with
//! it, and the splitting into the ±1 eigenbundles.
//!
//! The eigen-splitting is computed from the projectors `(id ± I)/2` applied
//! to constant seed vectors chosen at the basepoint, so the resulting frames
//! are automatically smooth over the (contractible) chart box; pointwise
//! eigen-solvers would not be.

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::field::{Component, MatrixField};
use nalgebra::DMatrix;
use std::sync::Arc;

pub const ALGEBRAIC_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct ParaHermitianBundle {
    chart: Chart,
    /// Fiber metric components in the ambient frame, 2n x 2n symmetric.
    tau: MatrixField,
    /// Involution components, column action: `(I xi)^A = I[A][B] xi^B`.
    invol: MatrixField,
}

impl ParaHermitianBundle {
    pub fn new(chart: Chart, tau: MatrixField, invol: MatrixField) -> Result<ParaHermitianBundle> {
        let n = chart.dim();
        let r = 2 * n;
        if tau.rows() != r || tau.cols() != r || invol.rows() != r || invol.cols() != r {
            return Err(Error::validation(
                "bundle",
                format!("tau and involution must be {r}x{r} over an {n}-chart"),
            ));
        }
        let b = ParaHermitianBundle { chart, tau, invol };
        b.validate(5)?;
        Ok(b)
    }

    fn validate(&self, grid_m: usize) -> Result<()> {
        let n = self.chart.dim();
        let r = 2 * n;
        let id = DMatrix::<f64>::identity(r, r);
        let mut nontrivial = false;
        for p in self.chart.grid(grid_m) {
            let i_mat = self.invol.eval_mat(&p);
            let t = self.tau.eval_mat(&p);
            if (&i_mat * &i_mat - &id).abs().max() > ALGEBRAIC_TOL {
                return Err(Error::validation(
                    "bundle",
                    format!("involution does not square to the identity at {p:?}"),
                ));
            }
            if (&i_mat - &id).abs().max() > ALGEBRAIC_TOL {
                nontrivial = true;
            }
            // equal eigenbundle ranks via the involution trace
            if i_mat.trace().abs() > 1e-8 {
                return Err(Error::UnequalEigenRanks { point: p.clone() });
            }
            if (&t - &t.transpose()).abs().max() > ALGEBRAIC_TOL {
                return Err(Error::validation(
                    "bundle",
                    format!("fiber metric is not symmetric at {p:?}"),
                ));
            }
            if (i_mat.transpose() * &t + &t * &i_mat).abs().max() > ALGEBRAIC_TOL {
                return Err(Error::validation(
                    "bundle",
                    format!("fiber metric is not anti-invariant under I at {p:?}"),
                ));
            }
            let eig = nalgebra::SymmetricEigen::new(t.clone());
            let pos = eig.eigenvalues.iter().filter(|e| **e > 0.0).count();
            if pos != n {
                return Err(Error::validation(
                    "bundle",
                    format!("fiber metric signature is not (n, n) at {p:?}"),
                ));
            }
            // omega(x, y) = tau(x, I y) must be antisymmetric
            let omega = &t * &i_mat;
            if (&omega + &omega.transpose()).abs().max() > ALGEBRAIC_TOL {
                return Err(Error::validation(
                    "bundle",
                    format!("tau(., I.) is not antisymmetric at {p:?}"),
                ));
            }
        }
        if !nontrivial {
            return Err(Error::validation("bundle", "involution equals the identity"));
        }
        Ok(())
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn base_dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn rank(&self) -> usize {
        2 * self.chart.dim()
    }

    pub fn tau(&self) -> &MatrixField {
        &self.tau
    }

    pub fn invol(&self) -> &MatrixField {
        &self.invol
    }

    /// Smooth adapted frame: the first n columns span E+, the last n span
    /// E-. Seeds are the ambient basis vectors most independent under the
    /// eigenprojectors at the basepoint, fixed across the chart.
    pub fn eigen_split(&self, grid_m: usize) -> Result<EigenSplit> {
        let n = self.base_dim();
        let r = self.rank();
        let bp = self.chart.basepoint().to_vec();
        let i_bp = self.invol.eval_mat(&bp);
        let id = DMatrix::<f64>::identity(r, r);
        let proj_plus = (&id + &i_bp) * 0.5;
        let proj_minus = (&id - &i_bp) * 0.5;
        let plus_seeds = pick_seeds(&proj_plus, n)?;
        let minus_seeds = pick_seeds(&proj_minus, n)?;

        let invol = Arc::new(self.invol.clone());
        let seeds = (plus_seeds.clone(), minus_seeds.clone());
        let frame = MatrixField::from_fn(r, r, move |row, col| {
            let invol = invol.clone();
            let (ref sp, ref sm) = seeds;
            let (sign, seed) = if col < n {
                (1.0, sp[col])
            } else {
                (-1.0, sm[col - n])
            };
            Component::func(move |p| {
                // (id ± I)/2 applied to the seed basis vector
                let i_mat = invol.eval_mat(p);
                0.5 * ((if row == seed { 1.0 } else { 0.0 }) + sign * i_mat[(row, seed)])
            })
        });

        let split = EigenSplit {
            chart: self.chart.clone(),
            frame,
            plus_seeds,
            minus_seeds,
        };
        split.validate(self, grid_m)?;
        Ok(split)
    }
}

fn pick_seeds(proj: &DMatrix<f64>, n: usize) -> Result<Vec<usize>> {
    // greedy column-pivoted Gram-Schmidt over the projected basis vectors
    let r = proj.nrows();
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<(usize, f64, nalgebra::DVector<f64>)> = None;
        for a in 0..r {
            if chosen.contains(&a) {
                continue;
            }
            let mut v = proj.column(a).into_owned();
            for b in &basis {
                let coef = v.dot(b);
                v -= b * coef;
            }
            let norm = v.norm();
            if best.as_ref().map_or(true, |(_, bn, _)| norm > *bn) {
                best = Some((a, norm, v));
            }
        }
        let (a, norm, v) = best.expect("ambient rank exceeds n");
        if norm < 1e-8 {
            return Err(Error::validation(
                "eigen_split",
                "projected seed vectors do not span the eigenbundle",
            ));
        }
        chosen.push(a);
        basis.push(v / norm);
    }
    Ok(chosen)
}

/// A smooth frame adapted to the eigen-splitting.
#[derive(Clone, Debug)]
pub struct EigenSplit {
    chart: Chart,
    /// 2n x 2n ambient components; column k is the k-th frame section.
    pub frame: MatrixField,
    pub plus_seeds: Vec<usize>,
    pub minus_seeds: Vec<usize>,
}

impl EigenSplit {
    fn validate(&self, bundle: &ParaHermitianBundle, grid_m: usize) -> Result<()> {
        let n = bundle.base_dim();
        for p in self.chart.grid(grid_m) {
            let m = self.frame.eval_mat(&p);
            let i_mat = bundle.invol.eval_mat(&p);
            let im = &i_mat * &m;
            for col in 0..2 * n {
                let sign = if col < n { 1.0 } else { -1.0 };
                for row in 0..2 * n {
                    if (im[(row, col)] - sign * m[(row, col)]).abs() > 1e-9 {
                        return Err(Error::validation(
                            "eigen_split",
                            format!("frame column {col} fails I nu = ±nu at {p:?}"),
                        ));
                    }
                }
            }
            // frame stays a basis across the grid
            let sv = m.svd(false, false).singular_values;
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for s in sv.iter() {
                lo = lo.min(*s);
                hi = hi.max(*s);
            }
            if lo < 1e-8 * hi {
                return Err(Error::UnequalEigenRanks { point: p.clone() });
            }
        }
        Ok(())
    }

    /// Pairing block `P_kl = tau(a_k, b_l)` of the adapted frame.
    pub fn pairing(&self, bundle: &ParaHermitianBundle) -> MatrixField {
        let n = bundle.base_dim();
        let frame = Arc::new(self.frame.clone());
        let tau = Arc::new(bundle.tau().clone());
        MatrixField::from_fn(n, n, move |k, l| {
            let frame = frame.clone();
            let tau = tau.clone();
            Component::func(move |p| {
                let m = frame.eval_mat(p);
                let t = tau.eval_mat(p);
                (m.column(k).transpose() * &t * m.column(n + l))[(0, 0)]
            })
        })
    }

    /// Components of an ambient-frame bundle map in the adapted frame:
    /// solves `frame * adapted = raw` pointwise and splits the result into
    /// the E+ and E- blocks (n x cols each).
    pub fn adapt_map(&self, raw: &MatrixField) -> (MatrixField, MatrixField) {
        let n = self.chart.dim();
        let cols = raw.cols();
        let frame = Arc::new(self.frame.clone());
        let raw = Arc::new(raw.clone());
        let solve = Arc::new(move |p: &[f64]| -> DMatrix<f64> {
            let m = frame.eval_mat(p);
            let rhs = raw.eval_mat(p);
            let cols = rhs.ncols();
            m.lu()
                .solve(&rhs)
                .unwrap_or_else(|| DMatrix::from_element(2 * n, cols, f64::NAN))
        });
        let s1 = solve.clone();
        let plus = MatrixField::from_fn(n, cols, move |r, c| {
            let s = s1.clone();
            Component::func(move |p| s(p)[(r, c)])
        });
        let minus = MatrixField::from_fn(n, cols, move |r, c| {
            let s = solve.clone();
            Component::func(move |p| s(p)[(n + r, c)])
        });
        (plus, minus)
    }
}

/// The Whitney-sum model bundle: `tau((x,a),(y,b)) = b(x) + a(y)`,
/// `I(x, a) = (x, -a)`, already in adapted form.
pub fn whitney_sum_bundle(chart: Chart) -> ParaHermitianBundle {
    let n = chart.dim();
    let tau = MatrixField::from_fn(2 * n, 2 * n, |r, c| {
        let hit = (r < n && c >= n && c - n == r) || (c < n && r >= n && r - n == c);
        Component::constant(if hit { 1.0 } else { 0.0 })
    });
    let invol = MatrixField::from_fn(2 * n, 2 * n, |r, c| {
        Component::constant(if r == c {
            if r < n {
                1.0
            } else {
                -1.0
            }
        } else {
            0.0
        })
    });
    ParaHermitianBundle::new(chart, tau, invol).expect("model bundle is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart2() -> Chart {
        Chart::new(&["u", "v"], &[[-1.0, 1.0], [-1.0, 1.0]], &[0.1, 0.2]).unwrap()
    }

    #[test]
    fn whitney_sum_splits_into_coordinate_blocks() {
        let b = whitney_sum_bundle(chart2());
        let split = b.eigen_split(4).unwrap();
        assert_eq!(split.plus_seeds, vec![0, 1]);
        assert_eq!(split.minus_seeds, vec![2, 3]);
        let p = [0.3, -0.2];
        let m = split.frame.eval_mat(&p);
        assert!((m - DMatrix::<f64>::identity(4, 4)).abs().max() < 1e-12);
        let pair = split.pairing(&b);
        assert!((pair.eval_mat(&p) - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn rotated_involution_recovers_split() {
        // conjugate the standard rank-2 structure by a position-dependent
        // rotation; the split must track it smoothly
        let chart = Chart::new(&["u"], &[[-1.0, 1.0]], &[0.2]).unwrap();
        let rot = |p: &[f64]| {
            let a = 0.4 * p[0];
            DMatrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()])
        };
        let tau0 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let i0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let tau = MatrixField::from_matrix_fn(2, 2, move |p| {
            let g = rot(p);
            g.transpose() * &tau0 * &g
        });
        let rot2 = |p: &[f64]| {
            let a = 0.4 * p[0];
            DMatrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()])
        };
        let invol = MatrixField::from_matrix_fn(2, 2, move |p| {
            let g = rot2(p);
            let gi = g.clone().try_inverse().unwrap();
            gi * &i0 * &g
        });
        let b = ParaHermitianBundle::new(chart, tau, invol).unwrap();
        let split = b.eigen_split(5).unwrap();
        let pair = split.pairing(&b);
        for p in b.chart().grid(5) {
            let v = pair.eval_mat(&p)[(0, 0)];
            assert!(v.abs() > 0.1, "pairing collapsed at {p:?}: {v}");
        }
    }

    #[test]
    fn invalid_involution_rejected() {
        let chart = chart2();
        let tau = MatrixField::from_fn(4, 4, |r, c| {
            let hit = (r < 2 && c >= 2 && c - 2 == r) || (c < 2 && r >= 2 && r - 2 == c);
            Component::constant(if hit { 1.0 } else { 0.0 })
        });
        // identity involution is forbidden
        let invol = MatrixField::identity(4);
        assert!(ParaHermitianBundle::new(chart, tau, invol).is_err());
    }

    #[test]
    fn unequal_ranks_rejected() {
        let chart = chart2();
        let tau = MatrixField::from_fn(4, 4, |r, c| {
            Component::constant(if r == c {
                if r < 2 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                0.0
            })
        });
        // diag(1,1,1,-1) squares to id but has a rank-3 plus eigenspace
        let invol = MatrixField::from_fn(4, 4, |r, c| {
            Component::constant(if r == c {
                if r < 3 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                0.0
            })
        });
        assert!(matches!(
            ParaHermitianBundle::new(chart, tau, invol),
            Err(Error::UnequalEigenRanks { .. }) | Err(Error::Validation { .. })
        ));
    }
}
