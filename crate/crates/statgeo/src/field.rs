//! Tensor fields over a chart: component functions plus declared symmetries.
//!
//! Components are either compiled expressions or closures. Closures are how
//! derived fields (dual connections, pullback metrics, frame fields) stay
//! pointwise-evaluable without symbolic algebra.

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::expr::Program;
use nalgebra::DMatrix;
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Component {
    Expr(Arc<Program>),
    Fn(ScalarFn),
    Const(f64),
}

impl Component {
    pub fn from_expr(source: &str, vars: &[&str]) -> Result<Component> {
        Ok(Component::Expr(Arc::new(Program::parse(source, vars)?)))
    }

    pub fn func(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Component {
        Component::Fn(Arc::new(f))
    }

    pub fn constant(c: f64) -> Component {
        Component::Const(c)
    }

    #[inline]
    pub fn eval(&self, point: &[f64]) -> f64 {
        match self {
            Component::Expr(p) => p.eval(point),
            Component::Fn(f) => f(point),
            Component::Const(c) => *c,
        }
    }

    /// Evaluate and fail on NaN/inf.
    pub fn eval_checked(&self, point: &[f64], context: &str) -> Result<f64> {
        let v = self.eval(point);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::non_finite(context, point))
        }
    }

    /// Memoizing wrapper keyed on the exact point bits. Finite-difference
    /// stencils revisit the same points many times over, so expensive
    /// closures (quadrature-backed model moments, solver-backed duals) gain
    /// a lot; cheap expressions should not bother.
    pub fn cached(self) -> Component {
        match self {
            Component::Expr(_) | Component::Const(_) => self,
            Component::Fn(f) => {
                let cache: std::sync::Mutex<std::collections::HashMap<Vec<u64>, f64>> =
                    std::sync::Mutex::new(std::collections::HashMap::new());
                Component::Fn(Arc::new(move |p: &[f64]| {
                    let key: Vec<u64> = p.iter().map(|x| x.to_bits()).collect();
                    if let Some(v) = cache.lock().unwrap().get(&key) {
                        return *v;
                    }
                    let v = f(p);
                    let mut guard = cache.lock().unwrap();
                    if guard.len() >= 1 << 16 {
                        guard.clear();
                    }
                    guard.insert(key, v);
                    v
                }))
            }
        }
    }
}

impl std::fmt::Debug for Component {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Component::Expr(p) => write!(f, "Expr({})", p.source()),
            Component::Fn(_) => write!(f, "Fn(..)"),
            Component::Const(c) => write!(f, "Const({c})"),
        }
    }
}

/// Declared index symmetries, validated on a grid at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    /// Swapping the two given slots leaves the components unchanged.
    Pair(usize, usize),
    /// Invariance under every permutation of slots.
    Total,
}

#[derive(Clone, Debug)]
pub struct TensorField {
    chart: Chart,
    contra: usize,
    cova: usize,
    comps: Vec<Component>,
    symmetry: Vec<Symmetry>,
}

impl TensorField {
    pub fn new(
        chart: Chart,
        contra: usize,
        cova: usize,
        comps: Vec<Component>,
        symmetry: Vec<Symmetry>,
    ) -> Result<TensorField> {
        let n = chart.dim();
        let expected = n.pow((contra + cova) as u32);
        if comps.len() != expected {
            return Err(Error::validation(
                "tensor field",
                format!(
                    "component count {} does not match n^(r+s) = {}^{} = {}",
                    comps.len(),
                    n,
                    contra + cova,
                    expected
                ),
            ));
        }
        Ok(TensorField {
            chart,
            contra,
            cova,
            comps,
            symmetry,
        })
    }

    /// Scalar field (rank 0).
    pub fn scalar(chart: Chart, comp: Component) -> TensorField {
        TensorField {
            chart,
            contra: 0,
            cova: 0,
            comps: vec![comp],
            symmetry: vec![],
        }
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn rank(&self) -> (usize, usize) {
        (self.contra, self.cova)
    }

    pub fn order(&self) -> usize {
        self.contra + self.cova
    }

    pub fn symmetry(&self) -> &[Symmetry] {
        &self.symmetry
    }

    pub fn components(&self) -> &[Component] {
        &self.comps
    }

    #[inline]
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let n = self.chart.dim();
        debug_assert_eq!(idx.len(), self.order());
        let mut f = 0usize;
        for &i in idx {
            debug_assert!(i < n);
            f = f * n + i;
        }
        f
    }

    pub fn comp(&self, idx: &[usize]) -> &Component {
        &self.comps[self.flat_index(idx)]
    }

    #[inline]
    pub fn eval(&self, idx: &[usize], point: &[f64]) -> f64 {
        self.comp(idx).eval(point)
    }

    /// All components at a point, in flat (row-major) order.
    pub fn eval_all(&self, point: &[f64]) -> Vec<f64> {
        self.comps.iter().map(|c| c.eval(point)).collect()
    }

    /// Max over the grid and over declared symmetries of the asymmetry
    /// `|T[..i..j..] - T[..j..i..]|`.
    pub fn symmetry_residual(&self, grid_m: usize) -> f64 {
        if self.symmetry.is_empty() {
            return 0.0;
        }
        let order = self.order();
        let mut swaps: Vec<(usize, usize)> = Vec::new();
        for s in &self.symmetry {
            match *s {
                Symmetry::Pair(a, b) => swaps.push((a, b)),
                Symmetry::Total => {
                    // adjacent transpositions generate all permutations
                    for a in 0..order.saturating_sub(1) {
                        swaps.push((a, a + 1));
                    }
                }
            }
        }
        let n = self.chart.dim();
        let mut worst = 0.0f64;
        for point in self.chart.grid(grid_m) {
            let vals = self.eval_all(&point);
            let mut idx = vec![0usize; order];
            loop {
                let f = {
                    let mut acc = 0usize;
                    for &i in &idx {
                        acc = acc * n + i;
                    }
                    acc
                };
                for &(a, b) in &swaps {
                    let mut jdx = idx.clone();
                    jdx.swap(a, b);
                    let g = {
                        let mut acc = 0usize;
                        for &i in &jdx {
                            acc = acc * n + i;
                        }
                        acc
                    };
                    worst = worst.max((vals[f] - vals[g]).abs());
                }
                // advance multi-index
                let mut d = 0;
                loop {
                    if order == 0 {
                        return worst;
                    }
                    idx[d] += 1;
                    if idx[d] < n {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                    if d == order {
                        return worst;
                    }
                }
            }
        }
        worst
    }

    /// Validate declared symmetries within `tol` on a `m^n` grid.
    pub fn validate_symmetry(&self, grid_m: usize, tol: f64) -> Result<()> {
        let r = self.symmetry_residual(grid_m);
        if r <= tol {
            Ok(())
        } else {
            Err(Error::validation(
                "tensor field",
                format!("declared symmetry violated: residual {r:.3e} > {tol:.3e}"),
            ))
        }
    }
}

/// A rectangular matrix of component functions over a chart.
///
/// Used for frame fields, bundle map blocks, connection form matrices and
/// other fiber-indexed data that is not a tensor on the base.
#[derive(Clone, Debug)]
pub struct MatrixField {
    rows: usize,
    cols: usize,
    comps: Vec<Component>, // row-major
}

impl MatrixField {
    pub fn new(rows: usize, cols: usize, comps: Vec<Component>) -> MatrixField {
        assert_eq!(comps.len(), rows * cols);
        MatrixField { rows, cols, comps }
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        f: impl Fn(usize, usize) -> Component,
    ) -> MatrixField {
        let mut comps = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                comps.push(f(r, c));
            }
        }
        MatrixField { rows, cols, comps }
    }

    pub fn identity(n: usize) -> MatrixField {
        MatrixField::from_fn(n, n, |r, c| Component::constant(if r == c { 1.0 } else { 0.0 }))
    }

    pub fn zeros(rows: usize, cols: usize) -> MatrixField {
        MatrixField::from_fn(rows, cols, |_, _| Component::constant(0.0))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn comp(&self, r: usize, c: usize) -> &Component {
        &self.comps[r * self.cols + c]
    }

    #[inline]
    pub fn eval(&self, r: usize, c: usize, point: &[f64]) -> f64 {
        self.comps[r * self.cols + c].eval(point)
    }

    pub fn eval_mat(&self, point: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.eval(r, c, point))
    }

    /// Wrap a whole-matrix closure; each component evaluation recomputes the
    /// matrix, so prefer this only for cheap closures.
    pub fn from_matrix_fn(
        rows: usize,
        cols: usize,
        f: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> MatrixField {
        let f = Arc::new(f);
        MatrixField::from_fn(rows, cols, |r, c| {
            let f = f.clone();
            Component::func(move |p| f(p)[(r, c)])
        })
    }

    /// Memoize every component (see [`Component::cached`]).
    pub fn cached(self) -> MatrixField {
        MatrixField {
            rows: self.rows,
            cols: self.cols,
            comps: self.comps.into_iter().map(|c| c.cached()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart2() -> Chart {
        Chart::new(&["u", "v"], &[[-1.0, 1.0], [-1.0, 1.0]], &[0.1, 0.2]).unwrap()
    }

    #[test]
    fn component_count_checked() {
        let c = chart2();
        let comps = vec![Component::constant(1.0); 3];
        assert!(TensorField::new(c, 0, 2, comps, vec![]).is_err());
    }

    #[test]
    fn flat_indexing_row_major() {
        let c = chart2();
        let comps: Vec<Component> = (0..8).map(|k| Component::constant(k as f64)).collect();
        let t = TensorField::new(c, 0, 3, comps, vec![]).unwrap();
        assert_eq!(t.eval(&[1, 0, 1], &[0.0, 0.0]), 5.0);
        assert_eq!(t.eval(&[0, 1, 1], &[0.0, 0.0]), 3.0);
    }

    #[test]
    fn symmetry_validation() {
        let c = chart2();
        let sym = TensorField::new(
            c.clone(),
            0,
            2,
            vec![
                Component::from_expr("u", &["u", "v"]).unwrap(),
                Component::from_expr("u*v", &["u", "v"]).unwrap(),
                Component::from_expr("v*u", &["u", "v"]).unwrap(),
                Component::constant(1.0),
            ],
            vec![Symmetry::Pair(0, 1)],
        )
        .unwrap();
        assert!(sym.validate_symmetry(5, 1e-9).is_ok());

        let asym = TensorField::new(
            c,
            0,
            2,
            vec![
                Component::constant(0.0),
                Component::constant(1.0),
                Component::constant(-1.0),
                Component::constant(0.0),
            ],
            vec![Symmetry::Pair(0, 1)],
        )
        .unwrap();
        assert!(asym.validate_symmetry(3, 1e-9).is_err());
        assert!((asym.symmetry_residual(3) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn matrix_field_eval() {
        let m = MatrixField::from_fn(2, 2, |r, c| {
            if r == c {
                Component::from_expr("u+v", &["u", "v"]).unwrap()
            } else {
                Component::constant(0.0)
            }
        });
        let a = m.eval_mat(&[1.0, 2.0]);
        assert_eq!(a[(0, 0)], 3.0);
        assert_eq!(a[(0, 1)], 0.0);
    }
}
