//! Quadrature rules: exact sums over finite sample spaces, Gauss-Legendre on
//! an interval, Gauss-Hermite on the real line.
//!
//! Every rule self-tests polynomial exactness at construction, so a bad node
//! table cannot silently corrupt the statistical-model integrals downstream.

use crate::error::{Error, Result};
use crate::field::Component;
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

#[derive(Debug, Clone)]
pub enum QuadratureRule {
    /// Exact weighted sum over an enumerated sample space.
    FiniteSum { nodes: Vec<f64>, weights: Vec<f64> },
    /// Gauss-Legendre with `n` nodes mapped to `[a, b]`.
    GaussLegendre {
        a: f64,
        b: f64,
        nodes: Vec<f64>,
        weights: Vec<f64>,
    },
    /// Gauss-Hermite with `n` nodes in the probabilists' scaling; the stored
    /// weights carry the inverse weight factor, so the rule approximates a
    /// plain integral over the real line and is exact for polynomials times
    /// the standard normal density.
    GaussHermite { nodes: Vec<f64>, weights: Vec<f64> },
}

pub const DEFAULT_NODES: usize = 64;

impl QuadratureRule {
    pub fn finite_sum(points: &[f64]) -> QuadratureRule {
        QuadratureRule::FiniteSum {
            nodes: points.to_vec(),
            weights: vec![1.0; points.len()],
        }
    }

    pub fn finite_sum_weighted(points: &[f64], weights: &[f64]) -> Result<QuadratureRule> {
        if points.len() != weights.len() {
            return Err(Error::validation(
                "finite_sum",
                "node and weight counts differ",
            ));
        }
        Ok(QuadratureRule::FiniteSum {
            nodes: points.to_vec(),
            weights: weights.to_vec(),
        })
    }

    pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<QuadratureRule> {
        if n < 2 {
            return Err(Error::validation("gauss_legendre", "need at least 2 nodes"));
        }
        if !(a < b) {
            return Err(Error::validation("gauss_legendre", "empty interval"));
        }
        let (xs, ws) = legendre_base(n)?;
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let nodes: Vec<f64> = xs.iter().map(|x| mid + half * x).collect();
        let weights: Vec<f64> = ws.iter().map(|w| half * w).collect();
        let rule = QuadratureRule::GaussLegendre {
            a,
            b,
            nodes,
            weights,
        };
        rule.self_test()?;
        Ok(rule)
    }

    pub fn gauss_hermite(n: usize) -> Result<QuadratureRule> {
        if n < 2 {
            return Err(Error::validation("gauss_hermite", "need at least 2 nodes"));
        }
        let (nodes, weights) = hermite_base(n)?;
        let rule = QuadratureRule::GaussHermite { nodes, weights };
        rule.self_test()?;
        Ok(rule)
    }

    pub fn nodes(&self) -> &[f64] {
        match self {
            QuadratureRule::FiniteSum { nodes, .. } => nodes,
            QuadratureRule::GaussLegendre { nodes, .. } => nodes,
            QuadratureRule::GaussHermite { nodes, .. } => nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes().is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let (nodes, weights) = match self {
            QuadratureRule::FiniteSum { nodes, weights } => (nodes, weights),
            QuadratureRule::GaussLegendre { nodes, weights, .. } => (nodes, weights),
            QuadratureRule::GaussHermite { nodes, weights } => (nodes, weights),
        };
        let mut acc = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            acc += w * f(*x);
        }
        acc
    }

    fn self_test(&self) -> Result<()> {
        match self {
            QuadratureRule::FiniteSum { .. } => Ok(()),
            QuadratureRule::GaussLegendre { a, b, .. } => {
                let degree_cap = (2 * self.len() - 1).min(16);
                for k in 0..=degree_cap {
                    let exact = ((b.powi(k as i32 + 1)) - (a.powi(k as i32 + 1))) / (k as f64 + 1.0);
                    let got = self.integrate(|x| x.powi(k as i32));
                    let scale = exact.abs().max(1.0);
                    if (got - exact).abs() > 1e-12 * scale {
                        return Err(Error::QuadratureFailure {
                            msg: format!(
                                "Gauss-Legendre exactness failed at degree {k}: {got} vs {exact}"
                            ),
                        });
                    }
                }
                Ok(())
            }
            QuadratureRule::GaussHermite { .. } => {
                // moments of exp(-x^2/2): sqrt(2 pi) (2m-1)!!
                let mut exact = (2.0 * std::f64::consts::PI).sqrt();
                for m in 0..=8usize {
                    let got = self.integrate(|x| (-0.5 * x * x).exp() * x.powi(2 * m as i32));
                    if (got - exact).abs() > 1e-12 * exact.abs() {
                        return Err(Error::QuadratureFailure {
                            msg: format!(
                                "Gauss-Hermite moment 2m={} failed: {got} vs {exact}",
                                2 * m
                            ),
                        });
                    }
                    exact *= (2 * m + 1) as f64;
                }
                Ok(())
            }
        }
    }
}

/// Integrate `f(x; params)` over the sample variable. The component's
/// variables must be ordered `[x, params...]`.
pub fn quad_integrate(f: &Component, rule: &QuadratureRule, params: &[f64]) -> Result<f64> {
    let mut vals = Vec::with_capacity(1 + params.len());
    vals.push(0.0);
    vals.extend_from_slice(params);
    let mut bad: Option<f64> = None;
    let total = rule.integrate(|x| {
        vals[0] = x;
        let v = f.eval(&vals);
        if !v.is_finite() && bad.is_none() {
            bad = Some(x);
        }
        v
    });
    if let Some(x) = bad {
        return Err(Error::non_finite("quad_integrate", &[x]));
    }
    if !total.is_finite() {
        return Err(Error::non_finite("quad_integrate", params));
    }
    Ok(total)
}

fn legendre_cache() -> &'static Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss-Legendre nodes/weights on [-1, 1] via Newton iteration on P_n.
fn legendre_base(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(hit) = legendre_cache().lock().unwrap().get(&n) {
        return Ok(hit.clone());
    }
    let mut xs = vec![0.0f64; n];
    let mut ws = vec![0.0f64; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n and P_n' by recurrence
            let mut p0 = 1.0f64;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), p0 = P_{n-1}(x)
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        if !x.is_finite() || !w.is_finite() {
            return Err(Error::QuadratureFailure {
                msg: format!("Gauss-Legendre Newton iteration failed for n={n}"),
            });
        }
        xs[i] = -x;
        ws[i] = w;
        xs[n - 1 - i] = x;
        ws[n - 1 - i] = w;
    }
    legendre_cache()
        .lock()
        .unwrap()
        .insert(n, (xs.clone(), ws.clone()));
    Ok((xs, ws))
}

/// Gauss-Hermite nodes and weights via Golub-Welsch, rescaled by sqrt(2) to
/// the probabilists' convention and with the inverse weight folded in. The
/// returned pair integrates plain functions over the real line exactly when
/// they are polynomials times exp(-x^2/2).
fn hermite_base(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&n) {
        return Ok(hit.clone());
    }
    // Jacobi matrix for physicists' Hermite polynomials: zero diagonal,
    // off-diagonal sqrt(k/2).
    let mut jac = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(jac);
    let mu0 = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let x = eig.eigenvalues[j];
            let v0 = eig.eigenvectors[(0, j)];
            (x, mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let sqrt2 = std::f64::consts::SQRT_2;
    let nodes: Vec<f64> = pairs.iter().map(|(x, _)| sqrt2 * x).collect();
    let weights: Vec<f64> = pairs
        .iter()
        .map(|(x, w)| sqrt2 * w * (x * x).exp())
        .collect();
    if nodes.iter().any(|x| !x.is_finite()) || weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::QuadratureFailure {
            msg: format!("Gauss-Hermite eigen decomposition failed for n={n}"),
        });
    }
    cache
        .lock()
        .unwrap()
        .insert(n, (nodes.clone(), weights.clone()));
    Ok((nodes, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_sum_normalization() {
        let rule = QuadratureRule::finite_sum_weighted(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        let f = Component::constant(1.0);
        assert_eq!(quad_integrate(&f, &rule, &[]).unwrap(), 1.0);
    }

    #[test]
    fn legendre_polynomial_exactness() {
        let rule = QuadratureRule::gauss_legendre(64, 0.0, 1.0).unwrap();
        let f = Component::from_expr("3*x^2", &["x"]).unwrap();
        let v = quad_integrate(&f, &rule, &[]).unwrap();
        assert!((v - 1.0).abs() < 1e-14, "got {v}");
    }

    #[test]
    fn hermite_second_moment_of_standard_normal() {
        let rule = QuadratureRule::gauss_hermite(64).unwrap();
        let f = Component::from_expr("x^2 * exp(-x^2/2) / sqrt(2*pi)", &["x"]).unwrap();
        let v = quad_integrate(&f, &rule, &[]).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn hermite_handles_shifted_gaussians() {
        let rule = QuadratureRule::gauss_hermite(64).unwrap();
        // mean of N(mu, sigma^2) with (mu, sigma) = (0.3, 1.3)
        let f = Component::from_expr(
            "x * exp(-(x-m)^2/(2*s^2)) / (s*sqrt(2*pi))",
            &["x", "m", "s"],
        )
        .unwrap();
        let v = quad_integrate(&f, &rule, &[0.3, 1.3]).unwrap();
        assert!((v - 0.3).abs() < 1e-10, "got {v}");
    }

    #[test]
    fn non_finite_node_detected() {
        let rule = QuadratureRule::gauss_legendre(8, -1.0, 1.0).unwrap();
        let f = Component::from_expr("1/x", &["x"]).unwrap();
        // nodes are symmetric and nonzero, so this integrates fine
        assert!(quad_integrate(&f, &rule, &[]).is_ok());
        let g = Component::from_expr("log(x)", &["x"]).unwrap();
        assert!(matches!(
            quad_integrate(&g, &rule, &[]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn node_count_invariant() {
        assert!(QuadratureRule::gauss_legendre(1, 0.0, 1.0).is_err());
        assert!(QuadratureRule::gauss_hermite(1).is_err());
    }
}
