//! Wavefront surfaces in flat 3-space as quasi-Codazzi structures.
//!
//! For a parametrized surface `f(u, v)` admitting a smooth unit normal ν,
//! the tangential bundle (vectors along f orthogonal to ν) carries the
//! tangential part D of the flat ambient derivative. Both `df` and the
//! normal derivative `∂ν` land in that bundle, and
//! `Φ = (df, ∂ν)` is a Lagrange map into the doubled bundle with pairing
//! `tau((a,b),(c,d)) = ⟨a,d⟩ + ⟨b,c⟩` and involution `(a,b) ↦ (a,-b)`.
//!
//! The normal is the normalized cross product of the coordinate derivatives
//! with its sign desingularized: at a frontal singularity the cross product
//! vanishes to first order and its normalized direction flips, so the
//! builder counts orientation flips along the straight segment from the
//! chart basepoint and undoes them. The overall sign is fixed by making the
//! largest normal component at the basepoint positive.

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::fd::{self, FdConfig, Scheme};
use crate::field::{Component, MatrixField};
use crate::qcs::{BundleConnection, QuasiCodazziStructure, StructurePolicy};
use nalgebra::Vector3;
use std::sync::Arc;

#[derive(Debug, Clone, Copy)]
pub struct FrontConfig {
    /// Step for derivatives of the surface map (innermost level).
    pub df_step: FdConfig,
    /// Step for derivatives of the normal and the tangent frame.
    pub dnu_step: FdConfig,
    /// Samples along the desingularization segment.
    pub segment_samples: usize,
    /// Relative cross-product magnitude below which a sample is skipped.
    pub near_zero: f64,
}

impl Default for FrontConfig {
    fn default() -> Self {
        FrontConfig {
            df_step: FdConfig::new(5e-3, Scheme::Central4, true),
            dnu_step: FdConfig::new(1e-2, Scheme::Central4, true),
            segment_samples: 48,
            near_zero: 1e-6,
        }
    }
}

#[derive(Clone)]
pub struct FrontSurface {
    chart: Chart,
    map: [Component; 3],
    cfg: FrontConfig,
}

/// The structure of a front together with the fields a caller may want to
/// inspect: the smooth unit normal and the tangent frame.
pub struct FrontStructure {
    pub structure: QuasiCodazziStructure,
    pub normal: Arc<dyn Fn(&[f64]) -> Vector3<f64> + Send + Sync>,
    pub tangent_frame: Arc<dyn Fn(&[f64]) -> [Vector3<f64>; 2] + Send + Sync>,
    pub surface: FrontSurface,
}

impl FrontSurface {
    pub fn new(chart: Chart, map: [Component; 3], cfg: FrontConfig) -> Result<FrontSurface> {
        if chart.dim() != 2 {
            return Err(Error::validation(
                "front",
                "wavefront surfaces are parametrized over a 2-dimensional chart",
            ));
        }
        Ok(FrontSurface { chart, map, cfg })
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn position(&self, p: &[f64]) -> Vector3<f64> {
        Vector3::new(
            self.map[0].eval(p),
            self.map[1].eval(p),
            self.map[2].eval(p),
        )
    }

    /// Coordinate derivative of the surface map.
    pub fn d_position(&self, axis: usize, p: &[f64]) -> Vector3<f64> {
        Vector3::new(
            fd::partial(&self.map[0], p, axis, self.cfg.df_step),
            fd::partial(&self.map[1], p, axis, self.cfg.df_step),
            fd::partial(&self.map[2], p, axis, self.cfg.df_step),
        )
    }

    fn cross(&self, p: &[f64]) -> Vector3<f64> {
        self.d_position(0, p).cross(&self.d_position(1, p))
    }

    /// Smooth unit normal via flip counting along the segment from the
    /// basepoint. Exactly on the singular locus (cross product below the
    /// near-zero threshold) the normal is averaged from nearby samples.
    pub fn normal(&self, p: &[f64]) -> Vector3<f64> {
        let bp = self.chart.basepoint();
        let w_bp = self.cross(bp);
        debug_assert!(w_bp.norm() > 0.0, "cross product vanishes at the basepoint");
        // orientation convention: largest-magnitude component positive
        let nu0 = w_bp / w_bp.norm();
        let lead = (0..3)
            .max_by(|a, b| nu0[*a].abs().total_cmp(&nu0[*b].abs()))
            .unwrap();
        let base_sign = if nu0[lead] >= 0.0 { 1.0 } else { -1.0 };

        let w_p = self.cross(p);
        let scale = w_bp.norm().max(w_p.norm());
        if w_p.norm() <= self.cfg.near_zero * scale {
            // On the locus the direction of the cross product is noise, but
            // the true normal is smooth: average it from straddling samples
            // that are verifiably off the locus (so the recursion cannot
            // land back in this branch).
            let delta = 1e-4 * self.chart.shortest_edge();
            let mut acc = Vector3::zeros();
            for axis in 0..2 {
                for sgn in [-1.0, 1.0] {
                    let mut q = p.to_vec();
                    q[axis] += sgn * delta;
                    if self.chart.contains(&q)
                        && self.cross(&q).norm() > self.cfg.near_zero * scale
                    {
                        acc += self.normal(&q);
                    }
                }
            }
            let n = acc.norm();
            if n > 0.0 {
                return acc / n;
            }
            return Vector3::new(f64::NAN, f64::NAN, f64::NAN);
        }

        // count orientation flips of the cross product along the segment
        let k = self.cfg.segment_samples;
        let mut flips = 0usize;
        let mut prev = w_bp;
        for step in 1..=k {
            let t = step as f64 / k as f64;
            let q: Vec<f64> = bp
                .iter()
                .zip(p.iter())
                .map(|(a, b)| a + t * (b - a))
                .collect();
            let w = self.cross(&q);
            if w.norm() <= self.cfg.near_zero * scale {
                continue;
            }
            if prev.dot(&w) < 0.0 {
                flips += 1;
            }
            prev = w;
        }
        let sign = base_sign * if flips % 2 == 0 { 1.0 } else { -1.0 };
        sign * w_p / w_p.norm()
    }

    /// Orthonormal tangent frame: Gram-Schmidt of the projections of two
    /// ambient axes, chosen at the basepoint and fixed across the chart.
    fn frame_axes(&self) -> [usize; 2] {
        let nu = self.normal(self.chart.basepoint());
        let mut axes: Vec<usize> = (0..3).collect();
        axes.sort_by(|a, b| nu[*a].abs().total_cmp(&nu[*b].abs()));
        [axes[0].min(axes[1]), axes[0].max(axes[1])]
    }

    pub fn tangent_frame(&self, p: &[f64]) -> [Vector3<f64>; 2] {
        let nu = self.normal(p);
        let [a0, a1] = self.frame_axes();
        let mut e0 = Vector3::zeros();
        e0[a0] = 1.0;
        let mut e1 = Vector3::zeros();
        e1[a1] = 1.0;
        let p0 = e0 - nu * nu[a0];
        let t0 = p0 / p0.norm();
        let p1 = e1 - nu * nu[a1] - t0 * t0.dot(&e1);
        let t1 = p1 / p1.norm();
        [t0, t1]
    }

    /// Normal derivative along a coordinate axis (already tangent to the
    /// surface bundle up to roundoff).
    pub fn d_normal(&self, axis: usize, p: &[f64]) -> Vector3<f64> {
        let mut buf = p.to_vec();
        let x0 = buf[axis];
        let mut out = Vector3::zeros();
        for c in 0..3 {
            out[c] = fd::deriv1(
                |x| {
                    buf[axis] = x;
                    self.normal(&buf)[c]
                },
                x0,
                self.cfg.dnu_step,
            );
            buf[axis] = x0;
        }
        out
    }

    /// Builds the quasi-Codazzi structure of the front.
    pub fn build(&self, policy: StructurePolicy) -> Result<FrontStructure> {
        let bp = self.chart.basepoint();
        if self.cross(bp).norm() < 1e-10 {
            return Err(Error::validation(
                "front",
                "the basepoint must be an immersed point of the surface",
            ));
        }
        let me = Arc::new(self.clone());

        let phi_plus = {
            let me = me.clone();
            MatrixField::from_fn(2, 2, move |k, i| {
                let me = me.clone();
                Component::func(move |p| {
                    let frame = me.tangent_frame(p);
                    me.d_position(i, p).dot(&frame[k])
                })
            })
        };
        let phi_minus = {
            let me = me.clone();
            MatrixField::from_fn(2, 2, move |k, i| {
                let me = me.clone();
                Component::func(move |p| {
                    let frame = me.tangent_frame(p);
                    let nu = me.normal(p);
                    let dnu = me.d_normal(i, p);
                    // tangential projection of the normal derivative
                    (dnu - nu * dnu.dot(&nu)).dot(&frame[k])
                })
            })
        };

        // tangential connection forms: (W_i)_{mk} = <D_i a_k, a_m>
        let mut forms = Vec::with_capacity(2);
        for i in 0..2 {
            let me = me.clone();
            forms.push(MatrixField::from_fn(2, 2, move |m, k| {
                let me = me.clone();
                Component::func(move |p| {
                    let frame = me.tangent_frame(p);
                    let mut buf = p.to_vec();
                    let x0 = buf[i];
                    let mut dak = Vector3::zeros();
                    for c in 0..3 {
                        dak[c] = fd::deriv1(
                            |x| {
                                buf[i] = x;
                                me.tangent_frame(&buf)[k][c]
                            },
                            x0,
                            me.cfg.dnu_step,
                        );
                        buf[i] = x0;
                    }
                    dak.dot(&frame[m])
                })
            }));
        }
        let conn = BundleConnection::from_forms(forms);

        let structure = QuasiCodazziStructure::new(
            self.chart.clone(),
            MatrixField::identity(2),
            phi_plus,
            phi_minus,
            conn.clone(),
            conn,
            policy,
        )?;

        let me_n = me.clone();
        let me_f = me.clone();
        Ok(FrontStructure {
            structure,
            normal: Arc::new(move |p| me_n.normal(p)),
            tangent_frame: Arc::new(move |p| me_f.tangent_frame(p)),
            surface: self.clone(),
        })
    }
}

/// The cuspidal edge `f(u, v) = (u^2, u^3, v)`, singular along u = 0.
pub fn cuspidal_edge(chart: Chart) -> Result<FrontSurface> {
    let names = chart.names();
    let (u, v) = (names[0].to_string(), names[1].to_string());
    let map = [
        Component::from_expr(&format!("{u}^2"), &[&u, &v])?,
        Component::from_expr(&format!("{u}^3"), &[&u, &v])?,
        Component::from_expr(&v, &[&u, &v])?,
    ];
    FrontSurface::new(chart, map, FrontConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_chart() -> Chart {
        Chart::new(&["u", "v"], &[[-0.5, 0.5], [-0.5, 0.5]], &[0.15, 0.0]).unwrap()
    }

    #[test]
    fn cuspidal_edge_normal_is_smooth_and_oriented() {
        let front = cuspidal_edge(edge_chart()).unwrap();
        // closed form: ν = (-3u, 2, 0)/sqrt(4 + 9u^2) with the convention
        // that the largest component at the basepoint is positive
        for u in [-0.4f64, -0.1, 0.0, 0.1, 0.4] {
            let nu = front.normal(&[u, 0.1]);
            let s = (4.0 + 9.0 * u * u).sqrt();
            let expect = Vector3::new(-3.0 * u / s, 2.0 / s, 0.0);
            assert!(
                (nu - expect).norm() < 1e-9,
                "normal at u={u}: {nu:?} vs {expect:?}"
            );
        }
    }

    #[test]
    fn cuspidal_edge_metric_profile() {
        let front = cuspidal_edge(edge_chart()).unwrap();
        let built = front.build(StructurePolicy::default()).unwrap();
        let h = built.structure.pullback_metric();
        for u in [-0.35f64, -0.1, 0.0, 0.2, 0.35] {
            let p = [u, 0.05];
            let got = h.mat_at(&p)[(0, 0)];
            let expect = -12.0 * u / (4.0 + 9.0 * u * u).sqrt();
            assert!(
                (got - expect).abs() < 1e-6,
                "h(∂u,∂u) at u={u}: {got} vs {expect}"
            );
        }
        // the normal is independent of v, so the pullback has rank at most 1
        // everywhere and drops to rank 0 exactly on the singular locus
        assert_eq!(h.rank_at(&[0.3, 0.1]), 1);
        assert_eq!(h.rank_at(&[0.0, 0.1]), 0);
        assert!(h.is_degenerate_at(&[0.3, 0.1]));
    }

    #[test]
    fn cuspidal_edge_structure_checks() {
        let front = cuspidal_edge(edge_chart()).unwrap();
        let built = front.build(StructurePolicy::default()).unwrap();
        let s = &built.structure;
        assert!(s.lagrange_residual(4) < 1e-9, "{}", s.lagrange_residual(4));
        // relative torsions vanish across the singular locus
        let mut worst = 0.0f64;
        for u in [-0.3f64, -0.1, 0.0, 0.12, 0.3] {
            for v in [-0.2f64, 0.1] {
                let p = [u, v];
                worst = worst.max(s.torsion_plus(0, 1, &p).abs().max());
                worst = worst.max(s.torsion_minus(0, 1, &p).abs().max());
            }
        }
        assert!(worst < 1e-6, "relative torsion {worst}");
    }
}
