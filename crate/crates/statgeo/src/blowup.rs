//! Probe demonstrating that no smooth dual connection can exist across a
//! metric degeneracy: along a curve reaching the degenerate point, the
//! forced diagonal connection-form sum equals `(Xλ)/λ` for the vanishing
//! eigenvalue λ, which blows up as the parameter tends to zero.

use crate::error::{Error, Result};
use crate::fd::{FdConfig, Scheme};
use crate::field::Component;
use crate::metric::MetricField;

#[derive(Debug, Clone, Copy)]
pub struct BlowupSample {
    pub t: f64,
    pub min_singular: f64,
    /// Tracked vanishing eigenvalue at `c(t)`.
    pub lambda: f64,
    /// `|(Xλ)/λ|` with `X = dc/dt`, the forced `|ω^1_1 + θ^1_1|`.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct BlowupTable {
    pub samples: Vec<BlowupSample>,
    /// Least-squares slope of `log |ratio|` against `log t`.
    pub fitted_exponent: f64,
}

/// Relative gap under which two eigenvalue candidates count as a crossing.
const CROSSING_TOL: f64 = 1e-9;

pub fn dual_blowup_probe(
    h: &MetricField,
    curve: &[Component],
    t_samples: &[f64],
) -> Result<BlowupTable> {
    let n = h.dim();
    if curve.len() != n {
        return Err(Error::validation(
            "blowup probe",
            format!("curve needs {n} components, got {}", curve.len()),
        ));
    }
    if t_samples.is_empty() || t_samples.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::validation(
            "blowup probe",
            "t samples must be positive",
        ));
    }
    let at = |t: f64| -> Vec<f64> { curve.iter().map(|c| c.eval(&[t])).collect() };

    // The origin must be a genuine degeneracy.
    let origin = at(0.0);
    if !h.chart().contains(&origin) {
        return Err(Error::validation(
            "blowup probe",
            "curve origin lies outside the chart box",
        ));
    }
    let sv0 = h.singular_values_at(&origin);
    let scale0 = sv0[0].max(f64::MIN_POSITIVE);
    if sv0[n - 1] > h.degeneracy_tol() * scale0 {
        return Err(Error::NotDegenerateAtOrigin {
            min_singular: sv0[n - 1],
        });
    }

    let mut ts: Vec<f64> = t_samples.to_vec();
    ts.sort_by(|a, b| a.total_cmp(b));

    // Continuity tracking of the vanishing eigenvalue, seeded at the origin
    // by the eigenvalue closest to zero.
    let eigs_at = |p: &[f64]| -> Vec<f64> {
        let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(h.mat_at(p))
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    };
    let track = |prev: f64, p: &[f64], t: f64| -> Result<f64> {
        let ev = eigs_at(p);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, e) in ev.iter().enumerate() {
            let d = (e - prev).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        let scale = ev.iter().fold(0.0f64, |a, e| a.max(e.abs())).max(1e-300);
        for (i, e) in ev.iter().enumerate() {
            if i != best && (e - ev[best]).abs() <= CROSSING_TOL * scale {
                return Err(Error::EigenvalueTrackingAmbiguous {
                    t,
                    gap: (e - ev[best]).abs(),
                });
            }
        }
        Ok(ev[best])
    };

    let ev0 = eigs_at(&origin);
    let mut prev = *ev0
        .iter()
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .expect("nonempty");

    let mut samples = Vec::with_capacity(ts.len());
    for &t in &ts {
        let p = at(t);
        if !h.chart().contains(&p) {
            return Err(Error::validation(
                "blowup probe",
                format!("curve leaves the chart box at t = {t}"),
            ));
        }
        let lambda = track(prev, &p, t)?;
        prev = lambda;
        if lambda.abs() < f64::MIN_POSITIVE {
            return Err(Error::non_finite("blowup ratio", &p));
        }
        // derivative of the tracked eigenvalue along the curve, with a
        // t-local step so the stencil never crosses the origin
        let hstep = (t / 16.0).min(1e-3);
        let cfg = FdConfig::new(hstep, Scheme::Central4, true);
        let lam_of_t = |tt: f64| -> f64 {
            let q = at(tt);
            track(lambda, &q, tt).unwrap_or(f64::NAN)
        };
        let dlam = crate::fd::deriv1(lam_of_t, t, cfg);
        if !dlam.is_finite() {
            return Err(Error::non_finite("blowup ratio", &p));
        }
        samples.push(BlowupSample {
            t,
            min_singular: h.min_singular_at(&p),
            lambda,
            ratio: (dlam / lambda).abs(),
        });
    }

    // log-log least squares for the divergence exponent
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.ratio > 0.0 && s.ratio.is_finite())
        .map(|s| (s.t.ln(), s.ratio.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::validation(
            "blowup probe",
            "need at least two usable samples for the exponent fit",
        ));
    }
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    // the ratio |f'/f| diverges like t^slope; report slope as the exponent
    let fitted_exponent = slope;

    Ok(BlowupTable {
        samples,
        fitted_exponent,
    })
}

/// Convenience: log-spaced probe samples over `[t_min, t_max]`.
pub fn log_spaced(t_min: f64, t_max: f64, count: usize) -> Vec<f64> {
    assert!(t_min > 0.0 && t_max > t_min && count >= 2);
    let (a, b) = (t_min.ln(), t_max.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;

    #[test]
    fn quadratic_line_metric_has_exponent_minus_one() {
        // h = t^2 dt^2, c(t) = t: ratio = 2/t, exponent -1
        let chart = Chart::new(&["t"], &[[0.0, 0.02]], &[0.01]).unwrap();
        let h = MetricField::from_components(
            chart,
            vec![Component::from_expr("t^2", &["t"]).unwrap()],
        )
        .unwrap();
        let curve = vec![Component::from_expr("t", &["t"]).unwrap()];
        let ts = log_spaced(1e-4, 1e-2, 9);
        let table = dual_blowup_probe(&h, &curve, &ts).unwrap();
        assert!(
            (table.fitted_exponent + 1.0).abs() < 0.01,
            "exponent {}",
            table.fitted_exponent
        );
        for s in &table.samples {
            let expect = 2.0 / s.t;
            assert!(
                (s.ratio - expect).abs() < 5e-3 * expect,
                "t={} ratio {} expect {}",
                s.t,
                s.ratio,
                expect
            );
        }
    }

    #[test]
    fn block_metric_tracks_degenerate_direction() {
        // n=2, h = diag(1, t^2) along c(t) = (0, t)
        let chart = Chart::new(&["u", "v"], &[[-0.1, 0.1], [0.0, 0.02]], &[0.0, 0.01]).unwrap();
        let h = MetricField::from_components(
            chart,
            vec![
                Component::constant(1.0),
                Component::constant(0.0),
                Component::constant(0.0),
                Component::from_expr("v^2", &["u", "v"]).unwrap(),
            ],
        )
        .unwrap();
        let curve = vec![
            Component::constant(0.0),
            Component::from_expr("t", &["t"]).unwrap(),
        ];
        let ts = log_spaced(1e-4, 1e-2, 7);
        let table = dual_blowup_probe(&h, &curve, &ts).unwrap();
        assert!((table.fitted_exponent + 1.0).abs() < 0.01);
        let s = &table.samples[0];
        assert!((s.ratio - 2.0 / s.t).abs() < 5e-3 * (2.0 / s.t));
    }

    #[test]
    fn nondegenerate_origin_refused() {
        let chart = Chart::new(&["t"], &[[0.0, 0.02]], &[0.01]).unwrap();
        let h = MetricField::euclidean(chart);
        let curve = vec![Component::from_expr("t", &["t"]).unwrap()];
        assert!(matches!(
            dual_blowup_probe(&h, &curve, &[1e-3]),
            Err(Error::NotDegenerateAtOrigin { .. })
        ));
    }

    #[test]
    fn crossing_eigenvalues_refused() {
        // both eigenvalues identical: tracking cannot disambiguate
        let chart = Chart::new(&["u", "v"], &[[-0.1, 0.1], [0.0, 0.02]], &[0.0, 0.01]).unwrap();
        let h = MetricField::from_components(
            chart,
            vec![
                Component::from_expr("v^2", &["u", "v"]).unwrap(),
                Component::constant(0.0),
                Component::constant(0.0),
                Component::from_expr("v^2", &["u", "v"]).unwrap(),
            ],
        )
        .unwrap();
        let curve = vec![
            Component::constant(0.0),
            Component::from_expr("t", &["t"]).unwrap(),
        ];
        assert!(matches!(
            dual_blowup_probe(&h, &curve, &[1e-3, 2e-3]),
            Err(Error::EigenvalueTrackingAmbiguous { .. })
        ));
    }
}
