use thiserror::Error;

/// Errors raised by the geometry engine.
///
/// The taxonomy distinguishes construction problems (parse, validation),
/// precondition violations (degeneracy, flatness, rank), genuine tolerance
/// failures, and numerical breakdown (non-finite values, ill conditioning).
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("validation error for {object}: {msg}")]
    Validation { object: String, msg: String },

    #[error("non-finite value in {context} at {point:?}")]
    NonFinite { context: String, point: Vec<f64> },

    #[error("finite-difference stencil leaves the chart box along axis {axis} at {point:?}")]
    StencilOutOfDomain { axis: usize, point: Vec<f64> },

    #[error("metric is degenerate at {point:?} (min singular value {min_singular:.3e})")]
    DegenerateMetric { point: Vec<f64>, min_singular: f64 },

    #[error("cubic tensor is not totally symmetric (residual {residual:.3e} exceeds {tol:.3e})")]
    AsymmetricCubic { residual: f64, tol: f64 },

    #[error("quadrature rule failed its self-test: {msg}")]
    QuadratureFailure { msg: String },

    #[error("metric is not degenerate at the curve origin (min singular value {min_singular:.3e})")]
    NotDegenerateAtOrigin { min_singular: f64 },

    #[error("eigenvalue tracking is ambiguous at t={t}: two candidates within {gap:.3e}")]
    EigenvalueTrackingAmbiguous { t: f64, gap: f64 },

    #[error("two-point function violates the diagonal conditions ({which}, residual {residual:.3e})")]
    NotAContrastCandidate { which: String, residual: f64 },

    #[error("eigenbundle ranks differ from n at {point:?}")]
    UnequalEigenRanks { point: Vec<f64> },

    #[error("bundle map is rank deficient at {point:?} (min singular value {min_singular:.3e})")]
    RankDeficientPhi { point: Vec<f64>, min_singular: f64 },

    #[error("image of the bundle map is not Lagrangian (residual {residual:.3e})")]
    LagrangeViolated { residual: f64 },

    #[error("connection is not flat (curvature norm {curvature_norm:.3e})")]
    NotFlat { curvature_norm: f64 },

    #[error("parallel frame integration is path dependent (residual {residual:.3e})")]
    PathDependence { residual: f64 },

    #[error("pairing of parallel frames is not constant (deviation {deviation:.3e})")]
    NonConstantPairing { deviation: f64 },

    #[error("integrability condition violated (residual {residual:.3e})")]
    IntegrabilityViolated { residual: f64 },

    #[error("transition offset is not constant over the overlap (deviation {deviation:.3e})")]
    NonConstantOffset { deviation: f64 },

    #[error("overlap sample set is ill conditioned (condition estimate {cond:.3e})")]
    IllConditionedOverlap { cond: f64 },

    #[error("bundle map F is singular at {point:?}")]
    SingularF { point: Vec<f64> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(object: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            object: object.into(),
            msg: msg.into(),
        }
    }

    pub fn non_finite(context: impl Into<String>, point: &[f64]) -> Self {
        Error::NonFinite {
            context: context.into(),
            point: point.to_vec(),
        }
    }
}
