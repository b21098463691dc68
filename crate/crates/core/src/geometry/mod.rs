//! State spaces: embedded submanifolds of R^p and quotients R^n / Z by affine
//! integer actions, together with sampling-based descent checks.

mod descent;
mod embedded;
mod quotient;

pub use descent::{check_field_descends, check_function_descends, DescentReport};
pub use embedded::EmbeddedManifold;
pub(crate) use embedded::{flatten3, mat3, vec3};
pub use quotient::{AffineGroupAction, QuotientManifold};

use thiserror::Error;

/// Constraint residual accepted as "on the manifold".
pub const TOL_MFD: f64 = 1e-9;
/// Maximum violation accepted by the descent checkers.
pub const TOL_DESCENT: f64 = 1e-8;
/// Largest |z| accepted by [`AffineGroupAction::act`].
pub const Z_MAX: i32 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("retraction is undefined for this input: {0}")]
    DegenerateRetraction(String),
    #[error("group element {z} exceeds the configured range |z| <= {max}")]
    RangeExceeded { z: i32, max: i32 },
    #[error("generator of the group action is not invertible")]
    SingularGenerator,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point is not finite")]
    NonFinite,
}
