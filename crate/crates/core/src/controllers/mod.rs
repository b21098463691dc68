//! Controller families: first-order SMC on SO(3) x R^3 and S^2 x R^3, the
//! terminal virtual control on S^2, the Moebius-bundle law and the twisting
//! law on the cylinder, plus closed-loop field builders.

mod disturbance;
mod planar;
mod rigid;
mod systems;

pub use disturbance::{DisturbanceSpec, DisturbanceTerm};
pub use planar::{
    cylinder_embed, mobius_embed, mobius_lie_s, mobius_s, mobius_sigma, mobius_sliding_rhs, mobius_u, sign,
    twisting_u, TwistingGains,
};
pub use rigid::{
    hat, s2_alpha, s2_control, s2_gain, s2_lie_alpha, s2_terminal_alpha, s2_terminal_lie_alpha, so3_alpha,
    so3_alpha_checked, so3_control, so3_gain, so3_lie_alpha, sphere_angle, terminal_delta, terminal_gamma,
    terminal_gamma_prime, terminal_on_manifold_bound, terminal_theta_star, vex, RigidBodyParams, S2Virtual,
};
pub use systems::{
    line_example, mobius_system, s2_system, so3_system, twisting_system, S2Options, K_MAX,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("matrix is not skew-symmetric (|W + W^T| = {0:e})")]
    NotSkew(f64),
    #[error("input is not on the manifold (residual {0:e})")]
    NotOnManifold(f64),
    #[error("state is on the switching manifold; the unit-vector control is undefined there")]
    OnSwitchingManifold,
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("disturbance sup-norm {sup} exceeds the declared bound d_bar = {bound}")]
    DisturbanceBound { sup: f64, bound: f64 },
}

/// Replacement of the discontinuous unit vector `s / |s|`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Regularization {
    #[default]
    None,
    /// `s / (|s| + epsilon)`.
    BoundaryLayer { epsilon: f64 },
}

impl Regularization {
    pub fn is_none(&self) -> bool {
        matches!(self, Self::None)
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        match *self {
            Self::BoundaryLayer { epsilon } if !(epsilon > 0.0 && epsilon.is_finite()) => Err(
                ControllerError::InvalidParams(format!("boundary-layer epsilon must be positive, got {epsilon}")),
            ),
            _ => Ok(()),
        }
    }

    /// Scalar sign replacement; `sign(0) = 0` when unregularized.
    pub fn scalar(&self, s: f64) -> f64 {
        match *self {
            Self::None => sign(s),
            Self::BoundaryLayer { epsilon } => s / (s.abs() + epsilon),
        }
    }
}
