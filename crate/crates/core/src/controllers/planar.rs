use nalgebra::Vector3;

use super::ControllerError;

/// `sign(0) = 0`.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Second factor of the Moebius sliding variable, `w + sin((theta - theta*)/2)`.
pub fn mobius_sigma(theta: f64, omega: f64, theta_star: f64) -> f64 {
    omega + (0.5 * (theta - theta_star)).sin()
}

pub fn mobius_s(theta: f64, omega: f64, theta_star: f64) -> f64 {
    (0.5 * theta).cos() * mobius_sigma(theta, omega, theta_star)
}

/// The control law as displayed, with both sign factors.
pub fn mobius_u(theta: f64, omega: f64, theta_star: f64) -> f64 {
    0.5 * omega * omega * (0.5 * theta).sin() - 0.5 * omega * (theta - 0.5 * theta_star).cos()
        - sign((0.5 * theta).cos()) * sign(mobius_s(theta, omega, theta_star))
}

/// Lie derivative of `mobius_s` along `(w cos(theta/2), u)`.
pub fn mobius_lie_s(theta: f64, omega: f64, theta_star: f64, u: f64) -> f64 {
    (0.5 * omega * (theta - 0.5 * theta_star).cos() - 0.5 * omega * omega * (0.5 * theta).sin() + u)
        * (0.5 * theta).cos()
}

/// Reduced sliding dynamics on the circle.
pub fn mobius_sliding_rhs(theta: f64, theta_star: f64) -> f64 {
    -(0.5 * theta).cos() * (0.5 * (theta - theta_star)).sin()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwistingGains {
    k1: f64,
    k2: f64,
}

impl TwistingGains {
    pub fn new(k1: f64, k2: f64) -> Result<Self, ControllerError> {
        if !(k2 > 0.0 && k1 > k2 && k1.is_finite()) {
            return Err(ControllerError::InvalidGains(format!(
                "twisting requires K1 > K2 > 0, got K1 = {k1}, K2 = {k2}"
            )));
        }
        Ok(Self { k1, k2 })
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }
}

pub fn twisting_u(theta: f64, omega: f64, g: &TwistingGains) -> f64 {
    -g.k1 * sign(theta.sin()) - g.k2 * sign(omega)
}

pub fn mobius_embed(theta: f64, omega: f64) -> Vector3<f64> {
    let r = 1.0 + 0.5 * omega * (0.5 * theta).cos();
    Vector3::new(r * theta.cos(), r * theta.sin(), 0.5 * omega * (0.5 * theta).sin())
}

/// Unit-radius tube.
pub fn cylinder_embed(theta: f64, omega: f64) -> Vector3<f64> {
    Vector3::new(theta.cos(), theta.sin(), omega)
}
