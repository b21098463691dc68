use std::sync::OnceLock;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::{ControllerError, Regularization};
use crate::geometry::TOL_MFD;

const TOL_SKEW: f64 = 1e-9;

pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0)
}

pub fn vex(m: &Matrix3<f64>) -> Result<Vector3<f64>, ControllerError> {
    let asym = (m + m.transpose()).norm();
    if asym > TOL_SKEW {
        return Err(ControllerError::NotSkew(asym));
    }
    Ok(Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]))
}

fn vex_of_skew_part(m: &Matrix3<f64>) -> Vector3<f64> {
    let w = (m - m.transpose()) * 0.5;
    Vector3::new(w[(2, 1)], w[(0, 2)], w[(1, 0)])
}

fn so3_residual(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm().max((r.determinant() - 1.0).abs())
}

/// `-1/2 vex(R_d^T R - R^T R_d)`.
pub fn so3_alpha(r: &Matrix3<f64>, rd: &Matrix3<f64>) -> Vector3<f64> {
    // The argument is skew by construction, so take its skew part directly.
    -0.5 * vex_of_skew_part(&(rd.transpose() * r - r.transpose() * rd))
}

pub fn so3_alpha_checked(r: &Matrix3<f64>, rd: &Matrix3<f64>) -> Result<Vector3<f64>, ControllerError> {
    for m in [r, rd] {
        let res = so3_residual(m);
        if res > TOL_MFD {
            return Err(ControllerError::NotOnManifold(res));
        }
    }
    Ok(so3_alpha(r, rd))
}

/// Derivative of `so3_alpha` along `R' = R hat(w)`.
pub fn so3_lie_alpha(r: &Matrix3<f64>, w: &Vector3<f64>, rd: &Matrix3<f64>) -> Vector3<f64> {
    let wx = hat(w);
    -0.5 * vex_of_skew_part(&(rd.transpose() * r * wx + wx * r.transpose() * rd))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RigidBodyParams {
    j: Matrix3<f64>,
    j_inv: Matrix3<f64>,
    j_norm: f64,
    pub d_bar: f64,
    pub eta: f64,
}

impl RigidBodyParams {
    pub fn new(j: Matrix3<f64>, d_bar: f64, eta: f64) -> Result<Self, ControllerError> {
        if (j - j.transpose()).norm() > 1e-12 * (1.0 + j.norm()) {
            return Err(ControllerError::InvalidParams("inertia matrix J must be symmetric".into()));
        }
        let eig = SymmetricEigen::new(j).eigenvalues;
        if !eig.iter().all(|&l| l > 0.0 && l.is_finite()) {
            return Err(ControllerError::InvalidParams(format!(
                "inertia matrix J must be positive definite, eigenvalues {:?}",
                eig.as_slice()
            )));
        }
        if !(d_bar >= 0.0 && d_bar.is_finite()) {
            return Err(ControllerError::InvalidParams(format!("d_bar must be >= 0, got {d_bar}")));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(ControllerError::InvalidParams(format!("eta must be > 0, got {eta}")));
        }
        Ok(Self {
            j,
            j_inv: j.try_inverse().expect("positive definite"),
            j_norm: eig.max(),
            d_bar,
            eta,
        })
    }

    pub fn unit_inertia(d_bar: f64, eta: f64) -> Result<Self, ControllerError> {
        Self::new(Matrix3::identity(), d_bar, eta)
    }

    pub fn j(&self) -> &Matrix3<f64> {
        &self.j
    }

    pub fn j_inv(&self) -> &Matrix3<f64> {
        &self.j_inv
    }

    /// Induced 2-norm of J.
    pub fn j_norm(&self) -> f64 {
        self.j_norm
    }
}

fn unit(s: &Vector3<f64>, reg: Regularization) -> Result<Vector3<f64>, ControllerError> {
    let n = s.norm();
    match reg {
        Regularization::None if n == 0.0 => Err(ControllerError::OnSwitchingManifold),
        Regularization::None => Ok(s / n),
        Regularization::BoundaryLayer { epsilon } => Ok(s / (n + epsilon)),
    }
}

/// `|J| |w|^2 + d_bar + eta`.
pub fn so3_gain(w: &Vector3<f64>, p: &RigidBodyParams) -> f64 {
    p.j_norm * w.norm_squared() + p.d_bar + p.eta
}

pub fn so3_control(
    r: &Matrix3<f64>,
    w: &Vector3<f64>,
    rd: &Matrix3<f64>,
    p: &RigidBodyParams,
    reg: Regularization,
) -> Result<Vector3<f64>, ControllerError> {
    let s = w - so3_alpha(r, rd);
    Ok(-so3_gain(w, p) * unit(&s, reg)?)
}

pub fn s2_alpha(l: &Vector3<f64>, ld: &Vector3<f64>) -> Vector3<f64> {
    -l.cross(ld)
}

pub fn s2_lie_alpha(l: &Vector3<f64>, w: &Vector3<f64>, ld: &Vector3<f64>) -> Vector3<f64> {
    -(l.cross(w)).cross(ld)
}

/// Angle between two unit vectors, accurate near 0 and pi.
pub fn sphere_angle(l: &Vector3<f64>, ld: &Vector3<f64>) -> f64 {
    l.cross(ld).norm().atan2(l.dot(ld))
}

/// Root of `tan t = 2 t` in (0, pi/2), by bisection on [1.0, 1.3].
pub fn terminal_theta_star() -> f64 {
    static ROOT: OnceLock<f64> = OnceLock::new();
    *ROOT.get_or_init(|| {
        let g = |t: f64| t.tan() - 2.0 * t;
        let (mut lo, mut hi) = (1.0_f64, 1.3_f64);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    })
}

/// Smallest angle used in the terminal formulas; below it the scaled branch
/// is evaluated at this value to stay finite.
const THETA_FLOOR: f64 = 1e-12;

pub fn terminal_gamma(theta: f64) -> f64 {
    let ts = terminal_theta_star();
    if theta >= ts {
        return 1.0;
    }
    let t = theta.max(THETA_FLOOR);
    ts.sin() / t.sin() * (t / ts).sqrt()
}

/// Derivative of `terminal_gamma`; the left limit at theta* is used there.
pub fn terminal_gamma_prime(theta: f64) -> f64 {
    let ts = terminal_theta_star();
    if theta >= ts {
        return 0.0;
    }
    let t = theta.max(THETA_FLOOR);
    let c = ts.sin() / ts.sqrt();
    c * (t.sin() / (2.0 * t.sqrt()) - t.sqrt() * t.cos()) / t.sin().powi(2)
}

/// Speed of the sliding motion, `gamma(theta) sin(theta)`.
pub fn terminal_delta(theta: f64) -> f64 {
    let ts = terminal_theta_star();
    if theta >= ts {
        theta.sin()
    } else {
        ts.sin() * (theta.max(0.0) / ts).sqrt()
    }
}

/// Bound on `|L_f alpha|` on the switching manifold for theta <= theta*.
pub fn terminal_on_manifold_bound(theta: f64) -> f64 {
    let ts = terminal_theta_star();
    let ratio = if theta.abs() < 1e-8 { 1.0 } else { theta / theta.tan() };
    ts.sin().powi(2) / ts * (2.0 * ratio - 0.5)
}

pub fn s2_terminal_alpha(l: &Vector3<f64>, ld: &Vector3<f64>) -> Vector3<f64> {
    let theta = sphere_angle(l, ld);
    if theta == 0.0 {
        return Vector3::zeros();
    }
    -terminal_gamma(theta) * l.cross(ld)
}

pub fn s2_terminal_lie_alpha(l: &Vector3<f64>, w: &Vector3<f64>, ld: &Vector3<f64>) -> Vector3<f64> {
    let theta = sphere_angle(l, ld);
    let lxw = l.cross(w);
    let mut out = -terminal_gamma(theta) * lxw.cross(ld);
    let gp = terminal_gamma_prime(theta);
    if gp != 0.0 {
        let lie_theta = -lxw.dot(ld) / theta.max(THETA_FLOOR).sin();
        out -= gp * lie_theta * l.cross(ld);
    }
    out
}

/// Virtual control used to define `s = w - alpha(L)` on S^2 x R^3.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum S2Virtual {
    FirstOrder,
    Terminal,
}

impl S2Virtual {
    pub fn alpha(self, l: &Vector3<f64>, ld: &Vector3<f64>) -> Vector3<f64> {
        match self {
            Self::FirstOrder => s2_alpha(l, ld),
            Self::Terminal => s2_terminal_alpha(l, ld),
        }
    }

    pub fn lie_alpha(self, l: &Vector3<f64>, w: &Vector3<f64>, ld: &Vector3<f64>) -> Vector3<f64> {
        match self {
            Self::FirstOrder => s2_lie_alpha(l, w, ld),
            Self::Terminal => s2_terminal_lie_alpha(l, w, ld),
        }
    }
}

/// `|J L_f alpha| + d_bar + eta`. The terminal family also dominates the
/// on-manifold bound below theta* and is clamped at `k_max`.
pub fn s2_gain(
    l: &Vector3<f64>,
    w: &Vector3<f64>,
    ld: &Vector3<f64>,
    p: &RigidBodyParams,
    virt: S2Virtual,
    k_max: f64,
) -> f64 {
    let lie = (p.j * virt.lie_alpha(l, w, ld)).norm();
    match virt {
        S2Virtual::FirstOrder => lie + p.d_bar + p.eta,
        S2Virtual::Terminal => {
            let theta = sphere_angle(l, ld);
            let base = if theta < terminal_theta_star() {
                lie.max(p.j_norm * terminal_on_manifold_bound(theta))
            } else {
                lie
            };
            (base + p.d_bar + p.eta).min(k_max)
        }
    }
}

/// `-(J w) x w - K s / |s|` with `s = w - alpha(L)`.
pub fn s2_control(
    l: &Vector3<f64>,
    w: &Vector3<f64>,
    ld: &Vector3<f64>,
    p: &RigidBodyParams,
    virt: S2Virtual,
    reg: Regularization,
    k_max: f64,
) -> Result<Vector3<f64>, ControllerError> {
    let s = w - virt.alpha(l, ld);
    let k = s2_gain(l, w, ld, p, virt, k_max);
    Ok(-(p.j * w).cross(w) - k * unit(&s, reg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::SplitMix64;
    use std::f64::consts::FRAC_PI_2;

    fn rot_z(phi: f64) -> Matrix3<f64> {
        Matrix3::new(phi.cos(), -phi.sin(), 0.0, phi.sin(), phi.cos(), 0.0, 0.0, 0.0, 1.0)
    }

    /// Rodrigues formula from a random axis-angle.
    fn random_rotation(rng: &mut SplitMix64) -> Matrix3<f64> {
        let axis = Vector3::new(rng.normal(), rng.normal(), rng.normal()).normalize();
        let angle = rng.uniform(0.0, std::f64::consts::PI);
        let k = hat(&axis);
        Matrix3::identity() + angle.sin() * k + (1.0 - angle.cos()) * k * k
    }

    #[test]
    fn hat_matches_displayed_matrix_and_cross_product() {
        let h = hat(&Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(h, Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0));
        assert_eq!(hat(&Vector3::zeros()), Matrix3::zeros());
        let w = Vector3::new(1.0, 2.0, 3.0);
        let v = Vector3::new(-0.5, 4.0, 0.25);
        assert_eq!(hat(&w) * v, w.cross(&v));
        assert_eq!(vex(&hat(&w)).unwrap(), w);
    }

    #[test]
    fn vex_rejects_symmetric() {
        assert!(matches!(vex(&Matrix3::identity()), Err(ControllerError::NotSkew(_))));
    }

    #[test]
    fn so3_alpha_examples() {
        let i = Matrix3::identity();
        assert_eq!(so3_alpha(&i, &i), Vector3::zeros());
        let a = so3_alpha(&rot_z(FRAC_PI_2), &i);
        assert!((a - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
        let bad = i * 1.1;
        assert!(matches!(so3_alpha_checked(&bad, &i), Err(ControllerError::NotOnManifold(_))));
    }

    #[test]
    fn so3_alpha_is_bounded_by_one() {
        let mut rng = SplitMix64::new(5);
        let rd = random_rotation(&mut rng);
        for _ in 0..10_000 {
            let r = random_rotation(&mut rng);
            assert!(so3_alpha(&r, &rd).norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn so3_lie_alpha_matches_finite_difference() {
        let mut rng = SplitMix64::new(6);
        let (r, rd) = (random_rotation(&mut rng), random_rotation(&mut rng));
        let w = Vector3::new(0.3, -1.2, 0.7);
        let h = 1e-6;
        let step = |t: f64| {
            let k = hat(&(w * t));
            r * (Matrix3::identity() + k + k * k * 0.5 + k * k * k / 6.0)
        };
        let fd = (so3_alpha(&step(h), &rd) - so3_alpha(&step(-h), &rd)) / (2.0 * h);
        assert!((fd - so3_lie_alpha(&r, &w, &rd)).norm() < 1e-8);
    }

    #[test]
    fn so3_control_gain_and_zero_surface() {
        let p = RigidBodyParams::unit_inertia(0.3, 0.1).unwrap();
        let w = Vector3::new(0.0, 1.0, 1.0);
        assert!((so3_gain(&w, &p) - 2.4).abs() < 1e-15);
        let i = Matrix3::identity();
        let u = so3_control(&rot_z(0.4), &w, &i, &p, Regularization::None).unwrap();
        assert!((u.norm() - 2.4).abs() < 1e-12);
        assert_eq!(
            so3_control(&i, &Vector3::zeros(), &i, &p, Regularization::None),
            Err(ControllerError::OnSwitchingManifold)
        );
    }

    #[test]
    fn params_validation() {
        assert!(RigidBodyParams::new(Matrix3::new(1.0, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0), 0.0, 0.1).is_err());
        assert!(RigidBodyParams::new(-Matrix3::identity(), 0.0, 0.1).is_err());
        assert!(RigidBodyParams::unit_inertia(-0.1, 0.1).is_err());
        assert!(RigidBodyParams::unit_inertia(0.1, 0.0).is_err());
        let p = RigidBodyParams::new(Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0)), 0.0, 0.1).unwrap();
        assert!((p.j_norm() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn s2_alpha_examples() {
        let ld = Vector3::new(0.0, 0.0, 1.0);
        assert_eq!(s2_alpha(&ld, &ld), Vector3::zeros());
        assert_eq!(s2_alpha(&Vector3::new(1.0, 0.0, 0.0), &ld), Vector3::new(0.0, 1.0, 0.0));
        assert_eq!(s2_alpha(&-ld, &ld).norm(), 0.0);
    }

    #[test]
    fn s2_initial_sliding_variable() {
        let l0 = Vector3::new(1.0, 0.0, 0.0);
        let w0 = Vector3::new(0.0, 1.0, 1.0);
        let ld = Vector3::new(0.0, 0.0, 1.0);
        assert_eq!(w0 - s2_alpha(&l0, &ld), Vector3::new(0.0, 0.0, 1.0));
        let p = RigidBodyParams::unit_inertia(0.3, 0.1).unwrap();
        let on_s = s2_alpha(&l0, &ld);
        assert_eq!(
            s2_control(&l0, &on_s, &ld, &p, S2Virtual::FirstOrder, Regularization::None, K_MAX_TEST),
            Err(ControllerError::OnSwitchingManifold)
        );
    }

    const K_MAX_TEST: f64 = 1e3;

    #[test]
    fn s2_lie_alpha_matches_finite_difference() {
        let l = Vector3::new(0.6, -0.0, 0.8);
        let w = Vector3::new(0.2, 0.9, -0.4);
        let ld = Vector3::new(0.0, 0.0, 1.0);
        for virt in [S2Virtual::FirstOrder, S2Virtual::Terminal] {
            let h = 1e-6;
            let flow = |t: f64| {
                // Exact rotation of L about w for time t.
                let k = hat(&(-w * t));
                let a = (w * t).norm();
                let rot = Matrix3::identity() + a.sin() / a * k + (1.0 - a.cos()) / (a * a) * k * k;
                rot * l
            };
            let fd = (virt.alpha(&flow(h), &ld) - virt.alpha(&flow(-h), &ld)) / (2.0 * h);
            let exact = virt.lie_alpha(&l, &w, &ld);
            assert!((fd - exact).norm() < 1e-7, "{virt:?}: {fd} vs {exact}");
        }
    }

    #[test]
    fn theta_star_root() {
        let ts = terminal_theta_star();
        assert!((ts.tan() - 2.0 * ts).abs() < 1e-10);
        assert!((ts - 1.1656).abs() < 1e-4);
        assert!((ts - 1.17).abs() < 5e-3);
    }

    #[test]
    fn gamma_branches_and_delta_smoothness() {
        let ts = terminal_theta_star();
        assert_eq!(terminal_gamma(ts), 1.0);
        assert_eq!(terminal_gamma(2.0), 1.0);
        assert!((terminal_gamma(ts - 1e-9) - 1.0).abs() < 1e-8);
        for th in [0.1, 0.5, 1.0] {
            let d = terminal_gamma(th) * th.sin();
            assert!((d - ts.sin() * (th / ts).sqrt()).abs() < 1e-14);
            assert!((terminal_delta(th) - d).abs() < 1e-14);
        }
        let h = 1e-6;
        let left = (terminal_delta(ts - h) - terminal_delta(ts - 2.0 * h)) / h;
        let right = (terminal_delta(ts + 2.0 * h) - terminal_delta(ts + h)) / h;
        assert!((left - right).abs() < 1e-5);
        assert!((terminal_delta(ts - 1e-12) - terminal_delta(ts + 1e-12)).abs() < 1e-11);
    }

    #[test]
    fn gamma_prime_matches_finite_difference() {
        for th in [0.05, 0.4, 1.0, 1.1] {
            let h = 1e-6;
            let fd = (terminal_gamma(th + h) - terminal_gamma(th - h)) / (2.0 * h);
            assert!((fd - terminal_gamma_prime(th)).abs() < 1e-5 * (1.0 + fd.abs()));
        }
        assert_eq!(terminal_gamma_prime(terminal_theta_star()), 0.0);
        let ts = terminal_theta_star();
        assert!(terminal_gamma_prime(ts - 1e-9).abs() < 1e-8);
    }

    #[test]
    fn terminal_alpha_reduces_to_first_order_beyond_theta_star() {
        let ld = Vector3::new(0.0, 0.0, 1.0);
        let l = Vector3::new(1.0, 0.0, 0.0);
        assert_eq!(s2_terminal_alpha(&l, &ld), s2_alpha(&l, &ld));
        assert_eq!(s2_terminal_alpha(&ld, &ld), Vector3::zeros());
    }

    #[test]
    fn gains_exceed_required_bound_by_eta() {
        let p = RigidBodyParams::unit_inertia(0.3, 0.1).unwrap();
        let ld = Vector3::new(0.0, 0.0, 1.0);
        let mut rng = SplitMix64::new(11);
        for _ in 0..500 {
            let l = Vector3::new(rng.normal(), rng.normal(), rng.normal()).normalize();
            let w = Vector3::new(rng.normal(), rng.normal(), rng.normal());
            for virt in [S2Virtual::FirstOrder, S2Virtual::Terminal] {
                let k = s2_gain(&l, &w, &ld, &p, virt, f64::INFINITY);
                let required = (p.j() * virt.lie_alpha(&l, &w, &ld)).norm() + p.d_bar;
                assert!(k - required >= p.eta - 1e-12);
            }
            let k = so3_gain(&w, &p);
            assert!(k - (p.j_norm() * w.norm_squared() + p.d_bar) >= p.eta - 1e-12);
        }
    }

    #[test]
    fn on_manifold_bound_dominates_terminal_lie_alpha_on_s() {
        let ld = Vector3::new(0.0, 0.0, 1.0);
        for th in [1e-4_f64, 0.01, 0.3, 0.8, 1.1] {
            let l = Vector3::new(th.sin(), 0.0, th.cos());
            let w = s2_terminal_alpha(&l, &ld);
            let lie = s2_terminal_lie_alpha(&l, &w, &ld).norm();
            assert!(lie <= terminal_on_manifold_bound(th) + 1e-9, "theta {th}: {lie}");
        }
    }
}
