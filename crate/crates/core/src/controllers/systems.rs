use nalgebra::{DVector, Matrix3, Vector3};

use super::planar::{mobius_s, mobius_sigma, sign};
use super::rigid::{hat, s2_gain, so3_alpha, so3_gain, so3_lie_alpha};
use super::{ControllerError, DisturbanceSpec, Regularization, RigidBodyParams, S2Virtual, TwistingGains};
use crate::fields::{EquivalentMotion, PiecewiseField, SwitchingFunction};
use crate::geometry::{flatten3, mat3, vec3, EmbeddedManifold};

/// Default clamp on the terminal-family gain.
pub const K_MAX: f64 = 1e3;

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn stack(a: &[f64], b: &Vector3<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + 3, a.iter().copied().chain(b.iter().copied()))
}

/// `s / |s|`, or zero exactly on the surface.
fn unit_or_zero(s: &Vector3<f64>, reg: Regularization) -> Vector3<f64> {
    let n = s.norm();
    match reg {
        Regularization::None if n == 0.0 => Vector3::zeros(),
        Regularization::None => s / n,
        Regularization::BoundaryLayer { epsilon } => s / (n + epsilon),
    }
}

fn dist3(d: &DisturbanceSpec, t: f64) -> Vector3<f64> {
    Vector3::new(d.channel(0, t), d.channel(1, t), d.channel(2, t))
}

/// `x' = -sign(x) + 1/2` on the line.
pub fn line_example() -> PiecewiseField {
    PiecewiseField::new(EmbeddedManifold::Euclidean(1), |s, _, _| dv(&[-s.sign(0) + 0.5]))
        .with_surface(SwitchingFunction::scalar("x", |x, _| x[0]).with_gradient(|_, _| dv(&[1.0])))
}

/// Rigid body on SO(3) x R^3, state `(R row-major, w)`.
pub fn so3_system(
    params: RigidBodyParams,
    rd: Matrix3<f64>,
    disturbance: DisturbanceSpec,
    reg: Regularization,
) -> Result<PiecewiseField, ControllerError> {
    reg.validate()?;
    let p = params.clone();
    let d = disturbance.clone();
    let control = move |x: &DVector<f64>, t: f64| -> Vector3<f64> {
        let (r, w) = (mat3(&x.as_slice()[..9]), vec3(&x.as_slice()[9..]));
        let s = w - so3_alpha(&r, &rd);
        let _ = t;
        -so3_gain(&w, &p) * unit_or_zero(&s, reg)
    };
    let control2 = control.clone();
    let (p2, d2) = (params.clone(), disturbance.clone());
    let field = move |_, x: &DVector<f64>, t: f64| {
        let (r, w) = (mat3(&x.as_slice()[..9]), vec3(&x.as_slice()[9..]));
        let u = control(x, t);
        let wd = p2.j_inv() * ((p2.j() * w).cross(&w) + u + dist3(&d2, t));
        stack(flatten3(&(r * hat(&w))).as_slice(), &wd)
    };
    let mut pf = PiecewiseField::new(EmbeddedManifold::rotation_bundle(), field)
        .with_control(move |_, x, t| stack(&[], &control2(x, t)));
    if reg.is_none() {
        let (p3, d3) = (params, d);
        let surface = SwitchingFunction::vector(
            "s",
            3,
            move |x, _| {
                let (r, w) = (mat3(&x.as_slice()[..9]), vec3(&x.as_slice()[9..]));
                stack(&[], &(w - so3_alpha(&r, &rd)))
            },
            move |x, t| {
                let (r, w) = (mat3(&x.as_slice()[..9]), vec3(&x.as_slice()[9..]));
                let lie = so3_lie_alpha(&r, &w, &rd);
                let u_eq = p3.j() * lie - (p3.j() * w).cross(&w) - dist3(&d3, t);
                let k = so3_gain(&w, &p3);
                Some(EquivalentMotion {
                    field: stack(flatten3(&(r * hat(&w))).as_slice(), &lie),
                    control: stack(&[], &u_eq),
                    margin: (k - u_eq.norm()) / k,
                })
            },
        )
        // The angular velocity is free on the fibre, so the surface is reached exactly by w = alpha(R).
        .with_projection(move |x, _| {
            let r = mat3(&x.as_slice()[..9]);
            stack(&x.as_slice()[..9], &so3_alpha(&r, &rd))
        });
        pf = pf.with_surface(surface);
    }
    Ok(pf)
}

#[derive(Clone, Debug)]
pub struct S2Options {
    pub params: RigidBodyParams,
    pub target: Vector3<f64>,
    pub virtual_control: S2Virtual,
    pub disturbance: DisturbanceSpec,
    pub regularization: Regularization,
    pub k_max: f64,
}

/// Reduced attitude on S^2 x R^3, state `(L, w)`.
pub fn s2_system(o: S2Options) -> Result<PiecewiseField, ControllerError> {
    o.regularization.validate()?;
    if (o.target.norm() - 1.0).abs() > 1e-9 {
        return Err(ControllerError::InvalidParams(format!(
            "target L_d must be a unit vector, |L_d| = {}",
            o.target.norm()
        )));
    }
    if !(o.k_max > 0.0) {
        return Err(ControllerError::InvalidParams("k_max must be positive".into()));
    }
    let S2Options {
        params: p,
        target: ld,
        virtual_control: virt,
        disturbance: d,
        regularization: reg,
        k_max,
    } = o;
    let pc = p.clone();
    let control = move |x: &DVector<f64>| -> Vector3<f64> {
        let (l, w) = (vec3(&x.as_slice()[..3]), vec3(&x.as_slice()[3..]));
        let s = w - virt.alpha(&l, &ld);
        -(pc.j() * w).cross(&w) - s2_gain(&l, &w, &ld, &pc, virt, k_max) * unit_or_zero(&s, reg)
    };
    let control2 = control.clone();
    let (pf_p, pf_d) = (p.clone(), d.clone());
    let field = move |_, x: &DVector<f64>, t: f64| {
        let (l, w) = (vec3(&x.as_slice()[..3]), vec3(&x.as_slice()[3..]));
        let wd = pf_p.j_inv() * ((pf_p.j() * w).cross(&w) + control(x) + dist3(&pf_d, t));
        stack(l.cross(&w).as_slice(), &wd)
    };
    let mut pf = PiecewiseField::new(EmbeddedManifold::sphere_bundle(), field)
        .with_control(move |_, x, _| stack(&[], &control2(x)));
    if reg.is_none() {
        let surface = SwitchingFunction::vector(
            "s",
            3,
            move |x, _| {
                let (l, w) = (vec3(&x.as_slice()[..3]), vec3(&x.as_slice()[3..]));
                stack(&[], &(w - virt.alpha(&l, &ld)))
            },
            move |x, t| {
                let (l, w) = (vec3(&x.as_slice()[..3]), vec3(&x.as_slice()[3..]));
                let lie = virt.lie_alpha(&l, &w, &ld);
                let needed = p.j() * lie - dist3(&d, t);
                let k = s2_gain(&l, &w, &ld, &p, virt, k_max);
                Some(EquivalentMotion {
                    field: stack(l.cross(&w).as_slice(), &lie),
                    control: stack(&[], &(-(p.j() * w).cross(&w) + needed)),
                    margin: (k - needed.norm()) / k,
                })
            },
        )
        .with_projection(move |x, _| {
            let l = vec3(&x.as_slice()[..3]);
            stack(&x.as_slice()[..3], &virt.alpha(&l, &ld))
        });
        pf = pf.with_surface(surface);
    }
    Ok(pf)
}

/// Moebius-bundle closed loop upstairs on R^2, state `(theta, w)`.
///
/// Off the invariant lines `cos(theta/2) = 0` the product of the two sign
/// factors equals `sign(w + sin((theta - theta*)/2))`, so regions are
/// partitioned by that single function.
pub fn mobius_system(
    theta_star: f64,
    disturbance: DisturbanceSpec,
    d_bar: f64,
    reg: Regularization,
) -> Result<PiecewiseField, ControllerError> {
    reg.validate()?;
    let wrapped = (theta_star - std::f64::consts::PI).rem_euclid(std::f64::consts::TAU);
    if !theta_star.is_finite() || wrapped.min(std::f64::consts::TAU - wrapped) < 1e-9 {
        return Err(ControllerError::InvalidParams(format!(
            "theta* must not be an odd multiple of pi, got {theta_star}"
        )));
    }
    if !disturbance.is_zero() && !(d_bar < 1.0) {
        return Err(ControllerError::InvalidGains(format!(
            "the unit switching gain needs d_bar < 1, got {d_bar}"
        )));
    }
    let smooth = move |th: f64, w: f64| 0.5 * w * w * (0.5 * th).sin() - 0.5 * w * (th - 0.5 * theta_star).cos();
    let d = disturbance.clone();
    let u = move |side: f64, x: &DVector<f64>| -> f64 {
        let (th, w) = (x[0], x[1]);
        let switching = match reg {
            Regularization::None => side,
            Regularization::BoundaryLayer { epsilon } => {
                let s = mobius_s(th, w, theta_star);
                sign((0.5 * th).cos()) * s / (s.abs() + epsilon)
            }
        };
        smooth(th, w) - switching
    };
    let field = move |signs: crate::fields::Signs, x: &DVector<f64>, t: f64| {
        let side = if reg.is_none() { signs.sign(0) } else { 0.0 };
        dv(&[x[1] * (0.5 * x[0]).cos(), u(side, x) + d.channel(0, t)])
    };
    let mut pf = PiecewiseField::new(EmbeddedManifold::Euclidean(2), field)
        .with_control(move |signs, x, _| {
            let side = if reg.is_none() { signs.sign(0) } else { 0.0 };
            dv(&[u(side, x)])
        });
    if reg.is_none() {
        pf = pf.with_surface(
            SwitchingFunction::scalar("sigma", move |x, _| mobius_sigma(x[0], x[1], theta_star))
                .with_gradient(move |x, _| dv(&[0.5 * (0.5 * (x[0] - theta_star)).cos(), 1.0])),
        );
    }
    Ok(pf)
}

/// Twisting double integrator upstairs on R^2, state `(theta, w)`.
pub fn twisting_system(
    gains: TwistingGains,
    disturbance: DisturbanceSpec,
    d_bar: f64,
    reg: Regularization,
) -> Result<PiecewiseField, ControllerError> {
    reg.validate()?;
    if !disturbance.is_zero() && !(gains.k1() - gains.k2() > d_bar && gains.k2() > d_bar) {
        return Err(ControllerError::InvalidGains(format!(
            "with a disturbance the twisting gains need K1 - K2 > d_bar and K2 > d_bar \
             (K1 = {}, K2 = {}, d_bar = {d_bar})",
            gains.k1(),
            gains.k2()
        )));
    }
    let u = move |signs: crate::fields::Signs, x: &DVector<f64>| -> f64 {
        match reg {
            Regularization::None => -gains.k1() * signs.sign(0) - gains.k2() * signs.sign(1),
            _ => -gains.k1() * reg.scalar(x[0].sin()) - gains.k2() * reg.scalar(x[1]),
        }
    };
    let d = disturbance;
    let mut pf = PiecewiseField::new(EmbeddedManifold::Euclidean(2), move |signs, x, t| {
        dv(&[x[1], u(signs, x) + d.channel(0, t)])
    })
    .with_control(move |signs, x, _| dv(&[u(signs, x)]));
    if reg.is_none() {
        pf = pf
            .with_surface(
                SwitchingFunction::scalar("sin_theta", |x, _| x[0].sin())
                    .with_gradient(|x, _| dv(&[x[0].cos(), 0.0])),
            )
            .with_surface(SwitchingFunction::scalar("omega", |x, _| x[1]).with_gradient(|_, _| dv(&[0.0, 1.0])));
    }
    Ok(pf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{mobius_u, twisting_u};
    use crate::fields::{classify, sliding_field, SlidingKind};
    use crate::geometry::AffineGroupAction;
    use crate::sampling::{SampleBox, SplitMix64};
    use std::f64::consts::PI;

    fn s2_opts(virt: S2Virtual, reg: Regularization) -> S2Options {
        S2Options {
            params: RigidBodyParams::unit_inertia(0.3, 0.1).unwrap(),
            target: Vector3::new(0.0, 0.0, 1.0),
            virtual_control: virt,
            disturbance: DisturbanceSpec::reduced_attitude_example(),
            regularization: reg,
            k_max: K_MAX,
        }
    }

    #[test]
    fn tangency_audit_for_rigid_bodies() {
        let mut rng = SplitMix64::new(21);
        let systems = [
            s2_system(s2_opts(S2Virtual::FirstOrder, Regularization::None)).unwrap(),
            s2_system(s2_opts(S2Virtual::Terminal, Regularization::BoundaryLayer { epsilon: 1e-3 })).unwrap(),
            so3_system(
                RigidBodyParams::unit_inertia(0.3, 1.5).unwrap(),
                Matrix3::identity(),
                DisturbanceSpec::reduced_attitude_example(),
                Regularization::None,
            )
            .unwrap(),
        ];
        for pf in &systems {
            let m = pf.manifold().clone();
            for _ in 0..1000 {
                let raw = DVector::from_fn(m.ambient_dim(), |_, _| rng.normal());
                let x = m.retract(&raw).unwrap();
                let t = rng.uniform(0.0, 10.0);
                let signs = pf.signs_at(&x, t);
                assert!(pf.tangency_residual(signs, &x, t) <= 1e-8);
            }
        }
    }

    #[test]
    fn mobius_region_fields_agree_with_literal_control_off_the_lines() {
        let pf = mobius_system(1.0, DisturbanceSpec::default(), 0.0, Regularization::None).unwrap();
        let pts = SampleBox::new(vec![-3.0 * PI, -5.0], vec![3.0 * PI, 5.0]).sample(1000, &mut SplitMix64::new(2));
        for p in pts {
            let v = pf.eval(&p, 0.0);
            assert!((v[1] - mobius_u(p[0], p[1], 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn mobius_sliding_field_pushes_to_reduced_dynamics() {
        let pf = mobius_system(1.0, DisturbanceSpec::default(), 0.0, Regularization::None).unwrap();
        for k in 0..20 {
            let th = -PI + 0.05 + (2.0 * PI - 0.1) * k as f64 / 19.0;
            let x = dv(&[th, -(0.5 * (th - 1.0)).sin()]);
            let c = classify(&pf, 0, &x, 0.0).unwrap();
            assert_eq!(c.kind, SlidingKind::AttractiveSliding);
            assert!((c.lambda_star.unwrap() - 0.5).abs() < 1e-9);
            let v = sliding_field(&pf, 0, &x, 0.0).unwrap();
            assert!((v[0] - crate::controllers::mobius_sliding_rhs(th, 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn quotient_fields_descend() {
        let grid = SampleBox::new(vec![-3.0 * PI, -5.0], vec![3.0 * PI, 5.0]).sample(1000, &mut SplitMix64::new(0));
        let mob = mobius_system(1.0, DisturbanceSpec::default(), 0.0, Regularization::None).unwrap();
        let r = crate::geometry::check_field_descends(&AffineGroupAction::mobius(), |d| mob.eval(d, 0.0), &grid, 3, 1e-9);
        assert!(r.passed, "{r:?}");
        let tw = twisting_system(TwistingGains::new(5.0, 2.0).unwrap(), DisturbanceSpec::default(), 0.0, Regularization::None)
            .unwrap();
        let r = crate::geometry::check_field_descends(&AffineGroupAction::cylinder(), |d| tw.eval(d, 0.0), &grid, 3, 1e-9);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn twisting_region_field_matches_control_law() {
        let g = TwistingGains::new(5.0, 2.0).unwrap();
        let pf = twisting_system(g, DisturbanceSpec::default(), 0.0, Regularization::None).unwrap();
        for p in [[0.1, 0.5], [-2.0, -1.0], [PI + 0.1, -0.3]] {
            let x = dv(&p);
            assert_eq!(pf.eval(&x, 0.0)[1], twisting_u(p[0], p[1], &g));
        }
    }

    #[test]
    fn twisting_antipode_is_repulsive_second_order() {
        let pf = twisting_system(TwistingGains::new(5.0, 2.0).unwrap(), DisturbanceSpec::default(), 0.0, Regularization::None)
            .unwrap();
        let c = classify(&pf, 0, &dv(&[PI, 0.0]), 0.0).unwrap();
        assert_eq!(c.kind, SlidingKind::RepulsiveSliding);
        assert_eq!(c.order, 2);
        let c = classify(&pf, 0, &dv(&[0.0, 0.0]), 0.0).unwrap();
        assert_eq!(c.kind, SlidingKind::AttractiveSliding);
        assert_eq!(c.order, 2);
    }

    #[test]
    fn gain_gates() {
        let d = DisturbanceSpec {
            channels: vec![vec![crate::controllers::DisturbanceTerm::Constant { value: 0.5 }]],
        };
        assert!(twisting_system(TwistingGains::new(5.0, 2.0).unwrap(), d.clone(), 0.5, Regularization::None).is_ok());
        assert!(twisting_system(TwistingGains::new(5.0, 4.8).unwrap(), d.clone(), 0.5, Regularization::None).is_err());
        assert!(mobius_system(1.0, d.clone(), 1.2, Regularization::None).is_err());
        assert!(mobius_system(PI, DisturbanceSpec::default(), 0.0, Regularization::None).is_err());
        assert!(mobius_system(1.0, d, 0.5, Regularization::BoundaryLayer { epsilon: -1.0 }).is_err());
    }

    #[test]
    fn sphere_equivalent_motion_keeps_surface() {
        let pf = s2_system(s2_opts(S2Virtual::FirstOrder, Regularization::None)).unwrap();
        let ld = Vector3::new(0.0, 0.0, 1.0);
        let l = Vector3::new(0.6, 0.0, 0.8);
        let w = crate::controllers::s2_alpha(&l, &ld);
        let x = stack(l.as_slice(), &w);
        let sw = &pf.surfaces()[0];
        let eq = sw.equivalent_motion(&x, 0.3).unwrap();
        assert!(sw.lie_derivative(&eq.field, &x, 0.3).norm() < 1e-8);
        assert!(eq.margin > 0.0 && eq.margin < 1.0);
    }
}
