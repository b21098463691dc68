use std::sync::Arc;

use nalgebra::{DVector, Matrix3, Quaternion, UnitQuaternion, Vector3};

use super::config::{ConfigError, ControllerConfig, InitialConditions, ManifoldId, ScenarioConfig, TOL_INITIAL};
use crate::controllers::{
    cylinder_embed, line_example, mobius_embed, mobius_s, mobius_system, s2_system, so3_alpha, so3_alpha_checked,
    so3_system, sphere_angle, twisting_system, ControllerError, RigidBodyParams, S2Options, S2Virtual, TwistingGains,
};
use crate::fields::PiecewiseField;
use crate::geometry::{mat3, vec3, QuotientManifold};
use crate::sampling::SplitMix64;

pub type StateFn<T> = Arc<dyn Fn(&DVector<f64>) -> T + Send + Sync>;

/// A closed loop ready to integrate, with the bookkeeping needed for output.
#[derive(Clone)]
pub struct System {
    pub manifold: ManifoldId,
    pub field: PiecewiseField,
    /// Sliding variable reported in outputs, also for regularized runs.
    pub monitor: StateFn<DVector<f64>>,
    pub monitor_names: Vec<String>,
    pub state_names: Vec<String>,
    pub control_names: Vec<String>,
    /// Distance to the target: geodesic on so3/s2, orbit distance on quotients.
    pub error: StateFn<f64>,
    pub quotient: Option<QuotientManifold>,
    /// Target state in upstairs coordinates (quotients and the line).
    pub target: Option<DVector<f64>>,
}

impl System {
    /// `R^3` image of a canonicalized quotient state.
    pub fn embed(&self, x: &DVector<f64>) -> Option<Vector3<f64>> {
        let q = self.quotient.as_ref()?;
        let c = q.canonicalize(x);
        Some(match self.manifold {
            ManifoldId::Mobius => mobius_embed(c[0], c[1]),
            _ => cylinder_embed(c[0], c[1]),
        })
    }
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn planar_names() -> Vec<String> {
    vec!["theta".into(), "omega".into()]
}

fn matrix(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| rows[i][j])
}

fn controller_error(key: &str, e: ControllerError) -> ConfigError {
    let key = match e {
        ControllerError::DisturbanceBound { .. } => "d_bar",
        _ => key,
    };
    ConfigError::keyed(key, e.to_string())
}

/// Attitude-error angle `arccos((tr(R_d^T R) - 1) / 2)`.
pub fn rotation_angle(r: &Matrix3<f64>, rd: &Matrix3<f64>) -> f64 {
    let c = 0.5 * ((rd.transpose() * r).trace() - 1.0);
    c.clamp(-1.0, 1.0).acos()
}

pub fn build_system(cfg: &ScenarioConfig) -> Result<System, ConfigError> {
    let reg = cfg.regularization;
    reg.validate().map_err(|e| controller_error("epsilon", e))?;
    let d = cfg.disturbance.clone();
    let input_dim = match cfg.manifold {
        ManifoldId::So3 | ManifoldId::S2 => 3,
        _ => 1,
    };
    if matches!(cfg.controller, ControllerConfig::Line) && !d.is_zero() {
        return Err(ConfigError::keyed("disturbance", "the line example takes no disturbance"));
    }
    d.check(input_dim, cfg.controller.d_bar(), cfg.t_end)
        .map_err(|e| controller_error("disturbance", e))?;

    let sys = match &cfg.controller {
        ControllerConfig::Line => System {
            manifold: ManifoldId::Line,
            field: line_example(),
            monitor: Arc::new(|x| x.clone()),
            monitor_names: vec!["s".into()],
            state_names: vec!["x".into()],
            control_names: Vec::new(),
            error: Arc::new(|x| x[0].abs()),
            quotient: None,
            target: Some(DVector::zeros(1)),
        },
        ControllerConfig::So3FirstOrder(c) => {
            let rd = matrix(&c.target_attitude);
            so3_alpha_checked(&rd, &rd).map_err(|e| controller_error("target_attitude", e))?;
            let params =
                RigidBodyParams::new(matrix(&c.inertia), c.d_bar, c.eta).map_err(|e| controller_error("controller", e))?;
            let field = so3_system(params, rd, d, reg).map_err(|e| controller_error("controller", e))?;
            let split = |x: &DVector<f64>| (mat3(&x.as_slice()[..9]), vec3(&x.as_slice()[9..]));
            System {
                manifold: ManifoldId::So3,
                field,
                monitor: Arc::new(move |x| {
                    let (r, w) = split(x);
                    DVector::from_column_slice((w - so3_alpha(&r, &rd)).as_slice())
                }),
                monitor_names: names("s", 3),
                state_names: ["r11", "r12", "r13", "r21", "r22", "r23", "r31", "r32", "r33", "w1", "w2", "w3"]
                    .map(String::from)
                    .to_vec(),
                control_names: names("u", 3),
                error: Arc::new(move |x| rotation_angle(&split(x).0, &rd)),
                quotient: None,
                target: None,
            }
        }
        ControllerConfig::S2FirstOrder(c) | ControllerConfig::S2Terminal(c) => {
            let virt = match cfg.controller {
                ControllerConfig::S2Terminal(_) => S2Virtual::Terminal,
                _ => S2Virtual::FirstOrder,
            };
            let ld = Vector3::from(c.target);
            let params =
                RigidBodyParams::new(matrix(&c.inertia), c.d_bar, c.eta).map_err(|e| controller_error("controller", e))?;
            let field = s2_system(S2Options {
                params,
                target: ld,
                virtual_control: virt,
                disturbance: d,
                regularization: reg,
                k_max: c.k_max,
            })
            .map_err(|e| controller_error("target", e))?;
            System {
                manifold: ManifoldId::S2,
                field,
                monitor: Arc::new(move |x| {
                    let (l, w) = (vec3(&x.as_slice()[..3]), vec3(&x.as_slice()[3..]));
                    DVector::from_column_slice((w - virt.alpha(&l, &ld)).as_slice())
                }),
                monitor_names: names("s", 3),
                state_names: ["l1", "l2", "l3", "w1", "w2", "w3"].map(String::from).to_vec(),
                control_names: names("u", 3),
                error: Arc::new(move |x| sphere_angle(&vec3(&x.as_slice()[..3]), &ld)),
                quotient: None,
                target: None,
            }
        }
        ControllerConfig::Mobius { theta_star, d_bar } => {
            let ts = *theta_star;
            let field = mobius_system(ts, d, *d_bar, reg).map_err(|e| controller_error("theta_star", e))?;
            let q = QuotientManifold::mobius();
            let target = DVector::from_column_slice(&[ts, 0.0]);
            let (q2, t2) = (q.clone(), target.clone());
            System {
                manifold: ManifoldId::Mobius,
                field,
                monitor: Arc::new(move |x| DVector::from_element(1, mobius_s(x[0], x[1], ts))),
                monitor_names: vec!["s_tilde".into()],
                state_names: planar_names(),
                control_names: vec!["u".into()],
                error: Arc::new(move |x| q2.orbit_distance(x, &t2)),
                quotient: Some(q),
                target: Some(target),
            }
        }
        ControllerConfig::Twisting { k1, k2, d_bar } => {
            let gains = TwistingGains::new(*k1, *k2).map_err(|e| controller_error("k1", e))?;
            let field = twisting_system(gains, d, *d_bar, reg).map_err(|e| controller_error("k1", e))?;
            let q = QuotientManifold::cylinder();
            let target = DVector::zeros(2);
            let (q2, t2) = (q.clone(), target.clone());
            System {
                manifold: ManifoldId::Cylinder,
                field,
                monitor: Arc::new(|x| DVector::from_column_slice(&[x[0].sin(), x[1]])),
                monitor_names: vec!["s_sin_theta".into(), "s_omega".into()],
                state_names: planar_names(),
                control_names: vec!["u".into()],
                error: Arc::new(move |x| q2.orbit_distance(x, &t2)),
                quotient: Some(q),
                target: Some(target),
            }
        }
    };
    Ok(sys)
}

fn linspace(low: f64, high: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![low];
    }
    (0..n).map(|k| low + (high - low) * k as f64 / (n - 1) as f64).collect()
}

fn random_state(cfg_manifold: ManifoldId, low: &[f64], high: &[f64], rng: &mut SplitMix64) -> Vec<f64> {
    let mut box_part = || -> Vec<f64> { low.iter().zip(high).map(|(&l, &h)| rng.uniform(l, h)).collect() };
    match cfg_manifold {
        ManifoldId::S2 => {
            let w = box_part();
            let l = loop {
                let v = Vector3::new(rng.normal(), rng.normal(), rng.normal());
                if v.norm() > 1e-6 {
                    break v.normalize();
                }
            };
            l.iter().copied().chain(w).collect()
        }
        ManifoldId::So3 => {
            let w = box_part();
            let q = UnitQuaternion::from_quaternion(Quaternion::new(rng.normal(), rng.normal(), rng.normal(), rng.normal()));
            let r = q.to_rotation_matrix().into_inner();
            let mut v: Vec<f64> = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| r[(i, j)]).collect();
            v.extend(w);
            v
        }
        _ => box_part(),
    }
}

/// Expands and retracts the configured initial conditions.
pub fn initial_states(cfg: &ScenarioConfig, sys: &System) -> Result<Vec<DVector<f64>>, ConfigError> {
    let dim = sys.field.manifold().ambient_dim();
    let (raw, key): (Vec<Vec<f64>>, &str) = match &cfg.initial {
        InitialConditions::Explicit { states } => (states.clone(), "states"),
        InitialConditions::Grid {
            low,
            high,
            counts,
            extra,
        } => {
            if low.len() != dim {
                return Err(ConfigError::keyed("low", format!("grid has {} coordinates, the state has {dim}", low.len())));
            }
            let axes: Vec<Vec<f64>> = (0..dim).map(|i| linspace(low[i], high[i], counts[i])).collect();
            let mut pts: Vec<Vec<f64>> = vec![Vec::new()];
            for axis in &axes {
                pts = pts
                    .into_iter()
                    .flat_map(|p| {
                        axis.iter().map(move |&v| {
                            let mut q = p.clone();
                            q.push(v);
                            q
                        })
                    })
                    .collect();
            }
            pts.extend(extra.iter().cloned());
            (pts, "extra")
        }
        InitialConditions::Random { low, high, count } => {
            let box_dim = match cfg.manifold {
                ManifoldId::S2 | ManifoldId::So3 => 3,
                _ => dim,
            };
            if low.len() != box_dim {
                return Err(ConfigError::keyed("low", format!("random box needs {box_dim} coordinates, got {}", low.len())));
            }
            let mut rng = SplitMix64::new(cfg.seed);
            ((0..*count).map(|_| random_state(cfg.manifold, low, high, &mut rng)).collect(), "count")
        }
    };
    let m = sys.field.manifold();
    raw.into_iter()
        .enumerate()
        .map(|(i, v)| {
            if v.len() != dim {
                return Err(ConfigError::keyed(key, format!("initial state {i} has {} coordinates, expected {dim}", v.len())));
            }
            let x = DVector::from_vec(v);
            let r = m
                .retract(&x)
                .map_err(|e| ConfigError::keyed(key, format!("initial state {i}: {e}")))?;
            let moved = (&r - &x).norm();
            if !(moved <= TOL_INITIAL) {
                return Err(ConfigError::keyed(
                    key,
                    format!("initial state {i} is {moved:e} away from the manifold (allowed {TOL_INITIAL:e})"),
                ));
            }
            Ok(r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
        ScenarioConfig::parse(text, "t")
    }

    const TWIST: &str = r#"
name = "g"
manifold = "cylinder"
t_end = 1.0
[controller]
family = "twisting"
k1 = 5.0
k2 = 2.0
[initial]
kind = "grid"
low = [-1.0, -2.0]
high = [1.0, 2.0]
counts = [3, 2]
extra = [[0.5, 0.5]]
"#;

    #[test]
    fn grid_expansion_order() {
        let cfg = parse(TWIST).unwrap();
        let sys = build_system(&cfg).unwrap();
        let xs = initial_states(&cfg, &sys).unwrap();
        assert_eq!(xs.len(), 7);
        assert_eq!(xs[0].as_slice(), &[-1.0, -2.0]);
        assert_eq!(xs[1].as_slice(), &[-1.0, 2.0]);
        assert_eq!(xs[2].as_slice(), &[0.0, -2.0]);
        assert_eq!(xs[6].as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn gain_ordering_error_names_k1() {
        let e = parse(&TWIST.replace("k1 = 5.0", "k1 = 1.0")).unwrap_err();
        assert!(e.to_string().contains("K1 > K2"), "{e}");
        assert_eq!(e.line, Some(7));
    }

    #[test]
    fn off_manifold_initial_state_is_rejected() {
        let text = r#"
name = "s"
manifold = "s2"
t_end = 1.0
[controller]
family = "s2_first_order"
[initial]
kind = "explicit"
states = [[1.1, 0.0, 0.0, 0.0, 0.0, 0.0]]
"#;
        let e = parse(text).unwrap_err();
        assert!(e.message.contains("away from the manifold"), "{e}");
        assert_eq!(e.line, Some(9));
        let ok = text.replace("1.1", "1.0000000001");
        let cfg = parse(&ok).unwrap();
        let xs = initial_states(&cfg, &build_system(&cfg).unwrap()).unwrap();
        assert!((xs[0].rows(0, 3).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_states_are_seeded_and_on_manifold() {
        let text = r#"
name = "r"
manifold = "so3"
t_end = 1.0
seed = 42
[controller]
family = "so3_first_order"
[initial]
kind = "random"
low = [-1.0, -1.0, -1.0]
high = [1.0, 1.0, 1.0]
count = 5
"#;
        let cfg = parse(text).unwrap();
        let sys = build_system(&cfg).unwrap();
        let a = initial_states(&cfg, &sys).unwrap();
        let b = initial_states(&cfg, &sys).unwrap();
        assert_eq!(a, b);
        for x in &a {
            assert!(sys.field.manifold().drift(x) < 1e-12);
        }
    }

    #[test]
    fn disturbance_bound_is_enforced() {
        let text = TWIST.replace(
            "[initial]",
            "d_bar = 0.5\n[disturbance]\nchannels = [[{ kind = \"constant\", value = 0.7 }]]\n[initial]",
        );
        let e = parse(&text).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("d_bar"));
        assert!(e.message.contains("exceeds the declared bound"), "{e}");
    }

    #[test]
    fn rotation_angle_of_known_rotation() {
        let r = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), 0.7).into_inner();
        assert!((rotation_angle(&r, &Matrix3::identity()) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn embedding_is_orbit_canonical() {
        let cfg = parse(TWIST).unwrap();
        let sys = build_system(&cfg).unwrap();
        let a = sys.embed(&DVector::from_column_slice(&[0.3, 1.0])).unwrap();
        let b = sys.embed(&DVector::from_column_slice(&[0.3 + 4.0 * std::f64::consts::PI, 1.0])).unwrap();
        assert!((a - b).norm() <= 1e-12);
    }
}
