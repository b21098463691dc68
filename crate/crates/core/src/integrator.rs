//! Event-driven fixed-step integration of piecewise-smooth fields.
//!
//! Free phases use classical RK4 with the active region field. A sign change
//! of a switching function inside a step is located by bisection on the step
//! length, and the state is accepted at the far end of the final bracket.
//! Sliding phases integrate the Filippov sliding field (or the equivalent
//! motion for vector-valued surfaces), followed by one Newton projection onto
//! the surface and a retraction onto the manifold.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{classify_with, sliding_combination, FieldError, PiecewiseField, Signs, SlidingKind};
use crate::geometry::{GeometryError, QuotientManifold, TOL_MFD};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorOptions {
    pub step: f64,
    pub tol_event: f64,
    pub tol_surface: f64,
    pub lambda_margin: f64,
    pub max_steps: usize,
    pub equilibrium_speed: f64,
    pub equilibrium_steps: usize,
    /// More than this many surface hits inside one step length ends the run
    /// in Equilibrium (accumulating switches).
    pub zeno_events: usize,
    /// The run stops with an `Escape` event once `|x|` exceeds this.
    pub escape_norm: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            tol_event: 1e-10,
            tol_surface: 1e-7,
            lambda_margin: 0.02,
            max_steps: 5_000_000,
            equilibrium_speed: 1e-9,
            equilibrium_steps: 3,
            zeno_events: 8,
            escape_norm: 1e8,
        }
    }
}

impl IntegratorOptions {
    pub fn validate(&self) -> Result<(), IntegratorError> {
        let bad = |m: &str| Err(IntegratorError::InvalidOptions(m.to_string()));
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step must be positive");
        }
        if !(self.tol_event > 0.0 && self.tol_event < self.step) {
            return bad("tol_event must be positive and smaller than the step");
        }
        if !(self.tol_surface > 0.0) {
            return bad("tol_surface must be positive");
        }
        if !(self.lambda_margin > 0.0 && self.lambda_margin < 0.5) {
            return bad("lambda_margin must lie in (0, 0.5)");
        }
        if self.max_steps == 0 || self.equilibrium_steps == 0 || self.zeno_events == 0 {
            return bad("max_steps, equilibrium_steps and zeno_events must be positive");
        }
        if !(self.equilibrium_speed >= 0.0) {
            return bad("equilibrium_speed must be nonnegative");
        }
        if !(self.escape_norm > 0.0) {
            return bad("escape_norm must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    Free,
    Sliding { surface: usize },
    Equilibrium,
}

impl Mode {
    pub fn label(&self) -> String {
        match self {
            Self::Free => "free".into(),
            Self::Sliding { surface } => format!("sliding{surface}"),
            Self::Equilibrium => "equilibrium".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: DVector<f64>,
    pub mode: Mode,
    pub signs: Signs,
    /// All switching-function values stacked.
    pub s: DVector<f64>,
    pub u: Option<DVector<f64>>,
    pub drift: f64,
    /// True for samples on the fixed time grid `t0 + k h` (and at `t1`).
    pub on_grid: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SurfaceHit,
    Crossing,
    SlidingEntry,
    SlidingExit,
    EquilibriumReached,
    Degenerate,
    AmbiguousContinuation,
    /// The state left the ball of radius `escape_norm`.
    Escape,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub surface: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    /// Reason the run stopped before `t1`, if it did.
    pub halted: Option<String>,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectories hold at least the initial sample")
    }

    pub fn grid(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| s.on_grid)
    }

    pub fn first_event(&self, kind: EventKind) -> Option<&Event> {
        self.events.iter().find(|e| e.kind == kind)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn max_drift(&self) -> f64 {
        self.samples.iter().map(|s| s.drift).fold(0.0, f64::max)
    }
}

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error("invalid integrator options: {0}")]
    InvalidOptions(String),
    #[error("initial state is off the manifold (residual {0:e})")]
    OffManifold(f64),
    #[error("initial state has length {got}, the manifold needs {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    Budget {
        max_steps: usize,
        t: f64,
        partial: Box<Trajectory>,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn rk4<F>(f: F, x: &DVector<f64>, t: f64, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>, f64) -> DVector<f64>,
{
    rk4_stages(f, x, t, h).0
}

/// RK4 step together with the three interior points where the field was evaluated.
fn rk4_stages<F>(f: F, x: &DVector<f64>, t: f64, h: f64) -> (DVector<f64>, [DVector<f64>; 3])
where
    F: Fn(&DVector<f64>, f64) -> DVector<f64>,
{
    let k1 = f(x, t);
    let p2 = x + &k1 * (0.5 * h);
    let k2 = f(&p2, t + 0.5 * h);
    let p3 = x + &k2 * (0.5 * h);
    let k3 = f(&p3, t + 0.5 * h);
    let p4 = x + &k3 * h;
    let k4 = f(&p4, t + h);
    (x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0), [p2, p3, p4])
}

/// Bisection on `(0, hi]` for the smallest step length at which `hit` holds,
/// given that it holds at `hi`. Returns the far end of the final bracket.
fn locate<P>(hi: f64, x_hi: DVector<f64>, tol: f64, mut probe: P) -> Result<(f64, DVector<f64>), GeometryError>
where
    P: FnMut(f64) -> Result<Option<DVector<f64>>, GeometryError>,
{
    let (mut lo, mut hi, mut x_hi) = (0.0, hi, x_hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match probe(mid)? {
            Some(x) => {
                hi = mid;
                x_hi = x;
            }
            None => lo = mid,
        }
    }
    Ok((hi, x_hi))
}

struct Run<'a> {
    pf: &'a PiecewiseField,
    opts: &'a IntegratorOptions,
    traj: Trajectory,
    t: f64,
    x: DVector<f64>,
    mode: Mode,
    signs: Signs,
    slow_steps: usize,
    recent_hits: VecDeque<f64>,
}

impl<'a> Run<'a> {
    fn event(&mut self, kind: EventKind, surface: Option<usize>) {
        self.traj.events.push(Event { t: self.t, kind, surface });
    }

    fn retract(&self, y: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        self.pf.manifold().retract(y)
    }

    fn record(&mut self, on_grid: bool) {
        let control = match self.mode {
            Mode::Sliding { surface } => self.sliding_control(surface),
            _ => self.pf.control(self.signs, &self.x, self.t),
        };
        self.traj.samples.push(Sample {
            t: self.t,
            x: self.x.clone(),
            mode: self.mode,
            signs: self.signs,
            s: self.pf.switching_values(&self.x, self.t),
            u: control,
            drift: self.pf.manifold().drift(&self.x),
            on_grid,
        });
    }

    fn sliding_control(&self, i: usize) -> Option<DVector<f64>> {
        let sw = &self.pf.surfaces()[i];
        if !sw.is_scalar() {
            return sw.equivalent_motion(&self.x, self.t).map(|m| m.control);
        }
        let (_, lambda) = sliding_combination(self.pf, i, self.signs, &self.x, self.t)?;
        let up = self.pf.control(self.signs.with(i, true), &self.x, self.t)?;
        let um = self.pf.control(self.signs.with(i, false), &self.x, self.t)?;
        Some(up * lambda + um * (1.0 - lambda))
    }

    /// Velocity of the current mode at `y`.
    fn velocity(&self, y: &DVector<f64>, t: f64) -> DVector<f64> {
        match self.mode {
            Mode::Free => self.pf.region_field(self.signs, y, t),
            Mode::Sliding { surface } => {
                let sw = &self.pf.surfaces()[surface];
                let v = if sw.is_scalar() {
                    sliding_combination(self.pf, surface, self.signs, y, t).map(|(v, _)| v)
                } else {
                    sw.equivalent_motion(y, t).map(|m| m.field)
                };
                v.unwrap_or_else(|| DVector::zeros(y.len()))
            }
            Mode::Equilibrium => DVector::zeros(y.len()),
        }
    }

    /// One Newton correction onto `s_i = 0` along directions tangent to the manifold.
    fn project_surface(&self, i: usize, y: &DVector<f64>, t: f64) -> Result<DVector<f64>, GeometryError> {
        let sw = &self.pf.surfaces()[i];
        if let Some(x) = sw.project(y, t) {
            return Ok(x);
        }
        let s = sw.value(y, t);
        let jac: DMatrix<f64> = sw.jacobian(y, t) * self.pf.manifold().tangent_projector(y);
        let gram = &jac * jac.transpose();
        let Some(coef) = gram.lu().solve(&s) else {
            return Ok(y.clone());
        };
        self.retract(&(y - jac.transpose() * coef))
    }

    fn settle_on_surface(&self, i: usize, y: &DVector<f64>, t: f64) -> Result<DVector<f64>, GeometryError> {
        let mut x = self.project_surface(i, y, t)?;
        for _ in 0..3 {
            if self.pf.surfaces()[i].value(&x, t).norm() <= 0.5 * self.opts.tol_surface {
                break;
            }
            x = self.project_surface(i, &x, t)?;
        }
        Ok(x)
    }

    fn advance(&self, tau: f64) -> Result<DVector<f64>, GeometryError> {
        let y = rk4(|y, t| self.velocity(y, t), &self.x, self.t, tau);
        let y = self.retract(&y)?;
        match self.mode {
            Mode::Sliding { surface } => self.settle_on_surface(surface, &y, self.t + tau),
            _ => Ok(y),
        }
    }

    /// Free-mode step of length `tau` and the surfaces it crosses. A unit-vector
    /// control makes the RK4 stages straddle `s = 0` while the averaged end point
    /// stays put, so vector surfaces are also checked at the interior stages.
    fn free_probe(&self, s_prev: &[DVector<f64>], tau: f64) -> Result<(DVector<f64>, Vec<usize>), GeometryError> {
        let (y, stages) = rk4_stages(|y, t| self.velocity(y, t), &self.x, self.t, tau);
        let y = self.retract(&y)?;
        let mut hits = self.crossed(s_prev, &y, self.t + tau);
        let tol = self.opts.tol_surface;
        for (i, sw) in self.pf.surfaces().iter().enumerate() {
            if sw.is_scalar() || hits.contains(&i) || s_prev[i].norm() <= tol {
                continue;
            }
            let times = [0.5 * tau, 0.5 * tau, tau];
            if stages.iter().zip(times).any(|(p, dt)| sw.value(p, self.t + dt).dot(&s_prev[i]) <= 0.0) {
                hits.push(i);
            }
        }
        hits.sort_unstable();
        Ok((y, hits))
    }

    /// Surfaces crossed between the current state and `y`.
    fn crossed(&self, s_prev: &[DVector<f64>], y: &DVector<f64>, t: f64) -> Vec<usize> {
        let tol = self.opts.tol_surface;
        self.pf
            .surfaces()
            .iter()
            .enumerate()
            .filter(|(i, sw)| {
                let s = sw.value(y, t);
                if sw.is_scalar() {
                    let positive = self.signs.is_positive(*i);
                    (positive && s[0] < 0.0) || (!positive && s[0] > 0.0)
                } else {
                    s_prev[*i].norm() > tol && (s.dot(&s_prev[*i]) <= 0.0 || s.norm() <= tol)
                }
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn enter_equilibrium(&mut self) {
        self.mode = Mode::Equilibrium;
        self.event(EventKind::EquilibriumReached, None);
    }

    /// Mode decision at a surface point. `Err` carries a halt reason.
    fn on_surface(&mut self, i: usize, crossing: bool) -> Result<(), String> {
        let sw = &self.pf.surfaces()[i];
        if !sw.is_scalar() {
            match sw.equivalent_motion(&self.x, self.t) {
                Some(m) if m.margin >= self.opts.lambda_margin => {
                    self.x = self.settle_on_surface(i, &self.x, self.t).map_err(|e| e.to_string())?;
                    self.mode = Mode::Sliding { surface: i };
                    self.slow_steps = 0;
                    self.event(EventKind::SlidingEntry, Some(i));
                }
                _ => self.event(EventKind::AmbiguousContinuation, Some(i)),
            }
            return Ok(());
        }
        let flip = |run: &mut Self, positive: bool| {
            run.signs = run.signs.with(i, positive);
        };
        match classify_with(self.pf, i, self.signs, &self.x, self.t) {
            Ok(c) => match (c.kind, c.order) {
                (SlidingKind::AttractiveSliding, 1) => {
                    self.x = self.settle_on_surface(i, &self.x, self.t).map_err(|e| e.to_string())?;
                    self.mode = Mode::Sliding { surface: i };
                    self.slow_steps = 0;
                    self.event(EventKind::SlidingEntry, Some(i));
                }
                (SlidingKind::AttractiveSliding, _) => self.enter_equilibrium(),
                (SlidingKind::Crossing, _) => {
                    // Both sides push the same way; continue on the side the field points to.
                    flip(self, c.lie_plus > 0.0);
                    self.event(EventKind::Crossing, Some(i));
                }
                (SlidingKind::RepulsiveSliding, _) => {
                    self.event(EventKind::AmbiguousContinuation, Some(i));
                    if crossing {
                        flip(self, !self.signs.is_positive(i));
                    }
                }
                (SlidingKind::Tangential, _) => {
                    if crossing {
                        flip(self, !self.signs.is_positive(i));
                    }
                }
            },
            Err(FieldError::Degenerate(_)) => {
                self.event(EventKind::Degenerate, Some(i));
                return Err(format!("degenerate classification on surface {i} at t = {}", self.t));
            }
            Err(e) => return Err(e.to_string()),
        }
        Ok(())
    }

    fn initial_mode(&mut self) -> Result<(), String> {
        let tol = self.opts.tol_surface;
        let active: Vec<usize> = self
            .pf
            .surfaces()
            .iter()
            .enumerate()
            .filter(|(_, sw)| sw.value(&self.x, self.t).norm() <= tol)
            .map(|(i, _)| i)
            .collect();
        match active.as_slice() {
            [] => Ok(()),
            [i] => {
                self.event(EventKind::SurfaceHit, Some(*i));
                self.on_surface(*i, false)
            }
            _ => {
                self.event(EventKind::AmbiguousContinuation, None);
                Ok(())
            }
        }
    }

    fn note_hit(&mut self) -> bool {
        let h = self.opts.step;
        self.recent_hits.push_back(self.t);
        while self.recent_hits.front().is_some_and(|&t0| t0 < self.t - h) {
            self.recent_hits.pop_front();
        }
        self.recent_hits.len() > self.opts.zeno_events
    }

    fn free_step(&mut self, tau: f64) -> Result<bool, String> {
        let s_prev: Vec<DVector<f64>> = self.pf.surfaces().iter().map(|sw| sw.value(&self.x, self.t)).collect();
        let (x_new, hits) = self.free_probe(&s_prev, tau).map_err(|e| e.to_string())?;
        if hits.is_empty() {
            self.x = x_new;
            self.t += tau;
            return Ok(false);
        }
        let (dt, x_hit) = locate(tau, x_new, self.opts.tol_event, |m| {
            let (y, hits) = self.free_probe(&s_prev, m)?;
            Ok((!hits.is_empty()).then_some(y))
        })
        .map_err(|e| e.to_string())?;
        let hits = self.free_probe(&s_prev, dt).map_err(|e| e.to_string())?.1;
        self.x = x_hit;
        self.t += dt;
        for &i in &hits {
            self.event(EventKind::SurfaceHit, Some(i));
        }
        if self.note_hit() {
            self.enter_equilibrium();
            return Ok(dt < tau);
        }
        if let [i] = hits.as_slice() {
            self.on_surface(*i, true)?;
        } else {
            self.event(EventKind::AmbiguousContinuation, None);
            for &i in &hits {
                if self.pf.surfaces()[i].is_scalar() {
                    let s = self.pf.surfaces()[i].scalar_value(&self.x, self.t);
                    self.signs = self.signs.with(i, s > 0.0);
                }
            }
        }
        Ok(dt < tau)
    }

    fn sliding_step(&mut self, i: usize, tau: f64) -> Result<bool, String> {
        let v0 = self.velocity(&self.x, self.t);
        let x_new = self.advance(tau).map_err(|e| e.to_string())?;
        let t_new = self.t + tau;
        let reversed = |run: &Self, y: &DVector<f64>, t: f64| {
            let v = run.velocity(y, t);
            v0.norm() > run.opts.equilibrium_speed && v.dot(&v0) < 0.0
        };
        // Near a non-Lipschitz point of the sliding motion the projection can fail
        // before the velocity visibly turns around.
        let off = |run: &Self, y: &DVector<f64>, t: f64| run.pf.surfaces()[i].value(y, t).norm() > run.opts.tol_surface;
        if reversed(self, &x_new, t_new) || off(self, &x_new, t_new) {
            let (dt, x_hit) = locate(tau, x_new, self.opts.tol_event, |m| {
                let y = self.advance(m)?;
                let t = self.t + m;
                Ok((reversed(self, &y, t) || off(self, &y, t)).then_some(y))
            })
            .map_err(|e| e.to_string())?;
            let t_hit = self.t + dt;
            let turned = reversed(self, &x_hit, t_hit);
            self.x = x_hit;
            self.t = t_hit;
            if turned {
                // The sliding velocity turned around inside the step: finite-time arrival.
                self.enter_equilibrium();
            } else {
                self.mode = Mode::Free;
                self.signs = self.pf.signs_at(&self.x, self.t);
                self.event(EventKind::SlidingExit, Some(i));
            }
            return Ok(dt < tau);
        }
        self.x = x_new;
        self.t = t_new;
        let sw = &self.pf.surfaces()[i];
        let exit = if sw.is_scalar() {
            match sliding_combination(self.pf, i, self.signs, &self.x, self.t) {
                Some((_, l)) if l < self.opts.lambda_margin => Some(Some(false)),
                Some((_, l)) if l > 1.0 - self.opts.lambda_margin => Some(Some(true)),
                Some(_) => None,
                None => {
                    self.event(EventKind::Degenerate, Some(i));
                    return Err(format!("sliding combination undefined on surface {i} at t = {}", self.t));
                }
            }
        } else {
            match sw.equivalent_motion(&self.x, self.t) {
                Some(m) if m.margin >= self.opts.lambda_margin => None,
                _ => Some(None),
            }
        };
        if let Some(side) = exit {
            if let Some(positive) = side {
                self.signs = self.signs.with(i, positive);
            }
            self.mode = Mode::Free;
            self.event(EventKind::SlidingExit, Some(i));
            return Ok(false);
        }
        if self.velocity(&self.x, self.t).norm() < self.opts.equilibrium_speed {
            self.slow_steps += 1;
            if self.slow_steps >= self.opts.equilibrium_steps {
                self.enter_equilibrium();
            }
        } else {
            self.slow_steps = 0;
        }
        Ok(false)
    }
}

/// Integrates `pf` from `x0` over `t_span`.
pub fn integrate(
    pf: &PiecewiseField,
    x0: &DVector<f64>,
    t_span: (f64, f64),
    opts: &IntegratorOptions,
) -> Result<Trajectory, IntegratorError> {
    opts.validate()?;
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(IntegratorError::InvalidOptions(format!("invalid time span ({t0}, {t1})")));
    }
    let m = pf.manifold();
    if x0.len() != m.ambient_dim() {
        return Err(IntegratorError::DimensionMismatch {
            expected: m.ambient_dim(),
            got: x0.len(),
        });
    }
    let drift = m.drift(x0);
    if !(drift <= TOL_MFD) {
        return Err(IntegratorError::OffManifold(drift));
    }
    let mut run = Run {
        pf,
        opts,
        traj: Trajectory::default(),
        t: t0,
        x: x0.clone(),
        mode: Mode::Free,
        signs: pf.signs_at(x0, t0),
        slow_steps: 0,
        recent_hits: VecDeque::new(),
    };
    if let Err(reason) = run.initial_mode() {
        run.record(true);
        run.traj.halted = Some(reason);
        return Ok(run.traj);
    }
    run.record(true);
    let h = opts.step;
    let mut k: u64 = 0;
    let mut steps = 0usize;
    while run.t < t1 {
        if steps >= opts.max_steps {
            return Err(IntegratorError::Budget {
                max_steps: opts.max_steps,
                t: run.t,
                partial: Box::new(run.traj),
            });
        }
        steps += 1;
        let target = (t0 + (k + 1) as f64 * h).min(t1);
        let tau = target - run.t;
        let outcome = match run.mode {
            Mode::Equilibrium => {
                run.t = target;
                Ok(false)
            }
            Mode::Free => run.free_step(tau),
            Mode::Sliding { surface } => run.sliding_step(surface, tau),
        };
        let outcome = match outcome {
            Ok(_) if !(run.x.norm() <= opts.escape_norm) => {
                run.event(EventKind::Escape, None);
                Err(format!("escape: |x| = {:e} exceeds {:e}", run.x.norm(), opts.escape_norm))
            }
            other => other,
        };
        match outcome {
            Ok(true) => run.record(false),
            Ok(false) => {
                // Snap to the grid value so grids of different runs align exactly.
                run.t = target;
                k += 1;
                run.record(true);
            }
            Err(reason) => {
                run.record(false);
                run.traj.halted = Some(reason);
                break;
            }
        }
    }
    Ok(run.traj)
}

/// Single-mode integration of a boundary-layer field (no switching functions).
pub fn integrate_regularized(
    pf: &PiecewiseField,
    x0: &DVector<f64>,
    t_span: (f64, f64),
    opts: &IntegratorOptions,
) -> Result<Trajectory, IntegratorError> {
    if !pf.surfaces().is_empty() {
        return Err(IntegratorError::InvalidOptions(
            "regularized integration needs a field built with a boundary layer".into(),
        ));
    }
    integrate(pf, x0, t_span, opts)
}

/// Largest orbit distance between the runs from `d0` and from `z . d0`,
/// compared at common grid times.
pub fn orbit_equivalence_check(
    pf: &PiecewiseField,
    q: &QuotientManifold,
    d0: &DVector<f64>,
    z: i32,
    t_span: (f64, f64),
    opts: &IntegratorOptions,
) -> Result<f64, IntegratorError> {
    let moved = q.action().act(z, d0)?;
    let a = integrate(pf, d0, t_span, opts)?;
    let b = integrate(pf, &moved, t_span, opts)?;
    Ok(a
        .grid()
        .zip(b.grid())
        .map(|(p, r)| q.orbit_distance(&p.x, &r.x))
        .fold(0.0, f64::max))
}
