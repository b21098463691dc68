//! Piecewise-smooth vector fields partitioned by switching functions, their
//! Filippov regularization, and sliding-mode classification.
//!
//! Region fields are smooth extensions up to (and across) the switching
//! surfaces, so one-sided limits at a surface point are obtained by
//! evaluating the neighbouring region fields directly at that point.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::EmbeddedManifold;

pub const TOL_LIE: f64 = 1e-8;
pub const TOL_SURFACE: f64 = 1e-7;
pub const TOL_TAN: f64 = 1e-8;

/// Relative step for central finite differences, scaled by `1 + |x|`.
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("more than one switching function is active at this point")]
    UnsupportedCorner,
    #[error("switching surface {0} is vector-valued; no segment hull exists")]
    VectorSurface(usize),
    #[error("point is not on switching surface {surface} (|s| = {value:e})")]
    NotOnSurface { surface: usize, value: f64 },
    #[error("both one-sided Lie derivatives vanish on surface {0}")]
    Degenerate(usize),
    #[error("no sliding motion on surface {0}")]
    NotSliding(usize),
    #[error("sliding order (n - dim S) / m = ({n} - {dim_s}) / {m} is not an integer")]
    NotWellDefinedOrder { n: usize, m: usize, dim_s: usize },
    #[error("invalid sliding-order arguments: {0}")]
    InvalidOrderArguments(String),
    #[error("surface index {0} out of range")]
    NoSuchSurface(usize),
}

/// Side of every scalar switching function; bit `i` set means `s_i > 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Signs(u64);

impl Signs {
    pub fn all_positive(n: usize) -> Self {
        Self(if n >= 64 { u64::MAX } else { (1u64 << n) - 1 })
    }

    pub fn is_positive(self, i: usize) -> bool {
        self.0 & (1 << i) != 0
    }

    /// +1.0 or -1.0.
    pub fn sign(self, i: usize) -> f64 {
        if self.is_positive(i) {
            1.0
        } else {
            -1.0
        }
    }

    pub fn with(self, i: usize, positive: bool) -> Self {
        if positive {
            Self(self.0 | (1 << i))
        } else {
            Self(self.0 & !(1 << i))
        }
    }

    pub fn label(self, n: usize) -> String {
        (0..n).map(|i| if self.is_positive(i) { '+' } else { '-' }).collect()
    }
}

pub type PointFn<T> = Arc<dyn Fn(&DVector<f64>, f64) -> T + Send + Sync>;
pub type RegionFn = Arc<dyn Fn(Signs, &DVector<f64>, f64) -> DVector<f64> + Send + Sync>;

/// Motion inside a vector-valued switching manifold, obtained from the
/// equivalent control.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalentMotion {
    pub field: DVector<f64>,
    pub control: DVector<f64>,
    /// `(K - |required|) / K`: positive when the equivalent control lies in the
    /// relative interior of the admissible control set.
    pub margin: f64,
}

#[derive(Clone)]
enum SurfaceKind {
    Scalar,
    Vector { equivalent: PointFn<Option<EquivalentMotion>> },
}

/// A map `s(x, t)` whose zero set is a switching manifold.
#[derive(Clone)]
pub struct SwitchingFunction {
    name: String,
    dim: usize,
    value: PointFn<DVector<f64>>,
    jacobian: Option<PointFn<DMatrix<f64>>>,
    projection: Option<PointFn<DVector<f64>>>,
    kind: SurfaceKind,
}

impl fmt::Debug for SwitchingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SwitchingFunction")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl SwitchingFunction {
    pub fn scalar<F>(name: impl Into<String>, s: F) -> Self
    where
        F: Fn(&DVector<f64>, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim: 1,
            value: Arc::new(move |x, t| DVector::from_element(1, s(x, t))),
            jacobian: None,
            projection: None,
            kind: SurfaceKind::Scalar,
        }
    }

    /// Vector-valued switching function whose zero set admits motion given
    /// by an equivalent control (unit-vector control laws).
    pub fn vector<F, E>(name: impl Into<String>, dim: usize, s: F, equivalent: E) -> Self
    where
        F: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
        E: Fn(&DVector<f64>, f64) -> Option<EquivalentMotion> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            value: Arc::new(s),
            jacobian: None,
            projection: None,
            kind: SurfaceKind::Vector {
                equivalent: Arc::new(equivalent),
            },
        }
    }

    /// Analytic spatial gradient for a scalar function.
    pub fn with_gradient<G>(mut self, g: G) -> Self
    where
        G: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(move |x, t| { let gr = g(x, t); DMatrix::from_row_slice(1, gr.len(), gr.as_slice()) }));
        self
    }

    /// Closed-form map onto the zero set, used instead of Newton corrections.
    /// Must return a point on the manifold with `s = 0`.
    pub fn with_projection<P>(mut self, proj: P) -> Self
    where
        P: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    {
        self.projection = Some(Arc::new(proj));
        self
    }

    pub fn project(&self, x: &DVector<f64>, t: f64) -> Option<DVector<f64>> {
        self.projection.as_ref().map(|p| p(x, t))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self.kind, SurfaceKind::Scalar)
    }

    pub fn value(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        (self.value)(x, t)
    }

    pub fn scalar_value(&self, x: &DVector<f64>, t: f64) -> f64 {
        (self.value)(x, t)[0]
    }

    /// Spatial Jacobian (dim x p), analytic when supplied, else central differences.
    pub fn jacobian(&self, x: &DVector<f64>, t: f64) -> DMatrix<f64> {
        if let Some(j) = &self.jacobian {
            return j(x, t);
        }
        let h = FD_STEP * (1.0 + x.norm());
        let mut jac = DMatrix::zeros(self.dim, x.len());
        for k in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let col = (self.value(&xp, t) - self.value(&xm, t)) / (2.0 * h);
            jac.set_column(k, &col);
        }
        jac
    }

    fn time_partial(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        let dt = FD_STEP * (1.0 + t.abs());
        (self.value(x, t + dt) - self.value(x, t - dt)) / (2.0 * dt)
    }

    /// `L_v s = (ds/dx) v + ds/dt`.
    pub fn lie_derivative(&self, v: &DVector<f64>, x: &DVector<f64>, t: f64) -> DVector<f64> {
        let spatial = match &self.jacobian {
            Some(j) => j(x, t) * v,
            None => directional(|y| self.value(y, t), x, v),
        };
        spatial + self.time_partial(x, t)
    }

    pub(crate) fn equivalent_motion(&self, x: &DVector<f64>, t: f64) -> Option<EquivalentMotion> {
        match &self.kind {
            SurfaceKind::Scalar => None,
            SurfaceKind::Vector { equivalent } => equivalent(x, t),
        }
    }
}

/// Central difference of `g` at `x` along `v`.
fn directional<G>(g: G, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>
where
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let vn = v.norm();
    if vn == 0.0 {
        return g(x) * 0.0;
    }
    let eps = FD_STEP * (1.0 + x.norm()) / vn;
    (g(&(x + v * eps)) - g(&(x - v * eps))) / (2.0 * eps)
}

/// Finitely many smooth region fields selected by the signs of the scalar
/// switching functions.
#[derive(Clone)]
pub struct PiecewiseField {
    manifold: EmbeddedManifold,
    surfaces: Vec<SwitchingFunction>,
    field: RegionFn,
    control: Option<RegionFn>,
}

impl fmt::Debug for PiecewiseField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PiecewiseField")
            .field("manifold", &self.manifold)
            .field("surfaces", &self.surfaces)
            .finish()
    }
}

impl PiecewiseField {
    pub fn new<F>(manifold: EmbeddedManifold, field: F) -> Self
    where
        F: Fn(Signs, &DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            manifold,
            surfaces: Vec::new(),
            field: Arc::new(field),
            control: None,
        }
    }

    pub fn smooth<F>(manifold: EmbeddedManifold, field: F) -> Self
    where
        F: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    {
        Self::new(manifold, move |_, x, t| field(x, t))
    }

    pub fn with_surface(mut self, s: SwitchingFunction) -> Self {
        assert!(self.surfaces.len() < 64, "at most 64 switching functions");
        self.surfaces.push(s);
        self
    }

    /// Control values recorded alongside trajectories.
    pub fn with_control<F>(mut self, u: F) -> Self
    where
        F: Fn(Signs, &DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    {
        self.control = Some(Arc::new(u));
        self
    }

    pub fn manifold(&self) -> &EmbeddedManifold {
        &self.manifold
    }

    pub fn surfaces(&self) -> &[SwitchingFunction] {
        &self.surfaces
    }

    pub fn surface(&self, i: usize) -> Result<&SwitchingFunction, FieldError> {
        self.surfaces.get(i).ok_or(FieldError::NoSuchSurface(i))
    }

    /// Total length of all switching-function values stacked together.
    pub fn switching_len(&self) -> usize {
        self.surfaces.iter().map(|s| s.dim).sum()
    }

    pub fn switching_values(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        let vals: Vec<f64> = self
            .surfaces
            .iter()
            .flat_map(|s| s.value(x, t).iter().copied().collect::<Vec<_>>())
            .collect();
        DVector::from_vec(vals)
    }

    /// Region containing `x`; points exactly on a surface count as positive.
    pub fn signs_at(&self, x: &DVector<f64>, t: f64) -> Signs {
        self.surfaces
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_scalar())
            .fold(Signs::all_positive(self.surfaces.len()), |acc, (i, s)| {
                acc.with(i, s.scalar_value(x, t) >= 0.0)
            })
    }

    pub fn region_field(&self, signs: Signs, x: &DVector<f64>, t: f64) -> DVector<f64> {
        (self.field)(signs, x, t)
    }

    /// Field value at `x` using the region containing `x`.
    pub fn eval(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        self.region_field(self.signs_at(x, t), x, t)
    }

    pub fn control(&self, signs: Signs, x: &DVector<f64>, t: f64) -> Option<DVector<f64>> {
        self.control.as_ref().map(|u| u(signs, x, t))
    }

    pub fn has_control(&self) -> bool {
        self.control.is_some()
    }

    /// Normal component `|(I - P(x)) f|` of a region field.
    pub fn tangency_residual(&self, signs: Signs, x: &DVector<f64>, t: f64) -> f64 {
        let v = self.region_field(signs, x, t);
        (&v - self.manifold.project_tangent(x, &v)).norm()
    }
}

/// Convex hull of the limit values of a piecewise field at a point.
#[derive(Clone, Debug, PartialEq)]
pub enum FilippovSet {
    Singleton(DVector<f64>),
    /// `{ lambda plus + (1 - lambda) minus : lambda in [0, 1] }`.
    Segment { plus: DVector<f64>, minus: DVector<f64> },
}

impl FilippovSet {
    pub fn point(&self, lambda: f64) -> DVector<f64> {
        match self {
            Self::Singleton(v) => v.clone(),
            Self::Segment { plus, minus } => plus * lambda + minus * (1.0 - lambda),
        }
    }

    pub fn is_singleton(&self) -> bool {
        matches!(self, Self::Singleton(_))
    }

    /// Whether `v` lies in the set within `tol`.
    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        match self {
            Self::Singleton(p) => (p - v).norm() <= tol,
            Self::Segment { plus, minus } => {
                let d = plus - minus;
                let dd = d.norm_squared();
                let lambda = if dd == 0.0 {
                    0.0
                } else {
                    ((v - minus).dot(&d) / dd).clamp(0.0, 1.0)
                };
                (self.point(lambda) - v).norm() <= tol
            }
        }
    }
}

pub fn filippov_set(pf: &PiecewiseField, x: &DVector<f64>, t: f64) -> Result<FilippovSet, FieldError> {
    let mut active = None;
    for (i, s) in pf.surfaces.iter().enumerate() {
        if s.value(x, t).norm() > TOL_SURFACE {
            continue;
        }
        if !s.is_scalar() {
            return Err(FieldError::VectorSurface(i));
        }
        if active.replace(i).is_some() {
            return Err(FieldError::UnsupportedCorner);
        }
    }
    let signs = pf.signs_at(x, t);
    Ok(match active {
        None => FilippovSet::Singleton(pf.region_field(signs, x, t)),
        Some(i) => FilippovSet::Segment {
            plus: pf.region_field(signs.with(i, true), x, t),
            minus: pf.region_field(signs.with(i, false), x, t),
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlidingKind {
    Crossing,
    AttractiveSliding,
    RepulsiveSliding,
    Tangential,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlidingClassification {
    pub kind: SlidingKind,
    /// Weight on the positive-side field of the sliding combination.
    pub lambda_star: Option<f64>,
    /// 1 when decided by first Lie derivatives, 2 when both vanish and the
    /// second derivatives decide (sliding at a point of the surface).
    pub order: u8,
    pub lie_plus: f64,
    pub lie_minus: f64,
}

impl SlidingClassification {
    pub fn is_sliding(&self) -> bool {
        matches!(
            self.kind,
            SlidingKind::AttractiveSliding | SlidingKind::RepulsiveSliding
        )
    }
}

fn decide(lp: f64, lm: f64, order: u8) -> SlidingClassification {
    let kind = if lp.abs() < TOL_LIE || lm.abs() < TOL_LIE {
        SlidingKind::Tangential
    } else if lp < 0.0 && lm > 0.0 {
        SlidingKind::AttractiveSliding
    } else if lp > 0.0 && lm < 0.0 {
        SlidingKind::RepulsiveSliding
    } else {
        SlidingKind::Crossing
    };
    let lambda_star = matches!(
        kind,
        SlidingKind::AttractiveSliding | SlidingKind::RepulsiveSliding
    )
    .then(|| lm / (lm - lp));
    SlidingClassification {
        kind,
        lambda_star,
        order,
        lie_plus: lp,
        lie_minus: lm,
    }
}

/// Classification at `x` with explicit side information for the other surfaces.
pub(crate) fn classify_with(
    pf: &PiecewiseField,
    i: usize,
    signs: Signs,
    x: &DVector<f64>,
    t: f64,
) -> Result<SlidingClassification, FieldError> {
    let sw = pf.surface(i)?;
    if !sw.is_scalar() {
        return Err(FieldError::VectorSurface(i));
    }
    let fp = pf.region_field(signs.with(i, true), x, t);
    let fm = pf.region_field(signs.with(i, false), x, t);
    let lp = sw.lie_derivative(&fp, x, t)[0];
    let lm = sw.lie_derivative(&fm, x, t)[0];
    if lp.abs() >= TOL_LIE || lm.abs() >= TOL_LIE {
        return Ok(decide(lp, lm, 1));
    }
    // Both first derivatives vanish: use L_f (L_f s) of each side.
    let second = |side: bool| {
        let sg = signs.with(i, side);
        let g = |y: &DVector<f64>| {
            let f = pf.region_field(sg, y, t);
            sw.lie_derivative(&f, y, t)
        };
        directional(g, x, &pf.region_field(sg, x, t))[0]
    };
    let (lp2, lm2) = (second(true), second(false));
    if lp2.abs() < TOL_LIE && lm2.abs() < TOL_LIE {
        return Err(FieldError::Degenerate(i));
    }
    Ok(decide(lp2, lm2, 2))
}

pub fn classify(
    pf: &PiecewiseField,
    i: usize,
    x: &DVector<f64>,
    t: f64,
) -> Result<SlidingClassification, FieldError> {
    let value = pf.surface(i)?.value(x, t).norm();
    if value > TOL_SURFACE {
        return Err(FieldError::NotOnSurface { surface: i, value });
    }
    classify_with(pf, i, pf.signs_at(x, t), x, t)
}

/// Convex combination of the two neighbouring fields that is tangent to the
/// surface, evaluated at any point near it. `None` when the Lie derivatives
/// are equal (no unique combination).
pub(crate) fn sliding_combination(
    pf: &PiecewiseField,
    i: usize,
    signs: Signs,
    x: &DVector<f64>,
    t: f64,
) -> Option<(DVector<f64>, f64)> {
    let sw = &pf.surfaces[i];
    let fp = pf.region_field(signs.with(i, true), x, t);
    let fm = pf.region_field(signs.with(i, false), x, t);
    let lp = sw.lie_derivative(&fp, x, t)[0];
    let lm = sw.lie_derivative(&fm, x, t)[0];
    let den = lm - lp;
    if den.abs() < TOL_LIE {
        return None;
    }
    let lambda = lm / den;
    Some((&fp * lambda + &fm * (1.0 - lambda), lambda))
}

pub fn sliding_field(
    pf: &PiecewiseField,
    i: usize,
    x: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>, FieldError> {
    let c = classify(pf, i, x, t)?;
    match (c.order, c.lambda_star) {
        (1, Some(l)) if l > 0.0 && l < 1.0 => {
            let signs = pf.signs_at(x, t);
            let fp = pf.region_field(signs.with(i, true), x, t);
            let fm = pf.region_field(signs.with(i, false), x, t);
            Ok(fp * l + fm * (1.0 - l))
        }
        _ => Err(FieldError::NotSliding(i)),
    }
}

/// Order `r` with `dim S = n - m r`.
pub fn sliding_order(n: usize, m: usize, dim_s: usize) -> Result<usize, FieldError> {
    if m == 0 || dim_s >= n {
        return Err(FieldError::InvalidOrderArguments(format!(
            "need n > dim S >= 0 and m >= 1 (n = {n}, m = {m}, dim S = {dim_s})"
        )));
    }
    let gap = n - dim_s;
    if !gap.is_multiple_of(m) {
        return Err(FieldError::NotWellDefinedOrder { n, m, dim_s });
    }
    Ok(gap / m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    /// f(x) = -sign(x) + 0.5 on the line.
    fn line() -> PiecewiseField {
        PiecewiseField::new(EmbeddedManifold::Euclidean(1), |s, _, _| dv(&[-s.sign(0) + 0.5]))
            .with_surface(SwitchingFunction::scalar("x", |x, _| x[0]).with_gradient(|_, _| dv(&[1.0])))
    }

    #[test]
    fn filippov_set_of_line_example() {
        let pf = line();
        assert_eq!(filippov_set(&pf, &dv(&[1.0]), 0.0).unwrap(), FilippovSet::Singleton(dv(&[-0.5])));
        let seg = filippov_set(&pf, &dv(&[0.0]), 0.0).unwrap();
        assert_eq!(
            seg,
            FilippovSet::Segment {
                plus: dv(&[-0.5]),
                minus: dv(&[1.5])
            }
        );
        assert!(seg.contains(&dv(&[1.5]), 0.0));
        assert!(seg.contains(&dv(&[0.0]), 0.0));
        assert!(!seg.contains(&dv(&[1.6]), 1e-9));
    }

    #[test]
    fn smooth_field_is_singleton_everywhere() {
        let pf = PiecewiseField::smooth(EmbeddedManifold::Euclidean(2), |x, _| dv(&[x[1], -x[0]]));
        for p in [[0.0, 0.0], [1.0, -2.0]] {
            let x = dv(&p);
            assert_eq!(
                filippov_set(&pf, &x, 0.0).unwrap(),
                FilippovSet::Singleton(pf.eval(&x, 0.0))
            );
        }
    }

    #[test]
    fn corner_is_rejected() {
        let pf = PiecewiseField::new(EmbeddedManifold::Euclidean(2), |s, _, _| dv(&[-s.sign(0), -s.sign(1)]))
            .with_surface(SwitchingFunction::scalar("a", |x, _| x[0]))
            .with_surface(SwitchingFunction::scalar("b", |x, _| x[1]));
        assert_eq!(
            filippov_set(&pf, &dv(&[0.0, 0.0]), 0.0),
            Err(FieldError::UnsupportedCorner)
        );
    }

    #[test]
    fn line_example_slides_attractively() {
        let c = classify(&line(), 0, &dv(&[0.0]), 0.0).unwrap();
        assert_eq!(c.kind, SlidingKind::AttractiveSliding);
        assert_eq!(c.lambda_star, Some(0.75));
        assert_eq!(c.order, 1);
        let v = sliding_field(&line(), 0, &dv(&[0.0]), 0.0).unwrap();
        assert_eq!(v, dv(&[0.0]));
    }

    #[test]
    fn continuous_field_crosses() {
        let pf = PiecewiseField::new(EmbeddedManifold::Euclidean(1), |_, _, _| dv(&[1.0]))
            .with_surface(SwitchingFunction::scalar("x", |x, _| x[0]));
        let c = classify(&pf, 0, &dv(&[0.0]), 0.0).unwrap();
        assert_eq!(c.kind, SlidingKind::Crossing);
        assert_eq!(sliding_field(&pf, 0, &dv(&[0.0]), 0.0), Err(FieldError::NotSliding(0)));
    }

    #[test]
    fn repulsive_and_tangential_cases() {
        let rep = PiecewiseField::new(EmbeddedManifold::Euclidean(1), |s, _, _| dv(&[s.sign(0)]))
            .with_surface(SwitchingFunction::scalar("x", |x, _| x[0]));
        let c = classify(&rep, 0, &dv(&[0.0]), 0.0).unwrap();
        assert_eq!(c.kind, SlidingKind::RepulsiveSliding);
        assert!((c.lambda_star.unwrap() - 0.5).abs() < 1e-9);

        let tan = PiecewiseField::new(EmbeddedManifold::Euclidean(1), |s, _, _| {
            dv(&[if s.is_positive(0) { 0.0 } else { 1.0 }])
        })
        .with_surface(SwitchingFunction::scalar("x", |x, _| x[0]));
        assert_eq!(classify(&tan, 0, &dv(&[0.0]), 0.0).unwrap().kind, SlidingKind::Tangential);
    }

    #[test]
    fn degenerate_is_reported() {
        let pf = PiecewiseField::new(EmbeddedManifold::Euclidean(1), |_, _, _| dv(&[0.0]))
            .with_surface(SwitchingFunction::scalar("x", |x, _| x[0]));
        assert_eq!(classify(&pf, 0, &dv(&[0.0]), 0.0), Err(FieldError::Degenerate(0)));
    }

    #[test]
    fn classify_requires_surface_point() {
        let err = classify(&line(), 0, &dv(&[0.1]), 0.0).unwrap_err();
        assert!(matches!(err, FieldError::NotOnSurface { surface: 0, .. }));
    }

    #[test]
    fn sliding_orders() {
        assert_eq!(sliding_order(2, 1, 1), Ok(1));
        assert_eq!(sliding_order(2, 1, 0), Ok(2));
        assert_eq!(sliding_order(6, 3, 3), Ok(1));
        assert_eq!(
            sliding_order(6, 4, 3),
            Err(FieldError::NotWellDefinedOrder { n: 6, m: 4, dim_s: 3 })
        );
        assert!(sliding_order(2, 0, 1).is_err());
        assert!(sliding_order(2, 1, 2).is_err());
    }

    #[test]
    fn signs_bookkeeping() {
        let s = Signs::all_positive(3).with(1, false);
        assert_eq!(s.label(3), "+-+");
        assert_eq!(s.sign(1), -1.0);
        assert!(s.with(1, true).is_positive(1));
    }

    #[test]
    fn finite_difference_lie_derivative_matches_gradient() {
        let analytic = SwitchingFunction::scalar("s", |x, _| x[0].sin() * x[1])
            .with_gradient(|x, _| dv(&[x[0].cos() * x[1], x[0].sin()]));
        let numeric = SwitchingFunction::scalar("s", |x, _| x[0].sin() * x[1]);
        let x = dv(&[0.7, -1.3]);
        let v = dv(&[0.4, 2.0]);
        let a = analytic.lie_derivative(&v, &x, 0.0)[0];
        let n = numeric.lie_derivative(&v, &x, 0.0)[0];
        assert!((a - n).abs() < 1e-8);
    }
}
