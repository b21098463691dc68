use nalgebra::DVector;
use serde::Serialize;

use super::AffineGroupAction;

/// Outcome of a sampled descent check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DescentReport {
    pub passed: bool,
    pub max_violation: f64,
    /// Sample point and group element achieving the maximum.
    pub witness: Option<(Vec<f64>, i32)>,
    pub tolerance: f64,
    pub samples: usize,
    pub z_range: i32,
}

fn sweep<F>(
    action: &AffineGroupAction,
    samples: &[DVector<f64>],
    z_range: i32,
    tol: f64,
    mut violation: F,
) -> DescentReport
where
    F: FnMut(&DVector<f64>, i32, &DVector<f64>) -> f64,
{
    let mut max_violation = 0.0_f64;
    let mut witness = None;
    for d in samples {
        for z in -z_range..=z_range {
            if z == 0 {
                continue;
            }
            let moved = action.act_unbounded(z, d);
            let v = violation(d, z, &moved);
            // NaN counts as a failure.
            if v > max_violation || v.is_nan() {
                max_violation = if v.is_nan() { f64::INFINITY } else { v };
                witness = Some((d.iter().copied().collect(), z));
            }
        }
    }
    DescentReport {
        passed: max_violation <= tol,
        max_violation,
        witness,
        tolerance: tol,
        samples: samples.len(),
        z_range,
    }
}

/// Checks that `f` is constant along orbits: `f(d) = f(z . d)`.
pub fn check_function_descends<F>(
    action: &AffineGroupAction,
    f: F,
    samples: &[DVector<f64>],
    z_range: i32,
    tol: f64,
) -> DescentReport
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    sweep(action, samples, z_range, tol, |d, _, moved| (f(d) - f(moved)).norm())
}

/// Checks that `f` is related to itself by the pushforward of the action:
/// `A^z f(d) = f(z . d)`.
pub fn check_field_descends<F>(
    action: &AffineGroupAction,
    f: F,
    samples: &[DVector<f64>],
    z_range: i32,
    tol: f64,
) -> DescentReport
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    sweep(action, samples, z_range, tol, |d, z, moved| {
        (action.linear_part(z) * f(d) - f(moved)).norm()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TOL_DESCENT;
    use crate::sampling::{SampleBox, SplitMix64};
    use std::f64::consts::PI;

    fn grid() -> Vec<DVector<f64>> {
        SampleBox::new(vec![-3.0 * PI, -5.0], vec![3.0 * PI, 5.0]).sample(1000, &mut SplitMix64::new(0))
    }

    #[test]
    fn constant_function_descends_exactly() {
        let r = check_function_descends(
            &AffineGroupAction::mobius(),
            |_| DVector::from_element(1, 4.2),
            &grid(),
            3,
            TOL_DESCENT,
        );
        assert!(r.passed);
        assert_eq!(r.max_violation, 0.0);
        assert!(r.witness.is_none());
    }

    #[test]
    fn swapped_field_fails_under_mobius() {
        // f(theta, omega) = (omega, theta); at (0, 1), z = 1:
        // A f(d) = (1, 0), f(z . d) = (-1, 2 pi).
        let f = |d: &DVector<f64>| DVector::from_vec(vec![d[1], d[0]]);
        let one = vec![DVector::from_vec(vec![0.0, 1.0])];
        let r = check_field_descends(&AffineGroupAction::mobius(), f, &one, 1, TOL_DESCENT);
        assert!(!r.passed);
        let expected = (4.0_f64 + 4.0 * PI * PI).sqrt();
        assert!((r.max_violation - expected).abs() < 1e-12);
    }

    #[test]
    fn angle_function_descends_on_cylinder() {
        let f = |d: &DVector<f64>| DVector::from_vec(vec![d[0].cos(), d[1]]);
        let r = check_function_descends(&AffineGroupAction::cylinder(), f, &grid(), 3, 1e-9);
        assert!(r.passed, "{r:?}");
    }
}
