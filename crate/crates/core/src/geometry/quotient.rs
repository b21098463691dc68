use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};

use super::{GeometryError, Z_MAX};

/// An action of the integers on R^n generated by one affine map
/// `d -> A d + b`. Negative elements apply the inverse `d -> A^{-1}(d - b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineGroupAction {
    generator: DMatrix<f64>,
    generator_inv: DMatrix<f64>,
    offset: DVector<f64>,
    z_max: i32,
}

impl AffineGroupAction {
    pub fn new(generator: DMatrix<f64>, offset: DVector<f64>) -> Result<Self, GeometryError> {
        if !generator.is_square() || generator.nrows() != offset.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: offset.len(),
                got: generator.nrows(),
            });
        }
        let generator_inv = generator
            .clone()
            .try_inverse()
            .ok_or(GeometryError::SingularGenerator)?;
        Ok(Self {
            generator,
            generator_inv,
            offset,
            z_max: Z_MAX,
        })
    }

    /// `z . (theta, omega) = (theta + 2 pi z, omega)`.
    pub fn cylinder() -> Self {
        Self::new(DMatrix::identity(2, 2), DVector::from_vec(vec![TAU, 0.0])).unwrap()
    }

    /// `z . (theta, omega) = (theta + 2 pi z, (-1)^z omega)`.
    pub fn mobius() -> Self {
        Self::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])),
            DVector::from_vec(vec![TAU, 0.0]),
        )
        .unwrap()
    }

    /// `z . theta = theta + 2 pi z` on the line.
    pub fn circle() -> Self {
        Self::new(DMatrix::identity(1, 1), DVector::from_vec(vec![TAU])).unwrap()
    }

    pub fn with_z_max(mut self, z_max: i32) -> Self {
        self.z_max = z_max;
        self
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn z_max(&self) -> i32 {
        self.z_max
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    /// Acts by `z`, rejecting `|z| > z_max`.
    pub fn act(&self, z: i32, d: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        if z.abs() > self.z_max {
            return Err(GeometryError::RangeExceeded { z, max: self.z_max });
        }
        Ok(self.act_unbounded(z, d))
    }

    pub(crate) fn act_unbounded(&self, z: i32, d: &DVector<f64>) -> DVector<f64> {
        let (a, b) = if z >= 0 {
            (self.generator.clone(), self.offset.clone())
        } else {
            (self.generator_inv.clone(), -(&self.generator_inv * &self.offset))
        };
        let n = z.unsigned_abs();
        if n <= 64 {
            return (0..n).fold(d.clone(), |out, _| &a * out + &b);
        }
        // Square-and-multiply on the affine map (a, b).
        let (mut pa, mut pb) = (a, b);
        let (mut ra, mut rb) = (DMatrix::identity(self.dim(), self.dim()), DVector::zeros(self.dim()));
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                rb = &pa * rb + &pb;
                ra = &pa * ra;
            }
            pb = &pa * &pb + &pb;
            pa = &pa * &pa;
            k >>= 1;
        }
        ra * d + rb
    }

    /// Linear part `A^z` of acting by `z`; this is the pushforward of the action.
    pub fn linear_part(&self, z: i32) -> DMatrix<f64> {
        let n = self.dim();
        let base = if z >= 0 { &self.generator } else { &self.generator_inv };
        (0..z.unsigned_abs()).fold(DMatrix::identity(n, n), |acc, _| base * acc)
    }
}

/// Orbit space R^n / Z whose first coordinate is an angle shifted by 2 pi per
/// generator step. Representatives are chosen with the angle in `[-pi, pi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuotientManifold {
    action: AffineGroupAction,
}

impl QuotientManifold {
    pub fn new(action: AffineGroupAction) -> Self {
        Self { action }
    }

    pub fn cylinder() -> Self {
        Self::new(AffineGroupAction::cylinder())
    }

    pub fn mobius() -> Self {
        Self::new(AffineGroupAction::mobius())
    }

    pub fn action(&self) -> &AffineGroupAction {
        &self.action
    }

    pub fn dim(&self) -> usize {
        self.action.dim()
    }

    /// Number of generator steps that bring `d` into the fundamental domain.
    pub fn winding(&self, d: &DVector<f64>) -> i32 {
        (-((d[0] + PI) / TAU).floor()) as i32
    }

    /// Points whose first coordinate is non-finite or beyond `i32` windings
    /// are returned unchanged.
    pub fn canonicalize(&self, d: &DVector<f64>) -> DVector<f64> {
        if !(d[0].abs() < TAU * i32::MAX as f64) {
            return d.clone();
        }
        let mut out = self.action.act_unbounded(self.winding(d), d);
        // Rounding in the shift can land exactly on the excluded endpoint.
        while out[0] >= PI {
            out = self.action.act_unbounded(-1, &out);
        }
        while out[0] < -PI {
            out = self.action.act_unbounded(1, &out);
        }
        out
    }

    /// Distance between orbits, measured between canonical representatives and
    /// allowing one wrap across the fundamental-domain seam.
    pub fn orbit_distance(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let ca = self.canonicalize(a);
        let cb = self.canonicalize(b);
        (-1..=1)
            .map(|z| (&ca - self.action.act_unbounded(z, &cb)).norm())
            .fold(f64::INFINITY, f64::min)
    }
}
