use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

const SO3_ORTHO_TOL: f64 = 1e-12;
const SO3_MAX_ITERS: usize = 50;

/// A manifold given extrinsically as a subset of R^p.
///
/// SO(3) points are stored row-major (nine entries). Products concatenate
/// the ambient coordinates of their factors in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EmbeddedManifold {
    Euclidean(usize),
    Sphere2,
    SpecialOrthogonal3,
    Product(Vec<EmbeddedManifold>),
}

impl EmbeddedManifold {
    /// S^2 x R^3, the reduced-attitude state space.
    pub fn sphere_bundle() -> Self {
        Self::Product(vec![Self::Sphere2, Self::Euclidean(3)])
    }

    /// SO(3) x R^3, the attitude state space.
    pub fn rotation_bundle() -> Self {
        Self::Product(vec![Self::SpecialOrthogonal3, Self::Euclidean(3)])
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            Self::Euclidean(n) => *n,
            Self::Sphere2 => 3,
            Self::SpecialOrthogonal3 => 9,
            Self::Product(parts) => parts.iter().map(Self::ambient_dim).sum(),
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self {
            Self::Euclidean(n) => *n,
            Self::Sphere2 => 2,
            Self::SpecialOrthogonal3 => 3,
            Self::Product(parts) => parts.iter().map(Self::intrinsic_dim).sum(),
        }
    }

    pub fn codim(&self) -> usize {
        self.ambient_dim() - self.intrinsic_dim()
    }

    fn check_len(&self, x: &DVector<f64>) -> Result<(), GeometryError> {
        if x.len() != self.ambient_dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.ambient_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Constraint map R^p -> R^k, zero exactly on the manifold.
    ///
    /// For SO(3) the six entries are the upper triangle of `R^T R - I` with
    /// off-diagonal terms scaled by sqrt(2), so the Euclidean norm of the
    /// result equals the Frobenius norm of `R^T R - I`.
    pub fn constraint(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Euclidean(_) => DVector::zeros(0),
            Self::Sphere2 => DVector::from_element(1, x.norm() - 1.0),
            Self::SpecialOrthogonal3 => {
                let r = mat3(x.as_slice());
                let g = r.transpose() * r - Matrix3::identity();
                let s2 = std::f64::consts::SQRT_2;
                DVector::from_vec(vec![
                    g[(0, 0)],
                    g[(1, 1)],
                    g[(2, 2)],
                    s2 * g[(0, 1)],
                    s2 * g[(0, 2)],
                    s2 * g[(1, 2)],
                ])
            }
            Self::Product(parts) => {
                let mut out = Vec::with_capacity(self.codim());
                let mut off = 0;
                for p in parts {
                    let n = p.ambient_dim();
                    let sub = DVector::from_column_slice(&x.as_slice()[off..off + n]);
                    out.extend(p.constraint(&sub).iter());
                    off += n;
                }
                DVector::from_vec(out)
            }
        }
    }

    /// Manifold drift `||constraint(x)||`.
    pub fn drift(&self, x: &DVector<f64>) -> f64 {
        self.constraint(x).norm()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.ambient_dim() && x.iter().all(|v| v.is_finite()) && self.drift(x) <= tol
    }

    /// Orthogonal projection of an ambient vector onto `T_x M`.
    pub fn project_tangent(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Euclidean(_) => v.clone(),
            Self::Sphere2 => {
                let n2 = x.norm_squared();
                if n2 == 0.0 {
                    return v.clone();
                }
                v - x * (x.dot(v) / n2)
            }
            Self::SpecialOrthogonal3 => {
                let r = mat3(x.as_slice());
                let w = mat3(v.as_slice());
                let a = r.transpose() * w;
                let p = r * (a - a.transpose()) * 0.5;
                flatten3(&p)
            }
            Self::Product(parts) => {
                let mut out = DVector::zeros(v.len());
                let mut off = 0;
                for p in parts {
                    let n = p.ambient_dim();
                    let xs = DVector::from_column_slice(&x.as_slice()[off..off + n]);
                    let vs = DVector::from_column_slice(&v.as_slice()[off..off + n]);
                    out.rows_mut(off, n).copy_from(&p.project_tangent(&xs, &vs));
                    off += n;
                }
                out
            }
        }
    }

    /// Matrix of the tangent projector at `x`, assembled column by column.
    pub fn tangent_projector(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let p = self.ambient_dim();
        let mut m = DMatrix::zeros(p, p);
        for j in 0..p {
            let mut e = DVector::zeros(p);
            e[j] = 1.0;
            m.set_column(j, &self.project_tangent(x, &e));
        }
        m
    }

    /// Nearest-point style map from R^p back onto the manifold.
    pub fn retract(&self, y: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        self.check_len(y)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        match self {
            Self::Euclidean(_) => Ok(y.clone()),
            Self::Sphere2 => {
                let n = y.norm();
                if n == 0.0 {
                    return Err(GeometryError::DegenerateRetraction(
                        "zero vector has no direction on S^2".into(),
                    ));
                }
                Ok(y / n)
            }
            Self::SpecialOrthogonal3 => Ok(flatten3(&retract_so3(&mat3(y.as_slice()))?)),
            Self::Product(parts) => {
                let mut out = DVector::zeros(y.len());
                let mut off = 0;
                for p in parts {
                    let n = p.ambient_dim();
                    let ys = DVector::from_column_slice(&y.as_slice()[off..off + n]);
                    out.rows_mut(off, n).copy_from(&p.retract(&ys)?);
                    off += n;
                }
                Ok(out)
            }
        }
    }
}

/// Row-major 3x3 from nine entries.
pub(crate) fn mat3(v: &[f64]) -> Matrix3<f64> {
    Matrix3::from_row_slice(&v[..9])
}

pub(crate) fn flatten3(m: &Matrix3<f64>) -> DVector<f64> {
    DVector::from_iterator(9, (0..3).flat_map(|i| (0..3).map(move |j| m[(i, j)])))
}

pub(crate) fn vec3(v: &[f64]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

fn ortho_residual(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm()
}

/// Newton-Schulz polar iteration `R <- R (3I - R^T R) / 2`, followed by a
/// determinant correction when the input has negative orientation.
fn retract_so3(y: &Matrix3<f64>) -> Result<Matrix3<f64>, GeometryError> {
    let scale = y.norm();
    if scale == 0.0 {
        return Err(GeometryError::DegenerateRetraction("zero matrix".into()));
    }
    let det = y.determinant();
    if det.abs() <= 1e-12 * scale.powi(3) {
        return Err(GeometryError::DegenerateRetraction(format!(
            "rank-deficient matrix (det = {det:e})"
        )));
    }
    if det < 0.0 {
        // Nearest special-orthogonal matrix flips the weakest singular direction.
        let svd = y.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut sign = Matrix3::identity();
        sign[(2, 2)] = (u * v_t).determinant().signum();
        return Ok(u * sign * v_t);
    }
    if ortho_residual(y) <= SO3_ORTHO_TOL {
        return Ok(*y);
    }
    // Singular values must lie in (0, sqrt 3) for the iteration to converge.
    let mut r = if ortho_residual(y) < 0.5 { *y } else { y * (1.7 / scale) };
    let identity = Matrix3::identity();
    for _ in 0..SO3_MAX_ITERS {
        r = r * (identity * 3.0 - r.transpose() * r) * 0.5;
        if ortho_residual(&r) <= SO3_ORTHO_TOL {
            return Ok(r);
        }
    }
    Err(GeometryError::DegenerateRetraction(
        "orthogonalization did not converge".into(),
    ))
}
