//! 12-parameter affine transforms in world (mm) coordinates.
//!
//! The parameter vector is laid out as
//! `[tx, ty, tz, rx, ry, rz, log_sx, log_sy, log_sz, sh_xy, sh_xz, sh_yz]`
//! and composed as `translation · rotation · shear · scale`. Rotations are
//! intrinsic Z-Y-X Euler angles, so `R = Rz(rz) · Ry(ry) · Rx(rx)`. The
//! rigid (6), rigid+scale (9) and full affine (12) subsets are prefixes of
//! the vector.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_PARAMS: usize = 12;

/// Affine transform with its generating parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineTransform {
    params: [f64; N_PARAMS],
    matrix: Matrix4<f64>,
}

impl AffineTransform {
    pub fn identity() -> Self {
        Self::from_params([0.0; N_PARAMS])
    }

    pub fn from_params(params: [f64; N_PARAMS]) -> Self {
        let matrix = compose(&params);
        Self { params, matrix }
    }

    pub fn translation(t: [f64; 3]) -> Self {
        let mut p = [0.0; N_PARAMS];
        p[..3].copy_from_slice(&t);
        Self::from_params(p)
    }

    /// Rigid transform from a translation in mm and Euler angles in radians.
    pub fn rigid(t: [f64; 3], r: [f64; 3]) -> Self {
        let mut p = [0.0; N_PARAMS];
        p[..3].copy_from_slice(&t);
        p[3..6].copy_from_slice(&r);
        Self::from_params(p)
    }

    pub fn params(&self) -> &[f64; N_PARAMS] {
        &self.params
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn translation_part(&self) -> Vector3<f64> {
        Vector3::new(self.params[0], self.params[1], self.params[2])
    }

    pub fn rotation_part(&self) -> Vector3<f64> {
        Vector3::new(self.params[3], self.params[4], self.params[5])
    }

    pub fn inverse_matrix(&self) -> Result<Matrix4<f64>> {
        invert(&self.matrix)
    }

    pub fn apply(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.matrix.transform_point(&p.into()).coords
    }
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}

pub fn rotation_matrix(rx: f64, ry: f64, rz: f64) -> Matrix3<f64> {
    let (sx, cx) = rx.sin_cos();
    let (sy, cy) = ry.sin_cos();
    let (sz, cz) = rz.sin_cos();
    let rot_x = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
    let rot_y = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rot_z = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
    rot_z * rot_y * rot_x
}

fn compose(p: &[f64; N_PARAMS]) -> Matrix4<f64> {
    let rot = rotation_matrix(p[3], p[4], p[5]);
    let shear = Matrix3::new(1.0, p[9], p[10], 0.0, 1.0, p[11], 0.0, 0.0, 1.0);
    let scale = Matrix3::from_diagonal(&Vector3::new(p[6].exp(), p[7].exp(), p[8].exp()));
    let linear = rot * shear * scale;
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&linear);
    m[(0, 3)] = p[0];
    m[(1, 3)] = p[1];
    m[(2, 3)] = p[2];
    m
}

/// Inverse of an affine 4×4 matrix; fails when the linear part is singular.
pub fn invert(m: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    let linear: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    if linear.determinant().abs() <= 1e-9 {
        return Err(Error::Numeric(format!(
            "singular affine (det = {:e})",
            linear.determinant()
        )));
    }
    m.try_inverse()
        .ok_or_else(|| Error::Numeric("affine matrix is not invertible".into()))
}

/// Rotation angle (radians) of the rotation closest to the linear part of `m`.
pub fn rotation_angle(m: &Matrix4<f64>) -> f64 {
    let linear: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let svd = linear.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let r = u * v_t;
    ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// Serializable form: parameters plus the composed row-major matrix.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TransformRecord {
    pub params: Vec<f64>,
    pub matrix: [[f64; 4]; 4],
}

impl From<&AffineTransform> for TransformRecord {
    fn from(t: &AffineTransform) -> Self {
        let mut matrix = [[0.0; 4]; 4];
        for (r, row) in matrix.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = t.matrix[(r, c)];
            }
        }
        Self {
            params: t.params.to_vec(),
            matrix,
        }
    }
}

impl TryFrom<TransformRecord> for AffineTransform {
    type Error = Error;

    fn try_from(rec: TransformRecord) -> Result<Self> {
        let params: [f64; N_PARAMS] = rec
            .params
            .as_slice()
            .try_into()
            .map_err(|_| Error::Input(format!("expected 12 parameters, got {}", rec.params.len())))?;
        Ok(Self::from_params(params))
    }
}
