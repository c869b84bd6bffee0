//! 3D CT volumes, masks and trilinear resampling.

pub mod affine;
pub mod nifti;

use nalgebra::{Matrix4, Vector3, Vector4};
use rayon::prelude::*;

pub use affine::AffineTransform;

use crate::error::{Error, Result};

/// Value returned for samples outside the grid (air).
pub const BACKGROUND_HU: f32 = -1024.0;

/// Voxel lattice: dimensions plus a voxel→world affine.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dims: [usize; 3],
    pub affine: Matrix4<f64>,
}

impl Grid {
    pub fn new(dims: [usize; 3], affine: Matrix4<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidVolume(format!("dims must be positive, got {dims:?}")));
        }
        for c in 0..3 {
            if affine[(3, c)] != 0.0 {
                return Err(Error::InvalidVolume("affine last row must be (0,0,0,1)".into()));
            }
        }
        if affine[(3, 3)] != 1.0 {
            return Err(Error::InvalidVolume("affine last row must be (0,0,0,1)".into()));
        }
        affine::invert(&affine)
            .map_err(|e| Error::InvalidVolume(format!("affine not invertible: {e}")))?;
        Ok(Self { dims, affine })
    }

    /// Isotropic grid whose world origin sits at the grid center.
    pub fn centered(dims: [usize; 3], spacing: f64) -> Self {
        let mut affine = Matrix4::from_diagonal(&Vector4::new(spacing, spacing, spacing, 1.0));
        for a in 0..3 {
            affine[(a, 3)] = -(dims[a] as f64 - 1.0) / 2.0 * spacing;
        }
        Self { dims, affine }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Column norms of the upper-left 3×3 block.
    pub fn spacing(&self) -> [f64; 3] {
        let mut s = [0.0; 3];
        for (c, v) in s.iter_mut().enumerate() {
            *v = self.affine.fixed_view::<3, 1>(0, c).norm();
        }
        s
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    pub fn voxel_to_world(&self, v: Vector3<f64>) -> Vector3<f64> {
        self.affine.transform_point(&v.into()).coords
    }

    pub fn world_to_voxel_matrix(&self) -> Matrix4<f64> {
        // Validated at construction.
        affine::invert(&self.affine).expect("grid affine is invertible")
    }
}

/// Scalar CT volume in Hounsfield units.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    grid: Grid,
    data: Vec<f32>,
}

impl Volume {
    pub fn new(grid: Grid, data: Vec<f32>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidVolume(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                grid.dims
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn filled(grid: Grid, value: f32) -> Self {
        let data = vec![value; grid.len()];
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.grid.spacing()
    }

    pub fn affine(&self) -> &Matrix4<f64> {
        &self.grid.affine
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.grid.index(i, j, k)]
    }

    /// Copy with every voxel outside `mask` set to background.
    pub fn masked(&self, mask: &Mask) -> Result<Self> {
        mask.check_grid(&self.grid)?;
        let data = self
            .data
            .iter()
            .zip(&mask.bits)
            .map(|(&v, &m)| if m { v } else { BACKGROUND_HU })
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            data,
        })
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Boolean voxel mask on a volume's grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    dims: [usize; 3],
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(dims: [usize; 3], bits: Vec<bool>) -> Result<Self> {
        if bits.len() != dims.iter().product::<usize>() {
            return Err(Error::InvalidVolume(format!(
                "mask length {} does not match dims {dims:?}",
                bits.len()
            )));
        }
        Ok(Self { dims, bits })
    }

    pub fn empty(dims: [usize; 3]) -> Self {
        Self {
            dims,
            bits: vec![false; dims.iter().product()],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.dims != grid.dims {
            return Err(Error::InvalidVolume(format!(
                "mask dims {:?} do not match volume dims {:?}",
                self.dims, grid.dims
            )));
        }
        Ok(())
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }
}

/// Trilinear sample at continuous voxel coordinate `p`.
///
/// Returns [`BACKGROUND_HU`] when any coordinate lies outside `[0, dim-1]`.
pub fn sample_trilinear(v: &Volume, p: [f64; 3]) -> f32 {
    sample_raw(&v.data, v.grid.dims, p)
}

#[inline]
pub(crate) fn sample_raw(data: &[f32], dims: [usize; 3], p: [f64; 3]) -> f32 {
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        let x = p[a];
        let hi = (dims[a] - 1) as f64;
        // Negated comparison also rejects NaN.
        if !(x >= 0.0 && x <= hi) {
            return BACKGROUND_HU;
        }
        let mut f = x.floor();
        if f >= hi && dims[a] > 1 {
            f = hi - 1.0;
        }
        base[a] = f as usize;
        frac[a] = x - f;
    }
    let [nx, ny, _] = dims;
    let step = [
        usize::from(dims[0] > 1),
        if dims[1] > 1 { nx } else { 0 },
        if dims[2] > 1 { nx * ny } else { 0 },
    ];
    let i0 = base[0] + nx * (base[1] + ny * base[2]);
    let [fx, fy, fz] = frac;
    let at = |o: usize| data[i0 + o] as f64;
    let c00 = at(0) * (1.0 - fx) + at(step[0]) * fx;
    let c10 = at(step[1]) * (1.0 - fx) + at(step[1] + step[0]) * fx;
    let c01 = at(step[2]) * (1.0 - fx) + at(step[2] + step[0]) * fx;
    let c11 = at(step[2] + step[1]) * (1.0 - fx) + at(step[2] + step[1] + step[0]) * fx;
    let c0 = c00 * (1.0 - fy) + c10 * fy;
    let c1 = c01 * (1.0 - fy) + c11 * fy;
    (c0 * (1.0 - fz) + c1 * fz) as f32
}

/// Resample `v` onto `grid` through transform `t`.
///
/// Output voxel `x` takes the value of `v` at world point `t⁻¹ · world(x)`.
pub fn resample(v: &Volume, t: &AffineTransform, grid: &Grid) -> Result<Volume> {
    let t_inv = t.inverse_matrix()?;
    let src = v.grid.world_to_voxel_matrix();
    let m = src * t_inv * grid.affine;
    Ok(resample_with_matrix(v, &m, grid))
}

/// Resample with an explicit output-voxel → source-voxel matrix.
pub(crate) fn resample_with_matrix(v: &Volume, m: &Matrix4<f64>, grid: &Grid) -> Volume {
    let [nx, ny, nz] = grid.dims;
    let mut out = vec![0.0f32; grid.len()];
    out.par_chunks_mut(nx * ny)
        .enumerate()
        .for_each(|(k, slice)| {
            for j in 0..ny {
                for i in 0..nx {
                    let p = m * Vector4::new(i as f64, j as f64, k as f64, 1.0);
                    slice[i + nx * j] = sample_raw(&v.data, v.grid.dims, [p.x, p.y, p.z]);
                }
            }
        });
    debug_assert_eq!(out.len(), nx * ny * nz);
    Volume {
        grid: grid.clone(),
        data: out,
    }
}
