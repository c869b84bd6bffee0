//! Multi-resolution affine registration by cyclic coordinate descent.
//!
//! The cost is the mean squared intensity difference over the template's
//! brain voxels, sampling the moving image trilinearly (out-of-grid samples
//! read as air). Each active parameter is line-searched with golden-section
//! search inside a bracket centred on its current value; a step is accepted
//! only if it lowers the cost, so the cost trace never increases.

use nalgebra::{Matrix4, Vector3, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::morphology::dilate_chebyshev;
use super::template::Template;
use crate::error::{Error, Result};
use crate::volume::affine::{AffineTransform, N_PARAMS};
use crate::volume::{Grid, Mask, Volume, BACKGROUND_HU};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dof {
    Rigid = 6,
    RigidScale = 9,
    Affine = 12,
}

impl Dof {
    pub fn count(self) -> usize {
        self as usize
    }
}

impl TryFrom<u8> for Dof {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            6 => Ok(Dof::Rigid),
            9 => Ok(Dof::RigidScale),
            12 => Ok(Dof::Affine),
            _ => Err(Error::Config(format!("dof: must be 6, 9 or 12, got {v}"))),
        }
    }
}

impl From<Dof> for u8 {
    fn from(d: Dof) -> u8 {
        d as u8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationConfig {
    pub dof: Dof,
    pub pyramid_factors: Vec<usize>,
    /// Maximum coordinate-descent cycles per pyramid level.
    pub max_iters: usize,
    /// Stop a level once a full cycle lowers the cost by less than this fraction.
    pub convergence_tol: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            dof: Dof::RigidScale,
            pyramid_factors: vec![4, 2, 1],
            max_iters: 100,
            convergence_tol: 1e-6,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        let f = &self.pyramid_factors;
        if f.is_empty() || *f.last().unwrap() != 1 || f.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Config(format!(
                "pyramid_factors: must be strictly decreasing and end at 1, got {f:?}"
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters: must be >= 1".into()));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::Config("convergence_tol: must be >= 0".into()));
        }
        Ok(())
    }
}

/// Initial half-widths of the line-search brackets per parameter group.
const BRACKET_TRANSLATION: f64 = 10.0;
const BRACKET_ROTATION: f64 = 0.2;
const BRACKET_LOG_SCALE: f64 = 0.1;
const BRACKET_SHEAR: f64 = 0.05;

const GOLDEN_ITERS: usize = 6;

/// Within a level each bracket adapts to the last accepted step, never
/// exceeding its initial width nor shrinking below this fraction of it.
const BRACKET_GROWTH: f64 = 3.0;
const MIN_BRACKET_FRACTION: f64 = 1.0 / 64.0;

fn base_bracket(param: usize) -> f64 {
    match param {
        0..=2 => BRACKET_TRANSLATION,
        3..=5 => BRACKET_ROTATION,
        6..=8 => BRACKET_LOG_SCALE,
        _ => BRACKET_SHEAR,
    }
}

/// Accepted cost after each improving step, tagged with its pyramid level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub level: usize,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct Registration {
    /// Maps moving-space world points onto template world points.
    pub transform: AffineTransform,
    pub trace: Vec<TracePoint>,
    pub evaluations: usize,
}

/// Block-average downsampling by an integer factor.
pub(crate) fn downsample(v: &Volume, factor: usize) -> Volume {
    if factor == 1 {
        return v.clone();
    }
    let [nx, ny, nz] = v.dims();
    let dims = [nx, ny, nz].map(|d| (d / factor).max(1));
    let mut affine = *v.affine();
    let shift = (factor as f64 - 1.0) / 2.0;
    let mut scale = Matrix4::from_diagonal(&Vector4::new(factor as f64, factor as f64, factor as f64, 1.0));
    for a in 0..3 {
        scale[(a, 3)] = shift;
    }
    affine *= scale;
    let grid = Grid::new(dims, affine).expect("scaled affine stays invertible");
    let src = v.data();
    let mut out = vec![0.0f32; grid.len()];
    out.par_chunks_mut(dims[0] * dims[1]).enumerate().for_each(|(k, slice)| {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let mut sum = 0.0f64;
                let mut n = 0usize;
                for dk in 0..factor {
                    for dj in 0..factor {
                        for di in 0..factor {
                            let (x, y, z) = (i * factor + di, j * factor + dj, k * factor + dk);
                            if x < nx && y < ny && z < nz {
                                sum += src[x + nx * (y + ny * z)] as f64;
                                n += 1;
                            }
                        }
                    }
                }
                slice[i + dims[0] * j] = (sum / n as f64) as f32;
            }
        }
    });
    Volume::new(grid, out).expect("dims match")
}

fn downsample_mask(mask: &Mask, grid: &Grid, factor: usize) -> Mask {
    let as_volume = Volume::new(
        grid.clone(),
        mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    )
    .expect("mask on grid");
    let small = downsample(&as_volume, factor);
    let dims = small.dims();
    Mask::new(dims, small.data().iter().map(|&f| f >= 0.5).collect()).expect("dims")
}

/// Fixed-image samples and the moving image at one pyramid level.
struct LevelCost<'a> {
    points: Vec<[f32; 3]>,
    values: Vec<f32>,
    moving: &'a Volume,
    moving_from_world: Matrix4<f64>,
}

const COST_CHUNK: usize = 4096;

impl LevelCost<'_> {
    /// Mean squared difference and the number of samples landing inside the
    /// moving grid.
    fn eval(&self, t: &AffineTransform) -> (f64, usize) {
        let t_inv = match t.inverse_matrix() {
            Ok(m) => m,
            Err(_) => return (f64::INFINITY, 0),
        };
        let m = self.moving_from_world * t_inv;
        let rows = [0, 1, 2].map(|r| [m[(r, 0)] as f32, m[(r, 1)] as f32, m[(r, 2)] as f32, m[(r, 3)] as f32]);
        let dims = self.moving.dims();
        let data = self.moving.data();
        let partials: Vec<(f64, usize)> = self
            .points
            .par_chunks(COST_CHUNK)
            .zip(self.values.par_chunks(COST_CHUNK))
            .map(|(pts, vals)| {
                let mut sum = 0.0f64;
                let mut inside = 0usize;
                for (p, &f) in pts.iter().zip(vals) {
                    let q = rows.map(|r| r[0] * p[0] + r[1] * p[1] + r[2] * p[2] + r[3]);
                    let s = match trilinear_inside(data, dims, q) {
                        Some(s) => {
                            inside += 1;
                            s
                        }
                        None => BACKGROUND_HU,
                    };
                    let d = (s - f) as f64;
                    sum += d * d;
                }
                (sum, inside)
            })
            .collect();
        let (sum, inside) = partials
            .iter()
            .fold((0.0, 0), |(s, n), &(ps, pn)| (s + ps, n + pn));
        if inside == 0 {
            return (f64::INFINITY, 0);
        }
        (sum / self.points.len() as f64, inside)
    }

    fn cost(&self, t: &AffineTransform) -> f64 {
        self.eval(t).0
    }
}

/// Trilinear sample, or `None` outside the grid. Specialised copy of the
/// general sampler for the cost loop.
#[inline(always)]
fn trilinear_inside(data: &[f32], dims: [usize; 3], q: [f32; 3]) -> Option<f32> {
    let [nx, ny, nz] = dims;
    if nx < 2 || ny < 2 || nz < 2 {
        let hi = dims.map(|d| (d - 1) as f32);
        let inside = (0..3).all(|a| q[a] >= 0.0 && q[a] <= hi[a]);
        return inside.then(|| crate::volume::sample_raw(data, dims, q.map(f64::from)));
    }
    if !(q[0] >= 0.0 && q[1] >= 0.0 && q[2] >= 0.0) {
        return None;
    }
    if q[0] > (nx - 1) as f32 || q[1] > (ny - 1) as f32 || q[2] > (nz - 1) as f32 {
        return None;
    }
    let i = (q[0] as usize).min(nx - 2);
    let j = (q[1] as usize).min(ny - 2);
    let k = (q[2] as usize).min(nz - 2);
    let fx = q[0] - i as f32;
    let fy = q[1] - j as f32;
    let fz = q[2] - k as f32;
    let sy = nx;
    let sz = nx * ny;
    let b = i + nx * (j + ny * k);
    let c = &data[b..b + sz + sy + 2];
    let lerp = |a: f32, b: f32, t: f32| a + (b - a) * t;
    let c00 = lerp(c[0], c[1], fx);
    let c10 = lerp(c[sy], c[sy + 1], fx);
    let c01 = lerp(c[sz], c[sz + 1], fx);
    let c11 = lerp(c[sz + sy], c[sz + sy + 1], fx);
    Some(lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz))
}

fn world_points(grid: &Grid, mask: &Mask, v: &Volume) -> (Vec<[f32; 3]>, Vec<f32>) {
    mask.indices()
        .map(|idx| {
            let [i, j, k] = grid.coords(idx);
            let w = grid.voxel_to_world(Vector3::new(i as f64, j as f64, k as f64));
            ([w.x as f32, w.y as f32, w.z as f32], v.data()[idx])
        })
        .unzip()
}

fn centre_of_mass(points: impl Iterator<Item = Vector3<f64>>) -> Option<Vector3<f64>> {
    let (sum, n) = points.fold((Vector3::zeros(), 0usize), |(s, n), p| (s + p, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Voxels of air around the template brain included in the cost, so a moving
/// brain spilling past the template outline is penalised.
const COST_MARGIN: usize = 2;

/// Threshold separating brain from the air fill in a skull-stripped scan.
const BRAIN_SUPPORT_HU: f32 = -500.0;

/// Register a brain-extracted scan to the template.
pub fn register_affine(moving: &Volume, fixed: &Template, cfg: &RegistrationConfig) -> Result<Registration> {
    cfg.validate()?;
    let active = cfg.dof.count();

    let fixed_grid = fixed.volume.grid();
    let (all_points, _) = world_points(fixed_grid, &fixed.brain_mask, &fixed.volume);
    let com_fixed = centre_of_mass(all_points.iter().map(|p| Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64)))
        .ok_or_else(|| Error::RegistrationFailed("template brain mask is empty".into()))?;
    let mgrid = moving.grid();
    let com_moving = centre_of_mass(
        moving
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > BRAIN_SUPPORT_HU)
            .map(|(idx, _)| {
                let [i, j, k] = mgrid.coords(idx);
                mgrid.voxel_to_world(Vector3::new(i as f64, j as f64, k as f64))
            }),
    )
    .ok_or_else(|| Error::RegistrationFailed("moving image has no brain voxels".into()))?;

    let mut evaluations = 0usize;
    {
        let full = LevelCost {
            points: all_points,
            values: fixed.brain_mask.indices().map(|i| fixed.volume.data()[i]).collect(),
            moving,
            moving_from_world: mgrid.world_to_voxel_matrix(),
        };
        evaluations += 1;
        if !full.cost(&AffineTransform::identity()).is_finite() {
            return Err(Error::RegistrationFailed(
                "moving and template fields of view do not overlap".into(),
            ));
        }
    }

    let mut params = [0.0; N_PARAMS];
    let shift = com_fixed - com_moving;
    params[..3].copy_from_slice(shift.as_slice());
    let mut trace = Vec::new();

    for (level, &factor) in cfg.pyramid_factors.iter().enumerate() {
        let small_moving = downsample(moving, factor);
        let small_fixed = downsample(&fixed.volume, factor);
        let small_mask = dilate_chebyshev(&downsample_mask(&fixed.brain_mask, fixed_grid, factor), COST_MARGIN);
        let (points, values) = world_points(small_fixed.grid(), &small_mask, &small_fixed);
        if points.is_empty() {
            continue;
        }
        let lc = LevelCost {
            points,
            values,
            moving: &small_moving,
            moving_from_world: small_moving.grid().world_to_voxel_matrix(),
        };
        let mut current = lc.cost(&AffineTransform::from_params(params));
        evaluations += 1;
        if !current.is_finite() {
            return Err(Error::RegistrationFailed(format!(
                "no overlap after initialisation at pyramid level {level}"
            )));
        }
        trace.push(TracePoint { level, cost: current });
        let shrink = 0.5f64.powi(level as i32);
        let mut half: Vec<f64> = (0..active).map(|p| base_bracket(p) * shrink).collect();

        for _cycle in 0..cfg.max_iters {
            let cycle_start = current;
            for p in 0..active {
                let centre = params[p];
                let mut f = |x: f64| {
                    let mut trial = params;
                    trial[p] = x;
                    evaluations += 1;
                    lc.cost(&AffineTransform::from_params(trial))
                };
                let (x, c) = golden_section(&mut f, centre - half[p], centre + half[p], GOLDEN_ITERS);
                let initial = base_bracket(p) * shrink;
                if c < current {
                    params[p] = x;
                    current = c;
                    trace.push(TracePoint { level, cost: current });
                    half[p] = (BRACKET_GROWTH * (x - centre).abs()).clamp(initial * MIN_BRACKET_FRACTION, initial);
                } else {
                    half[p] = (half[p] * 0.5).max(initial * MIN_BRACKET_FRACTION);
                }
            }
            if cycle_start <= 0.0 || (cycle_start - current) / cycle_start < cfg.convergence_tol {
                break;
            }
        }
    }

    Ok(Registration {
        transform: AffineTransform::from_params(params),
        trace,
        evaluations,
    })
}

/// Golden-section minimisation on `[a, b]`; returns the best point seen.
pub(crate) fn golden_section(f: &mut impl FnMut(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
