//! Binary morphology on voxel masks.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::volume::Mask;

/// Dilation by a (2r+1)³ cube, i.e. all voxels within Chebyshev distance `r`.
pub fn dilate_chebyshev(mask: &Mask, r: usize) -> Mask {
    let dims = mask.dims();
    let mut cur: Vec<bool> = mask.bits().to_vec();
    for axis in 0..3 {
        cur = max_filter_axis(&cur, dims, axis, r);
    }
    Mask::new(dims, cur).expect("same dims")
}

fn max_filter_axis(src: &[bool], dims: [usize; 3], axis: usize, r: usize) -> Vec<bool> {
    let [nx, ny, _] = dims;
    let stride = [1, nx, nx * ny][axis];
    let len = dims[axis];
    let mut out = vec![false; src.len()];
    out.par_chunks_mut(nx * ny).enumerate().for_each(|(k, slice)| {
        for j in 0..ny {
            for i in 0..nx {
                let idx = i + nx * j + nx * ny * k;
                let pos = [i, j, k][axis];
                let lo = pos.saturating_sub(r);
                let hi = (pos + r).min(len - 1);
                let base = idx - pos * stride;
                slice[i + nx * j] = (lo..=hi).any(|p| src[base + p * stride]);
            }
        }
    });
    out
}

/// Offsets of a digital ball of radius `r`.
pub fn ball_offsets(r: i64) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy + dz * dz <= r * r {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// Dilation with a structuring element; voxels outside the grid count as unset.
pub fn dilate(mask: &Mask, offsets: &[[i64; 3]]) -> Mask {
    structuring_pass(mask, offsets, true)
}

/// Erosion with a structuring element; voxels outside the grid are ignored.
pub fn erode(mask: &Mask, offsets: &[[i64; 3]]) -> Mask {
    structuring_pass(mask, offsets, false)
}

fn structuring_pass(mask: &Mask, offsets: &[[i64; 3]], dilation: bool) -> Mask {
    let dims = mask.dims();
    let [nx, ny, nz] = dims.map(|d| d as i64);
    let src = mask.bits();
    let mut out = vec![false; src.len()];
    out.par_chunks_mut((nx * ny) as usize)
        .enumerate()
        .for_each(|(k, slice)| {
            let k = k as i64;
            for j in 0..ny {
                for i in 0..nx {
                    let idx = (i + nx * j + nx * ny * k) as usize;
                    if dilation && src[idx] || !dilation && !src[idx] {
                        slice[(i + nx * j) as usize] = src[idx];
                        continue;
                    }
                    let hit = offsets.iter().any(|o| {
                        let (x, y, z) = (i + o[0], j + o[1], k + o[2]);
                        if x < 0 || y < 0 || z < 0 || x >= nx || y >= ny || z >= nz {
                            return false;
                        }
                        let v = src[(x + nx * y + nx * ny * z) as usize];
                        if dilation {
                            v
                        } else {
                            !v
                        }
                    });
                    slice[(i + nx * j) as usize] = if dilation { hit } else { !hit };
                }
            }
        });
    Mask::new(dims, out).expect("same dims")
}

/// Morphological closing (dilation then erosion) with a radius-`r` ball.
pub fn close_ball(mask: &Mask, r: i64) -> Mask {
    let ball = ball_offsets(r);
    erode(&dilate(mask, &ball), &ball)
}

/// Keep the largest 6-connected component (ties resolved by lowest first voxel).
pub fn largest_component(mask: &Mask) -> Mask {
    let dims = mask.dims();
    let [nx, ny, nz] = dims;
    let bits = mask.bits();
    let mut label = vec![0u32; bits.len()];
    let mut best = (0usize, 0u32);
    let mut next = 1u32;
    let mut queue = VecDeque::new();
    for start in 0..bits.len() {
        if !bits[start] || label[start] != 0 {
            continue;
        }
        label[start] = next;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let i = idx % nx;
            let j = (idx / nx) % ny;
            let k = idx / (nx * ny);
            let mut visit = |n: usize| {
                if bits[n] && label[n] == 0 {
                    label[n] = next;
                    queue.push_back(n);
                }
            };
            if i > 0 {
                visit(idx - 1);
            }
            if i + 1 < nx {
                visit(idx + 1);
            }
            if j > 0 {
                visit(idx - nx);
            }
            if j + 1 < ny {
                visit(idx + nx);
            }
            if k > 0 {
                visit(idx - nx * ny);
            }
            if k + 1 < nz {
                visit(idx + nx * ny);
            }
        }
        if size > best.0 {
            best = (size, next);
        }
        next += 1;
    }
    let keep = best.1;
    let out = label.iter().map(|&l| keep != 0 && l == keep).collect();
    Mask::new(dims, out).expect("same dims")
}
