//! Reader/writer for a NIfTI-1 subset: single-file `.nii`, little-endian,
//! 3D, int16 or float32 voxels.

use nalgebra::{Matrix3, Matrix4, Vector4};

use super::{Grid, Volume};
use crate::error::{Error, Result};

pub const HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_FLOAT32: i16 = 16;

/// Header field byte offsets.
mod off {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const DESCRIP: usize = 148;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const QOFFSET_X: usize = 268;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

const MAGIC: &[u8; 4] = b"n+1\0";

fn fmt_err(field: &'static str, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        field,
        offset,
        message: message.into(),
    }
}

fn i16_at(b: &[u8], o: usize) -> i16 {
    i16::from_le_bytes([b[o], b[o + 1]])
}

fn i32_at(b: &[u8], o: usize) -> i32 {
    i32::from_le_bytes(b[o..o + 4].try_into().unwrap())
}

fn f32_at(b: &[u8], o: usize) -> f32 {
    f32::from_le_bytes(b[o..o + 4].try_into().unwrap())
}

/// Parse a `.nii` byte stream into a [`Volume`].
pub fn read_nifti(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < HEADER_SIZE {
        return Err(fmt_err(
            "sizeof_hdr",
            bytes.len(),
            format!("truncated header: {} of {HEADER_SIZE} bytes", bytes.len()),
        ));
    }
    let sizeof_hdr = i32_at(bytes, off::SIZEOF_HDR);
    if sizeof_hdr != HEADER_SIZE as i32 {
        let msg = if i32::from_be_bytes(bytes[..4].try_into().unwrap()) == HEADER_SIZE as i32 {
            "big-endian files are not supported".to_string()
        } else {
            format!("expected 348, found {sizeof_hdr}")
        };
        return Err(fmt_err("sizeof_hdr", off::SIZEOF_HDR, msg));
    }
    if &bytes[off::MAGIC..off::MAGIC + 4] != MAGIC {
        return Err(fmt_err(
            "magic",
            off::MAGIC,
            format!("expected \"n+1\\0\", found {:?}", &bytes[off::MAGIC..off::MAGIC + 4]),
        ));
    }

    let ndim = i16_at(bytes, off::DIM);
    if ndim != 3 {
        return Err(fmt_err("dim", off::DIM, format!("expected dim[0]=3, found {ndim}")));
    }
    let mut dims = [0usize; 3];
    for (a, d) in dims.iter_mut().enumerate() {
        let o = off::DIM + 2 * (a + 1);
        let n = i16_at(bytes, o);
        if n < 1 {
            return Err(fmt_err("dim", o, format!("dim[{}] must be positive, found {n}", a + 1)));
        }
        *d = n as usize;
    }

    let datatype = i16_at(bytes, off::DATATYPE);
    let elem = match datatype {
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        other => {
            return Err(fmt_err(
                "datatype",
                off::DATATYPE,
                format!("unsupported datatype code {other} (supported: 4 int16, 16 float32)"),
            ))
        }
    };
    let bitpix = i16_at(bytes, off::BITPIX);
    if bitpix as usize != elem * 8 {
        return Err(fmt_err(
            "bitpix",
            off::BITPIX,
            format!("bitpix {bitpix} inconsistent with datatype {datatype}"),
        ));
    }

    let vox_offset = f32_at(bytes, off::VOX_OFFSET);
    if !(vox_offset >= VOX_OFFSET as f32) || vox_offset.fract() != 0.0 {
        return Err(fmt_err(
            "vox_offset",
            off::VOX_OFFSET,
            format!("vox_offset must be an integer >= 352, found {vox_offset}"),
        ));
    }
    let start = vox_offset as usize;
    let n: usize = dims.iter().product();
    let end = start + n * elem;
    if bytes.len() < end {
        return Err(fmt_err(
            "data",
            bytes.len(),
            format!("truncated voxel data: need {end} bytes, have {}", bytes.len()),
        ));
    }

    let mut slope = f32_at(bytes, off::SCL_SLOPE) as f64;
    let inter = f32_at(bytes, off::SCL_INTER) as f64;
    if slope == 0.0 || !slope.is_finite() {
        slope = 1.0;
    }
    let inter = if inter.is_finite() { inter } else { 0.0 };

    let raw = &bytes[start..end];
    let data: Vec<f32> = match datatype {
        DT_INT16 => raw
            .chunks_exact(2)
            .map(|c| (i16::from_le_bytes([c[0], c[1]]) as f64 * slope + inter) as f32)
            .collect(),
        _ => {
            let it = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
            if slope == 1.0 && inter == 0.0 {
                it.collect()
            } else {
                it.map(|v| (v as f64 * slope + inter) as f32).collect()
            }
        }
    };

    let affine = header_affine(bytes)?;
    let grid = Grid::new(dims, affine).map_err(|e| {
        fmt_err("sform/qform", off::QFORM_CODE, format!("invalid spatial transform: {e}"))
    })?;
    Volume::new(grid, data)
}

fn header_affine(b: &[u8]) -> Result<Matrix4<f64>> {
    let pixdim: Vec<f64> = (0..4).map(|i| f32_at(b, off::PIXDIM + 4 * i) as f64).collect();
    let sform_code = i16_at(b, off::SFORM_CODE);
    let qform_code = i16_at(b, off::QFORM_CODE);
    let mut m = Matrix4::identity();
    if sform_code > 0 {
        for r in 0..3 {
            for c in 0..4 {
                m[(r, c)] = f32_at(b, off::SROW_X + 16 * r + 4 * c) as f64;
            }
        }
    } else if qform_code > 0 {
        let qb = f32_at(b, off::QUATERN_B) as f64;
        let qc = f32_at(b, off::QUATERN_B + 4) as f64;
        let qd = f32_at(b, off::QUATERN_B + 8) as f64;
        let qa = (1.0 - (qb * qb + qc * qc + qd * qd)).max(0.0).sqrt();
        let rot = Matrix3::new(
            qa * qa + qb * qb - qc * qc - qd * qd,
            2.0 * (qb * qc - qa * qd),
            2.0 * (qb * qd + qa * qc),
            2.0 * (qb * qc + qa * qd),
            qa * qa + qc * qc - qb * qb - qd * qd,
            2.0 * (qc * qd - qa * qb),
            2.0 * (qb * qd - qa * qc),
            2.0 * (qc * qd + qa * qb),
            qa * qa + qd * qd - qc * qc - qb * qb,
        );
        let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let scale = [pixdim[1], pixdim[2], pixdim[3] * qfac];
        for r in 0..3 {
            for c in 0..3 {
                m[(r, c)] = rot[(r, c)] * scale[c];
            }
            m[(r, 3)] = f32_at(b, off::QOFFSET_X + 4 * r) as f64;
        }
    } else {
        m = Matrix4::from_diagonal(&Vector4::new(pixdim[1], pixdim[2], pixdim[3], 1.0));
    }
    Ok(m)
}

/// Serialize as float32 NIfTI-1 with the sform set from the volume affine.
pub fn write_nifti(v: &Volume) -> Vec<u8> {
    let n = v.data().len();
    let mut out = vec![0u8; VOX_OFFSET + 4 * n];
    let put_i16 = |buf: &mut [u8], o: usize, x: i16| buf[o..o + 2].copy_from_slice(&x.to_le_bytes());
    let put_f32 = |buf: &mut [u8], o: usize, x: f32| buf[o..o + 4].copy_from_slice(&x.to_le_bytes());

    out[..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    let dims = v.dims();
    let dim = [3i16, dims[0] as i16, dims[1] as i16, dims[2] as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        put_i16(&mut out, off::DIM + 2 * i, *d);
    }
    put_i16(&mut out, off::DATATYPE, DT_FLOAT32);
    put_i16(&mut out, off::BITPIX, 32);
    let spacing = v.spacing();
    let pixdim = [1.0, spacing[0], spacing[1], spacing[2], 0.0, 0.0, 0.0, 0.0];
    for (i, p) in pixdim.iter().enumerate() {
        put_f32(&mut out, off::PIXDIM + 4 * i, *p as f32);
    }
    put_f32(&mut out, off::VOX_OFFSET, VOX_OFFSET as f32);
    put_f32(&mut out, off::SCL_SLOPE, 1.0);
    put_f32(&mut out, off::SCL_INTER, 0.0);
    // mm, seconds
    out[off::XYZT_UNITS] = 2 | 8;
    let descrip = b"ctgca";
    out[off::DESCRIP..off::DESCRIP + descrip.len()].copy_from_slice(descrip);
    put_i16(&mut out, off::QFORM_CODE, 0);
    put_i16(&mut out, off::SFORM_CODE, 2);
    let a = v.affine();
    for r in 0..3 {
        for c in 0..4 {
            put_f32(&mut out, off::SROW_X + 16 * r + 4 * c, a[(r, c)] as f32);
        }
    }
    out[off::MAGIC..off::MAGIC + 4].copy_from_slice(MAGIC);
    // bytes 348..352: zero extension flag
    for (chunk, x) in out[VOX_OFFSET..].chunks_exact_mut(4).zip(v.data()) {
        chunk.copy_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn read_nifti_file(path: impl AsRef<std::path::Path>) -> Result<Volume> {
    read_nifti(&std::fs::read(path)?)
}

pub fn write_nifti_file(path: impl AsRef<std::path::Path>, v: &Volume) -> Result<()> {
    std::fs::write(path, write_nifti(v))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Grid;
    use proptest::prelude::*;

    fn int16_file(raw: &[i16], slope: f32, inter: f32) -> Vec<u8> {
        let v = Volume::new(Grid::centered([raw.len(), 1, 1], 1.0), vec![0.0; raw.len()]).unwrap();
        let mut b = write_nifti(&v);
        b.truncate(VOX_OFFSET);
        b[off::DATATYPE..off::DATATYPE + 2].copy_from_slice(&DT_INT16.to_le_bytes());
        b[off::BITPIX..off::BITPIX + 2].copy_from_slice(&16i16.to_le_bytes());
        b[off::SCL_SLOPE..off::SCL_SLOPE + 4].copy_from_slice(&slope.to_le_bytes());
        b[off::SCL_INTER..off::SCL_INTER + 4].copy_from_slice(&inter.to_le_bytes());
        for r in raw {
            b.extend_from_slice(&r.to_le_bytes());
        }
        b
    }

    #[test]
    fn single_voxel_file_size() {
        let v = Volume::new(Grid::centered([1, 1, 1], 1.0), vec![0.0]).unwrap();
        assert_eq!(write_nifti(&v).len(), 352 + 4);
    }

    #[test]
    fn int16_scaling_applies_slope_and_intercept() {
        let v = read_nifti(&int16_file(&[2100], 0.5, -1000.0)).unwrap();
        assert_eq!(v.data(), &[50.0]);
    }

    #[test]
    fn zero_slope_means_unscaled() {
        let v = read_nifti(&int16_file(&[-7, 12], 0.0, 0.0)).unwrap();
        assert_eq!(v.data(), &[-7.0, 12.0]);
    }

    #[test]
    fn uint8_is_unsupported() {
        let mut b = int16_file(&[1], 1.0, 0.0);
        b[off::DATATYPE..off::DATATYPE + 2].copy_from_slice(&DT_UINT8.to_le_bytes());
        match read_nifti(&b) {
            Err(Error::Format { field, offset, .. }) => {
                assert_eq!(field, "datatype");
                assert_eq!(offset, 70);
            }
            other => panic!("expected datatype error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_names_field() {
        let mut b = int16_file(&[1], 1.0, 0.0);
        b[off::MAGIC] = b'x';
        assert!(matches!(read_nifti(&b), Err(Error::Format { field: "magic", offset: 344, .. })));
    }

    #[test]
    fn truncated_data_is_rejected() {
        let mut b = int16_file(&[1, 2, 3], 1.0, 0.0);
        b.pop();
        assert!(matches!(read_nifti(&b), Err(Error::Format { field: "data", .. })));
    }

    #[test]
    fn short_header_is_rejected() {
        assert!(matches!(
            read_nifti(&[0u8; 100]),
            Err(Error::Format { field: "sizeof_hdr", .. })
        ));
    }

    #[test]
    fn four_d_is_rejected() {
        let mut b = int16_file(&[1], 1.0, 0.0);
        b[off::DIM..off::DIM + 2].copy_from_slice(&4i16.to_le_bytes());
        assert!(matches!(read_nifti(&b), Err(Error::Format { field: "dim", .. })));
    }

    #[test]
    fn qform_fallback_builds_affine() {
        let mut b = int16_file(&[1, 2], 1.0, 0.0);
        b[off::SFORM_CODE..off::SFORM_CODE + 2].copy_from_slice(&0i16.to_le_bytes());
        b[off::QFORM_CODE..off::QFORM_CODE + 2].copy_from_slice(&1i16.to_le_bytes());
        // 180 degree rotation about z: (b, c, d) = (0, 0, 1)
        b[off::QUATERN_B + 8..off::QUATERN_B + 12].copy_from_slice(&1f32.to_le_bytes());
        b[off::QOFFSET_X..off::QOFFSET_X + 4].copy_from_slice(&10f32.to_le_bytes());
        let v = read_nifti(&b).unwrap();
        let a = v.affine();
        assert_eq!(a[(0, 0)], -1.0);
        assert_eq!(a[(1, 1)], -1.0);
        assert_eq!(a[(2, 2)], 1.0);
        assert_eq!(a[(0, 3)], 10.0);
    }

    #[test]
    fn no_transform_codes_use_pixdim_diagonal() {
        let mut b = int16_file(&[1], 1.0, 0.0);
        b[off::SFORM_CODE..off::SFORM_CODE + 2].copy_from_slice(&0i16.to_le_bytes());
        b[off::PIXDIM + 4..off::PIXDIM + 8].copy_from_slice(&2.5f32.to_le_bytes());
        let v = read_nifti(&b).unwrap();
        assert_eq!(v.affine()[(0, 0)], 2.5);
        assert_eq!(v.affine()[(0, 3)], 0.0);
        assert_eq!(v.spacing()[0], 2.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn write_read_round_trip(
            nx in 1usize..6, ny in 1usize..6, nz in 1usize..6,
            spacing in 0.3f64..4.0,
            rot in -0.5f64..0.5,
            shift in -150.0f64..150.0,
            seed in any::<u64>(),
        ) {
            let mut affine = crate::volume::affine::AffineTransform::rigid([shift, -shift, 0.5 * shift], [rot, 0.0, -rot]).matrix().clone();
            for r in 0..3 { for c in 0..3 { affine[(r, c)] *= spacing; } }
            let grid = Grid::new([nx, ny, nz], affine).unwrap();
            let mut s = seed;
            let data: Vec<f32> = (0..grid.len()).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f32::from_bits(((s >> 33) as u32 & 0x7f7f_ffff) | ((s as u32) & 0x8000_0000))
            }).collect();
            let v = Volume::new(grid, data).unwrap();
            let back = read_nifti(&write_nifti(&v)).unwrap();
            prop_assert_eq!(back.dims(), v.dims());
            prop_assert!(back.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
            for r in 0..4 { for c in 0..4 {
                let (x, y) = (back.affine()[(r, c)], v.affine()[(r, c)]);
                prop_assert!((x - y).abs() <= 1e-6 * y.abs().max(1.0), "affine[{r},{c}] {x} vs {y}");
            }}
            for a in 0..3 {
                prop_assert!((back.spacing()[a] - v.spacing()[a]).abs() <= 1e-6 * v.spacing()[a].max(1.0));
            }
        }
    }
}
