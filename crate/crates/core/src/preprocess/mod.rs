//! Brain extraction and linear registration to the skull-stripped template.

pub mod morphology;
pub mod registration;
pub mod template;

pub use registration::{register_affine, Dof, Registration, RegistrationConfig};
pub use template::Template;

use crate::error::{Error, Result};
use crate::volume::{resample, AffineTransform, Mask, Volume};

/// Soft-tissue window used to seed the brain mask.
pub const SOFT_TISSUE_HU: (f32, f32) = (0.0, 90.0);
/// Voxels above this are treated as bone.
pub const BONE_THRESHOLD_HU: f32 = 200.0;
/// Candidates within this Chebyshev distance of bone are discarded.
pub const BONE_MARGIN_VOXELS: usize = 2;
pub const CLOSING_RADIUS: i64 = 2;

/// Accepted input range for CT data.
pub const CT_RANGE_HU: (f32, f32) = (-1100.0, 4000.0);

/// Threshold, strip near-bone voxels, keep the largest 6-connected component
/// and close with a radius-2 ball. Returns the mask and the masked volume.
pub fn extract_brain(v: &Volume) -> Result<(Mask, Volume)> {
    let (lo, hi) = v.min_max();
    if lo < CT_RANGE_HU.0 || hi > CT_RANGE_HU.1 || lo.is_nan() || hi.is_nan() {
        return Err(Error::Input(format!(
            "values [{lo}, {hi}] outside CT range [{}, {}] HU",
            CT_RANGE_HU.0, CT_RANGE_HU.1
        )));
    }
    let dims = v.dims();
    let data = v.data();
    let candidate: Vec<bool> = data
        .iter()
        .map(|&x| x >= SOFT_TISSUE_HU.0 && x <= SOFT_TISSUE_HU.1)
        .collect();
    if !candidate.iter().any(|&b| b) {
        return Err(Error::ExtractionFailed(
            "no voxels in the soft-tissue window".into(),
        ));
    }
    let bone = Mask::new(dims, data.iter().map(|&x| x > BONE_THRESHOLD_HU).collect())?;
    let near_bone = morphology::dilate_chebyshev(&bone, BONE_MARGIN_VOXELS);
    let stripped: Vec<bool> = candidate
        .iter()
        .zip(near_bone.bits())
        .map(|(&c, &b)| c && !b)
        .collect();
    let component = morphology::largest_component(&Mask::new(dims, stripped)?);
    if component.count() == 0 {
        return Err(Error::ExtractionFailed(
            "every soft-tissue voxel lies next to bone".into(),
        ));
    }
    let mask = morphology::close_ball(&component, CLOSING_RADIUS);
    let masked = v.masked(&mask)?;
    Ok((mask, masked))
}

/// Resample a scan onto the template grid through the registration transform.
pub fn to_template_space(v: &Volume, t: &AffineTransform, tmpl: &Template) -> Result<Volume> {
    resample(v, t, tmpl.volume.grid())
}
