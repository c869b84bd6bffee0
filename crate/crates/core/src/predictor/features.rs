use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gca::{GcaRegion, N_REGIONS};
use crate::preprocess::Template;
use crate::volume::Volume;

pub const N_FEATURES: usize = N_REGIONS + 2;

/// HU window counted as CSF.
pub const CSF_WINDOW_HU: (f32, f32) = (2.0, 18.0);

/// Voxels above this (in a skull-stripped, resampled scan) count as brain.
const BRAIN_SUPPORT_HU: f32 = -500.0;

/// 13 region CSF fractions, global CSF fraction, ventricle-to-brain ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn names() -> Vec<String> {
        let mut n: Vec<String> = GcaRegion::ALL.iter().map(|r| format!("csf_{}", r.name())).collect();
        n.push("csf_global".into());
        n.push("ventricle_ratio".into());
        n
    }

    pub fn values(&self) -> &[f64; N_FEATURES] {
        &self.0
    }

    pub fn region(&self, r: GcaRegion) -> f64 {
        self.0[r.index()]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

fn in_csf_window(v: f32) -> bool {
    v >= CSF_WINDOW_HU.0 && v <= CSF_WINDOW_HU.1
}

/// Region CSF features of a template-space volume.
pub fn extract_features(v: &Volume, atlas: &Template) -> Result<FeatureVector> {
    if v.grid() != atlas.volume.grid() {
        return Err(Error::FeatureExtraction(format!(
            "volume grid {:?} is not the template grid {:?}",
            v.dims(),
            atlas.volume.dims()
        )));
    }
    let data = v.data();
    let brain: Vec<usize> = atlas
        .brain_mask
        .indices()
        .filter(|&i| data[i] > BRAIN_SUPPORT_HU)
        .collect();
    if brain.is_empty() {
        return Err(Error::FeatureExtraction("brain mask is empty".into()));
    }
    let mut f = [0.0; N_FEATURES];
    let mut ventricle_csf = 0usize;
    for r in GcaRegion::ALL {
        let mask = atlas.region_mask(r);
        let csf = mask.indices().filter(|&i| in_csf_window(data[i])).count();
        f[r.index()] = csf as f64 / mask.count() as f64;
        if r.is_ventricular() {
            ventricle_csf += csf;
        }
    }
    let global = brain.iter().filter(|&&i| in_csf_window(data[i])).count();
    f[N_REGIONS] = global as f64 / brain.len() as f64;
    f[N_REGIONS + 1] = (ventricle_csf as f64 / brain.len() as f64).min(1.0);
    Ok(FeatureVector(f))
}

/// `features.csv`: scan_id followed by the 15 named columns.
pub fn write_features_csv(rows: &[(String, FeatureVector)]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header = vec!["scan_id".to_string()];
    header.extend(FeatureVector::names());
    w.write_record(&header)?;
    for (id, f) in rows {
        let mut rec = vec![id.clone()];
        rec.extend(f.0.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

pub fn parse_features_csv(text: &str) -> Result<Vec<(String, FeatureVector)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let mut expected = vec!["scan_id".to_string()];
    expected.extend(FeatureVector::names());
    if header != expected {
        return Err(Error::Input(format!(
            "features header must be `{}`",
            expected.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut f = [0.0; N_FEATURES];
        for (k, slot) in f.iter_mut().enumerate() {
            *slot = rec[k + 1].parse().map_err(|_| {
                Error::Input(format!("features row {}: bad value `{}`", i + 2, &rec[k + 1]))
            })?;
        }
        out.push((rec[0].to_string(), FeatureVector(f)));
    }
    Ok(out)
}
