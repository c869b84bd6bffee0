//! Synthetic CT heads with known per-region atrophy.
//!
//! The canonical head is a nested set of ellipsoids (bone shell, a thin
//! extra-axial CSF layer, brain) on a 128³ grid at 1.5 mm. The 13 GCA region
//! masks are parametric: cortical shells cut by coronal/axial planes and
//! ventricular tubes, mirrored across the midline. Atrophy is encoded by
//! converting a score-dependent fraction of each region's voxels from tissue
//! to CSF.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gca::{CohortRecord, CohortTag, GcaRating, GcaRegion, GcaScore, Sex, N_REGIONS};
use crate::volume::{resample, AffineTransform, Grid, Mask, Volume};

pub const GRID_DIM: usize = 128;
pub const GRID_SPACING: f64 = 1.5;

pub const BONE_HU: f32 = 1000.0;
pub const BRAIN_HU: f32 = 35.0;
pub const CSF_HU: f32 = 8.0;
pub const AIR_HU: f32 = -1024.0;

/// Semi-axes (mm) of the outer skull, inner skull and brain surfaces.
const SKULL_OUTER: [f64; 3] = [68.0, 84.0, 70.0];
const SKULL_INNER: [f64; 3] = [62.0, 78.0, 64.0];
const BRAIN: [f64; 3] = [57.5, 73.5, 59.5];

/// Cortical region shells span this depth range below the brain surface (mm).
const CORTEX_DEPTH: (f64, f64) = (3.0, 15.0);

/// CSF-replacement fraction for a region score.
pub fn csf_fraction(score: u8) -> f64 {
    0.02 + 0.10 * score as f64
}

/// SplitMix64 finalizer over `seed + (index+1)·golden`.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tissue {
    Air,
    Bone,
    ExtraAxialCsf,
    Brain,
}

/// Canonical-space tissue and region labels.
#[derive(Debug)]
pub struct PhantomLayout {
    pub grid: Grid,
    pub tissue: Vec<Tissue>,
    /// Region index per voxel (`NO_REGION` outside every region mask).
    pub region: Vec<u8>,
    /// Per-voxel ordering key used to pick which region voxels turn to CSF;
    /// combined with seeded noise at generation time.
    pub shape_key: Vec<f32>,
}

pub const NO_REGION: u8 = u8::MAX;

impl PhantomLayout {
    /// The shared canonical layout.
    pub fn canonical() -> &'static PhantomLayout {
        static LAYOUT: OnceLock<PhantomLayout> = OnceLock::new();
        LAYOUT.get_or_init(|| PhantomLayout::build(Grid::centered([GRID_DIM; 3], GRID_SPACING)))
    }

    fn build(grid: Grid) -> Self {
        let n = grid.len();
        let labels: Vec<(Tissue, u8, f32)> = (0..n)
            .into_par_iter()
            .map(|idx| {
                let [i, j, k] = grid.coords(idx);
                let p = grid.voxel_to_world(Vector3::new(i as f64, j as f64, k as f64));
                classify_point(p)
            })
            .collect();
        let mut tissue = Vec::with_capacity(n);
        let mut region = Vec::with_capacity(n);
        let mut shape_key = Vec::with_capacity(n);
        for (t, r, s) in labels {
            tissue.push(t);
            region.push(r);
            shape_key.push(s);
        }
        Self {
            grid,
            tissue,
            region,
            shape_key,
        }
    }

    pub fn region_mask(&self, region: GcaRegion) -> Mask {
        let r = region.index() as u8;
        let bits = self.region.iter().map(|&x| x == r).collect();
        Mask::new(self.grid.dims, bits).expect("layout dims")
    }

    pub fn region_masks(&self) -> Vec<Mask> {
        GcaRegion::ALL.iter().map(|&r| self.region_mask(r)).collect()
    }

    /// Brain parenchyma including sulcal and ventricular CSF.
    pub fn brain_mask(&self) -> Mask {
        let bits = self.tissue.iter().map(|&t| t == Tissue::Brain).collect();
        Mask::new(self.grid.dims, bits).expect("layout dims")
    }
}

fn ellipsoid_radius(p: Vector3<f64>, axes: [f64; 3]) -> f64 {
    ((p.x / axes[0]).powi(2) + (p.y / axes[1]).powi(2) + (p.z / axes[2]).powi(2)).sqrt()
}

fn segment_distance(p: Vector3<f64>, a: Vector3<f64>, b: Vector3<f64>) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

struct Tube {
    a: [f64; 3],
    b: [f64; 3],
    radius: f64,
}

/// Ventricular horns for the right hemisphere (+x); the left is mirrored.
const FRONTAL_HORN: Tube = Tube {
    a: [12.0, 5.0, 14.0],
    b: [13.0, 32.0, 12.0],
    radius: 7.0,
};
const OCCIPITAL_HORN: Tube = Tube {
    a: [16.0, -18.0, 12.0],
    b: [19.0, -42.0, 6.0],
    radius: 6.0,
};
const TEMPORAL_HORN: Tube = Tube {
    a: [30.0, -12.0, -6.0],
    b: [31.0, 16.0, -18.0],
    radius: 6.0,
};

/// Third ventricle: midline slab bounds (|x|, y range, z range) in mm.
const THIRD_VENTRICLE: (f64, [f64; 2], [f64; 2]) = (4.0, [-15.0, 10.0], [-4.0, 16.0]);

fn classify_point(p: Vector3<f64>) -> (Tissue, u8, f32) {
    if ellipsoid_radius(p, SKULL_OUTER) > 1.0 {
        return (Tissue::Air, NO_REGION, 0.0);
    }
    if ellipsoid_radius(p, SKULL_INNER) > 1.0 {
        return (Tissue::Bone, NO_REGION, 0.0);
    }
    let rho = ellipsoid_radius(p, BRAIN);
    if rho > 1.0 {
        return (Tissue::ExtraAxialCsf, NO_REGION, 0.0);
    }
    let (region, key) = region_at(p, rho);
    (Tissue::Brain, region.map_or(NO_REGION, |r| r.index() as u8), key)
}

/// Region and ordering key for a point inside the brain. Ventricles take
/// precedence so masks are disjoint by construction.
fn region_at(p: Vector3<f64>, rho: f64) -> (Option<GcaRegion>, f32) {
    use GcaRegion::*;
    let right = p.x >= 0.0;
    let mirrored = Vector3::new(p.x.abs(), p.y, p.z);

    let (tv_half, tv_y, tv_z) = THIRD_VENTRICLE;
    if p.x.abs() <= tv_half && (tv_y[0]..=tv_y[1]).contains(&p.y) && (tv_z[0]..=tv_z[1]).contains(&p.z)
    {
        return (Some(ThirdVentricle), (p.x.abs() / tv_half) as f32);
    }
    let horns = [
        (&FRONTAL_HORN, FrontalHornL, FrontalHornR),
        (&OCCIPITAL_HORN, OccipitalHornL, OccipitalHornR),
        (&TEMPORAL_HORN, TemporalHornL, TemporalHornR),
    ];
    for (tube, left_region, right_region) in horns {
        let d = segment_distance(mirrored, tube.a.into(), tube.b.into());
        if d <= tube.radius {
            let r = if right { right_region } else { left_region };
            return (Some(r), (d / tube.radius) as f32);
        }
    }

    if p.x.abs() < 3.0 || rho <= 0.0 {
        return (None, 0.0);
    }
    let depth = p.norm() * (1.0 / rho - 1.0);
    if !(CORTEX_DEPTH.0..=CORTEX_DEPTH.1).contains(&depth) {
        return (None, 0.0);
    }
    let key = ((depth - CORTEX_DEPTH.0) / (CORTEX_DEPTH.1 - CORTEX_DEPTH.0)) as f32;
    let lobe = if p.y >= 25.0 {
        Some((FrontalL, FrontalR))
    } else if p.y <= -25.0 {
        Some((ParietoOccipitalL, ParietoOccipitalR))
    } else if (-15.0..=15.0).contains(&p.y) && p.z <= 0.0 && p.x.abs() >= 25.0 {
        Some((TemporalL, TemporalR))
    } else {
        None
    };
    match lobe {
        Some((l, r)) => (Some(if right { r } else { l }), key),
        None => (None, 0.0),
    }
}

/// Weight of the geometric ordering key relative to the (unit-variance)
/// noise field when choosing which region voxels become CSF.
const SHAPE_WEIGHT: f32 = 0.6;
/// Box-filter radius (voxels) and pass count that smooth the noise field, so
/// converted voxels form pockets a few voxels wide instead of isolated specks.
const FIELD_RADIUS: usize = 2;
const FIELD_PASSES: usize = 2;
const FIELD_STREAM: u64 = 1 << 33;

/// Running-mean box filter along one axis.
fn box_filter_axis(data: &mut [f32], dims: [usize; 3], axis: usize, radius: usize) {
    let stride = [1, dims[0], dims[0] * dims[1]][axis];
    let len = dims[axis];
    let lines: Vec<usize> = (0..data.len()).filter(|&i| (i / stride) % len == 0).collect();
    let mut line = vec![0.0f32; len];
    for start in lines {
        for (k, v) in line.iter_mut().enumerate() {
            *v = data[start + k * stride];
        }
        let mut acc = 0.0f32;
        let mut count = 0usize;
        for v in line.iter().take(radius.min(len)) {
            acc += v;
            count += 1;
        }
        for k in 0..len {
            if k + radius < len {
                acc += line[k + radius];
                count += 1;
            }
            if k > radius {
                acc -= line[k - radius - 1];
                count -= 1;
            }
            data[start + k * stride] = acc / count as f32;
        }
    }
}

/// Seeded, spatially smooth noise field with zero mean and unit variance.
fn noise_field(dims: [usize; 3], seed: u64) -> Vec<f32> {
    const CHUNK: usize = 1 << 16;
    let mut field = vec![0.0f32; dims[0] * dims[1] * dims[2]];
    field.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, c as u64));
        for v in chunk {
            *v = rng.random::<f32>();
        }
    });
    for _ in 0..FIELD_PASSES {
        for axis in 0..3 {
            box_filter_axis(&mut field, dims, axis, FIELD_RADIUS);
        }
    }
    let n = field.len() as f64;
    let mean = field.iter().map(|&v| v as f64).sum::<f64>() / n;
    let sd = (field.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
    let (mean, inv) = (mean as f32, (1.0 / sd.max(1e-12)) as f32);
    field.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    field
}

/// Generative parameters for one synthetic scan.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub region_scores: [GcaScore; N_REGIONS],
    pub noise_sigma: f64,
    pub pose: AffineTransform,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn uniform(score: u8, seed: u64) -> Result<Self> {
        Ok(Self {
            region_scores: [GcaScore::new(score)?; N_REGIONS],
            noise_sigma: 0.0,
            pose: AffineTransform::identity(),
            seed,
        })
    }

    pub fn from_map(
        scores: &BTreeMap<GcaRegion, u8>,
        noise_sigma: f64,
        pose: AffineTransform,
        seed: u64,
    ) -> Result<Self> {
        let mut region_scores = [GcaScore::new(0)?; N_REGIONS];
        for r in GcaRegion::ALL {
            let v = scores
                .get(&r)
                .ok_or_else(|| Error::Config(format!("region_scores: missing region {r}")))?;
            region_scores[r.index()] = GcaScore::new(*v)?;
        }
        let spec = Self {
            region_scores,
            noise_sigma,
            pose,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        self.pose.inverse_matrix()?;
        Ok(())
    }

    pub fn rating(&self, scan_id: &str, rater_id: &str) -> GcaRating {
        GcaRating::new(scan_id, rater_id, self.region_scores.map(Some))
    }
}

/// Canonical (identity-pose, noise-free) head for the given scores.
pub fn canonical_volume(scores: &[GcaScore; N_REGIONS], seed: u64) -> Volume {
    let layout = PhantomLayout::canonical();
    let mut data: Vec<f32> = layout
        .tissue
        .iter()
        .map(|t| match t {
            Tissue::Air => AIR_HU,
            Tissue::Bone => BONE_HU,
            Tissue::ExtraAxialCsf => CSF_HU,
            Tissue::Brain => BRAIN_HU,
        })
        .collect();

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); N_REGIONS];
    for (idx, &r) in layout.region.iter().enumerate() {
        if r != NO_REGION {
            members[r as usize].push(idx);
        }
    }
    let field = noise_field(layout.grid.dims, mix_seed(seed, FIELD_STREAM));
    for (r, idx) in members.into_iter().enumerate() {
        let mut keyed: Vec<(f32, usize)> = idx
            .into_iter()
            .map(|i| (SHAPE_WEIGHT * layout.shape_key[i] + field[i], i))
            .collect();
        let n_csf = (keyed.len() as f64 * csf_fraction(scores[r].value())).round() as usize;
        if n_csf == 0 {
            continue;
        }
        keyed.select_nth_unstable_by(n_csf - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, i) in &keyed[..n_csf] {
            data[i] = CSF_HU;
        }
    }
    Volume::new(layout.grid.clone(), data).expect("layout dims")
}

/// Render a phantom and its ground-truth rating.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Volume, GcaRating)> {
    spec.validate()?;
    let canonical = canonical_volume(&spec.region_scores, spec.seed);
    let mut vol = if *spec.pose.matrix() == nalgebra::Matrix4::identity() {
        canonical
    } else {
        resample(&canonical, &spec.pose, canonical.grid())?
    };
    if spec.noise_sigma > 0.0 {
        add_noise(vol.data_mut(), spec.noise_sigma, mix_seed(spec.seed, 1 << 32));
    }
    Ok((vol, spec.rating("phantom", "truth")))
}

/// Additive Gaussian noise, floored at air like a scanner reconstruction.
fn add_noise(data: &mut [f32], sigma: f64, seed: u64) {
    const CHUNK: usize = 1 << 16;
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    data.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, c as u64));
        for v in chunk {
            *v = (*v + normal.sample(&mut rng) as f32).max(AIR_HU);
        }
    });
}

/// `age = intercept + slope·GCA + N(0, jitter²)`, clamped.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AgeModel {
    pub intercept: f64,
    pub slope: f64,
    pub jitter_sd: f64,
    pub min_age: f64,
    pub max_age: f64,
}

impl Default for AgeModel {
    fn default() -> Self {
        Self {
            intercept: 60.0,
            slope: 1.1,
            jitter_sd: 5.0,
            min_age: 65.0,
            max_age: 102.0,
        }
    }
}

/// `P(impaired) = logistic((GCA − center) / scale)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CognitionModel {
    pub center: f64,
    pub scale: f64,
}

impl Default for CognitionModel {
    fn default() -> Self {
        Self {
            center: 16.0,
            scale: 4.0,
        }
    }
}

impl CognitionModel {
    pub fn p_impaired(&self, total: f64) -> f64 {
        1.0 / (1.0 + (-(total - self.center) / self.scale).exp())
    }
}

/// Rigid pose perturbation drawn uniformly per scan.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PoseJitter {
    pub max_translation_mm: f64,
    pub max_rotation_deg: f64,
}

impl Default for PoseJitter {
    fn default() -> Self {
        Self {
            max_translation_mm: 5.0,
            max_rotation_deg: 5.0,
        }
    }
}

fn default_noise() -> f64 {
    15.0
}

fn uniform_distribution() -> BTreeMap<GcaRegion, [f64; 4]> {
    GcaRegion::ALL.iter().map(|&r| (r, [0.25; 4])).collect()
}

/// Parameters for a synthetic cohort.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    pub n: usize,
    pub master_seed: u64,
    #[serde(default = "uniform_distribution")]
    pub score_distribution: BTreeMap<GcaRegion, [f64; 4]>,
    #[serde(default)]
    pub age_model: AgeModel,
    #[serde(default)]
    pub cognition_model: CognitionModel,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub pose_jitter: PoseJitter,
}

impl CohortSpec {
    pub fn uniform(n: usize, master_seed: u64) -> Self {
        Self {
            n,
            master_seed,
            score_distribution: uniform_distribution(),
            age_model: AgeModel::default(),
            cognition_model: CognitionModel::default(),
            noise_sigma: default_noise(),
            pose_jitter: PoseJitter::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Config("n: must be >= 1".into()));
        }
        for r in GcaRegion::ALL {
            let p = self
                .score_distribution
                .get(&r)
                .ok_or_else(|| Error::Config(format!("score_distribution: missing region {r}")))?;
            if p.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                return Err(Error::Config(format!(
                    "score_distribution.{r}: probabilities must be finite and >= 0"
                )));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "score_distribution.{r}: probabilities sum to {sum}, expected 1"
                )));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma: must be finite and >= 0".into()));
        }
        let a = &self.age_model;
        if !(a.jitter_sd >= 0.0) || !(a.min_age <= a.max_age) || a.min_age < 0.0 {
            return Err(Error::Config(
                "age_model: need jitter_sd >= 0 and 0 <= min_age <= max_age".into(),
            ));
        }
        if !(self.cognition_model.scale > 0.0) {
            return Err(Error::Config("cognition_model.scale: must be > 0".into()));
        }
        let j = &self.pose_jitter;
        if !(j.max_translation_mm >= 0.0) || !(j.max_rotation_deg >= 0.0) {
            return Err(Error::Config("pose_jitter: bounds must be >= 0".into()));
        }
        Ok(())
    }
}

/// One planned cohort member; rendering the volume is deferred.
#[derive(Debug, Clone)]
pub struct CohortEntry {
    pub scan_id: String,
    pub spec: PhantomSpec,
    pub rating: GcaRating,
    pub record: CohortRecord,
    /// Simulated binary cognition outcome.
    pub impaired: bool,
}

impl CohortEntry {
    pub fn render(&self) -> Result<Volume> {
        Ok(generate_phantom(&self.spec)?.0)
    }
}

fn draw_category(rng: &mut ChaCha8Rng, probs: &[f64; 4]) -> u8 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k as u8;
        }
    }
    // Rounding slack lands on the last category with mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(3) as u8
}

pub const SYNTHETIC_RATER: &str = "rater-1";

/// Draw every cohort member's scores, pose and covariates without rendering.
pub fn plan_cohort(c: &CohortSpec) -> Result<Vec<CohortEntry>> {
    c.validate()?;
    let width = c.n.saturating_sub(1).to_string().len().max(4);
    (0..c.n)
        .map(|i| {
            let seed = mix_seed(c.master_seed, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut scores = [GcaScore::new(0)?; N_REGIONS];
            for r in GcaRegion::ALL {
                scores[r.index()] = GcaScore::new(draw_category(&mut rng, &c.score_distribution[&r]))?;
            }
            let total: u32 = scores.iter().map(|s| s.value() as u32).sum();

            let j = &c.pose_jitter;
            let mut sym = |m: f64| (2.0 * rng.random::<f64>() - 1.0) * m;
            let t = [sym(j.max_translation_mm), sym(j.max_translation_mm), sym(j.max_translation_mm)];
            let rot = j.max_rotation_deg.to_radians();
            let r = [sym(rot), sym(rot), sym(rot)];
            let pose = AffineTransform::rigid(t, r);

            let a = &c.age_model;
            let jitter = if a.jitter_sd > 0.0 {
                Normal::new(0.0, a.jitter_sd).unwrap().sample(&mut rng)
            } else {
                0.0
            };
            let age = (a.intercept + a.slope * total as f64 + jitter).clamp(a.min_age, a.max_age);
            let impaired = rng.random::<f64>() < c.cognition_model.p_impaired(total as f64);
            let amt = if impaired {
                rng.random_range(4..=8u8)
            } else {
                rng.random_range(9..=10u8)
            };
            let sex = if rng.random::<bool>() { Sex::Female } else { Sex::Male };

            let scan_id = format!("scan-{i:0width$}");
            let spec = PhantomSpec {
                region_scores: scores,
                noise_sigma: c.noise_sigma,
                pose,
                seed,
            };
            let rating = spec.rating(&scan_id, SYNTHETIC_RATER);
            let record = CohortRecord {
                scan_id: scan_id.clone(),
                cohort: CohortTag::Synthetic,
                age: (age * 10.0).round() / 10.0,
                sex,
                amt_score: Some(amt),
                ocs_tasks_impaired: None,
            };
            Ok(CohortEntry {
                scan_id,
                spec,
                rating,
                record,
                impaired,
            })
        })
        .collect()
}

/// A rendered cohort member.
#[derive(Debug, Clone)]
pub struct CohortScan {
    pub scan_id: String,
    pub volume: Volume,
    pub rating: GcaRating,
    pub record: CohortRecord,
}

/// Plan and render a whole cohort in memory.
pub fn generate_cohort(c: &CohortSpec) -> Result<Vec<CohortScan>> {
    plan_cohort(c)?
        .into_iter()
        .map(|e| {
            Ok(CohortScan {
                volume: e.render()?,
                scan_id: e.scan_id,
                rating: e.rating,
                record: e.record,
            })
        })
        .collect()
}

/// `truth.csv`: scan_id, 13 region columns, total, age, impaired.
pub fn write_truth_csv(entries: &[CohortEntry]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header = vec!["scan_id".to_string()];
    header.extend(GcaRegion::ALL.iter().map(|r| r.name().to_string()));
    header.extend(["total", "age", "impaired"].map(String::from));
    w.write_record(&header)?;
    for e in entries {
        let values = e.rating.values()?;
        let mut row = vec![e.scan_id.clone()];
        row.extend(values.iter().map(|v| v.to_string()));
        row.push(e.rating.total()?.to_string());
        row.push(format!("{:.1}", e.record.age));
        row.push(u8::from(e.impaired).to_string());
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}
