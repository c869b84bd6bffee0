//! Ridge-based GCA predictor trained on a 60/20/20 train/optimisation/test protocol.

mod features;
mod ridge;
mod split;

pub use features::{
    extract_features, parse_features_csv, write_features_csv, FeatureVector, CSF_WINDOW_HU, N_FEATURES,
};
pub use ridge::{fit_ridge, RidgeWeights};
pub use split::{split_dataset, split_sizes, Split, SplitAssignment};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gca::{classify_severity, GcaRating, GcaRegion, SeverityClass, MAX_SCORE, MAX_TOTAL, N_REGIONS};

pub const DEFAULT_LAMBDAS: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictMode {
    SumOfRegions,
    DirectTotal,
}

impl PredictMode {
    pub fn label(self) -> &'static str {
        match self {
            PredictMode::SumOfRegions => "sum-of-regions",
            PredictMode::DirectTotal => "direct-total",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lambdas: Vec<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lambdas: DEFAULT_LAMBDAS.to_vec(), seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(Error::Config("lambdas: grid must not be empty".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::Config(format!("lambdas: {l} is not a finite value >= 0")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub seed: u64,
    pub split_hash: String,
    pub n_train: usize,
    pub n_optimisation: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionHead {
    pub region: GcaRegion,
    #[serde(flatten)]
    pub weights: RidgeWeights,
}

/// Weights act on raw feature values; feature standardisation used during
/// fitting is folded into them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel {
    pub feature_names: Vec<String>,
    pub region_heads: Vec<RegionHead>,
    pub total_head: RidgeWeights,
    pub mode: PredictMode,
    pub lambda: f64,
    pub manifest: TrainingManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub raw: f64,
    pub total: u32,
    pub severity: SeverityClass,
    pub region_scores: [u8; N_REGIONS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub mode: PredictMode,
    pub lambda: f64,
    pub optimisation_mae: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PredictorModel,
    pub split: SplitAssignment,
    pub selection: Vec<SelectionRow>,
}

fn check_head(w: &RidgeWeights, what: &str) -> Result<()> {
    if w.coef.len() != N_FEATURES {
        return Err(Error::Input(format!("{what}: expected {N_FEATURES} coefficients, got {}", w.coef.len())));
    }
    if !w.is_finite() {
        return Err(Error::Input(format!("{what}: non-finite weights")));
    }
    Ok(())
}

fn clip_region(raw: f64) -> u8 {
    raw.round().clamp(0.0, MAX_SCORE as f64) as u8
}

impl PredictorModel {
    pub fn validate(&self) -> Result<()> {
        if self.region_heads.len() != N_REGIONS {
            return Err(Error::Input(format!("model has {} region heads", self.region_heads.len())));
        }
        for (head, r) in self.region_heads.iter().zip(GcaRegion::ALL) {
            if head.region != r {
                return Err(Error::Input(format!("region head for {} out of order", head.region)));
            }
            check_head(&head.weights, r.name())?;
        }
        check_head(&self.total_head, "total head")?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Input(format!("model lambda {} invalid", self.lambda)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: PredictorModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    fn region_scores(&self, x: &[f64]) -> [u8; N_REGIONS] {
        let mut s = [0u8; N_REGIONS];
        for (slot, head) in s.iter_mut().zip(&self.region_heads) {
            *slot = clip_region(head.weights.predict(x));
        }
        s
    }

    fn raw(&self, mode: PredictMode, x: &[f64], regions: &[u8; N_REGIONS]) -> f64 {
        match mode {
            PredictMode::SumOfRegions => regions.iter().map(|&v| v as f64).sum(),
            PredictMode::DirectTotal => self.total_head.predict(x),
        }
    }
}

pub fn predict_gca(m: &PredictorModel, f: &FeatureVector) -> Result<Prediction> {
    if !f.is_finite() {
        return Err(Error::Input("feature vector has non-finite components".into()));
    }
    let x = f.values();
    let region_scores = m.region_scores(x);
    let raw = m.raw(m.mode, x, &region_scores);
    if !raw.is_finite() {
        return Err(Error::Numeric(format!("prediction overflowed ({raw})")));
    }
    // f64::round rounds half away from zero.
    let total = raw.round().clamp(0.0, MAX_TOTAL as f64) as u32;
    Ok(Prediction { raw, total, severity: classify_severity(total as i64)?, region_scores })
}

/// Column means and scales of the training design.
fn standardiser(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let d = x[0].len();
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let scale = (0..d)
        .map(|j| {
            let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 { var.sqrt() } else { 1.0 }
        })
        .collect();
    (mean, scale)
}

fn fit_standardised(z: &[Vec<f64>], y: &[f64], lambda: f64, mean: &[f64], scale: &[f64]) -> Result<RidgeWeights> {
    let w = fit_ridge(z, y, lambda)?;
    let coef: Vec<f64> = w.coef.iter().zip(scale).map(|(c, s)| c / s).collect();
    let intercept = w.intercept - coef.iter().zip(mean).map(|(c, m)| c * m).sum::<f64>();
    Ok(RidgeWeights { intercept, coef })
}

/// Fit on the train split, select (mode, λ) on the optimisation split.
pub fn train(dataset: &[(FeatureVector, GcaRating)], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    // Canonical order so that results do not depend on input order.
    let mut rows: Vec<&(FeatureVector, GcaRating)> = dataset.iter().collect();
    rows.sort_by(|a, b| a.1.scan_id.cmp(&b.1.scan_id));
    let ids: Vec<String> = rows.iter().map(|r| r.1.scan_id.clone()).collect();
    let split = split_dataset(&ids, cfg.seed)?;
    let (n_train, n_opt, n_test) = split.sizes();
    if n_train == 0 || n_opt == 0 || n_test == 0 {
        return Err(Error::Protocol(format!(
            "{} scans give split sizes {n_train}/{n_opt}/{n_test}; every split must be non-empty",
            ids.len()
        )));
    }

    let mut train_x = Vec::with_capacity(n_train);
    let mut train_regions = Vec::with_capacity(n_train);
    let mut opt_x = Vec::with_capacity(n_opt);
    let mut opt_total = Vec::with_capacity(n_opt);
    for (f, rating) in &rows {
        if !f.is_finite() {
            return Err(Error::Input(format!("{}: non-finite features", rating.scan_id)));
        }
        match split.get(&rating.scan_id).expect("every id assigned") {
            Split::Train => {
                train_x.push(f.values().to_vec());
                train_regions.push(rating.values()?);
            }
            Split::Optimisation => {
                opt_x.push(f.values().to_vec());
                opt_total.push(rating.total()? as f64);
            }
            Split::Test => {}
        }
    }

    let (mean, scale) = standardiser(&train_x);
    let z: Vec<Vec<f64>> = train_x
        .iter()
        .map(|r| r.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let train_total: Vec<f64> = train_regions.iter().map(|v| v.iter().map(|&s| s as f64).sum()).collect();

    let mut best: Option<(f64, PredictorModel)> = None;
    let mut selection = Vec::new();
    for &lambda in &cfg.lambdas {
        let mut region_heads = Vec::with_capacity(N_REGIONS);
        for r in GcaRegion::ALL {
            let y: Vec<f64> = train_regions.iter().map(|v| v[r.index()] as f64).collect();
            region_heads.push(RegionHead { region: r, weights: fit_standardised(&z, &y, lambda, &mean, &scale)? });
        }
        let total_head = fit_standardised(&z, &train_total, lambda, &mean, &scale)?;
        for mode in [PredictMode::SumOfRegions, PredictMode::DirectTotal] {
            let model = PredictorModel {
                feature_names: FeatureVector::names(),
                region_heads: region_heads.clone(),
                total_head: total_head.clone(),
                mode,
                lambda,
                manifest: TrainingManifest {
                    seed: cfg.seed,
                    split_hash: split.hash(),
                    n_train,
                    n_optimisation: n_opt,
                    n_test,
                },
            };
            let mae = opt_x
                .iter()
                .zip(&opt_total)
                .map(|(x, t)| {
                    let regions = model.region_scores(x);
                    (model.raw(mode, x, &regions) - t).abs()
                })
                .sum::<f64>()
                / n_opt as f64;
            selection.push(SelectionRow { mode, lambda, optimisation_mae: mae });
            let better = match &best {
                None => true,
                Some((b, m)) => {
                    mae < *b
                        || (mae == *b && lambda < m.lambda)
                        || (mae == *b && lambda == m.lambda && mode == PredictMode::DirectTotal)
                }
            };
            if better {
                best = Some((mae, model));
            }
        }
    }
    let (_, model) = best.expect("non-empty grid");
    model.validate()?;
    Ok(TrainOutcome { model, split, selection })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rating(id: &str, scores: [u8; N_REGIONS]) -> GcaRating {
        GcaRating::complete(id, "rater-1", scores).unwrap()
    }

    /// Features that are noisy linear views of the region scores.
    fn synthetic(n: usize, seed: u64) -> Vec<(FeatureVector, GcaRating)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let scores: [u8; N_REGIONS] = std::array::from_fn(|_| rng.random_range(0..=3));
                let mut f = [0.0; N_FEATURES];
                for k in 0..N_REGIONS {
                    f[k] = 0.02 + 0.1 * scores[k] as f64 + rng.random_range(-0.02..0.02);
                }
                f[N_REGIONS] = f[..N_REGIONS].iter().sum::<f64>() / N_REGIONS as f64;
                f[N_REGIONS + 1] = f[6..].iter().take(7).sum::<f64>() / 10.0;
                (FeatureVector(f), rating(&format!("s{i:03}"), scores))
            })
            .collect()
    }

    #[test]
    fn linear_total_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<_> = (0..60)
            .map(|i| {
                let scores: [u8; N_REGIONS] = std::array::from_fn(|_| rng.random_range(0..=3));
                let total: u32 = scores.iter().map(|&s| s as u32).sum();
                let mut f = [0.0; N_FEATURES];
                f[0] = total as f64 / 100.0;
                for v in f.iter_mut().skip(1) {
                    *v = rng.random_range(0.0..1.0);
                }
                (FeatureVector(f), rating(&format!("x{i}"), scores))
            })
            .collect();
        let out = train(&data, &TrainConfig::default()).unwrap();
        let best = out
            .selection
            .iter()
            .find(|r| r.mode == out.model.mode && r.lambda == out.model.lambda)
            .unwrap();
        assert!(best.optimisation_mae <= 0.5, "{}", best.optimisation_mae);
    }

    #[test]
    fn single_lambda_is_selected() {
        let cfg = TrainConfig { lambdas: vec![3.5], seed: 1 };
        let out = train(&synthetic(40, 2), &cfg).unwrap();
        assert_eq!(out.model.lambda, 3.5);
        assert_eq!(out.selection.len(), 2);
    }

    #[test]
    fn input_order_does_not_matter() {
        let data = synthetic(50, 3);
        let mut shuffled = data.clone();
        shuffled.reverse();
        shuffled.swap(3, 17);
        let cfg = TrainConfig { seed: 11, ..TrainConfig::default() };
        let a = train(&data, &cfg).unwrap().model;
        let b = train(&shuffled, &cfg).unwrap().model;
        assert_eq!((a.mode, a.lambda), (b.mode, b.lambda));
        assert_eq!(a, b);
    }

    #[test]
    fn test_labels_do_not_influence_the_model() {
        let data = synthetic(60, 4);
        let cfg = TrainConfig { seed: 5, ..TrainConfig::default() };
        let first = train(&data, &cfg).unwrap();
        let test_ids: Vec<String> = first.split.ids(Split::Test).into_iter().map(String::from).collect();
        // Rotate the ratings among the test scans.
        let mut permuted = data.clone();
        let test_pos: Vec<usize> = permuted
            .iter()
            .enumerate()
            .filter(|(_, (_, r))| test_ids.contains(&r.scan_id))
            .map(|(i, _)| i)
            .collect();
        let scores: Vec<_> = test_pos.iter().map(|&i| permuted[i].1.scores().to_owned()).collect();
        for (k, &i) in test_pos.iter().enumerate() {
            let src = scores[(k + 1) % scores.len()];
            let mut r = permuted[i].1.clone();
            for reg in GcaRegion::ALL {
                r.set_score(reg, src[reg.index()]);
            }
            permuted[i].1 = r;
        }
        assert_ne!(permuted, data);
        let second = train(&permuted, &cfg).unwrap();
        assert_eq!(first.model, second.model);
    }

    #[test]
    fn empty_split_is_protocol_error() {
        assert!(matches!(train(&synthetic(2, 0), &TrainConfig::default()), Err(Error::Protocol(_))));
    }

    #[test]
    fn selection_prefers_small_lambda_then_direct_total() {
        // Identical features for every scan make every head constant, so all
        // candidates tie.
        let data: Vec<_> = (0..10)
            .map(|i| (FeatureVector([0.5; N_FEATURES]), rating(&format!("c{i}"), [1; N_REGIONS])))
            .collect();
        let cfg = TrainConfig { lambdas: vec![1.0, 0.1, 10.0], seed: 0 };
        let m = train(&data, &cfg).unwrap().model;
        assert_eq!(m.lambda, 0.1);
        assert_eq!(m.mode, PredictMode::DirectTotal);
    }

    #[test]
    fn model_json_round_trip() {
        let m = train(&synthetic(30, 6), &TrainConfig::default()).unwrap().model;
        let text = m.to_json().unwrap();
        assert_eq!(PredictorModel::from_json(&text).unwrap(), m);
        assert!(text.contains("\"mode\""));
        assert!(text.contains("\"split_hash\""));
    }

    #[test]
    fn synthetic_predictions_track_truth() {
        let data = synthetic(200, 8);
        let out = train(&data, &TrainConfig::default()).unwrap();
        let mut err = 0.0;
        let mut n = 0;
        for (f, r) in &data {
            if out.split.get(&r.scan_id) == Some(Split::Test) {
                let p = predict_gca(&out.model, f).unwrap();
                err += (p.total as f64 - r.total().unwrap() as f64).abs();
                n += 1;
            }
        }
        assert!(err / n as f64 <= 1.0, "test MAE {}", err / n as f64);
    }

    #[test]
    fn non_finite_feature_is_rejected() {
        let m = train(&synthetic(30, 6), &TrainConfig::default()).unwrap().model;
        let mut f = FeatureVector([0.1; N_FEATURES]);
        f.0[4] = f64::NAN;
        assert!(matches!(predict_gca(&m, &f), Err(Error::Input(_))));
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        let mut m = train(&synthetic(30, 6), &TrainConfig::default()).unwrap().model;
        m.mode = PredictMode::DirectTotal;
        m.total_head = RidgeWeights { intercept: 12.5, coef: vec![0.0; N_FEATURES] };
        let p = predict_gca(&m, &FeatureVector([0.0; N_FEATURES])).unwrap();
        assert_eq!((p.total, p.severity), (13, SeverityClass::Moderate));
        m.total_head.intercept = -0.5;
        assert_eq!(predict_gca(&m, &FeatureVector([0.0; N_FEATURES])).unwrap().total, 0);
        m.total_head.intercept = 11.49;
        assert_eq!(predict_gca(&m, &FeatureVector([0.0; N_FEATURES])).unwrap().total, 11);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn predictions_stay_in_bounds(v in proptest::collection::vec(-1e6f64..1e6, N_FEATURES)) {
            static MODEL: std::sync::OnceLock<PredictorModel> = std::sync::OnceLock::new();
            let m = MODEL.get_or_init(|| train(&synthetic(40, 12), &TrainConfig::default()).unwrap().model);
            let mut f = [0.0; N_FEATURES];
            f.copy_from_slice(&v);
            let p = predict_gca(m, &FeatureVector(f)).unwrap();
            prop_assert!(p.total <= MAX_TOTAL);
            prop_assert!(p.region_scores.iter().all(|&s| s <= MAX_SCORE));
        }
    }
}
