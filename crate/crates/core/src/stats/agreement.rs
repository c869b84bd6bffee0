use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gca::{classify_severity, SeverityClass, MAX_TOTAL};

/// Paired observations of the same scans by two sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedScores {
    pub a_label: String,
    pub b_label: String,
    pub rows: Vec<(String, f64, f64)>,
}

impl PairedScores {
    pub fn new(a_label: impl Into<String>, b_label: impl Into<String>, rows: Vec<(String, f64, f64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Domain("paired scores need at least one row".into()));
        }
        if let Some((id, _, _)) = rows.iter().find(|(_, a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::Domain(format!("non-finite score for `{id}`")));
        }
        Ok(PairedScores { a_label: a_label.into(), b_label: b_label.into(), rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn a(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.1).collect()
    }

    pub fn b(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.2).collect()
    }

    /// Signed differences `a − b`.
    pub fn diffs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.1 - r.2).collect()
    }
}

pub fn mae(p: &PairedScores) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::Domain("mae of an empty series".into()));
    }
    Ok(p.rows.iter().map(|r| (r.1 - r.2).abs()).sum::<f64>() / p.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    /// Per-scan (mean of the pair, difference).
    #[serde(skip)]
    pub points: Vec<(f64, f64)>,
}

pub const LOA_Z: f64 = 1.96;

pub fn bland_altman(p: &PairedScores) -> Result<BlandAltman> {
    let n = p.len();
    if n < 2 {
        return Err(Error::Domain(format!("bland_altman needs n >= 2, got {n}")));
    }
    let d = p.diffs();
    let mean_diff = d.iter().sum::<f64>() / n as f64;
    let sd_diff = (d.iter().map(|v| (v - mean_diff).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let points = p.rows.iter().map(|r| ((r.1 + r.2) / 2.0, r.1 - r.2)).collect();
    Ok(BlandAltman {
        mean_diff,
        sd_diff,
        loa_low: mean_diff - LOA_Z * sd_diff,
        loa_high: mean_diff + LOA_Z * sd_diff,
        points,
    })
}

/// Linearly weighted Cohen's kappa over categories `0..k`.
pub fn weighted_kappa(a: &[i64], b: &[i64], k: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!("weighted_kappa: lengths differ ({} vs {})", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Domain("weighted_kappa of empty lists".into()));
    }
    if k < 2 {
        return Err(Error::Domain(format!("weighted_kappa needs k >= 2, got {k}")));
    }
    if let Some(v) = a.iter().chain(b).find(|&&v| v < 0 || v >= k as i64) {
        return Err(Error::Domain(format!("weighted_kappa: value {v} outside 0..{k}")));
    }
    let n = a.len() as f64;
    let w = |i: usize, j: usize| i.abs_diff(j) as f64 / (k - 1) as f64;
    let mut rows = vec![0.0; k];
    let mut cols = vec![0.0; k];
    let mut q_o = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        rows[x as usize] += 1.0;
        cols[y as usize] += 1.0;
        q_o += w(x as usize, y as usize);
    }
    q_o /= n;
    let mut q_e = 0.0;
    for i in 0..k {
        for j in 0..k {
            q_e += w(i, j) * rows[i] * cols[j];
        }
    }
    q_e /= n * n;
    if q_e == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - q_o / q_e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementLevel {
    Poor,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl AgreementLevel {
    pub fn label(self) -> &'static str {
        match self {
            AgreementLevel::Poor => "poor",
            AgreementLevel::Slight => "slight",
            AgreementLevel::Fair => "fair",
            AgreementLevel::Moderate => "moderate",
            AgreementLevel::Substantial => "substantial",
            AgreementLevel::AlmostPerfect => "almost perfect",
        }
    }
}

impl std::fmt::Display for AgreementLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Landis and Koch bands, upper bounds inclusive.
pub fn landis_koch(kappa: f64) -> AgreementLevel {
    match kappa {
        k if k < 0.0 => AgreementLevel::Poor,
        k if k <= 0.20 => AgreementLevel::Slight,
        k if k <= 0.40 => AgreementLevel::Fair,
        k if k <= 0.60 => AgreementLevel::Moderate,
        k if k <= 0.80 => AgreementLevel::Substantial,
        _ => AgreementLevel::AlmostPerfect,
    }
}

/// Counts indexed by (reference class, predicted class).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix3 {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix3 {
    pub fn row_total(&self, reference: SeverityClass) -> u64 {
        self.counts[reference.index()].iter().sum()
    }

    /// Row-normalised counts; `None` for classes absent from the reference.
    pub fn normalized(&self) -> [Option<[f64; 3]>; 3] {
        std::array::from_fn(|i| {
            let total: u64 = self.counts[i].iter().sum();
            (total > 0).then(|| self.counts[i].map(|c| c as f64 / total as f64))
        })
    }

    /// Per-class accuracy (row recall).
    pub fn accuracies(&self) -> [Option<f64>; 3] {
        std::array::from_fn(|i| {
            let total: u64 = self.counts[i].iter().sum();
            (total > 0).then(|| self.counts[i][i] as f64 / total as f64)
        })
    }
}

pub fn confusion_matrix(reference: &[SeverityClass], predicted: &[SeverityClass]) -> Result<ConfusionMatrix3> {
    if reference.len() != predicted.len() {
        return Err(Error::Domain(format!(
            "confusion_matrix: lengths differ ({} vs {})",
            reference.len(),
            predicted.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::Domain("confusion_matrix of empty lists".into()));
    }
    let mut m = ConfusionMatrix3::default();
    for (r, p) in reference.iter().zip(predicted) {
        m.counts[r.index()][p.index()] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: SeverityClass,
    pub n: u64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub a_label: String,
    pub b_label: String,
    pub n: usize,
    pub mae: f64,
    pub signed_error_mean: f64,
    pub signed_error_sd: f64,
    pub bland_altman: BlandAltman,
    pub kappa_total: f64,
    pub kappa_total_label: AgreementLevel,
    pub kappa_severity: f64,
    pub kappa_severity_label: AgreementLevel,
    pub confusion: ConfusionMatrix3,
    pub confusion_normalized: [Option<[f64; 3]>; 3],
    pub class_accuracy: Vec<ClassAccuracy>,
    pub within_2: f64,
    pub within_minus5_4: f64,
}

/// Category count for kappa on GCA totals.
pub const TOTAL_CATEGORIES: usize = MAX_TOTAL as usize + 1;

/// Nearest GCA total, clamped to the scale.
fn as_total(v: f64) -> i64 {
    v.round().clamp(0.0, MAX_TOTAL as f64) as i64
}

/// Full agreement summary of `a` (e.g. the tool) against reference `b`.
/// MAE and Bland–Altman use the values as given; kappa and severity use
/// them rounded to whole totals.
pub fn agreement_report(p: &PairedScores) -> Result<AgreementReport> {
    let ba = bland_altman(p)?;
    let a: Vec<i64> = p.rows.iter().map(|r| as_total(r.1)).collect();
    let b: Vec<i64> = p.rows.iter().map(|r| as_total(r.2)).collect();
    let sa: Vec<SeverityClass> = a.iter().map(|&v| classify_severity(v)).collect::<Result<_>>()?;
    let sb: Vec<SeverityClass> = b.iter().map(|&v| classify_severity(v)).collect::<Result<_>>()?;
    let kappa_total = weighted_kappa(&a, &b, TOTAL_CATEGORIES)?;
    let ia: Vec<i64> = sa.iter().map(|s| s.index() as i64).collect();
    let ib: Vec<i64> = sb.iter().map(|s| s.index() as i64).collect();
    let kappa_severity = weighted_kappa(&ia, &ib, 3)?;
    let confusion = confusion_matrix(&sb, &sa)?;
    let acc = confusion.accuracies();
    let class_accuracy = SeverityClass::ALL
        .iter()
        .map(|&c| ClassAccuracy { class: c, n: confusion.row_total(c), accuracy: acc[c.index()] })
        .collect();
    let d = p.diffs();
    let n = d.len() as f64;
    Ok(AgreementReport {
        a_label: p.a_label.clone(),
        b_label: p.b_label.clone(),
        n: p.len(),
        mae: mae(p)?,
        signed_error_mean: ba.mean_diff,
        signed_error_sd: ba.sd_diff,
        kappa_total,
        kappa_total_label: landis_koch(kappa_total),
        kappa_severity,
        kappa_severity_label: landis_koch(kappa_severity),
        confusion,
        confusion_normalized: confusion.normalized(),
        class_accuracy,
        within_2: d.iter().filter(|&&e| (-2.0..=2.0).contains(&e)).count() as f64 / n,
        within_minus5_4: d.iter().filter(|&&e| (-5.0..=4.0).contains(&e)).count() as f64 / n,
        bland_altman: ba,
    })
}

/// Round every non-integer JSON number to 6 significant digits.
pub fn round_reals(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap();
            let r: f64 = format!("{x:.5e}").parse().unwrap();
            if let Some(num) = serde_json::Number::from_f64(r) {
                *n = num;
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(round_reals),
        serde_json::Value::Object(o) => o.values_mut().for_each(round_reals),
        _ => {}
    }
}

/// JSON with reals at 6 significant digits.
pub fn to_report_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_reals(&mut v);
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}
