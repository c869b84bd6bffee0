//! Global Cortical Atrophy scale: 13 regions scored 0–3, total 0–39.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_REGIONS: usize = 13;
pub const MAX_SCORE: u8 = 3;
pub const MAX_TOTAL: u32 = 39;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GcaRegion {
    FrontalL,
    FrontalR,
    TemporalL,
    TemporalR,
    ParietoOccipitalL,
    ParietoOccipitalR,
    FrontalHornL,
    FrontalHornR,
    TemporalHornL,
    TemporalHornR,
    OccipitalHornL,
    OccipitalHornR,
    ThirdVentricle,
}

impl GcaRegion {
    /// Fixed canonical order, also the rating-sheet column order.
    pub const ALL: [GcaRegion; N_REGIONS] = [
        GcaRegion::FrontalL,
        GcaRegion::FrontalR,
        GcaRegion::TemporalL,
        GcaRegion::TemporalR,
        GcaRegion::ParietoOccipitalL,
        GcaRegion::ParietoOccipitalR,
        GcaRegion::FrontalHornL,
        GcaRegion::FrontalHornR,
        GcaRegion::TemporalHornL,
        GcaRegion::TemporalHornR,
        GcaRegion::OccipitalHornL,
        GcaRegion::OccipitalHornR,
        GcaRegion::ThirdVentricle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            GcaRegion::FrontalL => "frontal_l",
            GcaRegion::FrontalR => "frontal_r",
            GcaRegion::TemporalL => "temporal_l",
            GcaRegion::TemporalR => "temporal_r",
            GcaRegion::ParietoOccipitalL => "parieto_occipital_l",
            GcaRegion::ParietoOccipitalR => "parieto_occipital_r",
            GcaRegion::FrontalHornL => "frontal_horn_l",
            GcaRegion::FrontalHornR => "frontal_horn_r",
            GcaRegion::TemporalHornL => "temporal_horn_l",
            GcaRegion::TemporalHornR => "temporal_horn_r",
            GcaRegion::OccipitalHornL => "occipital_horn_l",
            GcaRegion::OccipitalHornR => "occipital_horn_r",
            GcaRegion::ThirdVentricle => "third_ventricle",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == name)
    }

    /// Same structure in the opposite hemisphere; `None` for the third ventricle.
    pub fn homologous(self) -> Option<Self> {
        use GcaRegion::*;
        Some(match self {
            FrontalL => FrontalR,
            FrontalR => FrontalL,
            TemporalL => TemporalR,
            TemporalR => TemporalL,
            ParietoOccipitalL => ParietoOccipitalR,
            ParietoOccipitalR => ParietoOccipitalL,
            FrontalHornL => FrontalHornR,
            FrontalHornR => FrontalHornL,
            TemporalHornL => TemporalHornR,
            TemporalHornR => TemporalHornL,
            OccipitalHornL => OccipitalHornR,
            OccipitalHornR => OccipitalHornL,
            ThirdVentricle => return None,
        })
    }

    pub fn is_ventricular(self) -> bool {
        self.index() >= GcaRegion::FrontalHornL.index()
    }
}

impl fmt::Display for GcaRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordinal region score: 0 absent, 1 mild, 2 moderate, 3 severe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct GcaScore(u8);

impl GcaScore {
    pub fn new(v: u8) -> Result<Self> {
        if v > MAX_SCORE {
            return Err(Error::Domain(format!("GCA region score {v} outside 0..=3")));
        }
        Ok(Self(v))
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for GcaScore {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Self::new(v)
    }
}

impl From<GcaScore> for u8 {
    fn from(s: GcaScore) -> u8 {
        s.0
    }
}

/// One rater's assessment of one scan. `None` marks an unassessable region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcaRating {
    pub scan_id: String,
    pub rater_id: String,
    scores: [Option<GcaScore>; N_REGIONS],
}

impl GcaRating {
    pub fn new(
        scan_id: impl Into<String>,
        rater_id: impl Into<String>,
        scores: [Option<GcaScore>; N_REGIONS],
    ) -> Self {
        Self {
            scan_id: scan_id.into(),
            rater_id: rater_id.into(),
            scores,
        }
    }

    /// Fully assessed rating from raw values.
    pub fn complete(
        scan_id: impl Into<String>,
        rater_id: impl Into<String>,
        scores: [u8; N_REGIONS],
    ) -> Result<Self> {
        let mut s = [None; N_REGIONS];
        for (slot, v) in s.iter_mut().zip(scores) {
            *slot = Some(GcaScore::new(v)?);
        }
        Ok(Self::new(scan_id, rater_id, s))
    }

    pub fn score(&self, region: GcaRegion) -> Option<GcaScore> {
        self.scores[region.index()]
    }

    pub fn set_score(&mut self, region: GcaRegion, score: Option<GcaScore>) {
        self.scores[region.index()] = score;
    }

    pub fn scores(&self) -> &[Option<GcaScore>; N_REGIONS] {
        &self.scores
    }

    pub fn is_complete(&self) -> bool {
        self.scores.iter().all(Option::is_some)
    }

    /// Region scores in canonical order; fails on any gap.
    pub fn values(&self) -> Result<[u8; N_REGIONS]> {
        let mut out = [0u8; N_REGIONS];
        for (region, slot) in GcaRegion::ALL.into_iter().zip(out.iter_mut()) {
            *slot = self
                .score(region)
                .ok_or_else(|| Error::IncompleteRating {
                    scan_id: self.scan_id.clone(),
                    region,
                })?
                .value();
        }
        Ok(out)
    }

    pub fn total(&self) -> Result<u32> {
        total_score(self)
    }
}

pub fn total_score(r: &GcaRating) -> Result<u32> {
    Ok(r.values()?.iter().map(|&v| v as u32).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeverityClass {
    #[serde(rename = "mild")]
    NoneMild,
    #[serde(rename = "moderate")]
    Moderate,
    #[serde(rename = "severe")]
    Severe,
}

impl SeverityClass {
    pub const ALL: [SeverityClass; 3] =
        [SeverityClass::NoneMild, SeverityClass::Moderate, SeverityClass::Severe];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            SeverityClass::NoneMild => "mild",
            SeverityClass::Moderate => "moderate",
            SeverityClass::Severe => "severe",
        }
    }
}

impl fmt::Display for SeverityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// 0–11 none/mild, 12–21 moderate, 22–39 severe.
pub fn classify_severity(total: i64) -> Result<SeverityClass> {
    match total {
        0..=11 => Ok(SeverityClass::NoneMild),
        12..=21 => Ok(SeverityClass::Moderate),
        22..=39 => Ok(SeverityClass::Severe),
        _ => Err(Error::Domain(format!("GCA total {total} outside 0..=39"))),
    }
}

/// Fill each unassessable lateral region with its homologous partner's score.
pub fn impute_homologous(r: &GcaRating) -> Result<GcaRating> {
    let mut out = r.clone();
    for region in GcaRegion::ALL {
        if r.score(region).is_some() {
            continue;
        }
        let partner = region
            .homologous()
            .and_then(|h| r.score(h))
            .ok_or(Error::NotAssessable(region))?;
        out.set_score(region, Some(partner));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CohortTag {
    Orchard,
    Ocs,
    Legacy,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sex {
    #[serde(rename = "F")]
    Female,
    #[serde(rename = "M")]
    Male,
}

/// Demographic and cognitive covariates for one scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub scan_id: String,
    pub cohort: CohortTag,
    pub age: f64,
    pub sex: Sex,
    pub amt_score: Option<u8>,
    pub ocs_tasks_impaired: Option<u32>,
}

impl CohortRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.age >= 0.0) {
            return Err(Error::Domain(format!("{}: age must be >= 0", self.scan_id)));
        }
        if matches!(self.amt_score, Some(a) if a > 10) {
            return Err(Error::Domain(format!("{}: AMT score must be <= 10", self.scan_id)));
        }
        Ok(())
    }

    /// AMT below 9 flags cognitive impairment.
    pub fn amt_impaired(&self) -> Option<bool> {
        self.amt_score.map(|a| a < 9)
    }
}

const NA: &str = "NA";

/// Parse a rating sheet: `scan_id,rater_id,<13 region columns>`, cells 0–3 or NA.
pub fn parse_rating_csv(text: &str) -> Result<Vec<GcaRating>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let expected = rating_header();
    if headers.len() != expected.len() {
        return Err(Error::RatingParse {
            row: 1,
            message: format!("expected {} columns, found {}", expected.len(), headers.len()),
        });
    }
    for (got, want) in headers.iter().zip(&expected) {
        if got != want {
            return Err(Error::RatingParse {
                row: 1,
                message: format!("unknown column `{got}` (expected `{want}`)"),
            });
        }
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // Header is row 1.
        let row = i + 2;
        let rec = rec.map_err(|e| Error::RatingParse {
            row,
            message: e.to_string(),
        })?;
        let scan_id = rec[0].to_string();
        let rater_id = rec[1].to_string();
        if scan_id.is_empty() {
            return Err(Error::RatingParse {
                row,
                message: "empty scan_id".into(),
            });
        }
        if !seen.insert((scan_id.clone(), rater_id.clone())) {
            return Err(Error::RatingParse {
                row,
                message: format!("duplicate (scan_id, rater_id) = ({scan_id}, {rater_id})"),
            });
        }
        let mut scores = [None; N_REGIONS];
        for (r, cell) in rec.iter().skip(2).enumerate() {
            scores[r] = match cell {
                NA => None,
                c => {
                    let v: u8 = c.parse().map_err(|_| Error::RatingParse {
                        row,
                        message: format!("column {}: invalid cell `{c}`", expected[r + 2]),
                    })?;
                    Some(GcaScore::new(v).map_err(|_| Error::RatingParse {
                        row,
                        message: format!("column {}: score {v} outside 0..=3", expected[r + 2]),
                    })?)
                }
            };
        }
        out.push(GcaRating::new(scan_id, rater_id, scores));
    }
    Ok(out)
}

pub fn write_rating_csv(ratings: &[GcaRating]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(rating_header())?;
    for r in ratings {
        let mut row = vec![r.scan_id.clone(), r.rater_id.clone()];
        row.extend(r.scores.iter().map(|s| match s {
            Some(s) => s.value().to_string(),
            None => NA.to_string(),
        }));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn rating_header() -> Vec<String> {
    let mut h = vec!["scan_id".to_string(), "rater_id".to_string()];
    h.extend(GcaRegion::ALL.iter().map(|r| r.name().to_string()));
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(v: u8) -> GcaRating {
        GcaRating::complete("s1", "rater-1", [v; N_REGIONS]).unwrap()
    }

    #[test]
    fn thirteen_regions_with_unique_partners() {
        assert_eq!(GcaRegion::ALL.len(), 13);
        for r in GcaRegion::ALL {
            match r.homologous() {
                Some(h) => {
                    assert_ne!(h, r);
                    assert_eq!(h.homologous(), Some(r));
                }
                None => assert_eq!(r, GcaRegion::ThirdVentricle),
            }
            assert_eq!(GcaRegion::from_name(r.name()), Some(r));
        }
    }

    #[test]
    fn totals() {
        assert_eq!(total_score(&uniform(0)).unwrap(), 0);
        assert_eq!(total_score(&uniform(3)).unwrap(), 39);
        let mut v = [1u8; N_REGIONS];
        v[..6].fill(2);
        assert_eq!(total_score(&GcaRating::complete("s", "r", v).unwrap()).unwrap(), 19);
    }

    #[test]
    fn total_requires_complete_rating() {
        let mut r = uniform(1);
        r.set_score(GcaRegion::TemporalR, None);
        assert!(matches!(
            total_score(&r),
            Err(Error::IncompleteRating { region: GcaRegion::TemporalR, .. })
        ));
    }

    #[test]
    fn severity_bins() {
        use SeverityClass::*;
        assert_eq!(classify_severity(0).unwrap(), NoneMild);
        assert_eq!(classify_severity(11).unwrap(), NoneMild);
        assert_eq!(classify_severity(12).unwrap(), Moderate);
        assert_eq!(classify_severity(21).unwrap(), Moderate);
        assert_eq!(classify_severity(22).unwrap(), Severe);
        assert_eq!(classify_severity(39).unwrap(), Severe);
        assert!(classify_severity(-1).is_err());
        assert!(classify_severity(40).is_err());
    }

    #[test]
    fn severity_is_monotone_and_changes_only_at_bin_edges() {
        for t in 0..39 {
            let (a, b) = (classify_severity(t).unwrap(), classify_severity(t + 1).unwrap());
            assert!(a <= b);
            assert_eq!(a != b, t == 11 || t == 21, "edge at {t}");
        }
    }

    #[test]
    fn imputes_from_homologous_partner() {
        let mut r = uniform(1);
        r.set_score(GcaRegion::FrontalL, None);
        r.set_score(GcaRegion::FrontalR, Some(GcaScore::new(2).unwrap()));
        let out = impute_homologous(&r).unwrap();
        assert_eq!(out.score(GcaRegion::FrontalL).unwrap().value(), 2);
        assert!(total_score(&out).is_ok());
    }

    #[test]
    fn imputation_without_gaps_is_identity() {
        let r = uniform(2);
        assert_eq!(impute_homologous(&r).unwrap(), r);
    }

    #[test]
    fn both_partners_missing_is_not_assessable() {
        let mut r = uniform(1);
        r.set_score(GcaRegion::FrontalL, None);
        r.set_score(GcaRegion::FrontalR, None);
        let err = impute_homologous(&r).unwrap_err();
        assert!(matches!(err, Error::NotAssessable(GcaRegion::FrontalL)));
        assert!(err.to_string().contains("may not be assessable"));
    }

    #[test]
    fn missing_third_ventricle_is_not_assessable() {
        let mut r = uniform(1);
        r.set_score(GcaRegion::ThirdVentricle, None);
        assert!(matches!(
            impute_homologous(&r),
            Err(Error::NotAssessable(GcaRegion::ThirdVentricle))
        ));
    }

    const FIXTURE: &str = "\
scan_id,rater_id,frontal_l,frontal_r,temporal_l,temporal_r,parieto_occipital_l,parieto_occipital_r,frontal_horn_l,frontal_horn_r,temporal_horn_l,temporal_horn_r,occipital_horn_l,occipital_horn_r,third_ventricle
scan-001,rater-1,3,3,3,3,3,3,3,3,3,3,3,3,3
scan-002,rater-1,0,1,2,NA,1,1,0,0,2,2,1,0,1
scan-001,rater-2,1,1,1,1,2,2,1,1,0,0,1,1,2
";

    #[test]
    fn parse_fixture() {
        let rs = parse_rating_csv(FIXTURE).unwrap();
        assert_eq!(rs.len(), 3);
        assert_eq!(total_score(&rs[0]).unwrap(), 39);
        assert_eq!(rs[1].score(GcaRegion::TemporalR), None);
        assert_eq!(rs[2].rater_id, "rater-2");
    }

    #[test]
    fn write_parse_round_trip() {
        let rs = parse_rating_csv(FIXTURE).unwrap();
        assert_eq!(write_rating_csv(&rs).unwrap(), FIXTURE);
    }

    #[test]
    fn out_of_range_cell_cites_row() {
        let text = FIXTURE.replace("scan-002,rater-1,0,", "scan-002,rater-1,4,");
        match parse_rating_csv(&text) {
            Err(Error::RatingParse { row, message }) => {
                assert_eq!(row, 3);
                assert!(message.contains("frontal_l"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_column_is_rejected() {
        let text = FIXTURE.replace("third_ventricle", "fourth_ventricle");
        assert!(matches!(parse_rating_csv(&text), Err(Error::RatingParse { row: 1, .. })));
    }

    #[test]
    fn duplicate_scan_rater_pair_is_rejected() {
        let text = format!("{FIXTURE}scan-001,rater-1,0,0,0,0,0,0,0,0,0,0,0,0,0\n");
        assert!(matches!(parse_rating_csv(&text), Err(Error::RatingParse { row: 5, .. })));
    }

    #[test]
    fn severity_serializes_with_short_labels() {
        let json = serde_json::to_string(&SeverityClass::ALL).unwrap();
        assert_eq!(json, r#"["mild","moderate","severe"]"#);
    }
}
