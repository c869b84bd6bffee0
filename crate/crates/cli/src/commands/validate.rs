use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use ctgca::gca::{parse_rating_csv, CohortRecord, GcaRating, SeverityClass, MAX_TOTAL};
use ctgca::predictor::{
    parse_features_csv, predict_gca, FeatureVector, Prediction, PredictorModel, Split,
    SplitAssignment,
};
use ctgca::stats::{
    agreement_report, kruskal_wallis, paired_t, rank_sum_test, rm_anova, spearman, to_report_json,
    AgreementReport, Anova, PairedScores, PairedT,
};
use serde::Serialize;

use super::train::select_ratings;
use super::{elapsed, finish, Context};
use crate::io::{opt_real, read_text, real, sha256_hex, OutDir, Table};
use crate::manifest::RunManifest;
use crate::svg::{self, RefLine, Series, BLUE, GREY, ORANGE, RED};
use crate::{runtime, usage, CliResult};

/// Age bands used for the Kruskal–Wallis test: 65–75, 76–84 and over 84.
pub const AGE_BANDS: [&str; 3] = ["65-75", "76-84", ">84"];
pub const AGE_SPLIT: f64 = 75.0;

/// Index into [`AGE_BANDS`]; ages under 65 fall outside every band.
pub fn age_band(age: f64) -> Option<usize> {
    if age < 65.0 {
        None
    } else if age <= 75.0 {
        Some(0)
    } else if age <= 84.0 {
        Some(1)
    } else {
        Some(2)
    }
}

pub struct Inputs<'a> {
    pub model: &'a Path,
    pub split: &'a Path,
    pub features: &'a Path,
    pub ratings: &'a Path,
    pub ratings2: Option<&'a Path>,
    pub cohort: Option<&'a Path>,
    pub rater: Option<&'a str>,
}

#[derive(Serialize)]
struct SecondRater {
    rater: String,
    n: usize,
    tool_vs_rater1: AgreementReport,
    tool_vs_rater2: AgreementReport,
    rater1_vs_rater2: AgreementReport,
    anova: Option<Anova>,
    paired_t: BTreeMap<String, Option<PairedT>>,
}

#[derive(Serialize, Clone)]
struct GroupSummary {
    label: String,
    n: usize,
    median: Option<f64>,
}

#[derive(Serialize, Clone)]
struct CovariateTest {
    analysis: String,
    score: String,
    n: usize,
    statistic: String,
    value: f64,
    df: Option<usize>,
    p: f64,
    groups: Vec<GroupSummary>,
}

#[derive(Serialize)]
struct Report {
    model_mode: String,
    model_lambda: f64,
    rater: String,
    n_test: usize,
    agreement: AgreementReport,
    second_rater: Option<SecondRater>,
    covariates: Vec<CovariateTest>,
    notices: Vec<String>,
}

struct Row {
    id: String,
    prediction: Prediction,
    rater1: f64,
}

fn median(v: &[f64]) -> Option<f64> {
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(f64::total_cmp);
    (!s.is_empty()).then(|| svg::quantile(&s, 0.5))
}

fn group(label: &str, v: &[f64]) -> GroupSummary {
    GroupSummary {
        label: label.into(),
        n: v.len(),
        median: median(v),
    }
}

fn totals(ratings: &BTreeMap<String, GcaRating>) -> CliResult<BTreeMap<String, f64>> {
    ratings
        .iter()
        .map(|(id, r)| Ok((id.clone(), r.total().map_err(runtime)? as f64)))
        .collect()
}

/// Covariate analyses for one score source; failures become notices.
fn covariate_tests(
    score_name: &str,
    scores: &[(f64, &CohortRecord)],
    tests: &mut Vec<CovariateTest>,
    notices: &mut Vec<String>,
) {
    let mut push = |analysis: &str, r: ctgca::Result<CovariateTest>| match r {
        Ok(t) => tests.push(t),
        Err(e) => notices.push(format!("{analysis} ({score_name}) skipped: {e}")),
    };
    let s: Vec<f64> = scores.iter().map(|p| p.0).collect();
    let ages: Vec<f64> = scores.iter().map(|p| p.1.age).collect();

    push(
        "spearman_age",
        spearman(&ages, &s).map(|c| CovariateTest {
            analysis: "spearman_age".into(),
            score: score_name.into(),
            n: c.n,
            statistic: "rho".into(),
            value: c.rho,
            df: None,
            p: c.p,
            groups: vec![],
        }),
    );

    let mut bands = vec![Vec::new(); AGE_BANDS.len()];
    for (v, rec) in scores {
        if let Some(b) = age_band(rec.age) {
            bands[b].push(*v);
        }
    }
    let summaries: Vec<GroupSummary> = AGE_BANDS
        .iter()
        .zip(&bands)
        .map(|(l, v)| group(l, v))
        .collect();
    push(
        "kruskal_wallis_age_bands",
        kruskal_wallis(&bands).map(|k| CovariateTest {
            analysis: "kruskal_wallis_age_bands".into(),
            score: score_name.into(),
            n: bands.iter().map(Vec::len).sum(),
            statistic: "H".into(),
            value: k.h,
            df: Some(k.df),
            p: k.p,
            groups: summaries,
        }),
    );

    let (older, younger): (Vec<&(f64, &CohortRecord)>, Vec<_>) =
        scores.iter().partition(|p| p.1.age > AGE_SPLIT);
    let older: Vec<f64> = older.iter().map(|p| p.0).collect();
    let younger: Vec<f64> = younger.iter().map(|p| p.0).collect();
    push(
        "rank_sum_age_over_75",
        rank_sum_test(&older, &younger).map(|r| CovariateTest {
            analysis: "rank_sum_age_over_75".into(),
            score: score_name.into(),
            n: older.len() + younger.len(),
            statistic: "z".into(),
            value: r.z,
            df: None,
            p: r.p,
            groups: vec![group(">75", &older), group("<=75", &younger)],
        }),
    );

    let amt: Vec<(f64, u8)> = scores
        .iter()
        .filter_map(|p| p.1.amt_score.map(|a| (p.0, a)))
        .collect();
    if amt.is_empty() {
        push(
            "AMT analyses",
            Err(ctgca::Error::Input("no AMT scores in cohort".into())),
        );
    } else {
        let a: Vec<f64> = amt.iter().map(|p| p.1 as f64).collect();
        let v: Vec<f64> = amt.iter().map(|p| p.0).collect();
        push(
            "spearman_amt",
            spearman(&a, &v).map(|c| CovariateTest {
                analysis: "spearman_amt".into(),
                score: score_name.into(),
                n: c.n,
                statistic: "rho".into(),
                value: c.rho,
                df: None,
                p: c.p,
                groups: vec![],
            }),
        );
        let impaired: Vec<f64> = amt.iter().filter(|p| p.1 < 9).map(|p| p.0).collect();
        let intact: Vec<f64> = amt.iter().filter(|p| p.1 >= 9).map(|p| p.0).collect();
        push(
            "rank_sum_amt_impaired",
            rank_sum_test(&impaired, &intact).map(|r| CovariateTest {
                analysis: "rank_sum_amt_impaired".into(),
                score: score_name.into(),
                n: amt.len(),
                statistic: "z".into(),
                value: r.z,
                df: None,
                p: r.p,
                groups: vec![group("amt<9", &impaired), group("amt>=9", &intact)],
            }),
        );
    }

    let ocs: Vec<(f64, u32)> = scores
        .iter()
        .filter_map(|p| p.1.ocs_tasks_impaired.map(|t| (p.0, t)))
        .collect();
    if !ocs.is_empty() {
        let t: Vec<f64> = ocs.iter().map(|p| p.1 as f64).collect();
        let v: Vec<f64> = ocs.iter().map(|p| p.0).collect();
        push(
            "spearman_ocs_tasks",
            spearman(&t, &v).map(|c| CovariateTest {
                analysis: "spearman_ocs_tasks".into(),
                score: score_name.into(),
                n: c.n,
                statistic: "rho".into(),
                value: c.rho,
                df: None,
                p: c.p,
                groups: vec![],
            }),
        );
        let m = median(&t).unwrap_or(0.0);
        let above: Vec<f64> = ocs.iter().filter(|p| p.1 as f64 > m).map(|p| p.0).collect();
        let rest: Vec<f64> = ocs
            .iter()
            .filter(|p| p.1 as f64 <= m)
            .map(|p| p.0)
            .collect();
        push(
            "rank_sum_ocs_above_median",
            rank_sum_test(&above, &rest).map(|r| CovariateTest {
                analysis: "rank_sum_ocs_above_median".into(),
                score: score_name.into(),
                n: ocs.len(),
                statistic: "z".into(),
                value: r.z,
                df: None,
                p: r.p,
                groups: vec![
                    group(&format!(">{m}"), &above),
                    group(&format!("<={m}"), &rest),
                ],
            }),
        );
    }
}

fn agreement_row(t: &mut Table, r: &AgreementReport) {
    let acc = |c: SeverityClass| {
        opt_real(
            r.class_accuracy
                .iter()
                .find(|a| a.class == c)
                .and_then(|a| a.accuracy),
        )
    };
    t.row([
        r.a_label.clone(),
        r.b_label.clone(),
        r.n.to_string(),
        real(r.mae),
        real(r.bland_altman.mean_diff),
        real(r.bland_altman.sd_diff),
        real(r.bland_altman.loa_low),
        real(r.bland_altman.loa_high),
        real(r.kappa_total),
        r.kappa_total_label.label().to_string(),
        real(r.kappa_severity),
        r.kappa_severity_label.label().to_string(),
        real(r.within_2),
        real(r.within_minus5_4),
        acc(SeverityClass::NoneMild),
        acc(SeverityClass::Moderate),
        acc(SeverityClass::Severe),
    ]);
}

const AGREEMENT_HEADER: [&str; 17] = [
    "a",
    "b",
    "n",
    "mae",
    "mean_diff",
    "sd_diff",
    "loa_low",
    "loa_high",
    "kappa_total",
    "kappa_total_label",
    "kappa_severity",
    "kappa_severity_label",
    "within_2",
    "within_minus5_4",
    "accuracy_mild",
    "accuracy_moderate",
    "accuracy_severe",
];

fn integer_histogram(values: &[i64], lo: i64, hi: i64) -> Vec<(String, u64)> {
    (lo..=hi)
        .map(|b| {
            (
                b.to_string(),
                values.iter().filter(|&&v| v == b).count() as u64,
            )
        })
        .collect()
}

fn histogram_csv(label: &str, bins: &[(String, u64)]) -> Vec<u8> {
    let mut t = Table::new(&[label, "count"]);
    for (b, c) in bins {
        t.row([b.clone(), c.to_string()]);
    }
    t.finish()
}

pub fn run(ctx: &Context, inp: &Inputs) -> CliResult<()> {
    let start = Instant::now();
    let mut notices = Vec::new();
    let mut manifest = RunManifest::new("validate", ctx.seed, serde_json::Value::Null);

    let model_text = read_text(inp.model)?;
    let model = PredictorModel::from_json(&model_text).map_err(|e| usage(format!("model: {e}")))?;
    let split_text = read_text(inp.split)?;
    let split: SplitAssignment =
        serde_json::from_str(&split_text).map_err(|e| usage(format!("split: {e}")))?;
    if split.hash() != model.manifest.split_hash {
        return Err(usage(
            "split.json does not match the split recorded in the model",
        ));
    }
    let features_text = read_text(inp.features)?;
    let features: BTreeMap<String, FeatureVector> = parse_features_csv(&features_text)
        .map_err(|e| usage(format!("features: {e}")))?
        .into_iter()
        .collect();
    let ratings_text = read_text(inp.ratings)?;
    let sheet = parse_rating_csv(&ratings_text).map_err(|e| usage(format!("ratings: {e}")))?;
    let rater1 = select_ratings(sheet, inp.rater, "ratings")?;
    let rater1_id = rater1
        .values()
        .next()
        .map(|r| r.rater_id.clone())
        .unwrap_or_default();
    let rater1_totals = totals(&rater1)?;
    for (label, text) in [
        ("model", &model_text),
        ("split", &split_text),
        ("features", &features_text),
        ("ratings", &ratings_text),
    ] {
        manifest
            .inputs
            .insert(label.into(), sha256_hex(text.as_bytes()));
    }

    let mut rows = Vec::new();
    for id in split.ids(Split::Test) {
        let (Some(f), Some(&r1)) = (features.get(id), rater1_totals.get(id)) else {
            notices.push(format!(
                "test scan {id} lacks features or a rating; excluded"
            ));
            continue;
        };
        rows.push(Row {
            id: id.to_string(),
            prediction: predict_gca(&model, f)?,
            rater1: r1,
        });
    }
    if rows.is_empty() {
        return Err(usage("no test-split scan has both features and a rating"));
    }
    let paired = |a: &str, b: &str, v: Vec<(String, f64, f64)>| PairedScores::new(a, b, v);
    let main = paired(
        "tool",
        &rater1_id,
        rows.iter()
            .map(|r| (r.id.clone(), r.prediction.raw, r.rater1))
            .collect(),
    )?;
    let agreement = agreement_report(&main)?;

    let mut out = OutDir::create(&ctx.out)?;

    // Second rater on the scans both raters and the tool cover.
    let mut second = None;
    if let Some(p) = inp.ratings2 {
        let text = read_text(p)?;
        manifest
            .inputs
            .insert("ratings2".into(), sha256_hex(text.as_bytes()));
        let sheet = parse_rating_csv(&text).map_err(|e| usage(format!("ratings2: {e}")))?;
        let r2 = select_ratings(sheet, None, "ratings2")?;
        let r2_id = r2
            .values()
            .next()
            .map(|r| r.rater_id.clone())
            .unwrap_or_default();
        let r2_totals = totals(&r2)?;
        let trio: Vec<(&Row, f64)> = rows
            .iter()
            .filter_map(|r| r2_totals.get(&r.id).map(|&t| (r, t)))
            .collect();
        if trio.len() < 2 {
            notices.push(format!(
                "second rater covers {} test scans; need >= 2, comparison skipped",
                trio.len()
            ));
        } else {
            let tool: Vec<(String, f64)> = trio
                .iter()
                .map(|(r, _)| (r.id.clone(), r.prediction.raw))
                .collect();
            let a: Vec<f64> = trio.iter().map(|(r, _)| r.prediction.raw).collect();
            let b: Vec<f64> = trio.iter().map(|(r, _)| r.rater1).collect();
            let c: Vec<f64> = trio.iter().map(|p| p.1).collect();
            let zip = |x: &[f64], y: &[f64]| -> Vec<(String, f64, f64)> {
                tool.iter()
                    .zip(x.iter().zip(y))
                    .map(|((id, _), (&p, &q))| (id.clone(), p, q))
                    .collect()
            };
            let mut pt = BTreeMap::new();
            for (name, x, y) in [
                ("tool_rater1", &a, &b),
                ("tool_rater2", &a, &c),
                ("rater1_rater2", &b, &c),
            ] {
                pt.insert(
                    name.to_string(),
                    paired_t(x, y)
                        .map_err(|e| notices.push(format!("paired t {name} skipped: {e}")))
                        .ok(),
                );
            }
            let subjects: Vec<Vec<f64>> = (0..a.len()).map(|i| vec![a[i], b[i], c[i]]).collect();
            let anova = rm_anova(&subjects)
                .map_err(|e| notices.push(format!("repeated-measures ANOVA skipped: {e}")))
                .ok();
            second = Some(SecondRater {
                rater: r2_id.clone(),
                n: trio.len(),
                tool_vs_rater1: agreement_report(&paired("tool", &rater1_id, zip(&a, &b))?)?,
                tool_vs_rater2: agreement_report(&paired("tool", &r2_id, zip(&a, &c))?)?,
                rater1_vs_rater2: agreement_report(&paired(&rater1_id, &r2_id, zip(&b, &c))?)?,
                anova,
                paired_t: pt,
            });
        }
    }

    // Covariates.
    let mut covariates = Vec::new();
    let mut cohort_rows: Vec<(&Row, CohortRecord)> = Vec::new();
    match inp.cohort {
        Some(p) => {
            let text = read_text(p)?;
            manifest
                .inputs
                .insert("cohort".into(), sha256_hex(text.as_bytes()));
            let records =
                crate::io::parse_cohort_csv(&text).map_err(|e| usage(format!("cohort: {e}")))?;
            let by_id: BTreeMap<&str, &CohortRecord> =
                records.iter().map(|r| (r.scan_id.as_str(), r)).collect();
            cohort_rows = rows
                .iter()
                .filter_map(|r| by_id.get(r.id.as_str()).map(|c| (r, (*c).clone())))
                .collect();
            if cohort_rows.len() < rows.len() {
                notices.push(format!(
                    "{} test scans have no cohort record",
                    rows.len() - cohort_rows.len()
                ));
            }
            let tool: Vec<(f64, &CohortRecord)> = cohort_rows
                .iter()
                .map(|(r, c)| (r.prediction.raw, c))
                .collect();
            let rater: Vec<(f64, &CohortRecord)> =
                cohort_rows.iter().map(|(r, c)| (r.rater1, c)).collect();
            covariate_tests("tool", &tool, &mut covariates, &mut notices);
            covariate_tests(&rater1_id, &rater, &mut covariates, &mut notices);
        }
        None => notices.push("no cohort file: age and cognition analyses skipped".into()),
    }

    // Tables.
    let mut pred = Table::new(&[
        "scan_id",
        "reference_total",
        "predicted_raw",
        "predicted_total",
        "reference_severity",
        "predicted_severity",
        "signed_error",
    ]);
    for r in &rows {
        let ref_sev = ctgca::gca::classify_severity(r.rater1.round() as i64)?;
        pred.row([
            r.id.clone(),
            (r.rater1 as i64).to_string(),
            real(r.prediction.raw),
            r.prediction.total.to_string(),
            ref_sev.label().to_string(),
            r.prediction.severity.label().to_string(),
            real(r.prediction.raw - r.rater1),
        ]);
    }
    out.write("predictions.csv", &pred.finish())?;

    let mut agr = Table::new(&AGREEMENT_HEADER);
    agreement_row(&mut agr, &agreement);
    if let Some(s) = &second {
        agreement_row(&mut agr, &s.tool_vs_rater1);
        agreement_row(&mut agr, &s.tool_vs_rater2);
        agreement_row(&mut agr, &s.rater1_vs_rater2);
    }
    out.write("agreement.csv", &agr.finish())?;

    if let Some(s) = &second {
        let mut t = Table::new(&["test", "statistic", "df1", "df2", "p"]);
        if let Some(a) = &s.anova {
            t.row([
                "rm_anova".into(),
                real(a.f),
                a.df1.to_string(),
                a.df2.to_string(),
                real(a.p),
            ]);
        }
        for (name, v) in &s.paired_t {
            if let Some(v) = v {
                t.row([
                    format!("paired_t_{name}"),
                    real(v.t),
                    v.df.to_string(),
                    String::new(),
                    real(v.p),
                ]);
            }
        }
        out.write("rater_comparison.csv", &t.finish())?;
    }

    let mut cov = Table::new(&[
        "analysis",
        "score",
        "n",
        "statistic",
        "value",
        "df",
        "p",
        "groups",
    ]);
    for c in &covariates {
        let groups = c
            .groups
            .iter()
            .map(|g| format!("{}:n={}:median={}", g.label, g.n, opt_real(g.median)))
            .collect::<Vec<_>>()
            .join(";");
        cov.row([
            c.analysis.clone(),
            c.score.clone(),
            c.n.to_string(),
            c.statistic.clone(),
            real(c.value),
            c.df.map_or(String::new(), |d| d.to_string()),
            real(c.p),
            groups,
        ]);
    }
    out.write("covariates.csv", &cov.finish())?;

    // Figures, each with the numbers behind it.
    let all_totals: Vec<i64> = rater1_totals.values().map(|&t| t as i64).collect();
    let bins = integer_histogram(&all_totals, 0, MAX_TOTAL as i64);
    out.write(
        "figures/fig1b_score_histogram.svg",
        svg::histogram(
            &format!("GCA totals, {rater1_id} (all rated scans)"),
            "GCA total",
            &bins,
        )
        .as_bytes(),
    )?;
    out.write(
        "figures/fig1b_score_histogram.csv",
        &histogram_csv("total", &bins),
    )?;

    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.rater1, r.prediction.raw)).collect();
    out.write(
        "figures/fig2_scatter.svg",
        svg::scatter(
            "Predicted vs rated GCA (test split)",
            &format!("{rater1_id} total"),
            "tool prediction",
            &[Series {
                label: "scan",
                points: &pts,
                colour: BLUE,
            }],
            &[RefLine {
                label: "identity",
                from: (0.0, 0.0),
                to: (MAX_TOTAL as f64, MAX_TOTAL as f64),
                colour: GREY,
                dashed: true,
            }],
        )
        .as_bytes(),
    )?;
    let mut t = Table::new(&["scan_id", "reference", "predicted"]);
    for r in &rows {
        t.row([r.id.clone(), real(r.rater1), real(r.prediction.raw)]);
    }
    out.write("figures/fig2_scatter.csv", &t.finish())?;

    let ba = &agreement.bland_altman;
    let ba_pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| {
            (
                (r.prediction.raw + r.rater1) / 2.0,
                r.prediction.raw - r.rater1,
            )
        })
        .collect();
    let (xlo, xhi) = ba_pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.0), b.max(p.0))
        });
    let hline = |label, y, colour, dashed| RefLine {
        label,
        from: (xlo - 1.0, y),
        to: (xhi + 1.0, y),
        colour,
        dashed,
    };
    out.write(
        "figures/fig3_bland_altman.svg",
        svg::scatter(
            "Bland-Altman: tool minus rater",
            "mean of tool and rater",
            "difference (tool - rater)",
            &[Series {
                label: "scan",
                points: &ba_pts,
                colour: BLUE,
            }],
            &[
                hline("mean difference", ba.mean_diff, RED, false),
                hline("limits of agreement", ba.loa_low, GREY, true),
                hline("", ba.loa_high, GREY, true),
            ],
        )
        .as_bytes(),
    )?;
    let mut t = Table::new(&[
        "scan_id",
        "mean",
        "difference",
        "mean_diff",
        "loa_low",
        "loa_high",
    ]);
    for (r, p) in rows.iter().zip(&ba_pts) {
        t.row([
            r.id.clone(),
            real(p.0),
            real(p.1),
            real(ba.mean_diff),
            real(ba.loa_low),
            real(ba.loa_high),
        ]);
    }
    out.write("figures/fig3_bland_altman.csv", &t.finish())?;

    let labels: Vec<&str> = SeverityClass::ALL.iter().map(|c| c.label()).collect();
    let norm: Vec<Vec<Option<f64>>> = agreement
        .confusion_normalized
        .iter()
        .map(|row| match row {
            Some(r) => r.iter().map(|&v| Some(v)).collect(),
            None => vec![None; 3],
        })
        .collect();
    out.write(
        "figures/fig4_confusion.svg",
        svg::heatmap(
            "Severity confusion (row-normalised)",
            "tool severity",
            &format!("{rater1_id} severity"),
            &labels,
            &norm,
        )
        .as_bytes(),
    )?;
    let mut t = Table::new(&["reference", "predicted", "count", "row_fraction"]);
    for (i, rc) in SeverityClass::ALL.iter().enumerate() {
        for (j, pc) in SeverityClass::ALL.iter().enumerate() {
            t.row([
                rc.label().to_string(),
                pc.label().to_string(),
                agreement.confusion.counts[i][j].to_string(),
                opt_real(norm[i][j]),
            ]);
        }
    }
    out.write("figures/fig4_confusion.csv", &t.finish())?;

    if !cohort_rows.is_empty() {
        let tool_age: Vec<(f64, f64)> = cohort_rows
            .iter()
            .map(|(r, c)| (c.age, r.prediction.raw))
            .collect();
        let rater_age: Vec<(f64, f64)> =
            cohort_rows.iter().map(|(r, c)| (c.age, r.rater1)).collect();
        out.write(
            "figures/fig5_age_scatter.svg",
            svg::scatter(
                "GCA vs age (test split)",
                "age (years)",
                "GCA total",
                &[
                    Series {
                        label: "tool",
                        points: &tool_age,
                        colour: BLUE,
                    },
                    Series {
                        label: &rater1_id,
                        points: &rater_age,
                        colour: ORANGE,
                    },
                ],
                &[],
            )
            .as_bytes(),
        )?;
        let mut t = Table::new(&[
            "scan_id",
            "age",
            "age_band",
            "tool",
            "rater",
            "amt_score",
            "amt_impaired",
        ]);
        for (r, c) in &cohort_rows {
            t.row([
                r.id.clone(),
                real(c.age),
                age_band(c.age).map_or("NA".to_string(), |b| AGE_BANDS[b].to_string()),
                real(r.prediction.raw),
                real(r.rater1),
                c.amt_score.map_or("NA".to_string(), |a| a.to_string()),
                c.amt_impaired()
                    .map_or("NA".to_string(), |i| u8::from(i).to_string()),
            ]);
        }
        let covariate_table = t.finish();
        out.write("figures/fig5_age_scatter.csv", &covariate_table)?;

        let mut groups = Vec::new();
        for (b, label) in AGE_BANDS.iter().enumerate() {
            let sel = |f: fn(&Row) -> f64| -> Vec<f64> {
                cohort_rows
                    .iter()
                    .filter(|(_, c)| age_band(c.age) == Some(b))
                    .map(|(r, _)| f(r))
                    .collect()
            };
            groups.push((format!("{label} tool"), sel(|r| r.prediction.raw)));
            groups.push((format!("{label} rater"), sel(|r| r.rater1)));
        }
        out.write(
            "figures/fig5_age_box.svg",
            svg::box_plot(
                "GCA by age band",
                "age band and source",
                "GCA total",
                &groups,
            )
            .as_bytes(),
        )?;
        out.write("figures/fig5_age_box.csv", &box_csv(&groups))?;

        let with_amt: Vec<&(&Row, CohortRecord)> = cohort_rows
            .iter()
            .filter(|(_, c)| c.amt_score.is_some())
            .collect();
        if with_amt.is_empty() {
            notices.push("no AMT scores: cognition figures skipped".into());
        } else {
            let tool_amt: Vec<(f64, f64)> = with_amt
                .iter()
                .map(|(r, c)| (c.amt_score.unwrap() as f64, r.prediction.raw))
                .collect();
            let rater_amt: Vec<(f64, f64)> = with_amt
                .iter()
                .map(|(r, c)| (c.amt_score.unwrap() as f64, r.rater1))
                .collect();
            out.write(
                "figures/fig6_cognition_scatter.svg",
                svg::scatter(
                    "GCA vs AMT score (test split)",
                    "AMT score",
                    "GCA total",
                    &[
                        Series {
                            label: "tool",
                            points: &tool_amt,
                            colour: BLUE,
                        },
                        Series {
                            label: &rater1_id,
                            points: &rater_amt,
                            colour: ORANGE,
                        },
                    ],
                    &[],
                )
                .as_bytes(),
            )?;
            out.write("figures/fig6_cognition_scatter.csv", &covariate_table)?;
            let pick = |imp: bool, f: fn(&Row) -> f64| -> Vec<f64> {
                with_amt
                    .iter()
                    .filter(|(_, c)| c.amt_impaired() == Some(imp))
                    .map(|(r, _)| f(r))
                    .collect()
            };
            let groups = vec![
                ("AMT<9 tool".to_string(), pick(true, |r| r.prediction.raw)),
                ("AMT<9 rater".to_string(), pick(true, |r| r.rater1)),
                ("AMT>=9 tool".to_string(), pick(false, |r| r.prediction.raw)),
                ("AMT>=9 rater".to_string(), pick(false, |r| r.rater1)),
            ];
            out.write(
                "figures/fig6_cognition_box.svg",
                svg::box_plot(
                    "GCA by cognitive status",
                    "group and source",
                    "GCA total",
                    &groups,
                )
                .as_bytes(),
            )?;
            out.write("figures/fig6_cognition_box.csv", &box_csv(&groups))?;
        }
    }

    let errors: Vec<i64> = rows
        .iter()
        .map(|r| r.prediction.total as i64 - r.rater1 as i64)
        .collect();
    let lo = errors.iter().copied().min().unwrap_or(0).min(-5);
    let hi = errors.iter().copied().max().unwrap_or(0).max(5);
    let bins = integer_histogram(&errors, lo, hi);
    out.write(
        "figures/suppl_fig1c_error_histogram.svg",
        svg::histogram(
            "Prediction error (test split)",
            "predicted total - rated total",
            &bins,
        )
        .as_bytes(),
    )?;
    out.write(
        "figures/suppl_fig1c_error_histogram.csv",
        &histogram_csv("error", &bins),
    )?;

    let report = Report {
        model_mode: model.mode.label().to_string(),
        model_lambda: model.lambda,
        rater: rater1_id,
        n_test: rows.len(),
        agreement,
        second_rater: second,
        covariates,
        notices: notices.clone(),
    };
    out.write("report.json", to_report_json(&report)?.as_bytes())?;

    for n in &notices {
        eprintln!("notice: {n}");
    }
    manifest.notices = notices;
    manifest
        .stage_seconds
        .insert("total".into(), elapsed(start));
    finish(out, manifest)
}

fn box_csv(groups: &[(String, Vec<f64>)]) -> Vec<u8> {
    let mut t = Table::new(&["group", "n", "q1", "median", "q3"]);
    for (label, v) in groups {
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        let q = |p| {
            if s.is_empty() {
                None
            } else {
                Some(svg::quantile(&s, p))
            }
        };
        t.row([
            label.clone(),
            s.len().to_string(),
            opt_real(q(0.25)),
            opt_real(q(0.5)),
            opt_real(q(0.75)),
        ]);
    }
    t.finish()
}
