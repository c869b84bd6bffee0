use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use ctgca::gca::{impute_homologous, parse_rating_csv, GcaRating};
use ctgca::predictor::{parse_features_csv, train, FeatureVector, TrainConfig};

use super::{elapsed, finish, Context};
use crate::io::{read_text, real, sha256_hex, OutDir, Table};
use crate::manifest::RunManifest;
use crate::{runtime, usage, CliResult};

/// Ratings keyed by scan id for one rater, with homologous imputation
/// applied. Sheets holding several raters need an explicit `rater`.
pub fn select_ratings(
    all: Vec<GcaRating>,
    rater: Option<&str>,
    what: &str,
) -> CliResult<BTreeMap<String, GcaRating>> {
    let raters: BTreeSet<&str> = all.iter().map(|r| r.rater_id.as_str()).collect();
    let chosen = match rater {
        Some(r) if raters.contains(r) => r.to_string(),
        Some(r) => {
            return Err(usage(format!(
                "{what}: no rows for rater `{r}` (found {raters:?})"
            )))
        }
        None if raters.len() <= 1 => raters
            .iter()
            .next()
            .map(|s| s.to_string())
            .unwrap_or_default(),
        None => {
            return Err(usage(format!(
                "{what}: several raters {raters:?}; pick one with --rater"
            )))
        }
    };
    let mut out = BTreeMap::new();
    for r in all.into_iter().filter(|r| r.rater_id == chosen) {
        let r =
            impute_homologous(&r).map_err(|e| usage(format!("{what}: scan {}: {e}", r.scan_id)))?;
        out.insert(r.scan_id.clone(), r);
    }
    Ok(out)
}

pub fn run(
    ctx: &Context,
    features: &Path,
    ratings: &Path,
    lambdas: Option<&[f64]>,
    rater: Option<&str>,
) -> CliResult<()> {
    let mut cfg: TrainConfig = ctx.config_or(TrainConfig::default)?;
    if let Some(l) = lambdas {
        cfg.lambdas = l.to_vec();
    }
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(usage)?;
    let start = Instant::now();

    let features_text = read_text(features)?;
    let ratings_text = read_text(ratings)?;
    let rows = parse_features_csv(&features_text).map_err(|e| usage(format!("features: {e}")))?;
    let sheet = parse_rating_csv(&ratings_text).map_err(|e| usage(format!("ratings: {e}")))?;
    let by_id = select_ratings(sheet, rater, "ratings")?;

    let missing: Vec<&str> = rows
        .iter()
        .map(|(id, _)| id.as_str())
        .filter(|id| !by_id.contains_key(*id))
        .collect();
    if !missing.is_empty() {
        return Err(usage(format!(
            "scans without ratings: {}",
            missing.join(", ")
        )));
    }
    let feature_ids: BTreeSet<&str> = rows.iter().map(|(id, _)| id.as_str()).collect();
    let unused: Vec<&str> = by_id
        .keys()
        .map(String::as_str)
        .filter(|id| !feature_ids.contains(id))
        .collect();

    let dataset: Vec<(FeatureVector, GcaRating)> = rows
        .iter()
        .map(|(id, f)| (f.clone(), by_id[id].clone()))
        .collect();
    let outcome = train(&dataset, &cfg)?;

    let mut out = OutDir::create(&ctx.out)?;
    out.write("model.json", outcome.model.to_json()?.as_bytes())?;
    out.write_json("split.json", &outcome.split)?;
    let mut table = Table::new(&["mode", "lambda", "optimisation_mae", "selected"]);
    for s in &outcome.selection {
        let selected = s.mode == outcome.model.mode && s.lambda == outcome.model.lambda;
        table.row([
            s.mode.label().to_string(),
            s.lambda.to_string(),
            real(s.optimisation_mae),
            u8::from(selected).to_string(),
        ]);
    }
    out.write("selection.csv", &table.finish())?;

    let config = serde_json::to_value(&cfg).map_err(runtime)?;
    let mut manifest = RunManifest::new("train", Some(cfg.seed), config);
    manifest
        .inputs
        .insert("features".into(), sha256_hex(features_text.as_bytes()));
    manifest
        .inputs
        .insert("ratings".into(), sha256_hex(ratings_text.as_bytes()));
    if !unused.is_empty() {
        manifest.notices.push(format!(
            "{} rated scans have no features and were not used: {}",
            unused.len(),
            unused.join(", ")
        ));
    }
    manifest
        .stage_seconds
        .insert("total".into(), elapsed(start));
    finish(out, manifest)
}
