use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use ctgca::predictor::{extract_features, write_features_csv, FeatureVector};
use ctgca::preprocess::{
    extract_brain, register_affine, to_template_space, RegistrationConfig, Template,
};
use ctgca::volume::affine::TransformRecord;
use ctgca::volume::nifti::read_nifti;
use rayon::prelude::*;
use serde::Serialize;

use super::{elapsed, finish, Context};
use crate::io::{read_bytes, sha256_hex, OutDir, Table};
use crate::manifest::RunManifest;
use crate::{runtime, usage, CliResult};

#[derive(Serialize)]
struct TransformFile {
    scan_id: String,
    /// Maps scan world coordinates onto template world coordinates.
    transform: TransformRecord,
    final_cost: Option<f64>,
    evaluations: usize,
}

struct ScanOk {
    features: FeatureVector,
    transform: TransformFile,
    seconds: BTreeMap<String, f64>,
}

struct ScanErr {
    stage: &'static str,
    message: String,
}

fn process(
    path: &Path,
    scan_id: &str,
    tmpl: &Template,
    cfg: &RegistrationConfig,
) -> Result<ScanOk, ScanErr> {
    let fail = |stage: &'static str| {
        move |e: ctgca::Error| ScanErr {
            stage,
            message: e.to_string(),
        }
    };
    let mut seconds = BTreeMap::new();
    let mut t = Instant::now();
    let mut lap = |name: &str, t: &mut Instant| {
        seconds.insert(name.to_string(), elapsed(*t));
        *t = Instant::now();
    };
    let bytes = std::fs::read(path).map_err(|e| ScanErr {
        stage: "read",
        message: e.to_string(),
    })?;
    let volume = read_nifti(&bytes).map_err(fail("read"))?;
    lap("read", &mut t);
    let (_, brain) = extract_brain(&volume).map_err(fail("extract_brain"))?;
    lap("extract_brain", &mut t);
    let reg = register_affine(&brain, tmpl, cfg).map_err(fail("register"))?;
    lap("register", &mut t);
    let aligned = to_template_space(&brain, &reg.transform, tmpl).map_err(fail("resample"))?;
    lap("resample", &mut t);
    let features = extract_features(&aligned, tmpl).map_err(fail("features"))?;
    lap("features", &mut t);
    let total = seconds.values().sum();
    seconds.insert("total".into(), total);
    Ok(ScanOk {
        features,
        transform: TransformFile {
            scan_id: scan_id.to_string(),
            transform: TransformRecord::from(&reg.transform),
            final_cost: reg.trace.last().map(|p| p.cost),
            evaluations: reg.evaluations,
        },
        seconds,
    })
}

pub fn run(ctx: &Context, scans: &Path, template: Option<&Path>) -> CliResult<()> {
    let cfg: RegistrationConfig = ctx.config_or(RegistrationConfig::default)?;
    cfg.validate().map_err(usage)?;
    let start = Instant::now();

    let mut inputs = BTreeMap::new();
    let custom;
    let tmpl = match template {
        Some(p) => {
            let bytes = read_bytes(p)?;
            inputs.insert("template".to_string(), sha256_hex(&bytes));
            let v = read_nifti(&bytes).map_err(|e| usage(format!("template: {e}")))?;
            custom = Template::with_volume(v).map_err(|e| usage(format!("template: {e}")))?;
            &custom
        }
        None => Template::canonical(),
    };

    let listing = std::fs::read_dir(scans)
        .map_err(|e| usage(format!("cannot list {}: {e}", scans.display())))?;
    let mut paths = Vec::new();
    for entry in listing {
        let path = entry.map_err(runtime)?.path();
        if path.extension().is_some_and(|e| e == "nii") {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .map(str::to_string);
            let id = id.ok_or_else(|| usage(format!("non UTF-8 file name {}", path.display())))?;
            paths.push((id, path));
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(usage(format!("no .nii files in {}", scans.display())));
    }
    for (id, path) in &paths {
        let bytes = std::fs::read(path).map_err(runtime)?;
        inputs.insert(format!("scans/{id}.nii"), sha256_hex(&bytes));
    }

    let results: Vec<Result<ScanOk, ScanErr>> = ctx.pool.install(|| {
        paths
            .par_iter()
            .map(|(id, p)| process(p, id, tmpl, &cfg))
            .collect()
    });

    let mut out = OutDir::create(&ctx.out)?;
    let config = serde_json::to_value(&cfg).map_err(runtime)?;
    let mut manifest = RunManifest::new("pipeline", ctx.seed, config);
    manifest.inputs = inputs;

    let mut rows = Vec::new();
    let mut failures = Table::new(&["scan_id", "stage", "error"]);
    let mut n_failed = 0;
    for ((id, _), r) in paths.iter().zip(results) {
        match r {
            Ok(ok) => {
                out.write_json(&format!("transforms/{id}.json"), &ok.transform)?;
                manifest.scan_seconds.insert(id.clone(), ok.seconds);
                rows.push((id.clone(), ok.features));
            }
            Err(e) => {
                n_failed += 1;
                eprintln!("{id}: {} failed: {}", e.stage, e.message);
                failures.row([id.as_str(), e.stage, e.message.as_str()]);
            }
        }
    }
    out.write("failures.csv", &failures.finish())?;
    if n_failed > 0 {
        manifest.notices.push(format!(
            "{n_failed} of {} scans failed; see failures.csv",
            paths.len()
        ));
    }
    if rows.is_empty() {
        finish(out, manifest)?;
        return Err(runtime(format!("all {} scans failed", paths.len())));
    }
    out.write("features.csv", write_features_csv(&rows)?.as_bytes())?;
    manifest
        .stage_seconds
        .insert("total".into(), elapsed(start));
    finish(out, manifest)
}
