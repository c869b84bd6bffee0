use std::time::Instant;

use ctgca::gca::write_rating_csv;
use ctgca::phantom::{plan_cohort, write_truth_csv, CohortSpec};
use ctgca::volume::nifti::write_nifti;
use rayon::prelude::*;

use super::{elapsed, finish, Context};
use crate::io::{sha256_hex, write_cohort_csv, OutDir};
use crate::manifest::RunManifest;
use crate::{runtime, usage, CliResult};

pub const SCAN_DIR: &str = "scans";

pub fn run(ctx: &Context, n: Option<usize>) -> CliResult<()> {
    let mut spec = match (&ctx.config, n) {
        (Some(_), Some(_)) => return Err(usage("give either --config or --n, not both")),
        (Some(_), None) => ctx.config_or(|| unreachable!())?,
        (None, Some(n)) => CohortSpec::uniform(n, 0),
        (None, None) => return Err(usage("phantom needs --config <cohort.json> or --n <count>")),
    };
    if let Some(seed) = ctx.seed {
        spec.master_seed = seed;
    }
    spec.validate().map_err(usage)?;

    let start = Instant::now();
    let entries = plan_cohort(&spec)?;
    let mut out = OutDir::create(&ctx.out)?;
    let scan_root = out.root().join(SCAN_DIR);
    std::fs::create_dir_all(&scan_root).map_err(runtime)?;

    let rendered: Vec<CliResult<(String, String)>> = ctx.pool.install(|| {
        entries
            .par_iter()
            .map(|e| {
                let bytes = write_nifti(&e.render()?);
                let rel = format!("{SCAN_DIR}/{}.nii", e.scan_id);
                std::fs::write(out.root().join(&rel), &bytes).map_err(runtime)?;
                Ok((rel, sha256_hex(&bytes)))
            })
            .collect()
    });
    for r in rendered {
        let (rel, hash) = r?;
        out.record(rel, hash);
    }
    let render_s = elapsed(start);

    let ratings: Vec<_> = entries.iter().map(|e| e.rating.clone()).collect();
    let records: Vec<_> = entries.iter().map(|e| e.record.clone()).collect();
    out.write("truth.csv", write_truth_csv(&entries)?.as_bytes())?;
    out.write("ratings.csv", write_rating_csv(&ratings)?.as_bytes())?;
    out.write("cohort.csv", write_cohort_csv(&records)?.as_bytes())?;
    out.write_json("cohort.json", &spec)?;

    let config = serde_json::to_value(&spec).map_err(runtime)?;
    let mut manifest = RunManifest::new("phantom", Some(spec.master_seed), config);
    manifest.stage_seconds.insert("render".into(), render_s);
    manifest
        .stage_seconds
        .insert("total".into(), elapsed(start));
    finish(out, manifest)
}
