use std::path::PathBuf;
use std::time::Instant;

use crate::io::OutDir;
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::{runtime, usage, CliResult};

pub mod phantom;
pub mod pipeline;
pub mod train;
pub mod validate;

pub struct Context<'a> {
    pub out: PathBuf,
    pub seed: Option<u64>,
    /// Raw text of the `--config` file.
    pub config: Option<String>,
    pub pool: &'a rayon::ThreadPool,
}

impl Context<'_> {
    /// Parse the config file, or fall back to the default.
    pub fn config_or<T>(&self, default: impl FnOnce() -> T) -> CliResult<T>
    where
        T: serde::de::DeserializeOwned,
    {
        match &self.config {
            Some(text) => serde_json::from_str(text).map_err(|e| usage(format!("config: {e}"))),
            None => Ok(default()),
        }
    }
}

pub fn elapsed(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

/// Attach the output hashes and write the manifest last.
pub fn finish(out: OutDir, mut manifest: RunManifest) -> CliResult<()> {
    let root = out.root().to_path_buf();
    manifest.outputs = out.into_written();
    let text = serde_json::to_string_pretty(&manifest).map_err(runtime)? + "\n";
    std::fs::write(root.join(MANIFEST_FILE), text).map_err(runtime)
}
