use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ctgca::gca::CohortRecord;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{runtime, usage, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|_| usage(format!("{} is not UTF-8 text", path.display())))
}

/// Output directory that remembers the hash of everything written to it.
pub struct OutDir {
    root: PathBuf,
    written: BTreeMap<String, String>,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root)
            .map_err(|e| runtime(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| runtime(format!("cannot create {}: {e}", parent.display())))?;
        }
        fs::write(&path, bytes)
            .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
        self.written.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Record a file written elsewhere (e.g. from a worker thread).
    pub fn record(&mut self, rel: String, hash: String) {
        self.written.insert(rel, hash);
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(runtime)? + "\n";
        self.write(rel, text.as_bytes())
    }

    pub fn into_written(self) -> BTreeMap<String, String> {
        self.written
    }
}

/// Small CSV table built row by row.
pub struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Self { w }
    }

    pub fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(cells).expect("in-memory write");
    }

    pub fn finish(self) -> Vec<u8> {
        self.w.into_inner().expect("in-memory flush")
    }
}

/// Fixed-precision real for tables; `NA` for missing or non-finite values.
pub fn real(x: f64) -> String {
    if x.is_finite() {
        let s = format!("{x:.6}");
        if s == "-0.000000" {
            "0.000000".into()
        } else {
            s
        }
    } else {
        "NA".into()
    }
}

pub fn opt_real(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), real)
}

/// `cohort.csv`: scan_id,cohort,age,sex,amt_score,ocs_tasks_impaired; empty cells for missing values.
pub fn write_cohort_csv(records: &[CohortRecord]) -> ctgca::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| ctgca::Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

pub fn parse_cohort_csv(text: &str) -> ctgca::Result<Vec<CohortRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<CohortRecord>().enumerate() {
        let rec = rec.map_err(|e| ctgca::Error::Input(format!("cohort row {}: {e}", i + 2)))?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}
