use std::collections::{BTreeMap, HashSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Optimisation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub assignment: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn ids(&self, split: Split) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &s)| s == split)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        let count = |s| self.assignment.values().filter(|&&x| x == s).count();
        (count(Split::Train), count(Split::Optimisation), count(Split::Test))
    }

    pub fn get(&self, id: &str) -> Option<Split> {
        self.assignment.get(id).copied()
    }

    /// SHA-256 over `id:split` lines in id order.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (id, s) in &self.assignment {
            let tag = match s {
                Split::Train => "train",
                Split::Optimisation => "optimisation",
                Split::Test => "test",
            };
            h.update(id.as_bytes());
            h.update(b":");
            h.update(tag.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// Optimisation and test sizes are each `round(0.2·n)`; train takes the rest.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let fifth = ((n as f64) * 0.2).round() as usize;
    (n - 2 * fifth, fifth, fifth)
}

/// Uniform in `0..bound` by 128-bit multiply-shift.
fn bounded(rng: &mut ChaCha8Rng, bound: u64) -> u64 {
    ((rng.next_u64() as u128 * bound as u128) >> 64) as u64
}

/// Fisher–Yates shuffle with ChaCha8 seeded from `seed`, then a contiguous
/// train/optimisation/test cut.
pub fn split_dataset(ids: &[String], seed: u64) -> Result<SplitAssignment> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::Input(format!("duplicate scan id `{id}`")));
        }
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        let j = bounded(&mut rng, i as u64 + 1) as usize;
        order.swap(i, j);
    }
    let (n_train, n_opt, _) = split_sizes(ids.len());
    let assignment = order
        .into_iter()
        .enumerate()
        .map(|(pos, idx)| {
            let s = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_opt {
                Split::Optimisation
            } else {
                Split::Test
            };
            (ids[idx].clone(), s)
        })
        .collect();
    Ok(SplitAssignment { seed, assignment })
}
