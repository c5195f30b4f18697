use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{corrupt_to_nbest, CorpusError, GoldUtterance, NBestRecord, NoiseModel, Result};
use crate::seed::derive_seed;

const TRAIN_FRACTION: f64 = 0.85;
const CHANNEL_STREAM: u64 = 0x6e_6265_7374;
const SPLIT_STREAM: u64 = 0x73_706c_6974;

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<NBestRecord>,
    pub validation: Vec<NBestRecord>,
    pub test_full: Vec<NBestRecord>,
    pub test_mismatched: Vec<NBestRecord>,
}

impl Splits {
    /// `(file stem, records)` in canonical order.
    pub fn named(&self) -> [(&'static str, &[NBestRecord]); 4] {
        [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test_full", &self.test_full),
            ("test_mismatched", &self.test_mismatched),
        ]
    }
}

/// Runs every utterance through the channel with its own seed, naming
/// records `{prefix}-{index}`.
pub fn build_records(
    golds: Vec<GoldUtterance>,
    noise: &NoiseModel,
    seed: u64,
    prefix: &str,
) -> Result<Vec<NBestRecord>> {
    noise.validate()?;
    golds
        .into_iter()
        .enumerate()
        .map(|(i, gold)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, CHANNEL_STREAM, i as u64));
            let nbest = corrupt_to_nbest(&gold, noise, &mut rng);
            NBestRecord::new(format!("{prefix}-{i:06}"), gold, nbest)
        })
        .collect()
}

/// 85/15 train/validation split within each domain of `pool`; `test_pool`
/// becomes the full test set and its mismatched subset.
pub fn build_and_split(pool: Vec<NBestRecord>, test_pool: Vec<NBestRecord>, seed: u64) -> Result<Splits> {
    let mut ids = BTreeSet::new();
    for r in pool.iter().chain(&test_pool) {
        if !ids.insert(r.id.as_str()) {
            return Err(CorpusError::Split(format!("record id {} appears twice", r.id)));
        }
    }
    let mut by_domain: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in pool.iter().enumerate() {
        by_domain.entry(r.domain()).or_default().push(i);
    }
    let mut in_train = vec![false; pool.len()];
    for (d, (domain, idx)) in by_domain.iter().enumerate() {
        if idx.len() < 2 {
            return Err(CorpusError::Split(format!(
                "domain {domain} has {} record(s); at least 2 are needed",
                idx.len()
            )));
        }
        let n_train = ((idx.len() as f64 * TRAIN_FRACTION).round() as usize).clamp(1, idx.len() - 1);
        let mut shuffled = idx.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SPLIT_STREAM, d as u64));
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..n_train] {
            in_train[i] = true;
        }
    }
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (r, t) in pool.into_iter().zip(in_train) {
        if t {
            train.push(r);
        } else {
            validation.push(r);
        }
    }
    let test_mismatched = test_pool.iter().filter(|r| r.is_mismatched()).cloned().collect();
    Ok(Splits {
        train,
        validation,
        test_full: test_pool,
        test_mismatched,
    })
}
