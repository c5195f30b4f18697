//! Synthetic annotated utterances and a simulated ASR n-best channel.

mod channel;
mod generate;
pub mod inventory;
mod io;
mod oppcost;
mod split;

pub use channel::{corrupt_to_nbest, ConfusionTable, NoiseModel};
pub use generate::{generate_gold, CorpusConfig, DomainSpec, IntentSpec};
pub use io::{read_jsonl, record_from_json_line, record_to_json_line, write_jsonl};
pub use oppcost::{opportunity_cost, OppCostTable};
pub use split::{build_and_split, build_records, Splits};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("config error: {0}")]
    Config(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("no record has an exact match at rank 1; opportunity cost is undefined (division by zero)")]
    NoExactMatches,
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Json {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Half-open token span `[start, end)` carrying a slot label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotSpan {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SemanticAnnotation {
    pub domain: String,
    pub intent: String,
    pub slots: Vec<SlotSpan>,
}

impl SemanticAnnotation {
    /// Checks spans are non-empty, in bounds, sorted and non-overlapping.
    pub fn validate(&self, len: usize) -> Result<()> {
        let mut last_end = 0;
        for s in &self.slots {
            if s.start >= s.end || s.end > len || s.start < last_end {
                return Err(CorpusError::Invalid(format!(
                    "slot {} [{}, {}) invalid for {len} tokens",
                    s.label, s.start, s.end
                )));
            }
            last_end = s.end;
        }
        Ok(())
    }

    /// `(label, value)` pairs with values joined by single spaces.
    pub fn slot_values(&self, tokens: &[String]) -> Vec<(String, String)> {
        self.slots
            .iter()
            .map(|s| (s.label.clone(), tokens[s.start..s.end].join(" ")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldUtterance {
    pub tokens: Vec<String>,
    pub annotation: SemanticAnnotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<String>,
    pub confidence: f64,
}

/// Ranked hypotheses, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct NBestList {
    hypotheses: Vec<Hypothesis>,
}

pub const MAX_HYPOTHESES: usize = 5;

impl NBestList {
    pub fn new(hypotheses: Vec<Hypothesis>) -> Result<Self> {
        if hypotheses.is_empty() || hypotheses.len() > MAX_HYPOTHESES {
            return Err(CorpusError::Invalid(format!(
                "{} hypotheses (expected 1..={MAX_HYPOTHESES})",
                hypotheses.len()
            )));
        }
        for (i, h) in hypotheses.iter().enumerate() {
            if h.tokens.is_empty() {
                return Err(CorpusError::Invalid(format!("hypothesis {i} is empty")));
            }
            if !(h.confidence.is_finite() && h.confidence > 0.0 && h.confidence <= 1.0) {
                return Err(CorpusError::Invalid(format!(
                    "hypothesis {i} confidence {}",
                    h.confidence
                )));
            }
            if i > 0 && h.confidence > hypotheses[i - 1].confidence {
                return Err(CorpusError::Invalid(format!("confidence rises at rank {i}")));
            }
            if hypotheses[..i].iter().any(|o| o.tokens == h.tokens) {
                return Err(CorpusError::Invalid(format!(
                    "hypothesis {i} duplicates an earlier one"
                )));
            }
        }
        Ok(NBestList { hypotheses })
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn best(&self) -> &Hypothesis {
        &self.hypotheses[0]
    }

    pub fn token_lists(&self) -> Vec<Vec<String>> {
        self.hypotheses.iter().map(|h| h.tokens.clone()).collect()
    }

    pub fn mean_confidence(&self) -> f64 {
        self.hypotheses.iter().map(|h| h.confidence).sum::<f64>() / self.len() as f64
    }

    /// Rank whose tokens equal `tokens`, if any.
    pub fn rank_of(&self, tokens: &[String]) -> Option<usize> {
        self.hypotheses.iter().position(|h| h.tokens == tokens)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NBestRecord {
    pub id: String,
    pub gold: GoldUtterance,
    pub nbest: NBestList,
    is_mismatched: bool,
}

impl NBestRecord {
    pub fn new(id: impl Into<String>, gold: GoldUtterance, nbest: NBestList) -> Result<Self> {
        if gold.tokens.is_empty() {
            return Err(CorpusError::Invalid("empty gold utterance".into()));
        }
        gold.annotation.validate(gold.tokens.len())?;
        let is_mismatched = nbest.best().tokens != gold.tokens;
        Ok(NBestRecord {
            id: id.into(),
            gold,
            nbest,
            is_mismatched,
        })
    }

    /// True when the rank-0 hypothesis differs from the transcription.
    pub fn is_mismatched(&self) -> bool {
        self.is_mismatched
    }

    pub fn domain(&self) -> &str {
        &self.gold.annotation.domain
    }

    pub fn intent(&self) -> &str {
        &self.gold.annotation.intent
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}
