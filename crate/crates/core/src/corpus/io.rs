use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, GoldUtterance, Hypothesis, NBestList, NBestRecord, Result, SemanticAnnotation, SlotSpan};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    id: String,
    domain: String,
    intent: String,
    slots: Vec<SlotSpan>,
    gold_tokens: Vec<String>,
    nbest: Vec<Hypothesis>,
}

pub fn record_to_json_line(r: &NBestRecord) -> String {
    let line = Line {
        id: r.id.clone(),
        domain: r.gold.annotation.domain.clone(),
        intent: r.gold.annotation.intent.clone(),
        slots: r.gold.annotation.slots.clone(),
        gold_tokens: r.gold.tokens.clone(),
        nbest: r.nbest.hypotheses().to_vec(),
    };
    serde_json::to_string(&line).expect("record serializes")
}

pub fn record_from_json_line(text: &str) -> std::result::Result<NBestRecord, serde_json::Error> {
    let line: Line = serde_json::from_str(text)?;
    let invalid = |e: CorpusError| <serde_json::Error as serde::de::Error>::custom(e.to_string());
    let gold = GoldUtterance {
        tokens: line.gold_tokens,
        annotation: SemanticAnnotation {
            domain: line.domain,
            intent: line.intent,
            slots: line.slots,
        },
    };
    let nbest = NBestList::new(line.nbest).map_err(invalid)?;
    NBestRecord::new(line.id, gold, nbest).map_err(invalid)
}

pub fn write_jsonl(path: &Path, records: &[NBestRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&record_to_json_line(r));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_jsonl(path: &Path) -> Result<Vec<NBestRecord>> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            record_from_json_line(l).map_err(|source| CorpusError::Json {
                path: path.display().to_string(),
                line: i + 1,
                source,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_names_and_order_are_fixed() {
        let text = r#"{"id":"r1","domain":"Music","intent":"PlaySongIntent","slots":[{"label":"ArtistName","start":1,"end":2}],"gold_tokens":["play","madonna"],"nbest":[{"tokens":["ply","madonna"],"confidence":1.0},{"tokens":["play","madonna"],"confidence":0.6}]}"#;
        let r = record_from_json_line(text).unwrap();
        assert!(r.is_mismatched());
        assert_eq!(r.nbest.rank_of(&r.gold.tokens), Some(1));
        assert_eq!(record_to_json_line(&r), text);
    }

    #[test]
    fn invariant_violations_are_rejected() {
        let rising = r#"{"id":"r","domain":"D","intent":"I","slots":[],"gold_tokens":["a"],"nbest":[{"tokens":["a"],"confidence":0.5},{"tokens":["b"],"confidence":0.9}]}"#;
        assert!(record_from_json_line(rising).is_err());
        let span = r#"{"id":"r","domain":"D","intent":"I","slots":[{"label":"S","start":0,"end":3}],"gold_tokens":["a"],"nbest":[{"tokens":["a"],"confidence":1.0}]}"#;
        assert!(record_from_json_line(span).is_err());
        let extra = r#"{"id":"r","domain":"D","intent":"I","slots":[],"gold_tokens":["a"],"nbest":[{"tokens":["a"],"confidence":1.0}],"x":1}"#;
        assert!(record_from_json_line(extra).is_err());
    }
}
