//! Vocabularies, encoder input layouts and the pointer target language.

mod target;

pub use target::{delinearize, linearize, Parse, PointerPolicy, TargetToken, TargetVocab};

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::corpus::NBestRecord;

pub const PAD: &str = "[PAD]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const UNK: &str = "[UNK]";
pub const EOS: &str = "[EOS]";
pub const PAD_ID: usize = 0;
pub const CLS_ID: usize = 1;
pub const SEP_ID: usize = 2;
pub const UNK_ID: usize = 3;
pub const EOS_ID: usize = 4;
const RESERVED: [&str; 5] = [PAD, CLS, SEP, UNK, EOS];

pub const MAX_SOURCES: usize = 6;
pub const MAX_SOURCE_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("token {token:?} at position {position} cannot be resolved to any source")]
    Resolution { token: String, position: usize },
    #[error("malformed target: {0}")]
    Parse(String),
    #[error("pointer @ptr{row}_{index} is out of range")]
    Range { row: usize, index: usize },
    #[error("vocabulary file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CodecError>;

/// Token/id bijection with the five reserved symbols at ids 0..4.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Reserved symbols followed by `words` in sorted order.
    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let sorted: BTreeSet<&str> = words.into_iter().filter(|w| !RESERVED.contains(w)).collect();
        let tokens: Vec<String> = RESERVED.iter().copied().chain(sorted).map(String::from).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line in id order.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(String::from).collect();
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(CodecError::Format(
                "reserved symbols missing from the first five lines".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || index.insert(t.clone(), i).is_some() {
                return Err(CodecError::Format(format!(
                    "line {}: empty or repeated token {t:?}",
                    i + 1
                )));
            }
        }
        Ok(Vocab { tokens, index })
    }
}

/// Every gold and hypothesis token of the training split.
pub fn build_vocab(train: &[NBestRecord]) -> Vocab {
    let words = train.iter().flat_map(|r| {
        r.gold
            .tokens
            .iter()
            .chain(r.nbest.hypotheses().iter().flat_map(|h| h.tokens.iter()))
            .map(String::as_str)
    });
    Vocab::from_words(words)
}

/// Alternating segment embedding index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentId {
    A = 0,
    B = 1,
}

impl SegmentId {
    pub fn for_rank(rank: usize) -> Self {
        if rank.is_multiple_of(2) {
            SegmentId::A
        } else {
            SegmentId::B
        }
    }
}

/// Encoder input rows. `mask[r][t]` is true for real tokens.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EncodedBatch {
    pub ids: Vec<Vec<usize>>,
    pub segments: Vec<Vec<usize>>,
    pub positions: Vec<Vec<usize>>,
    pub mask: Vec<Vec<bool>>,
    /// Offsets of each hypothesis' [CLS] (summarizer layout).
    pub cls_positions: Vec<usize>,
    /// Token count of each source after truncation (seq2seq layout).
    pub lengths: Vec<usize>,
    /// Indices of inputs that were cut to `MAX_SOURCE_LEN`.
    pub truncated: Vec<usize>,
}

impl EncodedBatch {
    pub fn rows(&self) -> usize {
        self.ids.len()
    }
}

fn clip<'a>(tokens: &'a [String], k: usize, truncated: &mut Vec<usize>) -> &'a [String] {
    if tokens.len() > MAX_SOURCE_LEN {
        truncated.push(k);
        &tokens[..MAX_SOURCE_LEN]
    } else {
        tokens
    }
}

/// One row: `[CLS] h_k [SEP]` for each hypothesis in rank order, with
/// alternating segments and running positions.
pub fn encode_summarizer_input(hypotheses: &[Vec<String>], vocab: &Vocab) -> Result<EncodedBatch> {
    if hypotheses.is_empty() || hypotheses.len() > crate::corpus::MAX_HYPOTHESES {
        return Err(CodecError::Contract(format!(
            "summarizer input needs 1..=5 hypotheses, got {}",
            hypotheses.len()
        )));
    }
    let mut b = EncodedBatch::default();
    let (mut ids, mut segs) = (Vec::new(), Vec::new());
    for (k, h) in hypotheses.iter().enumerate() {
        let h = clip(h, k, &mut b.truncated);
        let seg = SegmentId::for_rank(k) as usize;
        b.cls_positions.push(ids.len());
        ids.push(CLS_ID);
        ids.extend(vocab.encode(h));
        ids.push(SEP_ID);
        segs.resize(ids.len(), seg);
    }
    b.positions.push((0..ids.len()).collect());
    b.mask.push(vec![true; ids.len()]);
    b.ids.push(ids);
    b.segments.push(segs);
    Ok(b)
}

/// One padded row `[CLS] s_i [EOS]` per source.
pub fn encode_s2s_sources(sources: &[Vec<String>], vocab: &Vocab) -> Result<EncodedBatch> {
    if sources.is_empty() || sources.len() > MAX_SOURCES {
        return Err(CodecError::Contract(format!(
            "seq2seq input needs 1..={MAX_SOURCES} sources, got {}",
            sources.len()
        )));
    }
    let mut b = EncodedBatch::default();
    let clipped: Vec<&[String]> = sources
        .iter()
        .enumerate()
        .map(|(i, s)| clip(s, i, &mut b.truncated))
        .collect();
    let width = clipped.iter().map(|s| s.len()).max().unwrap_or(0) + 2;
    for s in clipped {
        let mut row = Vec::with_capacity(width);
        row.push(CLS_ID);
        row.extend(vocab.encode(s));
        row.push(EOS_ID);
        let real = row.len();
        row.resize(width, PAD_ID);
        b.mask.push((0..width).map(|t| t < real).collect());
        b.positions.push((0..width).collect());
        b.segments.push(vec![0; width]);
        b.ids.push(row);
        b.lengths.push(s.len());
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn reserved_ids_and_unknowns() {
        let v = Vocab::from_words(["play", "madonna"]);
        assert_eq!(v.len(), 7);
        assert_eq!(v.id("[CLS]"), 1);
        assert_eq!(v.id("xylophone"), UNK_ID);
        assert_eq!(v, Vocab::from_words(["madonna", "play", "play"]));
        assert_eq!(Vocab::from_text(&v.to_text()).unwrap(), v);
    }

    #[test]
    fn summarizer_segments_alternate() {
        let v = Vocab::from_words(["play", "muse"]);
        let hyps: Vec<_> = ["play muse", "play mu chick", "play news", "play mus", "play my sick"]
            .iter()
            .map(|s| toks(s))
            .collect();
        let b = encode_summarizer_input(&hyps, &v).unwrap();
        let segs: Vec<usize> = b.cls_positions.iter().map(|&p| b.segments[0][p]).collect();
        assert_eq!(segs, vec![0, 1, 0, 1, 0]);
        for &p in &b.cls_positions {
            assert_eq!(b.ids[0][p], CLS_ID);
        }
        assert_eq!(b.ids[0][b.cls_positions[1] - 1], SEP_ID);
        let single = encode_summarizer_input(&hyps[..1], &v).unwrap();
        assert_eq!(single.cls_positions, vec![0]);
        assert!(single.segments[0].iter().all(|&s| s == 0));
    }

    #[test]
    fn s2s_rows_record_lengths() {
        let v = Vocab::from_words(["ply", "madonna", "play", "mad", "owner"]);
        let b = encode_s2s_sources(&[toks("ply madonna"), toks("play mad owner")], &v).unwrap();
        assert_eq!(b.rows(), 2);
        assert_eq!(b.lengths, vec![2, 3]);
        assert_eq!(b.ids[0][3], EOS_ID);
        assert_eq!(b.ids[0][4], PAD_ID);
        assert!(!b.mask[0][4]);
        let back: Vec<&str> = b.ids[1][1..=3].iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(back, ["play", "mad", "owner"]);
        assert!(encode_s2s_sources(&[], &v).is_err());
    }

    #[test]
    fn long_inputs_are_truncated_with_a_note() {
        let v = Vocab::from_words(["a"]);
        let long = vec!["a".to_string(); 20];
        let b = encode_s2s_sources(&[long.clone(), toks("a")], &v).unwrap();
        assert_eq!(b.lengths, vec![MAX_SOURCE_LEN, 1]);
        assert_eq!(b.truncated, vec![0]);
        let s = encode_summarizer_input(&[toks("a"), long], &v).unwrap();
        assert_eq!(s.truncated, vec![1]);
        assert_eq!(s.ids[0].len(), 3 + MAX_SOURCE_LEN + 2);
    }
}
