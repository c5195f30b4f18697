use std::collections::HashMap;

use super::{CodecError, Result, EOS, MAX_SOURCES, MAX_SOURCE_LEN};
use crate::corpus::{SemanticAnnotation, SlotSpan};
use crate::edit::char_distance;

/// Decoded meaning of a target id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetToken {
    Eos,
    IntentOpen(usize),
    IntentClose(usize),
    SlotOpen(usize),
    SlotClose(usize),
    Pointer { source: usize, index: usize },
}

/// `[EOS]`, then `I(`/`)I` per intent, `S(`/`)S` per slot label, then the
/// pointer block `@ptr{i}_{j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVocab {
    intents: Vec<String>,
    slots: Vec<String>,
    max_sources: usize,
    max_source_len: usize,
    intent_index: HashMap<String, usize>,
    slot_index: HashMap<String, usize>,
}

impl TargetVocab {
    pub fn new(intents: Vec<String>, slots: Vec<String>) -> Self {
        Self::with_pointers(intents, slots, MAX_SOURCES, MAX_SOURCE_LEN)
    }

    pub fn with_pointers(intents: Vec<String>, slots: Vec<String>, max_sources: usize, max_source_len: usize) -> Self {
        let intent_index = intents.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let slot_index = slots.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        TargetVocab {
            intents,
            slots,
            max_sources,
            max_source_len,
            intent_index,
            slot_index,
        }
    }

    pub fn intents(&self) -> &[String] {
        &self.intents
    }

    pub fn slots(&self) -> &[String] {
        &self.slots
    }

    pub fn max_sources(&self) -> usize {
        self.max_sources
    }

    pub fn max_source_len(&self) -> usize {
        self.max_source_len
    }

    /// Number of tag ids (everything before the pointer block).
    pub fn tag_count(&self) -> usize {
        1 + 2 * self.intents.len() + 2 * self.slots.len()
    }

    pub fn pointer_count(&self) -> usize {
        self.max_sources * self.max_source_len
    }

    pub fn len(&self) -> usize {
        self.tag_count() + self.pointer_count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn intent_id(&self, name: &str) -> Option<usize> {
        self.intent_index.get(name).copied()
    }

    pub fn slot_id(&self, name: &str) -> Option<usize> {
        self.slot_index.get(name).copied()
    }

    pub fn id(&self, t: TargetToken) -> usize {
        let ni = self.intents.len();
        let s0 = 1 + 2 * ni;
        match t {
            TargetToken::Eos => 0,
            TargetToken::IntentOpen(k) => 1 + 2 * k,
            TargetToken::IntentClose(k) => 2 + 2 * k,
            TargetToken::SlotOpen(k) => s0 + 2 * k,
            TargetToken::SlotClose(k) => s0 + 1 + 2 * k,
            TargetToken::Pointer { source, index } => self.tag_count() + source * self.max_source_len + index,
        }
    }

    pub fn pointer_id(&self, source: usize, index: usize) -> usize {
        self.id(TargetToken::Pointer { source, index })
    }

    pub fn decode(&self, id: usize) -> Option<TargetToken> {
        let ni = self.intents.len();
        let s0 = 1 + 2 * ni;
        let tags = self.tag_count();
        Some(match id {
            0 => TargetToken::Eos,
            i if i < s0 => {
                let k = (i - 1) / 2;
                if (i - 1) % 2 == 0 {
                    TargetToken::IntentOpen(k)
                } else {
                    TargetToken::IntentClose(k)
                }
            }
            i if i < tags => {
                let k = (i - s0) / 2;
                if (i - s0).is_multiple_of(2) {
                    TargetToken::SlotOpen(k)
                } else {
                    TargetToken::SlotClose(k)
                }
            }
            i if i < self.len() => TargetToken::Pointer {
                source: (i - tags) / self.max_source_len,
                index: (i - tags) % self.max_source_len,
            },
            _ => return None,
        })
    }

    pub fn token_string(&self, id: usize) -> String {
        match self.decode(id) {
            Some(TargetToken::Eos) => EOS.to_string(),
            Some(TargetToken::IntentOpen(k)) => format!("{}(", self.intents[k]),
            Some(TargetToken::IntentClose(k)) => format!("){}", self.intents[k]),
            Some(TargetToken::SlotOpen(k)) => format!("{}(", self.slots[k]),
            Some(TargetToken::SlotClose(k)) => format!("){}", self.slots[k]),
            Some(TargetToken::Pointer { source, index }) => format!("@ptr{source}_{index}"),
            None => format!("<{id}?>"),
        }
    }

    pub fn render(&self, ids: &[usize]) -> String {
        ids.iter().map(|&i| self.token_string(i)).collect::<Vec<_>>().join(" ")
    }

    /// One token per line in id order, after a `#` header giving the block
    /// sizes.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# intents={} slots={} max_sources={} max_source_len={}\n",
            self.intents.len(),
            self.slots.len(),
            self.max_sources,
            self.max_source_len
        );
        for id in 0..self.len() {
            s.push_str(&self.token_string(id));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| CodecError::Format(m.to_string());
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|h| h.strip_prefix("# "))
            .ok_or_else(|| bad("missing header"))?;
        let mut sizes = HashMap::new();
        for kv in header.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad("header entry without '='"))?;
            let v: usize = v.parse().map_err(|_| bad("header size is not a number"))?;
            sizes.insert(k, v);
        }
        let get = |k: &str| sizes.get(k).copied().ok_or_else(|| bad(&format!("header lacks {k}")));
        let (ni, ns) = (get("intents")?, get("slots")?);
        let (ms, ml) = (get("max_sources")?, get("max_source_len")?);
        let body: Vec<&str> = lines.collect();
        if body.first() != Some(&EOS) || body.len() < 1 + 2 * (ni + ns) {
            return Err(bad("tag block truncated"));
        }
        let name = |line: &str| line.strip_suffix('(').map(String::from).ok_or_else(|| bad(line));
        let intents = (0..ni).map(|k| name(body[1 + 2 * k])).collect::<Result<Vec<_>>>()?;
        let slots = (0..ns)
            .map(|k| name(body[1 + 2 * ni + 2 * k]))
            .collect::<Result<Vec<_>>>()?;
        let v = Self::with_pointers(intents, slots, ms, ml);
        if body.len() != v.len() || (0..v.len()).any(|i| v.token_string(i) != body[i]) {
            return Err(bad("token lines disagree with the header"));
        }
        Ok(v)
    }
}

/// How gold tokens are mapped to source positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PointerPolicy {
    /// Exact matches only.
    Strict,
    /// Exact match if any, else the source token with the smallest character
    /// edit distance.
    #[default]
    NearestEdit,
}

fn resolve(token: &str, sources: &[Vec<String>], len_cap: usize, policy: PointerPolicy) -> Option<(usize, usize)> {
    let visible = || {
        sources
            .iter()
            .enumerate()
            .flat_map(move |(i, s)| s.iter().take(len_cap).enumerate().map(move |(j, t)| (i, j, t)))
    };
    if let Some((i, j, _)) = visible().find(|(_, _, t)| t.as_str() == token) {
        return Some((i, j));
    }
    match policy {
        PointerPolicy::Strict => None,
        // min_by_key keeps the first of equal keys: lowest rank, then position.
        PointerPolicy::NearestEdit => visible()
            .min_by_key(|(_, _, t)| char_distance(t, token))
            .map(|(i, j, _)| (i, j)),
    }
}

/// Serializes an annotation over `gold` tokens into pointer target ids,
/// ending in `[EOS]`.
pub fn linearize(
    annotation: &SemanticAnnotation,
    gold: &[String],
    sources: &[Vec<String>],
    vocab: &TargetVocab,
    policy: PointerPolicy,
) -> Result<Vec<usize>> {
    if sources.is_empty() || sources.len() > vocab.max_sources() {
        return Err(CodecError::Contract(format!(
            "need 1..={} sources, got {}",
            vocab.max_sources(),
            sources.len()
        )));
    }
    annotation
        .validate(gold.len())
        .map_err(|e| CodecError::Contract(e.to_string()))?;
    let intent = vocab
        .intent_id(&annotation.intent)
        .ok_or_else(|| CodecError::Contract(format!("unknown intent {}", annotation.intent)))?;
    let mut out = vec![vocab.id(TargetToken::IntentOpen(intent))];
    let mut slots = annotation.slots.iter().peekable();
    let mut open: Option<usize> = None;
    for (pos, tok) in gold.iter().enumerate() {
        if let Some(s) = slots.peek().filter(|s| s.start == pos) {
            let k = vocab
                .slot_id(&s.label)
                .ok_or_else(|| CodecError::Contract(format!("unknown slot label {}", s.label)))?;
            out.push(vocab.id(TargetToken::SlotOpen(k)));
            open = Some(k);
        }
        let (i, j) = resolve(tok, sources, vocab.max_source_len(), policy).ok_or_else(|| CodecError::Resolution {
            token: tok.clone(),
            position: pos,
        })?;
        out.push(vocab.pointer_id(i, j));
        if slots.peek().is_some_and(|s| s.end == pos + 1) {
            out.push(vocab.id(TargetToken::SlotClose(open.take().expect("slot opened"))));
            slots.next();
        }
    }
    out.push(vocab.id(TargetToken::IntentClose(intent)));
    out.push(vocab.id(TargetToken::Eos));
    Ok(out)
}

/// Intent, resolved surface tokens and slot spans over that surface.
#[derive(Debug, Clone, PartialEq)]
pub struct Parse {
    pub intent: String,
    pub surface: Vec<String>,
    pub slots: Vec<SlotSpan>,
}

impl Parse {
    pub fn slot_values(&self) -> Vec<(String, String)> {
        self.slots
            .iter()
            .map(|s| (s.label.clone(), self.surface[s.start..s.end].join(" ")))
            .collect()
    }
}

/// Inverse of [`linearize`]. A trailing `[EOS]` is optional; nothing may
/// follow it.
pub fn delinearize(target: &[usize], sources: &[Vec<String>], vocab: &TargetVocab) -> Result<Parse> {
    let perr = |m: String| CodecError::Parse(m);
    let toks = target
        .iter()
        .map(|&id| vocab.decode(id).ok_or_else(|| perr(format!("unknown target id {id}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut it = toks.into_iter();
    let intent = match it.next() {
        Some(TargetToken::IntentOpen(k)) => k,
        other => return Err(perr(format!("expected an intent to open, found {other:?}"))),
    };
    let mut surface = Vec::new();
    let mut slots = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    let mut closed = false;
    for t in it.by_ref() {
        match t {
            TargetToken::Pointer { source, index } => {
                let tok = sources
                    .get(source)
                    .and_then(|s| s.get(index))
                    .filter(|_| index < vocab.max_source_len())
                    .ok_or(CodecError::Range { row: source, index })?;
                surface.push(tok.clone());
            }
            TargetToken::SlotOpen(k) => {
                if open.is_some() {
                    return Err(perr("nested slot".into()));
                }
                open = Some((k, surface.len()));
            }
            TargetToken::SlotClose(k) => match open.take() {
                Some((o, start)) if o == k && surface.len() > start => slots.push(SlotSpan {
                    label: vocab.slots()[k].clone(),
                    start,
                    end: surface.len(),
                }),
                Some((o, _)) if o == k => return Err(perr("empty slot".into())),
                _ => return Err(perr(format!("unmatched close of slot {}", vocab.slots()[k]))),
            },
            TargetToken::IntentClose(k) => {
                if k != intent || open.is_some() {
                    return Err(perr("intent closed out of order".into()));
                }
                closed = true;
                break;
            }
            TargetToken::IntentOpen(_) => return Err(perr("second intent".into())),
            TargetToken::Eos => return Err(perr("end of sequence before the intent closed".into())),
        }
    }
    if !closed {
        return Err(perr("intent never closed".into()));
    }
    match (it.next(), it.next()) {
        (None, _) | (Some(TargetToken::Eos), None) => {}
        _ => return Err(perr("tokens after the intent closed".into())),
    }
    Ok(Parse {
        intent: vocab.intents()[intent].clone(),
        surface,
        slots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn vocab() -> TargetVocab {
        TargetVocab::new(
            vec!["PlaySongIntent".into(), "PlayArtistIntent".into()],
            vec!["SongName".into(), "ArtistName".into()],
        )
    }

    fn ann(intent: &str, slots: &[(&str, usize, usize)]) -> SemanticAnnotation {
        SemanticAnnotation {
            domain: "Music".into(),
            intent: intent.into(),
            slots: slots
                .iter()
                .map(|&(l, s, e)| SlotSpan {
                    label: l.into(),
                    start: s,
                    end: e,
                })
                .collect(),
        }
    }

    #[test]
    fn reference_example() {
        let v = vocab();
        let sources = vec![tokenize("ply madonna"), tokenize("play mad owner")];
        let a = ann("PlaySongIntent", &[("ArtistName", 1, 2)]);
        let t = linearize(&a, &tokenize("play madonna"), &sources, &v, PointerPolicy::Strict).unwrap();
        assert_eq!(
            v.render(&t),
            "PlaySongIntent( @ptr1_0 ArtistName( @ptr0_1 )ArtistName )PlaySongIntent [EOS]"
        );
        let p = delinearize(&t, &sources, &v).unwrap();
        assert_eq!(p.intent, "PlaySongIntent");
        assert_eq!(p.surface, tokenize("play madonna"));
        assert_eq!(p.slot_values(), vec![("ArtistName".to_string(), "madonna".to_string())]);
    }

    #[test]
    fn gold_source_points_in_order() {
        let v = vocab();
        let gold = tokenize("play hello by adele");
        let a = ann("PlaySongIntent", &[("SongName", 1, 2), ("ArtistName", 3, 4)]);
        let t = linearize(&a, &gold, std::slice::from_ref(&gold), &v, PointerPolicy::Strict).unwrap();
        let ptrs: Vec<_> = t
            .iter()
            .filter_map(|&i| match v.decode(i) {
                Some(TargetToken::Pointer { source, index }) => Some((source, index)),
                _ => None,
            })
            .collect();
        assert_eq!(ptrs, vec![(0, 0), (0, 1), (0, 2), (0, 3)]);
    }

    #[test]
    fn strict_fails_and_nearest_edit_resolves() {
        let v = vocab();
        let sources = vec![tokenize("ply madona")];
        let a = ann("PlayArtistIntent", &[("ArtistName", 1, 2)]);
        let gold = tokenize("play madonna");
        let err = linearize(&a, &gold, &sources, &v, PointerPolicy::Strict).unwrap_err();
        assert!(matches!(err, CodecError::Resolution { ref token, position: 0 } if token == "play"));
        let t = linearize(&a, &gold, &sources, &v, PointerPolicy::NearestEdit).unwrap();
        assert_eq!(
            v.render(&t),
            "PlayArtistIntent( @ptr0_0 ArtistName( @ptr0_1 )ArtistName )PlayArtistIntent [EOS]"
        );
    }

    #[test]
    fn malformed_targets() {
        let v = vocab();
        let s = vec![tokenize("a b")];
        let open = v.id(TargetToken::IntentOpen(0));
        let close = v.id(TargetToken::IntentClose(0));
        let p = delinearize(&[open, close, 0], &s, &v).unwrap();
        assert!(p.surface.is_empty() && p.slots.is_empty());
        assert!(matches!(
            delinearize(&[open, v.pointer_id(0, 0), 0], &s, &v),
            Err(CodecError::Parse(_))
        ));
        assert!(matches!(
            delinearize(&[open, v.pointer_id(0, 5), close, 0], &s, &v),
            Err(CodecError::Range { row: 0, index: 5 })
        ));
        assert!(matches!(
            delinearize(&[open, v.pointer_id(3, 0), close, 0], &s, &v),
            Err(CodecError::Range { .. })
        ));
        let so = v.id(TargetToken::SlotOpen(0));
        assert!(delinearize(&[open, so, close, 0], &s, &v).is_err());
        assert!(delinearize(&[open, close, 0, 0], &s, &v).is_err());
    }

    #[test]
    fn id_ranges_are_disjoint_and_text_round_trips() {
        let v = vocab();
        assert_eq!(v.pointer_count(), 96);
        for id in 0..v.len() {
            let t = v.decode(id).unwrap();
            assert_eq!(v.id(t), id);
            assert_eq!(matches!(t, TargetToken::Pointer { .. }), id >= v.tag_count());
        }
        assert_eq!(v.decode(v.len()), None);
        assert_eq!(TargetVocab::from_text(&v.to_text()).unwrap(), v);
    }
}
