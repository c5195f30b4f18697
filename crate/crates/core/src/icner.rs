//! Joint intent and slot parser over n-best lists. Each hypothesis is
//! encoded on its own, the states are concatenated, and a transformer decoder
//! emits either a tag or a pointer into one of the sources.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::codec::{
    build_vocab, delinearize, encode_s2s_sources, linearize, CodecError, Parse, PointerPolicy, TargetToken,
    TargetVocab, Vocab,
};
use crate::corpus::{NBestList, NBestRecord, SemanticAnnotation};
use crate::eval::{semer, SemERReport, SlotSet};
use crate::nn::{Decoder, Encoder, EncoderConfig, Fwd, Linear};
use crate::tensor::{NodeId, ParamId, ParamStore, TensorError};
use crate::train::{fit, EpochLog, Optimizer, TrainSchedule};

pub const MAX_EPOCHS: usize = 50;
/// Largest tolerated share of n-best instances dropped for unresolvable
/// pointers.
pub const MAX_SKIP_FRACTION: f64 = 0.10;

#[derive(Debug, thiserror::Error)]
pub enum IcnerError {
    #[error("config error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("{skipped} of {total} n-best training instances have unresolvable targets")]
    TooManySkipped { skipped: usize, total: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

pub type Result<T> = std::result::Result<T, IcnerError>;

/// `Baseline` learns from transcriptions and reads the 1-best at test time;
/// `NBestPtr` learns from transcriptions and n-best lists and reads the whole
/// list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum IcnerVariant {
    Baseline,
    NBestPtr,
}

impl fmt::Display for IcnerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IcnerVariant::Baseline => "Baseline",
            IcnerVariant::NBestPtr => "NBestPtr",
        })
    }
}

impl FromStr for IcnerVariant {
    type Err = IcnerError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Baseline" => Ok(IcnerVariant::Baseline),
            "NBestPtr" => Ok(IcnerVariant::NBestPtr),
            _ => Err(IcnerError::Config(format!("unknown parser variant {s}"))),
        }
    }
}

/// How transcription and n-best list share a training record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum SourceComposition {
    /// One instance on the transcription alone, one on the n-best list.
    #[default]
    TwoInstances,
    /// A single instance whose sources are the transcription followed by the
    /// n-best list.
    Joined,
}

impl FromStr for SourceComposition {
    type Err = IcnerError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-instances" => Ok(SourceComposition::TwoInstances),
            "joined" => Ok(SourceComposition::Joined),
            _ => Err(IcnerError::Config(format!("unknown source composition {s}"))),
        }
    }
}

impl fmt::Display for SourceComposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceComposition::TwoInstances => "two-instances",
            SourceComposition::Joined => "joined",
        })
    }
}

fn policy_name(p: PointerPolicy) -> &'static str {
    match p {
        PointerPolicy::Strict => "strict",
        PointerPolicy::NearestEdit => "nearest-edit",
    }
}

pub fn parse_policy(s: &str) -> Result<PointerPolicy> {
    match s {
        "strict" => Ok(PointerPolicy::Strict),
        "nearest-edit" => Ok(PointerPolicy::NearestEdit),
        _ => Err(IcnerError::Config(format!("unknown pointer policy {s}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcnerConfig {
    /// Shared by the encoder and the decoder.
    pub network: EncoderConfig,
    pub policy: PointerPolicy,
    pub composition: SourceComposition,
}

impl Default for IcnerConfig {
    fn default() -> Self {
        IcnerConfig {
            network: EncoderConfig {
                max_positions: 48,
                ..EncoderConfig::default()
            },
            policy: PointerPolicy::NearestEdit,
            composition: SourceComposition::TwoInstances,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DecodeMode {
    Greedy,
    Beam,
}

impl FromStr for DecodeMode {
    type Err = IcnerError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(DecodeMode::Greedy),
            "beam" => Ok(DecodeMode::Beam),
            _ => Err(IcnerError::Config(format!("unknown decode mode {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    pub beam_width: usize,
    pub max_len: usize,
    /// Only allow continuations that can still close into a valid parse.
    pub structural_mask: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            mode: DecodeMode::Greedy,
            beam_width: 4,
            max_len: 40,
            structural_mask: true,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(IcnerError::Config("beam width must be at least 1".into()));
        }
        if self.max_len < 2 {
            return Err(IcnerError::Config("max target length must be at least 2".into()));
        }
        if self.structural_mask && self.max_len < 4 {
            return Err(IcnerError::Config(
                "structural masking needs a max target length of at least 4".into(),
            ));
        }
        Ok(())
    }
}

/// Encoder states of every source, stacked row-wise. Source `i` occupies rows
/// `i * width .. (i + 1) * width` as `[CLS] tokens [EOS] [PAD]...`.
#[derive(Debug, Clone)]
pub struct SourceStates {
    pub memory: NodeId,
    /// Live (non-padding) rows of `memory`.
    pub mask: Vec<bool>,
    pub width: usize,
    /// Token count of each source.
    pub lengths: Vec<usize>,
}

impl SourceStates {
    /// Row of `memory` holding word `index` of source `source`.
    pub fn row_of(&self, source: usize, index: usize) -> usize {
        source * self.width + index + 1
    }
}

/// Bracket bookkeeping for constrained decoding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Structure {
    intent: Option<usize>,
    closed: bool,
    slot: Option<usize>,
    slot_filled: bool,
    pointers: usize,
}

impl Structure {
    fn permits(&self, t: TargetToken) -> bool {
        match (self.intent, t) {
            (None, TargetToken::IntentOpen(_)) => true,
            (None, _) => false,
            _ if self.closed => t == TargetToken::Eos,
            (Some(_), TargetToken::Pointer { .. }) => true,
            (Some(_), TargetToken::SlotClose(k)) => self.slot == Some(k) && self.slot_filled,
            (Some(_), TargetToken::SlotOpen(_)) => self.slot.is_none(),
            (Some(i), TargetToken::IntentClose(k)) => i == k && self.slot.is_none() && self.pointers > 0,
            _ => false,
        }
    }

    fn push(&mut self, t: TargetToken) {
        match t {
            TargetToken::IntentOpen(k) => self.intent = Some(k),
            TargetToken::IntentClose(_) => self.closed = true,
            TargetToken::SlotOpen(k) => {
                self.slot = Some(k);
                self.slot_filled = false;
            }
            TargetToken::SlotClose(_) => self.slot = None,
            TargetToken::Pointer { .. } => {
                self.pointers += 1;
                self.slot_filled = true;
            }
            TargetToken::Eos => {}
        }
    }

    /// Tokens still required to finish, `[EOS]` included.
    fn needed(&self) -> usize {
        if self.intent.is_none() {
            return 4;
        }
        if self.closed {
            return 1;
        }
        let mut n = 2;
        match self.slot {
            Some(_) => n += 1 + usize::from(!self.slot_filled),
            None => n += usize::from(self.pointers == 0),
        }
        n
    }
}

/// A decoded parse, or the reason none could be read off the output.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutput {
    pub target: Vec<usize>,
    pub parse: Option<Parse>,
    pub failure: Option<String>,
    /// Decoding hit the length limit before `[EOS]`.
    pub truncated: bool,
}

impl ParseOutput {
    pub fn annotation(&self, domain: &str) -> Option<SemanticAnnotation> {
        self.parse.as_ref().map(|p| SemanticAnnotation {
            domain: domain.to_string(),
            intent: p.intent.clone(),
            slots: p.slots.clone(),
        })
    }

    pub fn slot_set(&self) -> Option<SlotSet> {
        self.parse
            .as_ref()
            .map(|p| SlotSet::new(p.intent.clone(), p.slot_values()))
    }
}

#[derive(Debug, Clone)]
pub struct S2SPtrModel {
    pub variant: IcnerVariant,
    pub config: IcnerConfig,
    pub domain: String,
    pub vocab: Vocab,
    pub targets: TargetVocab,
    pub store: ParamStore,
    encoder: Encoder,
    decoder: Decoder,
    /// Input embeddings of the tags, plus a start row at `tag_count`.
    tag_embed: ParamId,
    tag_out: Linear,
    pointer_query: Linear,
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl S2SPtrModel {
    pub fn new(
        variant: IcnerVariant,
        config: IcnerConfig,
        domain: String,
        vocab: Vocab,
        targets: TargetVocab,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.network.dim;
        let encoder = Encoder::new(&mut store, "encoder", vocab.len(), 0, config.network, &mut rng)?;
        let decoder = Decoder::new(&mut store, "decoder", config.network, &mut rng)?;
        let tag_embed = store.normal("decoder.tags", targets.tag_count() + 1, d, &mut rng);
        let tag_out = Linear::new(&mut store, "decoder.tag_out", d, targets.tag_count(), &mut rng);
        let pointer_query = Linear::new(&mut store, "decoder.pointer", d, d, &mut rng);
        Ok(S2SPtrModel {
            variant,
            config,
            domain,
            vocab,
            targets,
            store,
            encoder,
            decoder,
            tag_embed,
            tag_out,
            pointer_query,
        })
    }

    /// Encodes each source independently with shared weights and stacks the
    /// states.
    pub fn encode_sources(&self, cx: &mut Fwd, sources: &[Vec<String>]) -> Result<SourceStates> {
        if sources.len() > self.targets.max_sources() {
            return Err(IcnerError::Contract(format!(
                "{} sources for a model built for {}",
                sources.len(),
                self.targets.max_sources()
            )));
        }
        let b = encode_s2s_sources(sources, &self.vocab)?;
        let mut rows = Vec::with_capacity(b.rows());
        for r in 0..b.rows() {
            rows.push(
                self.encoder
                    .forward(cx, &b.ids[r], &b.positions[r], None, Some(&b.mask[r]))?,
            );
        }
        let memory = if rows.len() == 1 {
            rows[0]
        } else {
            cx.g.concat_rows(&rows)?
        };
        Ok(SourceStates {
            memory,
            mask: b.mask.concat(),
            width: b.ids[0].len(),
            lengths: b.lengths,
        })
    }

    /// Memory column behind each pointer id, `None` where the pointer names
    /// no real word.
    fn pointer_columns(&self, src: &SourceStates) -> Vec<Option<usize>> {
        let ml = self.targets.max_source_len();
        (0..self.targets.pointer_count())
            .map(|p| {
                let (i, j) = (p / ml, p % ml);
                (i < src.lengths.len() && j < src.lengths[i]).then(|| src.row_of(i, j))
            })
            .collect()
    }

    /// Joint tag/pointer logits after each prefix position (the start symbol
    /// included), one row per position.
    fn logits(&self, cx: &mut Fwd, src: &SourceStates, prefix: &[usize]) -> Result<NodeId> {
        let tags = self.targets.tag_count();
        let mut idx = Vec::with_capacity(prefix.len() + 1);
        idx.push(tags);
        for &t in prefix {
            idx.push(match self.targets.decode(t) {
                Some(TargetToken::Pointer { source, index })
                    if index < src.lengths.get(source).copied().unwrap_or(0) =>
                {
                    tags + 1 + src.row_of(source, index)
                }
                Some(TargetToken::Pointer { .. }) | None => {
                    return Err(IcnerError::Contract(format!("target id {t} outside the sources")))
                }
                Some(_) => t,
            });
        }
        let table = cx.p(self.tag_embed);
        let table = cx.g.concat_rows(&[table, src.memory])?;
        let inputs = cx.g.gather_rows(table, &idx)?;
        let states = self.decoder.forward(cx, inputs, src.memory, Some(&src.mask))?;
        let tag_logits = self.tag_out.forward(cx, states)?;
        let q = self.pointer_query.forward(cx, states)?;
        let scores = cx.g.matmul_nt(q, src.memory)?;
        let scores = cx.g.scale(scores, 1.0 / (self.config.network.dim as f64).sqrt());
        let pointer_logits = cx.g.gather_cols(scores, &self.pointer_columns(src))?;
        Ok(cx.g.concat_cols(&[tag_logits, pointer_logits])?)
    }

    /// Which target ids are real: every tag, and pointers into real words.
    fn valid_ids(&self, src: &SourceStates) -> Vec<bool> {
        let mut keep = vec![true; self.targets.tag_count()];
        keep.extend(self.pointer_columns(src).iter().map(Option::is_some));
        keep
    }

    /// Distribution over the next target id given `prefix`.
    pub fn decode_step(
        &self,
        cx: &mut Fwd,
        src: &SourceStates,
        prefix: &[usize],
        decode: &DecodeConfig,
    ) -> Result<Vec<f64>> {
        let logits = self.logits(cx, src, prefix)?;
        let last = cx.g.gather_rows(logits, &[prefix.len()])?;
        let mut keep = self.valid_ids(src);
        if decode.structural_mask {
            let mut st = Structure::default();
            for &t in prefix {
                st.push(self.targets.decode(t).expect("checked by logits"));
            }
            let room = decode.max_len.saturating_sub(prefix.len() + 1);
            for (id, k) in keep.iter_mut().enumerate() {
                let t = self.targets.decode(id).expect("id in range");
                let mut next = st;
                next.push(t);
                let need = if t == TargetToken::Eos { 0 } else { next.needed() };
                *k = *k && st.permits(t) && need <= room;
            }
        }
        let p = cx.g.softmax(last, Some(&keep))?;
        Ok(cx.g.value(p).data().to_vec())
    }

    fn greedy(&self, cx: &mut Fwd, src: &SourceStates, decode: &DecodeConfig) -> Result<(Vec<usize>, bool)> {
        let mut out = Vec::new();
        while out.len() < decode.max_len {
            let p = self.decode_step(cx, src, &out, decode)?;
            let next = argmax(&p);
            out.push(next);
            if next == 0 {
                return Ok((out, false));
            }
        }
        Ok((out, true))
    }

    fn beam(&self, cx: &mut Fwd, src: &SourceStates, decode: &DecodeConfig) -> Result<(Vec<usize>, bool)> {
        #[derive(Clone)]
        struct Beam {
            ids: Vec<usize>,
            score: f64,
            last: f64,
            done: bool,
        }
        let mut beams = vec![Beam {
            ids: Vec::new(),
            score: 0.0,
            last: 1.0,
            done: false,
        }];
        for _ in 0..decode.max_len {
            if beams.iter().all(|b| b.done) {
                break;
            }
            let mut cands = Vec::new();
            for b in &beams {
                if b.done {
                    cands.push(b.clone());
                    continue;
                }
                let p = self.decode_step(cx, src, &b.ids, decode)?;
                for (id, &q) in p.iter().enumerate().filter(|(_, &q)| q > 0.0) {
                    let mut ids = b.ids.clone();
                    ids.push(id);
                    cands.push(Beam {
                        ids,
                        score: b.score + q.ln(),
                        last: q,
                        done: id == 0,
                    });
                }
            }
            // Stable: equal scores keep parent order, then lower ids.
            cands.sort_by(|a, b| b.score.total_cmp(&a.score).then(b.last.total_cmp(&a.last)));
            cands.truncate(decode.beam_width);
            beams = cands;
        }
        match beams.iter().find(|b| b.done) {
            Some(b) => Ok((b.ids.clone(), false)),
            None => Ok((beams[0].ids.clone(), true)),
        }
    }

    /// Decodes a parse from explicit sources.
    pub fn parse_sources(&self, sources: &[Vec<String>], decode: &DecodeConfig) -> Result<ParseOutput> {
        decode.validate()?;
        let mut cx = Fwd::eval(&self.store);
        let src = self.encode_sources(&mut cx, sources)?;
        let (target, truncated) = match decode.mode {
            DecodeMode::Greedy => self.greedy(&mut cx, &src, decode)?,
            DecodeMode::Beam => self.beam(&mut cx, &src, decode)?,
        };
        let (parse, failure) = match delinearize(&target, sources, &self.targets) {
            Ok(p) if !truncated => (Some(p), None),
            Ok(_) => (None, Some("length limit reached before [EOS]".to_string())),
            Err(e) => (None, Some(e.to_string())),
        };
        Ok(ParseOutput {
            target,
            parse,
            failure,
            truncated,
        })
    }

    /// The sources this variant reads at test time.
    pub fn test_sources(&self, nbest: &NBestList) -> Vec<Vec<String>> {
        match self.variant {
            IcnerVariant::Baseline => vec![nbest.best().tokens.clone()],
            IcnerVariant::NBestPtr => nbest.token_lists(),
        }
    }

    pub fn predict_parse(&self, nbest: &NBestList, decode: &DecodeConfig) -> Result<ParseOutput> {
        self.parse_sources(&self.test_sources(nbest), decode)
    }

    /// Mean teacher-forced cross entropy of `target` given `sources`.
    pub fn target_loss(&self, sources: &[Vec<String>], target: &[usize]) -> Result<f64> {
        let mut cx = Fwd::eval(&self.store);
        let l = self.loss(&mut cx, sources, target)?;
        Ok(cx.g.scalar(l))
    }

    fn loss(&self, cx: &mut Fwd, sources: &[Vec<String>], target: &[usize]) -> Result<NodeId> {
        let src = self.encode_sources(cx, sources)?;
        let logits = self.logits(cx, &src, &target[..target.len() - 1])?;
        let keep = self.valid_ids(&src).repeat(target.len());
        let p = cx.g.softmax(logits, Some(&keep))?;
        Ok(cx.g.nll(p, target)?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut cp = Checkpoint::default();
        let e = &self.config.network;
        for (k, v) in [
            ("kind", "icner".to_string()),
            ("variant", self.variant.to_string()),
            ("domain", self.domain.clone()),
            ("layers", e.layers.to_string()),
            ("heads", e.heads.to_string()),
            ("dim", e.dim.to_string()),
            ("ffn", e.ffn.to_string()),
            ("max_positions", e.max_positions.to_string()),
            ("dropout", e.dropout.to_string()),
            ("policy", policy_name(self.config.policy).to_string()),
            ("composition", self.config.composition.to_string()),
        ] {
            cp.meta.insert(k.to_string(), v);
        }
        cp.sections.insert("vocab".into(), self.vocab.to_text());
        cp.sections.insert("targets".into(), self.targets.to_text());
        cp.params = self.store.clone();
        cp
    }

    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self> {
        let num = |k: &str| -> Result<f64> {
            cp.meta(k)?
                .parse::<f64>()
                .map_err(|_| IcnerError::Config(format!("checkpoint meta {k} is not a number")))
        };
        if cp.meta("kind")? != "icner" {
            return Err(IcnerError::Config("not a parser checkpoint".into()));
        }
        let config = IcnerConfig {
            network: EncoderConfig {
                layers: num("layers")? as usize,
                heads: num("heads")? as usize,
                dim: num("dim")? as usize,
                ffn: num("ffn")? as usize,
                max_positions: num("max_positions")? as usize,
                dropout: num("dropout")?,
            },
            policy: parse_policy(cp.meta("policy")?)?,
            composition: cp.meta("composition")?.parse()?,
        };
        let mut m = S2SPtrModel::new(
            cp.meta("variant")?.parse()?,
            config,
            cp.meta("domain")?.to_string(),
            Vocab::from_text(cp.section("vocab")?)?,
            TargetVocab::from_text(cp.section("targets")?)?,
            0,
        )?;
        m.store.load_from(&cp.params)?;
        Ok(m)
    }
}

/// One teacher-forced training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub sources: Vec<Vec<String>>,
    pub target: Vec<usize>,
}

/// Training instances for `variant`, plus how many n-best instances were
/// dropped because a gold token could not be pointed at.
pub fn training_instances(
    variant: IcnerVariant,
    config: &IcnerConfig,
    records: &[NBestRecord],
    targets: &TargetVocab,
) -> Result<(Vec<Instance>, usize)> {
    let mut out = Vec::new();
    let (mut skipped, mut attempted) = (0, 0);
    for r in records {
        let gold = &r.gold;
        let clean = vec![gold.tokens.clone()];
        let mut add = |sources: Vec<Vec<String>>, counted: bool| -> Result<()> {
            match linearize(&gold.annotation, &gold.tokens, &sources, targets, config.policy) {
                Ok(target) => out.push(Instance { sources, target }),
                Err(CodecError::Resolution { .. }) if counted => skipped += 1,
                Err(e) => return Err(e.into()),
            }
            Ok(())
        };
        match (variant, config.composition) {
            (IcnerVariant::Baseline, _) => add(clean, false)?,
            (IcnerVariant::NBestPtr, SourceComposition::TwoInstances) => {
                add(clean, false)?;
                attempted += 1;
                add(r.nbest.token_lists(), true)?;
            }
            (IcnerVariant::NBestPtr, SourceComposition::Joined) => {
                attempted += 1;
                let mut sources = clean;
                sources.extend(r.nbest.token_lists());
                add(sources, true)?;
            }
        }
    }
    if attempted > 0 && skipped as f64 > MAX_SKIP_FRACTION * attempted as f64 {
        return Err(IcnerError::TooManySkipped {
            skipped,
            total: attempted,
        });
    }
    Ok((out, skipped))
}

/// Reference intent and slot values of a record.
pub fn gold_set(r: &NBestRecord) -> SlotSet {
    SlotSet::new(r.intent().to_string(), r.gold.annotation.slot_values(&r.gold.tokens))
}

/// SemER counts per domain and overall; parse failures count as
/// all-substitution.
pub fn semer_report(model: &S2SPtrModel, records: &[NBestRecord], decode: &DecodeConfig) -> Result<SemERReport> {
    let mut report = SemERReport::default();
    for r in records {
        let out = model.predict_parse(&r.nbest, decode)?;
        report.add(r.domain(), semer(&gold_set(r), out.slot_set().as_ref()));
    }
    Ok(report)
}

/// Share (percent) of records whose parse reproduces the transcription, the
/// intent and every slot span.
pub fn exact_parse_accuracy(model: &S2SPtrModel, records: &[NBestRecord], decode: &DecodeConfig) -> Result<f64> {
    if records.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for r in records {
        let out = model.predict_parse(&r.nbest, decode)?;
        hits += out.parse.is_some_and(|p| {
            p.intent == r.gold.annotation.intent && p.surface == r.gold.tokens && p.slots == r.gold.annotation.slots
        }) as usize;
    }
    Ok(100.0 * hits as f64 / records.len() as f64)
}

#[derive(Debug, Clone)]
pub struct IcnerRun {
    pub model: S2SPtrModel,
    pub best_epoch: usize,
    /// Validation SemER of the kept parameters.
    pub best_semer: f64,
    pub skipped: usize,
    pub history: Vec<EpochLog>,
}

fn single_domain(train: &[NBestRecord], validation: &[NBestRecord]) -> Result<String> {
    let domain = train
        .first()
        .ok_or_else(|| IcnerError::Config("empty training set".into()))?
        .domain()
        .to_string();
    if let Some(r) = train.iter().chain(validation).find(|r| r.domain() != domain) {
        return Err(IcnerError::Contract(format!(
            "record {} is in domain {}, expected {domain}",
            r.id,
            r.domain()
        )));
    }
    Ok(domain)
}

/// Tag inventory of a training split: sorted intents and slot labels.
pub fn target_vocab(train: &[NBestRecord]) -> TargetVocab {
    let intents: BTreeSet<&str> = train.iter().map(|r| r.intent()).collect();
    let slots: BTreeSet<&str> = train
        .iter()
        .flat_map(|r| r.gold.annotation.slots.iter().map(|s| s.label.as_str()))
        .collect();
    TargetVocab::new(
        intents.into_iter().map(String::from).collect(),
        slots.into_iter().map(String::from).collect(),
    )
}

/// Trains one domain's parser, keeping the parameters with the lowest
/// validation SemER (greedy decoding).
pub fn train_icner(
    variant: IcnerVariant,
    train: &[NBestRecord],
    validation: &[NBestRecord],
    config: IcnerConfig,
    schedule: &TrainSchedule,
) -> Result<IcnerRun> {
    schedule.validate(MAX_EPOCHS)?;
    let domain = single_domain(train, validation)?;
    let targets = target_vocab(train);
    let (instances, skipped) = training_instances(variant, &config, train, &targets)?;
    if instances.is_empty() {
        return Err(IcnerError::Config("no training instances".into()));
    }
    let mut model = S2SPtrModel::new(variant, config, domain, build_vocab(train), targets, schedule.seed)?;
    let decode = DecodeConfig::default();
    let mut opt = Optimizer::single(&model.store, schedule.lr);
    let template = model.clone();
    let eval_model = std::cell::RefCell::new(model.clone());
    // Transcriptions stand in for validation input where the model never
    // sees n-best lists in training.
    let val_input: Vec<NBestRecord> = match variant {
        IcnerVariant::Baseline => validation
            .iter()
            .map(|r| {
                let clean = NBestList::new(vec![crate::corpus::Hypothesis {
                    tokens: r.gold.tokens.clone(),
                    confidence: 1.0,
                }])
                .expect("one nonempty hypothesis");
                NBestRecord::new(r.id.clone(), r.gold.clone(), clean).expect("record was valid")
            })
            .collect(),
        IcnerVariant::NBestPtr => validation.to_vec(),
    };
    let outcome = fit(
        &mut model.store,
        &mut opt,
        instances.len(),
        config.network.dropout,
        schedule,
        |cx, i| {
            let inst = &instances[i];
            template.loss(cx, &inst.sources, &inst.target).map_err(tensor_err)
        },
        |store| {
            let mut m = eval_model.borrow_mut();
            m.store.clone_from(store);
            let rep = semer_report(&m, &val_input, &decode).map_err(tensor_err)?;
            Ok(-rep.overall.rate())
        },
    )?;
    model.store = outcome.best;
    Ok(IcnerRun {
        model,
        best_epoch: outcome.best_epoch,
        best_semer: -outcome.best_validation,
        skipped,
        history: outcome.history,
    })
}

fn tensor_err(e: IcnerError) -> TensorError {
    match e {
        IcnerError::Tensor(t) => t,
        other => TensorError::Contract(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, GoldUtterance, Hypothesis, SlotSpan};

    fn small() -> IcnerConfig {
        IcnerConfig {
            network: EncoderConfig {
                layers: 1,
                heads: 2,
                dim: 8,
                ffn: 16,
                max_positions: 48,
                dropout: 0.0,
            },
            ..IcnerConfig::default()
        }
    }

    fn model(seed: u64) -> S2SPtrModel {
        let vocab = Vocab::from_words(["play", "vogue", "by", "madonna", "pause"]);
        let targets = TargetVocab::new(
            vec!["PauseIntent".into(), "PlaySongIntent".into()],
            vec!["ArtistName".into(), "SongName".into()],
        );
        S2SPtrModel::new(IcnerVariant::NBestPtr, small(), "Music".into(), vocab, targets, seed).unwrap()
    }

    fn record(gold: &str, hyps: &[&str]) -> NBestRecord {
        let tokens = tokenize(gold);
        let n = tokens.len();
        let gold = GoldUtterance {
            tokens,
            annotation: SemanticAnnotation {
                domain: "Music".into(),
                intent: "PlaySongIntent".into(),
                slots: vec![SlotSpan {
                    label: "SongName".into(),
                    start: 1,
                    end: n,
                }],
            },
        };
        let hyps = hyps
            .iter()
            .enumerate()
            .map(|(i, h)| Hypothesis {
                tokens: tokenize(h),
                confidence: 1.0 - 0.1 * i as f64,
            })
            .collect();
        NBestRecord::new("r", gold, NBestList::new(hyps).unwrap()).unwrap()
    }

    #[test]
    fn concatenated_states_keep_boundaries() {
        let m = model(0);
        let mut cx = Fwd::eval(&m.store);
        let src = m
            .encode_sources(&mut cx, &[tokenize("play vogue"), tokenize("play by madonna")])
            .unwrap();
        assert_eq!(src.lengths, vec![2, 3]);
        assert_eq!(src.width, 5);
        assert_eq!(cx.g.value(src.memory).rows(), 10);
        assert_eq!(src.mask.iter().filter(|&&k| k).count(), 2 + 3 + 4);
        assert_eq!(src.row_of(1, 0), 6);
    }

    #[test]
    fn padding_does_not_leak_into_states() {
        let m = model(1);
        let short = tokenize("play vogue");
        let mut a = Fwd::eval(&m.store);
        let alone = m.encode_sources(&mut a, std::slice::from_ref(&short)).unwrap();
        let mut b = Fwd::eval(&m.store);
        let padded = m
            .encode_sources(&mut b, &[short, tokenize("play vogue by madonna")])
            .unwrap();
        for r in 0..4 {
            let x = a.g.value(alone.memory).row(r);
            let y = b.g.value(padded.memory).row(r);
            assert!(x.iter().zip(y).all(|(p, q)| (p - q).abs() < 1e-9));
        }
    }

    #[test]
    fn step_distribution_is_normalized_and_masked() {
        let m = model(2);
        let mut cx = Fwd::eval(&m.store);
        let src = m.encode_sources(&mut cx, &[tokenize("play vogue")]).unwrap();
        let decode = DecodeConfig::default();
        let open = m.targets.id(TargetToken::IntentOpen(1));
        let slot = m.targets.id(TargetToken::SlotOpen(1));
        let p = m.decode_step(&mut cx, &src, &[open, slot], &decode).unwrap();
        assert_eq!(p.len(), m.targets.len());
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(p[0], 0.0);
        // Only words 0 and 1 of source 0 exist.
        let ptr = |i, j| p[m.targets.pointer_id(i, j)];
        assert!(ptr(0, 0) > 0.0 && ptr(0, 1) > 0.0);
        assert_eq!(ptr(0, 2), 0.0);
        assert_eq!(ptr(1, 0), 0.0);
        // An open slot must hold a word before anything else.
        let tags = m.targets.tag_count();
        assert!(p[..tags].iter().all(|&q| q == 0.0));
    }

    #[test]
    fn unmasked_step_still_hides_padding() {
        let m = model(3);
        let mut cx = Fwd::eval(&m.store);
        let src = m.encode_sources(&mut cx, &[tokenize("pause")]).unwrap();
        let decode = DecodeConfig {
            structural_mask: false,
            ..DecodeConfig::default()
        };
        let p = m.decode_step(&mut cx, &src, &[], &decode).unwrap();
        assert!(p[0] > 0.0);
        assert_eq!(p[m.targets.pointer_id(0, 1)], 0.0);
    }

    #[test]
    fn masked_decoding_always_parses() {
        for seed in 0..4 {
            let m = model(seed);
            for mode in [DecodeMode::Greedy, DecodeMode::Beam] {
                let decode = DecodeConfig {
                    mode,
                    max_len: 8,
                    ..DecodeConfig::default()
                };
                let out = m.parse_sources(&[tokenize("play vogue by madonna")], &decode).unwrap();
                assert!(out.parse.is_some(), "{:?}", out.failure);
                assert!(out.target.len() <= 8);
            }
        }
    }

    #[test]
    fn beam_of_one_is_greedy() {
        let m = model(4);
        let srcs = [tokenize("play vogue"), tokenize("pay vogue")];
        for structural_mask in [true, false] {
            let g = DecodeConfig {
                structural_mask,
                ..DecodeConfig::default()
            };
            let b = DecodeConfig {
                mode: DecodeMode::Beam,
                beam_width: 1,
                ..g
            };
            assert_eq!(m.parse_sources(&srcs, &g).unwrap(), m.parse_sources(&srcs, &b).unwrap());
        }
    }

    #[test]
    fn instances_follow_the_composition() {
        let r = record("play vogue", &["pay vogue", "play vogue"]);
        let targets = model(0).targets;
        let two = training_instances(IcnerVariant::NBestPtr, &small(), std::slice::from_ref(&r), &targets)
            .unwrap()
            .0;
        assert_eq!(two.len(), 2);
        assert_eq!(two[0].sources.len(), 1);
        assert_eq!(two[1].sources.len(), 2);
        // "play" resolves into rank 1 of the n-best instance.
        assert_eq!(two[1].target[1], targets.pointer_id(1, 0));
        let joined = IcnerConfig {
            composition: SourceComposition::Joined,
            ..small()
        };
        let one = training_instances(IcnerVariant::NBestPtr, &joined, std::slice::from_ref(&r), &targets)
            .unwrap()
            .0;
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].sources.len(), 3);
        let base = training_instances(IcnerVariant::Baseline, &small(), &[r], &targets)
            .unwrap()
            .0;
        assert_eq!(base.len(), 1);
        for inst in two.iter().chain(&one).chain(&base) {
            assert!(delinearize(&inst.target, &inst.sources, &targets).is_ok());
        }
    }

    #[test]
    fn strict_policy_skips_and_then_fails() {
        let strict = IcnerConfig {
            policy: PointerPolicy::Strict,
            ..small()
        };
        let targets = model(0).targets;
        let bad = record("play vogue", &["pay vague"]);
        let good = record("play vogue", &["play vogue"]);
        let mut recs = vec![good; 10];
        recs.push(bad.clone());
        let (inst, skipped) = training_instances(IcnerVariant::NBestPtr, &strict, &recs, &targets).unwrap();
        assert_eq!((inst.len(), skipped), (21, 1));
        recs.push(bad);
        assert!(matches!(
            training_instances(IcnerVariant::NBestPtr, &strict, &recs, &targets),
            Err(IcnerError::TooManySkipped { skipped: 2, total: 12 })
        ));
    }

    #[test]
    fn checkpoint_round_trip_preserves_parses() {
        let m = model(5);
        let back = S2SPtrModel::from_checkpoint(&Checkpoint::from_text(&m.to_checkpoint().to_text()).unwrap()).unwrap();
        let srcs = [tokenize("play vogue by madonna")];
        let d = DecodeConfig::default();
        assert_eq!(
            m.parse_sources(&srcs, &d).unwrap(),
            back.parse_sources(&srcs, &d).unwrap()
        );
    }

    #[test]
    fn structure_budget() {
        let mut st = Structure::default();
        assert_eq!(st.needed(), 4);
        st.push(TargetToken::IntentOpen(0));
        assert_eq!(st.needed(), 3);
        st.push(TargetToken::SlotOpen(0));
        assert_eq!(st.needed(), 4);
        assert!(!st.permits(TargetToken::SlotClose(0)));
        st.push(TargetToken::Pointer { source: 0, index: 0 });
        assert_eq!(st.needed(), 3);
        assert!(!st.permits(TargetToken::IntentClose(0)));
        st.push(TargetToken::SlotClose(0));
        assert_eq!(st.needed(), 2);
        assert!(!st.permits(TargetToken::Eos));
        st.push(TargetToken::IntentClose(0));
        assert!(st.permits(TargetToken::Eos) && !st.permits(TargetToken::Pointer { source: 0, index: 0 }));
    }

    #[test]
    fn mixed_domains_are_rejected() {
        let a = record("play vogue", &["play vogue"]);
        let mut b = a.clone();
        b.gold.annotation.domain = "Weather".into();
        assert!(matches!(single_domain(&[a], &[b]), Err(IcnerError::Contract(_))));
    }
}
