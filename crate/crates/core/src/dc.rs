//! Domain classifiers: a single-input baseline, the extractive n-best
//! summarizer, and the joint extractive/abstractive summarizer.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::codec::{encode_summarizer_input, CodecError, Vocab, CLS_ID, EOS_ID, MAX_SOURCE_LEN};
use crate::corpus::NBestRecord;
use crate::edit::levenshtein;
use crate::nn::{Decoder, Encoder, EncoderConfig, Fwd, Linear, MultiHeadAttention};
use crate::tensor::{NodeId, ParamId, ParamStore, TensorError};
use crate::train::{fit, EpochLog, Optimizer, TrainSchedule};

pub const MAX_EPOCHS: usize = 30;

#[derive(Debug, thiserror::Error)]
pub enum DcError {
    #[error("config error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

pub type Result<T> = std::result::Result<T, DcError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum DcVariant {
    Baseline,
    BSumExt,
    BSumExtAbs,
}

impl fmt::Display for DcVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DcVariant::Baseline => "Baseline",
            DcVariant::BSumExt => "BSumExt",
            DcVariant::BSumExtAbs => "BSumExtAbs",
        })
    }
}

impl FromStr for DcVariant {
    type Err = DcError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Baseline" => Ok(DcVariant::Baseline),
            "BSumExt" => Ok(DcVariant::BSumExt),
            "BSumExtAbs" => Ok(DcVariant::BSumExtAbs),
            _ => Err(DcError::Config(format!("unknown model variant {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcConfig {
    pub encoder: EncoderConfig,
    /// Weight of the extractive loss.
    pub w_ext: f64,
    /// Weight of the generation loss kept during fine-tuning.
    pub w_abs: f64,
    /// Feed the classifier the top-scoring hypothesis instead of the
    /// attention summary.
    pub hard_select: bool,
}

impl Default for DcConfig {
    fn default() -> Self {
        DcConfig {
            encoder: EncoderConfig {
                max_positions: 96,
                ..EncoderConfig::default()
            },
            w_ext: 0.5,
            w_abs: 0.0,
            hard_select: false,
        }
    }
}

#[derive(Debug, Clone)]
struct SummaryHead {
    ext: ParamId,
    query: ParamId,
    attn: MultiHeadAttention,
}

/// What a model is asked to classify.
#[derive(Debug, Clone, Copy)]
pub enum DcInput<'a> {
    Tokens(&'a [String]),
    NBest(&'a [Vec<String>]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainPrediction {
    pub probs: Vec<f64>,
    pub label: usize,
    /// Summary attention over hypotheses (summarizer variants).
    pub summary_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct DcModel {
    pub variant: DcVariant,
    pub config: DcConfig,
    pub vocab: Vocab,
    pub domains: Vec<String>,
    pub store: ParamStore,
    encoder: Encoder,
    summary: Option<SummaryHead>,
    decoder: Option<Decoder>,
    hidden: Linear,
    out: Linear,
}

struct Outputs {
    probs: NodeId,
    ext: Option<NodeId>,
    gen: Option<(NodeId, Vec<usize>)>,
    summary_weights: Option<NodeId>,
}

/// Index of the hypothesis closest to `gold` by token edit distance, lowest
/// rank on ties.
pub fn oracle_label(hypotheses: &[Vec<String>], gold: &[String]) -> usize {
    hypotheses
        .iter()
        .enumerate()
        .min_by_key(|(_, h)| levenshtein(h, gold))
        .map_or(0, |(i, _)| i)
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

impl DcModel {
    pub fn new(variant: DcVariant, config: DcConfig, vocab: Vocab, domains: Vec<String>, seed: u64) -> Result<Self> {
        if domains.is_empty() {
            return Err(DcError::Config("no domains".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.encoder.dim;
        let encoder = Encoder::new(&mut store, "encoder", vocab.len(), 2, config.encoder, &mut rng)?;
        let summary = (variant != DcVariant::Baseline).then(|| SummaryHead {
            ext: store.xavier("summary.ext", 1, d, &mut rng),
            query: store.normal("summary.query", 1, d, &mut rng),
            attn: MultiHeadAttention::new(&mut store, "summary.attn", d, config.encoder.heads, &mut rng),
        });
        let decoder = match variant {
            DcVariant::BSumExtAbs => Some(Decoder::new(&mut store, "decoder", config.encoder, &mut rng)?),
            _ => None,
        };
        let din = if variant == DcVariant::BSumExtAbs { 2 * d } else { d };
        let hidden = Linear::new(&mut store, "classifier.hidden", din, d, &mut rng);
        let out = Linear::new(&mut store, "classifier.out", d, domains.len(), &mut rng);
        // Untrained models start from the uniform distribution.
        store.value_mut(out.w).data_mut().fill(0.0);
        Ok(DcModel {
            variant,
            config,
            vocab,
            domains,
            store,
            encoder,
            summary,
            decoder,
            hidden,
            out,
        })
    }

    fn domain_index(&self) -> BTreeMap<&str, usize> {
        self.domains.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect()
    }

    fn hypotheses_of<'a>(&self, input: DcInput<'a>) -> Result<Vec<Vec<String>>> {
        match (self.variant, input) {
            (DcVariant::Baseline, DcInput::Tokens(t)) => Ok(vec![t.to_vec()]),
            (DcVariant::Baseline, DcInput::NBest(_)) => Err(DcError::Contract(
                "the baseline classifies a single token sequence".into(),
            )),
            (_, DcInput::NBest(h)) if !h.is_empty() => Ok(h.to_vec()),
            (_, DcInput::NBest(_)) => Err(DcError::Contract("record with zero hypotheses".into())),
            (v, DcInput::Tokens(_)) => Err(DcError::Contract(format!("{v} classifies an n-best list"))),
        }
    }

    fn decoder_states(&self, cx: &mut Fwd, memory: NodeId, inputs: &[usize]) -> Result<NodeId> {
        let dec = self.decoder.as_ref().expect("abstractive variant");
        let tok = cx.p(self.encoder.tok);
        let x = cx.g.embedding(tok, inputs)?;
        Ok(dec.forward(cx, x, memory, None)?)
    }

    fn vocab_probs(&self, cx: &mut Fwd, states: NodeId) -> Result<NodeId> {
        let tok = cx.p(self.encoder.tok);
        let logits = cx.g.matmul_nt(states, tok)?;
        Ok(cx.g.softmax(logits, None)?)
    }

    /// Greedy transcription from the encoded n-best; returns decoder inputs
    /// (`[CLS]` followed by the generated tokens).
    fn greedy(&self, cx: &mut Fwd, memory: NodeId) -> Result<Vec<usize>> {
        let mut inputs = vec![CLS_ID];
        while inputs.len() <= MAX_SOURCE_LEN {
            let states = self.decoder_states(cx, memory, &inputs)?;
            let last = cx.g.value(states).rows() - 1;
            let row = cx.g.gather_rows(states, &[last])?;
            let p = self.vocab_probs(cx, row)?;
            let next = argmax(cx.g.value(p).data());
            if next == EOS_ID {
                break;
            }
            inputs.push(next);
        }
        Ok(inputs)
    }

    fn forward(&self, cx: &mut Fwd, hyps: &[Vec<String>], gold: Option<&[String]>, oracle: bool) -> Result<Outputs> {
        let batch = encode_summarizer_input(hyps, &self.vocab)?;
        let enc = self
            .encoder
            .forward(cx, &batch.ids[0], &batch.positions[0], Some(&batch.segments[0]), None)?;
        let cls = cx.g.gather_rows(enc, &batch.cls_positions)?;
        let (mut features, mut ext, mut summary_weights) = (cls, None, None);
        if let Some(head) = &self.summary {
            let w = cx.p(head.ext);
            let scores = cx.g.matmul_nt(w, cls)?;
            let ext_p = cx.g.softmax(scores, None)?;
            ext = oracle.then_some(ext_p);
            features = if self.config.hard_select {
                let pick = argmax(cx.g.value(ext_p).data());
                cx.g.gather_rows(cls, &[pick])?
            } else {
                let q = cx.p(head.query);
                let (s, weights) = head.attn.forward_with_weights(cx, q, cls, None, false)?;
                let mut avg = weights[0];
                for &w in &weights[1..] {
                    avg = cx.g.add(avg, w)?;
                }
                summary_weights = Some(cx.g.scale(avg, 1.0 / weights.len() as f64));
                s
            };
        }
        let mut gen = None;
        if self.decoder.is_some() {
            let inputs = match gold {
                Some(g) => {
                    let g = &g[..g.len().min(MAX_SOURCE_LEN)];
                    let mut inputs = vec![CLS_ID];
                    inputs.extend(self.vocab.encode(g));
                    inputs
                }
                None => self.greedy(cx, enc)?,
            };
            let states = self.decoder_states(cx, enc, &inputs)?;
            if gold.is_some() {
                let mut targets = inputs[1..].to_vec();
                targets.push(EOS_ID);
                gen = Some((states, targets));
            }
            let pooled = cx.g.mean_rows(states);
            features = cx.g.concat_cols(&[features, pooled])?;
        }
        let h = self.hidden.forward(cx, features)?;
        let h = cx.g.tanh(h);
        let logits = self.out.forward(cx, h)?;
        let probs = cx.g.softmax(logits, None)?;
        Ok(Outputs {
            probs,
            ext,
            gen,
            summary_weights,
        })
    }

    /// Domain distribution and its argmax (lowest id on ties).
    pub fn predict_domain(&self, input: DcInput) -> Result<DomainPrediction> {
        let hyps = self.hypotheses_of(input)?;
        let mut cx = Fwd::eval(&self.store);
        let o = self.forward(&mut cx, &hyps, None, false)?;
        let probs = cx.g.value(o.probs).data().to_vec();
        let label = argmax(&probs);
        Ok(DomainPrediction {
            probs,
            label,
            summary_weights: o.summary_weights.map(|w| cx.g.value(w).data().to_vec()),
        })
    }

    /// The input this variant sees for a record at test time.
    pub fn test_input(&self, r: &NBestRecord) -> Vec<Vec<String>> {
        match self.variant {
            DcVariant::Baseline => vec![r.nbest.best().tokens.clone()],
            _ => r.nbest.token_lists(),
        }
    }

    pub fn predict_record(&self, r: &NBestRecord) -> Result<DomainPrediction> {
        let hyps = self.test_input(r);
        match self.variant {
            DcVariant::Baseline => self.predict_domain(DcInput::Tokens(&hyps[0])),
            _ => self.predict_domain(DcInput::NBest(&hyps)),
        }
    }

    /// Greedy transcription of an n-best list (abstractive variant only).
    pub fn transcribe(&self, hyps: &[Vec<String>]) -> Result<Vec<String>> {
        if self.decoder.is_none() {
            return Err(DcError::Contract(format!("{} has no decoder", self.variant)));
        }
        let batch = encode_summarizer_input(hyps, &self.vocab)?;
        let mut cx = Fwd::eval(&self.store);
        let enc = self.encoder.forward(
            &mut cx,
            &batch.ids[0],
            &batch.positions[0],
            Some(&batch.segments[0]),
            None,
        )?;
        let ids = self.greedy(&mut cx, enc)?;
        Ok(ids[1..]
            .iter()
            .map(|&i| self.vocab.token(i).unwrap_or("[UNK]").to_string())
            .collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut cp = Checkpoint::default();
        let e = &self.config.encoder;
        for (k, v) in [
            ("kind", "dc".to_string()),
            ("variant", self.variant.to_string()),
            ("layers", e.layers.to_string()),
            ("heads", e.heads.to_string()),
            ("dim", e.dim.to_string()),
            ("ffn", e.ffn.to_string()),
            ("max_positions", e.max_positions.to_string()),
            ("dropout", e.dropout.to_string()),
            ("w_ext", self.config.w_ext.to_string()),
            ("w_abs", self.config.w_abs.to_string()),
            ("hard_select", self.config.hard_select.to_string()),
        ] {
            cp.meta.insert(k.to_string(), v);
        }
        cp.sections.insert("vocab".into(), self.vocab.to_text());
        cp.sections.insert("domains".into(), self.domains.join("\n") + "\n");
        cp.params = self.store.clone();
        cp
    }

    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self> {
        let num = |k: &str| -> Result<f64> {
            cp.meta(k)?
                .parse::<f64>()
                .map_err(|_| DcError::Config(format!("checkpoint meta {k} is not a number")))
        };
        if cp.meta("kind")? != "dc" {
            return Err(DcError::Config("not a domain-classifier checkpoint".into()));
        }
        let variant: DcVariant = cp.meta("variant")?.parse()?;
        let config = DcConfig {
            encoder: EncoderConfig {
                layers: num("layers")? as usize,
                heads: num("heads")? as usize,
                dim: num("dim")? as usize,
                ffn: num("ffn")? as usize,
                max_positions: num("max_positions")? as usize,
                dropout: num("dropout")?,
            },
            w_ext: num("w_ext")?,
            w_abs: num("w_abs")?,
            hard_select: cp.meta("hard_select")? == "true",
        };
        let vocab = Vocab::from_text(cp.section("vocab")?)?;
        let domains = cp.section("domains")?.lines().map(String::from).collect();
        let mut m = DcModel::new(variant, config, vocab, domains, 0)?;
        m.store.load_from(&cp.params)?;
        Ok(m)
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone)]
pub struct DcRun {
    pub model: DcModel,
    pub best_epoch: usize,
    pub best_validation: f64,
    pub history: Vec<EpochLog>,
}

fn domains_of(train: &[NBestRecord], others: &[&[NBestRecord]]) -> Result<Vec<String>> {
    let domains: Vec<String> = train
        .iter()
        .map(|r| r.domain().to_string())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    for set in others {
        if let Some(r) = set.iter().find(|r| !domains.iter().any(|d| d == r.domain())) {
            return Err(DcError::Config(format!(
                "domain {} absent from the training set",
                r.domain()
            )));
        }
    }
    if train.is_empty() {
        return Err(DcError::Config("empty training set".into()));
    }
    Ok(domains)
}

fn accuracy(model: &DcModel, records: &[NBestRecord], gold_input: bool) -> Result<f64> {
    if records.is_empty() {
        return Ok(0.0);
    }
    let idx = model.domain_index();
    let mut correct = 0usize;
    for r in records {
        let p = if gold_input {
            model.predict_domain(DcInput::Tokens(&r.gold.tokens))?
        } else {
            model.predict_record(r)?
        };
        correct += (p.label == idx[r.domain()]) as usize;
    }
    // With one label per record, micro-F1 equals accuracy.
    Ok(100.0 * correct as f64 / records.len() as f64)
}

fn run_fit(
    mut model: DcModel,
    train: &[NBestRecord],
    validation: &[NBestRecord],
    schedule: &TrainSchedule,
    mut optimizer: Optimizer,
    fine_tune: bool,
) -> Result<DcRun> {
    let variant = model.variant;
    let idx: Vec<usize> = {
        let m = model.domain_index();
        train.iter().map(|r| m[r.domain()]).collect()
    };
    let config = model.config;
    let gold_input = variant == DcVariant::Baseline;
    let template = model.clone();
    let eval_model = std::cell::RefCell::new(model.clone());
    let outcome = fit(
        &mut model.store,
        &mut optimizer,
        train.len(),
        config.encoder.dropout,
        schedule,
        |cx, i| {
            let r = &train[i];
            let hyps = if gold_input {
                vec![r.gold.tokens.clone()]
            } else {
                r.nbest.token_lists()
            };
            let gold = (variant == DcVariant::BSumExtAbs).then_some(r.gold.tokens.as_slice());
            let o = template
                .forward(cx, &hyps, gold, variant != DcVariant::Baseline)
                .map_err(tensor_err)?;
            let mut loss = cx.g.nll(o.probs, &[idx[i]])?;
            if let Some(e) = o.ext {
                let l = cx.g.nll(e, &[oracle_label(&hyps, &r.gold.tokens)])?;
                let l = cx.g.scale(l, config.w_ext);
                loss = cx.g.add(loss, l)?;
            }
            if let Some((states, targets)) = o.gen.filter(|_| fine_tune && config.w_abs > 0.0) {
                let p = template.vocab_probs(cx, states).map_err(tensor_err)?;
                let l = cx.g.nll(p, &targets)?;
                let l = cx.g.scale(l, config.w_abs);
                loss = cx.g.add(loss, l)?;
            }
            Ok(loss)
        },
        |store| {
            let mut m = eval_model.borrow_mut();
            m.store.clone_from(store);
            accuracy(&m, validation, gold_input).map_err(tensor_err)
        },
    )?;
    model.store = outcome.best;
    Ok(DcRun {
        model,
        best_epoch: outcome.best_epoch,
        best_validation: outcome.best_validation,
        history: outcome.history,
    })
}

fn tensor_err(e: DcError) -> TensorError {
    match e {
        DcError::Tensor(t) => t,
        other => TensorError::Contract(other.to_string()),
    }
}

fn setup(
    variant: DcVariant,
    config: DcConfig,
    vocab: &Vocab,
    train: &[NBestRecord],
    validation: &[NBestRecord],
    schedule: &TrainSchedule,
) -> Result<DcModel> {
    schedule.validate(MAX_EPOCHS)?;
    let domains = domains_of(train, &[validation])?;
    DcModel::new(variant, config, vocab.clone(), domains, schedule.seed)
}

/// Trained on transcriptions; validated on transcriptions.
pub fn train_dc_baseline(
    train: &[NBestRecord],
    validation: &[NBestRecord],
    vocab: &Vocab,
    config: DcConfig,
    schedule: &TrainSchedule,
) -> Result<DcRun> {
    let model = setup(DcVariant::Baseline, config, vocab, train, validation, schedule)?;
    let opt = Optimizer::single(&model.store, schedule.lr);
    run_fit(model, train, validation, schedule, opt, false)
}

/// Extractive summarizer trained on n-best lists.
pub fn train_bsumext(
    train: &[NBestRecord],
    validation: &[NBestRecord],
    vocab: &Vocab,
    config: DcConfig,
    schedule: &TrainSchedule,
) -> Result<DcRun> {
    let model = setup(DcVariant::BSumExt, config, vocab, train, validation, schedule)?;
    let opt = Optimizer::single(&model.store, schedule.lr);
    run_fit(model, train, validation, schedule, opt, false)
}

/// Teaches the encoder/decoder to regenerate the transcription from the
/// n-best list. Selection by teacher-forced token accuracy on validation.
pub fn pretrain_abstractive(
    train: &[NBestRecord],
    validation: &[NBestRecord],
    vocab: &Vocab,
    config: DcConfig,
    schedule: &TrainSchedule,
) -> Result<DcRun> {
    let mut model = setup(DcVariant::BSumExtAbs, config, vocab, train, validation, schedule)?;
    let mut opt = Optimizer::single(&model.store, schedule.lr);
    let template = model.clone();
    let eval_model = std::cell::RefCell::new(model.clone());
    let outcome = fit(
        &mut model.store,
        &mut opt,
        train.len(),
        config.encoder.dropout,
        schedule,
        |cx, i| {
            let r = &train[i];
            let o = template
                .forward(cx, &r.nbest.token_lists(), Some(&r.gold.tokens), false)
                .map_err(tensor_err)?;
            let (states, targets) = o.gen.expect("abstractive variant");
            let p = template.vocab_probs(cx, states).map_err(tensor_err)?;
            cx.g.nll(p, &targets)
        },
        |store| {
            let mut m = eval_model.borrow_mut();
            m.store.clone_from(store);
            token_accuracy(&m, validation).map_err(tensor_err)
        },
    )?;
    model.store = outcome.best;
    Ok(DcRun {
        model,
        best_epoch: outcome.best_epoch,
        best_validation: outcome.best_validation,
        history: outcome.history,
    })
}

/// Teacher-forced next-token accuracy (percent) of the decoder.
pub fn token_accuracy(model: &DcModel, records: &[NBestRecord]) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for r in records {
        let mut cx = Fwd::eval(&model.store);
        let o = model.forward(&mut cx, &r.nbest.token_lists(), Some(&r.gold.tokens), false)?;
        let (states, targets) = o.gen.ok_or_else(|| DcError::Contract("model has no decoder".into()))?;
        let p = model.vocab_probs(&mut cx, states)?;
        let v = cx.g.value(p);
        for (row, &t) in targets.iter().enumerate() {
            hit += (argmax(v.row(row)) == t) as usize;
            total += 1;
        }
    }
    Ok(if total == 0 {
        0.0
    } else {
        100.0 * hit as f64 / total as f64
    })
}

/// Fine-tunes a pretrained abstractive model on classification plus
/// extraction, with the encoder and the rest on separate optimizers.
pub fn train_bsumextabs(
    train: &[NBestRecord],
    validation: &[NBestRecord],
    pretrained: Option<&DcModel>,
    schedule: &TrainSchedule,
) -> Result<DcRun> {
    let pre = pretrained.ok_or_else(|| DcError::Contract("fine-tuning needs pretrained parameters".into()))?;
    if pre.variant != DcVariant::BSumExtAbs {
        return Err(DcError::Contract(format!("pretrained model is {}", pre.variant)));
    }
    schedule.validate(MAX_EPOCHS)?;
    domains_of(train, &[validation])?;
    let model = pre.clone();
    let opt = Optimizer::split(&model.store, "encoder.", schedule.lr_encoder, schedule.lr_decoder);
    run_fit(model, train, validation, schedule, opt, true)
}

/// Micro-F1 ingredients: `(gold, predicted)` domain names per record.
pub fn predictions(model: &DcModel, records: &[NBestRecord]) -> Result<Vec<(String, String)>> {
    records
        .iter()
        .map(|r| {
            let p = model.predict_record(r)?;
            Ok((r.domain().to_string(), model.domains[p.label].clone()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn small() -> DcConfig {
        DcConfig {
            encoder: EncoderConfig {
                layers: 1,
                heads: 2,
                dim: 8,
                ffn: 16,
                max_positions: 96,
                dropout: 0.0,
            },
            ..DcConfig::default()
        }
    }

    fn domains() -> Vec<String> {
        vec!["Music".into(), "Shopping".into(), "Weather".into()]
    }

    #[test]
    fn oracle_prefers_lowest_rank_on_ties() {
        let gold = tokenize("play madonna");
        let hyps = vec![
            tokenize("pay madonna"),
            tokenize("play madonna"),
            tokenize("play madonna x"),
        ];
        assert_eq!(oracle_label(&hyps, &gold), 1);
        let hyps = vec![tokenize("pay madonna"), tokenize("play madona")];
        assert_eq!(oracle_label(&hyps, &gold), 0);
    }

    #[test]
    fn untrained_outputs_are_distributions() {
        let vocab = Vocab::from_words(["play", "madonna", "muse"]);
        let hyps = vec![tokenize("play muse"), tokenize("play madonna")];
        for v in [DcVariant::Baseline, DcVariant::BSumExt, DcVariant::BSumExtAbs] {
            for seed in 0..3 {
                let m = DcModel::new(v, DcConfig::default(), vocab.clone(), domains(), seed).unwrap();
                let p = match v {
                    DcVariant::Baseline => m.predict_domain(DcInput::Tokens(&hyps[0])).unwrap(),
                    _ => m.predict_domain(DcInput::NBest(&hyps)).unwrap(),
                };
                assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(
                    p.probs.iter().all(|&q| (q - 1.0 / 3.0).abs() < 0.2),
                    "{v} {:?}",
                    p.probs
                );
                if v == DcVariant::BSumExt {
                    let w = p.summary_weights.unwrap();
                    assert_eq!(w.len(), 2);
                    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn variant_input_mismatch_is_rejected() {
        let vocab = Vocab::from_words(["a"]);
        let b = DcModel::new(DcVariant::Baseline, small(), vocab.clone(), domains(), 0).unwrap();
        assert!(matches!(
            b.predict_domain(DcInput::NBest(&[tokenize("a")])),
            Err(DcError::Contract(_))
        ));
        let s = DcModel::new(DcVariant::BSumExt, small(), vocab, domains(), 0).unwrap();
        assert!(matches!(
            s.predict_domain(DcInput::Tokens(&tokenize("a"))),
            Err(DcError::Contract(_))
        ));
        assert!(matches!(
            s.predict_domain(DcInput::NBest(&[])),
            Err(DcError::Contract(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let vocab = Vocab::from_words(["play", "madonna"]);
        let m = DcModel::new(DcVariant::BSumExtAbs, small(), vocab, domains(), 5).unwrap();
        let back = DcModel::from_checkpoint(&Checkpoint::from_text(&m.to_checkpoint().to_text()).unwrap()).unwrap();
        let hyps = vec![tokenize("play madonna")];
        assert_eq!(
            m.predict_domain(DcInput::NBest(&hyps)).unwrap(),
            back.predict_domain(DcInput::NBest(&hyps)).unwrap()
        );
    }

    #[test]
    fn fine_tuning_requires_pretraining() {
        assert!(matches!(
            train_bsumextabs(&[], &[], None, &TrainSchedule::default()),
            Err(DcError::Contract(_))
        ));
    }
}
