use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{tokenize, CorpusError, GoldUtterance, Hypothesis, NBestList, Result, MAX_HYPOTHESES};
use crate::edit::levenshtein;

/// Near-homophone alternatives keyed by one token (substitution, split) or
/// two adjacent tokens (merge).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfusionTable {
    entries: BTreeMap<Vec<String>, Vec<Vec<String>>>,
}

impl ConfusionTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// `key` is one or two words; each alternative one or more words.
    pub fn insert(&mut self, key: &str, alternatives: &[&str]) {
        let k = tokenize(key);
        assert!(
            matches!(k.len(), 1 | 2),
            "confusion key must be one or two words: {key}"
        );
        let entry = self.entries.entry(k).or_default();
        for alt in alternatives {
            let a = tokenize(alt);
            if !a.is_empty() && !entry.contains(&a) {
                entry.push(a);
            }
        }
    }

    pub fn from_pairs(pairs: &[(&str, &[&str])]) -> Self {
        let mut t = Self::new();
        for (k, alts) in pairs {
            t.insert(k, alts);
        }
        t
    }

    pub fn alternatives(&self, key: &[String]) -> &[Vec<String>] {
        self.entries.get(key).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<String>, &Vec<Vec<String>>)> {
        self.entries.iter()
    }
}

/// Word-level ASR error channel.
///
/// The first sample is the channel's primary reading (the rank-0 candidate);
/// further samples are drawn from the transcription at `alt_scale` times the
/// base rates. A candidate's confidence is `exp(-λ·(d + m))·(1 + u)` where `d`
/// is its token edit distance to the primary reading, `m` the number of edits
/// separating the primary reading from the transcription, and
/// `u ~ U(-rank_noise, rank_noise)`. An unaltered transcription scores exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub sub: f64,
    pub del: f64,
    pub ins: f64,
    pub confusions: ConfusionTable,
    pub insertions: Vec<String>,
    pub lambda: f64,
    pub rank_noise: f64,
    pub alt_scale: f64,
    pub samples: usize,
}

impl NoiseModel {
    /// A channel that never alters its input.
    pub fn identity() -> Self {
        NoiseModel {
            sub: 0.0,
            del: 0.0,
            ins: 0.0,
            confusions: ConfusionTable::new(),
            insertions: Vec::new(),
            lambda: 0.5,
            rank_noise: 0.05,
            alt_scale: 1.0,
            samples: 12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [("sub", self.sub), ("del", self.del), ("ins", self.ins)];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(CorpusError::Config(format!("noise.{name} = {p} outside [0, 1]")));
            }
        }
        if self.sub + self.del > 1.0 {
            return Err(CorpusError::Config("noise.sub + noise.del exceeds 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(CorpusError::Config(format!("noise.lambda = {}", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.rank_noise) {
            return Err(CorpusError::Config(format!("noise.rank_noise = {}", self.rank_noise)));
        }
        if !(self.alt_scale >= 0.0 && self.alt_scale.is_finite()) {
            return Err(CorpusError::Config(format!("noise.alt_scale = {}", self.alt_scale)));
        }
        if self.samples == 0 {
            return Err(CorpusError::Config("noise.samples must be positive".into()));
        }
        if self.ins > 0.0 && self.insertions.is_empty() {
            return Err(CorpusError::Config("insertions enabled without insertion words".into()));
        }
        Ok(())
    }

    /// One pass of the channel at `scale` times the base rates.
    fn sample(&self, gold: &[String], scale: f64, rng: &mut impl Rng) -> Vec<String> {
        let mut sub = (self.sub * scale).min(1.0);
        let mut del = (self.del * scale).min(1.0);
        if sub + del > 1.0 {
            let total = sub + del;
            sub /= total;
            del /= total;
        }
        let ins = (self.ins * scale).min(1.0);
        let mut out = Vec::with_capacity(gold.len() + 2);
        let mut i = 0;
        while i < gold.len() {
            let r: f64 = rng.random();
            let mut consumed = 1;
            if r < sub {
                let uni = self.confusions.alternatives(&gold[i..i + 1]);
                let bi = if i + 1 < gold.len() {
                    self.confusions.alternatives(&gold[i..i + 2])
                } else {
                    &[]
                };
                let choices: Vec<(&Vec<String>, usize)> =
                    uni.iter().map(|a| (a, 1)).chain(bi.iter().map(|a| (a, 2))).collect();
                match choices.choose(rng) {
                    Some((alt, n)) => {
                        out.extend(alt.iter().cloned());
                        consumed = *n;
                    }
                    None => out.push(gold[i].clone()),
                }
            } else if r >= sub + del {
                out.push(gold[i].clone());
            }
            if ins > 0.0 && rng.random::<f64>() < ins {
                if let Some(w) = self.insertions.choose(rng) {
                    out.push(w.clone());
                }
            }
            i += consumed;
        }
        out
    }
}

/// Ranked, deduplicated hypotheses for one utterance.
pub fn corrupt_to_nbest(gold: &GoldUtterance, noise: &NoiseModel, rng: &mut impl Rng) -> NBestList {
    let tokens = &gold.tokens;
    let primary = (0..noise.samples)
        .map(|_| noise.sample(tokens, 1.0, rng))
        .find(|s| !s.is_empty())
        .unwrap_or_else(|| tokens.clone());
    // A misheard primary reading lowers confidence across the whole list.
    let misheard = levenshtein(&primary, tokens);
    let mut candidates: Vec<Vec<String>> = vec![primary.clone()];
    for _ in 1..noise.samples {
        let s = noise.sample(tokens, noise.alt_scale, rng);
        if !s.is_empty() && !candidates.contains(&s) {
            candidates.push(s);
        }
    }
    let mut hyps: Vec<Hypothesis> = candidates
        .into_iter()
        .map(|c| {
            let d = (levenshtein(&c, &primary) + misheard) as f64;
            let confidence = if d == 0.0 {
                1.0
            } else {
                let u = rng.random_range(-noise.rank_noise..=noise.rank_noise);
                ((-noise.lambda * d).exp() * (1.0 + u)).clamp(f64::MIN_POSITIVE, 1.0)
            };
            Hypothesis { tokens: c, confidence }
        })
        .collect();
    // Stable sort keeps generation order among equal confidences.
    hyps.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    hyps.truncate(MAX_HYPOTHESES);
    NBestList::new(hyps).expect("channel output satisfies list invariants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SemanticAnnotation;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gold(words: &str) -> GoldUtterance {
        GoldUtterance {
            tokens: tokenize(words),
            annotation: SemanticAnnotation {
                domain: "D".into(),
                intent: "I".into(),
                slots: vec![],
            },
        }
    }

    fn noisy() -> NoiseModel {
        NoiseModel {
            sub: 0.3,
            del: 0.05,
            ins: 0.05,
            confusions: ConfusionTable::from_pairs(&[
                ("who", &["how"]),
                ("nelson", &["my son", "samsung"]),
                ("who is", &["how"]),
                ("is", &["as"]),
            ]),
            insertions: vec!["uh".into()],
            alt_scale: 2.0,
            ..NoiseModel::identity()
        }
    }

    #[test]
    fn identity_channel_returns_gold_with_full_confidence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = gold("play some music");
        let n = corrupt_to_nbest(&g, &NoiseModel::identity(), &mut rng);
        assert_eq!(n.len(), 1);
        assert_eq!(n.best().tokens, g.tokens);
        assert_eq!(n.best().confidence, 1.0);
    }

    #[test]
    fn lists_are_ranked_distinct_and_bounded() {
        let noise = noisy();
        let g = gold("who is nelson");
        for seed in 0..300 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = corrupt_to_nbest(&g, &noise, &mut rng);
            assert!((1..=5).contains(&n.len()));
            for w in n.hypotheses().windows(2) {
                assert!(w[0].confidence >= w[1].confidence);
                assert_ne!(w[0].tokens, w[1].tokens);
            }
        }
    }

    #[test]
    fn gold_can_follow_a_confusable_first_reading() {
        let noise = noisy();
        let g = gold("who is nelson");
        let target = tokenize("how is my son");
        let found = (0..5000u64).any(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = corrupt_to_nbest(&g, &noise, &mut rng);
            n.best().tokens == target && n.rank_of(&g.tokens).is_some_and(|r| r > 0)
        });
        assert!(found);
    }

    #[test]
    fn invalid_probabilities_are_rejected() {
        let mut n = NoiseModel::identity();
        n.sub = 0.7;
        n.del = 0.6;
        assert!(n.validate().is_err());
        n.del = 0.1;
        n.ins = 0.1;
        assert!(n.validate().is_err(), "insertions need a word list");
        n.insertions.push("uh".into());
        assert!(n.validate().is_ok());
    }
}
