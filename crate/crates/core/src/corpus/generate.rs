use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{tokenize, CorpusError, GoldUtterance, Result, SemanticAnnotation, SlotSpan};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct IntentSpec {
    pub name: String,
    /// Whitespace-separated words; `{Label}` expands to a lexicon entry.
    pub templates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub name: String,
    pub count: usize,
    pub intents: Vec<IntentSpec>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusConfig {
    pub domains: Vec<DomainSpec>,
    /// Slot label to its possible (possibly multi-word) values.
    pub lexicons: BTreeMap<String, Vec<String>>,
}

enum Piece<'a> {
    Word(&'a str),
    Slot(&'a str),
}

fn pieces(template: &str) -> impl Iterator<Item = Piece<'_>> {
    template
        .split_whitespace()
        .map(|w| match w.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
            Some(label) => Piece::Slot(label),
            None => Piece::Word(w),
        })
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for d in &self.domains {
            if !seen.insert(&d.name) {
                return Err(CorpusError::Config(format!("duplicate domain {}", d.name)));
            }
            if d.intents.is_empty() {
                return Err(CorpusError::Config(format!("domain {} has no intents", d.name)));
            }
            for intent in &d.intents {
                if intent.templates.is_empty() {
                    return Err(CorpusError::Config(format!("intent {} has no templates", intent.name)));
                }
                for t in &intent.templates {
                    if t.split_whitespace().next().is_none() {
                        return Err(CorpusError::Config(format!(
                            "intent {} has an empty template",
                            intent.name
                        )));
                    }
                    for p in pieces(t) {
                        if let Piece::Slot(label) = p {
                            let ok = self
                                .lexicons
                                .get(label)
                                .is_some_and(|values| values.iter().any(|v| !tokenize(v).is_empty()));
                            if !ok {
                                return Err(CorpusError::Config(format!(
                                    "slot {label} in template \"{t}\" has an empty lexicon"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Every domain generates `count` utterances.
    pub fn with_count(mut self, count: usize) -> Self {
        for d in &mut self.domains {
            d.count = count;
        }
        self
    }

    pub fn domain_names(&self) -> Vec<String> {
        self.domains.iter().map(|d| d.name.clone()).collect()
    }

    pub fn domain(&self, name: &str) -> Option<&DomainSpec> {
        self.domains.iter().find(|d| d.name == name)
    }

    /// Slot labels referenced by the domain's templates.
    pub fn slot_labels(&self, domain: &str) -> BTreeSet<String> {
        self.domain(domain)
            .into_iter()
            .flat_map(|d| &d.intents)
            .flat_map(|i| &i.templates)
            .flat_map(|t| pieces(t))
            .filter_map(|p| match p {
                Piece::Slot(l) => Some(l.to_string()),
                Piece::Word(_) => None,
            })
            .collect()
    }
}

fn expand(
    template: &str,
    lexicons: &BTreeMap<String, Vec<String>>,
    rng: &mut ChaCha8Rng,
) -> (Vec<String>, Vec<SlotSpan>) {
    let mut tokens = Vec::new();
    let mut slots = Vec::new();
    for p in pieces(template) {
        match p {
            Piece::Word(w) => tokens.push(w.to_lowercase()),
            Piece::Slot(label) => {
                let values: Vec<&String> = lexicons[label].iter().filter(|v| !tokenize(v).is_empty()).collect();
                let value = tokenize(values.choose(rng).expect("validated lexicon"));
                let start = tokens.len();
                tokens.extend(value);
                slots.push(SlotSpan {
                    label: label.to_string(),
                    start,
                    end: tokens.len(),
                });
            }
        }
    }
    (tokens, slots)
}

/// Deterministic annotated utterances: `count` per domain, in config order.
pub fn generate_gold(config: &CorpusConfig, seed: u64) -> Result<Vec<GoldUtterance>> {
    config.validate()?;
    let mut out = Vec::new();
    for (di, domain) in config.domains.iter().enumerate() {
        for i in 0..domain.count {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, di as u64, i as u64));
            let intent = domain.intents.choose(&mut rng).expect("validated intents");
            let template = intent.templates.choose(&mut rng).expect("validated templates");
            let (tokens, slots) = expand(template, &config.lexicons, &mut rng);
            out.push(GoldUtterance {
                tokens,
                annotation: SemanticAnnotation {
                    domain: domain.name.clone(),
                    intent: intent.name.clone(),
                    slots,
                },
            });
        }
    }
    Ok(out)
}
