//! Brute-force reference implementations for the metrics and random
//! generators for codec inputs.

use std::collections::BTreeSet;

use nbest_core::corpus::{SemanticAnnotation, SlotSpan};
use rand::rngs::StdRng;
use rand::Rng;

/// Counts straight from the definition: one pass per class over all pairs.
pub fn f1_oracle(pairs: &[(String, String)]) -> Option<(f64, f64)> {
    if pairs.is_empty() {
        return None;
    }
    let classes: BTreeSet<&str> = pairs.iter().flat_map(|(g, p)| [g.as_str(), p.as_str()]).collect();
    let f = |tp: usize, fp: usize, fn_: usize| {
        let p = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let r = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    };
    let (mut stp, mut sfp, mut sfn, mut sum) = (0, 0, 0, 0.0);
    for c in &classes {
        let tp = pairs.iter().filter(|(g, p)| g == c && p == c).count();
        let fp = pairs.iter().filter(|(g, p)| g != c && p == c).count();
        let fn_ = pairs.iter().filter(|(g, p)| g == c && p != c).count();
        stp += tp;
        sfp += fp;
        sfn += fn_;
        sum += f(tp, fp, fn_);
    }
    Some((100.0 * f(stp, sfp, sfn), 100.0 * sum / classes.len() as f64))
}

/// `(C, D, I, S)` from every label-respecting partial matching between
/// reference and hypothesis slots: most correct pairs first, then fewest
/// errors. The intent is a slot of its own label.
pub fn semer_oracle(reference: &[(String, String)], hypothesis: Option<&[(String, String)]>) -> (u64, u64, u64, u64) {
    let Some(hyp) = hypothesis else {
        return (0, 0, 0, reference.len() as u64);
    };
    fn go(
        r: usize,
        refs: &[(String, String)],
        hyp: &[(String, String)],
        used: &mut Vec<bool>,
        c: u64,
        s: u64,
        best: &mut (u64, u64),
    ) {
        if r == refs.len() {
            if (c, s) > *best {
                *best = (c, s);
            }
            return;
        }
        go(r + 1, refs, hyp, used, c, s, best);
        for h in 0..hyp.len() {
            if !used[h] && hyp[h].0 == refs[r].0 {
                used[h] = true;
                let hit = hyp[h].1 == refs[r].1;
                go(r + 1, refs, hyp, used, c + hit as u64, s + !hit as u64, best);
                used[h] = false;
            }
        }
    }
    let mut best = (0, 0);
    go(0, reference, hyp, &mut vec![false; hyp.len()], 0, 0, &mut best);
    let (c, s) = best;
    let d = reference.len() as u64 - c - s;
    let i = hyp.len() as u64 - c - s;
    (c, d, i, s)
}

pub const WORDS: &[&str] = &[
    "play", "the", "song", "by", "add", "milk", "rain", "in", "paris", "hello", "x", "jo",
];
pub const LABELS: &[&str] = &["SongName", "ArtistName", "ItemName", "CityName"];
pub const INTENTS: &[&str] = &["PlaySongIntent", "AddToListIntent", "GetWeatherIntent"];

pub fn random_slot_pairs(rng: &mut StdRng, max: usize) -> Vec<(String, String)> {
    let n = rng.random_range(0..=max);
    (0..n)
        .map(|_| {
            let l = LABELS[rng.random_range(0..2)];
            let v = WORDS[rng.random_range(0..3)];
            (l.to_string(), v.to_string())
        })
        .collect()
}

/// Random tokens with sorted, non-overlapping spans.
pub fn random_annotation(rng: &mut StdRng, max_len: usize) -> (Vec<String>, SemanticAnnotation) {
    let len = rng.random_range(1..=max_len);
    let tokens: Vec<String> = (0..len)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string())
        .collect();
    let mut slots = Vec::new();
    let mut at = 0;
    while at < len {
        at += rng.random_range(0..3);
        if at >= len || rng.random_bool(0.3) {
            break;
        }
        let end = rng.random_range(at + 1..=len.min(at + 3));
        slots.push(SlotSpan {
            label: LABELS[rng.random_range(0..LABELS.len())].to_string(),
            start: at,
            end,
        });
        at = end;
    }
    let annotation = SemanticAnnotation {
        domain: "D".into(),
        intent: INTENTS[rng.random_range(0..INTENTS.len())].to_string(),
        slots,
    };
    (tokens, annotation)
}
