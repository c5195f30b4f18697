use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

/// An intent plus `(label, value)` slot pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SlotSet {
    pub intent: String,
    pub slots: Vec<(String, String)>,
}

impl SlotSet {
    pub fn new(intent: impl Into<String>, slots: Vec<(String, String)>) -> Self {
        SlotSet {
            intent: intent.into(),
            slots: slots.into_iter().map(|(l, v)| (l, normalize(&v))).collect(),
        }
    }
}

fn normalize(v: &str) -> String {
    v.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SemERCounts {
    pub c: u64,
    pub d: u64,
    pub i: u64,
    pub s: u64,
}

impl SemERCounts {
    pub fn add(&mut self, o: &SemERCounts) {
        self.c += o.c;
        self.d += o.d;
        self.i += o.i;
        self.s += o.s;
    }

    /// `(D + I + S) / (C + D + S)`; zero when there is no reference at all.
    pub fn rate(&self) -> f64 {
        let den = self.c + self.d + self.s;
        if den == 0 {
            0.0
        } else {
            (self.d + self.i + self.s) as f64 / den as f64
        }
    }
}

/// Scores one hypothesis against its reference. `None` marks a parse failure:
/// every reference slot (intent included) counts as a substitution.
pub fn semer(reference: &SlotSet, hypothesis: Option<&SlotSet>) -> SemERCounts {
    let Some(hyp) = hypothesis else {
        return SemERCounts {
            s: 1 + reference.slots.len() as u64,
            ..Default::default()
        };
    };
    let mut out = SemERCounts::default();
    if reference.intent == hyp.intent {
        out.c += 1;
    } else {
        out.s += 1;
    }
    let mut by_label: BTreeMap<&str, (Vec<&str>, Vec<&str>)> = BTreeMap::new();
    for (l, v) in &reference.slots {
        by_label.entry(l).or_default().0.push(v);
    }
    for (l, v) in &hyp.slots {
        by_label.entry(l).or_default().1.push(v);
    }
    for (refs, mut hyps) in by_label.into_values() {
        let mut unmatched_refs = 0u64;
        for r in refs {
            match hyps.iter().position(|h| *h == r) {
                Some(k) => {
                    hyps.swap_remove(k);
                    out.c += 1;
                }
                None => unmatched_refs += 1,
            }
        }
        let left = hyps.len() as u64;
        let subs = unmatched_refs.min(left);
        out.s += subs;
        out.d += unmatched_refs - subs;
        out.i += left - subs;
    }
    out
}

/// Relative change in SemER (percent). Negative is better.
pub fn delta_sem(semer_experiment: f64, semer_baseline: f64) -> Result<f64> {
    if semer_baseline == 0.0 {
        return Err(EvalError::Undefined(
            "baseline SemER is 0; relative change undefined".into(),
        ));
    }
    Ok(100.0 * (semer_experiment - semer_baseline) / semer_baseline)
}

/// Counts pooled per domain and overall.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SemERReport {
    pub per_domain: BTreeMap<String, SemERCounts>,
    pub overall: SemERCounts,
    pub records: usize,
}

impl SemERReport {
    pub fn add(&mut self, domain: &str, counts: SemERCounts) {
        self.per_domain.entry(domain.to_string()).or_default().add(&counts);
        self.overall.add(&counts);
        self.records += 1;
    }

    pub fn semer(&self, domain: Option<&str>) -> Option<f64> {
        match domain {
            None => Some(self.overall.rate()),
            Some(d) => self.per_domain.get(d).map(SemERCounts::rate),
        }
    }

    /// Δsem per domain (in this report's order) and overall; `None` where the
    /// baseline lacks the domain or scores 0.
    pub fn delta_against(&self, baseline: &SemERReport) -> (Vec<(String, Option<f64>)>, Option<f64>) {
        let rows = self
            .per_domain
            .iter()
            .map(|(d, c)| {
                let b = baseline.per_domain.get(d).map(SemERCounts::rate);
                (d.clone(), b.and_then(|b| delta_sem(c.rate(), b).ok()))
            })
            .collect();
        (rows, delta_sem(self.overall.rate(), baseline.overall.rate()).ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(intent: &str, slots: &[(&str, &str)]) -> SlotSet {
        SlotSet::new(
            intent,
            slots.iter().map(|(l, v)| (l.to_string(), v.to_string())).collect(),
        )
    }

    #[test]
    fn worked_examples() {
        let r = set("Play", &[("ArtistName", "madonna"), ("SongName", "vogue")]);
        let c = semer(&r, Some(&r));
        assert_eq!((c.c, c.d, c.i, c.s), (3, 0, 0, 0));
        assert_eq!(c.rate(), 0.0);

        let c = semer(
            &set("Play", &[("ArtistName", "madonna")]),
            Some(&set("Play", &[("ArtistName", "mad")])),
        );
        assert_eq!((c.c, c.s), (1, 1));
        assert_eq!(c.rate(), 0.5);

        let c = semer(&set("Play", &[]), Some(&set("Play", &[("ArtistName", "mad")])));
        assert_eq!((c.c, c.i), (1, 1));
        assert_eq!(c.rate(), 1.0);
    }

    #[test]
    fn failures_and_intent_errors() {
        let r = set("Play", &[("ArtistName", "madonna")]);
        let c = semer(&r, None);
        assert_eq!((c.s, c.i, c.c, c.d), (2, 0, 0, 0));
        let c = semer(&r, Some(&set("Pause", &[])));
        assert_eq!((c.s, c.d), (1, 1));
    }

    #[test]
    fn whitespace_collapses() {
        let c = semer(
            &set("P", &[("A", "mad  owner")]),
            Some(&set("P", &[("A", " mad owner ")])),
        );
        assert_eq!(c.rate(), 0.0);
    }

    #[test]
    fn delta_sem_cases() {
        assert!((delta_sem(0.177, 0.20).unwrap() + 11.5).abs() < 1e-9);
        assert_eq!(delta_sem(0.3, 0.3).unwrap(), 0.0);
        assert!(delta_sem(0.1, 0.0).is_err());
    }
}
