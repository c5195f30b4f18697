use serde::{Deserialize, Serialize};

use super::{CorpusError, NBestRecord, Result, MAX_HYPOTHESES};

/// Exact transcription matches at ranks 2..=5 as a percentage of the exact
/// matches at rank 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OppCostTable {
    /// `(n, percent)` for n = 2..=5.
    pub rows: Vec<(usize, f64)>,
    pub total: f64,
    /// Raw exact-match counts at ranks 1..=5.
    pub matches: [usize; MAX_HYPOTHESES],
    pub records: usize,
}

pub fn opportunity_cost(records: &[NBestRecord]) -> Result<OppCostTable> {
    if records.is_empty() {
        return Err(CorpusError::Invalid("opportunity cost of an empty corpus".into()));
    }
    let mut matches = [0usize; MAX_HYPOTHESES];
    for r in records {
        // Hypotheses are distinct, so at most one rank can match.
        if let Some(rank) = r.nbest.rank_of(&r.gold.tokens) {
            matches[rank] += 1;
        }
    }
    if matches[0] == 0 {
        return Err(CorpusError::NoExactMatches);
    }
    let rows: Vec<(usize, f64)> = (1..MAX_HYPOTHESES)
        .map(|rank| (rank + 1, 100.0 * matches[rank] as f64 / matches[0] as f64))
        .collect();
    let total = rows.iter().map(|(_, p)| p).sum();
    Ok(OppCostTable {
        rows,
        total,
        matches,
        records: records.len(),
    })
}

impl OppCostTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,percent_of_1best_matches\n");
        for (n, p) in &self.rows {
            s.push_str(&format!("{n},{p:.2}\n"));
        }
        s.push_str(&format!("total,{:.2}\n", self.total));
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "Exact matches in n-best as % of exact matches at 1-best ({} records, {} at 1-best)\n",
            self.records, self.matches[0]
        );
        s.push_str(&format!("{:<6} {:>10}\n", "n", "percent"));
        for (n, p) in &self.rows {
            s.push_str(&format!("{:<6} {:>10.2}\n", n, p));
        }
        s.push_str(&format!("{:<6} {:>10.2}\n", "total", self.total));
        s
    }
}
