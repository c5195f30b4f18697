//! Plain-text and CSV renderings of the evaluation artifacts.

use super::{DcEval, DetectReport, IcnerEval};
use crate::corpus::OppCostTable;
use crate::eval::{delta_sem, SemERReport, SplitKind};

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.2}"))
}

fn bar(count: usize, max: usize, width: usize) -> String {
    if max == 0 {
        return String::new();
    }
    "#".repeat((count * width).div_ceil(max))
}

pub fn dc_table(ev: &DcEval) -> String {
    let mut s = String::from("Domain classification (F1 %, Δerr % against the baseline; negative is better)\n");
    s.push_str(&format!(
        "{:<12} {:<11} {:>6} {:>9} {:>9} {:>11} {:>11}\n",
        "model", "split", "n", "F1 micro", "F1 macro", "Δerr micro", "Δerr macro"
    ));
    for r in &ev.rows {
        let (dmi, dma) = match r.baseline {
            None => ("-".to_string(), "-".to_string()),
            Some(_) => (opt(r.delta_err_micro), opt(r.delta_err_macro)),
        };
        s.push_str(&format!(
            "{:<12} {:<11} {:>6} {:>9.2} {:>9.2} {:>11} {:>11}\n",
            r.model,
            r.split.name(),
            r.n,
            r.f1_micro,
            r.f1_macro,
            dmi,
            dma
        ));
    }
    for k in &ev.empty {
        s.push_str(&format!("{} split: n=0, metrics undefined\n", k.name()));
    }
    let deltas: Vec<_> = ev
        .rows
        .iter()
        .filter_map(|r| {
            r.delta_err_micro
                .map(|d| (format!("{} {}", r.model, r.split.name()), d))
        })
        .collect();
    if !deltas.is_empty() {
        s.push_str("\nΔerr micro\n");
        let max = deltas.iter().map(|d| d.1.abs()).fold(0.0f64, f64::max).max(1e-9);
        for (label, d) in deltas {
            let n = ((d.abs() / max) * 30.0).round() as usize;
            let c = if d < 0.0 { "-" } else { "+" };
            s.push_str(&format!("{label:<24} {d:>8.2} {}\n", c.repeat(n)));
        }
    }
    s
}

pub fn dc_csv(ev: &DcEval) -> String {
    let mut s = String::from("model,split,n,f1_micro,f1_macro,baseline,delta_err_micro,delta_err_macro\n");
    let cell = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.4}"));
    for r in &ev.rows {
        s.push_str(&format!(
            "{},{},{},{:.4},{:.4},{},{},{}\n",
            r.model,
            r.split.name(),
            r.n,
            r.f1_micro,
            r.f1_macro,
            r.baseline.as_deref().unwrap_or(""),
            cell(r.delta_err_micro),
            cell(r.delta_err_macro)
        ));
    }
    for k in &ev.empty {
        s.push_str(&format!(",{},0,,,,,\n", k.name()));
    }
    s
}

/// `(label, SemER baseline, SemER n-best, Δsem)` per split, domains first
/// and then the pooled row.
type IcnerRow = (String, [(Option<f64>, Option<f64>, Option<f64>); 2]);

fn icner_rows(ev: &IcnerEval) -> Vec<IcnerRow> {
    let get = |model: &str, split: SplitKind| -> Option<&SemERReport> {
        ev.models.get(model).and_then(|m| m.get(split.name()))
    };
    let cell = |split: SplitKind, domain: Option<&str>| {
        let pick = |r: Option<&SemERReport>| match (r, domain) {
            (Some(r), _) if r.records == 0 => None,
            (Some(r), d) => r.semer(d),
            (None, _) => None,
        };
        let b = pick(get("Baseline", split));
        let e = pick(get("NBestPtr", split));
        let d = match (e, b) {
            (Some(e), Some(b)) => delta_sem(e, b).ok(),
            _ => None,
        };
        (b, e, d)
    };
    let mut rows: Vec<IcnerRow> = ev
        .domains
        .iter()
        .map(|d| {
            (
                d.clone(),
                [cell(SplitKind::Full, Some(d)), cell(SplitKind::Mismatched, Some(d))],
            )
        })
        .collect();
    rows.push((
        "Overall".to_string(),
        [cell(SplitKind::Full, None), cell(SplitKind::Mismatched, None)],
    ));
    rows
}

pub fn icner_table(ev: &IcnerEval) -> String {
    let mut s = format!(
        "Intent and slot parsing (SemER, Δsem % of n-best pointer model against the baseline)\ndecoding: {}\n",
        ev.decode
    );
    s.push_str(&format!(
        "{:<10} {:>10} {:>10} {:>9} {:>10} {:>10} {:>9}\n",
        "domain", "full base", "full nbest", "full Δsem", "mm base", "mm nbest", "mm Δsem"
    ));
    let sem = |v: Option<f64>| v.map_or_else(|| "n=0".to_string(), |x| format!("{x:.4}"));
    for (label, cells) in icner_rows(ev) {
        s.push_str(&format!("{label:<10}"));
        for (b, e, d) in cells {
            s.push_str(&format!(" {:>10} {:>10} {:>9}", sem(b), sem(e), opt(d)));
        }
        s.push('\n');
    }
    s
}

pub fn icner_csv(ev: &IcnerEval) -> String {
    let mut s = String::from("domain,split,semer_baseline,semer_nbest,delta_sem\n");
    let cell = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
    for (label, cells) in icner_rows(ev) {
        for (split, (b, e, d)) in ["full", "mismatched"].into_iter().zip(cells) {
            s.push_str(&format!("{label},{split},{},{},{}\n", cell(b), cell(e), cell(d)));
        }
    }
    s
}

pub fn detect_text(r: &DetectReport) -> String {
    let h = &r.histogram;
    let mut s = String::from("Mean n-best confidence, full test set vs its mismatched subset\n");
    let max = h.full.iter().copied().max().unwrap_or(0);
    for (k, (f, m)) in h.full.iter().zip(&h.mismatched).enumerate() {
        s.push_str(&format!(
            "[{:.2},{:.2}) {:>5} {:>5}  {:<40} {}\n",
            h.edges[k],
            h.edges[k + 1],
            f,
            m,
            bar(*f, max, 40),
            bar(*m, max, 40).replace('#', "*")
        ));
    }
    s.push_str(&format!(
        "mean full {:.4}, mean mismatched {}, KS {}\n",
        h.mean_full,
        h.mean_mismatched
            .map_or_else(|| "n=0".to_string(), |x| format!("{x:.4}")),
        h.ks.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
    ));
    if let Some(w) = &r.detector.warning {
        s.push_str(&format!("warning: {w}\n"));
    }
    let q = &r.quality;
    s.push_str(&format!(
        "threshold {:.4} (Youden J {:.4} on validation)\ntest n={} accuracy {:.4} sensitivity {:.4} specificity {:.4} ROC area {:.4}\n",
        r.detector.threshold, r.detector.youden_j, q.n, q.accuracy, q.sensitivity, q.specificity, q.roc_area
    ));
    s
}

pub fn detect_csv(r: &DetectReport) -> String {
    let h = &r.histogram;
    let mut s = String::from("bin_low,bin_high,full,mismatched\n");
    for (k, (f, m)) in h.full.iter().zip(&h.mismatched).enumerate() {
        s.push_str(&format!("{:.2},{:.2},{f},{m}\n", h.edges[k], h.edges[k + 1]));
    }
    s
}

pub fn compose(
    opp: Option<&OppCostTable>,
    dc: Option<&DcEval>,
    ic: Option<&IcnerEval>,
    det: Option<&DetectReport>,
) -> String {
    let sections: Vec<String> = [
        opp.map(OppCostTable::to_text),
        dc.map(dc_table),
        ic.map(icner_table),
        det.map(detect_text),
    ]
    .into_iter()
    .flatten()
    .collect();
    sections.join("\n")
}
