//! End-to-end orchestration: corpus files, training, evaluation and the
//! collated report, all under one output directory.

mod config;
pub mod report;

pub use config::{RunConfig, Settings};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::codec::build_vocab;
use crate::corpus::{
    build_and_split, build_records, generate_gold, opportunity_cost, read_jsonl, record_to_json_line, NBestRecord,
    Splits,
};
use crate::dc::{self, DcModel, DcRun, DcVariant};
use crate::eval::{
    confidence_histogram, fit_threshold_detector, semer, ConfidenceHistogram, ConfusionTally, DetectorQuality,
    MetricsReport, SemERReport, SplitKind, ThresholdDetector,
};
use crate::icner::{self, IcnerRun, IcnerVariant, S2SPtrModel};
use crate::train::EpochLog;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("{0}")]
    Internal(String),
}

impl PipelineError {
    /// 2 for usage errors and missing inputs, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) | PipelineError::MissingInput(_) => 2,
            PipelineError::Internal(_) => 1,
        }
    }
}

macro_rules! internal_from {
    ($($t:ty),*) => {$(
        impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                PipelineError::Internal(e.to_string())
            }
        }
    )*};
}

internal_from!(
    crate::corpus::CorpusError,
    crate::dc::DcError,
    crate::icner::IcnerError,
    crate::eval::EvalError,
    crate::checkpoint::CheckpointError,
    serde_json::Error
);

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GenCorpus,
    OppCost,
    TrainDc,
    TrainIcner,
    EvalDc,
    EvalIcner,
    DetectMismatch,
    Report,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::GenCorpus,
        Command::OppCost,
        Command::TrainDc,
        Command::TrainIcner,
        Command::EvalDc,
        Command::EvalIcner,
        Command::DetectMismatch,
        Command::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::GenCorpus => "gen-corpus",
            Command::OppCost => "oppcost",
            Command::TrainDc => "train-dc",
            Command::TrainIcner => "train-icner",
            Command::EvalDc => "eval-dc",
            Command::EvalIcner => "eval-icner",
            Command::DetectMismatch => "detect-mismatch",
            Command::Report => "report",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| PipelineError::Usage(format!("unknown subcommand {s}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Restricts the parser stages to one domain.
    pub domain: Option<String>,
}

/// Files written by one stage; removed again unless the stage completes.
struct Artifacts {
    root: PathBuf,
    written: Vec<PathBuf>,
    kept: bool,
}

impl Artifacts {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| PipelineError::Internal(format!("{}: {e}", root.display())))?;
        Ok(Artifacts {
            root: root.to_path_buf(),
            written: Vec::new(),
            kept: false,
        })
    }

    fn write(&mut self, rel: &str, text: &str) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| PipelineError::Internal(format!("{}: {e}", dir.display())))?;
        }
        self.written.push(path.clone());
        fs::write(&path, text).map_err(|e| PipelineError::Internal(format!("{}: {e}", path.display())))
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(rel, &s)
    }

    fn keep(mut self) -> Vec<PathBuf> {
        self.kept = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if !self.kept {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

/// Generates the pool and the separately seeded test pool, then splits.
pub fn build_corpus(s: &Settings) -> Result<Splits> {
    let pool = build_records(generate_gold(&s.corpus, s.seed)?, &s.noise, s.seed, "p")?;
    let test_seed = s.seed.wrapping_add(1000);
    let test_cfg = s.corpus.clone().with_count(s.test_per_domain);
    let test = build_records(generate_gold(&test_cfg, test_seed)?, &s.noise, test_seed, "t")?;
    Ok(build_and_split(pool, test, s.seed)?)
}

pub fn split_path(out: &Path, stem: &str) -> PathBuf {
    out.join(format!("{stem}.nbest.jsonl"))
}

fn load_split(out: &Path, stem: &str) -> Result<Vec<NBestRecord>> {
    let p = split_path(out, stem);
    if !p.exists() {
        return Err(PipelineError::MissingInput(format!(
            "{} (run gen-corpus first)",
            p.display()
        )));
    }
    Ok(read_jsonl(&p)?)
}

fn load_checkpoint(out: &Path, rel: &str, what: &str, producer: Command) -> Result<Checkpoint> {
    let p = out.join(rel);
    if !p.exists() {
        return Err(PipelineError::MissingInput(format!(
            "{what} checkpoint {} (run {producer} first)",
            p.display()
        )));
    }
    Ok(Checkpoint::load(&p)?)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(serde_json::from_str(&s)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(PipelineError::Internal(format!("{}: {e}", path.display()))),
    }
}

fn manifest(stage: Command, cfg: &RunConfig, entries: &[(&str, String)], history: &[EpochLog]) -> String {
    let mut s = format!("stage={stage}\n");
    for (k, v) in entries {
        s.push_str(&format!("{k}={v}\n"));
    }
    for h in history {
        s.push_str(&format!("epoch.{}.train_loss={}\n", h.epoch, h.train_loss));
        s.push_str(&format!("epoch.{}.validation={}\n", h.epoch, h.validation));
    }
    for line in cfg.to_text().lines() {
        s.push_str("config.");
        s.push_str(line);
        s.push('\n');
    }
    s
}

fn timing(entries: &[(String, f64)]) -> String {
    entries.iter().map(|(k, v)| format!("{k}.seconds={v:.3}\n")).collect()
}

/// Runs one stage, returning the files it wrote.
pub fn run(cmd: Command, cfg: &RunConfig, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let s = cfg.settings()?;
    let mut art = Artifacts::new(&opts.out)?;
    let started = Instant::now();
    let mut times = Vec::new();
    match cmd {
        Command::GenCorpus => gen_corpus(&s, cfg, &mut art)?,
        Command::OppCost => oppcost(&opts.out, &mut art)?,
        Command::TrainDc => train_dc(&s, cfg, &opts.out, &mut art, &mut times)?,
        Command::TrainIcner => train_icner(&s, cfg, opts, &mut art, &mut times)?,
        Command::EvalDc => eval_dc(&opts.out, &mut art)?,
        Command::EvalIcner => eval_icner(&s, opts, &mut art)?,
        Command::DetectMismatch => detect(&opts.out, &mut art)?,
        Command::Report => emit_report(&opts.out, &mut art)?,
    }
    times.push(("total".to_string(), started.elapsed().as_secs_f64()));
    // Wall-clock time lives beside the manifests so they stay reproducible.
    art.write(&format!("{cmd}.timing"), &timing(&times))?;
    Ok(art.keep())
}

fn gen_corpus(s: &Settings, cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let splits = build_corpus(s)?;
    let mut entries = vec![("seed", s.seed.to_string())];
    let mut counts = Vec::new();
    for (stem, recs) in splits.named() {
        let body: String = recs.iter().map(|r| record_to_json_line(r) + "\n").collect();
        art.write(&format!("{stem}.nbest.jsonl"), &body)?;
        counts.push((stem, recs.len()));
    }
    for (stem, n) in &counts {
        entries.push((stem, n.to_string()));
    }
    let rate = splits.test_mismatched.len() as f64 / splits.test_full.len().max(1) as f64;
    entries.push(("test_mismatch_rate", format!("{rate:.4}")));
    art.write("gen-corpus.manifest", &manifest(Command::GenCorpus, cfg, &entries, &[]))
}

fn oppcost(out: &Path, art: &mut Artifacts) -> Result<()> {
    let test = load_split(out, "test_full")?;
    let table = opportunity_cost(&test)?;
    art.write("oppcost.txt", &table.to_text())?;
    art.write("oppcost.csv", &table.to_csv())?;
    art.write_json("oppcost.json", &table)
}

fn dc_path(v: DcVariant) -> String {
    format!("dc/{v}.ckpt")
}

fn write_dc(
    art: &mut Artifacts,
    cfg: &RunConfig,
    name: &str,
    model: &DcModel,
    run: &DcRun,
    metric: &str,
) -> Result<()> {
    let ckpt = format!("dc/{name}.ckpt");
    art.write(&ckpt, &model.to_checkpoint().to_text())?;
    let entries = [
        ("model", name.to_string()),
        ("seed", cfg.get("seed").to_string()),
        ("checkpoint", ckpt),
        ("validation_metric", metric.to_string()),
        ("best_epoch", run.best_epoch.to_string()),
        ("best_validation", run.best_validation.to_string()),
    ];
    art.write(
        &format!("dc/{name}.manifest"),
        &manifest(Command::TrainDc, cfg, &entries, &run.history),
    )
}

fn train_dc(
    s: &Settings,
    cfg: &RunConfig,
    out: &Path,
    art: &mut Artifacts,
    times: &mut Vec<(String, f64)>,
) -> Result<()> {
    let train = load_split(out, "train")?;
    let val = load_split(out, "validation")?;
    let vocab = build_vocab(&train);
    let sched = &s.dc_schedule;
    let mut timed = |name: &str, f: &mut dyn FnMut() -> dc::Result<DcRun>| -> Result<DcRun> {
        let t = Instant::now();
        let r = f()?;
        times.push((name.to_string(), t.elapsed().as_secs_f64()));
        Ok(r)
    };
    let base = timed("Baseline", &mut || {
        dc::train_dc_baseline(&train, &val, &vocab, s.dc, sched)
    })?;
    write_dc(art, cfg, "Baseline", &base.model, &base, "accuracy_on_transcriptions")?;
    let ext = timed("BSumExt", &mut || dc::train_bsumext(&train, &val, &vocab, s.dc, sched))?;
    write_dc(art, cfg, "BSumExt", &ext.model, &ext, "accuracy")?;
    let pre = timed("BSumExtAbs.pretrain", &mut || {
        dc::pretrain_abstractive(&train, &val, &vocab, s.dc, sched)
    })?;
    write_dc(art, cfg, "BSumExtAbs.pretrain", &pre.model, &pre, "token_accuracy")?;
    let abs = timed("BSumExtAbs", &mut || {
        dc::train_bsumextabs(&train, &val, Some(&pre.model), sched)
    })?;
    write_dc(art, cfg, "BSumExtAbs", &abs.model, &abs, "accuracy")
}

/// Δerr rows for every trained classifier on both test splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcEval {
    pub rows: Vec<MetricsReport>,
    /// Splits with no records.
    pub empty: Vec<SplitKind>,
}

fn eval_dc(out: &Path, art: &mut Artifacts) -> Result<()> {
    let base = DcModel::from_checkpoint(&load_checkpoint(
        out,
        &dc_path(DcVariant::Baseline),
        "baseline",
        Command::TrainDc,
    )?)?;
    let mut models = vec![base];
    for v in [DcVariant::BSumExt, DcVariant::BSumExtAbs] {
        if out.join(dc_path(v)).exists() {
            models.push(DcModel::from_checkpoint(&Checkpoint::load(&out.join(dc_path(v)))?)?);
        }
    }
    let mut ev = DcEval {
        rows: Vec::new(),
        empty: Vec::new(),
    };
    for (kind, stem) in [
        (SplitKind::Full, "test_full"),
        (SplitKind::Mismatched, "test_mismatched"),
    ] {
        let recs = load_split(out, stem)?;
        if recs.is_empty() {
            ev.empty.push(kind);
            continue;
        }
        let mut baseline: Option<MetricsReport> = None;
        for m in &models {
            let pairs = dc::predictions(m, &recs)?;
            let tally = ConfusionTally::from_pairs(pairs.iter().map(|(g, p)| (g.as_str(), p.as_str())));
            let mut row = MetricsReport::new(&m.variant.to_string(), kind, &tally)?;
            match &baseline {
                None => baseline = Some(row.clone()),
                Some(b) => row = row.against(b),
            }
            ev.rows.push(row);
        }
    }
    art.write("eval-dc.txt", &report::dc_table(&ev))?;
    art.write("eval-dc.csv", &report::dc_csv(&ev))?;
    art.write_json("eval-dc.json", &ev)
}

fn domains_of(records: &[NBestRecord], only: Option<&str>) -> Result<Vec<String>> {
    let all: BTreeSet<&str> = records.iter().map(|r| r.domain()).collect();
    match only {
        Some(d) if all.contains(d) => Ok(vec![d.to_string()]),
        Some(d) => Err(PipelineError::Usage(format!(
            "domain {d} is not in the corpus (have {})",
            all.into_iter().collect::<Vec<_>>().join(", ")
        ))),
        None => Ok(all.into_iter().map(String::from).collect()),
    }
}

fn in_domain(records: &[NBestRecord], d: &str) -> Vec<NBestRecord> {
    records.iter().filter(|r| r.domain() == d).cloned().collect()
}

fn icner_path(domain: &str, v: IcnerVariant) -> String {
    format!("icner/{domain}.{v}.ckpt")
}

fn train_icner(
    s: &Settings,
    cfg: &RunConfig,
    opts: &RunOptions,
    art: &mut Artifacts,
    times: &mut Vec<(String, f64)>,
) -> Result<()> {
    let train = load_split(&opts.out, "train")?;
    let val = load_split(&opts.out, "validation")?;
    let domains = domains_of(&train, opts.domain.as_deref())?;
    let jobs: Vec<(String, IcnerVariant)> = domains
        .iter()
        .flat_map(|d| [IcnerVariant::Baseline, IcnerVariant::NBestPtr].map(|v| (d.clone(), v)))
        .collect();
    type Done = (icner::Result<IcnerRun>, f64);
    let results: Vec<Mutex<Option<Done>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|sc| {
        for _ in 0..s.icner_workers.min(jobs.len()) {
            sc.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((d, v)) = jobs.get(i) else { break };
                let t = Instant::now();
                let r = icner::train_icner(
                    *v,
                    &in_domain(&train, d),
                    &in_domain(&val, d),
                    s.icner,
                    &s.icner_schedule,
                );
                *results[i].lock().expect("worker panicked") = Some((r, t.elapsed().as_secs_f64()));
            });
        }
    });
    for ((d, v), slot) in jobs.iter().zip(results) {
        let (r, secs) = slot.into_inner().expect("worker panicked").expect("every job ran");
        let run = r?;
        times.push((format!("{d}.{v}"), secs));
        let ckpt = icner_path(d, *v);
        art.write(&ckpt, &run.model.to_checkpoint().to_text())?;
        art.write(&format!("icner/{d}.{v}.targets.txt"), &run.model.targets.to_text())?;
        let entries = [
            ("model", v.to_string()),
            ("domain", d.clone()),
            ("seed", s.seed.to_string()),
            ("checkpoint", ckpt),
            ("validation_metric", "negated_semer".to_string()),
            ("best_epoch", run.best_epoch.to_string()),
            ("best_semer", run.best_semer.to_string()),
            ("skipped_instances", run.skipped.to_string()),
        ];
        art.write(
            &format!("icner/{d}.{v}.manifest"),
            &manifest(Command::TrainIcner, cfg, &entries, &run.history),
        )?;
    }
    Ok(())
}

/// Pooled SemER of each parser per split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcnerEval {
    pub decode: String,
    pub domains: Vec<String>,
    /// model → split name → counts.
    pub models: BTreeMap<String, BTreeMap<String, SemERReport>>,
}

fn describe_decode(d: &icner::DecodeConfig) -> String {
    let mode = match d.mode {
        icner::DecodeMode::Greedy => "greedy".to_string(),
        icner::DecodeMode::Beam => format!("beam width {}", d.beam_width),
    };
    let mask = if d.structural_mask { "on" } else { "off" };
    format!("{mode}, max length {}, structural mask {mask}", d.max_len)
}

fn eval_icner(s: &Settings, opts: &RunOptions, art: &mut Artifacts) -> Result<()> {
    let full = load_split(&opts.out, "test_full")?;
    let mm = load_split(&opts.out, "test_mismatched")?;
    let domains = domains_of(&full, opts.domain.as_deref())?;
    let mut ev = IcnerEval {
        decode: describe_decode(&s.decode),
        domains: domains.clone(),
        models: BTreeMap::new(),
    };
    for d in &domains {
        for v in [IcnerVariant::Baseline, IcnerVariant::NBestPtr] {
            let what = format!("{d} {v}");
            let cp = load_checkpoint(&opts.out, &icner_path(d, v), &what, Command::TrainIcner)?;
            let model = S2SPtrModel::from_checkpoint(&cp)?;
            let models = ev.models.entry(v.to_string()).or_default();
            let mut lines = String::new();
            // The mismatched split is a subset of the full one, so each record is decoded once.
            for r in in_domain(&full, d) {
                let out = model.predict_parse(&r.nbest, &s.decode)?;
                let hyp = out.slot_set();
                let counts = semer(&icner::gold_set(&r), hyp.as_ref());
                models.entry("full".into()).or_default().add(d, counts);
                if r.is_mismatched() {
                    models.entry("mismatched".into()).or_default().add(d, counts);
                }
                let (intent, slots) = hyp.map(|h| (h.intent, h.slots)).unwrap_or_default();
                let line = serde_json::json!({
                    "id": r.id,
                    "intent": intent,
                    "slots": slots.iter().map(|(l, v)| serde_json::json!({"label": l, "value": v})).collect::<Vec<_>>(),
                    "flagged": out.failure.is_some(),
                });
                lines.push_str(&line.to_string());
                lines.push('\n');
            }
            art.write(&format!("icner/{d}.{v}.parses.jsonl"), &lines)?;
        }
    }
    if mm.iter().any(|r| !r.is_mismatched()) {
        return Err(PipelineError::Internal("test_mismatched holds a matched record".into()));
    }
    art.write("eval-icner.txt", &report::icner_table(&ev))?;
    art.write("eval-icner.csv", &report::icner_csv(&ev))?;
    art.write_json("eval-icner.json", &ev)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectReport {
    pub histogram: ConfidenceHistogram,
    pub detector: ThresholdDetector,
    pub quality: DetectorQuality,
}

fn scores_and_flags(recs: &[NBestRecord]) -> (Vec<f64>, Vec<bool>) {
    recs.iter()
        .map(|r| (r.nbest.mean_confidence(), r.is_mismatched()))
        .unzip()
}

/// Threshold fitted on validation, scored on the full test split.
pub fn detect_mismatch(validation: &[NBestRecord], test: &[NBestRecord]) -> Result<DetectReport> {
    let (vs, vf) = scores_and_flags(validation);
    let detector = fit_threshold_detector(&vs, &vf)?;
    let (ts, tf) = scores_and_flags(test);
    let quality = detector.evaluate(&ts, &tf)?;
    Ok(DetectReport {
        histogram: confidence_histogram(test)?,
        detector,
        quality,
    })
}

fn detect(out: &Path, art: &mut Artifacts) -> Result<()> {
    let rep = detect_mismatch(&load_split(out, "validation")?, &load_split(out, "test_full")?)?;
    art.write("detect.txt", &report::detect_text(&rep))?;
    art.write("detect.csv", &report::detect_csv(&rep))?;
    art.write_json("detect.json", &rep)
}

fn emit_report(out: &Path, art: &mut Artifacts) -> Result<()> {
    let opp = read_json(&out.join("oppcost.json"))?;
    let dc: Option<DcEval> = read_json(&out.join("eval-dc.json"))?;
    let ic: Option<IcnerEval> = read_json(&out.join("eval-icner.json"))?;
    let det: Option<DetectReport> = read_json(&out.join("detect.json"))?;
    if dc.is_none() && ic.is_none() && det.is_none() {
        return Err(PipelineError::MissingInput(
            "no evaluation artifacts (run eval-dc, eval-icner or detect-mismatch first)".into(),
        ));
    }
    if let Some(dc) = &dc {
        let mut seen = BTreeSet::new();
        for r in &dc.rows {
            if !seen.insert((r.model.as_str(), r.split.name())) {
                return Err(PipelineError::Internal(format!(
                    "conflicting entries for model {} on the {} split",
                    r.model,
                    r.split.name()
                )));
            }
        }
    }
    art.write(
        "report.txt",
        &report::compose(opp.as_ref(), dc.as_ref(), ic.as_ref(), det.as_ref()),
    )
}
