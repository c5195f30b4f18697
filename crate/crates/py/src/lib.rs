//! `nbest_slu` Python module.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nbest_core::checkpoint::Checkpoint;
use nbest_core::corpus::{self, opportunity_cost, record_from_json_line, record_to_json_line, tokenize};
use nbest_core::dc::{DcInput, DcModel};
use nbest_core::eval::{self, ConfusionTally, SlotSet};
use nbest_core::icner::{DecodeConfig, DecodeMode, S2SPtrModel};
use nbest_core::pipeline::{self, Command, PipelineError, RunConfig, RunOptions};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pipeline_err(e: PipelineError) -> PyErr {
    match e {
        PipelineError::Internal(m) => PyRuntimeError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn config(text: Option<&str>, overrides: Vec<(String, String)>) -> PyResult<RunConfig> {
    let mut cfg = RunConfig::from_text(text.unwrap_or("")).map_err(pipeline_err)?;
    for (k, v) in overrides {
        cfg.set(&k, &v).map_err(pipeline_err)?;
    }
    cfg.settings().map_err(pipeline_err)?;
    Ok(cfg)
}

/// Generates the four corpus splits as JSON lines, keyed by split name.
#[pyfunction]
#[pyo3(signature = (config_text=None, overrides=vec![]))]
fn generate_corpus(
    config_text: Option<&str>,
    overrides: Vec<(String, String)>,
) -> PyResult<Vec<(String, Vec<String>)>> {
    let s = config(config_text, overrides)?.settings().map_err(pipeline_err)?;
    let splits = pipeline::build_corpus(&s).map_err(pipeline_err)?;
    Ok(splits
        .named()
        .into_iter()
        .map(|(name, recs)| (name.to_string(), recs.iter().map(record_to_json_line).collect()))
        .collect())
}

fn parse_records(lines: &[String]) -> PyResult<Vec<corpus::NBestRecord>> {
    lines
        .iter()
        .map(|l| record_from_json_line(l).map_err(value_err))
        .collect()
}

/// `([(n, percent)], total)` over JSON-line records.
#[pyfunction]
fn opportunity_cost_table(records: Vec<String>) -> PyResult<(Vec<(usize, f64)>, f64)> {
    let t = opportunity_cost(&parse_records(&records)?).map_err(value_err)?;
    Ok((t.rows, t.total))
}

/// Micro and macro F1 (percent) from `(gold, predicted)` label pairs.
#[pyfunction]
fn f1_scores(pairs: Vec<(String, String)>) -> PyResult<(f64, f64)> {
    let tally = ConfusionTally::from_pairs(pairs.iter().map(|(g, p)| (g.as_str(), p.as_str())));
    eval::f1_scores(&tally).map_err(value_err)
}

#[pyfunction]
fn delta_err(f1_experiment: f64, f1_baseline: f64) -> PyResult<f64> {
    eval::delta_err(f1_experiment, f1_baseline).map_err(value_err)
}

#[pyfunction]
fn delta_sem(semer_experiment: f64, semer_baseline: f64) -> PyResult<f64> {
    eval::delta_sem(semer_experiment, semer_baseline).map_err(value_err)
}

/// `(C, D, I, S)` of a hypothesis against a reference; `hypothesis=None`
/// is a parse failure.
#[pyfunction]
#[pyo3(signature = (reference, hypothesis=None))]
fn semer_counts(
    reference: (String, Vec<(String, String)>),
    hypothesis: Option<(String, Vec<(String, String)>)>,
) -> (u64, u64, u64, u64) {
    let r = SlotSet::new(reference.0, reference.1);
    let h = hypothesis.map(|(i, s)| SlotSet::new(i, s));
    let c = eval::semer(&r, h.as_ref());
    (c.c, c.d, c.i, c.s)
}

/// Runs one pipeline stage and returns the paths it wrote.
#[pyfunction]
#[pyo3(signature = (stage, out, config_text=None, overrides=vec![], domain=None))]
fn run_stage(
    py: Python<'_>,
    stage: &str,
    out: PathBuf,
    config_text: Option<&str>,
    overrides: Vec<(String, String)>,
    domain: Option<String>,
) -> PyResult<Vec<PathBuf>> {
    let cmd: Command = stage.parse().map_err(pipeline_err)?;
    let cfg = config(config_text, overrides)?;
    let opts = RunOptions { out, domain };
    py.detach(|| pipeline::run(cmd, &cfg, &opts)).map_err(pipeline_err)
}

fn load(path: PathBuf) -> PyResult<Checkpoint> {
    Checkpoint::load(&path).map_err(value_err)
}

/// A trained domain classifier.
#[pyclass(name = "DomainClassifier")]
struct PyDomainClassifier {
    inner: DcModel,
}

#[pymethods]
impl PyDomainClassifier {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyDomainClassifier {
            inner: DcModel::from_checkpoint(&load(path)?).map_err(value_err)?,
        })
    }

    #[getter]
    fn variant(&self) -> String {
        self.inner.variant.to_string()
    }

    #[getter]
    fn domains(&self) -> Vec<String> {
        self.inner.domains.clone()
    }

    /// Domain name and its probability for a ranked list of hypotheses.
    /// The transcription baseline reads the first one only.
    fn predict(&self, hypotheses: Vec<String>) -> PyResult<(String, f64)> {
        let hyps: Vec<Vec<String>> = hypotheses.iter().map(|h| tokenize(h)).collect();
        if hyps.is_empty() {
            return Err(PyValueError::new_err("no hypotheses"));
        }
        let input = match self.inner.variant {
            nbest_core::dc::DcVariant::Baseline => DcInput::Tokens(&hyps[0]),
            _ => DcInput::NBest(&hyps),
        };
        let p = self.inner.predict_domain(input).map_err(value_err)?;
        Ok((self.inner.domains[p.label].clone(), p.probs[p.label]))
    }
}

type IntentAndSlots = (String, Vec<(String, String)>);

/// A trained intent and slot parser for one domain.
#[pyclass(name = "Parser")]
struct PyParser {
    inner: S2SPtrModel,
}

#[pymethods]
impl PyParser {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyParser {
            inner: S2SPtrModel::from_checkpoint(&load(path)?).map_err(value_err)?,
        })
    }

    #[getter]
    fn domain(&self) -> String {
        self.inner.domain.clone()
    }

    /// `(intent, [(label, value)])`, or `None` when decoding yields no
    /// well-formed parse. Hypotheses are `(text, confidence)`, best first.
    #[pyo3(signature = (hypotheses, beam_width=None))]
    fn parse(&self, hypotheses: Vec<(String, f64)>, beam_width: Option<usize>) -> PyResult<Option<IntentAndSlots>> {
        let nbest = corpus::NBestList::new(
            hypotheses
                .into_iter()
                .map(|(t, confidence)| corpus::Hypothesis {
                    tokens: tokenize(&t),
                    confidence,
                })
                .collect(),
        )
        .map_err(value_err)?;
        let decode = match beam_width {
            None => DecodeConfig::default(),
            Some(w) => DecodeConfig {
                mode: DecodeMode::Beam,
                beam_width: w,
                ..DecodeConfig::default()
            },
        };
        decode.validate().map_err(value_err)?;
        let out = self.inner.predict_parse(&nbest, &decode).map_err(value_err)?;
        Ok(out.slot_set().map(|s| (s.intent, s.slots)))
    }
}

#[pymodule]
fn nbest_slu(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(opportunity_cost_table, m)?)?;
    m.add_function(wrap_pyfunction!(f1_scores, m)?)?;
    m.add_function(wrap_pyfunction!(delta_err, m)?)?;
    m.add_function(wrap_pyfunction!(delta_sem, m)?)?;
    m.add_function(wrap_pyfunction!(semer_counts, m)?)?;
    m.add_function(wrap_pyfunction!(run_stage, m)?)?;
    m.add_class::<PyDomainClassifier>()?;
    m.add_class::<PyParser>()?;
    Ok(())
}
