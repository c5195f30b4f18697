//! Sectioned text checkpoints: a version line, `[meta]` key=value pairs,
//! free-form text sections, then `[params]` with one name/shape line and one
//! value line per tensor.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::tensor::{ParamStore, Tensor};

pub const VERSION_LINE: &str = "nbest-slu checkpoint v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("missing {0}")]
    Missing(String),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub sections: BTreeMap<String, String>,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CheckpointError::Missing(format!("meta key {key}")))
    }

    pub fn section(&self, name: &str) -> Result<&str> {
        self.sections
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| CheckpointError::Missing(format!("section {name}")))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{VERSION_LINE}\n[meta]\n");
        for (k, v) in &self.meta {
            s.push_str(&format!("{k}={v}\n"));
        }
        for (name, body) in &self.sections {
            s.push_str(&format!("[section {name}]\n"));
            for line in body.lines() {
                s.push_str(line);
                s.push('\n');
            }
        }
        s.push_str("[params]\n");
        for id in self.params.ids() {
            let t = self.params.value(id);
            let shape: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            s.push_str(&format!("{} {}\n", self.params.name(id), shape.join("x")));
            let vals: Vec<String> = t.data().iter().map(|v| format!("{v:e}")).collect();
            s.push_str(&vals.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| CheckpointError::Format {
            line: line + 1,
            msg: msg.to_string(),
        };
        let lines: Vec<&str> = text.lines().collect();
        if lines.first() != Some(&VERSION_LINE) {
            return Err(err(0, "not a checkpoint (version line)"));
        }
        let mut cp = Checkpoint::default();
        let mut i = 1;
        if lines.get(i) != Some(&"[meta]") {
            return Err(err(i, "expected [meta]"));
        }
        i += 1;
        while i < lines.len() && !lines[i].starts_with('[') {
            let (k, v) = lines[i]
                .split_once('=')
                .ok_or_else(|| err(i, "meta line without '='"))?;
            cp.meta.insert(k.to_string(), v.to_string());
            i += 1;
        }
        while let Some(name) = lines
            .get(i)
            .and_then(|l| l.strip_prefix("[section "))
            .and_then(|l| l.strip_suffix(']'))
        {
            i += 1;
            let mut body = String::new();
            while i < lines.len() && !lines[i].starts_with("[section ") && lines[i] != "[params]" {
                body.push_str(lines[i]);
                body.push('\n');
                i += 1;
            }
            cp.sections.insert(name.to_string(), body);
        }
        if lines.get(i) != Some(&"[params]") {
            return Err(err(i, "expected [params]"));
        }
        i += 1;
        while i < lines.len() {
            let (name, shape) = lines[i].rsplit_once(' ').ok_or_else(|| err(i, "parameter header"))?;
            let shape: Vec<usize> = shape
                .split('x')
                .map(|d| d.parse().map_err(|_| err(i, "shape")))
                .collect::<Result<_>>()?;
            let vals_line = lines.get(i + 1).ok_or_else(|| err(i, "parameter values missing"))?;
            let data: Vec<f64> = vals_line
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| err(i + 1, "value")))
                .collect::<Result<_>>()?;
            let t = Tensor::new(shape, data).map_err(|e| err(i + 1, &e.to_string()))?;
            cp.params.add(name, t);
            i += 2;
        }
        Ok(cp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }
}
