use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{PipelineError, Result};
use crate::codec::PointerPolicy;
use crate::corpus::{inventory, CorpusConfig, NoiseModel};
use crate::dc::DcConfig;
use crate::icner::{parse_policy, DecodeConfig, DecodeMode, IcnerConfig, SourceComposition};
use crate::nn::EncoderConfig;
use crate::train::TrainSchedule;

/// Every accepted key with its default.
const KEYS: &[(&str, &str)] = &[
    ("corpus.per_domain", "0"),
    ("corpus.preset", "default"),
    ("corpus.test_per_domain", "200"),
    ("dc.batch_size", "16"),
    ("dc.hard_select", "false"),
    ("dc.lr", "0.001"),
    ("dc.lr_decoder", "0.0005"),
    ("dc.lr_encoder", "0.0001"),
    ("dc.max_epochs", "30"),
    ("dc.patience", "8"),
    ("dc.w_abs", "0"),
    ("dc.w_ext", "0.5"),
    ("decode.beam_width", "4"),
    ("decode.max_len", "40"),
    ("decode.mode", "greedy"),
    ("decode.structural_mask", "true"),
    ("icner.batch_size", "16"),
    ("icner.composition", "two-instances"),
    ("icner.lr", "0.001"),
    ("icner.max_epochs", "50"),
    ("icner.patience", "10"),
    ("icner.policy", "nearest-edit"),
    ("icner.workers", "1"),
    ("model.dim", "64"),
    ("model.dropout", "0.1"),
    ("model.ffn", "128"),
    ("model.heads", "4"),
    ("model.layers", "2"),
    ("noise.alt_scale", "3"),
    ("noise.del", "0.01"),
    ("noise.ins", "0.01"),
    ("noise.lambda", "0.5"),
    ("noise.rank_noise", "0.05"),
    ("noise.samples", "12"),
    ("noise.sub", "0.03"),
    ("seed", "1"),
];

/// Flat `key = value` configuration. Unknown keys are rejected; `#` starts a
/// comment line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn usage(msg: String) -> PipelineError {
    PipelineError::Usage(msg)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => Err(usage(format!("unknown config key {key}"))),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        &self.values[key]
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v)
                .map_err(|e| usage(format!("config line {}: {e}", n + 1)))?;
        }
        cfg.settings()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::MissingInput(format!("config file {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Every key, sorted, one per line.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)
            .parse()
            .map_err(|_| usage(format!("config {key} = {:?} is not valid", self.get(key))))
    }

    fn patience(&self, key: &str) -> Result<Option<usize>> {
        let p: usize = self.parse(key)?;
        Ok((p > 0).then_some(p))
    }

    pub fn settings(&self) -> Result<Settings> {
        let seed: u64 = self.parse("seed")?;
        let network = EncoderConfig {
            layers: self.parse("model.layers")?,
            heads: self.parse("model.heads")?,
            dim: self.parse("model.dim")?,
            ffn: self.parse("model.ffn")?,
            max_positions: 0,
            dropout: self.parse("model.dropout")?,
        };
        network.validate().map_err(|e| usage(format!("model settings: {e}")))?;
        let mut corpus = match self.get("corpus.preset") {
            "default" => inventory::default_config(),
            "toy" => inventory::toy_config(),
            "toy-music" => inventory::toy_music_config(),
            other => return Err(usage(format!("unknown corpus.preset {other}"))),
        };
        let per_domain: usize = self.parse("corpus.per_domain")?;
        if per_domain > 0 {
            corpus = corpus.with_count(per_domain);
        }
        let noise = NoiseModel {
            sub: self.parse("noise.sub")?,
            del: self.parse("noise.del")?,
            ins: self.parse("noise.ins")?,
            lambda: self.parse("noise.lambda")?,
            rank_noise: self.parse("noise.rank_noise")?,
            alt_scale: self.parse("noise.alt_scale")?,
            samples: self.parse("noise.samples")?,
            ..inventory::default_noise()
        };
        noise.validate().map_err(|e| usage(e.to_string()))?;
        let dc_schedule = TrainSchedule {
            max_epochs: self.parse("dc.max_epochs")?,
            batch_size: self.parse("dc.batch_size")?,
            lr: self.parse("dc.lr")?,
            lr_encoder: self.parse("dc.lr_encoder")?,
            lr_decoder: self.parse("dc.lr_decoder")?,
            patience: self.patience("dc.patience")?,
            seed,
        };
        dc_schedule
            .validate(crate::dc::MAX_EPOCHS)
            .map_err(|e| usage(format!("dc schedule: {e}")))?;
        let icner_schedule = TrainSchedule {
            max_epochs: self.parse("icner.max_epochs")?,
            batch_size: self.parse("icner.batch_size")?,
            lr: self.parse("icner.lr")?,
            patience: self.patience("icner.patience")?,
            seed,
            ..TrainSchedule::default()
        };
        icner_schedule
            .validate(crate::icner::MAX_EPOCHS)
            .map_err(|e| usage(format!("icner schedule: {e}")))?;
        let dc = DcConfig {
            encoder: EncoderConfig {
                max_positions: DcConfig::default().encoder.max_positions,
                ..network
            },
            w_ext: self.parse("dc.w_ext")?,
            w_abs: self.parse("dc.w_abs")?,
            hard_select: self.parse("dc.hard_select")?,
        };
        let policy: PointerPolicy = parse_policy(self.get("icner.policy")).map_err(|e| usage(e.to_string()))?;
        let composition: SourceComposition = self
            .get("icner.composition")
            .parse()
            .map_err(|e: crate::icner::IcnerError| usage(e.to_string()))?;
        let icner = IcnerConfig {
            network: EncoderConfig {
                max_positions: IcnerConfig::default().network.max_positions,
                ..network
            },
            policy,
            composition,
        };
        let decode = DecodeConfig {
            mode: self
                .get("decode.mode")
                .parse::<DecodeMode>()
                .map_err(|e| usage(e.to_string()))?,
            beam_width: self.parse("decode.beam_width")?,
            max_len: self.parse("decode.max_len")?,
            structural_mask: self.parse("decode.structural_mask")?,
        };
        decode.validate().map_err(|e| usage(e.to_string()))?;
        let workers: usize = self.parse("icner.workers")?;
        if workers == 0 {
            return Err(usage("icner.workers must be at least 1".into()));
        }
        Ok(Settings {
            seed,
            corpus,
            test_per_domain: self.parse("corpus.test_per_domain")?,
            noise,
            dc,
            dc_schedule,
            icner,
            icner_schedule,
            icner_workers: workers,
            decode,
        })
    }
}

/// Typed view of a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub test_per_domain: usize,
    pub noise: NoiseModel,
    pub dc: DcConfig,
    pub dc_schedule: TrainSchedule,
    pub icner: IcnerConfig,
    pub icner_schedule: TrainSchedule,
    pub icner_workers: usize,
    pub decode: DecodeConfig,
}
