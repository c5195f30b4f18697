use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use nbest_core::pipeline::{self, Command, PipelineError, RunConfig, RunOptions};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Stage {
    GenCorpus,
    Oppcost,
    TrainDc,
    TrainIcner,
    EvalDc,
    EvalIcner,
    DetectMismatch,
    Report,
}

impl From<Stage> for Command {
    fn from(s: Stage) -> Self {
        match s {
            Stage::GenCorpus => Command::GenCorpus,
            Stage::Oppcost => Command::OppCost,
            Stage::TrainDc => Command::TrainDc,
            Stage::TrainIcner => Command::TrainIcner,
            Stage::EvalDc => Command::EvalDc,
            Stage::EvalIcner => Command::EvalIcner,
            Stage::DetectMismatch => Command::DetectMismatch,
            Stage::Report => Command::Report,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Greedy,
    Beam,
}

/// Synthetic n-best corpus, domain classifiers and pointer parsers.
#[derive(Debug, Parser)]
#[command(name = "nbest-slu", version)]
struct Cli {
    #[arg(value_enum)]
    stage: Stage,
    /// `key = value` settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Restrict the parser stages to one domain.
    #[arg(long)]
    domain: Option<String>,
    #[arg(long, value_enum)]
    decode_mode: Option<Mode>,
    #[arg(long)]
    beam_width: Option<usize>,
    #[arg(long)]
    no_structural_mask: bool,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn configure(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(m) = cli.decode_mode {
        cfg.set("decode.mode", if matches!(m, Mode::Beam) { "beam" } else { "greedy" })?;
    }
    if let Some(w) = cli.beam_width {
        cfg.set("decode.beam_width", &w.to_string())?;
    }
    if cli.no_structural_mask {
        cfg.set("decode.structural_mask", "false")?;
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| PipelineError::Usage(format!("--set {kv}: expected KEY=VALUE")))?;
        cfg.set(k.trim(), v)?;
    }
    cfg.settings()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure(&cli).and_then(|cfg| {
        let opts = RunOptions {
            out: cli.out.clone(),
            domain: cli.domain.clone(),
        };
        pipeline::run(cli.stage.into(), &cfg, &opts)
    });
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("nbest-slu: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
