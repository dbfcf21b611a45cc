//! Command-line frontend for `linkreg`: CSV ingestion, linkage-error
//! injection, validation-based choice of λ, and seeded experiments.
//!
//! Every run writes `records.ndtext` (one JSON object per line after a
//! timestamp comment), `summary.tsv` and `config.resolved` into the output
//! directory.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod output;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

pub const SCHEMA_VERSION: u32 = linkreg::simlab::SCHEMA_VERSION;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "linkreg", version, about = "Regression on linked files with mismatch error")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: PathBuf,
    /// Results directory (default: config, then $LINKREG_OUTPUT_DIR, then ./linkreg-out).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override `data.path`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Override `method.methods` (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Fix λ, replacing any grid.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Override the number of replications (`simulate`, `casestudy`).
    #[arg(long)]
    pub replications: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Seeded simulation scenarios.
    Simulate(Common),
    /// Fit the chosen methods to one file.
    Fit(Common),
    /// Correct the linkage by sorting within blocks, then refit.
    Recover(Common),
    /// Ingest, shuffle within blocks, fit every method and score on the true links.
    Casestudy(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Fit(_) => "fit",
            Command::Recover(_) => "recover",
            Command::Casestudy(_) => "casestudy",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c) | Command::Fit(c) | Command::Recover(c) | Command::Casestudy(c) => c,
        }
    }
}

/// Load the config and apply flag overrides; validation is total.
pub fn resolve(command: &Command) -> Result<RunConfig, CliError> {
    let c = command.common();
    let mut cfg = RunConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = Some(s);
    }
    if let Some(p) = &c.data {
        cfg.data.as_mut().ok_or_else(|| config::field("data", "missing; cannot override data.path"))?.path = p.clone();
    }
    if let Some(ms) = &c.methods {
        cfg.method.methods = ms
            .iter()
            .map(|m| m.trim().parse().map_err(|e: linkreg::Error| config::field("method.methods", e)))
            .collect::<Result<_, _>>()?;
        if let Some(s) = cfg.simulate.as_mut() {
            s.methods = cfg.method.methods.clone();
        }
    }
    if let Some(l) = c.lambda {
        cfg.method.lambda = Some(l);
        cfg.method.lambdas = None;
        cfg.method.prefactors = None;
    }
    if let Some(r) = c.replications {
        if let Some(s) = cfg.simulate.as_mut() {
            s.replications = r;
        }
        if let Some(cs) = cfg.casestudy.as_mut() {
            cs.replications = r;
        }
    }
    if let Some(s) = cfg.simulate.as_mut() {
        if let Some(seed) = cfg.seed {
            s.seed = seed;
        }
    }
    cfg.resolve_output_dir(c.output.clone());
    cfg.validate()?;
    Ok(cfg)
}

/// Run a resolved configuration and write its artifacts.
pub fn execute(command: &Command, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let art = match command {
        Command::Simulate(_) => commands::simulate(cfg)?,
        Command::Fit(_) => commands::fit(cfg)?,
        Command::Recover(_) => commands::recover(cfg)?,
        Command::Casestudy(_) => commands::casestudy(cfg)?,
    };
    let dir = output::write_results(cfg, command.name(), &art.records, &art.summary)?;
    for (name, body) in &art.extra {
        output::write(&dir.join(name), body)?;
    }
    Ok(dir)
}

pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let cfg = resolve(&cli.command)?;
    execute(&cli.command, &cfg)
}
