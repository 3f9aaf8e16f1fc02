//! Experiment runner behind the `sqctl` binary: TOML configs in, CSV tables
//! and a JSON manifest out under `out/<experiment>/<config-hash>/`.

pub mod config;
pub mod experiments;
pub mod output;
pub mod validate;

use std::path::PathBuf;
use std::time::Instant;

pub use config::{ExperimentConfig, ExperimentKind};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] sqctl::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for anything the user can fix in the config, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(sqctl::Error::InvalidParameter { .. }) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}

/// Checked-in figure presets, by name.
pub const PRESETS: [(&str, &str); 5] = [
    ("fig1", include_str!("../../../configs/fig1.toml")),
    ("fig1-alt", include_str!("../../../configs/fig1-alt.toml")),
    ("fig2", include_str!("../../../configs/fig2.toml")),
    ("fig3", include_str!("../../../configs/fig3.toml")),
    ("lognormal", include_str!("../../../configs/lognormal.toml")),
];

pub fn preset(name: &str) -> Result<ExperimentConfig, CliError> {
    let text = PRESETS
        .iter()
        .find(|p| p.0 == name)
        .map(|p| p.1)
        .ok_or_else(|| CliError::Config(format!("unknown preset `{name}`")))?;
    ExperimentConfig::from_toml(text)
}

/// Validates, runs and writes one experiment. Returns the run directory.
pub fn run(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let diags = validate::validate(cfg);
    if validate::has_errors(&diags) {
        let msg: Vec<String> = diags.iter().filter(|d| d.severity == validate::Severity::Error).map(|d| d.to_string()).collect();
        return Err(CliError::Config(msg.join("; ")));
    }
    let t0 = Instant::now();
    let bundle = experiments::execute(cfg)?;
    let manifest = output::manifest(cfg, &bundle, t0.elapsed());
    output::write_atomic(&cfg.run_dir(), &bundle, &manifest)
}
