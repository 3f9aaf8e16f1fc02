use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sqctl::catmap::LogObservable;
use sqctl_cli::config::{ExperimentConfig, ExperimentKind};
use sqctl_cli::validate::{has_errors, validate};
use sqctl_cli::CliError;

#[derive(Parser)]
#[command(name = "sqctl", version, about = "Run stochastic-control experiments and write CSV + manifest bundles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo Gaussian trajectories.
    Trajectories(Overrides),
    /// Fixed point of the distribution map.
    FixedPoint(Overrides),
    /// Drift-diffusion constants and moment thresholds.
    FpPredict(Overrides),
    /// Eigenoperator tower of the mixed channel.
    Eigenops(Overrides),
    /// Quantized cat map with stochastic control.
    Catmap(Overrides),
    /// Classical Ornstein-Uhlenbeck control baseline.
    ClassicalOu(Overrides),
    /// Classical overlap vs quantum fidelity on shared draws.
    Equivalence(Overrides),
    /// Run a config file or a named preset.
    Run(Overrides),
    /// Static checks only; prints diagnostics.
    Validate(Overrides),
    /// List the checked-in presets.
    Presets,
}

/// Every flag mirrors a config key and overrides it.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    #[arg(long, value_enum)]
    experiment: Option<ExperimentKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    record_every: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    cutoff: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    kappa: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    d_over_gamma: Option<Vec<f64>>,
    #[arg(long)]
    n_traj: Option<usize>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    bins_per_octave: Option<u32>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    tail_fraction: Option<f64>,
    #[arg(long, value_parser = parse_observable)]
    observable: Option<LogObservable>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    estimate_pc: Option<bool>,
    #[arg(long)]
    distribution: Option<bool>,
    #[arg(long)]
    exponents: Option<bool>,
    #[arg(long)]
    histogram: Option<bool>,
    #[arg(long)]
    init_sigma_plus: Option<f64>,
    #[arg(long)]
    init_sigma_minus: Option<f64>,
    #[arg(long)]
    init_level: Option<usize>,
}

fn parse_observable(s: &str) -> Result<LogObservable, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown observable `{s}`"))
}

impl Overrides {
    fn load(&self, kind: Option<ExperimentKind>) -> Result<ExperimentConfig, CliError> {
        let mut cfg = if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text)?
        } else if let Some(name) = &self.preset {
            sqctl_cli::preset(name)?
        } else {
            let k = kind
                .or(self.experiment)
                .ok_or_else(|| CliError::Config("need --config, --preset or --experiment".into()))?;
            ExperimentConfig::new(k)
        };
        if let Some(k) = kind {
            if (self.config.is_some() || self.preset.is_some()) && cfg.experiment != k {
                return Err(CliError::Config(format!(
                    "config describes a {} run, not {}",
                    cfg.experiment.name(),
                    k.name()
                )));
            }
        }
        if let Some(k) = self.experiment {
            cfg.experiment = k;
        }
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = &self.$field { $target = v.clone(); })*
            };
        }
        set!(
            seed => cfg.seed,
            out_dir => cfg.out_dir,
            record_every => cfg.record_every,
            p => cfg.sweep.p,
            cutoff => cfg.sweep.cutoff,
            n => cfg.sweep.n,
            theta => cfg.sweep.theta,
            kappa => cfg.sweep.kappa,
            gamma => cfg.sweep.gamma,
            d_over_gamma => cfg.sweep.d_over_gamma,
            n_traj => cfg.settings.n_traj,
            n_steps => cfg.settings.n_steps,
            bins_per_octave => cfg.settings.bins_per_octave,
            tol => cfg.settings.tol,
            max_iter => cfg.settings.max_iter,
            n_max => cfg.settings.n_max,
            observable => cfg.settings.observable,
            bootstrap => cfg.settings.bootstrap,
            estimate_pc => cfg.settings.estimate_pc,
            distribution => cfg.settings.distribution,
            exponents => cfg.settings.exponents,
            histogram => cfg.settings.histogram,
            init_sigma_plus => cfg.settings.init_sigma_plus,
            init_sigma_minus => cfg.settings.init_sigma_minus,
            init_level => cfg.settings.init_level,
        );
        if let Some(t) = self.tail_fraction {
            cfg.settings.tail_fraction = Some(t);
        }
        Ok(cfg)
    }
}

fn run(o: &Overrides, kind: Option<ExperimentKind>) -> Result<(), CliError> {
    let cfg = o.load(kind)?;
    for d in validate(&cfg) {
        eprintln!("{d}");
    }
    let dir = sqctl_cli::run(&cfg)?;
    println!("{}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Trajectories(o) => run(o, Some(ExperimentKind::Trajectories)),
        Command::FixedPoint(o) => run(o, Some(ExperimentKind::FixedPoint)),
        Command::FpPredict(o) => run(o, Some(ExperimentKind::FpPredict)),
        Command::Eigenops(o) => run(o, Some(ExperimentKind::Eigenops)),
        Command::Catmap(o) => run(o, Some(ExperimentKind::Catmap)),
        Command::ClassicalOu(o) => run(o, Some(ExperimentKind::ClassicalOu)),
        Command::Equivalence(o) => run(o, Some(ExperimentKind::Equivalence)),
        Command::Run(o) => run(o, None),
        Command::Validate(o) => o.load(None).and_then(|cfg| {
            let diags = validate(&cfg);
            for d in &diags {
                println!("{d}");
            }
            if has_errors(&diags) {
                Err(CliError::Config(format!("{} error(s)", diags.iter().filter(|d| d.severity == sqctl_cli::validate::Severity::Error).count())))
            } else {
                println!("ok");
                Ok(())
            }
        }),
        Command::Presets => {
            for (name, _) in sqctl_cli::PRESETS {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sqctl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
