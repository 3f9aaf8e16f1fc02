//! Run configuration, read from TOML. Unknown keys are rejected everywhere.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sqctl::catmap::LogObservable;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Trajectories,
    FixedPoint,
    FpPredict,
    Eigenops,
    Catmap,
    ClassicalOu,
    Equivalence,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Trajectories => "trajectories",
            Self::FixedPoint => "fixed-point",
            Self::FpPredict => "fp-predict",
            Self::Eigenops => "eigenops",
            Self::Catmap => "catmap",
            Self::ClassicalOu => "classical-ou",
            Self::Equivalence => "equivalence",
        }
    }

    /// Sweep axes the experiment iterates over.
    pub fn axes(self) -> &'static [Axis] {
        use Axis::*;
        match self {
            Self::Trajectories => &[P, Kappa, Gamma],
            Self::FixedPoint => &[P, Cutoff, Kappa, Gamma],
            Self::FpPredict | Self::Eigenops => &[P, Kappa, Gamma],
            Self::Catmap => &[P, N, Theta],
            Self::ClassicalOu | Self::Equivalence => &[P, Kappa, Gamma, DOverGamma],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    P,
    Cutoff,
    N,
    Theta,
    Kappa,
    Gamma,
    DOverGamma,
}

impl Axis {
    pub const ALL: [Axis; 7] = [Axis::P, Axis::Cutoff, Axis::N, Axis::Theta, Axis::Kappa, Axis::Gamma, Axis::DOverGamma];

    pub fn key(self) -> &'static str {
        match self {
            Axis::P => "p",
            Axis::Cutoff => "cutoff",
            Axis::N => "n",
            Axis::Theta => "theta",
            Axis::Kappa => "kappa",
            Axis::Gamma => "gamma",
            Axis::DOverGamma => "d_over_gamma",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    pub p: Vec<f64>,
    /// Grid cutoff L: σ₊ < 2^{L−1}. For trajectories, optional hard walls.
    pub cutoff: Vec<u32>,
    /// Cat-map dimension.
    pub n: Vec<usize>,
    pub theta: Vec<f64>,
    pub kappa: Vec<f64>,
    pub gamma: Vec<f64>,
    pub d_over_gamma: Vec<f64>,
}

impl Sweep {
    pub fn len(&self, axis: Axis) -> usize {
        match axis {
            Axis::P => self.p.len(),
            Axis::Cutoff => self.cutoff.len(),
            Axis::N => self.n.len(),
            Axis::Theta => self.theta.len(),
            Axis::Kappa => self.kappa.len(),
            Axis::Gamma => self.gamma.len(),
            Axis::DOverGamma => self.d_over_gamma.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Settings {
    pub n_traj: usize,
    pub n_steps: usize,
    pub bins_per_octave: u32,
    pub tol: f64,
    pub max_iter: usize,
    /// Highest eigenoperator order.
    pub n_max: usize,
    pub tail_fraction: Option<f64>,
    pub observable: LogObservable,
    pub bootstrap: usize,
    /// Cat map: also estimate p_c(θ) from the variance peak over `p`.
    pub estimate_pc: bool,
    /// Fixed point: dump the σ₊ density of every fixed point.
    pub distribution: bool,
    /// Fixed point: fit β, z and ν at the analytic p_c.
    pub exponents: bool,
    /// Trajectories: histogram ln σ₊ at every recorded time.
    pub histogram: bool,
    pub init_sigma_plus: f64,
    pub init_sigma_minus: f64,
    pub init_level: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            n_traj: 1000,
            n_steps: 1000,
            bins_per_octave: sqctl::grid::DEFAULT_BINS_PER_OCTAVE,
            tol: 1e-9,
            max_iter: 1_000_000,
            n_max: 10,
            tail_fraction: None,
            observable: LogObservable::X2P2,
            bootstrap: 0,
            estimate_pc: false,
            distribution: false,
            exponents: false,
            histogram: false,
            init_sigma_plus: 0.5,
            init_sigma_minus: 0.5,
            init_level: 0,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default)]
    pub settings: Settings,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            seed: 0,
            out_dir: default_out_dir(),
            record_every: 1,
            sweep: Sweep::default(),
            settings: Settings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Hash of everything that affects the data; the output directory is excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let digest = Sha256::digest(serde_json::to_vec(&c).expect("config always serializes"));
        hex::encode(&digest[..8])
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(self.experiment.name()).join(self.hash())
    }
}
