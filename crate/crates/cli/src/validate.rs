//! Static checks on a configuration. Nothing here runs a simulation.

use serde::Serialize;
use sqctl::GridSpec;

use crate::config::{Axis, ExperimentConfig, ExperimentKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{s}: {}: {}", self.key, self.message)
    }
}

pub fn has_errors(d: &[Diagnostic]) -> bool {
    d.iter().any(|x| x.severity == Severity::Error)
}

pub fn validate(cfg: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut err = |key: &str, msg: String| out.push(Diagnostic { severity: Severity::Error, key: key.into(), message: msg });
    let kind = cfg.experiment;
    let sw = &cfg.sweep;
    let st = &cfg.settings;

    for &axis in kind.axes() {
        if sw.len(axis) == 0 {
            err(&format!("sweep.{}", axis.key()), "empty sweep".into());
        }
    }
    for &p in &sw.p {
        if !(0.0..=1.0).contains(&p) {
            err("sweep.p", format!("{p} is not in [0, 1]"));
        }
    }
    for &n in &sw.n {
        if n % 2 != 0 || n < 4 {
            err("sweep.n", format!("{n} must be even and at least 4"));
        }
    }
    for &t in &sw.theta {
        if !(t > 0.0 && t <= std::f64::consts::FRAC_PI_2) {
            err("sweep.theta", format!("{t} is not in (0, pi/2]"));
        }
    }
    for &k in &sw.kappa {
        if !(k > 0.0 && k.is_finite()) {
            err("sweep.kappa", format!("{k} must be positive and finite"));
        }
    }
    for &g in &sw.gamma {
        if !(g > 0.0) {
            err("sweep.gamma", format!("{g} must be positive"));
        }
    }
    for &r in &sw.d_over_gamma {
        if !(r > 0.0 && r.is_finite()) {
            err("sweep.d_over_gamma", format!("{r} must be positive and finite"));
        }
    }
    for &l in &sw.cutoff {
        if l < 1 {
            err("sweep.cutoff", "cutoff must be at least 1".into());
        }
    }
    if st.bins_per_octave == 0 {
        err("settings.bins_per_octave", "must be at least 1".into());
    }
    if cfg.record_every == 0 {
        err("record_every", "must be at least 1".into());
    }
    let stochastic = matches!(
        kind,
        ExperimentKind::Trajectories | ExperimentKind::Catmap | ExperimentKind::ClassicalOu | ExperimentKind::Equivalence
    );
    if stochastic && st.n_traj == 0 {
        err("settings.n_traj", "need at least one trajectory".into());
    }
    if let Some(f) = st.tail_fraction {
        if !(f > 0.0 && f <= 1.0) {
            err("settings.tail_fraction", format!("{f} is not in (0, 1]"));
        }
    }
    if !(st.tol > 0.0) {
        err("settings.tol", "must be positive".into());
    }
    if kind == ExperimentKind::Trajectories
        && !(st.init_sigma_plus > 0.0 && st.init_sigma_minus > 0.0 && st.init_sigma_plus * st.init_sigma_minus >= 0.25 * (1.0 - 1e-12))
    {
        err("settings.init_sigma_plus", "initial covariance violates the uncertainty bound".into());
    }
    if kind == ExperimentKind::Catmap {
        for &n in &sw.n {
            if st.init_level >= n {
                err("settings.init_level", format!("level {} does not exist for N = {n}", st.init_level));
            }
        }
        if st.estimate_pc && sw.p.len() < 15 {
            err("settings.estimate_pc", "the variance-peak estimate needs at least 15 values of p".into());
        }
    }

    let mut warn = |key: &str, msg: String| out.push(Diagnostic { severity: Severity::Warning, key: key.into(), message: msg });
    for axis in Axis::ALL {
        let used = kind.axes().contains(&axis) || (kind == ExperimentKind::Trajectories && axis == Axis::Cutoff);
        if !used && cfg.sweep.len(axis) > 0 {
            warn(&format!("sweep.{}", axis.key()), format!("ignored by {}", kind.name()));
        }
    }
    if kind == ExperimentKind::FixedPoint && st.bins_per_octave > 0 {
        for &k in &sw.kappa {
            let spec = GridSpec::new(1, st.bins_per_octave).expect("bins_per_octave checked above");
            if !spec.is_exact_shift(k) {
                warn(
                    "sweep.kappa",
                    format!(
                        "2 kappa = {} is not a multiple of the bin width {:.6}; squeezing is split between neighbouring cells",
                        2.0 * k,
                        spec.width()
                    ),
                );
            }
        }
    }
    out
}
