//! Gaussian-sector dynamics of the inverted oscillator under the mixed
//! squeeze/control channel.
//!
//! A state is stored as `(ln σ₊, ln σ₋, σ₁₂)` plus the mean, so long
//! uncontrolled stretches cannot overflow. Log-variances are clamped to
//! `±MAX_LOG_SIGMA` and the state is flagged when that happens.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::ChannelParams;
use crate::rng::{chunk_ranges, trajectory_rng};
use crate::stats::{Histogram, LogBins, MeanVar, NeumaierSum};

pub const MAX_LOG_SIGMA: f64 = 700.0;

const LN_HALF: f64 = -std::f64::consts::LN_2;

/// ln(eᵃ + eᵇ) without overflow.
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    mean: [f64; 2],
    log_sigma: [f64; 2],
    sigma12: f64,
    saturated: bool,
}

/// Which half of the mixed channel acts in a given step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Squeeze,
    Control,
}

impl Channel {
    /// Consumes exactly one uniform variate.
    pub fn draw<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Self {
        let u: f64 = rng.random();
        if u < p {
            Channel::Control
        } else {
            Channel::Squeeze
        }
    }
}

impl GaussianState {
    pub fn vacuum() -> Self {
        Self { mean: [0.0; 2], log_sigma: [LN_HALF; 2], sigma12: 0.0, saturated: false }
    }

    /// Builds a state from a mean and covariance in the (v₊, v₋) basis.
    pub fn new(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        if cov[0][1] != cov[1][0] {
            return Err(Error::InvalidState("covariance is not symmetric".into()));
        }
        let (a, b, c) = (cov[0][0], cov[1][1], cov[0][1]);
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::InvalidState("covariance is not positive definite".into()));
        }
        let det = a * b - c * c;
        if det < 0.25 - 1e-12 {
            return Err(Error::InvalidState(format!("uncertainty bound violated: det = {det}")));
        }
        if !mean.iter().all(|m| m.is_finite()) {
            return Err(Error::InvalidState("mean is not finite".into()));
        }
        Ok(Self { mean, log_sigma: [a.ln(), b.ln()], sigma12: c, saturated: false })
    }

    pub fn centered(sigma_plus: f64, sigma_minus: f64, sigma12: f64) -> Result<Self> {
        Self::new([0.0; 2], [[sigma_plus, sigma12], [sigma12, sigma_minus]])
    }

    pub fn mean(&self) -> [f64; 2] {
        self.mean
    }

    pub fn sigma_plus(&self) -> f64 {
        self.log_sigma[0].exp()
    }

    pub fn sigma_minus(&self) -> f64 {
        self.log_sigma[1].exp()
    }

    pub fn log_sigma_plus(&self) -> f64 {
        self.log_sigma[0]
    }

    pub fn log_sigma_minus(&self) -> f64 {
        self.log_sigma[1]
    }

    pub fn sigma12(&self) -> f64 {
        self.sigma12
    }

    pub fn cov(&self) -> [[f64; 2]; 2] {
        [[self.sigma_plus(), self.sigma12], [self.sigma12, self.sigma_minus()]]
    }

    /// σ₊σ₋ − σ₁₂², bounded below by ¼ for physical states.
    pub fn uncertainty(&self) -> f64 {
        (self.log_sigma[0] + self.log_sigma[1]).exp() - self.sigma12 * self.sigma12
    }

    /// True once a log-variance has hit the ±700 clamp.
    pub fn is_saturated(&self) -> bool {
        self.saturated
    }

    pub fn apply_squeeze(&self, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(invalid("kappa", format!("{kappa} must be positive and finite")));
        }
        Ok(self.squeeze(kappa))
    }

    pub fn apply_control(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(invalid("gamma", format!("{gamma} must be positive")));
        }
        Ok(self.control(gamma))
    }

    pub fn apply(&self, channel: Channel, params: &ChannelParams) -> Self {
        match channel {
            Channel::Squeeze => self.squeeze(params.kappa()),
            Channel::Control => self.control(params.gamma()),
        }
    }

    fn squeeze(&self, kappa: f64) -> Self {
        let mut s = *self;
        s.mean = [self.mean[0] * kappa.exp(), self.mean[1] * (-kappa).exp()];
        s.log_sigma = [self.log_sigma[0] + 2.0 * kappa, self.log_sigma[1] - 2.0 * kappa];
        s.clamp_logs();
        s
    }

    fn control(&self, gamma: f64) -> Self {
        let decay = (-gamma).exp();
        let log_a = -2.0 * gamma;
        // (1 − e^{−2γ})/2, accurate for small γ
        let log_c = (-(-2.0 * gamma).exp_m1() * 0.5).ln();
        let mut s = *self;
        s.mean = [self.mean[0] * decay, self.mean[1] * decay];
        s.log_sigma = [
            log_add_exp(log_a + self.log_sigma[0], log_c),
            log_add_exp(log_a + self.log_sigma[1], log_c),
        ];
        s.sigma12 = self.sigma12 * decay * decay;
        s
    }

    fn clamp_logs(&mut self) {
        for l in &mut self.log_sigma {
            if l.abs() > MAX_LOG_SIGMA {
                *l = l.clamp(-MAX_LOG_SIGMA, MAX_LOG_SIGMA);
                self.saturated = true;
            }
        }
    }

    /// Hard walls at σ₊ = 2^{L−1} and σ₋ = 2^{−L−1}, matching the grid solver.
    pub fn clamp_to_cutoff(&mut self, cutoff: u32) {
        let top = (cutoff as f64 - 1.0) * std::f64::consts::LN_2;
        let bottom = -(cutoff as f64 + 1.0) * std::f64::consts::LN_2;
        self.log_sigma[0] = self.log_sigma[0].min(top);
        self.log_sigma[1] = self.log_sigma[1].max(bottom);
    }

    /// Vacuum fidelity 1/√det(cov + ½I), defined for centered states only.
    pub fn fidelity_rho00(&self) -> Result<f64> {
        if self.mean != [0.0, 0.0] {
            return Err(Error::NonZeroMean(self.mean[0], self.mean[1]));
        }
        Ok(self.rho00_unchecked())
    }

    fn rho00_unchecked(&self) -> f64 {
        let lp = log_add_exp(self.log_sigma[0], LN_HALF);
        let lm = log_add_exp(self.log_sigma[1], LN_HALF);
        let r = if self.sigma12 == 0.0 {
            (-0.5 * (lp + lm)).exp()
        } else {
            let det = (lp + lm).exp() - self.sigma12 * self.sigma12;
            1.0 / det.sqrt()
        };
        r.min(1.0)
    }
}

/// One step of the mixed channel: control with probability p, squeeze otherwise.
pub fn step_stochastic<R: Rng + ?Sized>(
    state: &GaussianState,
    params: &ChannelParams,
    rng: &mut R,
) -> GaussianState {
    state.apply(Channel::draw(params.p(), rng), params)
}

/// Times at which an ensemble is sampled: 0, k, 2k, … and always the final step.
pub fn record_times(n_steps: usize, every: usize) -> Vec<usize> {
    let every = every.max(1);
    let mut t: Vec<usize> = (0..=n_steps).step_by(every).collect();
    if *t.last().unwrap() != n_steps {
        t.push(n_steps);
    }
    t
}

/// First recorded index belonging to the late-time window (last `fraction` of steps).
pub(crate) fn tail_start(times: &[usize], n_steps: usize, fraction: f64) -> usize {
    let from = n_steps - ((fraction * n_steps as f64).floor() as usize).min(n_steps);
    times.iter().position(|&t| t >= from).unwrap_or(times.len() - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub params: ChannelParams,
    pub n_traj: usize,
    pub n_steps: usize,
    pub init: GaussianState,
    pub seed: u64,
    pub record_every: usize,
    /// Optional hard walls, see [`GaussianState::clamp_to_cutoff`].
    pub cutoff: Option<u32>,
    /// Histogram ln σ₊ at every recorded time using these bins.
    pub histogram: Option<LogBins>,
    pub tail_fraction: f64,
}

impl EnsembleConfig {
    pub fn new(params: ChannelParams, n_traj: usize, n_steps: usize, seed: u64) -> Self {
        Self {
            params,
            n_traj,
            n_steps,
            init: GaussianState::vacuum(),
            seed,
            record_every: 1,
            cutoff: None,
            histogram: None,
            tail_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub times: Vec<usize>,
    pub rho00_mean: Vec<f64>,
    pub mean_log_sigma_plus: Vec<f64>,
    /// Across-trajectory variance of ln σ₊.
    pub var_log: Vec<f64>,
    pub mean_sigma_plus: Vec<f64>,
    pub sigma_plus_stderr: Vec<f64>,
    pub mean_abs_sigma12: Vec<f64>,
    pub log_sigma_plus_hist: Vec<Histogram>,
    /// Tail-window average of `rho00_mean`.
    pub late_rho00: f64,
    /// Standard error of `late_rho00` from per-trajectory tail averages.
    pub late_rho00_stderr: f64,
    pub tail_fraction: f64,
    pub tail_start_step: usize,
    pub saturated_trajectories: usize,
    pub n_traj: usize,
}

struct Acc {
    rho: Vec<NeumaierSum>,
    logs: Vec<MeanVar>,
    sp: Vec<MeanVar>,
    s12: Vec<NeumaierSum>,
    hist: Vec<Histogram>,
    tail: MeanVar,
    saturated: usize,
}

impl Acc {
    fn new(n: usize, bins: Option<LogBins>) -> Self {
        Self {
            rho: vec![NeumaierSum::new(); n],
            logs: vec![MeanVar::default(); n],
            sp: vec![MeanVar::default(); n],
            s12: vec![NeumaierSum::new(); n],
            hist: bins.map(|b| vec![Histogram::new(b); n]).unwrap_or_default(),
            tail: MeanVar::default(),
            saturated: 0,
        }
    }

    fn merge(&mut self, o: &Acc) {
        for k in 0..self.rho.len() {
            self.rho[k].merge(&o.rho[k]);
            self.logs[k].merge(&o.logs[k]);
            self.sp[k].merge(&o.sp[k]);
            self.s12[k].merge(&o.s12[k]);
        }
        for (a, b) in self.hist.iter_mut().zip(&o.hist) {
            a.merge(b);
        }
        self.tail.merge(&o.tail);
        self.saturated += o.saturated;
    }
}

pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<TrajectoryStats> {
    if cfg.n_traj == 0 {
        return Err(invalid("n_traj", "need at least one trajectory"));
    }
    if !(cfg.tail_fraction > 0.0 && cfg.tail_fraction <= 1.0) {
        return Err(invalid("tail_fraction", "must lie in (0, 1]"));
    }
    if cfg.init.mean != [0.0, 0.0] {
        return Err(Error::NonZeroMean(cfg.init.mean[0], cfg.init.mean[1]));
    }
    let times = record_times(cfg.n_steps, cfg.record_every);
    let tail0 = tail_start(&times, cfg.n_steps, cfg.tail_fraction);
    let nrec = times.len();

    let chunks: Vec<Acc> = chunk_ranges(cfg.n_traj)
        .into_par_iter()
        .map(|range| {
            let mut acc = Acc::new(nrec, cfg.histogram);
            for traj in range {
                let mut rng = trajectory_rng(cfg.seed, traj as u64);
                let mut s = cfg.init;
                if let Some(l) = cfg.cutoff {
                    s.clamp_to_cutoff(l);
                }
                let mut tail = NeumaierSum::new();
                let mut t = 0;
                for (k, &tk) in times.iter().enumerate() {
                    while t < tk {
                        s = step_stochastic(&s, &cfg.params, &mut rng);
                        if let Some(l) = cfg.cutoff {
                            s.clamp_to_cutoff(l);
                        }
                        t += 1;
                    }
                    let r = s.rho00_unchecked();
                    acc.rho[k].add(r);
                    acc.logs[k].push(s.log_sigma[0]);
                    acc.sp[k].push(s.sigma_plus());
                    acc.s12[k].add(s.sigma12.abs());
                    if let Some(h) = acc.hist.get_mut(k) {
                        h.add(s.log_sigma[0]);
                    }
                    if k >= tail0 {
                        tail.add(r);
                    }
                }
                acc.tail.push(tail.value() / (nrec - tail0) as f64);
                acc.saturated += s.saturated as usize;
            }
            acc
        })
        .collect();

    let mut total = Acc::new(nrec, cfg.histogram);
    for c in &chunks {
        total.merge(c);
    }
    let n = cfg.n_traj as f64;
    Ok(TrajectoryStats {
        rho00_mean: total.rho.iter().map(|s| s.value() / n).collect(),
        mean_log_sigma_plus: total.logs.iter().map(|m| m.mean()).collect(),
        var_log: total.logs.iter().map(|m| m.variance()).collect(),
        mean_sigma_plus: total.sp.iter().map(|m| m.mean()).collect(),
        sigma_plus_stderr: total.sp.iter().map(|m| m.std_err()).collect(),
        mean_abs_sigma12: total.s12.iter().map(|s| s.value() / n).collect(),
        log_sigma_plus_hist: total.hist,
        late_rho00: total.tail.mean(),
        late_rho00_stderr: total.tail.std_err(),
        tail_fraction: cfg.tail_fraction,
        tail_start_step: times[tail0],
        saturated_trajectories: total.saturated,
        n_traj: cfg.n_traj,
        times,
    })
}

/// Final state of every trajectory, in trajectory order, using the same
/// streams as [`run_ensemble`].
pub fn final_states(cfg: &EnsembleConfig) -> Result<Vec<GaussianState>> {
    if cfg.n_traj == 0 {
        return Err(invalid("n_traj", "need at least one trajectory"));
    }
    let parts: Vec<Vec<GaussianState>> = chunk_ranges(cfg.n_traj)
        .into_par_iter()
        .map(|range| {
            range
                .map(|traj| {
                    let mut rng = trajectory_rng(cfg.seed, traj as u64);
                    let mut s = cfg.init;
                    if let Some(l) = cfg.cutoff {
                        s.clamp_to_cutoff(l);
                    }
                    for _ in 0..cfg.n_steps {
                        s = step_stochastic(&s, &cfg.params, &mut rng);
                        if let Some(l) = cfg.cutoff {
                            s.clamp_to_cutoff(l);
                        }
                    }
                    s
                })
                .collect()
        })
        .collect();
    Ok(parts.concat())
}
