//! Classical counterpart of the controlled IHO: Gaussian phase-space
//! distributions under squeezing and Ornstein–Uhlenbeck control.
//!
//! With stationary variance D/γ = ½ the per-step variance maps coincide with
//! the quantum Gaussian channels, and the overlap with the controlled
//! distribution coincides with the vacuum fidelity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{log_add_exp, Channel, GaussianState};
use crate::params::ChannelParams;
use crate::rng::{chunk_ranges, trajectory_rng};
use crate::stats::NeumaierSum;

/// Gaussian distribution in the (v₊, v₋) eigencoordinates of the saddle,
/// with diagonal covariance kept in log form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalGaussian {
    mean: [f64; 2],
    log_var: [f64; 2],
}

impl ClassicalGaussian {
    pub fn new(mean: [f64; 2], variances: [f64; 2]) -> Result<Self> {
        for v in variances {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid("variance", format!("{v} must be positive and finite")));
            }
        }
        Ok(Self { mean, log_var: [variances[0].ln(), variances[1].ln()] })
    }

    pub fn centered(var_plus: f64, var_minus: f64) -> Result<Self> {
        Self::new([0.0; 2], [var_plus, var_minus])
    }

    pub fn mean(&self) -> [f64; 2] {
        self.mean
    }

    pub fn variances(&self) -> [f64; 2] {
        [self.log_var[0].exp(), self.log_var[1].exp()]
    }

    pub fn log_variances(&self) -> [f64; 2] {
        self.log_var
    }

    /// Free saddle evolution for one period: v₊ stretched by e^κ, v₋ compressed.
    pub fn squeeze(&self, kappa: f64) -> Self {
        Self {
            mean: [self.mean[0] * kappa.exp(), self.mean[1] * (-kappa).exp()],
            log_var: [self.log_var[0] + 2.0 * kappa, self.log_var[1] - 2.0 * kappa],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUParams {
    pub gamma_ou: f64,
    pub d_ou: f64,
    pub t_step: f64,
}

impl OUParams {
    pub fn new(gamma_ou: f64, d_ou: f64, t_step: f64) -> Result<Self> {
        if !(gamma_ou > 0.0 && gamma_ou.is_finite()) {
            return Err(invalid("gamma_ou", format!("{gamma_ou} must be positive")));
        }
        if !(d_ou > 0.0 && d_ou.is_finite()) {
            return Err(invalid("d_ou", format!("{d_ou} must be positive")));
        }
        if !(t_step > 0.0) {
            return Err(invalid("t_step", format!("{t_step} must be positive")));
        }
        Ok(Self { gamma_ou, d_ou, t_step })
    }

    /// Unit relaxation rate, D/γ = `ratio`, duration chosen so γt equals the
    /// quantum control exponent.
    pub fn matched(gamma_quantum: f64, ratio: f64) -> Result<Self> {
        Self::new(1.0, ratio, gamma_quantum)
    }

    pub fn stationary_variance(&self) -> f64 {
        self.d_ou / self.gamma_ou
    }

    pub fn is_quantum_limited(&self) -> bool {
        (self.stationary_variance() - 0.5).abs() <= 1e-12
    }

    pub fn exponent(&self) -> f64 {
        self.gamma_ou * self.t_step
    }
}

fn relax(g: &ClassicalGaussian, s: f64, gt: f64) -> ClassicalGaussian {
    let decay = (-gt).exp();
    let log_a = -2.0 * gt;
    let log_c = (-(-2.0 * gt).exp_m1() * s).ln();
    ClassicalGaussian {
        mean: [g.mean[0] * decay, g.mean[1] * decay],
        log_var: [log_add_exp(log_a + g.log_var[0], log_c), log_add_exp(log_a + g.log_var[1], log_c)],
    }
}

/// Exact OU kernel over one control period.
pub fn ou_control(g: &ClassicalGaussian, ou: &OUParams) -> ClassicalGaussian {
    relax(g, ou.stationary_variance(), ou.exponent())
}

/// Closed form for `n` consecutive control periods.
pub fn ou_control_n(g: &ClassicalGaussian, ou: &OUParams, n: u32) -> ClassicalGaussian {
    if n == 0 {
        return *g;
    }
    relax(g, ou.stationary_variance(), ou.exponent() * n as f64)
}

/// (2D/γ)/√((D/γ+σ₊)(D/γ+σ₋)) for a centred distribution.
pub fn overlap_order_parameter(g: &ClassicalGaussian, ou: &OUParams) -> Result<f64> {
    if g.mean != [0.0, 0.0] {
        return Err(Error::NonZeroMean(g.mean[0], g.mean[1]));
    }
    Ok(overlap(g, ou.stationary_variance()))
}

fn overlap(g: &ClassicalGaussian, s: f64) -> f64 {
    let ls = s.ln();
    let lp = log_add_exp(g.log_var[0], ls);
    let lm = log_add_exp(g.log_var[1], ls);
    let r = ((2.0 * s).ln() - 0.5 * (lp + lm)).exp();
    if s == 0.5 {
        r.min(1.0)
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub p: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub d_over_gamma: f64,
    pub n_traj: usize,
    pub n_steps: usize,
    /// Largest |overlap − ρ₀₀| over all trajectories and steps.
    pub max_trajectory_deviation: f64,
    /// Largest deviation between the ensemble-averaged curves.
    pub max_mean_deviation: f64,
    pub classical_mean: Vec<f64>,
    pub quantum_mean: Vec<f64>,
}

/// Runs classical and quantum Gaussian trajectories side by side from the
/// vacuum, feeding both the same channel choice at each step.
pub fn equivalence_suite(
    params: &ChannelParams,
    d_over_gamma: f64,
    n_traj: usize,
    n_steps: usize,
    seed: u64,
) -> Result<EquivalenceReport> {
    if n_traj == 0 {
        return Err(invalid("n_traj", "need at least one trajectory"));
    }
    if !params.gamma().is_finite() {
        return Err(invalid("gamma", "the classical map needs a finite control exponent"));
    }
    let ou = OUParams::matched(params.gamma(), d_over_gamma)?;
    let s = ou.stationary_variance();
    let parts: Vec<(Vec<NeumaierSum>, Vec<NeumaierSum>, f64)> = chunk_ranges(n_traj)
        .into_par_iter()
        .map(|range| {
            let mut cl = vec![NeumaierSum::new(); n_steps + 1];
            let mut qu = vec![NeumaierSum::new(); n_steps + 1];
            let mut worst: f64 = 0.0;
            for traj in range {
                let mut rng = trajectory_rng(seed, traj as u64);
                let mut g = ClassicalGaussian { mean: [0.0; 2], log_var: [0.5f64.ln(); 2] };
                let mut q = GaussianState::vacuum();
                for t in 0..=n_steps {
                    if t > 0 {
                        let ch = Channel::draw(params.p(), &mut rng);
                        g = match ch {
                            Channel::Squeeze => g.squeeze(params.kappa()),
                            Channel::Control => ou_control(&g, &ou),
                        };
                        q = q.apply(ch, params);
                    }
                    let a = overlap(&g, s);
                    let b = q.fidelity_rho00().expect("trajectories start centred");
                    worst = worst.max((a - b).abs());
                    cl[t].add(a);
                    qu[t].add(b);
                }
            }
            (cl, qu, worst)
        })
        .collect();
    let mut cl = vec![NeumaierSum::new(); n_steps + 1];
    let mut qu = vec![NeumaierSum::new(); n_steps + 1];
    let mut worst: f64 = 0.0;
    for (c, q, w) in parts {
        for t in 0..=n_steps {
            cl[t].merge(&c[t]);
            qu[t].merge(&q[t]);
        }
        worst = worst.max(w);
    }
    let classical_mean: Vec<f64> = cl.iter().map(|x| x.value() / n_traj as f64).collect();
    let quantum_mean: Vec<f64> = qu.iter().map(|x| x.value() / n_traj as f64).collect();
    let max_mean_deviation = classical_mean.iter().zip(&quantum_mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(EquivalenceReport {
        p: params.p(),
        kappa: params.kappa(),
        gamma: params.gamma(),
        d_over_gamma,
        n_traj,
        n_steps,
        max_trajectory_deviation: worst,
        max_mean_deviation,
        classical_mean,
        quantum_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_variance_is_fixed() {
        let ou = OUParams::new(0.7, 0.35, 1.3).unwrap();
        let g = ClassicalGaussian::new([0.0; 2], [0.5, 0.5]).unwrap();
        let h = ou_control(&g, &ou);
        assert!((h.variances()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn long_time_limit() {
        let ou = OUParams::new(1.0, 2.0, 50.0).unwrap();
        let g = ClassicalGaussian::new([3.0, -1.0], [40.0, 0.01]).unwrap();
        let h = ou_control(&g, &ou);
        assert!((h.variances()[0] - 2.0).abs() < 1e-12 && (h.variances()[1] - 2.0).abs() < 1e-12);
        assert!(h.mean()[0].abs() < 1e-20);
    }

    #[test]
    fn overlap_examples() {
        let ou = OUParams::new(1.0, 0.5, 1.0).unwrap();
        let g = ClassicalGaussian::centered(1.5, 0.5).unwrap();
        let v = overlap_order_parameter(&g, &ou).unwrap();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let far = ClassicalGaussian::centered(1e200, 0.5).unwrap();
        assert!(overlap_order_parameter(&far, &ou).unwrap() < 1e-99);
        let shifted = ClassicalGaussian::new([0.1, 0.0], [0.5, 0.5]).unwrap();
        assert!(overlap_order_parameter(&shifted, &ou).is_err());
    }

    #[test]
    fn self_overlap_is_one() {
        let ou = OUParams::new(2.0, 3.0, 1.0).unwrap();
        let g = ClassicalGaussian::centered(1.5, 1.5).unwrap();
        assert!((overlap_order_parameter(&g, &ou).unwrap() - 1.0).abs() < 1e-15);
    }
}
