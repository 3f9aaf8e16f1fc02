//! Closed-form drift–diffusion description of y = ln σ₊.
//!
//! With δt = 1 the step statistics of y far from the wall at ln ½ are
//! mean v̄ = 2κ − 2p(κ+γ) and variance 4p(1−p)(κ+γ)² = 2𝒟, so
//! v̄ = 2κ(p_c − p)/p_c and 𝒟 = 2κ²p(1−p)/p_c².

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::ChannelParams;
use crate::stats::normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FPModel {
    pub kappa: f64,
    pub gamma: f64,
    pub p: f64,
    pub pc: f64,
    pub vbar: f64,
    pub diffusion: f64,
    /// |v̄|/𝒟; infinite when 𝒟 = 0.
    pub xi: f64,
    /// Position of the reflecting wall, ln ½.
    pub y_min: f64,
    /// Set for p ∈ {0, 1}, where 𝒟 = 0.
    pub degenerate: bool,
}

/// Drift, diffusion and tail exponent for the given channel.
pub fn predict_constants(params: &ChannelParams) -> Result<FPModel> {
    let (k, g, p) = (params.kappa(), params.gamma(), params.p());
    if !g.is_finite() {
        return Err(invalid("gamma", "the drift-diffusion limit needs finite gamma"));
    }
    let pc = params.pc();
    let vbar = 2.0 * k * (pc - p) / pc;
    let diffusion = 2.0 * k * k * p * (1.0 - p) / (pc * pc);
    Ok(FPModel {
        kappa: k,
        gamma: g,
        p,
        pc,
        vbar,
        diffusion,
        xi: vbar.abs() / diffusion,
        y_min: -std::f64::consts::LN_2,
        degenerate: diffusion == 0.0,
    })
}

/// The diffusion constant written as 2p(1−p)(Γ+Ω)²δt with δt = 1.
/// Algebraically identical to `FPModel::diffusion` since κ/p_c = κ + γ.
pub fn diffusion_rate_form(params: &ChannelParams) -> f64 {
    let p = params.p();
    2.0 * p * (1.0 - p) * (params.kappa() + params.gamma()).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalLaws {
    /// ρ̄₀₀ ∼ t^{−1/2}.
    pub rho00_time_exponent: f64,
    /// ρ̄₀₀ ∼ 1/L.
    pub rho00_cutoff_exponent: f64,
    pub notes: &'static str,
}

impl FPModel {
    /// Stationary density ξ 2^{−ξ} σ₊^{−1−ξ} on σ₊ ≥ ½; zero below.
    pub fn steady_state_density(&self, sigma_plus: f64) -> Result<f64> {
        self.require_controlled()?;
        if sigma_plus < 0.5 {
            return Ok(0.0);
        }
        let xi = self.xi;
        Ok(xi * (-xi * std::f64::consts::LN_2 - (1.0 + xi) * sigma_plus.ln()).exp())
    }

    /// Log-log slope of the stationary density, −(1 + ξ).
    pub fn tail_slope(&self) -> Result<f64> {
        self.require_controlled()?;
        Ok(-(1.0 + self.xi))
    }

    fn require_controlled(&self) -> Result<()> {
        if !(self.p > self.pc) || self.degenerate {
            return Err(Error::OutOfDomain(format!(
                "no normalizable steady state for p = {} <= p_c = {}",
                self.p, self.pc
            )));
        }
        Ok(())
    }

    /// Free (wall-less) Gaussian solution for y at time t, started at y0.
    pub fn transient_density(&self, y0: f64, y: f64, t: f64) -> f64 {
        let var = 2.0 * self.diffusion * t;
        let d = y - y0 - self.vbar * t;
        (-d * d / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    pub fn transient_cdf(&self, y0: f64, y: f64, t: f64) -> f64 {
        let var = 2.0 * self.diffusion * t;
        normal_cdf((y - y0 - self.vbar * t) / var.sqrt())
    }

    /// Density of σ₊ implied by the Gaussian in y, P(ln σ₊)/σ₊.
    pub fn transient_sigma_density(&self, y0: f64, sigma_plus: f64, t: f64) -> f64 {
        self.transient_density(y0, sigma_plus.ln(), t) / sigma_plus
    }

    /// The wall is irrelevant while the mean sits three standard deviations above it.
    pub fn far_from_boundary(&self, y0: f64, t: f64) -> bool {
        y0 + self.vbar * t - 3.0 * (2.0 * self.diffusion * t).sqrt() > self.y_min
    }

    pub fn critical_laws(&self) -> Result<CriticalLaws> {
        if (self.p - self.pc).abs() > 1e-9 {
            return Err(Error::OutOfDomain(format!("critical laws hold at p = p_c = {}, got {}", self.pc, self.p)));
        }
        Ok(CriticalLaws {
            rho00_time_exponent: 0.5,
            rho00_cutoff_exponent: 1.0,
            notes: "zero drift: free diffusion of ln σ₊ from the wall gives ρ̄₀₀ ∼ t^{-1/2}; \
                    a second wall at ln σ₊ = (L−1) ln 2 flattens the stationary density, giving ρ̄₀₀ ∼ 1/L",
        })
    }
}

/// ∫ over σ₊ ≥ ½ of the stationary density, after mapping u = 1/σ₊.
pub fn steady_state_normalization(model: &FPModel) -> Result<f64> {
    model.require_controlled()?;
    let xi = model.xi;
    let c = xi * (-xi * std::f64::consts::LN_2).exp();
    let out = quadrature::double_exponential::integrate(|u: f64| c * u.powf(xi - 1.0), 0.0, 2.0, 1e-12);
    Ok(out.integral)
}

/// Exact spectral threshold p*_n = (e^{nκ} − 1)/(e^{nκ} − e^{−nγ}), for real n ≥ 0.
pub fn p_star(n: f64, kappa: f64, gamma: f64) -> f64 {
    if n == 0.0 {
        return crate::params::critical_rate(kappa, gamma);
    }
    if gamma.is_infinite() {
        return -(-n * kappa).exp_m1();
    }
    (-n * kappa).exp_m1() / (-n * (kappa + gamma)).exp_m1()
}

/// p at which ξ = n, i.e. where the drift-diffusion picture puts the
/// onset of a finite ⟨(v̂₊)^{2n}⟩. Positive root of nκp² + (p_c − nκ)p − p_c² = 0.
pub fn p_fp(n: u32, kappa: f64, gamma: f64) -> f64 {
    let pc = crate::params::critical_rate(kappa, gamma);
    let a = n as f64 * kappa;
    let b = pc - a;
    let disc = (b * b + 4.0 * a * pc * pc).sqrt();
    if b >= 0.0 {
        2.0 * pc * pc / (b + disc)
    } else {
        (disc - b) / (2.0 * a)
    }
}

/// First-order expansion p_c + (1 − p_c)nκ of [`p_fp`].
pub fn p_fp_linear(n: u32, kappa: f64, gamma: f64) -> f64 {
    let pc = crate::params::critical_rate(kappa, gamma);
    pc + (1.0 - pc) * n as f64 * kappa
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentThreshold {
    pub n: u32,
    pub p_fp_2n: f64,
    pub p_fp_2n_linear: f64,
    pub p_star_n: f64,
    pub p_star_2n: f64,
}

pub fn moment_thresholds(kappa: f64, gamma: f64, n_max: u32) -> Result<Vec<MomentThreshold>> {
    if n_max < 1 {
        return Err(invalid("n_max", "must be at least 1"));
    }
    Ok((1..=n_max)
        .map(|n| MomentThreshold {
            n,
            p_fp_2n: p_fp(n, kappa, gamma),
            p_fp_2n_linear: p_fp_linear(n, kappa, gamma),
            p_star_n: p_star(n as f64, kappa, gamma),
            p_star_2n: p_star(2.0 * n as f64, kappa, gamma),
        })
        .collect())
}

/// Exact drift of x = ln 2σ₊ including the wall region, with λ = 1 − p_c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedFPModel {
    pub kappa: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub vbar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedCoefficients {
    pub x: f64,
    pub r: f64,
    pub v: f64,
    pub h_vbar: f64,
    /// ln(eˣ − λ); absent when eˣ ≤ λ.
    pub z: Option<f64>,
}

impl RefinedFPModel {
    pub fn new(params: &ChannelParams) -> Result<Self> {
        let m = predict_constants(params)?;
        Ok(Self { kappa: m.kappa, gamma: m.gamma, lambda: 1.0 - m.pc, vbar: m.vbar })
    }

    pub fn r(&self, x: f64) -> f64 {
        1.0 - self.lambda * (-x).exp()
    }

    pub fn v(&self, x: f64) -> f64 {
        (self.vbar + 2.0 * self.kappa * self.lambda / (x.exp() - self.lambda)) * self.r(x)
    }

    pub fn h(&self, v: f64) -> f64 {
        (self.gamma / v) * (v - 2.0 * self.kappa) / (self.gamma + self.kappa)
    }

    pub fn z_of_x(&self, x: f64) -> Result<f64> {
        let e = x.exp() - self.lambda;
        if e <= 0.0 {
            return Err(Error::OutOfDomain(format!("e^x = {} <= lambda = {}", x.exp(), self.lambda)));
        }
        Ok(e.ln())
    }

    pub fn x_of_z(&self, z: f64) -> f64 {
        (z.exp() + self.lambda).ln()
    }
}

pub fn refined_coefficients(params: &ChannelParams, x: f64) -> Result<RefinedCoefficients> {
    let m = RefinedFPModel::new(params)?;
    Ok(RefinedCoefficients { x, r: m.r(x), v: m.v(x), h_vbar: m.h(m.vbar), z: m.z_of_x(x).ok() })
}
