//! Channel parameters shared by every back end.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Squeezing rate of the quantized cat map, `2 ln φ` with φ the golden ratio.
pub fn cat_map_kappa() -> f64 {
    2.0 * ((1.0 + 5f64.sqrt()) / 2.0).ln()
}

/// The alternative squeezing rate quoted alongside the cat-map value for the
/// fixed-point curves. Both are exposed; neither is preferred.
pub const ALT_FIG_KAPPA: f64 = 0.42;

/// Control strength `γ = −ln cos θ` for a measurement angle θ ∈ (0, π/2].
///
/// θ = π/2 gives γ = ∞, a full reset.
pub fn gamma_from_theta(theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_2 + 1e-15) {
        return Err(invalid("theta", format!("{theta} not in (0, pi/2]")));
    }
    let c = theta.cos();
    if c <= 1e-300 {
        Ok(f64::INFINITY)
    } else {
        Ok(-c.ln())
    }
}

pub fn critical_rate(kappa: f64, gamma: f64) -> f64 {
    if gamma.is_infinite() {
        0.0
    } else {
        kappa / (kappa + gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    p: f64,
    kappa: f64,
    gamma: f64,
}

impl ChannelParams {
    pub fn new(p: f64, kappa: f64, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid("p", format!("{p} not in [0, 1]")));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(invalid("kappa", format!("{kappa} must be positive and finite")));
        }
        if !(gamma > 0.0) {
            return Err(invalid("gamma", format!("{gamma} must be positive")));
        }
        Ok(Self { p, kappa, gamma })
    }

    pub fn from_theta(p: f64, kappa: f64, theta: f64) -> Result<Self> {
        Self::new(p, kappa, gamma_from_theta(theta)?)
    }

    pub fn with_p(&self, p: f64) -> Result<Self> {
        Self::new(p, self.kappa, self.gamma)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// θ with cos θ = e^{−γ}.
    pub fn theta(&self) -> f64 {
        (-self.gamma).exp().acos()
    }

    pub fn pc(&self) -> f64 {
        critical_rate(self.kappa, self.gamma)
    }
}
