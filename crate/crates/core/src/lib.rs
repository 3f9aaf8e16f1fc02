//! Simulation library for stochastic control of chaotic dynamics near an
//! unstable fixed point.
//!
//! * [`gaussian`] – exact Gaussian trajectories of the inverted oscillator
//! * [`grid`] – fixed point of the distribution of Gaussian states
//! * [`scaling`] – critical exponent fits and data collapse
//! * [`fokker_planck`] – closed-form drift/diffusion predictions
//! * [`spectrum`] – exact eigenoperators of the mixed channel
//! * [`catmap`] – full quantum trajectories of the quantized cat map
//! * [`classical`] – Ornstein–Uhlenbeck control baseline

pub mod catmap;
pub mod classical;
pub mod error;
pub mod fokker_planck;
pub mod gaussian;
pub mod grid;
pub mod params;
pub mod rng;
pub mod scaling;
pub mod spectrum;
pub mod stats;

pub use error::{Error, Result};
pub use gaussian::{final_states, run_ensemble, step_stochastic, Channel, EnsembleConfig, GaussianState, TrajectoryStats};
pub use grid::{order_parameter, push_forward, steady_state, DistributionGrid, GridSpec, SolverOptions, Transfer};
pub use params::{cat_map_kappa, gamma_from_theta, ChannelParams};
