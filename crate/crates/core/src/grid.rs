//! Deterministic evolution of the distribution of Gaussian states on a
//! log-grid over (ln σ₊, ln σ₋), its fixed point, and the order parameter.
//!
//! Both channels act as tensor products of one-dimensional transfer
//! operators, one per axis. Squeezing is a lattice shift (split linearly
//! between two cells when 2κ is not a multiple of the bin width) with
//! clamp-to-boundary at the cutoffs. Control transfers mass by preimage
//! overlap, which conserves it exactly.
//!
//! Axis conventions, with Δ = ln 2 / bins_per_octave and n = L·bpo + 1 cells:
//! plus cell `i` is centred at ln σ₊ = ln ½ + iΔ, minus cell `j` at
//! ln σ₋ = ln ½ − jΔ. Cell 0 of each axis sits at the vacuum value ½.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::log_add_exp;
use crate::params::ChannelParams;
use crate::stats::{neumaier_sum, NeumaierSum};

const LN_HALF: f64 = -std::f64::consts::LN_2;
/// Values below this are flushed to zero to keep subnormals out of the loops.
const FLUSH: f64 = 1e-280;
const MASS_TOL: f64 = 1e-10;
/// Resolution used when none is given.
pub const DEFAULT_BINS_PER_OCTAVE: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub cutoff: u32,
    pub bins_per_octave: u32,
}

impl GridSpec {
    pub fn new(cutoff: u32, bins_per_octave: u32) -> Result<Self> {
        if cutoff < 1 {
            return Err(invalid("cutoff", "must be at least 1"));
        }
        if bins_per_octave < 1 {
            return Err(invalid("bins_per_octave", "must be at least 1"));
        }
        Ok(Self { cutoff, bins_per_octave })
    }

    pub fn cells_per_axis(&self) -> usize {
        (self.cutoff * self.bins_per_octave) as usize + 1
    }

    pub fn width(&self) -> f64 {
        std::f64::consts::LN_2 / self.bins_per_octave as f64
    }

    pub fn log_sigma_plus(&self, i: usize) -> f64 {
        LN_HALF + i as f64 * self.width()
    }

    pub fn log_sigma_minus(&self, j: usize) -> f64 {
        LN_HALF - j as f64 * self.width()
    }

    /// Squeeze displacement in bins, 2κ/Δ.
    pub fn shift_bins(&self, kappa: f64) -> f64 {
        2.0 * kappa / self.width()
    }

    /// True when 2κ is an integer number of bins, so squeezing moves mass exactly.
    pub fn is_exact_shift(&self, kappa: f64) -> bool {
        let s = self.shift_bins(kappa);
        (s - s.round()).abs() < 1e-9
    }
}

/// Probability mass per cell, row-major with the plus index outermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionGrid {
    spec: GridSpec,
    mass: Vec<f64>,
}

impl DistributionGrid {
    pub fn point_mass_at_vacuum(spec: GridSpec) -> Self {
        let n = spec.cells_per_axis();
        let mut mass = vec![0.0; n * n];
        mass[0] = 1.0;
        Self { spec, mass }
    }

    pub fn uniform(spec: GridSpec) -> Self {
        let n = spec.cells_per_axis();
        Self { spec, mass: vec![1.0 / (n * n) as f64; n * n] }
    }

    pub fn from_mass(spec: GridSpec, mass: Vec<f64>) -> Result<Self> {
        let n = spec.cells_per_axis();
        if mass.len() != n * n {
            return Err(invalid("mass", format!("expected {} cells, got {}", n * n, mass.len())));
        }
        if mass.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
            return Err(invalid("mass", "cells must be finite and nonnegative"));
        }
        let total = neumaier_sum(mass.iter().copied());
        if (total - 1.0).abs() > MASS_TOL {
            return Err(invalid("mass", format!("total mass {total} is not 1")));
        }
        Ok(Self { spec, mass })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn n(&self) -> usize {
        self.spec.cells_per_axis()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.n() + j]
    }

    pub fn total_mass(&self) -> f64 {
        neumaier_sum(self.mass.iter().copied())
    }

    /// Mass per σ₊ cell after summing over σ₋.
    pub fn marginal_plus(&self) -> Vec<f64> {
        self.mass.chunks(self.n()).map(|row| neumaier_sum(row.iter().copied())).collect()
    }

    pub fn marginal_minus(&self) -> Vec<f64> {
        let n = self.n();
        (0..n).map(|j| neumaier_sum((0..n).map(|i| self.mass[i * n + j]))).collect()
    }

    /// Probability density in σ₊ at each plus-cell centre.
    pub fn density_plus(&self) -> Vec<(f64, f64)> {
        let d = self.spec.width();
        self.marginal_plus()
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                let y = self.spec.log_sigma_plus(i);
                let sigma = y.exp();
                (sigma, m / (sigma * 2.0 * (0.5 * d).sinh()))
            })
            .collect()
    }

    /// Moves every cell `k` steps up the σ₊ axis, piling up at the top cell.
    pub fn translated_plus(&self, k: usize) -> Self {
        let n = self.n();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let d = (i + k).min(n - 1);
            for j in 0..n {
                out[d * n + j] += self.mass[i * n + j];
            }
        }
        Self { spec: self.spec, mass: out }
    }
}

fn vacuum_weight(log_sigma: f64) -> f64 {
    (-0.5 * log_add_exp(log_sigma, LN_HALF)).exp()
}

/// ρ̄₀₀ = Σ 𝒬(σ₊,σ₋)/√((σ₊+½)(σ₋+½)), evaluated at cell centres.
pub fn order_parameter(grid: &DistributionGrid) -> f64 {
    let (wp, wm) = weights(grid.spec);
    order_parameter_with(&grid.mass, &wp, &wm)
}

fn weights(spec: GridSpec) -> (Vec<f64>, Vec<f64>) {
    let n = spec.cells_per_axis();
    let wp = (0..n).map(|i| vacuum_weight(spec.log_sigma_plus(i))).collect();
    let wm = (0..n).map(|j| vacuum_weight(spec.log_sigma_minus(j))).collect();
    (wp, wm)
}

fn order_parameter_with(mass: &[f64], wp: &[f64], wm: &[f64]) -> f64 {
    let n = wp.len();
    let mut s = NeumaierSum::new();
    for (i, row) in mass.chunks(n).enumerate() {
        let r: f64 = row.iter().zip(wm).map(|(q, w)| q * w).sum();
        s.add(wp[i] * r);
    }
    s.value().min(1.0)
}

/// Sparse one-dimensional transfer operator stored by source cell.
#[derive(Debug, Clone)]
struct AxisOp {
    start: Vec<usize>,
    dst: Vec<usize>,
    w: Vec<f64>,
    /// Per source, the weight that did not hit a cutoff.
    kept: Vec<f64>,
}

impl AxisOp {
    fn from_lists(lists: Vec<Vec<(usize, f64)>>, kept: Vec<f64>) -> Self {
        let mut start = Vec::with_capacity(lists.len() + 1);
        let mut dst = Vec::new();
        let mut w = Vec::new();
        start.push(0);
        for l in lists {
            for (d, x) in l {
                dst.push(d);
                w.push(x);
            }
            start.push(dst.len());
        }
        Self { start, dst, w, kept }
    }

    fn entries(&self, src: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.start[src]..self.start[src + 1]).map(move |e| (self.dst[e], self.w[e]))
    }

    /// Shift by `s ≥ 0` cells towards larger index, clamped at n − 1.
    fn shift(n: usize, s: f64) -> Self {
        let mut m = s.floor() as usize;
        let mut f = s - m as f64;
        if f < 1e-12 {
            f = 0.0;
        } else if f > 1.0 - 1e-12 {
            m += 1;
            f = 0.0;
        }
        let mut lists = Vec::with_capacity(n);
        let mut kept = Vec::with_capacity(n);
        for k in 0..n {
            let (d0, d1) = ((k + m).min(n - 1), (k + m + 1).min(n - 1));
            let keep0 = if k + m < n { 1.0 - f } else { 0.0 };
            let keep1 = if k + m + 1 < n { f } else { 0.0 };
            if f == 0.0 || d0 == d1 {
                lists.push(vec![(d0, 1.0)]);
            } else {
                lists.push(vec![(d0, 1.0 - f), (d1, f)]);
            }
            kept.push(keep0 + keep1);
        }
        Self::from_lists(lists, kept)
    }

    /// Control along one axis. `dir = +1` for the plus axis (index grows with
    /// σ), `−1` for the minus axis. Each source cell, taken as uniform in y,
    /// is split among the cells its image under y ↦ ln(a eʸ + c) overlaps,
    /// by the y-length of the preimage of each destination inside the source.
    fn control(n: usize, width: f64, gamma: f64, dir: f64) -> Self {
        let log_a = -2.0 * gamma;
        let c = -0.5 * (-2.0 * gamma).exp_m1();
        let log_c = c.ln();
        let fwd = |y: f64| log_add_exp(log_a + y, log_c);
        // inverse of fwd; −∞ when eʸ ≤ c
        let inv = |y: f64| {
            let e = y.exp() - c;
            if e <= 0.0 {
                f64::NEG_INFINITY
            } else {
                e.ln() - log_a
            }
        };
        let centre = |k: usize| LN_HALF + dir * k as f64 * width;
        let locate = |y: f64| -> usize {
            let k = (dir * (y - LN_HALF) / width).round();
            k.clamp(0.0, (n - 1) as f64) as usize
        };
        let mut lists = Vec::with_capacity(n);
        for k in 0..n {
            let (lo, hi) = (centre(k) - 0.5 * width, centre(k) + 0.5 * width);
            let (a, b) = (locate(fwd(lo)), locate(fwd(hi)));
            let (d0, d1) = (a.min(b), a.max(b));
            let mut l = Vec::with_capacity(d1 - d0 + 1);
            let mut total = 0.0;
            for d in d0..=d1 {
                let (dlo, dhi) = (centre(d) - 0.5 * width, centre(d) + 0.5 * width);
                let overlap = hi.min(inv(dhi)) - lo.max(inv(dlo));
                if overlap > 0.0 {
                    l.push((d, overlap));
                    total += overlap;
                }
            }
            for e in &mut l {
                e.1 /= total;
            }
            lists.push(l);
        }
        Self::from_lists(lists, vec![1.0; n])
    }
}

/// The mixed channel on a fixed grid, with its axis operators precomputed.
#[derive(Debug, Clone)]
pub struct Transfer {
    spec: GridSpec,
    params: ChannelParams,
    squeeze_plus: AxisOp,
    squeeze_minus: AxisOp,
    control_plus: AxisOp,
    control_minus: AxisOp,
    wp: Vec<f64>,
    wm: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// Mass absorbed into boundary cells during this step.
    pub clamped_mass: f64,
    /// ‖𝒬_{t+1} − 𝒬_t‖₁.
    pub residual: f64,
}

impl Transfer {
    pub fn new(spec: GridSpec, params: ChannelParams) -> Self {
        let n = spec.cells_per_axis();
        let s = spec.shift_bins(params.kappa());
        let (wp, wm) = weights(spec);
        Self {
            spec,
            params,
            squeeze_plus: AxisOp::shift(n, s),
            squeeze_minus: AxisOp::shift(n, s),
            control_plus: AxisOp::control(n, spec.width(), params.gamma(), 1.0),
            control_minus: AxisOp::control(n, spec.width(), params.gamma(), -1.0),
            wp,
            wm,
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn params(&self) -> ChannelParams {
        self.params
    }

    pub fn order_parameter(&self, grid: &DistributionGrid) -> f64 {
        order_parameter_with(&grid.mass, &self.wp, &self.wm)
    }

    /// (A ⊗ B) applied to `q`, scaled by `scale` and accumulated into `out`.
    fn apply_tensor(n: usize, a: &AxisOp, b: &AxisOp, q: &[f64], tmp: &mut [f64], out: &mut [f64], scale: f64) {
        // rows: tmp[i, :] = B q[i, :]
        tmp.par_chunks_mut(n).zip(q.par_chunks(n)).for_each(|(t, row)| {
            t.iter_mut().for_each(|x| *x = 0.0);
            if row.iter().all(|&x| x == 0.0) {
                return;
            }
            for (j, &x) in row.iter().enumerate() {
                if x != 0.0 {
                    for (d, w) in b.entries(j) {
                        t[d] += w * x;
                    }
                }
            }
        });
        // columns: out[d, :] += scale · Σ_i A[d, i] tmp[i, :]
        for i in 0..n {
            let src = &tmp[i * n..(i + 1) * n];
            if src.iter().all(|&x| x == 0.0) {
                continue;
            }
            for (d, w) in a.entries(i) {
                let ws = w * scale;
                let dst = &mut out[d * n..(d + 1) * n];
                for (o, &x) in dst.iter_mut().zip(src) {
                    *o += ws * x;
                }
            }
        }
    }

    fn clamped(&self, q: &[f64]) -> f64 {
        let n = self.spec.cells_per_axis();
        let kp = &self.squeeze_plus.kept;
        let km = &self.squeeze_minus.kept;
        let mut lost = NeumaierSum::new();
        for (i, row) in q.chunks(n).enumerate() {
            let r: f64 = row.iter().zip(km).map(|(x, k)| x * (1.0 - kp[i] * k)).sum();
            lost.add(r);
        }
        (1.0 - self.params.p()) * lost.value()
    }

    /// One application of the mixed channel, written into `out`.
    pub fn step_into(&self, q: &DistributionGrid, out: &mut DistributionGrid, tmp: &mut Vec<f64>) -> StepReport {
        let n = self.spec.cells_per_axis();
        tmp.resize(n * n, 0.0);
        out.mass.iter_mut().for_each(|x| *x = 0.0);
        let p = self.params.p();
        if p < 1.0 {
            Self::apply_tensor(n, &self.squeeze_plus, &self.squeeze_minus, &q.mass, tmp, &mut out.mass, 1.0 - p);
        }
        if p > 0.0 {
            Self::apply_tensor(n, &self.control_plus, &self.control_minus, &q.mass, tmp, &mut out.mass, p);
        }
        let mut residual = 0.0;
        for (o, &x) in out.mass.iter_mut().zip(&q.mass) {
            if *o < FLUSH {
                *o = 0.0;
            }
            residual += (*o - x).abs();
        }
        StepReport { clamped_mass: if p < 1.0 { self.clamped(&q.mass) } else { 0.0 }, residual }
    }

    pub fn push_forward(&self, grid: &DistributionGrid) -> Result<(DistributionGrid, StepReport)> {
        let mut out = grid.clone();
        let mut tmp = Vec::new();
        let rep = self.step_into(grid, &mut out, &mut tmp);
        check_mass(&out, 1)?;
        Ok((out, rep))
    }
}

fn check_mass(grid: &DistributionGrid, step: usize) -> Result<()> {
    let total = grid.total_mass();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::MassConservation { total, step });
    }
    Ok(())
}

/// new 𝒬 = (1−p)·𝕊𝒬 + p·ℂ𝒬, with the clamped mass reported.
pub fn push_forward(grid: &DistributionGrid, params: &ChannelParams) -> Result<(DistributionGrid, StepReport)> {
    Transfer::new(grid.spec(), *params).push_forward(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub grid: DistributionGrid,
    pub iterations: usize,
    pub residual: f64,
    /// Mass clamped per step at the fixed point.
    pub clamped_mass: f64,
    pub rho00: f64,
}

/// Iterates the channel until ‖Δ𝒬‖₁ < tol, starting from `init` or the vacuum.
pub fn steady_state(
    params: &ChannelParams,
    spec: GridSpec,
    opts: SolverOptions,
    init: Option<&DistributionGrid>,
) -> Result<SteadyState> {
    if !(opts.tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let transfer = Transfer::new(spec, *params);
    let mut q = match init {
        Some(g) if g.spec() == spec => g.clone(),
        Some(_) => return Err(invalid("init", "grid spec does not match")),
        None => DistributionGrid::point_mass_at_vacuum(spec),
    };
    let mut next = q.clone();
    let mut tmp = Vec::new();
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let rep = transfer.step_into(&q, &mut next, &mut tmp);
        std::mem::swap(&mut q, &mut next);
        residual = rep.residual;
        if it % 64 == 0 || residual < opts.tol {
            check_mass(&q, it)?;
        }
        if residual < opts.tol {
            return Ok(SteadyState {
                rho00: transfer.order_parameter(&q),
                grid: q,
                iterations: it,
                residual,
                clamped_mass: rep.clamped_mass,
            });
        }
    }
    Err(Error::NotConverged { iterations: opts.max_iter, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimePoint {
    pub t: usize,
    pub rho00: f64,
    pub residual: f64,
    pub clamped_mass: f64,
}

/// Fixed number of channel steps from `init`, recording ρ̄₀₀ every `record_every` steps.
pub fn evolve(
    params: &ChannelParams,
    init: &DistributionGrid,
    steps: usize,
    record_every: usize,
) -> Result<(DistributionGrid, Vec<TimePoint>)> {
    let transfer = Transfer::new(init.spec(), *params);
    let every = record_every.max(1);
    let mut q = init.clone();
    let mut next = q.clone();
    let mut tmp = Vec::new();
    let mut out = vec![TimePoint { t: 0, rho00: transfer.order_parameter(&q), residual: 0.0, clamped_mass: 0.0 }];
    for t in 1..=steps {
        let rep = transfer.step_into(&q, &mut next, &mut tmp);
        std::mem::swap(&mut q, &mut next);
        if t % 64 == 0 {
            check_mass(&q, t)?;
        }
        if t % every == 0 || t == steps {
            out.push(TimePoint {
                t,
                rho00: transfer.order_parameter(&q),
                residual: rep.residual,
                clamped_mass: rep.clamped_mass,
            });
        }
    }
    check_mass(&q, steps)?;
    Ok((q, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    pub cutoff: u32,
    /// Iterations needed to reach the fixed point.
    pub t: usize,
    pub rho00: f64,
    pub residual: f64,
    pub clamped_mass: f64,
}

/// Fixed-point ρ̄₀₀ over a p lattice for each cutoff. Each cutoff sweeps p
/// from the largest value down, warm-starting from the previous fixed point.
pub fn rho00_vs_p(
    kappa: f64,
    gamma: f64,
    ps: &[f64],
    cutoffs: &[u32],
    bins_per_octave: u32,
    opts: SolverOptions,
) -> Result<Vec<SweepRow>> {
    let mut order: Vec<f64> = ps.to_vec();
    order.sort_by(|a, b| b.total_cmp(a));
    let mut rows = Vec::with_capacity(ps.len() * cutoffs.len());
    for &l in cutoffs {
        let spec = GridSpec::new(l, bins_per_octave)?;
        let mut warm: Option<DistributionGrid> = None;
        for &p in &order {
            let params = ChannelParams::new(p, kappa, gamma)?;
            let ss = steady_state(&params, spec, opts, warm.as_ref())?;
            rows.push(SweepRow {
                p,
                cutoff: l,
                t: ss.iterations,
                rho00: ss.rho00,
                residual: ss.residual,
                clamped_mass: ss.clamped_mass,
            });
            warm = Some(ss.grid);
        }
    }
    rows.sort_by(|a, b| a.cutoff.cmp(&b.cutoff).then(a.p.total_cmp(&b.p)));
    Ok(rows)
}

/// The same channel acting on the σ₊ marginal alone.
#[derive(Debug, Clone)]
pub struct MarginalTransfer {
    p: f64,
    squeeze: AxisOp,
    control: AxisOp,
}

impl MarginalTransfer {
    pub fn new(spec: GridSpec, params: ChannelParams) -> Self {
        let n = spec.cells_per_axis();
        Self {
            p: params.p(),
            squeeze: AxisOp::shift(n, spec.shift_bins(params.kappa())),
            control: AxisOp::control(n, spec.width(), params.gamma(), 1.0),
        }
    }

    pub fn step(&self, m: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; m.len()];
        for (k, &x) in m.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (d, w) in self.squeeze.entries(k) {
                out[d] += (1.0 - self.p) * w * x;
            }
            for (d, w) in self.control.entries(k) {
                out[d] += self.p * w * x;
            }
        }
        for o in &mut out {
            if *o < FLUSH {
                *o = 0.0;
            }
        }
        out
    }

    pub fn steady_state(&self, init: &[f64], opts: SolverOptions) -> Result<(Vec<f64>, usize)> {
        let mut m = init.to_vec();
        for it in 1..=opts.max_iter {
            let next = self.step(&m);
            let r: f64 = next.iter().zip(&m).map(|(a, b)| (a - b).abs()).sum();
            m = next;
            if r < opts.tol {
                return Ok((m, it));
            }
        }
        Err(Error::NotConverged { iterations: opts.max_iter, residual: f64::NAN })
    }
}
