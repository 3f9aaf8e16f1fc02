//! Quantum trajectories of the quantized cat map under stochastic
//! measurement-and-reset control.
//!
//! The Floquet propagator in the position basis is
//! ⟨Q₁|U|Q₂⟩ = √(i/N)·exp(iπ/N·(Q₁² + (Q₂−Q₁)²)), which factorizes into
//! two diagonal phases around a forward DFT. The number basis is the sorted
//! eigenbasis of H̃ = 2 − cos 2πx̂ − cos 2πp̂. Trajectories keep their state in
//! whichever basis the last step used and change basis only when needed.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{chunk_ranges, trajectory_rng};
use crate::stats::{MeanVar, NeumaierSum};

/// Born weight below which a trajectory is flagged and dropped.
pub const TRUNCATION_TOL: f64 = 1e-6;

/// Exact phase e^{iπ m/N}, reducing m mod 2N first.
fn phase(m: u64, n: usize) -> Complex64 {
    let m = (m % (2 * n as u64)) as f64;
    Complex64::from_polar(1.0, std::f64::consts::PI * m / n as f64)
}

/// Centred coordinate of grid index k, in [−½, ½).
fn centred(k: usize, n: usize) -> f64 {
    if k < n / 2 {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}

/// Eigenvectors of one parity block of H̃, stored both ways round.
#[derive(Debug, Clone)]
struct Block {
    dim: usize,
    /// Row-major: row i is position-combination i over block eigenvectors.
    rows: Vec<f64>,
    /// Row-major: row k is block eigenvector k.
    cols: Vec<f64>,
}

impl Block {
    fn from_eigen(vecs: &DMatrix<f64>, order: &[usize]) -> Self {
        let dim = vecs.nrows();
        let mut cols = vec![0.0; dim * dim];
        for (k, &src) in order.iter().enumerate() {
            let col = vecs.column(src);
            let imax = (0..dim).fold(0, |b, i| if col[i].abs() > col[b].abs() + 1e-12 { i } else { b });
            let sign = if col[imax] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..dim {
                cols[k * dim + i] = sign * col[i];
            }
        }
        let mut rows = vec![0.0; dim * dim];
        for k in 0..dim {
            for i in 0..dim {
                rows[i * dim + k] = cols[k * dim + i];
            }
        }
        Self { dim, rows, cols }
    }
}

/// Σ_j a_j (re_j + i im_j), with independent accumulators so it vectorizes.
fn dot2(a: &[f64], re: &[f64], im: &[f64]) -> (f64, f64) {
    let mut sr = [0.0; 4];
    let mut si = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cr = re.chunks_exact(4);
    let ci = im.chunks_exact(4);
    let (ta, tr, ti) = (ca.remainder(), cr.remainder(), ci.remainder());
    for ((x, r), i) in ca.zip(cr).zip(ci) {
        for l in 0..4 {
            sr[l] += x[l] * r[l];
            si[l] += x[l] * i[l];
        }
    }
    let mut r = (sr[0] + sr[1]) + (sr[2] + sr[3]);
    let mut i = (si[0] + si[1]) + (si[2] + si[3]);
    for ((x, a), b) in ta.iter().zip(tr).zip(ti) {
        r += x * a;
        i += x * b;
    }
    (r, i)
}

fn matvec(m: &[f64], dim: usize, re: &[f64], im: &[f64], out_re: &mut [f64], out_im: &mut [f64]) {
    for k in 0..dim {
        let (r, i) = dot2(&m[k * dim..(k + 1) * dim], re, im);
        out_re[k] = r;
        out_im[k] = i;
    }
}

pub struct CatMapSystem {
    n: usize,
    energies: Vec<f64>,
    /// Number state k lives in the even block (true) at the given index.
    slots: Vec<(bool, usize)>,
    even: Block,
    odd: Block,
    fft: Arc<dyn Fft<f64>>,
    d1: Vec<Complex64>,
    d2: Vec<Complex64>,
    prefactor: Complex64,
    x2: Vec<f64>,
}

impl std::fmt::Debug for CatMapSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CatMapSystem").field("n", &self.n).finish()
    }
}

/// Work space for basis changes.
struct Buffers {
    re: Vec<f64>,
    im: Vec<f64>,
    out_re: Vec<f64>,
    out_im: Vec<f64>,
}

impl Buffers {
    fn new(n: usize) -> Self {
        let h = n / 2 + 1;
        Self { re: vec![0.0; h], im: vec![0.0; h], out_re: vec![0.0; h], out_im: vec![0.0; h] }
    }
}

impl CatMapSystem {
    /// Diagonalizes H̃ = 2 − cos 2πx̂ − cos 2πp̂ separately on the even and
    /// odd sectors of Q ↦ −Q. Even block: |0⟩, (|Q⟩+|N−Q⟩)/√2, |N/2⟩;
    /// odd block: (|Q⟩−|N−Q⟩)/√2 for 0 < Q < N/2.
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(invalid("N", format!("{n} must be even and at least 4")));
        }
        let h = n / 2;
        let diag = |q: usize| 2.0 - (2.0 * std::f64::consts::PI * q as f64 / n as f64).cos();
        let mut he = DMatrix::<f64>::zeros(h + 1, h + 1);
        for q in 0..=h {
            he[(q, q)] = diag(q);
        }
        for q in 0..h {
            let c = if q == 0 || q + 1 == h { -std::f64::consts::FRAC_1_SQRT_2 } else { -0.5 };
            he[(q, q + 1)] = c;
            he[(q + 1, q)] = c;
        }
        let mut ho = DMatrix::<f64>::zeros(h - 1, h - 1);
        for i in 0..h - 1 {
            ho[(i, i)] = diag(i + 1);
            if i + 1 < h - 1 {
                ho[(i, i + 1)] = -0.5;
                ho[(i + 1, i)] = -0.5;
            }
        }
        let ee = SymmetricEigen::new(he);
        let eo = SymmetricEigen::new(ho);
        let sorted = |v: &nalgebra::DVector<f64>| {
            let mut o: Vec<usize> = (0..v.len()).collect();
            o.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
            o
        };
        let (oe, oo) = (sorted(&ee.eigenvalues), sorted(&eo.eigenvalues));
        let even = Block::from_eigen(&ee.eigenvectors, &oe);
        let odd = Block::from_eigen(&eo.eigenvectors, &oo);
        let mut all: Vec<(f64, bool, usize)> = oe.iter().enumerate().map(|(k, &s)| (ee.eigenvalues[s], true, k)).collect();
        all.extend(oo.iter().enumerate().map(|(k, &s)| (eo.eigenvalues[s], false, k)));
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
        let energies = all.iter().map(|x| x.0).collect();
        let slots = all.iter().map(|x| (x.1, x.2)).collect();
        let fft = FftPlanner::new().plan_fft_forward(n);
        let nn = n as u64;
        let d1 = (0..nn).map(|q| phase(2 * q * q, n)).collect();
        let d2 = (0..nn).map(|q| phase(q * q, n)).collect();
        let prefactor = Complex64::from_polar((1.0 / n as f64).sqrt(), std::f64::consts::FRAC_PI_4);
        let x2 = (0..n).map(|k| centred(k, n).powi(2)).collect();
        Ok(Self { n, energies, slots, even, odd, fft, d1, d2, prefactor, x2 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn hbar(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.n as f64)
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// +1 or −1 under Q ↦ −Q for number state k.
    pub fn parity(&self, k: usize) -> i32 {
        if self.slots[k].0 { 1 } else { -1 }
    }

    /// Dense basis matrix; column k is |k⟩ in the position basis.
    pub fn basis(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut v = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut e = vec![Complex64::default(); n];
            e[k] = Complex64::new(1.0, 0.0);
            for (q, z) in self.to_position(&e).iter().enumerate() {
                v[(q, k)] = z.re;
            }
        }
        v
    }

    /// Dense propagator in the position basis.
    pub fn propagator(&self) -> DMatrix<Complex64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |q1, q2| {
            let (a, b) = (q1 as i64, q2 as i64);
            let m = (a * a + (b - a) * (b - a)) as u64;
            self.prefactor * phase(m, n)
        })
    }

    /// U applied in place to position amplitudes, via D₁·DFT·D₂.
    pub fn apply_propagator(&self, psi: &mut [Complex64], scratch: &mut [Complex64]) {
        for (x, d) in psi.iter_mut().zip(&self.d2) {
            *x *= d;
        }
        self.fft.process_with_scratch(psi, scratch);
        for (x, d) in psi.iter_mut().zip(&self.d1) {
            *x *= d * self.prefactor;
        }
    }

    pub fn fft_scratch_len(&self) -> usize {
        self.fft.get_inplace_scratch_len()
    }

    /// ‖U†U − I‖∞ (maximum absolute row sum) of the dense propagator.
    pub fn unitarity_defect(&self) -> f64 {
        let u = self.propagator();
        let a = u.map(|z| z.re);
        let b = u.map(|z| z.im);
        let re = a.tr_mul(&a) + b.tr_mul(&b);
        let im = a.tr_mul(&b) - b.tr_mul(&a);
        let n = self.n;
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let d = if i == j { 1.0 } else { 0.0 };
                        Complex64::new(re[(i, j)] - d, im[(i, j)]).norm()
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// max |VᵀV − I| over entries of the dense basis.
    pub fn orthonormality_defect(&self) -> f64 {
        let v = self.basis();
        let g = v.tr_mul(&v);
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - d).abs());
            }
        }
        worst
    }

    fn number_to_position(&self, c: &[Complex64], out: &mut [Complex64], b: &mut Buffers) {
        let h = self.n / 2;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for (blk, parity) in [(&self.even, true), (&self.odd, false)] {
            let d = blk.dim;
            for (k, (par, idx)) in self.slots.iter().enumerate() {
                if *par == parity {
                    b.re[*idx] = c[k].re;
                    b.im[*idx] = c[k].im;
                }
            }
            matvec(&blk.rows, d, &b.re[..d], &b.im[..d], &mut b.out_re[..d], &mut b.out_im[..d]);
            if parity {
                out[0] = Complex64::new(b.out_re[0], b.out_im[0]);
                out[h] = Complex64::new(b.out_re[h], b.out_im[h]);
                for q in 1..h {
                    let z = Complex64::new(b.out_re[q], b.out_im[q]) * s;
                    out[q] = z;
                    out[self.n - q] = z;
                }
            } else {
                for q in 1..h {
                    let z = Complex64::new(b.out_re[q - 1], b.out_im[q - 1]) * s;
                    out[q] += z;
                    out[self.n - q] -= z;
                }
            }
        }
    }

    fn position_to_number(&self, psi: &[Complex64], out: &mut [Complex64], b: &mut Buffers) {
        let (n, h) = (self.n, self.n / 2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for (blk, parity) in [(&self.even, true), (&self.odd, false)] {
            let d = blk.dim;
            if parity {
                b.re[0] = psi[0].re;
                b.im[0] = psi[0].im;
                b.re[h] = psi[h].re;
                b.im[h] = psi[h].im;
                for q in 1..h {
                    let z = (psi[q] + psi[n - q]) * s;
                    b.re[q] = z.re;
                    b.im[q] = z.im;
                }
            } else {
                for q in 1..h {
                    let z = (psi[q] - psi[n - q]) * s;
                    b.re[q - 1] = z.re;
                    b.im[q - 1] = z.im;
                }
            }
            matvec(&blk.cols, d, &b.re[..d], &b.im[..d], &mut b.out_re[..d], &mut b.out_im[..d]);
            for (k, (par, idx)) in self.slots.iter().enumerate() {
                if *par == parity {
                    out[k] = Complex64::new(b.out_re[*idx], b.out_im[*idx]);
                }
            }
        }
    }

    pub fn to_position(&self, number: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); self.n];
        self.number_to_position(number, &mut out, &mut Buffers::new(self.n));
        out
    }

    pub fn to_number(&self, position: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); self.n];
        self.position_to_number(position, &mut out, &mut Buffers::new(self.n));
        out
    }

    /// One Floquet period on a number-basis state.
    pub fn apply_unitary(&self, psi: &PureState) -> PureState {
        let mut pos = self.to_position(&psi.amps);
        let mut scratch = vec![Complex64::default(); self.fft_scratch_len()];
        self.apply_propagator(&mut pos, &mut scratch);
        PureState { amps: self.to_number(&pos) }
    }

    /// ⟨x̂²⟩ + ⟨p̂²⟩ with centred coordinates, from position amplitudes.
    pub fn x2_plus_p2(&self, position: &[Complex64], scratch: &mut [Complex64]) -> f64 {
        let x2: f64 = position.iter().zip(&self.x2).map(|(z, x)| z.norm_sqr() * x).sum();
        let mut mom = position.to_vec();
        self.fft.process_with_scratch(&mut mom, scratch);
        let p2: f64 = mom.iter().zip(&self.x2).map(|(z, x)| z.norm_sqr() * x).sum::<f64>() / self.n as f64;
        x2 + p2
    }

    fn number_state_position(&self, k: usize) -> Vec<Complex64> {
        let mut e = vec![Complex64::default(); self.n];
        e[k] = Complex64::new(1.0, 0.0);
        self.to_position(&e)
    }

    /// (⟨x̂⟩, ⟨p̂⟩) of number state k, centred coordinates.
    pub fn phase_space_centre(&self, k: usize) -> (f64, f64) {
        let n = self.n;
        let col = self.number_state_position(k);
        let x: f64 = col.iter().enumerate().map(|(q, z)| z.norm_sqr() * centred(q, n)).sum();
        let mut mom = col;
        let mut scratch = vec![Complex64::default(); self.fft_scratch_len()];
        self.fft.process_with_scratch(&mut mom, &mut scratch);
        let p: f64 = mom.iter().enumerate().map(|(q, z)| z.norm_sqr() * centred(q, n)).sum::<f64>() / n as f64;
        (x, p)
    }

    pub fn number_state_x2_plus_p2(&self, k: usize) -> f64 {
        let col = self.number_state_position(k);
        let mut scratch = vec![Complex64::default(); self.fft_scratch_len()];
        self.x2_plus_p2(&col, &mut scratch)
    }

    /// ⟨0|ψ⟩ from position amplitudes.
    fn ground_overlap(&self, psi: &[Complex64]) -> Complex64 {
        let (n, h) = (self.n, self.n / 2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (par, idx) = self.slots[0];
        debug_assert!(par);
        let row = &self.even.cols[idx * (h + 1)..(idx + 1) * (h + 1)];
        let mut a = psi[0] * row[0] + psi[h] * row[h];
        for q in 1..h {
            a += (psi[q] + psi[n - q]) * (s * row[q]);
        }
        a
    }
}

/// Amplitudes in the number basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    pub amps: Vec<Complex64>,
}

impl PureState {
    pub fn number_state(n: usize, k: usize) -> Self {
        let mut amps = vec![Complex64::default(); n];
        amps[k] = Complex64::new(1.0, 0.0);
        Self { amps }
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let s = 1.0 / self.norm();
        self.amps.iter_mut().for_each(|z| *z *= s);
    }

    pub fn rho00(&self) -> f64 {
        self.amps[0].norm_sqr()
    }

    pub fn mean_number(&self) -> f64 {
        self.amps.iter().enumerate().map(|(k, z)| k as f64 * z.norm_sqr()).sum()
    }

    pub fn lower(&self) -> PureState {
        let n = self.amps.len();
        let mut out = vec![Complex64::default(); n];
        for k in 1..n {
            out[k - 1] = self.amps[k] * (k as f64).sqrt();
        }
        PureState { amps: out }
    }

    /// a†, dropping the component that would leave the N-level space.
    pub fn raise(&self) -> PureState {
        let n = self.amps.len();
        let mut out = vec![Complex64::default(); n];
        for k in 0..n - 1 {
            out[k + 1] = self.amps[k] * ((k + 1) as f64).sqrt();
        }
        PureState { amps: out }
    }
}

/// Kraus operators of the measurement-and-reset control in the number basis,
/// K_m|n⟩ = (−i)^m sin^mθ cos^{n−m}θ √C(n,m) |n−m⟩ for m ≤ n.
#[derive(Debug, Clone)]
pub struct KrausSet {
    theta: f64,
    n: usize,
    /// |⟨n−m|K_m|n⟩|, row n, entries m = 0..=n, packed.
    mag: Vec<f64>,
    /// Running sums of |⟨n−m|K_m|n⟩|² along each row.
    cum: Vec<f64>,
    completeness: Vec<f64>,
}

fn row_start(n: usize) -> usize {
    n * (n + 1) / 2
}

impl KrausSet {
    pub fn new(theta: f64, n: usize) -> Result<Self> {
        if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_2 + 1e-15) {
            return Err(invalid("theta", format!("{theta} not in (0, pi/2]")));
        }
        let (s, c) = (theta.sin(), theta.cos());
        let full_reset = c.abs() < 1e-15;
        let (ls, lc) = (s.ln(), c.ln());
        let mut lfact = vec![0.0; n + 1];
        for k in 1..=n {
            lfact[k] = lfact[k - 1] + (k as f64).ln();
        }
        let mut mag = Vec::with_capacity(row_start(n));
        let mut cum = Vec::with_capacity(row_start(n));
        let mut completeness = Vec::with_capacity(n);
        for level in 0..n {
            let mut acc = NeumaierSum::new();
            for m in 0..=level {
                let v = if full_reset {
                    if m == level { 1.0 } else { 0.0 }
                } else {
                    let l = m as f64 * ls
                        + (level - m) as f64 * lc
                        + 0.5 * (lfact[level] - lfact[m] - lfact[level - m]);
                    l.exp()
                };
                mag.push(v);
                acc.add(v * v);
                cum.push(acc.value());
            }
            completeness.push(acc.value());
        }
        Ok(Self { theta, n, mag, cum, completeness })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// ⟨level−m|K_m|level⟩.
    pub fn element(&self, m: usize, level: usize) -> Complex64 {
        if m > level {
            return Complex64::default();
        }
        let ph = [Complex64::new(1.0, 0.0), Complex64::new(0.0, -1.0), Complex64::new(-1.0, 0.0), Complex64::new(0.0, 1.0)];
        ph[m % 4] * self.mag[row_start(level) + m]
    }

    /// Σ_m ⟨n|K_m†K_m|n⟩ per level n.
    pub fn completeness(&self) -> &[f64] {
        &self.completeness
    }

    /// max_n |Σ_m ⟨n|K_m†K_m|n⟩ − 1| over levels n < `levels`.
    pub fn completeness_defect(&self, levels: usize) -> f64 {
        self.completeness[..levels.min(self.n)].iter().map(|c| (c - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn matrix(&self, m: usize) -> DMatrix<Complex64> {
        let mut k = DMatrix::zeros(self.n, self.n);
        for level in m..self.n {
            k[(level - m, level)] = self.element(m, level);
        }
        k
    }

    /// Born probabilities ⟨ψ|K_m†K_m|ψ⟩ for every outcome m.
    pub fn born_weights(&self, psi: &PureState) -> Vec<f64> {
        let mut w = vec![0.0; self.n];
        for (level, z) in psi.amps.iter().enumerate() {
            let p = z.norm_sqr();
            if p == 0.0 {
                continue;
            }
            for (m, wm) in w.iter_mut().enumerate().take(level + 1) {
                *wm += p * self.mag[row_start(level) + m].powi(2);
            }
        }
        w
    }

    /// K_m ψ, normalized.
    pub fn apply(&self, m: usize, psi: &PureState) -> PureState {
        let n = psi.amps.len();
        let mut amps = vec![Complex64::default(); n];
        for level in m..n {
            amps[level - m] = self.element(m, level) * psi.amps[level];
        }
        let mut out = PureState { amps };
        out.normalize();
        out
    }

    /// Outcome m for a system known to be at `level`, from a uniform variate.
    fn outcome_given_level(&self, level: usize, u: f64) -> usize {
        let row = &self.cum[row_start(level)..row_start(level) + level + 1];
        let target = u * row[level];
        row.partition_point(|&c| c <= target).min(level)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutcome {
    pub m: usize,
    /// Σ_m ⟨ψ|K_m†K_m|ψ⟩ before renormalization.
    pub born_total: f64,
    pub truncated: bool,
}

/// Samples m with probability ⟨ψ|K_m†K_m|ψ⟩ / Σ, in two stages: a level n
/// from |ψ_n|² weighted by the level's completeness, then m given n.
/// K_m†K_m is diagonal in the number basis, so this is the Born marginal.
fn sample_outcome<R: Rng + ?Sized>(psi: &[Complex64], kraus: &KrausSet, rng: &mut R) -> ControlOutcome {
    let total: f64 = psi.iter().zip(&kraus.completeness).map(|(z, c)| z.norm_sqr() * c).sum();
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    let target = u * total;
    let mut acc = 0.0;
    let mut level = psi.len() - 1;
    for (k, (z, c)) in psi.iter().zip(&kraus.completeness).enumerate() {
        let w = z.norm_sqr() * c;
        acc += w;
        if acc > target && w > 0.0 {
            level = k;
            break;
        }
    }
    while psi[level].norm_sqr() == 0.0 && level > 0 {
        level -= 1;
    }
    let m = kraus.outcome_given_level(level, v);
    ControlOutcome { m, born_total: total, truncated: total < 1.0 - TRUNCATION_TOL }
}

/// One control step on a number-basis state.
pub fn control_step<R: Rng + ?Sized>(psi: &PureState, kraus: &KrausSet, rng: &mut R) -> (PureState, ControlOutcome) {
    let out = sample_outcome(&psi.amps, kraus, rng);
    (kraus.apply(out.m, psi), out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogObservable {
    /// ln⟨n̂ + ½⟩
    NumberPlusHalf,
    /// ln⟨x̂² + p̂²⟩
    X2P2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatMapConfig {
    pub theta: f64,
    pub p: f64,
    pub n_traj: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Log-observables are evaluated every `record_every` steps.
    pub record_every: usize,
    /// Evaluate log-observables only inside the late-time window.
    pub window_only: bool,
    pub tail_fraction: f64,
    /// Trajectories start in this number state; 0 is the H̃ ground state.
    pub init_level: usize,
}

impl CatMapConfig {
    pub fn new(theta: f64, p: f64, n_traj: usize, n_steps: usize, seed: u64) -> Self {
        Self { theta, p, n_traj, n_steps, seed, record_every: 1, window_only: false, tail_fraction: 0.25, init_level: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatMapStats {
    /// ρ̄₀₀ at t = 0..=n_steps.
    pub rho00_mean: Vec<f64>,
    pub obs_times: Vec<usize>,
    pub mean_log_n: Vec<f64>,
    pub var_log_n: Vec<f64>,
    pub var_log_x2p2: Vec<f64>,
    pub late_rho00: f64,
    pub late_rho00_stderr: f64,
    /// Window average of the per-time across-trajectory variance.
    pub late_var_log_n: f64,
    pub late_var_log_x2p2: f64,
    pub tail_start_step: usize,
    /// Per kept trajectory, ln⟨n̂+½⟩ at each window observation.
    pub window_log_n: Vec<Vec<f64>>,
    pub window_log_x2p2: Vec<Vec<f64>>,
    pub truncated_trajectories: usize,
    pub n_traj: usize,
}

/// Record of one trajectory, for inspection and determinism checks.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    /// `Some(m)` for control steps, `None` for unitary ones.
    pub outcomes: Vec<Option<usize>>,
    pub rho00: Vec<f64>,
    /// (ln⟨n̂+½⟩, ln⟨x̂²+p̂²⟩) at each observation time.
    pub log_obs: Vec<(f64, f64)>,
    pub truncated: bool,
    pub max_norm_error: f64,
}

enum Rep {
    Position,
    Number,
}

struct Walker<'a> {
    sys: &'a CatMapSystem,
    kraus: &'a KrausSet,
    rep: Rep,
    psi: Vec<Complex64>,
    alt: Vec<Complex64>,
    fft_scratch: Vec<Complex64>,
    buf: Buffers,
}

impl<'a> Walker<'a> {
    fn new(sys: &'a CatMapSystem, kraus: &'a KrausSet, level: usize) -> Self {
        let n = sys.n;
        let mut psi = vec![Complex64::default(); n];
        psi[level] = Complex64::new(1.0, 0.0);
        Self {
            sys,
            kraus,
            rep: Rep::Number,
            psi,
            alt: vec![Complex64::default(); n],
            fft_scratch: vec![Complex64::default(); sys.fft_scratch_len()],
            buf: Buffers::new(n),
        }
    }

    fn switch(&mut self, to: Rep) {
        match (&self.rep, &to) {
            (Rep::Position, Rep::Number) => {
                self.sys.position_to_number(&self.psi, &mut self.alt, &mut self.buf);
            }
            (Rep::Number, Rep::Position) => {
                self.sys.number_to_position(&self.psi, &mut self.alt, &mut self.buf);
            }
            _ => return,
        }
        std::mem::swap(&mut self.psi, &mut self.alt);
        self.rep = to;
    }

    fn rho00(&self) -> f64 {
        match self.rep {
            Rep::Number => self.psi[0].norm_sqr(),
            Rep::Position => {
                self.sys.ground_overlap(&self.psi).norm_sqr()
            }
        }
    }

    fn log_observables(&mut self) -> (f64, f64) {
        let (number, position): (&[Complex64], &[Complex64]) = match self.rep {
            Rep::Number => {
                self.sys.number_to_position(&self.psi, &mut self.alt, &mut self.buf);
                (&self.psi, &self.alt)
            }
            Rep::Position => {
                self.sys.position_to_number(&self.psi, &mut self.alt, &mut self.buf);
                (&self.alt, &self.psi)
            }
        };
        let nbar: f64 = number.iter().enumerate().map(|(k, z)| k as f64 * z.norm_sqr()).sum();
        let pos = position.to_vec();
        let x2p2 = self.sys.x2_plus_p2(&pos, &mut self.fft_scratch);
        ((nbar + 0.5).ln(), x2p2.ln())
    }

    fn norm_error(&self) -> f64 {
        (self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs()
    }

    /// Returns the control outcome, or `None` for a unitary step.
    fn step<R: Rng + ?Sized>(&mut self, p: f64, rng: &mut R) -> std::result::Result<Option<usize>, ()> {
        let u: f64 = rng.random();
        if u < p {
            self.switch(Rep::Number);
            let out = sample_outcome(&self.psi, self.kraus, rng);
            if out.truncated {
                return Err(());
            }
            let m = out.m;
            let n = self.psi.len();
            let mut norm = 0.0;
            for level in 0..n {
                let z = if level + m < n { self.kraus.element(m, level + m) * self.psi[level + m] } else { Complex64::default() };
                norm += z.norm_sqr();
                self.alt[level] = z;
            }
            let s = 1.0 / norm.sqrt();
            for (d, z) in self.psi.iter_mut().zip(&self.alt) {
                *d = z * s;
            }
            Ok(Some(m))
        } else {
            self.switch(Rep::Position);
            self.sys.apply_propagator(&mut self.psi, &mut self.fft_scratch);
            Ok(None)
        }
    }
}

fn observation_times(cfg: &CatMapConfig, tail_start: usize) -> Vec<usize> {
    let every = cfg.record_every.max(1);
    let from = if cfg.window_only { tail_start } else { 0 };
    let mut t: Vec<usize> = (0..=cfg.n_steps).filter(|t| t % every == 0 && *t >= from).collect();
    if t.last() != Some(&cfg.n_steps) {
        t.push(cfg.n_steps);
    }
    t
}

fn validate(sys: &CatMapSystem, cfg: &CatMapConfig) -> Result<()> {
    if cfg.init_level >= sys.n {
        return Err(invalid("init_level", format!("{} outside the {}-level space", cfg.init_level, sys.n)));
    }
    if !(0.0..=1.0).contains(&cfg.p) {
        return Err(invalid("p", format!("{} not in [0, 1]", cfg.p)));
    }
    if cfg.n_traj == 0 {
        return Err(invalid("n_traj", "need at least one trajectory"));
    }
    if !(cfg.tail_fraction > 0.0 && cfg.tail_fraction <= 1.0) {
        return Err(invalid("tail_fraction", "must lie in (0, 1]"));
    }
    Ok(())
}

fn tail_start_step(cfg: &CatMapConfig) -> usize {
    cfg.n_steps - ((cfg.tail_fraction * cfg.n_steps as f64).floor() as usize).min(cfg.n_steps)
}

/// Runs a single trajectory from the ground state.
pub fn run_trajectory(sys: &CatMapSystem, cfg: &CatMapConfig, index: u64) -> Result<TrajectoryRecord> {
    validate(sys, cfg)?;
    let kraus = KrausSet::new(cfg.theta, sys.n)?;
    Ok(trajectory(sys, &kraus, cfg, index, &observation_times(cfg, tail_start_step(cfg))))
}

fn trajectory(sys: &CatMapSystem, kraus: &KrausSet, cfg: &CatMapConfig, index: u64, obs: &[usize]) -> TrajectoryRecord {
    let mut rng = trajectory_rng(cfg.seed, index);
    let mut w = Walker::new(sys, kraus, cfg.init_level);
    let mut rec = TrajectoryRecord {
        outcomes: Vec::with_capacity(cfg.n_steps),
        rho00: Vec::with_capacity(cfg.n_steps + 1),
        log_obs: Vec::with_capacity(obs.len()),
        truncated: false,
        max_norm_error: 0.0,
    };
    rec.rho00.push(w.rho00());
    let mut next_obs = 0;
    if obs.first() == Some(&0) {
        rec.log_obs.push(w.log_observables());
        next_obs = 1;
    }
    for t in 1..=cfg.n_steps {
        match w.step(cfg.p, &mut rng) {
            Ok(o) => rec.outcomes.push(o),
            Err(()) => {
                rec.truncated = true;
                return rec;
            }
        }
        rec.max_norm_error = rec.max_norm_error.max(w.norm_error());
        rec.rho00.push(w.rho00().min(1.0));
        if next_obs < obs.len() && obs[next_obs] == t {
            rec.log_obs.push(w.log_observables());
            next_obs += 1;
        }
    }
    rec
}

struct Acc {
    rho: Vec<NeumaierSum>,
    log_n: Vec<MeanVar>,
    log_x: Vec<MeanVar>,
    tail: MeanVar,
    window_n: Vec<Vec<f64>>,
    window_x: Vec<Vec<f64>>,
    truncated: usize,
}

pub fn run_catmap_ensemble(sys: &CatMapSystem, cfg: &CatMapConfig) -> Result<CatMapStats> {
    validate(sys, cfg)?;
    let kraus = KrausSet::new(cfg.theta, sys.n)?;
    let t0 = tail_start_step(cfg);
    let obs = observation_times(cfg, t0);
    let w0 = obs.iter().position(|&t| t >= t0).unwrap_or(obs.len() - 1);
    let nt = cfg.n_steps + 1;
    let chunks: Vec<Acc> = chunk_ranges(cfg.n_traj)
        .into_par_iter()
        .map(|range| {
            let mut acc = Acc {
                rho: vec![NeumaierSum::new(); nt],
                log_n: vec![MeanVar::default(); obs.len()],
                log_x: vec![MeanVar::default(); obs.len()],
                tail: MeanVar::default(),
                window_n: Vec::new(),
                window_x: Vec::new(),
                truncated: 0,
            };
            for traj in range {
                let rec = trajectory(sys, &kraus, cfg, traj as u64, &obs);
                if rec.truncated {
                    acc.truncated += 1;
                    continue;
                }
                let mut tail = NeumaierSum::new();
                for (t, &r) in rec.rho00.iter().enumerate() {
                    acc.rho[t].add(r);
                    if t >= t0 {
                        tail.add(r);
                    }
                }
                acc.tail.push(tail.value() / (nt - t0) as f64);
                for (k, &(a, b)) in rec.log_obs.iter().enumerate() {
                    acc.log_n[k].push(a);
                    acc.log_x[k].push(b);
                }
                acc.window_n.push(rec.log_obs[w0..].iter().map(|x| x.0).collect());
                acc.window_x.push(rec.log_obs[w0..].iter().map(|x| x.1).collect());
            }
            acc
        })
        .collect();
    let mut rho = vec![NeumaierSum::new(); nt];
    let mut log_n = vec![MeanVar::default(); obs.len()];
    let mut log_x = vec![MeanVar::default(); obs.len()];
    let mut tail = MeanVar::default();
    let (mut window_n, mut window_x) = (Vec::new(), Vec::new());
    let mut truncated = 0;
    for c in chunks {
        for (a, b) in rho.iter_mut().zip(&c.rho) {
            a.merge(b);
        }
        for k in 0..obs.len() {
            log_n[k].merge(&c.log_n[k]);
            log_x[k].merge(&c.log_x[k]);
        }
        tail.merge(&c.tail);
        window_n.extend(c.window_n);
        window_x.extend(c.window_x);
        truncated += c.truncated;
    }
    let kept = cfg.n_traj - truncated;
    if kept == 0 {
        return Err(Error::OutOfDomain("every trajectory hit the truncation flag".into()));
    }
    let var_log_n: Vec<f64> = log_n.iter().map(|m| m.variance()).collect();
    let var_log_x2p2: Vec<f64> = log_x.iter().map(|m| m.variance()).collect();
    let late = |v: &[f64]| v[w0..].iter().sum::<f64>() / (v.len() - w0) as f64;
    Ok(CatMapStats {
        rho00_mean: rho.iter().map(|s| s.value() / kept as f64).collect(),
        mean_log_n: log_n.iter().map(|m| m.mean()).collect(),
        late_var_log_n: late(&var_log_n),
        late_var_log_x2p2: late(&var_log_x2p2),
        var_log_n,
        var_log_x2p2,
        obs_times: obs,
        late_rho00: tail.mean(),
        late_rho00_stderr: tail.std_err(),
        tail_start_step: t0,
        window_log_n: window_n,
        window_log_x2p2: window_x,
        truncated_trajectories: truncated,
        n_traj: cfg.n_traj,
    })
}

/// Window-averaged across-trajectory variance for a subset of trajectories.
fn window_variance(rows: &[Vec<f64>], pick: &[usize]) -> f64 {
    let k = rows.first().map_or(0, |r| r.len());
    let mut total = 0.0;
    for j in 0..k {
        let mut mv = MeanVar::default();
        for &i in pick {
            mv.push(rows[i][j]);
        }
        total += mv.variance();
    }
    total / k.max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcEstimate {
    pub pc: f64,
    /// Standard deviation of the argmax over bootstrap resamples.
    pub stderr: f64,
    /// (p, late-time variance of the chosen log-observable).
    pub profile: Vec<(f64, f64)>,
    pub observable: LogObservable,
    pub bootstrap_samples: usize,
}

/// p at which the late-time across-trajectory variance of the chosen
/// log-observable peaks, with a bootstrap error bar over trajectories.
pub fn estimate_pc(
    sys: &CatMapSystem,
    theta: f64,
    p_grid: &[f64],
    template: &CatMapConfig,
    observable: LogObservable,
    bootstrap: usize,
) -> Result<PcEstimate> {
    let mut ps = p_grid.to_vec();
    ps.sort_by(|a, b| a.total_cmp(b));
    if ps.len() < 15 || ps[0] > 0.05 + 1e-12 || ps[ps.len() - 1] < 0.95 - 1e-12 {
        return Err(invalid("p_grid", "must span [0.05, 0.95] with at least 15 points"));
    }
    let mut rows = Vec::with_capacity(ps.len());
    let mut profile = Vec::with_capacity(ps.len());
    for &p in &ps {
        let cfg = CatMapConfig { theta, p, window_only: true, ..template.clone() };
        let st = run_catmap_ensemble(sys, &cfg)?;
        let (v, r) = match observable {
            LogObservable::NumberPlusHalf => (st.late_var_log_n, st.window_log_n),
            LogObservable::X2P2 => (st.late_var_log_x2p2, st.window_log_x2p2),
        };
        profile.push((p, v));
        rows.push(r);
    }
    let argmax = |vals: &[f64]| (0..vals.len()).fold(0, |b, i| if vals[i] > vals[b] { i } else { b });
    let best = argmax(&profile.iter().map(|x| x.1).collect::<Vec<_>>());
    if best == 0 || best == ps.len() - 1 {
        return Err(Error::NoInteriorMaximum { p: ps[best] });
    }
    let mut rng = trajectory_rng(template.seed ^ 0x5eed_b007, 0);
    let mut picks = MeanVar::default();
    for _ in 0..bootstrap {
        let vals: Vec<f64> = rows
            .iter()
            .map(|r| {
                let pick: Vec<usize> = (0..r.len()).map(|_| rng.random_range(0..r.len())).collect();
                window_variance(r, &pick)
            })
            .collect();
        picks.push(ps[argmax(&vals)]);
    }
    Ok(PcEstimate {
        pc: ps[best],
        stderr: picks.variance().sqrt(),
        profile,
        observable,
        bootstrap_samples: bootstrap,
    })
}
