//! Exact eigenoperators of the mixed channel on polynomials in v̂₊.
//!
//! In the power basis {(v̂₊)ᵏ} the channel is the lower-triangular matrix
//! M = (1−p)·diag(e^{kκ}) + p·A·diag(e^{−kγ})·A⁻¹, where row k holds the
//! power-basis coefficients of 𝕋[(v̂₊)ᵏ] and A converts powers to normal
//! order. Eigenvalues sit on the diagonal, λₙ = (1−p)e^{nκ} + p e^{−nγ}.
//!
//! Everything is generic over [`Scalar`], so the combinatorics can be
//! checked exactly with rationals (fixing e^κ and e^{−γ} to rational values).
//!
//! The expansion coefficients of Ẑₙ over powers are unrelated to the
//! order-parameter exponent β of the scaling module despite the shared letter
//! in the literature; here they are simply `OperatorPoly::coeffs`.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{invalid, Error, Result};
use crate::params::ChannelParams;

pub const DEFAULT_MAX_DEGREE: usize = 16;

pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_bigint_ratio(num: &BigInt, den: &BigInt) -> Self;
    fn to_f64(&self) -> f64;
    fn magnitude(&self) -> f64 {
        self.to_f64().abs()
    }
    /// True when `self`, as an eigenvalue gap, is too small to divide by.
    fn is_degenerate_gap(&self) -> bool;

    fn pow(&self, k: usize) -> Self {
        let mut r = Self::one();
        for _ in 0..k {
            r = r * self.clone();
        }
        r
    }
}

impl Scalar for f64 {
    fn from_bigint_ratio(num: &BigInt, den: &BigInt) -> Self {
        num.to_f64().unwrap_or(f64::NAN) / den.to_f64().unwrap_or(f64::NAN)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn is_degenerate_gap(&self) -> bool {
        self.abs() < 1e-8
    }

    fn pow(&self, k: usize) -> Self {
        self.powi(k as i32)
    }
}

impl Scalar for BigRational {
    fn from_bigint_ratio(num: &BigInt, den: &BigInt) -> Self {
        BigRational::new(num.clone(), den.clone())
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn magnitude(&self) -> f64 {
        Scalar::to_f64(&self.abs())
    }

    fn is_degenerate_gap(&self) -> bool {
        self.is_zero()
    }
}

/// Double-double arithmetic for the floating α recursion: expanding Ẑₙ over
/// lower Ẑₖ cancels badly when a lower gap is small, so the tower is built in
/// ~106-bit precision and rounded once.
impl Scalar for TwoFloat {
    fn from_bigint_ratio(num: &BigInt, den: &BigInt) -> Self {
        let (n, d) = (num.to_f64().unwrap_or(f64::NAN), den.to_f64().unwrap_or(f64::NAN));
        TwoFloat::from(n) / TwoFloat::from(d)
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }

    fn is_degenerate_gap(&self) -> bool {
        f64::from(*self).abs() < 1e-8
    }
}

/// p together with the per-step factors e^{κ} (stretch) and e^{−γ} (contract).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumParams<S> {
    pub p: S,
    pub stretch: S,
    pub contract: S,
}

impl SpectrumParams<f64> {
    pub fn from_channel(params: &ChannelParams) -> Self {
        Self { p: params.p(), stretch: params.kappa().exp(), contract: (-params.gamma()).exp() }
    }
}

impl SpectrumParams<BigRational> {
    pub fn exact(p: (i64, i64), stretch: (i64, i64), contract: (i64, i64)) -> Self {
        let r = |(a, b): (i64, i64)| BigRational::new(BigInt::from(a), BigInt::from(b));
        Self { p: r(p), stretch: r(stretch), contract: r(contract) }
    }
}

impl<S: Scalar> SpectrumParams<S> {
    /// λₙ = (1−p)e^{nκ} + p e^{−nγ}.
    pub fn eigenvalue(&self, n: usize) -> S {
        (S::one() - self.p.clone()) * self.stretch.pow(n) + self.p.clone() * self.contract.pow(n)
    }
}

/// λₙ for floating parameters.
pub fn eigenvalue(n: usize, params: &ChannelParams) -> f64 {
    SpectrumParams::from_channel(params).eigenvalue(n)
}

fn binomial(n: usize, k: usize) -> BigInt {
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    r
}

fn double_factorial_odd(l: usize) -> BigInt {
    // (2l − 1)!!, with (−1)!! = 1
    (1..=l).fold(BigInt::one(), |acc, i| acc * BigInt::from(2 * i - 1))
}

/// Powers ↔ normal order: (v̂₊)ᵏ = Σ_l A_{k,k−2l} :(v̂₊)^{k−2l}:.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalOrderTransform<S> {
    pub a: Vec<Vec<S>>,
    pub a_inv: Vec<Vec<S>>,
}

impl<S: Scalar> NormalOrderTransform<S> {
    pub fn new(n_max: usize) -> Self {
        let n = n_max + 1;
        let mut a = vec![vec![S::zero(); n]; n];
        let mut a_inv = vec![vec![S::zero(); n]; n];
        for k in 0..n {
            for l in 0..=k / 2 {
                let num = double_factorial_odd(l) * binomial(k, 2 * l);
                let den = BigInt::one() << l;
                let x = S::from_bigint_ratio(&num, &den);
                a_inv[k][k - 2 * l] = if l % 2 == 0 { x.clone() } else { -x.clone() };
                a[k][k - 2 * l] = x;
            }
        }
        Self { a, a_inv }
    }

    pub fn n_max(&self) -> usize {
        self.a.len() - 1
    }
}

pub fn mat_mul<S: Scalar>(x: &[Vec<S>], y: &[Vec<S>]) -> Vec<Vec<S>> {
    let n = x.len();
    let mut out = vec![vec![S::zero(); n]; n];
    for i in 0..n {
        for k in 0..n {
            if x[i][k].is_zero() {
                continue;
            }
            for j in 0..n {
                if !y[k][j].is_zero() {
                    out[i][j] = out[i][j].clone() + x[i][k].clone() * y[k][j].clone();
                }
            }
        }
    }
    out
}

/// Row k lists the power-basis coefficients of 𝕋[(v̂₊)ᵏ].
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix<S> {
    pub m: Vec<Vec<S>>,
}

impl<S: Scalar> ChannelMatrix<S> {
    pub fn new(params: &SpectrumParams<S>, transform: &NormalOrderTransform<S>) -> Self {
        let n = transform.a.len();
        let one_minus_p = S::one() - params.p.clone();
        let mut m = vec![vec![S::zero(); n]; n];
        for k in 0..n {
            for j in (k % 2..=k).step_by(2) {
                let mut s = S::zero();
                for i in j..=k {
                    let (x, y) = (&transform.a[k][i], &transform.a_inv[i][j]);
                    if !x.is_zero() && !y.is_zero() {
                        s = s + x.clone() * params.contract.pow(i) * y.clone();
                    }
                }
                m[k][j] = params.p.clone() * s;
            }
            m[k][k] = m[k][k].clone() + one_minus_p.clone() * params.stretch.pow(k);
        }
        Self { m }
    }

    pub fn n_max(&self) -> usize {
        self.m.len() - 1
    }

    pub fn diagonal(&self) -> Vec<S> {
        (0..self.m.len()).map(|k| self.m[k][k].clone()).collect()
    }

    /// Coefficients of 𝕋[Σ c_k (v̂₊)ᵏ], i.e. Mᵀc.
    pub fn apply(&self, c: &[S]) -> Vec<S> {
        let n = self.m.len();
        let mut out = vec![S::zero(); n];
        for (k, ck) in c.iter().enumerate() {
            if ck.is_zero() {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate().take(k + 1) {
                if !self.m[k][j].is_zero() {
                    *o = o.clone() + ck.clone() * self.m[k][j].clone();
                }
            }
        }
        out
    }
}

pub fn channel_matrix(params: &ChannelParams, n_max: usize) -> Result<ChannelMatrix<f64>> {
    if n_max < 1 {
        return Err(invalid("n_max", "must be at least 1"));
    }
    Ok(ChannelMatrix::new(&SpectrumParams::from_channel(params), &NormalOrderTransform::new(n_max)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

/// Σ c_k (v̂₊)ᵏ.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorPoly<S> {
    pub coeffs: Vec<S>,
}

impl<S: Scalar> OperatorPoly<S> {
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|c| !c.is_zero())
    }

    pub fn is_monic(&self) -> bool {
        self.degree().is_some_and(|d| self.coeffs[d].is_one())
    }

    /// `None` for a polynomial mixing even and odd powers.
    pub fn parity(&self) -> Option<Parity> {
        let even = self.coeffs.iter().step_by(2).any(|c| !c.is_zero());
        let odd = self.coeffs.iter().skip(1).step_by(2).any(|c| !c.is_zero());
        match (even, odd) {
            (true, false) => Some(Parity::Even),
            (false, true) => Some(Parity::Odd),
            _ => None,
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.to_f64()).collect()
    }
}

/// The tower Ẑ₀..Ẑ_{n_max} with Ẑₙ = (v̂₊)ⁿ + Σ_k α_{n,n−2k} Ẑ_{n−2k}.
#[derive(Debug, Clone)]
pub struct EigenTower<S> {
    pub params: SpectrumParams<S>,
    pub matrix: ChannelMatrix<S>,
    /// alpha[n][m], nonzero only for m = n − 2k, k ≥ 1.
    pub alpha: Vec<Vec<S>>,
    pub z: Vec<OperatorPoly<S>>,
}

impl<S: Scalar> EigenTower<S> {
    /// Solves for the α coefficients level by level. At level n the
    /// coefficient of (v̂₊)^{n−2l} in (𝕋 − λₙ)Ẑₙ must vanish:
    /// M_{n,n−2l} + Σ_{k≤l} α_{n,n−2k}(λ_{n−2k} − λₙ) c_{n−2k, n−2l} = 0,
    /// with c the power coefficients of lower Ẑ and c_{m,m} = 1, solved
    /// for α_{n,n−2l} in increasing l.
    pub fn build(params: SpectrumParams<S>, n_max: usize) -> Result<Self> {
        let transform = NormalOrderTransform::new(n_max);
        let matrix = ChannelMatrix::new(&params, &transform);
        let lam: Vec<S> = (0..=n_max).map(|n| params.eigenvalue(n)).collect();
        let mut alpha = vec![vec![S::zero(); n_max + 1]; n_max + 1];
        let mut z: Vec<OperatorPoly<S>> = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            for l in 1..=n / 2 {
                let target = n - 2 * l;
                let gap = lam[target].clone() - lam[n].clone();
                if gap.is_degenerate_gap() {
                    return Err(Error::Degenerate { n, m: target, gap: gap.magnitude() });
                }
                let mut acc = matrix.m[n][target].clone();
                for k in 1..l {
                    let m = n - 2 * k;
                    acc = acc
                        + alpha[n][m].clone() * (lam[m].clone() - lam[n].clone()) * z[m].coeffs[target].clone();
                }
                alpha[n][target] = -acc / gap;
            }
            let mut coeffs = vec![S::zero(); n_max + 1];
            coeffs[n] = S::one();
            for k in 1..=n / 2 {
                let m = n - 2 * k;
                for (c, zc) in coeffs.iter_mut().zip(&z[m].coeffs).take(m + 1) {
                    *c = c.clone() + alpha[n][m].clone() * zc.clone();
                }
            }
            z.push(OperatorPoly { coeffs });
        }
        Ok(Self { params, matrix, alpha, z })
    }

    pub fn n_max(&self) -> usize {
        self.z.len() - 1
    }

    pub fn eigenvalue(&self, n: usize) -> S {
        self.params.eigenvalue(n)
    }

    /// (v̂₊)ⁿ over the Ẑ basis: 1 at n and −α_{n,n−2k} at n − 2k.
    pub fn expand_power(&self, n: usize) -> Vec<S> {
        let mut out = vec![S::zero(); self.z.len()];
        out[n] = S::one();
        for k in 1..=n / 2 {
            out[n - 2 * k] = -self.alpha[n][n - 2 * k].clone();
        }
        out
    }

    /// Power-basis coefficients of Σ w_k Ẑ_k.
    pub fn assemble(&self, w: &[S]) -> OperatorPoly<S> {
        let mut coeffs = vec![S::zero(); self.z.len()];
        for (wk, zk) in w.iter().zip(&self.z) {
            if wk.is_zero() {
                continue;
            }
            for (c, x) in coeffs.iter_mut().zip(&zk.coeffs) {
                *c = c.clone() + wk.clone() * x.clone();
            }
        }
        OperatorPoly { coeffs }
    }

    /// 𝕋Ẑₙ − λₙẐₙ with 𝕋 taken from the channel matrix.
    pub fn residual_vector(&self, n: usize) -> Vec<S> {
        let tz = self.matrix.apply(&self.z[n].coeffs);
        let lam = self.eigenvalue(n);
        tz.iter().zip(&self.z[n].coeffs).map(|(a, b)| a.clone() - lam.clone() * b.clone()).collect()
    }

    /// ‖𝕋Ẑₙ − λₙẐₙ‖∞.
    pub fn residual(&self, n: usize) -> f64 {
        self.residual_vector(n).iter().fold(0.0, |a, d| a.max(d.magnitude()))
    }
}

impl EigenTower<f64> {
    /// Runs the α recursion in double-double precision and rounds the
    /// result; the channel matrix is rebuilt in plain f64.
    pub fn build_f64(params: SpectrumParams<f64>, n_max: usize) -> Result<Self> {
        let wide = SpectrumParams {
            p: TwoFloat::from(params.p),
            stretch: TwoFloat::from(params.stretch),
            contract: TwoFloat::from(params.contract),
        };
        let t = EigenTower::build(wide, n_max)?;
        let matrix = ChannelMatrix::new(&params, &NormalOrderTransform::new(n_max));
        let round = |v: &Vec<TwoFloat>| v.iter().map(|x| f64::from(*x)).collect::<Vec<f64>>();
        Ok(Self {
            params,
            matrix,
            alpha: t.alpha.iter().map(round).collect(),
            z: t.z.iter().map(|z| OperatorPoly { coeffs: round(&z.coeffs) }).collect(),
        })
    }
}

pub fn build_z(n: usize, params: &ChannelParams) -> Result<OperatorPoly<f64>> {
    let tower = EigenTower::build_f64(SpectrumParams::from_channel(params), n.max(1))?;
    Ok(tower.z[n].clone())
}

/// Independent route to Ẑₙ: back-substitution on Mᵀβ = λₙβ with β_n = 1,
/// β_i = Σ_{k>i} M_{k,i} β_k / (λₙ − M_{i,i}).
pub fn eigenvector_by_substitution<S: Scalar>(matrix: &ChannelMatrix<S>, n: usize) -> Result<OperatorPoly<S>> {
    let dim = matrix.m.len();
    let lam = matrix.m[n][n].clone();
    let mut b = vec![S::zero(); dim];
    b[n] = S::one();
    for i in (0..n).rev() {
        if (n - i) % 2 == 1 {
            continue;
        }
        let gap = lam.clone() - matrix.m[i][i].clone();
        if gap.is_degenerate_gap() {
            return Err(Error::Degenerate { n, m: i, gap: gap.magnitude() });
        }
        let mut s = S::zero();
        for k in i + 1..=n {
            if !b[k].is_zero() && !matrix.m[k][i].is_zero() {
                s = s + matrix.m[k][i].clone() * b[k].clone();
            }
        }
        b[i] = s / gap;
    }
    Ok(OperatorPoly { coeffs: b })
}

/// p at which the largest diagonal entry of the degree-≤n channel matrix
/// crosses 1, by bisection.
pub fn spectral_threshold(n: usize, kappa: f64, gamma: f64) -> Result<f64> {
    if n < 1 {
        return Err(invalid("n", "must be at least 1"));
    }
    let transform = NormalOrderTransform::<f64>::new(n);
    let f = |p: f64| -> f64 {
        let sp = SpectrumParams { p, stretch: kappa.exp(), contract: (-gamma).exp() };
        let m = ChannelMatrix::new(&sp, &transform);
        m.diagonal()[1..].iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - 1.0
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
