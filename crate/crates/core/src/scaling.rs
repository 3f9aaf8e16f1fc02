//! Critical-exponent extraction: power-law fits in L and t, finite-size
//! crossings, and the data collapse that fixes ν.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stats::{linear_fit, LinearFit};

/// Log-log least squares of `y ∝ x^slope`. Requires positive data spanning
/// at least one decade in x.
pub fn power_law_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("table", "need at least two (x, y) pairs of equal length"));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(invalid("table", "power-law fit needs positive finite values"));
    }
    let (lo, hi) = x.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    if hi / lo < 10.0 * (1.0 - 1e-12) {
        return Err(Error::InsufficientRange(format!("x spans {lo}..{hi}, less than a decade")));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    Ok(linear_fit(&lx, &ly))
}

/// One finite-size curve ρ̄₀₀(p) at fixed cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeCurve {
    pub cutoff: f64,
    pub p: Vec<f64>,
    pub rho00: Vec<f64>,
}

impl SizeCurve {
    /// Groups sweep rows by cutoff, each curve sorted in p.
    pub fn from_rows(rows: &[crate::grid::SweepRow]) -> Vec<SizeCurve> {
        let mut cutoffs: Vec<u32> = rows.iter().map(|r| r.cutoff).collect();
        cutoffs.sort_unstable();
        cutoffs.dedup();
        cutoffs
            .into_iter()
            .map(|l| {
                let mut pts: Vec<(f64, f64)> =
                    rows.iter().filter(|r| r.cutoff == l).map(|r| (r.p, r.rho00)).collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                SizeCurve { cutoff: l as f64, p: pts.iter().map(|x| x.0).collect(), rho00: pts.iter().map(|x| x.1).collect() }
            })
            .collect()
    }
}

/// Linear interpolation on sorted `xs`; `None` outside the range.
fn interp(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
        return None;
    }
    let k = xs.partition_point(|&v| v <= x);
    if k == 0 {
        return Some(ys[0]);
    }
    if k >= xs.len() {
        return Some(ys[xs.len() - 1]);
    }
    let (x0, x1) = (xs[k - 1], xs[k]);
    let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    Some(ys[k - 1] + t * (ys[k] - ys[k - 1]))
}

/// Mean squared mismatch of ln(ρ̄₀₀ L^β) between curves after rescaling
/// p − p_c by L^{1/ν}. Every point of each curve is compared with the
/// linear interpolant of every other curve where their ranges overlap.
pub fn collapse_residual(curves: &[SizeCurve], pc: f64, beta: f64, nu: f64) -> f64 {
    let scaled: Vec<(Vec<f64>, Vec<f64>)> = curves
        .iter()
        .map(|c| {
            let x = c.p.iter().map(|p| (p - pc) * c.cutoff.powf(1.0 / nu)).collect();
            let y = c.rho00.iter().map(|r| (r * c.cutoff.powf(beta)).ln()).collect();
            (x, y)
        })
        .collect();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, (xa, ya)) in scaled.iter().enumerate() {
        for (b, (xb, yb)) in scaled.iter().enumerate() {
            if a == b {
                continue;
            }
            for (x, y) in xa.iter().zip(ya) {
                if let Some(v) = interp(xb, yb, *x) {
                    sum += (y - v).powi(2);
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        f64::INFINITY
    } else {
        sum / count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseFit {
    pub nu: f64,
    pub residual: f64,
    /// (ν, residual) on the scan grid.
    pub profile: Vec<(f64, f64)>,
}

/// ν minimizing [`collapse_residual`], by a grid scan over `[lo, hi]`
/// refined with golden-section search around the best grid point.
pub fn fit_nu(curves: &[SizeCurve], pc: f64, beta: f64, lo: f64, hi: f64) -> Result<CollapseFit> {
    if curves.len() < 2 {
        return Err(Error::InsufficientRange("collapse needs at least two sizes".into()));
    }
    if !(lo > 0.0 && hi > lo) {
        return Err(invalid("nu range", "need 0 < lo < hi"));
    }
    let n = 200;
    let profile: Vec<(f64, f64)> = (0..=n)
        .map(|k| {
            let nu = lo + (hi - lo) * k as f64 / n as f64;
            (nu, collapse_residual(curves, pc, beta, nu))
        })
        .collect();
    let kbest = (0..profile.len()).min_by(|&a, &b| profile[a].1.total_cmp(&profile[b].1)).unwrap();
    let step = (hi - lo) / n as f64;
    let (mut a, mut b) = ((profile[kbest].0 - step).max(lo), (profile[kbest].0 + step).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let f = |nu: f64| collapse_residual(curves, pc, beta, nu);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let nu = 0.5 * (a + b);
    Ok(CollapseFit { nu, residual: f(nu), profile })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingEstimate {
    /// (√(L_a L_b), crossing p) for consecutive sizes.
    pub crossings: Vec<(f64, f64)>,
    /// Linear extrapolation of the crossings in 1/L to 1/L = 0.
    pub pc: f64,
    pub fit: Option<LinearFit>,
}

/// Finite-size estimate of the transition from crossings of ρ̄₀₀·L^β
/// between consecutive sizes, extrapolated in 1/L.
pub fn crossing_pc(curves: &[SizeCurve], beta: f64) -> Result<CrossingEstimate> {
    let mut sorted: Vec<&SizeCurve> = curves.iter().collect();
    sorted.sort_by(|a, b| a.cutoff.total_cmp(&b.cutoff));
    let mut crossings = Vec::new();
    for w in sorted.windows(2) {
        let (a, b) = (w[0], w[1]);
        let diff: Vec<(f64, f64)> = a
            .p
            .iter()
            .zip(&a.rho00)
            .filter_map(|(&p, &r)| {
                interp(&b.p, &b.rho00, p).map(|rb| (p, r * a.cutoff.powf(beta) - rb * b.cutoff.powf(beta)))
            })
            .collect();
        // Below p_c the smaller size sits above; deep in the absorbing phase both
        // curves are ~0 and can flip sign spuriously, so take the last +/- change.
        let changes = diff.windows(2).filter(|d| d[0].1 == 0.0 || d[0].1.signum() != d[1].1.signum());
        let hit = changes.clone().filter(|d| d[0].1 >= 0.0 && d[1].1 <= 0.0).last().or_else(|| changes.clone().next());
        if let Some(d) = hit {
            let (p0, f0) = d[0];
            let (p1, f1) = d[1];
            let p = if f0 == f1 { p0 } else { p0 - f0 * (p1 - p0) / (f1 - f0) };
            crossings.push(((a.cutoff * b.cutoff).sqrt(), p));
        }
    }
    match crossings.len() {
        0 => Err(Error::InsufficientRange("scaled curves never cross".into())),
        1 => Ok(CrossingEstimate { pc: crossings[0].1, crossings, fit: None }),
        _ => {
            let x: Vec<f64> = crossings.iter().map(|c| 1.0 / c.0).collect();
            let y: Vec<f64> = crossings.iter().map(|c| c.1).collect();
            let fit = linear_fit(&x, &y);
            Ok(CrossingEstimate { pc: fit.intercept, crossings, fit: Some(fit) })
        }
    }
}

/// Inputs to [`fit_exponents`], all taken at or around the analytic p_c.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTables {
    pub pc: f64,
    /// (L, ρ̄₀₀) at p = p_c.
    pub size_scan: Vec<(f64, f64)>,
    /// (t, ρ̄₀₀) at p = p_c; t = 0 entries are ignored.
    pub time_series: Vec<(f64, f64)>,
    pub curves: Vec<SizeCurve>,
    pub nu_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalFit {
    pub beta: f64,
    pub z: f64,
    pub nu: f64,
    pub beta_fit: LinearFit,
    pub z_fit: LinearFit,
    pub collapse_residual: f64,
    pub l_window: (f64, f64),
    pub t_window: (f64, f64),
    pub nu_profile: Vec<(f64, f64)>,
}

fn window(v: &[(f64, f64)]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x.0), b.max(x.0)))
}

pub fn fit_exponents(t: &ScalingTables) -> Result<CriticalFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = t.size_scan.iter().copied().unzip();
    let beta_fit = power_law_fit(&lx, &ly)?;
    let ts: Vec<(f64, f64)> = t.time_series.iter().copied().filter(|x| x.0 > 0.0).collect();
    let (tx, ty): (Vec<f64>, Vec<f64>) = ts.iter().copied().unzip();
    let z_fit = power_law_fit(&tx, &ty)?;
    let beta = -beta_fit.slope;
    let z = -1.0 / z_fit.slope;
    let collapse = fit_nu(&t.curves, t.pc, beta, t.nu_range.0, t.nu_range.1)?;
    if !(beta > 0.0 && z > 0.0 && beta.is_finite() && z.is_finite()) {
        return Err(Error::OutOfDomain(format!("non-positive exponents beta={beta}, z={z}")));
    }
    Ok(CriticalFit {
        beta,
        z,
        nu: collapse.nu,
        beta_fit,
        z_fit,
        collapse_residual: collapse.residual,
        l_window: window(&t.size_scan),
        t_window: window(&ts),
        nu_profile: collapse.profile,
    })
}
