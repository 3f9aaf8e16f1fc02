//! Small statistics toolkit: compensated sums, log-spaced histograms,
//! least squares and the Kolmogorov–Smirnov distance.

use serde::{Deserialize, Serialize};

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn neumaier_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut s = NeumaierSum::new();
    for x in xs {
        s.add(x);
    }
    s.value()
}

/// Running mean and variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanVar {
    n: u64,
    mean: f64,
    m2: f64,
}

impl MeanVar {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, o: &MeanVar) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * (self.n as f64) * (o.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    neumaier_sum(xs.iter().copied()) / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let mut mv = MeanVar::default();
    xs.iter().for_each(|&x| mv.push(x));
    mv.variance()
}

/// Uniform bins over a log coordinate `y`, bin `i` centred at `y0 + i·width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogBins {
    pub y0: f64,
    pub width: f64,
    pub n_bins: usize,
}

impl LogBins {
    /// Bins coinciding with the σ₊ axis of a distribution grid with the
    /// given cutoff and resolution: centres at ln ½ + iΔ, Δ = ln 2 / bpo.
    pub fn plus_axis(cutoff: u32, bins_per_octave: u32) -> Self {
        let width = std::f64::consts::LN_2 / bins_per_octave as f64;
        Self {
            y0: -std::f64::consts::LN_2,
            width,
            n_bins: (cutoff * bins_per_octave) as usize + 1,
        }
    }

    /// Index of the bin containing `y`; out-of-range values go to the edge bins.
    pub fn index(&self, y: f64) -> usize {
        let k = ((y - self.y0) / self.width + 0.5).floor();
        if k.is_nan() || k < 0.0 {
            0
        } else {
            (k as usize).min(self.n_bins - 1)
        }
    }

    pub fn center(&self, i: usize) -> f64 {
        self.y0 + i as f64 * self.width
    }

    pub fn lower_edge(&self, i: usize) -> f64 {
        self.center(i) - 0.5 * self.width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: LogBins,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn new(bins: LogBins) -> Self {
        Self { bins, counts: vec![0; bins.n_bins], total: 0 }
    }

    pub fn add(&mut self, y: f64) {
        self.counts[self.bins.index(y)] += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, o: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&o.counts) {
            *a += b;
        }
        self.total += o.total;
    }

    /// Probability per bin (sums to 1).
    pub fn normalized(&self) -> Vec<f64> {
        let t = self.total.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub rms_residual: f64,
    pub n: usize,
}

/// Ordinary least squares `y = a + b x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    assert!(n >= 2, "need at least two points");
    let mx = mean(x);
    let my = mean(y);
    let mut sxx = NeumaierSum::new();
    let mut sxy = NeumaierSum::new();
    for (&a, &b) in x.iter().zip(y) {
        sxx.add((a - mx) * (a - mx));
        sxy.add((a - mx) * (b - my));
    }
    let slope = sxy.value() / sxx.value();
    let intercept = my - slope * mx;
    let ss: f64 = neumaier_sum(x.iter().zip(y).map(|(&a, &b)| (b - intercept - slope * a).powi(2)));
    let slope_stderr = if n > 2 { (ss / (n - 2) as f64 / sxx.value()).sqrt() } else { 0.0 };
    LinearFit { slope, intercept, slope_stderr, rms_residual: (ss / n as f64).sqrt(), n }
}

/// Sup-distance between an empirical sample and a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &mut [f64], cdf: F) -> f64 {
    sample.sort_by(|a, b| a.total_cmp(b));
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}
