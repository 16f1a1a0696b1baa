//! Statistical utilities shared by the experiments: Kolmogorov-Smirnov tests,
//! running means with standard errors, and least-squares line fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum sample size accepted by [`ks_statistic`].
pub const KS_MIN_SAMPLES: usize = 20;

/// Asymptotic 1% critical value of `sqrt(n) * D`.
pub const KS_CRIT_1PCT: f64 = 1.63;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    /// Effective sample size (`n`, or `nm/(n+m)` for two samples).
    pub n_eff: f64,
    pub p_value: f64,
}

impl KsResult {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value > level
    }
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
///
/// Uses the alternating series `2 sum (-1)^(k-1) exp(-2 k^2 x^2)` for
/// `x >= 1` and the theta-function form for small `x`; both are truncated once
/// terms drop below 1e-16.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // P(K <= x) = sqrt(2 pi)/x * sum exp(-(2k-1)^2 pi^2 / (8 x^2))
        let mut cdf = 0.0;
        for k in 1..=50 {
            let m = (2 * k - 1) as f64;
            let term = (-m * m * std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp();
            cdf += term;
            if term < 1e-17 {
                break;
            }
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * x * x).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-17 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// p-value for statistic `d` at effective size `n`, with Stephens' finite-n
/// correction `(sqrt(n) + 0.12 + 0.11/sqrt(n)) d`.
pub fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sn = n_eff.sqrt();
    kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)
}

fn check_sorted(xs: &[f64], what: &'static str) -> Result<()> {
    if xs.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Unsorted(what));
    }
    Ok(())
}

/// One-sample KS statistic of sorted `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: KS_MIN_SAMPLES,
            got: samples.len(),
        });
    }
    check_sorted(samples, "ks_statistic")?;
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(KsResult {
        statistic: d,
        n_eff: n,
        p_value: ks_p_value(d, n),
    })
}

/// Two-sample KS statistic of two sorted samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    for s in [a, b] {
        if s.len() < KS_MIN_SAMPLES {
            return Err(Error::TooFewSamples {
                needed: KS_MIN_SAMPLES,
                got: s.len(),
            });
        }
    }
    check_sorted(a, "ks_two_sample")?;
    check_sorted(b, "ks_two_sample")?;
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let n_eff = n * m / (n + m);
    Ok(KsResult {
        statistic: d,
        n_eff,
        p_value: ks_p_value(d, n_eff),
    })
}

/// Mean with standard error and sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: u64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            std_err: (var / n as f64).sqrt(),
            n: n as u64,
        }
    }

    /// Bernoulli proportion `hits / n`.
    pub fn proportion(hits: u64, n: u64) -> Self {
        let p = hits as f64 / n as f64;
        Self {
            mean: p,
            std_err: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        }
    }

    /// Symmetric normal-approximation interval at `z` standard errors.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.mean - z * self.std_err, self.mean + z * self.std_err)
    }

    /// `|a - b| / sqrt(se_a^2 + se_b^2)`.
    pub fn joint_z(&self, other: &Estimate) -> f64 {
        let se = (self.std_err.powi(2) + other.std_err.powi(2)).sqrt();
        (self.mean - other.mean).abs() / se
    }
}

/// Ordinary least squares `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_err: f64,
    pub r_squared: f64,
}

/// Weighted least squares; `weights` default to 1 when `None`.
pub fn fit_line(xs: &[f64], ys: &[f64], weights: Option<&[f64]>) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: xs.len().min(ys.len()),
        });
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..xs.len()).map(w).sum();
    let mx = (0..xs.len()).map(|i| w(i) * xs[i]).sum::<f64>() / sw;
    let my = (0..xs.len()).map(|i| w(i) * ys[i]).sum::<f64>() / sw;
    let sxx: f64 = (0..xs.len()).map(|i| w(i) * (xs[i] - mx).powi(2)).sum();
    let sxy: f64 = (0..xs.len()).map(|i| w(i) * (xs[i] - mx) * (ys[i] - my)).sum();
    let syy: f64 = (0..xs.len()).map(|i| w(i) * (ys[i] - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = (0..xs.len())
        .map(|i| w(i) * (ys[i] - intercept - slope * xs[i]).powi(2))
        .sum();
    let dof = (xs.len() - 2) as f64;
    Ok(LineFit {
        slope,
        intercept,
        slope_std_err: (sse / dof / sxx).sqrt(),
        r_squared: if syy > 0.0 { 1.0 - sse / syy } else { 1.0 },
    })
}
