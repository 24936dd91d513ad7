//! Statistical helpers and Monte Carlo checks of Gaussian tail lemmas.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{argument, Result};
use crate::rng::{StreamKey, StreamPurpose};

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Binomial proportion with a Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Wilson interval at the given two-sided confidence level.
pub fn wilson(successes: u64, trials: u64, confidence: f64) -> Proportion {
    let n = trials as f64;
    let p = if trials == 0 { f64::NAN } else { successes as f64 / n };
    let z = Normal::standard().inverse_cdf(0.5 + confidence / 2.0);
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Proportion {
        successes,
        trials,
        estimate: p,
        lower: (centre - half).max(0.0),
        upper: (centre + half).min(1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    /// Asymptotic p-value.
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = (n as f64 * m as f64 / (n + m) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
    }
}

fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Weighted least-squares fit of `ln err = intercept + slope · ln n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// 95% confidence interval of the slope.
    pub slope_ci: (f64, f64),
    pub slope_se: f64,
    /// Weighted residual sum of squares.
    pub rss: f64,
}

fn wls(x: &[f64], y: &[f64], w: &[f64]) -> LogLogFit {
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(x, w)| w * (x - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((x, y), w)| w * (x - xm) * (y - ym)).sum();
    let syy: f64 = y.iter().zip(w).map(|(y, w)| w * (y - ym).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((x, y), w)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let dof = (x.len() - 2) as f64;
    let slope_se = if dof > 0.0 { (rss / dof / sxx).sqrt() } else { f64::NAN };
    let q = if dof > 0.0 {
        StudentsT::new(0.0, 1.0, dof).map(|t| t.inverse_cdf(0.975)).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    let r_squared = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    LogLogFit {
        slope,
        intercept,
        r_squared,
        slope_ci: (slope - q * slope_se, slope + q * slope_se),
        slope_se,
        rss,
    }
}

fn check_fit_input(ns: &[f64], errs: &[f64], weights: Option<&[f64]>) -> Result<Vec<f64>> {
    if ns.len() != errs.len() {
        return argument("n and error vectors differ in length");
    }
    if ns.len() < 3 {
        return argument("a log-log fit needs at least 3 points");
    }
    if ns.iter().chain(errs).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return argument("log-log fit needs positive finite values");
    }
    match weights {
        Some(w) if w.len() != ns.len() => argument("weight vector has the wrong length"),
        Some(w) if w.iter().any(|v| !(*v > 0.0) || !v.is_finite()) => {
            argument("weights must be positive and finite")
        }
        Some(w) => Ok(w.to_vec()),
        None => Ok(vec![1.0; ns.len()]),
    }
}

pub fn loglog_fit(ns: &[f64], errs: &[f64], weights: Option<&[f64]>) -> Result<LogLogFit> {
    let w = check_fit_input(ns, errs, weights)?;
    let x: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let y: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    Ok(wls(&x, &y, &w))
}

/// Fit of `err = C · n^slope · √ln(n+1)`, i.e. the plain fit applied to
/// `ln err − ½ ln ln(n+1)`. Residuals live on the same scale as those of
/// [`loglog_fit`], so the two `rss` values are directly comparable.
pub fn log_corrected_fit(ns: &[f64], errs: &[f64], weights: Option<&[f64]>) -> Result<LogLogFit> {
    let w = check_fit_input(ns, errs, weights)?;
    let x: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let y: Vec<f64> = ns
        .iter()
        .zip(errs)
        .map(|(n, e)| e.ln() - 0.5 * (n + 1.0).ln().ln())
        .collect();
    Ok(wls(&x, &y, &w))
}

/// Outcome of a probabilistic lower-bound check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub estimate: f64,
    pub se: f64,
    /// `1 − ε`.
    pub target: f64,
    pub pass: bool,
}

fn tail_check(hits: usize, m: usize, eps: f64) -> TailCheck {
    let p = hits as f64 / m as f64;
    let se = (p * (1.0 - p) / m as f64).sqrt();
    TailCheck {
        estimate: p,
        se,
        target: 1.0 - eps,
        pass: p >= 1.0 - eps - 3.0 * se,
    }
}

fn stream(seed: u64) -> ChaCha8Rng {
    StreamKey::new(seed, 0).rng(StreamPurpose::Extra)
}

/// `P(|Z| ≥ ε σ₀)` for `Z ~ N(μ, σ²)` with `σ ≥ σ₀`, checked against `1 − ε`.
pub fn anderson_tail_check(mu: f64, sigma: f64, sigma0: f64, eps: f64, m: usize, seed: u64) -> Result<TailCheck> {
    if !(sigma0 > 0.0 && sigma >= sigma0) {
        return argument("need 0 < σ₀ ≤ σ");
    }
    if !(eps > 0.0 && eps < 1.0) || m < 1000 {
        return argument("need ε in (0,1) and at least 1000 replications");
    }
    let mut rng = stream(seed);
    let hits = (0..m)
        .filter(|_| {
            let z = mu + sigma * rng.sample::<f64, _>(StandardNormal);
            z.abs() >= eps * sigma0
        })
        .count();
    Ok(tail_check(hits, m, eps))
}

/// Exact value of `P(|Z| ≥ x)` for `Z ~ N(μ, σ²)`.
pub fn abs_normal_tail(mu: f64, sigma: f64, x: f64) -> f64 {
    1.0 - (normal_cdf((x - mu) / sigma) - normal_cdf((-x - mu) / sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalFunctional {
    /// `max |Zᵢ| ≥ c √ln N`
    Max,
    /// `Σ |Zᵢ| ≥ c N`
    Sum,
}

/// Independent `Zᵢ ~ N(μᵢ, σᵢ²)`; `means`/`sds` default to `0`/`δ`.
pub fn max_abs_normal_check(
    functional: NormalFunctional,
    n: usize,
    delta: f64,
    c: f64,
    eps: f64,
    m: usize,
    means: Option<&[f64]>,
    sds: Option<&[f64]>,
    seed: u64,
) -> Result<TailCheck> {
    if n < 2 || !(delta > 0.0) || !(eps > 0.0 && eps < 1.0) || m < 2 {
        return argument("need N ≥ 2, δ > 0, ε in (0,1)");
    }
    if let Some(s) = sds {
        if s.len() != n || s.iter().any(|s| *s < delta) {
            return argument("standard deviations must have length N and be at least δ");
        }
    }
    if means.is_some_and(|mu| mu.len() != n) {
        return argument("means must have length N");
    }
    let threshold = match functional {
        NormalFunctional::Max => c * (n as f64).ln().sqrt(),
        NormalFunctional::Sum => c * n as f64,
    };
    let mut rng = stream(seed);
    let mut hits = 0;
    for _ in 0..m {
        let mut acc: f64 = 0.0;
        for i in 0..n {
            let mu = means.map_or(0.0, |v| v[i]);
            let sd = sds.map_or(delta, |v| v[i]);
            let z = (mu + sd * rng.sample::<f64, _>(StandardNormal)).abs();
            acc = match functional {
                NormalFunctional::Max => acc.max(z),
                NormalFunctional::Sum => acc + z,
            };
        }
        if acc >= threshold {
            hits += 1;
        }
    }
    Ok(tail_check(hits, m, eps))
}

/// Sub-points per span for bridge L₁ norms.
pub const BRIDGE_SUBPOINTS: usize = 64;

/// Choice of the shifts `fᵢ` in the bridge check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BridgeShift {
    Zero,
    /// `fᵢ = aᵢ Bᵢ` on every path: the sum vanishes identically.
    Realized,
}

/// Samples of `Σᵢ ‖aᵢ Bᵢ − fᵢ‖₁` over `k/2` independent bridges on `[0, 1/k]`,
/// with `aᵢ = δ`. The norm is a composite trapezoid on `subpoints` intervals.
pub fn bridge_l1_samples(k: usize, delta: f64, shift: BridgeShift, subpoints: usize, m: usize, seed: u64) -> Result<Vec<f64>> {
    if k == 0 || k % 2 != 0 || subpoints == 0 {
        return argument("k must be positive and even");
    }
    let h = 1.0 / k as f64;
    let dt = h / subpoints as f64;
    let mut rng = stream(seed);
    let mut walk = vec![0.0; subpoints + 1];
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let mut total = 0.0;
        for _ in 0..k / 2 {
            for j in 1..=subpoints {
                walk[j] = walk[j - 1] + dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
            }
            let end = walk[subpoints];
            let mut norm = 0.0;
            let mut prev = 0.0;
            for (j, w) in walk.iter().enumerate().skip(1) {
                let b = w - end * j as f64 / subpoints as f64;
                let v = match shift {
                    BridgeShift::Zero => (delta * b).abs(),
                    BridgeShift::Realized => (delta * b - delta * b).abs(),
                };
                norm += 0.5 * (prev + v) * dt;
                prev = v;
            }
            total += norm;
        }
        out.push(total);
    }
    Ok(out)
}

/// `P(Σ ‖aᵢBᵢ − fᵢ‖₁ ≥ c / √(k/2))` against `1 − ε`.
pub fn bridge_l1_check(k: usize, delta: f64, c: f64, eps: f64, shift: BridgeShift, m: usize, seed: u64) -> Result<TailCheck> {
    let samples = bridge_l1_samples(k, delta, shift, BRIDGE_SUBPOINTS, m, seed)?;
    let threshold = c / (k as f64 / 2.0).sqrt();
    let hits = samples.iter().filter(|&&s| s >= threshold).count();
    Ok(tail_check(hits, m, eps))
}

/// Largest constant on a dyadic grid `2^0, 2^-1, …, 2^-30` passing the
/// bridge check, sharing one sample set across the grid.
pub fn bridge_l1_sweep(k: usize, delta: f64, eps: f64, m: usize, seed: u64) -> Result<Option<f64>> {
    let samples = bridge_l1_samples(k, delta, BridgeShift::Zero, BRIDGE_SUBPOINTS, m, seed)?;
    let scale = (k as f64 / 2.0).sqrt();
    for j in 0..=30 {
        let c = 0.5f64.powi(j);
        let hits = samples.iter().filter(|&&s| s >= c / scale).count();
        if tail_check(hits, m, eps).pass {
            return Ok(Some(c));
        }
    }
    Ok(None)
}

/// `E|B(t)|` for a Brownian bridge from 0 to 0 on `[0, h]`.
pub fn bridge_abs_mean(t: f64, h: f64) -> f64 {
    (2.0 / std::f64::consts::PI).sqrt() * (t * (h - t) / h).sqrt()
}
