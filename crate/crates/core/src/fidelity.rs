//! Distributional fidelity of relaxed samplers against exact Poisson draws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::method::Method;
use crate::sampling::{adaptive_upperbound, RngStream, DEFAULT_ALPHA};

/// Sample mean and unbiased variance.
pub fn empirical_moments(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {}", samples.len())));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let ss = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    Ok((mean, ss / (n - 1.0)))
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::Shape(format!("sample counts {} and {} must be equal and non-zero", a.len(), b.len())));
    }
    Ok(())
}

/// W₁ between two equal-size empirical distributions given as sorted samples.
pub fn wasserstein1_sorted(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// W₂ between two equal-size empirical distributions given as sorted samples.
pub fn wasserstein2_sorted(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    Ok((a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt())
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// W₁ for unsorted samples.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    wasserstein1_sorted(&sorted(a), &sorted(b))
}

/// W₂ for unsorted samples.
pub fn wasserstein2(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    wasserstein2_sorted(&sorted(a), &sorted(b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityRecord {
    pub method: Method,
    pub rate: f64,
    pub tau: f64,
    pub arrival_count: usize,
    pub mean_ratio: f64,
    pub var_ratio: f64,
    pub w1: f64,
    pub w2: f64,
    pub n_samples: usize,
    pub n_trials: usize,
    pub se_mean_ratio: f64,
    pub se_var_ratio: f64,
    pub se_w1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityConfig {
    pub methods: Vec<Method>,
    pub rates: Vec<f64>,
    pub taus: Vec<f64>,
    pub n_samples: usize,
    pub n_trials: usize,
    /// Tail mass for the arrival count / category truncation.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for FidelityConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::EatSigmoid, Method::EatCubic, Method::Gsm],
            rates: vec![2.0, 20.0, 100.0],
            taus: vec![0.05, 0.1, 0.2, 0.5],
            n_samples: 50_000,
            n_trials: 20,
            alpha: DEFAULT_ALPHA,
            seed: 0,
        }
    }
}

/// Stream for one sweep condition; keyed by the condition itself so a cell's
/// numbers do not depend on which other cells are in the grid.
pub(crate) fn cell_stream(seed: u64, method: Method, rate: f64, tau: f64) -> RngStream {
    RngStream::new(seed).derive(method.code()).derive(rate.to_bits()).derive(tau.to_bits())
}

pub(crate) fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One condition of the sweep.
pub fn fidelity_cell(method: Method, rate: f64, tau: f64, cfg: &FidelityConfig) -> Result<FidelityRecord> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::domain("rate", rate));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::domain("temperature", tau));
    }
    if cfg.n_samples < 2 || cfg.n_trials == 0 {
        return Err(Error::InvalidArgument("need n_samples >= 2 and n_trials >= 1".into()));
    }
    let m = adaptive_upperbound(rate, cfg.alpha)?;
    let base = cell_stream(cfg.seed, method, rate, tau);
    let mut means = Vec::with_capacity(cfg.n_trials);
    let mut vars = Vec::with_capacity(cfg.n_trials);
    let mut w1s = Vec::with_capacity(cfg.n_trials);
    let mut w2s = Vec::with_capacity(cfg.n_trials);
    let mut buf = Vec::new();
    let mut relaxed = vec![0.0; cfg.n_samples];
    let mut exact = vec![0.0; cfg.n_samples];
    for trial in 0..cfg.n_trials as u64 {
        let mut rng = base.derive(2 * trial);
        let mut ref_rng = base.derive(2 * trial + 1);
        for v in relaxed.iter_mut() {
            *v = method.draw(rate, m, tau, &mut rng, &mut buf).value;
        }
        for v in exact.iter_mut() {
            *v = Method::Exact.draw(rate, m, tau, &mut ref_rng, &mut buf).value;
        }
        let (mean, var) = empirical_moments(&relaxed)?;
        means.push(mean / rate);
        vars.push(var / rate);
        relaxed.sort_by(f64::total_cmp);
        exact.sort_by(f64::total_cmp);
        w1s.push(wasserstein1_sorted(&relaxed, &exact)?);
        w2s.push(wasserstein2_sorted(&relaxed, &exact)?);
    }
    let (mean_ratio, se_mean_ratio) = mean_se(&means);
    let (var_ratio, se_var_ratio) = mean_se(&vars);
    let (w1, se_w1) = mean_se(&w1s);
    let (w2, _) = mean_se(&w2s);
    Ok(FidelityRecord {
        method,
        rate,
        tau,
        arrival_count: m,
        mean_ratio,
        var_ratio,
        w1,
        w2,
        n_samples: cfg.n_samples,
        n_trials: cfg.n_trials,
        se_mean_ratio,
        se_var_ratio,
        se_w1,
    })
}

/// Every `(method, rate, tau)` condition, in grid order.
pub fn fidelity_sweep(cfg: &FidelityConfig) -> Result<Vec<FidelityRecord>> {
    if cfg.methods.is_empty() || cfg.rates.is_empty() || cfg.taus.is_empty() {
        return Err(Error::InvalidArgument("fidelity grids must be non-empty".into()));
    }
    let mut out = Vec::new();
    for &method in &cfg.methods {
        for &rate in &cfg.rates {
            for &tau in &cfg.taus {
                out.push(fidelity_cell(method, rate, tau, cfg)?);
            }
        }
    }
    Ok(out)
}
