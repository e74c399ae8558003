//! WebAssembly bindings for the demo page in `www/`.
//!
//! Each export has a plain Rust counterpart returning `Result<_, String>`,
//! which is what the native tests exercise; the wasm wrappers only convert
//! the error.

use poisson_relax::fidelity::wasserstein1;
use poisson_relax::moments::moment_factors;
use poisson_relax::regression::{default_tau_grid, mae_cell, EstimatorSettings, TestFunction};
use poisson_relax::relax::SoftIndicator;
use poisson_relax::sampling::{adaptive_upperbound, poisson_pmf_log, sample_poisson_exact, RngStream, DEFAULT_ALPHA};
use poisson_relax::Method;
use wasm_bindgen::prelude::*;

const MAX_SAMPLES: usize = 200_000;

/// Mean, variance and Fano factors of a soft indicator over a log-spaced
/// temperature range.
#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct MomentCurve {
    taus: Vec<f64>,
    c: Vec<f64>,
    v: Vec<f64>,
    fano: Vec<f64>,
}

#[wasm_bindgen]
impl MomentCurve {
    #[wasm_bindgen(getter)]
    pub fn taus(&self) -> Vec<f64> {
        self.taus.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn c(&self) -> Vec<f64> {
        self.c.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn v(&self) -> Vec<f64> {
        self.v.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn fano(&self) -> Vec<f64> {
        self.fano.clone()
    }
}

pub fn moment_curve_native(indicator: &str, tau_min: f64, tau_max: f64, points: usize) -> Result<MomentCurve, String> {
    let ind = indicator.parse::<SoftIndicator>().map_err(|e| e.to_string())?;
    if !(tau_min > 0.0 && tau_max >= tau_min && tau_max.is_finite()) {
        return Err(format!("temperature range [{tau_min}, {tau_max}] is not valid"));
    }
    if points < 2 {
        return Err("need at least 2 points".into());
    }
    let mut curve = MomentCurve { taus: Vec::new(), c: Vec::new(), v: Vec::new(), fano: Vec::new() };
    let ratio = tau_max / tau_min;
    for i in 0..points {
        let tau = tau_min * ratio.powf(i as f64 / (points - 1) as f64);
        let f = moment_factors(ind, tau).map_err(|e| e.to_string())?;
        curve.taus.push(tau);
        curve.c.push(f.c);
        curve.v.push(f.v);
        curve.fano.push(f.fano);
    }
    Ok(curve)
}

#[wasm_bindgen]
pub fn moment_curve(indicator: &str, tau_min: f64, tau_max: f64, points: usize) -> Result<MomentCurve, JsError> {
    moment_curve_native(indicator, tau_min, tau_max, points).map_err(|e| JsError::new(&e))
}

/// Relaxed samples binned at unit width around each integer, next to the
/// Poisson PMF.
#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    centers: Vec<f64>,
    density: Vec<f64>,
    pmf: Vec<f64>,
    w1: f64,
    mean: f64,
    variance: f64,
}

#[wasm_bindgen]
impl Histogram {
    #[wasm_bindgen(getter)]
    pub fn centers(&self) -> Vec<f64> {
        self.centers.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn density(&self) -> Vec<f64> {
        self.density.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn pmf(&self) -> Vec<f64> {
        self.pmf.clone()
    }
    /// W₁ between the relaxed draws and as many exact Poisson draws.
    #[wasm_bindgen(getter)]
    pub fn w1(&self) -> f64 {
        self.w1
    }
    #[wasm_bindgen(getter)]
    pub fn mean(&self) -> f64 {
        self.mean
    }
    #[wasm_bindgen(getter)]
    pub fn variance(&self) -> f64 {
        self.variance
    }
}

pub fn relaxed_histogram_native(method: &str, rate: f64, tau: f64, samples: usize, seed: u64) -> Result<Histogram, String> {
    let method = method.parse::<Method>().map_err(|e| e.to_string())?;
    if !(2..=MAX_SAMPLES).contains(&samples) {
        return Err(format!("samples must lie in 2..={MAX_SAMPLES}"));
    }
    let m = adaptive_upperbound(rate, DEFAULT_ALPHA).map_err(|e| e.to_string())?;
    let mut rng = RngStream::new(seed);
    let mut exact_rng = rng.derive(1);
    let draws: Vec<f64> = (0..samples)
        .map(|_| method.sample(rate, m, tau, &mut rng).map(|s| s.value))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let exact: Vec<f64> = (0..samples)
        .map(|_| sample_poisson_exact(rate, &mut exact_rng).map(|z| z as f64))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;

    let top = adaptive_upperbound(rate, 1e-6).map_err(|e| e.to_string())?;
    let bins = top + 1;
    let mut counts = vec![0usize; bins];
    for &x in &draws {
        let k = (x + 0.5).floor();
        if k >= 0.0 && (k as usize) < bins {
            counts[k as usize] += 1;
        }
    }
    let n = samples as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let variance = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Histogram {
        centers: (0..bins).map(|k| k as f64).collect(),
        density: counts.iter().map(|&c| c as f64 / n).collect(),
        pmf: (0..bins).map(|k| poisson_pmf_log(k as u64, rate).exp()).collect(),
        w1: wasserstein1(&draws, &exact).map_err(|e| e.to_string())?,
        mean,
        variance,
    })
}

#[wasm_bindgen]
pub fn relaxed_histogram(method: &str, rate: f64, tau: f64, samples: usize, seed: u64) -> Result<Histogram, JsError> {
    relaxed_histogram_native(method, rate, tau, samples, seed).map_err(|e| JsError::new(&e))
}

/// Mean absolute error of the scalar gradient estimate of `E[f(z)]` over the
/// default temperature grid.
#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct MaeCurve {
    taus: Vec<f64>,
    mae: Vec<f64>,
    exact: f64,
}

#[wasm_bindgen]
impl MaeCurve {
    #[wasm_bindgen(getter)]
    pub fn taus(&self) -> Vec<f64> {
        self.taus.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn mae(&self) -> Vec<f64> {
        self.mae.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn exact(&self) -> f64 {
        self.exact
    }
}

pub fn gradient_mae_native(
    function: &str,
    method: &str,
    rate: f64,
    n_mc: usize,
    repeats: usize,
    seed: u64,
) -> Result<MaeCurve, String> {
    let f = function.parse::<TestFunction>().map_err(|e| e.to_string())?;
    let method = method.parse::<Method>().map_err(|e| e.to_string())?;
    if n_mc == 0 || n_mc * repeats > MAX_SAMPLES {
        return Err(format!("n_mc × repeats must lie in 1..={MAX_SAMPLES}"));
    }
    let settings = EstimatorSettings::default();
    let mut curve = MaeCurve { taus: default_tau_grid(), mae: Vec::new(), exact: 0.0 };
    for &tau in &curve.taus {
        let r = mae_cell(f, method, rate, tau, n_mc, repeats, &settings, seed).map_err(|e| e.to_string())?;
        curve.exact = r.exact;
        curve.mae.push(r.mae);
    }
    Ok(curve)
}

#[wasm_bindgen]
pub fn gradient_mae(
    function: &str,
    method: &str,
    rate: f64,
    n_mc: usize,
    repeats: usize,
    seed: u64,
) -> Result<MaeCurve, JsError> {
    gradient_mae_native(function, method, rate, n_mc, repeats, seed).map_err(|e| JsError::new(&e))
}
