//! Quality of stochastic log-rate gradients against the closed-form oracle.
//!
//! A stochastic gradient is modelled as `ĝ = g* + b + ε` with bias `b` and
//! noise covariance `Σ`; curvature-weighted energies use the exact Hessian.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::method::Method;
use crate::pvae::{arrivals_for, GradDraw, LinearPvae};
use crate::sampling::{RngStream, DEFAULT_ALPHA};

/// Above this dimension only the diagonal of `Σ` is kept.
pub const FULL_COVARIANCE_MAX_DIM: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub enum Covariance {
    Full(DMatrix<f64>),
    Diagonal(DVector<f64>),
}

impl Covariance {
    pub fn is_diagonal(&self) -> bool {
        matches!(self, Covariance::Diagonal(_))
    }

    /// `Tr(HΣ)`; with a diagonal `Σ` only `H`'s diagonal enters.
    pub fn trace_product(&self, h: &DMatrix<f64>) -> f64 {
        match self {
            Covariance::Full(s) => h.component_mul(s).sum(),
            Covariance::Diagonal(s) => s.iter().enumerate().map(|(i, v)| h[(i, i)] * v).sum(),
        }
    }
}

/// Gradient draws at fixed rates together with the exact gradient and Hessian.
#[derive(Clone, Debug, PartialEq)]
pub struct GradSamples {
    /// `n_samples × K`, one draw per row.
    pub draws: DMatrix<f64>,
    pub g_true: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Stochastic reconstruction-loss gradients in the log-rates at fixed rates.
///
/// The score method subtracts the leave-one-out mean loss of the other draws.
pub fn collect_grads(
    model: &LinearPvae,
    x: &DVector<f64>,
    method: Method,
    tau: f64,
    fixed_rates: &DVector<f64>,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<GradSamples> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    if let Some(&r) = fixed_rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::domain("rate", r));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::domain("temperature", tau));
    }
    let g_true = model.recon_grad_exact(x, fixed_rates)?;
    let hessian = model.recon_hessian_exact(x, fixed_rates)?;
    let k = fixed_rates.len();
    let max_rate = fixed_rates.iter().copied().fold(0.0, f64::max);
    let draw = GradDraw { method, tau, arrivals: arrivals_for(max_rate, DEFAULT_ALPHA, usize::MAX)?, baseline: 0.0 };
    let mut draws = DMatrix::zeros(n_samples, k);
    if method == Method::Score {
        let samples: Vec<_> =
            (0..n_samples).map(|_| model.recon_grad_sample(x, fixed_rates, &draw, rng)).collect::<Result<_>>()?;
        let total: f64 = samples.iter().map(|s| s.loss).sum();
        let n = n_samples as f64;
        for (i, s) in samples.iter().enumerate() {
            let baseline = if n_samples > 1 { (total - s.loss) / (n - 1.0) } else { 0.0 };
            let g = (&s.z - fixed_rates) * (s.loss - baseline);
            draws.row_mut(i).copy_from(&g.transpose());
        }
    } else {
        for i in 0..n_samples {
            let s = model.recon_grad_sample(x, fixed_rates, &draw, rng)?;
            draws.row_mut(i).copy_from(&s.grad.transpose());
        }
    }
    Ok(GradSamples { draws, g_true, hessian })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradStats {
    pub g_true: Vec<f64>,
    pub g_mean: Vec<f64>,
    pub bias: Vec<f64>,
    /// Row-major `K × K` covariance, or its diagonal when `cov_is_diagonal`.
    pub cov: Vec<f64>,
    pub cov_is_diagonal: bool,
    /// `cos(E[ĝ], g*)`; `None` when either vector is zero.
    pub cos_mean: Option<f64>,
    /// `E[cos(ĝ, g*)]` over draws with a defined cosine.
    pub cos_sample: Option<f64>,
    pub bias_energy: f64,
    pub noise_energy: f64,
    pub signal_energy: f64,
    pub normalized_bias_energy: Option<f64>,
    pub normalized_noise_energy: Option<f64>,
    /// Smallest eigenvalue of `H`; energies may be negative when it is.
    pub hessian_min_eigenvalue: f64,
    pub n_samples: usize,
}

pub fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> Option<f64> {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return None;
    }
    Some((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Mean, bias, unbiased covariance, cosines and curvature-weighted energies.
pub fn grad_stats(draws: &DMatrix<f64>, g_true: &DVector<f64>, h: &DMatrix<f64>) -> Result<GradStats> {
    let (n, k) = draws.shape();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 gradient draws, got {n}")));
    }
    if g_true.len() != k || h.shape() != (k, k) {
        return Err(Error::Shape(format!("{n}x{k} draws, {} true gradient, {:?} Hessian", g_true.len(), h.shape())));
    }
    let nf = n as f64;
    let g_mean: DVector<f64> = draws.row_mean().transpose();
    let bias = &g_mean - g_true;
    let centered = DMatrix::from_fn(n, k, |i, j| draws[(i, j)] - g_mean[j]);
    let cov = if k <= FULL_COVARIANCE_MAX_DIM {
        Covariance::Full(centered.tr_mul(&centered) / (nf - 1.0))
    } else {
        Covariance::Diagonal(DVector::from_iterator(k, centered.column_iter().map(|c| c.norm_squared() / (nf - 1.0))))
    };

    let cos_mean = cosine(&g_mean, g_true);
    let per_draw: Vec<f64> = draws.row_iter().filter_map(|r| cosine(&r.transpose(), g_true)).collect();
    let cos_sample = if per_draw.is_empty() { None } else { Some(per_draw.iter().sum::<f64>() / per_draw.len() as f64) };

    let bias_energy = (h * &bias).dot(&bias);
    let noise_energy = cov.trace_product(h);
    let signal_energy = (h * g_true).dot(g_true);
    let normalize = |e: f64| if signal_energy > 0.0 { Some(e / signal_energy) } else { None };
    let hessian_min_eigenvalue = SymmetricEigen::new(h.clone()).eigenvalues.min();

    let (cov_vec, cov_is_diagonal) = match cov {
        Covariance::Full(m) => (m.transpose().as_slice().to_vec(), false),
        Covariance::Diagonal(d) => (d.as_slice().to_vec(), true),
    };
    Ok(GradStats {
        g_true: g_true.as_slice().to_vec(),
        g_mean: g_mean.as_slice().to_vec(),
        bias: bias.as_slice().to_vec(),
        cov: cov_vec,
        cov_is_diagonal,
        cos_mean,
        cos_sample,
        bias_energy,
        noise_energy,
        signal_energy,
        normalized_bias_energy: normalize(bias_energy),
        normalized_noise_energy: normalize(noise_energy),
        hessian_min_eigenvalue,
        n_samples: n,
    })
}

/// Expected one-step loss change of `u ← u - η ĝ` to second order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossChange {
    /// `-η ‖g*‖²`
    pub descent: f64,
    /// `-η bᵀg*`
    pub bias_alignment: f64,
    /// `(η²/2) g*ᵀHg*`
    pub curvature: f64,
    /// `η² g*ᵀHb`
    pub bias_curvature_cross: f64,
    /// `(η²/2) bᵀHb`
    pub bias_energy: f64,
    /// `(η²/2) Tr(HΣ)`
    pub noise_energy: f64,
    pub total: f64,
}

impl LossChange {
    pub fn terms(&self) -> [f64; 6] {
        [
            self.descent,
            self.bias_alignment,
            self.curvature,
            self.bias_curvature_cross,
            self.bias_energy,
            self.noise_energy,
        ]
    }
}

pub fn predicted_loss_change(
    g_true: &DVector<f64>,
    h: &DMatrix<f64>,
    bias: &DVector<f64>,
    cov: &Covariance,
    eta: f64,
) -> Result<LossChange> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::domain("step size", eta));
    }
    let k = g_true.len();
    let cov_ok = match cov {
        Covariance::Full(s) => s.shape() == (k, k),
        Covariance::Diagonal(s) => s.len() == k,
    };
    if bias.len() != k || h.shape() != (k, k) || !cov_ok {
        return Err(Error::Shape("gradient, bias, Hessian and covariance dimensions differ".into()));
    }
    let hg = h * g_true;
    let half = 0.5 * eta * eta;
    let descent = -eta * g_true.norm_squared();
    let bias_alignment = -eta * bias.dot(g_true);
    let curvature = half * hg.dot(g_true);
    let bias_curvature_cross = eta * eta * hg.dot(bias);
    let bias_energy = half * (h * bias).dot(bias);
    let noise_energy = half * cov.trace_product(h);
    let total = descent + bias_alignment + curvature + bias_curvature_cross + bias_energy + noise_energy;
    Ok(LossChange { descent, bias_alignment, curvature, bias_curvature_cross, bias_energy, noise_energy, total })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradSweepConfig {
    pub methods: Vec<Method>,
    pub rates: Vec<f64>,
    pub taus: Vec<f64>,
    /// Gradient draws per batch item.
    pub n_samples: usize,
    /// Batch items taken from the front of the data.
    pub batch: usize,
    pub seed: u64,
}

impl Default for GradSweepConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            rates: vec![20.0],
            taus: vec![0.02, 0.05, 0.1, 0.2, 0.5],
            n_samples: 100,
            batch: 16,
            seed: 0,
        }
    }
}

/// Per-condition averages over batch items.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradQualityRecord {
    pub method: Method,
    pub rate: f64,
    pub tau: f64,
    pub cos_mean: Option<f64>,
    pub cos_sample: Option<f64>,
    pub bias_energy: f64,
    pub noise_energy: f64,
    pub signal_energy: f64,
    pub normalized_bias_energy: Option<f64>,
    pub normalized_noise_energy: Option<f64>,
    pub hessian_min_eigenvalue: f64,
    pub cov_is_diagonal: bool,
    pub n_samples: usize,
    pub batch: usize,
}

fn mean_defined(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Gradient statistics for one condition, with every latent rate fixed at
/// `rate`. Each batch item uses its own Hessian. The score method subtracts,
/// for MC draw `j` of item `b`, the mean loss of draw `j` over the other
/// items in the batch.
pub fn grad_quality_cell(
    model: &LinearPvae,
    data: &[DVector<f64>],
    method: Method,
    rate: f64,
    tau: f64,
    cfg: &GradSweepConfig,
) -> Result<(GradQualityRecord, Vec<GradStats>)> {
    if cfg.batch == 0 || data.len() < cfg.batch {
        return Err(Error::InvalidArgument(format!("need {} batch items, data has {}", cfg.batch, data.len())));
    }
    if cfg.n_samples < 2 {
        return Err(Error::InvalidArgument("n_samples must be at least 2".into()));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::domain("rate", rate));
    }
    let k = model.latent_dim();
    let rates = DVector::from_element(k, rate);
    let items = &data[..cfg.batch];
    let draw = GradDraw { method, tau, arrivals: arrivals_for(rate, DEFAULT_ALPHA, usize::MAX)?, baseline: 0.0 };
    let base = crate::fidelity::cell_stream(cfg.seed, method, rate, tau);

    let mut draws: Vec<DMatrix<f64>> = vec![DMatrix::zeros(cfg.n_samples, k); cfg.batch];
    let mut rngs: Vec<RngStream> = (0..cfg.batch as u64).map(|b| base.derive(b)).collect();
    for j in 0..cfg.n_samples {
        let samples: Vec<_> = items
            .iter()
            .zip(rngs.iter_mut())
            .map(|(x, rng)| model.recon_grad_sample(x, &rates, &draw, rng))
            .collect::<Result<_>>()?;
        let total: f64 = samples.iter().map(|s| s.loss).sum();
        for (b, s) in samples.iter().enumerate() {
            let g = if method == Method::Score {
                let baseline = if cfg.batch > 1 { (total - s.loss) / (cfg.batch - 1) as f64 } else { 0.0 };
                (&s.z - &rates) * (s.loss - baseline)
            } else {
                s.grad.clone()
            };
            draws[b].row_mut(j).copy_from(&g.transpose());
        }
    }

    let mut stats = Vec::with_capacity(cfg.batch);
    for (x, d) in items.iter().zip(&draws) {
        let g_true = model.recon_grad_exact(x, &rates)?;
        let h = model.recon_hessian_exact(x, &rates)?;
        stats.push(grad_stats(d, &g_true, &h)?);
    }
    let nb = stats.len() as f64;
    let avg = |f: &dyn Fn(&GradStats) -> f64| stats.iter().map(f).sum::<f64>() / nb;
    let record = GradQualityRecord {
        method,
        rate,
        tau,
        cos_mean: mean_defined(stats.iter().map(|s| s.cos_mean)),
        cos_sample: mean_defined(stats.iter().map(|s| s.cos_sample)),
        bias_energy: avg(&|s| s.bias_energy),
        noise_energy: avg(&|s| s.noise_energy),
        signal_energy: avg(&|s| s.signal_energy),
        normalized_bias_energy: mean_defined(stats.iter().map(|s| s.normalized_bias_energy)),
        normalized_noise_energy: mean_defined(stats.iter().map(|s| s.normalized_noise_energy)),
        hessian_min_eigenvalue: stats.iter().map(|s| s.hessian_min_eigenvalue).fold(f64::INFINITY, f64::min),
        cov_is_diagonal: stats.iter().any(|s| s.cov_is_diagonal),
        n_samples: cfg.n_samples,
        batch: cfg.batch,
    };
    Ok((record, stats))
}

/// Every `(method, rate, tau)` condition, in grid order.
pub fn grad_quality_sweep(
    model: &LinearPvae,
    data: &[DVector<f64>],
    cfg: &GradSweepConfig,
) -> Result<Vec<GradQualityRecord>> {
    if cfg.methods.is_empty() || cfg.rates.is_empty() || cfg.taus.is_empty() {
        return Err(Error::InvalidArgument("gradient sweep grids must be non-empty".into()));
    }
    let mut out = Vec::new();
    for &method in &cfg.methods {
        for &rate in &cfg.rates {
            for &tau in &cfg.taus {
                out.push(grad_quality_cell(model, data, method, rate, tau, cfg)?.0);
            }
        }
    }
    Ok(out)
}
