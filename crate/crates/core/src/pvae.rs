//! Linear Poisson VAE with a closed-form ELBO.
//!
//! Encoder `λ = exp(W_enc x)`, decoder `x̂ = Φ z`, loss `‖x - Φz‖²` plus the
//! Poisson KL to a learnable prior. With `G = ΦᵀΦ` and `d = diag(G)`:
//!
//! * `E‖x - Φz‖² = ‖x - Φλ‖² + λᵀd`
//! * gradient in log-rates `g = λ ⊙ (2Gλ - 2Φᵀx + d)`
//! * Hessian in log-rates `H = diag(g) + 2ΛGΛ`

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::method::Method;
use crate::sampling::{adaptive_upperbound, RngStream, DEFAULT_ALPHA};

/// Log-rates are clamped to `[-LOG_RATE_BOUND, LOG_RATE_BOUND]`.
pub const LOG_RATE_BOUND: f64 = 30.0;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearPvae {
    /// `K × D`.
    pub enc_weights: DMatrix<f64>,
    /// `D × K` dictionary.
    pub dec_weights: DMatrix<f64>,
    /// Length `K`.
    pub prior_lograte: DVector<f64>,
}

impl LinearPvae {
    pub fn zeros(input_dim: usize, latent_dim: usize) -> Self {
        Self {
            enc_weights: DMatrix::zeros(latent_dim, input_dim),
            dec_weights: DMatrix::zeros(input_dim, latent_dim),
            prior_lograte: DVector::zeros(latent_dim),
        }
    }

    /// Gaussian weights with standard deviation `1/√fan_in`; prior log-rate 0.
    pub fn init(input_dim: usize, latent_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || latent_dim == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        let mut rng = RngStream::new(seed).derive(0x1417);
        let se = 1.0 / (input_dim as f64).sqrt();
        let sd = 1.0 / (latent_dim as f64).sqrt();
        let enc_weights = DMatrix::from_fn(latent_dim, input_dim, |_, _| se * rng.standard_normal());
        let dec_weights = DMatrix::from_fn(input_dim, latent_dim, |_, _| sd * rng.standard_normal());
        Ok(Self { enc_weights, dec_weights, prior_lograte: DVector::zeros(latent_dim) })
    }

    pub fn from_parts(enc: DMatrix<f64>, dec: DMatrix<f64>, prior: DVector<f64>) -> Result<Self> {
        let (k, d) = enc.shape();
        if dec.shape() != (d, k) || prior.len() != k {
            return Err(Error::Shape(format!(
                "encoder {k}x{d}, decoder {}x{}, prior {}",
                dec.nrows(),
                dec.ncols(),
                prior.len()
            )));
        }
        let model = Self { enc_weights: enc, dec_weights: dec, prior_lograte: prior };
        if !model.is_finite() {
            return Err(Error::InvalidArgument("model parameters must be finite".into()));
        }
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.enc_weights.ncols()
    }

    pub fn latent_dim(&self) -> usize {
        self.enc_weights.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.enc_weights.iter().chain(self.dec_weights.iter()).chain(self.prior_lograte.iter()).all(|v| v.is_finite())
    }

    pub fn gram(&self) -> DMatrix<f64> {
        self.dec_weights.tr_mul(&self.dec_weights)
    }

    /// `diag(ΦᵀΦ)`: squared column norms of the dictionary.
    pub fn column_sq_norms(&self) -> DVector<f64> {
        DVector::from_iterator(self.latent_dim(), self.dec_weights.column_iter().map(|c| c.norm_squared()))
    }

    pub fn prior_rates(&self) -> DVector<f64> {
        self.prior_lograte.map(f64::exp)
    }

    fn check_x(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!("input length {} vs model input dim {}", x.len(), self.input_dim())));
        }
        Ok(())
    }

    fn check_rates(&self, rates: &DVector<f64>) -> Result<()> {
        if rates.len() != self.latent_dim() {
            return Err(Error::Shape(format!("{} rates vs latent dim {}", rates.len(), self.latent_dim())));
        }
        if let Some(&r) = rates.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(Error::domain("rate", r));
        }
        Ok(())
    }

    /// `(u, rates)` with `u = W_enc x` and `rates = exp(clamp(u, ±30))`.
    pub fn encode(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_x(x)?;
        let u = &self.enc_weights * x;
        let rates = u.map(clamped_exp);
        Ok((u, rates))
    }

    /// `‖x - Φλ‖² + λᵀd`, the expected squared error under exact Poisson codes.
    pub fn recon_loss_exact(&self, x: &DVector<f64>, rates: &DVector<f64>) -> Result<f64> {
        self.check_x(x)?;
        self.check_rates(rates)?;
        let r = x - &self.dec_weights * rates;
        Ok(r.norm_squared() + rates.dot(&self.column_sq_norms()))
    }

    /// Gradient of [`Self::recon_loss_exact`] with respect to the log-rates.
    pub fn recon_grad_exact(&self, x: &DVector<f64>, rates: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_x(x)?;
        self.check_rates(rates)?;
        Ok(self.grad_exact_unchecked(x, rates))
    }

    fn grad_exact_unchecked(&self, x: &DVector<f64>, rates: &DVector<f64>) -> DVector<f64> {
        let resid = &self.dec_weights * rates - x;
        let inner = self.dec_weights.tr_mul(&resid) * 2.0 + self.column_sq_norms();
        rates.component_mul(&inner)
    }

    /// Hessian of [`Self::recon_loss_exact`] with respect to the log-rates.
    pub fn recon_hessian_exact(&self, x: &DVector<f64>, rates: &DVector<f64>) -> Result<DMatrix<f64>> {
        let g = self.recon_grad_exact(x, rates)?;
        let gram = self.gram();
        let k = rates.len();
        let mut h = DMatrix::from_fn(k, k, |i, j| 2.0 * rates[i] * gram[(i, j)] * rates[j]);
        for i in 0..k {
            h[(i, i)] += g[i];
        }
        Ok(h)
    }

    /// `-recon_loss_exact - KL(q(z|x) ‖ prior)`.
    pub fn elbo_exact(&self, x: &DVector<f64>) -> Result<f64> {
        let (_, rates) = self.encode(x)?;
        Ok(-self.recon_loss_exact(x, &rates)? - poisson_kl(&rates, &self.prior_rates())?)
    }

    /// Mean [`Self::elbo_exact`] over the rows of `data`.
    pub fn mean_elbo_exact(&self, data: &[DVector<f64>]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("empty data set".into()));
        }
        let mut total = 0.0;
        for x in data {
            total += self.elbo_exact(x)?;
        }
        Ok(total / data.len() as f64)
    }

    /// One stochastic draw of the reconstruction loss and its log-rate
    /// gradient at fixed `rates`.
    ///
    /// Pathwise methods chain `-2Φᵀ(x - Φz)` through `∂z/∂u`. Exact returns
    /// the closed form. Score returns `(loss - baseline)(z - λ)`.
    pub fn recon_grad_sample(
        &self,
        x: &DVector<f64>,
        rates: &DVector<f64>,
        draw: &GradDraw,
        rng: &mut RngStream,
    ) -> Result<SampleGrad> {
        self.check_x(x)?;
        self.check_rates(rates)?;
        let mut scratch = Scratch::new(self.input_dim(), self.latent_dim());
        Ok(self.sample_grad(x, rates, draw, rng, &mut scratch))
    }

    fn sample_grad(
        &self,
        x: &DVector<f64>,
        rates: &DVector<f64>,
        draw: &GradDraw,
        rng: &mut RngStream,
        s: &mut Scratch,
    ) -> SampleGrad {
        if draw.method == Method::Exact {
            let loss = (x - &self.dec_weights * rates).norm_squared() + rates.dot(&self.column_sq_norms());
            return SampleGrad { loss, grad: self.grad_exact_unchecked(x, rates), z: rates.clone() };
        }
        for k in 0..rates.len() {
            if rates[k] > 0.0 {
                let d = draw.method.draw(rates[k], draw.arrivals, draw.tau, rng, &mut s.buf);
                s.z[k] = d.value;
                s.dlog[k] = d.dlog;
            } else {
                s.z[k] = 0.0;
                s.dlog[k] = 0.0;
            }
        }
        s.resid.copy_from(x);
        s.resid.gemv(-1.0, &self.dec_weights, &s.z, 1.0);
        let loss = s.resid.norm_squared();
        let grad = if draw.method == Method::Score {
            (&s.z - rates) * (loss - draw.baseline)
        } else {
            let gz = self.dec_weights.tr_mul(&s.resid) * -2.0;
            gz.component_mul(&s.dlog)
        };
        SampleGrad { loss, grad, z: s.z.clone() }
    }

    /// Monte Carlo ELBO and the gradient of the *negative* ELBO in `u`.
    ///
    /// The KL term is always closed form. The score method uses the
    /// leave-one-out mean loss of the other draws as its baseline.
    pub fn elbo_mc(
        &self,
        x: &DVector<f64>,
        method: Method,
        tau: f64,
        mc_samples: usize,
        rng: &mut RngStream,
    ) -> Result<ElboEstimate> {
        if mc_samples == 0 {
            return Err(Error::InvalidArgument("mc_samples must be at least 1".into()));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::domain("temperature", tau));
        }
        let (u, rates) = self.encode(x)?;
        let prior = self.prior_rates();
        let kl = poisson_kl(&rates, &prior)?;
        let mut grad = poisson_kl_grad(&rates, &prior)?;
        if method == Method::Exact {
            grad += self.grad_exact_unchecked(x, &rates);
            mask_clamped(&mut grad, &u);
            return Ok(ElboEstimate { elbo: -self.recon_loss_exact(x, &rates)? - kl, loss_grad_u: grad });
        }
        let arrivals = arrivals_for(rates.iter().copied().fold(0.0, f64::max), DEFAULT_ALPHA, usize::MAX)?;
        let mut draw = GradDraw { method, tau, arrivals, baseline: 0.0 };
        let mut s = Scratch::new(self.input_dim(), self.latent_dim());
        let n = mc_samples as f64;
        let mut losses = Vec::with_capacity(mc_samples);
        let mut zs = Vec::new();
        let mut recon = 0.0;
        for _ in 0..mc_samples {
            let sg = self.sample_grad(x, &rates, &draw, rng, &mut s);
            recon += sg.loss;
            losses.push(sg.loss);
            if method == Method::Score {
                zs.push(sg.z);
            } else {
                grad += sg.grad / n;
            }
        }
        if method == Method::Score {
            let total: f64 = losses.iter().sum();
            for (l, z) in losses.iter().zip(&zs) {
                draw.baseline = if mc_samples > 1 { (total - l) / (n - 1.0) } else { 0.0 };
                grad += (z - &rates) * ((l - draw.baseline) / n);
            }
        }
        mask_clamped(&mut grad, &u);
        Ok(ElboEstimate { elbo: -recon / n - kl, loss_grad_u: grad })
    }
}

#[inline]
fn clamped_exp(u: f64) -> f64 {
    u.clamp(-LOG_RATE_BOUND, LOG_RATE_BOUND).exp()
}

/// Zero the gradient where the log-rate sits outside the clamp.
fn mask_clamped(grad: &mut DVector<f64>, u: &DVector<f64>) {
    for (g, &v) in grad.iter_mut().zip(u.iter()) {
        if v.abs() > LOG_RATE_BOUND {
            *g = 0.0;
        }
    }
}

/// Arrival count for a batch whose largest rate is `max_rate`.
pub(crate) fn arrivals_for(max_rate: f64, alpha: f64, cap: usize) -> Result<usize> {
    if !(max_rate > 0.0) {
        return Ok(1);
    }
    let m = adaptive_upperbound(max_rate, alpha)?;
    if m > cap {
        return Err(Error::Numerical(format!("arrival bound {m} for rate {max_rate} exceeds cap {cap}")));
    }
    Ok(m)
}

/// Sampling settings for one stochastic gradient draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradDraw {
    pub method: Method,
    pub tau: f64,
    /// Arrival count / category truncation `M`.
    pub arrivals: usize,
    /// Score-method baseline subtracted from the loss.
    pub baseline: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleGrad {
    pub loss: f64,
    pub grad: DVector<f64>,
    pub z: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElboEstimate {
    pub elbo: f64,
    /// Gradient of `-ELBO` with respect to the encoder output `u`.
    pub loss_grad_u: DVector<f64>,
}

struct Scratch {
    z: DVector<f64>,
    dlog: DVector<f64>,
    resid: DVector<f64>,
    buf: Vec<f64>,
}

impl Scratch {
    fn new(d: usize, k: usize) -> Self {
        Self { z: DVector::zeros(k), dlog: DVector::zeros(k), resid: DVector::zeros(d), buf: Vec::new() }
    }
}

fn check_kl_inputs(q: &DVector<f64>, p: &DVector<f64>) -> Result<()> {
    if q.len() != p.len() {
        return Err(Error::Shape(format!("{} vs {} rates", q.len(), p.len())));
    }
    if let Some(&r) = q.iter().chain(p.iter()).find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::domain("rate", r));
    }
    Ok(())
}

/// `Σ q ln(q/p) - q + p` between factorized Poissons.
pub fn poisson_kl(q: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
    check_kl_inputs(q, p)?;
    Ok(q.iter().zip(p.iter()).map(|(&q, &p)| q * (q / p).ln() - q + p).sum())
}

/// `∂KL/∂ln q_k = q_k ln(q_k / p_k)`.
pub fn poisson_kl_grad(q: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
    check_kl_inputs(q, p)?;
    Ok(q.zip_map(p, |q, p| q * (q / p).ln()))
}

/// Baseline used by the score method during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreBaseline {
    /// Exponential moving average of past batch-mean losses.
    Ema,
    /// Mean loss of the other draws in the same batch.
    Batch,
}

impl std::str::FromStr for ScoreBaseline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ema" => Ok(ScoreBaseline::Ema),
            "batch" => Ok(ScoreBaseline::Batch),
            other => Err(Error::Config(format!("unknown score baseline '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub grad_clip_norm: f64,
    pub tau_start: f64,
    pub tau_stop: f64,
    pub anneal_fraction: f64,
    pub method: Method,
    pub mc_samples: usize,
    /// Weight on the KL term of the training objective.
    pub beta: f64,
    /// Tail mass for the per-batch arrival bound.
    pub alpha: f64,
    /// Upper limit on the per-batch arrival bound.
    pub max_arrivals: usize,
    pub score_baseline: ScoreBaseline,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            warmup_epochs: 5,
            batch_size: 100,
            lr: 0.005,
            grad_clip_norm: 500.0,
            tau_start: 1.0,
            tau_stop: 0.1,
            anneal_fraction: 0.5,
            method: Method::EatCubic,
            mc_samples: 1,
            beta: 1.0,
            alpha: DEFAULT_ALPHA,
            max_arrivals: 100_000,
            score_baseline: ScoreBaseline::Batch,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch-size must be at least 1");
        }
        if self.mc_samples == 0 {
            return bad("mc-samples must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.grad_clip_norm > 0.0) {
            return bad("grad-clip-norm must be positive");
        }
        if !(self.tau_stop >= 0.0 && self.tau_start >= self.tau_stop && self.tau_start.is_finite()) {
            return bad("temperatures must satisfy tau-start >= tau-stop >= 0");
        }
        if !(0.0..=1.0).contains(&self.anneal_fraction) {
            return bad("anneal-fraction must lie in [0, 1]");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be non-negative");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        Ok(())
    }

    /// Linear anneal from `tau_start` to `tau_stop` over the first
    /// `anneal_fraction` of epochs, then constant.
    pub fn tau_at(&self, epoch: usize) -> f64 {
        let span = self.anneal_fraction * self.epochs as f64;
        if span <= 0.0 {
            return self.tau_stop;
        }
        let frac = (epoch as f64 / span).min(1.0);
        self.tau_start + (self.tau_stop - self.tau_start) * frac
    }

    /// Linear warmup over `warmup_epochs`, then cosine decay to 0.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.warmup_epochs {
            return self.lr * (epoch + 1) as f64 / self.warmup_epochs as f64;
        }
        let span = self.epochs.saturating_sub(self.warmup_epochs).max(1) as f64;
        let t = (epoch - self.warmup_epochs) as f64 / span;
        0.5 * self.lr * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub tau: f64,
    pub lr: f64,
    /// Mean sampled training objective (`recon + β KL`) over the epoch.
    pub train_objective: f64,
    /// Closed-form ELBO on the training set after the epoch.
    pub train_elbo: f64,
    /// Closed-form ELBO on the validation set after the epoch.
    pub val_elbo: Option<f64>,
    /// Mean pre-clip gradient norm over the epoch's batches.
    pub grad_norm: f64,
    pub max_arrivals: usize,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub model: LinearPvae,
    pub trace: Vec<EpochRecord>,
}

struct Adamax {
    m: Vec<f64>,
    u: Vec<f64>,
    t: i32,
}

impl Adamax {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], u: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let step = lr / (1.0 - Self::BETA1.powi(self.t));
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grads[i];
            self.u[i] = (Self::BETA2 * self.u[i]).max(grads[i].abs() + Self::EPS);
            params[i] -= step * self.m[i] / self.u[i];
        }
    }
}

struct Grads {
    enc: DMatrix<f64>,
    dec: DMatrix<f64>,
    prior: DVector<f64>,
}

impl Grads {
    fn zeros(d: usize, k: usize) -> Self {
        Self { enc: DMatrix::zeros(k, d), dec: DMatrix::zeros(d, k), prior: DVector::zeros(k) }
    }

    fn norm(&self) -> f64 {
        (self.enc.norm_squared() + self.dec.norm_squared() + self.prior.norm_squared()).sqrt()
    }

    fn flat(&self) -> Vec<f64> {
        self.enc.iter().chain(self.dec.iter()).chain(self.prior.iter()).copied().collect()
    }
}

fn flatten(model: &LinearPvae) -> Vec<f64> {
    model.enc_weights.iter().chain(model.dec_weights.iter()).chain(model.prior_lograte.iter()).copied().collect()
}

fn unflatten(model: &mut LinearPvae, flat: &[f64]) {
    let a = model.enc_weights.len();
    let b = a + model.dec_weights.len();
    model.enc_weights.as_mut_slice().copy_from_slice(&flat[..a]);
    model.dec_weights.as_mut_slice().copy_from_slice(&flat[a..b]);
    model.prior_lograte.as_mut_slice().copy_from_slice(&flat[b..]);
}

/// Rows of a matrix as column vectors.
pub fn rows(data: &DMatrix<f64>) -> Vec<DVector<f64>> {
    data.row_iter().map(|r| r.transpose()).collect()
}

/// Mini-batch training with Adamax, warmup + cosine learning rate, global
/// gradient-norm clipping and linear temperature annealing. Validation ELBO
/// is the closed form (exact Poisson codes, `τ = 0`).
pub fn train(
    mut model: LinearPvae,
    train_data: &[DVector<f64>],
    validation: &[DVector<f64>],
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    if train_data.is_empty() {
        return Err(Error::InvalidArgument("training data is empty".into()));
    }
    for x in train_data.iter().chain(validation) {
        model.check_x(x)?;
    }
    let (d, k) = (model.input_dim(), model.latent_dim());
    let mut opt = Adamax::new(model.enc_weights.len() + model.dec_weights.len() + k);
    let mut params = flatten(&model);
    let mut ema = crate::relax::EmaBaseline::default();
    let master = RngStream::new(cfg.seed).derive(0x7EA1);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut scratch = Scratch::new(d, k);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let tau = cfg.tau_at(epoch);
        let lr = cfg.lr_at(epoch);
        let mut rng = master.derive(epoch as u64);
        shuffle(&mut order, &mut rng);
        let mut objective_sum = 0.0;
        let mut norm_sum = 0.0;
        let mut batches = 0usize;
        let mut epoch_max_m = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&DVector<f64>> = chunk.iter().map(|&i| &train_data[i]).collect();
            let (objective, mut grads, m) =
                batch_gradient(&model, &batch, cfg, tau, &mut ema, &mut rng, &mut scratch)?;
            if !objective.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            let norm = grads.norm();
            if !norm.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            if norm > cfg.grad_clip_norm {
                let s = cfg.grad_clip_norm / norm;
                grads.enc *= s;
                grads.dec *= s;
                grads.prior *= s;
            }
            opt.step(&mut params, &grads.flat(), lr);
            unflatten(&mut model, &params);
            objective_sum += objective;
            norm_sum += norm;
            batches += 1;
            epoch_max_m = epoch_max_m.max(m);
        }
        let train_elbo = model.mean_elbo_exact(train_data)?;
        let val_elbo = if validation.is_empty() { None } else { Some(model.mean_elbo_exact(validation)?) };
        if !train_elbo.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: batches.saturating_sub(1) });
        }
        trace.push(EpochRecord {
            epoch,
            tau,
            lr,
            train_objective: objective_sum / batches as f64,
            train_elbo,
            val_elbo,
            grad_norm: norm_sum / batches as f64,
            max_arrivals: epoch_max_m,
        });
    }
    Ok(TrainResult { model, trace })
}

fn shuffle(order: &mut [usize], rng: &mut RngStream) {
    for i in (1..order.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
}

/// Mean objective and parameter gradients over one mini-batch.
fn batch_gradient(
    model: &LinearPvae,
    batch: &[&DVector<f64>],
    cfg: &TrainConfig,
    tau: f64,
    ema: &mut crate::relax::EmaBaseline,
    rng: &mut RngStream,
    s: &mut Scratch,
) -> Result<(f64, Grads, usize)> {
    let (d, k) = (model.input_dim(), model.latent_dim());
    let nb = batch.len() as f64;
    let mc = cfg.mc_samples as f64;
    let prior = model.prior_rates();
    let mut grads = Grads::zeros(d, k);
    let mut objective = 0.0;

    let encoded: Vec<(DVector<f64>, DVector<f64>)> = batch.iter().map(|x| model.encode(x)).collect::<Result<_>>()?;
    let max_rate = encoded.iter().flat_map(|(_, r)| r.iter().copied()).fold(0.0, f64::max);
    let arrivals = if cfg.method == Method::Exact { 0 } else { arrivals_for(max_rate, cfg.alpha, cfg.max_arrivals)? };
    let draw = GradDraw { method: cfg.method, tau, arrivals, baseline: 0.0 };

    let mut g_us: Vec<DVector<f64>> = Vec::with_capacity(batch.len());
    // Score draws are kept until the batch's losses are known.
    let mut score_draws: Vec<Vec<(f64, DVector<f64>)>> = Vec::new();
    for (x, (_, rates)) in batch.iter().zip(&encoded) {
        let kl = poisson_kl(rates, &prior)?;
        let mut g_u = poisson_kl_grad(rates, &prior)? * cfg.beta;
        grads.prior += (&prior - rates) * (cfg.beta / nb);
        objective += cfg.beta * kl;
        match cfg.method {
            Method::Exact => {
                objective += model.recon_loss_exact(x, rates)?;
                g_u += model.grad_exact_unchecked(x, rates);
                let resid = *x - &model.dec_weights * rates;
                // ∂/∂Φ of ‖x - Φλ‖² + λᵀ diag(ΦᵀΦ).
                grads.dec.ger(-2.0 / nb, &resid, rates, 1.0);
                for (j, mut col) in grads.dec.column_iter_mut().enumerate() {
                    col.axpy(2.0 * rates[j] / nb, &model.dec_weights.column(j), 1.0);
                }
            }
            method => {
                let mut draws = Vec::new();
                for _ in 0..cfg.mc_samples {
                    let sg = model.sample_grad(x, rates, &draw, rng, s);
                    objective += sg.loss / mc;
                    grads.dec.ger(-2.0 / (nb * mc), &s.resid, &sg.z, 1.0);
                    if method == Method::Score {
                        draws.push((sg.loss, sg.z));
                    } else {
                        g_u += sg.grad / mc;
                    }
                }
                if method == Method::Score {
                    score_draws.push(draws);
                }
            }
        }
        g_us.push(g_u);
    }

    if cfg.method == Method::Score {
        let n_total = nb * mc;
        let total: f64 = score_draws.iter().flatten().map(|(l, _)| l).sum();
        let prev = ema.value;
        for ((g_u, draws), (_, rates)) in g_us.iter_mut().zip(&score_draws).zip(&encoded) {
            for (loss, z) in draws {
                let baseline = match cfg.score_baseline {
                    ScoreBaseline::Ema => prev,
                    ScoreBaseline::Batch if n_total > 1.0 => (total - loss) / (n_total - 1.0),
                    ScoreBaseline::Batch => 0.0,
                };
                *g_u += (z - rates) * ((loss - baseline) / mc);
            }
        }
        ema.update(total / n_total);
    }

    for (x, (g_u, (u, _))) in batch.iter().zip(g_us.iter_mut().zip(&encoded)) {
        mask_clamped(g_u, u);
        grads.enc.ger(1.0 / nb, g_u, x, 1.0);
    }
    Ok((objective / nb, grads, arrivals))
}

/// Settings for [`synth_data`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub n: usize,
    /// Probability that a code entry is active.
    pub sparsity: f64,
    /// Poisson rate of active code entries.
    pub code_rate: f64,
    pub noise_sd: f64,
    /// Use the identity dictionary (requires `latent_dim == input_dim`).
    pub identity_dictionary: bool,
    /// Z-score each column of the generated data.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            input_dim: 64,
            latent_dim: 64,
            n: 1200,
            sparsity: 0.1,
            code_rate: 3.0,
            noise_sd: 0.1,
            identity_dictionary: false,
            standardize: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    /// `n × D`.
    pub data: DMatrix<f64>,
    /// `D × K` ground-truth dictionary with unit columns.
    pub dictionary: DMatrix<f64>,
    /// `n × K` integer codes.
    pub codes: DMatrix<f64>,
}

/// Sparse-coding data `x = Φz + noise` with Poisson-distributed active codes.
pub fn synth_data(cfg: &SynthConfig) -> Result<SynthData> {
    let (d, k) = (cfg.input_dim, cfg.latent_dim);
    if d == 0 || k == 0 || cfg.n == 0 {
        return Err(Error::InvalidArgument("dimensions and sample count must be positive".into()));
    }
    if !(cfg.sparsity > 0.0 && cfg.sparsity <= 1.0) {
        return Err(Error::domain("sparsity", cfg.sparsity));
    }
    if !(cfg.code_rate > 0.0 && cfg.code_rate.is_finite()) {
        return Err(Error::domain("code rate", cfg.code_rate));
    }
    if !(cfg.noise_sd >= 0.0 && cfg.noise_sd.is_finite()) {
        return Err(Error::domain("noise sd", cfg.noise_sd));
    }
    let root = RngStream::new(cfg.seed);
    let dictionary = if cfg.identity_dictionary {
        if d != k {
            return Err(Error::Shape(format!("identity dictionary needs D == K, got {d} and {k}")));
        }
        DMatrix::identity(d, k)
    } else {
        let mut rng = root.derive(1);
        let mut phi = DMatrix::from_fn(d, k, |_, _| rng.standard_normal());
        for mut col in phi.column_iter_mut() {
            let norm = col.norm();
            col /= norm;
        }
        phi
    };
    let mut rng = root.derive(2);
    let codes = DMatrix::from_fn(cfg.n, k, |_, _| {
        if rng.uniform_open() < cfg.sparsity {
            crate::sampling::count_arrivals(cfg.code_rate, &mut rng) as f64
        } else {
            0.0
        }
    });
    let mut noise = root.derive(3);
    let mut data = &codes * dictionary.transpose();
    if cfg.noise_sd > 0.0 {
        data.iter_mut().for_each(|v| *v += cfg.noise_sd * noise.standard_normal());
    }
    if cfg.standardize {
        for mut col in data.column_iter_mut() {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
            let sd = (col.norm_squared() / n).sqrt();
            if sd > 0.0 {
                col /= sd;
            }
        }
    }
    Ok(SynthData { data, dictionary, codes })
}
