//! Relaxed Poisson samplers and the score-function estimator.
//!
//! Both relaxations return the sample together with its pathwise derivative
//! with respect to the log-rate `ln λ`, derived by hand:
//!
//! * arrival-time (EAT): `z = Σ f((1 - t_m)/τ)` with `t_m = E_m / λ`, so
//!   `∂t_m/∂ln λ = -t_m` and `∂z/∂ln λ = Σ f'((1 - t_m)/τ) t_m / τ`.
//! * Gumbel-softmax (GSM): `z = Σ m w_m` with `w = softmax((ℓ + g)/τ)` and
//!   `∂ℓ_m/∂ln λ = m`, so `∂z/∂ln λ = Var_w(m) / τ`.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{adaptive_upperbound, ln_factorial, RngStream, DEFAULT_ALPHA};

/// Smooth surrogate for the unit step `1[u > 0]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoftIndicator {
    Hard,
    Sigmoid,
    /// Hermite smoothstep `3w² - 2w³`, `w = (u + 1)/2`, supported on `[-1, 1]`.
    Cubic,
}

impl SoftIndicator {
    pub const ALL: [SoftIndicator; 3] = [SoftIndicator::Hard, SoftIndicator::Sigmoid, SoftIndicator::Cubic];

    #[inline]
    pub fn value(self, u: f64) -> f64 {
        match self {
            SoftIndicator::Hard => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            SoftIndicator::Sigmoid => sigmoid(u),
            SoftIndicator::Cubic => {
                if u <= -1.0 {
                    0.0
                } else if u >= 1.0 {
                    1.0
                } else {
                    let w = 0.5 * (u + 1.0);
                    w * w * (3.0 - 2.0 * w)
                }
            }
        }
    }

    /// `(f(u), f'(u))`. The hard step reports a zero derivative everywhere.
    #[inline]
    pub fn eval(self, u: f64) -> (f64, f64) {
        match self {
            SoftIndicator::Hard => (self.value(u), 0.0),
            SoftIndicator::Sigmoid => {
                let s = sigmoid(u);
                (s, s * (1.0 - s))
            }
            SoftIndicator::Cubic => {
                if u <= -1.0 {
                    (0.0, 0.0)
                } else if u >= 1.0 {
                    (1.0, 0.0)
                } else {
                    let w = 0.5 * (u + 1.0);
                    (w * w * (3.0 - 2.0 * w), 3.0 * w * (1.0 - w))
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SoftIndicator::Hard => "hard",
            SoftIndicator::Sigmoid => "sigmoid",
            SoftIndicator::Cubic => "cubic",
        }
    }
}

impl fmt::Display for SoftIndicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SoftIndicator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hard" | "step" => Ok(SoftIndicator::Hard),
            "sigmoid" => Ok(SoftIndicator::Sigmoid),
            "cubic" | "smoothstep" => Ok(SoftIndicator::Cubic),
            other => Err(Error::Config(format!("unknown indicator '{other}'"))),
        }
    }
}

#[inline]
pub(crate) fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `(f(u), f'(u))` for the given indicator.
pub fn indicator_eval(ind: SoftIndicator, u: f64) -> (f64, f64) {
    ind.eval(u)
}

/// One relaxed Poisson draw for a single latent dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxedSample {
    pub value: f64,
    /// `∂value / ∂ln λ` under fixed noise.
    pub dlog: f64,
    /// Arrival count / truncation level `M` the draw was made with.
    pub arrival_count: usize,
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("rate", rate))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau >= 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("temperature", tau))
    }
}

/// Arrival-time relaxation with `m` exponential inter-arrival draws.
///
/// With `tau == 0` or the hard indicator the count is exact and `dlog = 0`.
/// Arrivals that can no longer contribute (past `1` for the hard step, past
/// `1 + τ` for the cubic) end the draw early; the sigmoid always uses all
/// `m` arrivals.
pub fn eat_rsample(rate: f64, m: usize, tau: f64, ind: SoftIndicator, rng: &mut RngStream) -> Result<RelaxedSample> {
    check_rate(rate)?;
    check_tau(tau)?;
    if m == 0 {
        return Err(Error::InvalidArgument("arrival count must be at least 1".into()));
    }
    Ok(eat_draw(rate, m, tau, ind, rng))
}

#[inline]
pub(crate) fn eat_draw(rate: f64, m: usize, tau: f64, ind: SoftIndicator, rng: &mut RngStream) -> RelaxedSample {
    let inv_rate = 1.0 / rate;
    let mut unit_time = 0.0;
    if tau == 0.0 || ind == SoftIndicator::Hard {
        let mut n = 0usize;
        for _ in 0..m {
            unit_time -= rng.uniform_open_closed().ln();
            if unit_time * inv_rate >= 1.0 {
                break;
            }
            n += 1;
        }
        return RelaxedSample { value: n as f64, dlog: 0.0, arrival_count: m };
    }
    let inv_tau = 1.0 / tau;
    let cutoff = match ind {
        SoftIndicator::Cubic => 1.0 + tau,
        _ => f64::INFINITY,
    };
    let mut value = 0.0;
    let mut dlog = 0.0;
    for _ in 0..m {
        unit_time -= rng.uniform_open_closed().ln();
        let t = unit_time * inv_rate;
        if t >= cutoff {
            break;
        }
        let (f, df) = ind.eval((1.0 - t) * inv_tau);
        value += f;
        dlog += df * t * inv_tau;
    }
    RelaxedSample { value, dlog, arrival_count: m }
}

/// Arrival-time relaxation from explicit uniforms (one per arrival), for
/// common-random-number comparisons across rates.
pub fn eat_from_uniforms(rate: f64, tau: f64, ind: SoftIndicator, uniforms: &[f64]) -> Result<RelaxedSample> {
    check_rate(rate)?;
    check_tau(tau)?;
    let hard = tau == 0.0 || ind == SoftIndicator::Hard;
    let mut unit_time = 0.0;
    let mut value = 0.0;
    let mut dlog = 0.0;
    for &u in uniforms {
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::domain("uniform draw", u));
        }
        unit_time -= u.ln();
        let t = unit_time / rate;
        if hard {
            if t < 1.0 {
                value += 1.0;
            }
        } else {
            let (f, df) = ind.eval((1.0 - t) / tau);
            value += f;
            dlog += df * t / tau;
        }
    }
    Ok(RelaxedSample { value, dlog, arrival_count: uniforms.len() })
}

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| (0..4096u64).map(ln_factorial).collect())
}

#[inline]
pub(crate) fn ln_fact(m: usize) -> f64 {
    let table = ln_factorial_table();
    if m < table.len() {
        table[m]
    } else {
        ln_factorial(m as u64)
    }
}

/// Unnormalized Poisson logits `m ln λ - ln m!` for `m = 0..n`.
pub fn poisson_logits(rate: f64, n: usize) -> Result<Vec<f64>> {
    com_poisson_logits(rate, 1.0, n)
}

/// Conway-Maxwell-Poisson logits `m ln λ - ν ln m!` for `m = 0..n`.
pub fn com_poisson_logits(rate: f64, nu: f64, n: usize) -> Result<Vec<f64>> {
    check_rate(rate)?;
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::domain("dispersion nu", nu));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("truncation must be at least 1".into()));
    }
    let ln_rate = rate.ln();
    Ok((0..n).map(|m| m as f64 * ln_rate - nu * ln_fact(m)).collect())
}

/// Soft one-hot `softmax((ℓ + g)/τ)`; `τ = 0` gives the hard argmax.
pub fn gsm_soft_onehot(logits: &[f64], gumbels: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    if logits.len() != gumbels.len() || logits.is_empty() {
        return Err(Error::Shape(format!("{} logits vs {} gumbel draws", logits.len(), gumbels.len())));
    }
    let mut w: Vec<f64> = logits.iter().zip(gumbels).map(|(l, g)| l + g).collect();
    if tau == 0.0 {
        let k = argmax(&w);
        w.iter_mut().enumerate().for_each(|(i, x)| *x = if i == k { 1.0 } else { 0.0 });
        return Ok(w);
    }
    softmax_in_place(&mut w, 1.0 / tau);
    Ok(w)
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[inline]
fn softmax_in_place(y: &mut [f64], scale: f64) {
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in y.iter_mut() {
        *v = ((*v - max) * scale).exp();
        total += *v;
    }
    let inv = 1.0 / total;
    y.iter_mut().for_each(|v| *v *= inv);
}

/// Collapse a soft one-hot over `{0..n}` into `(value, dlog)` given
/// `∂ℓ_m/∂ln λ = m`.
fn aggregate_onehot(w: &[f64], tau: f64) -> (f64, f64) {
    let mut mean = 0.0;
    let mut second = 0.0;
    for (m, &p) in w.iter().enumerate() {
        let m = m as f64;
        mean += m * p;
        second += m * m * p;
    }
    let dlog = if tau == 0.0 { 0.0 } else { ((second - mean * mean) / tau).max(0.0) };
    (mean, dlog)
}

/// Gumbel-softmax relaxation from explicit logits and Gumbel noise.
pub fn gsm_from_noise(logits: &[f64], gumbels: &[f64], tau: f64) -> Result<RelaxedSample> {
    let w = gsm_soft_onehot(logits, gumbels, tau)?;
    let (value, dlog) = aggregate_onehot(&w, tau);
    Ok(RelaxedSample { value, dlog, arrival_count: logits.len() })
}

/// Gumbel-softmax relaxation over arbitrary logits (e.g. COM-Poisson).
/// `dlog` assumes the logits depend on `ln λ` as `m ln λ`.
pub fn gsm_from_logits(logits: &[f64], tau: f64, rng: &mut RngStream) -> Result<RelaxedSample> {
    let gumbels: Vec<f64> = logits.iter().map(|_| gumbel(rng)).collect();
    gsm_from_noise(logits, &gumbels, tau)
}

#[inline]
fn gumbel(rng: &mut RngStream) -> f64 {
    -(-rng.uniform_open().ln()).ln()
}

/// Gumbel-softmax relaxation of `Poisson(rate)` truncated to `{0..m-1}`.
pub fn gsm_rsample(rate: f64, m: usize, tau: f64, rng: &mut RngStream) -> Result<RelaxedSample> {
    check_rate(rate)?;
    check_tau(tau)?;
    if m == 0 {
        return Err(Error::InvalidArgument("truncation must be at least 1".into()));
    }
    Ok(gsm_draw(rate, m, tau, rng, &mut Vec::with_capacity(m)))
}

#[inline]
pub(crate) fn gsm_draw(rate: f64, m: usize, tau: f64, rng: &mut RngStream, buf: &mut Vec<f64>) -> RelaxedSample {
    let ln_rate = rate.ln();
    buf.clear();
    buf.extend((0..m).map(|k| k as f64 * ln_rate - ln_fact(k) + gumbel(rng)));
    if tau == 0.0 {
        return RelaxedSample { value: argmax(buf) as f64, dlog: 0.0, arrival_count: m };
    }
    softmax_in_place(buf, 1.0 / tau);
    let (value, dlog) = aggregate_onehot(buf, tau);
    RelaxedSample { value, dlog, arrival_count: m }
}

/// Score of `Poisson(z; λ)` with respect to `ln λ`.
pub fn score_logq_grad(z: u64, rate: f64) -> f64 {
    z as f64 - rate
}

/// Exponential-moving-average reward baseline for the score estimator.
///
/// Update rule: `b ← (1 - momentum) b + momentum · batch_mean`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmaBaseline {
    pub value: f64,
    pub momentum: f64,
}

impl Default for EmaBaseline {
    fn default() -> Self {
        Self { value: 0.0, momentum: 0.9 }
    }
}

impl EmaBaseline {
    pub fn update(&mut self, batch_mean: f64) {
        self.value = (1.0 - self.momentum) * self.value + self.momentum * batch_mean;
    }
}

/// Score-function estimate of `∂E[loss]/∂ln λ` with a baseline.
///
/// The baseline in effect *before* this batch is subtracted, then it is
/// updated with the batch mean loss.
pub fn score_estimate_grad(losses: &[f64], z_samples: &[u64], rate: f64, baseline: &mut EmaBaseline) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::InvalidArgument("empty sample set".into()));
    }
    if losses.len() != z_samples.len() {
        return Err(Error::Shape(format!("{} losses vs {} samples", losses.len(), z_samples.len())));
    }
    let b = baseline.value;
    let n = losses.len() as f64;
    let estimate = losses.iter().zip(z_samples).map(|(&l, &z)| (l - b) * score_logq_grad(z, rate)).sum::<f64>() / n;
    baseline.update(losses.iter().sum::<f64>() / n);
    Ok(estimate)
}

/// Negative-binomial draw as a Gamma-Poisson mixture: `λ ~ Gamma(r, rate = μ/(1-μ))`,
/// then an arrival-time draw at `λ`. Forward sampling only.
pub fn nb_two_step_sample(r: f64, mu: f64, tau: f64, ind: SoftIndicator, rng: &mut RngStream) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::domain("shape r", r));
    }
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::domain("success probability", mu));
    }
    check_tau(tau)?;
    let rate = rng.gamma(r, mu / (1.0 - mu))?;
    if !(rate > 0.0) {
        return Ok(0.0);
    }
    let m = adaptive_upperbound(rate, DEFAULT_ALPHA)?;
    Ok(eat_draw(rate, m, tau, ind, rng).value)
}
