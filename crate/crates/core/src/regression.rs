//! Scalar gradient benchmark: estimating `d/dλ E[f(z)]`, `z ~ Poisson(λ)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fidelity::{cell_stream, mean_se};
use crate::method::Method;
use crate::relax::sigmoid;
use crate::sampling::{adaptive_upperbound, poisson_pmf_log, RngStream, DEFAULT_ALPHA};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestFunction {
    #[serde(rename = "z")]
    Z,
    #[serde(rename = "sqrt_z")]
    SqrtZ,
    #[serde(rename = "z_sq")]
    ZSq,
    #[serde(rename = "z15_minus_2z")]
    Z15Minus2Z,
    #[serde(rename = "cos_sq")]
    CosSq,
    #[serde(rename = "sigmoid_z")]
    SigmoidZ,
    /// `z² / λ`, the only member that depends on `λ` directly.
    #[serde(rename = "zsq_over_lambda")]
    ZSqOverLambda,
}

impl TestFunction {
    pub const ALL: [TestFunction; 7] = [
        TestFunction::Z,
        TestFunction::SqrtZ,
        TestFunction::ZSq,
        TestFunction::Z15Minus2Z,
        TestFunction::CosSq,
        TestFunction::SigmoidZ,
        TestFunction::ZSqOverLambda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestFunction::Z => "z",
            TestFunction::SqrtZ => "sqrt_z",
            TestFunction::ZSq => "z_sq",
            TestFunction::Z15Minus2Z => "z15_minus_2z",
            TestFunction::CosSq => "cos_sq",
            TestFunction::SigmoidZ => "sigmoid_z",
            TestFunction::ZSqOverLambda => "zsq_over_lambda",
        }
    }

    /// `f(z; λ)` for real `z ≥ 0`; negative inputs are clamped to 0.
    pub fn value(self, z: f64, rate: f64) -> f64 {
        let z = z.max(0.0);
        match self {
            TestFunction::Z => z,
            TestFunction::SqrtZ => z.sqrt(),
            TestFunction::ZSq => z * z,
            TestFunction::Z15Minus2Z => z * z.sqrt() - 2.0 * z,
            TestFunction::CosSq => z.cos().powi(2),
            TestFunction::SigmoidZ => sigmoid(z),
            TestFunction::ZSqOverLambda => z * z / rate,
        }
    }

    /// `∂f/∂z`; the square-root terms take derivative 0 at `z ≤ 0`.
    pub fn deriv_z(self, z: f64, rate: f64) -> f64 {
        match self {
            TestFunction::Z => 1.0,
            TestFunction::SqrtZ => {
                if z > 0.0 {
                    0.5 / z.sqrt()
                } else {
                    0.0
                }
            }
            TestFunction::ZSq => 2.0 * z.max(0.0),
            TestFunction::Z15Minus2Z => {
                if z > 0.0 {
                    1.5 * z.sqrt() - 2.0
                } else {
                    0.0
                }
            }
            TestFunction::CosSq => -(2.0 * z.max(0.0)).sin(),
            TestFunction::SigmoidZ => {
                let s = sigmoid(z.max(0.0));
                s * (1.0 - s)
            }
            TestFunction::ZSqOverLambda => 2.0 * z.max(0.0) / rate,
        }
    }

    /// Explicit `∂f/∂λ` at fixed `z`.
    pub fn deriv_rate(self, z: f64, rate: f64) -> f64 {
        match self {
            TestFunction::ZSqOverLambda => -z.max(0.0).powi(2) / (rate * rate),
            _ => 0.0,
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        TestFunction::ALL
            .into_iter()
            .find(|f| f.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown test function '{s}'")))
    }
}

/// Which derivative of `E[f(z; λ)]` is the target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradTarget {
    /// Includes the explicit `∂f/∂λ` term.
    Total,
    /// Differentiates only the distribution: `E[f(z) (z/λ - 1)]`.
    DistributionOnly,
}

/// Truncation of the series for the exact gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    /// `K = ⌊λ⌋ + 20`.
    Short,
    /// `K = ⌊λ + 20 + 15√λ⌋`; the neglected tail is below double precision.
    Adequate,
}

pub fn truncation_point(rate: f64, rule: Truncation) -> usize {
    match rule {
        Truncation::Short => rate.floor() as usize + 20,
        Truncation::Adequate => (rate + 20.0 + 15.0 * rate.sqrt()).floor() as usize,
    }
}

/// `Σ_{z ≤ K} f(z) p(z|λ) (z/λ - 1)`, plus `E[∂f/∂λ]` for the total target.
pub fn exact_scalar_grad_with(f: TestFunction, rate: f64, target: GradTarget, k: usize) -> Result<f64> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::domain("rate", rate));
    }
    let mut total = 0.0;
    for z in 0..=k {
        let zf = z as f64;
        let p = poisson_pmf_log(z as u64, rate).exp();
        total += f.value(zf, rate) * p * (zf / rate - 1.0);
        if target == GradTarget::Total {
            total += f.deriv_rate(zf, rate) * p;
        }
    }
    Ok(total)
}

/// Exact total-derivative gradient with adequate truncation.
pub fn exact_scalar_grad(f: TestFunction, rate: f64) -> Result<f64> {
    exact_scalar_grad_with(f, rate, GradTarget::Total, truncation_point(rate, Truncation::Adequate))
}

/// How the arrival count / category truncation `M` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrivalBound {
    /// `1 - alpha` quantile of `Poisson(λ)`.
    RateQuantile,
    /// Quantile over the indicator's support; see [`Method::support_arrivals`].
    Support,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSettings {
    pub target: GradTarget,
    /// Tail mass for the arrival count / category truncation.
    pub alpha: f64,
    pub bound: ArrivalBound,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self { target: GradTarget::Total, alpha: DEFAULT_ALPHA, bound: ArrivalBound::Support }
    }
}

/// Per-draw gradient terms, for callers that want the sample spread.
pub fn scalar_grad_draws(
    f: TestFunction,
    rate: f64,
    method: Method,
    tau: f64,
    n_mc: usize,
    settings: &EstimatorSettings,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::domain("rate", rate));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::domain("temperature", tau));
    }
    if n_mc == 0 {
        return Err(Error::InvalidArgument("n_mc must be at least 1".into()));
    }
    let total = settings.target == GradTarget::Total;
    if method == Method::Exact {
        let g = exact_scalar_grad_with(f, rate, settings.target, truncation_point(rate, Truncation::Adequate))?;
        return Ok(vec![g; n_mc]);
    }
    let m = match settings.bound {
        ArrivalBound::RateQuantile => adaptive_upperbound(rate, settings.alpha)?,
        ArrivalBound::Support => method.support_arrivals(rate, tau, settings.alpha)?,
    };
    let mut buf = Vec::new();
    let mut out = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let s = method.draw(rate, m, tau, rng, &mut buf);
        let mut g = if method == Method::Score {
            f.value(s.value, rate) * (s.value / rate - 1.0)
        } else {
            f.deriv_z(s.value, rate) * s.dlog / rate
        };
        if total {
            g += f.deriv_rate(s.value, rate);
        }
        out.push(g);
    }
    Ok(out)
}

/// Mean of `n_mc` single-draw gradient estimates.
pub fn estimate_scalar_grad(
    f: TestFunction,
    rate: f64,
    method: Method,
    tau: f64,
    n_mc: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    let draws = scalar_grad_draws(f, rate, method, tau, n_mc, &EstimatorSettings::default(), rng)?;
    Ok(draw_mean(&draws, method))
}

fn draw_mean(draws: &[f64], method: Method) -> f64 {
    // Averaging identical copies of the exact value would add rounding.
    if method == Method::Exact {
        draws[0]
    } else {
        draws.iter().sum::<f64>() / draws.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaeRecord {
    pub function: TestFunction,
    pub method: Method,
    pub rate: f64,
    pub tau: f64,
    pub exact: f64,
    pub mean_estimate: f64,
    pub mae: f64,
    pub se_mae: f64,
    pub n_mc: usize,
    pub n_repeats: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaeSweepConfig {
    pub functions: Vec<TestFunction>,
    pub methods: Vec<Method>,
    pub rates: Vec<f64>,
    pub taus: Vec<f64>,
    pub n_mc: usize,
    pub n_repeats: usize,
    pub settings: EstimatorSettings,
    pub seed: u64,
}

/// Twelve log-spaced temperatures `0.1 · 10^{j/6}`, `j = -5..=6`.
pub fn default_tau_grid() -> Vec<f64> {
    (-5..=6).map(|j| 0.1 * 10f64.powf(j as f64 / 6.0)).collect()
}

impl Default for MaeSweepConfig {
    fn default() -> Self {
        Self {
            functions: vec![TestFunction::Z],
            methods: vec![Method::EatSigmoid, Method::EatCubic, Method::Gsm, Method::Score],
            rates: vec![20.0],
            taus: default_tau_grid(),
            n_mc: 100,
            n_repeats: 20,
            settings: EstimatorSettings::default(),
            seed: 0,
        }
    }
}

fn function_code(f: TestFunction) -> u64 {
    TestFunction::ALL.iter().position(|g| *g == f).unwrap_or(0) as u64 + 1
}

/// MAE of `n_repeats` independent estimates at one condition.
pub fn mae_cell(
    f: TestFunction,
    method: Method,
    rate: f64,
    tau: f64,
    n_mc: usize,
    n_repeats: usize,
    settings: &EstimatorSettings,
    seed: u64,
) -> Result<MaeRecord> {
    if n_repeats == 0 {
        return Err(Error::InvalidArgument("n_repeats must be at least 1".into()));
    }
    let exact = exact_scalar_grad_with(f, rate, settings.target, truncation_point(rate, Truncation::Adequate))?;
    let base = cell_stream(seed, method, rate, tau).derive(function_code(f)).derive(n_mc as u64);
    let mut errors = Vec::with_capacity(n_repeats);
    let mut estimates = 0.0;
    for r in 0..n_repeats as u64 {
        let mut rng = base.derive(r);
        let draws = scalar_grad_draws(f, rate, method, tau, n_mc, settings, &mut rng)?;
        let est = draw_mean(&draws, method);
        estimates += est;
        errors.push((est - exact).abs());
    }
    let (mae, se_mae) = mean_se(&errors);
    Ok(MaeRecord {
        function: f,
        method,
        rate,
        tau,
        exact,
        mean_estimate: estimates / n_repeats as f64,
        mae,
        se_mae,
        n_mc,
        n_repeats,
    })
}

/// Every `(function, method, rate, tau)` condition, in grid order.
pub fn mae_sweep(cfg: &MaeSweepConfig) -> Result<Vec<MaeRecord>> {
    if cfg.functions.is_empty() || cfg.methods.is_empty() || cfg.rates.is_empty() || cfg.taus.is_empty() {
        return Err(Error::InvalidArgument("regression grids must be non-empty".into()));
    }
    let mut out = Vec::new();
    for &f in &cfg.functions {
        for &method in &cfg.methods {
            for &rate in &cfg.rates {
                for &tau in &cfg.taus {
                    out.push(mae_cell(f, method, rate, tau, cfg.n_mc, cfg.n_repeats, &cfg.settings, cfg.seed)?);
                }
            }
        }
    }
    Ok(out)
}

/// Grid temperature with the smallest MAE; ties go to the smaller `τ`.
#[allow(clippy::too_many_arguments)]
pub fn optimal_tau(
    f: TestFunction,
    rate: f64,
    method: Method,
    tau_grid: &[f64],
    n_mc: usize,
    n_repeats: usize,
    settings: &EstimatorSettings,
    seed: u64,
) -> Result<(f64, f64)> {
    if tau_grid.is_empty() {
        return Err(Error::InvalidArgument("temperature grid is empty".into()));
    }
    let mut grid = tau_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for tau in grid {
        let mae = mae_cell(f, method, rate, tau, n_mc, n_repeats, settings, seed)?.mae;
        if best.is_none_or(|(_, b)| mae < b) {
            best = Some((tau, mae));
        }
    }
    Ok(best.expect("grid is non-empty"))
}
