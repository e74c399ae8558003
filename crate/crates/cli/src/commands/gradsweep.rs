use std::path::PathBuf;

use clap::Args;
use poisson_relax::grad_metrics::{grad_quality_cell, GradSweepConfig};
use poisson_relax::io::{load_checkpoint, read_matrix};
use poisson_relax::pvae::{rows, synth_data, LinearPvae, SynthConfig};
use poisson_relax::Method;
use serde::{Deserialize, Serialize};

use super::{label, Command};
use crate::config::{at, at_least, non_empty, non_negative, parse_name, positive, resolve_output, CliError, Format, Output};
use crate::output::Table;

#[derive(Args, Serialize, Deserialize, Debug, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GradSweepArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_name::<Method>)]
    pub methods: Option<Vec<Method>>,
    /// Latent rates, each fixed for all units in turn.
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    /// Gradient draws per batch item.
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Model checkpoint; a freshly initialized model otherwise.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Data matrix (`.csv` or binary); synthetic data otherwise.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Input dimension of the synthetic data and fresh model.
    #[arg(long)]
    pub input_dim: Option<usize>,
    /// Latent dimension of a fresh model.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_parser = parse_name::<Format>)]
    pub format: Option<Format>,
}

#[derive(Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct GradSweep {
    methods: Vec<Method>,
    rates: Vec<f64>,
    taus: Vec<f64>,
    n_samples: usize,
    batch: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    input_dim: usize,
    latent_dim: usize,
    seed: u64,
    #[serde(flatten)]
    out: Output,
}

impl Command for GradSweep {
    const NAME: &'static str = "gradsweep";
    type Args = GradSweepArgs;

    fn resolve(a: GradSweepArgs) -> Result<Self, CliError> {
        let d = GradSweepConfig::default();
        let rates = non_empty("rates", a.rates.unwrap_or(d.rates))?;
        positive("rates", &rates)?;
        let taus = non_empty("taus", a.taus.unwrap_or(d.taus))?;
        non_negative("taus", &taus)?;
        Ok(Self {
            methods: non_empty("methods", a.methods.unwrap_or(d.methods))?,
            rates,
            taus,
            n_samples: at_least("n-samples", a.n_samples.unwrap_or(d.n_samples), 2)?,
            batch: at_least("batch", a.batch.unwrap_or(d.batch), 1)?,
            checkpoint: a.checkpoint,
            data: a.data,
            input_dim: at_least("input-dim", a.input_dim.unwrap_or(64), 1)?,
            latent_dim: at_least("latent-dim", a.latent_dim.unwrap_or(64), 1)?,
            seed: a.seed.unwrap_or(d.seed),
            out: resolve_output(Self::NAME, a.output, a.format),
        })
    }

    fn output(&self) -> &Output {
        &self.out
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn execute(&self) -> Result<Table, CliError> {
        let model = match &self.checkpoint {
            Some(p) => load_checkpoint(p).map_err(|e| CliError::config("checkpoint", e))?.0,
            None => {
                let d = match &self.data {
                    Some(p) => read_matrix(p).map_err(|e| CliError::config("data", e))?.ncols(),
                    None => self.input_dim,
                };
                LinearPvae::init(d, self.latent_dim, self.seed).map_err(|e| CliError::config("latent-dim", e))?
            }
        };
        let data = match &self.data {
            Some(p) => rows(&read_matrix(p).map_err(|e| CliError::config("data", e))?),
            None => {
                let synth = SynthConfig {
                    input_dim: model.input_dim(),
                    latent_dim: model.input_dim(),
                    n: self.batch,
                    seed: self.seed,
                    ..SynthConfig::default()
                };
                rows(&synth_data(&synth).map_err(|e| CliError::config("input-dim", e))?.data)
            }
        };
        if data.len() < self.batch {
            return Err(CliError::config("batch", format!("data has only {} rows", data.len())));
        }
        if data[0].len() != model.input_dim() {
            return Err(CliError::config(
                "data",
                format!("{} columns, model expects {}", data[0].len(), model.input_dim()),
            ));
        }
        let cfg = GradSweepConfig {
            methods: self.methods.clone(),
            rates: self.rates.clone(),
            taus: self.taus.clone(),
            n_samples: self.n_samples,
            batch: self.batch,
            seed: self.seed,
        };
        let mut table = Table::new(&[
            "method",
            "rate",
            "tau",
            "cos_mean",
            "cos_sample",
            "bias_energy",
            "noise_energy",
            "signal_energy",
            "normalized_bias_energy",
            "normalized_noise_energy",
            "hessian_min_eigenvalue",
            "cov_is_diagonal",
            "n_samples",
            "batch",
        ]);
        for &method in &self.methods {
            for &rate in &self.rates {
                for &tau in &self.taus {
                    let here = label(&[("method", method.to_string()), ("rate", rate.to_string()), ("tau", tau.to_string())]);
                    let (r, _) = grad_quality_cell(&model, &data, method, rate, tau, &cfg).map_err(at(here))?;
                    table.push(vec![
                        method.name().into(),
                        r.rate.into(),
                        r.tau.into(),
                        r.cos_mean.into(),
                        r.cos_sample.into(),
                        r.bias_energy.into(),
                        r.noise_energy.into(),
                        r.signal_energy.into(),
                        r.normalized_bias_energy.into(),
                        r.normalized_noise_energy.into(),
                        r.hessian_min_eigenvalue.into(),
                        r.cov_is_diagonal.into(),
                        r.n_samples.into(),
                        r.batch.into(),
                    ]);
                }
            }
        }
        Ok(table)
    }
}
