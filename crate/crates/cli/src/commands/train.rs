use std::path::PathBuf;

use clap::Args;
use poisson_relax::io::{read_matrix, save_checkpoint};
use poisson_relax::pvae::{rows, synth_data, train, LinearPvae, ScoreBaseline, SynthConfig, TrainConfig};
use poisson_relax::Method;
use serde::{Deserialize, Serialize};

use super::{label, Command};
use crate::config::{at, at_least, non_empty, non_negative, parse_name, probability, resolve_output, CliError, Format, Output};
use crate::output::Table;

#[derive(Args, Serialize, Deserialize, Debug, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainPvaeArgs {
    /// Training methods; exact and score ignore the temperature grid.
    #[arg(long, value_delimiter = ',', value_parser = parse_name::<Method>)]
    pub methods: Option<Vec<Method>>,
    /// Final temperatures reached by the anneal.
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    /// Runs per condition, with seeds `seed`, `seed + 1`, ...
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Data matrix (`.csv` or binary); synthetic data otherwise.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Rows held out from the end of the data for validation.
    #[arg(long)]
    pub n_val: Option<usize>,
    #[arg(long)]
    pub synth_n: Option<usize>,
    #[arg(long)]
    pub input_dim: Option<usize>,
    #[arg(long)]
    pub synth_latent_dim: Option<usize>,
    #[arg(long)]
    pub synth_sparsity: Option<f64>,
    #[arg(long)]
    pub synth_noise_sd: Option<f64>,
    #[arg(long)]
    pub synth_seed: Option<u64>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub grad_clip_norm: Option<f64>,
    #[arg(long)]
    pub tau_start: Option<f64>,
    #[arg(long)]
    pub anneal_fraction: Option<f64>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    /// Weight on the KL term.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_arrivals: Option<usize>,
    /// batch or ema.
    #[arg(long, value_parser = parse_name::<ScoreBaseline>)]
    pub score_baseline: Option<ScoreBaseline>,
    /// Write a checkpoint per run next to the output file.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub save_checkpoints: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_parser = parse_name::<Format>)]
    pub format: Option<Format>,
}

#[derive(Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct TrainPvae {
    methods: Vec<Method>,
    taus: Vec<f64>,
    repeats: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    n_val: usize,
    synth_n: usize,
    input_dim: usize,
    synth_latent_dim: usize,
    synth_sparsity: f64,
    synth_noise_sd: f64,
    synth_seed: u64,
    latent_dim: usize,
    epochs: usize,
    warmup_epochs: usize,
    batch_size: usize,
    lr: f64,
    grad_clip_norm: f64,
    tau_start: f64,
    anneal_fraction: f64,
    mc_samples: usize,
    beta: f64,
    alpha: f64,
    max_arrivals: usize,
    score_baseline: ScoreBaseline,
    save_checkpoints: bool,
    seed: u64,
    #[serde(flatten)]
    out: Output,
}

impl TrainPvae {
    fn train_config(&self, method: Method, tau: Option<f64>, seed: u64) -> TrainConfig {
        let (tau_start, tau_stop) = match tau {
            Some(t) => (self.tau_start, t),
            None => (0.0, 0.0),
        };
        TrainConfig {
            epochs: self.epochs,
            warmup_epochs: self.warmup_epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            grad_clip_norm: self.grad_clip_norm,
            tau_start,
            tau_stop,
            anneal_fraction: self.anneal_fraction,
            method,
            mc_samples: self.mc_samples,
            beta: self.beta,
            alpha: self.alpha,
            max_arrivals: self.max_arrivals,
            score_baseline: self.score_baseline,
            seed,
        }
    }

    fn conditions(&self) -> Vec<(Method, Option<f64>)> {
        let mut out = Vec::new();
        for &m in &self.methods {
            if m.is_pathwise() {
                out.extend(self.taus.iter().map(|&t| (m, Some(t))));
            } else {
                out.push((m, None));
            }
        }
        out
    }
}

impl Command for TrainPvae {
    const NAME: &'static str = "train-pvae";
    type Args = TrainPvaeArgs;

    fn resolve(a: TrainPvaeArgs) -> Result<Self, CliError> {
        let d = TrainConfig::default();
        let s = SynthConfig::default();
        let taus = non_empty("taus", a.taus.unwrap_or(vec![d.tau_stop]))?;
        non_negative("taus", &taus)?;
        let r = Self {
            methods: non_empty("methods", a.methods.unwrap_or(vec![d.method]))?,
            taus,
            repeats: at_least("repeats", a.repeats.unwrap_or(1), 1)?,
            data: a.data,
            n_val: a.n_val.unwrap_or(200),
            synth_n: at_least("synth-n", a.synth_n.unwrap_or(s.n), 2)?,
            input_dim: at_least("input-dim", a.input_dim.unwrap_or(s.input_dim), 1)?,
            synth_latent_dim: at_least("synth-latent-dim", a.synth_latent_dim.unwrap_or(s.latent_dim), 1)?,
            synth_sparsity: a.synth_sparsity.unwrap_or(s.sparsity),
            synth_noise_sd: a.synth_noise_sd.unwrap_or(s.noise_sd),
            synth_seed: a.synth_seed.unwrap_or(100),
            latent_dim: at_least("latent-dim", a.latent_dim.unwrap_or(128), 1)?,
            epochs: at_least("epochs", a.epochs.unwrap_or(d.epochs), 1)?,
            warmup_epochs: a.warmup_epochs.unwrap_or(d.warmup_epochs),
            batch_size: at_least("batch-size", a.batch_size.unwrap_or(d.batch_size), 1)?,
            lr: a.lr.unwrap_or(d.lr),
            grad_clip_norm: a.grad_clip_norm.unwrap_or(d.grad_clip_norm),
            tau_start: a.tau_start.unwrap_or(d.tau_start),
            anneal_fraction: a.anneal_fraction.unwrap_or(d.anneal_fraction),
            mc_samples: at_least("mc-samples", a.mc_samples.unwrap_or(d.mc_samples), 1)?,
            beta: a.beta.unwrap_or(d.beta),
            alpha: probability("alpha", a.alpha.unwrap_or(d.alpha))?,
            max_arrivals: at_least("max-arrivals", a.max_arrivals.unwrap_or(d.max_arrivals), 1)?,
            score_baseline: a.score_baseline.unwrap_or(d.score_baseline),
            save_checkpoints: a.save_checkpoints.unwrap_or(false),
            seed: a.seed.unwrap_or(d.seed),
            out: resolve_output(Self::NAME, a.output, a.format),
        };
        if !(r.lr > 0.0 && r.lr.is_finite()) {
            return Err(CliError::config("lr", format!("must be positive, got {}", r.lr)));
        }
        if !(r.grad_clip_norm > 0.0) {
            return Err(CliError::config("grad-clip-norm", format!("must be positive, got {}", r.grad_clip_norm)));
        }
        if !(0.0..=1.0).contains(&r.anneal_fraction) {
            return Err(CliError::config("anneal-fraction", "must lie in [0, 1]"));
        }
        if !(r.beta >= 0.0 && r.beta.is_finite()) {
            return Err(CliError::config("beta", "must be non-negative"));
        }
        if let Some(t) = r.taus.iter().find(|t| **t > r.tau_start) {
            return Err(CliError::config("taus", format!("{t} exceeds tau-start {}", r.tau_start)));
        }
        if !(r.synth_sparsity > 0.0 && r.synth_sparsity <= 1.0) {
            return Err(CliError::config("synth-sparsity", "must lie in (0, 1]"));
        }
        if !(r.synth_noise_sd >= 0.0 && r.synth_noise_sd.is_finite()) {
            return Err(CliError::config("synth-noise-sd", "must be non-negative"));
        }
        Ok(r)
    }

    fn output(&self) -> &Output {
        &self.out
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn execute(&self) -> Result<Table, CliError> {
        let all = match &self.data {
            Some(p) => rows(&read_matrix(p).map_err(|e| CliError::config("data", e))?),
            None => {
                let synth = SynthConfig {
                    input_dim: self.input_dim,
                    latent_dim: self.synth_latent_dim,
                    n: self.synth_n,
                    sparsity: self.synth_sparsity,
                    noise_sd: self.synth_noise_sd,
                    seed: self.synth_seed,
                    ..SynthConfig::default()
                };
                rows(&synth_data(&synth).map_err(|e| CliError::config("synth-latent-dim", e))?.data)
            }
        };
        if self.n_val >= all.len() {
            return Err(CliError::config("n-val", format!("must be below the {} data rows", all.len())));
        }
        let (train_set, val) = all.split_at(all.len() - self.n_val);
        let input_dim = train_set[0].len();

        let mut table = Table::new(&[
            "method",
            "target_tau",
            "seed",
            "epoch",
            "tau",
            "lr",
            "train_objective",
            "train_elbo",
            "val_elbo",
            "grad_norm",
            "max_arrivals",
        ]);
        for (method, tau) in self.conditions() {
            for r in 0..self.repeats as u64 {
                let seed = self.seed.wrapping_add(r);
                let mut coords = vec![("method", method.to_string()), ("seed", seed.to_string())];
                if let Some(t) = tau {
                    coords.insert(1, ("tau", t.to_string()));
                }
                let cfg = self.train_config(method, tau, seed);
                let model = LinearPvae::init(input_dim, self.latent_dim, seed).map_err(at(label(&coords)))?;
                let res = train(model, train_set, val, &cfg).map_err(at(label(&coords)))?;
                for e in &res.trace {
                    table.push(vec![
                        method.name().into(),
                        tau.into(),
                        seed.into(),
                        e.epoch.into(),
                        e.tau.into(),
                        e.lr.into(),
                        e.train_objective.into(),
                        e.train_elbo.into(),
                        e.val_elbo.into(),
                        e.grad_norm.into(),
                        e.max_arrivals.into(),
                    ]);
                }
                if self.save_checkpoints {
                    let tag = match tau {
                        Some(t) => format!("{}-tau{t}-seed{seed}", method.name()),
                        None => format!("{}-seed{seed}", method.name()),
                    };
                    let mut name = self.out.output.as_os_str().to_owned();
                    name.push(format!(".{tag}.ckpt.json"));
                    save_checkpoint(&PathBuf::from(name), &res.model, seed)
                        .map_err(|e| CliError::config("output", e))?;
                }
            }
        }
        Ok(table)
    }
}
