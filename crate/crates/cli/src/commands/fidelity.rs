use std::path::PathBuf;

use clap::Args;
use poisson_relax::fidelity::{fidelity_cell, FidelityConfig};
use poisson_relax::Method;
use serde::{Deserialize, Serialize};

use super::{label, Command};
use crate::config::{
    at, at_least, non_empty, non_negative, parse_name, positive, probability, resolve_output, CliError, Format, Output,
};
use crate::output::Table;

#[derive(Args, Serialize, Deserialize, Debug, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FidelityArgs {
    /// Samplers: exact, eat-sigmoid, eat-cubic, gsm, score.
    #[arg(long, value_delimiter = ',', value_parser = parse_name::<Method>)]
    pub methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    /// Draws per trial.
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Tail mass for the arrival count / category truncation.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_parser = parse_name::<Format>)]
    pub format: Option<Format>,
}

#[derive(Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct Fidelity {
    methods: Vec<Method>,
    rates: Vec<f64>,
    taus: Vec<f64>,
    n_samples: usize,
    trials: usize,
    alpha: f64,
    seed: u64,
    #[serde(flatten)]
    out: Output,
}

impl Command for Fidelity {
    const NAME: &'static str = "fidelity";
    type Args = FidelityArgs;

    fn resolve(a: FidelityArgs) -> Result<Self, CliError> {
        let d = FidelityConfig::default();
        let rates = non_empty("rates", a.rates.unwrap_or(d.rates))?;
        positive("rates", &rates)?;
        let taus = non_empty("taus", a.taus.unwrap_or(d.taus))?;
        non_negative("taus", &taus)?;
        Ok(Self {
            methods: non_empty("methods", a.methods.unwrap_or(d.methods))?,
            rates,
            taus,
            n_samples: at_least("n-samples", a.n_samples.unwrap_or(d.n_samples), 2)?,
            trials: at_least("trials", a.trials.unwrap_or(d.n_trials), 1)?,
            alpha: probability("alpha", a.alpha.unwrap_or(d.alpha))?,
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
        let cfg = FidelityConfig {
            methods: self.methods.clone(),
            rates: self.rates.clone(),
            taus: self.taus.clone(),
            n_samples: self.n_samples,
            n_trials: self.trials,
            alpha: self.alpha,
            seed: self.seed,
        };
        let mut table = Table::new(&[
            "method",
            "rate",
            "tau",
            "arrival_count",
            "n_samples",
            "n_trials",
            "mean_ratio",
            "se_mean_ratio",
            "var_ratio",
            "se_var_ratio",
            "w1",
            "se_w1",
            "w2",
        ]);
        for &method in &self.methods {
            for &rate in &self.rates {
                for &tau in &self.taus {
                    let here = label(&[("method", method.to_string()), ("rate", rate.to_string()), ("tau", tau.to_string())]);
                    let r = fidelity_cell(method, rate, tau, &cfg).map_err(at(here))?;
                    table.push(vec![
                        method.name().into(),
                        r.rate.into(),
                        r.tau.into(),
                        r.arrival_count.into(),
                        r.n_samples.into(),
                        r.n_trials.into(),
                        r.mean_ratio.into(),
                        r.se_mean_ratio.into(),
                        r.var_ratio.into(),
                        r.se_var_ratio.into(),
                        r.w1.into(),
                        r.se_w1.into(),
                        r.w2.into(),
                    ]);
                }
            }
        }
        Ok(table)
    }
}
