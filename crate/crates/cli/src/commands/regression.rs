use std::path::PathBuf;

use clap::Args;
use poisson_relax::regression::{mae_cell, ArrivalBound, EstimatorSettings, GradTarget, MaeSweepConfig, TestFunction};
use poisson_relax::Method;
use serde::{Deserialize, Serialize};

use super::{label, Command};
use crate::config::{at, at_least, non_empty, non_negative, parse_name, positive, probability, resolve_output, CliError, Format, Output};
use crate::output::Table;

#[derive(Args, Serialize, Deserialize, Debug, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BenchRegressionArgs {
    /// Test functions: z, sqrt_z, z_sq, z15_minus_2z, cos_sq, sigmoid_z, zsq_over_lambda.
    #[arg(long, value_delimiter = ',', value_parser = parse_name::<TestFunction>)]
    pub functions: Option<Vec<TestFunction>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_name::<Method>)]
    pub methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    /// Draws per estimate.
    #[arg(long)]
    pub n_mc: Option<usize>,
    /// Independent estimates per condition.
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// total or distribution-only.
    #[arg(long, value_parser = parse_name::<GradTarget>)]
    pub target: Option<GradTarget>,
    /// support or rate-quantile.
    #[arg(long, value_parser = parse_name::<ArrivalBound>)]
    pub arrival_bound: Option<ArrivalBound>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_parser = parse_name::<Format>)]
    pub format: Option<Format>,
}

#[derive(Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct BenchRegression {
    functions: Vec<TestFunction>,
    methods: Vec<Method>,
    rates: Vec<f64>,
    taus: Vec<f64>,
    n_mc: usize,
    repeats: usize,
    alpha: f64,
    target: GradTarget,
    arrival_bound: ArrivalBound,
    seed: u64,
    #[serde(flatten)]
    out: Output,
}

impl Command for BenchRegression {
    const NAME: &'static str = "bench-regression";
    type Args = BenchRegressionArgs;

    fn resolve(a: BenchRegressionArgs) -> Result<Self, CliError> {
        let d = MaeSweepConfig::default();
        let rates = non_empty("rates", a.rates.unwrap_or(d.rates))?;
        positive("rates", &rates)?;
        let taus = non_empty("taus", a.taus.unwrap_or(d.taus))?;
        non_negative("taus", &taus)?;
        Ok(Self {
            functions: non_empty("functions", a.functions.unwrap_or(d.functions))?,
            methods: non_empty("methods", a.methods.unwrap_or(d.methods))?,
            rates,
            taus,
            n_mc: at_least("n-mc", a.n_mc.unwrap_or(d.n_mc), 1)?,
            repeats: at_least("repeats", a.repeats.unwrap_or(d.n_repeats), 1)?,
            alpha: probability("alpha", a.alpha.unwrap_or(d.settings.alpha))?,
            target: a.target.unwrap_or(d.settings.target),
            arrival_bound: a.arrival_bound.unwrap_or(d.settings.bound),
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

    /// One row per condition; `optimal` marks the temperature with the
    /// smallest MAE for each (function, method, rate), ties to the smaller τ.
    fn execute(&self) -> Result<Table, CliError> {
        let settings = EstimatorSettings { target: self.target, alpha: self.alpha, bound: self.arrival_bound };
        let mut table = Table::new(&[
            "function",
            "method",
            "rate",
            "tau",
            "exact",
            "mean_estimate",
            "mae",
            "se_mae",
            "n_mc",
            "n_repeats",
            "optimal",
        ]);
        for &f in &self.functions {
            for &method in &self.methods {
                for &rate in &self.rates {
                    let mut records = Vec::with_capacity(self.taus.len());
                    for &tau in &self.taus {
                        let here = label(&[
                            ("function", f.name().to_string()),
                            ("method", method.to_string()),
                            ("rate", rate.to_string()),
                            ("tau", tau.to_string()),
                        ]);
                        records.push(
                            mae_cell(f, method, rate, tau, self.n_mc, self.repeats, &settings, self.seed).map_err(at(here))?,
                        );
                    }
                    let best = records
                        .iter()
                        .enumerate()
                        .min_by(|(_, a), (_, b)| a.mae.total_cmp(&b.mae).then(a.tau.total_cmp(&b.tau)))
                        .map(|(i, _)| i);
                    for (i, r) in records.iter().enumerate() {
                        table.push(vec![
                            f.name().into(),
                            method.name().into(),
                            r.rate.into(),
                            r.tau.into(),
                            r.exact.into(),
                            r.mean_estimate.into(),
                            r.mae.into(),
                            r.se_mae.into(),
                            r.n_mc.into(),
                            r.n_repeats.into(),
                            (Some(i) == best).into(),
                        ]);
                    }
                }
            }
        }
        Ok(table)
    }
}
