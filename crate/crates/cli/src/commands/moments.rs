use std::path::PathBuf;

use clap::Args;
use poisson_relax::moments::{moment_factors, moment_factors_quadrature};
use poisson_relax::relax::SoftIndicator;
use serde::{Deserialize, Serialize};

use super::{label, Command};
use crate::config::{at, non_empty, parse_name, positive, resolve_output, CliError, Format, Output};
use crate::output::Table;

const QUADRATURE_TOL: f64 = 1e-10;

#[derive(Args, Serialize, Deserialize, Debug, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MomentsArgs {
    /// Temperatures, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub tau_grid: Option<Vec<f64>>,
    /// Soft indicators: sigmoid, cubic, hard.
    #[arg(long, value_delimiter = ',', value_parser = parse_name::<SoftIndicator>)]
    pub indicators: Option<Vec<SoftIndicator>>,
    /// Integrate numerically instead of using the closed forms.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub quadrature: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_parser = parse_name::<Format>)]
    pub format: Option<Format>,
}

#[derive(Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
pub struct Moments {
    tau_grid: Vec<f64>,
    indicators: Vec<SoftIndicator>,
    quadrature: bool,
    seed: u64,
    #[serde(flatten)]
    out: Output,
}

impl Command for Moments {
    const NAME: &'static str = "moments";
    type Args = MomentsArgs;

    fn resolve(a: MomentsArgs) -> Result<Self, CliError> {
        let tau_grid = non_empty("tau-grid", a.tau_grid.unwrap_or_else(|| vec![0.1, 0.5, 1.0]))?;
        positive("tau-grid", &tau_grid)?;
        let indicators =
            non_empty("indicators", a.indicators.unwrap_or_else(|| vec![SoftIndicator::Sigmoid, SoftIndicator::Cubic]))?;
        Ok(Self {
            tau_grid,
            indicators,
            quadrature: a.quadrature.unwrap_or(false),
            seed: a.seed.unwrap_or(0),
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
        let mut table = Table::new(&["indicator", "tau", "c", "v", "fano"]);
        for &ind in &self.indicators {
            for &tau in &self.tau_grid {
                let here = || label(&[("indicator", ind.to_string()), ("tau", tau.to_string())]);
                let f = if self.quadrature {
                    moment_factors_quadrature(ind, tau, QUADRATURE_TOL).map_err(at(here()))?
                } else {
                    moment_factors(ind, tau).map_err(at(here()))?
                };
                table.push(vec![ind.name().into(), tau.into(), f.c.into(), f.v.into(), f.fano.into()]);
            }
        }
        Ok(table)
    }
}
