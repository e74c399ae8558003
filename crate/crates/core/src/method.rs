use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relax::{eat_draw, gsm_draw, RelaxedSample, SoftIndicator};
use crate::sampling::{adaptive_upperbound, count_arrivals, RngStream};

/// Gradient estimator / sampler family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// No sampling: closed-form expectation and gradient.
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "eat-sigmoid")]
    EatSigmoid,
    #[serde(rename = "eat-cubic")]
    EatCubic,
    #[serde(rename = "gsm")]
    Gsm,
    /// Exact Poisson draws with the score-function gradient.
    #[serde(rename = "score")]
    Score,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Exact, Method::EatSigmoid, Method::EatCubic, Method::Gsm, Method::Score];

    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::EatSigmoid => "eat-sigmoid",
            Method::EatCubic => "eat-cubic",
            Method::Gsm => "gsm",
            Method::Score => "score",
        }
    }

    /// True for the reparameterized (pathwise) relaxations.
    pub fn is_pathwise(self) -> bool {
        matches!(self, Method::EatSigmoid | Method::EatCubic | Method::Gsm)
    }

    pub fn indicator(self) -> Option<SoftIndicator> {
        match self {
            Method::EatSigmoid => Some(SoftIndicator::Sigmoid),
            Method::EatCubic => Some(SoftIndicator::Cubic),
            _ => None,
        }
    }

    pub(crate) fn code(self) -> u64 {
        self as u64 + 1
    }

    /// One draw at `rate` with `m` arrivals / categories. Exact and score
    /// return an exact Poisson count with `dlog = 0`.
    #[inline]
    pub(crate) fn draw(self, rate: f64, m: usize, tau: f64, rng: &mut RngStream, buf: &mut Vec<f64>) -> RelaxedSample {
        match self {
            Method::EatSigmoid => eat_draw(rate, m, tau, SoftIndicator::Sigmoid, rng),
            Method::EatCubic => eat_draw(rate, m, tau, SoftIndicator::Cubic, rng),
            Method::Gsm => gsm_draw(rate, m, tau, rng, buf),
            Method::Exact | Method::Score => {
                RelaxedSample { value: count_arrivals(rate, rng) as f64, dlog: 0.0, arrival_count: m }
            }
        }
    }

    /// Arrival count covering the indicator's support: the `1 - alpha`
    /// quantile of the number of arrivals before the time where the indicator
    /// falls below `alpha` (`1 + τ` for the cubic, `1 + τ ln(1/alpha)` for
    /// the sigmoid). GSM and the exact samplers use the plain rate quantile.
    pub fn support_arrivals(self, rate: f64, tau: f64, alpha: f64) -> Result<usize> {
        let horizon = match self {
            Method::EatCubic => 1.0 + tau,
            Method::EatSigmoid => 1.0 + tau * (1.0 / alpha).ln(),
            _ => 1.0,
        };
        adaptive_upperbound(rate * horizon, alpha)
    }

    /// Checked single draw.
    pub fn sample(self, rate: f64, m: usize, tau: f64, rng: &mut RngStream) -> Result<RelaxedSample> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::domain("rate", rate));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::domain("temperature", tau));
        }
        if m == 0 {
            return Err(Error::InvalidArgument("arrival count must be at least 1".into()));
        }
        Ok(self.draw(rate, m, tau, rng, &mut Vec::new()))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert_eq!("EAT_cubic".parse::<Method>().unwrap(), Method::EatCubic);
        assert!("reinforce".parse::<Method>().is_err());
    }
}
