//! Mean and variance factors of the arrival-time relaxation.
//!
//! For a rate-`λ` process, `E[z] = λ c(τ)` and `Var(z) = λ v(τ)` with
//! `c(τ) = τ ∫_{-∞}^{1/τ} f(u) du` and `v(τ) = τ ∫_{-∞}^{1/τ} f(u)² du`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relax::{sigmoid, SoftIndicator};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentFactors {
    /// Mean factor.
    pub c: f64,
    /// Variance factor.
    pub v: f64,
    pub fano: f64,
}

impl MomentFactors {
    fn new(c: f64, v: f64) -> Self {
        Self { c, v, fano: v / c }
    }

    pub const EXACT: MomentFactors = MomentFactors { c: 1.0, v: 1.0, fano: 1.0 };
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("temperature", tau))
    }
}

/// `ln(1 + e^x)` without overflow for large `x`.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn moment_factors_sigmoid(tau: f64) -> Result<MomentFactors> {
    check_tau(tau)?;
    let x = 1.0 / tau;
    let sp = softplus(x);
    Ok(MomentFactors::new(tau * sp, tau * (sp - sigmoid(x))))
}

pub fn moment_factors_cubic(tau: f64) -> Result<MomentFactors> {
    check_tau(tau)?;
    if tau <= 1.0 {
        return Ok(MomentFactors::new(1.0, 1.0 - 9.0 * tau / 35.0));
    }
    // Upper limit 1/τ falls inside the ramp; β is the ramp coordinate there.
    let b = (1.0 + tau) / (2.0 * tau);
    let c = tau * b.powi(3) * (2.0 - b);
    let v = tau * (18.0 * b.powi(5) / 5.0 - 4.0 * b.powi(6) + 8.0 * b.powi(7) / 7.0);
    Ok(MomentFactors::new(c, v))
}

/// Closed-form factors for any indicator; the hard step is exact Poisson.
pub fn moment_factors(ind: SoftIndicator, tau: f64) -> Result<MomentFactors> {
    match ind {
        SoftIndicator::Hard => {
            check_tau(tau)?;
            Ok(MomentFactors::EXACT)
        }
        SoftIndicator::Sigmoid => moment_factors_sigmoid(tau),
        SoftIndicator::Cubic => moment_factors_cubic(tau),
    }
}

const MAX_EVALUATIONS: usize = 2_000_000;
const MAX_DEPTH: u32 = 60;

/// Factors by adaptive Simpson quadrature to absolute tolerance `tol` on
/// `c` and `v`.
pub fn moment_factors_quadrature(ind: SoftIndicator, tau: f64, tol: f64) -> Result<MomentFactors> {
    check_tau(tau)?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::domain("tolerance", tol));
    }
    let upper = 1.0 / tau;
    let (lower, mut breaks) = match ind {
        SoftIndicator::Hard => (0.0, vec![]),
        SoftIndicator::Cubic => (-1.0, vec![1.0]),
        SoftIndicator::Sigmoid => (-40.0 - upper, vec![0.0]),
    };
    breaks.retain(|&b| b > lower && b < upper);
    let mut knots = vec![lower];
    knots.extend(breaks);
    knots.push(upper);
    if lower >= upper {
        knots = vec![upper, upper];
    }

    let abs_tol = tol / tau;
    let pieces = (knots.len() - 1) as f64;
    let mut budget = MAX_EVALUATIONS;
    let mut c = 0.0;
    let mut v = 0.0;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        c += integrate(|u| integrand(ind, u), a, b, abs_tol / pieces, &mut budget)?;
        v += integrate(|u| integrand(ind, u).powi(2), a, b, abs_tol / pieces, &mut budget)?;
    }
    Ok(MomentFactors::new(tau * c, tau * v))
}

/// The indicator, taken right-continuous at the hard step's jump so the
/// piece `[0, 1/τ]` has no discontinuity at its left end.
fn integrand(ind: SoftIndicator, u: f64) -> f64 {
    match ind {
        SoftIndicator::Hard if u == 0.0 => 1.0,
        _ => ind.value(u),
    }
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, budget: &mut usize) -> Result<f64> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, budget)
}

#[allow(clippy::too_many_arguments)]
fn simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    budget: &mut usize,
) -> Result<f64> {
    if *budget < 2 {
        return Err(Error::Numerical("quadrature exceeded its evaluation budget".into()));
    }
    *budget -= 2;
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Numerical(format!("quadrature did not converge on [{a}, {b}]")));
    }
    Ok(simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, budget)?
        + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, budget)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn round2(x: f64) -> f64 {
        (x * 100.0).round() / 100.0
    }

    #[test]
    fn sigmoid_table() {
        for (tau, c, v, f) in [(0.1, 1.00, 0.90, 0.90), (0.5, 1.06, 0.62, 0.59), (1.0, 1.31, 0.58, 0.44)] {
            let m = moment_factors_sigmoid(tau).unwrap();
            assert_eq!((round2(m.c), round2(m.v), round2(m.fano)), (c, v, f), "tau={tau}");
        }
    }

    #[test]
    fn cubic_table() {
        for (tau, c, v, f) in [(0.1, 1.00, 0.97, 0.97), (0.5, 1.00, 0.87, 0.87), (1.0, 1.00, 0.74, 0.74)] {
            let m = moment_factors_cubic(tau).unwrap();
            assert_eq!((round2(m.c), round2(m.v), round2(m.fano)), (c, v, f), "tau={tau}");
        }
        let m = moment_factors_cubic(1.0).unwrap();
        assert_eq!(m.c, 1.0);
        assert_abs_diff_eq!(m.v, 26.0 / 35.0, epsilon = 1e-15);
    }

    #[test]
    fn cubic_large_temperature() {
        let m = moment_factors_cubic(2.0).unwrap();
        assert_abs_diff_eq!(m.c, 1.0546875, epsilon = 1e-12);
        assert_abs_diff_eq!(m.v, 0.58987, epsilon = 1e-5);
        let q = moment_factors_quadrature(SoftIndicator::Cubic, 2.0, 1e-10).unwrap();
        assert_abs_diff_eq!(m.c, q.c, epsilon = 1e-8);
        assert_abs_diff_eq!(m.v, q.v, epsilon = 1e-8);
    }

    #[test]
    fn cubic_continuous_at_one() {
        let below = moment_factors_cubic(1.0).unwrap();
        let above = moment_factors_cubic(1.0 + 1e-12).unwrap();
        assert_abs_diff_eq!(below.c, above.c, epsilon = 1e-10);
        assert_abs_diff_eq!(below.v, above.v, epsilon = 1e-10);
    }

    #[test]
    fn small_temperature_does_not_overflow() {
        let m = moment_factors_sigmoid(1e-4).unwrap();
        assert!(m.c.is_finite() && (m.c - 1.0).abs() < 1e-3);
        assert!((m.v - 1.0).abs() < 1e-3);
    }

    #[test]
    fn quadrature_examples() {
        let q = moment_factors_quadrature(SoftIndicator::Cubic, 0.5, 1e-8).unwrap();
        let c = moment_factors_cubic(0.5).unwrap();
        assert_abs_diff_eq!(q.c, c.c, epsilon = 1e-8);
        assert_abs_diff_eq!(q.v, c.v, epsilon = 1e-8);

        let q = moment_factors_quadrature(SoftIndicator::Sigmoid, 0.1, 1e-8).unwrap();
        let s = moment_factors_sigmoid(0.1).unwrap();
        assert_abs_diff_eq!(q.c, s.c, epsilon = 1e-8);
        assert_abs_diff_eq!(q.v, s.v, epsilon = 1e-8);

        for tau in [0.01, 0.3, 1.0, 4.0] {
            let h = moment_factors_quadrature(SoftIndicator::Hard, tau, 1e-10).unwrap();
            assert_abs_diff_eq!(h.c, 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(h.v, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn rejects_nonpositive_temperature() {
        assert!(moment_factors_sigmoid(0.0).is_err());
        assert!(moment_factors_cubic(-1.0).is_err());
        assert!(moment_factors_quadrature(SoftIndicator::Cubic, f64::NAN, 1e-8).is_err());
    }
}
