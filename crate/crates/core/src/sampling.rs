//! Seedable random streams and exact Poisson machinery.
//!
//! Every stochastic routine in the crate draws from an explicit [`RngStream`].
//! A stream is a ChaCha8 generator keyed by a 64-bit seed and a 64-bit stream
//! id; the ChaCha keystream is specified bit-for-bit, so a given
//! `(seed, stream)` pair produces the same uniforms on every platform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::error::{Error, Result};

/// Default tail probability for [`adaptive_upperbound`].
pub const DEFAULT_ALPHA: f64 = 1e-3;

/// Above this rate exact draws use a rejection sampler instead of counting.
const LARGE_RATE: f64 = 1.0e4;

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

/// A deterministic random stream.
///
/// Uniforms are built from the top 53 bits of each 64-bit ChaCha8 output word.
/// Child streams are derived with [`RngStream::derive`]; the child id is a
/// SplitMix64 hash of the parent's stream id and the tag, so siblings and
/// descendants get distinct ChaCha stream ids under the same seed.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Fresh stream for a sub-task. Does not advance `self`.
    pub fn derive(&self, tag: u64) -> RngStream {
        let id = splitmix64(self.stream ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D)));
        RngStream::with_stream(self.seed, id)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on (0, 1].
    pub fn uniform_open_closed(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * TWO_POW_M53
    }

    /// Uniform on (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * TWO_POW_M53
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Gamma draw with the given shape and *rate* (mean = shape / rate).
    pub fn gamma(&mut self, shape: f64, rate: f64) -> Result<f64> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::domain("gamma shape", shape));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::domain("gamma rate", rate));
        }
        let dist = Gamma::new(shape, 1.0 / rate).map_err(|_| Error::domain("gamma shape", shape))?;
        Ok(dist.sample(&mut self.rng))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Inverse-CDF exponential draw `-ln(u) / rate`.
pub fn sample_exponential(rate: f64, u: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::domain("rate", rate));
    }
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::domain("uniform draw", u));
    }
    Ok(-u.ln() / rate)
}

/// Standard Gumbel draw `-ln(-ln u)`.
pub fn sample_gumbel(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain("uniform draw", u));
    }
    Ok(-(-u.ln()).ln())
}

/// `ln(m!)`.
pub fn ln_factorial(m: u64) -> f64 {
    statrs::function::factorial::ln_factorial(m)
}

/// Log Poisson PMF `m ln(rate) - rate - ln(m!)`.
pub fn poisson_pmf_log(m: u64, rate: f64) -> f64 {
    if m == 0 {
        return -rate;
    }
    m as f64 * rate.ln() - rate - ln_factorial(m)
}

/// Smallest `m` with `P[N <= m] >= q` for `N ~ Poisson(rate)`.
///
/// Walks the PMF upward with `p_{m+1} = p_m * rate / (m + 1)`. For rates
/// above 700, `e^{-rate}` underflows, so the walk starts 25 standard
/// deviations below the mean, where the PMF is still representable and the
/// mass skipped is below 1e-130.
pub fn poisson_inverse_cdf(rate: f64, q: f64) -> Result<u64> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::domain("rate", rate));
    }
    if !(0.0..1.0).contains(&q) {
        return Err(Error::domain("probability", q));
    }
    if q == 0.0 {
        return Ok(0);
    }
    let start = if rate > 700.0 {
        (rate - 25.0 * rate.sqrt()).floor().max(0.0) as u64
    } else {
        0
    };
    let mut m = start;
    let mut p = poisson_pmf_log(m, rate).exp();
    let mut cdf = 0.0;
    // Rounding can leave the running sum a few ulps short of q near 1.
    let limit = (rate + 60.0 * rate.sqrt() + 100.0) as u64;
    loop {
        cdf += p;
        if cdf >= q || m >= limit {
            return Ok(m);
        }
        p *= rate / (m + 1) as f64;
        m += 1;
    }
}

/// Arrival count / truncation level for a batch whose largest rate is
/// `max_rate`: the `1 - alpha` Poisson quantile, floored at 1.
pub fn adaptive_upperbound(max_rate: f64, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("alpha", alpha));
    }
    let m = poisson_inverse_cdf(max_rate, 1.0 - alpha)?;
    Ok((m as usize).max(1))
}

/// Exact Poisson draw by counting unit-interval arrivals of a rate-`rate`
/// process (rates above 10⁴ use a rejection sampler).
pub fn sample_poisson_exact(rate: f64, rng: &mut RngStream) -> Result<u64> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::domain("rate", rate));
    }
    Ok(count_arrivals(rate, rng))
}

pub(crate) fn count_arrivals(rate: f64, rng: &mut RngStream) -> u64 {
    // Counting costs O(rate) draws; hand large rates to a rejection sampler.
    if rate > LARGE_RATE {
        return match Poisson::new(rate) {
            Ok(d) => d.sample(&mut rng.rng) as u64,
            Err(_) => rate.round() as u64,
        };
    }
    // Unit-rate arrival times compared against `rate` avoids a division per draw.
    let mut t = 0.0;
    let mut n = 0u64;
    loop {
        t -= rng.uniform_open_closed().ln();
        if t > rate {
            return n;
        }
        n += 1;
    }
}
