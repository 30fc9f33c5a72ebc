//! Scalar math and reproducible randomness shared by the rest of the crate.
//!
//! Every random quantity in an experiment (signal, sensing matrix, noise)
//! comes from an [`RngStream`], a `(master_seed, stream_id)` pair. The
//! generator behind a stream is SplitMix64 run in counter mode: the stream
//! key is a mixed function of both descriptor fields, and output `i` is
//! `mix64(key + (i + 1) * GAMMA)`. Nothing depends on platform, thread
//! count or library versions, so a stream always yields the same sequence.
//!
//! Gaussian variates use the Marsaglia polar method; the normal CDF is
//! `0.5 * erfc(-x / sqrt 2)` with `erfc` from `libm` (a port of the musl
//! implementation, accurate to about 1 ulp).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// SplitMix64 increment (odd, `2^64 / phi`).
const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
/// Multipliers of the SplitMix64 finalizer (Stafford "Mix13").
const MIX_A: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_B: u64 = 0x94D0_49BB_1331_11EB;
/// Odd constant used to spread stream ids before keying.
const STREAM_SPREAD: u64 = 0xD1B5_4A32_D192_ED03;

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_A);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_B);
    z ^ (z >> 31)
}

/// Descriptor of one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// A child stream for one role inside a trial (signal, matrix, noise...).
    pub fn substream(&self, role: u64) -> RngStream {
        let id = mix64(self.stream_id ^ mix64(role.wrapping_add(1).wrapping_mul(STREAM_SPREAD)));
        RngStream::new(self.master_seed, id)
    }

    pub fn generator(&self) -> Generator {
        let key = mix64(mix64(self.master_seed) ^ self.stream_id.wrapping_mul(STREAM_SPREAD));
        Generator {
            key,
            counter: 0,
            spare: None,
        }
    }
}

/// Stream for trial `trial_index` of an experiment seeded with `master_seed`.
///
/// The mapping is injective: the descriptor stores both values verbatim.
pub fn derive_trial_stream(master_seed: u64, trial_index: u64) -> RngStream {
    RngStream::new(master_seed, trial_index)
}

/// Counter-mode SplitMix64 with a cached polar-method spare.
#[derive(Debug, Clone)]
pub struct Generator {
    key: u64,
    counter: u64,
    spare: Option<f64>,
}

impl Generator {
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)` (Lemire's multiply-shift with rejection).
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let product = (self.next_u64() as u128) * (bound as u128);
            if (product as u64) >= threshold {
                return (product >> 64) as u64;
            }
        }
    }

    /// Standard normal variate (Marsaglia polar method).
    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * factor);
                return u * factor;
            }
        }
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_gaussian();
        }
    }
}

pub fn sample_gaussian(stream: RngStream, count: usize) -> Vec<f64> {
    let mut generator = stream.generator();
    let mut out = vec![0.0; count];
    generator.fill_gaussian(&mut out);
    out
}

/// Binary entropy in bits, with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("binary entropy of {p}")));
    }
    Ok(h2(p))
}

#[inline]
pub(crate) fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse of [`std_normal_cdf`] on `(0, 1)`, by bisection to full precision.
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if std_normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
