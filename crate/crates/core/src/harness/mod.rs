//! Monte Carlo experiment engine.
//!
//! Each trial draws a fresh uniformly random k-sparse signal, a fresh
//! Gaussian design and fresh channel noise, all from sub-streams of
//! `derive_trial_stream(master_seed, trial_index)`. Trials are independent
//! tasks; results are reduced by counting or after ordering by trial index,
//! so outputs do not depend on the number of worker threads.
//!
//! The design is drawn row by row, so at a fixed trial index a probe with
//! more measurements extends the same design (common random numbers across
//! the m grid).

pub mod output;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{mle_decode_linear, quantize_then_decode, topk_correlation_decode};
use crate::error::{Error, Result};
use crate::model::{link_slope, measure, sign, ModelSpec, SensingMatrix, SparseSignal};
use crate::numerics::{derive_trial_stream, std_normal_quantile, RngStream};

const ROLE_SIGNAL: u64 = 0;
const ROLE_MATRIX: u64 = 1;
const ROLE_NOISE: u64 = 2;

/// Samples per independently seeded chunk in the moment checks.
const MOMENT_CHUNK: usize = 1 << 16;

pub const DEFAULT_THRESHOLD: f64 = 0.95;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoder {
    #[serde(rename = "topk")]
    TopK,
    Mle,
    Quantize,
}

impl Decoder {
    pub fn name(&self) -> &'static str {
        match self {
            Decoder::TopK => "topk",
            Decoder::Mle => "mle",
            Decoder::Quantize => "quantize",
        }
    }
}

impl fmt::Display for Decoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Decoder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topk" => Ok(Decoder::TopK),
            "mle" => Ok(Decoder::Mle),
            "quantize" | "quantize_then_topk" => Ok(Decoder::Quantize),
            other => Err(Error::InvalidConfig(format!("unknown decoder {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub model: ModelSpec,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub decoder: Decoder,
    pub master_seed: u64,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validated()?;
        if self.n == 0 || self.k == 0 || self.k > self.n {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= k <= n, got k = {}, n = {}",
                self.k, self.n
            )));
        }
        if self.m == 0 {
            return Err(Error::InvalidConfig("m must be positive".into()));
        }
        if matches!(self.decoder, Decoder::Mle | Decoder::Quantize) && !matches!(self.model, ModelSpec::Linear { .. }) {
            return Err(Error::InvalidConfig(format!(
                "decoder {} requires the linear model, got {}",
                self.decoder,
                self.model.name()
            )));
        }
        Ok(())
    }

    pub fn with_m(&self, m: usize) -> Self {
        Self { m, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    /// The decoded support equals the true support.
    pub success: bool,
    pub decoded_support: Vec<usize>,
    pub true_support: Vec<usize>,
    pub elapsed: Duration,
}

pub fn run_trial(config: &TrialConfig, trial_index: u64) -> Result<TrialOutcome> {
    config.validate()?;
    let start = Instant::now();
    let stream = derive_trial_stream(config.master_seed, trial_index);
    let x = SparseSignal::random(config.n, config.k, stream.substream(ROLE_SIGNAL))?;
    let a = SensingMatrix::gaussian(config.m, config.n, stream.substream(ROLE_MATRIX))?;
    let y = measure(&a, &x, config.model, stream.substream(ROLE_NOISE))?;
    let decoded = match config.decoder {
        Decoder::TopK => topk_correlation_decode(&a, &y, config.k)?,
        Decoder::Mle => mle_decode_linear(&a, &y, config.k)?,
        Decoder::Quantize => quantize_then_decode(&a, &y, config.k)?,
    };
    Ok(TrialOutcome {
        success: decoded.support == x.support(),
        decoded_support: decoded.support,
        true_support: x.support().to_vec(),
        elapsed: start.elapsed(),
    })
}

/// Wilson score interval for `successes / trials` at normal quantile `z`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Two-sided normal quantile for a confidence level, e.g. 0.95 -> 1.95996.
pub fn confidence_z(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    Ok(std_normal_quantile(0.5 + confidence / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SweepRow {
    fn new(m: usize, trials: usize, successes: usize, z: f64) -> Self {
        let (ci_low, ci_high) = wilson_interval(successes, trials, z);
        Self {
            m,
            trials,
            successes,
            success_rate: successes as f64 / trials as f64,
            ci_low,
            ci_high,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Config echo; its `m` is the first grid point.
    pub config: TrialConfig,
    pub confidence: f64,
    pub rows: Vec<SweepRow>,
}

/// Success count over trials `0..trials` at one `m`, run on the current rayon pool.
fn count_successes(config: &TrialConfig, trials: usize) -> Result<usize> {
    let outcomes: Vec<bool> = (0..trials as u64)
        .into_par_iter()
        .map(|t| run_trial(config, t).map(|o| o.success))
        .collect::<Result<_>>()?;
    Ok(outcomes.into_iter().filter(|&s| s).count())
}

pub fn probe(config: &TrialConfig, trials: usize, confidence: f64) -> Result<SweepRow> {
    config.validate()?;
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be positive".into()));
    }
    let z = confidence_z(confidence)?;
    Ok(SweepRow::new(config.m, trials, count_successes(config, trials)?, z))
}

/// Success rates over an ascending grid of measurement counts.
pub fn sweep(base: &TrialConfig, m_grid: &[usize], trials: usize, confidence: f64) -> Result<SweepResult> {
    if m_grid.is_empty() {
        return Err(Error::InvalidConfig("empty m grid".into()));
    }
    if m_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("m grid must be strictly ascending".into()));
    }
    let rows = m_grid
        .iter()
        .map(|&m| probe(&base.with_m(m), trials, confidence))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        config: base.with_m(m_grid[0]),
        confidence,
        rows,
    })
}

/// Parse `lo:hi:step` into an inclusive ascending grid.
pub fn parse_grid(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidConfig(format!("grid must look like lo:hi:step, got {text:?}"));
    let parts: Vec<usize> = text
        .split(':')
        .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [lo, hi, step] = parts[..] else {
        return Err(bad());
    };
    if lo == 0 || step == 0 || hi < lo {
        return Err(bad());
    }
    Ok((lo..=hi).step_by(step).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M95Result {
    pub config: TrialConfig,
    pub threshold: f64,
    pub confidence: f64,
    pub trials_per_probe: usize,
    pub m95: usize,
    /// The probe at `m95`, with its confidence interval.
    pub at_m95: SweepRow,
    /// Every probe in evaluation order.
    pub probes: Vec<SweepRow>,
}

/// Smallest m in `[m_lo, m_hi]` whose success rate reaches `threshold`, by bisection.
///
/// The bracket is checked first: the rate at `m_hi` must reach the threshold.
pub fn estimate_m95(
    base: &TrialConfig,
    trials: usize,
    m_lo: usize,
    m_hi: usize,
    threshold: f64,
    confidence: f64,
) -> Result<M95Result> {
    if m_lo == 0 || m_lo >= m_hi {
        return Err(Error::InvalidConfig(format!("need 1 <= m_lo < m_hi, got {m_lo}, {m_hi}")));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidConfig(format!("threshold must lie in (0, 1], got {threshold}")));
    }
    let mut probes = Vec::new();
    let mut run = |m: usize| -> Result<SweepRow> {
        let row = probe(&base.with_m(m), trials, confidence)?;
        probes.push(row);
        Ok(row)
    };

    let top = run(m_hi)?;
    if top.success_rate < threshold {
        return Err(Error::InvalidBracket {
            m_hi,
            rate: top.success_rate,
            threshold,
        });
    }
    let bottom = run(m_lo)?;
    let (mut lo, mut hi, mut at_hi) = (m_lo, m_hi, top);
    if bottom.success_rate >= threshold {
        hi = m_lo;
        at_hi = bottom;
    } else {
        // Invariant: rate(lo) < threshold <= rate(hi).
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let row = run(mid)?;
            if row.success_rate >= threshold {
                hi = mid;
                at_hi = row;
            } else {
                lo = mid;
            }
        }
    }
    Ok(M95Result {
        config: base.with_m(hi),
        threshold,
        confidence,
        trials_per_probe: trials,
        m95: hi,
        at_m95: at_hi,
        probes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub estimate: f64,
    pub target: f64,
    pub standard_error: f64,
    pub z_score: f64,
    pub samples: usize,
}

impl MomentCheck {
    fn from_sums(sum: f64, sum_sq: f64, samples: usize, target: f64) -> Self {
        let n = samples as f64;
        let estimate = sum / n;
        let var = ((sum_sq - n * estimate * estimate) / (n - 1.0).max(1.0)).max(0.0);
        let standard_error = (var / n).sqrt();
        let diff = estimate - target;
        let z_score = if standard_error > 0.0 {
            diff / standard_error
        } else if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        Self {
            estimate,
            target,
            standard_error,
            z_score,
            samples,
        }
    }
}

/// Sum and sum of squares of `f` over `samples` draws, in fixed-size chunks
/// seeded `(seed, chunk_index)` and reduced in chunk order.
fn chunked_moments(samples: usize, seed: u64, f: impl Fn(&mut crate::numerics::Generator) -> f64 + Sync) -> (f64, f64) {
    let chunks = samples.div_ceil(MOMENT_CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut g = RngStream::new(seed, c as u64).generator();
            let len = MOMENT_CHUNK.min(samples - c * MOMENT_CHUNK);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..len {
                let v = f(&mut g);
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    partial.into_iter().fold((0.0, 0.0), |(a, b), (s, s2)| (a + s, b + s2))
}

/// Monte Carlo estimate of `E[y_i A_ij]` under the one-bit channel.
///
/// With `in_support` the target is the one-bit link slope; otherwise column
/// `j` is independent of `y_i` and the target is 0.
pub fn moment_check_onebit(k: usize, sigma2: f64, samples: usize, in_support: bool, seed: u64) -> Result<MomentCheck> {
    let model = ModelSpec::one_bit(sigma2)?;
    if samples < 2 {
        return Err(Error::InvalidConfig("need at least 2 samples".into()));
    }
    let target = if in_support { link_slope(model, k, 1.0)? } else { 0.0 };
    let sd = sigma2.sqrt();
    let (s, s2) = chunked_moments(samples, seed, |g| {
        // Row entries on the support; entry 0 plays the role of A_ij.
        let first = g.next_gaussian();
        let mut t = first;
        for _ in 1..k {
            t += g.next_gaussian();
        }
        let y = sign(t + sd * g.next_gaussian());
        if in_support {
            y * first
        } else {
            y * g.next_gaussian()
        }
    });
    Ok(MomentCheck::from_sums(s, s2, samples, target))
}

/// Monte Carlo estimate of `E[exp(-(beta A_i^T x)^2 / 4)]` with `A_i^T x ~ N(0, k)`.
pub fn moment_check_logistic(k: usize, beta: f64, samples: usize, seed: u64) -> Result<MomentCheck> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidConfig(format!("beta must be finite and >= 0, got {beta}")));
    }
    if samples < 2 {
        return Err(Error::InvalidConfig("need at least 2 samples".into()));
    }
    let target = (2.0 / (2.0 + beta * beta * k as f64)).sqrt();
    let (s, s2) = chunked_moments(samples, seed, |g| {
        let t: f64 = (0..k).map(|_| g.next_gaussian()).sum();
        (-(beta * t).powi(2) / 4.0).exp()
    });
    Ok(MomentCheck::from_sums(s, s2, samples, target))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(model: ModelSpec, n: usize, k: usize, m: usize, decoder: Decoder) -> TrialConfig {
        TrialConfig {
            model,
            n,
            k,
            m,
            decoder,
            master_seed: 11,
        }
    }

    #[test]
    fn noiseless_mle_always_succeeds() {
        let c = config(ModelSpec::linear(0.0).unwrap(), 10, 2, 3, Decoder::Mle);
        for t in 0..50 {
            assert!(run_trial(&c, t).unwrap().success);
        }
    }

    #[test]
    fn single_sign_bit_cannot_identify() {
        let c = config(ModelSpec::one_bit(0.0).unwrap(), 64, 4, 1, Decoder::TopK);
        let wins = (0..500).filter(|&t| run_trial(&c, t).unwrap().success).count();
        assert!(wins < 25, "{wins}");
    }

    #[test]
    fn trial_is_deterministic() {
        let c = config(ModelSpec::logistic(2.0).unwrap(), 40, 3, 60, Decoder::TopK);
        let a = run_trial(&c, 9).unwrap();
        let b = run_trial(&c, 9).unwrap();
        assert_eq!((a.success, a.decoded_support), (b.success, b.decoded_support));
    }

    #[test]
    fn success_is_set_equality() {
        let c = config(ModelSpec::one_bit(0.5).unwrap(), 30, 3, 40, Decoder::TopK);
        for t in 0..40 {
            let o = run_trial(&c, t).unwrap();
            assert_eq!(o.success, o.decoded_support == o.true_support);
        }
    }

    #[test]
    fn config_validation() {
        let c = config(ModelSpec::one_bit(0.0).unwrap(), 10, 2, 5, Decoder::Mle);
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        let c = config(ModelSpec::logistic(1.0).unwrap(), 10, 2, 5, Decoder::Quantize);
        assert!(c.validate().is_err());
        let c = config(ModelSpec::linear(1.0).unwrap(), 10, 11, 5, Decoder::TopK);
        assert!(c.validate().is_err());
        let c = config(ModelSpec::linear(1.0).unwrap(), 10, 2, 0, Decoder::TopK);
        assert!(c.validate().is_err());
    }

    #[test]
    fn mle_budget_is_reported() {
        let c = config(ModelSpec::linear(0.0).unwrap(), 200, 4, 5, Decoder::Mle);
        let err = run_trial(&c, 0).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn wilson_known_values() {
        // 8/10 at 95%: (0.4902, 0.9433), standard reference values.
        let (lo, hi) = wilson_interval(8, 10, confidence_z(0.95).unwrap());
        assert!((lo - 0.4902).abs() < 1e-4 && (hi - 0.9433).abs() < 1e-4, "{lo} {hi}");
        let (lo, hi) = wilson_interval(0, 20, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.2);
        let (lo, hi) = wilson_interval(20, 20, 1.96);
        assert!(lo > 0.8 && hi == 1.0);
    }

    #[test]
    fn wilson_exact_coverage() {
        // Coverage summed over the Binomial(100, 1/2) distribution.
        let z = confidence_z(0.95).unwrap();
        let mut log_fact = vec![0.0f64; 101];
        for i in 1..=100 {
            log_fact[i] = log_fact[i - 1] + (i as f64).ln();
        }
        let coverage: f64 = (0..=100usize)
            .filter(|&s| {
                let (lo, hi) = wilson_interval(s, 100, z);
                lo <= 0.5 && 0.5 <= hi
            })
            .map(|s| (log_fact[100] - log_fact[s] - log_fact[100 - s] - 100.0 * 2f64.ln()).exp())
            .sum();
        assert!((coverage - 0.943_112_066_359).abs() < 1e-9, "{coverage}");
    }

    #[test]
    fn wilson_coverage_meta_test() {
        // A rigged decoder that succeeds with probability 1/2.
        let z = confidence_z(0.95).unwrap();
        let mut g = RngStream::new(1, 0).generator();
        let covered = (0..500)
            .filter(|_| {
                let s = (0..100).filter(|_| g.next_f64() < 0.5).count();
                let (lo, hi) = wilson_interval(s, 100, z);
                lo <= 0.5 && 0.5 <= hi
            })
            .count();
        assert!(covered as f64 / 500.0 >= 0.93, "{covered}");
    }

    #[test]
    fn single_point_sweep_is_repeated_trials() {
        let c = config(ModelSpec::one_bit(1.0).unwrap(), 64, 3, 80, Decoder::TopK);
        let res = sweep(&c, &[80], 60, DEFAULT_CONFIDENCE).unwrap();
        let direct = (0..60).filter(|&t| run_trial(&c, t).unwrap().success).count();
        assert_eq!(res.rows.len(), 1);
        assert_eq!(res.rows[0].successes, direct);
        assert!(res.rows[0].ci_low <= res.rows[0].success_rate && res.rows[0].success_rate <= res.rows[0].ci_high);
    }

    #[test]
    fn quantized_linear_sweep_equals_onebit_sweep() {
        let grid = [40, 120, 200, 280];
        let quantized = config(ModelSpec::linear(1.0).unwrap(), 128, 4, 40, Decoder::Quantize);
        let onebit = config(ModelSpec::one_bit(1.0).unwrap(), 128, 4, 40, Decoder::TopK);
        let a = sweep(&quantized, &grid, 50, DEFAULT_CONFIDENCE).unwrap();
        let b = sweep(&onebit, &grid, 50, DEFAULT_CONFIDENCE).unwrap();
        assert_eq!(a.rows, b.rows);
        assert!(a.rows.iter().any(|r| r.successes > 0 && r.successes < 50));
    }

    #[test]
    fn sweep_rejects_unsorted_grid() {
        let c = config(ModelSpec::one_bit(1.0).unwrap(), 64, 3, 80, Decoder::TopK);
        assert!(sweep(&c, &[80, 40], 10, 0.95).is_err());
        assert!(sweep(&c, &[], 10, 0.95).is_err());
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("10:50:20").unwrap(), vec![10, 30, 50]);
        assert_eq!(parse_grid("5:5:1").unwrap(), vec![5]);
        assert!(parse_grid("0:5:1").is_err());
        assert!(parse_grid("10:5:1").is_err());
        assert!(parse_grid("1:5").is_err());
        assert!(parse_grid("a:b:c").is_err());
    }

    #[test]
    fn m95_easy_bracket_returns_lower_end() {
        let c = config(ModelSpec::linear(0.0).unwrap(), 8, 1, 5, Decoder::Mle);
        let r = estimate_m95(&c, 20, 2, 10, 0.95, 0.95).unwrap();
        assert_eq!(r.m95, 2);
    }

    #[test]
    fn m95_invalid_bracket() {
        let c = config(ModelSpec::one_bit(0.0).unwrap(), 64, 4, 1, Decoder::TopK);
        assert!(matches!(
            estimate_m95(&c, 50, 1, 2, 0.95, 0.95),
            Err(Error::InvalidBracket { .. })
        ));
        assert!(estimate_m95(&c, 50, 5, 5, 0.95, 0.95).is_err());
    }

    #[test]
    fn m95_bisection_finds_threshold() {
        let c = config(ModelSpec::one_bit(0.0).unwrap(), 128, 3, 1, Decoder::TopK);
        let r = estimate_m95(&c, 100, 5, 400, 0.95, 0.95).unwrap();
        assert!(r.at_m95.success_rate >= 0.95);
        assert_eq!(r.at_m95.m, r.m95);
        let below = probe(&c.with_m(r.m95 - 1), 100, 0.95).unwrap();
        assert!(below.success_rate < 0.95);
    }

    #[test]
    fn onebit_moment_targets() {
        let on = moment_check_onebit(10, 1.0, 1_000_000, true, 1).unwrap();
        assert!((on.target - 0.24057).abs() < 1e-5);
        assert!(on.z_score.abs() < 3.0, "{on:?}");
        let off = moment_check_onebit(10, 1.0, 1_000_000, false, 2).unwrap();
        assert_eq!(off.target, 0.0);
        assert!(off.z_score.abs() < 3.0, "{off:?}");
        let mut prev = f64::INFINITY;
        for s2 in [0.0, 1.0, 10.0, 100.0, 1e4] {
            let t = link_slope(ModelSpec::one_bit(s2).unwrap(), 10, 1.0).unwrap();
            assert!(t < prev);
            prev = t;
        }
    }

    #[test]
    fn logistic_moment_targets() {
        let r = moment_check_logistic(4, 1.0, 1_000_000, 3).unwrap();
        assert!((r.target - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(r.z_score.abs() < 3.0, "{r:?}");
        let flat = moment_check_logistic(4, 0.0, 1000, 3).unwrap();
        assert_eq!((flat.estimate, flat.target, flat.z_score), (1.0, 1.0, 0.0));
        let a = moment_check_logistic(4, 0.5, 10, 0).unwrap().target;
        let b = moment_check_logistic(4, 1.5, 10, 0).unwrap().target;
        assert!(b < a);
    }

    #[test]
    fn moment_checks_independent_of_pool_size() {
        let pool = |w| rayon::ThreadPoolBuilder::new().num_threads(w).build().unwrap();
        let a = pool(1).install(|| moment_check_onebit(5, 2.0, 300_000, true, 8).unwrap());
        let b = pool(4).install(|| moment_check_onebit(5, 2.0, 300_000, true, 8).unwrap());
        assert_eq!(a, b);
    }
}
