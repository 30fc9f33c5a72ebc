//! Closed-form sample-complexity thresholds.
//!
//! All logarithms are base 2. Most bounds are ratios of logarithms, so their
//! values do not depend on the base; where a bound mixes an entropy with a
//! log count (the Fano correction) both are in bits.
//!
//! Lower bounds that come out negative are clamped to zero and flagged
//! `vacuous`. Maximizations over the Hamming-distance parameter `l` are exact
//! scans over the integers `1..=k`; ties go to the smaller `l`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{link_slope, ModelSpec};
use crate::numerics::h2;

/// A threshold on the number of measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub value: f64,
    /// The unclamped expression was negative.
    pub vacuous: bool,
}

impl Bound {
    fn clamped(raw: f64) -> Self {
        if raw < 0.0 {
            Bound {
                value: 0.0,
                vacuous: true,
            }
        } else {
            Bound {
                value: raw,
                vacuous: false,
            }
        }
    }
}

/// A threshold obtained by maximizing over `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxOverL {
    pub value: f64,
    pub argmax_l: usize,
    pub vacuous: bool,
}

fn check_nk(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::Domain(format!("need 1 <= k < n, got k = {k}, n = {n}")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Domain(format!("delta must lie in [0, 1), got {delta}")));
    }
    Ok(())
}

fn positive_sigma2(sigma2: f64, what: &'static str) -> Result<f64> {
    if sigma2 == 0.0 {
        return Err(Error::Noiseless(what));
    }
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::Domain(format!("sigma2 must be finite and > 0, got {sigma2}")));
    }
    Ok(sigma2)
}

fn log2(x: usize) -> f64 {
    (x as f64).log2()
}

/// The Fano penalty `h2(delta) + delta k log n`, in bits.
fn fano_penalty(n: usize, k: usize, delta: f64) -> f64 {
    h2(delta) + delta * k as f64 * log2(n)
}

/// `1 - (h2(delta) + delta k log n) / (k log(n/k))`, clamped at 0.
pub fn fano_correction(n: usize, k: usize, delta: f64) -> Result<f64> {
    Ok(fano_correction_unclamped(n, k, delta)?.max(0.0))
}

fn fano_correction_unclamped(n: usize, k: usize, delta: f64) -> Result<f64> {
    check_nk(n, k)?;
    check_delta(delta)?;
    Ok(1.0 - fano_penalty(n, k, delta) / (k as f64 * (n as f64 / k as f64).log2()))
}

/// All-or-nothing threshold `2k log(n/k) / log(1 + k/sigma2)`.
pub fn m_star(n: usize, k: usize, sigma2: f64) -> Result<f64> {
    check_nk(n, k)?;
    let sigma2 = positive_sigma2(sigma2, "m_star")?;
    let k = k as f64;
    Ok(2.0 * k * (n as f64 / k).log2() / (1.0 + k / sigma2).log2())
}

/// Conjectured computational threshold `(2k + sigma2) log n`.
pub fn m_alg(n: usize, k: usize, sigma2: f64) -> Result<f64> {
    if n == 0 || k == 0 || k > n {
        return Err(Error::Domain(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::Domain(format!("sigma2 must be finite and >= 0, got {sigma2}")));
    }
    Ok((2.0 * k as f64 + sigma2) * log2(n))
}

fn log_k_plus_log_rest(n: usize, k: usize) -> Result<f64> {
    check_nk(n, k)?;
    Ok(log2(k) + log2(n - k))
}

/// Correlation-decoder sufficient count `C / min(L, L^2) (log k + log(n - k))`.
///
/// `c` is the unspecified leading constant; values are meaningful only up to it.
pub fn alg_upper(n: usize, k: usize, model: ModelSpec, c: f64) -> Result<f64> {
    if c.is_nan() || c <= 0.0 {
        return Err(Error::Domain(format!("constant must be > 0, got {c}")));
    }
    let logs = log_k_plus_log_rest(n, k)?;
    let l = link_slope(model, k, 1.0)?;
    Ok(c / l.min(l * l) * logs)
}

/// The per-model simplified forms `C (k + sigma2)(...)` and `C (k + 1/beta^2)(...)`.
pub fn alg_upper_simplified(n: usize, k: usize, model: ModelSpec, c: f64) -> Result<f64> {
    if c.is_nan() || c <= 0.0 {
        return Err(Error::Domain(format!("constant must be > 0, got {c}")));
    }
    let logs = log_k_plus_log_rest(n, k)?;
    let noise = match model.validated()? {
        ModelSpec::Linear { sigma2 } | ModelSpec::OneBit { sigma2 } => sigma2,
        ModelSpec::Logistic { beta } => 1.0 / (beta * beta),
    };
    Ok(c * (k as f64 + noise) * logs)
}

/// Query for the full bound catalog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub n: usize,
    pub k: usize,
    pub model: ModelSpec,
    pub delta: f64,
    /// Upper bound `I` on the per-measurement mutual information, for [`glm_lower`].
    pub mutual_info_cap: Option<f64>,
}

impl BoundQuery {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || 2 * self.k > self.n {
            return Err(Error::Domain(format!(
                "need 1 <= k <= n/2, got k = {}, n = {}",
                self.k, self.n
            )));
        }
        check_delta(self.delta)?;
        self.model.validated()?;
        if let Some(i) = self.mutual_info_cap {
            if !(i.is_finite() && i > 0.0) {
                return Err(Error::Domain(format!("mutual information cap must be > 0, got {i}")));
            }
        }
        Ok(())
    }
}

/// Generic lower bound `k log(n/k) / I * fano_correction`.
pub fn glm_lower(query: &BoundQuery) -> Result<Bound> {
    query.validate()?;
    let cap = query
        .mutual_info_cap
        .ok_or_else(|| Error::Domain("generic lower bound needs a mutual information cap".into()))?;
    let k = query.k as f64;
    let entropy = k * (query.n as f64 / k).log2();
    Ok(Bound::clamped(entropy / cap * fano_correction_unclamped(query.n, query.k, query.delta)?))
}

/// One-bit lower bound `(k + sigma2)/2 log(n/k) * fano_correction`.
pub fn onebit_lower(n: usize, k: usize, sigma2: f64, delta: f64) -> Result<Bound> {
    check_nk(n, k)?;
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::Domain(format!("sigma2 must be finite and >= 0, got {sigma2}")));
    }
    let kf = k as f64;
    Ok(Bound::clamped(
        (kf + sigma2) / 2.0 * (n as f64 / kf).log2() * fano_correction_unclamped(n, k, delta)?,
    ))
}

/// Logistic lower bound `(k + 1/beta^2)/2 log(n/k) * fano_correction`.
pub fn logistic_lower(n: usize, k: usize, beta: f64, delta: f64) -> Result<Bound> {
    check_nk(n, k)?;
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::Domain(format!("beta must be > 0, got {beta}")));
    }
    let kf = k as f64;
    Ok(Bound::clamped(
        0.5 * (kf + 1.0 / (beta * beta)) * (n as f64 / kf).log2() * fano_correction_unclamped(n, k, delta)?,
    ))
}

/// Linear-model Fano bound `(k log(n/k) - h2(delta) - delta k log n) / (1/2 log(1 + k/sigma2))`.
pub fn spl_fano_lower(n: usize, k: usize, sigma2: f64, delta: f64) -> Result<Bound> {
    check_nk(n, k)?;
    check_delta(delta)?;
    let sigma2 = positive_sigma2(sigma2, "the linear-model Fano bound")?;
    let kf = k as f64;
    let numerator = kf * (n as f64 / kf).log2() - fano_penalty(n, k, delta);
    Ok(Bound::clamped(numerator / (0.5 * (1.0 + kf / sigma2).log2())))
}

/// `N(l) = (k/n) h2(l/k) + (1 - k/n) h2(l/(n-k))`, in bits. `l` may be fractional.
pub fn n_of_l(l: f64, k: usize, n: usize) -> Result<f64> {
    if k == 0 || 2 * k > n {
        return Err(Error::Domain(format!("need 1 <= k <= n/2, got k = {k}, n = {n}")));
    }
    let (kf, nf) = (k as f64, n as f64);
    if !(1.0..=kf).contains(&l) || l > nf - kf {
        return Err(Error::Domain(format!("need 1 <= l <= k, got l = {l}, k = {k}")));
    }
    Ok(kf / nf * h2(l / kf) + (1.0 - kf / nf) * h2(l / (nf - kf)))
}

fn check_half(n: usize, k: usize) -> Result<()> {
    if k == 0 || 2 * k > n {
        return Err(Error::Domain(format!("need 1 <= k <= n/2, got k = {k}, n = {n}")));
    }
    Ok(())
}

/// Exact integer scan for `max_{l in 1..=k} f(l)`; first maximizer wins.
pub(crate) fn argmax_scan(k: usize, f: impl Fn(usize) -> f64) -> (f64, usize) {
    let mut best = (f(1), 1);
    for l in 2..=k {
        let v = f(l);
        if v > best.0 {
            best = (v, l);
        }
    }
    best
}

/// The MLE objective `n N(l) / (1/2 log(1 + l/(2 sigma2)))` at a (possibly fractional) `l`.
pub fn mle_objective(l: f64, k: usize, n: usize, sigma2: f64) -> Result<f64> {
    let sigma2 = positive_sigma2(sigma2, "the MLE bound")?;
    Ok(n as f64 * n_of_l(l, k, n)? / (0.5 * (1.0 + l / (2.0 * sigma2)).log2()))
}

/// Sufficient count for the maximum-likelihood decoder, maximized over `l`.
pub fn mle_upper(n: usize, k: usize, sigma2: f64) -> Result<MaxOverL> {
    check_half(n, k)?;
    positive_sigma2(sigma2, "the MLE bound")?;
    let (value, argmax_l) = argmax_scan(k, |l| mle_objective(l as f64, k, n, sigma2).unwrap_or(f64::NAN));
    Ok(MaxOverL {
        value,
        argmax_l,
        vacuous: false,
    })
}

/// Gaussian-design conditional lower bound, maximized over `l` and clamped at 0.
pub fn spl_conditional_lower(n: usize, k: usize, sigma2: f64, delta: f64) -> Result<MaxOverL> {
    check_half(n, k)?;
    check_delta(delta)?;
    let sigma2 = positive_sigma2(sigma2, "the conditional lower bound")?;
    let (nf, kf) = (n as f64, k as f64);
    let offset = 2.0 * nf.log2() + fano_penalty(n, k, delta);
    let (raw, argmax_l) = argmax_scan(k, |l| {
        let lf = l as f64;
        let numerator = nf * n_of_l(lf, k, n).unwrap_or(f64::NAN) - offset;
        numerator / (0.5 * (1.0 + lf / sigma2 * (2.0 - lf / kf)).log2())
    });
    let b = Bound::clamped(raw);
    Ok(MaxOverL {
        value: b.value,
        argmax_l,
        vacuous: b.vacuous,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plot1Row {
    pub k: usize,
    /// MLE bound maximized over integer `l`.
    pub m1: f64,
    /// MLE objective at the real point `l = k(1 - k/n)`.
    pub m2: f64,
    pub argmax_l: usize,
}

pub const PLOT1_N: usize = 50_000;
pub const PLOT1_SIGMA2: f64 = 1.0;

/// The default k grid: 1000, 2000, ..., 25000.
pub fn plot1_default_grid() -> Vec<usize> {
    (1..=25).map(|i| i * 1000).collect()
}

pub fn plot1_data(n: usize, sigma2: f64, k_grid: &[usize]) -> Result<Vec<Plot1Row>> {
    k_grid
        .iter()
        .map(|&k| {
            let upper = mle_upper(n, k, sigma2)?;
            let l_ref = k as f64 * (1.0 - k as f64 / n as f64);
            Ok(Plot1Row {
                k,
                m1: upper.value,
                m2: mle_objective(l_ref.max(1.0), k, n, sigma2)?,
                argmax_l: upper.argmax_l,
            })
        })
        .collect()
}

/// Every threshold applicable to a query. Entries that do not apply to the
/// query's model (or need a noise level the model lacks) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub query: BoundQuery,
    pub c_const: f64,
    pub link_slope: f64,
    pub m_star: Option<f64>,
    pub m_alg: Option<f64>,
    pub alg_upper: f64,
    pub alg_upper_simplified: f64,
    pub glm_lower: Option<Bound>,
    pub onebit_lower: Option<Bound>,
    pub logistic_lower: Option<Bound>,
    pub spl_fano_lower: Option<Bound>,
    pub mle_upper: Option<MaxOverL>,
    pub spl_conditional_lower: Option<MaxOverL>,
}

impl BoundReport {
    pub fn compute(query: &BoundQuery, c_const: f64) -> Result<Self> {
        query.validate()?;
        let BoundQuery { n, k, model, delta, .. } = *query;
        let sigma2 = model.sigma2();
        let positive = sigma2.filter(|&s| s > 0.0);
        Ok(BoundReport {
            query: *query,
            c_const,
            link_slope: link_slope(model, k, 1.0)?,
            m_star: positive.map(|s| m_star(n, k, s)).transpose()?,
            m_alg: sigma2.map(|s| m_alg(n, k, s)).transpose()?,
            alg_upper: alg_upper(n, k, model, c_const)?,
            alg_upper_simplified: alg_upper_simplified(n, k, model, c_const)?,
            glm_lower: query.mutual_info_cap.map(|_| glm_lower(query)).transpose()?,
            onebit_lower: sigma2.map(|s| onebit_lower(n, k, s, delta)).transpose()?,
            logistic_lower: model.beta().map(|b| logistic_lower(n, k, b, delta)).transpose()?,
            spl_fano_lower: positive.map(|s| spl_fano_lower(n, k, s, delta)).transpose()?,
            mle_upper: positive.map(|s| mle_upper(n, k, s)).transpose()?,
            spl_conditional_lower: positive.map(|s| spl_conditional_lower(n, k, s, delta)).transpose()?,
        })
    }
}
