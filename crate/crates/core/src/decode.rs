//! Support decoders: top-k correlation, exhaustive maximum likelihood for the
//! linear channel, and the single-measurement binary-expansion decoder for
//! the noiseless linear channel.
//!
//! All ties resolve toward the smaller index (top-k) or the
//! lexicographically smaller support (maximum likelihood).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MeasurementVector, ModelSpec, SensingMatrix};

/// Default cap on the number of candidate supports the ML decoder will visit.
pub const DEFAULT_MLE_BUDGET: u128 = 1_000_000;

/// Largest dimension for which the binary-expansion decoder is exact in `f64`.
pub const DECIMAL_MAX_N: usize = 53;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderTag {
    #[serde(rename = "topk")]
    TopK,
    Mle,
    Decimal,
    #[serde(rename = "quantize")]
    QuantizeTopK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    /// Sorted, 0-based.
    pub support: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scores: Option<Vec<f64>>,
    pub decoder: DecoderTag,
}

impl DecodeResult {
    /// All indices ordered by decreasing score (ties toward the smaller index).
    pub fn ranked(&self) -> Option<Vec<usize>> {
        let scores = self.scores.as_ref()?;
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| by_score(scores, a, b));
        Some(idx)
    }
}

#[inline]
fn by_score(scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

fn check_lengths(a: &SensingMatrix, y: &MeasurementVector, k: usize) -> Result<()> {
    if y.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            what: "measurement length",
            expected: a.rows(),
            got: y.len(),
        });
    }
    if k == 0 || k > a.cols() {
        return Err(Error::Domain(format!("need 1 <= k <= n, got k = {k}, n = {}", a.cols())));
    }
    Ok(())
}

/// Scores `l_i = sum_j y_j A_{j,i}` and the indices of the k largest.
pub fn topk_correlation_decode(a: &SensingMatrix, y: &MeasurementVector, k: usize) -> Result<DecodeResult> {
    check_lengths(a, y, k)?;
    let scores = a.correlate(&y.values);
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |&i, &j| by_score(&scores, i, j));
        idx.truncate(k);
    }
    idx.sort_unstable();
    Ok(DecodeResult {
        support: idx,
        scores: Some(scores),
        decoder: DecoderTag::TopK,
    })
}

/// Sign-quantize linear measurements, then run the top-k decoder.
pub fn quantize_then_decode(a: &SensingMatrix, y: &MeasurementVector, k: usize) -> Result<DecodeResult> {
    if !matches!(y.model, ModelSpec::Linear { .. }) {
        return Err(Error::InvalidModel("quantize-then-decode expects linear measurements".into()));
    }
    let mut result = topk_correlation_decode(a, &y.quantized(), k)?;
    result.decoder = DecoderTag::QuantizeTopK;
    Ok(result)
}

/// Exact binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Maximum-likelihood support for the Gaussian linear channel with the default budget.
pub fn mle_decode_linear(a: &SensingMatrix, y: &MeasurementVector, k: usize) -> Result<DecodeResult> {
    mle_decode_linear_with_budget(a, y, k, DEFAULT_MLE_BUDGET)
}

/// Exhaustive `argmin ||y - A x'||^2` over all k-sparse binary `x'`.
///
/// Candidates are visited in lexicographic order and a candidate replaces
/// the incumbent only on a strictly smaller residual.
pub fn mle_decode_linear_with_budget(
    a: &SensingMatrix,
    y: &MeasurementVector,
    k: usize,
    budget: u128,
) -> Result<DecodeResult> {
    if !matches!(y.model, ModelSpec::Linear { .. }) {
        return Err(Error::InvalidModel(format!(
            "maximum-likelihood decoding is implemented for the linear model only, got {}",
            y.model.name()
        )));
    }
    check_lengths(a, y, k)?;
    let n = a.cols();
    let candidates = binomial(n, k);
    if candidates > budget {
        return Err(Error::BudgetExceeded { candidates, budget });
    }

    // ||y - A_S 1||^2 = ||y||^2 - 2 sum_{i in S} c_i + sum_{i,j in S} G_ij
    // with c = A^T y and G = A^T A. The constant ||y||^2 is dropped.
    let corr = a.correlate(&y.values);
    let mut gram = vec![0.0; n * n];
    for r in 0..a.rows() {
        let row = a.row(r);
        for i in 0..n {
            let ri = row[i];
            for j in i..n {
                gram[i * n + j] += ri * row[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            gram[i * n + j] = gram[j * n + i];
        }
    }
    let objective = |s: &[usize]| -> f64 {
        let mut v = 0.0;
        for (p, &i) in s.iter().enumerate() {
            v += gram[i * n + i] - 2.0 * corr[i];
            for &j in &s[p + 1..] {
                v += 2.0 * gram[i * n + j];
            }
        }
        v
    };

    let mut current: Vec<usize> = (0..k).collect();
    let mut best = current.clone();
    let mut best_value = objective(&current);
    while next_combination(&mut current, n) {
        let v = objective(&current);
        if v < best_value {
            best_value = v;
            best.copy_from_slice(&current);
        }
    }
    Ok(DecodeResult {
        support: best,
        scores: None,
        decoder: DecoderTag::Mle,
    })
}

/// Advance to the next k-subset of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// `||y - A_S 1||^2` evaluated directly.
pub fn residual_norm_sq(a: &SensingMatrix, y: &[f64], support: &[usize]) -> f64 {
    (0..a.rows())
        .map(|i| {
            let row = a.row(i);
            let fit: f64 = support.iter().map(|&j| row[j]).sum();
            (y[i] - fit).powi(2)
        })
        .sum()
}

fn check_decimal_n(n: usize) -> Result<()> {
    if n == 0 || n > DECIMAL_MAX_N {
        return Err(Error::Domain(format!(
            "binary-expansion decoding needs 1 <= n <= {DECIMAL_MAX_N} for exact arithmetic, got {n}"
        )));
    }
    Ok(())
}

/// The 1 x n design `[1, 2, 4, ..., 2^(n-1)] / 2^n`.
pub fn decimal_row(n: usize) -> Result<SensingMatrix> {
    check_decimal_n(n)?;
    let scale = (n as f64).exp2();
    let row: Vec<f64> = (0..n).map(|i| (i as f64).exp2() / scale).collect();
    SensingMatrix::from_rows(&[row])
}

/// Noiseless single measurement of the support under [`decimal_row`].
pub fn decimal_measure(n: usize, support: &[usize]) -> Result<MeasurementVector> {
    let row = decimal_row(n)?;
    let mut y = 0.0;
    for &i in support {
        if i >= n {
            return Err(Error::Domain(format!("support index {i} out of range for n = {n}")));
        }
        y += row.get(0, i);
    }
    Ok(MeasurementVector {
        model: ModelSpec::Linear { sigma2: 0.0 },
        values: vec![y],
    })
}

/// Read the support off the binary expansion of `2^n y`.
pub fn decimal_decode(n: usize, y: &MeasurementVector) -> Result<DecodeResult> {
    check_decimal_n(n)?;
    match y.model {
        ModelSpec::Linear { sigma2: 0.0 } => {}
        ModelSpec::Linear { .. } => {
            return Err(Error::InvalidModel("binary-expansion decoding requires noiseless measurements".into()))
        }
        other => {
            return Err(Error::InvalidModel(format!(
                "binary-expansion decoding requires the linear model, got {}",
                other.name()
            )))
        }
    }
    if y.len() != 1 {
        return Err(Error::DimensionMismatch {
            what: "measurement length",
            expected: 1,
            got: y.len(),
        });
    }
    let scaled = (y.values[0] * (n as f64).exp2()).round();
    if !(0.0..(n as f64).exp2()).contains(&scaled) {
        return Err(Error::Domain(format!("measurement {} outside [0, 1)", y.values[0])));
    }
    let bits = scaled as u64;
    let support = (0..n).filter(|&i| bits >> i & 1 == 1).collect();
    Ok(DecodeResult {
        support,
        scores: None,
        decoder: DecoderTag::Decimal,
    })
}

/// Measure then decode; true when the support comes back unchanged.
pub fn decimal_round_trip(n: usize, support: &[usize]) -> Result<bool> {
    let y = decimal_measure(n, support)?;
    let decoded = decimal_decode(n, &y)?;
    let mut expected = support.to_vec();
    expected.sort_unstable();
    Ok(decoded.support == expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{measure, SparseSignal};
    use crate::numerics::RngStream;
    use proptest::prelude::*;

    fn linear(values: Vec<f64>) -> MeasurementVector {
        MeasurementVector {
            model: ModelSpec::Linear { sigma2: 0.0 },
            values,
        }
    }

    fn instance(m: usize, n: usize, k: usize, model: ModelSpec, seed: u64) -> (SensingMatrix, SparseSignal, MeasurementVector) {
        let s = RngStream::new(seed, 0);
        let a = SensingMatrix::gaussian(m, n, s.substream(1)).unwrap();
        let x = SparseSignal::random(n, k, s.substream(0)).unwrap();
        let y = measure(&a, &x, model, s.substream(2)).unwrap();
        (a, x, y)
    }

    #[test]
    fn topk_hand_example() {
        let a = SensingMatrix::from_rows(&[vec![1.0, 0.0, 0.5], vec![1.0, 0.0, -0.5]]).unwrap();
        let r = topk_correlation_decode(&a, &linear(vec![1.0, 1.0]), 1).unwrap();
        assert_eq!(r.scores.as_deref(), Some(&[2.0, 0.0, 0.0][..]));
        assert_eq!(r.support, vec![0]);
        assert_eq!(r.decoder, DecoderTag::TopK);
    }

    #[test]
    fn topk_all_and_ties() {
        let a = SensingMatrix::from_rows(&[vec![5.0, 5.0, 1.0]]).unwrap();
        let y = linear(vec![1.0]);
        assert_eq!(topk_correlation_decode(&a, &y, 1).unwrap().support, vec![0]);
        assert_eq!(topk_correlation_decode(&a, &y, 2).unwrap().support, vec![0, 1]);
        assert_eq!(topk_correlation_decode(&a, &y, 3).unwrap().support, vec![0, 1, 2]);
        let r = topk_correlation_decode(&a, &y, 1).unwrap();
        assert_eq!(r.ranked().unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn topk_errors() {
        let a = SensingMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(
            topk_correlation_decode(&a, &linear(vec![1.0, 1.0]), 1),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(topk_correlation_decode(&a, &linear(vec![1.0]), 3).is_err());
        assert!(topk_correlation_decode(&a, &linear(vec![1.0]), 0).is_err());
    }

    #[test]
    fn quantize_matches_topk_on_signs() {
        let a = SensingMatrix::from_rows(&[vec![1.0, 0.0, 0.5], vec![1.0, 0.0, -0.5]]).unwrap();
        let r = quantize_then_decode(&a, &linear(vec![1.0, 1.0]), 1).unwrap();
        assert_eq!(r.support, vec![0]);
        assert_eq!(r.decoder, DecoderTag::QuantizeTopK);

        let signs = MeasurementVector {
            model: ModelSpec::OneBit { sigma2: 0.0 },
            values: vec![1.0, -1.0, 1.0],
        };
        assert_eq!(signs.quantized(), signs);
        assert!(quantize_then_decode(&a, &signs, 1).is_err());
    }

    #[test]
    fn quantized_pipeline_equals_one_bit_pipeline() {
        let (a, x, y) = instance(300, 40, 3, ModelSpec::Linear { sigma2: 0.0 }, 3);
        let q = quantize_then_decode(&a, &y, 3).unwrap();
        let bits = measure(&a, &x, ModelSpec::OneBit { sigma2: 0.0 }, RngStream::new(3, 0).substream(2)).unwrap();
        let direct = topk_correlation_decode(&a, &bits, 3).unwrap();
        assert_eq!(q.support, direct.support);
        assert_eq!(q.support, x.support());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(10, 3), 120);
        assert_eq!(binomial(12, 2), 66);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(100, 50), 100891344545564193334812497256);
        assert_eq!(binomial(1000, 500), u128::MAX);
    }

    #[test]
    fn combinations_enumerate_all() {
        let mut c = vec![0, 1];
        let mut seen = vec![c.clone()];
        while next_combination(&mut c, 4) {
            seen.push(c.clone());
        }
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
    }

    #[test]
    fn mle_identity_design() {
        let a = SensingMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let x = SparseSignal::new(3, vec![1]).unwrap();
        let y = measure(&a, &x, ModelSpec::Linear { sigma2: 0.0 }, RngStream::new(0, 0)).unwrap();
        assert_eq!(mle_decode_linear(&a, &y, 1).unwrap().support, vec![1]);
    }

    #[test]
    fn mle_noiseless_recovers_truth() {
        // Oracle: enumerate all 6 supports directly and check that only the truth has zero residual.
        for seed in 0..50 {
            let (a, x, y) = instance(4, 4, 2, ModelSpec::Linear { sigma2: 0.0 }, 100 + seed);
            let mut zero = Vec::new();
            for i in 0..4 {
                for j in i + 1..4 {
                    if residual_norm_sq(&a, &y.values, &[i, j]) < 1e-18 {
                        zero.push(vec![i, j]);
                    }
                }
            }
            assert_eq!(zero, vec![x.support().to_vec()]);
            let r = mle_decode_linear(&a, &y, 2).unwrap();
            assert_eq!(r.support, x.support());
            assert!(residual_norm_sq(&a, &y.values, &r.support) < 1e-9);
        }
    }

    #[test]
    fn mle_matches_brute_force_under_noise() {
        for seed in 0..20 {
            let (a, _, y) = instance(10, 9, 3, ModelSpec::Linear { sigma2: 1.0 }, 200 + seed);
            let mut best: Option<(f64, Vec<usize>)> = None;
            let mut c = vec![0, 1, 2];
            loop {
                let r = residual_norm_sq(&a, &y.values, &c);
                if best.as_ref().is_none_or(|(b, _)| r < *b) {
                    best = Some((r, c.clone()));
                }
                if !next_combination(&mut c, 9) {
                    break;
                }
            }
            assert_eq!(mle_decode_linear(&a, &y, 3).unwrap().support, best.unwrap().1);
        }
    }

    #[test]
    fn mle_errors() {
        let (a, _, y) = instance(10, 30, 3, ModelSpec::Linear { sigma2: 0.0 }, 1);
        assert!(matches!(
            mle_decode_linear_with_budget(&a, &y, 3, 100),
            Err(Error::BudgetExceeded { candidates: 4060, budget: 100 })
        ));
        let bits = y.quantized();
        assert!(matches!(mle_decode_linear(&a, &bits, 3), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn mle_tie_prefers_lexicographic() {
        // Columns 0 and 1 are identical, so {0} and {1} tie.
        let a = SensingMatrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 1.0]]).unwrap();
        let y = linear(vec![1.0, 2.0]);
        assert_eq!(mle_decode_linear(&a, &y, 1).unwrap().support, vec![0]);
    }

    #[test]
    fn decimal_examples() {
        let y = decimal_measure(4, &[0, 2]).unwrap();
        assert_eq!(y.values, vec![0.3125]);
        assert_eq!(decimal_decode(4, &y).unwrap().support, vec![0, 2]);
        let empty = decimal_measure(4, &[]).unwrap();
        assert_eq!(empty.values, vec![0.0]);
        assert!(decimal_decode(4, &empty).unwrap().support.is_empty());
        assert!(decimal_round_trip(53, &[0, 17, 52]).unwrap());
    }

    #[test]
    fn decimal_exhaustive_n10_k3() {
        let mut count = 0;
        let mut c = vec![0, 1, 2];
        loop {
            assert!(decimal_round_trip(10, &c).unwrap(), "{c:?}");
            count += 1;
            if !next_combination(&mut c, 10) {
                break;
            }
        }
        assert_eq!(count, 120);
    }

    #[test]
    fn decimal_errors() {
        assert!(decimal_row(54).is_err());
        assert!(decimal_measure(4, &[4]).is_err());
        let noisy = MeasurementVector {
            model: ModelSpec::Linear { sigma2: 0.1 },
            values: vec![0.5],
        };
        assert!(decimal_decode(4, &noisy).is_err());
        let bits = MeasurementVector {
            model: ModelSpec::OneBit { sigma2: 0.0 },
            values: vec![1.0],
        };
        assert!(decimal_decode(4, &bits).is_err());
    }

    #[test]
    fn decode_result_json() {
        let r = DecodeResult {
            support: vec![1, 3],
            scores: None,
            decoder: DecoderTag::Mle,
        };
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"support":[1,3],"decoder":"mle"}"#);
        let r = DecodeResult {
            support: vec![0],
            scores: Some(vec![2.0, 0.5]),
            decoder: DecoderTag::TopK,
        };
        let back: DecodeResult = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    fn permutation(n: usize, seed: u64) -> Vec<usize> {
        let mut g = RngStream::new(seed, 77).generator();
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            p.swap(i, g.next_below(i as u64 + 1) as usize);
        }
        p
    }

    fn permuted_support(support: &[usize], perm: &[usize]) -> Vec<usize> {
        // New column j is old column perm[j]; old index i lands at position inv[i].
        let mut inv = vec![0; perm.len()];
        for (j, &p) in perm.iter().enumerate() {
            inv[p] = j;
        }
        let mut s: Vec<usize> = support.iter().map(|&i| inv[i]).collect();
        s.sort_unstable();
        s
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn topk_separates_scores(seed in any::<u64>(), k in 1usize..10) {
            let (a, _, y) = instance(30, 20, 3, ModelSpec::OneBit { sigma2: 0.5 }, seed);
            let r = topk_correlation_decode(&a, &y, k).unwrap();
            let scores = r.scores.as_ref().unwrap();
            prop_assert_eq!(r.support.len(), k);
            let min_in = r.support.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
            let max_out = (0..20).filter(|i| !r.support.contains(i)).map(|i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(min_in >= max_out);
        }

        #[test]
        fn score_decomposition(seed in any::<u64>()) {
            let (a, x, y) = instance(25, 15, 4, ModelSpec::Linear { sigma2: 1.0 }, seed);
            let r = topk_correlation_decode(&a, &y, 4).unwrap();
            let scores = r.scores.unwrap();
            let lhs: f64 = x.support().iter().map(|&i| scores[i]).sum();
            let ax = a.project(&x).unwrap();
            let rhs: f64 = y.values.iter().zip(&ax).map(|(u, v)| u * v).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn scale_invariance(seed in any::<u64>(), c in 1e-3f64..1e3) {
            let (a, _, y) = instance(25, 15, 4, ModelSpec::Linear { sigma2: 1.0 }, seed);
            let scaled = MeasurementVector { model: y.model, values: y.values.iter().map(|v| v * c).collect() };
            prop_assert_eq!(
                topk_correlation_decode(&a, &y, 4).unwrap().support,
                topk_correlation_decode(&a, &scaled, 4).unwrap().support
            );
        }

        #[test]
        fn permutation_equivariance(seed in any::<u64>()) {
            let (a, x, y) = instance(20, 10, 2, ModelSpec::Linear { sigma2: 0.3 }, seed);
            let perm = permutation(10, seed);
            let ap = a.permute_columns(&perm);
            let top = topk_correlation_decode(&a, &y, 2).unwrap().support;
            let top_p = topk_correlation_decode(&ap, &y, 2).unwrap().support;
            prop_assert_eq!(permuted_support(&top, &perm), top_p);
            let mle = mle_decode_linear(&a, &y, 2).unwrap().support;
            let mle_p = mle_decode_linear(&ap, &y, 2).unwrap().support;
            prop_assert_eq!(permuted_support(&mle, &perm), mle_p);
            let xp = SparseSignal::new(10, permuted_support(x.support(), &perm)).unwrap();
            for (u, v) in ap.project(&xp).unwrap().iter().zip(a.project(&x).unwrap()) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }

        #[test]
        fn deterministic(seed in any::<u64>()) {
            let (a, _, y) = instance(20, 10, 2, ModelSpec::Linear { sigma2: 0.3 }, seed);
            let (a2, _, y2) = instance(20, 10, 2, ModelSpec::Linear { sigma2: 0.3 }, seed);
            prop_assert_eq!(topk_correlation_decode(&a, &y, 2).unwrap(), topk_correlation_decode(&a2, &y2, 2).unwrap());
            prop_assert_eq!(mle_decode_linear(&a, &y, 2).unwrap(), mle_decode_linear(&a2, &y2, 2).unwrap());
        }
    }
}
