//! Measurement models: sparse binary signals, Gaussian sensing matrices and
//! the three observation channels (linear, one-bit probit, logistic).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{std_normal_cdf, RngStream};

/// A k-sparse binary vector, stored as its sorted support (0-based indices).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SparseSignal {
    n: usize,
    support: Vec<usize>,
}

impl SparseSignal {
    pub fn new(n: usize, mut support: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("signal dimension must be positive".into()));
        }
        if support.is_empty() {
            return Err(Error::Domain("signal must have at least one nonzero".into()));
        }
        support.sort_unstable();
        if support.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("support indices must be distinct".into()));
        }
        if let Some(&last) = support.last() {
            if last >= n {
                return Err(Error::Domain(format!("support index {last} out of range for n = {n}")));
            }
        }
        Ok(Self { n, support })
    }

    /// Uniformly random k-subset of `0..n` (Floyd's sampling algorithm).
    pub fn random(n: usize, k: usize, stream: RngStream) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::Domain(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
        }
        let mut rng = stream.generator();
        let mut chosen: Vec<usize> = Vec::with_capacity(k);
        for j in (n - k)..n {
            let t = rng.next_below(j as u64 + 1) as usize;
            if chosen.contains(&t) {
                chosen.push(j);
            } else {
                chosen.push(t);
            }
        }
        Self::new(n, chosen)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn dense(&self) -> Vec<u8> {
        let mut x = vec![0u8; self.n];
        for &i in &self.support {
            x[i] = 1;
        }
        x
    }
}

/// Dense row-major m x n sensing matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    m: usize,
    n: usize,
    entries: Vec<f64>,
    provenance: Option<RngStream>,
}

impl SensingMatrix {
    /// m x n matrix of i.i.d. standard normals drawn from `stream`.
    ///
    /// Rows are drawn in order, so the first `m'` rows of an `m`-row matrix
    /// equal the `m'`-row matrix from the same stream.
    pub fn gaussian(m: usize, n: usize, stream: RngStream) -> Result<Self> {
        let mut entries = alloc(m, n)?;
        stream.generator().fill_gaussian(&mut entries);
        Ok(Self {
            m,
            n,
            entries,
            provenance: Some(stream),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if m == 0 || n == 0 {
            return Err(Error::Domain("matrix must be non-empty".into()));
        }
        let mut entries = Vec::with_capacity(m * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "row length",
                    expected: n,
                    got: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        Ok(Self {
            m,
            n,
            entries,
            provenance: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn provenance(&self) -> Option<RngStream> {
        self.provenance
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// New matrix with columns reordered so that new column `j` is old column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        let mut entries = Vec::with_capacity(self.entries.len());
        for i in 0..self.m {
            let row = self.row(i);
            entries.extend(perm.iter().map(|&p| row[p]));
        }
        Self {
            m: self.m,
            n: self.n,
            entries,
            provenance: None,
        }
    }

    /// Row inner products `A_i^T x`.
    pub fn project(&self, x: &SparseSignal) -> Result<Vec<f64>> {
        if x.n() != self.n {
            return Err(Error::DimensionMismatch {
                what: "signal length",
                expected: self.n,
                got: x.n(),
            });
        }
        Ok((0..self.m)
            .map(|i| {
                let row = self.row(i);
                x.support().iter().map(|&j| row[j]).sum()
            })
            .collect())
    }

    /// `A^T y`, the column correlations.
    pub fn correlate(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &yi) in y.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += yi * a;
            }
        }
        out
    }
}

fn alloc(m: usize, n: usize) -> Result<Vec<f64>> {
    let fail = || Error::Allocation { rows: m, cols: n };
    if m == 0 || n == 0 {
        return Err(Error::Domain("matrix dimensions must be positive".into()));
    }
    let len = m.checked_mul(n).ok_or_else(fail)?;
    let mut v = Vec::new();
    v.try_reserve_exact(len).map_err(|_| fail())?;
    v.resize(len, 0.0);
    Ok(v)
}

/// Observation channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    /// `y = Ax + z`, `z ~ N(0, sigma2 I)`.
    Linear { sigma2: f64 },
    /// `y = sign(Ax + z)`.
    #[serde(rename = "onebit")]
    OneBit { sigma2: f64 },
    /// `P(y_i = 1) = 1 / (1 + exp(-beta A_i^T x))`; `beta = inf` is the noiseless limit.
    Logistic { beta: f64 },
}

impl ModelSpec {
    pub fn linear(sigma2: f64) -> Result<Self> {
        Self::Linear { sigma2 }.validated()
    }

    pub fn one_bit(sigma2: f64) -> Result<Self> {
        Self::OneBit { sigma2 }.validated()
    }

    pub fn logistic(beta: f64) -> Result<Self> {
        Self::Logistic { beta }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        match self {
            ModelSpec::Linear { sigma2 } | ModelSpec::OneBit { sigma2 } => {
                if !(sigma2.is_finite() && sigma2 >= 0.0) {
                    return Err(Error::InvalidModel(format!("noise variance must be finite and >= 0, got {sigma2}")));
                }
            }
            ModelSpec::Logistic { beta } => {
                // beta = 0 makes the output independent of x.
                if beta.is_nan() || beta <= 0.0 {
                    return Err(Error::InvalidModel(format!("logistic beta must be > 0, got {beta}")));
                }
            }
        }
        Ok(self)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Linear { .. } => "linear",
            ModelSpec::OneBit { .. } => "onebit",
            ModelSpec::Logistic { .. } => "logistic",
        }
    }

    pub fn sigma2(&self) -> Option<f64> {
        match *self {
            ModelSpec::Linear { sigma2 } | ModelSpec::OneBit { sigma2 } => Some(sigma2),
            ModelSpec::Logistic { .. } => None,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match *self {
            ModelSpec::Logistic { beta } => Some(beta),
            _ => None,
        }
    }

    pub fn is_binary(&self) -> bool {
        !matches!(self, ModelSpec::Linear { .. })
    }

    fn tag(&self) -> u32 {
        match self {
            ModelSpec::Linear { .. } => 0,
            ModelSpec::OneBit { .. } => 1,
            ModelSpec::Logistic { .. } => 2,
        }
    }

    fn param(&self) -> f64 {
        match *self {
            ModelSpec::Linear { sigma2 } | ModelSpec::OneBit { sigma2 } => sigma2,
            ModelSpec::Logistic { beta } => beta,
        }
    }

    fn from_tag(tag: u32, param: f64) -> Result<Self> {
        match tag {
            0 => Self::linear(param),
            1 => Self::one_bit(param),
            2 => Self::logistic(param),
            _ => Err(Error::Format(format!("unknown model tag {tag}"))),
        }
    }
}

/// `sign(a) = +1` iff `a >= 0`.
#[inline]
pub fn sign(a: f64) -> f64 {
    if a >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementVector {
    pub model: ModelSpec,
    pub values: Vec<f64>,
}

impl MeasurementVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Elementwise sign. The linear model becomes the noiseless-variance-matched one-bit model.
    pub fn quantized(&self) -> MeasurementVector {
        let model = match self.model {
            ModelSpec::Linear { sigma2 } => ModelSpec::OneBit { sigma2 },
            other => other,
        };
        MeasurementVector {
            model,
            values: self.values.iter().map(|&v| sign(v)).collect(),
        }
    }
}

/// Draw measurements `y` of `x` through `A` under `model`.
///
/// The noise stream is consumed one Gaussian per row for the linear and
/// one-bit channels, so the same stream gives `sign(linear) == onebit`.
pub fn measure(
    a: &SensingMatrix,
    x: &SparseSignal,
    model: ModelSpec,
    noise: RngStream,
) -> Result<MeasurementVector> {
    let model = model.validated()?;
    let t = a.project(x)?;
    let mut rng = noise.generator();
    let values = match model {
        ModelSpec::Linear { sigma2 } => {
            let sd = sigma2.sqrt();
            t.iter().map(|&ti| ti + sd * rng.next_gaussian()).collect()
        }
        ModelSpec::OneBit { sigma2 } => {
            let sd = sigma2.sqrt();
            t.iter().map(|&ti| sign(ti + sd * rng.next_gaussian())).collect()
        }
        ModelSpec::Logistic { beta } if beta.is_infinite() => t.iter().map(|&ti| sign(ti)).collect(),
        ModelSpec::Logistic { beta } => t
            .iter()
            .map(|&ti| {
                let p = 1.0 / (1.0 + (-beta * ti).exp());
                if rng.next_f64() < p {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect(),
    };
    Ok(MeasurementVector { model, values })
}

/// The inverse link `g` with `E[y_i | A_i] = g(A_i^T x)`.
pub fn inverse_link(t: f64, model: ModelSpec) -> f64 {
    match model {
        ModelSpec::Linear { .. } => t,
        ModelSpec::OneBit { sigma2: 0.0 } => sign(t),
        ModelSpec::OneBit { sigma2 } => 1.0 - 2.0 * std_normal_cdf(-t / sigma2.sqrt()),
        ModelSpec::Logistic { beta } if beta.is_infinite() => sign(t),
        ModelSpec::Logistic { beta } => (beta * t / 2.0).tanh(),
    }
}

/// Link slope `L` controlling the correlation decoder's sample complexity.
///
/// `c_linear` is the free constant of the linear-model slope; it has no
/// effect on the binary channels.
pub fn link_slope(model: ModelSpec, k: usize, c_linear: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("k must be positive".into()));
    }
    if c_linear.is_nan() || c_linear <= 0.0 {
        return Err(Error::Domain(format!("linear constant must be > 0, got {c_linear}")));
    }
    let k = k as f64;
    Ok(match model.validated()? {
        ModelSpec::OneBit { sigma2 } => (2.0 / std::f64::consts::PI).sqrt() / (k + sigma2).sqrt(),
        ModelSpec::Logistic { beta } => 0.5 * (2.0 / (2.0 / (beta * beta) + k)).sqrt(),
        ModelSpec::Linear { sigma2 } => 1.0 / (c_linear * (k + sigma2).sqrt()),
    })
}

// Binary replay format, all fields little-endian:
//
//   offset  size  field
//   0       8     magic "SGLMDUMP"
//   8       2     format version (1)
//   10      2     flags (bit 0: provenance present)
//   12      4     model tag (0 linear, 1 onebit, 2 logistic)
//   16      8     m (u64)
//   24      8     n (u64)
//   32      8     sigma2 or beta (f64)
//   40      8     master seed (u64)
//   48      8     stream id (u64)
//   56      8*m*n matrix entries, row-major f64
//   ...     8*m   measurement values f64
const DUMP_MAGIC: &[u8; 8] = b"SGLMDUMP";
const DUMP_VERSION: u16 = 1;

pub fn write_dump<W: Write>(mut w: W, a: &SensingMatrix, y: &MeasurementVector) -> Result<()> {
    if y.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            what: "measurement length",
            expected: a.rows(),
            got: y.len(),
        });
    }
    let stream = a.provenance();
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    w.write_all(&u16::from(stream.is_some()).to_le_bytes())?;
    w.write_all(&y.model.tag().to_le_bytes())?;
    w.write_all(&(a.rows() as u64).to_le_bytes())?;
    w.write_all(&(a.cols() as u64).to_le_bytes())?;
    w.write_all(&y.model.param().to_le_bytes())?;
    let s = stream.unwrap_or(RngStream::new(0, 0));
    w.write_all(&s.master_seed.to_le_bytes())?;
    w.write_all(&s.stream_id.to_le_bytes())?;
    for v in a.entries().iter().chain(&y.values) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_dump<R: Read>(mut r: R) -> Result<(SensingMatrix, MeasurementVector)> {
    let mut header = [0u8; 56];
    r.read_exact(&mut header)?;
    if &header[0..8] != DUMP_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let u16_at = |o: usize| u16::from_le_bytes([header[o], header[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let version = u16_at(8);
    if version != DUMP_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let has_provenance = u16_at(10) & 1 == 1;
    let model = ModelSpec::from_tag(u32_at(12), f64::from_bits(u64_at(32)))?;
    let m = usize::try_from(u64_at(16)).map_err(|_| Error::Format("m too large".into()))?;
    let n = usize::try_from(u64_at(24)).map_err(|_| Error::Format("n too large".into()))?;
    let provenance = has_provenance.then(|| RngStream::new(u64_at(40), u64_at(48)));

    let mut entries = alloc(m, n)?;
    read_f64s(&mut r, &mut entries)?;
    let mut values = vec![0.0; m];
    read_f64s(&mut r, &mut values)?;
    Ok((
        SensingMatrix {
            m,
            n,
            entries,
            provenance,
        },
        MeasurementVector { model, values },
    ))
}

fn read_f64s<R: Read>(r: &mut R, out: &mut [f64]) -> Result<()> {
    let mut buf = [0u8; 8];
    for v in out {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(())
}
