//! Synthetic 1D deconvolution: `x = A y + eta` with `A = D^T S D`, `D` the
//! orthonormal DCT-II and `S` exponentially decaying, applied to random
//! piecewise-constant signals.

use std::ops::Range;

use rand::Rng;

use crate::data::Samples;
use crate::error::{Error, Result};
use crate::rng::{standard_normal, stream_rng, subseed, SeededRng};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorSpec {
    pub n: usize,
    /// Spectral decay rate; the condition number of `A` is `exp(gamma)`.
    pub gamma: f64,
}

impl OperatorSpec {
    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("operator size {} < 2", self.n)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "decay rate {} must be finite and nonnegative",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Diagonal of `S`: `s_k = exp(-gamma k / (n - 1))`.
    pub fn spectrum(&self) -> Vec<f64> {
        let denom = (self.n - 1) as f64;
        (0..self.n)
            .map(|k| (-self.gamma * k as f64 / denom).exp())
            .collect()
    }

    pub fn condition_number(&self) -> f64 {
        self.gamma.exp()
    }
}

/// Orthonormal DCT-II matrix, `D[k][j] = c_k cos(pi (2j + 1) k / 2n)`.
pub fn dct_matrix(n: usize) -> Tensor {
    let nf = n as f64;
    let mut d = Tensor::zeros(&[n, n]);
    for k in 0..n {
        let c = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        let row = d.row_mut(k);
        for (j, v) in row.iter_mut().enumerate() {
            *v = c * (std::f64::consts::PI * (2 * j + 1) as f64 * k as f64 / (2.0 * nf)).cos();
        }
    }
    d
}

/// `D^T diag(s) D` for an arbitrary diagonal.
fn conjugate_diagonal(n: usize, diag: &[f64]) -> Tensor {
    let d = dct_matrix(n);
    let mut a = Tensor::zeros(&[n, n]);
    for k in 0..n {
        let dk = d.row(k);
        let s = diag[k];
        for i in 0..n {
            let f = s * dk[i];
            let ai = a.row_mut(i);
            for (av, dv) in ai.iter_mut().zip(dk) {
                *av += f * dv;
            }
        }
    }
    a
}

/// The blurring operator `A = D^T S D` as a dense `[n, n]` matrix.
pub fn build_operator(spec: &OperatorSpec) -> Result<Tensor> {
    spec.validate()?;
    Ok(conjugate_diagonal(spec.n, &spec.spectrum()))
}

/// `A^{-1} = D^T S^{-1} D`, the unregularized inverse.
pub fn naive_inverse(spec: &OperatorSpec) -> Result<Tensor> {
    spec.validate()?;
    let inv: Vec<f64> = spec.spectrum().iter().map(|s| 1.0 / s).collect();
    Ok(conjugate_diagonal(spec.n, &inv))
}

/// Matrix-vector product with a square `[n, n]` matrix.
pub fn matvec(a: &Tensor, x: &[f64]) -> Vec<f64> {
    (0..a.rows())
        .map(|i| a.row(i).iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignalSpec {
    pub n: usize,
    /// Inclusive range of interior jump counts.
    pub jumps: (usize, usize),
    /// Range of segment values.
    pub values: (f64, f64),
}

impl SignalSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.jumps;
        if !(1 <= lo && lo <= hi && hi < self.n) {
            return Err(Error::InvalidArgument(format!(
                "jump range {lo}..={hi} must satisfy 1 <= min <= max < n = {}",
                self.n
            )));
        }
        if !(self.values.0 <= self.values.1) {
            return Err(Error::InvalidArgument(format!(
                "value range {:?} is empty",
                self.values
            )));
        }
        Ok(())
    }
}

/// Step signal with jumps at the given interior positions (`1..n`);
/// segment `s` covers `[positions[s-1], positions[s])`.
pub fn piecewise_constant(n: usize, positions: &[usize], values: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), positions.len() + 1, "one value per segment");
    let mut y = vec![0.0; n];
    let mut seg = 0;
    for (t, v) in y.iter_mut().enumerate() {
        while seg < positions.len() && t >= positions[seg] {
            seg += 1;
        }
        *v = values[seg];
    }
    y
}

/// Random piecewise-constant signal: a uniform number of jumps at distinct
/// uniform positions, segment heights i.i.d. uniform in the value range.
pub fn sample_signal(spec: &SignalSpec, rng: &mut SeededRng) -> Vec<f64> {
    let (jlo, jhi) = spec.jumps;
    let jumps = rng.random_range(jlo..=jhi);
    // partial Fisher-Yates over the n-1 interior positions
    let mut pool: Vec<usize> = (1..spec.n).collect();
    for i in 0..jumps {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut positions = pool[..jumps].to_vec();
    positions.sort_unstable();
    let (vlo, vhi) = spec.values;
    let values: Vec<f64> = (0..=jumps)
        .map(|_| vlo + (vhi - vlo) * rng.random::<f64>())
        .collect();
    piecewise_constant(spec.n, &positions, &values)
}

/// Where the measurement noise is added.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseMode {
    Inputs,
    InputsAndTargets,
}

/// Train/validation/test row ranges: 80% / 10% / remainder, in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl Splits {
    pub fn for_count(m: usize) -> Self {
        let train = m * 8 / 10;
        let val = m / 10;
        Self {
            train: 0..train,
            val: train..train + val,
            test: train + val..m,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeconvDataset {
    pub operator: OperatorSpec,
    pub sigma: f64,
    pub seed: u64,
    pub samples: Samples,
    pub splits: Splits,
}

impl DeconvDataset {
    pub fn n(&self) -> usize {
        self.operator.n
    }

    pub fn m(&self) -> usize {
        self.samples.len()
    }

    pub fn split(&self, which: Split) -> Result<Samples> {
        let r = match which {
            Split::Train => &self.splits.train,
            Split::Val => &self.splits.val,
            Split::Test => &self.splits.test,
        };
        if r.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{which:?} split is empty for m = {}",
                self.m()
            )));
        }
        Ok(self.samples.slice(r.start, r.end))
    }
}

const DATA_TAG: u64 = 0xDA7A;

/// Generates `m` pairs `x_i = A y_i + eta_i`. Sample `i` draws from its own
/// stream, so the dataset is a pure function of the arguments.
pub fn generate(
    op: &OperatorSpec,
    sig: &SignalSpec,
    m: usize,
    sigma: f64,
    noise: NoiseMode,
    seed: u64,
) -> Result<DeconvDataset> {
    if m == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sigma {sigma} must be >= 0")));
    }
    if sig.n != op.n {
        return Err(Error::shape("signal length", op.n, sig.n));
    }
    sig.validate()?;
    let a = build_operator(op)?;
    let n = op.n;
    let mut inputs = Tensor::zeros(&[m, n]);
    let mut targets = Tensor::zeros(&[m, n]);
    let data_seed = subseed(seed, DATA_TAG);
    for i in 0..m {
        let mut rng = stream_rng(data_seed, i as u64);
        let y = sample_signal(sig, &mut rng);
        let mut x = matvec(&a, &y);
        if sigma > 0.0 {
            for v in &mut x {
                *v += sigma * standard_normal(&mut rng);
            }
        }
        inputs.row_mut(i).copy_from_slice(&x);
        let t = targets.row_mut(i);
        t.copy_from_slice(&y);
        if sigma > 0.0 && noise == NoiseMode::InputsAndTargets {
            for v in t.iter_mut() {
                *v += sigma * standard_normal(&mut rng);
            }
        }
    }
    Ok(DeconvDataset {
        operator: *op,
        sigma,
        seed,
        samples: Samples::new(inputs, targets)?,
        splits: Splits::for_count(m),
    })
}
