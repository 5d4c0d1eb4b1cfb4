//! Evaluation quantities for uncertainty scores.

use crate::error::{Error, Result};
use crate::tensor::{mse, Tensor};

/// Fraction of components with `lower - lambda*beta <= y <= upper + lambda*beta`.
pub fn coverage(
    lower: &Tensor,
    upper: &Tensor,
    target: &Tensor,
    lambda: f64,
    beta: f64,
) -> Result<f64> {
    lower.expect_same_shape(target, "coverage")?;
    upper.expect_same_shape(target, "coverage")?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be >= 0")));
    }
    let pad = lambda * beta;
    let hits = lower
        .data()
        .iter()
        .zip(upper.data())
        .zip(target.data())
        .filter(|((l, u), y)| **l - pad <= **y && **y <= **u + pad)
        .count();
    Ok(hits as f64 / target.len() as f64)
}

/// One line of the Markov coverage-bound check.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovRow {
    pub lambda: f64,
    /// `1 - 1/lambda`
    pub bound: f64,
    pub coverage: f64,
    /// `coverage - bound`
    pub margin: f64,
    pub pass: bool,
    /// With `alpha` set: the fraction of samples whose own coverage is at
    /// least `1 - alpha`, and the bound `1 - 1/(lambda alpha)` on it.
    pub per_sample: Option<(f64, f64)>,
}

/// Checks `coverage(lambda) >= 1 - 1/lambda - slack` for every `lambda`.
/// Failures are reported, not raised. The guarantee only covers the
/// distribution the intervals were trained on.
pub fn markov_bound_check(
    lower: &Tensor,
    upper: &Tensor,
    target: &Tensor,
    lambdas: &[f64],
    beta: f64,
    slack: f64,
    alpha: Option<f64>,
) -> Result<Vec<MarkovRow>> {
    if let Some(a) = alpha {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {a} outside (0, 1]")));
        }
    }
    lambdas
        .iter()
        .map(|&lambda| {
            if !(lambda > 0.0) {
                return Err(Error::InvalidArgument(format!("lambda {lambda} must be > 0")));
            }
            let cov = coverage(lower, upper, target, lambda, beta)?;
            let bound = 1.0 - 1.0 / lambda;
            let per_sample = match alpha {
                Some(a) => {
                    let rows = target.rows();
                    let mut good = 0;
                    for r in 0..rows {
                        let one = |t: &Tensor| Tensor::from_vec(t.row(r).to_vec());
                        let c = coverage(&one(lower), &one(upper), &one(target), lambda, beta)?;
                        if c >= 1.0 - a {
                            good += 1;
                        }
                    }
                    Some((good as f64 / rows as f64, 1.0 - 1.0 / (lambda * a)))
                }
                None => None,
            };
            Ok(MarkovRow {
                lambda,
                bound,
                coverage: cov,
                margin: cov - bound,
                pass: cov >= bound - slack,
                per_sample,
            })
        })
        .collect()
}

/// Pearson correlation of two equal-length slices; `None` when either has
/// zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa.sqrt() * sbb.sqrt()))
}

/// Performance-weighted correlation: `corr(|pred - y|, u) / MSE(pred, y)`
/// for one sample.
pub fn pwcc(pred: &[f64], target: &[f64], u: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || u.len() != target.len() {
        return Err(Error::shape("pwcc", target.len(), (pred.len(), u.len())));
    }
    let err: Vec<f64> = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).collect();
    let m = mse(&Tensor::from_vec(pred.to_vec()), &Tensor::from_vec(target.to_vec()))?;
    if m == 0.0 {
        return Err(Error::UndefinedMetric("zero MSE".into()));
    }
    let c = pearson(&err, u)
        .ok_or_else(|| Error::UndefinedMetric("constant error or uncertainty map".into()))?;
    Ok(c / m)
}

/// PWCC of every sample (row); undefined samples are `None`.
pub fn pwcc_per_sample(pred: &Tensor, target: &Tensor, u: &Tensor) -> Result<Vec<Option<f64>>> {
    pred.expect_same_shape(target, "pwcc")?;
    u.expect_same_shape(target, "pwcc")?;
    (0..target.rows())
        .map(|r| match pwcc(pred.row(r), target.row(r), u.row(r)) {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionPoint {
    pub threshold: f64,
    /// `None` when no component passes the threshold.
    pub accuracy: Option<f64>,
    pub proportion: f64,
}

const DIRECTION_EPS: f64 = 1e-12;

/// Direction accuracy of asymmetric intervals.
///
/// The halves `upper - pred` and `pred - lower` are compared; a component
/// is considered at threshold `t` when `larger / max(smaller, eps) >= t`,
/// and its predicted direction is the side of the larger half. Accuracy is
/// the fraction of considered components whose target lies on that side of
/// the prediction. Zero-width components are never considered.
pub fn direction_sweep(
    pred: &Tensor,
    lower: &Tensor,
    upper: &Tensor,
    target: &Tensor,
    thresholds: &[f64],
) -> Result<Vec<DirectionPoint>> {
    pred.expect_same_shape(target, "direction sweep")?;
    lower.expect_same_shape(target, "direction sweep")?;
    upper.expect_same_shape(target, "direction sweep")?;
    // (ratio, agrees)
    let mut comps: Vec<(f64, bool)> = Vec::with_capacity(target.len());
    for (((&p, &l), &u), &y) in pred
        .data()
        .iter()
        .zip(lower.data())
        .zip(upper.data())
        .zip(target.data())
    {
        let up = u - p;
        let down = p - l;
        let larger = up.max(down);
        if larger <= DIRECTION_EPS {
            continue;
        }
        let ratio = larger / up.min(down).max(DIRECTION_EPS);
        let agrees = if up > down { y > p } else { y < p };
        comps.push((ratio, agrees));
    }
    let total = target.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let (mut n, mut ok) = (0usize, 0usize);
            for &(r, a) in &comps {
                if r >= t {
                    n += 1;
                    ok += a as usize;
                }
            }
            DirectionPoint {
                threshold: t,
                accuracy: (n > 0).then(|| ok as f64 / n as f64),
                proportion: n as f64 / total,
            }
        })
        .collect())
}

/// Average ranks (ties share the mean rank), 1-based.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&ranks(a), &ranks(b))
}

/// Mean and sample standard deviation of the defined values, plus the number
/// of skipped (`None`) entries.
pub fn mean_std_skipping(values: &[Option<f64>]) -> (f64, f64, usize) {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let skipped = values.len() - defined.len();
    if defined.is_empty() {
        return (f64::NAN, f64::NAN, skipped);
    }
    let n = defined.len() as f64;
    let mean = defined.iter().sum::<f64>() / n;
    let std = if defined.len() > 1 {
        (defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std, skipped)
}
