//! Zero-mean Gaussian noise shaped by a reference sample set.
//!
//! Every stream is a ChaCha8 generator seeded from the root seed with a
//! distinct stream number, so independent consumers (one per layer, say)
//! never share state and results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LsoError, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Diagonal,
    FullCovariance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Multiplier applied to the reference (co)variance.
    pub scale: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Diagonal,
            scale: 1.0,
        }
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            scale: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale >= 0.0) || !self.scale.is_finite() {
            return Err(LsoError::InvalidArgument(format!(
                "noise scale must be finite and >= 0, got {}",
                self.scale
            )));
        }
        Ok(())
    }
}

/// Seeded Gaussian source.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    /// Stream `stream` of the generator family rooted at `seed`.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

fn column_means(x: &Matrix<f64>) -> Vec<f64> {
    let n = x.rows() as f64;
    (0..x.cols())
        .map(|j| (0..x.rows()).map(|i| x.get(i, j)).sum::<f64>() / n)
        .collect()
}

/// Unbiased sample covariance of the columns.
fn covariance(x: &Matrix<f64>) -> Matrix<f64> {
    let mean = column_means(x);
    let d = x.cols();
    let denom = (x.rows() - 1) as f64;
    let mut cov = Matrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let s: f64 = (0..x.rows())
                .map(|i| (x.get(i, a) - mean[a]) * (x.get(i, b) - mean[b]))
                .sum();
            cov.set(a, b, s / denom);
            cov.set(b, a, s / denom);
        }
    }
    cov
}

fn cholesky(a: &Matrix<f64>) -> Option<Matrix<f64>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0) {
            return None;
        }
        let dj = d.sqrt();
        l.set(j, j, dj);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / dj);
        }
    }
    Some(l)
}

/// Lower Cholesky factor of `cov`, adding `1e-12·trace/n` to the diagonal
/// (growing ×10, at most ten times) until the factorisation succeeds.
fn jittered_cholesky(cov: &Matrix<f64>) -> Result<Matrix<f64>> {
    if let Some(l) = cholesky(cov) {
        return Ok(l);
    }
    let n = cov.rows();
    let trace: f64 = (0..n).map(|i| cov.get(i, i)).sum();
    let mut jitter = 1e-12 * trace / n as f64;
    for _ in 0..=10 {
        let mut shifted = cov.clone();
        for i in 0..n {
            shifted.set(i, i, cov.get(i, i) + jitter);
        }
        if let Some(l) = cholesky(&shifted) {
            return Ok(l);
        }
        jitter *= 10.0;
    }
    Err(LsoError::Numerical(
        "covariance is not positive semi-definite after jitter escalation".into(),
    ))
}

/// Draw an `m × n` noise matrix.
///
/// * `None`: zeros.
/// * `Diagonal`: independent `N(0, scale·var_j)` per column, `var_j` the
///   sample variance of reference column `j`. If `n` differs from the
///   reference width every column uses the mean reference variance.
/// * `FullCovariance`: rows from `N(0, scale·Cov(reference))`; requires
///   `n` equal to the reference width.
pub fn sample_noise<T: Real>(
    model: &NoiseModel,
    reference: &Matrix<T>,
    shape: (usize, usize),
    stream: &mut NoiseStream,
) -> Result<Matrix<T>> {
    model.validate()?;
    let (m, n) = shape;
    if model.kind == NoiseKind::None {
        return Ok(Matrix::zeros(m, n));
    }
    if reference.rows() < 2 {
        return Err(LsoError::InvalidArgument(format!(
            "noise reference needs at least 2 samples, got {}",
            reference.rows()
        )));
    }
    let reference: Matrix<f64> = reference.cast();
    let cov = covariance(&reference);
    cov.check_finite("noise covariance")?;
    let d = reference.cols();

    let mut out = Matrix::<f64>::zeros(m, n);
    match model.kind {
        NoiseKind::None => unreachable!(),
        NoiseKind::Diagonal => {
            let variances: Vec<f64> = if n == d {
                (0..d).map(|j| cov.get(j, j)).collect()
            } else {
                let mean = (0..d).map(|j| cov.get(j, j)).sum::<f64>() / d.max(1) as f64;
                vec![mean; n]
            };
            let sd: Vec<f64> = variances
                .iter()
                .map(|v| (model.scale * v.max(0.0)).sqrt())
                .collect();
            for i in 0..m {
                for (j, &s) in sd.iter().enumerate() {
                    let z = stream.standard_normal();
                    out.set(i, j, z * s);
                }
            }
        }
        NoiseKind::FullCovariance => {
            if n != d {
                return Err(LsoError::dimension(
                    "full-covariance noise width",
                    format!("{d} (reference features)"),
                    n,
                ));
            }
            let scaled = cov.scale(model.scale);
            if scaled.max_abs() == 0.0 {
                return Ok(Matrix::zeros(m, n));
            }
            let l = jittered_cholesky(&scaled)?;
            let mut z = vec![0.0; n];
            for i in 0..m {
                z.iter_mut().for_each(|v| *v = stream.standard_normal());
                let row = out.row_mut(i);
                for (a, r) in row.iter_mut().enumerate() {
                    *r = (0..=a).map(|k| l.get(a, k) * z[k]).sum();
                }
            }
        }
    }
    let out: Matrix<T> = out.cast();
    out.check_finite("noise sample")?;
    Ok(out)
}
