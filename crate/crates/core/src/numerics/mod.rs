//! Optimal low-rank truncation, pseudo-inverse least squares, and seeded noise.

mod noise;
mod svd;

pub use noise::{sample_noise, NoiseKind, NoiseModel, NoiseStream};
pub use svd::{svd, SvdFactors};

use crate::error::{LsoError, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Default relative cutoff below which singular values count as zero.
pub const DEFAULT_RCOND: f64 = 1e-10;

/// Best rank-`s` approximation of `y` in the Frobenius norm.
///
/// Keeps the `s` largest singular values and zeroes the rest. When `s` is at
/// least `min(rows, cols)` the input is returned unchanged.
pub fn truncate<T: Real>(y: &Matrix<T>, s: usize) -> Result<Matrix<T>> {
    if s < 1 {
        return Err(LsoError::InvalidArgument(
            "truncation rank must be at least 1".into(),
        ));
    }
    if s >= y.rows().min(y.cols()) {
        return Ok(y.clone());
    }
    Ok(svd(y)?.reconstruct_rank(s))
}

/// Truncation that also reports the fraction of squared singular-value
/// energy retained.
pub fn truncate_with_energy<T: Real>(y: &Matrix<T>, s: usize) -> Result<(Matrix<T>, T)> {
    if s < 1 {
        return Err(LsoError::InvalidArgument(
            "truncation rank must be at least 1".into(),
        ));
    }
    let f = svd(y)?;
    let total: T = f.sigma.iter().map(|&v| v * v).sum();
    let kept: T = f.sigma.iter().take(s).map(|&v| v * v).sum();
    let energy = if total > T::zero() { kept / total } else { T::one() };
    let out = if s >= y.rows().min(y.cols()) {
        y.clone()
    } else {
        f.reconstruct_rank(s)
    };
    Ok((out, energy))
}

/// Conditioning of a least-squares design matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveDiagnostics<T> {
    pub rank: usize,
    pub sigma_max: T,
    /// Smallest singular value that was inverted.
    pub sigma_min_used: T,
    pub condition: T,
    /// Rows in the design matrix as given.
    pub design_rows: usize,
    /// Rows actually factorised after collapsing exact periodic repetition.
    pub solved_rows: usize,
}

/// Smallest `p` dividing the row count such that row `r` of both matrices
/// equals row `r mod p`.
fn row_period<T: Real>(x: &Matrix<T>, y: &Matrix<T>) -> usize {
    let m = x.rows();
    'candidate: for p in 1..m {
        if !m.is_multiple_of(p) {
            continue;
        }
        for r in p..m {
            if x.row(r) != x.row(r % p) || y.row(r) != y.row(r % p) {
                continue 'candidate;
            }
        }
        return p;
    }
    m
}

/// Minimum-norm least-squares solution `X⁺ Y` via SVD.
pub fn lstsq_pinv<T: Real>(x: &Matrix<T>, y: &Matrix<T>) -> Result<Matrix<T>> {
    lstsq_pinv_with(x, y, T::lit(DEFAULT_RCOND)).map(|(phi, _)| phi)
}

/// [`lstsq_pinv`] with an explicit cutoff, returning conditioning diagnostics.
///
/// A design made of whole identical copies of a block of rows (with matching
/// targets) has the same solution as the block alone; only the block is
/// factorised so replicated designs give bit-identical decoders.
pub fn lstsq_pinv_with<T: Real>(
    x: &Matrix<T>,
    y: &Matrix<T>,
    rcond: T,
) -> Result<(Matrix<T>, SolveDiagnostics<T>)> {
    if x.rows() == 0 {
        return Err(LsoError::InvalidArgument(
            "least squares needs at least one sample row".into(),
        ));
    }
    if x.rows() != y.rows() {
        return Err(LsoError::dimension(
            "least-squares targets",
            format!("{} rows", x.rows()),
            format!("{} rows", y.rows()),
        ));
    }
    let design_rows = x.rows();
    let period = row_period(x, y);
    let (xs, ys);
    let (x, y) = if period < x.rows() {
        let idx: Vec<usize> = (0..period).collect();
        xs = x.select_rows(&idx);
        ys = y.select_rows(&idx);
        (&xs, &ys)
    } else {
        (x, y)
    };

    let f = svd(x)?;
    let n = x.cols();
    let p = y.cols();
    let sigma_max = f.sigma.first().copied().unwrap_or(T::zero());
    let cutoff = sigma_max * rcond;
    let mut phi = Matrix::zeros(n, p);
    let mut rank = 0;
    let mut sigma_min_used = T::zero();
    // φ = Σ_k v_k (u_kᵀ Y) / σ_k
    for (k, &s) in f.sigma.iter().enumerate() {
        if !(s > cutoff) || s == T::zero() {
            continue;
        }
        rank += 1;
        sigma_min_used = s;
        let mut uty = vec![T::zero(); p];
        for i in 0..x.rows() {
            let u = f.u.get(i, k);
            if u == T::zero() {
                continue;
            }
            for (acc, &v) in uty.iter_mut().zip(y.row(i)) {
                *acc = *acc + u * v;
            }
        }
        for c in uty.iter_mut() {
            *c = *c / s;
        }
        for j in 0..n {
            let vjk = f.vt.get(k, j);
            let row = phi.row_mut(j);
            for (o, &c) in row.iter_mut().zip(&uty) {
                *o = *o + vjk * c;
            }
        }
    }
    let condition = if rank > 0 {
        sigma_max / sigma_min_used
    } else {
        T::infinity()
    };
    Ok((
        phi,
        SolveDiagnostics {
            rank,
            sigma_max,
            sigma_min_used,
            condition,
            design_rows,
            solved_rows: x.rows(),
        },
    ))
}

/// Pick `count` columns that best span `y`'s column space by greedy
/// pivoted Gram–Schmidt. Indices are returned in ascending order.
pub fn select_spanning_columns<T: Real>(y: &Matrix<T>, count: usize) -> Vec<usize> {
    let n = y.cols();
    if count >= n {
        return (0..n).collect();
    }
    let mut residual: Vec<Vec<T>> = (0..n).map(|j| y.column(j)).collect();
    let mut chosen = Vec::with_capacity(count);
    let mut available = vec![true; n];
    for _ in 0..count {
        let mut best = None;
        let mut best_norm = T::neg_infinity();
        for j in (0..n).filter(|&j| available[j]) {
            let nj: T = residual[j].iter().map(|&v| v * v).sum();
            // strict comparison: ties go to the lowest index
            if nj > best_norm {
                best_norm = nj;
                best = Some(j);
            }
        }
        let Some(pivot) = best else { break };
        available[pivot] = false;
        chosen.push(pivot);
        let pn = best_norm.sqrt();
        if pn == T::zero() {
            continue;
        }
        let q: Vec<T> = residual[pivot].iter().map(|&v| v / pn).collect();
        for j in (0..n).filter(|&j| available[j]) {
            let d: T = residual[j].iter().zip(&q).map(|(&a, &b)| a * b).sum();
            for (r, &qv) in residual[j].iter_mut().zip(&q) {
                *r = *r - d * qv;
            }
        }
    }
    chosen.sort_unstable();
    chosen
}
