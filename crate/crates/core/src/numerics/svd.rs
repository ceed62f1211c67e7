//! Thin SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! Jacobi is slower than bidiagonalisation but computes small singular values
//! to high relative accuracy, which the pseudo-inverse relies on.

use crate::error::{LsoError, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

const MAX_SWEEPS: usize = 80;

/// `A = U · diag(sigma) · Vt` with `k = min(m, n)`.
#[derive(Clone, Debug)]
pub struct SvdFactors<T> {
    /// `m × k`, orthonormal columns.
    pub u: Matrix<T>,
    /// Descending, non-negative.
    pub sigma: Vec<T>,
    /// `k × n`, orthonormal rows.
    pub vt: Matrix<T>,
}

impl<T: Real> SvdFactors<T> {
    /// `Σ_{i<s} σ_i u_i v_iᵀ`.
    pub fn reconstruct_rank(&self, s: usize) -> Matrix<T> {
        let (m, n) = (self.u.rows(), self.vt.cols());
        let s = s.min(self.sigma.len());
        let mut out = Matrix::zeros(m, n);
        for i in 0..m {
            let row = out.row_mut(i);
            for k in 0..s {
                let coef = self.u.get(i, k) * self.sigma[k];
                if coef == T::zero() {
                    continue;
                }
                for (o, &v) in row.iter_mut().zip(self.vt.row(k)) {
                    *o = *o + coef * v;
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        self.reconstruct_rank(self.sigma.len())
    }

    /// Count of singular values above `rcond · σ_max`.
    pub fn numerical_rank(&self, rcond: T) -> usize {
        let cutoff = self.sigma.first().map_or(T::zero(), |&s| s * rcond);
        self.sigma.iter().filter(|&&s| s > cutoff).count()
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn norm<T: Real>(a: &[T]) -> T {
    let amax = a.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    if amax == T::zero() {
        return T::zero();
    }
    let ss = a.iter().fold(T::zero(), |acc, &v| {
        let r = v / amax;
        acc + r * r
    });
    amax * ss.sqrt()
}

fn rotate<T: Real>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (head, tail) = cols.split_at_mut(q);
    let (cp, cq) = (&mut head[p], &mut tail[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Extend `basis` (orthonormal vectors of length `len`) with unit vectors
/// orthogonal to it until it has `target` members.
fn complete_basis<T: Real>(basis: &mut Vec<Vec<T>>, len: usize, target: usize) {
    let mut e = 0;
    while basis.len() < target && e < len {
        let mut v = vec![T::zero(); len];
        v[e] = T::one();
        e += 1;
        // two passes of Gram-Schmidt for numerical orthogonality
        for _ in 0..2 {
            for b in basis.iter() {
                let d = dot(&v, b);
                for (x, &y) in v.iter_mut().zip(b) {
                    *x = *x - d * y;
                }
            }
        }
        let nv = norm(&v);
        if nv > T::lit(0.5) {
            v.iter_mut().for_each(|x| *x = *x / nv);
            basis.push(v);
        }
    }
}

/// SVD of a tall-or-square matrix (`m ≥ n`), returned as column vectors.
type Columns<T> = Vec<Vec<T>>;

fn jacobi_tall<T: Real>(a: &Matrix<T>) -> Result<(Columns<T>, Vec<T>, Columns<T>)> {
    let (m, n) = a.shape();
    let mut w: Vec<Vec<T>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            e
        })
        .collect();
    let tol = T::epsilon() * T::from_usize_lossy(m.max(1)).sqrt();

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == T::zero() || alpha == T::zero() || beta == T::zero() {
                    continue;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(LsoError::Numerical(format!(
            "Jacobi SVD did not converge in {MAX_SWEEPS} sweeps for a {m}x{n} matrix"
        )));
    }

    let sigma_raw: Vec<T> = w.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps ties in column order, so results are deterministic
    order.sort_by(|&i, &j| {
        sigma_raw[j]
            .partial_cmp(&sigma_raw[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let smax = order.first().map_or(T::zero(), |&i| sigma_raw[i]);
    let negligible = smax * T::epsilon() * T::from_usize_lossy(m.max(n));
    let mut u_cols: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut v_cols = Vec::with_capacity(n);
    let mut deficient = 0;
    for &j in &order {
        let s = sigma_raw[j];
        if s > negligible && s > T::zero() {
            u_cols.push(w[j].iter().map(|&x| x / s).collect());
        } else {
            deficient += 1;
        }
        sigma.push(s);
        v_cols.push(v[j].clone());
    }
    if deficient > 0 {
        // numerically zero directions: replace their left vectors by an
        // orthonormal completion (they carry no weight in the product)
        complete_basis(&mut u_cols, m, n);
        for s in sigma.iter_mut().skip(n - deficient) {
            *s = T::zero();
        }
    }
    Ok((u_cols, sigma, v_cols))
}

fn columns_to_matrix<T: Real>(cols: &[Vec<T>], rows: usize) -> Matrix<T> {
    Matrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

fn columns_to_row_matrix<T: Real>(cols: &[Vec<T>], len: usize) -> Matrix<T> {
    Matrix::from_fn(cols.len(), len, |i, j| cols[i][j])
}

/// Thin singular value decomposition.
pub fn svd<T: Real>(a: &Matrix<T>) -> Result<SvdFactors<T>> {
    a.check_finite("svd input")?;
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(SvdFactors {
            u: Matrix::zeros(m, 0),
            sigma: Vec::new(),
            vt: Matrix::zeros(0, n),
        });
    }
    if m >= n {
        let (u, sigma, v) = jacobi_tall(a)?;
        Ok(SvdFactors {
            u: columns_to_matrix(&u, m),
            sigma,
            vt: columns_to_row_matrix(&v, n),
        })
    } else {
        // Aᵀ = U' Σ V'ᵀ  ⇒  A = V' Σ U'ᵀ
        let (u_t, sigma, v_t) = jacobi_tall(&a.transpose())?;
        Ok(SvdFactors {
            u: columns_to_matrix(&v_t, m),
            sigma,
            vt: columns_to_row_matrix(&u_t, n),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn assert_orthonormal_cols(m: &Matrix<f64>) {
        let g = m.transpose().matmul(m).unwrap();
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g.get(i, j) - want).abs() < 1e-12, "gram[{i}][{j}] = {}", g.get(i, j));
            }
        }
    }

    #[test]
    fn reconstructs_random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (r, c) in [(8, 6), (6, 8), (1, 5), (5, 1), (20, 20), (50, 3)] {
            let a = random(&mut rng, r, c);
            let f = svd(&a).unwrap();
            assert_eq!(f.u.shape(), (r, r.min(c)));
            assert_eq!(f.vt.shape(), (r.min(c), c));
            assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
            assert!(f.sigma.iter().all(|&s| s >= 0.0));
            let err = f.reconstruct().sub(&a).unwrap().max_abs();
            assert!(err <= 1e-10 * f.sigma[0], "{r}x{c}: {err}");
            assert_orthonormal_cols(&f.u);
            assert_orthonormal_cols(&f.vt.transpose());
        }
    }

    #[test]
    fn diagonal_singular_values_are_abs_entries() {
        let a = Matrix::from_diag(&[-2.0, 5.0, 0.5]);
        let f = svd(&a).unwrap();
        assert_eq!(f.sigma.len(), 3);
        for (got, want) in f.sigma.iter().zip([5.0f64, 2.0, 0.5]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn rank_deficient_still_orthonormal() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]);
        let f = svd(&a).unwrap();
        assert_eq!(f.numerical_rank(1e-10), 1);
        assert_orthonormal_cols(&f.u);
        assert!(f.reconstruct().sub(&a).unwrap().max_abs() < 1e-12);
        let z = svd(&Matrix::<f64>::zeros(3, 2)).unwrap();
        assert!(z.sigma.iter().all(|&s| s == 0.0));
        assert_orthonormal_cols(&z.u);
    }

    #[test]
    fn f32_svd() {
        let a = Matrix::<f32>::from_rows(&[[3.0, 0.0], [4.0, 5.0]]);
        let f = svd(&a).unwrap();
        assert!((f.reconstruct().sub(&a).unwrap().max_abs()) < 1e-5);
        // singular values of [[3,0],[4,5]] are sqrt(45) and sqrt(5)
        assert!((f.sigma[0] - 45f32.sqrt()).abs() < 1e-5);
        assert!((f.sigma[1] - 5f32.sqrt()).abs() < 1e-5);
    }
}
