//! Small dense linear algebra: Hermitian eigendecomposition and real linear solves.
//!
//! Matrices here are at most 16×16, so plain row-major `Vec`s and textbook
//! algorithms (cyclic Jacobi, Gaussian elimination with partial pivoting) are
//! all that is needed.

use num_complex::Complex;

use crate::scalar::Real;

/// Row-major square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T> {
    n: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex::new(T::zero(), T::zero()); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_rows(n: usize, data: Vec<Complex<T>>) -> Self {
        assert_eq!(data.len(), n * n, "matrix data length mismatch");
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] = out[(i, j)] + a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.n).fold(Complex::new(T::zero(), T::zero()), |acc, i| {
            acc + self[(i, i)]
        })
    }

    /// Largest elementwise deviation from Hermiticity, `max |A_ij - conj(A_ji)|`.
    pub fn hermiticity_error(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in i..self.n {
                let d = (self[(i, j)] - self[(j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// Frobenius norm squared.
    pub fn norm_sqr(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, z| acc + z.norm_sqr())
    }
}

impl<T> std::ops::Index<(usize, usize)> for CMatrix<T> {
    type Output = Complex<T>;
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for CMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[i * self.n + j]
    }
}

/// Eigendecomposition `A = V diag(values) V†` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen<T> {
    /// Eigenvalues in ascending order.
    pub values: Vec<T>,
    /// Unitary matrix whose columns are the eigenvectors matching `values`.
    pub vectors: CMatrix<T>,
}

impl<T: Real> HermitianEigen<T> {
    pub fn reconstruct(&self) -> CMatrix<T> {
        let n = self.vectors.dim();
        let mut out = CMatrix::zeros(n);
        for (k, &lambda) in self.values.iter().enumerate() {
            for i in 0..n {
                let vik = self.vectors[(i, k)] * lambda;
                for j in 0..n {
                    out[(i, j)] = out[(i, j)] + vik * self.vectors[(j, k)].conj();
                }
            }
        }
        out
    }
}

/// Cyclic complex Jacobi eigensolver. Only the Hermitian part of `a` is used.
pub fn hermitian_eigen<T: Real>(a: &CMatrix<T>) -> HermitianEigen<T> {
    let n = a.dim();
    let half = T::lit(0.5);
    let mut m = a.clone();
    // symmetrize so that round-off in the input cannot bias the rotations
    for i in 0..n {
        m[(i, i)] = Complex::new(m[(i, i)].re, T::zero());
        for j in (i + 1)..n {
            let h = (a[(i, j)] + a[(j, i)].conj()) * half;
            m[(i, j)] = h;
            m[(j, i)] = h.conj();
        }
    }
    let mut v = CMatrix::identity(n);
    let eps = T::epsilon();

    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..n {
            diag = diag + m[(i, i)].norm_sqr();
            for j in (i + 1)..n {
                off = off + m[(i, j)].norm_sqr();
            }
        }
        if off <= eps * eps * (diag + T::min_positive_value()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let mag = apq.norm();
                if mag == T::zero() {
                    continue;
                }
                let phase = apq / mag;
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let tau = (aqq - app) / (T::lit(2.0) * mag);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                // J = [[c, s e^{ia}], [-s e^{-ia}, c]] on the (p, q) plane; m <- J† m J
                let sp = phase * s;
                let sp_conj = sp.conj();
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = mkp * c - mkq * sp_conj;
                    m[(k, q)] = mkp * sp + mkq * c;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = mpk * c - mqk * sp;
                    m[(q, k)] = mpk * sp_conj + mqk * c;
                }
                m[(p, q)] = Complex::new(T::zero(), T::zero());
                m[(q, p)] = Complex::new(T::zero(), T::zero());
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c - vkq * sp_conj;
                    v[(k, q)] = vkp * sp + vkq * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[(i, i)]
            .re
            .partial_cmp(&m[(j, j)].re)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| m[(i, i)].re).collect();
    let mut vectors = CMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[(row, col)] = v[(row, src)];
        }
    }
    HermitianEigen { values, vectors }
}

/// Solves `a x = b` for a square real system stored row-major.
///
/// Returns `None` when a pivot falls below `tol` relative to the largest
/// absolute entry of `a`.
pub fn solve_real<T: Real>(a: &[T], b: &[T], tol: T) -> Option<Vec<T>> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    let scale = a.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if scale == T::zero() {
        return None;
    }
    let mut m: Vec<T> = a.to_vec();
    let mut rhs: Vec<T> = b.to_vec();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[i * n + col]
                .abs()
                .partial_cmp(&m[j * n + col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[pivot * n + col].abs() <= tol * scale {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            rhs.swap(col, pivot);
        }
        let d = m[col * n + col];
        for row in (col + 1)..n {
            let f = m[row * n + col] / d;
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = m[col * n + k];
                m[row * n + k] = m[row * n + k] - f * v;
            }
            rhs[row] = rhs[row] - f * rhs[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..n {
            acc = acc - m[row * n + k] * x[k];
        }
        x[row] = acc / m[row * n + row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix<f64> {
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex::new(rng.random_range(-1.0..1.0), 0.0);
            for j in (i + 1)..n {
                let z = Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    #[test]
    fn jacobi_reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 4, 6] {
            for _ in 0..20 {
                let a = random_hermitian(&mut rng, n);
                let eig = hermitian_eigen(&a);
                let back = eig.reconstruct();
                for (x, y) in a.as_slice().iter().zip(back.as_slice()) {
                    assert!((x - y).norm() < 1e-12, "{x} vs {y}");
                }
                let vv = eig.vectors.adjoint().matmul(&eig.vectors);
                let id = CMatrix::<f64>::identity(n);
                for (x, y) in vv.as_slice().iter().zip(id.as_slice()) {
                    assert!((x - y).norm() < 1e-12);
                }
                assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn jacobi_diagonal_input_is_exact() {
        let mut a = CMatrix::<f64>::zeros(4);
        for (i, v) in [1.5, -0.5, 0.0, 0.0].into_iter().enumerate() {
            a[(i, i)] = Complex::new(v, 0.0);
        }
        let eig = hermitian_eigen(&a);
        assert_eq!(eig.values, vec![-0.5, 0.0, 0.0, 1.5]);
    }

    #[test]
    fn jacobi_single_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_hermitian(&mut rng, 4);
        let a32 = CMatrix::from_rows(
            4,
            a.as_slice()
                .iter()
                .map(|z| Complex::new(z.re as f32, z.im as f32))
                .collect(),
        );
        let eig = hermitian_eigen(&a32);
        let back = eig.reconstruct();
        for (x, y) in a32.as_slice().iter().zip(back.as_slice()) {
            assert!((x - y).norm() < 1e-5);
        }
    }

    #[test]
    fn gaussian_solve_and_singular() {
        let a = [2.0, 1.0, 1.0, 3.0];
        let x: Vec<f64> = solve_real(&a, &[3.0, 5.0], 1e-12).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        assert!(solve_real(&[1.0, 2.0, 2.0, 4.0], &[1.0, 2.0], 1e-12).is_none());
    }
}
