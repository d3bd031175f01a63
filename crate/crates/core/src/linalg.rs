//! Dense complex Hermitian matrices and the diagonally pre-scaled Cholesky
//! factorization used to orthonormalize monomial bases.

use num_complex::Complex;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite: pivot {pivot} has value {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Square complex matrix stored row-major. Hermitian by contract when built
/// through [`HermitianMatrix::from_fn_upper`] or accumulated with
/// [`HermitianMatrix::add_outer`].
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix<T> {
    n: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> HermitianMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = Complex::one();
        }
        m
    }

    /// Builds the matrix from its upper triangle; the lower triangle is the
    /// conjugate and the diagonal is forced real.
    pub fn from_fn_upper(n: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                if i == j {
                    m.data[i * n + i] = Complex::new(v.re, T::zero());
                } else {
                    m.data[i * n + j] = v;
                    m.data[j * n + i] = v.conj();
                }
            }
        }
        m
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * n + i] = Complex::new(*d, T::zero());
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex<T>) {
        self.data[i * self.n + j] = v;
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i).re).collect()
    }

    /// `self += w * v v^H`.
    pub fn add_outer(&mut self, w: T, v: &[Complex<T>]) {
        let n = self.n;
        for i in 0..n {
            let vi = v[i] * w;
            if vi.is_zero() {
                continue;
            }
            let row = &mut self.data[i * n..(i + 1) * n];
            for (j, slot) in row.iter_mut().enumerate().skip(i) {
                *slot = *slot + vi * v[j].conj();
            }
        }
    }

    /// Copies the upper triangle onto the lower one (after `add_outer` sweeps).
    pub fn symmetrize_from_upper(&mut self) {
        let n = self.n;
        for i in 0..n {
            self.data[i * n + i].im = T::zero();
            for j in (i + 1)..n {
                self.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in self.data.iter_mut() {
            *a = *a * s;
        }
    }

    /// `s * (A ⊗ B)` with row-major multi-index ordering `(i, j) -> i * dim(B) + j`.
    pub fn kronecker(a: &Self, b: &Self, s: T) -> Self {
        let (na, nb) = (a.n, b.n);
        let n = na * nb;
        let mut m = Self::zeros(n);
        for i1 in 0..na {
            for k1 in 0..na {
                let av = a.get(i1, k1) * s;
                for i2 in 0..nb {
                    for k2 in 0..nb {
                        m.data[(i1 * nb + i2) * n + k1 * nb + k2] = av * b.get(i2, k2);
                    }
                }
            }
        }
        m
    }

    /// Principal submatrix on `keep` (indices in increasing order).
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let n = keep.len();
        let mut m = Self::zeros(n);
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                m.data[a * n + b] = self.get(i, j);
            }
        }
        m
    }

    pub fn mul_vec(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(v)
                    .fold(Complex::zero(), |acc, (a, b)| acc + *a * *b)
            })
            .collect()
    }

    /// Largest `|A_ij - B_ij| / sqrt(A_ii A_jj)`: the entrywise difference relative
    /// to the diagonal scaling.
    pub fn scaled_max_diff(&self, other: &Self) -> T {
        let d = self.diagonal();
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                let s = (d[i].abs() * d[j].abs()).sqrt();
                let diff = (self.get(i, j) - other.get(i, j)).norm();
                let r = if s > T::zero() { diff / s } else { diff };
                if r > worst {
                    worst = r;
                }
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        (0..self.n).all(|i| {
            (0..self.n).all(|j| (self.get(i, j) - self.get(j, i).conj()).norm() <= tol)
        })
    }
}

/// Cholesky factor of `S G S` with `S = diag(G_jj^{-1/2})`.
///
/// With `b` the vector of basis functions, `L^{-1} S b` is an orthonormal
/// family for the inner product whose Gram matrix is `G`.
#[derive(Debug, Clone)]
pub struct PrescaledCholesky<T> {
    n: usize,
    scale: Vec<T>,
    lower: Vec<Complex<T>>,
    cond_estimate: T,
}

impl<T: Real> PrescaledCholesky<T> {
    pub fn factor(gram: &HermitianMatrix<T>) -> Result<Self, LinalgError> {
        let n = gram.dim();
        let diag = gram.diagonal();
        let mut scale = Vec::with_capacity(n);
        for (i, d) in diag.iter().enumerate() {
            if !(*d > T::zero()) || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite {
                    pivot: i,
                    value: d.to_f64().unwrap_or(f64::NAN),
                });
            }
            scale.push(T::one() / d.sqrt());
        }
        let mut l = vec![Complex::<T>::zero(); n * n];
        for j in 0..n {
            let mut djj = gram.get(j, j).re * scale[j] * scale[j];
            for k in 0..j {
                djj = djj - l[j * n + k].norm_sqr();
            }
            if !(djj > T::zero()) {
                return Err(LinalgError::NotPositiveDefinite {
                    pivot: j,
                    value: djj.to_f64().unwrap_or(f64::NAN),
                });
            }
            let ljj = djj.sqrt();
            l[j * n + j] = Complex::new(ljj, T::zero());
            for i in (j + 1)..n {
                let mut s = gram.get(i, j) * scale[i] * scale[j];
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / ljj;
            }
        }
        let (mut lo, mut hi) = (T::infinity(), T::zero());
        for i in 0..n {
            let v = l[i * n + i].re;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let cond_estimate = if n == 0 { T::one() } else { (hi / lo) * (hi / lo) };
        Ok(Self {
            n,
            scale,
            lower: l,
            cond_estimate,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Lower bound `(max L_ii / min L_ii)^2` on the 2-norm condition number
    /// of the pre-scaled Gram matrix.
    pub fn cond_estimate(&self) -> T {
        self.cond_estimate
    }

    pub fn scale(&self) -> &[T] {
        &self.scale
    }

    /// `L^{-1} S v`: coordinates of basis values in the orthonormal frame.
    pub fn whiten(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.n;
        let mut y: Vec<Complex<T>> = v.iter().zip(&self.scale).map(|(a, s)| *a * *s).collect();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - self.lower[i * n + k] * y[k];
            }
            y[i] = s / self.lower[i * n + i].re;
        }
        y
    }

    /// Coefficients `a` with `sum_j a_j b_j = sum_k c_k e_k`, where `e = L^{-1} S b`,
    /// i.e. `a = S L^{-T} c`.
    pub fn orthonormal_to_basis(&self, c: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.n;
        let mut y = c.to_vec();
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s = s - self.lower[k * n + i] * y[k];
            }
            y[i] = s / self.lower[i * n + i].re;
        }
        y.iter().zip(&self.scale).map(|(a, s)| *a * *s).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn sample_gram(n: usize) -> HermitianMatrix<f64> {
        // Gram of n vectors in C^{n+2} with a deterministic pattern.
        let vecs: Vec<Vec<Complex64>> = (0..n)
            .map(|i| {
                (0..n + 2)
                    .map(|k| {
                        let x = ((i + 1) * (k + 2)) as f64;
                        Complex64::new((x * 0.7 + i as f64).sin(), (x * x * 0.11).cos()) * 10f64.powi(i as i32 - 2)
                    })
                    .collect()
            })
            .collect();
        HermitianMatrix::from_fn_upper(n, |i, j| {
            vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b.conj()).sum()
        })
    }

    #[test]
    fn whitened_basis_is_orthonormal() {
        let g = sample_gram(5);
        let ch = PrescaledCholesky::factor(&g).unwrap();
        // Columns of W = L^{-1} S satisfy W G W^H = I.
        let w: Vec<Vec<Complex64>> = (0..5)
            .map(|j| {
                let mut e = vec![Complex64::zero(); 5];
                e[j] = Complex64::one();
                ch.whiten(&e)
            })
            .collect();
        for a in 0..5 {
            for b in 0..5 {
                let mut s = Complex64::zero();
                for i in 0..5 {
                    for j in 0..5 {
                        s += w[i][a] * g.get(i, j) * w[j][b].conj();
                    }
                }
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((s - expect).norm() < 1e-10, "({a},{b}) -> {s}");
            }
        }
    }

    #[test]
    fn orthonormal_to_basis_inverts_whitening() {
        let g = sample_gram(4);
        let ch = PrescaledCholesky::factor(&g).unwrap();
        let c = vec![
            Complex64::new(0.3, -0.1),
            Complex64::new(-1.0, 0.5),
            Complex64::new(0.0, 2.0),
            Complex64::new(0.7, 0.7),
        ];
        let a = ch.orthonormal_to_basis(&c);
        // ||sum a_j b_j||^2 = a^T G conj(a) must equal |c|^2
        let mut norm = Complex64::zero();
        for i in 0..4 {
            for j in 0..4 {
                norm += a[i] * g.get(i, j) * a[j].conj();
            }
        }
        let cn: f64 = c.iter().map(|x| x.norm_sqr()).sum();
        assert!((norm.re - cn).abs() < 1e-10 * cn);
    }

    #[test]
    fn indefinite_matrix_reports_pivot() {
        let g = HermitianMatrix::from_fn_upper(2, |i, j| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(2.0, 0.0)
            }
        });
        match PrescaledCholesky::factor(&g) {
            Err(LinalgError::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn prescaling_removes_diagonal_spread() {
        let d: Vec<f64> = (0..30).map(|k| 10f64.powi(-k)).collect();
        let ch = PrescaledCholesky::factor(&HermitianMatrix::from_diagonal(&d)).unwrap();
        assert!((ch.cond_estimate() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_precision_factorization() {
        let g64 = sample_gram(4);
        let g32 = HermitianMatrix::<f32>::from_fn_upper(4, |i, j| {
            let v = g64.get(i, j);
            Complex::new(v.re as f32, v.im as f32)
        });
        let ch = PrescaledCholesky::factor(&g32).unwrap();
        let ch64 = PrescaledCholesky::factor(&g64).unwrap();
        assert!((ch.cond_estimate() as f64 / ch64.cond_estimate() - 1.0).abs() < 1e-2);
    }

    #[test]
    fn kronecker_layout() {
        let a = HermitianMatrix::<f64>::from_diagonal(&[1.0, 2.0]);
        let b = HermitianMatrix::<f64>::from_diagonal(&[3.0, 5.0, 7.0]);
        let k = HermitianMatrix::kronecker(&a, &b, 2.0);
        assert_eq!(k.diagonal(), vec![6.0, 10.0, 14.0, 12.0, 20.0, 28.0]);
    }
}
