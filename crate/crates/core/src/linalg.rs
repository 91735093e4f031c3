//! Small dense complex matrices.

use std::f64::consts::FRAC_1_SQRT_2;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Build from row-major entries. Entries must be finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("matrix dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("matrix entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_real_diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        out
    }

    /// `self† · rhs` without forming the adjoint.
    pub fn adjoint_mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.rows, rhs.rows, "row counts differ");
        let mut out = Self::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            for i in 0..self.cols {
                let a = self[(k, i)].conj();
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        out
    }

    /// `self · self†`.
    pub fn gram_outer(&self) -> Self {
        let mut out = Self::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in i..self.rows {
                let mut acc = ZERO;
                for k in 0..self.cols {
                    acc += self[(i, k)] * self[(j, k)].conj();
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc.conj();
            }
        }
        out
    }

    /// `self† · self`.
    pub fn gram_inner(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.cols);
        for i in 0..self.cols {
            for j in i..self.cols {
                let mut acc = ZERO;
                for k in 0..self.rows {
                    acc += self[(k, i)].conj() * self[(k, j)];
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc.conj();
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// The first `k` columns as a new matrix.
    pub fn leading_columns(&self, k: usize) -> Self {
        assert!(k >= 1 && k <= self.cols);
        Self::from_fn(self.rows, k, |i, j| self[(i, j)])
    }

    pub fn max_hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigenvalues sorted in descending order with matching unit eigenvectors
/// in the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 100;

fn off_diagonal_norm(a: &CMatrix) -> f64 {
    let mut s = 0.0;
    for i in 0..a.rows {
        for j in 0..a.cols {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigendecomposition of a Hermitian matrix.
pub fn hermitian_eig(a: &CMatrix) -> Result<EigenDecomposition> {
    if !a.is_square() {
        return Err(invalid(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let scale = a.frobenius_norm();
    if a.max_hermitian_defect() > 1e-12 * scale.max(1.0) {
        return Err(invalid("matrix is not Hermitian"));
    }
    let n = a.rows;
    let mut a = a.clone();
    for i in 0..n {
        a[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
    }
    let mut v = CMatrix::identity(n);
    let target = JACOBI_TOL * scale;

    let mut sweeps = 0;
    while off_diagonal_norm(&a) > target {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::Numeric {
                message: "Jacobi iteration did not converge".into(),
                estimate: off_diagonal_norm(&a),
            });
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));
    let values = order.iter().map(|&i| diag[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(EigenDecomposition { values, vectors })
}

// One complex Jacobi rotation zeroing a[p][q].
fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let g = apq.norm();
    if g == 0.0 {
        return;
    }
    let e = apq / g;
    let ec = e.conj();
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let tau = (aqq - app) / (2.0 * g);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let n = a.rows;

    // A <- A U
    for i in 0..n {
        let xp = a[(i, p)];
        let xq = a[(i, q)];
        a[(i, p)] = xp * c - xq * ec * s;
        a[(i, q)] = xp * s + xq * ec * c;
    }
    // A <- U† A
    for j in 0..n {
        let xp = a[(p, j)];
        let xq = a[(q, j)];
        a[(p, j)] = xp * c - xq * e * s;
        a[(q, j)] = xp * s + xq * e * c;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);

    for i in 0..v.rows {
        let xp = v[(i, p)];
        let xq = v[(i, q)];
        v[(i, p)] = xp * c - xq * ec * s;
        v[(i, q)] = xp * s + xq * ec * c;
    }
}

/// Modified Gram–Schmidt with one reorthogonalization pass.
pub fn orthonormalize(m: &CMatrix) -> Result<CMatrix> {
    if m.rows < m.cols {
        return Err(invalid(format!(
            "need rows >= cols to orthonormalize, got {}x{}",
            m.rows, m.cols
        )));
    }
    let largest = (0..m.cols)
        .map(|j| m.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if largest == 0.0 {
        return Err(Error::Degenerate("zero matrix has no column space".into()));
    }
    let mut q = m.clone();
    for j in 0..m.cols {
        for _pass in 0..2 {
            for k in 0..j {
                let mut proj = ZERO;
                for i in 0..m.rows {
                    proj += q[(i, k)].conj() * q[(i, j)];
                }
                for i in 0..m.rows {
                    let qik = q[(i, k)];
                    q[(i, j)] -= proj * qik;
                }
            }
        }
        let norm = (0..m.rows).map(|i| q[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-12 * largest {
            return Err(Error::Degenerate(format!(
                "column {j} is linearly dependent on the previous ones"
            )));
        }
        for i in 0..m.rows {
            q[(i, j)] /= norm;
        }
    }
    Ok(q)
}

/// One draw of a matrix with i.i.d. CN(0, 1) entries.
pub fn sample_gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
    })
}

/// `ln det(I + c·A)` for Hermitian positive semidefinite `A` and `c ≥ 0`,
/// by Cholesky factorization.
pub fn logdet_identity_plus(a: &CMatrix, c: f64) -> f64 {
    let n = a.rows;
    let mut l = CMatrix::zeros(n, n);
    let mut acc = 0.0;
    for j in 0..n {
        let mut d = 1.0 + c * a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        let d = d.max(f64::MIN_POSITIVE).sqrt();
        l[(j, j)] = Complex64::new(d, 0.0);
        acc += d.ln();
        for i in j + 1..n {
            let mut s = a[(i, j)] * c;
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    2.0 * acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let g = sample_gaussian_matrix(n, n, rng);
        let h = g.adjoint();
        CMatrix::from_fn(n, n, |i, j| (g[(i, j)] + h[(i, j)]) * 0.5)
    }

    fn reconstruct(e: &EigenDecomposition) -> CMatrix {
        let l = CMatrix::from_real_diag(&e.values);
        e.vectors.mul(&l).mul(&e.vectors.adjoint())
    }

    #[test]
    fn identity_eigenvalues() {
        let e = hermitian_eig(&CMatrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_is_sorted() {
        let e = hermitian_eig(&CMatrix::from_real_diag(&[1.0, 3.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert!((e.vectors[(1, 0)].norm() - 1.0).abs() < 1e-15);
        assert!((e.vectors[(0, 1)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=8 {
            let a = random_hermitian(n, &mut rng);
            let e = hermitian_eig(&a).unwrap();
            let err = reconstruct(&e).sub(&a).frobenius_norm();
            assert!(err <= 1e-9 * a.frobenius_norm(), "n={n} err={err}");
            let vv = e.vectors.gram_inner().sub(&CMatrix::identity(n));
            assert!(vv.frobenius_norm() < 1e-10);
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut a = CMatrix::identity(2);
        a[(0, 1)] = Complex64::new(0.0, 1.0);
        assert!(matches!(hermitian_eig(&a), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            hermitian_eig(&CMatrix::zeros(2, 3)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn orthonormalize_basics() {
        let i = CMatrix::identity(3);
        assert_eq!(orthonormalize(&i).unwrap(), i);
        let v = CMatrix::from_vec(2, 1, vec![Complex64::new(3.0, 0.0), Complex64::new(0.0, 4.0)]).unwrap();
        let q = orthonormalize(&v).unwrap();
        assert!((q[(0, 0)] - Complex64::new(0.6, 0.0)).norm() < 1e-15);
        assert!((q[(1, 0)] - Complex64::new(0.0, 0.8)).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = sample_gaussian_matrix(4, 2, &mut rng);
        let q = orthonormalize(&m).unwrap();
        assert!(q.gram_inner().sub(&CMatrix::identity(2)).frobenius_norm() < 1e-10);
    }

    #[test]
    fn orthonormalize_rank_deficient() {
        let c = Complex64::new(1.0, 1.0);
        let m = CMatrix::from_vec(3, 2, vec![c, c * 2.0, c, c * 2.0, ZERO, ZERO]).unwrap();
        assert!(matches!(orthonormalize(&m), Err(Error::Degenerate(_))));
    }

    #[test]
    fn gaussian_is_deterministic() {
        let a = sample_gaussian_matrix(3, 2, &mut ChaCha8Rng::seed_from_u64(11));
        let b = sample_gaussian_matrix(3, 2, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }

    #[test]
    fn logdet_matches_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = sample_gaussian_matrix(4, 3, &mut rng);
        let a = g.gram_inner();
        let e = hermitian_eig(&a).unwrap();
        let want: f64 = e.values.iter().map(|l| (1.0 + 2.5 * l).ln()).sum();
        assert!((logdet_identity_plus(&a, 2.5) - want).abs() < 1e-12);
    }
}
