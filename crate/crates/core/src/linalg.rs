//! Dense Hermitian linear algebra and circularly-symmetric complex Gaussians.
//!
//! Matrices are stored dense and row-major. Dimensions here are at most a
//! few hundred, so a straightforward complex Cholesky is all that is needed.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

pub type ComplexVector = Vec<Complex64>;

/// Diagonal loading applied by [`HermitianMatrix::default_ridge`], relative
/// to the average diagonal entry.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-6;

/// Dense N×N Hermitian matrix.
///
/// Constructors symmetrize their input, so `a[i][j] == conj(a[j][i])` holds
/// exactly and the diagonal is real.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl HermitianMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        let mut m = Self::zeros(dim);
        m.add_diagonal(scale);
        m
    }

    /// Builds the matrix from its upper triangle: `f(i, j)` is called for
    /// `i <= j` only and the lower triangle is filled by conjugation.
    pub fn from_upper_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                if i == j {
                    m.data[i * dim + i] = Complex64::new(v.re, 0.0);
                } else {
                    m.data[i * dim + j] = v;
                    m.data[j * dim + i] = v.conj();
                }
            }
        }
        m
    }

    /// Projects an arbitrary square matrix onto the Hermitian matrices,
    /// `(A + Aᴴ) / 2`.
    pub fn from_row_major(dim: usize, data: &[Complex64]) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                actual: data.len(),
            });
        }
        Ok(Self::from_upper_fn(dim, |i, j| {
            (data[i * dim + j] + data[j * dim + i].conj()) * 0.5
        }))
    }

    /// Rebuilds a matrix from the row-major upper triangle, as produced by
    /// [`upper_triangle`](Self::upper_triangle).
    pub fn from_upper_triangle(dim: usize, upper: &[Complex64]) -> Result<Self> {
        let expected = dim * (dim + 1) / 2;
        if upper.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: upper.len(),
            });
        }
        let mut it = upper.iter();
        Ok(Self::from_upper_fn(dim, |_, _| {
            *it.next().expect("length checked above")
        }))
    }

    /// Outer product `v vᴴ`.
    pub fn outer(v: &[Complex64]) -> Self {
        Self::from_upper_fn(v.len(), |i, j| v[i] * v[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_row_major(&self) -> &[Complex64] {
        &self.data
    }

    pub fn upper_triangle(&self) -> impl Iterator<Item = Complex64> + '_ {
        (0..self.dim).flat_map(move |i| (i..self.dim).map(move |j| self.get(i, j)))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).sum()
    }

    /// `DEFAULT_RIDGE_SCALE · trace / N`.
    pub fn default_ridge(&self) -> f64 {
        DEFAULT_RIDGE_SCALE * self.trace() / self.dim as f64
    }

    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i].re += value;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn try_add(&self, other: &HermitianMatrix) -> Result<HermitianMatrix> {
        check_dim(self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> ComplexVector {
        debug_assert_eq!(x.len(), self.dim);
        (0..self.dim).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self − other`.
    pub fn frobenius_distance(&self, other: &HermitianMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// Plain (non-conjugating) dot product `Σ a_i b_i`.
fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// `‖a − b‖²`.
pub fn distance_sqr(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

/// Lower Cholesky factor `L` of a loaded Hermitian matrix `A + ridge·I = L Lᴴ`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<Complex64>,
    log_det: f64,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Natural log of the determinant of the factored matrix.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn lower(&self, i: usize, j: usize) -> Complex64 {
        self.lower[i * self.dim + j]
    }

    /// Solves `L z = b` in place.
    pub fn forward_solve_in_place(&self, b: &mut [Complex64]) {
        let n = self.dim;
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i];
            let s: Complex64 = dot(row, &b[..i]);
            b[i] = (b[i] - s) / self.lower[i * n + i].re;
        }
    }

    /// Solves `Lᴴ x = z` in place.
    pub fn backward_solve_in_place(&self, z: &mut [Complex64]) {
        let n = self.dim;
        for i in (0..n).rev() {
            let s: Complex64 = (i + 1..n)
                .map(|k| self.lower[k * n + i].conj() * z[k])
                .sum();
            z[i] = (z[i] - s) / self.lower[i * n + i].re;
        }
    }

    /// `L z`.
    pub fn mul_lower(&self, z: &[Complex64]) -> ComplexVector {
        let n = self.dim;
        (0..n)
            .map(|i| dot(&self.lower[i * n..i * n + i + 1], &z[..=i]))
            .collect()
    }

    /// `L Lᴴ`, the factored matrix.
    pub fn reconstruct(&self) -> HermitianMatrix {
        let n = self.dim;
        HermitianMatrix::from_upper_fn(n, |i, j| {
            (0..=i)
                .map(|k| self.lower[i * n + k] * self.lower[j * n + k].conj())
                .sum()
        })
    }

    /// Quadratic form `dᴴ A⁻¹ d` where `A` is the factored matrix.
    pub fn mahalanobis_sqr(&self, diff: &[Complex64]) -> f64 {
        let mut z = diff.to_vec();
        self.forward_solve_in_place(&mut z);
        norm_sqr(&z)
    }
}

/// Factors `m + ridge·I`.
///
/// Fails with [`Error::NotPositiveDefinite`] when a pivot is not strictly
/// positive; callers may retry with a larger ridge.
pub fn hermitian_cholesky(m: &HermitianMatrix, ridge: f64) -> Result<CholeskyFactor> {
    let n = m.dim;
    let mut lower = vec![Complex64::new(0.0, 0.0); n * n];
    let mut log_det = 0.0;
    for j in 0..n {
        let lj = &lower[j * n..j * n + j];
        let pivot = m.get(j, j).re + ridge - norm_sqr(lj);
        if !(pivot > 0.0 && pivot.is_finite()) {
            return Err(Error::NotPositiveDefinite { row: j, pivot });
        }
        let d = pivot.sqrt();
        log_det += 2.0 * d.ln();
        lower[j * n + j] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= lower[i * n + k] * lower[j * n + k].conj();
            }
            lower[i * n + j] = s / d;
        }
    }
    Ok(CholeskyFactor {
        dim: n,
        lower,
        log_det,
    })
}

/// Solves `A x = rhs` for the matrix `A` behind `factor`.
pub fn solve_psd(factor: &CholeskyFactor, rhs: &[Complex64]) -> Result<ComplexVector> {
    check_dim(factor.dim, rhs.len())?;
    let mut x = rhs.to_vec();
    factor.forward_solve_in_place(&mut x);
    factor.backward_solve_in_place(&mut x);
    Ok(x)
}

/// Log density of `CN(mean, cov)` at `x`:
/// `−N ln π − ln det(cov) − (x−mean)ᴴ cov⁻¹ (x−mean)`.
///
/// `cov` is factored as given, without diagonal loading.
pub fn log_gauss_density(
    x: &[Complex64],
    mean: &[Complex64],
    cov: &HermitianMatrix,
) -> Result<f64> {
    check_dim(cov.dim, x.len())?;
    check_dim(cov.dim, mean.len())?;
    let factor = hermitian_cholesky(cov, 0.0)?;
    Ok(log_gauss_density_factored(x, mean, &factor))
}

pub fn log_gauss_density_factored(
    x: &[Complex64],
    mean: &[Complex64],
    factor: &CholeskyFactor,
) -> f64 {
    let diff: ComplexVector = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    log_normalizer(factor.dim) - factor.log_det - factor.mahalanobis_sqr(&diff)
}

/// `ln Σ exp(v)`, stable for large magnitudes. Entries equal to `-inf`
/// contribute nothing; an all-`-inf` input yields `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Vector of i.i.d. `CN(0, 1)` entries (real and imaginary parts each with
/// variance 1/2).
pub fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexVector {
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
        })
        .collect()
}

/// Draws `count` samples `mean + L z` with `L` the Cholesky factor of `cov`
/// (default ridge) and `z ~ CN(0, I)`. A zero covariance yields `count`
/// copies of `mean`.
pub fn sample_gaussian<R: Rng + ?Sized>(
    mean: &[Complex64],
    cov: &HermitianMatrix,
    rng: &mut R,
    count: usize,
) -> Result<Vec<ComplexVector>> {
    check_dim(cov.dim, mean.len())?;
    if cov.data.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
        return Ok(vec![mean.to_vec(); count]);
    }
    let factor = hermitian_cholesky(cov, cov.default_ridge())?;
    Ok((0..count)
        .map(|_| sample_with_factor(mean, &factor, rng))
        .collect())
}

pub(crate) fn sample_with_factor<R: Rng + ?Sized>(
    mean: &[Complex64],
    factor: &CholeskyFactor,
    rng: &mut R,
) -> ComplexVector {
    let z = standard_complex_normal(rng, factor.dim);
    factor
        .mul_lower(&z)
        .into_iter()
        .zip(mean)
        .map(|(a, b)| a + b)
        .collect()
}

/// `−N ln π`, the log normalizer of an N-dimensional complex Gaussian.
pub(crate) fn log_normalizer(dim: usize) -> f64 {
    -(dim as f64) * PI.ln()
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// `B Bᴴ` for a random N×N `B`: positive definite almost surely.
    pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, n: usize) -> HermitianMatrix {
        let b: Vec<Complex64> = standard_complex_normal(rng, n * n);
        let mut m = HermitianMatrix::from_upper_fn(n, |i, j| {
            (0..n).map(|k| b[i * n + k] * b[j * n + k].conj()).sum()
        });
        m.add_diagonal(0.1);
        m
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting; shares no
    /// code with the Cholesky path.
    pub fn dense_inverse(m: &HermitianMatrix) -> Vec<Complex64> {
        let n = m.dim();
        let mut a: Vec<Complex64> = m.as_row_major().to_vec();
        let mut inv = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            inv[i * n + i] = Complex64::new(1.0, 0.0);
        }
        for col in 0..n {
            let p = (col..n)
                .max_by(|&x, &y| a[x * n + col].norm().total_cmp(&a[y * n + col].norm()))
                .unwrap();
            for k in 0..n {
                a.swap(col * n + k, p * n + k);
                inv.swap(col * n + k, p * n + k);
            }
            let d = a[col * n + col];
            for k in 0..n {
                a[col * n + k] /= d;
                inv[col * n + k] /= d;
            }
            for r in 0..n {
                if r != col {
                    let f = a[r * n + col];
                    for k in 0..n {
                        let (ak, ik) = (a[col * n + k], inv[col * n + k]);
                        a[r * n + k] -= f * ak;
                        inv[r * n + k] -= f * ik;
                    }
                }
            }
        }
        inv
    }

    pub fn dense_mul_vec(m: &[Complex64], n: usize, x: &[Complex64]) -> Vec<Complex64> {
        (0..n)
            .map(|i| (0..n).map(|k| m[i * n + k] * x[k]).sum())
            .collect()
    }

    /// `ln |det|` via LU without pivot bookkeeping for the sign.
    pub fn dense_log_det(m: &HermitianMatrix) -> f64 {
        let n = m.dim();
        let mut a: Vec<Complex64> = m.as_row_major().to_vec();
        let mut acc = 0.0;
        for col in 0..n {
            let p = (col..n)
                .max_by(|&x, &y| a[x * n + col].norm().total_cmp(&a[y * n + col].norm()))
                .unwrap();
            for k in 0..n {
                a.swap(col * n + k, p * n + k);
            }
            let d = a[col * n + col];
            acc += d.norm().ln();
            for r in col + 1..n {
                let f = a[r * n + col] / d;
                for k in col..n {
                    let v = a[col * n + k];
                    a[r * n + k] -= f * v;
                }
            }
        }
        acc
    }
}
