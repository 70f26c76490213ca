//! Dense complex linear algebra on small Hermitian matrices.
//!
//! Eigendecompositions are delegated to `nalgebra`'s Hermitian eigensolver;
//! matrix functions (exponentials, traces of exponentials) go through the
//! spectral decomposition `A = U diag(λ) U†`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{LabError, Result};

/// General square complex matrix.
pub type ComplexMatrix = DMatrix<Complex64>;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Dense Hermitian matrix `A = A†`.
///
/// Construction symmetrises its input (`A ← (A + A†)/2`), so accumulated
/// round-off in a nominally Hermitian matrix is absorbed rather than rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(ComplexMatrix);

/// Eigenvalues in ascending order and the matching orthonormal eigenvectors (columns).
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianMatrix {
    pub fn new(a: ComplexMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(LabError::DimensionMismatch(format!(
                "expected a nonempty square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        Ok(Self::symmetrize(a))
    }

    fn symmetrize(a: ComplexMatrix) -> Self {
        let adj = a.adjoint();
        HermitianMatrix((a + adj) * Complex64::new(0.5, 0.0))
    }

    /// From a real square array (row-major rows).
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(LabError::DimensionMismatch("ragged real matrix".into()));
        }
        Self::new(DMatrix::from_fn(m, m, |i, j| Complex64::new(rows[i][j], 0.0)))
    }

    /// From real and imaginary parts; the result is the Hermitian part of `re + i·im`.
    pub fn from_parts(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<Self> {
        let m = re.len();
        if re.iter().chain(im).any(|r| r.len() != m) || im.len() != m {
            return Err(LabError::DimensionMismatch("real and imaginary parts must be the same square shape".into()));
        }
        Self::new(DMatrix::from_fn(m, m, |i, j| Complex64::new(re[i][j], im[i][j])))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let m = diag.len();
        HermitianMatrix(DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                Complex64::new(diag[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    pub fn zeros(m: usize) -> Self {
        HermitianMatrix(DMatrix::zeros(m, m))
    }

    pub fn identity(m: usize) -> Self {
        HermitianMatrix(DMatrix::identity(m, m))
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_real_diagonal(&[value])
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn scale(&self, s: f64) -> Self {
        HermitianMatrix(&self.0 * Complex64::new(s, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        HermitianMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        HermitianMatrix(&self.0 - &other.0)
    }

    /// `Σ w_k A_k`; all matrices must share the dimension of `first`.
    pub fn weighted_sum<'a, I>(dim: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (f64, &'a HermitianMatrix)>,
    {
        let mut acc = DMatrix::zeros(dim, dim);
        for (w, a) in terms {
            if w != 0.0 {
                acc += &a.0 * Complex64::new(w, 0.0);
            }
        }
        Self::symmetrize(acc)
    }

    /// Full spectral decomposition, eigenvalues ascending.
    pub fn eigh(&self) -> Result<Eigh> {
        let dim = self.dim();
        let eig = SymmetricEigen::try_new(self.0.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
            .ok_or(LabError::EigenNonConvergence { dim })?;
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(dim, dim, |i, j| eig.eigenvectors[(i, order[j])]);
        Ok(Eigh { values, vectors })
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        match self.dim() {
            1 => Ok(vec![self.0[(0, 0)].re]),
            2 => {
                let (lo, hi) = eig2(&self.0);
                Ok(vec![lo, hi])
            }
            _ => Ok(self.eigh()?.values),
        }
    }

    pub fn lambda_max(&self) -> Result<f64> {
        match self.dim() {
            1 => Ok(self.0[(0, 0)].re),
            2 => Ok(eig2(&self.0).1),
            _ => Ok(*self.eigenvalues()?.last().expect("nonempty")),
        }
    }

    pub fn lambda_min(&self) -> Result<f64> {
        Ok(self.eigenvalues()?[0])
    }

    /// Largest absolute eigenvalue.
    pub fn op_norm(&self) -> Result<f64> {
        let ev = self.eigenvalues()?;
        Ok(ev[0].abs().max(ev[ev.len() - 1].abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(&self.0)
    }

    /// `f(A) = U diag(f(λ)) U†` for a complex-valued spectral function.
    pub fn spectral_map<F: Fn(f64) -> Complex64>(&self, f: F) -> Result<ComplexMatrix> {
        let Eigh { values, vectors } = self.eigh()?;
        let m = self.dim();
        let mut scaled = vectors.clone();
        for (j, &lam) in values.iter().enumerate() {
            let fj = f(lam);
            for i in 0..m {
                scaled[(i, j)] *= fj;
            }
        }
        Ok(scaled * vectors.adjoint())
    }
}

/// Closed-form eigenvalues of a 2×2 Hermitian matrix, ascending.
fn eig2(a: &ComplexMatrix) -> (f64, f64) {
    let p = a[(0, 0)].re;
    let q = a[(1, 1)].re;
    let b = a[(0, 1)];
    let mid = 0.5 * (p + q);
    let rad = (0.25 * (p - q) * (p - q) + b.norm_sqr()).sqrt();
    (mid - rad, mid + rad)
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn lambda_max(a: &HermitianMatrix) -> Result<f64> {
    a.lambda_max()
}

/// `e^{zA}` through the eigendecomposition of `A`.
pub fn expm_scaled(a: &HermitianMatrix, z: Complex64) -> Result<ComplexMatrix> {
    a.spectral_map(|lam| (z * lam).exp())
}

/// `e^{sA}` for real `s`, which is again Hermitian.
pub fn expm_hermitian(a: &HermitianMatrix, s: f64) -> Result<HermitianMatrix> {
    HermitianMatrix::new(a.spectral_map(|lam| Complex64::new((s * lam).exp(), 0.0))?)
}

/// Largest singular value.
pub fn op_norm(a: &ComplexMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `tr e^A = Σ e^{λ_i}`.
pub fn trace_exp(a: &HermitianMatrix) -> Result<f64> {
    Ok(a.eigenvalues()?.iter().map(|l| l.exp()).sum())
}

pub fn trace(a: &ComplexMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

/// The Hermitian dilation `[[0, vᵀ], [v, 0]]` of a real vector, of size `n + 1`.
/// Its spectrum is `{±‖v‖₂, 0, …, 0}`.
pub fn dilation(v: &[f64]) -> HermitianMatrix {
    let n = v.len();
    let mut a = DMatrix::zeros(n + 1, n + 1);
    for (k, &vk) in v.iter().enumerate() {
        a[(0, k + 1)] = Complex64::new(vk, 0.0);
        a[(k + 1, 0)] = Complex64::new(vk, 0.0);
    }
    HermitianMatrix(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn lambda_max_diagonal_and_zero() {
        assert_relative_eq!(HermitianMatrix::from_real_diagonal(&[1.0, 2.0]).lambda_max().unwrap(), 2.0);
        assert_eq!(HermitianMatrix::zeros(3).lambda_max().unwrap(), 0.0);
    }

    #[test]
    fn dilation_spectrum() {
        let d = dilation(&[3.0, 4.0]);
        assert_eq!(d.dim(), 3);
        let ev = d.eigh().unwrap().values;
        assert_relative_eq!(ev[0], -5.0, epsilon = 1e-12);
        assert_relative_eq!(ev[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(ev[2], 5.0, epsilon = 1e-12);
        assert_relative_eq!(d.lambda_max().unwrap(), 5.0, epsilon = 1e-12);
        assert_relative_eq!(op_norm(d.as_matrix()), 5.0, epsilon = 1e-12);

        let one = dilation(&[1.0]);
        assert_eq!(one.get(0, 1), c(1.0, 0.0));
        assert_eq!(one.get(1, 0), c(1.0, 0.0));
        assert_relative_eq!(one.lambda_max().unwrap(), 1.0, epsilon = 1e-14);
        assert_eq!(dilation(&[0.0, 0.0]), HermitianMatrix::zeros(3));
    }

    #[test]
    fn construction_symmetrizes() {
        let mut a = DMatrix::from_element(2, 2, c(0.0, 0.0));
        a[(0, 1)] = c(1.0, 1.0);
        a[(1, 0)] = c(1.0, -1.0 + 1e-15);
        let h = HermitianMatrix::new(a).unwrap();
        assert_eq!(h.get(0, 1), h.get(1, 0).conj());
        assert!(HermitianMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn expm_special_cases() {
        let a = HermitianMatrix::from_real_rows(&[vec![0.3, -1.0], vec![-1.0, 2.0]]).unwrap();
        let e0 = expm_scaled(&a, c(0.0, 0.0)).unwrap();
        assert!((e0 - ComplexMatrix::identity(2, 2)).norm() < 1e-14);

        let d = HermitianMatrix::from_real_diagonal(&[1.0, -1.0]);
        let e = expm_scaled(&d, c(1.0, 0.0)).unwrap();
        assert_relative_eq!(e[(0, 0)].re, std::f64::consts::E, epsilon = 1e-14);
        assert_relative_eq!(e[(1, 1)].re, 1.0 / std::f64::consts::E, epsilon = 1e-14);
        assert!(e[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn norms_and_trace_exp() {
        let d = HermitianMatrix::from_real_diagonal(&[1.0, -3.0]);
        assert_relative_eq!(op_norm(d.as_matrix()), 3.0, epsilon = 1e-14);
        assert_relative_eq!(d.op_norm().unwrap(), 3.0, epsilon = 1e-14);
        assert_relative_eq!(frobenius_norm(HermitianMatrix::identity(4).as_matrix()), 2.0);
        assert_relative_eq!(trace_exp(&HermitianMatrix::zeros(3)).unwrap(), 3.0);
    }

    #[test]
    fn closed_form_2x2_matches_solver() {
        let a = HermitianMatrix::new(DMatrix::from_row_slice(
            2,
            2,
            &[c(0.7, 0.0), c(0.2, -1.3), c(0.2, 1.3), c(-2.0, 0.0)],
        ))
        .unwrap();
        let fast = a.eigenvalues().unwrap();
        let full = a.eigh().unwrap().values;
        assert_relative_eq!(fast[0], full[0], epsilon = 1e-12);
        assert_relative_eq!(fast[1], full[1], epsilon = 1e-12);
    }
}
