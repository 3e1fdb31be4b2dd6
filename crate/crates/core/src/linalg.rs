//! Dense complex linear algebra on top of `nalgebra`.
//!
//! Every tolerance in this module is relative to `max(1, ‖A‖)` so that
//! near-zero matrices are not rejected by absolute thresholds.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type ComplexMatrix = DMatrix<C64>;
pub type RealMatrix = DMatrix<f64>;

/// Relative asymmetry allowed for matrices flagged Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

const EIG_MAX_ITER: usize = 10_000;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(1., 0.), c64(1., 0.), c64(0., 0.)])
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(0., -1.), c64(0., 1.), c64(0., 0.)])
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[c64(1., 0.), c64(0., 0.), c64(0., 0.), c64(-1., 0.)])
}

/// Complex diagonal matrix from real entries.
pub fn real_diag(values: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| c64(v, 0.0)),
    ))
}

pub fn to_complex(a: &RealMatrix) -> ComplexMatrix {
    a.map(|v| c64(v, 0.0))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// `(A + A†)/2`.
pub fn hermitian_part(a: &ComplexMatrix) -> ComplexMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Largest entrywise deviation from Hermiticity, `max_ij |A_ij − conj(A_ji)|`.
pub fn hermitian_defect(a: &ComplexMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

fn ensure_square(a: &ComplexMatrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare(a.nrows(), a.ncols()));
    }
    Ok(())
}

/// Checks the Hermitian flag invariant against `max(1, ‖A‖_op)`.
pub fn check_hermitian(a: &ComplexMatrix) -> Result<()> {
    ensure_square(a)?;
    let defect = hermitian_defect(a);
    // Frobenius norm bounds the operator norm from above; only pay for an
    // SVD when the cheap test is inconclusive.
    if defect <= HERMITIAN_TOL * a.norm().max(1.0) && defect <= HERMITIAN_TOL {
        return Ok(());
    }
    if defect <= HERMITIAN_TOL * op_norm(a).max(1.0) {
        Ok(())
    } else {
        Err(Error::NotHermitian(defect))
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: ComplexMatrix,
}

impl EigenSystem {
    /// `V diag(f(λ)) V†`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let fj = f(lam);
            for i in 0..scaled.nrows() {
                scaled[(i, j)] *= fj;
            }
        }
        scaled * v.adjoint()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }
}

pub fn herm_eig(a: &ComplexMatrix) -> Result<EigenSystem> {
    check_hermitian(a)?;
    herm_eig_unchecked(&hermitian_part(a))
}

/// Decomposition without the symmetry check; the input is symmetrized.
pub(crate) fn herm_eig_unchecked(a: &ComplexMatrix) -> Result<EigenSystem> {
    let n = a.nrows();
    if n == 0 {
        return Ok(EigenSystem {
            eigenvalues: DVector::zeros(0),
            eigenvectors: ComplexMatrix::zeros(0, 0),
        });
    }
    let eig = nalgebra::SymmetricEigen::try_new(hermitian_part(a), f64::EPSILON, EIG_MAX_ITER)
        .ok_or(Error::NoConvergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn herm_eigenvalues(a: &ComplexMatrix) -> Result<DVector<f64>> {
    Ok(herm_eig_unchecked(a)?.eigenvalues)
}

pub fn singular_values(a: &ComplexMatrix) -> DVector<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DVector::zeros(0);
    }
    a.clone().singular_values()
}

/// Largest singular value.
pub fn op_norm(a: &ComplexMatrix) -> f64 {
    singular_values(a).iter().cloned().fold(0.0, f64::max)
}

/// Sum of singular values.
pub fn trace_norm(a: &ComplexMatrix) -> f64 {
    singular_values(a).iter().sum()
}

/// Square root of a positive semidefinite matrix.
pub fn psd_sqrt(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = herm_eig(a)?;
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = -1e-10 * scale;
    if eig.min() < floor {
        return Err(Error::NotPsd(eig.min()));
    }
    Ok(eig.map_spectrum(|lam| c64(lam.max(0.0).sqrt(), 0.0)))
}

/// `exp(−i H t)` for Hermitian `H`.
pub fn herm_exp(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    let eig = herm_eig(h)?;
    Ok(eig.map_spectrum(|lam| C64::from_polar(1.0, -lam * t)))
}

/// `‖U†U − I‖_op`.
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    let n = u.ncols();
    op_norm(&(u.adjoint() * u - identity(n)))
}

/// Eigenvalues of a general square complex matrix via the Schur form.
pub fn complex_eigenvalues(a: &ComplexMatrix) -> Result<Vec<C64>> {
    ensure_square(a)?;
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, EIG_MAX_ITER)
        .ok_or(Error::NoConvergence)?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// `Re Tr(A B)`.
pub fn re_trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..a.ncols() {
            let x = a[(i, k)];
            let y = b[(k, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

pub fn trace(a: &ComplexMatrix) -> C64 {
    a.trace()
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &RealMatrix) -> DVector<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let mut vals: Vec<f64> = sym.symmetric_eigenvalues().iter().cloned().collect();
    vals.sort_by(f64::total_cmp);
    DVector::from_vec(vals)
}

/// Smallest eigenvalue of a real symmetric matrix.
pub fn sym_min_eigenvalue(a: &RealMatrix) -> f64 {
    sym_eigenvalues(a).iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Spectral norm of a real symmetric matrix.
pub fn sym_norm(a: &RealMatrix) -> f64 {
    sym_eigenvalues(a)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}
