//! Quantum Fisher information of explicit state families.
//!
//! The QFIM is computed from symmetric logarithmic derivatives, `Jᵢⱼ =
//! ½Tr[ρ(LᵢLⱼ + LⱼLᵢ)]` with `∂ᵢρ = ½(ρLᵢ + Lᵢρ)`. The same module carries
//! the Bures fidelity and the Cramér-Rao covariance bound.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::channels::{DensityMatrix, ParamChannel};
use crate::error::{Error, Result};
use crate::linalg::{self, c64, ComplexMatrix, RealMatrix, C64};

/// Symmetry tolerance for labeled real matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues of a state below this fraction of `λ_max` are treated as
/// exact zeros when forming `√ρ`.
const SQRT_CUTOFF: f64 = 1e-14;

/// A state whose largest eigenvalue exceeds `1 − PURE_TOL` is treated as pure.
const PURE_TOL: f64 = 1e-10;

/// Real symmetric matrix indexed by named parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    labels: Vec<String>,
    matrix: RealMatrix,
}

impl LabeledMatrix {
    pub fn new(labels: Vec<String>, matrix: RealMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::NotSquare(matrix.nrows(), matrix.ncols()));
        }
        if labels.len() != matrix.nrows() {
            return Err(Error::DimMismatch {
                expected: matrix.nrows(),
                got: labels.len(),
            });
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > SYMMETRY_TOL * matrix.amax().max(1.0) {
            return Err(Error::InvalidInput(format!("matrix is not symmetric (asymmetry {asym:.3e})")));
        }
        let matrix = (&matrix + matrix.transpose()) * 0.5;
        Ok(LabeledMatrix { labels, matrix })
    }

    /// Labels `x1, x2, …`.
    pub fn unlabeled(matrix: RealMatrix) -> Result<Self> {
        let labels = (1..=matrix.nrows()).map(|i| format!("x{i}")).collect();
        LabeledMatrix::new(labels, matrix)
    }

    pub fn diagonal(labels: Vec<String>, values: &[f64]) -> Result<Self> {
        LabeledMatrix::new(labels, RealMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values)))
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// Entry addressed by parameter names.
    pub fn entry(&self, a: &str, b: &str) -> Result<f64> {
        let i = self.index_of(a)?;
        let j = self.index_of(b)?;
        Ok(self.matrix[(i, j)])
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::LabelMismatch(self.labels.clone(), vec![name.to_string()]))
    }

    /// The same matrix with rows and columns permuted into `order`.
    pub fn reordered<S: AsRef<str>>(&self, order: &[S]) -> Result<Self> {
        let wanted: Vec<String> = order.iter().map(|s| s.as_ref().to_string()).collect();
        let mut sorted_a = wanted.clone();
        let mut sorted_b = self.labels.clone();
        sorted_a.sort();
        sorted_b.sort();
        if sorted_a != sorted_b {
            return Err(Error::LabelMismatch(self.labels.clone(), wanted));
        }
        let idx: Vec<usize> = wanted.iter().map(|w| self.index_of(w)).collect::<Result<_>>()?;
        let n = idx.len();
        let matrix = RealMatrix::from_fn(n, n, |r, c| self.matrix[(idx[r], idx[c])]);
        Ok(LabeledMatrix { labels: wanted, matrix })
    }

    /// Errors unless `other` uses the same labels in the same order.
    pub fn check_labels(&self, other: &LabeledMatrix) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::LabelMismatch(self.labels.clone(), other.labels.clone()));
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        LabeledMatrix {
            labels: self.labels.clone(),
            matrix: &self.matrix * s,
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::sym_min_eigenvalue(&self.matrix)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::sym_eigenvalues(&self.matrix).iter().cloned().collect()
    }

    pub fn op_norm(&self) -> f64 {
        linalg::sym_norm(&self.matrix)
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self.matrix.clone().try_inverse().ok_or(Error::Singular)?;
        LabeledMatrix::new(self.labels.clone(), (&inv + inv.transpose()) * 0.5)
    }

    /// `vᵀ M v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(v);
        v.dot(&(&self.matrix * &v))
    }

    /// Rows as nested vectors.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|r| (0..self.dim()).map(|c| self.matrix[(r, c)] + 0.0).collect())
            .collect()
    }
}

impl Serialize for LabeledMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            labels: &'a [String],
            rows: Vec<Vec<f64>>,
        }
        Repr {
            labels: &self.labels,
            rows: self.rows(),
        }
        .serialize(s)
    }
}

impl fmt::Display for LabeledMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[{}]", self.labels.join(", "))?;
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>14.8}")).collect();
            writeln!(f, "  {}", cells.join(" "))?;
        }
        Ok(())
    }
}

macro_rules! labeled_newtype {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Serialize)]
        #[serde(transparent)]
        pub struct $name(pub LabeledMatrix);

        impl std::ops::Deref for $name {
            type Target = LabeledMatrix;
            fn deref(&self) -> &LabeledMatrix {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }
    };
}

labeled_newtype!(QfiMatrix);
labeled_newtype!(CovarianceMatrix);

impl QfiMatrix {
    /// Validates symmetry and the PSD floor `λ_min ≥ −1e-8`.
    pub fn new(labels: Vec<String>, matrix: RealMatrix) -> Result<Self> {
        let m = LabeledMatrix::new(labels, matrix)?;
        let min = m.min_eigenvalue();
        if min < -1e-8 * m.op_norm().max(1.0) {
            return Err(Error::NegativeEigenvalue(min));
        }
        Ok(QfiMatrix(m))
    }

    pub fn zeros(labels: Vec<String>) -> Self {
        let n = labels.len();
        QfiMatrix(LabeledMatrix {
            labels,
            matrix: RealMatrix::zeros(n, n),
        })
    }
}

impl CovarianceMatrix {
    /// Validates symmetry and the PSD floor `λ_min ≥ −1e-10`.
    pub fn new(labels: Vec<String>, matrix: RealMatrix) -> Result<Self> {
        let m = LabeledMatrix::new(labels, matrix)?;
        let min = m.min_eigenvalue();
        if min < -1e-10 * m.op_norm().max(1.0) {
            return Err(Error::NotPsd(min));
        }
        Ok(CovarianceMatrix(m))
    }
}

/// Symmetric logarithmic derivatives, one per parameter.
#[derive(Debug, Clone)]
pub struct SldSet {
    pub operators: Vec<ComplexMatrix>,
}

/// `√ρ` with eigenvalues below `SQRT_CUTOFF·λ_max` set to zero.
fn state_sqrt(rho: &DensityMatrix) -> Result<ComplexMatrix> {
    let eig = linalg::herm_eig(rho.matrix())?;
    let cut = SQRT_CUTOFF * eig.max().max(0.0);
    Ok(eig.map_spectrum(|l| c64(if l > cut { l.sqrt() } else { 0.0 }, 0.0)))
}

/// Uhlmann fidelity `Tr√(√ρ₁ ρ₂ √ρ₁)`, evaluated as `‖√ρ₁√ρ₂‖₁`.
pub fn fidelity(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    if rho1.dim() != rho2.dim() {
        return Err(Error::DimMismatch {
            expected: rho1.dim(),
            got: rho2.dim(),
        });
    }
    // one pure argument: F = √⟨ψ|σ|ψ⟩
    for (a, b) in [(rho1, rho2), (rho2, rho1)] {
        let eig = linalg::herm_eig(a.matrix())?;
        let n = a.dim();
        if eig.eigenvalues[n - 1] > 1.0 - PURE_TOL {
            let psi = eig.eigenvectors.column(n - 1);
            let v = (psi.adjoint() * b.matrix() * psi)[(0, 0)].re;
            return Ok(v.clamp(0.0, 1.0).sqrt());
        }
    }
    let f = linalg::trace_norm(&(state_sqrt(rho1)? * state_sqrt(rho2)?));
    Ok(f.clamp(0.0, 1.0))
}

/// `√(2 − 2F)`.
pub fn bures_distance(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    Ok((2.0 - 2.0 * fidelity(rho1, rho2)?).max(0.0).sqrt())
}

/// QFIM and SLDs of `ρ` given its parameter derivatives.
pub fn sld_qfim(rho: &DensityMatrix, drho: &[ComplexMatrix]) -> Result<(QfiMatrix, SldSet)> {
    let labels = (1..=drho.len()).map(|i| format!("x{i}")).collect();
    sld_qfim_labeled(rho, drho, labels)
}

pub fn sld_qfim_labeled(
    rho: &DensityMatrix,
    drho: &[ComplexMatrix],
    labels: Vec<String>,
) -> Result<(QfiMatrix, SldSet)> {
    let n = rho.dim();
    let m = drho.len();
    if labels.len() != m {
        return Err(Error::DimMismatch {
            expected: m,
            got: labels.len(),
        });
    }
    for d in drho {
        if d.nrows() != n || d.ncols() != n {
            return Err(Error::DimMismatch {
                expected: n,
                got: d.nrows(),
            });
        }
        linalg::check_hermitian(d).map_err(|_| Error::NotAState("derivative is not Hermitian".into()))?;
        let tr = linalg::trace(d);
        if tr.norm() > 1e-8 * d.norm().max(1.0) {
            return Err(Error::NonTracelessDerivative(tr.re));
        }
    }
    let eig = linalg::herm_eig(rho.matrix())?;
    let lam = &eig.eigenvalues;
    let lmax = eig.max();
    let mut j = RealMatrix::zeros(m, m);

    if lmax > 1.0 - PURE_TOL {
        // pure state: Jᵢⱼ = 2 Re Tr(∂ᵢρ ∂ⱼρ), Lᵢ = 2∂ᵢρ
        for a in 0..m {
            for b in a..m {
                let v = 2.0 * linalg::re_trace_product(&drho[a], &drho[b]);
                j[(a, b)] = v;
                j[(b, a)] = v;
            }
        }
        let operators = drho.iter().map(|d| d.scale(2.0)).collect();
        return Ok((QfiMatrix(LabeledMatrix { labels, matrix: j }), SldSet { operators }));
    }

    let tau = 1e-12 * lmax;
    let v = &eig.eigenvectors;
    let v_adj = v.adjoint();
    let local: Vec<ComplexMatrix> = drho
        .iter()
        .map(|d| {
            let dl = &v_adj * d * v;
            DMatrix::from_fn(n, n, |a, b| {
                let s = lam[a] + lam[b];
                if s > tau {
                    dl[(a, b)] * (2.0 / s)
                } else {
                    c64(0.0, 0.0)
                }
            })
        })
        .collect();
    for p in 0..m {
        for q in p..m {
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let w = 0.5 * (lam[a] + lam[b]).max(0.0);
                    let t = local[p][(a, b)] * local[q][(b, a)];
                    acc += w * t.re;
                }
            }
            j[(p, q)] = acc;
            j[(q, p)] = acc;
        }
    }
    let operators = local.iter().map(|l| linalg::hermitian_part(&(v * l * &v_adj))).collect();
    Ok((QfiMatrix(LabeledMatrix { labels, matrix: j }), SldSet { operators }))
}

/// `(K_x ⊗ I_A)(probe)`.
pub fn output_state(pch: &dyn ParamChannel, x: &[f64], probe: &DensityMatrix) -> Result<DensityMatrix> {
    let dim_a = ancilla_dim(pch, probe)?;
    let out = pch.evaluate(x)?.apply_extended(dim_a, probe.matrix())?;
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

fn ancilla_dim(pch: &dyn ParamChannel, probe: &DensityMatrix) -> Result<usize> {
    let d = pch.dim_in();
    if !probe.dim().is_multiple_of(d) {
        return Err(Error::DimMismatch {
            expected: d,
            got: probe.dim(),
        });
    }
    Ok(probe.dim() / d)
}

/// Default finite-difference step for [`qfim_of_probe`].
pub const DEFAULT_PROBE_STEP: f64 = 1e-3;

/// QFIM of `ρ_x = (K_x ⊗ I_A)(probe)` with central differences at
/// `h·max(1,|xᵢ|)` and `h/2`, Richardson-extrapolated.
pub fn qfim_of_probe(pch: &dyn ParamChannel, x: &[f64], probe: &DensityMatrix, h: f64) -> Result<QfiMatrix> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("step h = {h} must be positive")));
    }
    pch.check_point(x)?;
    let dim_a = ancilla_dim(pch, probe)?;
    qfim_of_factor(pch, x, dim_a, &probe_factor(probe)?, h)
}

/// [`qfim_of_probe`] for the pure probe `|ψ⟩⟨ψ|` on `S ⊗ A`.
pub fn qfim_of_pure_probe(pch: &dyn ParamChannel, x: &[f64], psi: &DVector<C64>, h: f64) -> Result<QfiMatrix> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("step h = {h} must be positive")));
    }
    pch.check_point(x)?;
    let d = pch.dim_in();
    if !psi.len().is_multiple_of(d) {
        return Err(Error::DimMismatch {
            expected: d,
            got: psi.len(),
        });
    }
    let norm = psi.norm();
    if !(norm > 0.0) {
        return Err(Error::NotAState("zero probe vector".into()));
    }
    let factor = ComplexMatrix::from_column_slice(psi.len(), 1, psi.unscale(norm).as_slice());
    qfim_of_factor(pch, x, psi.len() / d, &factor, h)
}

fn qfim_of_factor(pch: &dyn ParamChannel, x: &[f64], dim_a: usize, factor: &ComplexMatrix, h: f64) -> Result<QfiMatrix> {
    let factor_at = |p: &[f64]| pch.evaluate(p)?.apply_extended_factor(dim_a, factor);
    let v = factor_at(x)?;
    let mut dv = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let hi = h * x[i].abs().max(1.0);
        let central = |s: f64| -> Result<ComplexMatrix> {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[i] += s;
            minus[i] -= s;
            Ok((factor_at(&plus)? - factor_at(&minus)?) / linalg::c64(2.0 * s, 0.0))
        };
        let d1 = central(hi)?;
        let d2 = central(hi / 2.0)?;
        dv.push((d2.scale(4.0) - d1) / c64(3.0, 0.0));
    }
    if v.ncols() < v.nrows() {
        let j = qfim_from_factor(&v, &dv)?;
        return Ok(QfiMatrix(LabeledMatrix {
            labels: pch.param_names(),
            matrix: j,
        }));
    }
    let rho = DensityMatrix::from_matrix_unchecked(linalg::hermitian_part(&(&v * v.adjoint())));
    let drho: Vec<ComplexMatrix> = dv
        .iter()
        .map(|d| {
            let dr = d * v.adjoint();
            remove_trace(&(&dr + dr.adjoint()))
        })
        .collect();
    Ok(sld_qfim_labeled(&rho, &drho, pch.param_names())?.0)
}

/// SLD QFIM of `ρ = VV†` from `∂ᵢV`, computed on the support of `ρ`.
///
/// With support eigenvectors `|k⟩` and `Aⁱ = ⟨k|∂ᵢρ|l⟩`,
/// `Jᵢⱼ = Σ_{kl} 2Re(AⁱₖₗAʲₗₖ)/(λₖ+λₗ) + Σₖ (4/λₖ) Re⟨k|∂ᵢρ P_⊥ ∂ⱼρ|k⟩`.
fn qfim_from_factor(v: &ComplexMatrix, dv: &[ComplexMatrix]) -> Result<RealMatrix> {
    let m = dv.len();
    let eig = linalg::herm_eig(&linalg::hermitian_part(&(v.adjoint() * v)))?;
    let lmax = eig.max();
    let keep: Vec<usize> = (0..v.ncols()).filter(|&k| eig.eigenvalues[k] > 1e-12 * lmax).collect();
    let lam: Vec<f64> = keep.iter().map(|&k| eig.eigenvalues[k]).collect();
    let r = keep.len();
    let basis = ComplexMatrix::from_fn(v.ncols(), r, |a, c| eig.eigenvectors[(a, keep[c])] / lam[c].sqrt());
    let e = v * &basis;
    let e_adj = e.adjoint();
    let v_adj_e = v.adjoint() * &e;
    // ∂ᵢρ E = ∂ᵢV (V†E) + V (∂ᵢV† E)
    let de: Vec<ComplexMatrix> = dv.iter().map(|d| d * &v_adj_e + v * (d.adjoint() * &e)).collect();
    let a: Vec<ComplexMatrix> = de.iter().map(|x| linalg::hermitian_part(&(&e_adj * x))).collect();
    let mut j = RealMatrix::zeros(m, m);
    for p in 0..m {
        for q in p..m {
            let mut acc = 0.0;
            let outer = de[p].adjoint() * &de[q];
            let inner = &a[p] * &a[q];
            for k in 0..r {
                for l in 0..r {
                    acc += 2.0 * (a[p][(k, l)] * a[q][(l, k)]).re / (lam[k] + lam[l]);
                }
                acc += 4.0 / lam[k] * (outer[(k, k)] - inner[(k, k)]).re;
            }
            j[(p, q)] = acc;
            j[(q, p)] = acc;
        }
    }
    Ok(j)
}

/// `V` with `probe = V V†`, keeping only the nonzero spectrum.
fn probe_factor(probe: &DensityMatrix) -> Result<ComplexMatrix> {
    let eig = linalg::herm_eig(probe.matrix())?;
    let cut = 1e-14 * eig.max();
    let keep: Vec<usize> = (0..probe.dim()).filter(|&k| eig.eigenvalues[k] > cut).collect();
    let n = probe.dim();
    Ok(ComplexMatrix::from_fn(n, keep.len(), |r, c| {
        eig.eigenvectors[(r, keep[c])] * eig.eigenvalues[keep[c]].sqrt()
    }))
}

/// Subtracts the (round-off) trace of a finite-difference derivative.
fn remove_trace(d: &ComplexMatrix) -> ComplexMatrix {
    let n = d.nrows();
    let t = linalg::trace(d).re / n as f64;
    d - linalg::identity(n).scale(t)
}

/// Cramér-Rao lower bound `J⁻¹/n`.
pub fn crb(j: &QfiMatrix, n: usize) -> Result<CovarianceMatrix> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let min = j.min_eigenvalue();
    if min <= 1e-12 * j.op_norm() || j.op_norm() == 0.0 {
        return Err(Error::SingularQfim(min));
    }
    let inv = j.inverse()?;
    Ok(CovarianceMatrix(inv.scaled(1.0 / n as f64)))
}
