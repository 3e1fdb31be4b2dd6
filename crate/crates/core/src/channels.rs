//! Kraus-operator channels and parameterized channel families.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c64, ComplexMatrix, C64};

/// Completeness residual tolerated by [`KrausChannel::new`].
pub const COMPLETENESS_TOL: f64 = 1e-9;

/// Default cap on the input dimension of a tensor power (six qubits).
pub const DEFAULT_SIZE_CAP: usize = 64;

/// A CPTP map `ρ ↦ Σⱼ Fⱼ ρ Fⱼ†` with `Σⱼ Fⱼ†Fⱼ = I`.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    dim_in: usize,
    dim_out: usize,
    kraus: Vec<ComplexMatrix>,
}

impl KrausChannel {
    pub fn new(kraus: Vec<ComplexMatrix>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::InvalidInput("empty Kraus list".into()))?;
        let (dim_out, dim_in) = (first.nrows(), first.ncols());
        for f in &kraus {
            if f.nrows() != dim_out || f.ncols() != dim_in {
                return Err(Error::DimMismatch {
                    expected: dim_out * dim_in,
                    got: f.nrows() * f.ncols(),
                });
            }
        }
        let ch = KrausChannel {
            dim_in,
            dim_out,
            kraus,
        };
        let residual = ch.completeness_residual();
        if residual > COMPLETENESS_TOL {
            return Err(Error::NotComplete(residual));
        }
        Ok(ch)
    }

    pub fn identity(dim: usize) -> Self {
        KrausChannel {
            dim_in: dim,
            dim_out: dim,
            kraus: vec![linalg::identity(dim)],
        }
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    /// Number of Kraus operators.
    pub fn rank(&self) -> usize {
        self.kraus.len()
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    /// `‖Σ F†F − I‖_op`.
    pub fn completeness_residual(&self) -> f64 {
        let mut acc = ComplexMatrix::zeros(self.dim_in, self.dim_in);
        for f in &self.kraus {
            acc += f.adjoint() * f;
        }
        linalg::op_norm(&(acc - linalg::identity(self.dim_in)))
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.dim_in {
            return Err(Error::DimMismatch {
                expected: self.dim_in,
                got: rho.dim(),
            });
        }
        Ok(DensityMatrix::from_matrix_unchecked(self.apply_operator(rho.matrix())))
    }

    /// `Σ F X F†` for an arbitrary square operator `X`.
    pub fn apply_operator(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim_out, self.dim_out);
        for f in &self.kraus {
            out += f * x * f.adjoint();
        }
        out
    }

    /// `(K ⊗ I_A)(X)` without materializing `F ⊗ I_A`.
    pub fn apply_extended(&self, dim_a: usize, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        let n_in = self.dim_in * dim_a;
        if x.nrows() != n_in || x.ncols() != n_in {
            return Err(Error::DimMismatch {
                expected: n_in,
                got: x.nrows(),
            });
        }
        if dim_a == 1 {
            return Ok(self.apply_operator(x));
        }
        let n_out = self.dim_out * dim_a;
        let mut out = ComplexMatrix::zeros(n_out, n_out);
        for f in &self.kraus {
            let left = kron_identity_mul(f, dim_a, x);
            let both = kron_identity_mul(f, dim_a, &left.adjoint()).adjoint();
            out += both;
        }
        Ok(linalg::hermitian_part(&out))
    }

    /// Factor of `(K ⊗ I_A)(V V†)`: the columns `(Fⱼ ⊗ I_A) V` side by side.
    pub fn apply_extended_factor(&self, dim_a: usize, v: &ComplexMatrix) -> Result<ComplexMatrix> {
        if v.nrows() != self.dim_in * dim_a {
            return Err(Error::DimMismatch {
                expected: self.dim_in * dim_a,
                got: v.nrows(),
            });
        }
        let r = v.ncols();
        let mut out = ComplexMatrix::zeros(self.dim_out * dim_a, r * self.rank());
        for (k, f) in self.kraus.iter().enumerate() {
            out.columns_mut(k * r, r).copy_from(&kron_identity_mul(f, dim_a, v));
        }
        Ok(out)
    }

    /// Kraus list `{Fⱼ ⊗ I_A}`.
    pub fn extend_with_ancilla(&self, dim_a: usize) -> KrausChannel {
        let ia = linalg::identity(dim_a.max(1));
        KrausChannel {
            dim_in: self.dim_in * dim_a.max(1),
            dim_out: self.dim_out * dim_a.max(1),
            kraus: self.kraus.iter().map(|f| linalg::kron(f, &ia)).collect(),
        }
    }

    /// `K^{⊗N}` with all `d^N` product Kraus operators.
    pub fn tensor_power(&self, copies: usize, size_cap: usize) -> Result<KrausChannel> {
        if copies == 0 {
            return Err(Error::InvalidInput("tensor power needs at least one copy".into()));
        }
        let dim = self
            .dim_in
            .checked_pow(copies as u32)
            .unwrap_or(usize::MAX);
        let dim_out = self.dim_out.checked_pow(copies as u32).unwrap_or(usize::MAX);
        if dim.max(dim_out) > size_cap {
            return Err(Error::SizeBudgetExceeded {
                dim: dim.max(dim_out),
                cap: size_cap,
            });
        }
        let mut kraus = self.kraus.clone();
        for _ in 1..copies {
            let mut next = Vec::with_capacity(kraus.len() * self.kraus.len());
            for a in &kraus {
                for b in &self.kraus {
                    next.push(linalg::kron(a, b));
                }
            }
            kraus = next;
        }
        Ok(KrausChannel {
            dim_in: dim,
            dim_out,
            kraus,
        })
    }
}

/// `(F ⊗ I_A) X` where the row index of `X` is `s·dim_a + a`.
fn kron_identity_mul(f: &ComplexMatrix, dim_a: usize, x: &ComplexMatrix) -> ComplexMatrix {
    let (m_out, m_in) = (f.nrows(), f.ncols());
    let cols = x.ncols();
    let mut out = ComplexMatrix::zeros(m_out * dim_a, cols);
    for c in 0..cols {
        for r in 0..m_out {
            for s in 0..m_in {
                let coef = f[(r, s)];
                if coef.re == 0.0 && coef.im == 0.0 {
                    continue;
                }
                for a in 0..dim_a {
                    out[(r * dim_a + a, c)] += coef * x[(s * dim_a + a, c)];
                }
            }
        }
    }
    out
}

/// Two-Kraus dephasing channel with phase `ω` and coherence factor `η`:
/// `F₁ = √((1+η)/2) e^{−iσ₃ω/2}`, `F₂ = √((1−η)/2) σ₃ e^{−iσ₃ω/2}`.
pub fn dephasing_phase(omega: f64, eta: f64) -> Result<KrausChannel> {
    if !(0.0..=1.0).contains(&eta) || !omega.is_finite() {
        return Err(Error::ParamOutOfRange(format!("eta = {eta} must lie in [0, 1]")));
    }
    let phase = |sign: f64| C64::from_polar(1.0, -sign * omega / 2.0);
    let u = ComplexMatrix::from_row_slice(2, 2, &[phase(1.0), c64(0., 0.), c64(0., 0.), phase(-1.0)]);
    let f1 = u.scale(((1.0 + eta) / 2.0).sqrt());
    let f2 = (linalg::pauli_z() * &u).scale(((1.0 - eta) / 2.0).sqrt());
    Ok(KrausChannel {
        dim_in: 2,
        dim_out: 2,
        kraus: vec![f1, f2],
    })
}

/// Single-Kraus unitary `exp(−i(x₁σ₁ + x₂σ₂)T)`.
pub fn two_param_rotation(x1: f64, x2: f64, time: f64) -> Result<KrausChannel> {
    if !(time > 0.0) {
        return Err(Error::ParamOutOfRange(format!("T = {time} must be positive")));
    }
    // exp(−i r T n·σ) = cos(rT) I − i sin(rT) n·σ
    let r = x1.hypot(x2);
    let (s, c) = (r * time).sin_cos();
    let (n1, n2) = if r > 0.0 { (x1 / r, x2 / r) } else { (0.0, 0.0) };
    let u = linalg::identity(2).scale(c)
        + (linalg::pauli_x().scale(n1) + linalg::pauli_y().scale(n2)) * c64(0.0, -s);
    Ok(KrausChannel {
        dim_in: 2,
        dim_out: 2,
        kraus: vec![u],
    })
}

/// A quantum state: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        linalg::check_hermitian(&matrix).map_err(|_| Error::NotAState("not Hermitian".into()))?;
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::NotAState(format!("trace {} ≠ 1", tr.re)));
        }
        let matrix = linalg::hermitian_part(&matrix);
        let min = linalg::herm_eigenvalues(&matrix)?[0];
        if min < -1e-10 {
            return Err(Error::NotAState(format!("eigenvalue {min:.3e} < 0")));
        }
        Ok(DensityMatrix { matrix })
    }

    pub(crate) fn from_matrix_unchecked(matrix: ComplexMatrix) -> Self {
        DensityMatrix {
            matrix: linalg::hermitian_part(&matrix),
        }
    }

    /// `|ψ⟩⟨ψ|` after normalizing `ψ`.
    pub fn from_pure(psi: &DVector<C64>) -> Result<Self> {
        let norm = psi.norm();
        if !(norm > 0.0) {
            return Err(Error::NotAState("zero vector".into()));
        }
        let v = psi.unscale(norm);
        Ok(DensityMatrix {
            matrix: &v * v.adjoint(),
        })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix {
            matrix: linalg::identity(dim).unscale(dim as f64),
        }
    }

    /// `|+⟩⟨+|` on a qubit.
    pub fn plus() -> Self {
        DensityMatrix {
            matrix: ComplexMatrix::from_element(2, 2, c64(0.5, 0.0)),
        }
    }

    /// `(|00⟩ + |11⟩ + …)/√d` on `d ⊗ d`.
    pub fn maximally_entangled(dim: usize) -> Self {
        let mut psi = DVector::zeros(dim * dim);
        for k in 0..dim {
            psi[k * dim + k] = c64(1.0, 0.0);
        }
        DensityMatrix::from_pure(&psi).expect("nonzero vector")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            matrix: linalg::kron(&self.matrix, &other.matrix),
        }
    }

    /// Partial trace over the trailing `dim_a`-dimensional factor.
    pub fn trace_out_ancilla(&self, dim_a: usize) -> Result<DensityMatrix> {
        let n = self.dim();
        if dim_a == 0 || !n.is_multiple_of(dim_a) {
            return Err(Error::DimMismatch {
                expected: dim_a,
                got: n,
            });
        }
        let ds = n / dim_a;
        let mut out = ComplexMatrix::zeros(ds, ds);
        for i in 0..ds {
            for j in 0..ds {
                let mut acc = c64(0.0, 0.0);
                for a in 0..dim_a {
                    acc += self.matrix[(i * dim_a + a, j * dim_a + a)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(DensityMatrix::from_matrix_unchecked(out))
    }

    /// Purification `Σₖ √λₖ |eₖ⟩|k⟩` with an ancilla of the same dimension.
    pub fn purification(&self) -> Result<DensityMatrix> {
        let eig = linalg::herm_eig(&self.matrix)?;
        let d = self.dim();
        let mut psi = DVector::zeros(d * d);
        for k in 0..d {
            let w = eig.eigenvalues[k].max(0.0).sqrt();
            for s in 0..d {
                psi[s * d + k] = eig.eigenvectors[(s, k)] * w;
            }
        }
        DensityMatrix::from_pure(&psi)
    }

    /// Trace distance `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        0.5 * linalg::trace_norm(&(&self.matrix - &other.matrix))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    AnalyticBuiltin,
    Tabulated,
}

/// A family of channels `x ↦ K_x` with fixed dimensions and Kraus rank.
pub trait ParamChannel: Send + Sync {
    fn num_params(&self) -> usize;
    fn param_names(&self) -> Vec<String>;
    fn kind(&self) -> ChannelKind;
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn kraus_rank(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Result<KrausChannel>;

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.num_params() {
            return Err(Error::DimMismatch {
                expected: self.num_params(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Dephasing with parameters ordered `(omega, eta)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DephasingPhase;

impl ParamChannel for DephasingPhase {
    fn num_params(&self) -> usize {
        2
    }
    fn param_names(&self) -> Vec<String> {
        vec!["omega".into(), "eta".into()]
    }
    fn kind(&self) -> ChannelKind {
        ChannelKind::AnalyticBuiltin
    }
    fn dim_in(&self) -> usize {
        2
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn kraus_rank(&self) -> usize {
        2
    }
    fn evaluate(&self, x: &[f64]) -> Result<KrausChannel> {
        self.check_point(x)?;
        dephasing_phase(x[0], x[1])
    }
}

/// `exp(−i(x₁σ₁ + x₂σ₂)T)` with parameters `(x1, x2)`.
#[derive(Debug, Clone, Copy)]
pub struct TwoParamRotation {
    pub time: f64,
}

impl ParamChannel for TwoParamRotation {
    fn num_params(&self) -> usize {
        2
    }
    fn param_names(&self) -> Vec<String> {
        vec!["x1".into(), "x2".into()]
    }
    fn kind(&self) -> ChannelKind {
        ChannelKind::AnalyticBuiltin
    }
    fn dim_in(&self) -> usize {
        2
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn kraus_rank(&self) -> usize {
        1
    }
    fn evaluate(&self, x: &[f64]) -> Result<KrausChannel> {
        self.check_point(x)?;
        two_param_rotation(x[0], x[1], self.time)
    }
}

type KrausFn = dyn Fn(&[f64]) -> Result<Vec<ComplexMatrix>> + Send + Sync;

/// Channel family backed by a closure returning the Kraus list.
#[derive(Clone)]
pub struct FnChannel {
    names: Vec<String>,
    dim_in: usize,
    dim_out: usize,
    rank: usize,
    f: Arc<KrausFn>,
}

impl FnChannel {
    pub fn new(
        names: Vec<String>,
        dim_in: usize,
        dim_out: usize,
        rank: usize,
        f: impl Fn(&[f64]) -> Result<Vec<ComplexMatrix>> + Send + Sync + 'static,
    ) -> Self {
        FnChannel {
            names,
            dim_in,
            dim_out,
            rank,
            f: Arc::new(f),
        }
    }

    /// Unitary family `x ↦ exp(−i H(x) T)`.
    pub fn hamiltonian(
        names: Vec<String>,
        dim: usize,
        time: f64,
        h: impl Fn(&[f64]) -> ComplexMatrix + Send + Sync + 'static,
    ) -> Self {
        FnChannel::new(names, dim, dim, 1, move |x| Ok(vec![linalg::herm_exp(&h(x), time)?]))
    }
}

impl std::fmt::Debug for FnChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnChannel")
            .field("names", &self.names)
            .field("dim_in", &self.dim_in)
            .field("dim_out", &self.dim_out)
            .field("rank", &self.rank)
            .finish()
    }
}

impl ParamChannel for FnChannel {
    fn num_params(&self) -> usize {
        self.names.len()
    }
    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }
    fn kind(&self) -> ChannelKind {
        ChannelKind::AnalyticBuiltin
    }
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn kraus_rank(&self) -> usize {
        self.rank
    }
    fn evaluate(&self, x: &[f64]) -> Result<KrausChannel> {
        self.check_point(x)?;
        let ch = KrausChannel::new((self.f)(x)?)?;
        if ch.rank() != self.rank {
            return Err(Error::RankMismatch(self.rank, ch.rank()));
        }
        if ch.dim_in() != self.dim_in || ch.dim_out() != self.dim_out {
            return Err(Error::DimMismatch {
                expected: self.dim_in,
                got: ch.dim_in(),
            });
        }
        Ok(ch)
    }
}

/// `x ↦ K_x^{⊗N}`.
pub struct ParallelChannel<'a> {
    inner: &'a dyn ParamChannel,
    copies: usize,
    size_cap: usize,
}

impl<'a> ParallelChannel<'a> {
    pub fn new(inner: &'a dyn ParamChannel, copies: usize, size_cap: usize) -> Result<Self> {
        let dim = inner.dim_in().max(inner.dim_out());
        let total = dim.checked_pow(copies as u32).unwrap_or(usize::MAX);
        if copies == 0 {
            return Err(Error::InvalidInput("tensor power needs at least one copy".into()));
        }
        if total > size_cap {
            return Err(Error::SizeBudgetExceeded {
                dim: total,
                cap: size_cap,
            });
        }
        Ok(ParallelChannel {
            inner,
            copies,
            size_cap,
        })
    }
}

impl ParamChannel for ParallelChannel<'_> {
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }
    fn param_names(&self) -> Vec<String> {
        self.inner.param_names()
    }
    fn kind(&self) -> ChannelKind {
        self.inner.kind()
    }
    fn dim_in(&self) -> usize {
        self.inner.dim_in().pow(self.copies as u32)
    }
    fn dim_out(&self) -> usize {
        self.inner.dim_out().pow(self.copies as u32)
    }
    fn kraus_rank(&self) -> usize {
        self.inner.kraus_rank().pow(self.copies as u32)
    }
    fn evaluate(&self, x: &[f64]) -> Result<KrausChannel> {
        self.inner.evaluate(x)?.tensor_power(self.copies, self.size_cap)
    }
}

/// Two parameter points are the same tabulated point when every
/// coordinate agrees to this relative tolerance.
const POINT_MATCH_TOL: f64 = 1e-12;

pub fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a
            .iter()
            .zip(b)
            .all(|(u, v)| (u - v).abs() <= POINT_MATCH_TOL * u.abs().max(v.abs()).max(1.0))
}

/// Channel family known only at a finite set of points.
#[derive(Debug, Clone)]
pub struct TabulatedChannel {
    names: Vec<String>,
    dim_in: usize,
    dim_out: usize,
    rank: usize,
    points: Vec<(Vec<f64>, KrausChannel)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChannelFile {
    num_params: usize,
    dim_in: usize,
    dim_out: usize,
    kraus_rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    param_names: Option<Vec<String>>,
    points: Vec<PointRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PointRecord {
    x: Vec<f64>,
    kraus: Vec<Vec<Vec<[f64; 2]>>>,
}

impl TabulatedChannel {
    pub fn new(names: Vec<String>, dim_in: usize, dim_out: usize, rank: usize) -> Self {
        TabulatedChannel {
            names,
            dim_in,
            dim_out,
            rank,
            points: Vec::new(),
        }
    }

    /// Tabulates another family at the given points.
    pub fn sample(source: &dyn ParamChannel, points: &[Vec<f64>]) -> Result<Self> {
        let mut tab = TabulatedChannel::new(
            source.param_names(),
            source.dim_in(),
            source.dim_out(),
            source.kraus_rank(),
        );
        for x in points {
            tab.insert(x.clone(), source.evaluate(x)?)?;
        }
        Ok(tab)
    }

    pub fn insert(&mut self, x: Vec<f64>, channel: KrausChannel) -> Result<()> {
        if x.len() != self.names.len() {
            return Err(Error::DimMismatch {
                expected: self.names.len(),
                got: x.len(),
            });
        }
        if channel.rank() != self.rank {
            return Err(Error::RankMismatch(self.rank, channel.rank()));
        }
        if channel.dim_in() != self.dim_in || channel.dim_out() != self.dim_out {
            return Err(Error::DimMismatch {
                expected: self.dim_in,
                got: channel.dim_in(),
            });
        }
        if let Some(slot) = self.points.iter_mut().find(|(p, _)| same_point(p, &x)) {
            slot.1 = channel;
        } else {
            self.points.push((x, channel));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The subset of `wanted` with no tabulated Kraus data.
    pub fn missing(&self, wanted: &[Vec<f64>]) -> Vec<Vec<f64>> {
        wanted
            .iter()
            .filter(|w| !self.points.iter().any(|(p, _)| same_point(p, w)))
            .cloned()
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ChannelFile = serde_json::from_str(text)
            .map_err(|e| Error::Schema(format!("line {} column {}: {e}", e.line(), e.column())))?;
        let names = match file.param_names {
            Some(n) if n.len() == file.num_params => n,
            Some(n) => {
                return Err(Error::Schema(format!(
                    "param_names: {} names for num_params = {}",
                    n.len(),
                    file.num_params
                )))
            }
            None => (1..=file.num_params).map(|i| format!("x{i}")).collect(),
        };
        if file.dim_in == 0 || file.dim_out == 0 || file.kraus_rank == 0 {
            return Err(Error::Schema("dim_in, dim_out and kraus_rank must be positive".into()));
        }
        let mut tab = TabulatedChannel::new(names, file.dim_in, file.dim_out, file.kraus_rank);
        for (pi, rec) in file.points.iter().enumerate() {
            if rec.x.len() != file.num_params {
                return Err(Error::Schema(format!(
                    "points[{pi}].x has {} coordinates, expected {}",
                    rec.x.len(),
                    file.num_params
                )));
            }
            if rec.kraus.len() != file.kraus_rank {
                return Err(Error::Schema(format!(
                    "points[{pi}].kraus has {} operators, expected kraus_rank = {}",
                    rec.kraus.len(),
                    file.kraus_rank
                )));
            }
            let mut ops = Vec::with_capacity(rec.kraus.len());
            for (ki, rows) in rec.kraus.iter().enumerate() {
                if rows.len() != file.dim_out {
                    return Err(Error::Schema(format!(
                        "points[{pi}].kraus[{ki}] has {} rows, expected dim_out = {}",
                        rows.len(),
                        file.dim_out
                    )));
                }
                let mut data = Vec::with_capacity(file.dim_out * file.dim_in);
                for (ri, row) in rows.iter().enumerate() {
                    if row.len() != file.dim_in {
                        return Err(Error::Schema(format!(
                            "points[{pi}].kraus[{ki}][{ri}] has {} entries, expected dim_in = {}",
                            row.len(),
                            file.dim_in
                        )));
                    }
                    data.extend(row.iter().map(|&[re, im]| c64(re, im)));
                }
                ops.push(ComplexMatrix::from_row_slice(file.dim_out, file.dim_in, &data));
            }
            let channel = KrausChannel::new(ops)
                .map_err(|e| Error::Schema(format!("points[{pi}]: {e}")))?;
            tab.insert(rec.x.clone(), channel)?;
        }
        Ok(tab)
    }

    pub fn to_json(&self) -> String {
        let file = ChannelFile {
            num_params: self.names.len(),
            dim_in: self.dim_in,
            dim_out: self.dim_out,
            kraus_rank: self.rank,
            param_names: Some(self.names.clone()),
            points: self
                .points
                .iter()
                .map(|(x, ch)| PointRecord {
                    x: x.clone(),
                    kraus: ch
                        .kraus()
                        .iter()
                        .map(|f| {
                            (0..f.nrows())
                                .map(|r| (0..f.ncols()).map(|c| [f[(r, c)].re, f[(r, c)].im]).collect())
                                .collect()
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("channel file serializes")
    }
}

impl ParamChannel for TabulatedChannel {
    fn num_params(&self) -> usize {
        self.names.len()
    }
    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }
    fn kind(&self) -> ChannelKind {
        ChannelKind::Tabulated
    }
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn kraus_rank(&self) -> usize {
        self.rank
    }
    fn evaluate(&self, x: &[f64]) -> Result<KrausChannel> {
        self.check_point(x)?;
        self.points
            .iter()
            .find(|(p, _)| same_point(p, x))
            .map(|(_, ch)| ch.clone())
            .ok_or_else(|| Error::MissingPoints(vec![x.to_vec()]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn identity_channel_is_identity() {
        let rho = DensityMatrix::plus();
        let out = KrausChannel::identity(2).apply(&rho).unwrap();
        assert!(close(out.matrix(), rho.matrix(), 1e-15));
    }

    #[test]
    fn full_dephasing_kills_coherence() {
        let out = dephasing_phase(0.0, 0.0).unwrap().apply(&DensityMatrix::plus()).unwrap();
        assert!(close(out.matrix(), &linalg::identity(2).scale(0.5), 1e-15));
    }

    #[test]
    fn eta_one_is_unitary() {
        let omega = 0.83;
        let ch = dephasing_phase(omega, 1.0).unwrap();
        assert!(ch.kraus()[1].norm() < 1e-15);
        let rho = DensityMatrix::plus();
        let u = linalg::herm_exp(&linalg::pauli_z().scale(0.5), omega).unwrap();
        let expect = &u * rho.matrix() * u.adjoint();
        assert!(close(ch.apply(&rho).unwrap().matrix(), &expect, 1e-14));
    }

    #[test]
    fn dephasing_kraus_values() {
        let ch = dephasing_phase(0.0, 1.0).unwrap();
        assert!(close(&ch.kraus()[0], &linalg::identity(2), 1e-15));
        let ch = dephasing_phase(0.0, 0.0).unwrap();
        let r = 0.5f64.sqrt();
        assert!(close(&ch.kraus()[0], &linalg::identity(2).scale(r), 1e-15));
        assert!(close(&ch.kraus()[1], &linalg::pauli_z().scale(r), 1e-15));
        // ω = π, η = 0.5: F₁ = √0.75·diag(−i, i)
        let ch = dephasing_phase(PI, 0.5).unwrap();
        let expect = ComplexMatrix::from_row_slice(2, 2, &[c64(0., -1.), c64(0., 0.), c64(0., 0.), c64(0., 1.)])
            .scale(0.75f64.sqrt());
        assert!(close(&ch.kraus()[0], &expect, 1e-15));
        assert!(matches!(dephasing_phase(0.0, 1.5), Err(Error::ParamOutOfRange(_))));
        assert!(matches!(dephasing_phase(0.0, -0.1), Err(Error::ParamOutOfRange(_))));
    }

    #[test]
    fn rotation_examples() {
        let u = &two_param_rotation(0.0, 0.0, 1.3).unwrap().kraus()[0].clone();
        assert!(close(u, &linalg::identity(2), 1e-15));
        let (x1, t) = (0.4, 1.7);
        let u = two_param_rotation(x1, 0.0, t).unwrap().kraus()[0].clone();
        let expect = linalg::identity(2).scale((x1 * t).cos()) + linalg::pauli_x() * c64(0.0, -(x1 * t).sin());
        assert!(close(&u, &expect, 1e-15));
        let u = two_param_rotation(0.7, 0.3, 1.0).unwrap().kraus()[0].clone();
        assert!(linalg::unitarity_defect(&u) < 1e-14);
        let mut phases: Vec<f64> = linalg::complex_eigenvalues(&u).unwrap().iter().map(|z| z.arg()).collect();
        phases.sort_by(f64::total_cmp);
        let r = 0.58f64.sqrt();
        assert!((phases[1] - r).abs() < 1e-13 && (phases[0] + r).abs() < 1e-13);
        assert!((r - 0.76158).abs() < 1e-5);
        assert!(two_param_rotation(0.1, 0.2, 0.0).is_err());
    }

    #[test]
    fn ancilla_extension() {
        let ch = dephasing_phase(0.4, 0.6).unwrap();
        let same = ch.extend_with_ancilla(1);
        for (a, b) in same.kraus().iter().zip(ch.kraus()) {
            assert!(close(a, b, 0.0));
        }
        let id = KrausChannel::identity(2).extend_with_ancilla(2);
        assert_eq!(id.dim_in(), 4);
        assert!(close(&id.kraus()[0], &linalg::identity(4), 0.0));

        let rho_s = DensityMatrix::plus();
        let rho_a = DensityMatrix::new(linalg::real_diag(&[0.3, 0.7])).unwrap();
        let lhs = ch.extend_with_ancilla(2).apply(&rho_s.tensor(&rho_a)).unwrap();
        let rhs = ch.apply(&rho_s).unwrap().tensor(&rho_a);
        assert!(close(lhs.matrix(), rhs.matrix(), 1e-14));
        let fast = ch.apply_extended(2, rho_s.tensor(&rho_a).matrix()).unwrap();
        assert!(close(&fast, rhs.matrix(), 1e-14));
    }

    #[test]
    fn tensor_power_examples() {
        let ch = dephasing_phase(0.3, 0.5).unwrap();
        let one = ch.tensor_power(1, DEFAULT_SIZE_CAP).unwrap();
        assert_eq!(one.rank(), 2);
        let two = ch.tensor_power(2, DEFAULT_SIZE_CAP).unwrap();
        assert_eq!(two.rank(), 4);
        assert_eq!(two.dim_in(), 4);
        assert!(two.completeness_residual() <= 1e-9);
        let id = KrausChannel::identity(2).tensor_power(3, DEFAULT_SIZE_CAP).unwrap();
        assert!(close(&id.kraus()[0], &linalg::identity(8), 0.0));
        assert!(matches!(
            ch.tensor_power(7, DEFAULT_SIZE_CAP),
            Err(Error::SizeBudgetExceeded { dim: 128, cap: 64 })
        ));
        // product states factorize
        let rho = DensityMatrix::plus();
        let out2 = two.apply(&rho.tensor(&rho)).unwrap();
        let single = ch.apply(&rho).unwrap();
        assert!(close(out2.matrix(), single.tensor(&single).matrix(), 1e-14));
        let three = ch.tensor_power(3, DEFAULT_SIZE_CAP).unwrap();
        let out3 = three.apply(&rho.tensor(&rho).tensor(&rho)).unwrap();
        assert!(close(out3.matrix(), single.tensor(&single).tensor(&single).matrix(), 1e-14));
    }

    #[test]
    fn rejects_incomplete_kraus() {
        let half = linalg::identity(2).scale(0.5);
        assert!(matches!(KrausChannel::new(vec![half]), Err(Error::NotComplete(_))));
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(linalg::real_diag(&[0.5, 0.6])).is_err());
        assert!(DensityMatrix::new(linalg::real_diag(&[1.5, -0.5])).is_err());
        let pur = DensityMatrix::new(linalg::real_diag(&[0.25, 0.75])).unwrap().purification().unwrap();
        let back = pur.trace_out_ancilla(2).unwrap();
        assert!(close(back.matrix(), &linalg::real_diag(&[0.25, 0.75]), 1e-14));
    }

    #[test]
    fn tabulated_round_trip_and_missing_points() {
        let pts = vec![vec![0.3, 0.5], vec![0.31, 0.5]];
        let tab = TabulatedChannel::sample(&DephasingPhase, &pts).unwrap();
        let back = TabulatedChannel::from_json(&tab.to_json()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.param_names(), vec!["omega", "eta"]);
        let a = back.evaluate(&[0.31, 0.5]).unwrap();
        let b = dephasing_phase(0.31, 0.5).unwrap();
        assert!(close(&a.kraus()[1], &b.kraus()[1], 1e-15));
        assert!(matches!(back.evaluate(&[0.2, 0.5]), Err(Error::MissingPoints(_))));
        assert_eq!(back.missing(&[vec![0.3, 0.5], vec![0.0, 0.0]]), vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn schema_errors_name_the_field() {
        let bad = r#"{"num_params": 1, "dim_in": 2, "dim_out": 2, "kraus_rank": 1,
            "points": [{"x": [0.0], "kraus": [[[[1,0],[0,0]],[[0,0]]]]}]}"#;
        let err = TabulatedChannel::from_json(bad).unwrap_err().to_string();
        assert!(err.contains("points[0].kraus[0][1]"), "{err}");
        let syntax = "{\"num_params\": 1,\n \"dim_in\": }";
        let err = TabulatedChannel::from_json(syntax).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }
}
