//! Minimum output fidelity between two channels.
//!
//! For Kraus sets `{Fᵢ}` and `{F'ⱼ}` of equal rank,
//!
//! ```text
//! min_ρ F(K⊗I(ρ), K'⊗I(ρ)) = max_{‖W‖≤1} ½ λ_min(K_W + K_W†),   K_W = Σ wᵢⱼ Fᵢ† F'ⱼ
//!                          = min_{ρ^S} ‖M(ρ^S)‖₁,              Mᵢⱼ = Tr[ρ^S Fᵢ† F'ⱼ]
//! ```
//!
//! Both sides are posed as SDPs. Every result carries two certified
//! values: the lower bound `½λ_min(K_W + K_W†)` at the returned contraction
//! and the upper bound `‖M(ρ^S)‖₁` attained by the purification of the
//! returned probe.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::channels::{DensityMatrix, KrausChannel};
use crate::error::{Error, Result};
use crate::linalg::{self, c64, ComplexMatrix};
use crate::sdp::{self, hermitian_unit, SdpProblem, SdpSolution, SdpStatus, SolverOptions};

/// Solver settings used for fidelity SDPs.
pub const FIDELITY_SOLVER: SolverOptions = SolverOptions {
    gap_tol: 1e-12,
    feas_tol: 1e-12,
    max_iter: 120,
};

/// Looser tolerances an iterate must meet when the tight ones are not reached.
const ACCEPT_TOL: f64 = 1e-8;
/// Largest certified `upper − lower` accepted from a solve that stopped early.
const BRACKET_TOL: f64 = 1e-8;

/// A `d×d` matrix with `‖W‖_op ≤ 1 + 1e-9`.
#[derive(Debug, Clone)]
pub struct ContractionW(ComplexMatrix);

impl ContractionW {
    pub fn new(w: ComplexMatrix) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::NotSquare(w.nrows(), w.ncols()));
        }
        let norm = linalg::op_norm(&w);
        if norm > 1.0 + 1e-9 {
            return Err(Error::InvalidInput(format!("‖W‖ = {norm} exceeds 1")));
        }
        Ok(ContractionW(w))
    }

    /// Rescales `w` onto the unit ball when its norm exceeds one.
    pub fn clamped(w: ComplexMatrix) -> Self {
        let norm = linalg::op_norm(&w);
        if norm > 1.0 {
            ContractionW(w.unscale(norm))
        } else {
            ContractionW(w)
        }
    }

    pub fn identity(d: usize) -> Self {
        ContractionW(linalg::identity(d))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Outcome of a minimum-fidelity computation.
#[derive(Debug, Clone)]
pub struct FidelityResult {
    /// The objective of the solved form: the lower bound for the primal,
    /// the upper bound for the dual.
    pub f_min: f64,
    /// `½λ_min(K_W + K_W†)` at `w_opt`.
    pub lower_bound: f64,
    /// `‖M(probe_opt)‖₁`.
    pub upper_bound: f64,
    pub w_opt: ContractionW,
    /// Optimal reduced probe `ρ^S` on the system.
    pub probe_opt: DensityMatrix,
    /// `upper_bound − lower_bound`.
    pub gap: f64,
    /// Duality gap reported by the SDP solver.
    pub sdp_gap: f64,
    /// Objective value of the solved form, converted to a fidelity.
    pub sdp_value: f64,
    pub status: SdpStatus,
    /// `t = λ_min(K_W + K_W†)`.
    pub t: f64,
    pub p: ComplexMatrix,
    pub q: ComplexMatrix,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenAngles {
    /// Phases in `(−π, π]`, descending.
    pub angles: Vec<f64>,
    pub spread: f64,
}

fn check_pair(ka: &KrausChannel, kb: &KrausChannel) -> Result<()> {
    if ka.dim_in() != kb.dim_in() || ka.dim_out() != kb.dim_out() {
        return Err(Error::DimMismatch {
            expected: ka.dim_in(),
            got: kb.dim_in(),
        });
    }
    if ka.rank() != kb.rank() {
        return Err(Error::RankMismatch(ka.rank(), kb.rank()));
    }
    Ok(())
}

/// `Gᵢⱼ = Fᵢ†(a) Fⱼ(b)`, row-major in `(i, j)`.
fn kraus_products(ka: &KrausChannel, kb: &KrausChannel) -> Vec<ComplexMatrix> {
    let mut out = Vec::with_capacity(ka.rank() * kb.rank());
    for fa in ka.kraus() {
        let fa_adj = fa.adjoint();
        for fb in kb.kraus() {
            out.push(&fa_adj * fb);
        }
    }
    out
}

/// `K_W = Σᵢⱼ wᵢⱼ Fᵢ†(a) Fⱼ(b)`.
pub fn kw_matrix(ka: &KrausChannel, kb: &KrausChannel, w: &ContractionW) -> Result<ComplexMatrix> {
    check_pair(ka, kb)?;
    let d = ka.rank();
    if w.dim() != d {
        return Err(Error::DimMismatch {
            expected: d,
            got: w.dim(),
        });
    }
    Ok(kw_from_products(&kraus_products(ka, kb), w.matrix(), ka.dim_in()))
}

fn kw_from_products(g: &[ComplexMatrix], w: &ComplexMatrix, n: usize) -> ComplexMatrix {
    let d = w.nrows();
    let mut k = ComplexMatrix::zeros(n, n);
    for i in 0..d {
        for j in 0..d {
            k += &g[i * d + j] * w[(i, j)];
        }
    }
    k
}

/// `Mᵢⱼ = Tr[ρ^S Fᵢ†(a) Fⱼ(b)]`.
pub fn m_matrix(rho_s: &DensityMatrix, ka: &KrausChannel, kb: &KrausChannel) -> Result<ComplexMatrix> {
    check_pair(ka, kb)?;
    if rho_s.dim() != ka.dim_in() {
        return Err(Error::DimMismatch {
            expected: ka.dim_in(),
            got: rho_s.dim(),
        });
    }
    Ok(m_from_products(&kraus_products(ka, kb), rho_s.matrix(), ka.rank()))
}

fn m_from_products(g: &[ComplexMatrix], rho: &ComplexMatrix, d: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, d, |i, j| trace_product(rho, &g[i * d + j]))
}

/// `Tr(A B)` for square matrices.
fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> crate::linalg::C64 {
    let n = a.nrows();
    let mut acc = c64(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Fidelity between the outputs of the purification of `rho_s`, `‖M(ρ^S)‖₁`.
pub fn probe_fidelity(rho_s: &DensityMatrix, ka: &KrausChannel, kb: &KrausChannel) -> Result<f64> {
    Ok(linalg::trace_norm(&m_matrix(rho_s, ka, kb)?))
}

/// `½ λ_min(K_W + K_W†)`.
pub fn contraction_value(ka: &KrausChannel, kb: &KrausChannel, w: &ContractionW) -> Result<f64> {
    let k = kw_matrix(ka, kb, w)?;
    Ok(0.5 * linalg::herm_eigenvalues(&(&k + k.adjoint()))?[0])
}

/// A solve is accepted when it converged, or when it stopped early but the
/// independently certified bracket `[lower, upper]` is already tight.
fn accept(sol: &SdpSolution, lower: f64, upper: f64) -> Result<()> {
    let early = matches!(sol.status, SdpStatus::Stalled | SdpStatus::MaxIterations);
    if sol.is_optimal() || sol.meets(ACCEPT_TOL, ACCEPT_TOL) || (early && upper - lower <= BRACKET_TOL) {
        Ok(())
    } else {
        Err(Error::SolverFailure {
            status: sol.status,
            gap: sol.gap,
        })
    }
}

/// Newton iterations of the rank-deficient polish.
const POLISH_ITERS: usize = 20;
/// `σ_min/σ_max` of `M` below which the optimum is treated as rank-deficient.
const RANK_DEFICIENT: f64 = 1e-3;
/// Probe eigenvalues at or below this are treated as zero.
const RANK_CUTOFF: f64 = 1e-6;

/// 2×2 adjugate, so that `det(A + B) = det A + Tr(adj(A) B) + det B`.
fn adjugate2(a: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[a[(1, 1)], -a[(0, 1)], -a[(1, 0)], a[(0, 0)]])
}

/// Refines a bracket whose optimum has a singular `2×2` matrix `M`.
///
/// There `‖M‖₁² = ‖M‖_F² + 2|det M|` is nonsmooth and interior-point
/// iterates stall around `√ε`. On the set `det M = 0` the objective is the
/// quadratic `‖M‖_F²`, so Newton's method on the constrained stationarity
/// system converges quickly. A full-rank probe then forces
/// `K_W + K_W† ∝ I`, which fixes the free part of `W` on the kernel of `M`
/// by least squares. Returns the probe, its upper bound, the contraction
/// and its `t`, all re-evaluated.
fn polish_singular(g: &[ComplexMatrix], probe: &DensityMatrix, d: usize) -> Option<(DensityMatrix, f64, ContractionW, f64)> {
    let n = probe.dim();
    if d != 2 || n < 2 {
        return None;
    }
    let m_start = m_from_products(g, probe.matrix(), d);
    let sv = m_start.singular_values();
    if sv.max() <= 0.0 || sv.min() > RANK_DEFICIENT * sv.max() {
        return None;
    }
    let basis = traceless_basis(n);
    let p = basis.len();
    let mk: Vec<ComplexMatrix> = basis.iter().map(|b| m_from_products(g, b, d)).collect();
    let hess_q = DMatrix::<f64>::from_fn(p, p, |k, l| 2.0 * linalg::re_trace_product(&mk[k].adjoint(), &mk[l]));
    // Second derivatives of det M: ∂²/∂y_k∂y_l = Tr(adj(M_k) M_l).
    let hess_det: Vec<Vec<linalg::C64>> = (0..p)
        .map(|k| (0..p).map(|l| trace_product(&adjugate2(&mk[k]), &mk[l])).collect())
        .collect();

    let mut y = DVector::<f64>::zeros(p);
    let mut lambda = DVector::<f64>::zeros(2);
    let at = |y: &DVector<f64>| -> ComplexMatrix { mk.iter().zip(y.iter()).fold(m_start.clone(), |acc, (m, &v)| acc + m.scale(v)) };
    for iter in 0..POLISH_ITERS {
        let m = at(&y);
        let adj = adjugate2(&m);
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let grad_q = DVector::from_iterator(p, mk.iter().map(|b| 2.0 * linalg::re_trace_product(&b.adjoint(), &m)));
        let mut jac = DMatrix::<f64>::zeros(2, p);
        for (k, b) in mk.iter().enumerate() {
            let dz = trace_product(&adj, b);
            jac[(0, k)] = dz.re;
            jac[(1, k)] = dz.im;
        }
        if iter == 0 {
            // Least-squares multipliers for the starting point.
            lambda = (&jac * jac.transpose()).lu().solve(&(-&jac * &grad_q))?;
        }
        let mut kkt = DMatrix::<f64>::zeros(p + 2, p + 2);
        for k in 0..p {
            for l in 0..p {
                let h = hess_det[k][l];
                kkt[(k, l)] = hess_q[(k, l)] + lambda[0] * h.re + lambda[1] * h.im;
            }
        }
        kkt.view_mut((0, p), (p, 2)).copy_from(&jac.transpose());
        kkt.view_mut((p, 0), (2, p)).copy_from(&jac);
        let mut rhs = DVector::<f64>::zeros(p + 2);
        rhs.rows_mut(0, p).copy_from(&(-(&grad_q + jac.transpose() * &lambda)));
        rhs[p] = -det.re;
        rhs[p + 1] = -det.im;
        let step = kkt.lu().solve(&rhs)?;
        if step.iter().any(|v| !v.is_finite()) {
            return None;
        }
        y += step.rows(0, p);
        lambda += step.rows(p, 2);
        if step.rows(0, p).norm() <= 1e-15 * (1.0 + y.norm()) {
            break;
        }
    }
    let rho = basis.iter().zip(y.iter()).fold(probe.matrix().clone(), |acc, (b, &v)| acc + b.scale(v));
    let probe = to_state(&rho).ok()?;
    let m = m_from_products(g, probe.matrix(), d);
    let upper = linalg::trace_norm(&m);

    // Wᵀ = v₁u₁† + w v₂u₂† attains ‖M‖₁ for every |w| ≤ 1.
    let svd = m.svd(true, true);
    let (u, v) = (svd.u?, svd.v_t?.adjoint());
    let (i1, i2) = if svd.singular_values[0] >= svd.singular_values[1] { (0, 1) } else { (1, 0) };
    let w0 = (v.column(i1) * u.column(i1).adjoint()).transpose();
    let e = (v.column(i2) * u.column(i2).adjoint()).transpose();
    let sym = |w: &ComplexMatrix| {
        let k = kw_from_products(g, w, n);
        &k + k.adjoint()
    };
    let traceless = |h: &ComplexMatrix| h - linalg::identity(n).scale(h.trace().re / n as f64);
    let h0 = traceless(&sym(&w0));
    let h_re = traceless(&sym(&e));
    let h_im = traceless(&sym(&(&e * c64(0.0, 1.0))));
    let flat = |h: &ComplexMatrix| h.iter().flat_map(|z| [z.re, z.im]).collect::<Vec<f64>>();
    let cols = [flat(&h_re), flat(&h_im)];
    let a = DMatrix::<f64>::from_fn(2 * n * n, 2, |r, c| cols[c][r]);
    let b = -DVector::from_vec(flat(&h0));
    let coef = (a.transpose() * &a).lu().solve(&(a.transpose() * b))?;
    let mut w = c64(coef[0], coef[1]);
    if w.norm() > 1.0 {
        w /= w.norm();
    }
    let contraction = ContractionW::clamped(&w0 + &e * w);
    let t = linalg::herm_eigenvalues(&sym(contraction.matrix())).ok()?[0];
    Some((probe, upper, contraction, t))
}

/// `W` attaining `‖M‖₁ = Re Tr(WᵀM)`: the transposed polar factor of `M`.
fn polar_w(m: &ComplexMatrix) -> Option<ComplexMatrix> {
    let svd = m.clone().svd(true, true);
    Some((svd.v_t?.adjoint() * svd.u?.adjoint()).transpose())
}

/// Refines a bracket whose optimum has a full-rank `M`, where `‖M(ρ)‖₁`
/// is smooth. The probe is factored as `ρ = AAᴴ/Tr(AAᴴ)` with `A` of the
/// probe's numerical rank, which keeps pure optima on the boundary, and
/// Newton steps use the exact gradient `(2/s)(Γ − f I)A`,
/// `Γ = ½(K_W + K_Wᴴ)`, with a finite-difference Hessian.
fn polish_smooth(g: &[ComplexMatrix], probe: &DensityMatrix, d: usize) -> Option<(DensityMatrix, f64, ContractionW, f64)> {
    let n = probe.dim();
    let eig = linalg::herm_eig(probe.matrix()).ok()?;
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > RANK_CUTOFF).collect();
    let r = keep.len();
    if r == 0 {
        return None;
    }
    let a0 = ComplexMatrix::from_fn(n, r, |i, c| eig.eigenvectors[(i, keep[c])] * eig.eigenvalues[keep[c]].sqrt());
    let dim = 2 * n * r;
    let unpack = |z: &DVector<f64>| -> ComplexMatrix {
        ComplexMatrix::from_fn(n, r, |i, c| a0[(i, c)] + c64(z[2 * (i * r + c)], z[2 * (i * r + c) + 1]))
    };
    let state = |a: &ComplexMatrix| -> ComplexMatrix {
        let rho = a * a.adjoint();
        let s = rho.trace().re;
        rho.unscale(s)
    };
    let value = |z: &DVector<f64>| linalg::trace_norm(&m_from_products(g, &state(&unpack(z)), d));
    let gradient = |z: &DVector<f64>| -> Option<DVector<f64>> {
        let a = unpack(z);
        let s = (&a * a.adjoint()).trace().re;
        let rho = state(&a);
        let m = m_from_products(g, &rho, d);
        let sv = m.singular_values();
        if sv.min() <= RANK_DEFICIENT * sv.max() {
            return None;
        }
        let k = kw_from_products(g, &polar_w(&m)?, n);
        let gamma = (&k + k.adjoint()).scale(0.5);
        let f = linalg::re_trace_product(&rho, &gamma);
        let ga = (gamma - linalg::identity(n).scale(f)) * &a * c64(2.0 / s, 0.0);
        Some(DVector::from_iterator(dim, ga.transpose().iter().flat_map(|z| [z.re, z.im])))
    };

    let mut z = DVector::<f64>::zeros(dim);
    let mut best = value(&z);
    for _ in 0..POLISH_ITERS {
        let grad = gradient(&z)?;
        if grad.norm() <= 1e-15 {
            break;
        }
        let h = 1e-6;
        let mut hess = DMatrix::<f64>::zeros(dim, dim);
        for l in 0..dim {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[l] += h;
            zm[l] -= h;
            hess.set_column(l, &((gradient(&zp)? - gradient(&zm)?) / (2.0 * h)));
        }
        let hess = (&hess + hess.transpose()) / 2.0;
        // The factorisation has a gauge freedom; drop the flat directions.
        let eig = hess.symmetric_eigen();
        let floor = 1e-8 * eig.eigenvalues.amax().max(1e-300);
        let mut step = DVector::<f64>::zeros(dim);
        for (i, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam > floor {
                let v = eig.eigenvectors.column(i);
                step -= v * (v.dot(&grad) / lam);
            }
        }
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let trial = &z + &step * alpha;
            let v = value(&trial);
            if v <= best {
                z = trial;
                best = v;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let probe = to_state(&state(&unpack(&z))).ok()?;
    let m = m_from_products(g, probe.matrix(), d);
    let upper = linalg::trace_norm(&m);
    let contraction = ContractionW::clamped(polar_w(&m)?);
    let k = kw_from_products(g, contraction.matrix(), n);
    let t = linalg::herm_eigenvalues(&(&k + k.adjoint())).ok()?[0];
    Some((probe, upper, contraction, t))
}

/// Polishes the returned probe and keeps whichever bound it tightens.
fn tighten(g: &[ComplexMatrix], d: usize, result: &mut FidelityResult) {
    let polished = polish_singular(g, &result.probe_opt, d).or_else(|| polish_smooth(g, &result.probe_opt, d));
    let Some((probe, upper, w, t)) = polished else {
        return;
    };
    if upper < result.upper_bound {
        result.upper_bound = upper;
        result.probe_opt = probe;
    }
    if 0.5 * t > result.lower_bound {
        result.lower_bound = 0.5 * t;
        result.w_opt = w;
        result.t = t;
    }
    result.gap = result.upper_bound - result.lower_bound;
}

/// Projects a nearly-PSD matrix onto the states.
fn to_state(m: &ComplexMatrix) -> Result<DensityMatrix> {
    let eig = linalg::herm_eig(&linalg::hermitian_part(m))?;
    let fixed = eig.map_spectrum(|l| c64(l.max(0.0), 0.0));
    let t = fixed.trace().re;
    if !(t > 0.0) {
        return Err(Error::NotAState("zero dual block".into()));
    }
    DensityMatrix::new(fixed.unscale(t))
}

/// Maximizes `½t` over contractions `W` subject to `K_W + K_W† ⪰ tI`.
pub fn min_fidelity_primal(ka: &KrausChannel, kb: &KrausChannel) -> Result<FidelityResult> {
    check_pair(ka, kb)?;
    let d = ka.rank();
    let n = ka.dim_in();
    let g = kraus_products(ka, kb);
    let nw = 2 * d * d;
    let mut objective = vec![0.0; nw + 1];
    objective[nw] = 0.5;
    let mut problem = SdpProblem::new(objective);

    // [[I, W†], [W, I]] ⪰ 0
    let mut coeffs = Vec::with_capacity(nw + 1);
    for i in 0..d {
        for j in 0..d {
            let mut re = ComplexMatrix::zeros(2 * d, 2 * d);
            re[(d + i, j)] = c64(1.0, 0.0);
            re[(j, d + i)] = c64(1.0, 0.0);
            let mut im = ComplexMatrix::zeros(2 * d, 2 * d);
            im[(d + i, j)] = c64(0.0, 1.0);
            im[(j, d + i)] = c64(0.0, -1.0);
            coeffs.push(re);
            coeffs.push(im);
        }
    }
    coeffs.push(ComplexMatrix::zeros(2 * d, 2 * d));
    problem.add_block(linalg::identity(2 * d), coeffs);

    // K_W + K_W† − tI ⪰ 0
    let mut coeffs = Vec::with_capacity(nw + 1);
    for gij in &g {
        let adj = gij.adjoint();
        coeffs.push(gij + &adj);
        coeffs.push((gij - &adj) * c64(0.0, 1.0));
    }
    coeffs.push(-linalg::identity(n));
    problem.add_block(ComplexMatrix::zeros(n, n), coeffs);

    let sol = sdp::solve_with(&problem, FIDELITY_SOLVER)?;
    if !matches!(sol.status, SdpStatus::Optimal | SdpStatus::Stalled | SdpStatus::MaxIterations) {
        accept(&sol, f64::NEG_INFINITY, f64::INFINITY)?;
    }
    let w = ComplexMatrix::from_fn(d, d, |i, j| {
        let k = 2 * (i * d + j);
        c64(sol.y[k], sol.y[k + 1])
    });
    let w = ContractionW::clamped(w);
    let k = kw_from_products(&g, w.matrix(), n);
    let t = linalg::herm_eigenvalues(&(&k + k.adjoint()))?[0];
    let lower = 0.5 * t;
    let z1 = &sol.dual[0];
    let probe = to_state(&sol.dual[1])?;
    let upper = linalg::trace_norm(&m_from_products(&g, probe.matrix(), d));
    let mut result = FidelityResult {
        f_min: lower,
        lower_bound: lower,
        upper_bound: upper,
        w_opt: w,
        probe_opt: probe,
        gap: upper - lower,
        sdp_gap: sol.gap,
        sdp_value: sol.primal_objective,
        status: sol.status,
        t,
        p: z1.view((0, 0), (d, d)).scale(2.0),
        q: z1.view((d, d), (d, d)).scale(2.0),
    };
    tighten(&g, d, &mut result);
    result.f_min = result.lower_bound;
    accept(&sol, result.lower_bound, result.upper_bound)?;
    Ok(result)
}

/// Traceless Hermitian basis: off-diagonal units, then `E_kk − E_{n−1,n−1}`.
fn traceless_basis(n: usize) -> Vec<ComplexMatrix> {
    let mut out = Vec::with_capacity(n * n - 1);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(hermitian_unit(n, i, j, false));
            out.push(hermitian_unit(n, i, j, true));
        }
    }
    for k in 0..n.saturating_sub(1) {
        let mut m = ComplexMatrix::zeros(n, n);
        m[(k, k)] = c64(1.0, 0.0);
        m[(n - 1, n - 1)] = c64(-1.0, 0.0);
        out.push(m);
    }
    out
}

/// Minimizes `½Tr P + ½Tr Q` over states `ρ^S` with `[[P, M†],[M, Q]] ⪰ 0`.
pub fn min_fidelity_dual(ka: &KrausChannel, kb: &KrausChannel) -> Result<FidelityResult> {
    check_pair(ka, kb)?;
    let d = ka.rank();
    let n = ka.dim_in();
    let g = kraus_products(ka, kb);
    let herm: Vec<(usize, usize, bool)> = (0..d)
        .flat_map(|i| (i..d).flat_map(move |j| if i == j { vec![(i, j, false)] } else { vec![(i, j, false), (i, j, true)] }))
        .collect();
    let basis = traceless_basis(n);
    let np = herm.len();
    let nvars = 2 * np + basis.len();

    let mut objective = vec![0.0; nvars];
    for (k, &(i, j, _)) in herm.iter().enumerate() {
        if i == j {
            objective[k] = -0.5;
            objective[np + k] = -0.5;
        }
    }
    let mut problem = SdpProblem::new(objective);

    let embed = |m: &ComplexMatrix| -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(2 * d, 2 * d);
        out.view_mut((d, 0), (d, d)).copy_from(m);
        out.view_mut((0, d), (d, d)).copy_from(&m.adjoint());
        out
    };
    let m0 = m_from_products(&g, &linalg::identity(n).unscale(n as f64), d);
    let mut coeffs = Vec::with_capacity(nvars);
    for &(i, j, im) in &herm {
        let mut c = ComplexMatrix::zeros(2 * d, 2 * d);
        c.view_mut((0, 0), (d, d)).copy_from(&hermitian_unit(d, i, j, im));
        coeffs.push(c);
    }
    for &(i, j, im) in &herm {
        let mut c = ComplexMatrix::zeros(2 * d, 2 * d);
        c.view_mut((d, d), (d, d)).copy_from(&hermitian_unit(d, i, j, im));
        coeffs.push(c);
    }
    for b in &basis {
        coeffs.push(embed(&m_from_products(&g, b, d)));
    }
    problem.add_block(embed(&m0), coeffs);

    let mut coeffs = vec![ComplexMatrix::zeros(n, n); 2 * np];
    coeffs.extend(basis.iter().cloned());
    problem.add_block(linalg::identity(n).unscale(n as f64), coeffs);

    let sol = sdp::solve_with(&problem, FIDELITY_SOLVER)?;
    if !matches!(sol.status, SdpStatus::Optimal | SdpStatus::Stalled | SdpStatus::MaxIterations) {
        accept(&sol, f64::NEG_INFINITY, f64::INFINITY)?;
    }
    let rho = basis
        .iter()
        .zip(&sol.y[2 * np..])
        .fold(linalg::identity(n).unscale(n as f64), |acc, (b, &v)| acc + b.scale(v));
    let probe = to_state(&rho)?;
    let upper = linalg::trace_norm(&m_from_products(&g, probe.matrix(), d));
    let assemble = |offset: usize| -> ComplexMatrix {
        herm.iter()
            .enumerate()
            .fold(ComplexMatrix::zeros(d, d), |acc, (k, &(i, j, im))| {
                acc + hermitian_unit(d, i, j, im).scale(sol.y[offset + k])
            })
    };
    let z12 = sol.dual[0].view((0, d), (d, d)).into_owned();
    let w = ContractionW::clamped(-z12.transpose().scale(2.0));
    let k = kw_from_products(&g, w.matrix(), n);
    let t = linalg::herm_eigenvalues(&(&k + k.adjoint()))?[0];
    let lower = 0.5 * t;
    let mut result = FidelityResult {
        f_min: upper,
        lower_bound: lower,
        upper_bound: upper,
        w_opt: w,
        probe_opt: probe,
        gap: upper - lower,
        sdp_gap: sol.gap,
        sdp_value: -sol.primal_objective,
        status: sol.status,
        t,
        p: assemble(0),
        q: assemble(np),
    };
    tighten(&g, d, &mut result);
    result.f_min = result.upper_bound;
    if accept(&sol, result.lower_bound, result.upper_bound).is_ok() {
        return Ok(result);
    }
    // Early stop with a loose bracket: tighten it with the primal solve.
    let primal = min_fidelity_primal(ka, kb).map_err(|_| Error::SolverFailure {
        status: sol.status,
        gap: sol.gap,
    })?;
    if primal.lower_bound > result.lower_bound {
        result.lower_bound = primal.lower_bound;
        result.w_opt = primal.w_opt;
        result.t = primal.t;
    }
    if primal.upper_bound < result.upper_bound {
        result.upper_bound = primal.upper_bound;
        result.probe_opt = primal.probe_opt;
    }
    result.f_min = result.upper_bound;
    result.gap = result.upper_bound - result.lower_bound;
    accept(&sol, result.lower_bound, result.upper_bound)?;
    Ok(result)
}

/// Eigenvalue phases of a unitary in `(−π, π]`, descending.
pub fn eigen_angles(u: &ComplexMatrix) -> Result<EigenAngles> {
    if u.nrows() != u.ncols() {
        return Err(Error::NotSquare(u.nrows(), u.ncols()));
    }
    let defect = linalg::unitarity_defect(u);
    if defect > 1e-8 {
        return Err(Error::NotUnitary(defect));
    }
    let mut angles: Vec<f64> = linalg::complex_eigenvalues(u)?.iter().map(|z| z.arg()).collect();
    if let Some(&a) = angles.iter().find(|a| a.abs() > std::f64::consts::PI - 1e-9) {
        return Err(Error::BranchAmbiguity(a));
    }
    angles.sort_by(|a, b| b.total_cmp(a));
    let spread = angles[0] - angles[angles.len() - 1];
    Ok(EigenAngles { angles, spread })
}

/// `C(U) = (E_max − E_min)/2`, requiring a spread of at most π.
pub fn angle_half_spread(u: &ComplexMatrix) -> Result<f64> {
    let e = eigen_angles(u)?;
    if e.spread > std::f64::consts::PI {
        return Err(Error::SpreadExceedsPi(e.spread));
    }
    Ok(e.spread / 2.0)
}

/// `cos C(Ua† Ub)`.
pub fn min_fidelity_unitary(ua: &ComplexMatrix, ub: &ComplexMatrix) -> Result<f64> {
    if ua.shape() != ub.shape() {
        return Err(Error::DimMismatch {
            expected: ua.nrows(),
            got: ub.nrows(),
        });
    }
    Ok(angle_half_spread(&(ua.adjoint() * ub))?.cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{dephasing_phase, two_param_rotation};
    use std::f64::consts::PI;

    fn unitary_channel(u: ComplexMatrix) -> KrausChannel {
        KrausChannel::new(vec![u]).unwrap()
    }

    fn rz(theta: f64) -> ComplexMatrix {
        linalg::herm_exp(&linalg::pauli_z(), theta / 2.0).unwrap()
    }

    #[test]
    fn kw_examples() {
        let id = KrausChannel::identity(2);
        let k = kw_matrix(&id, &id, &ContractionW::identity(1)).unwrap();
        assert!((k - linalg::identity(2)).norm() < 1e-15);
        let ch = dephasing_phase(0.4, 0.3).unwrap();
        let k = kw_matrix(&ch, &ch, &ContractionW::identity(2)).unwrap();
        assert!((k - linalg::identity(2)).norm() < 1e-15);
        let other = dephasing_phase(0.4, 0.3).unwrap().tensor_power(2, 64).unwrap();
        assert!(matches!(
            kw_matrix(&ch, &other, &ContractionW::identity(2)),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn m_examples() {
        let eta = 0.6;
        let ch = dephasing_phase(0.2, eta).unwrap();
        let m = m_matrix(&DensityMatrix::maximally_mixed(2), &ch, &ch).unwrap();
        let expect = linalg::real_diag(&[(1.0 + eta) / 2.0, (1.0 - eta) / 2.0]);
        assert!((&m - expect).norm() < 1e-15);
        assert!((linalg::trace_norm(&m) - 1.0).abs() < 1e-14);
        let u = unitary_channel(rz(0.7));
        let m = m_matrix(&DensityMatrix::plus(), &u, &u).unwrap();
        assert!((m[(0, 0)] - c64(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn m_second_order_expansion() {
        let (omega, eta) = (0.3, 0.5);
        let (dw, de) = (1e-3, 2e-3);
        let (r11, r22) = (0.3, 0.7);
        let a = dephasing_phase(omega, eta).unwrap();
        let b = dephasing_phase(omega + dw, eta + de).unwrap();
        let rho = DensityMatrix::new(linalg::real_diag(&[r11, r22])).unwrap();
        let norm = linalg::trace_norm(&m_matrix(&rho, &a, &b).unwrap());
        let expect = 1.0 - 0.5 * r11 * r22 * eta * eta * dw * dw - r11 * r22 * de * de / (2.0 * (1.0 - eta * eta));
        assert!((norm - expect).abs() < 1e-8, "{norm} vs {expect}");
    }

    #[test]
    fn identical_channels_have_unit_fidelity() {
        let ch = dephasing_phase(0.3, 0.5).unwrap();
        let p = min_fidelity_primal(&ch, &ch).unwrap();
        assert!((p.f_min - 1.0).abs() < 1e-9, "{}", p.f_min);
        assert!(linalg::op_norm(p.w_opt.matrix()) <= 1.0 + 1e-9);
        let d = min_fidelity_dual(&ch, &ch).unwrap();
        assert!((d.f_min - 1.0).abs() < 1e-9);
        let id = KrausChannel::identity(2);
        assert!((min_fidelity_primal(&id, &id).unwrap().f_min - 1.0).abs() < 1e-9);
    }

    #[test]
    fn phase_rotation_fidelity() {
        let dw = 0.3;
        let a = unitary_channel(linalg::identity(2));
        let b = unitary_channel(rz(dw));
        let p = min_fidelity_primal(&a, &b).unwrap();
        assert!((p.f_min - (dw / 2.0).cos()).abs() < 1e-9, "{}", p.f_min);
        let d = min_fidelity_dual(&a, &b).unwrap();
        assert!((d.f_min - (dw / 2.0).cos()).abs() < 1e-9);
        assert!((min_fidelity_unitary(&linalg::identity(2), &rz(dw)).unwrap() - (dw / 2.0).cos()).abs() < 1e-14);
    }

    #[test]
    fn dephasing_fidelity_expansion_and_probe() {
        let (omega, eta) = (0.3, 0.5);
        let (dw, de) = (1e-2, 1e-2);
        let a = dephasing_phase(omega, eta).unwrap();
        let b = dephasing_phase(omega + dw, eta + de).unwrap();
        let p = min_fidelity_primal(&a, &b).unwrap();
        let d = min_fidelity_dual(&a, &b).unwrap();
        let second = 1.0 - eta * eta * dw * dw / 8.0 - de * de / (8.0 * (1.0 - eta * eta));
        assert!((p.f_min - second).abs() < 1e-5);
        assert!((p.f_min - d.f_min).abs() < 1e-8, "{} {}", p.f_min, d.f_min);
        assert!(p.gap >= -1e-12 && p.gap < 1e-8);
        assert!((d.probe_opt.matrix()[(0, 0)].re - 0.5).abs() < 1e-4);
        assert!((p.probe_opt.matrix()[(0, 0)].re - 0.5).abs() < 1e-4);
    }

    #[test]
    fn rotation_pair_fidelity() {
        let (x, dx, t) = ([0.7, 0.3], [0.01, -0.02], 1.0);
        let a = two_param_rotation(x[0], x[1], t).unwrap();
        let b = two_param_rotation(x[0] + dx[0], x[1] + dx[1], t).unwrap();
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let y = [x[0] + dx[0], x[1] + dx[1]];
        let s = (y[0] * y[0] + y[1] * y[1]).sqrt();
        let cos_a = (r * t).cos() * (s * t).cos() + (x[0] * y[0] + x[1] * y[1]) / (r * s) * (r * t).sin() * (s * t).sin();
        let d = min_fidelity_dual(&a, &b).unwrap();
        assert!((d.f_min - cos_a).abs() < 1e-8);
        let u = min_fidelity_unitary(&a.kraus()[0], &b.kraus()[0]).unwrap();
        assert!((u - cos_a).abs() < 1e-12);
    }

    #[test]
    fn eigen_angle_examples() {
        let e = eigen_angles(&linalg::identity(3)).unwrap();
        assert!(e.angles.iter().all(|a| a.abs() < 1e-15));
        let theta = 0.8;
        let u = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c64(0.0, -theta).exp(), c64(0.0, 0.0), c64(0.0, 0.0), c64(0.0, theta).exp()],
        );
        let e = eigen_angles(&u).unwrap();
        assert!((e.angles[0] - theta).abs() < 1e-14 && (e.angles[1] + theta).abs() < 1e-14);
        assert!((e.spread - 2.0 * theta).abs() < 1e-14);
        let u = linalg::herm_exp(&linalg::pauli_x(), PI / 4.0).unwrap();
        let e = eigen_angles(&u).unwrap();
        assert!((e.angles[0] - PI / 4.0).abs() < 1e-14 && (e.angles[1] + PI / 4.0).abs() < 1e-14);
        assert!(matches!(eigen_angles(&linalg::identity(2).scale(1.1)), Err(Error::NotUnitary(_))));
        assert!(matches!(
            eigen_angles(&linalg::identity(2).scale(-1.0)),
            Err(Error::BranchAmbiguity(_))
        ));
        let wide = rz(3.5);
        assert!(matches!(angle_half_spread(&wide), Err(Error::SpreadExceedsPi(_))));
    }
}
