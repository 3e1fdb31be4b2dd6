//! Small dense semidefinite programs.
//!
//! Problems are posed in inequality form
//!
//! ```text
//! maximize  cᵀy
//! s.t.      A₀⁽ᵏ⁾ + Σᵢ yᵢ Aᵢ⁽ᵏ⁾ ⪰ 0   for every block k
//! ```
//!
//! with complex Hermitian blocks. The dual is
//! `minimize Σₖ Tr(A₀⁽ᵏ⁾Zₖ)` over `Zₖ ⪰ 0` with `Σₖ Tr(Aᵢ⁽ᵏ⁾Zₖ) = −cᵢ`.
//!
//! The solver is an infeasible-start primal-dual path-following method
//! (Nesterov–Todd direction, Mehrotra predictor-corrector). Internally the
//! problem is handled in the standard pair
//! `min ⟨C,X⟩ s.t. ⟨Aₖ,X⟩ = bₖ, X ⪰ 0` / `max bᵀy s.t. C − Σ yₖAₖ = S ⪰ 0`
//! with `C = A₀`, `Aₖ = −(user Aₖ)` and `b = c`, so the user's variable `y`
//! is the standard dual variable and the user's dual `Z` is `X`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c64, ComplexMatrix, C64};

/// Coefficients with at most this fraction of nonzeros are kept sparse.
const SPARSE_FRACTION: f64 = 0.25;

/// Iterate norm beyond which the problem is declared infeasible or unbounded.
const DIVERGENCE: f64 = 1e12;

/// Iterative-refinement passes on the Schur complement solve.
const REFINE_STEPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SdpStatus {
    Optimal,
    /// A certificate that no `y` makes every block PSD was found.
    Infeasible,
    /// A feasible ray with increasing objective was found.
    Unbounded,
    MaxIterations,
    /// Step lengths collapsed before the tolerances were met.
    Stalled,
}

/// One coefficient matrix, stored sparse or dense depending on fill.
#[derive(Debug, Clone)]
struct Coefficient {
    entries: Vec<(usize, usize, C64)>,
    dense: Option<ComplexMatrix>,
}

impl Coefficient {
    fn new(m: &ComplexMatrix) -> Self {
        let n = m.nrows();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if v.re != 0.0 || v.im != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        let dense = if (entries.len() as f64) > SPARSE_FRACTION * (n * n) as f64 {
            Some(m.clone())
        } else {
            None
        };
        Coefficient { entries, dense }
    }

    fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// `Re Tr(A Y)`.
    fn inner(&self, y: &ComplexMatrix) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| {
                let w = y[(j, i)];
                v.re * w.re - v.im * w.im
            })
            .sum()
    }

    /// `out += alpha * A`.
    fn add_scaled_to(&self, alpha: f64, out: &mut ComplexMatrix) {
        for &(i, j, v) in &self.entries {
            out[(i, j)] += v * alpha;
        }
    }

    /// `L A R` for dense `L`, `R`.
    fn sandwich(&self, left: &ComplexMatrix, right: &ComplexMatrix) -> ComplexMatrix {
        match &self.dense {
            Some(a) => left * a * right,
            None => {
                let n = left.nrows();
                let mut out = ComplexMatrix::zeros(n, right.ncols());
                for &(i, j, v) in &self.entries {
                    for c in 0..right.ncols() {
                        let r = right[(j, c)] * v;
                        if r.re == 0.0 && r.im == 0.0 {
                            continue;
                        }
                        for row in 0..n {
                            out[(row, c)] += left[(row, i)] * r;
                        }
                    }
                }
                out
            }
        }
    }

    fn frobenius(&self) -> f64 {
        self.entries.iter().map(|e| e.2.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// One linear matrix inequality `A₀ + Σ yᵢ Aᵢ ⪰ 0`.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub constant: ComplexMatrix,
    pub coefficients: Vec<ComplexMatrix>,
}

impl LmiBlock {
    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    /// `A₀ + Σ yᵢ Aᵢ`.
    pub fn evaluate(&self, y: &[f64]) -> ComplexMatrix {
        let mut out = self.constant.clone();
        for (a, &yi) in self.coefficients.iter().zip(y) {
            if yi != 0.0 {
                out += a.scale(yi);
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub objective: Vec<f64>,
    pub blocks: Vec<LmiBlock>,
}

impl SdpProblem {
    pub fn new(objective: Vec<f64>) -> Self {
        SdpProblem {
            objective,
            blocks: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_block(&mut self, constant: ComplexMatrix, coefficients: Vec<ComplexMatrix>) {
        self.blocks.push(LmiBlock {
            constant,
            coefficients,
        });
    }

    fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::MalformedSdp("no constraint blocks".into()));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            let n = b.dim();
            if b.coefficients.len() != self.num_vars() {
                return Err(Error::MalformedSdp(format!(
                    "block {k} has {} coefficients for {} variables",
                    b.coefficients.len(),
                    self.num_vars()
                )));
            }
            for m in std::iter::once(&b.constant).chain(b.coefficients.iter()) {
                if m.nrows() != n || m.ncols() != n {
                    return Err(Error::MalformedSdp(format!("block {k} has inconsistent dimensions")));
                }
                let scale = m.norm().max(1.0);
                if linalg::hermitian_defect(m) > 1e-12 * scale {
                    return Err(Error::MalformedSdp(format!("block {k} has a non-Hermitian matrix")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap_tol: 1e-9,
            feas_tol: 1e-9,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub y: Vec<f64>,
    /// `cᵀy`.
    pub primal_objective: f64,
    /// `Σₖ Tr(A₀⁽ᵏ⁾Zₖ)`.
    pub dual_objective: f64,
    /// `dual − primal`.
    pub gap: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    /// Dual matrices `Zₖ`, one per block.
    pub dual: Vec<ComplexMatrix>,
    /// Relative primal and dual residuals at the returned iterate.
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    /// Minimum eigenvalue over all blocks evaluated at `y`.
    pub min_block_eigenvalue: f64,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }

    /// Whether the iterate satisfies the given tolerances regardless of how
    /// the iteration ended.
    pub fn meets(&self, gap_tol: f64, feas_tol: f64) -> bool {
        matches!(
            self.status,
            SdpStatus::Optimal | SdpStatus::MaxIterations | SdpStatus::Stalled
        ) && self.gap.abs() <= gap_tol * self.primal_objective.abs().max(1.0)
            && self.min_block_eigenvalue >= -feas_tol
            && self.primal_infeasibility <= feas_tol
            && self.dual_infeasibility <= feas_tol
    }
}

struct StdBlock {
    c: ComplexMatrix,
    a: Vec<Coefficient>,
    /// Indices of variables with a nonzero coefficient in this block.
    active: Vec<usize>,
}

struct Iterate {
    x: Vec<ComplexMatrix>,
    s: Vec<ComplexMatrix>,
    y: DVector<f64>,
}

struct Residuals {
    rp: DVector<f64>,
    rd: Vec<ComplexMatrix>,
    pobj: f64,
    dobj: f64,
    pinf: f64,
    dinf: f64,
    relgap: f64,
}

/// Solves the problem with default tolerances.
pub fn solve(problem: &SdpProblem) -> Result<SdpSolution> {
    solve_with(problem, SolverOptions::default())
}

pub fn solve_with(problem: &SdpProblem, opts: SolverOptions) -> Result<SdpSolution> {
    problem.validate()?;
    let m = problem.num_vars();
    let blocks: Vec<StdBlock> = problem
        .blocks
        .iter()
        .map(|b| {
            let a: Vec<Coefficient> = b.coefficients.iter().map(|c| Coefficient::new(&c.scale(-1.0))).collect();
            let active = (0..m).filter(|&i| !a[i].is_zero()).collect();
            StdBlock {
                c: b.constant.clone(),
                a,
                active,
            }
        })
        .collect();
    let b = DVector::from_column_slice(&problem.objective);
    let n_total: usize = blocks.iter().map(|bl| bl.c.nrows()).sum();
    let b_norm = b.norm();
    let c_norm = blocks.iter().map(|bl| bl.c.norm_squared()).sum::<f64>().sqrt();

    let sqrt_n = (n_total as f64).sqrt();
    let mut xi: f64 = 10.0f64.max(sqrt_n);
    let mut zeta: f64 = 10.0f64.max(sqrt_n).max(c_norm);
    for k in 0..m {
        let a_norm = blocks
            .iter()
            .map(|bl| bl.a[k].frobenius().powi(2))
            .sum::<f64>()
            .sqrt();
        xi = xi.max(sqrt_n * (1.0 + b[k].abs()) / (1.0 + a_norm));
        zeta = zeta.max(a_norm);
    }
    let mut it = Iterate {
        x: blocks.iter().map(|bl| linalg::identity(bl.c.nrows()).scale(xi)).collect(),
        s: blocks.iter().map(|bl| linalg::identity(bl.c.nrows()).scale(zeta)).collect(),
        y: DVector::zeros(m),
    };

    let residuals = |it: &Iterate| -> Residuals {
        let mut ax = DVector::zeros(m);
        let mut pobj = 0.0;
        let mut rd = Vec::with_capacity(blocks.len());
        let mut rd_sq = 0.0;
        for (k, bl) in blocks.iter().enumerate() {
            pobj += linalg::re_trace_product(&bl.c, &it.x[k]);
            let mut r = &bl.c - &it.s[k];
            for &i in &bl.active {
                ax[i] += bl.a[i].inner(&it.x[k]);
                bl.a[i].add_scaled_to(-it.y[i], &mut r);
            }
            rd_sq += r.norm_squared();
            rd.push(r);
        }
        let rp = &b - ax;
        let dobj = b.dot(&it.y);
        let pinf = rp.norm() / b_norm.max(1.0);
        let dinf = rd_sq.sqrt() / c_norm.max(1.0);
        let relgap = (pobj - dobj).abs() / dobj.abs().max(1.0);
        Residuals {
            rp,
            rd,
            pobj,
            dobj,
            pinf,
            dinf,
            relgap,
        }
    };

    let mut best: Option<(f64, Iterate, usize)> = None;
    let mut status = SdpStatus::MaxIterations;
    let mut iterations = 0;
    let mut stalls = 0;

    for iter in 0..opts.max_iter {
        iterations = iter;
        let res = residuals(&it);
        let score = res.relgap.max(res.pinf).max(res.dinf);
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, clone_iterate(&it), iter));
        }
        if res.relgap <= opts.gap_tol && res.pinf <= opts.feas_tol && res.dinf <= opts.feas_tol {
            status = SdpStatus::Optimal;
            break;
        }
        // Infeasibility certificates.
        let x_norm: f64 = it.x.iter().map(|x| x.norm()).sum();
        let ax_norm = (&b - &res.rp).norm();
        // A diverging X with a bounded y is taken as infeasibility even
        // when the ray has not converged to a clean certificate.
        let diverged_x = x_norm > DIVERGENCE * (1.0 + it.y.norm());
        if res.pobj < 0.0 && ((ax_norm <= 1e-8 * res.pobj.abs() && x_norm > 1e6) || diverged_x) {
            status = SdpStatus::Infeasible;
            break;
        }
        if res.dobj > 0.0 {
            let mut ray_sq = 0.0;
            for (k, bl) in blocks.iter().enumerate() {
                let mut r = it.s[k].clone();
                for &i in &bl.active {
                    bl.a[i].add_scaled_to(it.y[i], &mut r);
                }
                ray_sq += r.norm_squared();
            }
            let y_norm = it.y.norm();
            let diverged_y = y_norm > DIVERGENCE * (1.0 + x_norm);
            if (ray_sq.sqrt() <= 1e-8 * res.dobj && y_norm > 1e6) || diverged_y {
                status = SdpStatus::Unbounded;
                break;
            }
        }

        let Some(step) = newton_step(&blocks, &it, &res, n_total) else {
            status = SdpStatus::Stalled;
            break;
        };
        let (alpha_p, alpha_d) = step.lengths;
        for k in 0..blocks.len() {
            it.x[k] += step.dx[k].scale(alpha_p);
            it.s[k] += step.ds[k].scale(alpha_d);
            it.x[k] = linalg::hermitian_part(&it.x[k]);
            it.s[k] = linalg::hermitian_part(&it.s[k]);
        }
        it.y += step.dy.scale(alpha_d);
        if alpha_p.min(alpha_d) < 1e-9 {
            stalls += 1;
            if stalls >= 3 {
                status = SdpStatus::Stalled;
                break;
            }
        } else {
            stalls = 0;
        }
        iterations = iter + 1;
    }

    if status != SdpStatus::Optimal && status != SdpStatus::Infeasible && status != SdpStatus::Unbounded {
        if let Some((_, b_it, _)) = best.take() {
            let cur = residuals(&it);
            let cur_score = cur.relgap.max(cur.pinf).max(cur.dinf);
            let b_res = residuals(&b_it);
            if b_res.relgap.max(b_res.pinf).max(b_res.dinf) < cur_score {
                it = b_it;
            }
        }
    }

    let res = residuals(&it);
    let y: Vec<f64> = it.y.iter().cloned().collect();
    let min_block_eigenvalue = problem
        .blocks
        .iter()
        .map(|bl| {
            linalg::herm_eigenvalues(&bl.evaluate(&y))
                .map(|v| v[0])
                .unwrap_or(f64::NEG_INFINITY)
        })
        .fold(f64::INFINITY, f64::min);
    Ok(SdpSolution {
        primal_objective: res.dobj,
        dual_objective: res.pobj,
        gap: res.pobj - res.dobj,
        y,
        status,
        iterations,
        dual: it.x,
        primal_infeasibility: res.dinf,
        dual_infeasibility: res.pinf,
        min_block_eigenvalue,
    })
}

fn clone_iterate(it: &Iterate) -> Iterate {
    Iterate {
        x: it.x.clone(),
        s: it.s.clone(),
        y: it.y.clone(),
    }
}

struct Direction {
    dx: Vec<ComplexMatrix>,
    ds: Vec<ComplexMatrix>,
    /// `G⁻¹ΔXG⁻ᴴ` and `GᴴΔSG`.
    dxt: Vec<ComplexMatrix>,
    dst: Vec<ComplexMatrix>,
    dy: DVector<f64>,
}

struct Step {
    dx: Vec<ComplexMatrix>,
    ds: Vec<ComplexMatrix>,
    dy: DVector<f64>,
    lengths: (f64, f64),
}

/// Largest `α` keeping `D + αΔZ̃ ⪰ 0` (infinite when `ΔZ̃ ⪰ 0`).
fn max_step_scaled(d: &[f64], dz: &ComplexMatrix) -> Option<f64> {
    let n = d.len();
    let t = ComplexMatrix::from_fn(n, n, |i, j| dz[(i, j)] / (d[i] * d[j]).sqrt());
    let lam_min = linalg::herm_eigenvalues(&t).ok()?[0];
    Some(if lam_min < 0.0 { -1.0 / lam_min } else { f64::INFINITY })
}

/// Nesterov–Todd scaling of one block: `G` with `G⁻¹XG⁻ᴴ = GᴴSG = D`.
struct NtScaling {
    g: ComplexMatrix,
    d: Vec<f64>,
    /// `W = GGᴴ`.
    w: ComplexMatrix,
}

fn nt_scaling(x: &ComplexMatrix, s: &ComplexMatrix) -> Option<NtScaling> {
    let lx = nalgebra::Cholesky::new(x.clone())?.l();
    let ls = nalgebra::Cholesky::new(s.clone())?.l();
    let svd = (ls.adjoint() * &lx).svd(true, true);
    let v_t = svd.v_t?;
    let d: Vec<f64> = svd.singular_values.iter().cloned().collect();
    if d.iter().any(|&di| !(di > 0.0) || !di.is_finite()) {
        return None;
    }
    // From Lₛᴴ Lₓ = U D Vᴴ.
    let d_isqrt = linalg::real_diag(&d.iter().map(|di| di.sqrt().recip()).collect::<Vec<_>>());
    let g = &lx * v_t.adjoint() * &d_isqrt;
    let w = linalg::hermitian_part(&(&g * g.adjoint()));
    Some(NtScaling { g, d, w })
}

fn newton_step(blocks: &[StdBlock], it: &Iterate, res: &Residuals, n_total: usize) -> Option<Step> {
    let m = it.y.len();
    let nb = blocks.len();
    let nt: Vec<NtScaling> = (0..nb).map(|k| nt_scaling(&it.x[k], &it.s[k])).collect::<Option<_>>()?;
    let mu: f64 = (0..nb)
        .map(|k| linalg::re_trace_product(&it.x[k], &it.s[k]))
        .sum::<f64>()
        / n_total as f64;

    // Schur complement M_kl = Σ_blocks Re Tr(A_k W A_l W).
    let mut schur = DMatrix::<f64>::zeros(m, m);
    for (k, bl) in blocks.iter().enumerate() {
        let w = &nt[k].w;
        for &l in &bl.active {
            let g = bl.a[l].sandwich(w, w);
            for &kk in &bl.active {
                if kk > l {
                    continue;
                }
                let v = bl.a[kk].inner(&g);
                schur[(kk, l)] += v;
                if kk != l {
                    schur[(l, kk)] += v;
                }
            }
        }
    }
    let diag_max = (0..m).map(|i| schur[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let chol = match nalgebra::Cholesky::new(schur.clone()) {
        Some(c) => c,
        None => {
            let mut reg = schur.clone();
            for i in 0..m {
                reg[(i, i)] += 1e-14 * diag_max;
            }
            nalgebra::Cholesky::new(reg)?
        }
    };
    // The Schur complement is ill-conditioned near the optimum; refine.
    let schur_solve = |rhs: &DVector<f64>| -> DVector<f64> {
        let mut dy = chol.solve(rhs);
        for _ in 0..REFINE_STEPS {
            let r = rhs - &schur * &dy;
            dy += chol.solve(&r);
        }
        dy
    };

    // Solves ΔX + WΔSW = R together with the linear constraints. `R` is
    // given in the scaled space as R̃ = G⁻¹RG⁻ᴴ; forming ΔX there avoids
    // the cancellation in H − WΔSW when W is badly conditioned.
    let direction = |rt: &[ComplexMatrix]| -> Direction {
        let ht: Vec<ComplexMatrix> = (0..nb)
            .map(|k| &rt[k] - nt[k].g.adjoint() * &res.rd[k] * &nt[k].g)
            .collect();
        let mut rhs = res.rp.clone();
        for (k, bl) in blocks.iter().enumerate() {
            let h = &nt[k].g * &ht[k] * nt[k].g.adjoint();
            for &i in &bl.active {
                rhs[i] -= bl.a[i].inner(&h);
            }
        }
        let dy = schur_solve(&rhs);
        let mut out = Direction {
            dx: Vec::with_capacity(nb),
            ds: Vec::with_capacity(nb),
            dxt: Vec::with_capacity(nb),
            dst: Vec::with_capacity(nb),
            dy: dy.clone(),
        };
        for (k, bl) in blocks.iter().enumerate() {
            let mut d = res.rd[k].clone();
            for &i in &bl.active {
                bl.a[i].add_scaled_to(-dy[i], &mut d);
            }
            let g = &nt[k].g;
            let dst = linalg::hermitian_part(&(g.adjoint() * &d * g));
            let dxt = linalg::hermitian_part(&(&ht[k] - &dst));
            out.dx.push(linalg::hermitian_part(&(g * &dxt * g.adjoint())));
            out.ds.push(d);
            out.dxt.push(dxt);
            out.dst.push(dst);
        }
        // Refine on the full system: moving y by δy shifts ΔS by −A*(δy)
        // and ΔX by WA*(δy)W, which changes A(ΔX) by Mδy.
        for _ in 0..REFINE_STEPS {
            let mut r = res.rp.clone();
            for (k, bl) in blocks.iter().enumerate() {
                for &i in &bl.active {
                    r[i] -= bl.a[i].inner(&out.dx[k]);
                }
            }
            let delta = schur_solve(&r);
            for (k, bl) in blocks.iter().enumerate() {
                let n = bl.c.nrows();
                let mut e = ComplexMatrix::zeros(n, n);
                for &i in &bl.active {
                    bl.a[i].add_scaled_to(delta[i], &mut e);
                }
                let g = &nt[k].g;
                let et = linalg::hermitian_part(&(g.adjoint() * &e * g));
                out.ds[k] -= &e;
                out.dst[k] -= &et;
                out.dxt[k] += &et;
                out.dx[k] = linalg::hermitian_part(&(g * &out.dxt[k] * g.adjoint()));
            }
            out.dy += delta;
        }
        out
    };

    // X + αΔX = G(D + αΔX̃)Gᴴ and S + αΔS = G⁻ᴴ(D + αΔS̃)G⁻¹.
    let step_lengths = |dir: &Direction| -> Option<(f64, f64)> {
        let mut ap = f64::INFINITY;
        let mut ad = f64::INFINITY;
        for k in 0..nb {
            ap = ap.min(max_step_scaled(&nt[k].d, &dir.dxt[k])?);
            ad = ad.min(max_step_scaled(&nt[k].d, &dir.dst[k])?);
        }
        Some((ap, ad))
    };

    // Predictor: R = −X, so R̃ = −D.
    let rt_aff: Vec<ComplexMatrix> = nt.iter().map(|n| -linalg::real_diag(&n.d)).collect();
    let aff = direction(&rt_aff);
    let (ap_max, ad_max) = step_lengths(&aff)?;
    let ap = ap_max.min(1.0);
    let ad = ad_max.min(1.0);
    let mu_aff: f64 = (0..nb)
        .map(|k| {
            let xa = &it.x[k] + aff.dx[k].scale(ap);
            let sa = &it.s[k] + aff.ds[k].scale(ad);
            linalg::re_trace_product(&xa, &sa)
        })
        .sum::<f64>()
        / n_total as f64;
    let ratio = (mu_aff / mu).clamp(0.0, 1.0);
    let sigma = ratio.powi(3).max(0.0);

    // Corrector, linearised in the scaled space where X and S are both D:
    // ΔX̃ + ΔS̃ = L_D⁻¹(σμI − D² − sym(ΔX̃ₐΔS̃ₐ)) with L_D(Y) = (DY + YD)/2.
    let rt: Vec<ComplexMatrix> = (0..nb)
        .map(|k| {
            let d = &nt[k].d;
            let second = linalg::hermitian_part(&(&aff.dxt[k] * &aff.dst[k]));
            let n = d.len();
            ComplexMatrix::from_fn(n, n, |i, j| {
                let mut v = -second[(i, j)];
                if i == j {
                    v += sigma * mu - d[i] * d[i];
                }
                v * (2.0 / (d[i] + d[j]))
            })
        })
        .collect();
    let dir = direction(&rt);
    if dir.dx.iter().chain(dir.ds.iter()).any(|d| d.iter().any(|v| !v.re.is_finite() || !v.im.is_finite())) {
        return None;
    }
    let (ap_max, ad_max) = step_lengths(&dir)?;
    let gamma = 0.9 + 0.09 * ap.min(ad);
    let alpha_p = (gamma * ap_max).min(1.0);
    let alpha_d = (gamma * ad_max).min(1.0);
    Some(Step {
        dx: dir.dx,
        ds: dir.ds,
        dy: dir.dy,
        lengths: (alpha_p, alpha_d),
    })
}

/// Hermitian basis element with a single real degree of freedom: the
/// diagonal entry `(i,i)`, or the real/imaginary part of entry `(i,j)`.
pub fn hermitian_unit(n: usize, i: usize, j: usize, imaginary: bool) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n, n);
    if i == j {
        m[(i, i)] = c64(1.0, 0.0);
    } else if imaginary {
        m[(i, j)] = c64(0.0, 1.0);
        m[(j, i)] = c64(0.0, -1.0);
    } else {
        m[(i, j)] = c64(1.0, 0.0);
        m[(j, i)] = c64(1.0, 0.0);
    }
    m
}
