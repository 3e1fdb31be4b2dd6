//! Extraction of the maximal QFIM `J^max` of a channel family.
//!
//! Up to second order `8(1 − f_min(x, x+dx)) = Σ J^max_ij dxᵢ dxⱼ`, so the
//! entries follow from minimum fidelities on a symmetric stencil around `x`:
//!
//! ```text
//! J_ii ≈ [g(+hᵢeᵢ) + g(−hᵢeᵢ)] / (2hᵢ²)
//! J_ij ≈ [g(+(hᵢeᵢ+hⱼeⱼ)) + g(−(hᵢeᵢ+hⱼeⱼ)) − g(+(hᵢeᵢ−hⱼeⱼ)) − g(−(hᵢeᵢ−hⱼeⱼ))] / (8hᵢhⱼ)
//! ```
//!
//! with `g(dx) = 8(1 − f_min)` and `hᵢ = h·max(1, |xᵢ|)`. Averaging `±dx`
//! cancels the odd orders, so Richardson extrapolation over `h` and `h/2`
//! removes the `O(h²)` term.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chandist::{self, angle_half_spread};
use crate::channels::{DensityMatrix, KrausChannel, ParamChannel};
use crate::error::{Error, Result};
use crate::linalg::{self, RealMatrix};
use crate::qfim::{qfim_of_probe, CovarianceMatrix, QfiMatrix, DEFAULT_PROBE_STEP};
use crate::sampling;

/// Default relative extraction step.
pub const DEFAULT_STEP: f64 = 1e-2;

/// Allowed deviation of `g(h)/g(h/2)` from 4.
pub const STEP_RATIO_TOL: f64 = 0.25;

/// Directions with `g(h)` below this are too flat for the step-ratio guard.
const G_FLOOR: f64 = 1e-11;

/// Eigenvalues in `[−CLAMP_FLOOR·‖J‖, 0)` are clamped to zero.
pub const CLAMP_FLOOR: f64 = 1e-8;

/// Maximum trace distance between directional probes for a confirmed optimum.
pub const EXISTENCE_TOL: f64 = 1e-4;

/// Halvings of `h` tried when a unitary spread is not below π/2.
const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, Serialize)]
pub struct Displacement {
    pub dx: Vec<f64>,
    pub h: f64,
}

impl Displacement {
    pub fn new(dx: Vec<f64>, h: f64) -> Result<Self> {
        let norm = dx.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidInput("displacement must be nonzero".into()));
        }
        if !(h > 0.0 && h <= 0.5) {
            return Err(Error::InvalidInput(format!("step h = {h} outside (0, 0.5]")));
        }
        Ok(Displacement { dx, h })
    }

    pub fn norm(&self) -> f64 {
        self.dx.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Existence {
    Confirmed,
    Inconclusive,
    RefutedByDominance,
}

#[derive(Debug, Clone)]
pub struct DirectionRecord {
    pub label: String,
    pub dx: Vec<f64>,
    pub f_min: f64,
    /// `g(dx)`: `8(1 − f_min)`, or `4C²` on the unitary path.
    pub g: f64,
    /// Certified gap of the fidelity SDP (zero on the unitary path).
    pub gap: f64,
    /// Optimal reduced probe; absent on the unitary path.
    pub probe_opt: Option<DensityMatrix>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DominanceSummary {
    pub samples: usize,
    pub worst_min_eigenvalue: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct MaxQfimReport {
    pub jmax: QfiMatrix,
    pub per_direction: Vec<DirectionRecord>,
    pub existence: Option<Existence>,
    pub dominance: Option<DominanceSummary>,
    /// Relative step actually used.
    pub h: f64,
    pub richardson: bool,
    /// `g(h)/g(h/2)` per stencil direction (Richardson only).
    pub step_ratios: Vec<(String, f64)>,
}

/// `hᵢ = h·max(1, |xᵢ|)`.
pub fn step_sizes(x: &[f64], h: f64) -> Vec<f64> {
    x.iter().map(|v| h * v.abs().max(1.0)).collect()
}

/// One stencil direction: a label and the unscaled coefficient pattern.
struct StencilDir {
    label: String,
    i: usize,
    j: Option<(usize, f64)>,
}

fn stencil(names: &[String]) -> Vec<StencilDir> {
    let m = names.len();
    let mut out = Vec::new();
    for i in 0..m {
        out.push(StencilDir {
            label: names[i].clone(),
            i,
            j: None,
        });
    }
    for i in 0..m {
        for j in (i + 1)..m {
            out.push(StencilDir {
                label: format!("{}+{}", names[i], names[j]),
                i,
                j: Some((j, 1.0)),
            });
            out.push(StencilDir {
                label: format!("{}-{}", names[i], names[j]),
                i,
                j: Some((j, -1.0)),
            });
        }
    }
    out
}

impl StencilDir {
    fn dx(&self, steps: &[f64], sign: f64) -> Vec<f64> {
        let mut dx = vec![0.0; steps.len()];
        dx[self.i] = sign * steps[self.i];
        if let Some((j, s)) = self.j {
            dx[j] = sign * s * steps[j];
        }
        dx
    }
}

fn scales(h: f64, richardson: bool) -> Vec<f64> {
    if richardson {
        vec![h, h / 2.0]
    } else {
        vec![h]
    }
}

/// Displacements of the extraction stencil in evaluation order.
pub fn extraction_displacements(x: &[f64], h: f64, richardson: bool) -> Vec<Vec<f64>> {
    let names: Vec<String> = (0..x.len()).map(|i| i.to_string()).collect();
    let dirs = stencil(&names);
    let mut out = Vec::new();
    for s in scales(h, richardson) {
        let steps = step_sizes(x, s);
        for d in &dirs {
            out.push(d.dx(&steps, 1.0));
            out.push(d.dx(&steps, -1.0));
        }
    }
    out
}

fn displaced(x: &[f64], dx: &[f64]) -> Vec<f64> {
    x.iter().zip(dx).map(|(a, b)| a + b).collect()
}

/// Every parameter point the extraction evaluates, `x` first.
pub fn extraction_points(x: &[f64], h: f64, richardson: bool) -> Vec<Vec<f64>> {
    std::iter::once(x.to_vec())
        .chain(extraction_displacements(x, h, richardson).iter().map(|dx| displaced(x, dx)))
        .collect()
}

/// Errors with every stencil point a tabulated family lacks.
fn check_points(pch: &dyn ParamChannel, x: &[f64], h: f64, richardson: bool) -> Result<()> {
    let missing: Vec<Vec<f64>> = extraction_points(x, h, richardson)
        .into_iter()
        .filter(|p| matches!(pch.evaluate(p), Err(Error::MissingPoints(_))))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingPoints(missing))
    }
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h <= 0.5) {
        return Err(Error::InvalidInput(format!("step h = {h} outside (0, 0.5]")));
    }
    Ok(())
}

/// Evaluates `g` on the stencil and assembles `J`.
fn assemble(
    pch: &dyn ParamChannel,
    x: &[f64],
    h: f64,
    richardson: bool,
    records: Vec<DirectionRecord>,
) -> Result<MaxQfimReport> {
    let names = pch.param_names();
    let m = names.len();
    let dirs = stencil(&names);
    let per_scale = 2 * dirs.len();
    let mut estimates = Vec::new();
    for (k, s) in scales(h, richardson).into_iter().enumerate() {
        let steps = step_sizes(x, s);
        let g = |d: usize, sign: usize| records[k * per_scale + 2 * d + sign].g;
        let mut est = RealMatrix::zeros(m, m);
        let mut d = 0;
        for i in 0..m {
            est[(i, i)] = (g(d, 0) + g(d, 1)) / (2.0 * steps[i] * steps[i]);
            d += 1;
        }
        for i in 0..m {
            for j in (i + 1)..m {
                let v = (g(d, 0) + g(d, 1) - g(d + 1, 0) - g(d + 1, 1)) / (8.0 * steps[i] * steps[j]);
                est[(i, j)] = v;
                est[(j, i)] = v;
                d += 2;
            }
        }
        estimates.push(est);
    }

    let mut step_ratios = Vec::new();
    let j = if richardson {
        for (d, dir) in dirs.iter().enumerate() {
            let full = records[2 * d].g + records[2 * d + 1].g;
            let half = records[per_scale + 2 * d].g + records[per_scale + 2 * d + 1].g;
            if full.abs() <= G_FLOOR {
                continue;
            }
            let ratio = full / half;
            step_ratios.push((dir.label.clone(), ratio));
            if !ratio.is_finite() || (ratio / 4.0 - 1.0).abs() > STEP_RATIO_TOL {
                return Err(Error::StepTooLarge {
                    ratio,
                    direction: dir.label.clone(),
                });
            }
        }
        (&estimates[1] * 4.0 - &estimates[0]) / 3.0
    } else {
        estimates.remove(0)
    };
    let jmax = QfiMatrix::new(names, project_psd(j)?)?;
    Ok(MaxQfimReport {
        jmax,
        per_direction: records,
        existence: None,
        dominance: None,
        h,
        richardson,
        step_ratios,
    })
}

/// Symmetrizes and clamps eigenvalues in `[−CLAMP_FLOOR·‖J‖, 0)` to zero.
fn project_psd(j: RealMatrix) -> Result<RealMatrix> {
    let sym = (&j + j.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let norm = eig.eigenvalues.amax();
    let floor = -CLAMP_FLOOR * norm;
    let min = eig.eigenvalues.min();
    if min < floor {
        return Err(Error::NegativeEigenvalue(min));
    }
    if min >= 0.0 {
        return Ok(sym);
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    Ok(&eig.eigenvectors * RealMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose())
}

fn labelled_records(names: &[String], x: &[f64], h: f64, richardson: bool) -> Vec<(String, Vec<f64>)> {
    let dirs = stencil(names);
    let mut out = Vec::new();
    for s in scales(h, richardson) {
        let steps = step_sizes(x, s);
        for d in &dirs {
            out.push((format!("+{}@{s}", d.label), d.dx(&steps, 1.0)));
            out.push((format!("-{}@{s}", d.label), d.dx(&steps, -1.0)));
        }
    }
    out
}

/// `J^max` from SDP minimum fidelities on the extraction stencil.
pub fn extract_maxqfim(pch: &dyn ParamChannel, x: &[f64], h: f64, richardson: bool) -> Result<MaxQfimReport> {
    pch.check_point(x)?;
    check_step(h)?;
    check_points(pch, x, h, richardson)?;
    let base = pch.evaluate(x)?;
    let names = pch.param_names();
    let records = labelled_records(&names, x, h, richardson)
        .into_par_iter()
        .map(|(label, dx)| -> Result<DirectionRecord> {
            let other = pch.evaluate(&displaced(x, &dx))?;
            let res = chandist::min_fidelity_dual(&base, &other)?;
            Ok(DirectionRecord {
                label,
                dx,
                f_min: res.f_min,
                g: 8.0 * (1.0 - res.f_min),
                gap: res.gap,
                probe_opt: Some(res.probe_opt),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(pch, x, h, richardson, records)
}

fn single_unitary(ch: &KrausChannel) -> Result<&linalg::ComplexMatrix> {
    if ch.rank() != 1 || ch.dim_in() != ch.dim_out() {
        return Err(Error::NotUnitaryFamily);
    }
    Ok(&ch.kraus()[0])
}

/// `J^max` of a unitary family from `g(dx) = 4C²(U_x† U_{x+dx})`.
///
/// The step is halved (up to 20 times) until every eigen-angle spread on
/// the stencil is below π/2.
pub fn extract_maxqfim_unitary(pch: &dyn ParamChannel, x: &[f64], h: f64, richardson: bool) -> Result<MaxQfimReport> {
    pch.check_point(x)?;
    check_step(h)?;
    if pch.kraus_rank() != 1 {
        return Err(Error::NotUnitaryFamily);
    }
    let base = pch.evaluate(x)?;
    let u0 = single_unitary(&base)?.clone();
    let names = pch.param_names();
    let mut step = h;
    for _ in 0..=MAX_HALVINGS {
        check_points(pch, x, step, richardson)?;
        let evaluated = labelled_records(&names, x, step, richardson)
            .into_iter()
            .map(|(label, dx)| -> Result<(String, Vec<f64>, f64)> {
                let other = pch.evaluate(&displaced(x, &dx))?;
                let u = single_unitary(&other)?;
                let rel = u0.adjoint() * u;
                let spread = chandist::eigen_angles(&rel)?.spread;
                Ok((label, dx, spread))
            })
            .collect::<Result<Vec<_>>>()?;
        if evaluated.iter().any(|(_, _, s)| *s >= std::f64::consts::FRAC_PI_2) {
            step /= 2.0;
            continue;
        }
        let records = evaluated
            .into_iter()
            .map(|(label, dx, spread)| {
                let c = spread / 2.0;
                DirectionRecord {
                    label,
                    dx,
                    f_min: c.cos(),
                    g: 4.0 * c * c,
                    gap: 0.0,
                    probe_opt: None,
                }
            })
            .collect();
        return assemble(pch, x, step, richardson, records);
    }
    Err(Error::BranchAmbiguity(step))
}

/// Uses the eigen-angle path for single-Kraus unitary families and the
/// SDP path otherwise.
pub fn extract_auto(pch: &dyn ParamChannel, x: &[f64], h: f64, richardson: bool) -> Result<MaxQfimReport> {
    if pch.kraus_rank() == 1 && pch.dim_in() == pch.dim_out() {
        extract_maxqfim_unitary(pch, x, h, richardson)
    } else {
        extract_maxqfim(pch, x, h, richardson)
    }
}

/// `4C²(U_x† U_{x+dx})`, or `8(1 − f_min)` for general channels.
pub fn directional_g(pch: &dyn ParamChannel, x: &[f64], dx: &[f64]) -> Result<f64> {
    let a = pch.evaluate(x)?;
    let b = pch.evaluate(&displaced(x, dx))?;
    if a.rank() == 1 && a.dim_in() == a.dim_out() {
        let rel = single_unitary(&a)?.adjoint() * single_unitary(&b)?;
        let c = angle_half_spread(&rel)?;
        Ok(4.0 * c * c)
    } else {
        Ok(8.0 * (1.0 - chandist::min_fidelity_dual(&a, &b)?.f_min))
    }
}

/// Richardson-extrapolated `g(h·v)/h²` along a unit direction `v`.
pub fn directional_curvature(pch: &dyn ParamChannel, x: &[f64], v: &[f64], h: f64) -> Result<f64> {
    let at = |s: f64| -> Result<f64> {
        let plus: Vec<f64> = v.iter().map(|c| c * s).collect();
        let minus: Vec<f64> = v.iter().map(|c| -c * s).collect();
        Ok((directional_g(pch, x, &plus)? + directional_g(pch, x, &minus)?) / (2.0 * s * s))
    };
    Ok((4.0 * at(h / 2.0)? - at(h)?) / 3.0)
}

/// Axis directions, pairwise diagonals and `extra` random unit directions,
/// all scaled by `h`.
pub fn default_directions(m: usize, h: f64, extra: usize, seed: u64) -> Result<Vec<Displacement>> {
    let mut out = Vec::new();
    for i in 0..m {
        let mut dx = vec![0.0; m];
        dx[i] = h;
        out.push(Displacement::new(dx, h)?);
    }
    let r = std::f64::consts::FRAC_1_SQRT_2 * h;
    for i in 0..m {
        for j in (i + 1)..m {
            let mut dx = vec![0.0; m];
            dx[i] = r;
            dx[j] = r;
            out.push(Displacement::new(dx, h)?);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra {
        let v: Vec<f64> = (0..m).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let n = v.iter().map(|a: &f64| a * a).sum::<f64>().sqrt();
        out.push(Displacement::new(v.iter().map(|a| a / n * h).collect(), h)?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ExistenceReport {
    pub verdict: Existence,
    pub max_trace_distance: f64,
    pub probes: Vec<DensityMatrix>,
    /// Mean of the directional probes, the candidate optimal reduced state.
    pub candidate: DensityMatrix,
}

/// Compares the optimal reduced probes across directions.
pub fn existence_diagnostics(
    pch: &dyn ParamChannel,
    x: &[f64],
    directions: &[Displacement],
) -> Result<ExistenceReport> {
    pch.check_point(x)?;
    let m = pch.num_params();
    if directions.len() < m * (m + 1) / 2 + 3 {
        return Err(Error::InvalidInput(format!(
            "existence diagnostics need at least {} directions, got {}",
            m * (m + 1) / 2 + 3,
            directions.len()
        )));
    }
    let base = pch.evaluate(x)?;
    let probes = directions
        .par_iter()
        .map(|d| -> Result<DensityMatrix> {
            let other = pch.evaluate(&displaced(x, &d.dx))?;
            Ok(chandist::min_fidelity_dual(&base, &other)?.probe_opt)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    for a in 0..probes.len() {
        for b in (a + 1)..probes.len() {
            worst = worst.max(probes[a].trace_distance(&probes[b]));
        }
    }
    let n = probes.len() as f64;
    let mean = probes
        .iter()
        .fold(linalg::ComplexMatrix::zeros(base.dim_in(), base.dim_in()), |acc, p| acc + p.matrix())
        .unscale(n);
    Ok(ExistenceReport {
        verdict: if worst <= EXISTENCE_TOL {
            Existence::Confirmed
        } else {
            Existence::Inconclusive
        },
        max_trace_distance: worst,
        probes,
        candidate: DensityMatrix::new(mean)?,
    })
}

/// Checks `J^max ⪰ J(probe)` for Haar-random purified probes.
pub fn verify_dominance(
    jmax: &QfiMatrix,
    pch: &dyn ParamChannel,
    x: &[f64],
    samples: usize,
    h: f64,
    seed: u64,
) -> Result<DominanceSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = pch.dim_in();
    let probes: Vec<DensityMatrix> = (0..samples).map(|_| sampling::haar_probe(d, d, &mut rng)).collect();
    let mins = probes
        .par_iter()
        .map(|p| -> Result<f64> {
            let j = qfim_of_probe(pch, x, p, h)?;
            let j = j.reordered(jmax.labels())?;
            Ok(linalg::sym_min_eigenvalue(&(jmax.matrix() - j.matrix())))
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = mins.into_iter().fold(f64::INFINITY, f64::min);
    let threshold = -1e-6 * jmax.op_norm().max(1.0);
    Ok(DominanceSummary {
        samples,
        worst_min_eigenvalue: worst,
        threshold,
        pass: samples == 0 || worst >= threshold,
    })
}

/// Runs extraction, existence diagnostics and (optionally) dominance.
pub fn analyze(
    pch: &dyn ParamChannel,
    x: &[f64],
    h: f64,
    richardson: bool,
    dominance_samples: Option<usize>,
    seed: u64,
) -> Result<(MaxQfimReport, Option<ExistenceReport>)> {
    let mut report = extract_auto(pch, x, h, richardson)?;
    let existence = match default_directions(pch.num_params(), h, 3, seed)
        .and_then(|dirs| existence_diagnostics(pch, x, &dirs))
    {
        Ok(e) => Some(e),
        Err(Error::MissingPoints(_)) => None,
        Err(e) => return Err(e),
    };
    report.existence = existence.as_ref().map(|e| e.verdict);
    if let Some(samples) = dominance_samples {
        let dom = verify_dominance(&report.jmax, pch, x, samples, DEFAULT_PROBE_STEP, seed)?;
        if !dom.pass {
            report.existence = Some(Existence::RefutedByDominance);
        }
        report.dominance = Some(dom);
    }
    Ok((report, existence))
}

/// `diag(η², 1/(1−η²))` in the order `(omega, eta)`.
pub fn analytic_dephasing_jmax(eta: f64) -> Result<QfiMatrix> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::ParamOutOfRange(format!("eta = {eta} must lie in (0, 1)")));
    }
    QfiMatrix::new(
        vec!["omega".into(), "eta".into()],
        RealMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![eta * eta, 1.0 / (1.0 - eta * eta)])),
    )
}

/// Closed form for `exp(−i(x₁σ₁ + x₂σ₂)T)`.
pub fn analytic_two_param_jmax(x1: f64, x2: f64, time: f64) -> Result<QfiMatrix> {
    let r2 = x1 * x1 + x2 * x2;
    if r2 == 0.0 {
        return Err(Error::OriginSingularity);
    }
    let r = r2.sqrt();
    let s = (r * time).sin().powi(2) / r2;
    let t2 = time * time;
    let j11 = 4.0 * (x1 * x1 * t2 / r2 + x2 * x2 / r2 * s);
    let j22 = 4.0 * (x2 * x2 * t2 / r2 + x1 * x1 / r2 * s);
    let j12 = 4.0 * x1 * x2 / r2 * (t2 - s);
    QfiMatrix::new(
        vec!["x1".into(), "x2".into()],
        RealMatrix::from_row_slice(2, 2, &[j11, j12, j12, j22]),
    )
}

/// `Tr[J⁻¹ Cov⁻¹]/n` against the bound `dim − 1`.
pub fn gill_massar_check(jmax: &QfiMatrix, cov: &CovarianceMatrix, n: usize, dim: usize) -> Result<(f64, bool)> {
    jmax.check_labels(cov)?;
    if n == 0 || dim < 2 {
        return Err(Error::InvalidInput("need n ≥ 1 and dim ≥ 2".into()));
    }
    let jinv = jmax.inverse()?;
    let cinv = cov.inverse()?;
    let lhs = (jinv.matrix() * cinv.matrix()).trace() / n as f64;
    Ok((lhs, lhs <= (dim - 1) as f64 + 1e-9))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TradeoffBounds {
    /// Lower bound on `Var(x̂₁)·Var(x̂₂)`.
    pub var_product_bound: f64,
    /// Lower bound on `det Cov`.
    pub det_bound: f64,
    pub per_param_bounds: [f64; 2],
}

impl TradeoffBounds {
    /// Whether `cov` satisfies every bound (relative slack 1e-12).
    pub fn holds_for(&self, cov: &CovarianceMatrix) -> bool {
        let c = cov.matrix();
        let ok = |value: f64, bound: f64| value >= bound * (1.0 - 1e-12);
        ok(c[(0, 0)], self.per_param_bounds[0])
            && ok(c[(1, 1)], self.per_param_bounds[1])
            && ok(c[(0, 0)] * c[(1, 1)], self.var_product_bound)
            && ok(c.determinant(), self.det_bound)
    }
}

pub fn tradeoff_bounds(jmax: &QfiMatrix, n: usize) -> Result<TradeoffBounds> {
    if jmax.dim() != 2 {
        return Err(Error::DimMismatch {
            expected: 2,
            got: jmax.dim(),
        });
    }
    let j = jmax.matrix();
    let det = j[(0, 0)] * j[(1, 1)] - j[(0, 1)] * j[(1, 0)];
    if det <= 1e-12 * jmax.op_norm().powi(2) || n == 0 {
        return Err(Error::Singular);
    }
    let n = n as f64;
    Ok(TradeoffBounds {
        var_product_bound: 1.0 / (n * n * det),
        det_bound: 1.0 / (n * n * det),
        per_param_bounds: [j[(1, 1)] / (n * det), j[(0, 0)] / (n * det)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{DephasingPhase, FnChannel, TwoParamRotation};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn stencil_point_counts() {
        assert_eq!(extraction_points(&[0.3, 0.5], 1e-2, false).len(), 9);
        assert_eq!(extraction_points(&[0.3, 0.5], 1e-2, true).len(), 17);
        assert_eq!(extraction_points(&[0.3], 1e-2, false).len(), 3);
        assert_eq!(extraction_points(&[0.3], 1e-2, true).len(), 5);
        assert_eq!(extraction_points(&[0.1, 0.2, 0.3], 1e-2, false).len(), 1 + 6 + 12);
    }

    #[test]
    fn dephasing_extraction() {
        let r = extract_maxqfim(&DephasingPhase, &[0.3, 0.5], DEFAULT_STEP, true).unwrap();
        assert!(rel(r.jmax.get(0, 0), 0.25) < 1e-4, "{}", r.jmax);
        assert!(rel(r.jmax.get(1, 1), 4.0 / 3.0) < 1e-4, "{}", r.jmax);
        assert!(r.jmax.get(0, 1).abs() < 1e-5);
        assert_eq!(r.jmax.labels(), ["omega", "eta"]);
    }

    #[test]
    fn rotation_extraction_paths() {
        let rot = TwoParamRotation { time: 1.0 };
        let exact = analytic_two_param_jmax(0.7, 0.3, 1.0).unwrap();
        let sdp = extract_maxqfim(&rot, &[0.7, 0.3], DEFAULT_STEP, true).unwrap();
        let uni = extract_maxqfim_unitary(&rot, &[0.7, 0.3], DEFAULT_STEP, true).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(rel(sdp.jmax.get(i, j), exact.get(i, j)) < 1e-3);
                assert!((sdp.jmax.get(i, j) - uni.jmax.get(i, j)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn unitary_examples() {
        for t in [1.0, 2.0] {
            let fam = FnChannel::hamiltonian(vec!["x".into()], 2, t, |x| linalg::pauli_z().scale(x[0] / 2.0));
            let r = extract_maxqfim_unitary(&fam, &[0.4], DEFAULT_STEP, true).unwrap();
            assert!((r.jmax.get(0, 0) - t * t).abs() < 1e-8);
        }
        let (x1, t) = (0.6f64, 1.3f64);
        let r = extract_maxqfim_unitary(&TwoParamRotation { time: t }, &[x1, 0.0], 1e-3, true).unwrap();
        assert!(rel(r.jmax.get(0, 0), 4.0 * t * t) < 1e-9);
        assert!(rel(r.jmax.get(1, 1), 4.0 * (x1 * t).sin().powi(2) / (x1 * x1)) < 1e-9);
        let constant = FnChannel::hamiltonian(vec!["x".into()], 2, 1.0, |_| linalg::pauli_x());
        let r = extract_maxqfim_unitary(&constant, &[0.2], DEFAULT_STEP, true).unwrap();
        assert_eq!(r.jmax.get(0, 0), 0.0);
        assert!(matches!(
            extract_maxqfim_unitary(&DephasingPhase, &[0.3, 0.5], DEFAULT_STEP, true),
            Err(Error::NotUnitaryFamily)
        ));
    }

    #[test]
    fn constant_channel_has_zero_jmax() {
        let constant = FnChannel::new(vec!["a".into(), "b".into()], 2, 2, 2, |_| {
            Ok(crate::channels::dephasing_phase(0.2, 0.6)?.kraus().to_vec())
        });
        let r = extract_maxqfim(&constant, &[0.1, 0.2], DEFAULT_STEP, true).unwrap();
        assert!(r.jmax.op_norm() < 1e-6);
    }

    #[test]
    fn step_guard_fires_on_large_steps() {
        let fam = FnChannel::hamiltonian(vec!["x".into()], 2, 1.0, |x| linalg::pauli_z().scale(x[0].powi(3)));
        let err = extract_maxqfim(&fam, &[0.05], 0.2, true).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }), "{err}");
    }

    #[test]
    fn analytic_oracles() {
        let j = analytic_dephasing_jmax(0.5).unwrap();
        assert!((j.get(0, 0) - 0.25).abs() < 1e-15 && (j.get(1, 1) - 4.0 / 3.0).abs() < 1e-15);
        let j = analytic_dephasing_jmax(0.8).unwrap();
        assert!((j.get(0, 0) - 0.64).abs() < 1e-15 && (j.get(1, 1) - 1.0 / 0.36).abs() < 1e-12);
        assert!((analytic_dephasing_jmax(1.0 - 1e-9).unwrap().get(0, 0) - 1.0).abs() < 1e-8);
        assert!(analytic_dephasing_jmax(1.0).is_err() && analytic_dephasing_jmax(0.0).is_err());

        let (x1, t) = (0.9, 1.7);
        let j = analytic_two_param_jmax(x1, 0.0, t).unwrap();
        assert!((j.get(0, 0) - 4.0 * t * t).abs() < 1e-12);
        assert!((j.get(1, 1) - 4.0 * (x1 * t).sin().powi(2) / (x1 * x1)).abs() < 1e-12);
        // rT = π leaves only the radial direction
        let (x1, x2) = (0.6, 0.8);
        let j = analytic_two_param_jmax(x1, x2, std::f64::consts::PI).unwrap();
        let t2 = std::f64::consts::PI.powi(2);
        assert!((j.get(0, 1) - 4.0 * t2 * x1 * x2).abs() < 1e-12);
        assert!(j.min_eigenvalue().abs() < 1e-12);
        assert!(matches!(analytic_two_param_jmax(0.0, 0.0, 1.0), Err(Error::OriginSingularity)));
    }

    #[test]
    fn analytic_rotation_values() {
        // oracle values from the closed form with r² = 0.58
        let j = analytic_two_param_jmax(0.7, 0.3, 1.0).unwrap();
        assert!((j.get(0, 0) - 3.888905281323317).abs() < 1e-12);
        assert!((j.get(0, 1) - 0.2592210102455927).abs() < 1e-12);
        assert!((j.get(1, 1) - 3.3951509760936167).abs() < 1e-12);
        let b = tradeoff_bounds(&j, 1).unwrap();
        assert!((b.per_param_bounds[0] - 0.25845712664222625).abs() < 1e-12);
        assert!((b.per_param_bounds[1] - 0.2960443561632319).abs() < 1e-12);
    }

    #[test]
    fn gill_massar_examples() {
        let j = analytic_dephasing_jmax(0.5).unwrap();
        let crb = crate::qfim::crb(&j, 3).unwrap();
        let (lhs, ok) = gill_massar_check(&j, &crb, 3, 2).unwrap();
        assert!((lhs - 2.0).abs() < 1e-9 && !ok);
        let doubled = CovarianceMatrix(crb.scaled(2.0));
        let (lhs, ok) = gill_massar_check(&j, &doubled, 3, 2).unwrap();
        assert!((lhs - 1.0).abs() < 1e-9 && ok);
        let huge = CovarianceMatrix(crb.scaled(1e12));
        assert!(gill_massar_check(&j, &huge, 3, 2).unwrap().1);
    }

    #[test]
    fn tradeoff_examples() {
        let j = QfiMatrix::new(
            vec!["a".into(), "b".into()],
            RealMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 5.0])),
        )
        .unwrap();
        let b = tradeoff_bounds(&j, 1).unwrap();
        assert!((b.per_param_bounds[0] - 0.5).abs() < 1e-15 && (b.per_param_bounds[1] - 0.2).abs() < 1e-15);
        assert!((b.var_product_bound - 0.1).abs() < 1e-15);
        let crb = crate::qfim::crb(&j, 1).unwrap();
        assert!(b.holds_for(&crb));
        assert!(!b.holds_for(&CovarianceMatrix(crb.scaled(0.9))));
    }

    #[test]
    fn dominance_examples() {
        let x = [0.3, 0.5];
        let jmax = analytic_dephasing_jmax(0.5).unwrap();
        let ok = verify_dominance(&jmax, &DephasingPhase, &x, 20, DEFAULT_PROBE_STEP, 1).unwrap();
        assert!(ok.pass, "{ok:?}");
        // the |+⟩ probe saturates J^max, so half of it is violated
        let half = QfiMatrix(jmax.scaled(0.5));
        let plus = qfim_of_probe(&DephasingPhase, &x, &DensityMatrix::plus(), DEFAULT_PROBE_STEP).unwrap();
        assert!(linalg::sym_min_eigenvalue(&(half.matrix() - plus.matrix())) < -1e-3);
    }

    #[test]
    fn existence_examples() {
        let dirs = default_directions(2, DEFAULT_STEP, 3, 0).unwrap();
        let e = existence_diagnostics(&DephasingPhase, &[0.3, 0.5], &dirs).unwrap();
        assert_eq!(e.verdict, Existence::Confirmed, "{}", e.max_trace_distance);
        let e = existence_diagnostics(&TwoParamRotation { time: 1.0 }, &[0.7, 0.3], &dirs).unwrap();
        assert_eq!(e.verdict, Existence::Confirmed, "{}", e.max_trace_distance);
        assert!(existence_diagnostics(&DephasingPhase, &[0.3, 0.5], &dirs[..3]).is_err());
    }
}
