//! Standard-quantum-limit bounds for `N` channels used in parallel.
//!
//! For Kraus sets of `K₁, K₂` and any contraction `W`,
//!
//! ```text
//! 2 − 2 min F(K₁^{⊗N}⊗I(ρ), K₂^{⊗N}⊗I(ρ)) ≤ N‖2I − K_W − K_W†‖ + N(N−1)‖I − K_W‖²
//! ```
//!
//! If `‖I − K_W(x, x+dx)‖ ≤ dxᵀQdx` then every QFIM of the `N`-fold channel
//! obeys `J ⪯ 8NQ` and `Cov ⪰ Q⁻¹/(8nN)`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chandist::{kw_matrix, ContractionW};
use crate::channels::{DensityMatrix, KrausChannel, ParallelChannel, ParamChannel, DEFAULT_SIZE_CAP};
use crate::error::{Error, Result};
use crate::linalg::{self, c64, ComplexMatrix, RealMatrix};
use crate::maxqfim::Displacement;
use crate::qfim::{qfim_of_probe, qfim_of_pure_probe, CovarianceMatrix, LabeledMatrix, QfiMatrix, DEFAULT_PROBE_STEP};
use crate::sampling;

/// Largest `N` accepted by the brute-force cap verification.
pub const MAX_PARALLEL: usize = 4;

/// Relative slack of `J ⪯ 8NQ(1 + CAP_SLACK)`.
pub const CAP_SLACK: f64 = 1e-2;

/// Allowed second-order excess in [`q_bound_check`], relative to `v̂ᵀQv̂`.
pub const SECOND_ORDER_TOL: f64 = 1e-3;

/// Symmetric PSD matrix `Q` with `‖I − K_W‖ ≤ dxᵀQdx` to second order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct QuadraticBound(pub LabeledMatrix);

impl std::ops::Deref for QuadraticBound {
    type Target = LabeledMatrix;
    fn deref(&self) -> &LabeledMatrix {
        &self.0
    }
}

impl QuadraticBound {
    pub fn new(labels: Vec<String>, matrix: RealMatrix) -> Result<Self> {
        let m = LabeledMatrix::new(labels, matrix)?;
        let min = m.min_eigenvalue();
        if min < -1e-12 * m.op_norm().max(1.0) {
            return Err(Error::NotPsd(min));
        }
        Ok(QuadraticBound(m))
    }

    pub fn scaled(&self, s: f64) -> Self {
        QuadraticBound(self.0.scaled(s))
    }

    pub fn reordered<S: AsRef<str>>(&self, order: &[S]) -> Result<Self> {
        Ok(QuadraticBound(self.0.reordered(order)?))
    }
}

/// `N‖2I − K_W − K_W†‖ + N(N−1)‖I − K_W‖²`.
pub fn parallel_bound_rhs(ka: &KrausChannel, kb: &KrausChannel, w: &ContractionW, copies: usize) -> Result<f64> {
    if copies == 0 {
        return Err(Error::InvalidInput("N must be positive".into()));
    }
    let k = kw_matrix(ka, kb, w)?;
    let id = linalg::identity(k.nrows());
    let n = copies as f64;
    let sym = id.scale(2.0) - &k - k.adjoint();
    let diff = linalg::op_norm(&(&id - &k));
    Ok(n * linalg::op_norm(&sym) + n * (n - 1.0) * diff * diff)
}

/// `‖I − K_W‖`.
pub fn kw_deviation(ka: &KrausChannel, kb: &KrausChannel, w: &ContractionW) -> Result<f64> {
    let k = kw_matrix(ka, kb, w)?;
    Ok(linalg::op_norm(&(linalg::identity(k.nrows()) - k)))
}

/// `W = [[cos ξdω, i sin ξdω], [i sin ξdω, cos ξdω]]`, `ξ = 1/(2√(1−η²))`.
pub fn dephasing_w(eta: f64, domega: f64) -> Result<ContractionW> {
    if eta == 1.0 {
        return Err(Error::EtaOne);
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::ParamOutOfRange(format!("eta = {eta} must lie in [0, 1)")));
    }
    let xi = 0.5 / (1.0 - eta * eta).sqrt();
    let (s, c) = (xi * domega).sin_cos();
    ContractionW::new(ComplexMatrix::from_row_slice(
        2,
        2,
        &[c64(c, 0.0), c64(0.0, s), c64(0.0, s), c64(c, 0.0)],
    ))
}

fn dephasing_labels() -> Vec<String> {
    vec!["eta".into(), "omega".into()]
}

fn check_eta(eta: f64) -> Result<()> {
    if eta == 1.0 {
        return Err(Error::EtaOne);
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::ParamOutOfRange(format!("eta = {eta} must lie in (0, 1)")));
    }
    Ok(())
}

/// The published dephasing bound
/// `diag(√(η²+η), η√(η²+η))/(8(1−η²))` in the order `(eta, omega)`.
pub fn dephasing_q_published(eta: f64) -> Result<QuadraticBound> {
    check_eta(eta)?;
    let s = (eta * eta + eta).sqrt() / (8.0 * (1.0 - eta * eta));
    QuadraticBound::new(
        dephasing_labels(),
        RealMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![s, eta * s])),
    )
}

/// A dephasing bound valid for every `η`: `√2·diag(1, η²)/(8(1−η²))` in
/// the order `(eta, omega)`.
///
/// To second order `‖I − K_W‖ = √((a+b)² + 4ab)/(8(1−η²))` with `a = dη²`,
/// `b = η²dω²`, and `(a+b)² + 4ab ≤ 2(a+b)²`.
pub fn dephasing_q_corrected(eta: f64) -> Result<QuadraticBound> {
    check_eta(eta)?;
    let s = std::f64::consts::SQRT_2 / (8.0 * (1.0 - eta * eta));
    QuadraticBound::new(
        dephasing_labels(),
        RealMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![s, s * eta * eta])),
    )
}

/// Contraction provider for the built-in dephasing family, `dx` in the
/// family's `(omega, eta)` order.
pub fn dephasing_w_provider(x: &[f64]) -> impl Fn(&[f64]) -> Result<ContractionW> + Sync + '_ {
    move |dx: &[f64]| dephasing_w(x[1], dx[0])
}

#[derive(Debug, Clone, Serialize)]
pub struct QBoundPoint {
    pub dx: Vec<f64>,
    pub deviation: f64,
    pub quadratic: f64,
    /// `quadratic + max(c, 0)·‖dx‖³ − deviation`.
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QBoundDirection {
    pub direction: Vec<f64>,
    /// Fitted excess `deviation − quadratic = a s² + c s³`.
    pub second_order_excess: f64,
    pub cubic: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct QBoundCheck {
    pub pass: bool,
    pub worst_slack: f64,
    pub points: Vec<QBoundPoint>,
    pub directions: Vec<QBoundDirection>,
}

/// Axes, pairwise diagonals (both signs), each at the given scales.
pub fn default_q_grid(m: usize, scales: &[f64]) -> Result<Vec<Displacement>> {
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..m {
        for sign in [1.0, -1.0] {
            let mut v = vec![0.0; m];
            v[i] = sign;
            dirs.push(v);
        }
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..m {
        for j in (i + 1)..m {
            for (a, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut v = vec![0.0; m];
                v[i] = a * r;
                v[j] = b * r;
                dirs.push(v);
            }
        }
    }
    let mut out = Vec::new();
    for &s in scales {
        for v in &dirs {
            out.push(Displacement::new(v.iter().map(|c| c * s).collect(), s)?);
        }
    }
    Ok(out)
}

fn direction_key(dx: &[f64]) -> Vec<i64> {
    let n = dx.iter().map(|v| v * v).sum::<f64>().sqrt();
    dx.iter().map(|v| (v / n * 1e9).round() as i64).collect()
}

/// Checks `‖I − K_W(dx)‖ ≤ dxᵀQdx` up to a fitted cubic remainder.
///
/// Grid points are grouped by direction. Along each direction the excess
/// `‖I − K_W‖ − dxᵀQdx` is fitted as `a s² + c s³` from the two smallest
/// scales `s = ‖dx‖`. A direction passes when the second-order excess `a`
/// is at most `SECOND_ORDER_TOL·v̂ᵀQv̂` and every point satisfies
/// `‖I − K_W‖ ≤ dxᵀQdx + max(c, 0)s³`. Directions sampled at one scale only
/// get no cubic allowance.
pub fn q_bound_check(
    pch: &dyn ParamChannel,
    w_provider: &(dyn Fn(&[f64]) -> Result<ContractionW> + Sync),
    x: &[f64],
    q: &QuadraticBound,
    grid: &[Displacement],
) -> Result<QBoundCheck> {
    pch.check_point(x)?;
    let q = q.reordered(&pch.param_names())?;
    let base = pch.evaluate(x)?;
    let mut points = grid
        .par_iter()
        .map(|d| -> Result<QBoundPoint> {
            let shifted: Vec<f64> = x.iter().zip(&d.dx).map(|(a, b)| a + b).collect();
            let other = pch.evaluate(&shifted)?;
            let deviation = kw_deviation(&base, &other, &w_provider(&d.dx)?)?;
            let quadratic = q.quadratic_form(&d.dx);
            Ok(QBoundPoint {
                dx: d.dx.clone(),
                deviation,
                quadratic,
                slack: quadratic - deviation,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut groups: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
    for (k, p) in points.iter().enumerate() {
        groups.entry(direction_key(&p.dx)).or_default().push(k);
    }
    let norm = |dx: &[f64]| dx.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut directions = Vec::new();
    let mut pass = true;
    for idx in groups.values() {
        let mut idx = idx.clone();
        idx.sort_by(|&a, &b| norm(&points[a].dx).total_cmp(&norm(&points[b].dx)));
        let first = &points[idx[0]];
        let s0 = norm(&first.dx);
        let unit: Vec<f64> = first.dx.iter().map(|v| v / s0).collect();
        let q_unit = q.quadratic_form(&unit);
        let (a, c) = if idx.len() >= 2 && s0 > 0.0 {
            let s1 = norm(&points[idx[1]].dx);
            let e0 = (first.deviation - first.quadratic) / (s0 * s0);
            let e1 = (points[idx[1]].deviation - points[idx[1]].quadratic) / (s1 * s1);
            // e(s) = a + c s
            let c = (e1 - e0) / (s1 - s0);
            (e0 - c * s0, c)
        } else if s0 > 0.0 {
            ((first.deviation - first.quadratic) / (s0 * s0), 0.0)
        } else {
            (0.0, 0.0)
        };
        let mut dir_pass = a <= SECOND_ORDER_TOL * q_unit + 1e-12;
        for &k in &idx {
            let p = &mut points[k];
            let s = norm(&p.dx);
            p.slack = p.quadratic + c.max(0.0) * s.powi(3) - p.deviation;
            if p.slack < -1e-15 {
                dir_pass = false;
            }
        }
        pass &= dir_pass;
        directions.push(QBoundDirection {
            direction: unit,
            second_order_excess: a,
            cubic: c,
            pass: dir_pass,
        });
    }
    let worst_slack = points.iter().map(|p| p.slack).fold(f64::INFINITY, f64::min);
    Ok(QBoundCheck {
        pass,
        worst_slack,
        points,
        directions,
    })
}

/// `Q⁻¹/(8nN)`.
pub fn sql_cov_bound(q: &QuadraticBound, copies: usize, n: usize) -> Result<CovarianceMatrix> {
    if copies == 0 || n == 0 {
        return Err(Error::InvalidInput("N and n must be positive".into()));
    }
    let inv = q.0.inverse()?;
    Ok(CovarianceMatrix(inv.scaled(1.0 / (8.0 * (n * copies) as f64))))
}

/// `λ_max((8NQ)^{-1/2} J (8NQ)^{-1/2})`; at most 1 iff `J ⪯ 8NQ`.
pub fn cap_ratio(j: &QfiMatrix, q: &QuadraticBound, copies: usize) -> Result<f64> {
    let q = q.reordered(j.labels())?;
    let cap = q.matrix() * (8.0 * copies as f64);
    let eig = cap.clone().symmetric_eigen();
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::Singular);
    }
    let inv_sqrt = &eig.eigenvectors
        * RealMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig.eigenvectors.transpose();
    let scaled = &inv_sqrt * j.matrix() * &inv_sqrt;
    Ok(linalg::sym_eigenvalues(&scaled).max())
}

#[derive(Debug, Clone, Serialize)]
pub struct CapCheck {
    pub pass: bool,
    pub worst_ratio: f64,
    pub samples: usize,
    pub copies: usize,
}

/// QFIM of the `N`-fold channel at a given probe, relative to the cap.
pub fn parallel_qfim_ratio(
    pch: &dyn ParamChannel,
    x: &[f64],
    q: &QuadraticBound,
    copies: usize,
    probe: &DensityMatrix,
) -> Result<f64> {
    let par = ParallelChannel::new(pch, copies, DEFAULT_SIZE_CAP)?;
    let j = qfim_of_probe(&par, x, probe, DEFAULT_PROBE_STEP)?;
    cap_ratio(&j, q, copies)
}

/// Checks `J ⪯ 8NQ(1 + 1e-2)` for Haar-random purified probes of `K_x^{⊗N}`.
pub fn verify_parallel_qfim_cap(
    pch: &dyn ParamChannel,
    x: &[f64],
    q: &QuadraticBound,
    copies: usize,
    samples: usize,
    seed: u64,
) -> Result<CapCheck> {
    if copies == 0 || copies > MAX_PARALLEL {
        return Err(Error::InvalidInput(format!("N = {copies} outside 1..={MAX_PARALLEL}")));
    }
    let par = ParallelChannel::new(pch, copies, DEFAULT_SIZE_CAP)?;
    let d = par.dim_in();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes: Vec<_> = (0..samples).map(|_| sampling::haar_vector(d * d, &mut rng)).collect();
    let ratios = probes
        .par_iter()
        .map(|p| -> Result<f64> {
            let j = qfim_of_pure_probe(&par, x, p, DEFAULT_PROBE_STEP)?;
            cap_ratio(&j, q, copies)
        })
        .collect::<Result<Vec<_>>>()?;
    let worst_ratio = ratios.into_iter().fold(0.0, f64::max);
    Ok(CapCheck {
        pass: worst_ratio <= 1.0 + CAP_SLACK,
        worst_ratio,
        samples,
        copies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chandist::min_fidelity_primal;
    use crate::channels::{dephasing_phase, DephasingPhase};

    #[test]
    fn rhs_examples() {
        let ch = dephasing_phase(0.3, 0.5).unwrap();
        for n in 1..4 {
            assert!(parallel_bound_rhs(&ch, &ch, &ContractionW::identity(2), n).unwrap() < 1e-14);
        }
        let other = dephasing_phase(0.31, 0.5).unwrap();
        let w = dephasing_w(0.5, 0.01).unwrap();
        let k = kw_matrix(&ch, &other, &w).unwrap();
        let direct = linalg::op_norm(&(linalg::identity(2).scale(2.0) - &k - k.adjoint()));
        assert!((parallel_bound_rhs(&ch, &other, &w, 1).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn rhs_bounds_n_fold_fidelity() {
        let (eta, dw) = (0.5, 1e-2);
        let a = dephasing_phase(0.3, eta).unwrap();
        let b = dephasing_phase(0.3 + dw, eta).unwrap();
        let w = dephasing_w(eta, dw).unwrap();
        for n in 1..=3 {
            let f = min_fidelity_primal(&a.tensor_power(n, 64).unwrap(), &b.tensor_power(n, 64).unwrap())
                .unwrap()
                .upper_bound;
            let rhs = parallel_bound_rhs(&a, &b, &w, n).unwrap();
            assert!(2.0 - 2.0 * f <= rhs + 1e-9, "N={n}: {} > {rhs}", 2.0 - 2.0 * f);
        }
    }

    #[test]
    fn dephasing_w_examples() {
        assert!((dephasing_w(0.4, 0.0).unwrap().matrix() - linalg::identity(2)).norm() < 1e-15);
        let dw = 0.3;
        let w = dephasing_w(0.0, dw).unwrap();
        assert!((w.matrix()[(0, 0)].re - (dw / 2.0).cos()).abs() < 1e-15);
        assert!((w.matrix()[(0, 1)].im - (dw / 2.0).sin()).abs() < 1e-15);
        let w = dephasing_w(0.7, 1.3).unwrap();
        assert!(linalg::unitarity_defect(w.matrix()) < 1e-15);
        assert!(matches!(dephasing_w(1.0, 0.1), Err(Error::EtaOne)));
    }

    #[test]
    fn published_q_values() {
        let q = dephasing_q_published(0.5).unwrap();
        assert_eq!(q.labels(), ["eta", "omega"]);
        assert!((q.get(0, 0) - 0.14434).abs() < 1e-5);
        assert!((q.get(1, 1) - 0.07217).abs() < 1e-5);
        assert!(matches!(dephasing_q_published(1.0), Err(Error::EtaOne)));
    }

    #[test]
    fn sql_bound_examples() {
        let q = dephasing_q_published(0.5).unwrap();
        let b = sql_cov_bound(&q, 10, 1).unwrap();
        assert!((b.get(0, 0) - 0.0866025).abs() < 1e-6);
        assert!((b.get(1, 1) - 0.1732051).abs() < 1e-6);
        assert!(b.get(0, 1).abs() < 1e-15);
        let b20 = sql_cov_bound(&q, 20, 1).unwrap();
        assert!((b20.get(0, 0) * 2.0 - b.get(0, 0)).abs() < 1e-15);
        let b1 = sql_cov_bound(&q, 1, 1).unwrap();
        assert!((b1.get(1, 1) - 1.0 / (8.0 * q.get(1, 1))).abs() < 1e-14);
    }

    #[test]
    fn q_bound_zero_displacement() {
        let x = [0.3, 0.5];
        let base = DephasingPhase.evaluate(&x).unwrap();
        let dev = kw_deviation(&base, &base, &dephasing_w(0.5, 0.0).unwrap()).unwrap();
        assert!(dev < 1e-15);
    }

    #[test]
    fn corrected_q_passes_and_half_of_it_fails() {
        let grid = default_q_grid(2, &[1e-2, 5e-3, 2.5e-3]).unwrap();
        for eta in [0.3, 0.5, 0.8] {
            let x = [0.3, eta];
            let w = dephasing_w_provider(&x);
            let q = dephasing_q_corrected(eta).unwrap();
            let ok = q_bound_check(&DephasingPhase, &w, &x, &q, &grid).unwrap();
            assert!(ok.pass, "eta {eta}: {:?}", ok.directions);
            let bad = q_bound_check(&DephasingPhase, &w, &x, &q.scaled(0.5), &grid).unwrap();
            assert!(!bad.pass);
        }
    }

    #[test]
    fn published_q_fails_on_the_eta_axis_below_golden_ratio() {
        let grid = default_q_grid(2, &[1e-2, 5e-3, 2.5e-3]).unwrap();
        let x = [0.3, 0.5];
        let w = dephasing_w_provider(&x);
        let check = q_bound_check(&DephasingPhase, &w, &x, &dephasing_q_published(0.5).unwrap(), &grid).unwrap();
        assert!(!check.pass);
        let axis = check.directions.iter().find(|d| d.direction == vec![0.0, 1.0]).unwrap();
        assert!(!axis.pass);
        // exact second-order excess along eta: (1 − √(η²+η))/(8(1−η²))
        let expect = (1.0 - 0.75f64.sqrt()) / (8.0 * 0.75);
        assert!((axis.second_order_excess - expect).abs() < 1e-4);
    }

    #[test]
    fn cap_examples() {
        let eta = 0.8;
        let x = [0.3, eta];
        let q = dephasing_q_published(eta).unwrap();
        let r1 = parallel_qfim_ratio(&DephasingPhase, &x, &q, 1, &DensityMatrix::plus()).unwrap();
        assert!(r1 <= 1.0, "{r1}");
        let plus2 = DensityMatrix::plus().tensor(&DensityMatrix::plus());
        let r2 = parallel_qfim_ratio(&DephasingPhase, &x, &q, 2, &plus2).unwrap();
        assert!((r1 - r2).abs() < 1e-6, "additivity: {r1} vs {r2}");
        let corrected = dephasing_q_corrected(0.5).unwrap();
        let c = verify_parallel_qfim_cap(&DephasingPhase, &[0.3, 0.5], &corrected, 2, 5, 0).unwrap();
        assert!(c.pass, "{c:?}");
        assert!(verify_parallel_qfim_cap(&DephasingPhase, &x, &q, 5, 1, 0).is_err());
    }
}
