//! Property suites behind `qfim verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{dephasing_q, QForm, Suite, DEFAULT_CAP_SAMPLES, DEFAULT_DOMINANCE_SAMPLES};
use crate::chandist::{min_fidelity_dual, min_fidelity_primal};
use crate::channels::{DephasingPhase, FnChannel, KrausChannel, ParamChannel, TwoParamRotation};
use crate::error::Result;
use crate::linalg;
use crate::maxqfim::{self, DEFAULT_STEP};
use crate::qfim::{self, DEFAULT_PROBE_STEP};
use crate::sampling;
use crate::scaling;

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub pass: bool,
    pub checks: Vec<CheckRecord>,
}

struct Checks(Vec<CheckRecord>);

impl Checks {
    /// Passes when `value ≤ limit`.
    fn at_most(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        self.0.push(CheckRecord {
            name: name.into(),
            value,
            limit,
            pass: value <= limit,
        });
    }

    /// Passes when `value ≥ limit`.
    fn at_least(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        self.0.push(CheckRecord {
            name: name.into(),
            value,
            limit,
            pass: value >= limit,
        });
    }

    fn flag(&mut self, name: impl Into<String>, ok: bool, value: f64) {
        self.0.push(CheckRecord {
            name: name.into(),
            value,
            limit: f64::NAN,
            pass: ok,
        });
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub const ETA_GRID: [f64; 3] = [0.2, 0.5, 0.8];
pub const OMEGA_GRID: [f64; 3] = [0.0, 0.3, 1.0];
pub const ROTATION_GRID: [(f64, f64); 4] = [(0.3, 0.3), (0.3, 0.7), (0.7, 0.3), (0.7, 0.7)];
pub const SQL_ETAS: [f64; 3] = [0.3, 0.5, 0.8];

fn oracle(c: &mut Checks) -> Result<()> {
    for &eta in &ETA_GRID {
        for &omega in &OMEGA_GRID {
            let got = maxqfim::extract_maxqfim(&DephasingPhase, &[omega, eta], DEFAULT_STEP, true)?.jmax;
            let want = maxqfim::analytic_dephasing_jmax(eta)?;
            let diag = rel(got.entry("omega", "omega")?, want.entry("omega", "omega")?)
                .max(rel(got.entry("eta", "eta")?, want.entry("eta", "eta")?));
            c.at_most(format!("dephasing omega={omega} eta={eta} diagonal rel err"), diag, 1e-4);
            c.at_most(format!("dephasing omega={omega} eta={eta} |J12|"), got.get(0, 1).abs(), 1e-5);
        }
    }
    for &(x1, x2) in &ROTATION_GRID {
        let pch = TwoParamRotation { time: 1.0 };
        let got = maxqfim::extract_auto(&pch, &[x1, x2], DEFAULT_STEP, true)?.jmax;
        let want = maxqfim::analytic_two_param_jmax(x1, x2, 1.0)?;
        let err = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| rel(got.get(i, j), want.get(i, j)))
            .fold(0.0, f64::max);
        c.at_most(format!("rotation x=({x1}, {x2}) entrywise rel err"), err, 1e-4);
    }
    for time in [1.0, 2.0] {
        let pch = FnChannel::hamiltonian(vec!["x".into()], 2, time, |x| linalg::pauli_z().scale(x[0] / 2.0));
        let j = maxqfim::extract_auto(&pch, &[0.4], 1e-3, true)?.jmax.get(0, 0);
        c.at_most(format!("H = x·σ3/2, T={time}: |J − T²|"), (j - time * time).abs(), 1e-8);
    }
    let bound = scaling::sql_cov_bound(&scaling::dephasing_q_published(0.5)?, 10, 1)?;
    c.at_most("SQL bound eta=0.5 N=10 (eta, eta)", (bound.entry("eta", "eta")? - 0.08660).abs(), 1e-4);
    c.at_most("SQL bound eta=0.5 N=10 (omega, omega)", (bound.entry("omega", "omega")? - 0.17321).abs(), 1e-4);
    Ok(())
}

/// Channel pairs for the primal–dual comparison: built-in grids at three
/// displacements each, plus random rank-2 qubit channel pairs.
pub fn gap_corpus(seed: u64, random_pairs: usize) -> Result<Vec<(String, KrausChannel, KrausChannel)>> {
    let shifts = [(0.05, 0.0), (0.0, 0.05), (0.05, 0.05)];
    let mut out = Vec::new();
    for &eta in &ETA_GRID {
        for &omega in &OMEGA_GRID {
            for &(a, b) in &shifts {
                out.push((
                    format!("dephasing ({omega}, {eta}) + ({a}, {b})"),
                    DephasingPhase.evaluate(&[omega, eta])?,
                    DephasingPhase.evaluate(&[omega + a, eta + b])?,
                ));
            }
        }
    }
    let rot = TwoParamRotation { time: 1.0 };
    for &(x1, x2) in &ROTATION_GRID {
        for &(a, b) in &shifts {
            out.push((
                format!("rotation ({x1}, {x2}) + ({a}, {b})"),
                rot.evaluate(&[x1, x2])?,
                rot.evaluate(&[x1 + a, x2 + b])?,
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..random_pairs {
        let a = sampling::random_channel(2, 2, 2, &mut rng);
        let b = sampling::random_channel(2, 2, 2, &mut rng);
        out.push((format!("random pair {k}"), a, b));
    }
    Ok(out)
}

fn gaps(c: &mut Checks, seed: u64) -> Result<()> {
    for (name, a, b) in gap_corpus(seed, 20)? {
        let p = min_fidelity_primal(&a, &b)?;
        let d = min_fidelity_dual(&a, &b)?;
        c.at_most(format!("{name}: |primal − dual|"), (p.f_min - d.f_min).abs(), 1e-8);
    }
    Ok(())
}

fn dominance(c: &mut Checks, samples: usize, seed: u64) -> Result<()> {
    let cases: [(&str, Box<dyn ParamChannel>, [f64; 2]); 2] = [
        ("dephasing", Box::new(DephasingPhase), [0.3, 0.5]),
        ("two-param-rotation", Box::new(TwoParamRotation { time: 1.0 }), [0.7, 0.3]),
    ];
    for (name, pch, x) in cases {
        let jmax = maxqfim::extract_auto(pch.as_ref(), &x, DEFAULT_STEP, true)?.jmax;
        let d = maxqfim::verify_dominance(&jmax, pch.as_ref(), &x, samples, DEFAULT_PROBE_STEP, seed)?;
        c.at_least(
            format!("{name}: min eigenvalue of J^max − J over {samples} probes"),
            d.worst_min_eigenvalue,
            d.threshold,
        );
    }
    Ok(())
}

/// `|8(1 − F) − dxᵀJdx|` for `ρ(x)` and `ρ(x + s·v)`.
pub fn bures_residual(pch: &dyn ParamChannel, x: &[f64], v: &[f64], s: f64, probe: &crate::channels::DensityMatrix) -> Result<f64> {
    let j = qfim::qfim_of_probe(pch, x, probe, DEFAULT_PROBE_STEP)?;
    let dx: Vec<f64> = v.iter().map(|a| a * s).collect();
    let shifted: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
    let f = qfim::fidelity(&qfim::output_state(pch, x, probe)?, &qfim::output_state(pch, &shifted, probe)?)?;
    Ok((8.0 * (1.0 - f) - j.quadratic_form(&dx)).abs())
}

/// Residual ratios `r(s)/r(s/2)` for random qubit families.
pub fn bures_ratios(families: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(families);
    for _ in 0..families {
        let fam = sampling::random_channel_family(vec!["a".into(), "b".into()], 2, 2, 2, &mut rng);
        let probe = sampling::random_mixed_state(2, &mut rng);
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-0.5..0.5)).collect();
        let v: Vec<f64> = sampling::haar_vector(2, &mut rng).iter().map(|z| z.re).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let v: Vec<f64> = v.iter().map(|a| a / n).collect();
        let r1 = bures_residual(&fam, &x, &v, 1e-2, &probe)?;
        let r2 = bures_residual(&fam, &x, &v, 5e-3, &probe)?;
        out.push(r1 / r2);
    }
    Ok(out)
}

fn bures(c: &mut Checks, seed: u64) -> Result<()> {
    for (k, ratio) in bures_ratios(10, seed)?.into_iter().enumerate() {
        c.at_most(format!("family {k}: |r(s)/r(s/2) − 8|"), (ratio - 8.0).abs(), 0.3 * 8.0);
    }
    Ok(())
}

fn caps(c: &mut Checks, q_form: QForm, samples: usize, seed: u64) -> Result<()> {
    let grid = scaling::default_q_grid(2, &[1e-2, 5e-3, 2.5e-3])?;
    for &eta in &SQL_ETAS {
        let x = [0.3, eta];
        let q = dephasing_q(q_form, eta)?;
        let w = scaling::dephasing_w_provider(&x);
        let check = scaling::q_bound_check(&DephasingPhase, &w, &x, &q, &grid)?;
        c.flag(format!("q_bound_check eta={eta}"), check.pass, check.worst_slack);
        for copies in 1..=scaling::MAX_PARALLEL {
            let cap = scaling::verify_parallel_qfim_cap(&DephasingPhase, &x, &q, copies, samples, seed)?;
            c.at_most(
                format!("eta={eta} N={copies}: worst λmax((8NQ)^-1/2 J (8NQ)^-1/2)"),
                cap.worst_ratio,
                1.0 + scaling::CAP_SLACK,
            );
        }
    }
    Ok(())
}

/// Runs the selected suites in order.
pub fn run_suites(selected: &[Suite], samples: Option<usize>, q_form: QForm, seed: u64) -> Result<Vec<SuiteReport>> {
    let mut out = Vec::with_capacity(selected.len());
    for &suite in selected {
        let mut c = Checks(Vec::new());
        match suite {
            Suite::Oracle => oracle(&mut c)?,
            Suite::Gaps => gaps(&mut c, seed)?,
            Suite::Dominance => dominance(&mut c, samples.unwrap_or(DEFAULT_DOMINANCE_SAMPLES), seed)?,
            Suite::Bures => bures(&mut c, seed)?,
            Suite::Caps => caps(&mut c, q_form, samples.unwrap_or(DEFAULT_CAP_SAMPLES), seed)?,
        }
        out.push(SuiteReport {
            suite,
            pass: c.0.iter().all(|r| r.pass),
            checks: c.0,
        });
    }
    Ok(out)
}
