use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qfim_core::chandist::{min_fidelity_dual, min_fidelity_primal, probe_fidelity};
use qfim_core::channels::{dephasing_phase, DephasingPhase, KrausChannel, ParallelChannel, ParamChannel, TwoParamRotation};
use qfim_core::linalg;
use qfim_core::maxqfim::{self, DEFAULT_STEP};
use qfim_core::qfim::{crb, qfim_of_probe, CovarianceMatrix, DEFAULT_PROBE_STEP};
use qfim_core::sampling;
use qfim_core::scaling::{self, dephasing_q_corrected, dephasing_w, kw_deviation, parallel_bound_rhs};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit_direction(m: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..m).map(|_| r.sample(rand_distr::StandardNormal)).collect();
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter().map(|a| a / n).collect()
}

fn dephasing_pairs() -> Vec<(KrausChannel, KrausChannel)> {
    let mut out = Vec::new();
    for eta in [0.2, 0.5, 0.8] {
        for omega in [0.0, 0.3, 1.0] {
            for (a, b) in [(0.05, 0.0), (0.0, 0.05), (0.05, 0.05)] {
                out.push((
                    dephasing_phase(omega, eta).unwrap(),
                    dephasing_phase(omega + a, eta + b).unwrap(),
                ));
            }
        }
    }
    out
}

fn random_pairs(count: usize, seed: u64) -> Vec<(KrausChannel, KrausChannel)> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| (sampling::random_channel(2, 2, 2, &mut r), sampling::random_channel(2, 2, 2, &mut r)))
        .collect()
}

/// Fidelities of the purified outputs for Haar-random probes on `d ⊗ d`.
fn sampled_fidelities(a: &KrausChannel, b: &KrausChannel, samples: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    let d = a.dim_in();
    (0..samples)
        .map(|_| {
            let reduced = sampling::haar_probe(d, d, r).trace_out_ancilla(d).unwrap();
            probe_fidelity(&reduced, a, b).unwrap()
        })
        .collect()
}

#[test]
fn sdp_fidelity_is_never_beaten_by_sampled_probes() {
    let mut r = rng(11);
    for (a, b) in dephasing_pairs().into_iter().chain(random_pairs(20, 12)) {
        let f = min_fidelity_dual(&a, &b).unwrap().f_min;
        let worst = sampled_fidelities(&a, &b, 200, &mut r).into_iter().fold(f64::INFINITY, f64::min);
        assert!(worst >= f - 1e-6, "probe reached {worst} below f_min {f}");
    }
}

#[test]
fn sampled_probes_approach_the_optimum_on_builtin_grids() {
    let mut r = rng(13);
    for (a, b) in dephasing_pairs() {
        let f = min_fidelity_dual(&a, &b).unwrap().f_min;
        let best = sampled_fidelities(&a, &b, 200, &mut r).into_iter().fold(f64::INFINITY, f64::min);
        assert!(best - f <= 1e-3, "best sampled {best} vs f_min {f}");
    }
}

#[test]
fn returned_probe_attains_the_optimum() {
    for (a, b) in dephasing_pairs().into_iter().chain(random_pairs(20, 14)) {
        let res = min_fidelity_dual(&a, &b).unwrap();
        let attained = probe_fidelity(&res.probe_opt, &a, &b).unwrap();
        assert!((attained - res.f_min).abs() <= 1e-8, "{attained} vs {}", res.f_min);
        assert!(linalg::op_norm(res.w_opt.matrix()) <= 1.0 + 1e-9);
    }
}

#[test]
fn parallel_bound_holds_for_dephasing() {
    let x = [0.3, 0.5];
    let mut r = rng(21);
    for _ in 0..3 {
        let v = unit_direction(2, &mut r);
        let dx = [1e-2 * v[0], 1e-2 * v[1]];
        let a = DephasingPhase.evaluate(&x).unwrap();
        let b = DephasingPhase.evaluate(&[x[0] + dx[0], x[1] + dx[1]]).unwrap();
        let w = min_fidelity_dual(&a, &b).unwrap().w_opt;
        check_parallel_bound(&a, &b, &w);
    }
    // The explicit contraction for a pure phase shift.
    let a = dephasing_phase(0.3, 0.5).unwrap();
    let b = dephasing_phase(0.31, 0.5).unwrap();
    check_parallel_bound(&a, &b, &dephasing_w(0.5, 1e-2).unwrap());
}

#[test]
fn parallel_bound_holds_for_random_families() {
    let mut r = rng(22);
    for _ in 0..3 {
        let fam = sampling::random_channel_family(vec!["a".into(), "b".into()], 2, 2, 2, &mut r);
        let x = [r.random_range(-0.5..0.5), r.random_range(-0.5..0.5)];
        let v = unit_direction(2, &mut r);
        let a = fam.evaluate(&x).unwrap();
        let b = fam.evaluate(&[x[0] + 1e-2 * v[0], x[1] + 1e-2 * v[1]]).unwrap();
        let w = min_fidelity_dual(&a, &b).unwrap().w_opt;
        check_parallel_bound(&a, &b, &w);
    }
}

fn check_parallel_bound(a: &KrausChannel, b: &KrausChannel, w: &qfim_core::chandist::ContractionW) {
    let k = qfim_core::chandist::kw_matrix(a, b, w).unwrap();
    let id = linalg::identity(k.nrows());
    let sym = linalg::op_norm(&(id.scale(2.0) - &k - k.adjoint()));
    assert!(sym <= 2.0 * kw_deviation(a, b, w).unwrap() + 1e-12);
    for copies in 1..=3 {
        let an = a.tensor_power(copies, 64).unwrap();
        let bn = b.tensor_power(copies, 64).unwrap();
        let f = min_fidelity_primal(&an, &bn).unwrap().f_min;
        let rhs = parallel_bound_rhs(a, b, w, copies).unwrap();
        assert!(2.0 - 2.0 * f <= rhs + 1e-6, "N={copies}: {} > {rhs}", 2.0 - 2.0 * f);
    }
}

#[test]
fn sql_bound_never_exceeds_crb() {
    let mut r = rng(31);
    for eta in [0.3, 0.5, 0.8] {
        let x = [0.3, eta];
        let q = dephasing_q_corrected(eta).unwrap();
        for copies in 1..=2 {
            let par = ParallelChannel::new(&DephasingPhase, copies, 64).unwrap();
            let sql = scaling::sql_cov_bound(&q, copies, 1).unwrap();
            for _ in 0..10 {
                let d = par.dim_in();
                let probe = sampling::haar_probe(d, d, &mut r);
                let j = qfim_of_probe(&par, &x, &probe, DEFAULT_PROBE_STEP).unwrap();
                let c = crb(&j, 1).unwrap();
                let sql = CovarianceMatrix(sql.reordered(c.labels()).unwrap());
                let (mut lo, mut hi) = (sql.eigenvalues(), c.eigenvalues());
                lo.sort_by(f64::total_cmp);
                hi.sort_by(f64::total_cmp);
                for (s, b) in lo.iter().zip(&hi) {
                    assert!(*s <= b * (1.0 + 1e-9), "eta={eta} N={copies}: {lo:?} vs {hi:?}");
                }
            }
        }
    }
}

#[test]
fn directional_curvature_matches_jmax() {
    let mut r = rng(41);
    let cases: [(Box<dyn ParamChannel>, [f64; 2]); 2] = [
        (Box::new(DephasingPhase), [0.3, 0.5]),
        (Box::new(TwoParamRotation { time: 1.0 }), [0.7, 0.3]),
    ];
    for (pch, x) in cases {
        let jmax = maxqfim::extract_auto(pch.as_ref(), &x, DEFAULT_STEP, true).unwrap().jmax;
        for _ in 0..10 {
            let v = unit_direction(2, &mut r);
            let want = jmax.quadratic_form(&v);
            let got = maxqfim::directional_curvature(pch.as_ref(), &x, &v, DEFAULT_STEP).unwrap();
            assert!((got - want).abs() <= 1e-3 * want, "{got} vs {want} along {v:?}");
        }
    }
}

#[test]
fn identified_probe_reproduces_jmax() {
    let x = [0.3, 0.5];
    let dirs = maxqfim::default_directions(2, DEFAULT_STEP, 3, 5).unwrap();
    let report = maxqfim::existence_diagnostics(&DephasingPhase, &x, &dirs).unwrap();
    assert_eq!(report.verdict, maxqfim::Existence::Confirmed);
    let jmax = maxqfim::extract_maxqfim(&DephasingPhase, &x, DEFAULT_STEP, true).unwrap().jmax;
    let j = qfim_of_probe(&DephasingPhase, &x, &report.candidate.purification().unwrap(), DEFAULT_PROBE_STEP)
        .unwrap()
        .reordered(jmax.labels())
        .unwrap();
    for a in 0..2 {
        for b in 0..2 {
            let scale = jmax.get(a, a).max(jmax.get(b, b));
            assert!((j.get(a, b) - jmax.get(a, b)).abs() <= 1e-4 * scale, "{j:?} vs {jmax:?}");
        }
    }
}

#[test]
fn tradeoff_bounds_hold_above_the_crb() {
    let mut r = rng(51);
    let jmax = maxqfim::analytic_two_param_jmax(0.7, 0.3, 1.0).unwrap();
    for n in [1, 10] {
        let bounds = maxqfim::tradeoff_bounds(&jmax, n).unwrap();
        let base = crb(&jmax, n).unwrap();
        for _ in 0..50 {
            let g = nalgebra::DMatrix::<f64>::from_fn(2, 2, |_, _| r.sample(rand_distr::StandardNormal));
            let noise = &g * g.transpose() * (0.1 / n as f64);
            let cov = CovarianceMatrix::new(jmax.labels().to_vec(), base.matrix() + noise).unwrap();
            assert!(bounds.holds_for(&cov));
        }
        assert!(bounds.holds_for(&base));
    }
}
