use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qfim_core::chandist::{contraction_value, kw_matrix, min_fidelity_primal, min_fidelity_unitary, probe_fidelity};
use qfim_core::channels::{DensityMatrix, KrausChannel, ParamChannel};
use qfim_core::linalg::{self, c64, ComplexMatrix};
use qfim_core::qfim::{fidelity, qfim_of_probe, DEFAULT_PROBE_STEP};
use qfim_core::sampling;
use qfim_core::sdp::{self, SdpProblem};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

/// `K ∘ L` with Kraus operators `AᵢBⱼ`.
fn compose(after: &KrausChannel, before: &KrausChannel) -> KrausChannel {
    let ops = after
        .kraus()
        .iter()
        .flat_map(|a| before.kraus().iter().map(move |b| a * b))
        .collect();
    KrausChannel::new(ops).unwrap()
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn eigen_decomposition_reconstructs(seed in any::<u64>(), n in 1usize..7) {
        let h = sampling::random_hermitian(n, &mut rng(seed));
        let eig = linalg::herm_eig(&h).unwrap();
        let back = eig.map_spectrum(|l| c64(l, 0.0));
        prop_assert!((back - &h).norm() <= 1e-10 * h.norm().max(1.0));
        prop_assert!(linalg::unitarity_defect(&eig.eigenvectors) < 1e-10);
        prop_assert!(eig.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn trace_norm_dominates_op_norm(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let a = sampling::ginibre(n, n, &mut r);
        prop_assert!(linalg::trace_norm(&a) >= linalg::op_norm(&a) - 1e-12);
        let u = sampling::ginibre(n, 1, &mut r);
        let v = sampling::ginibre(n, 1, &mut r);
        let rank_one = &u * v.adjoint();
        let (t, o) = (linalg::trace_norm(&rank_one), linalg::op_norm(&rank_one));
        prop_assert!((t - o).abs() <= 1e-10 * o.max(1.0));
    }

    #[test]
    fn herm_exp_is_a_one_parameter_group(seed in any::<u64>(), n in 1usize..6, s in -3.0f64..3.0, t in -3.0f64..3.0) {
        let h = sampling::random_hermitian(n, &mut rng(seed));
        let lhs = linalg::herm_exp(&h, s).unwrap() * linalg::herm_exp(&h, t).unwrap();
        let rhs = linalg::herm_exp(&h, s + t).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-9);
        prop_assert!(linalg::unitarity_defect(&linalg::herm_exp(&h, s).unwrap()) < 1e-10);
    }

    #[test]
    fn channels_map_states_to_states(seed in any::<u64>(), din in 1usize..4, dout in 1usize..4, rank in 1usize..4) {
        prop_assume!(rank * dout >= din);
        let mut r = rng(seed);
        let k = sampling::random_channel(din, dout, rank, &mut r);
        let rho = sampling::random_mixed_state(din, &mut r);
        let out = k.apply(&rho).unwrap();
        let m = out.matrix();
        prop_assert!(linalg::hermitian_defect(m) < 1e-12);
        prop_assert!((linalg::trace(m).re - 1.0).abs() < 1e-12);
        prop_assert!(linalg::herm_eigenvalues(m).unwrap()[0] > -1e-12);
    }

    #[test]
    fn tensor_power_acts_on_product_states(seed in any::<u64>(), copies in 2usize..4) {
        let mut r = rng(seed);
        let k = sampling::random_channel(2, 2, 2, &mut r);
        let states: Vec<DensityMatrix> = (0..copies).map(|_| sampling::random_mixed_state(2, &mut r)).collect();
        let product = states[1..].iter().fold(states[0].clone(), |acc, s| acc.tensor(s));
        let joint = k.tensor_power(copies, 64).unwrap().apply(&product).unwrap();
        let outs: Vec<DensityMatrix> = states.iter().map(|s| k.apply(s).unwrap()).collect();
        let separate = outs[1..].iter().fold(outs[0].clone(), |acc, s| acc.tensor(s));
        prop_assert!((joint.matrix() - separate.matrix()).norm() < 1e-12);
    }

    #[test]
    fn families_are_continuous(seed in any::<u64>(), a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let mut r = rng(seed);
        let fam = sampling::random_channel_family(vec!["a".into(), "b".into()], 2, 2, 2, &mut r);
        let rho = sampling::random_mixed_state(2, &mut r);
        let base = fam.evaluate(&[a, b]).unwrap().apply(&rho).unwrap();
        let mut last = f64::INFINITY;
        for k in 1..=4 {
            let d = 10f64.powi(-2 * k);
            let near = fam.evaluate(&[a + d, b - d]).unwrap().apply(&rho).unwrap();
            let dist = base.trace_distance(&near);
            prop_assert!(dist <= last + 1e-14);
            last = dist;
        }
        prop_assert!(last < 1e-6);
    }

    #[test]
    fn builtin_kraus_operators_are_continuous(omega in -2.0f64..2.0, eta in 0.05f64..0.9, x1 in -1.0f64..1.0, x2 in -1.0f64..1.0) {
        let families: [(Box<dyn ParamChannel>, [f64; 2]); 2] = [
            (Box::new(qfim_core::channels::DephasingPhase), [omega, eta]),
            (Box::new(qfim_core::channels::TwoParamRotation { time: 1.0 }), [x1, x2]),
        ];
        for (pch, x) in families {
            let base = pch.evaluate(&x).unwrap();
            let mut last = f64::INFINITY;
            for k in 1..=4 {
                let d = 10f64.powi(-2 * k);
                let near = pch.evaluate(&[x[0] + d, x[1] - d]).unwrap();
                let dist = base
                    .kraus()
                    .iter()
                    .zip(near.kraus())
                    .map(|(a, b)| linalg::op_norm(&(a - b)))
                    .fold(0.0, f64::max);
                prop_assert!(dist <= last + 1e-14);
                last = dist;
            }
            prop_assert!(last < 1e-6);
        }
    }

    #[test]
    fn fidelity_obeys_data_processing(seed in any::<u64>(), din in 2usize..4, dout in 1usize..4) {
        prop_assume!(3 * dout >= din);
        let mut r = rng(seed);
        let k = sampling::random_channel(din, dout, 3, &mut r);
        let a = sampling::random_mixed_state(din, &mut r);
        let b = sampling::random_mixed_state(din, &mut r);
        let before = fidelity(&a, &b).unwrap();
        let after = fidelity(&k.apply(&a).unwrap(), &k.apply(&b).unwrap()).unwrap();
        prop_assert!(after >= before - 1e-9, "{after} < {before}");
    }

    #[test]
    fn contraction_value_never_exceeds_probe_fidelity(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = sampling::random_channel(2, 2, 2, &mut r);
        let b = sampling::random_channel(2, 2, 2, &mut r);
        let w = qfim_core::chandist::ContractionW::clamped(sampling::ginibre(2, 2, &mut r));
        prop_assert!(linalg::op_norm(w.matrix()) <= 1.0 + 1e-12);
        let rho = sampling::random_mixed_state(2, &mut r);
        prop_assert!(contraction_value(&a, &b, &w).unwrap() <= probe_fidelity(&rho, &a, &b).unwrap() + 1e-12);
    }

    #[test]
    fn triangle_step_for_kw(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = sampling::random_channel(2, 2, 2, &mut r);
        let b = sampling::random_channel(2, 2, 2, &mut r);
        let w = qfim_core::chandist::ContractionW::clamped(sampling::ginibre(2, 2, &mut r));
        let k = kw_matrix(&a, &b, &w).unwrap();
        let id = linalg::identity(2);
        let lhs = linalg::op_norm(&(id.scale(2.0) - &k - k.adjoint()));
        let rhs = 2.0 * linalg::op_norm(&(&id - &k));
        prop_assert!(lhs <= rhs + 1e-12);
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn qfim_decreases_under_post_processing(seed in any::<u64>()) {
        let mut r = rng(seed);
        let fam = sampling::random_channel_family(vec!["a".into(), "b".into()], 2, 2, 2, &mut r);
        let post = sampling::random_channel(2, 2, 2, &mut r);
        let noisy = qfim_core::channels::FnChannel::new(vec!["a".into(), "b".into()], 2, 2, 4, {
            let fam = fam.clone();
            let post = post.clone();
            move |x| Ok(compose(&post, &fam.evaluate(x)?).kraus().to_vec())
        });
        let probe = sampling::haar_probe(2, 2, &mut r);
        let x = [0.2, -0.3];
        let j = qfim_of_probe(&fam, &x, &probe, DEFAULT_PROBE_STEP).unwrap();
        let jp = qfim_of_probe(&noisy, &x, &probe, DEFAULT_PROBE_STEP).unwrap();
        let slack = 1e-8 * j.op_norm().max(1.0);
        prop_assert!(linalg::sym_min_eigenvalue(&(j.matrix() - jp.matrix())) >= -slack);
    }

    #[test]
    fn unitary_fidelity_matches_sdp(seed in any::<u64>(), d in 2usize..4, t in 0.05f64..1.0) {
        let mut r = rng(seed);
        let ua = sampling::haar_unitary(d, &mut r);
        let ub = &ua * linalg::herm_exp(&sampling::random_hermitian(d, &mut r), t).unwrap();
        let closed = min_fidelity_unitary(&ua, &ub);
        prop_assume!(closed.is_ok());
        let closed = closed.unwrap();
        let a = KrausChannel::new(vec![ua]).unwrap();
        let b = KrausChannel::new(vec![ub]).unwrap();
        let sdp = min_fidelity_primal(&a, &b).unwrap();
        prop_assert!((sdp.f_min - closed).abs() < 1e-7, "{} vs {closed}", sdp.f_min);
        prop_assert!(linalg::op_norm(sdp.w_opt.matrix()) <= 1.0 + 1e-9);
    }

    #[test]
    fn sdp_argmax_is_scale_invariant(seed in any::<u64>(), gamma in 0.01f64..100.0, polyhedral in any::<bool>()) {
        let mut r = rng(seed);
        let problem = if polyhedral { random_lp(&mut r) } else { random_sdp(&mut r, 1) };
        let a = sdp::solve(&problem).unwrap();
        let b = sdp::solve(&scaled(&problem, gamma)).unwrap();
        prop_assert!(a.is_optimal() && b.is_optimal(), "{:?} {:?}", a.status, b.status);
        for (ya, yb) in a.y.iter().zip(&b.y) {
            prop_assert!((ya - yb).abs() < 1e-7, "{:?} vs {:?}", a.y, b.y);
        }
        prop_assert!((a.dual_objective - b.dual_objective).abs() < 1e-7);
    }

    // On a curved face the maximizer is only determined to about √gap, so
    // multi-variable LMIs are compared by value.
    #[test]
    fn sdp_value_is_scale_invariant(seed in any::<u64>(), gamma in 0.01f64..100.0) {
        let mut r = rng(seed);
        let problem = random_sdp(&mut r, 2);
        let a = sdp::solve(&problem).unwrap();
        let b = sdp::solve(&scaled(&problem, gamma)).unwrap();
        prop_assert!(a.is_optimal() && b.is_optimal(), "{:?} {:?}", a.status, b.status);
        prop_assert!((a.primal_objective - b.primal_objective).abs() < 1e-7);
        prop_assert!((a.dual_objective - b.dual_objective).abs() < 1e-7);
    }

    #[test]
    fn sdp_matches_bisection(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = 3;
        let c = sampling::random_hermitian(n, &mut r);
        let a0 = linalg::identity(n).scale(1.0 + linalg::op_norm(&c)) + &c;
        let g = sampling::ginibre(n, n, &mut r);
        let a1 = -(&g * g.adjoint()) - linalg::identity(n).scale(0.1);
        let mut p = SdpProblem::new(vec![1.0]);
        p.add_block(a0.clone(), vec![a1.clone()]);
        let sol = sdp::solve(&p).unwrap();
        prop_assert!(sol.is_optimal(), "{:?} y={:?} gap={} pinf={} dinf={} it={}", sol.status, sol.y, sol.gap, sol.primal_infeasibility, sol.dual_infeasibility, sol.iterations);
        let feasible = |t: f64| linalg::herm_eigenvalues(&(&a0 + a1.scale(t))).unwrap()[0] >= 0.0;
        let (mut lo, mut hi) = (0.0, 1.0);
        while feasible(hi) {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        prop_assert!((sol.y[0] - lo).abs() < 1e-7, "{} vs {lo}", sol.y[0]);
    }
}

fn scaled(p: &SdpProblem, gamma: f64) -> SdpProblem {
    SdpProblem {
        objective: p.objective.clone(),
        blocks: p
            .blocks
            .iter()
            .map(|b| sdp::LmiBlock {
                constant: b.constant.scale(gamma),
                coefficients: b.coefficients.iter().map(|a| a.scale(gamma)).collect(),
            })
            .collect(),
    }
}

/// `vars`-variable problem with a bounded, strictly feasible region: a
/// random 3×3 LMI plus the box `|yᵢ| ≤ 2`.
fn random_sdp(r: &mut ChaCha8Rng, vars: usize) -> SdpProblem {
    let objective = (0..vars).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut p = SdpProblem::new(objective);
    let coeffs = (0..vars).map(|_| sampling::random_hermitian(3, r).scale(0.3)).collect();
    p.add_block(linalg::identity(3), coeffs);
    add_box(&mut p, vars);
    p
}

/// Random linear program `Gy ≤ 1` inside the box, as a diagonal block.
fn random_lp(r: &mut ChaCha8Rng) -> SdpProblem {
    let vars = 3;
    let objective = (0..vars).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut p = SdpProblem::new(objective);
    let rows = 5;
    let g: Vec<Vec<f64>> = (0..rows).map(|_| (0..vars).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let coeffs = (0..vars)
        .map(|i| linalg::real_diag(&g.iter().map(|row| -row[i]).collect::<Vec<_>>()))
        .collect();
    p.add_block(linalg::identity(rows), coeffs);
    add_box(&mut p, vars);
    p
}

fn add_box(p: &mut SdpProblem, vars: usize) {
    let n = 2 * vars;
    let coeffs = (0..vars)
        .map(|i| {
            let mut m = ComplexMatrix::zeros(n, n);
            m[(2 * i, 2 * i)] = c64(1.0, 0.0);
            m[(2 * i + 1, 2 * i + 1)] = c64(-1.0, 0.0);
            m
        })
        .collect();
    p.add_block(linalg::identity(n).scale(2.0), coeffs);
}
