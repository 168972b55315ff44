//! Property-based invariants over seeded random instances.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use td_lsys::bounds::{chebyshev_floor, markov_floor, mean_bound, mse_bound, trace_bound};
use td_lsys::divergence::{closed_form_step, off_policy_step, OffPolicySpec};
use td_lsys::instances::{generate_random_mdp, RandomMdpSpec};
use td_lsys::linalg::inf_norm;
use td_lsys::mdp::Transition;
use td_lsys::moments::noise_covariance;
use td_lsys::simulator::RunningMoments;
use td_lsys::stein::{stein_direct, stein_series};
use td_lsys::{build_system, induce_chain, propagate_correlation, InducedChain, LinearSystemModel, MomentState, Policy, TabularMdp};

fn instance(n: usize, na: usize, gamma: f64, seed: u64) -> (TabularMdp, Policy) {
    generate_random_mdp(&RandomMdpSpec::new(n, na, gamma, seed)).unwrap()
}

fn chain(n: usize, na: usize, gamma: f64, seed: u64) -> InducedChain {
    let (m, p) = instance(n, na, gamma, seed);
    induce_chain(&m, &p).unwrap()
}

fn model(n: usize, na: usize, gamma: f64, alpha: f64, seed: u64) -> LinearSystemModel {
    build_system(&chain(n, na, gamma, seed), alpha).unwrap()
}

fn unit_vec(vals: &[f64], n: usize) -> DVector<f64> {
    DVector::from_iterator(n, vals.iter().copied().cycle().take(n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn value_function_matches_neumann_series(n in 1usize..6, na in 1usize..4, gamma in 0.0f64..0.95, seed in any::<u64>()) {
        let c = chain(n, na, gamma, seed);
        let mut term = c.r_pi.clone();
        let mut sum = DVector::zeros(n);
        // gamma^K / (1 - gamma) < 1e-12 with R_max <= 1.
        let k_max = if gamma == 0.0 { 1 } else { ((1e-12 * (1.0 - gamma)).ln() / gamma.ln()).ceil() as usize + 1 };
        for _ in 0..k_max {
            sum += &term;
            term = &c.p_pi * term * gamma;
        }
        prop_assert!((sum - &c.v_pi).amax() <= 1e-8);
    }

    #[test]
    fn value_function_is_linear_in_rewards(n in 1usize..5, gamma in 0.0f64..0.95, seed in any::<u64>(), scale in -3.0f64..3.0) {
        let (m, p) = instance(n, 2, gamma, seed);
        let base = induce_chain(&m, &p).unwrap();
        let scaled = induce_chain(&m.scale_rewards(scale), &p).unwrap();
        prop_assert!((&scaled.v_pi - &base.v_pi * scale).amax() <= 1e-9 * (1.0 + scale.abs()) / (1.0 - gamma));
    }

    #[test]
    fn stationary_distribution_is_invariant(n in 1usize..7, na in 1usize..4, seed in any::<u64>()) {
        let c = chain(n, na, 0.5, seed);
        prop_assert!((c.d.sum() - 1.0).abs() <= 1e-10);
        prop_assert!((c.p_pi.transpose() * &c.d - &c.d).amax() <= 1e-10);
        prop_assert!(c.d.iter().all(|&v| v >= c.d_min && v > 0.0));
    }

    #[test]
    fn system_matrix_is_a_nonnegative_contraction(n in 1usize..6, gamma in 0.0f64..0.99, alpha in 0.001f64..0.999, seed in any::<u64>()) {
        let m = model(n, 2, gamma, alpha, seed);
        prop_assert!(m.a_matrix.iter().all(|&v| v >= 0.0));
        prop_assert!((inf_norm(&m.a_matrix) - m.rho).abs() <= 1e-12);
        let mut power = DMatrix::identity(n, n);
        for k in 1..=30 {
            power = &power * &m.a_matrix;
            prop_assert!(inf_norm(&power) <= m.rho.powi(k) * (1.0 + 1e-12));
        }
        prop_assert!(m.spectral_radius() <= m.rho + 1e-12);
    }

    #[test]
    fn bounds_are_monotone_and_consistent(n in 1usize..5, gamma in 0.0f64..0.95, alpha in 0.01f64..0.99, seed in any::<u64>(), x in prop::collection::vec(-3.0f64..3.0, 1..5), eps in 0.01f64..1e4) {
        let m = model(n, 2, gamma, alpha, seed);
        let x0 = unit_vec(&x, n);
        let mut prev = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        for k in [0usize, 1, 2, 5, 10, 50, 200] {
            let tb = trace_bound(&m, &x0, k).unwrap();
            let mse = mse_bound(&m, &x0, k).unwrap();
            let mb = mean_bound(&m, &x0, k);
            prop_assert!(tb <= prev.0 && mse.l2 <= prev.1 && mb <= prev.2);
            prop_assert!(mse.l2 * mse.l2 >= mse.squared * (1.0 - 1e-12));
            let cheb = chebyshev_floor(&m, &x0, k, eps).unwrap();
            prop_assert!(cheb.prob_floor <= 1.0);
            prop_assert!(markov_floor(&m, &x0, k, eps).unwrap() <= 1.0);
            prev = (tb, mse.l2, mb);
        }
    }

    #[test]
    fn exact_moments_stay_consistent(n in 1usize..5, gamma in 0.0f64..0.95, alpha in 0.01f64..0.99, seed in any::<u64>(), v in prop::collection::vec(-1.0f64..1.0, 1..5)) {
        let m = model(n, 2, gamma, alpha, seed);
        let x0 = m.to_error(&unit_vec(&v, n));
        let traj = propagate_correlation(&m, &MomentState::initial(&x0), 60).unwrap();
        let means = m.propagate_mean(&x0, 60);
        for (st, mean) in traj.states.iter().zip(&means) {
            prop_assert!((&st.mean - mean).amax() <= 1e-12);
            prop_assert!(st.trace() + 1e-12 >= st.mean.norm_squared());
            prop_assert!(st.trace() <= trace_bound(&m, &x0, st.k).unwrap());
            let w = noise_covariance(&m, st).unwrap();
            prop_assert!(w.trace() <= m.w_max);
        }
    }

    #[test]
    fn stein_routes_agree(n in 1usize..6, gamma in 0.0f64..0.95, alpha in 0.05f64..0.95, seed in any::<u64>()) {
        let m = model(n, 2, gamma, alpha, seed);
        let (series, _) = stein_series(&m.a_matrix, td_lsys::stein::required_terms(n, m.rho));
        let direct = stein_direct(&m.a_matrix).unwrap();
        prop_assert!((series - direct).amax() <= 1e-8);
    }

    #[test]
    fn merged_moments_match_sequential(data in prop::collection::vec(-1e3f64..1e3, 2..200), split in 0usize..200) {
        let split = split.min(data.len());
        let mut seq = RunningMoments::new(1);
        data.iter().for_each(|x| seq.push(&[*x]));
        let (mut a, mut b) = (RunningMoments::new(1), RunningMoments::new(1));
        data[..split].iter().for_each(|x| a.push(&[*x]));
        data[split..].iter().for_each(|x| b.push(&[*x]));
        a.merge(&b);
        let (s, m) = (seq.estimate(0), a.estimate(0));
        prop_assert!((s.mean - m.mean).abs() <= 1e-9);
        prop_assert!((s.se - m.se).abs() <= 1e-9 * (1.0 + s.se));
    }

    #[test]
    fn off_policy_update_matches_closed_form(eps in 0.001f64..0.999, v in -1e3f64..1e3, action in 0usize..2) {
        let spec = OffPolicySpec::new(eps).unwrap();
        let mut values = DVector::from_element(1, v);
        let t = Transition { state: 0, action, next_state: 0, reward: 1.0 };
        off_policy_step(&mut values, &t, spec.ratio(action), spec.alpha, spec.gamma);
        let expected = closed_form_step(&spec, v, action);
        prop_assert!((values[0] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }
}
