#![allow(clippy::needless_range_loop)]

mod common;

use ampg_core::algorithms::{npg_step, project_simplex, RateRule};
use ampg_core::constants::{estimate_constants, ConstantsConfig};
use ampg_core::game::{induced_state_chain, marginal_transition};
use ampg_core::generators::{generate, GeneratorSpec, RewardGapMode, NEAR_TIE_GAP};
use ampg_core::oracle::OracleReport;
use ampg_core::random::{dirichlet_joint, stream};
use ampg_core::sampling::{
    estimate_gradient_with_rho, q_visit_times, simulate, GradientParams, InitialState,
};
use ampg_core::{JointPolicy, MarkovGame, PROB_TOL};
use common::{random_game, small_shape};
use proptest::prelude::*;

fn game_and_policy(seed: u64) -> (MarkovGame, JointPolicy) {
    let (s, actions) = small_shape(seed);
    let game = random_game(seed, s, &actions);
    let pol = dirichlet_joint(&mut stream(seed, 0, 7), &game);
    (game, pol)
}

/// Threshold found by bisection on `sum max(v - tau, lower) = 1`.
fn bisection_projection(v: &[f64], lower: f64) -> Vec<f64> {
    let mass = |tau: f64| v.iter().map(|x| (x - tau).max(lower)).sum::<f64>();
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    v.iter().map(|x| (x - 0.5 * (lo + hi)).max(lower)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn induced_rows_are_distributions(seed in any::<u64>()) {
        let (game, pol) = game_and_policy(seed);
        let p = induced_state_chain(&game, &pol).unwrap();
        for r in 0..game.num_states() {
            let row: Vec<f64> = (0..game.num_states()).map(|c| p[(r, c)]).collect();
            prop_assert!(row.iter().all(|&x| x >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= PROB_TOL);
        }
    }

    #[test]
    fn chain_composes_from_marginal_transitions(seed in any::<u64>()) {
        let (game, pol) = game_and_policy(seed);
        let p = induced_state_chain(&game, &pol).unwrap();
        for j in 0..game.num_agents() {
            let pbar = marginal_transition(&game, &pol, j).unwrap();
            for s in 0..game.num_states() {
                for t in 0..game.num_states() {
                    let c: f64 = (0..game.num_actions(j))
                        .map(|a| pol.agent(j).prob(s, a) * pbar[s].row(a)[t])
                        .sum();
                    prop_assert!((c - p[(s, t)]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn report_invariants(seed in any::<u64>()) {
        let (game, pol) = game_and_policy(seed);
        let rep = OracleReport::evaluate(&game, &pol).unwrap();
        let p = &rep.chain.transition;
        let nu = rep.nu();
        let n = game.num_states();
        prop_assert!((nu.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for t in 0..n {
            let x: f64 = (0..n).map(|s| nu[s] * p[(s, t)]).sum();
            prop_assert!((x - nu[t]).abs() <= 1e-10);
        }
        let r = ampg_core::game::state_rewards(&game, &pol).unwrap();
        for i in 0..game.num_agents() {
            let v = &rep.values[i];
            prop_assert!(v.iter().zip(nu).map(|(a, b)| a * b).sum::<f64>().abs() <= 1e-10);
            for s in 0..n {
                let pv: f64 = (0..n).map(|t| p[(s, t)] * v[t]).sum();
                prop_assert!((v[s] - (r[i][s] - rep.rho[i] + pv)).abs() <= 1e-9);
            }
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&rep.rho[i]));
            let adv = rep.advantage(i, i);
            for s in 0..n {
                let m: f64 = adv.row(s).iter().enumerate().map(|(a, x)| pol.agent(i).prob(s, a) * x).sum();
                prop_assert!(m.abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn reward_shift_moves_gain_only(seed in any::<u64>(), c in -0.5f64..0.5) {
        let (s, actions) = small_shape(seed);
        let base = random_game(seed, s, &actions);
        // Shift into [0, 1] by scaling first so the shifted game stays valid.
        let scaled: Vec<Vec<f64>> = base.rewards().iter().map(|r| r.iter().map(|x| 0.25 + 0.5 * x).collect()).collect();
        let mut shifted = scaled.clone();
        shifted[0].iter_mut().for_each(|x| *x += c * 0.5);
        let mk = |r: Vec<Vec<f64>>| MarkovGame::new(s, actions.clone(), base.transition().to_vec(), r, base.structure(), None).unwrap();
        let (g1, g2) = (mk(scaled), mk(shifted));
        let pol = dirichlet_joint(&mut stream(seed, 0, 7), &g1);
        let a = OracleReport::evaluate(&g1, &pol).unwrap();
        let b = OracleReport::evaluate(&g2, &pol).unwrap();
        prop_assert!((b.rho[0] - a.rho[0] - c * 0.5).abs() <= 1e-12);
        for (x, y) in a.values[0].iter().zip(&b.values[0]) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn projection_matches_bisection(v in prop::collection::vec(-2.0f64..2.0, 1..8), frac in 0.0f64..1.0) {
        let lower = frac / v.len() as f64;
        let x = project_simplex(&v, lower).unwrap();
        let y = bisection_projection(&v, lower);
        prop_assert!((x.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for (a, b) in x.iter().zip(&y) {
            prop_assert!(*a >= lower - 1e-15);
            prop_assert!((a - b).abs() <= 1e-9);
        }
        // Idempotent up to rounding.
        let z = project_simplex(&x, lower).unwrap();
        for (a, b) in x.iter().zip(&z) {
            prop_assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn projection_beats_grid_on_two_actions(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        // Whole-vector search over the segment {(p, 1 - p)}.
        let x = project_simplex(&[a, b], 0.0).unwrap();
        let dist = |p: f64| (p - a).powi(2) + (1.0 - p - b).powi(2);
        let best = (0..=10_000).map(|k| k as f64 / 10_000.0).map(dist).fold(f64::INFINITY, f64::min);
        prop_assert!(dist(x[0]) <= best + 1e-12);
    }

    #[test]
    fn generation_is_deterministic_and_valid(seed in any::<u64>(), s in 1usize..6, a in 1usize..4, b in 1usize..4) {
        let spec = GeneratorSpec::new(s, vec![a, b], seed);
        let g1 = generate(&spec).unwrap();
        let g2 = generate(&spec).unwrap();
        prop_assert_eq!(&g1, &g2);
        prop_assert!(g1.validate().is_empty());
        prop_assert!(OracleReport::evaluate(&g1, &JointPolicy::uniform(&g1)).is_ok());
    }

    #[test]
    fn near_tie_second_best(seed in any::<u64>()) {
        let mut spec = GeneratorSpec::new(4, vec![2, 3], seed);
        spec.reward_gap = RewardGapMode::SmallNearTie;
        let game = generate(&spec).unwrap();
        let na = game.num_joint_actions();
        for s in 0..4 {
            let mut row: Vec<f64> = game.rewards()[0][s * na..(s + 1) * na].to_vec();
            row.sort_by(|x, y| y.total_cmp(x));
            prop_assert!((row[0] - row[1] - NEAR_TIE_GAP).abs() <= 1e-15);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn npg_normalizers_are_nonnegative(seed in any::<u64>()) {
        let game = generate(&GeneratorSpec::new(3, vec![2, 2], seed)).unwrap();
        let c = estimate_constants(&game, &ConstantsConfig::default(), &[]).unwrap();
        let beta = RateRule::NpgTheorem4.beta(&c);
        let pol = dirichlet_joint(&mut stream(seed, 0, 7), &game);
        let step = npg_step(&game, &pol, beta).unwrap();
        for z in step.log_normalizers.iter().flatten() {
            prop_assert!(*z >= -1e-12);
        }
    }

    #[test]
    fn centered_gradient_ignores_reward_shift(seed in any::<u64>(), c in 0.0f64..0.3) {
        let base = random_game(seed, 3, &[2, 2]);
        let shifted: Vec<Vec<f64>> = base.rewards().iter().map(|r| r.iter().map(|x| x * 0.7 + c).collect()).collect();
        let scaled: Vec<Vec<f64>> = base.rewards().iter().map(|r| r.iter().map(|x| x * 0.7).collect()).collect();
        let mk = |r| MarkovGame::new(3, vec![2, 2], base.transition().to_vec(), r, base.structure(), None).unwrap();
        let (g1, g2) = (mk(scaled), mk(shifted));
        let pol = JointPolicy::uniform(&g1);
        let params = GradientParams { k: 50, n1: 20, n2: 10 };
        let t1 = simulate(&g1, &pol, params.trajectory_len(), seed, 0, &InitialState::Uniform).unwrap();
        let t2 = simulate(&g2, &pol, params.trajectory_len(), seed, 0, &InitialState::Uniform).unwrap();
        let rho = OracleReport::evaluate(&g1, &pol).unwrap().rho[0];
        let a = estimate_gradient_with_rho(&t1, pol.agent(0), &params, 0, rho).unwrap();
        let b = estimate_gradient_with_rho(&t2, pol.agent(0), &params, 0, rho + c).unwrap();
        prop_assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| (x - y).abs() <= 1e-9));
    }

    #[test]
    fn q_scan_respects_window(seed in any::<u64>(), n1 in 1usize..20, extra in 1usize..200) {
        let game = random_game(seed, 3, &[2]);
        let pol = JointPolicy::uniform(&game);
        let b = n1 + extra;
        let traj = simulate(&game, &pol, b + 5, seed, 0, &InitialState::Uniform).unwrap();
        for s in 0..3 {
            let visits = q_visit_times(&traj, s, b, n1).unwrap();
            for w in visits.windows(2) {
                prop_assert!(w[1] >= w[0] + 2 * n1);
            }
            for &tau in &visits {
                prop_assert_eq!(traj.state(tau), s);
                // The window [tau, tau + N1) never reads past B.
                prop_assert!(tau + n1 <= b);
            }
        }
    }
}
