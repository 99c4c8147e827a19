#![allow(clippy::needless_range_loop)]

//! Exact oracle quantities cross-checked against independent brute-force
//! computations.

mod common;

use ampg_core::constants::deterministic_policy;
use ampg_core::game::{marginal_reward, marginal_transition};
use ampg_core::generators::{
    generate, make_potential_game, manual_fixture, GeneratorSpec, LvrMode, PotentialCondition,
    Structure,
};
use ampg_core::oracle::{self, stationary_distribution, OracleReport, PolicyChain};
use ampg_core::random::{dirichlet_joint, dirichlet_policy, stream};
use ampg_core::{JointPolicy, Policy};
use common::{power_iteration, random_game};
use rand::Rng;

fn joint_weight(
    game: &ampg_core::MarkovGame,
    policy: &JointPolicy,
    s: usize,
    joint: usize,
    skip: usize,
) -> f64 {
    game.decode(joint)
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != skip)
        .map(|(k, &a)| policy.agent(k).prob(s, a))
        .product()
}

#[test]
fn stationary_distribution_matches_power_iteration() {
    for seed in 0..5 {
        let game = random_game(seed, 4, &[2, 2]);
        let pol = dirichlet_joint(&mut stream(seed, 0, 7), &game);
        let chain = PolicyChain::new(&game, &pol).unwrap();
        let slow = power_iteration(&game, &pol, 1_000_000);
        for (a, b) in chain.nu.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9, "{:?} vs {slow:?}", chain.nu);
        }
    }
}

#[test]
fn doubly_stochastic_chain_is_uniform() {
    use ampg_core::nalgebra::DMatrix;
    let nu = stationary_distribution(&DMatrix::from_element(2, 2, 0.5)).unwrap();
    assert_eq!(nu, vec![0.5, 0.5]);
}

#[test]
fn marginal_transition_matches_explicit_sum() {
    let game = random_game(3, 3, &[2, 3, 2]);
    let pol = dirichlet_joint(&mut stream(3, 0, 7), &game);
    for j in 0..3 {
        let pbar = marginal_transition(&game, &pol, j).unwrap();
        let rbar = marginal_reward(&game, &pol, j).unwrap();
        for s in 0..3 {
            for aj in 0..game.num_actions(j) {
                let mut row = [0.0; 3];
                let mut reward = [0.0; 3];
                for joint in 0..game.num_joint_actions() {
                    if game.decode(joint)[j] != aj {
                        continue;
                    }
                    let w = joint_weight(&game, &pol, s, joint, j);
                    for (t, x) in row.iter_mut().enumerate() {
                        *x += w * game.transition_row(s, joint)[t];
                    }
                    for (i, r) in reward.iter_mut().enumerate() {
                        *r += w * game.reward(i, s, joint);
                    }
                }
                for t in 0..3 {
                    assert!((pbar[s].row(aj)[t] - row[t]).abs() < 1e-14);
                }
                for i in 0..3 {
                    assert!((rbar.by_action[i][(s, aj)] - reward[i]).abs() < 1e-14);
                }
            }
        }
    }
}

#[test]
fn best_response_matches_deterministic_enumeration() {
    for seed in 0..5 {
        let game = random_game(seed, 3, &[2, 2]);
        let pol = dirichlet_joint(&mut stream(seed, 0, 7), &game);
        for agent in 0..2 {
            let br = oracle::best_response(&game, &pol, agent).unwrap();
            let mut best = f64::NEG_INFINITY;
            for k in 0..8 {
                let acts = [k & 1, (k >> 1) & 1, (k >> 2) & 1];
                let cand = pol.with_agent(agent, Policy::deterministic(2, &acts));
                best = best.max(oracle::average_reward(&game, &cand, agent).unwrap());
            }
            assert!((br.gain - best).abs() < 1e-9, "{} vs {best}", br.gain);
        }
    }
}

#[test]
fn action_irrelevant_agent_has_zero_gap() {
    // Agent 1 has a single action, so its reward cannot depend on it.
    let game = random_game(11, 3, &[2, 1]);
    let pol = dirichlet_joint(&mut stream(11, 0, 7), &game);
    let br = oracle::best_response(&game, &pol, 1).unwrap();
    let rho = oracle::average_reward(&game, &pol, 1).unwrap();
    assert!((br.gain - rho).abs() < 1e-12);
}

#[test]
fn best_response_is_stable() {
    let game = random_game(5, 3, &[3]);
    let br = oracle::best_response(&game, &JointPolicy::uniform(&game), 0).unwrap();
    let at_opt = JointPolicy::new(vec![br.policy]);
    let gap = oracle::nash_gap(&game, &at_opt).unwrap();
    assert!(gap.gap <= 1e-10);
}

#[test]
fn marginal_q_averages_to_value() {
    for seed in 0..5 {
        let game = random_game(seed, 3, &[2, 3]);
        let pol = dirichlet_joint(&mut stream(seed, 0, 7), &game);
        let rep = OracleReport::evaluate(&game, &pol).unwrap();
        for j in 0..2 {
            for i in 0..2 {
                let qbar = rep.marginal(j, i);
                for s in 0..3 {
                    let m: f64 = qbar
                        .row(s)
                        .iter()
                        .enumerate()
                        .map(|(a, q)| pol.agent(j).prob(s, a) * q)
                        .sum();
                    assert!((m - rep.values[i][s]).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn single_agent_marginal_q_is_q() {
    let game = random_game(2, 3, &[3]);
    let pol = dirichlet_joint(&mut stream(2, 0, 7), &game);
    let rep = OracleReport::evaluate(&game, &pol).unwrap();
    assert_eq!(rep.marginal(0, 0).as_slice(), rep.q[0].as_slice());
}

#[test]
fn simulated_average_matches_fixture_gain() {
    use ampg_core::sampling::{simulate, InitialState};
    let game = manual_fixture();
    let pol = JointPolicy::uniform(&game);
    let n = 10_000_000;
    let traj = simulate(&game, &pol, n, 1, 0, &InitialState::Uniform).unwrap();
    let mean = (0..n).map(|t| traj.reward(t, 0)).sum::<f64>() / n as f64;
    // Standard error is about 1e-4 for this chain.
    assert!((mean - 0.53125).abs() < 1e-3, "{mean}");
}

#[test]
fn condition_one_potential_tracks_unilateral_deviations() {
    let spec = GeneratorSpec::new(4, vec![2, 3], 17);
    let game = make_potential_game(&spec, PotentialCondition::ActionIndependent).unwrap();
    let mut rng = stream(17, 0, 9);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let pol = dirichlet_joint(&mut rng, &game);
        let i = rng.random_range(0..2);
        let dev = pol.with_agent(i, dirichlet_policy(&mut rng, 4, game.num_actions(i)));
        let dphi = oracle::potential_value(&game, &pol).unwrap()
            - oracle::potential_value(&game, &dev).unwrap();
        let drho = oracle::average_reward(&game, &pol, i).unwrap()
            - oracle::average_reward(&game, &dev, i).unwrap();
        worst = worst.max((dphi - drho).abs());
    }
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn single_agent_potential_is_the_gain() {
    let spec = GeneratorSpec::new(4, vec![3], 4);
    let game = make_potential_game(&spec, PotentialCondition::ActionIndependent).unwrap();
    let mut rng = stream(4, 0, 9);
    for _ in 0..20 {
        let pol = dirichlet_joint(&mut rng, &game);
        let phi = oracle::potential_value(&game, &pol).unwrap();
        let rho = oracle::average_reward(&game, &pol, 0).unwrap();
        assert!((phi - rho).abs() < 1e-12);
    }
}

#[test]
fn cooperative_condition_is_a_cooperative_game() {
    let mut spec = GeneratorSpec::new(5, vec![2, 2], 8);
    let a = make_potential_game(&spec, PotentialCondition::Cooperative).unwrap();
    spec.structure = Structure::Cooperative;
    let b = generate(&spec).unwrap();
    assert_eq!(a.rewards(), b.rewards());
    assert_eq!(a.transition(), b.transition());
}

#[test]
fn small_lvr_lowers_least_visited_state() {
    let mut wins = 0;
    for seed in 0..10 {
        let min_nu = |lvr| {
            let mut spec = GeneratorSpec::new(10, vec![2, 2], seed);
            spec.lvr = lvr;
            let game = generate(&spec).unwrap();
            let chain = PolicyChain::new(&game, &JointPolicy::uniform(&game)).unwrap();
            chain.nu.iter().copied().fold(f64::INFINITY, f64::min)
        };
        if min_nu(LvrMode::Small) < min_nu(LvrMode::Large) {
            wins += 1;
        }
    }
    assert!(wins >= 9, "{wins}");
}

#[test]
fn enumeration_reaches_every_best_response() {
    // Every deterministic joint policy of the fixture has gap >= 0 and the
    // best of them is a Nash equilibrium.
    let game = manual_fixture();
    let mut best = (f64::INFINITY, 0);
    for k in 0..16 {
        let g = oracle::nash_gap(&game, &deterministic_policy(&game, k)).unwrap();
        assert!(g.gap >= 0.0);
        if g.gap < best.0 {
            best = (g.gap, k);
        }
    }
    assert!(best.0 <= 1e-10);
}
