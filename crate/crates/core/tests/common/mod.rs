#![allow(dead_code)]

use ampg_core::game::induced_state_chain;
use ampg_core::random::{stream, uniform_in};
use ampg_core::{JointPolicy, MarkovGame, StructureTags};
use rand::Rng;

/// Random game with strictly positive transitions, so every policy is ergodic.
pub fn random_game(seed: u64, num_states: usize, action_counts: &[usize]) -> MarkovGame {
    let mut rng = stream(seed, 0, 99);
    let na: usize = action_counts.iter().product();
    let mut p = Vec::with_capacity(num_states * na * num_states);
    for _ in 0..num_states * na {
        let row: Vec<f64> = (0..num_states)
            .map(|_| uniform_in(&mut rng, 0.05, 1.0))
            .collect();
        let z: f64 = row.iter().sum();
        p.extend(row.iter().map(|x| x / z));
    }
    let rewards = action_counts
        .iter()
        .map(|_| (0..num_states * na).map(|_| rng.random::<f64>()).collect())
        .collect();
    MarkovGame::new(
        num_states,
        action_counts.to_vec(),
        p,
        rewards,
        StructureTags::GENERAL,
        None,
    )
    .unwrap()
}

/// `(S, action counts)` with `S <= 5`, `N <= 3`, `A_i <= 3`.
pub fn small_shape(seed: u64) -> (usize, Vec<usize>) {
    let mut rng = stream(seed, 1, 99);
    let s = rng.random_range(1..=5);
    let n = rng.random_range(1..=3);
    (s, (0..n).map(|_| rng.random_range(1..=3)).collect())
}

/// `nu` by repeated multiplication from the uniform vector.
pub fn power_iteration(game: &MarkovGame, policy: &JointPolicy, steps: usize) -> Vec<f64> {
    let p = induced_state_chain(game, policy).unwrap();
    let s = game.num_states();
    let mut v = vec![1.0 / s as f64; s];
    for _ in 0..steps {
        let mut next = vec![0.0; s];
        for (i, vi) in v.iter().enumerate() {
            for (j, nj) in next.iter_mut().enumerate() {
                *nj += vi * p[(i, j)];
            }
        }
        v = next;
    }
    v
}
