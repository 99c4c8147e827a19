//! Seeded random streams and the random objects drawn from them.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed, with the
//! 64-bit stream id `iteration * 2^16 + role`. Role 0 is the environment and
//! role `1 + i` is agent `i`.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::game::{JointPolicy, MarkovGame, Policy};
use crate::table::Table;

pub type StreamRng = ChaCha8Rng;

pub const WORLD_ROLE: u64 = 0;

pub fn agent_role(agent: usize) -> u64 {
    1 + agent as u64
}

pub fn stream(master_seed: u64, iteration: u64, role: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((iteration << 16) + role);
    rng
}

/// Uniform draw on `[0, 1)`.
pub fn unit(rng: &mut impl Rng) -> f64 {
    rng.random::<f64>()
}

pub fn uniform_in(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(rng)
}

/// Samples an index from a probability vector by inversion.
pub fn sample_index(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u = unit(rng);
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // Rounding left `u` above the cumulative sum: take the last positive entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Dirichlet(1, ..., 1) sample via normalized exponentials.
pub fn dirichlet_row(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| -libm::log(1.0 - unit(rng))).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    } else {
        w.iter_mut().for_each(|x| *x = 1.0 / n as f64);
    }
    w
}

pub fn dirichlet_policy(rng: &mut impl Rng, num_states: usize, num_actions: usize) -> Policy {
    let mut t = Table::zeros(num_states, num_actions);
    for s in 0..num_states {
        let row = dirichlet_row(rng, num_actions);
        t.row_mut(s).copy_from_slice(&row);
    }
    Policy::from_table_unchecked(t)
}

pub fn dirichlet_joint(rng: &mut impl Rng, game: &MarkovGame) -> JointPolicy {
    JointPolicy::new(
        game.action_counts()
            .iter()
            .map(|&a| dirichlet_policy(rng, game.num_states(), a))
            .collect(),
    )
}

/// Random direction in the tangent space of the policy simplex product:
/// every row sums to zero and the whole table has unit Euclidean norm.
/// Returns the zero table when `num_actions == 1`.
pub fn tangent_direction(rng: &mut impl Rng, num_states: usize, num_actions: usize) -> Table {
    let mut t = Table::from_fn(num_states, num_actions, |_, _| unit(rng) - 0.5);
    for s in 0..num_states {
        let row = t.row_mut(s);
        let mean = row.iter().sum::<f64>() / num_actions as f64;
        row.iter_mut().for_each(|x| *x -= mean);
    }
    let norm = t.norm_l2();
    if norm > 0.0 {
        t = t.map(|x| x / norm);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream(7, 3, 1).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| stream(7, 3, 1).random()).collect();
        assert_eq!(a, b);
        let x: u64 = stream(7, 3, 1).random();
        let y: u64 = stream(7, 3, 2).random();
        let z: u64 = stream(7, 4, 1).random();
        assert!(x != y && x != z);
    }

    #[test]
    fn dirichlet_rows_are_distributions() {
        let mut rng = stream(1, 0, 0);
        for n in 1..6 {
            let r = dirichlet_row(&mut rng, n);
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(r.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn tangent_rows_sum_to_zero() {
        let mut rng = stream(2, 0, 0);
        let t = tangent_direction(&mut rng, 3, 4);
        for s in 0..3 {
            assert!(t.row(s).iter().sum::<f64>().abs() < 1e-12);
        }
        assert!((t.norm_l2() - 1.0).abs() < 1e-12);
        assert_eq!(tangent_direction(&mut rng, 2, 1).max_abs(), 0.0);
    }

    #[test]
    fn sample_index_respects_support() {
        let mut rng = stream(3, 0, 0);
        for _ in 0..1000 {
            assert_eq!(sample_index(&mut rng, &[0.0, 1.0, 0.0]), 1);
        }
    }
}
