//! Game constructors: the random cooperative potential game with a controlled
//! least-visited rate and reward gap, the two-state hand-made fixture, and
//! games that are potential games by construction.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::game::{JointPolicy, MarkovGame, StructureTags};
use crate::linalg;
use crate::random::{stream, uniform_in, unit, StreamRng};
use crate::{Error, Result};

const MAX_ATTEMPTS: u64 = 10;
/// Gap between the best and the planted second-best reward.
pub const NEAR_TIE_GAP: f64 = 0.001;

/// Range of the redrawn incoming probabilities of the rarely visited states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LvrMode {
    Small,
    Medium,
    Large,
}

impl LvrMode {
    pub fn upper(self) -> f64 {
        match self {
            LvrMode::Small => 0.01,
            LvrMode::Medium => 0.1,
            LvrMode::Large => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LvrMode::Small => "small",
            LvrMode::Medium => "medium",
            LvrMode::Large => "large",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "small" => Some(LvrMode::Small),
            "medium" => Some(LvrMode::Medium),
            "large" => Some(LvrMode::Large),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewardGapMode {
    /// All entries `Unif[0, 1]`.
    SmallUniform,
    /// `Unif[0, 1]`, then one joint action per state set to `max - 0.001`.
    SmallNearTie,
    /// One joint action per state `Unif[0.4, 1]`, the rest `Unif[0, 0.6]`.
    Large,
}

impl RewardGapMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardGapMode::SmallUniform => "small_uniform",
            RewardGapMode::SmallNearTie => "small_near_tie",
            RewardGapMode::Large => "large",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "small_uniform" => Some(RewardGapMode::SmallUniform),
            "small_near_tie" | "near_tie" => Some(RewardGapMode::SmallNearTie),
            "large" => Some(RewardGapMode::Large),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Structure {
    /// Shared reward, action-dependent transitions.
    Cooperative,
    /// Shared reward, transitions independent of the joint action.
    ActionIndependent,
    /// Action-independent transitions with rewards `phi + u_i(s, a_{-i})`.
    StatePotential,
}

impl Structure {
    pub fn as_str(self) -> &'static str {
        match self {
            Structure::Cooperative => "cooperative",
            Structure::ActionIndependent => "action_independent",
            Structure::StatePotential => "state_potential",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cooperative" => Some(Structure::Cooperative),
            "action_independent" => Some(Structure::ActionIndependent),
            "state_potential" => Some(Structure::StatePotential),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub num_states: usize,
    pub action_counts: Vec<usize>,
    pub lvr: LvrMode,
    pub reward_gap: RewardGapMode,
    /// Fraction of states whose incoming probabilities are redrawn.
    pub rare_fraction: f64,
    pub structure: Structure,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(num_states: usize, action_counts: Vec<usize>, seed: u64) -> Self {
        GeneratorSpec {
            num_states,
            action_counts,
            lvr: LvrMode::Large,
            reward_gap: RewardGapMode::SmallUniform,
            rare_fraction: 0.5,
            structure: Structure::Cooperative,
            seed,
        }
    }

    fn check(&self) -> Result<()> {
        if self.num_states == 0 {
            return Err(Error::InfeasibleSpec("num_states must be positive".into()));
        }
        if self.action_counts.is_empty() || self.action_counts.contains(&0) {
            return Err(Error::InfeasibleSpec(
                "need at least one agent and positive action counts".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.rare_fraction) {
            return Err(Error::InfeasibleSpec(format!(
                "rare_fraction {} outside [0, 1]",
                self.rare_fraction
            )));
        }
        let joint = self
            .action_counts
            .iter()
            .try_fold(1usize, |acc, &a| acc.checked_mul(a));
        let size = joint.and_then(|j| j.checked_mul(self.num_states * self.num_states));
        if size.is_none() || size.is_some_and(|s| s > (1 << 28)) {
            return Err(Error::InfeasibleSpec("transition tensor too large".into()));
        }
        Ok(())
    }

    fn joint_actions(&self) -> usize {
        self.action_counts.iter().product()
    }
}

/// Which sufficient potential-game condition to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PotentialCondition {
    /// Action-independent transitions, `r_i = phi(s, a) + u_i(s, a_{-i})`.
    ActionIndependent,
    /// Fully cooperative, `u_i = 0`.
    Cooperative,
}

/// `floor(S * fraction)` distinct states, chosen by a partial shuffle.
fn choose_rare_states(rng: &mut StreamRng, n: usize, fraction: f64) -> Vec<usize> {
    let count = libm::floor(n as f64 * fraction) as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    for k in 0..count.min(n) {
        let j = rng.random_range(k..n);
        idx.swap(k, j);
    }
    idx.truncate(count.min(n));
    idx
}

/// Transition tensor: `Unif[0, 1]` entries, the columns of the rare states
/// redrawn from `Unif[0, lvr]`, then each row normalized. With
/// `action_independent` one row per state is drawn and shared by all joint
/// actions.
fn draw_transitions(
    rng: &mut StreamRng,
    num_states: usize,
    joint: usize,
    lvr: LvrMode,
    fraction: f64,
    action_independent: bool,
) -> Vec<f64> {
    let rows = if action_independent {
        num_states
    } else {
        num_states * joint
    };
    let mut p: Vec<f64> = (0..rows * num_states).map(|_| unit(rng)).collect();
    let rare = choose_rare_states(rng, num_states, fraction);
    for r in 0..rows {
        for &target in &rare {
            p[r * num_states + target] = uniform_in(rng, 0.0, lvr.upper());
        }
    }
    for row in p.chunks_mut(num_states) {
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|x| *x /= sum);
        } else {
            row.iter_mut().for_each(|x| *x = 1.0 / num_states as f64);
        }
    }
    if action_independent {
        let mut full = Vec::with_capacity(num_states * joint * num_states);
        for s in 0..num_states {
            for _ in 0..joint {
                full.extend_from_slice(&p[s * num_states..(s + 1) * num_states]);
            }
        }
        full
    } else {
        p
    }
}

/// Shared reward tensor per the reward-gap mode.
fn draw_rewards(
    rng: &mut StreamRng,
    num_states: usize,
    joint: usize,
    mode: RewardGapMode,
) -> Vec<f64> {
    let mut r = vec![0.0; num_states * joint];
    for s in 0..num_states {
        let row = &mut r[s * joint..(s + 1) * joint];
        match mode {
            RewardGapMode::SmallUniform => row.iter_mut().for_each(|x| *x = unit(rng)),
            RewardGapMode::Large => {
                let star = rng.random_range(0..joint);
                for (a, x) in row.iter_mut().enumerate() {
                    *x = if a == star {
                        uniform_in(rng, 0.4, 1.0)
                    } else {
                        uniform_in(rng, 0.0, 0.6)
                    };
                }
            }
            RewardGapMode::SmallNearTie => {
                loop {
                    row.iter_mut().for_each(|x| *x = unit(rng));
                    if joint == 1 {
                        break;
                    }
                    let (star, max) = row.iter().copied().enumerate().fold(
                        (0, f64::NEG_INFINITY),
                        |b, (a, x)| if x > b.1 { (a, x) } else { b },
                    );
                    let second_value = max - NEAR_TIE_GAP;
                    if second_value < 0.0 {
                        continue;
                    }
                    let mut second = rng.random_range(0..joint - 1);
                    if second >= star {
                        second += 1;
                    }
                    for (a, x) in row.iter_mut().enumerate() {
                        if a == second {
                            *x = second_value;
                        } else if a != star && *x > second_value {
                            *x = uniform_in(rng, 0.0, second_value);
                        }
                    }
                    break;
                }
            }
        }
    }
    r
}

fn uniform_chain_is_primitive(game: &MarkovGame) -> bool {
    crate::game::induced_state_chain(game, &JointPolicy::uniform(game))
        .map(|p| linalg::is_primitive(&p))
        .unwrap_or(false)
}

/// Retries `build` with fresh streams until the uniform-policy chain is
/// irreducible and aperiodic.
fn with_ergodic_retry(
    seed: u64,
    mut build: impl FnMut(&mut StreamRng) -> Result<MarkovGame>,
) -> Result<MarkovGame> {
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = stream(seed, attempt, 0);
        let game = build(&mut rng)?;
        if uniform_chain_is_primitive(&game) {
            return Ok(game);
        }
    }
    Err(Error::Generation(format!(
        "no ergodic draw in {MAX_ATTEMPTS} attempts"
    )))
}

/// Random cooperative potential game following the spec's recipe.
pub fn generate(spec: &GeneratorSpec) -> Result<MarkovGame> {
    spec.check()?;
    match spec.structure {
        Structure::StatePotential => {
            return make_potential_game(spec, PotentialCondition::ActionIndependent)
        }
        Structure::Cooperative | Structure::ActionIndependent => {}
    }
    let independent = spec.structure == Structure::ActionIndependent;
    let tags = StructureTags {
        cooperative: true,
        action_independent_transitions: independent,
        state_potential: false,
    };
    let (s, joint, n) = (
        spec.num_states,
        spec.joint_actions(),
        spec.action_counts.len(),
    );
    with_ergodic_retry(spec.seed, |rng| {
        let p = draw_transitions(rng, s, joint, spec.lvr, spec.rare_fraction, independent);
        let r = draw_rewards(rng, s, joint, spec.reward_gap);
        MarkovGame::new(s, spec.action_counts.clone(), p, vec![r; n], tags, None)
    })
}

/// Game that satisfies a sufficient potential-game condition by construction.
///
/// For [`PotentialCondition::ActionIndependent`], `phi` and every `u_i` are
/// drawn `Unif[0, 1]` and the rewards are `r_i = (phi + u_i) / 2`; the stored
/// potential is `phi / 2`. A single agent has no opponents, so `u_1` only
/// depends on the state and is folded into the stored potential.
pub fn make_potential_game(
    spec: &GeneratorSpec,
    condition: PotentialCondition,
) -> Result<MarkovGame> {
    spec.check()?;
    let (s, joint, n) = (
        spec.num_states,
        spec.joint_actions(),
        spec.action_counts.len(),
    );
    match condition {
        PotentialCondition::Cooperative => with_ergodic_retry(spec.seed, |rng| {
            let p = draw_transitions(rng, s, joint, spec.lvr, spec.rare_fraction, false);
            let phi = draw_rewards(rng, s, joint, spec.reward_gap);
            let tags = StructureTags {
                cooperative: true,
                ..StructureTags::GENERAL
            };
            MarkovGame::new(s, spec.action_counts.clone(), p, vec![phi; n], tags, None)
        }),
        PotentialCondition::ActionIndependent => with_ergodic_retry(spec.seed, |rng| {
            let p = draw_transitions(rng, s, joint, spec.lvr, spec.rare_fraction, true);
            let phi: Vec<f64> = (0..s * joint).map(|_| unit(rng)).collect();
            let probe = MarkovGame::from_parts(
                s,
                spec.action_counts.clone(),
                vec![0.0; s * joint * s],
                vec![vec![0.0; s * joint]; n],
                StructureTags::GENERAL,
                None,
            )?;
            let mut rewards = Vec::with_capacity(n);
            for i in 0..n {
                // u_i indexed by (s, joint action with a_i zeroed).
                let u: Vec<f64> = (0..s * joint).map(|_| unit(rng)).collect();
                let r: Vec<f64> = (0..s * joint)
                    .map(|k| {
                        let (st, j) = (k / joint, k % joint);
                        let mut a = probe.decode(j).to_vec();
                        a[i] = 0;
                        (phi[k] + u[st * joint + probe.encode(&a)]) / 2.0
                    })
                    .collect();
                rewards.push(r);
            }
            let stored = if n == 1 {
                rewards[0].clone()
            } else {
                phi.iter().map(|x| x / 2.0).collect()
            };
            let tags = StructureTags {
                cooperative: false,
                action_independent_transitions: true,
                state_potential: true,
            };
            MarkovGame::new(
                s,
                spec.action_counts.clone(),
                p,
                rewards,
                tags,
                Some(stored),
            )
        }),
    }
}

/// The two-state, two-agent cooperative game with action-independent
/// transitions `[[0.9, 0.1], [0.3, 0.7]]`. In each state's reward matrix,
/// columns are agent 1's actions and rows are agent 2's.
pub fn manual_fixture() -> MarkovGame {
    let p_state = [[0.9, 0.1], [0.3, 0.7]];
    let r_state = [[[1.0, 0.2], [0.8, 0.2]], [[0.2, 1.0], [0.1, 0.6]]];
    let mut transition = Vec::with_capacity(16);
    let mut reward = Vec::with_capacity(8);
    #[allow(clippy::needless_range_loop)]
    for s in 0..2 {
        for a1 in 0..2 {
            for a2 in 0..2 {
                transition.extend_from_slice(&p_state[s]);
                reward.push(r_state[s][a2][a1]);
            }
        }
    }
    let tags = StructureTags {
        cooperative: true,
        action_independent_transitions: true,
        state_potential: false,
    };
    MarkovGame::new(
        2,
        vec![2, 2],
        transition,
        vec![reward.clone(), reward],
        tags,
        None,
    )
    .expect("fixture is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manual_fixture_layout() {
        let g = manual_fixture();
        assert_eq!(g.reward(0, 0, g.encode(&[0, 1])), 0.8);
        assert_eq!(g.reward(1, 1, g.encode(&[1, 0])), 1.0);
        assert_eq!(g.transition_row(1, 3), &[0.3, 0.7]);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = GeneratorSpec::new(6, vec![2, 3], 11);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = GeneratorSpec::new(6, vec![2, 3], 12);
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn paper_sized_shapes() {
        let spec = GeneratorSpec::new(100, vec![4, 3, 2], 0);
        let g = generate(&spec).unwrap();
        assert_eq!(g.num_states(), 100);
        assert_eq!(g.action_counts(), &[4, 3, 2]);
        assert_eq!(g.num_joint_actions(), 24);
        assert!(g.validate().is_empty());
    }

    #[test]
    fn near_tie_plants_second_best() {
        let mut spec = GeneratorSpec::new(8, vec![3, 2], 4);
        spec.reward_gap = RewardGapMode::SmallNearTie;
        let g = generate(&spec).unwrap();
        for s in 0..8 {
            let mut row: Vec<f64> = (0..6).map(|j| g.reward(0, s, j)).collect();
            row.sort_by(|a, b| b.total_cmp(a));
            assert!((row[0] - row[1] - NEAR_TIE_GAP).abs() <= 1e-15);
        }
    }

    #[test]
    fn large_gap_mode_ranges() {
        let mut spec = GeneratorSpec::new(5, vec![2, 2], 8);
        spec.reward_gap = RewardGapMode::Large;
        let g = generate(&spec).unwrap();
        for s in 0..5 {
            let high = (0..4).filter(|&j| g.reward(0, s, j) > 0.6).count();
            assert!(high <= 1);
        }
    }

    #[test]
    fn infeasible_specs() {
        let mut spec = GeneratorSpec::new(3, vec![2], 0);
        spec.rare_fraction = 1.5;
        assert!(matches!(generate(&spec), Err(Error::InfeasibleSpec(_))));
        assert!(matches!(
            generate(&GeneratorSpec::new(0, vec![2], 0)),
            Err(Error::InfeasibleSpec(_))
        ));
        assert!(matches!(
            generate(&GeneratorSpec::new(3, vec![], 0)),
            Err(Error::InfeasibleSpec(_))
        ));
    }

    #[test]
    fn cooperative_condition_matches_cooperative_game() {
        let spec = GeneratorSpec::new(4, vec![2, 2], 3);
        let coop = make_potential_game(&spec, PotentialCondition::Cooperative).unwrap();
        let rebuilt = MarkovGame::new(
            4,
            vec![2, 2],
            coop.transition().to_vec(),
            vec![coop.rewards()[0].clone(); 2],
            StructureTags {
                cooperative: true,
                ..StructureTags::GENERAL
            },
            None,
        )
        .unwrap();
        assert_eq!(coop, rebuilt);
    }

    #[test]
    fn condition_one_is_valid() {
        let spec = GeneratorSpec::new(4, vec![2, 3], 5);
        let g = make_potential_game(&spec, PotentialCondition::ActionIndependent).unwrap();
        assert!(g.validate().is_empty());
        assert!(g.structure().state_potential);
    }
}
