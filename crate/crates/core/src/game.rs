//! The Markov game model, joint policies, and the objects a joint policy
//! induces on a game (state chain, state-action chain, marginalized rewards
//! and transitions).
//!
//! Tensor layout is `(state, a_1, ..., a_N, next_state)` flattened row-major;
//! joint actions are enumerated lexicographically in `(a_1, ..., a_N)` so
//! `a_N` varies fastest.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::table::Table;
use crate::{Error, Result, PROB_TOL};

/// Which sufficient potential-game condition a game satisfies by
/// construction. All flags off means a general game.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct StructureTags {
    /// All agents share one reward tensor.
    pub cooperative: bool,
    /// `P(s'|s, a)` does not depend on the joint action.
    pub action_independent_transitions: bool,
    /// Rewards decompose as `phi(s, a) + u_i(s, a_{-i})` with `phi` stored.
    pub state_potential: bool,
}

impl StructureTags {
    pub const GENERAL: StructureTags = StructureTags {
        cooperative: false,
        action_independent_transitions: false,
        state_potential: false,
    };

    pub fn is_general(&self) -> bool {
        *self == Self::GENERAL
    }
}

/// One invariant violation found by [`MarkovGame::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeTransition {
        state: usize,
        joint_action: Vec<usize>,
        next_state: usize,
        value: f64,
    },
    /// `deficit = 1 - sum_s' P(s'|s, a)`.
    TransitionRowSum {
        state: usize,
        joint_action: Vec<usize>,
        deficit: f64,
    },
    /// `excess` is the distance of the reward outside `[0, 1]`.
    RewardOutOfRange {
        agent: usize,
        state: usize,
        joint_action: Vec<usize>,
        excess: f64,
    },
    CooperativeMismatch {
        agent: usize,
        state: usize,
        joint_action: Vec<usize>,
        difference: f64,
    },
    ActionDependentTransition {
        state: usize,
        joint_action: Vec<usize>,
        next_state: usize,
        difference: f64,
    },
    MissingPotential,
    /// `r_i - phi` depends on agent `i`'s own action.
    PotentialMismatch {
        agent: usize,
        state: usize,
        joint_action: Vec<usize>,
        difference: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Tabular average-reward Markov game `(S, {A_i}, P, {r_i})`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovGame {
    num_states: usize,
    action_counts: Vec<usize>,
    num_joint: usize,
    strides: Vec<usize>,
    /// Per joint action, the per-agent actions (`num_joint x N`).
    decoded: Vec<usize>,
    transition: Vec<f64>,
    rewards: Vec<Vec<f64>>,
    structure: StructureTags,
    potential: Option<Vec<f64>>,
}

impl MarkovGame {
    /// Builds a game after checking tensor shapes only. Use
    /// [`MarkovGame::new`] to also enforce the probabilistic invariants.
    pub fn from_parts(
        num_states: usize,
        action_counts: Vec<usize>,
        transition: Vec<f64>,
        rewards: Vec<Vec<f64>>,
        structure: StructureTags,
        potential: Option<Vec<f64>>,
    ) -> Result<Self> {
        if num_states == 0 {
            return Err(Error::ShapeMismatch("num_states must be positive".into()));
        }
        if action_counts.is_empty() || action_counts.contains(&0) {
            return Err(Error::ShapeMismatch(
                "need at least one agent and positive action counts".into(),
            ));
        }
        let n = action_counts.len();
        let num_joint: usize = action_counts.iter().product();
        let mut strides = vec![1usize; n];
        for k in (0..n.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * action_counts[k + 1];
        }
        let mut decoded = Vec::with_capacity(num_joint * n);
        for j in 0..num_joint {
            for k in 0..n {
                decoded.push((j / strides[k]) % action_counts[k]);
            }
        }
        let expect_p = num_states * num_joint * num_states;
        if transition.len() != expect_p {
            return Err(Error::ShapeMismatch(format!(
                "transition has {} entries, expected {expect_p}",
                transition.len()
            )));
        }
        if rewards.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} reward tensors for {n} agents",
                rewards.len()
            )));
        }
        let expect_r = num_states * num_joint;
        for (i, r) in rewards.iter().enumerate() {
            if r.len() != expect_r {
                return Err(Error::ShapeMismatch(format!(
                    "reward tensor of agent {i} has {} entries, expected {expect_r}",
                    r.len()
                )));
            }
        }
        if let Some(phi) = &potential {
            if phi.len() != expect_r {
                return Err(Error::ShapeMismatch(format!(
                    "potential has {} entries, expected {expect_r}",
                    phi.len()
                )));
            }
        }
        Ok(MarkovGame {
            num_states,
            action_counts,
            num_joint,
            strides,
            decoded,
            transition,
            rewards,
            structure,
            potential,
        })
    }

    /// Builds a game and rejects it unless every invariant holds.
    pub fn new(
        num_states: usize,
        action_counts: Vec<usize>,
        transition: Vec<f64>,
        rewards: Vec<Vec<f64>>,
        structure: StructureTags,
        potential: Option<Vec<f64>>,
    ) -> Result<Self> {
        let game = Self::from_parts(
            num_states,
            action_counts,
            transition,
            rewards,
            structure,
            potential,
        )?;
        let report = game.validate();
        if report.is_empty() {
            Ok(game)
        } else {
            Err(Error::InvalidGame(report))
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_agents(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn num_actions(&self, agent: usize) -> usize {
        self.action_counts[agent]
    }

    pub fn max_actions(&self) -> usize {
        self.action_counts.iter().copied().max().unwrap_or(0)
    }

    pub fn num_joint_actions(&self) -> usize {
        self.num_joint
    }

    pub fn structure(&self) -> StructureTags {
        self.structure
    }

    pub fn potential(&self) -> Option<&[f64]> {
        self.potential.as_deref()
    }

    /// Flattened `P(s'|s, a)` tensor.
    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn rewards(&self) -> &[Vec<f64>] {
        &self.rewards
    }

    /// `P(.|s, a)` as a slice of length `S`.
    pub fn transition_row(&self, state: usize, joint: usize) -> &[f64] {
        let base = (state * self.num_joint + joint) * self.num_states;
        &self.transition[base..base + self.num_states]
    }

    pub fn reward(&self, agent: usize, state: usize, joint: usize) -> f64 {
        self.rewards[agent][state * self.num_joint + joint]
    }

    /// Per-agent actions of a joint-action index.
    pub fn decode(&self, joint: usize) -> &[usize] {
        let n = self.num_agents();
        &self.decoded[joint * n..(joint + 1) * n]
    }

    pub fn encode(&self, actions: &[usize]) -> usize {
        actions.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    pub fn check_agent(&self, agent: usize) -> Result<()> {
        if agent < self.num_agents() {
            Ok(())
        } else {
            Err(Error::AgentOutOfRange {
                index: agent,
                agents: self.num_agents(),
            })
        }
    }

    pub fn check_state(&self, state: usize) -> Result<()> {
        if state < self.num_states {
            Ok(())
        } else {
            Err(Error::StateOutOfRange {
                index: state,
                states: self.num_states,
            })
        }
    }

    /// Lists every violated invariant; empty iff the game is valid.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let s_count = self.num_states;
        for s in 0..s_count {
            for j in 0..self.num_joint {
                let row = self.transition_row(s, j);
                let mut sum = 0.0;
                for (next, &p) in row.iter().enumerate() {
                    if p < 0.0 || !p.is_finite() {
                        violations.push(Violation::NegativeTransition {
                            state: s,
                            joint_action: self.decode(j).to_vec(),
                            next_state: next,
                            value: p,
                        });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > PROB_TOL || !sum.is_finite() {
                    violations.push(Violation::TransitionRowSum {
                        state: s,
                        joint_action: self.decode(j).to_vec(),
                        deficit: 1.0 - sum,
                    });
                }
            }
        }
        for (i, r) in self.rewards.iter().enumerate() {
            for (k, &v) in r.iter().enumerate() {
                let excess = if v > 1.0 {
                    v - 1.0
                } else if v < 0.0 {
                    -v
                } else if v.is_nan() {
                    f64::NAN
                } else {
                    continue;
                };
                violations.push(Violation::RewardOutOfRange {
                    agent: i,
                    state: k / self.num_joint,
                    joint_action: self.decode(k % self.num_joint).to_vec(),
                    excess,
                });
            }
        }
        if self.structure.cooperative {
            for i in 1..self.num_agents() {
                for (k, (&a, &b)) in self.rewards[0].iter().zip(&self.rewards[i]).enumerate() {
                    if a.to_bits() != b.to_bits() {
                        violations.push(Violation::CooperativeMismatch {
                            agent: i,
                            state: k / self.num_joint,
                            joint_action: self.decode(k % self.num_joint).to_vec(),
                            difference: b - a,
                        });
                    }
                }
            }
        }
        if self.structure.action_independent_transitions {
            for s in 0..s_count {
                let first = self.transition_row(s, 0);
                for j in 1..self.num_joint {
                    for (next, (&a, &b)) in first.iter().zip(self.transition_row(s, j)).enumerate()
                    {
                        if a.to_bits() != b.to_bits() {
                            violations.push(Violation::ActionDependentTransition {
                                state: s,
                                joint_action: self.decode(j).to_vec(),
                                next_state: next,
                                difference: b - a,
                            });
                        }
                    }
                }
            }
        }
        if self.structure.state_potential {
            match &self.potential {
                None => violations.push(Violation::MissingPotential),
                Some(phi) => self.check_potential_split(phi, &mut violations),
            }
        }
        ValidationReport { violations }
    }

    /// `r_i(s, a) - phi(s, a)` must not depend on `a_i`.
    fn check_potential_split(&self, phi: &[f64], out: &mut Vec<Violation>) {
        for i in 0..self.num_agents() {
            for s in 0..self.num_states {
                for j in 0..self.num_joint {
                    let a = self.decode(j);
                    if a[i] == 0 {
                        continue;
                    }
                    let base = j - a[i] * self.strides[i];
                    let u = self.rewards[i][s * self.num_joint + j] - phi[s * self.num_joint + j];
                    let u0 =
                        self.rewards[i][s * self.num_joint + base] - phi[s * self.num_joint + base];
                    if (u - u0).abs() > 1e-12 {
                        out.push(Violation::PotentialMismatch {
                            agent: i,
                            state: s,
                            joint_action: a.to_vec(),
                            difference: u - u0,
                        });
                    }
                }
            }
        }
    }

    /// Rescales every transition row to sum to one. Never applied implicitly.
    pub fn renormalize_rows(&mut self) {
        let s_count = self.num_states;
        for row in self.transition.chunks_mut(s_count) {
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter_mut().for_each(|p| *p /= sum);
            }
        }
    }
}

/// Stochastic policy of one agent: an `S x A_i` row-stochastic table.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy(Table);

impl Policy {
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Policy(Table::filled(
            num_states,
            num_actions,
            1.0 / num_actions as f64,
        ))
    }

    /// Point-mass policy playing `actions[s]` in state `s`.
    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Self {
        Policy(Table::from_fn(actions.len(), num_actions, |s, a| {
            if actions[s] == a {
                1.0
            } else {
                0.0
            }
        }))
    }

    /// Validates that every row is a probability vector (within `1e-12`).
    pub fn new(table: Table) -> Result<Self> {
        for s in 0..table.rows() {
            let row = table.row(s);
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(Error::InvalidPolicy(format!("negative entry in row {s}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidPolicy(format!(
                    "row {s} sums to {sum}, off by {:e}",
                    sum - 1.0
                )));
            }
        }
        Ok(Policy(table))
    }

    pub(crate) fn from_table_unchecked(table: Table) -> Self {
        Policy(table)
    }

    pub fn table(&self) -> &Table {
        &self.0
    }

    pub fn into_table(self) -> Table {
        self.0
    }

    pub fn num_states(&self) -> usize {
        self.0.rows()
    }

    pub fn num_actions(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, state: usize) -> &[f64] {
        self.0.row(state)
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.0[(state, action)]
    }

    /// Membership in the truncated class `Pi_{i, alpha}`: every entry is at
    /// least `alpha / A_i`.
    pub fn in_truncated_class(&self, alpha: f64) -> bool {
        let floor = alpha / self.num_actions() as f64;
        self.0.as_slice().iter().all(|&p| p >= floor)
    }

    pub fn is_interior(&self) -> bool {
        self.0.as_slice().iter().all(|&p| p > 0.0)
    }

    /// `max_s ||pi(.|s) - other(.|s)||_1`.
    pub fn dist_1_inf(&self, other: &Policy) -> f64 {
        self.0.dist_1_inf(&other.0)
    }

    /// `sum_s ||pi(.|s) - other(.|s)||_1`.
    pub fn l1_distance(&self, other: &Policy) -> f64 {
        self.0
            .as_slice()
            .iter()
            .zip(other.0.as_slice())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// FNV-1a over the bit patterns of all entries.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for x in self.0.as_slice() {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// Product policy `pi(a|s) = prod_i pi_i(a_i|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPolicy {
    agents: Vec<Policy>,
}

impl JointPolicy {
    pub fn new(agents: Vec<Policy>) -> Self {
        JointPolicy { agents }
    }

    /// The initialization shared by every algorithm: `pi_i(a|s) = 1/A_i`.
    pub fn uniform(game: &MarkovGame) -> Self {
        JointPolicy {
            agents: game
                .action_counts()
                .iter()
                .map(|&a| Policy::uniform(game.num_states(), a))
                .collect(),
        }
    }

    pub fn agents(&self) -> &[Policy] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> &Policy {
        &self.agents[i]
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn into_agents(self) -> Vec<Policy> {
        self.agents
    }

    /// Copy with agent `i`'s policy replaced (a unilateral deviation).
    pub fn with_agent(&self, i: usize, policy: Policy) -> Self {
        let mut agents = self.agents.clone();
        agents[i] = policy;
        JointPolicy { agents }
    }

    pub fn check_shape(&self, game: &MarkovGame) -> Result<()> {
        if self.agents.len() != game.num_agents() {
            return Err(Error::ShapeMismatch(format!(
                "policy has {} agents, game has {}",
                self.agents.len(),
                game.num_agents()
            )));
        }
        for (i, p) in self.agents.iter().enumerate() {
            if p.num_states() != game.num_states() || p.num_actions() != game.num_actions(i) {
                return Err(Error::ShapeMismatch(format!(
                    "policy of agent {i} is {}x{}, expected {}x{}",
                    p.num_states(),
                    p.num_actions(),
                    game.num_states(),
                    game.num_actions(i)
                )));
            }
        }
        Ok(())
    }

    /// Probability of every joint action at `state` (lexicographic order).
    pub fn joint_distribution(&self, game: &MarkovGame, state: usize, out: &mut [f64]) {
        for (j, w) in out.iter_mut().enumerate().take(game.num_joint_actions()) {
            *w = game
                .decode(j)
                .iter()
                .enumerate()
                .map(|(i, &a)| self.agents[i].prob(state, a))
                .product();
        }
    }

    /// Probability of every joint action at `state` with agent `skip`'s
    /// factor left out, i.e. `pi_{-skip}(a_{-skip}|s)`.
    pub fn joint_distribution_except(
        &self,
        game: &MarkovGame,
        state: usize,
        skip: usize,
        out: &mut [f64],
    ) {
        for (j, w) in out.iter_mut().enumerate().take(game.num_joint_actions()) {
            *w = game
                .decode(j)
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(i, &a)| self.agents[i].prob(state, a))
                .product();
        }
    }

    /// `(1/N) sum_i sum_s ||pi_i(.|s) - other_i(.|s)||_1`.
    pub fn mean_l1_distance(&self, other: &JointPolicy) -> f64 {
        let n = self.agents.len() as f64;
        self.agents
            .iter()
            .zip(&other.agents)
            .map(|(a, b)| a.l1_distance(b))
            .sum::<f64>()
            / n
    }

    /// Euclidean distance between the concatenated policy tables.
    pub fn l2_distance(&self, other: &JointPolicy) -> f64 {
        libm::sqrt(
            self.agents
                .iter()
                .zip(&other.agents)
                .flat_map(|(a, b)| a.table().as_slice().iter().zip(b.table().as_slice()))
                .map(|(x, y)| (x - y) * (x - y))
                .sum(),
        )
    }

    pub fn fingerprint(&self) -> u64 {
        self.agents
            .iter()
            .fold(0u64, |h, p| h.rotate_left(17) ^ p.fingerprint())
    }
}

/// State transition matrix `P_pi(s'|s) = sum_a pi(a|s) P(s'|s, a)`.
pub fn induced_state_chain(game: &MarkovGame, policy: &JointPolicy) -> Result<DMatrix<f64>> {
    policy.check_shape(game)?;
    let n = game.num_states();
    let mut p = DMatrix::zeros(n, n);
    let mut w = vec![0.0; game.num_joint_actions()];
    for s in 0..n {
        policy.joint_distribution(game, s, &mut w);
        for (j, &wj) in w.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            for (next, &q) in game.transition_row(s, j).iter().enumerate() {
                p[(s, next)] += wj * q;
            }
        }
    }
    Ok(p)
}

/// State-action transition matrix. With `agent = None` the action space is
/// the joint one (`SA x SA`, `P((s,a),(s',a')) = P(s'|s,a) pi(a'|s')`); with
/// `Some(j)` it is agent `j`'s marginal chain
/// `P((s,a_j),(s',a_j')) = Pbar^{pi_{-j}}(s'|s,a_j) pi_j(a_j'|s')`.
pub fn induced_state_action_chain(
    game: &MarkovGame,
    policy: &JointPolicy,
    agent: Option<usize>,
) -> Result<DMatrix<f64>> {
    policy.check_shape(game)?;
    let n = game.num_states();
    match agent {
        None => {
            let na = game.num_joint_actions();
            let mut next_w = vec![vec![0.0; na]; n];
            for (s, w) in next_w.iter_mut().enumerate() {
                policy.joint_distribution(game, s, w);
            }
            Ok(DMatrix::from_fn(n * na, n * na, |r, c| {
                let (s, a) = (r / na, r % na);
                let (s2, a2) = (c / na, c % na);
                game.transition_row(s, a)[s2] * next_w[s2][a2]
            }))
        }
        Some(j) => {
            game.check_agent(j)?;
            let aj = game.num_actions(j);
            let pbar = marginal_transition(game, policy, j)?;
            let pj = policy.agent(j);
            Ok(DMatrix::from_fn(n * aj, n * aj, |r, c| {
                let (s, a) = (r / aj, r % aj);
                let (s2, a2) = (c / aj, c % aj);
                pbar[s].row(a)[s2] * pj.prob(s2, a2)
            }))
        }
    }
}

/// Rewards of every agent marginalized over a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalRewards {
    /// `r_i^pi(s)`, one vector per agent `i`.
    pub state: Vec<Vec<f64>>,
    /// `r_i^{pi_{-j}}(s, a_j)` as an `S x A_j` table, one per agent `i`.
    pub by_action: Vec<Table>,
}

/// `r_i^pi(s)` for every agent.
pub fn state_rewards(game: &MarkovGame, policy: &JointPolicy) -> Result<Vec<Vec<f64>>> {
    policy.check_shape(game)?;
    let mut w = vec![0.0; game.num_joint_actions()];
    let mut out = vec![vec![0.0; game.num_states()]; game.num_agents()];
    for s in 0..game.num_states() {
        policy.joint_distribution(game, s, &mut w);
        for (i, r) in out.iter_mut().enumerate() {
            r[s] = w
                .iter()
                .enumerate()
                .map(|(j, &wj)| wj * game.reward(i, s, j))
                .sum();
        }
    }
    Ok(out)
}

/// Applies `pi_{-j}` to a per-joint-action quantity `f(s, a)` (a flattened
/// `S x |A|` tensor), yielding an `S x A_j` table.
pub fn marginalize_joint(
    game: &MarkovGame,
    policy: &JointPolicy,
    agent: usize,
    f: &[f64],
) -> Table {
    let na = game.num_joint_actions();
    let mut w = vec![0.0; na];
    let mut out = Table::zeros(game.num_states(), game.num_actions(agent));
    for s in 0..game.num_states() {
        policy.joint_distribution_except(game, s, agent, &mut w);
        for (j, &wj) in w.iter().enumerate() {
            out[(s, game.decode(j)[agent])] += wj * f[s * na + j];
        }
    }
    out
}

pub fn marginal_reward(
    game: &MarkovGame,
    policy: &JointPolicy,
    agent: usize,
) -> Result<MarginalRewards> {
    game.check_agent(agent)?;
    let state = state_rewards(game, policy)?;
    let by_action = (0..game.num_agents())
        .map(|i| marginalize_joint(game, policy, agent, &game.rewards()[i]))
        .collect();
    Ok(MarginalRewards { state, by_action })
}

/// `Pbar^{pi_{-j}}(s'|s, a_j)`: for each state an `A_j x S` table of rows.
pub fn marginal_transition(
    game: &MarkovGame,
    policy: &JointPolicy,
    agent: usize,
) -> Result<Vec<Table>> {
    game.check_agent(agent)?;
    policy.check_shape(game)?;
    let n = game.num_states();
    let mut w = vec![0.0; game.num_joint_actions()];
    let mut out = Vec::with_capacity(n);
    for s in 0..n {
        policy.joint_distribution_except(game, s, agent, &mut w);
        let mut t = Table::zeros(game.num_actions(agent), n);
        for (j, &wj) in w.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            let row = t.row_mut(game.decode(j)[agent]);
            for (dst, &q) in row.iter_mut().zip(game.transition_row(s, j)) {
                *dst += wj * q;
            }
        }
        out.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::manual_fixture;

    fn bad_row_game() -> MarkovGame {
        MarkovGame::from_parts(
            1,
            vec![2],
            vec![0.99, 1.0],
            vec![vec![0.5, 0.5]],
            StructureTags::GENERAL,
            None,
        )
        .unwrap()
    }

    #[test]
    fn manual_fixture_is_valid() {
        assert!(manual_fixture().validate().is_empty());
    }

    #[test]
    fn short_row_reports_deficit() {
        let report = bad_row_game().validate();
        assert_eq!(report.violations.len(), 1);
        match &report.violations[0] {
            Violation::TransitionRowSum {
                state,
                joint_action,
                deficit,
            } => {
                assert_eq!((*state, joint_action.as_slice()), (0, &[0usize][..]));
                assert!((deficit - 0.01).abs() < 1e-12);
            }
            v => panic!("unexpected {v:?}"),
        }
    }

    #[test]
    fn reward_excess_reported() {
        let game = MarkovGame::from_parts(
            1,
            vec![2],
            vec![1.0, 1.0],
            vec![vec![1.2, 0.5]],
            StructureTags::GENERAL,
            None,
        )
        .unwrap();
        let report = game.validate();
        assert_eq!(report.violations.len(), 1);
        match &report.violations[0] {
            Violation::RewardOutOfRange {
                agent,
                state,
                joint_action,
                excess,
            } => {
                assert_eq!(
                    (*agent, *state, joint_action.as_slice()),
                    (0, 0, &[0usize][..])
                );
                assert!((excess - 0.2).abs() < 1e-12);
            }
            v => panic!("unexpected {v:?}"),
        }
        assert!(matches!(
            MarkovGame::new(
                1,
                vec![2],
                vec![1.0, 1.0],
                vec![vec![1.2, 0.5]],
                StructureTags::GENERAL,
                None
            ),
            Err(Error::InvalidGame(_))
        ));
    }

    #[test]
    fn tags_are_checked() {
        let tags = StructureTags {
            cooperative: true,
            action_independent_transitions: true,
            state_potential: false,
        };
        let game = MarkovGame::from_parts(
            2,
            vec![2],
            vec![0.5, 0.5, 0.1, 0.9, 0.3, 0.7, 0.3, 0.7],
            vec![vec![0.0, 1.0, 0.5, 0.5]],
            tags,
            None,
        )
        .unwrap();
        let report = game.validate();
        assert_eq!(report.violations.len(), 2);
        assert!(report
            .violations
            .iter()
            .all(|v| matches!(v, Violation::ActionDependentTransition { state: 0, .. })));
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            MarkovGame::from_parts(
                2,
                vec![2],
                vec![1.0; 3],
                vec![vec![0.0; 4]],
                StructureTags::GENERAL,
                None
            ),
            Err(Error::ShapeMismatch(_))
        ));
        let game = manual_fixture();
        let wrong = JointPolicy::new(vec![Policy::uniform(2, 2)]);
        assert!(matches!(
            induced_state_chain(&game, &wrong),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            marginal_reward(&game, &JointPolicy::uniform(&game), 2),
            Err(Error::AgentOutOfRange {
                index: 2,
                agents: 2
            })
        ));
    }

    #[test]
    fn joint_action_order_is_lexicographic() {
        let game = MarkovGame::from_parts(
            1,
            vec![2, 3],
            vec![1.0; 6],
            vec![vec![0.0; 6], vec![0.0; 6]],
            StructureTags::GENERAL,
            None,
        )
        .unwrap();
        assert_eq!(game.decode(0), &[0, 0]);
        assert_eq!(game.decode(1), &[0, 1]);
        assert_eq!(game.decode(3), &[1, 0]);
        assert_eq!(game.encode(&[1, 2]), 5);
    }

    #[test]
    fn manual_chain_ignores_policy() {
        let game = manual_fixture();
        let pol = JointPolicy::new(vec![
            Policy::deterministic(2, &[1, 0]),
            Policy::uniform(2, 2),
        ]);
        let p = induced_state_chain(&game, &pol).unwrap();
        assert_eq!(
            p.as_slice(),
            DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.3, 0.7]).as_slice()
        );
    }

    #[test]
    fn manual_marginal_reward() {
        let game = manual_fixture();
        let m = marginal_reward(&game, &JointPolicy::uniform(&game), 0).unwrap();
        assert!((m.by_action[0][(0, 0)] - 0.9).abs() < 1e-15);
        assert!((m.state[0][0] - 0.55).abs() < 1e-15);
        assert!((m.state[1][1] - 0.475).abs() < 1e-15);
    }

    #[test]
    fn single_agent_marginals_are_raw_tensors() {
        let game = MarkovGame::new(
            2,
            vec![2],
            vec![0.2, 0.8, 0.6, 0.4, 0.5, 0.5, 1.0, 0.0],
            vec![vec![0.1, 0.9, 0.3, 0.4]],
            StructureTags::GENERAL,
            None,
        )
        .unwrap();
        let pol = JointPolicy::new(vec![Policy::new(
            Table::from_vec(2, 2, vec![0.3, 0.7, 0.5, 0.5]).unwrap(),
        )
        .unwrap()]);
        let m = marginal_reward(&game, &pol, 0).unwrap();
        assert_eq!(m.by_action[0].as_slice(), game.rewards()[0].as_slice());
        let pbar = marginal_transition(&game, &pol, 0).unwrap();
        assert_eq!(pbar[0].as_slice(), &game.transition()[0..4]);
        assert_eq!(pbar[1].as_slice(), &game.transition()[4..8]);
    }
}
