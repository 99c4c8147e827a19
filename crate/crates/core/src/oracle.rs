//! Exact oracles for a (game, joint policy) pair.
//!
//! Differential values are normalized so that `<nu, V> = 0`, which is what the
//! closed form `V = (I - P + P^inf)^{-1} (I - P^inf) r` produces.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::game::{
    induced_state_chain, marginal_transition, marginalize_joint, JointPolicy, MarkovGame, Policy,
};
use crate::linalg;
use crate::table::Table;
use crate::{Error, Result};

/// Span threshold for relative value iteration.
pub const BEST_RESPONSE_TOL: f64 = 1e-10;
pub const BEST_RESPONSE_MAX_ITERS: usize = 1_000_000;
/// Absolute tolerance used when collecting argmax sets.
pub const ARGMAX_TIE_TOL: f64 = 1e-10;

const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;
const STATIONARY_MIN_MASS: f64 = 1e-14;
const POISSON_RESIDUAL_TOL: f64 = 1e-9;

/// Stationary distribution of an ergodic row-stochastic matrix, by a direct
/// solve of `nu (P - I) = 0` with one balance equation replaced by `sum nu = 1`.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    if n == 0 || p.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "transition matrix is {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    let mut a = p.transpose() - DMatrix::identity(n, n);
    a.row_mut(n - 1).fill(1.0);
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    let nu = linalg::solve(a, &b)
        .ok_or_else(|| Error::Ergodicity("stationary system is singular".into()))?;
    if nu.iter().any(|x| !x.is_finite()) {
        return Err(Error::Ergodicity("stationary system is singular".into()));
    }
    let residual = (0..n)
        .map(|c| {
            let pushed: f64 = (0..n).map(|r| nu[r] * p[(r, c)]).sum();
            (pushed - nu[c]).abs()
        })
        .fold(0.0, f64::max);
    if residual > STATIONARY_RESIDUAL_TOL {
        return Err(Error::Ergodicity(format!(
            "stationary residual {residual:e} (chain has more than one recurrent class)"
        )));
    }
    if let Some((s, &m)) = nu
        .iter()
        .enumerate()
        .find(|(_, &m)| m <= STATIONARY_MIN_MASS)
    {
        return Err(Error::Ergodicity(format!(
            "state {s} has stationary mass {m:e}"
        )));
    }
    Ok(nu)
}

/// The state chain of a policy together with its stationary distribution and
/// fundamental matrix `(I - P + P^inf)^{-1}`.
#[derive(Debug, Clone)]
pub struct PolicyChain {
    pub transition: DMatrix<f64>,
    pub nu: Vec<f64>,
    pub fundamental: DMatrix<f64>,
}

impl PolicyChain {
    pub fn new(game: &MarkovGame, policy: &JointPolicy) -> Result<Self> {
        Self::from_matrix(induced_state_chain(game, policy)?)
    }

    pub fn from_matrix(transition: DMatrix<f64>) -> Result<Self> {
        let nu = stationary_distribution(&transition)?;
        let n = nu.len();
        let m = DMatrix::identity(n, n) - &transition + linalg::limit_matrix(&nu);
        let fundamental = linalg::inverse(m)
            .ok_or_else(|| Error::SingularSystem("I - P + P^inf is not invertible".into()))?;
        Ok(PolicyChain {
            transition,
            nu,
            fundamental,
        })
    }

    pub fn num_states(&self) -> usize {
        self.nu.len()
    }

    /// `kappa_1` contribution of this policy: `||(I - P + P^inf)^{-1}||_inf`.
    pub fn fundamental_norm(&self) -> f64 {
        linalg::inf_norm(&self.fundamental)
    }

    /// Gain and differential value `(rho, V)` of a per-state reward vector.
    pub fn evaluate(&self, reward: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.num_states();
        let rho: f64 = self.nu.iter().zip(reward).map(|(a, b)| a * b).sum();
        let centered: Vec<f64> = reward.iter().map(|r| r - rho).collect();
        let v: Vec<f64> = (0..n)
            .map(|s| (0..n).map(|k| self.fundamental[(s, k)] * centered[k]).sum())
            .collect();
        let residual = (0..n)
            .map(|s| {
                let pv: f64 = (0..n).map(|k| self.transition[(s, k)] * v[k]).sum();
                (v[s] - (reward[s] - rho + pv)).abs()
            })
            .fold(0.0, f64::max);
        if residual.is_nan() || residual > POISSON_RESIDUAL_TOL {
            return Err(Error::SingularSystem(format!(
                "Poisson residual {residual:e}"
            )));
        }
        Ok((rho, v))
    }

    pub fn gain(&self, reward: &[f64]) -> f64 {
        self.nu.iter().zip(reward).map(|(a, b)| a * b).sum()
    }
}

/// `Q(s, a) = r(s, a) - rho + <P(.|s, a), V>` for a reward tensor over joint
/// actions (flattened `S x |A|`).
pub fn q_from_values(game: &MarkovGame, reward: &[f64], rho: f64, v: &[f64]) -> Vec<f64> {
    let na = game.num_joint_actions();
    let mut q = Vec::with_capacity(game.num_states() * na);
    for s in 0..game.num_states() {
        for j in 0..na {
            let pv: f64 = game
                .transition_row(s, j)
                .iter()
                .zip(v)
                .map(|(p, x)| p * x)
                .sum();
            q.push(reward[s * na + j] - rho + pv);
        }
    }
    q
}

/// Everything the theory defines for one (game, policy) pair.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub chain: PolicyChain,
    /// `rho_i` per agent.
    pub rho: Vec<f64>,
    /// `V_i` per agent, `<nu, V_i> = 0`.
    pub values: Vec<Vec<f64>>,
    /// `Q_i` per agent, flattened `S x |A|` over joint actions.
    pub q: Vec<Vec<f64>>,
    /// `marginal_q[j][i]` is `Qbar_{j;i}`, an `S x A_j` table.
    pub marginal_q: Vec<Vec<Table>>,
    /// `gradients[i] = Qbar_{i;i}(s, a) nu(s)`.
    pub gradients: Vec<Table>,
}

impl OracleReport {
    pub fn evaluate(game: &MarkovGame, policy: &JointPolicy) -> Result<Self> {
        let chain = PolicyChain::new(game, policy)?;
        let state_r = crate::game::state_rewards(game, policy)?;
        let n = game.num_agents();
        let mut rho = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        for (i, r) in state_r.iter().enumerate() {
            let (g, v) = chain.evaluate(r)?;
            q.push(q_from_values(game, &game.rewards()[i], g, &v));
            rho.push(g);
            values.push(v);
        }
        let marginal_q: Vec<Vec<Table>> = (0..n)
            .map(|j| {
                q.iter()
                    .map(|qi| marginalize_joint(game, policy, j, qi))
                    .collect()
            })
            .collect();
        let gradients = (0..n)
            .map(|i| scale_rows(&marginal_q[i][i], &chain.nu))
            .collect();
        Ok(OracleReport {
            chain,
            rho,
            values,
            q,
            marginal_q,
            gradients,
        })
    }

    pub fn nu(&self) -> &[f64] {
        &self.chain.nu
    }

    /// `Qbar_{j;i}`.
    pub fn marginal(&self, j: usize, i: usize) -> &Table {
        &self.marginal_q[j][i]
    }

    /// `Abar_{j;i}(s, a_j) = Qbar_{j;i}(s, a_j) - V_i(s)`.
    pub fn advantage(&self, j: usize, i: usize) -> Table {
        let qbar = &self.marginal_q[j][i];
        Table::from_fn(qbar.rows(), qbar.cols(), |s, a| {
            qbar[(s, a)] - self.values[i][s]
        })
    }

    /// `dRho_i / dPi_j = Qbar_{j;i} nu`.
    pub fn gradient(&self, j: usize, i: usize) -> Table {
        scale_rows(&self.marginal_q[j][i], &self.chain.nu)
    }
}

fn scale_rows(t: &Table, w: &[f64]) -> Table {
    Table::from_fn(t.rows(), t.cols(), |s, a| t[(s, a)] * w[s])
}

pub fn average_reward(game: &MarkovGame, policy: &JointPolicy, agent: usize) -> Result<f64> {
    game.check_agent(agent)?;
    let chain = PolicyChain::new(game, policy)?;
    let r = crate::game::state_rewards(game, policy)?;
    Ok(chain.gain(&r[agent]))
}

/// `(V_i, Q_i)` with `Q_i` flattened over `S x |A|`.
pub fn differential_values(
    game: &MarkovGame,
    policy: &JointPolicy,
    agent: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    game.check_agent(agent)?;
    let chain = PolicyChain::new(game, policy)?;
    let r = crate::game::state_rewards(game, policy)?;
    let (rho, v) = chain.evaluate(&r[agent])?;
    let q = q_from_values(game, &game.rewards()[agent], rho, &v);
    Ok((v, q))
}

/// `(Qbar_{j;i}, Abar_{j;i})` for acting agent `j` and reward agent `i`.
pub fn marginal_q(
    game: &MarkovGame,
    policy: &JointPolicy,
    acting: usize,
    reward: usize,
) -> Result<(Table, Table)> {
    game.check_agent(acting)?;
    let (v, q) = differential_values(game, policy, reward)?;
    let qbar = marginalize_joint(game, policy, acting, &q);
    let adv = Table::from_fn(qbar.rows(), qbar.cols(), |s, a| qbar[(s, a)] - v[s]);
    Ok((qbar, adv))
}

/// `d rho_i / d pi_j(a_j|s) = Qbar_{j;i}(s, a_j) nu(s)`.
pub fn policy_gradient(
    game: &MarkovGame,
    policy: &JointPolicy,
    acting: usize,
    objective: usize,
) -> Result<Table> {
    let (qbar, _) = marginal_q(game, policy, acting, objective)?;
    let chain = PolicyChain::new(game, policy)?;
    Ok(scale_rows(&qbar, &chain.nu))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    /// Greedy deterministic policy.
    pub policy: Policy,
    pub actions: Vec<usize>,
    /// Exact gain of `policy` against the frozen opponents.
    pub gain: f64,
    pub iterations: usize,
}

/// Best response of `agent` to the other agents' policies in `policy`, by
/// relative value iteration on the induced single-agent MDP.
pub fn best_response(
    game: &MarkovGame,
    policy: &JointPolicy,
    agent: usize,
) -> Result<BestResponse> {
    game.check_agent(agent)?;
    policy.check_shape(game)?;
    let n = game.num_states();
    let a_count = game.num_actions(agent);
    let pbar = marginal_transition(game, policy, agent)?;
    let rbar = marginalize_joint(game, policy, agent, &game.rewards()[agent]);

    let mut h = vec![0.0; n];
    let mut th = vec![0.0; n];
    let mut qsa = Table::zeros(n, a_count);
    let mut iterations = 0;
    loop {
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..a_count {
                let v = rbar[(s, a)]
                    + pbar[s]
                        .row(a)
                        .iter()
                        .zip(&h)
                        .map(|(p, x)| p * x)
                        .sum::<f64>();
                qsa[(s, a)] = v;
                best = best.max(v);
            }
            th[s] = best;
        }
        iterations += 1;
        let (lo, hi) = th
            .iter()
            .zip(&h)
            .map(|(t, x)| t - x)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
                (lo.min(d), hi.max(d))
            });
        let span = hi - lo;
        if span < BEST_RESPONSE_TOL {
            break;
        }
        if iterations >= BEST_RESPONSE_MAX_ITERS || !span.is_finite() {
            return Err(Error::NoConvergence {
                iterations,
                residual: span,
            });
        }
        let offset = th[0];
        for (x, t) in h.iter_mut().zip(&th) {
            *x = t - offset;
        }
    }

    let actions: Vec<usize> = (0..n).map(|s| argmax_lowest(qsa.row(s), 1e-12)).collect();
    let det = Policy::deterministic(a_count, &actions);
    let deviated = policy.with_agent(agent, det.clone());
    let gain = average_reward(game, &deviated, agent)?;
    Ok(BestResponse {
        policy: det,
        actions,
        gain,
        iterations,
    })
}

/// First index whose value is within `tol` of the maximum.
pub(crate) fn argmax_lowest(v: &[f64], tol: f64) -> usize {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.iter().position(|&x| x >= max - tol).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashGap {
    /// `max(0, max_i per_agent[i])`.
    pub gap: f64,
    /// `rho_i^* - rho_i^pi`, unclamped.
    pub per_agent: Vec<f64>,
    pub best_responses: Vec<BestResponse>,
}

pub fn nash_gap(game: &MarkovGame, policy: &JointPolicy) -> Result<NashGap> {
    let chain = PolicyChain::new(game, policy)?;
    let r = crate::game::state_rewards(game, policy)?;
    let rho: Vec<f64> = r.iter().map(|ri| chain.gain(ri)).collect();
    nash_gap_with_gains(game, policy, &rho)
}

/// Nash gap when the current gains `rho_i^pi` are already known.
pub fn nash_gap_with_gains(
    game: &MarkovGame,
    policy: &JointPolicy,
    rho: &[f64],
) -> Result<NashGap> {
    let mut per_agent = Vec::with_capacity(game.num_agents());
    let mut best_responses = Vec::with_capacity(game.num_agents());
    for (i, &r) in rho.iter().enumerate().take(game.num_agents()) {
        let br = best_response(game, policy, i)?;
        per_agent.push(br.gain - r);
        best_responses.push(br);
    }
    let gap = per_agent.iter().copied().fold(0.0, f64::max);
    Ok(NashGap {
        gap,
        per_agent,
        best_responses,
    })
}

/// Potential `Phi(pi)` of a game with a certified potential: `rho_1` for
/// cooperative games, `<nu, phi^pi>` when a state-action potential is stored.
pub fn potential_value(game: &MarkovGame, policy: &JointPolicy) -> Result<f64> {
    let tags = game.structure();
    if tags.cooperative {
        return average_reward(game, policy, 0);
    }
    match game.potential() {
        Some(phi) if tags.state_potential || tags.action_independent_transitions => {
            let chain = PolicyChain::new(game, policy)?;
            Ok(potential_from_chain(game, policy, phi, &chain.nu))
        }
        _ => Err(Error::UnsupportedStructure),
    }
}

/// Same as [`potential_value`] but reusing an [`OracleReport`].
pub fn potential_from_report(
    game: &MarkovGame,
    policy: &JointPolicy,
    report: &OracleReport,
) -> Result<f64> {
    let tags = game.structure();
    if tags.cooperative {
        return Ok(report.rho[0]);
    }
    match game.potential() {
        Some(phi) if tags.state_potential || tags.action_independent_transitions => {
            Ok(potential_from_chain(game, policy, phi, report.nu()))
        }
        _ => Err(Error::UnsupportedStructure),
    }
}

fn potential_from_chain(game: &MarkovGame, policy: &JointPolicy, phi: &[f64], nu: &[f64]) -> f64 {
    let na = game.num_joint_actions();
    let mut w = vec![0.0; na];
    let mut total = 0.0;
    for (s, &m) in nu.iter().enumerate() {
        policy.joint_distribution(game, s, &mut w);
        let phis: f64 = w
            .iter()
            .zip(&phi[s * na..(s + 1) * na])
            .map(|(a, b)| a * b)
            .sum();
        total += m * phis;
    }
    total
}

/// Whether `game` has a potential that [`potential_value`] can compute.
pub fn has_potential(game: &MarkovGame) -> bool {
    let tags = game.structure();
    tags.cooperative
        || (game.potential().is_some()
            && (tags.state_potential || tags.action_independent_transitions))
}

/// `c(t) = min_i min_s sum_{a in argmax Qbar_i(s, .)} pi_i(a|s)`.
pub fn exploration_factor(policy: &JointPolicy, report: &OracleReport) -> f64 {
    let mut c = f64::INFINITY;
    for i in 0..policy.num_agents() {
        let qbar = report.marginal(i, i);
        let pi = policy.agent(i);
        for s in 0..qbar.rows() {
            let row = qbar.row(s);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mass: f64 = row
                .iter()
                .enumerate()
                .filter(|&(_, &q)| q >= max - ARGMAX_TIE_TOL)
                .map(|(a, _)| pi.prob(s, a))
                .sum();
            c = c.min(mass);
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::StructureTags;
    use crate::generators::manual_fixture;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn two_state_stationary() {
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.3, 0.7]);
        let nu = stationary_distribution(&p).unwrap();
        close(nu[0], 0.75, 1e-15);
        close(nu[1], 0.25, 1e-15);
        let q = DMatrix::from_element(2, 2, 0.5);
        assert_eq!(stationary_distribution(&q).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn reducible_chain_is_rejected() {
        let p = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.5, 0.0, 0.5]);
        assert!(matches!(
            stationary_distribution(&p),
            Err(Error::Ergodicity(_))
        ));
        let transient = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        assert!(matches!(
            stationary_distribution(&transient),
            Err(Error::Ergodicity(_))
        ));
    }

    #[test]
    fn point_reward_values() {
        let chain =
            PolicyChain::from_matrix(DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.3, 0.7])).unwrap();
        let (rho, v) = chain.evaluate(&[1.0, 0.0]).unwrap();
        close(rho, 0.75, 1e-15);
        close(v[0], 0.625, 1e-12);
        close(v[1], -1.875, 1e-12);
    }

    #[test]
    fn manual_fixture_values() {
        let game = manual_fixture();
        let pol = JointPolicy::uniform(&game);
        let rep = OracleReport::evaluate(&game, &pol).unwrap();
        close(rep.rho[0], 0.53125, 1e-12);
        close(rep.values[0][0], 0.046875, 1e-12);
        close(rep.values[0][1], -0.140625, 1e-12);
        close(rep.marginal(0, 0)[(0, 0)], 0.396875, 1e-12);
        close(rep.marginal(0, 0)[(0, 1)], -0.303125, 1e-12);
        close(rep.gradients[0][(0, 0)], 0.29765625, 1e-12);
        close(exploration_factor(&pol, &rep), 0.5, 0.0);
        close(potential_value(&game, &pol).unwrap(), 0.53125, 1e-12);
    }

    #[test]
    fn manual_fixture_best_response_and_gap() {
        let game = manual_fixture();
        let pol = JointPolicy::uniform(&game);
        let br = best_response(&game, &pol, 0).unwrap();
        assert_eq!(br.actions, vec![0, 1]);
        close(br.gain, 0.875, 1e-12);
        let gap = nash_gap(&game, &pol).unwrap();
        close(gap.gap, 0.34375, 1e-12);
        close(gap.per_agent[1], 0.06875, 1e-12);
    }

    #[test]
    fn constant_reward_is_flat() {
        let game = MarkovGame::new(
            2,
            vec![2],
            vec![0.2, 0.8, 0.6, 0.4, 0.5, 0.5, 1.0, 0.0],
            vec![vec![0.3; 4]],
            StructureTags::GENERAL,
            None,
        )
        .unwrap();
        let pol = JointPolicy::uniform(&game);
        let (v, q) = differential_values(&game, &pol, 0).unwrap();
        assert!(v.iter().chain(&q).all(|x| x.abs() < 1e-15));
        close(average_reward(&game, &pol, 0).unwrap(), 0.3, 1e-15);
        let g = policy_gradient(&game, &pol, 0, 0).unwrap();
        assert!(g.max_abs() < 1e-15);
        let br = best_response(&game, &pol, 0).unwrap();
        close(br.gain, 0.3, 1e-15);
    }

    #[test]
    fn general_game_has_no_potential() {
        let mut game = manual_fixture();
        game = MarkovGame::new(
            game.num_states(),
            game.action_counts().to_vec(),
            game.transition().to_vec(),
            game.rewards().to_vec(),
            StructureTags::GENERAL,
            None,
        )
        .unwrap();
        assert_eq!(
            potential_value(&game, &JointPolicy::uniform(&game)),
            Err(Error::UnsupportedStructure)
        );
    }
}
