//! Trajectory simulation and the single-trajectory estimators: the
//! average-reward estimate, the score-function gradient estimate, the
//! windowed Q estimate, and the sample-based training loops built on them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::algorithms::{evaluate_iterate, project_step, RunOptions, RunTrace, StepSize};
use crate::game::{JointPolicy, MarkovGame, Policy};
use crate::oracle::OracleReport;
use crate::random::{agent_role, sample_index, stream, WORLD_ROLE};
use crate::table::Table;
use crate::{Error, Result};

/// Law of the first state of a trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialState {
    #[default]
    Uniform,
    Fixed(usize),
    Distribution(Vec<f64>),
}

/// `(state, joint action, per-agent reward)` triples of one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    num_agents: usize,
    states: Vec<u32>,
    /// `len x N`, row-major.
    actions: Vec<u32>,
    /// `len x N`, row-major.
    rewards: Vec<f64>,
    pub seed: u64,
    pub iteration: u64,
    /// Fingerprint of each agent's generating policy.
    pub policy_hashes: Vec<u64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn state(&self, t: usize) -> usize {
        self.states[t] as usize
    }

    pub fn action(&self, t: usize, agent: usize) -> usize {
        self.actions[t * self.num_agents + agent] as usize
    }

    pub fn reward(&self, t: usize, agent: usize) -> f64 {
        self.rewards[t * self.num_agents + agent]
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    /// Little-endian dump: per step a `u32` state, `N` `u32` actions and `N`
    /// `f64` rewards.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let n = self.num_agents;
        let mut out = Vec::with_capacity(self.len() * (4 + 12 * n));
        for t in 0..self.len() {
            out.extend_from_slice(&self.states[t].to_le_bytes());
            for a in &self.actions[t * n..(t + 1) * n] {
                out.extend_from_slice(&a.to_le_bytes());
            }
            for r in &self.rewards[t * n..(t + 1) * n] {
                out.extend_from_slice(&r.to_le_bytes());
            }
        }
        out
    }

    /// Inverse of [`Trajectory::to_le_bytes`]; seed and hashes are not stored
    /// in the dump and come back as zero / empty.
    pub fn from_le_bytes(bytes: &[u8], num_agents: usize) -> Result<Self> {
        let step = 4 + 12 * num_agents;
        if num_agents == 0 || !bytes.len().is_multiple_of(step) {
            return Err(Error::Length(format!(
                "{} bytes is not a whole number of {step}-byte steps",
                bytes.len()
            )));
        }
        let len = bytes.len() / step;
        let mut states = Vec::with_capacity(len);
        let mut actions = Vec::with_capacity(len * num_agents);
        let mut rewards = Vec::with_capacity(len * num_agents);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        for t in 0..len {
            let base = t * step;
            states.push(u32_at(base));
            for i in 0..num_agents {
                actions.push(u32_at(base + 4 + 4 * i));
            }
            for i in 0..num_agents {
                rewards.push(f64_at(base + 4 + 4 * num_agents + 8 * i));
            }
        }
        Ok(Trajectory {
            num_agents,
            states,
            actions,
            rewards,
            seed: 0,
            iteration: 0,
            policy_hashes: Vec::new(),
        })
    }
}

/// Simulates `length` steps under `policy`. The environment draws from stream
/// `(seed, iteration, 0)` and agent `i` from `(seed, iteration, 1 + i)`.
pub fn simulate(
    game: &MarkovGame,
    policy: &JointPolicy,
    length: usize,
    seed: u64,
    iteration: u64,
    initial: &InitialState,
) -> Result<Trajectory> {
    policy.check_shape(game)?;
    if length == 0 {
        return Err(Error::Length("trajectory length must be positive".into()));
    }
    let n_states = game.num_states();
    let n = game.num_agents();
    let mut world = stream(seed, iteration, WORLD_ROLE);
    let mut agents: Vec<_> = (0..n)
        .map(|i| stream(seed, iteration, agent_role(i)))
        .collect();

    let mut s = match initial {
        InitialState::Uniform => sample_index(&mut world, &vec![1.0 / n_states as f64; n_states]),
        InitialState::Fixed(s) => {
            game.check_state(*s)?;
            *s
        }
        InitialState::Distribution(d) => {
            if d.len() != n_states {
                return Err(Error::ShapeMismatch(format!(
                    "initial distribution has {} entries for {n_states} states",
                    d.len()
                )));
            }
            sample_index(&mut world, d)
        }
    };

    let mut states = Vec::with_capacity(length);
    let mut actions = Vec::with_capacity(length * n);
    let mut rewards = Vec::with_capacity(length * n);
    let mut joint = vec![0usize; n];
    for _ in 0..length {
        states.push(s as u32);
        for (i, rng) in agents.iter_mut().enumerate() {
            joint[i] = sample_index(rng, policy.agent(i).row(s));
            actions.push(joint[i] as u32);
        }
        let j = game.encode(&joint);
        for i in 0..n {
            rewards.push(game.reward(i, s, j));
        }
        s = sample_index(&mut world, game.transition_row(s, j));
    }
    Ok(Trajectory {
        num_agents: n,
        states,
        actions,
        rewards,
        seed,
        iteration,
        policy_hashes: policy.agents().iter().map(Policy::fingerprint).collect(),
    })
}

fn check_agent(traj: &Trajectory, agent: usize) -> Result<()> {
    if agent < traj.num_agents {
        Ok(())
    } else {
        Err(Error::AgentOutOfRange {
            index: agent,
            agents: traj.num_agents,
        })
    }
}

/// Mean of agent `i`'s rewards over steps `N1/2 .. N1-1`.
pub fn estimate_rho(traj: &Trajectory, n1: usize, agent: usize) -> Result<f64> {
    check_agent(traj, agent)?;
    if n1 < 2 || !n1.is_multiple_of(2) {
        return Err(Error::Length(format!(
            "N1 = {n1} must be even and positive"
        )));
    }
    if traj.len() < n1 {
        return Err(Error::Length(format!(
            "trajectory of length {} shorter than N1 = {n1}",
            traj.len()
        )));
    }
    let sum: f64 = (n1 / 2..n1).map(|t| traj.reward(t, agent)).sum();
    Ok(sum * 2.0 / n1 as f64)
}

/// Parameters of the score-function gradient estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradientParams {
    /// Number of episodes.
    pub k: usize,
    /// Burn-in; the average reward is estimated on its second half.
    pub n1: usize,
    /// Episode length.
    pub n2: usize,
}

impl GradientParams {
    pub fn trajectory_len(&self) -> usize {
        self.n1 + self.k * self.n2
    }
}

fn warn_on_policy_mismatch(traj: &Trajectory, policy: &Policy, agent: usize) {
    if let Some(&h) = traj.policy_hashes.get(agent) {
        if h != policy.fingerprint() {
            log::warn!(
                "agent {agent}: policy passed to the estimator did not generate the trajectory"
            );
        }
    }
}

/// `g = (1/K) sum_k R(k) e(s^{t_k}, a^{t_k}) / pi(a^{t_k}|s^{t_k})` with
/// `t_k = N1 + k N2` and `R(k)` the centered reward sum over episode `k`.
pub fn estimate_gradient(
    traj: &Trajectory,
    policy: &Policy,
    params: &GradientParams,
    agent: usize,
) -> Result<Table> {
    let rho = estimate_rho(traj, params.n1, agent)?;
    estimate_gradient_with_rho(traj, policy, params, agent, rho)
}

/// [`estimate_gradient`] with the average-reward estimate supplied by the
/// caller (for instance the exact gain).
pub fn estimate_gradient_with_rho(
    traj: &Trajectory,
    policy: &Policy,
    params: &GradientParams,
    agent: usize,
    rho: f64,
) -> Result<Table> {
    check_agent(traj, agent)?;
    if params.k == 0 || params.n2 == 0 {
        return Err(Error::InvalidParameter("K and N2 must be positive".into()));
    }
    if traj.len() != params.trajectory_len() {
        return Err(Error::Length(format!(
            "trajectory has length {}, expected N1 + K N2 = {}",
            traj.len(),
            params.trajectory_len()
        )));
    }
    warn_on_policy_mismatch(traj, policy, agent);
    let mut g = Table::zeros(policy.num_states(), policy.num_actions());
    for k in 0..params.k {
        let tk = params.n1 + k * params.n2;
        let r: f64 = (tk..tk + params.n2)
            .map(|t| traj.reward(t, agent) - rho)
            .sum();
        let (s, a) = (traj.state(tk), traj.action(tk, agent));
        let p = policy.prob(s, a);
        if p <= 0.0 {
            return Err(Error::ZeroSupport {
                agent,
                state: s,
                action: a,
            });
        }
        g[(s, a)] += r / p;
    }
    let inv_k = 1.0 / params.k as f64;
    Ok(g.map(|x| x * inv_k))
}

/// Start times at which the Q-estimation scan samples `state`: from `tau = 0`,
/// a visit at `tau <= B - N1` is recorded and the scan jumps to `tau + 2 N1`.
pub fn q_visit_times(traj: &Trajectory, state: usize, b: usize, n1: usize) -> Result<Vec<usize>> {
    if n1 == 0 {
        return Err(Error::InvalidParameter("N1 must be positive".into()));
    }
    if b <= n1 || b > traj.len() {
        return Err(Error::Length(format!(
            "need N1 < B <= trajectory length (N1 = {n1}, B = {b}, length {})",
            traj.len()
        )));
    }
    let mut visits = Vec::new();
    let mut tau = 0;
    while tau <= b - n1 {
        if traj.state(tau) == state {
            visits.push(tau);
            tau += 2 * n1;
        } else {
            tau += 1;
        }
    }
    Ok(visits)
}

/// Estimate of `Qbar_i(state, .) + N1 rho_i`; zero when `state` is never visited.
pub fn estimate_q(
    traj: &Trajectory,
    state: usize,
    policy: &Policy,
    b: usize,
    n1: usize,
    agent: usize,
) -> Result<Vec<f64>> {
    check_agent(traj, agent)?;
    warn_on_policy_mismatch(traj, policy, agent);
    let visits = q_visit_times(traj, state, b, n1)?;
    let mut y = vec![0.0; policy.num_actions()];
    for &tau in &visits {
        let a = traj.action(tau, agent);
        let p = policy.prob(state, a);
        if p <= 0.0 {
            return Err(Error::ZeroSupport {
                agent,
                state,
                action: a,
            });
        }
        let r: f64 = (tau..tau + n1).map(|t| traj.reward(t, agent)).sum();
        y[a] += r / p;
    }
    if !visits.is_empty() {
        let k = visits.len() as f64;
        y.iter_mut().for_each(|x| *x /= k);
    }
    Ok(y)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha = {alpha} must lie in (0, 1]"
        )))
    }
}

/// Shared loop of the sample-based algorithms: `update` maps
/// `(t, policy, beta)` to the next policy.
fn sampled_loop(
    game: &MarkovGame,
    name: &str,
    iterations: usize,
    step: &StepSize,
    options: &RunOptions,
    mut update: impl FnMut(usize, &JointPolicy, f64) -> Result<JointPolicy>,
) -> Result<RunTrace> {
    if options.eval_every == 0 {
        return Err(Error::InvalidParameter(
            "eval_every must be positive".into(),
        ));
    }
    let mut policy = options
        .initial
        .clone()
        .unwrap_or_else(|| JointPolicy::uniform(game));
    policy.check_shape(game)?;
    let mut records = Vec::new();
    let mut applied = 0;
    let mut abort = None;
    for t in 0..=iterations {
        let beta = step.at(t);
        if t % options.eval_every == 0 || t == iterations {
            match OracleReport::evaluate(game, &policy) {
                Ok(report) => records.push(evaluate_iterate(
                    game,
                    &policy,
                    &report,
                    t,
                    beta,
                    options.reference.as_ref(),
                )?),
                Err(Error::Ergodicity(msg)) => {
                    abort = Some(format!("iteration {t}: {msg}"));
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if t == iterations {
            break;
        }
        policy = update(t, &policy, beta)?;
        applied += 1;
    }
    Ok(RunTrace {
        algorithm: name.into(),
        seed: options.seed,
        records,
        iterations: applied,
        final_policy: policy,
        rate_provenance: None,
        abort,
    })
}

/// Policy gradient ascent with single-trajectory gradient estimates,
/// projected onto the truncated class (floor `alpha / A_i`). The oracle is
/// only used for the recorded measurements.
pub fn run_sampled_pg(
    game: &MarkovGame,
    iterations: usize,
    step: &StepSize,
    params: &GradientParams,
    alpha: f64,
    initial: &InitialState,
    options: &RunOptions,
) -> Result<RunTrace> {
    check_alpha(alpha)?;
    sampled_loop(
        game,
        "sampled_pg",
        iterations,
        step,
        options,
        |t, policy, beta| {
            let traj = simulate(
                game,
                policy,
                params.trajectory_len(),
                options.seed,
                t as u64,
                initial,
            )?;
            let agents = (0..game.num_agents())
                .map(|i| {
                    let g = estimate_gradient(&traj, policy.agent(i), params, i)?;
                    project_step(
                        policy.agent(i),
                        &g,
                        beta,
                        alpha / game.num_actions(i) as f64,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(JointPolicy::new(agents))
        },
    )
}

/// Proximal-Q with windowed Q estimates from one `B`-step trajectory per
/// iteration.
#[allow(clippy::too_many_arguments)]
pub fn run_sampled_proxq(
    game: &MarkovGame,
    iterations: usize,
    step: &StepSize,
    b: usize,
    n1: usize,
    alpha: f64,
    initial: &InitialState,
    options: &RunOptions,
) -> Result<RunTrace> {
    check_alpha(alpha)?;
    sampled_loop(
        game,
        "sampled_proxq",
        iterations,
        step,
        options,
        |t, policy, beta| {
            let traj = simulate(game, policy, b, options.seed, t as u64, initial)?;
            let agents = (0..game.num_agents())
                .map(|i| {
                    let pi = policy.agent(i);
                    let mut q = Table::zeros(game.num_states(), game.num_actions(i));
                    for s in 0..game.num_states() {
                        let row = estimate_q(&traj, s, pi, b, n1, i)?;
                        q.row_mut(s).copy_from_slice(&row);
                    }
                    project_step(pi, &q, beta, alpha / game.num_actions(i) as f64)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(JointPolicy::new(agents))
        },
    )
}
