//! Oracle-driven policy updates: independent projected policy gradient,
//! independent proximal-Q and independent natural policy gradient, their
//! theorem learning rates, and the training loop that records a [`RunTrace`].

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::constants::{GameConstants, Provenance};
use crate::game::{JointPolicy, MarkovGame, Policy};
use crate::oracle::{self, OracleReport};
use crate::table::Table;
use crate::{Error, Result};

/// Euclidean projection of `v` onto `{p : sum p = 1, p >= lower}`.
pub fn project_simplex(v: &[f64], lower: f64) -> Result<Vec<f64>> {
    let n = v.len();
    if n == 0 || lower < 0.0 || lower * n as f64 > 1.0 + 1e-15 {
        return Err(Error::Infeasible {
            lower_bound: lower,
            len: n,
        });
    }
    if v.iter().all(|&x| x >= lower) && v.iter().sum::<f64>() == 1.0 {
        return Ok(v.to_vec());
    }
    let mass = 1.0 - lower * n as f64;
    if mass <= 0.0 {
        return Ok(alloc::vec![1.0 / n as f64; n]);
    }
    let mut u: Vec<f64> = v.iter().map(|x| x - lower).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - mass) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    Ok(v.iter()
        .map(|x| (x - lower - theta).max(0.0) + lower)
        .collect())
}

/// Row-wise `Proj(pi + beta * direction)` with floor `lower`.
pub fn project_step(pi: &Policy, direction: &Table, beta: f64, lower: f64) -> Result<Policy> {
    let mut t = Table::zeros(pi.num_states(), pi.num_actions());
    let mut buf = Vec::with_capacity(pi.num_actions());
    for s in 0..pi.num_states() {
        buf.clear();
        buf.extend(
            pi.row(s)
                .iter()
                .zip(direction.row(s))
                .map(|(p, d)| p + beta * d),
        );
        let row = project_simplex(&buf, lower)?;
        t.row_mut(s).copy_from_slice(&row);
    }
    Ok(Policy::from_table_unchecked(t))
}

/// Independent projected policy gradient, all agents from the same oracle.
pub fn pg_update(policy: &JointPolicy, report: &OracleReport, beta: f64) -> Result<JointPolicy> {
    let agents = (0..policy.num_agents())
        .map(|i| project_step(policy.agent(i), &report.gradients[i], beta, 0.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(JointPolicy::new(agents))
}

pub fn pg_step(game: &MarkovGame, policy: &JointPolicy, beta: f64) -> Result<JointPolicy> {
    pg_update(policy, &OracleReport::evaluate(game, policy)?, beta)
}

/// Independent proximal-Q: the per-state proximal argmax is `Proj(pi + beta Qbar)`.
pub fn proxq_update(policy: &JointPolicy, report: &OracleReport, beta: f64) -> Result<JointPolicy> {
    let agents = (0..policy.num_agents())
        .map(|i| project_step(policy.agent(i), report.marginal(i, i), beta, 0.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(JointPolicy::new(agents))
}

pub fn proxq_step(game: &MarkovGame, policy: &JointPolicy, beta: f64) -> Result<JointPolicy> {
    proxq_update(policy, &OracleReport::evaluate(game, policy)?, beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpgStep {
    pub policy: JointPolicy,
    /// `log Z_i^s`, indexed `[agent][state]`.
    pub log_normalizers: Vec<Vec<f64>>,
}

/// Multiplicative-weights row update `pi exp(beta * direction) / Z`.
pub fn exponential_update(
    agent: usize,
    pi: &Policy,
    direction: &Table,
    beta: f64,
) -> Result<(Policy, Vec<f64>)> {
    let mut t = Table::zeros(pi.num_states(), pi.num_actions());
    let mut log_z = Vec::with_capacity(pi.num_states());
    for s in 0..pi.num_states() {
        if let Some(a) = pi.row(s).iter().position(|&p| p <= 0.0) {
            return Err(Error::ZeroSupport {
                agent,
                state: s,
                action: a,
            });
        }
        let d = direction.row(s);
        let m = d.iter().map(|x| beta * x).fold(f64::NEG_INFINITY, f64::max);
        let row = t.row_mut(s);
        let mut z = 0.0;
        for (a, out) in row.iter_mut().enumerate() {
            *out = pi.prob(s, a) * libm::exp(beta * d[a] - m);
            z += *out;
        }
        row.iter_mut().for_each(|x| *x /= z);
        log_z.push(libm::log(z) + m);
    }
    Ok((Policy::from_table_unchecked(t), log_z))
}

/// Independent NPG in closed form, driven by the advantage `Abar_i`.
pub fn npg_update(policy: &JointPolicy, report: &OracleReport, beta: f64) -> Result<NpgStep> {
    let mut agents = Vec::with_capacity(policy.num_agents());
    let mut log_normalizers = Vec::with_capacity(policy.num_agents());
    for i in 0..policy.num_agents() {
        let (p, z) = exponential_update(i, policy.agent(i), &report.advantage(i, i), beta)?;
        agents.push(p);
        log_normalizers.push(z);
    }
    Ok(NpgStep {
        policy: JointPolicy::new(agents),
        log_normalizers,
    })
}

pub fn npg_step(game: &MarkovGame, policy: &JointPolicy, beta: f64) -> Result<NpgStep> {
    npg_update(policy, &OracleReport::evaluate(game, policy)?, beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Pg,
    ProxQ,
    Npg,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Pg => "pg",
            Algorithm::ProxQ => "proxq",
            Algorithm::Npg => "npg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pg" => Some(Algorithm::Pg),
            "proxq" => Some(Algorithm::ProxQ),
            "npg" => Some(Algorithm::Npg),
            _ => None,
        }
    }

    /// The learning-rate rule of this algorithm's convergence theorem.
    pub fn theorem_rule(self) -> RateRule {
        match self {
            Algorithm::Pg => RateRule::PgTheorem1,
            Algorithm::ProxQ => RateRule::ProxqTheorem3,
            Algorithm::Npg => RateRule::NpgTheorem4,
        }
    }

    pub fn update(
        self,
        policy: &JointPolicy,
        report: &OracleReport,
        beta: f64,
    ) -> Result<JointPolicy> {
        match self {
            Algorithm::Pg => pg_update(policy, report, beta),
            Algorithm::ProxQ => proxq_update(policy, report, beta),
            Algorithm::Npg => npg_update(policy, report, beta).map(|s| s.policy),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateRule {
    PgTheorem1,
    ProxqTheorem3,
    NpgTheorem4,
    Manual(f64),
}

impl RateRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            RateRule::PgTheorem1 => "pg_theorem1",
            RateRule::ProxqTheorem3 => "proxq_theorem3",
            RateRule::NpgTheorem4 => "npg_theorem4",
            RateRule::Manual(_) => "manual",
        }
    }

    /// Learning rate prescribed by the rule. For a single agent the terms
    /// with an `N - 1` denominator are infinite and are left out.
    pub fn beta(&self, c: &GameConstants) -> f64 {
        let lvr = 1.0 - c.gamma.value;
        let coupling = if c.num_agents > 1 {
            (c.num_agents - 1) as f64
                * (c.kappa_q.value + c.num_states as f64 * c.kappa.value * c.kappa.value)
        } else {
            f64::INFINITY
        };
        match *self {
            RateRule::Manual(b) => b,
            RateRule::PgTheorem1 => 1.0 / c.l_phi.value,
            RateRule::ProxqTheorem3 => {
                let smooth = lvr / (2.0 * c.l_phi.value);
                if coupling.is_finite() {
                    f64::max(lvr / (coupling * c.max_actions as f64), smooth)
                } else {
                    smooth
                }
            }
            RateRule::NpgTheorem4 => {
                let smooth = lvr / c.l_phi.value;
                let inner = if coupling.is_finite() {
                    f64::max(lvr / coupling, smooth)
                } else {
                    smooth
                };
                if c.kappa.value > 0.0 {
                    f64::min(inner, 1.0 / (2.0 * c.kappa.value))
                } else {
                    inner
                }
            }
        }
    }

    /// Provenance of the constants the rule consumed (`None` for manual).
    pub fn provenance(&self, c: &GameConstants) -> Option<Provenance> {
        match self {
            RateRule::Manual(_) => None,
            RateRule::PgTheorem1 => Some(c.l_phi.provenance),
            _ => Some(
                c.gamma
                    .provenance
                    .weakest(c.l_phi.provenance)
                    .weakest(c.kappa_q.provenance)
                    .weakest(c.kappa.provenance),
            ),
        }
    }
}

/// Learning rate as a function of the iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum StepSize {
    Constant(f64),
    /// `(iterations, beta)` pieces applied in order; the last value persists.
    Piecewise(Vec<(usize, f64)>),
}

impl StepSize {
    pub fn at(&self, t: usize) -> f64 {
        match self {
            StepSize::Constant(b) => *b,
            StepSize::Piecewise(pieces) => {
                let mut end = 0;
                for &(len, b) in pieces {
                    end += len;
                    if t < end {
                        return b;
                    }
                }
                pieces.last().map(|p| p.1).unwrap_or(0.0)
            }
        }
    }

    /// Total length of a piecewise schedule.
    pub fn horizon(&self) -> Option<usize> {
        match self {
            StepSize::Constant(_) => None,
            StepSize::Piecewise(p) => Some(p.iter().map(|x| x.0).sum()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    /// `NaN` when the game has no certified potential.
    pub phi: f64,
    pub nash_gap: f64,
    pub c_t: f64,
    /// Learning rate applied at step `t` (the one producing `pi^{t+1}`).
    pub beta: f64,
    /// `(1/N) sum_i ||pi_i^t - pi_i^*||_1` when a reference policy was given.
    pub policy_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub algorithm: String,
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    /// Number of updates actually applied.
    pub iterations: usize,
    pub final_policy: JointPolicy,
    pub rate_provenance: Option<Provenance>,
    /// Set when the run stopped early on an ergodicity failure.
    pub abort: Option<String>,
}

impl RunTrace {
    fn gaps_before(&self, horizon: usize) -> impl Iterator<Item = f64> + '_ {
        self.records
            .iter()
            .filter(move |r| r.t < horizon)
            .map(|r| r.nash_gap)
    }

    /// Mean Nash gap over the evaluated iterates `t < horizon`.
    pub fn nash_regret(&self, horizon: usize) -> f64 {
        mean(self.gaps_before(horizon))
    }

    /// Mean squared Nash gap over the evaluated iterates `t < horizon`.
    pub fn nash_regret_star(&self, horizon: usize) -> f64 {
        mean(self.gaps_before(horizon).map(|g| g * g))
    }

    pub fn min_gap(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.nash_gap)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn first_below(&self, tol: f64) -> Option<usize> {
        self.records.iter().find(|r| r.nash_gap <= tol).map(|r| r.t)
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Evaluate every this many iterations (the final iterate is always evaluated).
    pub eval_every: usize,
    pub seed: u64,
    pub reference: Option<JointPolicy>,
    /// Starting policy; uniform when `None`.
    pub initial: Option<JointPolicy>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            eval_every: 10,
            seed: 0,
            reference: None,
            initial: None,
        }
    }
}

/// Oracle measurements of one iterate.
pub fn evaluate_iterate(
    game: &MarkovGame,
    policy: &JointPolicy,
    report: &OracleReport,
    t: usize,
    beta: f64,
    reference: Option<&JointPolicy>,
) -> Result<TraceRecord> {
    let gap = oracle::nash_gap_with_gains(game, policy, &report.rho)?;
    let phi = match oracle::potential_from_report(game, policy, report) {
        Ok(v) => v,
        Err(Error::UnsupportedStructure) => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok(TraceRecord {
        t,
        phi,
        nash_gap: gap.gap,
        c_t: oracle::exploration_factor(policy, report),
        beta,
        policy_distance: reference.map(|r| policy.mean_l1_distance(r)),
    })
}

/// Runs `algorithm` for `iterations` updates from the uniform policy.
pub fn run_oracle_algorithm(
    game: &MarkovGame,
    algorithm: Algorithm,
    iterations: usize,
    step: &StepSize,
    options: &RunOptions,
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
        let report = match OracleReport::evaluate(game, &policy) {
            Ok(r) => r,
            Err(Error::Ergodicity(msg)) => {
                abort = Some(format!("iteration {t}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let beta = step.at(t);
        if t % options.eval_every == 0 || t == iterations {
            records.push(evaluate_iterate(
                game,
                &policy,
                &report,
                t,
                beta,
                options.reference.as_ref(),
            )?);
        }
        if t == iterations {
            break;
        }
        policy = algorithm.update(&policy, &report, beta)?;
        applied += 1;
    }
    Ok(RunTrace {
        algorithm: algorithm.as_str().into(),
        seed: options.seed,
        records,
        iterations: applied,
        final_policy: policy,
        rate_provenance: None,
        abort,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::manual_fixture;

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn projection_examples() {
        close(
            &project_simplex(&[1.0, 0.5], 0.0).unwrap(),
            &[0.75, 0.25],
            1e-15,
        );
        close(
            &project_simplex(&[2.0, -1.0], 0.0).unwrap(),
            &[1.0, 0.0],
            0.0,
        );
        assert_eq!(
            project_simplex(&[0.3, 0.7], 0.0).unwrap(),
            alloc::vec![0.3, 0.7]
        );
        close(
            &project_simplex(&[1.0, 0.0], 0.1).unwrap(),
            &[0.9, 0.1],
            1e-15,
        );
        assert!(matches!(
            project_simplex(&[0.5, 0.5], 0.6),
            Err(Error::Infeasible { len: 2, .. })
        ));
        close(
            &project_simplex(&[3.0, 1.0], 0.5).unwrap(),
            &[0.5, 0.5],
            1e-15,
        );
    }

    #[test]
    fn proxq_row_example() {
        let pi = Policy::uniform(1, 2);
        let q = Table::from_vec(1, 2, alloc::vec![1.0, 0.0]).unwrap();
        let out = project_step(&pi, &q, 0.1, 0.0).unwrap();
        close(out.row(0), &[0.55, 0.45], 1e-15);
    }

    #[test]
    fn npg_row_example() {
        let pi = Policy::uniform(1, 2);
        let q = Table::from_vec(1, 2, alloc::vec![libm::log(2.0), 0.0]).unwrap();
        let (out, _) = exponential_update(0, &pi, &q, 1.0).unwrap();
        close(out.row(0), &[2.0 / 3.0, 1.0 / 3.0], 1e-15);
        let (same, z) = exponential_update(0, &pi, &q, 0.0).unwrap();
        assert_eq!(same, pi);
        assert_eq!(z, alloc::vec![0.0]);
        let zero = Policy::deterministic(2, &[0]);
        assert_eq!(
            exponential_update(3, &zero, &q, 1.0).unwrap_err(),
            Error::ZeroSupport {
                agent: 3,
                state: 0,
                action: 1
            }
        );
    }

    #[test]
    fn pg_step_on_manual_fixture() {
        let game = manual_fixture();
        let next = pg_step(&game, &JointPolicy::uniform(&game), 0.1).unwrap();
        assert!((next.agent(0).prob(0, 0) - 0.52625).abs() < 1e-12);
        assert_eq!(
            pg_step(&game, &JointPolicy::uniform(&game), 0.0).unwrap(),
            JointPolicy::uniform(&game)
        );
    }

    #[test]
    fn npg_advantage_and_q_agree() {
        let game = manual_fixture();
        let pol = JointPolicy::uniform(&game);
        let rep = OracleReport::evaluate(&game, &pol).unwrap();
        let by_adv = npg_update(&pol, &rep, 0.7).unwrap().policy;
        for i in 0..2 {
            let (by_q, _) = exponential_update(i, pol.agent(i), rep.marginal(i, i), 0.7).unwrap();
            close(
                by_q.table().as_slice(),
                by_adv.agent(i).table().as_slice(),
                1e-15,
            );
        }
    }

    #[test]
    fn piecewise_schedule() {
        let s = StepSize::Piecewise(alloc::vec![(2, 0.5), (3, 0.1)]);
        let got: Vec<f64> = (0..7).map(|t| s.at(t)).collect();
        assert_eq!(got, alloc::vec![0.5, 0.5, 0.1, 0.1, 0.1, 0.1, 0.1]);
        assert_eq!(s.horizon(), Some(5));
    }

    #[test]
    fn zero_iterations_records_uniform_gap() {
        let game = manual_fixture();
        let trace = run_oracle_algorithm(
            &game,
            Algorithm::Pg,
            0,
            &StepSize::Constant(0.01),
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(trace.records.len(), 1);
        assert!((trace.records[0].nash_gap - 0.34375).abs() < 1e-12);
        assert_eq!(trace.iterations, 0);
    }
}
