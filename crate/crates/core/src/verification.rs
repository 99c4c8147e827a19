//! Executable property checks over a game: the performance-difference
//! identity, the gradient formula, sensitivity, mixing and span bounds,
//! smoothness of the potential, and NPG monotone improvement.
//!
//! Bound checks that consume [`GameConstants`] only produce hard verdicts when
//! the constants are exact; otherwise the result is informational.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::algorithms::{npg_update, project_step, RateRule};
use crate::constants::{smoothness_l, GameConstants};
use crate::game::{JointPolicy, MarkovGame, Policy};
use crate::linalg;
use crate::oracle::{self, OracleReport, PolicyChain};
use crate::random::{dirichlet_joint, dirichlet_policy, stream, tangent_direction, StreamRng};
use crate::table::Table;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Pass,
    Fail,
    Informational,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Informational => "informational",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub property: String,
    pub game: String,
    pub probes: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl PropertyResult {
    fn new(
        property: &str,
        game: &str,
        probes: usize,
        max_violation: f64,
        tolerance: f64,
        hard: bool,
    ) -> Self {
        let verdict = if !hard {
            Verdict::Informational
        } else if max_violation <= tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        PropertyResult {
            property: property.into(),
            game: game.into(),
            probes,
            max_violation,
            tolerance,
            verdict,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

fn rho_of(game: &MarkovGame, policy: &JointPolicy, agent: usize) -> Result<f64> {
    oracle::average_reward(game, policy, agent)
}

fn pick(rng: &mut StreamRng, n: usize) -> usize {
    rng.random_range(0..n)
}

/// Both forms of the performance-difference identity on random
/// `(i, j, pi_j, pi_j', pi_{-j})`. Returns the Q form then the advantage form.
pub fn check_performance_difference(
    game: &MarkovGame,
    game_id: &str,
    probes: usize,
    seed: u64,
) -> Result<[PropertyResult; 2]> {
    let n = game.num_agents();
    let (mut worst_q, mut worst_adv) = (0.0f64, 0.0f64);
    for k in 0..probes {
        let mut rng = stream(seed, k as u64, 0);
        let (i, j) = (pick(&mut rng, n), pick(&mut rng, n));
        let base = dirichlet_joint(&mut rng, game);
        let alt = base.with_agent(
            j,
            dirichlet_policy(&mut rng, game.num_states(), game.num_actions(j)),
        );
        let (lhs_rho, rhs_q, rhs_adv) = performance_difference_sides(game, &base, &alt, i, j)?;
        worst_q = worst_q.max((lhs_rho - rhs_q).abs());
        worst_adv = worst_adv.max((lhs_rho - rhs_adv).abs());
    }
    Ok([
        PropertyResult::new(
            "performance_difference",
            game_id,
            probes,
            worst_q,
            1e-9,
            true,
        ),
        PropertyResult::new(
            "performance_difference_advantage",
            game_id,
            probes,
            worst_adv,
            1e-9,
            true,
        ),
    ])
}

/// `(rho_i(pi) - rho_i(pi'), E_nu <Qbar', pi_j - pi_j'>, E_nu <pi_j, Abar'>)`
/// where `pi` and `pi'` differ only in agent `j`.
pub fn performance_difference_sides(
    game: &MarkovGame,
    pi: &JointPolicy,
    pi_alt: &JointPolicy,
    i: usize,
    j: usize,
) -> Result<(f64, f64, f64)> {
    let rep = OracleReport::evaluate(game, pi)?;
    let rep_alt = OracleReport::evaluate(game, pi_alt)?;
    let qbar = rep_alt.marginal(j, i);
    let adv = rep_alt.advantage(j, i);
    let (pj, pj_alt) = (pi.agent(j), pi_alt.agent(j));
    let (mut rhs_q, mut rhs_adv) = (0.0, 0.0);
    for (s, &m) in rep.nu().iter().enumerate() {
        for a in 0..pj.num_actions() {
            rhs_q += m * qbar[(s, a)] * (pj.prob(s, a) - pj_alt.prob(s, a));
            rhs_adv += m * pj.prob(s, a) * adv[(s, a)];
        }
    }
    Ok((rep.rho[i] - rep_alt.rho[i], rhs_q, rhs_adv))
}

/// Interior probe: Dirichlet rows mixed with 10% uniform.
fn interior_joint(rng: &mut StreamRng, game: &MarkovGame) -> JointPolicy {
    let d = dirichlet_joint(rng, game);
    JointPolicy::new(
        d.agents()
            .iter()
            .map(|p| {
                let u = 1.0 / p.num_actions() as f64;
                Policy::new(p.table().map(|x| 0.9 * x + 0.1 * u)).unwrap_or_else(|_| p.clone())
            })
            .collect(),
    )
}

fn shifted(policy: &Policy, direction: &Table, h: f64) -> Policy {
    Policy::from_table_unchecked(Table::from_fn(
        policy.num_states(),
        policy.num_actions(),
        |s, a| policy.prob(s, a) + h * direction[(s, a)],
    ))
}

/// Central finite differences of `rho_i` along tangent directions of `pi_j`
/// against `<Qbar_{j;i} nu, u>`.
pub fn check_gradient(
    game: &MarkovGame,
    game_id: &str,
    probes: usize,
    h: f64,
    seed: u64,
) -> Result<PropertyResult> {
    let n = game.num_agents();
    let mut worst = 0.0f64;
    let mut max_lambda: f64 = 0.0;
    for k in 0..probes {
        let mut rng = stream(seed, k as u64, 1);
        let (i, j) = (pick(&mut rng, n), pick(&mut rng, n));
        let pi = interior_joint(&mut rng, game);
        let u = tangent_direction(&mut rng, game.num_states(), game.num_actions(j));
        let rep = OracleReport::evaluate(game, &pi)?;
        max_lambda = max_lambda.max(linalg::second_eigen_modulus(
            &rep.chain.transition,
            rep.nu(),
        )?);
        let analytic = rep.gradient(j, i).dot(&u);
        let plus = pi.with_agent(j, shifted(pi.agent(j), &u, h));
        let minus = pi.with_agent(j, shifted(pi.agent(j), &u, -h));
        let fd = (rho_of(game, &plus, i)? - rho_of(game, &minus, i)?) / (2.0 * h);
        worst = worst.max((fd - analytic).abs());
    }
    let l_est = smoothness_l(
        game.num_states(),
        game.max_actions(),
        1.0 / (1.0 - max_lambda),
    );
    let tol = f64::max(1e-6, 10.0 * h * h * l_est);
    Ok(PropertyResult::new(
        "gradient", game_id, probes, worst, tol, true,
    ))
}

/// The four sensitivity inequalities on random unilateral policy pairs.
pub fn check_sensitivity(
    game: &MarkovGame,
    game_id: &str,
    constants: &GameConstants,
    probes: usize,
    seed: u64,
) -> Result<PropertyResult> {
    let n = game.num_agents();
    let s_count = game.num_states() as f64;
    let (kappa, kappa1, kq) = (
        constants.kappa.value,
        constants.kappa1.value,
        constants.kappa_q.value,
    );
    let v_factor = kappa1 * (2.0 + s_count * (kappa + kappa1) + s_count * kappa * kappa1);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..probes {
        let mut rng = stream(seed, k as u64, 2);
        let j = pick(&mut rng, n);
        let pi = dirichlet_joint(&mut rng, game);
        let alt = pi.with_agent(
            j,
            dirichlet_policy(&mut rng, game.num_states(), game.num_actions(j)),
        );
        let d = pi.agent(j).dist_1_inf(alt.agent(j));
        let (a, b) = (
            OracleReport::evaluate(game, &pi)?,
            OracleReport::evaluate(game, &alt)?,
        );
        let nu_diff = max_abs_diff(a.nu(), b.nu());
        worst = worst.max(nu_diff - kappa * d);
        for i in 0..n {
            worst = worst.max((a.rho[i] - b.rho[i]).abs() - kappa * d);
            worst = worst.max(max_abs_diff(&a.values[i], &b.values[i]) - v_factor * d);
            worst = worst.max(max_abs_diff(&a.q[i], &b.q[i]) - kq * d);
        }
    }
    Ok(PropertyResult::new(
        "sensitivity",
        game_id,
        probes,
        worst.max(0.0),
        0.0,
        constants.is_exact(),
    ))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `sup_s ||P^t(.|s) - nu||_1` for `t = 1..=t_max`, from powers of the
/// deflated matrix `P - 1 nu` (which equal `P^t - 1 nu`).
pub fn mixing_profile(chain: &PolicyChain, t_max: usize) -> Vec<f64> {
    let d = linalg::deflate(&chain.transition, &chain.nu);
    let mut power = d.clone();
    let mut out = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        if t > 1 {
            power = &power * &d;
        }
        out.push(linalg::inf_norm(&power));
    }
    out
}

/// Geometric mixing bound `C_p varrho^t` on the given probe policies.
pub fn check_mixing(
    game: &MarkovGame,
    game_id: &str,
    constants: &GameConstants,
    probes: &[JointPolicy],
    t_max: usize,
) -> Result<PropertyResult> {
    let (cp, rho) = (constants.c_p.value, constants.varrho.value);
    let mut worst = f64::NEG_INFINITY;
    for policy in probes {
        let chain = PolicyChain::new(game, policy)?;
        for (k, lhs) in mixing_profile(&chain, t_max).into_iter().enumerate() {
            worst = worst.max(lhs - cp * libm::pow(rho, (k + 1) as f64));
        }
    }
    Ok(PropertyResult::new(
        "mixing",
        game_id,
        probes.len(),
        worst.max(0.0),
        0.0,
        constants.is_exact(),
    ))
}

/// `||Q_i||_inf <= C_p kappa_0` on the given probe policies.
pub fn check_span_bound(
    game: &MarkovGame,
    game_id: &str,
    constants: &GameConstants,
    probes: &[JointPolicy],
) -> Result<PropertyResult> {
    let bound = constants.c_p.value * constants.kappa0.value;
    let mut worst = f64::NEG_INFINITY;
    for policy in probes {
        let rep = OracleReport::evaluate(game, policy)?;
        for q in &rep.q {
            worst = worst.max(q.iter().fold(0.0f64, |m, x| m.max(x.abs())) - bound);
        }
    }
    Ok(PropertyResult::new(
        "q_span_bound",
        game_id,
        probes.len(),
        worst.max(0.0),
        0.0,
        constants.is_exact(),
    ))
}

/// Concatenated `dPhi/dPi_j = Qbar_j nu` over agents.
fn potential_gradient(report: &OracleReport) -> Vec<f64> {
    report
        .gradients
        .iter()
        .flat_map(|g| g.as_slice().iter().copied())
        .collect()
}

/// Gradient-difference ratio `||grad Phi(pi) - grad Phi(pi')|| / ||pi - pi'||`
/// against `L_Phi` on nearby pairs at Euclidean distance about `distance`.
pub fn check_smoothness(
    game: &MarkovGame,
    game_id: &str,
    constants: &GameConstants,
    probes: usize,
    distance: f64,
    seed: u64,
) -> Result<PropertyResult> {
    if !oracle::has_potential(game) {
        return Err(crate::Error::UnsupportedStructure);
    }
    let mut worst = f64::NEG_INFINITY;
    for k in 0..probes {
        let mut rng = stream(seed, k as u64, 3);
        let pi = dirichlet_joint(&mut rng, game);
        let near = JointPolicy::new(
            pi.agents()
                .iter()
                .map(|p| {
                    let u = tangent_direction(&mut rng, p.num_states(), p.num_actions());
                    project_step(p, &u, distance, 0.0)
                })
                .collect::<Result<Vec<_>>>()?,
        );
        let dist = pi.l2_distance(&near);
        let ratio = if dist == 0.0 {
            0.0
        } else {
            let (ga, gb) = (
                potential_gradient(&OracleReport::evaluate(game, &pi)?),
                potential_gradient(&OracleReport::evaluate(game, &near)?),
            );
            libm::sqrt(ga.iter().zip(&gb).map(|(x, y)| (x - y) * (x - y)).sum()) / dist
        };
        worst = worst.max(ratio - constants.l_phi.value);
    }
    Ok(PropertyResult::new(
        "smoothness",
        game_id,
        probes,
        worst.max(0.0),
        0.0,
        constants.is_exact(),
    ))
}

/// Per-step record of the NPG monotone-improvement check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpgStepCheck {
    pub phi_gain: f64,
    /// `(1/beta) sum_i E_{s ~ nu^{pi_i^{t+1}, pi_{-i}^t}} log Z_i^s`.
    pub normalizer_bound: f64,
}

/// Runs NPG for `iterations` steps from the uniform policy and records, per
/// step, the potential increase and the normalizer lower bound.
pub fn npg_monotone_trace(
    game: &MarkovGame,
    beta: f64,
    iterations: usize,
) -> Result<Vec<NpgStepCheck>> {
    let mut policy = JointPolicy::uniform(game);
    let mut report = OracleReport::evaluate(game, &policy)?;
    let mut phi = oracle::potential_from_report(game, &policy, &report)?;
    let mut out = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let step = npg_update(&policy, &report, beta)?;
        let mut bound = 0.0;
        if beta > 0.0 {
            for (i, log_z) in step.log_normalizers.iter().enumerate() {
                let mixed = policy.with_agent(i, step.policy.agent(i).clone());
                let nu = PolicyChain::new(game, &mixed)?.nu;
                bound += nu.iter().zip(log_z).map(|(m, z)| m * z).sum::<f64>();
            }
            bound /= beta;
        }
        policy = step.policy;
        report = OracleReport::evaluate(game, &policy)?;
        let next_phi = oracle::potential_from_report(game, &policy, &report)?;
        out.push(NpgStepCheck {
            phi_gain: next_phi - phi,
            normalizer_bound: bound,
        });
        phi = next_phi;
    }
    Ok(out)
}

/// Monotone improvement `Phi(t+1) - Phi(t) >= bound >= 0` at every step.
pub fn check_npg_monotone(
    game: &MarkovGame,
    game_id: &str,
    beta: f64,
    iterations: usize,
) -> Result<PropertyResult> {
    let steps = npg_monotone_trace(game, beta, iterations)?;
    let worst = steps
        .iter()
        .map(|c| f64::max(c.normalizer_bound - c.phi_gain, -c.normalizer_bound))
        .fold(0.0, f64::max);
    Ok(PropertyResult::new(
        "npg_monotone",
        game_id,
        iterations,
        worst,
        1e-9,
        true,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Fast,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub results: Vec<PropertyResult>,
}

impl SuiteReport {
    /// No hard failure (informational results never fail the suite).
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.verdict != Verdict::Fail)
    }
}

/// Probe policies for the bound checks: uniform plus Dirichlet draws.
pub fn probe_set(game: &MarkovGame, count: usize, seed: u64) -> Vec<JointPolicy> {
    let mut rng = stream(seed, 0, 4);
    let mut v = vec![JointPolicy::uniform(game)];
    v.extend((0..count).map(|_| dirichlet_joint(&mut rng, game)));
    v
}

pub fn run_suite(
    game: &MarkovGame,
    game_id: &str,
    constants: &GameConstants,
    suite: Suite,
    seed: u64,
) -> Result<SuiteReport> {
    let (probes, npg_steps) = match suite {
        Suite::Fast => (20, 100),
        Suite::Full => (100, 500),
    };
    let mut results = Vec::new();
    results.extend(check_performance_difference(game, game_id, probes, seed)?);
    results.push(check_gradient(game, game_id, probes.min(20), 1e-5, seed)?);
    results.push(check_sensitivity(game, game_id, constants, probes, seed)?);
    let policies = probe_set(game, probes, seed);
    results.push(check_mixing(game, game_id, constants, &policies, 50)?);
    results.push(check_span_bound(game, game_id, constants, &policies)?);
    if oracle::has_potential(game) {
        results.push(check_smoothness(
            game,
            game_id,
            constants,
            probes.min(50),
            1e-3,
            seed,
        )?);
        let beta = RateRule::NpgTheorem4.beta(constants);
        results.push(check_npg_monotone(game, game_id, beta, npg_steps)?);
    }
    Ok(SuiteReport { results })
}

/// Name of every property [`run_suite`] may emit.
pub fn property_names() -> Vec<String> {
    [
        "performance_difference",
        "performance_difference_advantage",
        "gradient",
        "sensitivity",
        "mixing",
        "q_span_bound",
        "smoothness",
        "npg_monotone",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{estimate_constants, ConstantsConfig};
    use crate::generators::manual_fixture;

    #[test]
    fn manual_fixture_suite_passes() {
        let game = manual_fixture();
        let c = estimate_constants(&game, &ConstantsConfig::default(), &[]).unwrap();
        let report = run_suite(&game, "manual", &c, Suite::Fast, 1).unwrap();
        for r in &report.results {
            assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        }
    }

    #[test]
    fn manual_mixing_values() {
        let game = manual_fixture();
        let chain = PolicyChain::new(&game, &JointPolicy::uniform(&game)).unwrap();
        let prof = mixing_profile(&chain, 50);
        assert!((prof[0] - 0.9).abs() < 1e-12);
        assert!(prof[49] <= 1e-8);
    }

    #[test]
    fn identical_policies_have_no_difference() {
        let game = manual_fixture();
        let pol = JointPolicy::uniform(&game);
        let (a, b, c) = performance_difference_sides(&game, &pol, &pol, 0, 1).unwrap();
        assert_eq!(a, 0.0);
        assert!(b.abs() < 1e-15 && c.abs() < 1e-15);
    }

    #[test]
    fn zero_rate_npg_is_flat() {
        let game = manual_fixture();
        let steps = npg_monotone_trace(&game, 0.0, 3).unwrap();
        assert!(steps
            .iter()
            .all(|c| c.phi_gain == 0.0 && c.normalizer_bound == 0.0));
    }
}
