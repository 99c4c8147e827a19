//! Structural constants of a game: least-visited rate, mixing coefficient,
//! Q-span, fundamental-matrix norm, distribution mismatch and the smoothness
//! constants built from them.
//!
//! Maxima and minima over the policy class are taken over a finite probe set.
//! When every deterministic joint policy fits in the enumeration budget and
//! transitions do not depend on actions, the probe extrema are the true ones
//! (stationary quantities are then policy independent and everything else is
//! multi-affine in the policy rows), and the constants are flagged exact.

use alloc::vec;
use alloc::vec::Vec;

use crate::game::{marginalize_joint, JointPolicy, MarkovGame, Policy};
use crate::linalg;
use crate::oracle::{self, PolicyChain};
use crate::random::{dirichlet_joint, stream};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Exact,
    SampledLowerBound,
    AnalyticUpperBound,
}

impl Provenance {
    fn rank(self) -> u8 {
        match self {
            Provenance::Exact => 2,
            Provenance::AnalyticUpperBound => 1,
            Provenance::SampledLowerBound => 0,
        }
    }

    /// The less trustworthy of the two labels.
    pub fn weakest(self, other: Provenance) -> Provenance {
        if other.rank() < self.rank() {
            other
        } else {
            self
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Exact => "exact",
            Provenance::SampledLowerBound => "sampled_lower_bound",
            Provenance::AnalyticUpperBound => "analytic_upper_bound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant {
    pub value: f64,
    pub provenance: Provenance,
}

impl Constant {
    fn new(value: f64, provenance: Provenance) -> Self {
        Constant { value, provenance }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameConstants {
    pub gamma: Constant,
    pub kappa0: Constant,
    pub c_p: Constant,
    pub varrho: Constant,
    pub kappa: Constant,
    pub kappa1: Constant,
    pub kappa_q: Constant,
    pub d: Constant,
    pub l: Constant,
    pub l_phi: Constant,
    pub c_phi: Constant,
    pub num_states: usize,
    pub num_agents: usize,
    pub max_actions: usize,
    pub num_probes: usize,
    pub enumerated: bool,
}

impl GameConstants {
    /// Whether the constants the bound checks rely on are exact.
    pub fn is_exact(&self) -> bool {
        [
            self.gamma,
            self.kappa0,
            self.c_p,
            self.varrho,
            self.kappa,
            self.kappa1,
            self.kappa_q,
            self.d,
            self.l,
            self.l_phi,
        ]
        .iter()
        .all(|c| c.provenance == Provenance::Exact)
    }

    /// Name and value of every constant, in a fixed order.
    pub fn entries(&self) -> [(&'static str, Constant); 11] {
        [
            ("gamma", self.gamma),
            ("kappa0", self.kappa0),
            ("c_p", self.c_p),
            ("varrho", self.varrho),
            ("kappa", self.kappa),
            ("kappa1", self.kappa1),
            ("kappa_q", self.kappa_q),
            ("d", self.d),
            ("l", self.l),
            ("l_phi", self.l_phi),
            ("c_phi", self.c_phi),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsConfig {
    /// Enumerate all deterministic joint policies when there are at most this many.
    pub enumeration_budget: usize,
    /// Number of Dirichlet probe policies otherwise.
    pub samples: usize,
    pub seed: u64,
    /// When false, `kappa` is replaced by the bound `C_p kappa_0`.
    pub search_kappa: bool,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        ConstantsConfig {
            enumeration_budget: 4096,
            samples: 64,
            seed: 0,
            search_kappa: true,
        }
    }
}

/// `C_p = min{sqrt(S/(1-Gamma)), 1/(1-Gamma)}`.
pub fn c_p(num_states: usize, gamma: f64) -> f64 {
    let lvr = 1.0 - gamma;
    f64::min(libm::sqrt(num_states as f64 / lvr), 1.0 / lvr)
}

/// `kappa_Q = kappa + 2 kappa_1 + S kappa_1 (kappa + kappa_1) + S kappa kappa_1^2`.
pub fn kappa_q(num_states: usize, kappa: f64, kappa1: f64) -> f64 {
    let s = num_states as f64;
    kappa + 2.0 * kappa1 + s * kappa1 * (kappa + kappa1) + s * kappa * kappa1 * kappa1
}

/// Single-agent smoothness constant `L`.
pub fn smoothness_l(num_states: usize, max_actions: usize, kappa0: f64) -> f64 {
    let s = num_states as f64;
    let a = max_actions as f64;
    kappa0 * kappa0 * libm::pow(s, 1.5) * a + kappa0 * libm::sqrt(s) * a
}

/// Potential smoothness constant `L_Phi`.
pub fn smoothness_l_phi(
    num_agents: usize,
    num_states: usize,
    max_actions: usize,
    kappa0: f64,
) -> f64 {
    let s = num_states as f64;
    let a = max_actions as f64;
    num_agents as f64 * (kappa0 * kappa0 * libm::pow(s, 1.5) * a + kappa0 * (s * a + 2.0 * a) + a)
}

/// Number of deterministic joint policies, `None` on overflow.
pub fn deterministic_policy_count(game: &MarkovGame) -> Option<usize> {
    let mut total: usize = 1;
    for &a in game.action_counts() {
        for _ in 0..game.num_states() {
            total = total.checked_mul(a)?;
        }
    }
    Some(total)
}

/// Decodes the `index`-th deterministic joint policy (mixed radix over
/// agent-major, state-minor digits).
pub fn deterministic_policy(game: &MarkovGame, mut index: usize) -> JointPolicy {
    let n = game.num_states();
    let mut agents = Vec::with_capacity(game.num_agents());
    for &a in game.action_counts() {
        let mut actions = vec![0; n];
        for slot in actions.iter_mut() {
            *slot = index % a;
            index /= a;
        }
        agents.push(Policy::deterministic(a, &actions));
    }
    JointPolicy::new(agents)
}

/// The probe policies used for the constants, and whether they are the full
/// deterministic enumeration.
pub fn probe_policies(
    game: &MarkovGame,
    config: &ConstantsConfig,
    extra: &[JointPolicy],
) -> (Vec<JointPolicy>, bool) {
    match deterministic_policy_count(game) {
        Some(count) if count <= config.enumeration_budget => (
            (0..count).map(|k| deterministic_policy(game, k)).collect(),
            true,
        ),
        _ => {
            let mut rng = stream(config.seed, 0, 0);
            let mut probes = vec![JointPolicy::uniform(game)];
            probes.extend((0..config.samples).map(|_| dirichlet_joint(&mut rng, game)));
            probes.extend(extra.iter().cloned());
            (probes, false)
        }
    }
}

/// Largest half-span of `Qbar_{j}` over acting agents `j` for one reward
/// tensor (flattened `S x |A|`).
fn max_half_span(
    game: &MarkovGame,
    policy: &JointPolicy,
    chain: &PolicyChain,
    reward: &[f64],
) -> Result<f64> {
    let na = game.num_joint_actions();
    let mut w = vec![0.0; na];
    let state_r: Vec<f64> = (0..game.num_states())
        .map(|s| {
            policy.joint_distribution(game, s, &mut w);
            w.iter()
                .zip(&reward[s * na..(s + 1) * na])
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect();
    let (rho, v) = chain.evaluate(&state_r)?;
    let q = oracle::q_from_values(game, reward, rho, &v);
    let mut best: f64 = 0.0;
    for j in 0..game.num_agents() {
        let qbar = marginalize_joint(game, policy, j, &q);
        let (lo, hi) = qbar
            .as_slice()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        best = best.max((hi - lo) / 2.0);
    }
    Ok(best)
}

/// Estimates every constant over the probe set. `extra` probes (for instance
/// iterates of earlier runs) are added when enumeration is not possible.
pub fn estimate_constants(
    game: &MarkovGame,
    config: &ConstantsConfig,
    extra: &[JointPolicy],
) -> Result<GameConstants> {
    let (probes, enumerated) = probe_policies(game, config, extra);
    let s_count = game.num_states();
    let n = game.num_agents();
    let na = game.num_joint_actions();

    let indicator_rewards: Vec<Vec<f64>> = (0..s_count)
        .map(|target| {
            (0..s_count * na)
                .map(|k| if k / na == target { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();

    let mut min_nu = f64::INFINITY;
    let mut max_lambda: f64 = 0.0;
    let mut kappa: f64 = 0.0;
    let mut kappa1: f64 = 0.0;
    let mut nu_max = vec![0.0f64; s_count];
    let mut nu_min = vec![f64::INFINITY; s_count];
    let mut phi_range = (f64::INFINITY, f64::NEG_INFINITY);
    let has_potential = oracle::has_potential(game);

    for policy in &probes {
        let chain = PolicyChain::new(game, policy)?;
        for (s, &m) in chain.nu.iter().enumerate() {
            min_nu = min_nu.min(m);
            nu_max[s] = nu_max[s].max(m);
            nu_min[s] = nu_min[s].min(m);
        }
        max_lambda = max_lambda.max(linalg::second_eigen_modulus(&chain.transition, &chain.nu)?);
        kappa1 = kappa1.max(chain.fundamental_norm());
        if config.search_kappa {
            for r in game.rewards().iter().chain(&indicator_rewards) {
                kappa = kappa.max(max_half_span(game, policy, &chain, r)?);
            }
        }
        if has_potential {
            let phi = oracle::potential_value(game, policy)?;
            phi_range = (phi_range.0.min(phi), phi_range.1.max(phi));
        }
    }

    if max_lambda >= 1.0 {
        return Err(crate::Error::Ergodicity(alloc::format!(
            "a probe policy has |lambda_2| = {max_lambda}"
        )));
    }

    let base = if enumerated && game.structure().action_independent_transitions {
        Provenance::Exact
    } else {
        Provenance::SampledLowerBound
    };
    let gamma = Constant::new(1.0 - min_nu, base);
    let kappa0 = Constant::new(1.0 / (1.0 - max_lambda), base);
    let cp = Constant::new(c_p(s_count, gamma.value), base);
    let varrho = Constant::new(1.0 - 1.0 / kappa0.value, base);
    let kappa = if config.search_kappa {
        Constant::new(kappa, base)
    } else {
        Constant::new(
            cp.value * kappa0.value,
            base.weakest(Provenance::AnalyticUpperBound),
        )
    };
    let kappa1 = Constant::new(kappa1, base);
    let kq = Constant::new(
        kappa_q(s_count, kappa.value, kappa1.value),
        kappa.provenance.weakest(kappa1.provenance),
    );
    let d = Constant::new(
        nu_max
            .iter()
            .zip(&nu_min)
            .map(|(a, b)| a / b)
            .fold(1.0, f64::max),
        base,
    );
    let amax = game.max_actions();
    let l = Constant::new(smoothness_l(s_count, amax, kappa0.value), base);
    let l_phi = Constant::new(smoothness_l_phi(n, s_count, amax, kappa0.value), base);
    let c_phi = if has_potential {
        let cap = if game.structure().cooperative {
            1.0
        } else {
            n as f64
        };
        Constant::new((phi_range.1 - phi_range.0).min(cap), base)
    } else {
        Constant::new(n as f64, Provenance::AnalyticUpperBound)
    };

    Ok(GameConstants {
        gamma,
        kappa0,
        c_p: cp,
        varrho,
        kappa,
        kappa1,
        kappa_q: kq,
        d,
        l,
        l_phi,
        c_phi,
        num_states: s_count,
        num_agents: n,
        max_actions: amax,
        num_probes: probes.len(),
        enumerated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::manual_fixture;

    #[test]
    fn manual_fixture_constants() {
        let c = estimate_constants(&manual_fixture(), &ConstantsConfig::default(), &[]).unwrap();
        assert!(c.enumerated && c.is_exact());
        assert_eq!(c.num_probes, 16);
        assert!((c.gamma.value - 0.75).abs() < 1e-12);
        assert!((c.kappa0.value - 2.5).abs() < 1e-9);
        assert!((c.c_p.value - libm::sqrt(8.0)).abs() < 1e-12);
        assert!((c.varrho.value - 0.6).abs() < 1e-9);
        assert!((c.d.value - 1.0).abs() < 1e-12);
        assert!((c.kappa1.value - 3.25).abs() < 1e-12);
        // The indicator reward of state 0 has Q = (0.625, -1.875).
        assert!((c.kappa.value - 1.25).abs() < 1e-12);
        assert!((c.l_phi.value - 114.710_678).abs() < 1e-3);
        assert!(c.c_phi.value <= 1.0);
    }

    #[test]
    fn closed_forms() {
        assert!((c_p(2, 0.75) - libm::sqrt(8.0)).abs() < 1e-15);
        assert_eq!(c_p(100, 0.5), 2.0);
        let l_phi = smoothness_l_phi(2, 2, 2, 2.5);
        assert!((l_phi - 2.0 * (6.25 * libm::pow(2.0, 1.5) * 2.0 + 2.5 * 8.0 + 2.0)).abs() < 1e-12);
        assert_eq!(kappa_q(2, 1.0, 1.0), 1.0 + 2.0 + 4.0 + 2.0);
    }

    #[test]
    fn provenance_order() {
        use Provenance::*;
        assert_eq!(Exact.weakest(SampledLowerBound), SampledLowerBound);
        assert_eq!(AnalyticUpperBound.weakest(Exact), AnalyticUpperBound);
        assert_eq!(
            SampledLowerBound.weakest(AnalyticUpperBound),
            SampledLowerBound
        );
    }

    #[test]
    fn deterministic_enumeration_is_exhaustive() {
        let game = manual_fixture();
        let mut seen = alloc::collections::BTreeSet::new();
        for k in 0..16 {
            let p = deterministic_policy(&game, k);
            let key: Vec<u64> = p
                .agents()
                .iter()
                .flat_map(|a| a.table().as_slice().iter().map(|x| x.to_bits()))
                .collect();
            seen.insert(key);
        }
        assert_eq!(seen.len(), 16);
    }
}
