//! Experiment configuration documents.

use std::path::{Path, PathBuf};

use ampg_core::algorithms::{Algorithm, RateRule, StepSize};
use ampg_core::constants::{ConstantsConfig, GameConstants};
use ampg_core::generators::manual_fixture;
use ampg_core::sampling::{GradientParams, InitialState};
use ampg_core::MarkovGame;
use serde::{Deserialize, Serialize};

use crate::format::{read_game, read_json, Dec, GeneratorSpecFile};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameSource {
    /// Built-in game; only `"manual"` exists.
    Fixture(String),
    File(PathBuf),
    Generator(GeneratorSpecFile),
}

impl GameSource {
    pub fn load(&self) -> Result<MarkovGame, HarnessError> {
        match self {
            GameSource::Fixture(name) if name == "manual" => Ok(manual_fixture()),
            GameSource::Fixture(name) => {
                Err(HarnessError::Config(format!("unknown fixture {name:?}")))
            }
            GameSource::File(path) => read_game(path),
            GameSource::Generator(spec) => spec.build(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmId {
    Pg,
    Proxq,
    Npg,
    SampledPg,
    SampledProxq,
}

impl AlgorithmId {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmId::Pg => "pg",
            AlgorithmId::Proxq => "proxq",
            AlgorithmId::Npg => "npg",
            AlgorithmId::SampledPg => "sampled_pg",
            AlgorithmId::SampledProxq => "sampled_proxq",
        }
    }

    pub fn is_sampled(self) -> bool {
        matches!(self, AlgorithmId::SampledPg | AlgorithmId::SampledProxq)
    }

    /// Oracle update underlying the algorithm. Sample-based variants use the
    /// rate rule of their exact counterpart.
    pub fn base(self) -> Algorithm {
        match self {
            AlgorithmId::Pg | AlgorithmId::SampledPg => Algorithm::Pg,
            AlgorithmId::Proxq | AlgorithmId::SampledProxq => Algorithm::ProxQ,
            AlgorithmId::Npg => Algorithm::Npg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RateConfig {
    /// The convergence theorem's prescribed rate.
    #[default]
    Theorem,
    Constant(Dec),
    /// `(iterations, beta)` pieces in order.
    Schedule(Vec<(usize, Dec)>),
    /// One run family per constant rate.
    Sweep(Vec<Dec>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    #[serde(rename = "K", default)]
    pub k: usize,
    #[serde(rename = "N1")]
    pub n1: usize,
    #[serde(rename = "N2", default)]
    pub n2: usize,
    #[serde(rename = "B", default)]
    pub b: usize,
    pub alpha: Dec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialStateConfig {
    #[default]
    Uniform,
    Fixed(usize),
    Distribution(Vec<Dec>),
}

impl InitialStateConfig {
    pub fn to_initial(&self) -> InitialState {
        match self {
            InitialStateConfig::Uniform => InitialState::Uniform,
            InitialStateConfig::Fixed(s) => InitialState::Fixed(*s),
            InitialStateConfig::Distribution(p) => {
                InitialState::Distribution(p.iter().map(|d| d.0).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstantsOptions {
    pub enumeration_budget: usize,
    pub samples: usize,
    pub seed: u64,
    pub search_kappa: bool,
}

impl Default for ConstantsOptions {
    fn default() -> Self {
        let c = ConstantsConfig::default();
        ConstantsOptions {
            enumeration_budget: c.enumeration_budget,
            samples: c.samples,
            seed: c.seed,
            search_kappa: c.search_kappa,
        }
    }
}

impl From<ConstantsOptions> for ConstantsConfig {
    fn from(o: ConstantsOptions) -> Self {
        ConstantsConfig {
            enumeration_budget: o.enumeration_budget,
            samples: o.samples,
            seed: o.seed,
            search_kappa: o.search_kappa,
        }
    }
}

fn default_eval_every() -> usize {
    10
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub game: GameSource,
    pub algorithm: AlgorithmId,
    #[serde(default)]
    pub rate: RateConfig,
    pub iterations: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorConfig>,
    #[serde(default)]
    pub initial_state: InitialStateConfig,
    pub seeds: Vec<u64>,
    /// Compute an NPG reference equilibrium and record the l1 distance to it.
    #[serde(default)]
    pub reference: bool,
    #[serde(default)]
    pub constants: ConstantsOptions,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Worker threads; all cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    /// Reads a config; relative paths inside it are resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let mut cfg: ExperimentConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let GameSource::File(p) = &mut cfg.game {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return bad(format!("invalid experiment name {:?}", self.name));
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive".into());
        }
        if let GameSource::File(p) = &self.game {
            if !p.exists() {
                return bad(format!("game file {} does not exist", p.display()));
            }
        }
        match &self.rate {
            RateConfig::Constant(b) if !(b.0 >= 0.0 && b.0.is_finite()) => {
                return bad(format!(
                    "learning rate {} must be finite and nonnegative",
                    b.0
                ))
            }
            RateConfig::Schedule(p) if p.is_empty() => return bad("empty schedule".into()),
            RateConfig::Schedule(p) if p.iter().any(|x| x.1 .0.is_nan() || x.1 .0 < 0.0) => {
                return bad("schedule rates must be nonnegative".into())
            }
            RateConfig::Sweep(v) if v.is_empty() => return bad("empty sweep".into()),
            _ => {}
        }
        if self.algorithm.is_sampled() {
            let Some(e) = self.estimator else {
                return bad(format!(
                    "{} needs an estimator block",
                    self.algorithm.as_str()
                ));
            };
            if !(e.alpha.0 > 0.0 && e.alpha.0 <= 1.0) {
                return bad("alpha must lie in (0, 1]".into());
            }
            if e.n1 == 0 {
                return bad("N1 must be positive".into());
            }
            match self.algorithm {
                AlgorithmId::SampledPg if e.k == 0 || e.n2 == 0 => {
                    return bad("sampled_pg needs K > 0 and N2 > 0".into())
                }
                AlgorithmId::SampledProxq if e.b <= e.n1 => {
                    return bad("sampled_proxq needs B > N1".into())
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// A sweep becomes one constant-rate experiment per rate, named
    /// `<name>-beta<k>`; other configs are returned as they are.
    pub fn expand(&self) -> Vec<ExperimentConfig> {
        match &self.rate {
            RateConfig::Sweep(rates) => rates
                .iter()
                .enumerate()
                .map(|(k, b)| ExperimentConfig {
                    name: format!("{}-beta{k}", self.name),
                    rate: RateConfig::Constant(*b),
                    ..self.clone()
                })
                .collect(),
            _ => vec![self.clone()],
        }
    }

    pub fn gradient_params(&self) -> Option<GradientParams> {
        self.estimator.map(|e| GradientParams {
            k: e.k,
            n1: e.n1,
            n2: e.n2,
        })
    }

    /// Step size and, for theorem rates, the rule that produced it.
    pub fn step_size(
        &self,
        constants: Option<&GameConstants>,
    ) -> Result<(StepSize, Option<RateRule>), HarnessError> {
        match &self.rate {
            RateConfig::Theorem => {
                let c = constants.ok_or_else(|| {
                    HarnessError::Config("theorem rate needs game constants".into())
                })?;
                let rule = self.algorithm.base().theorem_rule();
                Ok((StepSize::Constant(rule.beta(c)), Some(rule)))
            }
            RateConfig::Constant(b) => Ok((StepSize::Constant(b.0), None)),
            RateConfig::Schedule(p) => Ok((
                StepSize::Piecewise(p.iter().map(|&(n, b)| (n, b.0)).collect()),
                None,
            )),
            RateConfig::Sweep(_) => Err(HarnessError::Config(
                "expand a sweep before running it".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> &'static str {
        r#"{
            "name": "fig1",
            "game": {"fixture": "manual"},
            "algorithm": "sampled_pg",
            "rate": {"schedule": [[20, "0.5"], [20, "0.1"]]},
            "iterations": 40,
            "estimator": {"K": 10, "N1": 10, "N2": 5, "alpha": "0.01"},
            "seeds": [0, 1, 2]
        }"#
    }

    #[test]
    fn parses_and_validates() {
        let cfg: ExperimentConfig = serde_json::from_str(sample()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.eval_every, 10);
        assert_eq!(cfg.gradient_params().unwrap().trajectory_len(), 60);
        let (step, rule) = cfg.step_size(None).unwrap();
        assert!(rule.is_none());
        assert_eq!(step.at(25), 0.1);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg: ExperimentConfig = serde_json::from_str(sample()).unwrap();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        let mut cfg: ExperimentConfig = serde_json::from_str(sample()).unwrap();
        cfg.estimator = None;
        assert!(cfg.validate().is_err());
        let mut cfg: ExperimentConfig = serde_json::from_str(sample()).unwrap();
        cfg.game = GameSource::File("/nonexistent/game.json".into());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sweep_expands() {
        let mut cfg: ExperimentConfig = serde_json::from_str(sample()).unwrap();
        cfg.rate = RateConfig::Sweep(vec![Dec(0.1), Dec(0.2)]);
        let v = cfg.expand();
        assert_eq!(v.len(), 2);
        assert_eq!(v[1].name, "fig1-beta1");
        assert_eq!(v[1].rate, RateConfig::Constant(Dec(0.2)));
    }

    #[test]
    fn theorem_rate_string_form() {
        let text = sample().replace(
            r#"{"schedule": [[20, "0.5"], [20, "0.1"]]}"#,
            r#""theorem""#,
        );
        let cfg: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg.rate, RateConfig::Theorem);
    }
}
