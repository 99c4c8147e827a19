//! JSON documents for games, policies, generator specs, constants and oracle
//! reports. Every float is written as a decimal string with 17 significant
//! digits, which round-trips `f64` exactly.

use std::fmt;
use std::path::Path;

use ampg_core::constants::{Constant, GameConstants};
use ampg_core::generators::{GeneratorSpec, LvrMode, PotentialCondition, RewardGapMode, Structure};
use ampg_core::oracle::OracleReport;
use ampg_core::{JointPolicy, MarkovGame, Policy, StructureTags, Table};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::HarnessError;

/// `f64` that serializes as a 17-significant-digit decimal string. Numbers are
/// accepted on input too.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dec(pub f64);

/// Decimal string form used in every output file.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

impl Serialize for Dec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_f64(self.0))
    }
}

impl<'de> Deserialize<'de> for Dec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct DecVisitor;
        impl Visitor<'_> for DecVisitor {
            type Value = Dec;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a decimal string or a number")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Dec, E> {
                v.trim()
                    .parse()
                    .map(Dec)
                    .map_err(|_| E::custom(format!("not a decimal number: {v:?}")))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Dec, E> {
                Ok(Dec(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Dec, E> {
                Ok(Dec(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Dec, E> {
                Ok(Dec(v as f64))
            }
        }
        d.deserialize_any(DecVisitor)
    }
}

pub fn decs(v: &[f64]) -> Vec<Dec> {
    v.iter().copied().map(Dec).collect()
}

pub fn undecs(v: &[Dec]) -> Vec<f64> {
    v.iter().map(|d| d.0).collect()
}

fn table_rows(t: &Table) -> Vec<Vec<Dec>> {
    (0..t.rows()).map(|r| decs(t.row(r))).collect()
}

fn rows_table(rows: &[Vec<Dec>]) -> Result<Table, HarnessError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(HarnessError::Format("ragged matrix".into()));
    }
    let flat: Vec<f64> = rows.iter().flat_map(|r| undecs(r)).collect();
    Table::from_vec(rows.len(), cols, flat)
        .ok_or_else(|| HarnessError::Format("matrix shape".into()))
}

/// On-disk game. `transition` is the `(s, a_1, .., a_N, s')` tensor
/// flattened row-major; `rewards[i]` is agent `i`'s `(s, a_1, .., a_N)` tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameFile {
    pub num_states: usize,
    pub action_counts: Vec<usize>,
    pub transition: Vec<Dec>,
    pub rewards: Vec<Vec<Dec>>,
    #[serde(default)]
    pub structure_tag: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Vec<Dec>>,
}

fn tags_to_strings(t: StructureTags) -> Vec<String> {
    let mut v = Vec::new();
    if t.cooperative {
        v.push("cooperative".to_string());
    }
    if t.action_independent_transitions {
        v.push("action_independent_transitions".to_string());
    }
    if t.state_potential {
        v.push("state_potential".to_string());
    }
    if v.is_empty() {
        v.push("general".to_string());
    }
    v
}

fn tags_from_strings(v: &[String]) -> Result<StructureTags, HarnessError> {
    let mut t = StructureTags::GENERAL;
    for s in v {
        match s.as_str() {
            "cooperative" => t.cooperative = true,
            "action_independent_transitions" => t.action_independent_transitions = true,
            "state_potential" => t.state_potential = true,
            "general" => {}
            other => {
                return Err(HarnessError::Format(format!(
                    "unknown structure tag {other:?}"
                )))
            }
        }
    }
    Ok(t)
}

impl GameFile {
    pub fn from_game(game: &MarkovGame) -> Self {
        GameFile {
            num_states: game.num_states(),
            action_counts: game.action_counts().to_vec(),
            transition: decs(game.transition()),
            rewards: game.rewards().iter().map(|r| decs(r)).collect(),
            structure_tag: tags_to_strings(game.structure()),
            potential: game.potential().map(decs),
        }
    }

    /// Validated game; fails with the full violation report.
    pub fn to_game(&self) -> Result<MarkovGame, HarnessError> {
        Ok(MarkovGame::new(
            self.num_states,
            self.action_counts.clone(),
            undecs(&self.transition),
            self.rewards.iter().map(|r| undecs(r)).collect(),
            tags_from_strings(&self.structure_tag)?,
            self.potential.as_deref().map(undecs),
        )?)
    }
}

/// One `S x A_i` matrix (list of rows) per agent.
pub type PolicyFile = Vec<Vec<Vec<Dec>>>;

pub fn policy_to_file(policy: &JointPolicy) -> PolicyFile {
    policy
        .agents()
        .iter()
        .map(|p| table_rows(p.table()))
        .collect()
}

pub fn policy_from_file(file: &PolicyFile) -> Result<JointPolicy, HarnessError> {
    let agents = file
        .iter()
        .map(|m| Ok(Policy::new(rows_table(m)?)?))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(JointPolicy::new(agents))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionName {
    ActionIndependent,
    Cooperative,
}

/// Generator spec document. Omitted fields take the generator defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpecFile {
    pub num_states: usize,
    pub action_counts: Vec<usize>,
    #[serde(default = "default_lvr")]
    pub lvr: String,
    #[serde(default = "default_gap")]
    pub reward_gap: String,
    #[serde(default = "default_fraction")]
    pub rare_fraction: Dec,
    #[serde(default = "default_structure")]
    pub structure: String,
    #[serde(default)]
    pub seed: u64,
    /// Build a certified potential game instead of a plain random one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<ConditionName>,
}

fn default_lvr() -> String {
    LvrMode::Large.as_str().into()
}
fn default_gap() -> String {
    RewardGapMode::SmallUniform.as_str().into()
}
fn default_fraction() -> Dec {
    Dec(0.5)
}
fn default_structure() -> String {
    Structure::Cooperative.as_str().into()
}

impl GeneratorSpecFile {
    pub fn to_spec(&self) -> Result<GeneratorSpec, HarnessError> {
        let bad = |what: &str, v: &str| HarnessError::Config(format!("unknown {what} {v:?}"));
        Ok(GeneratorSpec {
            num_states: self.num_states,
            action_counts: self.action_counts.clone(),
            lvr: LvrMode::parse(&self.lvr).ok_or_else(|| bad("lvr mode", &self.lvr))?,
            reward_gap: RewardGapMode::parse(&self.reward_gap)
                .ok_or_else(|| bad("reward gap mode", &self.reward_gap))?,
            rare_fraction: self.rare_fraction.0,
            structure: Structure::parse(&self.structure)
                .ok_or_else(|| bad("structure", &self.structure))?,
            seed: self.seed,
        })
    }

    pub fn build(&self) -> Result<MarkovGame, HarnessError> {
        let spec = self.to_spec()?;
        Ok(match self.condition {
            None => ampg_core::generators::generate(&spec)?,
            Some(ConditionName::ActionIndependent) => ampg_core::generators::make_potential_game(
                &spec,
                PotentialCondition::ActionIndependent,
            )?,
            Some(ConditionName::Cooperative) => {
                ampg_core::generators::make_potential_game(&spec, PotentialCondition::Cooperative)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEntry {
    pub value: Dec,
    pub provenance: String,
}

impl From<Constant> for ConstantEntry {
    fn from(c: Constant) -> Self {
        ConstantEntry {
            value: Dec(c.value),
            provenance: c.provenance.as_str().into(),
        }
    }
}

pub fn constants_to_json(c: &GameConstants) -> serde_json::Value {
    let mut m = serde_json::Map::new();
    for (name, k) in c.entries() {
        m.insert(
            name.into(),
            serde_json::to_value(ConstantEntry::from(k)).unwrap(),
        );
    }
    m.insert("num_states".into(), c.num_states.into());
    m.insert("num_agents".into(), c.num_agents.into());
    m.insert("max_actions".into(), c.max_actions.into());
    m.insert("num_probes".into(), c.num_probes.into());
    m.insert("enumerated".into(), c.enumerated.into());
    m.insert("exact".into(), c.is_exact().into());
    serde_json::Value::Object(m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportFile {
    pub nu: Vec<Dec>,
    pub rho: Vec<Dec>,
    pub values: Vec<Vec<Dec>>,
    pub q: Vec<Vec<Dec>>,
    /// `marginal_q[j][i]`: acting agent `j`, reward agent `i`.
    pub marginal_q: Vec<Vec<Vec<Vec<Dec>>>>,
    pub gradients: Vec<Vec<Vec<Dec>>>,
}

impl ReportFile {
    pub fn from_report(r: &OracleReport) -> Self {
        ReportFile {
            nu: decs(r.nu()),
            rho: decs(&r.rho),
            values: r.values.iter().map(|v| decs(v)).collect(),
            q: r.q.iter().map(|v| decs(v)).collect(),
            marginal_q: r
                .marginal_q
                .iter()
                .map(|row| row.iter().map(table_rows).collect())
                .collect(),
            gradients: r.gradients.iter().map(table_rows).collect(),
        }
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| HarnessError::Format(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| HarnessError::Format(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn read_game(path: &Path) -> Result<MarkovGame, HarnessError> {
    read_json::<GameFile>(path)?.to_game()
}

pub fn write_game(path: &Path, game: &MarkovGame) -> Result<(), HarnessError> {
    write_json(path, &GameFile::from_game(game))
}

pub fn read_policy(path: &Path) -> Result<JointPolicy, HarnessError> {
    policy_from_file(&read_json(path)?)
}

pub fn write_policy(path: &Path, policy: &JointPolicy) -> Result<(), HarnessError> {
    write_json(path, &policy_to_file(policy))
}
