//! JSON scenario files.
//!
//! ```json
//! {
//!   "members": ["1", "2"],
//!   "alternatives": ["x", "y"],
//!   "states": [{"name": "U_A", "utilities": [["1", "0"], ["1", "0"]]}],
//!   "kernel": {"U_A,x": [["U_A", "1"]], "U_A,y": [["U_A", "1"]]},
//!   "reward": {"kind": "utilitarian"},
//!   "gamma": "9/10"
//! }
//! ```
//!
//! Numbers are strings (`"p/q"`, integers or decimals) so nothing passes
//! through a float. States and alternatives in kernel and table keys may be
//! given by name or by index.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{validate_mdp, Profile, SocialChoiceMdp, TransitionKernel};
use crate::scalar::{format_rational, parse_rational, Rational};
use crate::welfare::{Expr, ExtensionRule, MonotoneTransform, RewardSpec, TabularReward};

/// Exact rational written as a JSON string; bare JSON integers are accepted on input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalText(pub Rational);

impl Serialize for RationalText {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format_rational(&self.0))
    }
}

impl<'de> Deserialize<'de> for RationalText {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct RationalVisitor;

        impl Visitor<'_> for RationalVisitor {
            type Value = RationalText;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a rational as a string such as \"3/4\", \"-2\" or \"0.25\"")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<RationalText, E> {
                parse_rational(v).map(RationalText).map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<RationalText, E> {
                Ok(RationalText(Rational::from_integer(v.into())))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<RationalText, E> {
                Ok(RationalText(Rational::from_integer(v.into())))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<RationalText, E> {
                Err(E::custom(format!("write {v} as a string to keep it exact")))
            }
        }

        deserializer.deserialize_any(RationalVisitor)
    }
}

/// A state or alternative named either by label or by index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NameOrIndex {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateEntry {
    pub name: String,
    pub utilities: Vec<Vec<RationalText>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TransformEntry {
    Identity,
    Affine { a: RationalText, b: RationalText },
    OddPower { k: u32 },
    PiecewiseLinear { points: Vec<(RationalText, RationalText)> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtensionEntry {
    #[default]
    None,
    NearestBySum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RewardEntry {
    Utilitarian,
    Quasi {
        transform: TransformEntry,
    },
    Tabular {
        values: OrderedMap<RationalText>,
        #[serde(default)]
        extension: ExtensionEntry,
    },
    Custom {
        expr: String,
    },
}

/// String-keyed map that serializes in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedMap<V>(pub Vec<(String, V)>);

impl<V: Serialize> Serialize for OrderedMap<V> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de, V: Deserialize<'de>> Deserialize<'de> for OrderedMap<V> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct MapVisitor<V>(std::marker::PhantomData<V>);

        impl<'de, V: Deserialize<'de>> Visitor<'de> for MapVisitor<V> {
            type Value = OrderedMap<V>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object keyed by \"state,alternative\"")
            }

            fn visit_map<A: de::MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut entries: Vec<(String, V)> = Vec::new();
                while let Some((key, value)) = access.next_entry::<String, V>()? {
                    if entries.iter().any(|(k, _)| *k == key) {
                        return Err(de::Error::custom(format!("duplicate key `{key}`")));
                    }
                    entries.push((key, value));
                }
                Ok(OrderedMap(entries))
            }
        }

        deserializer.deserialize_map(MapVisitor(std::marker::PhantomData))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub members: Vec<String>,
    pub alternatives: Vec<String>,
    pub states: Vec<StateEntry>,
    pub kernel: OrderedMap<Vec<(NameOrIndex, RationalText)>>,
    pub reward: RewardEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<RationalText>,
}

/// A loaded scenario: the MDP, its state names and an optional discount factor.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub mdp: SocialChoiceMdp<Rational>,
    pub state_names: Vec<String>,
    pub gamma: Option<Rational>,
}

#[derive(Debug, Error)]
pub enum ScenarioFileError {
    #[error("line {line}, column {column}, at `{path}`: {message}")]
    Syntax {
        line: usize,
        column: usize,
        path: String,
        message: String,
    },
    #[error("at `{path}`: {message}")]
    Semantic { path: String, message: String },
    #[error("invalid MDP:\n{0}")]
    Invalid(crate::model::ValidationReport),
}

fn semantic(path: impl Into<String>, message: impl Into<String>) -> ScenarioFileError {
    ScenarioFileError::Semantic {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses scenario JSON, reporting the line, column and key path of the first error.
pub fn parse_scenario_file(text: &str) -> Result<ScenarioFile, ScenarioFileError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ScenarioFileError::Syntax {
            line: inner.line(),
            column: inner.column(),
            path,
            message: strip_position(&inner.to_string()),
        }
    })?;
    de.end().map_err(|e| ScenarioFileError::Syntax {
        line: e.line(),
        column: e.column(),
        path: ".".into(),
        message: strip_position(&e.to_string()),
    })?;
    Ok(file)
}

fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message.to_string(),
    }
}

/// Parses and validates a scenario file.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioFileError> {
    parse_scenario_file(text)?.to_scenario()
}

fn resolve(reference: &NameOrIndex, names: &[String]) -> Option<usize> {
    match reference {
        NameOrIndex::Index(i) => (*i < names.len()).then_some(*i),
        NameOrIndex::Name(name) => names.iter().position(|n| n == name),
    }
}

fn resolve_text(text: &str, names: &[String]) -> Option<usize> {
    names
        .iter()
        .position(|n| n == text)
        .or_else(|| text.parse::<usize>().ok().filter(|i| *i < names.len()))
}

fn split_pair(
    key: &str,
    states: &[String],
    alternatives: &[String],
    path: &str,
) -> Result<(usize, usize), ScenarioFileError> {
    let (s, a) = key
        .rsplit_once(',')
        .ok_or_else(|| semantic(path, "key must read \"state,alternative\""))?;
    let s = resolve_text(s.trim(), states).ok_or_else(|| semantic(path, format!("unknown state `{s}`")))?;
    let a = resolve_text(a.trim(), alternatives)
        .ok_or_else(|| semantic(path, format!("unknown alternative `{a}`")))?;
    Ok((s, a))
}

impl TransformEntry {
    pub fn to_transform(&self) -> Result<MonotoneTransform<Rational>, String> {
        let t = match self {
            TransformEntry::Identity => Ok(MonotoneTransform::Identity),
            TransformEntry::Affine { a, b } => MonotoneTransform::affine(a.0.clone(), b.0.clone()),
            TransformEntry::OddPower { k } => MonotoneTransform::odd_power(*k),
            TransformEntry::PiecewiseLinear { points } => MonotoneTransform::piecewise_linear(
                points.iter().map(|(x, y)| (x.0.clone(), y.0.clone())).collect(),
            ),
        };
        t.map_err(|e| e.to_string())
    }

    pub fn from_transform(t: &MonotoneTransform<Rational>) -> Self {
        match t {
            MonotoneTransform::Identity => TransformEntry::Identity,
            MonotoneTransform::Affine { a, b } => TransformEntry::Affine {
                a: RationalText(a.clone()),
                b: RationalText(b.clone()),
            },
            MonotoneTransform::OddPower(k) => TransformEntry::OddPower { k: *k },
            MonotoneTransform::PiecewiseLinear(points) => TransformEntry::PiecewiseLinear {
                points: points
                    .iter()
                    .map(|(x, y)| (RationalText(x.clone()), RationalText(y.clone())))
                    .collect(),
            },
        }
    }
}

impl RewardEntry {
    /// Builds the reward; tabular keys are resolved against the given state and alternative names.
    pub fn to_reward(
        &self,
        states: &[Profile<Rational>],
        state_names: &[String],
        alternatives: &[String],
    ) -> Result<RewardSpec<Rational>, ScenarioFileError> {
        Ok(match self {
            RewardEntry::Utilitarian => RewardSpec::Utilitarian,
            RewardEntry::Quasi { transform } => RewardSpec::QuasiUtilitarian(
                transform
                    .to_transform()
                    .map_err(|e| semantic("reward.transform", e))?,
            ),
            RewardEntry::Tabular { values, extension } => {
                let mut table = BTreeMap::new();
                for (key, value) in &values.0 {
                    let path = format!("reward.values.{key}");
                    let pair = split_pair(key, state_names, alternatives, &path)?;
                    table.insert(pair, value.0.clone());
                }
                let extension = match extension {
                    ExtensionEntry::None => ExtensionRule::None,
                    ExtensionEntry::NearestBySum => ExtensionRule::NearestBySum,
                };
                RewardSpec::Tabular(TabularReward::new(states.to_vec(), table, extension))
            }
            RewardEntry::Custom { expr } => RewardSpec::Custom(
                Expr::parse(expr).map_err(|e| semantic("reward.expr", e.to_string()))?,
            ),
        })
    }

    pub fn from_reward(reward: &RewardSpec<Rational>, state_names: &[String], alternatives: &[String]) -> Self {
        match reward {
            RewardSpec::Utilitarian => RewardEntry::Utilitarian,
            RewardSpec::QuasiUtilitarian(t) => RewardEntry::Quasi {
                transform: TransformEntry::from_transform(t),
            },
            RewardSpec::Tabular(table) => RewardEntry::Tabular {
                values: OrderedMap(
                    table
                        .values
                        .iter()
                        .map(|((s, a), v)| {
                            let s = state_names.get(*s).cloned().unwrap_or_else(|| s.to_string());
                            (format!("{s},{}", alternatives[*a]), RationalText(v.clone()))
                        })
                        .collect(),
                ),
                extension: match table.extension {
                    ExtensionRule::None => ExtensionEntry::None,
                    ExtensionRule::NearestBySum => ExtensionEntry::NearestBySum,
                },
            },
            RewardSpec::Custom(expr) => RewardEntry::Custom {
                expr: expr.to_string(),
            },
        }
    }
}

impl ScenarioFile {
    /// Resolves names, builds the MDP and validates it.
    pub fn to_scenario(&self) -> Result<Scenario, ScenarioFileError> {
        let state_names: Vec<String> = self.states.iter().map(|s| s.name.clone()).collect();
        for (i, name) in state_names.iter().enumerate() {
            if state_names[..i].contains(name) {
                return Err(semantic(format!("states[{i}].name"), format!("duplicate state name `{name}`")));
            }
        }
        let mut profiles = Vec::with_capacity(self.states.len());
        for (i, entry) in self.states.iter().enumerate() {
            let rows = entry
                .utilities
                .iter()
                .map(|row| row.iter().map(|v| v.0.clone()).collect())
                .collect();
            let profile = Profile::new(rows).map_err(|e| semantic(format!("states[{i}].utilities"), e.to_string()))?;
            profiles.push(profile);
        }

        let mut kernel = TransitionKernel::new();
        for (key, row) in &self.kernel.0 {
            let path = format!("kernel.{key}");
            let (s, a) = split_pair(key, &state_names, &self.alternatives, &path)?;
            let mut successors = Vec::with_capacity(row.len());
            for (j, (target, p)) in row.iter().enumerate() {
                let t = resolve(target, &state_names)
                    .ok_or_else(|| semantic(format!("{path}[{j}]"), format!("unknown state {target:?}")))?;
                successors.push((t, p.0.clone()));
            }
            kernel.set_row(s, a, successors);
        }

        let reward = self.reward.to_reward(&profiles, &state_names, &self.alternatives)?;
        let mdp = SocialChoiceMdp::new(
            self.members.clone(),
            self.alternatives.clone(),
            profiles,
            kernel,
            reward,
        );
        let report = validate_mdp(&mdp);
        if !report.is_valid() {
            return Err(ScenarioFileError::Invalid(report));
        }
        Ok(Scenario {
            mdp,
            state_names,
            gamma: self.gamma.as_ref().map(|g| g.0.clone()),
        })
    }

    /// Canonical file for a scenario: names everywhere, kernel rows in state-then-alternative order.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let mdp = &scenario.mdp;
        let alternatives: Vec<String> = mdp.alternatives.iter().map(|a| a.label.clone()).collect();
        let names = &scenario.state_names;
        let states = mdp
            .states
            .iter()
            .zip(names)
            .map(|(p, name)| StateEntry {
                name: name.clone(),
                utilities: p
                    .rows()
                    .iter()
                    .map(|row| row.values.iter().cloned().map(RationalText).collect())
                    .collect(),
            })
            .collect();
        let kernel = OrderedMap(
            mdp.kernel
                .rows()
                .map(|((s, a), row)| {
                    (
                        format!("{},{}", names[*s], alternatives[*a]),
                        row.iter()
                            .map(|(t, p)| (NameOrIndex::Name(names[*t].clone()), RationalText(p.clone())))
                            .collect(),
                    )
                })
                .collect(),
        );
        ScenarioFile {
            members: mdp.members.iter().map(|m| m.label.clone()).collect(),
            alternatives: alternatives.clone(),
            states,
            kernel,
            reward: RewardEntry::from_reward(&mdp.reward, names, &alternatives),
            gamma: scenario.gamma.clone().map(RationalText),
        }
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("scenario files always serialize");
        text.push('\n');
        text
    }
}

impl Scenario {
    /// Wraps an MDP, naming its states `s1`, `s2`, ...
    pub fn from_mdp(mdp: SocialChoiceMdp<Rational>, gamma: Option<Rational>) -> Self {
        let state_names = (1..=mdp.num_states()).map(|i| format!("s{i}")).collect();
        Self {
            mdp,
            state_names,
            gamma,
        }
    }

    pub fn to_canonical_json(&self) -> String {
        ScenarioFile::from_scenario(self).to_canonical_json()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;
    use crate::scenarios::{fixture_f1, F1_STATE_NAMES};

    fn f1_scenario() -> Scenario {
        Scenario {
            mdp: fixture_f1(),
            state_names: F1_STATE_NAMES.iter().map(|s| s.to_string()).collect(),
            gamma: Some(rat(9, 10)),
        }
    }

    #[test]
    fn canonical_round_trip() {
        let text = f1_scenario().to_canonical_json();
        let again = load_scenario(&text).unwrap().to_canonical_json();
        assert_eq!(text, again);
        assert!(text.contains("\"U_A,y\""));
        assert!(text.contains("\"gamma\": \"9/10\""));
    }

    #[test]
    fn decimals_and_indices_accepted() {
        let text = r#"{
            "members": ["a"],
            "alternatives": ["x", "y"],
            "states": [{"name": "only", "utilities": [["0.5", 2]]}],
            "kernel": {"0,0": [[0, "1"]], "only,y": [["only", "1.0"]]},
            "reward": {"kind": "quasi", "transform": {"name": "affine", "a": "3", "b": "5"}},
            "gamma": "0.9"
        }"#;
        let s = load_scenario(text).unwrap();
        assert_eq!(s.mdp.states[0].utility(0, 0), &rat(1, 2));
        assert_eq!(s.gamma, Some(rat(9, 10)));
    }

    #[test]
    fn diagnostics_carry_line_and_path() {
        let text = "{\n  \"members\": [\"a\"],\n  \"alternatives\": [\"x\"],\n  \"states\": [{\"name\": \"s\", \"utilities\": [[\"1/0\"]]}]\n}";
        match parse_scenario_file(text).unwrap_err() {
            ScenarioFileError::Syntax { line, path, .. } => {
                assert_eq!(line, 4);
                assert_eq!(path, "states[0].utilities[0][0]");
            }
            other => panic!("{other}"),
        }
        let unknown = r#"{"members": [], "alternatives": [], "states": [], "kernel": {}, "reward": {"kind": "utilitarian"}, "extra": 1}"#;
        assert!(parse_scenario_file(unknown).unwrap_err().to_string().contains("extra"));
        let float = r#"{"members": ["a"], "alternatives": ["x"], "states": [{"name": "s", "utilities": [[0.5]]}], "kernel": {}, "reward": {"kind": "utilitarian"}}"#;
        assert!(parse_scenario_file(float).unwrap_err().to_string().contains("string"));
    }

    #[test]
    fn invalid_kernel_reported() {
        let text = f1_scenario().to_canonical_json().replacen("\"1\"\n", "\"9/10\"\n", 1);
        match load_scenario(&text).unwrap_err() {
            ScenarioFileError::Invalid(report) => assert!(report.to_string().contains("9/10")),
            other => panic!("{other}"),
        }
    }
}
