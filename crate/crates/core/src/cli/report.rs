//! Report documents and witness records.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::axioms::{AxiomReport, Witness};
use crate::model::{ModelError, Profile};
use crate::scalar::Rational;

use super::scenario_file::RationalText;

pub type Grid = Vec<Vec<RationalText>>;

fn grid(profile: &Profile<Rational>) -> Grid {
    profile
        .rows()
        .iter()
        .map(|row| row.values.iter().cloned().map(RationalText).collect())
        .collect()
}

fn profile(grid: &Grid) -> Result<Profile<Rational>, ModelError> {
    Profile::new(
        grid.iter()
            .map(|row| row.iter().map(|v| v.0.clone()).collect())
            .collect(),
    )
}

fn text(v: &Rational) -> RationalText {
    RationalText(v.clone())
}

/// A witness with every profile written out, so it can be replayed from the report alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WitnessRecord {
    Pareto {
        profile: Grid,
        x: usize,
        y: usize,
        reward_x: RationalText,
        reward_y: RationalText,
    },
    Iia {
        profile: Grid,
        other: Grid,
        x: usize,
        y: usize,
        weak_in_profile: bool,
        weak_in_other: bool,
    },
    Cuc {
        profile: Grid,
        other: Grid,
        beta: RationalText,
        alphas: Vec<RationalText>,
        x: usize,
        y: usize,
        weak_in_profile: bool,
        weak_in_other: bool,
    },
    Anonymity {
        profile: Grid,
        other: Grid,
        permutation: Vec<usize>,
        x: usize,
        y: usize,
        weak_in_profile: bool,
        weak_in_other: bool,
    },
    Agreement {
        profile: Grid,
        x: usize,
        y: usize,
        reward_x: RationalText,
        reward_y: RationalText,
        sum_x: RationalText,
        sum_y: RationalText,
    },
    ParetoScf {
        state: usize,
        profile: Grid,
        dominating: usize,
        chosen: usize,
    },
}

impl From<&Witness<Rational>> for WitnessRecord {
    fn from(w: &Witness<Rational>) -> Self {
        match w {
            Witness::Pareto {
                profile,
                x,
                y,
                reward_x,
                reward_y,
            } => WitnessRecord::Pareto {
                profile: grid(profile),
                x: *x,
                y: *y,
                reward_x: text(reward_x),
                reward_y: text(reward_y),
            },
            Witness::Iia {
                profile,
                other,
                x,
                y,
                weak_in_profile,
                weak_in_other,
            } => WitnessRecord::Iia {
                profile: grid(profile),
                other: grid(other),
                x: *x,
                y: *y,
                weak_in_profile: *weak_in_profile,
                weak_in_other: *weak_in_other,
            },
            Witness::Cuc {
                profile,
                other,
                beta,
                alphas,
                x,
                y,
                weak_in_profile,
                weak_in_other,
            } => WitnessRecord::Cuc {
                profile: grid(profile),
                other: grid(other),
                beta: text(beta),
                alphas: alphas.iter().map(text).collect(),
                x: *x,
                y: *y,
                weak_in_profile: *weak_in_profile,
                weak_in_other: *weak_in_other,
            },
            Witness::Anonymity {
                profile,
                other,
                permutation,
                x,
                y,
                weak_in_profile,
                weak_in_other,
            } => WitnessRecord::Anonymity {
                profile: grid(profile),
                other: grid(other),
                permutation: permutation.clone(),
                x: *x,
                y: *y,
                weak_in_profile: *weak_in_profile,
                weak_in_other: *weak_in_other,
            },
            Witness::Agreement {
                profile,
                x,
                y,
                reward_x,
                reward_y,
                sum_x,
                sum_y,
            } => WitnessRecord::Agreement {
                profile: grid(profile),
                x: *x,
                y: *y,
                reward_x: text(reward_x),
                reward_y: text(reward_y),
                sum_x: text(sum_x),
                sum_y: text(sum_y),
            },
            Witness::ParetoScf {
                state,
                profile,
                dominating,
                chosen,
            } => WitnessRecord::ParetoScf {
                state: *state,
                profile: grid(profile),
                dominating: *dominating,
                chosen: *chosen,
            },
        }
    }
}

impl TryFrom<&WitnessRecord> for Witness<Rational> {
    type Error = ModelError;

    fn try_from(r: &WitnessRecord) -> Result<Self, ModelError> {
        Ok(match r {
            WitnessRecord::Pareto {
                profile: p,
                x,
                y,
                reward_x,
                reward_y,
            } => Witness::Pareto {
                profile: profile(p)?,
                x: *x,
                y: *y,
                reward_x: reward_x.0.clone(),
                reward_y: reward_y.0.clone(),
            },
            WitnessRecord::Iia {
                profile: p,
                other,
                x,
                y,
                weak_in_profile,
                weak_in_other,
            } => Witness::Iia {
                profile: profile(p)?,
                other: profile(other)?,
                x: *x,
                y: *y,
                weak_in_profile: *weak_in_profile,
                weak_in_other: *weak_in_other,
            },
            WitnessRecord::Cuc {
                profile: p,
                other,
                beta,
                alphas,
                x,
                y,
                weak_in_profile,
                weak_in_other,
            } => Witness::Cuc {
                profile: profile(p)?,
                other: profile(other)?,
                beta: beta.0.clone(),
                alphas: alphas.iter().map(|a| a.0.clone()).collect(),
                x: *x,
                y: *y,
                weak_in_profile: *weak_in_profile,
                weak_in_other: *weak_in_other,
            },
            WitnessRecord::Anonymity {
                profile: p,
                other,
                permutation,
                x,
                y,
                weak_in_profile,
                weak_in_other,
            } => Witness::Anonymity {
                profile: profile(p)?,
                other: profile(other)?,
                permutation: permutation.clone(),
                x: *x,
                y: *y,
                weak_in_profile: *weak_in_profile,
                weak_in_other: *weak_in_other,
            },
            WitnessRecord::Agreement {
                profile: p,
                x,
                y,
                reward_x,
                reward_y,
                sum_x,
                sum_y,
            } => Witness::Agreement {
                profile: profile(p)?,
                x: *x,
                y: *y,
                reward_x: reward_x.0.clone(),
                reward_y: reward_y.0.clone(),
                sum_x: sum_x.0.clone(),
                sum_y: sum_y.0.clone(),
            },
            WitnessRecord::ParetoScf {
                state,
                profile: p,
                dominating,
                chosen,
            } => Witness::ParetoScf {
                state: *state,
                profile: profile(p)?,
                dominating: *dominating,
                chosen: *chosen,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomRecord {
    pub axiom: String,
    pub passed: bool,
    pub checked: usize,
    pub witnesses: Vec<WitnessRecord>,
}

impl From<&AxiomReport<Rational>> for AxiomRecord {
    fn from(r: &AxiomReport<Rational>) -> Self {
        Self {
            axiom: r.axiom.name().to_string(),
            passed: r.passed,
            checked: r.checked_count,
            witnesses: r.witnesses.iter().map(WitnessRecord::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    pub code: i32,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    /// `sha256:<hex>` of the input file, absent for generated inputs.
    pub input_digest: Option<String>,
    pub command: String,
    pub config: Value,
    pub results: Value,
    pub exit: ExitRecord,
    pub wall_clock_ms: u64,
}
