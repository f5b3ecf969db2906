//! Reward functions and the social welfare functionals they induce.
//!
//! A reward `R(U, a)` ranks alternatives at every profile; reading
//! `x ≽ y ⟺ R(U, x) ≥ R(U, y)` gives the induced relation `f_R(U)`, which is
//! how the SWF axioms are applied to rewards.

pub mod expr;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{sum_column, ModelError, Profile};
use crate::scalar::{pow, Scalar};

pub use expr::{AltRef, Expr, ExprError, MemberRef};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WelfareError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("tabular reward has no value for this profile and action {action} (no extension rule)")]
    TabularMiss { action: usize },
    #[error("value {value} outside the piecewise-linear table range [{low}, {high}]")]
    OutsideTable {
        value: String,
        low: String,
        high: String,
    },
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
}

/// A strictly increasing map evaluable exactly over rationals.
#[derive(Debug, Clone, PartialEq)]
pub enum MonotoneTransform<S> {
    Identity,
    /// `a * v + b` with `a > 0`.
    Affine { a: S, b: S },
    /// `v^k` with `k` odd.
    OddPower(u32),
    /// Linear interpolation through breakpoints increasing in both coordinates.
    PiecewiseLinear(Vec<(S, S)>),
}

impl<S: Scalar> MonotoneTransform<S> {
    pub fn affine(a: S, b: S) -> Result<Self, WelfareError> {
        let t = MonotoneTransform::Affine { a, b };
        t.validate()?;
        Ok(t)
    }

    pub fn odd_power(k: u32) -> Result<Self, WelfareError> {
        let t = MonotoneTransform::OddPower(k);
        t.validate()?;
        Ok(t)
    }

    pub fn piecewise_linear(points: Vec<(S, S)>) -> Result<Self, WelfareError> {
        let t = MonotoneTransform::PiecewiseLinear(points);
        t.validate()?;
        Ok(t)
    }

    /// Checks the strict-monotonicity conditions of the variant.
    pub fn validate(&self) -> Result<(), WelfareError> {
        match self {
            MonotoneTransform::Identity => Ok(()),
            MonotoneTransform::Affine { a, .. } if a.is_positive() => Ok(()),
            MonotoneTransform::Affine { a, .. } => Err(WelfareError::InvalidTransform(format!(
                "affine slope must be positive, got {a}"
            ))),
            MonotoneTransform::OddPower(k) if k % 2 == 1 => Ok(()),
            MonotoneTransform::OddPower(k) => Err(WelfareError::InvalidTransform(format!(
                "power must be odd and positive, got {k}"
            ))),
            MonotoneTransform::PiecewiseLinear(points) => {
                if points.len() < 2 {
                    return Err(WelfareError::InvalidTransform(
                        "piecewise-linear table needs at least two breakpoints".into(),
                    ));
                }
                if points
                    .windows(2)
                    .any(|w| !(w[0].0 < w[1].0 && w[0].1 < w[1].1))
                {
                    return Err(WelfareError::InvalidTransform(
                        "breakpoints must increase strictly in both coordinates".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn apply(&self, value: &S) -> Result<S, WelfareError> {
        transform_apply(self, value)
    }

    pub fn name(&self) -> String {
        match self {
            MonotoneTransform::Identity => "identity".into(),
            MonotoneTransform::Affine { a, b } => format!("affine({a},{b})"),
            MonotoneTransform::OddPower(k) => format!("odd-power({k})"),
            MonotoneTransform::PiecewiseLinear(points) => {
                format!("piecewise-linear({} breakpoints)", points.len())
            }
        }
    }

    /// The transforms exercised by the property suites.
    pub fn registry() -> Vec<Self> {
        let big = 1_000_000;
        vec![
            MonotoneTransform::Identity,
            MonotoneTransform::Affine {
                a: S::from_i64(3),
                b: S::from_i64(5),
            },
            MonotoneTransform::Affine {
                a: S::ratio(1, 2),
                b: S::from_i64(-7),
            },
            MonotoneTransform::OddPower(3),
            MonotoneTransform::OddPower(5),
            MonotoneTransform::PiecewiseLinear(vec![
                (S::from_i64(-big), S::from_i64(-2 * big)),
                (S::zero(), S::zero()),
                (S::from_i64(10), S::one()),
                (S::from_i64(big), S::from_i64(big)),
            ]),
        ]
    }
}

/// Applies a monotone transform exactly.
pub fn transform_apply<S: Scalar>(t: &MonotoneTransform<S>, value: &S) -> Result<S, WelfareError> {
    match t {
        MonotoneTransform::Identity => Ok(value.clone()),
        MonotoneTransform::Affine { a, b } => Ok(value.affine(a, b)),
        MonotoneTransform::OddPower(k) => Ok(pow(value, *k)),
        MonotoneTransform::PiecewiseLinear(points) => {
            let (low, high) = (&points[0], &points[points.len() - 1]);
            if *value < low.0 || *value > high.0 {
                return Err(WelfareError::OutsideTable {
                    value: value.to_string(),
                    low: low.0.to_string(),
                    high: high.0.to_string(),
                });
            }
            let seg = points
                .windows(2)
                .find(|w| *value <= w[1].0)
                .expect("value within table range");
            let ((x0, y0), (x1, y1)) = (&seg[0], &seg[1]);
            Ok(value.lerp(x0, y0, x1, y1))
        }
    }
}

/// How a tabular reward answers for profiles outside its table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExtensionRule {
    #[default]
    None,
    /// Use the stored state whose utilitarian sum at the action is closest.
    NearestBySum,
}

/// Reward values observed on a finite set of profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularReward<S> {
    pub states: Vec<Profile<S>>,
    pub values: BTreeMap<(usize, usize), S>,
    pub extension: ExtensionRule,
}

impl<S: Scalar> TabularReward<S> {
    pub fn new(
        states: Vec<Profile<S>>,
        values: BTreeMap<(usize, usize), S>,
        extension: ExtensionRule,
    ) -> Self {
        Self {
            states,
            values,
            extension,
        }
    }

    fn lookup(&self, profile: &Profile<S>, action: usize) -> Result<S, WelfareError> {
        let exact = self
            .states
            .iter()
            .position(|s| s == profile)
            .and_then(|s| self.values.get(&(s, action)));
        if let Some(v) = exact {
            return Ok(v.clone());
        }
        match self.extension {
            ExtensionRule::None => Err(WelfareError::TabularMiss { action }),
            ExtensionRule::NearestBySum => {
                let target = sum_column(profile, action);
                let mut best: Option<(S, &S)> = None;
                for ((s, a), v) in &self.values {
                    if *a != action || self.states[*s].same_roster(profile).is_err() {
                        continue;
                    }
                    let gap = (sum_column(&self.states[*s], action) - target.clone()).abs();
                    if best.as_ref().is_none_or(|(g, _)| gap < *g) {
                        best = Some((gap, v));
                    }
                }
                best.map(|(_, v)| v.clone())
                    .ok_or(WelfareError::TabularMiss { action })
            }
        }
    }
}

/// A reward function `R : profiles x alternatives -> scalar`.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardSpec<S> {
    /// `Σ_i U_i(a)`.
    Utilitarian,
    /// `f(Σ_i U_i(a))` for a strictly increasing `f`.
    QuasiUtilitarian(MonotoneTransform<S>),
    Tabular(TabularReward<S>),
    Custom(Expr),
}

impl<S: Scalar> RewardSpec<S> {
    pub fn quasi(transform: MonotoneTransform<S>) -> Result<Self, WelfareError> {
        transform.validate()?;
        Ok(RewardSpec::QuasiUtilitarian(transform))
    }

    /// `R ≡ c`.
    pub fn constant(c: S) -> Self {
        let c = c
            .to_rational()
            .expect("finite constant reward");
        RewardSpec::Custom(Expr::Const(c))
    }

    /// `R(U, a) = U_member(a)`.
    pub fn dictator(member: usize) -> Self {
        RewardSpec::Custom(Expr::dictator(member))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            RewardSpec::Utilitarian => "utilitarian",
            RewardSpec::QuasiUtilitarian(_) => "quasi",
            RewardSpec::Tabular(_) => "tabular",
            RewardSpec::Custom(_) => "custom",
        }
    }

    /// Whether the reward is defined on arbitrary profiles, as generative checks require.
    pub fn is_total(&self) -> bool {
        !matches!(self, RewardSpec::Tabular(t) if t.extension == ExtensionRule::None)
    }

    /// The monotone transform when the reward is (quasi-)utilitarian.
    pub fn quasi_transform(&self) -> Option<MonotoneTransform<S>> {
        match self {
            RewardSpec::Utilitarian => Some(MonotoneTransform::Identity),
            RewardSpec::QuasiUtilitarian(t) => Some(t.clone()),
            _ => None,
        }
    }

    pub fn eval(&self, profile: &Profile<S>, alternative: usize) -> Result<S, WelfareError> {
        eval_reward(self, profile, alternative)
    }

    /// Rewards of every alternative at `profile`.
    pub fn scores(&self, profile: &Profile<S>) -> Result<Vec<S>, WelfareError> {
        (0..profile.num_alternatives())
            .map(|a| eval_reward(self, profile, a))
            .collect()
    }

    /// Confirms the reward is defined on every `(state, alternative)` pair.
    pub(crate) fn check_covers(&self, states: &[Profile<S>], alternatives: usize) -> Result<(), String> {
        if let RewardSpec::QuasiUtilitarian(t) = self {
            t.validate().map_err(|e| e.to_string())?;
        }
        for (s, profile) in states.iter().enumerate() {
            for a in 0..alternatives {
                if let Err(e) = eval_reward(self, profile, a) {
                    return Err(format!("state {s}, alternative {a}: {e}"));
                }
            }
        }
        Ok(())
    }
}

/// Evaluates `R(U, a)`.
pub fn eval_reward<S: Scalar>(
    reward: &RewardSpec<S>,
    profile: &Profile<S>,
    alternative: usize,
) -> Result<S, WelfareError> {
    profile.check_alternative(alternative)?;
    match reward {
        RewardSpec::Utilitarian => Ok(sum_column(profile, alternative)),
        RewardSpec::QuasiUtilitarian(t) => transform_apply(t, &sum_column(profile, alternative)),
        RewardSpec::Tabular(table) => table.lookup(profile, alternative),
        RewardSpec::Custom(expr) => Ok(expr.eval(profile, alternative)?),
    }
}

/// Binary relation over alternatives; `weak[x][y]` reads "x is socially at least as good as y".
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SocialRelation {
    pub weak: Vec<Vec<bool>>,
}

impl SocialRelation {
    /// `x ≽ y ⟺ scores[x] ≥ scores[y]`.
    pub fn from_scores<S: PartialOrd>(scores: &[S]) -> Self {
        let weak = scores
            .iter()
            .map(|sx| scores.iter().map(|sy| sx >= sy).collect())
            .collect();
        Self { weak }
    }

    pub fn len(&self) -> usize {
        self.weak.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weak.is_empty()
    }

    pub fn weakly_prefers(&self, x: usize, y: usize) -> bool {
        self.weak[x][y]
    }

    pub fn strictly_prefers(&self, x: usize, y: usize) -> bool {
        self.weak[x][y] && !self.weak[y][x]
    }

    pub fn is_complete(&self) -> bool {
        let n = self.len();
        (0..n).all(|x| (0..n).all(|y| self.weak[x][y] || self.weak[y][x]))
    }

    pub fn is_transitive(&self) -> bool {
        let n = self.len();
        (0..n).all(|x| {
            (0..n).all(|y| !self.weak[x][y] || (0..n).all(|z| !self.weak[y][z] || self.weak[x][z]))
        })
    }
}

/// The relation `f_R(U)` induced by a reward at one profile.
pub fn induced_swf<S: Scalar>(
    reward: &RewardSpec<S>,
    profile: &Profile<S>,
) -> Result<SocialRelation, WelfareError> {
    Ok(SocialRelation::from_scores(&reward.scores(profile)?))
}

/// `x P(rel) y`: weak preference without the converse.
pub fn strictly_prefers(rel: &SocialRelation, x: usize, y: usize) -> bool {
    rel.strictly_prefers(x, y)
}

/// The Utilitarianism SWF computed directly from column sums.
pub fn utilitarian_relation<S: Scalar>(profile: &Profile<S>) -> SocialRelation {
    let sums: Vec<S> = (0..profile.num_alternatives())
        .map(|a| sum_column(profile, a))
        .collect();
    SocialRelation::from_scores(&sums)
}
