//! Fixtures and seeded generators: the two-state dominated-choice MDP,
//! preference-drift MDPs and random profiles, rewards and expressions.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::axioms::{check_pareto_scf, AxiomError, Witness};
use crate::model::{
    sum_column, ModelError, Policy, Profile, SocialChoiceMdp, TransitionKernel,
};
use crate::scalar::{rat, Rational, Scalar};
use crate::solver::{value_iteration, DiscountFactor, Real, SolveConfig, SolverError, TabularMdp};
use crate::welfare::{Expr, MonotoneTransform, RewardSpec};

/// Utility grid used by the generators.
pub const GRID_LOW: i64 = -10;
pub const GRID_HIGH: i64 = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("counts must be positive (members {members}, alternatives {alternatives}, states {states})")]
    EmptyCount {
        members: usize,
        alternatives: usize,
        states: usize,
    },
    #[error("{name} must lie in [0, 1]")]
    Probability { name: &'static str },
    #[error("cannot draw {requested} distinct profiles from a grid of {available}")]
    ProfileSpace { requested: usize, available: String },
    #[error("gave up after {attempts} draws with {found} of {requested} distinct profiles")]
    Exhausted {
        attempts: usize,
        found: usize,
        requested: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Axiom(#[from] AxiomError),
}

fn labels(prefix: &str, count: usize) -> Vec<String> {
    (0..count).map(|i| format!("{prefix}{}", i + 1)).collect()
}

/// Two members, alternatives `x`, `y`. At `U_A` both members get 1 from `x`
/// and 0 from `y`; `x` keeps society at `U_A`, `y` moves it to the absorbing
/// `U_B` where both alternatives are worth 10 to everyone.
pub fn fixture_f1() -> SocialChoiceMdp<Rational> {
    fixture_f1_as()
}

/// [`fixture_f1`] over any scalar type.
pub fn fixture_f1_as<S: Scalar>() -> SocialChoiceMdp<S> {
    let n = |v: i64| S::from_i64(v);
    let u_a = Profile::new(vec![vec![n(1), n(0)], vec![n(1), n(0)]]).expect("rectangular");
    let u_b = Profile::new(vec![vec![n(10), n(10)], vec![n(10), n(10)]]).expect("rectangular");
    let kernel = TransitionKernel::deterministic(&[((0, 0), 0), ((0, 1), 1), ((1, 0), 1), ((1, 1), 1)]);
    SocialChoiceMdp::new(
        vec!["1".into(), "2".into()],
        vec!["x".into(), "y".into()],
        vec![u_a, u_b],
        kernel,
        RewardSpec::Utilitarian,
    )
}

/// Names of the fixture's states, in index order.
pub const F1_STATE_NAMES: [&str; 2] = ["U_A", "U_B"];

/// Parameters of the preference-drift kernel family.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftParams {
    /// Probability of staying in the current profile.
    pub stickiness: Rational,
    /// Share of the remaining mass routed toward profiles that rate the chosen
    /// alternative higher; the rest is spread uniformly.
    pub attraction: Rational,
    pub seed: u64,
}

impl DriftParams {
    pub fn new(stickiness: Rational, attraction: Rational, seed: u64) -> Self {
        Self {
            stickiness,
            attraction,
            seed,
        }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let unit = |v: &Rational| *v >= Rational::zero() && *v <= Rational::one();
        if !unit(&self.stickiness) {
            return Err(ScenarioError::Probability { name: "stickiness" });
        }
        if !unit(&self.attraction) {
            return Err(ScenarioError::Probability { name: "attraction" });
        }
        Ok(())
    }
}

impl Default for DriftParams {
    fn default() -> Self {
        Self::new(rat(1, 2), rat(1, 2), 0)
    }
}

/// Uniformly random integer profile on the generator grid.
pub fn random_profile<R: Rng>(rng: &mut R, members: usize, alternatives: usize) -> Profile<Rational> {
    random_profile_in(rng, members, alternatives, GRID_LOW, GRID_HIGH)
}

/// Uniformly random integer profile with utilities in `low..=high`.
pub fn random_profile_in<R: Rng>(
    rng: &mut R,
    members: usize,
    alternatives: usize,
    low: i64,
    high: i64,
) -> Profile<Rational> {
    let rows = (0..members)
        .map(|_| {
            (0..alternatives)
                .map(|_| Rational::from_integer(rng.random_range(low..=high).into()))
                .collect()
        })
        .collect();
    Profile::new(rows).expect("generator shapes are rectangular")
}

fn distinct_profiles(
    rng: &mut ChaCha8Rng,
    members: usize,
    alternatives: usize,
    states: usize,
) -> Result<Vec<Profile<Rational>>, ScenarioError> {
    let width = (GRID_HIGH - GRID_LOW + 1) as u128;
    let cells = (members * alternatives) as u32;
    let available = width.checked_pow(cells);
    if available.is_some_and(|a| a < states as u128) {
        return Err(ScenarioError::ProfileSpace {
            requested: states,
            available: available.unwrap().to_string(),
        });
    }
    let attempts = 1000 * states;
    let mut profiles: Vec<Profile<Rational>> = Vec::with_capacity(states);
    for _ in 0..attempts {
        if profiles.len() == states {
            break;
        }
        let candidate = random_profile(rng, members, alternatives);
        if !profiles.contains(&candidate) {
            profiles.push(candidate);
        }
    }
    if profiles.len() < states {
        return Err(ScenarioError::Exhausted {
            attempts,
            found: profiles.len(),
            requested: states,
        });
    }
    Ok(profiles)
}

/// Transition row for choosing `action` at `state`.
///
/// `stickiness` stays put. Of the rest, an `attraction` share is split in
/// proportion to `Σ_i U_i(action) - min + 1` over the target profiles, and the
/// remainder is uniform.
fn drift_row(
    profiles: &[Profile<Rational>],
    state: usize,
    action: usize,
    params: &DriftParams,
) -> Vec<(usize, Rational)> {
    let n = profiles.len();
    let rest = Rational::one() - params.stickiness.clone();
    let sums: Vec<Rational> = profiles.iter().map(|p| sum_column(p, action)).collect();
    let low = sums.iter().min().cloned().unwrap_or_else(Rational::zero);
    let weights: Vec<Rational> = sums.iter().map(|s| s - &low + Rational::one()).collect();
    let total_weight: Rational = weights.iter().cloned().sum();
    let attracted = rest.clone() * params.attraction.clone();
    let uniform = (rest - attracted.clone()) / Rational::from_integer((n as i64).into());

    let mut mass: BTreeMap<usize, Rational> = BTreeMap::new();
    *mass.entry(state).or_insert_with(Rational::zero) += params.stickiness.clone();
    for (t, w) in weights.iter().enumerate() {
        let share = uniform.clone() + attracted.clone() * w / &total_weight;
        *mass.entry(t).or_insert_with(Rational::zero) += share;
    }
    mass.into_iter().filter(|(_, p)| !p.is_zero()).collect()
}

/// Seeded random MDP over distinct grid profiles with a drift kernel and
/// utilitarian reward. A pure function of its arguments.
///
/// With `attraction = 0` every action induces the same transition row.
pub fn gen_drift_mdp(
    members: usize,
    alternatives: usize,
    states: usize,
    params: &DriftParams,
) -> Result<SocialChoiceMdp<Rational>, ScenarioError> {
    if members == 0 || alternatives == 0 || states == 0 {
        return Err(ScenarioError::EmptyCount {
            members,
            alternatives,
            states,
        });
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let profiles = distinct_profiles(&mut rng, members, alternatives, states)?;
    let mut kernel = TransitionKernel::new();
    for s in 0..states {
        for a in 0..alternatives {
            kernel.set_row(s, a, drift_row(&profiles, s, a, params));
        }
    }
    Ok(SocialChoiceMdp::validated(
        labels("m", members),
        labels("a", alternatives),
        profiles,
        kernel,
        RewardSpec::Utilitarian,
    )?)
}

/// A dominated alternative chosen by an optimal policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoViolation<F> {
    pub state: usize,
    pub profile: Profile<Rational>,
    pub dominating: usize,
    pub chosen: usize,
    /// `Q*(state, dominating)`.
    pub dominating_value: F,
    /// `Q*(state, chosen)`.
    pub chosen_value: F,
    pub policy: Policy,
}

/// Solves `mdp`, then looks for a state where the greedy optimal policy picks
/// an alternative every member ranks strictly below another one.
pub fn find_pareto_scf_violation<F: Real>(
    mdp: &SocialChoiceMdp<Rational>,
    gamma: DiscountFactor<F>,
    cfg: &SolveConfig<F>,
) -> Result<Option<ParetoViolation<F>>, ScenarioError> {
    let tabular = TabularMdp::<F>::from_mdp(mdp)?;
    let solution = value_iteration(&tabular, gamma, cfg)?;
    let report = check_pareto_scf(&solution.policy, mdp)?;
    Ok(report.witnesses.into_iter().next().map(|w| match w {
        Witness::ParetoScf {
            state,
            profile,
            dominating,
            chosen,
        } => ParetoViolation {
            state,
            profile,
            dominating,
            chosen,
            dominating_value: tabular.q_value(state, dominating, &solution.values, gamma),
            chosen_value: tabular.q_value(state, chosen, &solution.values, gamma),
            policy: solution.policy.clone(),
        },
        _ => unreachable!("the Pareto (SCF) check only emits its own witnesses"),
    }))
}

/// Profiles sharing one random roster: 1 to `max_members` members and
/// 2 to `max_alternatives` alternatives.
pub fn random_profile_set<R: Rng>(
    rng: &mut R,
    max_members: usize,
    max_alternatives: usize,
    count: usize,
) -> Vec<Profile<Rational>> {
    let members = rng.random_range(1..=max_members.max(1));
    let alternatives = rng.random_range(2..=max_alternatives.max(2));
    (0..count)
        .map(|_| random_profile_in(rng, members, alternatives, -5, 5))
        .collect()
}

/// Random reward expression over `members` members and `alternatives` alternatives.
pub fn random_expr<R: Rng>(rng: &mut R, members: usize, alternatives: usize, depth: u32) -> Expr {
    let leaf = |rng: &mut R| -> Expr {
        match rng.random_range(0..3) {
            0 => Expr::Const(rat(rng.random_range(-5..=5), rng.random_range(1..=3))),
            1 => Expr::parse(&format!(
                "(utility {} alt)",
                rng.random_range(0..members)
            ))
            .expect("well-formed"),
            _ => Expr::parse(&format!(
                "(utility {} {})",
                rng.random_range(0..members),
                rng.random_range(0..alternatives)
            ))
            .expect("well-formed"),
        }
    };
    if depth == 0 {
        return leaf(rng);
    }
    let sub = |rng: &mut R| random_expr(rng, members, alternatives, depth - 1);
    match rng.random_range(0..9) {
        0 => leaf(rng),
        1 => Expr::Add(vec![sub(rng), sub(rng)]),
        2 => Expr::Mul(vec![sub(rng), sub(rng)]),
        3 => Expr::Sub(Box::new(sub(rng)), Box::new(sub(rng))),
        4 => Expr::Neg(Box::new(sub(rng))),
        5 => Expr::Min(vec![sub(rng), sub(rng)]),
        6 => Expr::Max(vec![sub(rng), sub(rng)]),
        7 => Expr::SumOverMembers(Box::new(sub(rng))),
        _ => Expr::IfPositive(Box::new(sub(rng)), Box::new(sub(rng)), Box::new(sub(rng))),
    }
}

/// Random reward: utilitarian, a registry transform, a dictator, a constant or a random expression.
pub fn random_reward<R: Rng>(rng: &mut R, members: usize, alternatives: usize) -> RewardSpec<Rational> {
    match rng.random_range(0..5) {
        0 => RewardSpec::Utilitarian,
        1 => {
            let registry = MonotoneTransform::<Rational>::registry();
            RewardSpec::QuasiUtilitarian(registry.choose(rng).expect("non-empty").clone())
        }
        2 => RewardSpec::dictator(rng.random_range(0..members)),
        3 => RewardSpec::constant(rat(rng.random_range(-5..=5), 1)),
        _ => RewardSpec::Custom(random_expr(rng, members, alternatives, 3)),
    }
}
