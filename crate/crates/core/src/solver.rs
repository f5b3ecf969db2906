//! Discounted-horizon solvers: Bellman backups, policy evaluation, value
//! iteration, Monte Carlo returns and brute-force policy enumeration.
//!
//! Values are floating point. The value of a policy is
//! `V(π, s) = E[Σ_{t≥0} γ^t R(s_t, π(s_t))]` with `s_0 = s`, the unrolling of
//! `V(π, s) = R(s, π(s)) + γ Σ_{s'} p(s' | s, π(s)) V(π, s')`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::model::{validate_mdp, Policy, SocialChoiceMdp, ValidationReport};
use crate::scalar::Scalar;
use crate::welfare::{eval_reward, WelfareError};

/// Floating-point type the solvers run on: `f32` or `f64`.
pub trait Real: Float + FromPrimitive + Debug + Display + Send + Sync + 'static {
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("representable constant")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid MDP:\n{0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Reward(#[from] WelfareError),
    #[error("discount factor must lie strictly between 0 and 1, got {0}")]
    Discount(f64),
    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("{count} policies exceed the enumeration cap of {cap}")]
    EnumerationCap { count: u128, cap: u64 },
    #[error("policy does not fit the MDP ({states} states, {actions} actions)")]
    PolicyShape { states: usize, actions: usize },
    #[error("state index {0} out of range")]
    StateOutOfRange(usize),
    #[error("reward kind `{0}` is not quasi-utilitarian")]
    NotQuasiUtilitarian(&'static str),
    #[error("malformed tabular MDP: {0}")]
    Malformed(String),
}

/// Discount factor `γ` with `0 < γ < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountFactor<F>(F);

impl<F: Real> DiscountFactor<F> {
    pub fn new(gamma: F) -> Result<Self, SolverError> {
        if gamma > F::zero() && gamma < F::one() {
            Ok(Self(gamma))
        } else {
            Err(SolverError::Discount(gamma.to_f64().unwrap_or(f64::NAN)))
        }
    }

    pub fn get(self) -> F {
        self.0
    }
}

/// Per-state values of one policy (or of the optimum).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable<F> {
    pub values: Vec<F>,
}

impl<F: Real> ValueTable<F> {
    pub fn zeros(states: usize) -> Self {
        Self {
            values: vec![F::zero(); states],
        }
    }

    pub fn constant(states: usize, value: F) -> Self {
        Self {
            values: vec![value; states],
        }
    }

    pub fn get(&self, state: usize) -> F {
        self.values[state]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sup-norm distance.
    pub fn distance(&self, other: &Self) -> F {
        self.values
            .iter()
            .zip(&other.values)
            .fold(F::zero(), |acc, (a, b)| acc.max((*a - *b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig<F> {
    /// Sup-norm accuracy target for values.
    pub epsilon: F,
    pub max_iterations: usize,
    /// Actions whose backed-up values differ by at most this are treated as tied.
    pub tie_tolerance: F,
    pub seed: u64,
    /// Upper bound on the Monte Carlo horizon.
    pub horizon_cap: Option<usize>,
    pub trajectories: usize,
    /// Largest `|A|^|S|` brute-force enumeration will attempt.
    pub enumeration_cap: u64,
    /// Policy evaluation solves the linear system directly up to this many states.
    pub direct_solve_max_states: usize,
    /// Coverage of the Monte Carlo intervals used when comparing against Bellman values.
    pub confidence: f64,
}

impl<F: Real> Default for SolveConfig<F> {
    fn default() -> Self {
        Self {
            epsilon: F::lit(1e-9),
            max_iterations: 1_000_000,
            tie_tolerance: F::lit(1e-7),
            seed: 0,
            horizon_cap: None,
            trajectories: 10_000,
            enumeration_cap: 1_000_000,
            direct_solve_max_states: 64,
            confidence: 0.95,
        }
    }
}

/// Rewards and transitions of an MDP flattened to floats.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<F> {
    rewards: Vec<Vec<F>>,
    transitions: Vec<Vec<Vec<(usize, F)>>>,
}

impl<F: Real> TabularMdp<F> {
    /// Validates `mdp` and evaluates its reward at every `(state, action)`.
    pub fn from_mdp<S: Scalar>(mdp: &SocialChoiceMdp<S>) -> Result<Self, SolverError> {
        let report = validate_mdp(mdp);
        if !report.is_valid() {
            return Err(SolverError::Invalid(report));
        }
        let to_f = |v: &S| F::from_f64(v.to_f64()).unwrap_or_else(F::nan);
        let mut rewards = Vec::with_capacity(mdp.num_states());
        let mut transitions = Vec::with_capacity(mdp.num_states());
        for (s, profile) in mdp.states.iter().enumerate() {
            let mut reward_row = Vec::with_capacity(mdp.num_alternatives());
            let mut transition_row = Vec::with_capacity(mdp.num_alternatives());
            for a in 0..mdp.num_alternatives() {
                reward_row.push(to_f(&eval_reward(&mdp.reward, profile, a)?));
                let row = mdp.kernel.row(s, a).expect("validated kernel covers every pair");
                transition_row.push(
                    row.iter()
                        .filter(|(_, p)| !p.is_zero())
                        .map(|(next, p)| (*next, to_f(p)))
                        .collect(),
                );
            }
            rewards.push(reward_row);
            transitions.push(transition_row);
        }
        Ok(Self {
            rewards,
            transitions,
        })
    }

    /// Builds a tabular MDP directly; `transitions[s][a]` lists `(successor, probability)`.
    pub fn from_parts(
        rewards: Vec<Vec<F>>,
        transitions: Vec<Vec<Vec<(usize, F)>>>,
    ) -> Result<Self, SolverError> {
        let n = rewards.len();
        if n == 0 || transitions.len() != n {
            return Err(SolverError::Malformed("state counts differ or are zero".into()));
        }
        let actions = rewards[0].len();
        for s in 0..n {
            if rewards[s].len() != actions || transitions[s].len() != actions || actions == 0 {
                return Err(SolverError::Malformed(format!("state {s} has a ragged action set")));
            }
            for (a, row) in transitions[s].iter().enumerate() {
                let total = row.iter().fold(F::zero(), |acc, (_, p)| acc + *p);
                let valid = row.iter().all(|(next, p)| *next < n && *p >= F::zero());
                if !valid || (total - F::one()).abs() > F::lit(1e-6) {
                    return Err(SolverError::Malformed(format!("row ({s},{a}) is not a distribution")));
                }
            }
        }
        Ok(Self {
            rewards,
            transitions,
        })
    }

    pub fn num_states(&self) -> usize {
        self.rewards.len()
    }

    pub fn num_actions(&self) -> usize {
        self.rewards[0].len()
    }

    pub fn reward(&self, state: usize, action: usize) -> F {
        self.rewards[state][action]
    }

    pub fn successors(&self, state: usize, action: usize) -> &[(usize, F)] {
        &self.transitions[state][action]
    }

    /// Largest `|R(s, a)|`.
    pub fn reward_bound(&self) -> F {
        self.rewards
            .iter()
            .flatten()
            .fold(F::zero(), |acc, r| acc.max(r.abs()))
    }

    /// `R(s, a) + γ Σ p(s' | s, a) V(s')`.
    pub fn q_value(&self, state: usize, action: usize, values: &ValueTable<F>, gamma: DiscountFactor<F>) -> F {
        let expected = self.transitions[state][action]
            .iter()
            .fold(F::zero(), |acc, (next, p)| acc + *p * values.values[*next]);
        self.rewards[state][action] + gamma.get() * expected
    }

    /// Whether every transition row has a single successor.
    pub fn is_deterministic(&self) -> bool {
        self.transitions.iter().flatten().all(|row| row.len() == 1)
    }

    fn check_policy(&self, policy: &Policy) -> Result<(), SolverError> {
        if policy.fits(self.num_states(), self.num_actions()) {
            Ok(())
        } else {
            Err(SolverError::PolicyShape {
                states: self.num_states(),
                actions: self.num_actions(),
            })
        }
    }

    fn policy_count(&self) -> u128 {
        (self.num_actions() as u128)
            .checked_pow(self.num_states() as u32)
            .unwrap_or(u128::MAX)
    }

    fn decode_policy(&self, mut index: u128) -> Policy {
        let actions = self.num_actions() as u128;
        let choice = (0..self.num_states())
            .map(|_| {
                let a = (index % actions) as usize;
                index /= actions;
                a
            })
            .collect();
        Policy::new(choice)
    }
}

/// One application of the policy's Bellman operator at every state.
///
/// Panics if `policy` or `values` do not cover the MDP's states.
pub fn bellman_backup<F: Real>(
    mdp: &TabularMdp<F>,
    policy: &Policy,
    values: &ValueTable<F>,
    gamma: DiscountFactor<F>,
) -> ValueTable<F> {
    assert_eq!(policy.len(), mdp.num_states(), "policy must cover every state");
    assert_eq!(values.len(), mdp.num_states(), "value table must cover every state");
    ValueTable {
        values: (0..mdp.num_states())
            .map(|s| mdp.q_value(s, policy.action(s), values, gamma))
            .collect(),
    }
}

/// One application of the Bellman optimality operator.
pub fn optimal_backup<F: Real>(mdp: &TabularMdp<F>, values: &ValueTable<F>, gamma: DiscountFactor<F>) -> ValueTable<F> {
    ValueTable {
        values: (0..mdp.num_states())
            .map(|s| {
                (0..mdp.num_actions())
                    .map(|a| mdp.q_value(s, a, values, gamma))
                    .fold(F::neg_infinity(), F::max)
            })
            .collect(),
    }
}

/// `sup_s |(T^π V)(s) - V(s)|`.
pub fn bellman_residual<F: Real>(
    mdp: &TabularMdp<F>,
    policy: &Policy,
    values: &ValueTable<F>,
    gamma: DiscountFactor<F>,
) -> F {
    bellman_backup(mdp, policy, values, gamma).distance(values)
}

/// Value of `policy`, accurate to `cfg.epsilon` in sup norm.
pub fn policy_evaluation<F: Real>(
    mdp: &TabularMdp<F>,
    policy: &Policy,
    gamma: DiscountFactor<F>,
    cfg: &SolveConfig<F>,
) -> Result<ValueTable<F>, SolverError> {
    mdp.check_policy(policy)?;
    let start = if mdp.num_states() <= cfg.direct_solve_max_states {
        let direct = solve_linear_system(mdp, policy, gamma);
        if bellman_residual(mdp, policy, &direct, gamma) <= cfg.epsilon {
            return Ok(direct);
        }
        direct
    } else {
        ValueTable::zeros(mdp.num_states())
    };
    iterate_policy(mdp, policy, start, gamma, cfg)
}

/// Successive approximation until the step size guarantees `epsilon` accuracy.
fn iterate_policy<F: Real>(
    mdp: &TabularMdp<F>,
    policy: &Policy,
    mut values: ValueTable<F>,
    gamma: DiscountFactor<F>,
    cfg: &SolveConfig<F>,
) -> Result<ValueTable<F>, SolverError> {
    let threshold = stopping_threshold(cfg.epsilon, gamma);
    let mut change = F::infinity();
    for _ in 0..cfg.max_iterations {
        let next = bellman_backup(mdp, policy, &values, gamma);
        change = next.distance(&values);
        values = next;
        if change <= threshold {
            return Ok(values);
        }
    }
    Err(SolverError::NotConverged {
        iterations: cfg.max_iterations,
        residual: change.to_f64().unwrap_or(f64::NAN),
    })
}

/// Step size below which the iterate is within `epsilon` of the fixed point.
fn stopping_threshold<F: Real>(epsilon: F, gamma: DiscountFactor<F>) -> F {
    let g = gamma.get();
    epsilon * (F::one() - g) / (F::lit(2.0) * g)
}

/// Solves `(I - γ P_π) V = R_π` by Gaussian elimination with partial pivoting.
fn solve_linear_system<F: Real>(mdp: &TabularMdp<F>, policy: &Policy, gamma: DiscountFactor<F>) -> ValueTable<F> {
    let n = mdp.num_states();
    let g = gamma.get();
    let mut a = vec![vec![F::zero(); n + 1]; n];
    for (s, row) in a.iter_mut().enumerate() {
        let action = policy.action(s);
        row[s] = F::one();
        for (next, p) in mdp.successors(s, action) {
            row[*next] = row[*next] - g * *p;
        }
        row[n] = mdp.reward(s, action);
    }
    // I - γP is strictly diagonally dominant, so pivots never vanish.
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        for r in col + 1..n {
            let factor = a[r][col] / a[col][col];
            if factor.is_zero() {
                continue;
            }
            for c in col..=n {
                let delta = factor * a[col][c];
                a[r][c] = a[r][c] - delta;
            }
        }
    }
    let mut values = vec![F::zero(); n];
    for r in (0..n).rev() {
        let tail = (r + 1..n).fold(F::zero(), |acc, c| acc + a[r][c] * values[c]);
        values[r] = (a[r][n] - tail) / a[r][r];
    }
    ValueTable { values }
}

/// Optimal values, a greedy policy and every tied optimal action.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution<F> {
    pub values: ValueTable<F>,
    /// Smallest optimal action at every state.
    pub policy: Policy,
    /// Per state, every action whose backed-up value is within `tie_tolerance` of the best.
    pub optimal_actions: Vec<Vec<usize>>,
    pub iterations: usize,
}

impl<F: Real> OptimalSolution<F> {
    /// Number of policies choosing only optimal actions.
    pub fn policy_count(&self) -> u128 {
        self.optimal_actions
            .iter()
            .try_fold(1u128, |acc, set| acc.checked_mul(set.len() as u128))
            .unwrap_or(u128::MAX)
    }

    /// Every policy that picks an optimal action at every state, in lexicographic order.
    pub fn optimal_policies(&self, cap: u64) -> Result<Vec<Policy>, SolverError> {
        let count = self.policy_count();
        if count > cap as u128 {
            return Err(SolverError::EnumerationCap { count, cap });
        }
        let mut policies = vec![Vec::with_capacity(self.optimal_actions.len())];
        for set in &self.optimal_actions {
            policies = policies
                .into_iter()
                .flat_map(|prefix| {
                    set.iter().map(move |&a| {
                        let mut p = prefix.clone();
                        p.push(a);
                        p
                    })
                })
                .collect();
        }
        Ok(policies.into_iter().map(Policy::new).collect())
    }
}

fn tie_sets<F: Real>(
    mdp: &TabularMdp<F>,
    values: &ValueTable<F>,
    gamma: DiscountFactor<F>,
    tolerance: F,
) -> Vec<Vec<usize>> {
    (0..mdp.num_states())
        .map(|s| {
            let q: Vec<F> = (0..mdp.num_actions())
                .map(|a| mdp.q_value(s, a, values, gamma))
                .collect();
            let best = q.iter().copied().fold(F::neg_infinity(), F::max);
            (0..q.len()).filter(|&a| q[a] >= best - tolerance).collect()
        })
        .collect()
}

/// Value iteration from zero, then exact evaluation of the greedy policy
/// (with policy-improvement steps if the greedy policy is not yet optimal).
pub fn value_iteration<F: Real>(
    mdp: &TabularMdp<F>,
    gamma: DiscountFactor<F>,
    cfg: &SolveConfig<F>,
) -> Result<OptimalSolution<F>, SolverError> {
    let threshold = stopping_threshold(cfg.epsilon, gamma);
    let mut values = ValueTable::zeros(mdp.num_states());
    let mut iterations = 0;
    loop {
        if iterations == cfg.max_iterations {
            return Err(SolverError::NotConverged {
                iterations,
                residual: f64::NAN,
            });
        }
        let next = optimal_backup(mdp, &values, gamma);
        let change = next.distance(&values);
        values = next;
        iterations += 1;
        if change <= threshold {
            break;
        }
    }

    let greedy = |values: &ValueTable<F>| -> Policy {
        Policy::new(
            tie_sets(mdp, values, gamma, cfg.tie_tolerance)
                .into_iter()
                .map(|set| set[0])
                .collect(),
        )
    };
    let mut policy = greedy(&values);
    loop {
        let evaluated = policy_evaluation(mdp, &policy, gamma, cfg)?;
        let improved = greedy(&evaluated);
        let stable = (0..mdp.num_states()).all(|s| {
            mdp.q_value(s, policy.action(s), &evaluated, gamma)
                >= mdp.q_value(s, improved.action(s), &evaluated, gamma) - cfg.tie_tolerance
        });
        values = evaluated;
        if stable {
            break;
        }
        policy = improved;
        iterations += 1;
    }

    let optimal_actions = tie_sets(mdp, &values, gamma, cfg.tie_tolerance);
    let policy = Policy::new(optimal_actions.iter().map(|set| set[0]).collect());
    Ok(OptimalSolution {
        values,
        policy,
        optimal_actions,
        iterations,
    })
}

/// Sample mean of truncated discounted returns with a normal-approximation interval.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloEstimate<F> {
    pub mean: F,
    pub std_error: F,
    /// Half-width of the interval at the configured confidence.
    pub half_width: F,
    pub trajectories: usize,
    pub horizon: usize,
}

/// Two-sided normal quantile for the given coverage.
pub fn normal_quantile(confidence: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + confidence / 2.0)
}

/// Steps needed so the discarded tail is at most `epsilon`.
pub fn truncation_horizon<F: Real>(mdp: &TabularMdp<F>, gamma: DiscountFactor<F>, cfg: &SolveConfig<F>) -> usize {
    let bound = mdp.reward_bound();
    let horizon = if bound.is_zero() {
        1
    } else {
        let g = gamma.get();
        let ratio = cfg.epsilon * (F::one() - g) / bound;
        if ratio >= F::one() {
            1
        } else {
            (ratio.ln() / g.ln()).ceil().to_usize().unwrap_or(usize::MAX).max(1)
        }
    };
    cfg.horizon_cap.map_or(horizon, |cap| horizon.min(cap))
}

fn sample_successor<F: Real>(row: &[(usize, F)], rng: &mut ChaCha8Rng) -> usize {
    if row.len() == 1 {
        return row[0].0;
    }
    let draw = F::from_f64(rng.random::<f64>()).unwrap();
    let mut cumulative = F::zero();
    for (next, p) in row {
        cumulative = cumulative + *p;
        if draw < cumulative {
            return *next;
        }
    }
    row[row.len() - 1].0
}

/// Truncated discounted return of one trajectory.
///
/// Each trajectory draws from its own ChaCha stream keyed by `(seed, start, index)`,
/// so results do not depend on how trajectories are spread over threads.
fn trajectory_return<F: Real>(
    mdp: &TabularMdp<F>,
    policy: &Policy,
    start: usize,
    gamma: DiscountFactor<F>,
    horizon: usize,
    seed: u64,
    index: u64,
) -> F {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (start as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    let mut state = start;
    let mut discount = F::one();
    let mut total = F::zero();
    for _ in 0..horizon {
        let action = policy.action(state);
        total = total + discount * mdp.reward(state, action);
        discount = discount * gamma.get();
        state = sample_successor(mdp.successors(state, action), &mut rng);
    }
    total
}

/// Monte Carlo estimate of `V(π, start)` from `cfg.trajectories` simulated trajectories.
pub fn monte_carlo_return<F: Real>(
    mdp: &TabularMdp<F>,
    policy: &Policy,
    start: usize,
    gamma: DiscountFactor<F>,
    cfg: &SolveConfig<F>,
) -> Result<MonteCarloEstimate<F>, SolverError> {
    mdp.check_policy(policy)?;
    if start >= mdp.num_states() {
        return Err(SolverError::StateOutOfRange(start));
    }
    let horizon = truncation_horizon(mdp, gamma, cfg);
    let n = cfg.trajectories.max(1);
    let returns: Vec<F> = (0..n as u64)
        .into_par_iter()
        .map(|i| trajectory_return(mdp, policy, start, gamma, horizon, cfg.seed, i))
        .collect();

    // Welford keeps the mean exact when every return is identical.
    let mut mean = F::zero();
    let mut m2 = F::zero();
    for (k, r) in returns.iter().enumerate() {
        let count = F::from_usize(k + 1).unwrap();
        let delta = *r - mean;
        mean = mean + delta / count;
        m2 = m2 + delta * (*r - mean);
    }
    let variance = if n > 1 {
        m2 / F::from_usize(n - 1).unwrap()
    } else {
        F::zero()
    };
    let std_error = (variance / F::from_usize(n).unwrap()).sqrt();
    let half_width = F::lit(normal_quantile(cfg.confidence)) * std_error;
    Ok(MonteCarloEstimate {
        mean,
        std_error,
        half_width,
        trajectories: n,
        horizon,
    })
}

/// Every deterministic policy within `tie_tolerance` of the per-state maximum at every state.
pub fn brute_force_optimal_policies<F: Real>(
    mdp: &TabularMdp<F>,
    gamma: DiscountFactor<F>,
    cfg: &SolveConfig<F>,
) -> Result<Vec<Policy>, SolverError> {
    let count = mdp.policy_count();
    if count > cfg.enumeration_cap as u128 {
        return Err(SolverError::EnumerationCap {
            count,
            cap: cfg.enumeration_cap,
        });
    }
    let evaluate = |index: u128| -> Result<(Policy, ValueTable<F>), SolverError> {
        let policy = mdp.decode_policy(index);
        let values = policy_evaluation(mdp, &policy, gamma, cfg)?;
        Ok((policy, values))
    };
    let evaluated: Vec<(Policy, ValueTable<F>)> = (0..count as u64)
        .into_par_iter()
        .map(|i| evaluate(i as u128))
        .collect::<Result<_, _>>()?;

    let mut best = vec![F::neg_infinity(); mdp.num_states()];
    for (_, values) in &evaluated {
        for (b, v) in best.iter_mut().zip(&values.values) {
            *b = b.max(*v);
        }
    }
    let mut optimal: Vec<Policy> = evaluated
        .into_iter()
        .filter(|(_, values)| {
            values
                .values
                .iter()
                .zip(&best)
                .all(|(v, b)| *v >= *b - cfg.tie_tolerance)
        })
        .map(|(p, _)| p)
        .collect();
    optimal.sort();
    Ok(optimal)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateAgreement<F> {
    pub state: usize,
    pub bellman_value: F,
    pub monte_carlo: MonteCarloEstimate<F>,
    /// `epsilon` plus the simultaneous interval half-width for this state.
    pub tolerance: F,
    pub discrepancy: F,
    pub agrees: bool,
}

/// Bellman-side and expectation-side values of one policy, state by state.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem3Report<F> {
    pub rows: Vec<StateAgreement<F>>,
    /// Number of simultaneous comparisons the interval width accounts for.
    pub family_size: usize,
    pub all_agree: bool,
}

/// Compares `policy_evaluation` with `monte_carlo_return` at every state.
///
/// The Monte Carlo intervals are simultaneous over the states of the MDP.
pub fn verify_theorem3<F: Real>(
    mdp: &TabularMdp<F>,
    policy: &Policy,
    gamma: DiscountFactor<F>,
    cfg: &SolveConfig<F>,
) -> Result<Theorem3Report<F>, SolverError> {
    verify_theorem3_with_family(mdp, policy, gamma, cfg, mdp.num_states())
}

/// As [`verify_theorem3`], with intervals simultaneous over `family_size` comparisons
/// (Bonferroni), for suites that compare many states at once.
pub fn verify_theorem3_with_family<F: Real>(
    mdp: &TabularMdp<F>,
    policy: &Policy,
    gamma: DiscountFactor<F>,
    cfg: &SolveConfig<F>,
    family_size: usize,
) -> Result<Theorem3Report<F>, SolverError> {
    let family_size = family_size.max(1);
    let bellman = policy_evaluation(mdp, policy, gamma, cfg)?;
    let per_comparison = 1.0 - (1.0 - cfg.confidence) / family_size as f64;
    let z = F::lit(normal_quantile(per_comparison));
    let mut rows = Vec::with_capacity(mdp.num_states());
    for state in 0..mdp.num_states() {
        let estimate = monte_carlo_return(mdp, policy, state, gamma, cfg)?;
        let tolerance = cfg.epsilon + z * estimate.std_error;
        let discrepancy = (bellman.get(state) - estimate.mean).abs();
        rows.push(StateAgreement {
            state,
            bellman_value: bellman.get(state),
            monte_carlo: estimate,
            tolerance,
            discrepancy,
            agrees: discrepancy <= tolerance,
        });
    }
    let all_agree = rows.iter().all(|r| r.agrees);
    Ok(Theorem3Report {
        rows,
        family_size,
        all_agree,
    })
}

/// Optimal policy sets from dynamic programming and from exhaustive enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem4Report {
    pub transform: String,
    pub value_iteration_set: Vec<Policy>,
    pub brute_force_set: Vec<Policy>,
    pub only_value_iteration: Vec<Policy>,
    pub only_brute_force: Vec<Policy>,
    pub agree: bool,
}

/// For a quasi-utilitarian reward, checks that the policies optimal by value
/// iteration are exactly the ones maximising the discounted sum by enumeration.
pub fn verify_theorem4<S: Scalar, F: Real>(
    mdp: &SocialChoiceMdp<S>,
    gamma: DiscountFactor<F>,
    cfg: &SolveConfig<F>,
) -> Result<Theorem4Report, SolverError> {
    let transform = mdp
        .reward
        .quasi_transform()
        .ok_or(SolverError::NotQuasiUtilitarian(mdp.reward.kind_name()))?;
    let tabular = TabularMdp::<F>::from_mdp(mdp)?;
    let brute_force_set = brute_force_optimal_policies(&tabular, gamma, cfg)?;
    let solution = value_iteration(&tabular, gamma, cfg)?;
    let value_iteration_set = solution.optimal_policies(cfg.enumeration_cap)?;
    let only_value_iteration: Vec<Policy> = value_iteration_set
        .iter()
        .filter(|p| brute_force_set.binary_search(p).is_err())
        .cloned()
        .collect();
    let only_brute_force: Vec<Policy> = brute_force_set
        .iter()
        .filter(|p| value_iteration_set.binary_search(p).is_err())
        .cloned()
        .collect();
    let agree = only_value_iteration.is_empty() && only_brute_force.is_empty();
    Ok(Theorem4Report {
        transform: transform.name(),
        value_iteration_set,
        brute_force_set,
        only_value_iteration,
        only_brute_force,
        agree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, Rational};
    use crate::scenarios::fixture_f1;
    use crate::welfare::{MonotoneTransform, RewardSpec};
    use proptest::prelude::*;
    use rand::Rng;

    fn gamma(g: f64) -> DiscountFactor<f64> {
        DiscountFactor::new(g).unwrap()
    }

    fn f1() -> TabularMdp<f64> {
        TabularMdp::from_mdp(&fixture_f1()).unwrap()
    }

    fn zero_reward_f1() -> TabularMdp<f64> {
        TabularMdp::from_mdp(&fixture_f1().with_reward(RewardSpec::constant(rat(0, 1)))).unwrap()
    }

    /// Geometric-series oracle for the four policies of the fixture at γ = 0.9.
    /// U_B is absorbing with reward 20; at U_A, x pays 2 and stays, y pays 0 and moves to U_B.
    fn f1_oracle(policy: &[usize], g: f64) -> [f64; 2] {
        let v_b = 20.0 / (1.0 - g);
        let v_a = if policy[0] == 0 { 2.0 / (1.0 - g) } else { g * v_b };
        [v_a, v_b]
    }

    #[test]
    fn discount_bounds() {
        assert!(DiscountFactor::new(0.0).is_err());
        assert!(DiscountFactor::new(1.0).is_err());
        assert!(DiscountFactor::new(-0.5).is_err());
        assert!(DiscountFactor::new(0.5f32).is_ok());
    }

    #[test]
    fn backup_examples() {
        let m = f1();
        let pi = Policy::new(vec![1, 0]);
        let v = bellman_backup(&m, &pi, &ValueTable::zeros(2), gamma(0.9));
        assert_eq!(v.get(1), 20.0);

        let z = zero_reward_f1();
        let v = bellman_backup(&z, &pi, &ValueTable::constant(2, 5.0), gamma(0.9));
        assert_eq!(v.values, vec![4.5, 4.5]);

        let fixed = ValueTable { values: vec![180.0, 200.0] };
        let v = bellman_backup(&m, &pi, &fixed, gamma(0.9));
        assert!(v.distance(&fixed) < 1e-9);
    }

    #[test]
    fn evaluation_matches_geometric_series() {
        let m = f1();
        let cfg = SolveConfig::default();
        for choice in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            let pi = Policy::new(choice.to_vec());
            let oracle = f1_oracle(&choice, 0.9);
            let direct = policy_evaluation(&m, &pi, gamma(0.9), &cfg).unwrap();
            let iterative = policy_evaluation(
                &m,
                &pi,
                gamma(0.9),
                &SolveConfig { direct_solve_max_states: 0, ..cfg.clone() },
            )
            .unwrap();
            for s in 0..2 {
                assert!((direct.get(s) - oracle[s]).abs() < 1e-6, "{choice:?}");
                assert!((iterative.get(s) - oracle[s]).abs() < 1e-9, "{choice:?}");
            }
            assert!(bellman_residual(&m, &pi, &iterative, gamma(0.9)) <= cfg.epsilon);
        }
        let z = policy_evaluation(&zero_reward_f1(), &Policy::new(vec![1, 0]), gamma(0.9), &cfg).unwrap();
        assert_eq!(z.values, vec![0.0, 0.0]);
    }

    #[test]
    fn iteration_budget_is_enforced() {
        let cfg = SolveConfig {
            direct_solve_max_states: 0,
            max_iterations: 3,
            ..SolveConfig::default()
        };
        let err = policy_evaluation(&f1(), &Policy::new(vec![1, 0]), gamma(0.9), &cfg).unwrap_err();
        assert!(matches!(err, SolverError::NotConverged { iterations: 3, .. }));
        assert!(matches!(
            policy_evaluation(&f1(), &Policy::new(vec![0]), gamma(0.9), &SolveConfig::default()),
            Err(SolverError::PolicyShape { .. })
        ));
    }

    #[test]
    fn value_iteration_on_fixture() {
        let sol = value_iteration(&f1(), gamma(0.9), &SolveConfig::default()).unwrap();
        assert!((sol.values.get(0) - 180.0).abs() < 1e-6);
        assert!((sol.values.get(1) - 200.0).abs() < 1e-6);
        assert_eq!(sol.policy, Policy::new(vec![1, 0]));
        assert_eq!(sol.optimal_actions, vec![vec![1], vec![0, 1]]);
        assert_eq!(
            sol.optimal_policies(100).unwrap(),
            vec![Policy::new(vec![1, 0]), Policy::new(vec![1, 1])]
        );
        assert!(matches!(sol.optimal_policies(1), Err(SolverError::EnumerationCap { count: 2, cap: 1 })));
    }

    #[test]
    fn single_absorbing_state() {
        let m = TabularMdp::from_parts(vec![vec![3.0, 3.0, 3.0]], vec![vec![vec![(0, 1.0)]; 3]]).unwrap();
        let sol = value_iteration(&m, gamma(0.75), &SolveConfig::default()).unwrap();
        assert!((sol.values.get(0) - 12.0).abs() < 1e-9);
        assert_eq!(sol.optimal_actions, vec![vec![0, 1, 2]]);

        let z = value_iteration(&zero_reward_f1(), gamma(0.9), &SolveConfig::default()).unwrap();
        assert_eq!(z.values.values, vec![0.0, 0.0]);
        assert_eq!(z.policy_count(), 4);
    }

    #[test]
    fn brute_force_examples() {
        let cfg = SolveConfig::default();
        assert_eq!(
            brute_force_optimal_policies(&f1(), gamma(0.9), &cfg).unwrap(),
            vec![Policy::new(vec![1, 0]), Policy::new(vec![1, 1])]
        );
        assert_eq!(brute_force_optimal_policies(&zero_reward_f1(), gamma(0.9), &cfg).unwrap().len(), 4);

        let single = TabularMdp::from_parts(vec![vec![1.0, 4.0, 4.0, 2.0]], vec![vec![vec![(0, 1.0)]; 4]]).unwrap();
        assert_eq!(
            brute_force_optimal_policies(&single, gamma(0.5), &cfg).unwrap(),
            vec![Policy::new(vec![1]), Policy::new(vec![2])]
        );

        let capped = SolveConfig { enumeration_cap: 3, ..cfg };
        assert!(matches!(
            brute_force_optimal_policies(&f1(), gamma(0.9), &capped),
            Err(SolverError::EnumerationCap { count: 4, cap: 3 })
        ));
    }

    #[test]
    fn monte_carlo_deterministic_kernel_is_exact() {
        let m = f1();
        let cfg = SolveConfig { epsilon: 1e-6, trajectories: 200, ..SolveConfig::default() };
        let pi = Policy::new(vec![1, 0]);
        let est = monte_carlo_return(&m, &pi, 0, gamma(0.9), &cfg).unwrap();
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.half_width, 0.0);
        // the same truncated sum, accumulated in the same order
        let mut analytic = 0.0;
        let mut discount = 1.0;
        let mut state = 0;
        for _ in 0..est.horizon {
            analytic += discount * m.reward(state, pi.action(state));
            discount *= 0.9;
            state = m.successors(state, pi.action(state))[0].0;
        }
        assert_eq!(est.mean, analytic);
        assert!((est.mean - 180.0).abs() <= 1e-6);

        let z = monte_carlo_return(&zero_reward_f1(), &pi, 0, gamma(0.9), &cfg).unwrap();
        assert_eq!(z.mean, 0.0);
    }

    #[test]
    fn monte_carlo_constant_reward_random_kernel() {
        let half = vec![(0, 0.5), (1, 0.5)];
        let m = TabularMdp::from_parts(
            vec![vec![4.0], vec![4.0]],
            vec![vec![half.clone()], vec![half]],
        )
        .unwrap();
        let cfg = SolveConfig { epsilon: 1e-6, trajectories: 500, ..SolveConfig::default() };
        let est = monte_carlo_return(&m, &Policy::new(vec![0, 0]), 1, gamma(0.8), &cfg).unwrap();
        assert!((est.mean - 20.0).abs() <= cfg.epsilon + est.half_width + 1e-12);
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let half = vec![(0, 0.5), (1, 0.5)];
        let m = TabularMdp::from_parts(
            vec![vec![1.0], vec![-2.0]],
            vec![vec![half.clone()], vec![half]],
        )
        .unwrap();
        let cfg = SolveConfig { epsilon: 1e-3, trajectories: 300, seed: 42, ..SolveConfig::default() };
        let pi = Policy::new(vec![0, 0]);
        let a = monte_carlo_return(&m, &pi, 0, gamma(0.9), &cfg).unwrap();
        let b = monte_carlo_return(&m, &pi, 0, gamma(0.9), &cfg).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = pool.install(|| monte_carlo_return(&m, &pi, 0, gamma(0.9), &cfg).unwrap());
        assert_eq!(a, c);
        let other = SolveConfig { seed: 43, ..cfg };
        assert_ne!(a.mean, monte_carlo_return(&m, &pi, 0, gamma(0.9), &other).unwrap().mean);
    }

    #[test]
    fn horizon_bounds_the_tail() {
        let m = f1();
        let cfg = SolveConfig { epsilon: 1e-6, ..SolveConfig::default() };
        let t = truncation_horizon(&m, gamma(0.9), &cfg);
        let tail = 0.9f64.powi(t as i32) * m.reward_bound() / (1.0 - 0.9);
        assert!(tail <= 1e-6);
        let shorter = 0.9f64.powi(t as i32 - 1) * m.reward_bound() / (1.0 - 0.9);
        assert!(shorter > 1e-6);
        let capped = SolveConfig { horizon_cap: Some(10), ..cfg };
        assert_eq!(truncation_horizon(&m, gamma(0.9), &capped), 10);
    }

    #[test]
    fn theorem3_on_fixture_and_zero_reward() {
        let cfg = SolveConfig { epsilon: 1e-6, trajectories: 100, ..SolveConfig::default() };
        let report = verify_theorem3(&f1(), &Policy::new(vec![1, 0]), gamma(0.9), &cfg).unwrap();
        assert!(report.all_agree);
        assert!(report.rows.iter().all(|r| r.discrepancy <= 1e-6));
        let report = verify_theorem3(&zero_reward_f1(), &Policy::new(vec![1, 0]), gamma(0.9), &cfg).unwrap();
        assert!(report.rows.iter().all(|r| r.bellman_value == 0.0 && r.monte_carlo.mean == 0.0));
    }

    #[test]
    fn theorem4_on_fixture_transforms() {
        let cfg = SolveConfig::default();
        let expected = vec![Policy::new(vec![1, 0]), Policy::new(vec![1, 1])];
        for t in [
            MonotoneTransform::Identity,
            MonotoneTransform::affine(rat(3, 1), rat(5, 1)).unwrap(),
        ] {
            let m = fixture_f1().with_reward(RewardSpec::quasi(t).unwrap());
            let report = verify_theorem4(&m, gamma(0.9), &cfg).unwrap();
            assert!(report.agree);
            assert_eq!(report.brute_force_set, expected);
        }
        let m = fixture_f1().with_reward(RewardSpec::quasi(MonotoneTransform::<Rational>::OddPower(3)).unwrap());
        assert!(verify_theorem4(&m, gamma(0.9), &cfg).unwrap().agree);

        let m = fixture_f1().with_reward(RewardSpec::dictator(0));
        assert!(matches!(
            verify_theorem4(&m, gamma(0.9), &cfg),
            Err(SolverError::NotQuasiUtilitarian("custom"))
        ));
    }

    #[test]
    fn f32_solver_matches_f64() {
        let m32 = TabularMdp::<f32>::from_mdp(&fixture_f1()).unwrap();
        let cfg = SolveConfig::<f32> { epsilon: 1e-3, tie_tolerance: 1e-3, ..SolveConfig::default() };
        let sol = value_iteration(&m32, DiscountFactor::new(0.9f32).unwrap(), &cfg).unwrap();
        assert!((sol.values.get(0) - 180.0).abs() < 1e-2);
        assert_eq!(sol.policy, Policy::new(vec![1, 0]));
    }

    #[test]
    fn invalid_mdp_rejected() {
        let mut m = fixture_f1();
        m.kernel.set_row(0, 0, vec![(0, rat(1, 2))]);
        assert!(matches!(TabularMdp::<f64>::from_mdp(&m), Err(SolverError::Invalid(_))));
        assert!(TabularMdp::from_parts(vec![vec![1.0]], vec![vec![vec![(0, 0.5)]]]).is_err());
    }

    fn arb_tabular() -> impl Strategy<Value = (TabularMdp<f64>, f64)> {
        (1usize..5, 1usize..4).prop_flat_map(|(n, a)| {
            let rewards = proptest::collection::vec(proptest::collection::vec(-10i32..=10, a), n);
            let weights = proptest::collection::vec(
                proptest::collection::vec(proptest::collection::vec(0u32..4, n), a),
                n,
            );
            (rewards, weights, 0.05f64..0.95).prop_map(move |(rewards, weights, g)| {
                let rewards = rewards
                    .into_iter()
                    .map(|row| row.into_iter().map(f64::from).collect())
                    .collect();
                let transitions = weights
                    .into_iter()
                    .enumerate()
                    .map(|(s, per_action)| {
                        per_action
                            .into_iter()
                            .map(|w| {
                                let total: u32 = w.iter().sum();
                                if total == 0 {
                                    vec![(s, 1.0)]
                                } else {
                                    w.iter()
                                        .enumerate()
                                        .filter(|(_, &x)| x > 0)
                                        .map(|(t, &x)| (t, f64::from(x) / f64::from(total)))
                                        .collect()
                                }
                            })
                            .collect()
                    })
                    .collect();
                (TabularMdp::from_parts(rewards, transitions).unwrap(), g)
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn backups_contract((m, g) in arb_tabular(), seed in 0u64..1000) {
            let gamma = DiscountFactor::new(g).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v0 = ValueTable { values: (0..m.num_states()).map(|_| rng.random_range(-50.0..50.0)).collect() };
            let v1 = optimal_backup(&m, &v0, gamma);
            let v2 = optimal_backup(&m, &v1, gamma);
            prop_assert!(v2.distance(&v1) <= g * v1.distance(&v0) + 1e-9);
            let pi = Policy::constant(m.num_states(), 0);
            let w1 = bellman_backup(&m, &pi, &v0, gamma);
            let w2 = bellman_backup(&m, &pi, &w1, gamma);
            prop_assert!(w2.distance(&w1) <= g * w1.distance(&v0) + 1e-9);
        }

        #[test]
        fn evaluation_residual_within_epsilon((m, g) in arb_tabular()) {
            let gamma = DiscountFactor::new(g).unwrap();
            let cfg = SolveConfig::default();
            let pi = Policy::constant(m.num_states(), m.num_actions() - 1);
            for direct in [0, 64] {
                let cfg = SolveConfig { direct_solve_max_states: direct, ..cfg.clone() };
                let v = policy_evaluation(&m, &pi, gamma, &cfg).unwrap();
                prop_assert!(bellman_residual(&m, &pi, &v, gamma) <= cfg.epsilon);
            }
        }

        #[test]
        fn greedy_policy_is_among_brute_force_optima((m, g) in arb_tabular()) {
            let gamma = DiscountFactor::new(g).unwrap();
            let cfg = SolveConfig::default();
            let sol = value_iteration(&m, gamma, &cfg).unwrap();
            let brute = brute_force_optimal_policies(&m, gamma, &cfg).unwrap();
            prop_assert!(brute.contains(&sol.policy));
            prop_assert_eq!(sol.optimal_policies(cfg.enumeration_cap).unwrap(), brute);
        }
    }
}
