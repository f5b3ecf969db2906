//! Profiles, alternatives, transition kernels and Social Choice MDPs.
//!
//! A state of the process is a [`Profile`]: one utility function per group
//! member. Everything here is immutable after construction; structural
//! problems are collected by [`validate_mdp`] instead of being rejected
//! piecemeal.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::welfare::RewardSpec;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("alternative index {index} out of range for {count} alternatives")]
    AlternativeOutOfRange { index: usize, count: usize },
    #[error("member index {index} out of range for {count} members")]
    MemberOutOfRange { index: usize, count: usize },
    #[error("state index {index} out of range for {count} states")]
    StateOutOfRange { index: usize, count: usize },
    #[error("profiles disagree on roster: {left_members}x{left_alternatives} vs {right_members}x{right_alternatives}")]
    RosterMismatch {
        left_members: usize,
        left_alternatives: usize,
        right_members: usize,
        right_alternatives: usize,
    },
    #[error("ragged profile: member {member} has {found} utilities, expected {expected}")]
    RaggedProfile {
        member: usize,
        found: usize,
        expected: usize,
    },
    #[error("profile has no members")]
    NoMembers,
    #[error("invalid MDP:\n{0}")]
    Invalid(ValidationReport),
}

/// A group member, identified by its position in the roster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Member {
    pub id: usize,
    pub label: String,
}

/// A social alternative; doubles as an MDP action.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Alternative {
    pub id: usize,
    pub label: String,
}

/// One member's utility for every alternative, indexed by alternative id.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UtilityFunction<S> {
    pub values: Vec<S>,
}

impl<S: Scalar> UtilityFunction<S> {
    pub fn new(values: Vec<S>) -> Self {
        Self { values }
    }

    pub fn is_constant(&self) -> bool {
        self.values.windows(2).all(|w| w[0] == w[1])
    }
}

/// Assignment of a utility function to every group member.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Profile<S> {
    rows: Vec<UtilityFunction<S>>,
}

impl<S: Scalar> Profile<S> {
    /// Builds a profile from per-member utility rows; rows must share a length.
    pub fn new(rows: Vec<Vec<S>>) -> Result<Self, ModelError> {
        let expected = rows.first().ok_or(ModelError::NoMembers)?.len();
        if let Some((member, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != expected) {
            return Err(ModelError::RaggedProfile {
                member,
                found: row.len(),
                expected,
            });
        }
        Ok(Self {
            rows: rows.into_iter().map(UtilityFunction::new).collect(),
        })
    }

    pub fn from_utility_functions(rows: Vec<UtilityFunction<S>>) -> Result<Self, ModelError> {
        Self::new(rows.into_iter().map(|r| r.values).collect())
    }

    pub fn num_members(&self) -> usize {
        self.rows.len()
    }

    pub fn num_alternatives(&self) -> usize {
        self.rows[0].values.len()
    }

    pub fn rows(&self) -> &[UtilityFunction<S>] {
        &self.rows
    }

    pub fn row(&self, member: usize) -> &UtilityFunction<S> {
        &self.rows[member]
    }

    /// `U_i(x)`; panics on out-of-range indices.
    pub fn utility(&self, member: usize, alternative: usize) -> &S {
        &self.rows[member].values[alternative]
    }

    pub fn check_alternative(&self, alternative: usize) -> Result<(), ModelError> {
        let count = self.num_alternatives();
        if alternative < count {
            Ok(())
        } else {
            Err(ModelError::AlternativeOutOfRange {
                index: alternative,
                count,
            })
        }
    }

    pub fn check_member(&self, member: usize) -> Result<(), ModelError> {
        let count = self.num_members();
        if member < count {
            Ok(())
        } else {
            Err(ModelError::MemberOutOfRange {
                index: member,
                count,
            })
        }
    }

    pub fn same_roster(&self, other: &Self) -> Result<(), ModelError> {
        if self.num_members() == other.num_members()
            && self.num_alternatives() == other.num_alternatives()
        {
            Ok(())
        } else {
            Err(ModelError::RosterMismatch {
                left_members: self.num_members(),
                left_alternatives: self.num_alternatives(),
                right_members: other.num_members(),
                right_alternatives: other.num_alternatives(),
            })
        }
    }

    /// The profile `U'` with `U'_i = U_{perm[i]}`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            rows: perm.iter().map(|&j| self.rows[j].clone()).collect(),
        }
    }

    /// The profile `U'` with `U'_i(x) = alphas[i] + beta * U_i(x)`.
    pub fn affine_image(&self, beta: &S, alphas: &[S]) -> Self {
        let rows = self
            .rows
            .iter()
            .zip(alphas)
            .map(|(row, alpha)| {
                UtilityFunction::new(
                    row.values
                        .iter()
                        .map(|u| u.affine(beta, alpha))
                        .collect(),
                )
            })
            .collect();
        Self { rows }
    }

    /// Whether every member strictly prefers `x` to `y`.
    pub fn unanimously_prefers(&self, x: usize, y: usize) -> bool {
        self.rows.iter().all(|r| r.values[x] > r.values[y])
    }

    /// Whether every member assigns identical utilities to `x` and `y` in both profiles.
    pub fn agrees_on_pair(&self, other: &Self, x: usize, y: usize) -> bool {
        self.rows.iter().zip(&other.rows).all(|(a, b)| {
            a.values[x] == b.values[x] && a.values[y] == b.values[y]
        })
    }
}

impl<S: Scalar> fmt::Display for Profile<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, row) in self.rows.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            let cells: Vec<String> = row.values.iter().map(|v| v.to_string()).collect();
            write!(f, "{}", cells.join(", "))?;
        }
        write!(f, "]")
    }
}

/// `Σ_i U_i(x)`, computed exactly for exact scalars.
pub fn utilitarian_sum<S: Scalar>(profile: &Profile<S>, alternative: usize) -> Result<S, ModelError> {
    profile.check_alternative(alternative)?;
    Ok(sum_column(profile, alternative))
}

pub(crate) fn sum_column<S: Scalar>(profile: &Profile<S>, alternative: usize) -> S {
    profile
        .rows
        .iter()
        .fold(S::zero(), |acc, r| acc.add_ref(&r.values[alternative]))
}

/// Witness for cardinal unit comparability: `U_i(x) = alphas[i] + beta * V_i(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CucWitness<S> {
    pub beta: S,
    pub alphas: Vec<S>,
}

impl<S: Scalar> CucWitness<S> {
    pub fn identity(members: usize) -> Self {
        Self {
            beta: S::one(),
            alphas: vec![S::zero(); members],
        }
    }

    /// The witness relating the profiles in the opposite direction.
    pub fn inverse(&self) -> Self {
        Self {
            beta: S::one() / self.beta.clone(),
            alphas: self
                .alphas
                .iter()
                .map(|a| -(a.clone() / self.beta.clone()))
                .collect(),
        }
    }
}

/// Finds `beta > 0` and per-member `alphas` with `u_i(x) = alpha_i + beta * v_i(x)`.
pub fn profiles_cuc_related<S: Scalar>(
    u: &Profile<S>,
    v: &Profile<S>,
) -> Result<Option<CucWitness<S>>, ModelError> {
    u.same_roster(v)?;
    let alternatives = u.num_alternatives();

    let pivot = v.rows.iter().enumerate().find_map(|(i, row)| {
        (1..alternatives)
            .find(|&x| row.values[x] != row.values[0])
            .map(|x| (i, x))
    });

    let Some((member, x)) = pivot else {
        // every v row is constant: any beta works, canonicalised to 1
        if !u.rows.iter().all(UtilityFunction::is_constant) {
            return Ok(None);
        }
        let alphas = u
            .rows
            .iter()
            .zip(&v.rows)
            .map(|(a, b)| a.values[0].clone() - b.values[0].clone())
            .collect();
        return Ok(Some(CucWitness {
            beta: S::one(),
            alphas,
        }));
    };

    let beta = (u.utility(member, x).clone() - u.utility(member, 0).clone())
        / (v.utility(member, x).clone() - v.utility(member, 0).clone());
    if !beta.is_positive() {
        return Ok(None);
    }

    let alphas: Vec<S> = u
        .rows
        .iter()
        .zip(&v.rows)
        .map(|(a, b)| a.values[0].clone() - beta.clone() * b.values[0].clone())
        .collect();

    let consistent = u.rows.iter().zip(&v.rows).zip(&alphas).all(|((a, b), alpha)| {
        a.values
            .iter()
            .zip(&b.values)
            .all(|(ua, vb)| *ua == alpha.clone() + beta.clone() * vb.clone())
    });
    Ok(consistent.then_some(CucWitness { beta, alphas }))
}

/// Finds the lexicographically smallest `rho` with `v_i = u_{rho(i)}` for all members.
pub fn profiles_permutation_related<S: Scalar>(
    u: &Profile<S>,
    v: &Profile<S>,
) -> Result<Option<Vec<usize>>, ModelError> {
    u.same_roster(v)?;
    let mut used = vec![false; u.num_members()];
    let mut perm = Vec::with_capacity(u.num_members());
    // Row equality is an equivalence, so the greedy smallest-unused match
    // succeeds exactly when the row multisets agree.
    for target in &v.rows {
        match (0..used.len()).find(|&j| !used[j] && u.rows[j] == *target) {
            Some(j) => {
                used[j] = true;
                perm.push(j);
            }
            None => return Ok(None),
        }
    }
    Ok(Some(perm))
}

/// Sparse stochastic kernel `P(s' | s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel<S> {
    rows: BTreeMap<(usize, usize), Vec<(usize, S)>>,
}

impl<S: Scalar> Default for TransitionKernel<S> {
    fn default() -> Self {
        Self {
            rows: BTreeMap::new(),
        }
    }
}

impl<S: Scalar> TransitionKernel<S> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the successor distribution for `(state, action)`, replacing any previous row.
    pub fn set_row(&mut self, state: usize, action: usize, successors: Vec<(usize, S)>) {
        self.rows.insert((state, action), successors);
    }

    pub fn with_row(mut self, state: usize, action: usize, successors: Vec<(usize, S)>) -> Self {
        self.set_row(state, action, successors);
        self
    }

    pub fn row(&self, state: usize, action: usize) -> Option<&[(usize, S)]> {
        self.rows.get(&(state, action)).map(Vec::as_slice)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&(usize, usize), &Vec<(usize, S)>)> {
        self.rows.iter()
    }

    /// Deterministic kernel: every listed `(state, action)` moves to one successor.
    pub fn deterministic(moves: &[((usize, usize), usize)]) -> Self {
        let mut kernel = Self::new();
        for &((s, a), next) in moves {
            kernel.set_row(s, a, vec![(next, S::one())]);
        }
        kernel
    }

    /// True when every present row puts all mass on a single successor.
    pub fn is_deterministic(&self) -> bool {
        self.rows.values().all(|row| {
            row.iter().filter(|(_, p)| !p.is_zero()).count() == 1
        })
    }
}

/// Deterministic policy; read as a social choice function on the states.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Policy {
    pub choice: Vec<usize>,
}

impl Policy {
    pub fn new(choice: Vec<usize>) -> Self {
        Self { choice }
    }

    pub fn constant(states: usize, action: usize) -> Self {
        Self {
            choice: vec![action; states],
        }
    }

    pub fn action(&self, state: usize) -> usize {
        self.choice[state]
    }

    pub fn len(&self) -> usize {
        self.choice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choice.is_empty()
    }

    /// Whether the policy covers `states` states with actions below `actions`.
    pub fn fits(&self, states: usize, actions: usize) -> bool {
        self.choice.len() == states && self.choice.iter().all(|&a| a < actions)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.choice.iter().map(usize::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// `<S, A, R, P>` where the states are utility profiles over a shared roster.
#[derive(Debug, Clone)]
pub struct SocialChoiceMdp<S> {
    pub members: Vec<Member>,
    pub alternatives: Vec<Alternative>,
    pub states: Vec<Profile<S>>,
    pub kernel: TransitionKernel<S>,
    pub reward: RewardSpec<S>,
}

impl<S: Scalar> SocialChoiceMdp<S> {
    /// Assembles an MDP without validating it; see [`validate_mdp`].
    pub fn new(
        member_labels: Vec<String>,
        alternative_labels: Vec<String>,
        states: Vec<Profile<S>>,
        kernel: TransitionKernel<S>,
        reward: RewardSpec<S>,
    ) -> Self {
        let members = member_labels
            .into_iter()
            .enumerate()
            .map(|(id, label)| Member { id, label })
            .collect();
        let alternatives = alternative_labels
            .into_iter()
            .enumerate()
            .map(|(id, label)| Alternative { id, label })
            .collect();
        Self {
            members,
            alternatives,
            states,
            kernel,
            reward,
        }
    }

    /// Assembles and validates in one step.
    pub fn validated(
        member_labels: Vec<String>,
        alternative_labels: Vec<String>,
        states: Vec<Profile<S>>,
        kernel: TransitionKernel<S>,
        reward: RewardSpec<S>,
    ) -> Result<Self, ModelError> {
        let mdp = Self::new(member_labels, alternative_labels, states, kernel, reward);
        let report = validate_mdp(&mdp);
        if report.is_valid() {
            Ok(mdp)
        } else {
            Err(ModelError::Invalid(report))
        }
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_alternatives(&self) -> usize {
        self.alternatives.len()
    }

    pub fn num_members(&self) -> usize {
        self.members.len()
    }

    pub fn state(&self, index: usize) -> &Profile<S> {
        &self.states[index]
    }

    pub fn state_index(&self, profile: &Profile<S>) -> Option<usize> {
        self.states.iter().position(|s| s == profile)
    }

    /// Same MDP with a different reward.
    pub fn with_reward(&self, reward: RewardSpec<S>) -> Self {
        Self {
            reward,
            ..self.clone()
        }
    }

    /// The policy picking `argmax_a Σ_i U_i(a)` at each state, smallest index on ties.
    pub fn myopic_utilitarian_policy(&self) -> Policy {
        let choice = self
            .states
            .iter()
            .map(|profile| {
                let mut best = 0;
                let mut best_sum = sum_column(profile, 0);
                for a in 1..profile.num_alternatives() {
                    let sum = sum_column(profile, a);
                    if sum > best_sum {
                        best = a;
                        best_sum = sum;
                    }
                }
                best
            })
            .collect();
        Policy::new(choice)
    }
}

/// One broken structural invariant, with its location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoStates,
    NoAlternatives,
    NoMembers,
    DuplicateMemberLabel { label: String },
    DuplicateAlternativeLabel { label: String },
    ShapeMismatch {
        state: usize,
        members: usize,
        alternatives: usize,
        expected_members: usize,
        expected_alternatives: usize,
    },
    DuplicateState { first: usize, second: usize },
    MissingRow { state: usize, action: usize },
    RowOutOfRange { state: usize, action: usize },
    SuccessorOutOfRange { state: usize, action: usize, successor: usize },
    DuplicateSuccessor { state: usize, action: usize, successor: usize },
    NegativeProbability {
        state: usize,
        action: usize,
        successor: usize,
        probability: String,
    },
    RowSum { state: usize, action: usize, sum: String },
    Reward { detail: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoStates => write!(f, "state set is empty"),
            Violation::NoAlternatives => write!(f, "alternative set is empty"),
            Violation::NoMembers => write!(f, "member roster is empty"),
            Violation::DuplicateMemberLabel { label } => write!(f, "duplicate member label `{label}`"),
            Violation::DuplicateAlternativeLabel { label } => {
                write!(f, "duplicate alternative label `{label}`")
            }
            Violation::ShapeMismatch {
                state,
                members,
                alternatives,
                expected_members,
                expected_alternatives,
            } => write!(
                f,
                "state {state}: profile is {members}x{alternatives}, expected {expected_members}x{expected_alternatives}"
            ),
            Violation::DuplicateState { first, second } => {
                write!(f, "duplicate state: {second} repeats {first}")
            }
            Violation::MissingRow { state, action } => {
                write!(f, "kernel row ({state},{action}) missing")
            }
            Violation::RowOutOfRange { state, action } => {
                write!(f, "kernel row ({state},{action}) outside states x alternatives")
            }
            Violation::SuccessorOutOfRange {
                state,
                action,
                successor,
            } => write!(f, "kernel row ({state},{action}): successor {successor} out of range"),
            Violation::DuplicateSuccessor {
                state,
                action,
                successor,
            } => write!(f, "kernel row ({state},{action}): successor {successor} listed twice"),
            Violation::NegativeProbability {
                state,
                action,
                successor,
                probability,
            } => write!(
                f,
                "kernel row ({state},{action}): negative probability {probability} for successor {successor}"
            ),
            Violation::RowSum { state, action, sum } => {
                write!(f, "kernel row ({state},{action}): row sums to {sum}")
            }
            Violation::Reward { detail } => write!(f, "reward: {detail}"),
        }
    }
}

/// Every violated invariant of an MDP; empty means valid.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "- {v}")?;
        }
        Ok(())
    }
}

/// Scans every structural invariant of `m` and reports all violations.
pub fn validate_mdp<S: Scalar>(m: &SocialChoiceMdp<S>) -> ValidationReport {
    let mut violations = Vec::new();
    let n_members = m.members.len();
    let n_alts = m.alternatives.len();
    let n_states = m.states.len();

    if n_states == 0 {
        violations.push(Violation::NoStates);
    }
    if n_alts == 0 {
        violations.push(Violation::NoAlternatives);
    }
    if n_members == 0 {
        violations.push(Violation::NoMembers);
    }

    let mut seen = HashSet::new();
    for member in &m.members {
        if !seen.insert(member.label.as_str()) {
            violations.push(Violation::DuplicateMemberLabel {
                label: member.label.clone(),
            });
        }
    }
    let mut seen = HashSet::new();
    for alt in &m.alternatives {
        if !seen.insert(alt.label.as_str()) {
            violations.push(Violation::DuplicateAlternativeLabel {
                label: alt.label.clone(),
            });
        }
    }

    let mut well_shaped = true;
    for (index, profile) in m.states.iter().enumerate() {
        if profile.num_members() != n_members || profile.num_alternatives() != n_alts {
            well_shaped = false;
            violations.push(Violation::ShapeMismatch {
                state: index,
                members: profile.num_members(),
                alternatives: profile.num_alternatives(),
                expected_members: n_members,
                expected_alternatives: n_alts,
            });
        }
    }

    for (index, profile) in m.states.iter().enumerate() {
        if let Some(first) = m.states[..index].iter().position(|p| p == profile) {
            violations.push(Violation::DuplicateState {
                first,
                second: index,
            });
        }
    }

    for state in 0..n_states {
        for action in 0..n_alts {
            let Some(row) = m.kernel.row(state, action) else {
                violations.push(Violation::MissingRow { state, action });
                continue;
            };
            let mut successors = HashSet::new();
            let mut sum = S::zero();
            for (successor, p) in row {
                if *successor >= n_states {
                    violations.push(Violation::SuccessorOutOfRange {
                        state,
                        action,
                        successor: *successor,
                    });
                }
                if !successors.insert(*successor) {
                    violations.push(Violation::DuplicateSuccessor {
                        state,
                        action,
                        successor: *successor,
                    });
                }
                if p.is_negative() {
                    violations.push(Violation::NegativeProbability {
                        state,
                        action,
                        successor: *successor,
                        probability: p.to_string(),
                    });
                }
                sum = sum + p.clone();
            }
            if !sum_is_one(&sum) {
                violations.push(Violation::RowSum {
                    state,
                    action,
                    sum: sum.to_string(),
                });
            }
        }
    }
    for ((state, action), _) in m.kernel.rows() {
        if *state >= n_states || *action >= n_alts {
            violations.push(Violation::RowOutOfRange {
                state: *state,
                action: *action,
            });
        }
    }

    if well_shaped && n_alts > 0 {
        if let Err(detail) = m.reward.check_covers(&m.states, n_alts) {
            violations.push(Violation::Reward { detail });
        }
    }

    ValidationReport { violations }
}

fn sum_is_one<S: Scalar>(sum: &S) -> bool {
    if S::EXACT {
        sum.is_one()
    } else {
        (sum.to_f64() - 1.0).abs() <= 1e-9
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, Rational};
    use crate::scenarios::fixture_f1;
    use proptest::prelude::*;

    fn profile(rows: &[&[i64]]) -> Profile<Rational> {
        Profile::new(
            rows.iter()
                .map(|r| r.iter().map(|&v| rat(v, 1)).collect())
                .collect(),
        )
        .unwrap()
    }

    fn two_state_mdp(row: Vec<(usize, Rational)>) -> SocialChoiceMdp<Rational> {
        let states = vec![profile(&[&[1, 0]]), profile(&[&[0, 1]])];
        let mut kernel = TransitionKernel::new();
        for s in 0..2 {
            for a in 0..2 {
                kernel.set_row(s, a, vec![(s, rat(1, 1))]);
            }
        }
        kernel.set_row(0, 0, row);
        SocialChoiceMdp::new(
            vec!["1".into()],
            vec!["x".into(), "y".into()],
            states,
            kernel,
            RewardSpec::Utilitarian,
        )
    }

    #[test]
    fn fixture_is_valid() {
        assert!(validate_mdp(&fixture_f1()).is_valid());
    }

    #[test]
    fn row_sum_violation_names_the_sum() {
        let m = two_state_mdp(vec![(0, rat(1, 2)), (1, rat(2, 5))]);
        let report = validate_mdp(&m);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(
            report.violations[0],
            Violation::RowSum {
                state: 0,
                action: 0,
                sum: "9/10".into()
            }
        );
        assert!(report.violations[0].to_string().contains("row sums to 9/10"));
    }

    #[test]
    fn duplicate_state_reported_once() {
        let mut m = fixture_f1();
        m.states[1] = m.states[0].clone();
        let report = validate_mdp(&m);
        assert_eq!(
            report.violations,
            vec![Violation::DuplicateState { first: 0, second: 1 }]
        );
    }

    #[test]
    fn each_broken_invariant_is_detected() {
        let base = fixture_f1();

        let mut m = base.clone();
        m.kernel.set_row(0, 1, vec![(1, rat(3, 2)), (0, rat(-1, 2))]);
        let v = validate_mdp(&m).violations;
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::NegativeProbability { state: 0, action: 1, successor: 0, .. }));

        let mut m = base.clone();
        m.kernel = TransitionKernel::deterministic(&[((0, 0), 0), ((0, 1), 1), ((1, 0), 1)]);
        assert_eq!(
            validate_mdp(&m).violations,
            vec![Violation::MissingRow { state: 1, action: 1 }]
        );

        let mut m = base.clone();
        m.kernel.set_row(1, 1, vec![(7, rat(1, 1))]);
        assert_eq!(
            validate_mdp(&m).violations,
            vec![Violation::SuccessorOutOfRange { state: 1, action: 1, successor: 7 }]
        );

        let mut m = base.clone();
        m.kernel.set_row(1, 1, vec![(1, rat(1, 2)), (1, rat(1, 2))]);
        assert_eq!(
            validate_mdp(&m).violations,
            vec![Violation::DuplicateSuccessor { state: 1, action: 1, successor: 1 }]
        );

        let mut m = base.clone();
        m.kernel.set_row(5, 0, vec![(0, rat(1, 1))]);
        assert_eq!(
            validate_mdp(&m).violations,
            vec![Violation::RowOutOfRange { state: 5, action: 0 }]
        );

        let mut m = base.clone();
        m.states[1] = profile(&[&[1, 2, 3], &[4, 5, 6]]);
        assert!(matches!(
            validate_mdp(&m).violations.as_slice(),
            [Violation::ShapeMismatch { state: 1, .. }]
        ));

        let mut m = base.clone();
        m.alternatives[1].label = "x".into();
        assert_eq!(
            validate_mdp(&m).violations,
            vec![Violation::DuplicateAlternativeLabel { label: "x".into() }]
        );

        let mut m = base.clone();
        m.states.clear();
        m.kernel = TransitionKernel::new();
        assert_eq!(validate_mdp(&m).violations, vec![Violation::NoStates]);
    }

    #[test]
    fn utilitarian_sums_on_fixture() {
        let m = fixture_f1();
        assert_eq!(utilitarian_sum(&m.states[0], 0).unwrap(), rat(2, 1));
        assert_eq!(utilitarian_sum(&m.states[0], 1).unwrap(), rat(0, 1));
        assert!(matches!(
            utilitarian_sum(&m.states[0], 2),
            Err(ModelError::AlternativeOutOfRange { index: 2, count: 2 })
        ));
        let single = profile(&[&[7, -3]]);
        assert_eq!(utilitarian_sum(&single, 1).unwrap(), rat(-3, 1));
    }

    #[test]
    fn cuc_identity_and_scaled_shift() {
        let u = profile(&[&[1, 4, -2], &[0, 3, 5]]);
        let w = profiles_cuc_related(&u, &u).unwrap().unwrap();
        assert_eq!(w, CucWitness::identity(2));

        // v = 2u + (3, -7), so u = v/2 - (3/2, -7/2)
        let v = u.affine_image(&rat(2, 1), &[rat(3, 1), rat(-7, 1)]);
        let w = profiles_cuc_related(&u, &v).unwrap().unwrap();
        assert_eq!(w.beta, rat(1, 2));
        assert_eq!(w.alphas, vec![rat(-3, 2), rat(7, 2)]);
    }

    #[test]
    fn cuc_fails_from_constant_to_varying_rows() {
        let m = fixture_f1();
        // U_A rows vary, U_B rows constant
        assert_eq!(profiles_cuc_related(&m.states[0], &m.states[1]).unwrap(), None);
        // the other direction: constant rows cannot come from varying ones
        assert_eq!(profiles_cuc_related(&m.states[1], &m.states[0]).unwrap(), None);
    }

    #[test]
    fn cuc_degenerate_constant_rows() {
        let u = profile(&[&[4, 4], &[1, 1]]);
        let v = profile(&[&[0, 0], &[3, 3]]);
        let w = profiles_cuc_related(&u, &v).unwrap().unwrap();
        assert_eq!(w.beta, rat(1, 1));
        assert_eq!(w.alphas, vec![rat(4, 1), rat(-2, 1)]);
    }

    #[test]
    fn cuc_rejects_negative_scale_and_roster_mismatch() {
        let u = profile(&[&[1, 2]]);
        let v = profile(&[&[2, 1]]);
        assert_eq!(profiles_cuc_related(&u, &v).unwrap(), None);
        let bigger = profile(&[&[1, 2], &[3, 4]]);
        assert!(matches!(
            profiles_cuc_related(&u, &bigger),
            Err(ModelError::RosterMismatch { .. })
        ));
        assert!(profiles_permutation_related(&u, &bigger).is_err());
    }

    #[test]
    fn permutation_cases() {
        let u = profile(&[&[3, 0], &[0, 3], &[1, 1]]);
        assert_eq!(profiles_permutation_related(&u, &u).unwrap(), Some(vec![0, 1, 2]));
        let swapped = u.permuted(&[1, 0, 2]);
        assert_eq!(
            profiles_permutation_related(&u, &swapped).unwrap(),
            Some(vec![1, 0, 2])
        );
        let other = profile(&[&[3, 0], &[0, 3], &[1, 2]]);
        assert_eq!(profiles_permutation_related(&u, &other).unwrap(), None);
    }

    #[test]
    fn permutation_prefers_lexicographically_smallest() {
        let u = profile(&[&[1, 1], &[1, 1], &[2, 0]]);
        let v = profile(&[&[1, 1], &[2, 0], &[1, 1]]);
        assert_eq!(profiles_permutation_related(&u, &v).unwrap(), Some(vec![0, 2, 1]));
    }

    #[test]
    fn ragged_profile_rejected() {
        let err = Profile::new(vec![vec![rat(1, 1)], vec![rat(1, 1), rat(2, 1)]]).unwrap_err();
        assert_eq!(
            err,
            ModelError::RaggedProfile {
                member: 1,
                found: 2,
                expected: 1
            }
        );
    }

    fn arb_profile() -> impl Strategy<Value = Profile<Rational>> {
        (1usize..4, 1usize..4).prop_flat_map(|(m, x)| {
            proptest::collection::vec(proptest::collection::vec(-10i64..=10, x), m).prop_map(
                |rows| {
                    Profile::new(
                        rows.into_iter()
                            .map(|r| r.into_iter().map(|v| rat(v, 1)).collect())
                            .collect(),
                    )
                    .unwrap()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn cuc_witness_inverts(u in arb_profile(), beta_n in 1i64..6, beta_d in 1i64..6, shift in -5i64..5) {
            let beta = rat(beta_n, beta_d);
            let alphas: Vec<Rational> = (0..u.num_members()).map(|i| rat(shift * (i as i64 + 1), 2)).collect();
            let v = u.affine_image(&beta, &alphas);
            let forward = profiles_cuc_related(&u, &v).unwrap().expect("u ~ v");
            prop_assert_eq!(u.clone(), v.affine_image(&forward.beta, &forward.alphas));
            let inverse = forward.inverse();
            prop_assert_eq!(v.clone(), u.affine_image(&inverse.beta, &inverse.alphas));
            prop_assert!(profiles_cuc_related(&v, &u).unwrap().is_some());
        }

        #[test]
        fn permutation_witness_reproduces_target(u in arb_profile(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..u.num_members()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let v = u.permuted(&perm);
            let rho = profiles_permutation_related(&u, &v).unwrap().expect("related by construction");
            prop_assert_eq!(u.permuted(&rho), v);
        }
    }
}
