//! Executable axiom checks on rewards (through the induced SWF) and on
//! policies (read as social choice functions).
//!
//! The axioms quantify over every profile; here they are checked over a
//! supplied finite profile set, optionally extended with generated CUC images
//! and member permutations. A passing report therefore means "no violation
//! among `checked_count` instances".

use std::fmt;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{
    profiles_cuc_related, profiles_permutation_related, sum_column, ModelError, Policy, Profile,
    SocialChoiceMdp,
};
use crate::scalar::Scalar;
use crate::welfare::{RewardSpec, SocialRelation, WelfareError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AxiomError {
    #[error(transparent)]
    Welfare(#[from] WelfareError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("generative checks need a reward defined on every profile; {kind} reward has no extension rule")]
    NotTotal { kind: &'static str },
    #[error("policy covers {found} states, MDP has {expected}")]
    PolicyShape { found: usize, expected: usize },
    #[error("policy picks alternative {action} at state {state}, MDP has {count}")]
    PolicyAction {
        state: usize,
        action: usize,
        count: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axiom {
    ParetoSwf,
    Iia,
    CucInvariance,
    FunctionalAnonymity,
    AgreesWithUtilitarianism,
    ParetoScf,
}

impl Axiom {
    pub fn name(self) -> &'static str {
        match self {
            Axiom::ParetoSwf => "pareto-swf",
            Axiom::Iia => "iia",
            Axiom::CucInvariance => "cuc-invariance",
            Axiom::FunctionalAnonymity => "functional-anonymity",
            Axiom::AgreesWithUtilitarianism => "agrees-with-utilitarianism",
            Axiom::ParetoScf => "pareto-scf",
        }
    }
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A concrete counterexample, re-checkable with [`Witness::replay`].
#[derive(Debug, Clone, PartialEq)]
pub enum Witness<S> {
    /// Every member strictly prefers `x` to `y`, but `x` is not strictly socially preferred.
    Pareto {
        profile: Profile<S>,
        x: usize,
        y: usize,
        reward_x: S,
        reward_y: S,
    },
    /// Utilities of `x` and `y` agree across the profiles, the relation between them does not.
    Iia {
        profile: Profile<S>,
        other: Profile<S>,
        x: usize,
        y: usize,
        weak_in_profile: bool,
        weak_in_other: bool,
    },
    /// `other = alphas + beta * profile`, yet the relations differ at `(x, y)`.
    Cuc {
        profile: Profile<S>,
        other: Profile<S>,
        beta: S,
        alphas: Vec<S>,
        x: usize,
        y: usize,
        weak_in_profile: bool,
        weak_in_other: bool,
    },
    /// `other_i = profile_{permutation[i]}`, yet the relations differ at `(x, y)`.
    Anonymity {
        profile: Profile<S>,
        other: Profile<S>,
        permutation: Vec<usize>,
        x: usize,
        y: usize,
        weak_in_profile: bool,
        weak_in_other: bool,
    },
    /// `R(U,x) ≥ R(U,y)` and `Σ U(x) ≥ Σ U(y)` disagree.
    Agreement {
        profile: Profile<S>,
        x: usize,
        y: usize,
        reward_x: S,
        reward_y: S,
        sum_x: S,
        sum_y: S,
    },
    /// The policy picks `chosen` at `state` although every member strictly prefers `dominating`.
    ParetoScf {
        state: usize,
        profile: Profile<S>,
        dominating: usize,
        chosen: usize,
    },
}

impl<S: Scalar> Witness<S> {
    /// The profiles this witness mentions.
    pub fn profiles(&self) -> Vec<&Profile<S>> {
        match self {
            Witness::Pareto { profile, .. }
            | Witness::Agreement { profile, .. }
            | Witness::ParetoScf { profile, .. } => vec![profile],
            Witness::Iia { profile, other, .. }
            | Witness::Cuc { profile, other, .. }
            | Witness::Anonymity { profile, other, .. } => vec![profile, other],
        }
    }

    /// Re-derives the violation from the recorded data alone.
    pub fn replay(&self, reward: &RewardSpec<S>) -> Result<bool, WelfareError> {
        let relation = |p: &Profile<S>| -> Result<SocialRelation, WelfareError> {
            Ok(SocialRelation::from_scores(&reward.scores(p)?))
        };
        Ok(match self {
            Witness::Pareto { profile, x, y, .. } => {
                profile.unanimously_prefers(*x, *y) && !relation(profile)?.strictly_prefers(*x, *y)
            }
            Witness::Iia {
                profile,
                other,
                x,
                y,
                ..
            } => {
                profile.same_roster(other).is_ok()
                    && profile.agrees_on_pair(other, *x, *y)
                    && relation(profile)?.weakly_prefers(*x, *y)
                        != relation(other)?.weakly_prefers(*x, *y)
            }
            Witness::Cuc {
                profile,
                other,
                beta,
                alphas,
                x,
                y,
                ..
            } => {
                beta.is_positive()
                    && alphas.len() == profile.num_members()
                    && profile.affine_image(beta, alphas) == *other
                    && relation(profile)?.weakly_prefers(*x, *y)
                        != relation(other)?.weakly_prefers(*x, *y)
            }
            Witness::Anonymity {
                profile,
                other,
                permutation,
                x,
                y,
                ..
            } => {
                is_permutation(permutation, profile.num_members())
                    && profile.permuted(permutation) == *other
                    && relation(profile)?.weakly_prefers(*x, *y)
                        != relation(other)?.weakly_prefers(*x, *y)
            }
            Witness::Agreement { profile, x, y, .. } => {
                let rx = reward.eval(profile, *x)?;
                let ry = reward.eval(profile, *y)?;
                (rx >= ry) != (sum_column(profile, *x) >= sum_column(profile, *y))
            }
            Witness::ParetoScf {
                profile,
                dominating,
                chosen,
                ..
            } => profile.unanimously_prefers(*dominating, *chosen),
        })
    }
}

fn is_permutation(perm: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    perm.len() == n
        && perm
            .iter()
            .all(|&j| j < n && !std::mem::replace(&mut seen[j], true))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport<S> {
    pub axiom: Axiom,
    pub passed: bool,
    pub witnesses: Vec<Witness<S>>,
    pub checked_count: usize,
}

impl<S> AxiomReport<S> {
    fn new(axiom: Axiom) -> Self {
        Self {
            axiom,
            passed: true,
            witnesses: Vec::new(),
            checked_count: 0,
        }
    }

    fn push(&mut self, witness: Witness<S>) {
        self.passed = false;
        self.witnesses.push(witness);
    }
}

/// Grids and sampling budget for generated CUC images and permutations.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeConfig<S> {
    pub betas: Vec<S>,
    pub alphas: Vec<S>,
    /// Upper bound on generated images per profile.
    pub samples: usize,
    /// Only used to sample permutations when there are more than six members.
    pub seed: u64,
}

impl<S: Scalar> Default for GenerativeConfig<S> {
    fn default() -> Self {
        Self {
            betas: vec![
                S::ratio(1, 3),
                S::ratio(1, 2),
                S::one(),
                S::from_i64(2),
                S::from_i64(3),
            ],
            alphas: (-2..=2).map(S::from_i64).collect(),
            samples: 256,
            seed: 0,
        }
    }
}

impl<S: Scalar> GenerativeConfig<S> {
    /// The CUC transforms `(beta, alphas)` applied to a profile with `members` rows.
    ///
    /// The full grid is enumerated in mixed-radix order when it has at most
    /// `samples` points; otherwise `samples` evenly strided points are taken.
    pub fn cuc_grid(&self, members: usize) -> Vec<(S, Vec<S>)> {
        let nb = self.betas.len();
        let na = self.alphas.len();
        if nb == 0 || na == 0 {
            return Vec::new();
        }
        let size = (members as u32)
            .try_into()
            .ok()
            .and_then(|m: u32| (na as u128).checked_pow(m))
            .and_then(|n| n.checked_mul(nb as u128))
            .unwrap_or(u128::MAX);
        let picks: Vec<u128> = if size <= self.samples as u128 {
            (0..size).collect()
        } else {
            (0..self.samples as u128)
                .map(|k| k * size / self.samples as u128)
                .collect()
        };
        picks
            .into_iter()
            .map(|mut index| {
                let beta = self.betas[(index % nb as u128) as usize].clone();
                index /= nb as u128;
                let alphas = (0..members)
                    .map(|_| {
                        let a = self.alphas[(index % na as u128) as usize].clone();
                        index /= na as u128;
                        a
                    })
                    .collect();
                (beta, alphas)
            })
            .collect()
    }

    /// All member permutations when there are at most six members, else `samples` seeded shuffles.
    pub fn permutations(&self, members: usize) -> Vec<Vec<usize>> {
        if members <= 6 {
            (0..members).permutations(members).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            (0..self.samples)
                .map(|_| {
                    let mut perm: Vec<usize> = (0..members).collect();
                    perm.shuffle(&mut rng);
                    perm
                })
                .collect()
        }
    }
}

/// Which instances the CUC and anonymity checks examine.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckMode<S> {
    /// Every pair drawn from the supplied profiles.
    Pair,
    /// Transforms and permutations generated from each supplied profile.
    Generative(GenerativeConfig<S>),
    Both(GenerativeConfig<S>),
}

impl<S: Scalar> CheckMode<S> {
    pub fn both() -> Self {
        CheckMode::Both(GenerativeConfig::default())
    }

    pub fn generative() -> Self {
        CheckMode::Generative(GenerativeConfig::default())
    }

    fn pair(&self) -> bool {
        matches!(self, CheckMode::Pair | CheckMode::Both(_))
    }

    fn generator(&self) -> Option<&GenerativeConfig<S>> {
        match self {
            CheckMode::Pair => None,
            CheckMode::Generative(g) | CheckMode::Both(g) => Some(g),
        }
    }
}

fn relations<S: Scalar>(
    reward: &RewardSpec<S>,
    profiles: &[Profile<S>],
) -> Result<Vec<SocialRelation>, AxiomError> {
    profiles
        .iter()
        .map(|p| Ok(SocialRelation::from_scores(&reward.scores(p)?)))
        .collect()
}

/// First ordered pair `(x, y)` where the relations disagree.
fn first_difference(a: &SocialRelation, b: &SocialRelation) -> Option<(usize, usize)> {
    let n = a.len();
    (0..n)
        .flat_map(|x| (0..n).map(move |y| (x, y)))
        .find(|&(x, y)| a.weakly_prefers(x, y) != b.weakly_prefers(x, y))
}

/// Pareto (SWF): unanimous strict preference for `x` over `y` forces `x P(f_R(U)) y`.
pub fn check_pareto_swf<S: Scalar>(
    reward: &RewardSpec<S>,
    profiles: &[Profile<S>],
) -> Result<AxiomReport<S>, AxiomError> {
    let mut report = AxiomReport::new(Axiom::ParetoSwf);
    for profile in profiles {
        let scores = reward.scores(profile)?;
        let n = profile.num_alternatives();
        for (x, y) in (0..n).flat_map(|x| (0..n).map(move |y| (x, y))) {
            if x == y || !profile.unanimously_prefers(x, y) {
                continue;
            }
            report.checked_count += 1;
            if scores[x] <= scores[y] {
                report.push(Witness::Pareto {
                    profile: profile.clone(),
                    x,
                    y,
                    reward_x: scores[x].clone(),
                    reward_y: scores[y].clone(),
                });
            }
        }
    }
    Ok(report)
}

/// IIA: the relation between `x` and `y` depends only on the members' utilities for them.
pub fn check_iia<S: Scalar>(
    reward: &RewardSpec<S>,
    profiles: &[Profile<S>],
) -> Result<AxiomReport<S>, AxiomError> {
    let mut report = AxiomReport::new(Axiom::Iia);
    let rels = relations(reward, profiles)?;
    for (i, j) in (0..profiles.len()).tuple_combinations() {
        let (u, v) = (&profiles[i], &profiles[j]);
        if u.same_roster(v).is_err() {
            continue;
        }
        let n = u.num_alternatives();
        for (x, y) in (0..n).flat_map(|x| (0..n).map(move |y| (x, y))) {
            if x == y || !u.agrees_on_pair(v, x, y) {
                continue;
            }
            report.checked_count += 1;
            let (before, after) = (rels[i].weakly_prefers(x, y), rels[j].weakly_prefers(x, y));
            if before != after {
                report.push(Witness::Iia {
                    profile: u.clone(),
                    other: v.clone(),
                    x,
                    y,
                    weak_in_profile: before,
                    weak_in_other: after,
                });
            }
        }
    }
    Ok(report)
}

fn require_total<S: Scalar>(reward: &RewardSpec<S>, mode: &CheckMode<S>) -> Result<(), AxiomError> {
    if mode.generator().is_some() && !reward.is_total() {
        return Err(AxiomError::NotTotal {
            kind: reward.kind_name(),
        });
    }
    Ok(())
}

/// CUC-Invariance: profiles related by a common positive scale plus member shifts get equal relations.
pub fn check_cuc_invariance<S: Scalar>(
    reward: &RewardSpec<S>,
    profiles: &[Profile<S>],
    mode: &CheckMode<S>,
) -> Result<AxiomReport<S>, AxiomError> {
    require_total(reward, mode)?;
    let mut report = AxiomReport::new(Axiom::CucInvariance);
    let rels = relations(reward, profiles)?;

    if mode.pair() {
        for (i, j) in (0..profiles.len()).tuple_combinations() {
            let (u, v) = (&profiles[i], &profiles[j]);
            if u.same_roster(v).is_err() {
                continue;
            }
            // witness oriented as v = alphas + beta * u
            let Some(w) = profiles_cuc_related(v, u)? else {
                continue;
            };
            report.checked_count += 1;
            if let Some((x, y)) = first_difference(&rels[i], &rels[j]) {
                report.push(Witness::Cuc {
                    profile: u.clone(),
                    other: v.clone(),
                    beta: w.beta,
                    alphas: w.alphas,
                    x,
                    y,
                    weak_in_profile: rels[i].weakly_prefers(x, y),
                    weak_in_other: rels[j].weakly_prefers(x, y),
                });
            }
        }
    }

    if let Some(generator) = mode.generator() {
        for (profile, rel) in profiles.iter().zip(&rels) {
            for (beta, alphas) in generator.cuc_grid(profile.num_members()) {
                let image = profile.affine_image(&beta, &alphas);
                let image_rel = SocialRelation::from_scores(&reward.scores(&image)?);
                report.checked_count += 1;
                if let Some((x, y)) = first_difference(rel, &image_rel) {
                    report.push(Witness::Cuc {
                        profile: profile.clone(),
                        other: image,
                        beta,
                        alphas,
                        x,
                        y,
                        weak_in_profile: rel.weakly_prefers(x, y),
                        weak_in_other: image_rel.weakly_prefers(x, y),
                    });
                }
            }
        }
    }
    Ok(report)
}

/// Functional Anonymity: permuting who holds which utility function leaves the relation unchanged.
pub fn check_functional_anonymity<S: Scalar>(
    reward: &RewardSpec<S>,
    profiles: &[Profile<S>],
    mode: &CheckMode<S>,
) -> Result<AxiomReport<S>, AxiomError> {
    require_total(reward, mode)?;
    let mut report = AxiomReport::new(Axiom::FunctionalAnonymity);
    let rels = relations(reward, profiles)?;

    if mode.pair() {
        for (i, j) in (0..profiles.len()).tuple_combinations() {
            let (u, v) = (&profiles[i], &profiles[j]);
            if u.same_roster(v).is_err() {
                continue;
            }
            let Some(permutation) = profiles_permutation_related(u, v)? else {
                continue;
            };
            report.checked_count += 1;
            if let Some((x, y)) = first_difference(&rels[i], &rels[j]) {
                report.push(Witness::Anonymity {
                    profile: u.clone(),
                    other: v.clone(),
                    permutation,
                    x,
                    y,
                    weak_in_profile: rels[i].weakly_prefers(x, y),
                    weak_in_other: rels[j].weakly_prefers(x, y),
                });
            }
        }
    }

    if let Some(generator) = mode.generator() {
        for (profile, rel) in profiles.iter().zip(&rels) {
            for permutation in generator.permutations(profile.num_members()) {
                let image = profile.permuted(&permutation);
                let image_rel = SocialRelation::from_scores(&reward.scores(&image)?);
                report.checked_count += 1;
                if let Some((x, y)) = first_difference(rel, &image_rel) {
                    report.push(Witness::Anonymity {
                        profile: profile.clone(),
                        other: image,
                        permutation,
                        x,
                        y,
                        weak_in_profile: rel.weakly_prefers(x, y),
                        weak_in_other: image_rel.weakly_prefers(x, y),
                    });
                }
            }
        }
    }
    Ok(report)
}

/// `R(U,x) ≥ R(U,y) ⟺ Σ_i U_i(x) ≥ Σ_i U_i(y)` on every supplied profile.
pub fn check_agrees_with_utilitarianism<S: Scalar>(
    reward: &RewardSpec<S>,
    profiles: &[Profile<S>],
) -> Result<AxiomReport<S>, AxiomError> {
    let mut report = AxiomReport::new(Axiom::AgreesWithUtilitarianism);
    for profile in profiles {
        let scores = reward.scores(profile)?;
        let n = profile.num_alternatives();
        let sums: Vec<S> = (0..n).map(|a| sum_column(profile, a)).collect();
        for (x, y) in (0..n).flat_map(|x| (0..n).map(move |y| (x, y))) {
            if x == y {
                continue;
            }
            report.checked_count += 1;
            if (scores[x] >= scores[y]) != (sums[x] >= sums[y]) {
                report.push(Witness::Agreement {
                    profile: profile.clone(),
                    x,
                    y,
                    reward_x: scores[x].clone(),
                    reward_y: scores[y].clone(),
                    sum_x: sums[x].clone(),
                    sum_y: sums[y].clone(),
                });
            }
        }
    }
    Ok(report)
}

/// Pareto (SCF) for a policy: a unanimously dominated alternative is never chosen.
pub fn check_pareto_scf<S: Scalar>(
    policy: &Policy,
    mdp: &SocialChoiceMdp<S>,
) -> Result<AxiomReport<S>, AxiomError> {
    if policy.len() != mdp.num_states() {
        return Err(AxiomError::PolicyShape {
            found: policy.len(),
            expected: mdp.num_states(),
        });
    }
    let mut report = AxiomReport::new(Axiom::ParetoScf);
    for (state, profile) in mdp.states.iter().enumerate() {
        let chosen = policy.action(state);
        if chosen >= mdp.num_alternatives() {
            return Err(AxiomError::PolicyAction {
                state,
                action: chosen,
                count: mdp.num_alternatives(),
            });
        }
        for dominating in 0..mdp.num_alternatives() {
            if dominating == chosen {
                continue;
            }
            report.checked_count += 1;
            if profile.unanimously_prefers(dominating, chosen) {
                report.push(Witness::ParetoScf {
                    state,
                    profile: profile.clone(),
                    dominating,
                    chosen,
                });
            }
        }
    }
    Ok(report)
}

/// How the two sides of the utilitarian representation compare at finite scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquivalenceVerdict {
    /// All four axioms and agreement hold on the checked instances.
    BothHold,
    /// An axiom failed and agreement fails once the witness profiles are included.
    BothFail,
    /// Agreement fails on the set but no axiom violation lies within it.
    FiniteDomainArtifact,
    /// An axiom failed while agreement holds on every profile involved.
    Contradiction,
}

impl EquivalenceVerdict {
    pub fn name(self) -> &'static str {
        match self {
            EquivalenceVerdict::BothHold => "both-hold",
            EquivalenceVerdict::BothFail => "both-fail",
            EquivalenceVerdict::FiniteDomainArtifact => "finite-domain-artifact",
            EquivalenceVerdict::Contradiction => "contradiction",
        }
    }

    pub fn is_consistent(self) -> bool {
        self != EquivalenceVerdict::Contradiction
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport<S> {
    pub pareto: AxiomReport<S>,
    pub iia: AxiomReport<S>,
    pub cuc: AxiomReport<S>,
    pub anonymity: AxiomReport<S>,
    pub agreement: AxiomReport<S>,
    /// Agreement re-run over the profile set plus every axiom witness profile.
    pub extended_agreement: Option<AxiomReport<S>>,
    pub axioms_hold: bool,
    pub agreement_holds: bool,
    pub verdict: EquivalenceVerdict,
}

impl<S> EquivalenceReport<S> {
    pub fn axiom_reports(&self) -> [&AxiomReport<S>; 4] {
        [&self.pareto, &self.iia, &self.cuc, &self.anonymity]
    }
}

/// Runs the four axiom checks and the agreement check and relates their outcomes.
pub fn verify_theorem2<S: Scalar>(
    reward: &RewardSpec<S>,
    profiles: &[Profile<S>],
    mode: &CheckMode<S>,
) -> Result<EquivalenceReport<S>, AxiomError> {
    let pareto = check_pareto_swf(reward, profiles)?;
    let iia = check_iia(reward, profiles)?;
    let cuc = check_cuc_invariance(reward, profiles, mode)?;
    let anonymity = check_functional_anonymity(reward, profiles, mode)?;
    let agreement = check_agrees_with_utilitarianism(reward, profiles)?;

    let axioms_hold = pareto.passed && iia.passed && cuc.passed && anonymity.passed;
    let agreement_holds = agreement.passed;

    let (extended_agreement, verdict) = if axioms_hold {
        let verdict = if agreement_holds {
            EquivalenceVerdict::BothHold
        } else {
            EquivalenceVerdict::FiniteDomainArtifact
        };
        (None, verdict)
    } else {
        let mut extended: Vec<Profile<S>> = profiles.to_vec();
        for report in [&pareto, &iia, &cuc, &anonymity] {
            for witness in &report.witnesses {
                for p in witness.profiles() {
                    if !extended.contains(p) {
                        extended.push(p.clone());
                    }
                }
            }
        }
        let rerun = check_agrees_with_utilitarianism(reward, &extended)?;
        let verdict = if rerun.passed {
            EquivalenceVerdict::Contradiction
        } else {
            EquivalenceVerdict::BothFail
        };
        (Some(rerun), verdict)
    };

    Ok(EquivalenceReport {
        pareto,
        iia,
        cuc,
        anonymity,
        agreement,
        extended_agreement,
        axioms_hold,
        agreement_holds,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, Rational};
    use crate::scenarios::fixture_f1;
    use crate::welfare::{Expr, MonotoneTransform};

    fn profile(rows: &[&[i64]]) -> Profile<Rational> {
        Profile::new(
            rows.iter()
                .map(|r| r.iter().map(|&v| rat(v, 1)).collect())
                .collect(),
        )
        .unwrap()
    }

    fn u_c() -> Profile<Rational> {
        profile(&[&[3, 0], &[0, 3]])
    }

    fn z_dependent() -> RewardSpec<Rational> {
        RewardSpec::Custom(
            Expr::parse(
                "(if-positive (sum-over-members (utility member 2)) \
                 (sum-over-members (utility member alt)) \
                 (neg (sum-over-members (utility member alt))))",
            )
            .unwrap(),
        )
    }

    fn assert_sound(report: &AxiomReport<Rational>, reward: &RewardSpec<Rational>) {
        assert_eq!(report.passed, report.witnesses.is_empty());
        for w in &report.witnesses {
            assert!(w.replay(reward).unwrap(), "unsound witness {w:?}");
        }
    }

    #[test]
    fn pareto_examples() {
        let states = fixture_f1().states;
        let r = check_pareto_swf(&RewardSpec::Utilitarian, &states).unwrap();
        assert!(r.passed);
        assert_eq!(r.checked_count, 1);

        let flat = RewardSpec::constant(rat(0, 1));
        let r = check_pareto_swf(&flat, &states[..1]).unwrap();
        assert!(!r.passed);
        assert!(matches!(r.witnesses[0], Witness::Pareto { x: 0, y: 1, .. }));
        assert_sound(&r, &flat);

        // U_B has no unanimous strict pair
        let r = check_pareto_swf(&flat, &states[1..]).unwrap();
        assert!(r.passed);
        assert_eq!(r.checked_count, 0);
    }

    #[test]
    fn iia_examples() {
        let states = fixture_f1().states;
        assert!(check_iia(&RewardSpec::Utilitarian, &states).unwrap().passed);

        let r = z_dependent();
        let u = profile(&[&[2, 1, 1], &[0, 0, 1]]);
        let v = profile(&[&[2, 1, -1], &[0, 0, -1]]);
        let report = check_iia(&r, &[u.clone(), v]).unwrap();
        assert!(!report.passed);
        assert!(matches!(report.witnesses[0], Witness::Iia { x: 0, y: 1, weak_in_profile: true, weak_in_other: false, .. }));
        assert_sound(&report, &r);

        assert!(check_iia(&r, &[u]).unwrap().passed);
    }

    #[test]
    fn utilitarian_cuc_example() {
        let u_a = fixture_f1().states[0].clone();
        let mode = CheckMode::Generative(GenerativeConfig {
            betas: vec![rat(2, 1)],
            alphas: vec![rat(1, 1), rat(-1, 1)],
            samples: 16,
            seed: 0,
        });
        let r = check_cuc_invariance(&RewardSpec::Utilitarian, &[u_a], &mode).unwrap();
        assert!(r.passed);
        assert_eq!(r.checked_count, 4);
    }

    /// Exhaustive search of the default grid for an order-flipping CUC image of the
    /// sum-of-cubes reward on U_1 = (2, 0), U_2 = (0, 1).
    #[test]
    fn sum_of_cubes_flip_found_by_grid_oracle() {
        let u = profile(&[&[2, 0], &[0, 1]]);
        let cubes = |p: &Profile<Rational>, a: usize| -> Rational {
            (0..p.num_members()).map(|i| crate::scalar::pow(p.utility(i, a), 3)).sum()
        };
        let before = cubes(&u, 0) >= cubes(&u, 1);
        let grid = GenerativeConfig::<Rational>::default();
        let mut oracle_flips = Vec::new();
        for beta in &grid.betas {
            for a1 in &grid.alphas {
                for a2 in &grid.alphas {
                    let image = u.affine_image(beta, &[a1.clone(), a2.clone()]);
                    if (cubes(&image, 0) >= cubes(&image, 1)) != before {
                        oracle_flips.push((beta.clone(), a1.clone(), a2.clone()));
                    }
                }
            }
        }
        // e.g. beta = 1, alpha = (-2, 2): x: 0 + 8 = 8, y: -8 + 27 = 19
        assert!(oracle_flips.contains(&(rat(1, 1), rat(-2, 1), rat(2, 1))));
        assert!(!oracle_flips.contains(&(rat(1, 1), rat(-2, 1), rat(0, 1))));

        let reward = RewardSpec::Custom(Expr::sum_of_powers(3));
        let report = check_cuc_invariance(&reward, &[u], &CheckMode::generative()).unwrap();
        assert!(!report.passed);
        assert_eq!(report.checked_count, 125);
        assert_eq!(report.witnesses.len(), oracle_flips.len());
        assert_sound(&report, &reward);
    }

    #[test]
    fn identity_transforms_never_fail() {
        let u = u_c();
        let mode = CheckMode::Generative(GenerativeConfig {
            betas: vec![rat(1, 1)],
            alphas: vec![rat(0, 1)],
            samples: 4,
            seed: 0,
        });
        for reward in [RewardSpec::dictator(0), RewardSpec::Custom(Expr::sum_of_powers(3)), z_dependent()] {
            let u3 = profile(&[&[3, 0, 1], &[0, 3, -1]]);
            assert!(check_cuc_invariance(&reward, &[u3.clone()], &mode).unwrap().passed);
            assert!(check_functional_anonymity(&reward, &[u3.clone(), u3], &CheckMode::Pair).unwrap().passed);
        }
        assert!(check_cuc_invariance(&RewardSpec::dictator(0), &[u.clone(), u], &CheckMode::Pair).unwrap().passed);
    }

    #[test]
    fn dictator_breaks_anonymity() {
        let dictator = RewardSpec::dictator(0);
        let swapped = u_c().permuted(&[1, 0]);

        let r = check_functional_anonymity(&dictator, &[u_c()], &CheckMode::generative()).unwrap();
        assert!(!r.passed);
        assert_eq!(r.checked_count, 2);
        assert_sound(&r, &dictator);

        let r = check_functional_anonymity(&dictator, &[u_c(), swapped], &CheckMode::Pair).unwrap();
        assert!(!r.passed);
        match &r.witnesses[0] {
            Witness::Anonymity { permutation, x, y, weak_in_profile, weak_in_other, .. } => {
                assert_eq!(permutation, &vec![1, 0]);
                // x ≻ y before the swap, y ≻ x after
                assert_eq!((*x, *y, *weak_in_profile, *weak_in_other), (0, 1, true, false));
            }
            other => panic!("unexpected witness {other:?}"),
        }

        for mode in [CheckMode::Pair, CheckMode::both()] {
            let r = check_functional_anonymity(&RewardSpec::Utilitarian, &[u_c(), u_c().permuted(&[1, 0])], &mode).unwrap();
            assert!(r.passed);
        }
    }

    #[test]
    fn agreement_examples() {
        let cube = RewardSpec::quasi(MonotoneTransform::odd_power(3).unwrap()).unwrap();
        let states = fixture_f1().states;
        assert!(check_agrees_with_utilitarianism(&cube, &states).unwrap().passed);

        let dictator = RewardSpec::dictator(0);
        let r = check_agrees_with_utilitarianism(&dictator, &[u_c()]).unwrap();
        assert!(!r.passed);
        // dictator: 3 > 0 so y ≽ x fails, while sums tie 3 = 3
        assert!(matches!(&r.witnesses[0], Witness::Agreement { x: 1, y: 0, .. }));
        assert_sound(&r, &dictator);

        let flat = RewardSpec::constant(rat(0, 1));
        let r = check_agrees_with_utilitarianism(&flat, &states[..1]).unwrap();
        assert!(!r.passed);
        assert_sound(&r, &flat);
    }

    #[test]
    fn theorem2_examples() {
        let states = fixture_f1().states;
        let report = verify_theorem2(&RewardSpec::Utilitarian, &states, &CheckMode::both()).unwrap();
        assert_eq!(report.verdict, EquivalenceVerdict::BothHold);

        let flat = RewardSpec::constant(rat(0, 1));
        let report = verify_theorem2(&flat, &states[..1], &CheckMode::both()).unwrap();
        assert!(!report.pareto.passed && !report.agreement_holds);
        assert_eq!(report.verdict, EquivalenceVerdict::BothFail);

        let dictator = RewardSpec::dictator(0);
        let set = [u_c(), u_c().permuted(&[1, 0])];
        let report = verify_theorem2(&dictator, &set, &CheckMode::Pair).unwrap();
        assert!(!report.anonymity.passed && !report.agreement_holds);
        assert_eq!(report.verdict, EquivalenceVerdict::BothFail);

        // unequal sums, no unanimous pair: nothing in the set witnesses an axiom failure
        let lopsided = Profile::new(vec![vec![rat(3, 1), rat(0, 1)], vec![rat(0, 1), rat(1, 1)]]).unwrap();
        let report = verify_theorem2(&flat, &[lopsided], &CheckMode::Pair).unwrap();
        assert_eq!(report.verdict, EquivalenceVerdict::FiniteDomainArtifact);
    }

    #[test]
    fn generative_mode_refuses_partial_tabular_reward() {
        use crate::welfare::{ExtensionRule, TabularReward};
        use std::collections::BTreeMap;
        let m = fixture_f1();
        let mut values = BTreeMap::new();
        for s in 0..2 {
            for a in 0..2 {
                values.insert((s, a), rat(s as i64, 1));
            }
        }
        let r = RewardSpec::Tabular(TabularReward::new(m.states.clone(), values, ExtensionRule::None));
        assert!(matches!(
            check_cuc_invariance(&r, &m.states, &CheckMode::generative()),
            Err(AxiomError::NotTotal { kind: "tabular" })
        ));
        assert!(check_cuc_invariance(&r, &m.states, &CheckMode::Pair).is_ok());
    }

    #[test]
    fn pareto_scf_examples() {
        let m = fixture_f1();
        let long_run = Policy::new(vec![1, 0]);
        let r = check_pareto_scf(&long_run, &m).unwrap();
        assert!(!r.passed);
        assert!(matches!(r.witnesses[0], Witness::ParetoScf { state: 0, dominating: 0, chosen: 1, .. }));

        assert!(check_pareto_scf(&m.myopic_utilitarian_policy(), &m).unwrap().passed);

        let single = SocialChoiceMdp::new(
            vec!["1".into()],
            vec!["only".into()],
            vec![profile(&[&[4]])],
            crate::model::TransitionKernel::deterministic(&[((0, 0), 0)]),
            RewardSpec::Utilitarian,
        );
        let r = check_pareto_scf(&Policy::new(vec![0]), &single).unwrap();
        assert!(r.passed && r.checked_count == 0);

        assert!(matches!(
            check_pareto_scf(&Policy::new(vec![0]), &m),
            Err(AxiomError::PolicyShape { .. })
        ));
    }

    #[test]
    fn large_rosters_sample_permutations_deterministically() {
        let g = GenerativeConfig::<Rational> { samples: 5, seed: 9, ..Default::default() };
        let a = g.permutations(8);
        assert_eq!(a.len(), 5);
        assert_eq!(a, g.permutations(8));
        assert!(a.iter().all(|p| is_permutation(p, 8)));
        assert_eq!(g.permutations(3).len(), 6);
    }

    #[test]
    fn cuc_grid_stride_when_too_large() {
        let g = GenerativeConfig::<Rational>::default();
        assert_eq!(g.cuc_grid(2).len(), 125);
        let big = g.cuc_grid(4);
        assert_eq!(big.len(), 256);
        assert!(big.iter().all(|(b, a)| *b > Rational::from_integer(0.into()) && a.len() == 4));
    }
}
