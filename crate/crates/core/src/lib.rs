//! Social Choice MDPs: profiles of cardinal utilities as states, alternatives
//! as actions, axiom checkers for reward-induced welfare functionals, and
//! discounted solvers.
//!
//! Profiles and rewards are generic over [`Scalar`]: exact [`Rational`] or
//! `f64`/`f32`. Solvers run on floats.

pub mod axioms;
pub mod cli;
pub mod model;
pub mod scalar;
pub mod scenarios;
pub mod solver;
pub mod welfare;

pub use scalar::{Rational, Scalar};

pub type RationalProfile = model::Profile<Rational>;
pub type RationalMdp = model::SocialChoiceMdp<Rational>;
pub type RationalReward = welfare::RewardSpec<Rational>;
pub type Profile64 = model::Profile<f64>;
pub type Mdp64 = model::SocialChoiceMdp<f64>;
pub type ValueTable64 = solver::ValueTable<f64>;
pub type SolveConfig64 = solver::SolveConfig<f64>;
