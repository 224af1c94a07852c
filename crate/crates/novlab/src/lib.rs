//! Desk-scale laboratory for studying how tabular reinforcement-learning
//! agents adapt online to environment changes injected mid-training.
//!
//! The crate provides:
//! - a deterministic symbolic gridworld with a sparse goal reward
//!   ([`gridworld`]) and brute-force solution-cost oracles ([`search`]);
//! - a catalog of injectable environment transformations with an ontology of
//!   their effect on optimal solutions ([`novelty`]);
//! - an interval-based symbolic transition model learned online one
//!   transition at a time ([`rules`]), plus consecutive-failure change
//!   detection ([`detect`]);
//! - tabular Q-learning and softmax actor-critic agents ([`agent`]) and an
//!   adaptation controller that mixes real and model-simulated transitions
//!   into the agent's update buffer ([`imagine`]);
//! - a prioritized-sampling library: sum trees, count/loss priorities,
//!   thresholded TD priorities and their inverse, Huber loss, lambda-returns,
//!   and dual-objective subsampling ([`replay`]);
//! - adaptation metrics over episode logs ([`metrics`]) and a seeded,
//!   reproducible experiment harness with a CLI ([`harness`]).

pub mod agent;
pub mod detect;
pub mod exec;
pub mod features;
pub mod gridworld;
pub mod harness;
pub mod imagine;
pub mod metrics;
pub mod novelty;
pub mod replay;
pub mod rules;
pub mod search;
