//! Monte-Carlo and gradient Bayesian reinforcement learning on finite MDPs.
//!
//! The crate is organised bottom-up:
//!
//! * [`mdp`]: exact finite MDPs, simulation and solvers.
//! * [`belief`]: the conjugate Dirichlet / Normal-Gamma posterior over MDPs.
//! * [`agents`]: the upper-bound and lower-bound Monte-Carlo planners, the
//!   direct-gradient, TD-gradient and Bellman-gradient learners, and the
//!   Thompson sampling, Q(λ) and discounted UCRL baselines.
//! * [`domains`]: Chain, Double-Loop, RiverSwim and a gridded Mountain Car.
//! * [`harness`]: hyperparameter tuning, evaluation, bootstrap statistics and
//!   result files.

pub mod agents;
pub mod belief;
pub mod domains;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod seed;

pub use error::{Error, Result};

/// The random stream type owned by each run.
pub type RunRng = rand_chacha::ChaCha8Rng;
