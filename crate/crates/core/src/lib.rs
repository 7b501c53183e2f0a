//! Constrained policy optimization.
//!
//! Trust-region policy search for constrained MDPs: the analytic
//! single-constraint step and its multi-constraint dual, conjugate-gradient
//! natural gradients, the infeasible-case recovery step, backtracking line
//! search, and learned cost shaping. An exact tabular evaluator checks the
//! performance-difference bounds these updates rely on, and point-mass
//! Circle and Gather tasks exercise the full sampled pipeline against TRPO,
//! primal-dual, and fixed-penalty baselines.

pub mod algorithms;
pub mod config;
pub mod env;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod lqclp;
pub mod natural_gradient;
pub mod optim;
pub mod policy;
pub mod shaping;
pub mod solve;
pub mod tabular;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
