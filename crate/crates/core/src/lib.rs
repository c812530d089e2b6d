//! Linear contextual bandits robust to adversarial reward corruption and
//! heavy-tailed noise, with an O(1)-per-round online mirror descent
//! estimator, baselines, a simulated environment, and an experiment harness.
//!
//! Modules, bottom-up:
//! - [`linalg`]: SPD state with a maintained inverse, ellipsoidal projection.
//! - [`loss`]: Huber / pseudo-Huber losses and the round-loss gradient.
//! - [`estimator`]: schedules (`kappa`, `tau0`, `beta_t`, `sigma_t`, `w_t`, `tau_t`) and the OMD step.
//! - [`policy`]: the robust agent plus OFUL, Hvt-UCB and a full re-solve baseline.
//! - [`env`]: instance sampling, noise models, the sign-flip adversary, regret.
//! - [`harness`], [`config`], [`output`], [`svg`]: seeded runs, aggregation, CSV/JSON/SVG.

pub mod config;
pub mod env;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod loss;
pub mod output;
pub mod policy;
pub mod svg;

pub use config::{ExperimentConfig, ParamMode, ScheduleOverrides};
pub use error::{Error, Result};
pub use estimator::{EstimatorState, ScheduleParams};
pub use harness::{
    run_single, run_suite, run_suite_with, Execution, RoundRecord, RunResult, Suite, Summary,
};
pub use linalg::{Metric, SpdState, Vector};
pub use policy::{build_policy, Policy, PolicyKind};
