//! Tabular MDP planning and evaluation from a generative model.
//!
//! The crate covers the full pipeline: exact tabular solvers
//! ([`solver`]), a seeded generative-model simulator ([`sampling`]),
//! reward-perturbed planning on the empirical model ([`perturb`]),
//! instance-dependent evaluation-error bounds and their diagnostics
//! ([`bounds`]), state-action-absorbing constructions ([`absorbing`]),
//! Monte-Carlo certification of perturbation tie-breaking ([`tiebreak`]),
//! hard structural checks ([`verify`]), and an experiment harness with
//! scaling-law fits ([`sweep`]).
//!
//! All randomness flows through counter-based keyed streams ([`rng`]), so
//! every simulation, sweep, and certification is reproducible bit for bit
//! and independent of evaluation order or thread count.

pub mod absorbing;
pub mod bounds;
pub mod error;
pub mod families;
pub mod perturb;
pub mod rng;
pub mod sampling;
pub mod solver;
pub mod sweep;
pub mod tiebreak;
pub mod types;
pub mod verify;

pub use error::{Error, Result};
pub use families::{generate_mdp, MdpFamily};
pub use perturb::{
    end_to_end, perturb_rewards, perturbation_scale, plan_perturbed, required_sample_size,
    MethodChoice, PerturbationConfig, PlanOutcome, PlannerConfig,
};
pub use sampling::{empirical_mdp, sample_empirical_kernel, total_sample_size, EmpiricalModel};
pub use solver::{
    bellman_optimality_step, evaluate_policy_exact, greedy_policy, policy_matrices, solve_optimal,
    solve_optimal_oracle, variance_of_value, Method, Resolvent, SolveOutcome,
};
pub use types::{Policy, PolicyMatrices, QVector, TabularMdp, ValueVector};
