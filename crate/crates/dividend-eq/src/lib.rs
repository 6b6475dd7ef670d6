//! Closed-form solvers and a Monte Carlo oracle for dividend and
//! capital-injection policies of a diffusion surplus process.
//!
//! The surplus of an insurer follows a drifted Brownian motion controlled by
//! a bounded dividend rate and a bounded, proportionally costly capital
//! injection rate; cash flows stop at ruin. Under exponential discounting
//! the optimal policy is a two-threshold feedback rule solved in
//! [`benchmark`]. Under pseudo-exponential discounting (a two-rate mixture)
//! the problem is time-inconsistent; [`equilibrium`] solves for the weak
//! equilibrium policy and its value function. [`mc`] estimates the same
//! objective by simulation and checks the equilibrium property by
//! perturbation, independently of the closed forms. [`cli`] exposes
//! solve/eval/sweep/simulate commands over JSON configs.
//!
//! See the `examples/` directory for one runnable example per capability.

pub mod benchmark;
pub mod cli;
pub mod equilibrium;
pub mod mc;
pub mod model;
pub mod numerics;
mod smoothfit;

pub use benchmark::{compute_thetas, eval_vc, solve_benchmark, BenchmarkSolution, Deriv, ThetaSet};
pub use equilibrium::{
    auxiliary_g, coefficients_at, eval_v, hjb_residual, solve_equilibrium, supremum_slack,
    threshold_residual, Component, EquilibriumSolution, RateBlock,
};
pub use mc::{perturbation_gain, simulate_payoff, EstimateReport, SimConfig};
pub use model::{
    DiscountSpec, FeedbackPolicy, ModelParams, ParamError, ParamErrors, StrategyCase, Validation,
};
