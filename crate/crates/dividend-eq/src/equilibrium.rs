//! Equilibrium solver under pseudo-exponential discounting.
//!
//! The equilibrium value function splits into two single-rate components
//! `V = omega V1 + (1 - omega) V2`, each an exponential sum on the three
//! policy regions with its own characteristic roots. The thresholds solve
//! the weighted derivative conditions `V'(x1) = phi`, `V'(x2) = 1`; regime
//! classification is by explicit scalar conditions, with a damped 2-D Newton
//! iteration (and a nested bracketed fallback) for the inject/wait/pay case.
//! Every accepted root must pass a concavity/monotonicity scan.

use thiserror::Error;

use crate::benchmark::{self, compute_thetas, BenchmarkError, Deriv, ThetaSet};
use crate::model::{DiscountSpec, FeedbackPolicy, ModelParams, StrategyCase};
use crate::numerics::{
    solve_bracketed, solve_newton2d, BracketedRootProblem, LinearError, Newton2dProblem,
};
use crate::smoothfit::{self, RateCoeffs};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriumError {
    #[error("thresholds must satisfy 0 <= x1 <= x2, got x1 = {x1}, x2 = {x2}")]
    InvalidThresholds { x1: f64, x2: f64 },
    #[error("coefficient routes disagree beyond tolerance (relative gap {gap:.3e})")]
    InternalInconsistency { gap: f64 },
    #[error("no equilibrium threshold root found; attempts: {}", .trail.join("; "))]
    RootNotFound { trail: Vec<String> },
    #[error("threshold root rejected by the shape scan: {detail}")]
    ValidityScanFailed { detail: String },
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error(transparent)]
    Linear(#[from] LinearError),
}

/// Roots and region coefficients attached to one discount rate, together
/// with the relative disagreement between the dense-solve coefficients
/// (stored here) and the closed-form cross-check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBlock {
    pub rho: f64,
    pub thetas: ThetaSet,
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub b3: f64,
    pub oracle_gap: f64,
}

impl RateBlock {
    fn coeffs(&self) -> RateCoeffs {
        RateCoeffs {
            a1: self.a1,
            b1: self.b1,
            a2: self.a2,
            b2: self.b2,
            b3: self.b3,
        }
    }
}

/// Which component of the equilibrium value to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Weighted,
    V1,
    V2,
}

/// Solver diagnostics kept on the solution: the threshold-equation
/// residuals actually attained and the worst coefficient-oracle gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub residual_x1: f64,
    pub residual_x2: f64,
    pub oracle_gap: f64,
}

/// Solved equilibrium problem: regime, thresholds, per-rate blocks, and
/// diagnostics. Immutable; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub case: StrategyCase,
    pub x1: f64,
    pub x2: f64,
    pub omega: f64,
    pub blocks: [RateBlock; 2],
    pub params: ModelParams,
    pub diagnostics: Diagnostics,
}

impl EquilibriumSolution {
    /// The feedback policy induced by the solved thresholds.
    pub fn policy(&self) -> FeedbackPolicy {
        FeedbackPolicy {
            x1: self.x1,
            x2: self.x2,
            l_bar: self.params.l_bar,
            r_bar: self.params.r_bar,
        }
    }

    /// The uniform upper bound `omega l_bar/rho1 + (1-omega) l_bar/rho2`,
    /// attained in the limit of large surplus.
    pub fn value_bound(&self) -> f64 {
        self.omega * self.params.l_bar / self.blocks[0].rho
            + (1.0 - self.omega) * self.params.l_bar / self.blocks[1].rho
    }
}

/// Characteristic roots for component rate `rho_i`; same contract as the
/// single-rate solver.
pub fn rate_thetas(params: &ModelParams, rho_i: f64) -> ThetaSet {
    compute_thetas(params, rho_i)
}

fn build_block(
    params: &ModelParams,
    rho: f64,
    x1: f64,
    x2: f64,
) -> Result<RateBlock, EquilibriumError> {
    let th = compute_thetas(params, rho);
    let solved = smoothfit::linear_solve_coeffs(params, rho, &th, x1, x2)?;
    let closed = smoothfit::closed_form_coeffs(params, rho, &th, x1, x2);
    let gap = smoothfit::coeff_gap(&solved, &closed, x1, x2);
    if !(gap <= benchmark::ORACLE_GAP_LIMIT) {
        return Err(EquilibriumError::InternalInconsistency { gap });
    }
    Ok(RateBlock {
        rho,
        thetas: th,
        a1: solved.a1,
        b1: solved.b1,
        a2: solved.a2,
        b2: solved.b2,
        b3: solved.b3,
        oracle_gap: gap,
    })
}

/// Smooth-fit coefficients for both rates at the given threshold pair.
/// Production values come from the equilibrated dense solve; the closed
/// forms are evaluated alongside and the relative gap is recorded per block.
pub fn coefficients_at(
    params: &ModelParams,
    discount: &DiscountSpec,
    x1: f64,
    x2: f64,
) -> Result<[RateBlock; 2], EquilibriumError> {
    if x1.is_nan() || x2.is_nan() || x1 < 0.0 || x2 < x1 {
        return Err(EquilibriumError::InvalidThresholds { x1, x2 });
    }
    let (_, rho1, rho2) = discount.mixture();
    Ok([
        build_block(params, rho1, x1, x2)?,
        build_block(params, rho2, x1, x2)?,
    ])
}

// Weighted derivative through the middle-region exponential sum, which is
// exactly the form the threshold equations are written in. Valid at any x
// because the coefficients analytically continue outside [x1, x2).
fn weighted_middle_derivative(blocks: &[RateBlock; 2], omega: f64, x: f64) -> f64 {
    let part = |b: &RateBlock| {
        b.a2 * b.thetas.theta3 * (b.thetas.theta3 * x).exp()
            + b.b2 * b.thetas.theta4 * (b.thetas.theta4 * x).exp()
    };
    omega * part(&blocks[0]) + (1.0 - omega) * part(&blocks[1])
}

/// The threshold-equation residuals `(V'(x1) - phi, V'(x2) - 1)` evaluated
/// with the middle-region formulas at the coefficients for `(x1, x2)`.
pub fn threshold_residual(
    params: &ModelParams,
    discount: &DiscountSpec,
    x1: f64,
    x2: f64,
) -> Result<(f64, f64), EquilibriumError> {
    let blocks = coefficients_at(params, discount, x1, x2)?;
    let (omega, _, _) = discount.mixture();
    Ok((
        weighted_middle_derivative(&blocks, omega, x1) - params.phi,
        weighted_middle_derivative(&blocks, omega, x2) - 1.0,
    ))
}

// Residual evaluation for the root searches; NaN on any internal failure so
// the damped iterations reject the step.
fn residual_unchecked(params: &ModelParams, omega: f64, rho1: f64, rho2: f64, x1: f64, x2: f64) -> (f64, f64) {
    if !(x1 > 0.0) || !(x2 >= x1) {
        return (f64::NAN, f64::NAN);
    }
    let b1 = match build_block(params, rho1, x1, x2) {
        Ok(b) => b,
        Err(_) => return (f64::NAN, f64::NAN),
    };
    let b2 = match build_block(params, rho2, x1, x2) {
        Ok(b) => b,
        Err(_) => return (f64::NAN, f64::NAN),
    };
    let blocks = [b1, b2];
    (
        weighted_middle_derivative(&blocks, omega, x1) - params.phi,
        weighted_middle_derivative(&blocks, omega, x2) - 1.0,
    )
}

/// Piecewise evaluation of the solved equilibrium value (or one component)
/// and its derivatives. Region membership is `[0, x1)`, `[x1, x2)`,
/// `[x2, inf)` with the right-hand formula at both thresholds.
pub fn eval_v(sol: &EquilibriumSolution, x: f64, order: Deriv, component: Component) -> f64 {
    debug_assert!(x >= 0.0);
    let one = |b: &RateBlock| {
        smoothfit::eval_rate(&sol.params, b.rho, &b.thetas, &b.coeffs(), sol.x1, sol.x2, x, order)
    };
    match component {
        Component::V1 => one(&sol.blocks[0]),
        Component::V2 => one(&sol.blocks[1]),
        Component::Weighted => sol.omega * one(&sol.blocks[0]) + (1.0 - sol.omega) * one(&sol.blocks[1]),
    }
}

/// Residual of the region ODE in weighted form:
/// `sigma^2/2 V'' + (mu - l + r) V' + (l - phi r) - (omega rho1 V1 + (1-omega) rho2 V2)`,
/// the simplified extended system with its expectation term in closed form.
pub fn hjb_residual(sol: &EquilibriumSolution, x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let (l, r) = sol.policy().action(x);
    let p = &sol.params;
    let dv = eval_v(sol, x, Deriv::First, Component::Weighted);
    let ddv = eval_v(sol, x, Deriv::Second, Component::Weighted);
    let v1 = eval_v(sol, x, Deriv::Value, Component::V1);
    let v2 = eval_v(sol, x, Deriv::Value, Component::V2);
    let expectation = sol.omega * sol.blocks[0].rho * v1 + (1.0 - sol.omega) * sol.blocks[1].rho * v2;
    0.5 * p.sigma * p.sigma * ddv + (p.mu - l + r) * dv + (l - p.phi * r) - expectation
}

/// How much any alternative corner control improves on the region's control
/// inside the HJB supremum; non-positive (up to rounding) when the policy
/// attains the supremum.
pub fn supremum_slack(sol: &EquilibriumSolution, x: f64) -> f64 {
    let p = &sol.params;
    let dv = eval_v(sol, x, Deriv::First, Component::Weighted);
    let hamiltonian = |l: f64, r: f64| (p.mu - l + r) * dv + (l - p.phi * r);
    let (lc, rc) = sol.policy().action(x);
    let attained = hamiltonian(lc, rc);
    let corners = [
        (0.0, 0.0),
        (p.l_bar, 0.0),
        (0.0, p.r_bar),
        (p.l_bar, p.r_bar),
    ];
    corners
        .iter()
        .map(|&(l, r)| hamiltonian(l, r) - attained)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// The auxiliary two-time value `g` of the extended system in closed form:
/// `omega e^{-rho1 lag} V1(x) + (1-omega) e^{-rho2 lag} V2(x)`, where `lag`
/// is the elapsed time since the evaluation standpoint. `lag = 0` recovers
/// the equilibrium value itself.
pub fn auxiliary_g(sol: &EquilibriumSolution, x: f64, lag: f64) -> f64 {
    debug_assert!(lag >= 0.0);
    let v1 = eval_v(sol, x, Deriv::Value, Component::V1);
    let v2 = eval_v(sol, x, Deriv::Value, Component::V2);
    sol.omega * (-sol.blocks[0].rho * lag).exp() * v1
        + (1.0 - sol.omega) * (-sol.blocks[1].rho * lag).exp() * v2
}

fn assemble(
    params: &ModelParams,
    omega: f64,
    rho1: f64,
    rho2: f64,
    case: StrategyCase,
    x1: f64,
    x2: f64,
) -> Result<EquilibriumSolution, EquilibriumError> {
    let blocks = [
        build_block(params, rho1, x1, x2)?,
        build_block(params, rho2, x1, x2)?,
    ];
    let gap = blocks[0].oracle_gap.max(blocks[1].oracle_gap);
    let (r1, r2) = match case {
        StrategyCase::AlwaysPay => (0.0, 0.0),
        StrategyCase::TwoRegion => (
            0.0,
            weighted_middle_derivative(&blocks, omega, x2) - 1.0,
        ),
        StrategyCase::ThreeRegion => (
            weighted_middle_derivative(&blocks, omega, x1) - params.phi,
            weighted_middle_derivative(&blocks, omega, x2) - 1.0,
        ),
    };
    Ok(EquilibriumSolution {
        case,
        x1,
        x2,
        omega,
        blocks,
        params: *params,
        diagnostics: Diagnostics {
            residual_x1: r1,
            residual_x2: r2,
            oracle_gap: gap,
        },
    })
}

// Shape scan on a candidate solution: V(0) = 0, V increasing and concave,
// derivative trapped in the per-region bands, value below its uniform bound.
fn validity_scan(sol: &EquilibriumSolution) -> Result<(), String> {
    let p = &sol.params;
    let bound = sol.value_bound();
    let at_zero = eval_v(sol, 0.0, Deriv::Value, Component::Weighted);
    if at_zero.abs() > 1e-9 {
        return Err(format!("V(0) = {at_zero}"));
    }
    let hi = sol.x2 + 20.0 / sol.blocks[0].thetas.theta5.abs();
    let n = 1024;
    for k in 1..=n {
        let x = hi * k as f64 / n as f64;
        let v = eval_v(sol, x, Deriv::Value, Component::Weighted);
        let dv = eval_v(sol, x, Deriv::First, Component::Weighted);
        let ddv = eval_v(sol, x, Deriv::Second, Component::Weighted);
        if !(dv > 0.0) {
            return Err(format!("V'({x}) = {dv} not positive"));
        }
        if !(ddv <= 1e-10) {
            return Err(format!("V''({x}) = {ddv} not concave"));
        }
        if v > bound + 1e-9 * bound.max(1.0) {
            return Err(format!("V({x}) = {v} above bound {bound}"));
        }
        let band_ok = if x < sol.x1 {
            dv > p.phi - 1e-7
        } else if x < sol.x2 {
            dv > 1.0 - 1e-7 && dv <= p.phi + 1e-7
        } else {
            dv <= 1.0 + 1e-7
        };
        if !band_ok {
            return Err(format!("V'({x}) = {dv} outside its region band"));
        }
    }
    Ok(())
}

// Bracketed solve of the pay-threshold equation with x1 = 0. Returns the
// threshold or a trail line describing the failed bracket.
fn solve_pay_threshold_x1_zero(
    params: &ModelParams,
    omega: f64,
    rho1: f64,
    rho2: f64,
    x_max: f64,
    trail: &mut Vec<String>,
) -> Result<f64, EquilibriumError> {
    let g = |x2: f64| {
        if x2 <= 0.0 {
            return f64::NAN;
        }
        match (build_block(params, rho1, 0.0, x2), build_block(params, rho2, 0.0, x2)) {
            (Ok(b1), Ok(b2)) => weighted_middle_derivative(&[b1, b2], omega, x2) - 1.0,
            _ => f64::NAN,
        }
    };
    let mut lo = 1e-9;
    while !(g(lo) > 0.0) && lo > 1e-15 {
        lo /= 100.0;
    }
    if !(g(lo) > 0.0) {
        // the root sits below any representable bracket; the threshold is
        // indistinguishable from zero
        return Ok(lo);
    }
    let mut hi = x_max / 50.0;
    let cap = x_max * 1024.0;
    while g(hi) > 0.0 {
        if hi >= cap {
            trail.push(format!("pay-threshold bracket exhausted at hi = {hi}"));
            return Err(EquilibriumError::RootNotFound { trail: trail.clone() });
        }
        hi = (hi * 2.0).min(cap);
    }
    let pb = BracketedRootProblem::new(g, lo, hi);
    solve_bracketed(&pb).map_err(|e| {
        trail.push(format!("pay-threshold solve failed on [{lo}, {hi}]: {e}"));
        EquilibriumError::RootNotFound { trail: trail.clone() }
    })
}

// Single-unknown collapsed solve used when phi = 1: the two threshold
// equations coincide, so find t with V'(t) = 1 at x1 = x2 = t.
fn solve_collapsed_threshold(
    params: &ModelParams,
    omega: f64,
    rho1: f64,
    rho2: f64,
    x2_zero: f64,
    x_max: f64,
    trail: &mut Vec<String>,
) -> Result<f64, EquilibriumError> {
    let g = |t: f64| {
        let (_, r2) = residual_unchecked(params, omega, rho1, rho2, t, t);
        r2
    };
    let lo = 1e-9;
    if !(g(lo) > 0.0) {
        trail.push(format!("collapsed solve: residual at lo = {} is {}", lo, g(lo)));
        return Err(EquilibriumError::RootNotFound { trail: trail.clone() });
    }
    let mut hi = x2_zero.max(lo * 2.0);
    let cap = x_max * 1024.0;
    while g(hi) > 0.0 {
        if hi >= cap {
            trail.push(format!("collapsed bracket exhausted at hi = {hi}"));
            return Err(EquilibriumError::RootNotFound { trail: trail.clone() });
        }
        hi = (hi * 2.0).min(cap);
    }
    let pb = BracketedRootProblem::new(g, lo, hi);
    solve_bracketed(&pb).map_err(|e| {
        trail.push(format!("collapsed solve failed on [{lo}, {hi}]: {e}"));
        EquilibriumError::RootNotFound { trail: trail.clone() }
    })
}

// Nested fallback for the full two-threshold system: an outer bracketed
// solve on x1 of the injection residual, with the pay threshold re-solved
// for every x1 by an inner bracketed solve on [x1, x_max].
fn solve_nested(
    params: &ModelParams,
    omega: f64,
    rho1: f64,
    rho2: f64,
    x2_zero: f64,
    x_max: f64,
    trail: &mut Vec<String>,
) -> Result<(f64, f64), EquilibriumError> {
    let inner = |x1: f64| -> Option<f64> {
        let g = |x2: f64| residual_unchecked(params, omega, rho1, rho2, x1, x2).1;
        if !(g(x1) >= 0.0) {
            return None; // derivative already below 1 at the collapse point
        }
        let mut hi = (2.0 * x2_zero).max(x1 * 2.0).max(1e-6);
        let cap = x_max * 1024.0;
        while g(hi) > 0.0 {
            if hi >= cap {
                return None;
            }
            hi = (hi * 2.0).min(cap);
        }
        let pb = BracketedRootProblem::new(g, x1, hi);
        solve_bracketed(&pb).ok()
    };
    let outer = |x1: f64| -> f64 {
        match inner(x1) {
            Some(x2) => residual_unchecked(params, omega, rho1, rho2, x1, x2).0,
            None => f64::NAN,
        }
    };

    // scan for a sign change of the outer residual on (0, x2_zero]
    let n = 64;
    let mut prev: Option<(f64, f64)> = None;
    for k in 1..=n {
        let x1 = x2_zero * k as f64 / n as f64;
        let r = outer(x1);
        if !r.is_finite() {
            prev = None;
            continue;
        }
        if let Some((x_prev, r_prev)) = prev {
            if r_prev * r <= 0.0 {
                let pb = BracketedRootProblem::new(outer, x_prev, x1);
                if let Ok(x1_root) = solve_bracketed(&pb) {
                    if let Some(x2_root) = inner(x1_root) {
                        return Ok((x1_root, x2_root));
                    }
                }
            }
        }
        prev = Some((x1, r));
    }
    trail.push(format!(
        "nested scan found no injection-residual sign change on (0, {x2_zero}]"
    ));
    Err(EquilibriumError::RootNotFound { trail: trail.clone() })
}

// Full classification for a genuinely two-rate mixture.
fn solve_pseudo(
    params: &ModelParams,
    omega: f64,
    rho1: f64,
    rho2: f64,
) -> Result<EquilibriumSolution, EquilibriumError> {
    let th1 = compute_thetas(params, rho1);
    let th2 = compute_thetas(params, rho2);
    let mut trail: Vec<String> = Vec::new();

    // always-pay condition on the weighted tail exponentials
    let q = omega * th1.theta5 * params.l_bar / rho1
        + (1.0 - omega) * th2.theta5 * params.l_bar / rho2
        + 1.0;
    if q >= 0.0 {
        return assemble(params, omega, rho1, rho2, StrategyCase::AlwaysPay, 0.0, 0.0);
    }

    // pay threshold with no injection region
    let x_max = 50.0 * (params.sigma * params.sigma).max(params.mu + params.l_bar + params.r_bar)
        / rho1;
    let x2_zero = solve_pay_threshold_x1_zero(params, omega, rho1, rho2, x_max, &mut trail)?;

    // derivative at the origin of the two-region candidate decides whether
    // injection ever pays
    let blocks0 = [
        build_block(params, rho1, 0.0, x2_zero)?,
        build_block(params, rho2, 0.0, x2_zero)?,
    ];
    let dv_origin = weighted_middle_derivative(&blocks0, omega, 0.0);
    if dv_origin <= params.phi {
        return assemble(params, omega, rho1, rho2, StrategyCase::TwoRegion, 0.0, x2_zero);
    }

    if params.phi == 1.0 {
        let t = solve_collapsed_threshold(params, omega, rho1, rho2, x2_zero, x_max, &mut trail)?;
        let sol = assemble(params, omega, rho1, rho2, StrategyCase::ThreeRegion, t, t)?;
        return match validity_scan(&sol) {
            Ok(()) => Ok(sol),
            Err(detail) => Err(EquilibriumError::ValidityScanFailed { detail }),
        };
    }

    // damped Newton from the two-region candidate, nested brackets on failure
    let residual = |x1: f64, x2: f64| residual_unchecked(params, omega, rho1, rho2, x1, x2);
    let newton = Newton2dProblem::new(residual, (x2_zero / 2.0, x2_zero))
        .with_domain(|x1, x2| x1 > 0.0 && x1 <= x2 && x2 <= x_max);
    let mut candidate = match solve_newton2d(&newton) {
        Ok((x1, x2)) => Some((x1, x2)),
        Err(e) => {
            trail.push(format!("newton from ({}, {}) failed: {e}", x2_zero / 2.0, x2_zero));
            None
        }
    };
    if candidate.is_none() {
        candidate = Some(solve_nested(params, omega, rho1, rho2, x2_zero, x_max, &mut trail)?);
    }
    let (x1, x2) = candidate.expect("candidate populated above");

    let (r1, r2) = residual(x1, x2);
    if !(x1 > 0.0 && x1 <= x2 && r1.abs() <= 1e-9 && r2.abs() <= 1e-9) {
        trail.push(format!(
            "candidate ({x1}, {x2}) rejected: residuals ({r1}, {r2})"
        ));
        return Err(EquilibriumError::RootNotFound { trail });
    }
    let sol = assemble(params, omega, rho1, rho2, StrategyCase::ThreeRegion, x1, x2)?;
    match validity_scan(&sol) {
        Ok(()) => Ok(sol),
        Err(detail) => {
            // a root that fails the shape scan is not an equilibrium; retry
            // on the remaining brackets before giving up
            trail.push(format!("newton root ({x1}, {x2}) failed scan: {detail}"));
            let (x1f, x2f) = solve_nested(params, omega, rho1, rho2, x2_zero, x_max, &mut trail)?;
            if (x1f - x1).abs() <= 1e-9 && (x2f - x2).abs() <= 1e-9 {
                return Err(EquilibriumError::ValidityScanFailed { detail });
            }
            let sol2 = assemble(params, omega, rho1, rho2, StrategyCase::ThreeRegion, x1f, x2f)?;
            validity_scan(&sol2)
                .map_err(|detail| EquilibriumError::ValidityScanFailed { detail })?;
            Ok(sol2)
        }
    }
}

/// Solves the equilibrium problem. Degenerate kernels (exponential, weight 0
/// or 1, equal rates) delegate to the single-rate solver and re-wrap its
/// answer; genuine mixtures run the full classification.
pub fn solve_equilibrium(
    params: &ModelParams,
    discount: &DiscountSpec,
) -> Result<EquilibriumSolution, EquilibriumError> {
    let (omega, rho1, rho2) = discount.mixture();
    if let Some(rho) = discount.as_exponential() {
        let bench = benchmark::solve_benchmark(params, rho)?;
        return assemble(params, omega, rho1, rho2, bench.case, bench.x_r, bench.x_l);
    }
    solve_pseudo(params, omega, rho1, rho2)
}

/// Full two-rate classification without the degenerate-kernel delegation;
/// used to cross-check the generic path against the single-rate solver.
#[doc(hidden)]
pub fn solve_equilibrium_generic(
    params: &ModelParams,
    omega: f64,
    rho1: f64,
    rho2: f64,
) -> Result<EquilibriumSolution, EquilibriumError> {
    solve_pseudo(params, omega, rho1, rho2)
}
