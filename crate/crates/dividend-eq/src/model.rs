//! Domain types shared by the solvers and the simulation oracle: model
//! parameters with validation, discount kernels, and threshold feedback
//! policies.
//!
//! All types are plain immutable values; they can be freely copied and
//! shared across threads.

use thiserror::Error;

/// Diffusion and control-bound parameters of the surplus model.
///
/// The surplus follows `dX = (mu - l + r) dt + sigma dW` with the dividend
/// rate `l` in `[0, l_bar]`, the injection rate `r` in `[0, r_bar]`, and a
/// proportional injection cost `phi` per unit injected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub mu: f64,
    pub sigma: f64,
    pub l_bar: f64,
    pub r_bar: f64,
    pub phi: f64,
}

/// A single violated parameter constraint.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ParamError {
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("mu must be positive, got {0}")]
    NonPositiveMu(f64),
    #[error("{name} must be positive, got {value}")]
    NonPositiveBound { name: &'static str, value: f64 },
    #[error("phi must exceed 1, got {0}")]
    CostNotAboveOne(f64),
}

/// Every constraint violated by a raw parameter record.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid model parameters: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ParamErrors(pub Vec<ParamError>);

/// Validation strictness for [`ModelParams`].
///
/// `Strict` enforces `phi > 1`. `UnitCostAllowed` additionally admits
/// `phi = 1`, the degenerate boundary where the injection and dividend
/// thresholds collapse to a single switching level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validation {
    Strict,
    UnitCostAllowed,
}

impl ModelParams {
    /// Validates a raw record under the strict contract (`phi > 1`).
    pub fn new(mu: f64, sigma: f64, l_bar: f64, r_bar: f64, phi: f64) -> Result<Self, ParamErrors> {
        Self::validate(mu, sigma, l_bar, r_bar, phi, Validation::Strict)
    }

    /// Validates a raw record, optionally admitting the zero-cost boundary
    /// `phi = 1`.
    pub fn validate(
        mu: f64,
        sigma: f64,
        l_bar: f64,
        r_bar: f64,
        phi: f64,
        mode: Validation,
    ) -> Result<Self, ParamErrors> {
        let mut errors = Vec::new();
        if !(sigma > 0.0) {
            errors.push(ParamError::NonPositiveSigma(sigma));
        }
        if !(mu > 0.0) {
            errors.push(ParamError::NonPositiveMu(mu));
        }
        if !(l_bar > 0.0) {
            errors.push(ParamError::NonPositiveBound {
                name: "l_bar",
                value: l_bar,
            });
        }
        if !(r_bar > 0.0) {
            errors.push(ParamError::NonPositiveBound {
                name: "r_bar",
                value: r_bar,
            });
        }
        let phi_ok = match mode {
            Validation::Strict => phi > 1.0,
            Validation::UnitCostAllowed => phi >= 1.0,
        };
        if !phi_ok {
            errors.push(ParamError::CostNotAboveOne(phi));
        }
        if errors.is_empty() {
            Ok(ModelParams {
                mu,
                sigma,
                l_bar,
                r_bar,
                phi,
            })
        } else {
            Err(ParamErrors(errors))
        }
    }
}

/// Invalid discount kernel description.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DiscountError {
    #[error("discount rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("omega must lie in [0, 1], got {0}")]
    WeightOutOfRange(f64),
    #[error("rates must satisfy rho1 <= rho2, got rho1 = {rho1}, rho2 = {rho2}")]
    RatesOutOfOrder { rho1: f64, rho2: f64 },
}

/// Discount kernel: a plain exponential `e^{-rho t}` or the two-rate mixture
/// `omega e^{-rho1 t} + (1 - omega) e^{-rho2 t}` with `0 < rho1 <= rho2`.
///
/// The mixture with `omega` equal to 0 or 1, or with `rho1 = rho2`, is a
/// plain exponential in disguise; [`DiscountSpec::as_exponential`] detects
/// those degenerate cases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiscountSpec {
    Exponential {
        rho: f64,
    },
    PseudoExponential {
        omega: f64,
        rho1: f64,
        rho2: f64,
    },
}

impl DiscountSpec {
    pub fn exponential(rho: f64) -> Result<Self, DiscountError> {
        if !(rho > 0.0) {
            return Err(DiscountError::NonPositiveRate(rho));
        }
        Ok(DiscountSpec::Exponential { rho })
    }

    pub fn pseudo_exponential(omega: f64, rho1: f64, rho2: f64) -> Result<Self, DiscountError> {
        if !(rho1 > 0.0) {
            return Err(DiscountError::NonPositiveRate(rho1));
        }
        if !(rho2 > 0.0) {
            return Err(DiscountError::NonPositiveRate(rho2));
        }
        if !(0.0..=1.0).contains(&omega) {
            return Err(DiscountError::WeightOutOfRange(omega));
        }
        if rho1 > rho2 {
            return Err(DiscountError::RatesOutOfOrder { rho1, rho2 });
        }
        Ok(DiscountSpec::PseudoExponential { omega, rho1, rho2 })
    }

    /// Discount factor at elapsed time `t >= 0`; equals 1 at `t = 0` and is
    /// strictly decreasing in `t`.
    pub fn discount_factor(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        match *self {
            DiscountSpec::Exponential { rho } => (-rho * t).exp(),
            DiscountSpec::PseudoExponential { omega, rho1, rho2 } => {
                omega * (-rho1 * t).exp() + (1.0 - omega) * (-rho2 * t).exp()
            }
        }
    }

    /// The `(omega, rho1, rho2)` view; an exponential kernel reads as
    /// `(1, rho, rho)`.
    pub fn mixture(&self) -> (f64, f64, f64) {
        match *self {
            DiscountSpec::Exponential { rho } => (1.0, rho, rho),
            DiscountSpec::PseudoExponential { omega, rho1, rho2 } => (omega, rho1, rho2),
        }
    }

    /// Returns the single effective rate when the kernel is exponential,
    /// either literally or through a degenerate mixture (`omega` at 0 or 1,
    /// or `rho1 = rho2`).
    pub fn as_exponential(&self) -> Option<f64> {
        match *self {
            DiscountSpec::Exponential { rho } => Some(rho),
            DiscountSpec::PseudoExponential { omega, rho1, rho2 } => {
                if omega == 1.0 || rho1 == rho2 {
                    Some(rho1)
                } else if omega == 0.0 {
                    Some(rho2)
                } else {
                    None
                }
            }
        }
    }
}

/// Invalid threshold pair for a feedback policy.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PolicyError {
    #[error("thresholds must satisfy 0 <= x1 <= x2, got x1 = {x1}, x2 = {x2}")]
    BadThresholds { x1: f64, x2: f64 },
    #[error("control bounds must be positive, got l_bar = {l_bar}, r_bar = {r_bar}")]
    BadBounds { l_bar: f64, r_bar: f64 },
}

/// Two-threshold feedback control: inject at the maximal rate below `x1`,
/// do nothing on `[x1, x2)`, pay dividends at the maximal rate from `x2` on.
///
/// `x1` belongs to the middle region and `x2` to the dividend region.
/// Infinite thresholds are admitted so that degenerate always-inject
/// policies can be expressed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackPolicy {
    pub x1: f64,
    pub x2: f64,
    pub l_bar: f64,
    pub r_bar: f64,
}

impl FeedbackPolicy {
    pub fn new(x1: f64, x2: f64, l_bar: f64, r_bar: f64) -> Result<Self, PolicyError> {
        if x1.is_nan() || x2.is_nan() || !(0.0 <= x1 && x1 <= x2) {
            return Err(PolicyError::BadThresholds { x1, x2 });
        }
        if !(l_bar > 0.0 && r_bar > 0.0) {
            return Err(PolicyError::BadBounds { l_bar, r_bar });
        }
        Ok(FeedbackPolicy {
            x1,
            x2,
            l_bar,
            r_bar,
        })
    }

    /// The `(dividend rate, injection rate)` applied at surplus `x > 0`.
    pub fn action(&self, x: f64) -> (f64, f64) {
        if x < self.x1 {
            (0.0, self.r_bar)
        } else if x < self.x2 {
            (0.0, 0.0)
        } else {
            (self.l_bar, 0.0)
        }
    }
}

/// Policy regime tag: three-region inject/wait/pay, two-region wait/pay with
/// `x1 = 0`, or always-pay with `x1 = x2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyCase {
    ThreeRegion,
    TwoRegion,
    AlwaysPay,
}

impl StrategyCase {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyCase::ThreeRegion => "three_region",
            StrategyCase::TwoRegion => "two_region",
            StrategyCase::AlwaysPay => "always_pay",
        }
    }

    /// Checks that the tag matches the threshold pair stored alongside it.
    pub fn is_consistent_with(&self, x1: f64, x2: f64) -> bool {
        match self {
            StrategyCase::ThreeRegion => 0.0 < x1 && x1 <= x2,
            StrategyCase::TwoRegion => x1 == 0.0 && x2 > 0.0,
            StrategyCase::AlwaysPay => x1 == 0.0 && x2 == 0.0,
        }
    }
}
