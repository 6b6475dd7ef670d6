//! Smooth-fit coefficient machinery for one discount rate.
//!
//! The piecewise value function attached to a single rate `rho` is an
//! exponential sum on each of the three policy regions. Its coefficients are
//! pinned by the zero boundary value and by value/derivative continuity at
//! the two thresholds. Two independent routes compute them: an equilibrated
//! dense solve of the pasting system (the production path) and the
//! transcribed closed forms (retained as a cross-check; they mix exponential
//! terms of very different magnitudes and are only trusted at moderate
//! thresholds).

use crate::benchmark::ThetaSet;
use crate::model::ModelParams;
use crate::numerics::{solve_dense, LinearError};

/// Region coefficients for one discount rate:
/// `-phi*r_bar/rho + a1 e^{t1 x} + b1 e^{t2 x}` below `x1`,
/// `a2 e^{t3 x} + b2 e^{t4 x}` on `[x1, x2)`,
/// `l_bar/rho + b3 e^{t5 x}` from `x2` on.
///
/// Coefficients of empty regions are stored as zero and never evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct RateCoeffs {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub b3: f64,
}

/// Derivative order for piecewise evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deriv {
    Value,
    First,
    Second,
}

pub(crate) fn linear_solve_coeffs(
    params: &ModelParams,
    rho: f64,
    th: &ThetaSet,
    x1: f64,
    x2: f64,
) -> Result<RateCoeffs, LinearError> {
    let (t1, t2, t3, t4, t5) = th.as_tuple();
    let lr = params.l_bar / rho;
    let pr = params.phi * params.r_bar / rho;

    if x2 == 0.0 {
        // always-pay: only the dividend region exists
        return Ok(RateCoeffs {
            b3: -lr,
            ..RateCoeffs::default()
        });
    }
    if x1 == 0.0 {
        // wait/pay: zero value at the origin plus smooth fit at x2
        #[rustfmt::skip]
        let a = [
            1.0,                 1.0,                 0.0,
            (t3 * x2).exp(),     (t4 * x2).exp(),     -(t5 * x2).exp(),
            t3 * (t3 * x2).exp(), t4 * (t4 * x2).exp(), -t5 * (t5 * x2).exp(),
        ];
        let b = [0.0, lr, 0.0];
        let x = solve_dense(&a, &b, 3)?;
        // enforce the zero boundary row exactly so V(0) evaluates to 0
        return Ok(RateCoeffs {
            a2: x[0],
            b2: -x[0],
            b3: x[2],
            ..RateCoeffs::default()
        });
    }

    // full three-region pasting system
    let e11 = (t1 * x1).exp();
    let e21 = (t2 * x1).exp();
    let e31 = (t3 * x1).exp();
    let e41 = (t4 * x1).exp();
    let e32 = (t3 * x2).exp();
    let e42 = (t4 * x2).exp();
    let e52 = (t5 * x2).exp();
    #[rustfmt::skip]
    let a = [
        1.0,      1.0,      0.0,       0.0,       0.0,
        e11,      e21,      -e31,      -e41,      0.0,
        t1 * e11, t2 * e21, -t3 * e31, -t4 * e41, 0.0,
        0.0,      0.0,      e32,       e42,       -e52,
        0.0,      0.0,      t3 * e32,  t4 * e42,  -t5 * e52,
    ];
    let b = [pr, pr, 0.0, lr, 0.0];
    let x = solve_dense(&a, &b, 5)?;
    // enforce the zero boundary row exactly so V(0) evaluates to 0
    Ok(RateCoeffs {
        a1: x[0],
        b1: pr - x[0],
        a2: x[2],
        b2: x[3],
        b3: x[4],
    })
}

pub(crate) fn closed_form_coeffs(
    params: &ModelParams,
    rho: f64,
    th: &ThetaSet,
    x1: f64,
    x2: f64,
) -> RateCoeffs {
    let (t1, t2, t3, t4, t5) = th.as_tuple();
    let lr = params.l_bar / rho;

    if x2 == 0.0 {
        return RateCoeffs {
            b3: -lr,
            ..RateCoeffs::default()
        };
    }
    if x1 == 0.0 {
        let denom = (t5 - t4) * (t4 * x2).exp() + (t3 - t5) * (t3 * x2).exp();
        let a2 = -t5 / denom * lr;
        let b3 =
            -(t3 * (t3 * x2).exp() - t4 * (t4 * x2).exp()) / denom * (-t5 * x2).exp() * lr;
        return RateCoeffs {
            a2,
            b2: -a2,
            b3,
            ..RateCoeffs::default()
        };
    }

    let l = params.l_bar;
    let pr = params.phi * params.r_bar;

    let c1 = t5 * (t3 - t4) * ((t3 + t4) * x1).exp();
    let c2 = t5 * ((t1 - t4) * ((t1 + t4) * x1).exp() + (t4 - t2) * ((t2 + t4) * x1).exp());
    let c3 = c1;
    let c4 = t5 * ((t1 - t3) * ((t1 + t3) * x1).exp() + (t3 - t2) * ((t2 + t3) * x1).exp());
    let c5 = t3 * (t1 - t4) * ((t1 + t4) * x1 + t3 * x2).exp()
        + t4 * (t3 - t1) * ((t1 + t3) * x1 + t4 * x2).exp()
        + t3 * (t4 - t2) * ((t2 + t4) * x1 + t3 * x2).exp()
        + t4 * (t2 - t3) * ((t2 + t3) * x1 + t4 * x2).exp();

    let d1 = t3 * (t5 - t4) * (t3 * x1 + t4 * x2).exp()
        + t4 * (t3 - t5) * (t4 * x1 + t3 * x2).exp()
        + (t3 - t2) * (t4 - t5) * ((t2 + t3) * x1 + t4 * x2).exp()
        + (t2 - t4) * (t3 - t5) * ((t2 + t4) * x1 + t3 * x2).exp();
    let d2 = t1 * (t5 - t4) * (t1 * x1 + t4 * x2).exp()
        + t2 * (t4 - t5) * (t2 * x1 + t4 * x2).exp()
        + (t1 - t2) * (t4 - t5) * ((t1 + t2) * x1 + t4 * x2).exp();
    let d3 = t3 * (t5 - t4) * (t3 * x1 + t4 * x2).exp()
        + t4 * (t3 - t5) * (t4 * x1 + t3 * x2).exp()
        + (t3 - t1) * (t4 - t5) * ((t1 + t3) * x1 + t4 * x2).exp()
        + (t1 - t4) * (t3 - t5) * ((t1 + t4) * x1 + t3 * x2).exp();
    let d4 = t1 * (t5 - t3) * (t1 * x1 + t3 * x2).exp()
        + t2 * (t3 - t5) * (t2 * x1 + t3 * x2).exp()
        + (t1 - t2) * (t3 - t5) * ((t1 + t2) * x1 + t3 * x2).exp();
    let d5 = t1 * (t3 - t4) * (t1 * x1 + (t3 + t4) * x2).exp()
        + t2 * (t4 - t3) * (t2 * x1 + (t3 + t4) * x2).exp()
        + (t1 - t2) * (t4 - t3) * ((t1 + t2) * x1 + (t3 + t4) * x2).exp();

    let e = (t3 - t1) * (t4 - t5) * ((t1 + t3) * x1 + t4 * x2).exp()
        + (t1 - t4) * (t3 - t5) * ((t1 + t4) * x1 + t3 * x2).exp()
        + (t2 - t3) * (t4 - t5) * ((t2 + t3) * x1 + t4 * x2).exp()
        + (t4 - t2) * (t3 - t5) * ((t2 + t4) * x1 + t3 * x2).exp();

    let den = rho * e;
    RateCoeffs {
        a1: -(c1 * l + d1 * pr) / den,
        b1: (c3 * l + d3 * pr) / den,
        a2: -(c2 * l + d2 * pr) / den,
        b2: (c4 * l + d4 * pr) / den,
        b3: -(-t5 * x2).exp() * (c5 * l + d5 * pr) / den,
    }
}

/// Largest per-coefficient disagreement, scaled by magnitude with an
/// absolute floor of 1. Only the coefficients of non-empty regions count.
pub(crate) fn coeff_gap(u: &RateCoeffs, v: &RateCoeffs, x1: f64, x2: f64) -> f64 {
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
    let mut gap = rel(u.b3, v.b3);
    if x2 > 0.0 {
        gap = gap.max(rel(u.a2, v.a2)).max(rel(u.b2, v.b2));
    }
    if x1 > 0.0 {
        gap = gap.max(rel(u.a1, v.a1)).max(rel(u.b1, v.b1));
    }
    gap
}

/// Piecewise evaluation for one rate. Region membership follows the policy
/// conventions: `[0, x1)`, `[x1, x2)`, `[x2, inf)`, with the right-hand
/// formula at both thresholds.
pub(crate) fn eval_rate(
    params: &ModelParams,
    rho: f64,
    th: &ThetaSet,
    c: &RateCoeffs,
    x1: f64,
    x2: f64,
    x: f64,
    order: Deriv,
) -> f64 {
    let (t1, t2, t3, t4, t5) = th.as_tuple();
    let term = |coef: f64, t: f64| -> f64 {
        let e = coef * (t * x).exp();
        match order {
            Deriv::Value => e,
            Deriv::First => t * e,
            Deriv::Second => t * t * e,
        }
    };
    if x < x1 {
        let constant = match order {
            Deriv::Value => -params.phi * params.r_bar / rho,
            _ => 0.0,
        };
        constant + term(c.a1, t1) + term(c.b1, t2)
    } else if x < x2 {
        term(c.a2, t3) + term(c.b2, t4)
    } else {
        let constant = match order {
            Deriv::Value => params.l_bar / rho,
            _ => 0.0,
        };
        constant + term(c.b3, t5)
    }
}
