//! JSON-config command front end: solve, eval (value-function grid), sweep
//! (parameter scans), and simulate (Monte Carlo cross-check).
//!
//! One JSON document configures a run; unknown keys are rejected and all
//! numbers must be finite. Results go to stdout (or `--output`) as JSON or
//! CSV. Exit codes: 0 success, 1 configuration error, 2 numerical failure.

use std::fs;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{self, Component, EquilibriumError, EquilibriumSolution, RateBlock};
use crate::mc::{self, SimConfig};
use crate::model::{DiscountSpec, ModelParams, Validation};
use crate::smoothfit::Deriv;
use crate::ThetaSet;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mu: f64,
    pub sigma: f64,
    pub l_bar: f64,
    pub r_bar: f64,
    pub phi: f64,
    pub discount: DiscountConfig,
    /// Admits `phi = 1` (the zero-cost boundary study).
    #[serde(default)]
    pub relaxed: bool,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub sim: Option<SimSection>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum DiscountConfig {
    #[serde(rename = "exponential")]
    Exponential { rho: f64 },
    #[serde(rename = "pseudo")]
    Pseudo { omega: f64, rho1: f64, rho2: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub param: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    pub x_ref: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Defaults to the horizon making the truncated tail mass below 1e-4.
    #[serde(default)]
    pub horizon: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub bridge_correction: bool,
    pub x0: f64,
    /// Optional threshold overrides; the solved policy is used otherwise.
    #[serde(default)]
    pub x1: Option<f64>,
    #[serde(default)]
    pub x2: Option<f64>,
}

fn default_dt() -> f64 {
    1e-3
}

/// Failure modes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Exit 1: malformed config, invalid parameters, IO trouble.
    Config(String),
    /// Exit 2: the solver failed; carries the structured error document.
    Solver(ErrorDoc),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(_) => 2,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorDoc {
    pub error: ErrorBody,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trail: Vec<String>,
}

fn solver_error(err: EquilibriumError) -> CliError {
    let kind = match &err {
        EquilibriumError::RootNotFound { .. } => "root_not_found",
        EquilibriumError::ValidityScanFailed { .. } => "validity_scan_failed",
        EquilibriumError::InternalInconsistency { .. } => "internal_inconsistency",
        EquilibriumError::InvalidThresholds { .. } => "invalid_thresholds",
        EquilibriumError::Benchmark(_) => "benchmark_failure",
        EquilibriumError::Linear(_) => "singular_system",
    };
    let trail = match &err {
        EquilibriumError::RootNotFound { trail } => trail.clone(),
        _ => Vec::new(),
    };
    CliError::Solver(ErrorDoc {
        error: ErrorBody {
            kind: kind.to_string(),
            message: err.to_string(),
            trail,
        },
    })
}

fn require_finite(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("field {name} must be finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        for (name, v) in [
            ("mu", cfg.mu),
            ("sigma", cfg.sigma),
            ("l_bar", cfg.l_bar),
            ("r_bar", cfg.r_bar),
            ("phi", cfg.phi),
        ] {
            require_finite(name, v)?;
        }
        match &cfg.discount {
            DiscountConfig::Exponential { rho } => require_finite("discount.rho", *rho)?,
            DiscountConfig::Pseudo { omega, rho1, rho2 } => {
                require_finite("discount.omega", *omega)?;
                require_finite("discount.rho1", *rho1)?;
                require_finite("discount.rho2", *rho2)?;
            }
        }
        if let Some(g) = &cfg.grid {
            require_finite("grid.x_min", g.x_min)?;
            require_finite("grid.x_max", g.x_max)?;
        }
        if let Some(s) = &cfg.sweep {
            require_finite("sweep.from", s.from)?;
            require_finite("sweep.to", s.to)?;
            require_finite("sweep.x_ref", s.x_ref)?;
        }
        if let Some(s) = &cfg.sim {
            require_finite("sim.dt", s.dt)?;
            if let Some(h) = s.horizon {
                require_finite("sim.horizon", h)?;
            }
            require_finite("sim.x0", s.x0)?;
        }
        Ok(cfg)
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        let mode = if self.relaxed {
            Validation::UnitCostAllowed
        } else {
            Validation::Strict
        };
        ModelParams::validate(self.mu, self.sigma, self.l_bar, self.r_bar, self.phi, mode)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn discount_spec(&self) -> Result<DiscountSpec, CliError> {
        match self.discount {
            DiscountConfig::Exponential { rho } => {
                DiscountSpec::exponential(rho).map_err(|e| CliError::Config(e.to_string()))
            }
            DiscountConfig::Pseudo { omega, rho1, rho2 } => {
                DiscountSpec::pseudo_exponential(omega, rho1, rho2)
                    .map_err(|e| CliError::Config(e.to_string()))
            }
        }
    }
}

// ---- solve ----------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct SolveDoc {
    pub case: String,
    pub x1: f64,
    pub x2: f64,
    pub omega: f64,
    pub params: ParamsDoc,
    pub blocks: [BlockDoc; 2],
    pub diagnostics: DiagnosticsDoc,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ParamsDoc {
    pub mu: f64,
    pub sigma: f64,
    pub l_bar: f64,
    pub r_bar: f64,
    pub phi: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BlockDoc {
    pub rho: f64,
    pub thetas: [f64; 5],
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub b3: f64,
    pub oracle_gap: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DiagnosticsDoc {
    pub residuals: [f64; 2],
    pub oracle_gap: f64,
}

impl SolveDoc {
    pub fn from_solution(sol: &EquilibriumSolution) -> Self {
        let block = |b: &RateBlock| BlockDoc {
            rho: b.rho,
            thetas: [
                b.thetas.theta1,
                b.thetas.theta2,
                b.thetas.theta3,
                b.thetas.theta4,
                b.thetas.theta5,
            ],
            a1: b.a1,
            b1: b.b1,
            a2: b.a2,
            b2: b.b2,
            b3: b.b3,
            oracle_gap: b.oracle_gap,
        };
        SolveDoc {
            case: sol.case.as_str().to_string(),
            x1: sol.x1,
            x2: sol.x2,
            omega: sol.omega,
            params: ParamsDoc {
                mu: sol.params.mu,
                sigma: sol.params.sigma,
                l_bar: sol.params.l_bar,
                r_bar: sol.params.r_bar,
                phi: sol.params.phi,
            },
            blocks: [block(&sol.blocks[0]), block(&sol.blocks[1])],
            diagnostics: DiagnosticsDoc {
                residuals: [sol.diagnostics.residual_x1, sol.diagnostics.residual_x2],
                oracle_gap: sol.diagnostics.oracle_gap,
            },
        }
    }

    /// Rebuilds an evaluable solution from a parsed solve document.
    pub fn to_solution(&self) -> Result<EquilibriumSolution, CliError> {
        let case = match self.case.as_str() {
            "three_region" => crate::StrategyCase::ThreeRegion,
            "two_region" => crate::StrategyCase::TwoRegion,
            "always_pay" => crate::StrategyCase::AlwaysPay,
            other => return Err(CliError::Config(format!("unknown case tag {other}"))),
        };
        let params = ModelParams::validate(
            self.params.mu,
            self.params.sigma,
            self.params.l_bar,
            self.params.r_bar,
            self.params.phi,
            Validation::UnitCostAllowed,
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        let block = |b: &BlockDoc| RateBlock {
            rho: b.rho,
            thetas: ThetaSet {
                theta1: b.thetas[0],
                theta2: b.thetas[1],
                theta3: b.thetas[2],
                theta4: b.thetas[3],
                theta5: b.thetas[4],
            },
            a1: b.a1,
            b1: b.b1,
            a2: b.a2,
            b2: b.b2,
            b3: b.b3,
            oracle_gap: b.oracle_gap,
        };
        Ok(EquilibriumSolution {
            case,
            x1: self.x1,
            x2: self.x2,
            omega: self.omega,
            blocks: [block(&self.blocks[0]), block(&self.blocks[1])],
            params,
            diagnostics: equilibrium::Diagnostics {
                residual_x1: self.diagnostics.residuals[0],
                residual_x2: self.diagnostics.residuals[1],
                oracle_gap: self.diagnostics.oracle_gap,
            },
        })
    }
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<String, CliError> {
    let params = cfg.params()?;
    let discount = cfg.discount_spec()?;
    let sol = equilibrium::solve_equilibrium(&params, &discount).map_err(solver_error)?;
    let doc = SolveDoc::from_solution(&sol);
    Ok(serde_json::to_string_pretty(&doc).expect("serializable") + "\n")
}

// ---- eval -----------------------------------------------------------------

/// 12 significant digits, scientific notation.
fn fmt12(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.11e}")
    }
}

fn region_label(sol: &EquilibriumSolution, x: f64) -> &'static str {
    if x < sol.x1 {
        "inject"
    } else if x < sol.x2 {
        "wait"
    } else {
        "pay"
    }
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<String, CliError> {
    let grid = cfg
        .grid
        .as_ref()
        .ok_or_else(|| CliError::Config("eval requires a grid section".into()))?;
    if grid.n_points < 2 || !(grid.x_min >= 0.0) || !(grid.x_max > grid.x_min) {
        return Err(CliError::Config(
            "grid requires 0 <= x_min < x_max and n_points >= 2".into(),
        ));
    }
    let params = cfg.params()?;
    let discount = cfg.discount_spec()?;
    let sol = equilibrium::solve_equilibrium(&params, &discount).map_err(solver_error)?;

    let mut out = String::from("x,V,V1,V2,dV,region,l,r\n");
    let n = grid.n_points;
    for k in 0..n {
        let x = grid.x_min + (grid.x_max - grid.x_min) * k as f64 / (n - 1) as f64;
        let v = equilibrium::eval_v(&sol, x, Deriv::Value, Component::Weighted);
        let v1 = equilibrium::eval_v(&sol, x, Deriv::Value, Component::V1);
        let v2 = equilibrium::eval_v(&sol, x, Deriv::Value, Component::V2);
        let dv = equilibrium::eval_v(&sol, x, Deriv::First, Component::Weighted);
        let region = region_label(&sol, x);
        let (l, r) = sol.policy().action(x);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt12(x),
            fmt12(v),
            fmt12(v1),
            fmt12(v2),
            fmt12(dv),
            region,
            fmt12(l),
            fmt12(r)
        ));
    }
    Ok(out)
}

// ---- sweep ----------------------------------------------------------------

struct SweepPoint {
    params: Result<ModelParams, String>,
    discount: Result<DiscountSpec, String>,
}

fn sweep_point(cfg: &RunConfig, param: &str, value: f64) -> Result<SweepPoint, CliError> {
    let mode = if cfg.relaxed {
        Validation::UnitCostAllowed
    } else {
        Validation::Strict
    };
    let mut mu = cfg.mu;
    let mut sigma = cfg.sigma;
    let mut l_bar = cfg.l_bar;
    let mut r_bar = cfg.r_bar;
    let mut phi = cfg.phi;
    let mut discount = cfg.discount_spec()?;
    match param {
        "mu" => mu = value,
        "sigma" => sigma = value,
        "l_bar" => l_bar = value,
        "r_bar" => r_bar = value,
        "phi" => phi = value,
        "omega" => match cfg.discount {
            DiscountConfig::Pseudo { rho1, rho2, .. } => {
                discount = DiscountSpec::pseudo_exponential(value, rho1, rho2)
                    .map_err(|e| CliError::Config(e.to_string()))?;
            }
            _ => {
                return Err(CliError::Config(
                    "sweep over omega requires a pseudo discount".into(),
                ))
            }
        },
        "rho_pair_meanfixed" => match cfg.discount {
            // swept value is rho2 - rho1 holding omega rho1 + (1-omega) rho2
            // at the configured mean
            DiscountConfig::Pseudo { omega, rho1, rho2 } => {
                let mean = omega * rho1 + (1.0 - omega) * rho2;
                let r1 = mean - (1.0 - omega) * value;
                let r2 = mean + omega * value;
                match DiscountSpec::pseudo_exponential(omega, r1, r2) {
                    Ok(d) => discount = d,
                    Err(e) => {
                        return Ok(SweepPoint {
                            params: Err(e.to_string()),
                            discount: Err(e.to_string()),
                        })
                    }
                }
            }
            _ => {
                return Err(CliError::Config(
                    "sweep over rho_pair_meanfixed requires a pseudo discount".into(),
                ))
            }
        },
        other => {
            return Err(CliError::Config(format!(
                "unknown sweep parameter {other}; expected one of \
                 l_bar, r_bar, phi, omega, mu, sigma, rho_pair_meanfixed"
            )))
        }
    }
    Ok(SweepPoint {
        params: ModelParams::validate(mu, sigma, l_bar, r_bar, phi, mode)
            .map_err(|e| e.to_string()),
        discount: Ok(discount),
    })
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<String, CliError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep requires a sweep section".into()))?;
    if sweep.steps < 1 {
        return Err(CliError::Config("sweep.steps must be at least 1".into()));
    }
    let values: Vec<f64> = (0..sweep.steps)
        .map(|k| {
            if sweep.steps == 1 {
                sweep.from
            } else {
                sweep.from + (sweep.to - sweep.from) * k as f64 / (sweep.steps - 1) as f64
            }
        })
        .collect();
    // validate the parameter name once before spawning the scan
    sweep_point(cfg, &sweep.param, values[0])?;

    let x_ref = sweep.x_ref;
    let rows: Vec<String> = values
        .par_iter()
        .map(|&value| {
            let error_row =
                |v: f64| format!("{},error,nan,nan,nan\n", fmt12(v));
            let point = match sweep_point(cfg, &sweep.param, value) {
                Ok(p) => p,
                Err(_) => return error_row(value),
            };
            let (params, discount) = match (point.params, point.discount) {
                (Ok(p), Ok(d)) => (p, d),
                _ => return error_row(value),
            };
            match equilibrium::solve_equilibrium(&params, &discount) {
                Ok(sol) => {
                    let v_ref =
                        equilibrium::eval_v(&sol, x_ref, Deriv::Value, Component::Weighted);
                    format!(
                        "{},{},{},{},{}\n",
                        fmt12(value),
                        sol.case.as_str(),
                        fmt12(sol.x1),
                        fmt12(sol.x2),
                        fmt12(v_ref)
                    )
                }
                Err(_) => error_row(value),
            }
        })
        .collect();

    let mut out = String::from("param,case,x1,x2,V_at_x_ref\n");
    for row in rows {
        out.push_str(&row);
    }
    Ok(out)
}

// ---- simulate ---------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct SimulateDoc {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub ruin_fraction: f64,
    pub component_means: Option<(f64, f64)>,
    pub truncation_bound: f64,
    pub closed_form: f64,
    pub z_score: f64,
    pub case: String,
    pub x1: f64,
    pub x2: f64,
    pub seed: u64,
}

pub fn cmd_simulate(cfg: &RunConfig, seed_override: Option<u64>) -> Result<String, CliError> {
    let sim = cfg
        .sim
        .as_ref()
        .ok_or_else(|| CliError::Config("simulate requires a sim section".into()))?;
    if !(sim.x0 > 0.0) {
        return Err(CliError::Config(format!(
            "sim.x0 must be positive, got {}",
            sim.x0
        )));
    }
    if !(sim.dt > 0.0) || sim.n_paths == 0 {
        return Err(CliError::Config(
            "sim requires dt > 0 and n_paths >= 1".into(),
        ));
    }
    let params = cfg.params()?;
    let discount = cfg.discount_spec()?;
    let sol = equilibrium::solve_equilibrium(&params, &discount).map_err(solver_error)?;

    let mut policy = sol.policy();
    if let (Some(x1), Some(x2)) = (sim.x1, sim.x2) {
        policy = crate::FeedbackPolicy::new(x1, x2, params.l_bar, params.r_bar)
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let horizon = sim
        .horizon
        .unwrap_or_else(|| SimConfig::default_horizon(&discount, params.l_bar));
    if !(horizon >= sim.dt) {
        return Err(CliError::Config("sim.horizon must be at least dt".into()));
    }
    let seed = seed_override.unwrap_or(sim.seed);
    let mut mc_cfg = SimConfig::new(sim.dt, horizon, sim.n_paths, seed);
    mc_cfg.bridge_correction = sim.bridge_correction;

    let report = mc::simulate_payoff(&params, &policy, &discount, sim.x0, &mc_cfg);
    let closed_form = equilibrium::eval_v(&sol, sim.x0, Deriv::Value, Component::Weighted);
    let z_score = if report.std_error > 0.0 {
        (report.mean - closed_form) / report.std_error
    } else {
        0.0
    };
    let doc = SimulateDoc {
        mean: report.mean,
        std_error: report.std_error,
        n_paths: report.n_paths,
        ruin_fraction: report.ruin_fraction,
        component_means: report.component_means,
        truncation_bound: report.truncation_bound,
        closed_form,
        z_score,
        case: sol.case.as_str().to_string(),
        x1: policy.x1,
        x2: policy.x2,
        seed,
    };
    Ok(serde_json::to_string_pretty(&doc).expect("serializable") + "\n")
}

// ---- driver -----------------------------------------------------------------

/// Runs one command against a config file and writes the result to `output`
/// (stdout when `None`). Returns the process exit code.
pub fn run(command: &str, config_path: &str, output: Option<&str>, seed: Option<u64>) -> i32 {
    let result = (|| -> Result<String, CliError> {
        let text = fs::read_to_string(config_path)
            .map_err(|e| CliError::Config(format!("cannot read {config_path}: {e}")))?;
        let cfg = RunConfig::from_json(&text)?;
        match command {
            "solve" => cmd_solve(&cfg),
            "eval" => cmd_eval(&cfg),
            "sweep" => cmd_sweep(&cfg),
            "simulate" => cmd_simulate(&cfg, seed),
            other => Err(CliError::Config(format!(
                "unknown command {other}; expected solve, eval, sweep, or simulate"
            ))),
        }
    })();

    match result {
        Ok(text) => match write_output(output, &text) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        },
        Err(CliError::Config(message)) => {
            eprintln!("error: {message}");
            1
        }
        Err(CliError::Solver(doc)) => {
            let text = serde_json::to_string_pretty(&doc).expect("serializable") + "\n";
            if write_output(output, &text).is_err() {
                eprintln!("error: failed to write solver error document");
            }
            2
        }
    }
}

fn write_output(output: Option<&str>, text: &str) -> io::Result<()> {
    match output {
        None => io::stdout().write_all(text.as_bytes()),
        Some(path) => fs::write(path, text),
    }
}
