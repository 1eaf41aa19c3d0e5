//! Saturation `‖u*(t)‖ = M(t)` and uniqueness of optimal controls.

use rayon::prelude::*;
use serde::Serialize;

use crate::admissible::ControlProfile;
use crate::error::{Error, Result};
use crate::oracle::{self, OracleSolution};
use crate::scenario::Model;
use crate::target::{solve_eps, SolveOptions, TargetSolution};
use crate::time::TimeSolution;

/// Pass threshold on the relative saturation residual.
pub const BANG_BANG_TOL: f64 = 1e-3;

/// Anything that carries an optimal control started at some `τ`.
pub trait OptimalControl {
    fn control(&self) -> &ControlProfile;
    fn start(&self) -> f64;
    fn eps(&self) -> f64;
}

impl OptimalControl for TargetSolution {
    fn control(&self) -> &ControlProfile {
        &self.control
    }
    fn start(&self) -> f64 {
        self.tau
    }
    fn eps(&self) -> f64 {
        self.eps
    }
}

impl OptimalControl for TimeSolution {
    fn control(&self) -> &ControlProfile {
        &self.target.control
    }
    fn start(&self) -> f64 {
        self.tau
    }
    fn eps(&self) -> f64 {
        self.eps_at_tau
    }
}

impl OptimalControl for OracleSolution {
    fn control(&self) -> &ControlProfile {
        &self.control
    }
    fn start(&self) -> f64 {
        self.tau
    }
    fn eps(&self) -> f64 {
        self.eps
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepResidual {
    pub t: f64,
    pub norm: f64,
    pub bound: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BangBangReport {
    pub tau: f64,
    pub steps: Vec<StepResidual>,
    pub residual_max: f64,
    pub residual_median: f64,
    /// Why the check did not apply, if it did not.
    pub skipped: Option<String>,
    pub uniqueness_gap: Option<f64>,
}

impl BangBangReport {
    pub fn passes(&self, threshold: f64) -> bool {
        self.skipped.is_none() && self.residual_max <= threshold
    }

    pub fn passed(&self) -> bool {
        self.passes(BANG_BANG_TOL)
    }
}

/// Relative residuals `|‖u_i‖ − M(t_i)| / M(t_i)` on every step lying entirely
/// in `(τ, T)`; the step straddling `τ` is padded out.
pub fn bang_bang_check(solution: &impl OptimalControl, model: &Model) -> BangBangReport {
    let tau = solution.start();
    let skip = |why: &str| BangBangReport {
        tau,
        steps: Vec::new(),
        residual_max: 0.0,
        residual_median: 0.0,
        skipped: Some(why.to_string()),
        uniqueness_gap: None,
    };
    if model.bound().is_zero() {
        return skip("bound is identically zero");
    }
    if solution.eps() <= 1e-9 * model.eps_terminal() {
        return skip("eps(tau) = 0: target ball already reachable");
    }
    let u = solution.control();
    let grid = *u.grid();
    let steps: Vec<StepResidual> = (0..grid.steps())
        .filter(|&i| grid.step(i).0 >= tau)
        .filter_map(|i| {
            let t = grid.midpoint(i);
            let bound = model.bound().value_at(t);
            (bound > 0.0).then(|| {
                let norm = u.values()[i].norm();
                StepResidual {
                    t,
                    norm,
                    bound,
                    residual: (norm - bound).abs() / bound,
                }
            })
        })
        .collect();
    if steps.is_empty() {
        return skip("no control step lies inside (tau, T)");
    }
    let mut sorted: Vec<f64> = steps.iter().map(|s| s.residual).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    BangBangReport {
        tau,
        residual_max: sorted[n - 1],
        residual_median: median,
        steps,
        skipped: None,
        uniqueness_gap: None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub tau: f64,
    pub eps: f64,
    /// Largest pairwise distance between dual runs.
    pub dual_gap: f64,
    /// Largest distance between a dual run and the oracle optimum.
    pub oracle_gap: f64,
    pub gap: f64,
}

/// Solves at `tau` once per seed plus once with the oracle and measures how far
/// apart the optimal controls are in `L²(0,T; L²(Ω))`.
pub fn uniqueness_check(
    tau: f64,
    model: &Model,
    seeds: &[u64],
    opts: &SolveOptions,
) -> Result<UniquenessReport> {
    if seeds.len() < 2 {
        return Err(Error::invalid("uniqueness check needs at least two runs"));
    }
    let runs: Vec<TargetSolution> = seeds
        .par_iter()
        .map(|&s| solve_eps(tau, model, &opts.with_seed(s)))
        .collect::<Result<_>>()?;
    if runs.iter().any(|r| r.certificate.interior) {
        return Err(Error::invalid(format!(
            "eps({tau}) = 0: uniqueness of the touching point does not apply"
        )));
    }
    let mut dual_gap: f64 = 0.0;
    for (i, a) in runs.iter().enumerate() {
        for b in &runs[i + 1..] {
            dual_gap = dual_gap.max(a.control.distance(&b.control)?);
        }
    }
    let problem = oracle::transcribe(tau, model)?;
    let reference = oracle::solve_projected_gradient(&problem, &opts.oracle);
    if !reference.converged {
        return Err(Error::NotConverged {
            solver: "projected gradient",
            iterations: reference.iterations,
            residual: reference.gradient_mapping_norm,
            value: reference.eps,
        });
    }
    let mut oracle_gap: f64 = 0.0;
    for r in &runs {
        oracle_gap = oracle_gap.max(r.control.distance(&reference.control)?);
    }
    Ok(UniquenessReport {
        tau,
        eps: runs[0].eps,
        dual_gap,
        oracle_gap,
        gap: dual_gap.max(oracle_gap),
    })
}
