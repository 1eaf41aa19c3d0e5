use serde::Serialize;
use serde_json::{json, Value};

use crate::bangbang::{bang_bang_check, uniqueness_check, BangBangReport, BANG_BANG_TOL};
use crate::error::Result;
use crate::oracle::oracle_eps;
use crate::scenario::Model;
use crate::target::{solve_eps, SolveOptions};
use crate::time::{eps_curve, solve_tau, verify_inverse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub property: &'static str,
    pub status: Status,
    pub detail: String,
    pub metrics: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub scenario: String,
    pub eps_zero: Option<f64>,
    pub eps_terminal: f64,
    pub tau_star: Option<f64>,
    pub verdicts: Vec<Verdict>,
    pub passed: bool,
}

/// Artifacts from `verify` that are written beside the report.
pub struct VerifyRun {
    pub report: VerifyReport,
    pub bang_bang: Option<BangBangReport>,
    pub curve_rows: Vec<(f64, f64)>,
}

fn verdict(property: &'static str, ok: bool, detail: String, metrics: Value) -> Verdict {
    Verdict {
        property,
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
        metrics,
    }
}

fn skipped(property: &'static str, detail: impl Into<String>) -> Verdict {
    Verdict {
        property,
        status: Status::Skipped,
        detail: detail.into(),
        metrics: Value::Null,
    }
}

fn errored(property: &'static str, e: impl std::fmt::Display) -> Verdict {
    Verdict {
        property,
        status: Status::Error,
        detail: e.to_string(),
        metrics: Value::Null,
    }
}

fn settle(property: &'static str, r: Result<Verdict>) -> Verdict {
    r.unwrap_or_else(|e| errored(property, e))
}

fn oracle_agreement(model: &Model, opts: &SolveOptions) -> Result<Verdict> {
    let eps_t = model.eps_terminal();
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for frac in [0.0, 0.25, 0.5, 0.75] {
        let tau = frac * model.horizon();
        let dual = solve_eps(tau, model, opts)?.eps;
        let oracle = oracle_eps(tau, model)?.eps;
        let rel = (dual - oracle).abs() / oracle.max(1e-3 * eps_t);
        worst = worst.max(rel);
        rows.push(json!({ "tau": tau, "dual": dual, "oracle": oracle, "rel_diff": rel }));
    }
    Ok(verdict(
        "oracle_agreement",
        worst <= 1e-3,
        format!("max relative difference {worst:.3e} (tolerance 1e-3)"),
        json!({ "max_rel_diff": worst, "rows": rows }),
    ))
}

/// Runs every property check. Sub-check errors become `error` verdicts.
pub fn run_verify(model: &Model, opts: &SolveOptions, seed: u64, probes: usize) -> VerifyRun {
    let eps_t = model.eps_terminal();
    let mut verdicts = vec![settle("oracle_agreement", oracle_agreement(model, opts))];
    let zero_bound = model.bound().is_zero();

    let eps_zero = solve_eps(0.0, model, opts).map(|s| s.eps);
    let flat = eps_zero
        .as_ref()
        .map(|e0| eps_t - e0 <= 1e-9 * eps_t)
        .unwrap_or(false);
    let star = match &eps_zero {
        Ok(e0) if !flat => Some(solve_tau(0.5 * (e0 + eps_t), model, opts)),
        _ => None,
    };
    let tau_star = star.as_ref().and_then(|s| s.as_ref().ok()).map(|s| s.tau);

    let mut bang_bang = None;
    verdicts.push(if zero_bound {
        skipped("bang_bang", "bound is identically zero")
    } else {
        match (&eps_zero, &star) {
            (Err(e), _) => errored("bang_bang", e),
            (_, None) => skipped("bang_bang", "eps(tau) is flat: no interior target radius"),
            (_, Some(Err(e))) => errored("bang_bang", e),
            (_, Some(Ok(sol))) => {
                let r = bang_bang_check(sol, model);
                let v = match &r.skipped {
                    Some(why) => skipped("bang_bang", why.clone()),
                    None => verdict(
                        "bang_bang",
                        r.passes(BANG_BANG_TOL),
                        format!("max relative residual {:.3e} at tau = {:.6}", r.residual_max, r.tau),
                        json!({ "tau": r.tau, "residual_max": r.residual_max, "residual_median": r.residual_median }),
                    ),
                };
                bang_bang = Some(r);
                v
            }
        }
    });

    let uniq_tau = tau_star.unwrap_or(0.5 * model.horizon());
    let seeds = [seed, seed.wrapping_add(1), seed.wrapping_add(2)];
    verdicts.push(settle(
        "uniqueness",
        uniqueness_check(uniq_tau, model, &seeds, opts).map(|u| {
            let tol = 1e-3 * model.horizon() * model.bound().sup();
            verdict(
                "uniqueness",
                u.dual_gap <= tol,
                format!(
                    "max distance between dual runs {:.3e} (tolerance {tol:.3e})",
                    u.dual_gap
                ),
                serde_json::to_value(&u).unwrap_or(Value::Null),
            )
        }),
    ));

    let taus: Vec<f64> = (0..17).map(|i| model.horizon() * i as f64 / 17.0).collect();
    let mut curve_rows = Vec::new();
    match eps_curve(&taus, model, opts) {
        Ok(curve) => {
            curve_rows = curve.points.iter().map(|p| (p.tau, p.eps)).collect();
            let strict_ok = curve.strict_increases >= 15;
            let metrics = json!({
                "max_decrease": curve.max_decrease,
                "strict_increases": curve.strict_increases,
                "all_converged": curve.all_converged,
            });
            verdicts.push(if curve.degenerate {
                skipped("monotonicity", "curve is constant at eps_T (degenerate)")
            } else {
                verdict(
                    "monotonicity",
                    curve.all_converged && curve.monotone() && strict_ok,
                    format!(
                        "max decrease {:.3e}, {}/16 strict increases",
                        curve.max_decrease, curve.strict_increases
                    ),
                    metrics,
                )
            });
            verdicts.push(verdict(
                "lipschitz",
                curve.lipschitz_ok(),
                format!(
                    "max |d eps|/(C d tau) = {:.3e} with C = {:.4e} (bound 2)",
                    curve.max_slope_ratio, curve.lipschitz_constant
                ),
                json!({ "lipschitz_constant": curve.lipschitz_constant, "max_slope_ratio": curve.max_slope_ratio }),
            ));
        }
        Err(e) => {
            verdicts.push(errored("monotonicity", &e));
            verdicts.push(errored("lipschitz", e));
        }
    }

    verdicts.push(settle(
        "inverse",
        verify_inverse(model, probes, opts).map(|r| {
            if r.degenerate {
                return skipped("inverse", "eps(tau) is flat (degenerate)");
            }
            let ok =
                r.max_eps_residual <= 1e-3 * eps_t && r.max_tau_residual <= 1e-3 * model.horizon();
            verdict(
                "inverse",
                ok,
                format!(
                    "max |eps(tau(eps)) - eps| = {:.3e}, max |tau(eps(tau)) - tau| = {:.3e}",
                    r.max_eps_residual, r.max_tau_residual
                ),
                serde_json::to_value(&r).unwrap_or(Value::Null),
            )
        }),
    ));

    let passed = verdicts
        .iter()
        .all(|v| matches!(v.status, Status::Pass | Status::Skipped));
    VerifyRun {
        report: VerifyReport {
            scenario: model.scenario().name.clone(),
            eps_zero: eps_zero.ok(),
            eps_terminal: eps_t,
            tau_star,
            verdicts,
            passed,
        },
        bang_bang,
        curve_rows,
    }
}
