//! Optimal time `τ(ε)`, the `ε(τ)` curve and the inverse-map checks.

use rayon::prelude::*;
use serde::Serialize;

use crate::admissible::ControlProfile;
use crate::error::{Error, Result};
use crate::scenario::Model;
use crate::target::{solve_eps, AdjointQuadrature, SolveOptions, TargetSolution};

/// Right-end guard: `τ` never gets closer to `T` than `δ_min = 1e-6·T`.
pub const RIGHT_GUARD_REL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct TimeSolution {
    /// Requested ball radius.
    pub eps: f64,
    /// Left end of the final bracket.
    pub tau: f64,
    pub eps_at_tau: f64,
    /// `ε` at the right end of the final bracket; exceeds `eps` unless saturated.
    pub eps_right: f64,
    pub bracket_width: f64,
    /// `eps ≥ ε_T` (or within the guard of it): `τ` pinned at `T − δ_min`.
    pub saturated: bool,
    pub evaluations: usize,
    /// Optimal target solution at `tau`, which carries the optimal control.
    pub target: TargetSolution,
}

impl TimeSolution {
    pub fn control(&self) -> &ControlProfile {
        &self.target.control
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeRecord {
    pub eps: f64,
    pub tau: f64,
    pub eps_at_tau: f64,
    pub eps_right: f64,
    pub bracket_width: f64,
    pub saturated: bool,
    pub evaluations: usize,
    pub round_trip_residual: f64,
    pub control_norms: Vec<f64>,
}

impl TimeSolution {
    pub fn record(&self) -> TimeRecord {
        TimeRecord {
            eps: self.eps,
            tau: self.tau,
            eps_at_tau: self.eps_at_tau,
            eps_right: self.eps_right,
            bracket_width: self.bracket_width,
            saturated: self.saturated,
            evaluations: self.evaluations,
            round_trip_residual: (self.eps_at_tau - self.eps).abs(),
            control_norms: self.control().step_norms(),
        }
    }
}

/// Latest start time whose optimal target value is at most `eps`, by bisection
/// on the monotone predicate `ε(τ) ≤ eps`.
pub fn solve_tau(eps: f64, model: &Model, opts: &SolveOptions) -> Result<TimeSolution> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!(
            "target radius must be positive, got {eps}"
        )));
    }
    let horizon = model.horizon();
    let right = horizon * (1.0 - RIGHT_GUARD_REL);
    let eps_t = model.eps_terminal();
    let slack = 1e-12 * eps_t;
    let holds = |e: f64| e <= eps + slack;

    let mut evals: Vec<(f64, f64)> = Vec::new();
    let mut eval = |tau: f64| -> Result<TargetSolution> {
        let s = solve_eps(tau, model, opts)?;
        evals.push((tau, s.eps));
        Ok(s)
    };

    let saturated = |sol: TargetSolution, evaluations: usize| TimeSolution {
        eps,
        tau: sol.tau,
        eps_at_tau: sol.eps,
        eps_right: sol.eps,
        bracket_width: 0.0,
        saturated: true,
        evaluations,
        target: sol,
    };

    if eps >= eps_t {
        let sol = eval(right)?;
        return Ok(saturated(sol, 1));
    }
    let mut lo_sol = eval(0.0)?;
    if !holds(lo_sol.eps) {
        return Err(Error::Infeasible {
            eps,
            eps_zero: lo_sol.eps,
        });
    }
    let hi_sol = eval(right)?;
    if holds(hi_sol.eps) {
        return Ok(saturated(hi_sol, 2));
    }
    let (mut lo, mut hi, mut eps_hi) = (0.0, right, hi_sol.eps);
    while hi - lo > opts.tau_tol {
        let mid = 0.5 * (lo + hi);
        let s = eval(mid)?;
        if holds(s.eps) {
            lo = mid;
            lo_sol = s;
        } else {
            hi = mid;
            eps_hi = s.eps;
        }
    }
    check_monotone(&mut evals, eps_t)?;
    Ok(TimeSolution {
        eps,
        tau: lo,
        eps_at_tau: lo_sol.eps,
        eps_right: eps_hi,
        bracket_width: hi - lo,
        saturated: false,
        evaluations: evals.len(),
        target: lo_sol,
    })
}

fn check_monotone(evals: &mut [(f64, f64)], eps_t: f64) -> Result<()> {
    evals.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in evals.windows(2) {
        if w[1].1 < w[0].1 - 1e-9 * eps_t {
            return Err(Error::MonotonicityViolation {
                tau_low: w[0].0,
                eps_low: w[0].1,
                tau_high: w[1].0,
                eps_high: w[1].1,
            });
        }
    }
    Ok(())
}

/// `Ĉ = sup M · max_σ ‖G e^{−Λ(T−σ)}‖₂` over the quadrature nodes on `[0, T]`.
pub fn lipschitz_constant(model: &Model, opts: &SolveOptions) -> f64 {
    let quad = AdjointQuadrature::new(model, 0.0, opts.quad_order);
    let op_norm = quad
        .operators()
        .map(|op| {
            let sv = op.singular_values();
            sv.iter().copied().fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    model.bound().sup() * op_norm
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub tau: f64,
    pub eps: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsCurve {
    pub points: Vec<CurvePoint>,
    pub eps_terminal: f64,
    /// `max_i (ε_i − ε_{i+1})`, positive only if the curve ever decreases.
    pub max_decrease: f64,
    /// Successive differences above `1e-6·ε_T`.
    pub strict_increases: usize,
    pub lipschitz_constant: f64,
    /// `max_i |Δε_i| / (Ĉ Δτ_i)`.
    pub max_slope_ratio: f64,
    /// Curve constant at `ε_T` (e.g. `M ≡ 0`).
    pub degenerate: bool,
    pub all_converged: bool,
}

impl EpsCurve {
    pub fn differences(&self) -> Vec<f64> {
        self.points
            .windows(2)
            .map(|w| w[1].eps - w[0].eps)
            .collect()
    }

    pub fn monotone(&self) -> bool {
        self.max_decrease <= 1e-6 * self.eps_terminal
    }

    /// Empirical Lipschitz bound with factor-2 slack.
    pub fn lipschitz_ok(&self) -> bool {
        self.max_slope_ratio <= 2.0
    }
}

/// `ε(τ)` on an ascending grid in `[0, T)`, points solved in parallel.
/// Points whose ascent hits the iteration cap are kept with their last value
/// and `converged = false`.
pub fn eps_curve(taus: &[f64], model: &Model, opts: &SolveOptions) -> Result<EpsCurve> {
    if taus.is_empty() {
        return Err(Error::invalid("tau grid is empty"));
    }
    if taus.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("tau grid must be strictly ascending"));
    }
    if !(taus[0] >= 0.0 && *taus.last().unwrap() < model.horizon()) {
        return Err(Error::invalid(format!(
            "tau grid must lie in [0, {})",
            model.horizon()
        )));
    }
    let points: Vec<CurvePoint> = taus
        .par_iter()
        .map(|&tau| match solve_eps(tau, model, opts) {
            Ok(s) => Ok(CurvePoint {
                tau,
                eps: s.eps,
                converged: true,
                iterations: s.certificate.iterations,
            }),
            Err(Error::NotConverged {
                iterations, value, ..
            }) => Ok(CurvePoint {
                tau,
                eps: value.max(0.0),
                converged: false,
                iterations,
            }),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    Ok(analyze_curve(points, model, opts))
}

fn analyze_curve(points: Vec<CurvePoint>, model: &Model, opts: &SolveOptions) -> EpsCurve {
    let eps_t = model.eps_terminal();
    let c_hat = lipschitz_constant(model, opts);
    let mut max_decrease: f64 = 0.0;
    let mut strict = 0;
    let mut ratio: f64 = 0.0;
    for w in points.windows(2) {
        let d = w[1].eps - w[0].eps;
        max_decrease = max_decrease.max(-d);
        if d > 1e-6 * eps_t {
            strict += 1;
        }
        let dt = w[1].tau - w[0].tau;
        if d.abs() > 0.0 {
            ratio = ratio.max(if c_hat > 0.0 {
                d.abs() / (c_hat * dt)
            } else {
                f64::INFINITY
            });
        }
    }
    let degenerate = points
        .iter()
        .all(|p| (p.eps - eps_t).abs() <= 1e-12 * eps_t.max(f64::MIN_POSITIVE));
    let all_converged = points.iter().all(|p| p.converged);
    EpsCurve {
        points,
        eps_terminal: eps_t,
        max_decrease,
        strict_increases: strict,
        lipschitz_constant: c_hat,
        max_slope_ratio: ratio,
        degenerate,
        all_converged,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TauProbe {
    pub tau: f64,
    pub eps: f64,
    pub tau_back: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsProbe {
    pub eps: f64,
    pub tau: f64,
    pub eps_back: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InverseReport {
    pub eps_zero: f64,
    pub eps_terminal: f64,
    /// `ε(τ)` is flat, so the inverse identities say nothing.
    pub degenerate: bool,
    pub tau_probes: Vec<TauProbe>,
    pub eps_probes: Vec<EpsProbe>,
    pub max_tau_residual: f64,
    pub max_eps_residual: f64,
}

/// Round trips `τ → ε(τ) → τ(ε(τ))` at `τ_j = jT/n` and
/// `ε → τ(ε) → ε(τ(ε))` at evenly spaced `ε_j ∈ [ε(0), ε_T)`.
pub fn verify_inverse(
    model: &Model,
    n_probes: usize,
    opts: &SolveOptions,
) -> Result<InverseReport> {
    if n_probes == 0 {
        return Err(Error::invalid("need at least one probe"));
    }
    let eps_t = model.eps_terminal();
    let eps0 = solve_eps(0.0, model, opts)?.eps;
    let mut report = InverseReport {
        eps_zero: eps0,
        eps_terminal: eps_t,
        degenerate: eps_t - eps0 <= 1e-9 * eps_t,
        tau_probes: Vec::new(),
        eps_probes: Vec::new(),
        max_tau_residual: 0.0,
        max_eps_residual: 0.0,
    };
    if report.degenerate {
        return Ok(report);
    }

    let horizon = model.horizon();
    let taus: Vec<f64> = (0..n_probes)
        .map(|j| horizon * j as f64 / n_probes as f64)
        .collect();
    report.tau_probes = taus
        .par_iter()
        .map(|&tau| {
            let eps = solve_eps(tau, model, opts)?.eps;
            if eps == 0.0 {
                // ε(τ) = 0 on an initial interval; τ(0) is outside the map's domain.
                return Ok(TauProbe {
                    tau,
                    eps,
                    tau_back: tau,
                    residual: 0.0,
                });
            }
            let back = solve_tau(eps, model, opts)?;
            Ok(TauProbe {
                tau,
                eps,
                tau_back: back.tau,
                residual: (back.tau - tau).abs(),
            })
        })
        .collect::<Result<_>>()?;

    let (offset, denom) = if eps0 > 0.0 {
        (0, n_probes)
    } else {
        (1, n_probes + 1)
    };
    let targets: Vec<f64> = (0..n_probes)
        .map(|j| eps0 + (eps_t - eps0) * (j + offset) as f64 / denom as f64)
        .collect();
    report.eps_probes = targets
        .par_iter()
        .map(|&eps| {
            let back = solve_tau(eps, model, opts)?;
            Ok(EpsProbe {
                eps,
                tau: back.tau,
                eps_back: back.eps_at_tau,
                residual: (back.eps_at_tau - eps).abs(),
            })
        })
        .collect::<Result<_>>()?;

    report.max_tau_residual = report
        .tau_probes
        .iter()
        .map(|p| p.residual)
        .fold(0.0, f64::max);
    report.max_eps_residual = report
        .eps_probes
        .iter()
        .map(|p| p.residual)
        .fold(0.0, f64::max);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admissible::BoundProfile;
    use crate::scenario::Scenario;

    fn standard() -> Model {
        Model::new(&Scenario::preset("standard").unwrap()).unwrap()
    }

    #[test]
    fn nonpositive_eps_rejected() {
        let m = standard();
        assert!(solve_tau(0.0, &m, &m.solve_options()).is_err());
        assert!(solve_tau(-1.0, &m, &m.solve_options()).is_err());
    }

    #[test]
    fn below_eps_zero_is_infeasible() {
        let m = standard();
        let err = solve_tau(0.1, &m, &m.solve_options()).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }), "{err}");
    }

    #[test]
    fn at_or_above_eps_terminal_saturates() {
        let m = standard();
        let s = solve_tau(m.eps_terminal(), &m, &m.solve_options()).unwrap();
        assert!(s.saturated);
        assert!((s.tau - m.horizon() * (1.0 - RIGHT_GUARD_REL)).abs() < 1e-15);
    }

    #[test]
    fn eps_zero_maps_to_tau_zero() {
        let m = standard();
        let opts = m.solve_options();
        let e0 = solve_eps(0.0, &m, &opts).unwrap().eps;
        let s = solve_tau(e0, &m, &opts).unwrap();
        assert!(s.tau <= opts.tau_tol);
    }

    #[test]
    fn near_terminal_bracket_certificate() {
        let m = standard();
        let opts = m.solve_options();
        let eps = m.eps_terminal() * (1.0 - 1e-3);
        let s = solve_tau(eps, &m, &opts).unwrap();
        assert!(!s.saturated);
        assert!(s.tau > 0.9 * m.horizon(), "tau = {}", s.tau);
        assert!(s.bracket_width <= opts.tau_tol);
        let left = solve_eps(s.tau, &m, &opts).unwrap().eps;
        let right = solve_eps(s.tau + s.bracket_width, &m, &opts).unwrap().eps;
        assert!(left <= eps && right > eps, "{left} {eps} {right}");
    }

    #[test]
    fn curve_edge_cases() {
        let m = standard();
        let opts = m.solve_options();
        let one = eps_curve(&[0.0], &m, &opts).unwrap();
        assert_eq!(one.points.len(), 1);
        assert_eq!(one.points[0].eps, solve_eps(0.0, &m, &opts).unwrap().eps);
        assert!(eps_curve(&[0.5, 0.2], &m, &opts).is_err());
        assert!(eps_curve(&[0.0, 1.0], &m, &opts).is_err());

        let zero = m
            .with_bound(BoundProfile::constant(1.0, 0.0).unwrap())
            .unwrap();
        let c = eps_curve(&[0.0, 0.3, 0.6, 0.9], &zero, &opts).unwrap();
        assert!(c.degenerate);
        assert!(c
            .points
            .iter()
            .all(|p| (p.eps - m.eps_terminal()).abs() <= 1e-12 * m.eps_terminal()));
    }

    #[test]
    fn zero_bound_inverse_is_degenerate() {
        let m = standard()
            .with_bound(BoundProfile::constant(1.0, 0.0).unwrap())
            .unwrap();
        let r = verify_inverse(&m, 3, &m.solve_options()).unwrap();
        assert!(r.degenerate);
        assert!(r.tau_probes.is_empty() && r.eps_probes.is_empty());
    }
}
