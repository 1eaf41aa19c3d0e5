//! Optimal target value `ε(τ)` through the support function of the reachable
//! set.
//!
//! For `0 ≤ τ < T` the reachable set `R(y0, τ, T)` is convex and its support
//! function is
//!
//! ```text
//! h(η) = ⟨e^{ΔT} y0, η⟩ + ∫_τ^T M(σ) ‖G e^{Δ(T−σ)} η‖ dσ .
//! ```
//!
//! The distance from the origin to `R` is `max(0, sup_{‖η‖≤1} J(η))` with
//! `J(η) = −h(η)`. `J` is concave and positively homogeneous, so its maximizer
//! `η*` lies on the unit sphere whenever `ε(τ) > 0`, and it equals
//! `−y*/‖y*‖` for the unique closest reachable point `y*`. The optimal control
//! follows by normalizing the backward adjoint:
//! `u*(σ) = M(σ) G e^{Δ(T−σ)} η* / ‖G e^{Δ(T−σ)} η*‖`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::admissible::ControlProfile;
use crate::error::{Error, Result};
use crate::oracle::{self, OracleOptions};
use crate::quadrature;
use crate::scenario::Model;
use crate::spectral::{solve_state, SpectralField};

/// Smallest admissible `‖G e^{Δ(T−t)} η*‖` when normalizing the adjoint.
pub const DENOMINATOR_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Stop when `‖P(η + g) − η‖` falls below this.
    pub pg_tol: f64,
    /// Stop when the best value moved less than `stall_tol·max(|J|, ε_T)`
    /// over the last `stall_window` iterations.
    pub stall_tol: f64,
    pub stall_window: usize,
    pub armijo: f64,
    /// Nonmonotone line-search memory.
    pub memory: usize,
    pub quad_order: usize,
    /// Random initial direction; `None` starts from `−e^{ΔT}y0/‖e^{ΔT}y0‖`.
    pub seed: Option<u64>,
    /// Bisection bracket width for the optimal time.
    pub tau_tol: f64,
    pub oracle: OracleOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 5000,
            pg_tol: 1e-8,
            stall_tol: 1e-10,
            stall_window: 20,
            armijo: 1e-4,
            memory: 10,
            quad_order: 8,
            seed: None,
            tau_tol: 1e-4,
            oracle: OracleOptions::default(),
        }
    }
}

impl SolveOptions {
    pub fn with_seed(&self, seed: u64) -> Self {
        SolveOptions {
            seed: Some(seed),
            ..self.clone()
        }
    }
}

/// Maximizer of the dual objective.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualCertificate {
    pub tau: f64,
    /// `η*`, the maximizer of `J`. It is also the separating direction:
    /// `⟨y, η*⟩ ≤ ⟨y*, η*⟩` for every reachable `y`.
    pub eta: SpectralField,
    pub dual_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `J(η*) ≤ 0`: the origin is (numerically) reachable, `ε(τ) = 0`.
    pub interior: bool,
    pub pg_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSolution {
    pub tau: f64,
    pub eps: f64,
    pub certificate: DualCertificate,
    pub control: ControlProfile,
    /// `y(T; χ_(τ,T) u*, y0)`.
    pub terminal: SpectralField,
}

/// JSON form of a [`TargetSolution`].
#[derive(Debug, Clone, Serialize)]
pub struct TargetRecord {
    pub tau: f64,
    pub eps: f64,
    pub dual_value: f64,
    pub eta: Vec<f64>,
    pub control_norms: Vec<f64>,
    pub terminal_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub interior: bool,
    pub pg_norm: f64,
}

impl TargetSolution {
    pub fn terminal_norm(&self) -> f64 {
        self.terminal.norm()
    }

    pub fn record(&self) -> TargetRecord {
        TargetRecord {
            tau: self.tau,
            eps: self.eps,
            dual_value: self.certificate.dual_value,
            eta: self.certificate.eta.as_slice().to_vec(),
            control_norms: self.control.step_norms(),
            terminal_norm: self.terminal_norm(),
            iterations: self.certificate.iterations,
            converged: self.certificate.converged,
            interior: self.certificate.interior,
            pg_norm: self.certificate.pg_norm,
        }
    }
}

struct AdjointNode {
    /// Quadrature weight times `M(σ)`.
    weight: f64,
    /// `G e^{−Λ(T−σ)}`.
    op: DMatrix<f64>,
}

/// Quadrature of `∫_τ^T M(σ) ‖G e^{Δ(T−σ)} η‖ dσ`, one Gauss rule per bound
/// piece clipped at `τ`, doubled on the piece ending at `T`.
pub(crate) struct AdjointQuadrature {
    nodes: Vec<AdjointNode>,
}

impl AdjointQuadrature {
    pub(crate) fn new(model: &Model, tau: f64, order: usize) -> AdjointQuadrature {
        let horizon = model.horizon();
        let gram = model.gram().matrix();
        let basis = model.basis();
        let mut nodes = Vec::new();
        for (a, b, m) in model.bound().pieces() {
            let a = a.max(tau);
            if b <= a || m == 0.0 {
                continue;
            }
            let q = if b >= horizon { 2 * order } else { order };
            for (sigma, w) in quadrature::mapped(q, a, b) {
                let decay = basis.decay(horizon - sigma);
                let mut op = gram.clone();
                for (mut col, d) in op.column_iter_mut().zip(decay.iter()) {
                    col *= *d;
                }
                nodes.push(AdjointNode { weight: w * m, op });
            }
        }
        AdjointQuadrature { nodes }
    }

    pub(crate) fn operators(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.nodes.iter().map(|n| &n.op)
    }

    fn integral(&self, eta: &DVector<f64>) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.weight * (&n.op * eta).norm())
            .sum()
    }

    /// Integral and its gradient `Σ w opᵀ op η / ‖op η‖` (zero where `op η = 0`).
    fn integral_with_gradient(&self, eta: &DVector<f64>) -> (f64, DVector<f64>) {
        let mut value = 0.0;
        let mut grad = DVector::zeros(eta.len());
        for n in &self.nodes {
            let z = &n.op * eta;
            let norm = z.norm();
            value += n.weight * norm;
            if norm > 0.0 {
                grad.gemv_tr(n.weight / norm, &n.op, &z, 1.0);
            }
        }
        (value, grad)
    }
}

fn check_tau(tau: f64, model: &Model) -> Result<()> {
    if !(tau >= 0.0 && tau < model.horizon()) {
        return Err(Error::invalid(format!(
            "start time must satisfy 0 <= tau < T = {}, got {tau}",
            model.horizon()
        )));
    }
    Ok(())
}

fn check_direction(eta: &SpectralField, model: &Model) -> Result<()> {
    if eta.len() != model.modes() {
        return Err(Error::invalid(format!(
            "direction has {} coefficients, model has {} modes",
            eta.len(),
            model.modes()
        )));
    }
    Ok(())
}

/// Integral part of the support function alone; positively homogeneous in `η`.
pub fn reachable_spread(eta: &SpectralField, tau: f64, model: &Model) -> Result<f64> {
    check_tau(tau, model)?;
    check_direction(eta, model)?;
    let quad = AdjointQuadrature::new(model, tau, model.tolerances().quad_order);
    Ok(quad.integral(eta.coeffs()))
}

/// Support function `h(η) = sup_{y ∈ R(y0,τ,T)} ⟨y, η⟩`.
pub fn support_reachable(eta: &SpectralField, tau: f64, model: &Model) -> Result<f64> {
    Ok(model.free_terminal().dot(eta) + reachable_spread(eta, tau, model)?)
}

/// `J(η) = −⟨e^{ΔT}y0, η⟩ − ∫_τ^T M(σ)‖G e^{Δ(T−σ)}η‖ dσ` on the unit ball.
pub fn dual_objective(eta: &SpectralField, tau: f64, model: &Model) -> Result<f64> {
    if eta.norm() > 1.0 + 1e-12 {
        return Err(Error::invalid(format!(
            "dual direction must satisfy |eta| <= 1, got {}",
            eta.norm()
        )));
    }
    Ok(-support_reachable(eta, tau, model)?)
}

fn project_ball(v: &mut DVector<f64>) {
    let n = v.norm();
    if n > 1.0 {
        *v /= n;
    }
}

struct Ascent {
    eta: DVector<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
    pg_norm: f64,
}

/// Spectral projected gradient ascent of `J` over the unit ball: Barzilai–Borwein
/// trial steps, nonmonotone Armijo backtracking, projection after each step.
fn maximize_dual(
    quad: &AdjointQuadrature,
    b: &DVector<f64>,
    start: DVector<f64>,
    opts: &SolveOptions,
) -> Ascent {
    let eval = |eta: &DVector<f64>| {
        let (v, g) = quad.integral_with_gradient(eta);
        (-b.dot(eta) - v, -b - g)
    };
    let scale = b.norm();
    let mut eta = start;
    project_ball(&mut eta);
    let (mut value, mut grad) = eval(&eta);
    let mut history = vec![value];
    let mut best = vec![value];
    let mut alpha = 1.0 / grad.norm().max(1e-300);
    let mut pg_norm = f64::INFINITY;

    for it in 0..opts.max_iters {
        let mut full = &eta + &grad;
        project_ball(&mut full);
        pg_norm = (&full - &eta).norm();
        if pg_norm < opts.pg_tol {
            return Ascent {
                eta,
                value,
                iterations: it,
                converged: true,
                pg_norm,
            };
        }
        if it >= opts.stall_window {
            let then = best[it - opts.stall_window];
            let now = best[it];
            if (now - then).abs() <= opts.stall_tol * now.abs().max(scale).max(f64::MIN_POSITIVE) {
                return Ascent {
                    eta,
                    value,
                    iterations: it,
                    converged: true,
                    pg_norm,
                };
            }
        }

        let mut trial = &eta + &grad * alpha;
        project_ball(&mut trial);
        let dir = trial - &eta;
        let slope = grad.dot(&dir);
        let reference = history
            .iter()
            .rev()
            .take(opts.memory)
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut t = 1.0;
        let (cand, cv, cg) = loop {
            let cand = &eta + &dir * t;
            let (cv, cg) = eval(&cand);
            if cv >= reference + opts.armijo * t * slope || t < 1e-20 {
                break (cand, cv, cg);
            }
            t *= 0.5;
        };

        let s = &cand - &eta;
        let y = &cg - &grad;
        let sy = s.dot(&y);
        alpha = if sy < 0.0 {
            (s.norm_squared() / -sy).clamp(1e-10, 1e10)
        } else {
            1e10
        };

        eta = cand;
        value = cv;
        grad = cg;
        history.push(value);
        best.push(best[it].max(value));
    }
    Ascent {
        eta,
        value,
        iterations: opts.max_iters,
        converged: false,
        pg_norm,
    }
}

fn initial_direction(model: &Model, seed: Option<u64>) -> DVector<f64> {
    let k = model.modes();
    match seed {
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
            let n: f64 = v.norm();
            if n > 0.0 {
                v / n
            } else {
                DVector::from_element(k, 1.0 / (k as f64).sqrt())
            }
        }
        None => {
            let b = model.free_terminal().coeffs();
            let n = b.norm();
            if n > 0.0 {
                -b / n
            } else {
                SpectralField::unit(k, 0).into_inner()
            }
        }
    }
}

/// Solves the optimal target problem at start time `tau`.
///
/// Returns [`Error::NotConverged`] when the ascent exhausts `max_iters`.
pub fn solve_eps(tau: f64, model: &Model, opts: &SolveOptions) -> Result<TargetSolution> {
    check_tau(tau, model)?;
    let quad = AdjointQuadrature::new(model, tau, opts.quad_order);
    let b = model.free_terminal().coeffs();
    let ascent = maximize_dual(&quad, b, initial_direction(model, opts.seed), opts);
    if !ascent.converged {
        return Err(Error::NotConverged {
            solver: "dual ascent",
            iterations: ascent.iterations,
            residual: ascent.pg_norm,
            value: ascent.value,
        });
    }
    let interior = ascent.value <= 0.0;
    let mut certificate = DualCertificate {
        tau,
        eta: SpectralField::new(ascent.eta),
        dual_value: ascent.value,
        iterations: ascent.iterations,
        converged: true,
        interior,
        pg_norm: ascent.pg_norm,
    };

    let control = if interior {
        let problem = oracle::transcribe(tau, model)?;
        let sol = oracle::solve_projected_gradient(&problem, &opts.oracle);
        if !sol.converged {
            return Err(Error::NotConverged {
                solver: "projected gradient",
                iterations: sol.iterations,
                residual: sol.gradient_mapping_norm,
                value: sol.eps,
            });
        }
        sol.control
    } else {
        // Homogeneity puts the maximizer on the sphere; remove rounding drift.
        let n = certificate.eta.norm();
        certificate.eta = certificate.eta.scale(1.0 / n);
        reconstruct_control(&certificate, tau, model)?
    };

    let terminal = solve_state(
        model.initial(),
        &control,
        tau,
        model.horizon(),
        model.basis(),
        model.gram(),
    )?;
    Ok(TargetSolution {
        tau,
        eps: ascent.value.max(0.0),
        certificate,
        control,
        terminal,
    })
}

/// Bang-bang control generated by the certificate, sampled at step midpoints
/// (active-part midpoint for the step containing `tau`; zero before `tau`).
pub fn reconstruct_control(
    certificate: &DualCertificate,
    tau: f64,
    model: &Model,
) -> Result<ControlProfile> {
    check_tau(tau, model)?;
    check_direction(&certificate.eta, model)?;
    if !certificate.converged {
        return Err(Error::invalid(
            "cannot reconstruct a control from a non-converged certificate",
        ));
    }
    if (certificate.eta.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "certificate direction must have unit norm, got {}",
            certificate.eta.norm()
        )));
    }
    let grid = *model.grid();
    let horizon = model.horizon();
    let eta = certificate.eta.coeffs();
    let mut steps = Vec::with_capacity(grid.steps());
    for i in 0..grid.steps() {
        let Some(s) = grid.active_midpoint(i, tau) else {
            steps.push(DVector::zeros(model.modes()));
            continue;
        };
        let m = model.bound().value_at(s);
        if m == 0.0 {
            steps.push(DVector::zeros(model.modes()));
            continue;
        }
        let adj = model
            .gram()
            .apply(&eta.component_mul(&model.basis().decay(horizon - s)));
        let n = adj.norm();
        if n < DENOMINATOR_FLOOR {
            return Err(Error::DegenerateCertificate {
                step: i,
                time: s,
                norm: n,
            });
        }
        steps.push(adj * (m / n));
    }
    ControlProfile::from_steps(grid, steps)
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
    fn zero_direction_has_zero_support() {
        let m = standard();
        let z = SpectralField::zeros(m.modes());
        assert_eq!(support_reachable(&z, 0.3, &m).unwrap(), 0.0);
        assert_eq!(dual_objective(&z, 0.3, &m).unwrap(), 0.0);
    }

    #[test]
    fn zero_bound_support_is_linear() {
        let m = standard();
        let m0 = m
            .with_bound(BoundProfile::constant(1.0, 0.0).unwrap())
            .unwrap();
        let eta = SpectralField::unit(m.modes(), 1).scale(0.7);
        let h = support_reachable(&eta, 0.0, &m0).unwrap();
        assert_eq!(h, m.free_terminal().dot(&eta));
        let dir = m.free_terminal().scale(-1.0 / m.eps_terminal());
        let j = dual_objective(&dir, 0.0, &m0).unwrap();
        assert!((j - m.eps_terminal()).abs() < 1e-15);
    }

    #[test]
    fn dual_objective_rejects_long_direction() {
        let m = standard();
        let eta = SpectralField::unit(m.modes(), 0).scale(1.01);
        assert!(matches!(
            dual_objective(&eta, 0.0, &m),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn bad_tau_rejected() {
        let m = standard();
        assert!(solve_eps(1.0, &m, &SolveOptions::default()).is_err());
        assert!(solve_eps(-0.1, &m, &SolveOptions::default()).is_err());
    }

    #[test]
    fn zero_bound_gives_free_distance() {
        let m = standard()
            .with_bound(BoundProfile::constant(1.0, 0.0).unwrap())
            .unwrap();
        let sol = solve_eps(0.0, &m, &m.solve_options()).unwrap();
        assert!((sol.eps - m.eps_terminal()).abs() <= 1e-12 * m.eps_terminal());
        assert!(sol.control.step_norms().iter().all(|&n| n == 0.0));
    }

    #[test]
    fn reconstruction_is_saturated_and_zero_before_tau() {
        let m = standard();
        let tau = 0.3;
        let sol = solve_eps(tau, &m, &m.solve_options()).unwrap();
        for (i, n) in sol.control.step_norms().iter().enumerate() {
            match m.grid().active_midpoint(i, tau) {
                None => assert_eq!(*n, 0.0),
                Some(s) => {
                    let b = m.bound().value_at(s);
                    assert!(
                        (n - b).abs() <= 4.0 * f64::EPSILON * b,
                        "step {i}: {n} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn non_converged_certificate_rejected() {
        let m = standard();
        let mut cert = solve_eps(0.0, &m, &m.solve_options()).unwrap().certificate;
        cert.converged = false;
        assert!(reconstruct_control(&cert, 0.0, &m).is_err());
    }

    #[test]
    fn degenerate_certificate_reported() {
        let m = standard();
        let cert = DualCertificate {
            tau: 0.0,
            eta: SpectralField::unit(m.modes(), 0),
            dual_value: 0.1,
            iterations: 1,
            converged: true,
            interior: false,
            pg_norm: 0.0,
        };
        // e^{-256(T-t)} underflows the floor on the first step.
        let mut high = cert.clone();
        high.eta = SpectralField::unit(m.modes(), m.modes() - 1);
        let err = reconstruct_control(&high, 0.0, &m).unwrap_err();
        assert!(
            matches!(err, Error::DegenerateCertificate { step: 0, .. }),
            "{err}"
        );
        assert!(reconstruct_control(&cert, 0.0, &m).is_ok());
    }

    #[test]
    fn max_iters_exhaustion_is_explicit() {
        let m = standard();
        let opts = SolveOptions {
            max_iters: 2,
            ..m.solve_options()
        };
        let err = solve_eps(0.0, &m, &opts).unwrap_err();
        assert!(matches!(err, Error::NotConverged { .. }), "{err}");
    }
}
