//! Direct transcription of the optimal target problem.
//!
//! With controls constant on each grid step, the terminal state is affine in
//! the stacked step coefficients, `y = b + Σ_i A_i u_i`, and `ε(τ)` becomes
//!
//! ```text
//! min ‖b + Σ_i A_i u_i‖   subject to   ‖u_i‖ ≤ M_i .
//! ```
//!
//! This is solved by plain projected gradient on `½‖y‖²` with step `1/L`. It
//! shares nothing with the support-function solver beyond the exact per-step
//! semigroup integrals.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::admissible::{ControlProfile, TimeGrid};
use crate::error::{Error, Result};
use crate::scenario::Model;
use crate::spectral::{window_factors, SpectralField};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleOptions {
    pub max_iters: usize,
    /// Stop when the gradient-mapping norm drops below this.
    pub tol: f64,
    /// Keep `½‖y_k‖²` for every iterate.
    pub record_history: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            max_iters: 100_000,
            tol: 1e-10,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TranscriptionProblem {
    pub tau: f64,
    pub grid: TimeGrid,
    /// `[A_0 | A_1 | … ]`, `K × (N_t·K)`.
    pub stacked: DMatrix<f64>,
    /// `b = e^{ΔT} y0`.
    pub offset: DVector<f64>,
    pub radii: Vec<f64>,
}

impl TranscriptionProblem {
    pub fn modes(&self) -> usize {
        self.offset.len()
    }

    pub fn block(&self, i: usize) -> DMatrix<f64> {
        let k = self.modes();
        self.stacked.columns(i * k, k).into_owned()
    }

    pub fn terminal(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.offset + &self.stacked * u
    }
}

pub fn transcribe(tau: f64, model: &Model) -> Result<TranscriptionProblem> {
    let horizon = model.horizon();
    if !(tau >= 0.0 && tau < horizon) {
        return Err(Error::invalid(format!(
            "start time must satisfy 0 <= tau < T, got {tau}"
        )));
    }
    let grid = *model.grid();
    let k = model.modes();
    let gram = model.gram().matrix();
    let mut stacked = DMatrix::zeros(k, grid.steps() * k);
    let mut radii = vec![0.0; grid.steps()];
    for i in 0..grid.steps() {
        let Some(mid) = grid.active_midpoint(i, tau) else {
            continue;
        };
        let (s0, s1) = grid.step(i);
        let f = window_factors(model.basis(), s0, s1, tau, horizon);
        let mut block = stacked.columns_mut(i * k, k);
        for r in 0..k {
            for c in 0..k {
                block[(r, c)] = f[r] * gram[(r, c)];
            }
        }
        radii[i] = model.bound().value_at(mid);
    }
    Ok(TranscriptionProblem {
        tau,
        grid,
        stacked,
        offset: model.free_terminal().coeffs().clone(),
        radii,
    })
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub tau: f64,
    pub eps: f64,
    pub control: ControlProfile,
    pub terminal: SpectralField,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_mapping_norm: f64,
    /// `‖y‖ − J_disc(−y/‖y‖)`, a certified bound on the suboptimality of `eps`
    /// for the transcribed problem.
    pub duality_gap: f64,
    pub history: Vec<f64>,
}

fn project_steps(u: &mut DVector<f64>, radii: &[f64], k: usize) {
    for (i, &r) in radii.iter().enumerate() {
        let mut block = u.rows_mut(i * k, k);
        let n = block.norm();
        if n > r {
            if r == 0.0 {
                block.fill(0.0);
                continue;
            }
            block *= r / n;
            // Rounding can leave the norm one ulp above r.
            while block.norm() > r {
                block *= 1.0 - f64::EPSILON;
            }
        }
    }
}

/// Largest eigenvalue of `Σ_i A_i A_iᵀ`, i.e. `‖[A_0 | A_1 | …]‖²`.
fn lipschitz(stacked: &DMatrix<f64>) -> f64 {
    let gram = stacked * stacked.transpose();
    SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn solve_projected_gradient(p: &TranscriptionProblem, opts: &OracleOptions) -> OracleSolution {
    let k = p.modes();
    let n = p.grid.steps();
    let mut u = DVector::zeros(n * k);
    let mut y = p.offset.clone();
    let lip = lipschitz(&p.stacked);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut gm = 0.0;

    if lip > 0.0 && p.radii.iter().any(|&r| r > 0.0) {
        let step = 1.0 / lip;
        let mut grad = DVector::zeros(n * k);
        while iterations < opts.max_iters {
            if opts.record_history {
                history.push(0.5 * y.norm_squared());
            }
            grad.gemv_tr(1.0, &p.stacked, &y, 0.0);
            let mut next = &u - &grad * step;
            project_steps(&mut next, &p.radii, k);
            let delta = &next - &u;
            gm = lip * delta.norm();
            y.gemv(1.0, &p.stacked, &delta, 1.0);
            u = next;
            iterations += 1;
            if gm <= opts.tol {
                converged = true;
                break;
            }
        }
    } else {
        converged = true;
    }

    let y = p.terminal(&u);
    if opts.record_history {
        history.push(0.5 * y.norm_squared());
    }
    let eps = y.norm();
    let duality_gap = if eps > 0.0 {
        let eta = &y / -eps;
        let mut spread = 0.0;
        for (i, &r) in p.radii.iter().enumerate() {
            spread += r * (p.stacked.columns(i * k, k).transpose() * &eta).norm();
        }
        eps - (-p.offset.dot(&eta) - spread)
    } else {
        0.0
    };

    let steps = (0..n).map(|i| u.rows(i * k, k).into_owned()).collect();
    let control =
        ControlProfile::from_steps(p.grid, steps).expect("oracle control matches its grid");
    OracleSolution {
        tau: p.tau,
        eps,
        control,
        terminal: SpectralField::new(y),
        iterations,
        converged,
        gradient_mapping_norm: gm,
        duality_gap,
        history,
    }
}

/// Transcribes and solves at `tau` with the model's oracle tolerances.
pub fn oracle_eps(tau: f64, model: &Model) -> Result<OracleSolution> {
    let p = transcribe(tau, model)?;
    let sol = solve_projected_gradient(&p, &model.oracle_options());
    if !sol.converged {
        return Err(Error::NotConverged {
            solver: "projected gradient",
            iterations: sol.iterations,
            residual: sol.gradient_mapping_norm,
            value: sol.eps,
        });
    }
    Ok(sol)
}
