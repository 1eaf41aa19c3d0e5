//! Time-varying bound `M(·)`, piecewise-constant controls and membership in
//! the admissible set `U_M`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `0 = t_0 < t_1 < … < t_N = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::invalid("time grid needs at least one step"));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            self.horizon * i as f64 / self.steps as f64
        }
    }

    pub fn step(&self, i: usize) -> (f64, f64) {
        (self.node(i), self.node(i + 1))
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        let (a, b) = self.step(i);
        0.5 * (a + b)
    }

    /// Midpoint of the part of step `i` after `tau`, or `None` if the step ends
    /// by `tau`.
    pub fn active_midpoint(&self, i: usize, tau: f64) -> Option<f64> {
        let (a, b) = self.step(i);
        (b > tau).then(|| 0.5 * (a.max(tau) + b))
    }
}

/// Piecewise-constant `M(t) ≥ 0` on `[0, T)`, right-continuous at breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundProfile {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl BoundProfile {
    /// `breakpoints` are `0 = t_0 < … < t_m = T`; `values[i]` holds on
    /// `[t_i, t_{i+1})`.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || breakpoints.len() != values.len() + 1 {
            return Err(Error::invalid(format!(
                "bound profile needs m >= 1 values and m + 1 breakpoints, got {} and {}",
                values.len(),
                breakpoints.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::invalid("bound profile must start at t = 0"));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0]))
            || !breakpoints.iter().all(|b| b.is_finite())
        {
            return Err(Error::invalid(
                "bound breakpoints must be finite and strictly increasing",
            ));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!(
                "bound values must be finite and nonnegative, got {v}"
            )));
        }
        Ok(BoundProfile {
            breakpoints,
            values,
        })
    }

    pub fn constant(horizon: f64, value: f64) -> Result<Self> {
        Self::new(vec![0.0, horizon], vec![value])
    }

    /// Equal-width pieces on `[0, T)`.
    pub fn uniform(horizon: f64, values: Vec<f64>) -> Result<Self> {
        let m = values.len();
        let breakpoints = (0..=m)
            .map(|i| {
                if i == m {
                    horizon
                } else {
                    horizon * i as f64 / m as f64
                }
            })
            .collect();
        Self::new(breakpoints, values)
    }

    /// Samples `f` at the midpoints of `pieces` equal-width pieces.
    pub fn sampled(horizon: f64, pieces: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if pieces == 0 {
            return Err(Error::invalid("sampled bound needs at least one piece"));
        }
        let h = horizon / pieces as f64;
        Self::uniform(
            horizon,
            (0..pieces).map(|i| f((i as f64 + 0.5) * h)).collect(),
        )
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(start, end, value)` for each piece.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(w, &v)| (w[0], w[1], v))
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn inf(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `M ≡ 0`: the reachable set collapses to the free trajectory endpoint.
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Value at `t ∈ [0, T)` without range checks; `t` is clamped into range.
    pub(crate) fn value_at(&self, t: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        self.values[idx.clamp(1, self.values.len()) - 1]
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.breakpoints.clone(),
            self.values.iter().map(|v| v * c).collect(),
        )
    }
}

pub fn bound_at(bound: &BoundProfile, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t < bound.horizon()) {
        return Err(Error::invalid(format!(
            "t = {t} outside [0, {})",
            bound.horizon()
        )));
    }
    Ok(bound.value_at(t))
}

/// Control constant on each step of a [`TimeGrid`], stored as eigenbasis
/// coefficient vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlProfile {
    grid: TimeGrid,
    modes: usize,
    values: Vec<DVector<f64>>,
}

impl ControlProfile {
    pub fn zeros(grid: TimeGrid, modes: usize) -> Self {
        ControlProfile {
            grid,
            modes,
            values: vec![DVector::zeros(modes); grid.steps()],
        }
    }

    pub fn from_steps(grid: TimeGrid, values: Vec<DVector<f64>>) -> Result<Self> {
        if values.len() != grid.steps() {
            return Err(Error::invalid(format!(
                "control has {} steps, grid has {}",
                values.len(),
                grid.steps()
            )));
        }
        let modes = values.first().map_or(0, |v| v.len());
        if values.iter().any(|v| v.len() != modes) {
            return Err(Error::invalid(
                "control steps have inconsistent mode counts",
            ));
        }
        if values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::invalid("control values must be finite"));
        }
        Ok(ControlProfile {
            grid,
            modes,
            values,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn step_norms(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// `(Σ_i Δt ‖u_i − v_i‖²)^{1/2}`.
    pub fn distance(&self, other: &ControlProfile) -> Result<f64> {
        if self.grid != other.grid || self.modes != other.modes {
            return Err(Error::invalid("controls live on different grids"));
        }
        let dt = self.grid.dt();
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_squared())
            .sum();
        Ok((dt * s).sqrt())
    }

    pub fn scale(&self, c: f64) -> ControlProfile {
        ControlProfile {
            grid: self.grid,
            modes: self.modes,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// `self + c·other` on a shared grid.
    pub fn axpy(&self, c: f64, other: &ControlProfile) -> Result<ControlProfile> {
        if self.grid != other.grid || self.modes != other.modes {
            return Err(Error::invalid("controls live on different grids"));
        }
        Ok(ControlProfile {
            grid: self.grid,
            modes: self.modes,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b * c)
                .collect(),
        })
    }
}

/// Worst relative excess `max_i (‖u_i‖ − M_i)₊ / M_i` with `M_i` the bound at
/// the step midpoint. A nonzero control on a step where `M_i = 0` gives `∞`.
///
/// Panics if the control grid and the bound profile have different horizons.
pub fn membership_residual(u: &ControlProfile, bound: &BoundProfile) -> f64 {
    let grid = u.grid();
    assert!(
        (grid.horizon() - bound.horizon()).abs() <= 1e-12 * bound.horizon(),
        "control and bound must share the horizon"
    );
    u.values()
        .iter()
        .enumerate()
        .map(|(i, ui)| {
            let m = bound.value_at(grid.midpoint(i));
            let excess = (ui.norm() - m).max(0.0);
            if excess == 0.0 {
                0.0
            } else if m == 0.0 {
                f64::INFINITY
            } else {
                excess / m
            }
        })
        .fold(0.0, f64::max)
}
