//! Scenario files and the assembled model they describe.
//!
//! A [`Scenario`] is plain data read from TOML; [`Model`] holds everything the
//! solvers need (basis, Gram matrix, free terminal state, bound profile, grid).

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::admissible::{BoundProfile, TimeGrid};
use crate::error::{Error, Result};
use crate::oracle::OracleOptions;
use crate::spectral::{
    build_basis, control_gram, propagate, ControlRegion, DomainSpec, EigenBasis, GramMatrix,
    SpectralField,
};
use crate::target::SolveOptions;

pub const PRESETS: &[&str] = &[
    "standard",
    "zero-bound",
    "constant-bound",
    "single-mode",
    "rectangle",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Final time `T`.
    pub horizon: f64,
    /// Spectral truncation `K`.
    pub modes: usize,
    /// Control steps `N_t`.
    pub steps: usize,
    pub seed: u64,
    pub domain: DomainSpec,
    pub region: ControlRegion,
    pub initial: InitialSpec,
    pub bound: BoundSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Eigenbasis coefficients, mode order as in the basis. Entries past `K`
    /// are dropped.
    Coefficients { coeffs: Vec<f64> },
    /// A single eigenfunction `φ_index` (one-based).
    Mode { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundSpec {
    Constant {
        value: f64,
    },
    Pieces {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    /// `base + amplitude·sin(2π·frequency·t)` sampled at piece midpoints.
    Sine {
        base: f64,
        amplitude: f64,
        frequency: f64,
        pieces: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Gauss nodes per bound piece; doubled on the piece ending at `T`.
    pub quad_order: usize,
    pub dual_max_iters: usize,
    pub dual_pg_tol: f64,
    pub dual_stall_tol: f64,
    /// Bisection bracket width relative to `T`.
    pub tau_tol_rel: f64,
    pub oracle_max_iters: usize,
    pub oracle_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            quad_order: 8,
            dual_max_iters: 5000,
            dual_pg_tol: 1e-8,
            dual_stall_tol: 1e-10,
            tau_tol_rel: 1e-4,
            oracle_max_iters: 100_000,
            oracle_tol: 1e-10,
        }
    }
}

impl Tolerances {
    /// Ten times tighter bisection and dual tolerances.
    pub fn tightened(&self) -> Tolerances {
        Tolerances {
            dual_pg_tol: self.dual_pg_tol * 0.1,
            dual_stall_tol: self.dual_stall_tol * 0.1,
            tau_tol_rel: self.tau_tol_rel * 0.1,
            ..self.clone()
        }
    }
}

impl Scenario {
    /// Named presets; see [`PRESETS`].
    pub fn preset(name: &str) -> Result<Scenario> {
        let standard = Scenario {
            name: "standard".into(),
            horizon: 1.0,
            modes: 16,
            steps: 64,
            seed: 42,
            domain: DomainSpec::Interval { length: PI },
            region: ControlRegion::Interval {
                lower: 0.2,
                upper: 0.8,
            },
            initial: InitialSpec::Coefficients {
                coeffs: vec![1.0, 0.5],
            },
            bound: BoundSpec::Sine {
                base: 1.0,
                amplitude: 0.5,
                frequency: 1.0,
                pieces: 16,
            },
            tolerances: Tolerances::default(),
        };
        let s = match name {
            "standard" => standard,
            "zero-bound" => Scenario {
                name: name.into(),
                bound: BoundSpec::Constant { value: 0.0 },
                ..standard
            },
            "constant-bound" => Scenario {
                name: name.into(),
                bound: BoundSpec::Constant { value: 1.0 },
                ..standard
            },
            "single-mode" => Scenario {
                name: name.into(),
                modes: 1,
                initial: InitialSpec::Mode { index: 1 },
                ..standard
            },
            "rectangle" => Scenario {
                name: name.into(),
                modes: 12,
                domain: DomainSpec::Rectangle {
                    width: PI,
                    height: PI,
                },
                region: ControlRegion::Rectangle {
                    x: [0.5, 2.0],
                    y: [0.3, 1.5],
                },
                initial: InitialSpec::Coefficients {
                    coeffs: vec![1.0, 0.3, -0.3],
                },
                ..standard
            },
            other => {
                return Err(Error::Scenario(format!(
                    "unknown preset `{other}` (available: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(s)
    }

    pub fn from_toml_str(text: &str) -> Result<Scenario> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Loads a scenario file, or a preset when `path` names one and no such
    /// file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        if !path.exists() {
            if let Some(name) = path.to_str().filter(|n| PRESETS.contains(n)) {
                return Scenario::preset(name);
            }
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Scenario(format!("cannot read {}: {e}", path.display())))?;
        Scenario::from_toml_str(&text).map_err(|e| match e {
            Error::Scenario(msg) => Error::Scenario(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Doubles `K`, `N_t` and the quadrature order.
    pub fn refined(&self) -> Scenario {
        let mut s = self.clone();
        s.modes *= 2;
        s.steps *= 2;
        s.tolerances.quad_order *= 2;
        s
    }

    /// Checks every model precondition, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        Model::new(self).map(|_| ())
    }

    pub fn bound_profile(&self) -> Result<BoundProfile> {
        let field = |e: Error| Error::Scenario(format!("field `bound`: {e}"));
        match &self.bound {
            BoundSpec::Constant { value } => {
                BoundProfile::constant(self.horizon, *value).map_err(field)
            }
            BoundSpec::Pieces {
                breakpoints,
                values,
            } => {
                let last = breakpoints.last().copied().unwrap_or(f64::NAN);
                if (last - self.horizon).abs() > 1e-12 * self.horizon {
                    return Err(Error::Scenario(format!(
                        "field `bound.breakpoints`: last breakpoint {last} must equal horizon {}",
                        self.horizon
                    )));
                }
                let mut bp = breakpoints.clone();
                *bp.last_mut().unwrap() = self.horizon;
                BoundProfile::new(bp, values.clone()).map_err(field)
            }
            BoundSpec::Sine {
                base,
                amplitude,
                frequency,
                pieces,
            } => BoundProfile::sampled(self.horizon, *pieces, |t| {
                base + amplitude * (2.0 * PI * frequency * t).sin()
            })
            .map_err(field),
        }
    }
}

/// An assembled scenario.
#[derive(Debug, Clone)]
pub struct Model {
    scenario: Scenario,
    basis: EigenBasis,
    gram: GramMatrix,
    initial: SpectralField,
    free_terminal: SpectralField,
    bound: BoundProfile,
    grid: TimeGrid,
}

impl Model {
    pub fn new(s: &Scenario) -> Result<Model> {
        let field =
            |name: &'static str| move |e: Error| Error::Scenario(format!("field `{name}`: {e}"));
        let grid = TimeGrid::new(s.horizon, s.steps).map_err(field("horizon/steps"))?;
        let basis = build_basis(&s.domain, s.modes).map_err(field("modes/domain"))?;
        let gram = control_gram(&s.domain, &s.region, &basis).map_err(field("region"))?;
        let k = basis.len();
        let initial = match &s.initial {
            InitialSpec::Coefficients { coeffs } => {
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Scenario(
                        "field `initial.coeffs`: coefficients must be finite".into(),
                    ));
                }
                let mut v = vec![0.0; k];
                for (dst, src) in v.iter_mut().zip(coeffs) {
                    *dst = *src;
                }
                SpectralField::from_slice(&v)
            }
            InitialSpec::Mode { index } => {
                if *index == 0 || *index > k {
                    return Err(Error::Scenario(format!(
                        "field `initial.index`: mode {index} not in 1..={k}"
                    )));
                }
                SpectralField::unit(k, index - 1)
            }
        };
        let bound = s.bound_profile()?;
        let t = &s.tolerances;
        if t.quad_order == 0 || t.dual_max_iters == 0 || t.oracle_max_iters == 0 {
            return Err(Error::Scenario(
                "field `tolerances`: orders and iteration caps must be positive".into(),
            ));
        }
        if !(t.dual_pg_tol > 0.0
            && t.dual_stall_tol > 0.0
            && t.tau_tol_rel > 0.0
            && t.oracle_tol > 0.0)
        {
            return Err(Error::Scenario(
                "field `tolerances`: tolerances must be positive".into(),
            ));
        }
        let free_terminal = propagate(&initial, s.horizon, &basis)?;
        Ok(Model {
            scenario: s.clone(),
            basis,
            gram,
            initial,
            free_terminal,
            bound,
            grid,
        })
    }

    pub fn refined(&self) -> Result<Model> {
        Model::new(&self.scenario.refined())
    }

    /// Same model with every tolerance of [`Tolerances::tightened`].
    pub fn tightened(&self) -> Model {
        let mut m = self.clone();
        m.scenario.tolerances = self.scenario.tolerances.tightened();
        m
    }

    /// Same model under a different bound profile.
    pub fn with_bound(&self, bound: BoundProfile) -> Result<Model> {
        if (bound.horizon() - self.horizon()).abs() > 1e-12 * self.horizon() {
            return Err(Error::invalid(
                "bound horizon differs from the model horizon",
            ));
        }
        let mut m = self.clone();
        m.scenario.bound = BoundSpec::Pieces {
            breakpoints: bound.breakpoints().to_vec(),
            values: bound.values().to_vec(),
        };
        m.bound = bound;
        Ok(m)
    }

    /// Same model with a different initial state (length must be `K`).
    pub fn with_initial(&self, y0: SpectralField) -> Result<Model> {
        if y0.len() != self.basis.len() {
            return Err(Error::invalid("initial state length differs from K"));
        }
        let mut m = self.clone();
        m.scenario.initial = InitialSpec::Coefficients {
            coeffs: y0.as_slice().to_vec(),
        };
        m.free_terminal = propagate(&y0, self.horizon(), &self.basis)?;
        m.initial = y0;
        Ok(m)
    }

    pub fn with_steps(&self, steps: usize) -> Result<Model> {
        let mut s = self.scenario.clone();
        s.steps = steps;
        let mut m = self.clone();
        m.grid = TimeGrid::new(s.horizon, steps)?;
        m.scenario = s;
        Ok(m)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn basis(&self) -> &EigenBasis {
        &self.basis
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    pub fn initial(&self) -> &SpectralField {
        &self.initial
    }

    /// `e^{ΔT} y0`.
    pub fn free_terminal(&self) -> &SpectralField {
        &self.free_terminal
    }

    /// `ε_T = ‖e^{ΔT} y0‖`.
    pub fn eps_terminal(&self) -> f64 {
        self.free_terminal.norm()
    }

    pub fn bound(&self) -> &BoundProfile {
        &self.bound
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.scenario.horizon
    }

    pub fn modes(&self) -> usize {
        self.basis.len()
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.scenario.tolerances
    }

    pub fn solve_options(&self) -> SolveOptions {
        let t = self.tolerances();
        SolveOptions {
            max_iters: t.dual_max_iters,
            pg_tol: t.dual_pg_tol,
            stall_tol: t.dual_stall_tol,
            quad_order: t.quad_order,
            tau_tol: t.tau_tol_rel * self.horizon(),
            oracle: self.oracle_options(),
            ..SolveOptions::default()
        }
    }

    pub fn oracle_options(&self) -> OracleOptions {
        let t = self.tolerances();
        OracleOptions {
            max_iters: t.oracle_max_iters,
            tol: t.oracle_tol,
            ..OracleOptions::default()
        }
    }
}
