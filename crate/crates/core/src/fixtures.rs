//! Golden values for the presets.
//!
//! Each value is produced by the transcription oracle (or in closed form) and
//! then cross-checked against the dual solver before anything is written.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bangbang::bang_bang_check;
use crate::error::{Error, Result};
use crate::oracle::oracle_eps;
use crate::scenario::{Model, Scenario};
use crate::spectral::propagate;
use crate::target::solve_eps;

/// Presets with committed fixtures.
pub const FIXTURE_PRESETS: &[&str] = &["standard", "zero-bound"];

/// Curve points `τ_i = iT/CURVE_POINTS`.
pub const CURVE_POINTS: usize = 17;

/// Allowed relative distance between an oracle value and the dual solver.
pub const CROSS_CHECK_TOL: f64 = 1e-3;

/// Bit-for-bit determinism is not promised across platforms; oracle values
/// must reproduce to this relative accuracy.
pub const REPRODUCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Per-mode decay of the initial state.
    Analytic,
    /// Projected-gradient solve of the transcribed problem.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub name: String,
    pub value: f64,
    pub provenance: Provenance,
    /// Absolute tolerance for regeneration.
    pub tolerance: f64,
    /// Start time, for quantities that depend on one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub tau: f64,
    /// Oracle value.
    pub eps: f64,
    /// Dual-solver value, kept for reference only.
    pub eps_dual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenFixture {
    pub scenario: String,
    pub scenario_hash: String,
    pub generator: String,
    pub version: String,
    pub quantities: Vec<Quantity>,
    pub curve: Vec<CurveRow>,
}

/// One fixture entry, for sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entry {
    Quantity(usize),
    Curve(usize),
}

fn generator_command(name: &str) -> String {
    format!("heatctl refresh-fixtures --out crates/core/fixtures {name}")
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn analytic_terminal(model: &Model) -> f64 {
    let lambdas = model.basis().lambdas();
    model
        .initial()
        .as_slice()
        .iter()
        .zip(lambdas)
        .map(|(c, l)| (c * (-l * model.horizon()).exp()).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn curve_taus(model: &Model) -> Vec<f64> {
    (0..CURVE_POINTS)
        .map(|i| model.horizon() * i as f64 / CURVE_POINTS as f64)
        .collect()
}

fn oracle_value(q: &Quantity, model: &Model) -> Result<f64> {
    match q.name.as_str() {
        "eps_terminal" => Ok(analytic_terminal(model)),
        "eps_zero" => Ok(oracle_eps(0.0, model)?.eps),
        "oracle_bang_bang_residual" => {
            let tau = q
                .tau
                .ok_or_else(|| Error::FixtureMismatch(format!("`{}` has no tau", q.name)))?;
            let sol = oracle_eps(tau, model)?;
            Ok(bang_bang_check(&sol, model).residual_max)
        }
        other => Err(Error::FixtureMismatch(format!(
            "unknown quantity `{other}`"
        ))),
    }
}

impl GoldenFixture {
    /// Oracle pass first, then the dual cross-check; any breach aborts with a
    /// report listing every offending value.
    pub fn generate(name: &str, scenario: &Scenario) -> Result<GoldenFixture> {
        let model = Model::new(scenario)?;
        let eps_t = model.eps_terminal();
        let abs_tol = REPRODUCE_TOL * eps_t.max(f64::MIN_POSITIVE);

        let mut quantities = vec![
            Quantity {
                name: "eps_terminal".into(),
                value: analytic_terminal(&model),
                provenance: Provenance::Analytic,
                tolerance: 1e-12 * eps_t,
                tau: None,
            },
            Quantity {
                name: "eps_zero".into(),
                value: oracle_eps(0.0, &model)?.eps,
                provenance: Provenance::Oracle,
                tolerance: abs_tol,
                tau: None,
            },
        ];
        if !model.bound().is_zero() {
            let tau = 0.5 * model.horizon();
            let sol = oracle_eps(tau, &model)?;
            let residual = bang_bang_check(&sol, &model).residual_max;
            quantities.push(Quantity {
                name: "oracle_bang_bang_residual".into(),
                value: residual,
                provenance: Provenance::Oracle,
                tolerance: 1e-12,
                tau: Some(tau),
            });
        }
        let mut curve = Vec::with_capacity(CURVE_POINTS);
        for tau in curve_taus(&model) {
            curve.push(CurveRow {
                tau,
                eps: oracle_eps(tau, &model)?.eps,
                eps_dual: f64::NAN,
                tolerance: abs_tol,
            });
        }

        let opts = model.solve_options();
        let mut report = String::new();
        let propagated = propagate(model.initial(), model.horizon(), model.basis())?.norm();
        if !close(propagated, quantities[0].value, quantities[0].tolerance) {
            writeln!(
                report,
                "eps_terminal: analytic {:.16e}, propagated {propagated:.16e}",
                quantities[0].value
            )
            .unwrap();
        }
        for row in &mut curve {
            row.eps_dual = solve_eps(row.tau, &model, &opts)?.eps;
            let scale = row.eps.max(1e-3 * eps_t);
            if (row.eps_dual - row.eps).abs() > CROSS_CHECK_TOL * scale {
                writeln!(
                    report,
                    "tau {:.6}: oracle {:.16e}, dual {:.16e}",
                    row.tau, row.eps, row.eps_dual
                )
                .unwrap();
            }
        }
        if !report.is_empty() {
            return Err(Error::FixtureMismatch(format!("{name}:\n{report}")));
        }
        Ok(GoldenFixture {
            scenario: name.to_string(),
            scenario_hash: scenario.content_hash(),
            generator: generator_command(name),
            version: env!("CARGO_PKG_VERSION").to_string(),
            quantities,
            curve,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<GoldenFixture> {
        toml::from_str(text).map_err(|e| Error::FixtureMismatch(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<GoldenFixture> {
        GoldenFixture::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("fixture serializes")
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from("tau,eps\n");
        for r in &self.curve {
            writeln!(out, "{:.16e},{:.16e}", r.tau, r.eps).unwrap();
        }
        out
    }

    pub fn entries(&self) -> Vec<Entry> {
        (0..self.quantities.len())
            .map(Entry::Quantity)
            .chain((0..self.curve.len()).map(Entry::Curve))
            .collect()
    }

    /// A random `fraction` of the entries, at least one.
    pub fn sample_entries(&self, fraction: f64, rng: &mut impl Rng) -> Vec<Entry> {
        let all = self.entries();
        let n = ((all.len() as f64 * fraction).ceil() as usize).clamp(1, all.len());
        let mut picked: Vec<usize> = sample(rng, all.len(), n).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| all[i]).collect()
    }

    /// Recomputes `entry` with its recorded generator and returns
    /// `(stored, recomputed, tolerance)`.
    pub fn rederive(&self, entry: Entry, model: &Model) -> Result<(f64, f64, f64)> {
        match entry {
            Entry::Quantity(i) => {
                let q = &self.quantities[i];
                Ok((q.value, oracle_value(q, model)?, q.tolerance))
            }
            Entry::Curve(i) => {
                let r = &self.curve[i];
                Ok((r.eps, oracle_eps(r.tau, model)?.eps, r.tolerance))
            }
        }
    }

    /// Checks the stored hash and re-derives `entries`.
    pub fn verify(&self, scenario: &Scenario, entries: &[Entry]) -> Result<()> {
        if scenario.content_hash() != self.scenario_hash {
            return Err(Error::FixtureMismatch(format!(
                "{}: scenario hash {} does not match fixture {}",
                self.scenario,
                scenario.content_hash(),
                self.scenario_hash
            )));
        }
        let model = Model::new(scenario)?;
        let mut report = String::new();
        for &e in entries {
            let (stored, fresh, tol) = self.rederive(e, &model)?;
            if !close(stored, fresh, tol) {
                writeln!(
                    report,
                    "{e:?}: stored {stored:.16e}, recomputed {fresh:.16e}, tolerance {tol:.1e}"
                )
                .unwrap();
            }
        }
        if report.is_empty() {
            Ok(())
        } else {
            Err(Error::FixtureMismatch(format!(
                "{}:\n{report}",
                self.scenario
            )))
        }
    }
}

/// Regenerates the fixtures for `names` into `dir`. Nothing is written unless
/// every preset passes its cross-check.
pub fn refresh_fixtures(names: &[String], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut fixtures = Vec::with_capacity(names.len());
    for name in names {
        fixtures.push(GoldenFixture::generate(name, &Scenario::preset(name)?)?);
    }
    if fixtures.is_empty() {
        return Ok(Vec::new());
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for f in &fixtures {
        let path = dir.join(format!("{}.toml", f.scenario));
        std::fs::write(&path, f.to_toml())?;
        written.push(path);
        let path = dir.join(format!("{}_curve.csv", f.scenario));
        std::fs::write(&path, f.curve_csv())?;
        written.push(path);
    }
    Ok(written)
}
