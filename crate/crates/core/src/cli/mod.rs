//! Command-line front end: scenario in, CSV/JSON plus a manifest out.
//!
//! Exit codes: 0 success, 1 a verified property failed, 2 infeasible target,
//! 3 non-convergence or numerical breakdown, 4 input error.

mod output;
mod verify;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::bangbang::BangBangReport;
use crate::error::{Error, Result};
use crate::fixtures::{refresh_fixtures, FIXTURE_PRESETS};
use crate::oracle::oracle_eps;
use crate::scenario::{Model, Scenario, PRESETS};
use crate::target::{solve_eps, SolveOptions};
use crate::time::{eps_curve, solve_tau};

pub use output::{csv, num, OutputDir};
pub use verify::{run_verify, Status, Verdict, VerifyReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_INPUT: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "heatctl",
    version,
    about = "Optimal time and target control for the heat equation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario TOML file or preset name.
    #[arg(long, default_value = "standard")]
    pub scenario: String,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Seed for the dual solver's random start.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Double K, N_t and the quadrature order.
    #[arg(long)]
    pub refine: bool,
    /// Worker threads for parallel solves (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// eps(tau) on a grid of start times.
    EpsCurve {
        #[command(flatten)]
        common: Common,
        /// `start:stop:count`, endpoints included. Default: 17 points iT/17.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Optimal start time for a target radius.
    Tau {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        eps: f64,
    },
    /// Checks agreement, bang-bang, uniqueness, monotonicity, continuity and
    /// the inverse identities.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Probes per inverse identity.
        #[arg(long, default_value_t = 5)]
        probes: usize,
    },
    /// Dual solver against the direct transcription.
    OracleCompare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        grid: Option<String>,
    },
    /// Regenerates golden fixtures for presets.
    RefreshFixtures {
        #[arg(long, default_value = "crates/core/fixtures")]
        out: PathBuf,
        /// Presets to refresh (default: all with fixtures).
        names: Vec<String>,
    },
    /// Prints a preset as TOML.
    Preset { name: String },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        Error::NotConverged { .. }
        | Error::DegenerateCertificate { .. }
        | Error::MonotonicityViolation { .. } => EXIT_NOT_CONVERGED,
        Error::FixtureMismatch(_) => EXIT_FAILED,
        Error::InvalidArgument(_) | Error::Scenario(_) | Error::Io(_) | Error::Json(_) => {
            EXIT_INPUT
        }
    }
}

/// Parses `start:stop:count` into evenly spaced points, both ends included.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::invalid(format!("grid must be `start:stop:count`, got `{spec}`"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(bad());
    };
    let start: f64 = a.trim().parse().map_err(|_| bad())?;
    let stop: f64 = b.trim().parse().map_err(|_| bad())?;
    let count: usize = n.trim().parse().map_err(|_| bad())?;
    if count == 0 || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    if !(stop > start) {
        return Err(Error::invalid(format!(
            "grid stop {stop} must exceed start {start}"
        )));
    }
    Ok((0..count)
        .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
        .collect())
}

fn default_grid(model: &Model) -> Vec<f64> {
    (0..17).map(|i| model.horizon() * i as f64 / 17.0).collect()
}

fn grid_for(spec: &Option<String>, model: &Model) -> Result<Vec<f64>> {
    spec.as_deref()
        .map_or_else(|| Ok(default_grid(model)), parse_grid)
}

struct Context {
    scenario: Scenario,
    model: Model,
    opts: SolveOptions,
    seed: Option<u64>,
    refine: bool,
}

fn load(common: &Common) -> Result<Context> {
    let mut scenario = Scenario::load(&common.scenario)?;
    if common.refine {
        scenario = scenario.refined();
    }
    if let Some(seed) = common.seed {
        scenario.seed = seed;
    }
    let model = Model::new(&scenario)?;
    let mut opts = model.solve_options();
    if let Some(seed) = common.seed {
        opts = opts.with_seed(seed);
    }
    Ok(Context {
        scenario,
        model,
        opts,
        seed: common.seed,
        refine: common.refine,
    })
}

fn bang_bang_csv(r: &BangBangReport) -> String {
    csv(
        &["t", "norm", "bound"],
        r.steps
            .iter()
            .map(|s| vec![num(s.t), num(s.norm), num(s.bound)]),
    )
}

/// Runs a parsed command and returns the exit code.
pub fn run(cli: Cli, command_line: &str) -> i32 {
    match cli.command {
        Command::Preset { name } => match Scenario::preset(&name) {
            Ok(s) => {
                print!("{}", s.to_toml());
                EXIT_OK
            }
            Err(e) => fail(&e),
        },
        Command::RefreshFixtures { out, names } => {
            let names = if names.is_empty() {
                FIXTURE_PRESETS.iter().map(|s| s.to_string()).collect()
            } else {
                names
            };
            match refresh_fixtures(&names, &out) {
                Ok(files) => {
                    for f in files {
                        println!("wrote {}", f.display());
                    }
                    EXIT_OK
                }
                Err(e) => fail(&e),
            }
        }
        Command::EpsCurve { common, grid } => with_context(&common, command_line, |ctx, out| {
            cmd_eps_curve(ctx, out, &grid)
        }),
        Command::Tau { common, eps } => {
            with_context(&common, command_line, |ctx, out| cmd_tau(ctx, out, eps))
        }
        Command::Verify { common, probes } => with_context(&common, command_line, |ctx, out| {
            cmd_verify(ctx, out, probes)
        }),
        Command::OracleCompare { common, grid } => {
            with_context(&common, command_line, |ctx, out| {
                cmd_oracle_compare(ctx, out, &grid)
            })
        }
    }
}

/// Parses `args` (program name first) and runs. Usage errors exit 4.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let command_line = args
        .iter()
        .map(|a| a.to_string_lossy())
        .collect::<Vec<_>>()
        .join(" ");
    match Cli::try_parse_from(&args) {
        Ok(cli) => run(cli, &command_line),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_INPUT
            } else {
                EXIT_OK
            }
        }
    }
}

fn fail(e: &Error) -> i32 {
    eprintln!("error: {e}");
    if let Error::Scenario(_) = e {
        eprintln!("presets: {}", PRESETS.join(", "));
    }
    exit_code(e)
}

fn with_context(
    common: &Common,
    command_line: &str,
    body: impl FnOnce(&Context, &mut OutputDir) -> Result<i32> + Send,
) -> i32 {
    let ctx = match load(common) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let mut out = match OutputDir::create(&common.out) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs.unwrap_or(0))
        .build();
    let result = match pool {
        Ok(pool) => {
            let (c, o) = (&ctx, &mut out);
            pool.install(move || -> Result<i32> {
                o.write("scenario.toml", &c.scenario.to_toml())?;
                body(c, o)
            })
        }
        Err(e) => Err(Error::invalid(format!("cannot start worker pool: {e}"))),
    };
    let code = match &result {
        Ok(code) => *code,
        Err(e) => fail(e),
    };
    let summary = format!(
        "{} file(s) and manifest.json in {}",
        out.len(),
        out.path().display()
    );
    if let Err(e) = out.finish(command_line, &ctx.scenario, ctx.seed, ctx.refine, code) {
        eprintln!("error: cannot write manifest: {e}");
        return if code == EXIT_OK { EXIT_INPUT } else { code };
    }
    eprintln!("{summary}");
    code
}

fn cmd_eps_curve(ctx: &Context, out: &mut OutputDir, grid: &Option<String>) -> Result<i32> {
    let taus = grid_for(grid, &ctx.model)?;
    let curve = eps_curve(&taus, &ctx.model, &ctx.opts)?;
    let rows = curve.points.iter().map(|p| {
        vec![
            num(p.tau),
            num(p.eps),
            p.converged.to_string(),
            p.iterations.to_string(),
        ]
    });
    out.write(
        "eps_curve.csv",
        &csv(&["tau", "eps", "converged", "iterations"], rows),
    )?;
    out.write_json(
        "eps_curve.json",
        &json!({
            "eps_terminal": curve.eps_terminal,
            "points": curve.points.len(),
            "monotone": curve.monotone(),
            "max_decrease": curve.max_decrease,
            "strict_increases": curve.strict_increases,
            "lipschitz_constant": curve.lipschitz_constant,
            "max_slope_ratio": curve.max_slope_ratio,
            "lipschitz_ok": curve.lipschitz_ok(),
            "degenerate": curve.degenerate,
            "all_converged": curve.all_converged,
        }),
    )?;
    Ok(if curve.all_converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn cmd_tau(ctx: &Context, out: &mut OutputDir, eps: f64) -> Result<i32> {
    let sol = match solve_tau(eps, &ctx.model, &ctx.opts) {
        Ok(s) => s,
        Err(e @ Error::Infeasible { .. }) => {
            out.write_json(
                "tau.json",
                &json!({ "eps": eps, "infeasible": true, "message": e.to_string() }),
            )?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    out.write_json("tau.json", &sol.record())?;
    let bb = crate::bangbang::bang_bang_check(&sol, &ctx.model);
    if bb.skipped.is_none() {
        out.write("bang_bang.csv", &bang_bang_csv(&bb))?;
    }
    println!(
        "tau = {:.12e} (eps(tau) = {:.12e}, saturated = {})",
        sol.tau, sol.eps_at_tau, sol.saturated
    );
    Ok(EXIT_OK)
}

fn cmd_verify(ctx: &Context, out: &mut OutputDir, probes: usize) -> Result<i32> {
    let run = run_verify(&ctx.model, &ctx.opts, ctx.scenario.seed, probes);
    if let Some(bb) = &run.bang_bang {
        out.write("bang_bang.csv", &bang_bang_csv(bb))?;
    }
    if !run.curve_rows.is_empty() {
        out.write(
            "eps_curve.csv",
            &csv(
                &["tau", "eps"],
                run.curve_rows.iter().map(|(t, e)| vec![num(*t), num(*e)]),
            ),
        )?;
    }
    out.write_json("verify.json", &run.report)?;
    for v in &run.report.verdicts {
        println!(
            "{:<16} {:<7} {}",
            v.property,
            format!("{:?}", v.status).to_lowercase(),
            v.detail
        );
    }
    Ok(if run.report.passed {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

fn cmd_oracle_compare(ctx: &Context, out: &mut OutputDir, grid: &Option<String>) -> Result<i32> {
    let taus = grid_for(grid, &ctx.model)?;
    let eps_t = ctx.model.eps_terminal();
    let mut rows = Vec::with_capacity(taus.len());
    let mut worst: f64 = 0.0;
    let mut failure = None;
    for &tau in &taus {
        let pair = oracle_eps(tau, &ctx.model)
            .and_then(|o| Ok((o, solve_eps(tau, &ctx.model, &ctx.opts)?)));
        match pair {
            Ok((o, d)) => {
                let rel = (d.eps - o.eps).abs() / o.eps.max(1e-3 * eps_t);
                worst = worst.max(rel);
                rows.push(vec![
                    num(tau),
                    num(d.eps),
                    num(o.eps),
                    num(rel),
                    o.iterations.to_string(),
                    num(o.duality_gap),
                ]);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    out.write(
        "oracle_compare.csv",
        &csv(
            &[
                "tau",
                "eps_dual",
                "eps_oracle",
                "rel_diff",
                "oracle_iterations",
                "duality_gap",
            ],
            rows,
        ),
    )?;
    out.write_json(
        "oracle_compare.json",
        &json!({ "points": taus.len(), "max_rel_diff": worst, "tolerance": 1e-3, "pass": failure.is_none() && worst <= 1e-3 }),
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(if worst <= 1e-3 { EXIT_OK } else { EXIT_FAILED })
}
