use std::fs;
use std::path::Path;

use heatctl::cli::{
    run_from, EXIT_FAILED, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_OK,
};
use heatctl::scenario::Scenario;
use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> i32 {
    run_from(std::iter::once("heatctl").chain(args.iter().copied()))
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_column(path: &Path, col: usize) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

fn write_scenario(dir: &Path, s: &Scenario) -> String {
    let path = dir.join(format!("{}.toml", s.name));
    fs::write(&path, s.to_toml()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn eps_curve_standard_is_increasing_and_manifested() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("curve");
    assert_eq!(run(&["eps-curve", "--out", &out_arg(&out)]), EXIT_OK);
    let eps = csv_column(&out.join("eps_curve.csv"), 1);
    assert_eq!(eps.len(), 17);
    assert!(eps.windows(2).all(|w| w[1] > w[0]));
    let report = json(&out.join("eps_curve.json"));
    assert_eq!(report["monotone"], true);
    assert_eq!(report["degenerate"], false);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(
        manifest["scenario_hash"],
        Scenario::preset("standard").unwrap().content_hash()
    );
    assert_eq!(manifest["exit_code"], 0);
    let files: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["file"].as_str().unwrap())
        .collect();
    assert_eq!(files, ["scenario.toml", "eps_curve.csv", "eps_curve.json"]);
}

#[test]
fn csv_output_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        assert_eq!(
            run(&[
                "eps-curve",
                "--seed",
                "7",
                "--grid",
                "0:0.9:6",
                "--out",
                &out_arg(dir)
            ]),
            EXIT_OK
        );
    }
    let text = fs::read_to_string(a.join("eps_curve.csv")).unwrap();
    assert_eq!(text, fs::read_to_string(b.join("eps_curve.csv")).unwrap());
    // 17 significant digits per float field.
    let field = text.lines().nth(2).unwrap().split(',').nth(1).unwrap();
    let mantissa = field.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{field}");
}

#[test]
fn single_point_grid_gives_one_row() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(
        run(&[
            "eps-curve",
            "--grid",
            "0:0:1",
            "--out",
            &out_arg(tmp.path())
        ]),
        EXIT_OK
    );
    let eps = csv_column(&tmp.path().join("eps_curve.csv"), 1);
    assert_eq!(eps.len(), 1);
    assert!((eps[0] - 0.2161945564).abs() < 1e-6);
}

#[test]
fn zero_bound_curve_is_constant_and_degenerate() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(
        run(&[
            "eps-curve",
            "--scenario",
            "zero-bound",
            "--out",
            &out_arg(tmp.path())
        ]),
        EXIT_OK
    );
    let eps = csv_column(&tmp.path().join("eps_curve.csv"), 1);
    assert!(eps.iter().all(|&e| e == eps[0]));
    assert_eq!(json(&tmp.path().join("eps_curve.json"))["degenerate"], true);
}

#[test]
fn tau_command_cases() {
    let tmp = TempDir::new().unwrap();
    let dir = |n: &str| out_arg(&tmp.path().join(n));

    assert_eq!(
        run(&["tau", "--eps", "0.29", "--out", &dir("mid")]),
        EXIT_OK
    );
    let rec = json(&tmp.path().join("mid/tau.json"));
    assert!(rec["round_trip_residual"].as_f64().unwrap() <= 1e-3 * 0.3679934);
    assert_eq!(rec["control_norms"].as_array().unwrap().len(), 64);
    assert!(tmp.path().join("mid/bang_bang.csv").exists());

    let e0 = format!("{}", 0.216194556441359);
    assert_eq!(run(&["tau", "--eps", &e0, "--out", &dir("zero")]), EXIT_OK);
    assert!(
        json(&tmp.path().join("zero/tau.json"))["tau"]
            .as_f64()
            .unwrap()
            <= 1e-4
    );

    assert_eq!(run(&["tau", "--eps", "0.5", "--out", &dir("sat")]), EXIT_OK);
    assert_eq!(json(&tmp.path().join("sat/tau.json"))["saturated"], true);

    assert_eq!(
        run(&["tau", "--eps", "0.1", "--out", &dir("inf")]),
        EXIT_INFEASIBLE
    );
    assert_eq!(json(&tmp.path().join("inf/tau.json"))["infeasible"], true);
    assert_eq!(
        json(&tmp.path().join("inf/manifest.json"))["exit_code"],
        EXIT_INFEASIBLE
    );

    assert_eq!(
        run(&["tau", "--eps", "-1", "--out", &dir("neg")]),
        EXIT_INPUT
    );
}

#[test]
fn input_errors_exit_four() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(
        &bad,
        Scenario::preset("standard")
            .unwrap()
            .to_toml()
            .replace("steps = 64", "steps = \"many\""),
    )
    .unwrap();
    let out = out_arg(&tmp.path().join("o"));
    assert_eq!(
        run(&[
            "eps-curve",
            "--scenario",
            bad.to_str().unwrap(),
            "--out",
            &out
        ]),
        EXIT_INPUT
    );
    assert_eq!(
        run(&["eps-curve", "--scenario", "no-such-preset", "--out", &out]),
        EXIT_INPUT
    );
    assert_eq!(
        run(&["eps-curve", "--grid", "0:1:3", "--out", &out]),
        EXIT_INPUT
    );
    assert_eq!(run(&["tau", "--out", &out]), EXIT_INPUT);
    assert_eq!(run(&["frobnicate"]), EXIT_INPUT);
    assert_eq!(run(&["preset", "nope"]), EXIT_INPUT);
    assert_eq!(run(&["preset", "standard"]), EXIT_OK);
}

#[test]
fn non_convergence_keeps_partial_outputs() {
    let tmp = TempDir::new().unwrap();
    let mut s = Scenario::preset("standard").unwrap();
    s.name = "starved".into();
    s.tolerances.dual_max_iters = 2;
    let path = write_scenario(tmp.path(), &s);
    let out = tmp.path().join("o");
    assert_eq!(
        run(&[
            "eps-curve",
            "--scenario",
            &path,
            "--grid",
            "0:0.5:3",
            "--out",
            &out_arg(&out)
        ]),
        EXIT_NOT_CONVERGED
    );
    let text = fs::read_to_string(out.join("eps_curve.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.contains("false"));
    assert_eq!(
        json(&out.join("manifest.json"))["exit_code"],
        EXIT_NOT_CONVERGED
    );
}

fn verdicts(path: &Path) -> Vec<(String, String)> {
    json(path)["verdicts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| {
            (
                v["property"].as_str().unwrap().to_string(),
                v["status"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

#[test]
fn verify_standard_passes_everything() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run(&["verify", "--out", &out_arg(tmp.path())]), EXIT_OK);
    let v = verdicts(&tmp.path().join("verify.json"));
    assert_eq!(v.len(), 6);
    assert!(v.iter().all(|(_, s)| s == "pass"), "{v:?}");
    let rows = fs::read_to_string(tmp.path().join("bang_bang.csv")).unwrap();
    assert!(rows.starts_with("t,norm,bound\n"));
}

#[test]
fn verify_zero_bound_skips_and_succeeds() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(
        run(&[
            "verify",
            "--scenario",
            "zero-bound",
            "--out",
            &out_arg(tmp.path())
        ]),
        EXIT_OK
    );
    let v = verdicts(&tmp.path().join("verify.json"));
    let status = |p: &str| v.iter().find(|(n, _)| n == p).unwrap().1.clone();
    assert_eq!(status("bang_bang"), "skipped");
    assert_eq!(status("inverse"), "skipped");
    assert_eq!(status("oracle_agreement"), "pass");
}

#[test]
fn verify_single_mode_passes() {
    let tmp = TempDir::new().unwrap();
    let mut s = Scenario::preset("standard").unwrap();
    s.name = "one-mode".into();
    s.modes = 1;
    let path = write_scenario(tmp.path(), &s);
    let out = tmp.path().join("o");
    assert_eq!(
        run(&["verify", "--scenario", &path, "--out", &out_arg(&out)]),
        EXIT_OK
    );
    assert!(verdicts(&out.join("verify.json"))
        .iter()
        .all(|(_, s)| s == "pass"));
}

#[test]
fn verify_failure_exits_one() {
    // Two steps: the transcription is far from the continuous-time dual.
    let tmp = TempDir::new().unwrap();
    let mut s = Scenario::preset("standard").unwrap();
    s.name = "coarse".into();
    s.steps = 2;
    s.bound = heatctl::scenario::BoundSpec::Constant { value: 1.0 };
    let path = write_scenario(tmp.path(), &s);
    let out = tmp.path().join("o");
    assert_eq!(
        run(&["verify", "--scenario", &path, "--out", &out_arg(&out)]),
        EXIT_FAILED
    );
    let v = verdicts(&out.join("verify.json"));
    assert_eq!(v[0], ("oracle_agreement".to_string(), "fail".to_string()));
}

#[test]
fn oracle_compare_and_refine() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(
        run(&[
            "oracle-compare",
            "--grid",
            "0:0.75:4",
            "--refine",
            "--out",
            &out_arg(&out)
        ]),
        EXIT_OK
    );
    let report = json(&out.join("oracle_compare.json"));
    assert_eq!(report["pass"], true);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["refine"], true);
    assert_eq!(
        manifest["scenario_hash"],
        Scenario::preset("standard")
            .unwrap()
            .refined()
            .content_hash()
    );
    let s = Scenario::load(out.join("scenario.toml")).unwrap();
    assert_eq!((s.modes, s.steps, s.tolerances.quad_order), (32, 128, 16));
}

#[test]
fn scenario_files_round_trip_through_the_cli() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(
        run(&[
            "eps-curve",
            "--scenario",
            "rectangle",
            "--grid",
            "0:0:1",
            "--out",
            &out_arg(&out)
        ]),
        EXIT_OK
    );
    assert_eq!(
        Scenario::load(out.join("scenario.toml")).unwrap(),
        Scenario::preset("rectangle").unwrap()
    );
}
