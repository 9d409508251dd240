//! End-to-end checks of the `kgsm` binary: exit codes, artifact layout,
//! output formats, and seed precedence.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

use kgsm::solvers::MomentumParams;
use kgsm::theory;

const EXIT_OK: i32 = 0;
const EXIT_INVALID: i32 = 2;
const EXIT_IO: i32 = 3;

fn kgsm() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kgsm"));
    // A seed inherited from the caller's environment must not leak in.
    cmd.env_remove("KGSM_SEED");
    cmd
}

fn run_cli(args: &[&str]) -> Output {
    kgsm().args(args).output().expect("binary spawns")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is utf-8")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is utf-8")
}

fn expect_status(out: &Output, code: i32, what: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{what}\nstdout: {}\nstderr: {}",
        stdout_of(out),
        stderr_of(out)
    );
}

fn read_json(path: &Path) -> Value {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parse {}: {e}", path.display()))
}

/// Strict RFC 4180 parse; rejects ragged rows.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .unwrap_or_else(|e| panic!("open {}: {e}", path.display()));
    let header = reader.headers().expect("headers").iter().map(str::to_string).collect();
    let rows = reader
        .records()
        .map(|r| r.expect("record").iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

/// Numeric fields are written with `{:.16e}`, which round-trips f64 exactly.
fn expect_full_precision(field: &str) {
    let value: f64 = field.parse().unwrap_or_else(|e| panic!("parse {field:?}: {e}"));
    assert_eq!(format!("{value:.16e}"), field, "field lost precision");
}

fn sorted_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap_or_else(|e| panic!("list {}: {e}", dir.display()))
        .map(|entry| entry.expect("entry").file_name().into_string().expect("utf-8 name"))
        .collect();
    names.sort();
    names
}

/// Minimal well-formedness check: every element closes, and every ampersand
/// starts a known entity. Enough to catch truncated output or unescaped text.
fn expect_well_formed_svg(text: &str) {
    assert!(text.contains("<svg"), "not an svg document");
    let mut stack: Vec<&str> = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        let close = open + rest[open..].find('>').expect("unclosed angle bracket");
        let tag = &rest[open + 1..close];
        rest = &rest[close + 1..];
        if tag.starts_with('?') || tag.starts_with('!') {
            continue;
        }
        if let Some(name) = tag.strip_prefix('/') {
            let opened = stack.pop().unwrap_or_else(|| panic!("stray closing </{name}>"));
            assert_eq!(opened, name, "mismatched closing tag");
        } else if !tag.ends_with('/') {
            stack.push(tag.split_whitespace().next().expect("tag name"));
        }
    }
    assert!(stack.is_empty(), "unclosed elements: {stack:?}");
    for (i, _) in text.match_indices('&') {
        let entity = &text[i + 1..text.len().min(i + 8)];
        let known = ["amp;", "lt;", "gt;", "quot;", "apos;"];
        assert!(
            known.iter().any(|e| entity.starts_with(e)) || entity.starts_with('#'),
            "bare ampersand in svg"
        );
    }
}

#[test]
fn help_screens_and_version_exit_clean() {
    for args in [
        vec!["--help"],
        vec!["run", "--help"],
        vec!["sweep", "--help"],
        vec!["theory", "--help"],
        vec!["figure", "--help"],
        vec!["generate", "--help"],
    ] {
        let out = run_cli(&args);
        expect_status(&out, EXIT_OK, &format!("{args:?}"));
        assert!(!stdout_of(&out).is_empty(), "{args:?} printed nothing");
    }
    let out = run_cli(&["--version"]);
    expect_status(&out, EXIT_OK, "--version");
    assert!(stdout_of(&out).starts_with("kgsm "));
}

#[test]
fn invalid_usage_exits_two_with_a_reason() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let out_dir = tmp.path().join("out");
    let out_str = out_dir.to_str().expect("utf-8 path");

    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["--bogus"], "bogus"),
        (vec!["figure", "nope"], "nope"),
        (vec!["figure"], "study id or --list"),
        (vec!["theory", "--eta", "2.0", "--mass", "0.5", "--beta", "0.5"], "eta"),
        (
            vec!["theory", "--eta", "0.01", "--mass", "0.5", "--beta", "1.0"],
            "smoothing factor must lie in [0, 1)",
        ),
        (
            vec![
                "run", "--preset", "one-small", "--method", "kaczmarz", "--mass", "0.5",
                "--iters", "10", "--out", out_str,
            ],
            "mass",
        ),
        (
            vec!["run", "--preset", "nope", "--method", "kaczmarz", "--iters", "10", "--out", out_str],
            "unknown spectrum preset \"nope\"",
        ),
        (
            vec!["run", "--preset", "one-small", "--method", "kaczmarz", "--iters", "0", "--out", out_str],
            "iters must be positive",
        ),
        (
            vec![
                "run", "--preset", "one-small", "--method", "kaczmarz", "--iters", "10",
                "--track", "25", "--out", out_str,
            ],
            "tracked direction 25 out of range for 20 columns",
        ),
        (
            vec!["generate", "--sigma", "1,0.5", "--cols", "4", "--rows", "6", "--out", out_str],
            "--cols conflicts with --sigma",
        ),
        (
            vec!["generate", "--sigma", "1,-1", "--rows", "6", "--seed", "1", "--out", out_str],
            "non-positive value -1",
        ),
        (
            vec![
                "sweep", "--preset", "one-small", "--mass-grid", "0.5,oops", "--beta-grid", "0.9",
                "--iters", "10", "--seed", "1", "--out", out_str,
            ],
            "cannot parse number \"oops\"",
        ),
    ];
    for (args, needle) in cases {
        let out = run_cli(&args);
        expect_status(&out, EXIT_INVALID, &format!("{args:?}"));
        let err = stderr_of(&out);
        assert!(err.contains("error"), "{args:?}: stderr {err:?} has no error marker");
        assert!(err.contains(needle), "{args:?}: stderr {err:?} misses {needle:?}");
    }
}

#[test]
fn config_parse_failures_exit_two() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let out_str = tmp.path().join("out");
    let out_str = out_str.to_str().expect("utf-8 path");

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\"iters\": \"soup\"}").expect("write config");
    let out = run_cli(&["run", "--config", bad.to_str().unwrap(), "--out", out_str]);
    expect_status(&out, EXIT_INVALID, "malformed config");
    assert!(stderr_of(&out).contains("cannot parse config"));

    // Unknown fields are rejected rather than silently ignored.
    let stray = tmp.path().join("stray.json");
    fs::write(
        &stray,
        json!({
            "system": {"kind": "preset", "name": "one-small", "rows": 100, "cols": 20},
            "methods": [{"name": "kaczmarz"}],
            "iters": 5,
            "comment": "stray",
        })
        .to_string(),
    )
    .expect("write config");
    let out = run_cli(&["run", "--config", stray.to_str().unwrap(), "--out", out_str]);
    expect_status(&out, EXIT_INVALID, "config with unknown field");
    assert!(stderr_of(&out).contains("unknown field `comment`"));
}

#[test]
fn io_failures_exit_three() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let block = tmp.path().join("block");
    fs::write(&block, "a regular file").expect("write blocker");

    // The output directory cannot be created under a regular file.
    let out = run_cli(&[
        "run", "--preset", "one-small", "--method", "kaczmarz", "--iters", "50",
        "--seed", "1", "--out", block.join("sub").to_str().unwrap(),
    ]);
    expect_status(&out, EXIT_IO, "out dir under a regular file");

    let missing = tmp.path().join("missing.json");
    let out = run_cli(&["run", "--config", missing.to_str().unwrap()]);
    expect_status(&out, EXIT_IO, "missing config file");
    assert!(stderr_of(&out).contains("cannot read"));
}

#[test]
fn run_writes_full_precision_traces_and_manifest() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let out = run_cli(&[
        "run", "--preset", "one-small", "--method", "kaczmarz", "--method", "kgsm",
        "--mass", "0.9", "--beta", "auto", "--iters", "2000", "--track", "19",
        "--seed", "5", "--out", tmp.path().to_str().unwrap(),
    ]);
    expect_status(&out, EXIT_OK, "paired run");
    let text = stdout_of(&out);
    assert!(text.contains("method=kaczmarz final_l2=4.798528e-2 diverged_at=-"), "stdout: {text}");
    assert!(text.contains("method=kgsm final_l2="), "stdout: {text}");
    assert!(text.contains("wrote 3 files to"), "stdout: {text}");

    let dir = tmp.path().join("run");
    assert_eq!(sorted_names(&dir), ["kaczmarz.csv", "kgsm.csv", "manifest.json"]);

    let manifest = read_json(&dir.join("manifest.json"));
    assert_eq!(manifest["id"], "run");
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["files"], json!(["kaczmarz.csv", "kgsm.csv"]));
    assert_eq!(manifest["divergence_flags"], json!([]));
    let config = &manifest["params"]["config"];
    assert_eq!(config["iters"], 2000);
    assert_eq!(config["trials"], 1);
    assert_eq!(config["seed"], 5);
    assert_eq!(config["tracked_dirs"], json!([19]));
    let summary = &manifest["params"]["summaries"][0];
    assert_eq!(summary["method"], "kaczmarz");
    assert_eq!(summary["diverged_at"], Value::Null);
    let manifest_text = fs::read_to_string(dir.join("manifest.json")).expect("manifest text");
    assert!(
        manifest_text.contains("\"final_l2\": 0.0479852822905763,"),
        "plain trace ends at a different error:\n{manifest_text}"
    );

    for name in ["kaczmarz.csv", "kgsm.csv"] {
        let (header, rows) = read_csv(&dir.join(name));
        assert_eq!(header, ["k", "l2", "dir_20"], "{name}");
        assert_eq!(rows.len(), 2001, "{name}: start point plus one record per iteration");
        assert_eq!(rows[0][0], "0", "{name}");
        assert_eq!(rows.last().expect("rows")[0], "2000", "{name}");
        for row in &rows {
            row[0].parse::<u64>().expect("iteration index");
            expect_full_precision(&row[1]);
            expect_full_precision(&row[2]);
        }
    }
}

#[test]
fn figure_rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().expect("tempdir");
    for sub in ["a", "b"] {
        let out = run_cli(&[
            "figure", "fig04", "--seed", "9", "--out", tmp.path().join(sub).to_str().unwrap(),
        ]);
        expect_status(&out, EXIT_OK, "fig04");
        assert!(stdout_of(&out).contains("wrote 4 files to"));
    }

    let dir_a = tmp.path().join("a/fig04");
    let dir_b = tmp.path().join("b/fig04");
    let names = sorted_names(&dir_a);
    assert_eq!(names, ["boundary_curve.csv", "fig04_plane.svg", "manifest.json", "markers.csv"]);
    assert_eq!(names, sorted_names(&dir_b));
    for name in &names {
        let a = fs::read(dir_a.join(name)).expect("read a");
        let b = fs::read(dir_b.join(name)).expect("read b");
        assert_eq!(a, b, "{name} differs between identical reruns");
    }

    let manifest = read_json(&dir_a.join("manifest.json"));
    assert_eq!(manifest["id"], "fig04");
    assert_eq!(manifest["seed"], 9);
    let mut listed: Vec<String> = manifest["files"]
        .as_array()
        .expect("files array")
        .iter()
        .map(|v| v.as_str().expect("file name").to_string())
        .collect();
    listed.sort();
    assert_eq!(listed, ["boundary_curve.csv", "fig04_plane.svg", "markers.csv"]);

    read_csv(&dir_a.join("boundary_curve.csv"));
    read_csv(&dir_a.join("markers.csv"));
    let svg = fs::read_to_string(dir_a.join("fig04_plane.svg")).expect("read svg");
    expect_well_formed_svg(&svg);
}

// The theory checks compare the printed text, not reparsed floats: parsing
// a 16-digit mantissa back through serde_json can land one ulp off, while
// the serializer is exact for both processes.

#[test]
fn theory_json_matches_library_analysis() {
    let out = run_cli(&["theory", "--eta", "0.01", "--mass", "0.25", "--beta", "0.5"]);
    expect_status(&out, EXIT_OK, "theory");
    let params = MomentumParams::new(0.25, 0.5).expect("params");
    let analysis = theory::analyze(0.01, &params).expect("analysis");
    let expected =
        format!("{}\n", serde_json::to_string_pretty(&analysis.to_json()).expect("serializes"));
    assert_eq!(stdout_of(&out), expected, "binary must report the library's numbers verbatim");
    assert!(expected.contains("\"regime\": \"RealDistinct\""));

    // "auto" lands exactly on the repeated-root boundary.
    let eta = 0.0004 / 19.0004;
    let out =
        run_cli(&["theory", "--eta", &format!("{eta:.17e}"), "--mass", "0.9", "--beta", "auto"]);
    expect_status(&out, EXIT_OK, "theory with auto smoothing");
    let beta0 = theory::optimal_beta(eta, 0.9);
    let params = MomentumParams::new(0.9, beta0).expect("params");
    let analysis = theory::analyze(eta, &params).expect("analysis");
    let expected =
        format!("{}\n", serde_json::to_string_pretty(&analysis.to_json()).expect("serializes"));
    assert_eq!(stdout_of(&out), expected, "auto must resolve to the critical beta");
    assert!(expected.contains("\"regime\": \"RealRepeated\""));
}

#[test]
fn theory_trajectory_lists_expected_iterates() {
    let out = run_cli(&[
        "theory", "--eta", "0.01", "--mass", "0.25", "--beta", "0.5", "--trajectory", "3",
    ]);
    expect_status(&out, EXIT_OK, "theory trajectory");
    let text = stdout_of(&out);

    let params = MomentumParams::new(0.25, 0.5).expect("params");
    let analysis = theory::analyze(0.01, &params).expect("analysis");
    let traj = theory::expected_error_trajectory(&analysis, 1.0, 2);
    let mut doc = analysis.to_json();
    let mut rows = vec![json!({ "k": 0, "expected": 1.0 })];
    for k in 1..=3usize {
        rows.push(json!({ "k": k, "expected": traj.value(k - 1) }));
    }
    doc["e0"] = json!(1.0);
    doc["trajectory"] = Value::Array(rows);
    let expected = format!("{}\n", serde_json::to_string_pretty(&doc).expect("serializes"));
    assert_eq!(text, expected);

    // Spot values: k=0 echoes the start error, k=1 is the plain contraction
    // (1 - eta) e0, later iterates follow the smoothed recurrence.
    for needle in [
        "\"expected\": 1.0,",
        "\"expected\": 0.99,",
        "\"expected\": 0.97885,",
        "\"expected\": 0.96704275,",
    ] {
        assert!(text.contains(needle), "missing {needle} in:\n{text}");
    }
}

#[test]
fn seed_comes_from_flag_env_or_config_in_that_order() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let base = [
        "run", "--preset", "one-small", "--method", "kaczmarz", "--iters", "500", "--track", "19",
    ];
    let dir = |sub: &str| tmp.path().join(sub);
    let run_seeded = |sub: &str, extra: &[&str], env: Option<&str>| {
        let mut cmd = kgsm();
        cmd.args(base).args(extra).arg("--out").arg(dir(sub));
        if let Some(value) = env {
            cmd.env("KGSM_SEED", value);
        }
        let out = cmd.output().expect("binary spawns");
        expect_status(&out, EXIT_OK, sub);
        out
    };

    let out = run_seeded("flag", &["--seed", "77"], None);
    assert!(stdout_of(&out).contains("final_l2=4.912485e-1"));
    run_seeded("env", &[], Some("77"));
    run_seeded("both", &["--seed", "77"], Some("1"));
    run_seeded("other", &["--seed", "78"], None);

    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        json!({
            "system": {"kind": "preset", "name": "one-small", "rows": 100, "cols": 20},
            "methods": [{"name": "kaczmarz"}],
            "iters": 500,
            "tracked_dirs": [19],
            "seed": 77,
            "out": dir("config"),
        })
        .to_string(),
    )
    .expect("write config");
    let out = run_cli(&["run", "--config", cfg.to_str().unwrap()]);
    expect_status(&out, EXIT_OK, "config seed");

    let trace = |sub: &str| fs::read(dir(sub).join("run/kaczmarz.csv")).expect("trace");
    let reference = trace("flag");
    assert_eq!(reference, trace("env"), "env seed draws a different sequence");
    assert_eq!(reference, trace("both"), "flag must win over the environment");
    assert_eq!(reference, trace("config"), "config seed draws a different sequence");
    assert_ne!(reference, trace("other"), "a different seed changed nothing");

    let mut cmd = kgsm();
    cmd.args(base).arg("--out").arg(dir("bad")).env("KGSM_SEED", "borked");
    let out = cmd.output().expect("binary spawns");
    expect_status(&out, EXIT_INVALID, "malformed KGSM_SEED");
    assert!(stderr_of(&out).contains("KGSM_SEED must be an unsigned integer, got \"borked\""));
}

#[test]
fn config_file_drives_runs_and_flags_override_it() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        json!({
            "system": {"kind": "preset", "name": "one-small", "rows": 100, "cols": 20},
            "methods": [{"name": "kgsm", "mass": 0.9, "beta": "auto"}],
            "iters": 300,
            "tracked_dirs": [19],
            "seed": 4,
            "out": tmp.path().join("from_config"),
        })
        .to_string(),
    )
    .expect("write config");

    let out = run_cli(&["run", "--config", cfg.to_str().unwrap()]);
    expect_status(&out, EXIT_OK, "config run");
    let dir = tmp.path().join("from_config/run");
    assert_eq!(sorted_names(&dir), ["kgsm.csv", "manifest.json"]);
    let manifest = read_json(&dir.join("manifest.json"));
    assert_eq!(manifest["params"]["config"]["iters"], 300);
    assert_eq!(manifest["params"]["config"]["seed"], 4);
    assert_eq!(manifest["params"]["config"]["methods"][0]["beta"], "auto");
    let (_, rows) = read_csv(&dir.join("kgsm.csv"));
    assert_eq!(rows.len(), 301);

    // Flags override individual fields without touching the rest.
    let out = run_cli(&[
        "run", "--config", cfg.to_str().unwrap(), "--iters", "150", "--seed", "6",
        "--out", tmp.path().join("from_flags").to_str().unwrap(),
    ]);
    expect_status(&out, EXIT_OK, "config run with overrides");
    let dir = tmp.path().join("from_flags/run");
    let manifest = read_json(&dir.join("manifest.json"));
    assert_eq!(manifest["params"]["config"]["iters"], 150);
    assert_eq!(manifest["params"]["config"]["seed"], 6);
    assert_eq!(manifest["params"]["config"]["methods"][0]["mass"], 0.9);
    let (_, rows) = read_csv(&dir.join("kgsm.csv"));
    assert_eq!(rows.len(), 151);
}

#[test]
fn sweep_writes_one_row_per_cell_in_grid_order() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let out = run_cli(&[
        "sweep", "--preset", "one-small", "--mass-grid", "0.5,0.9",
        "--beta-grid", "0.9,0.95,0.99", "--iters", "300", "--seed", "3",
        "--out", tmp.path().to_str().unwrap(),
    ]);
    expect_status(&out, EXIT_OK, "sweep");
    let csv_path = tmp.path().join("sweep/sweep.csv");
    assert_eq!(
        stdout_of(&out),
        format!("6 cells: 0 converged, 0 diverged; wrote {}\n", csv_path.display())
    );

    let (header, rows) = read_csv(&csv_path);
    assert_eq!(
        header,
        ["mass", "beta", "regime", "diverged_at", "converged", "initial_abs", "final_abs"]
    );
    assert_eq!(rows.len(), 6);
    for (i, row) in rows.iter().enumerate() {
        let mass: f64 = row[0].parse().expect("mass");
        let beta: f64 = row[1].parse().expect("beta");
        assert_eq!(mass, [0.5, 0.9][i / 3], "rows iterate mass-major");
        assert_eq!(beta, [0.9, 0.95, 0.99][i % 3]);
        assert!(["RealDistinct", "RealRepeated", "ComplexPair"].contains(&row[2].as_str()));
        assert!(row[3].is_empty(), "no cell diverged in this grid");
        assert_eq!(row[4], "false");
        expect_full_precision(&row[0]);
        expect_full_precision(&row[1]);
        expect_full_precision(&row[5]);
        expect_full_precision(&row[6]);
        // One system serves the whole grid, so the start error is shared.
        assert_eq!(row[5], rows[0][5]);
    }
}

#[test]
fn generated_system_is_internally_consistent() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let out = run_cli(&[
        "generate", "--sigma", "1,1,0.5", "--rows", "8", "--seed", "2",
        "--out", tmp.path().to_str().unwrap(),
    ]);
    expect_status(&out, EXIT_OK, "generate");
    assert!(stdout_of(&out).contains("8 x 3 system written to"));

    let dir = tmp.path().join("generate");
    assert_eq!(
        sorted_names(&dir),
        ["manifest.json", "matrix.csv", "rhs.csv", "solution.csv", "system.json"]
    );

    let meta = read_json(&dir.join("system.json"));
    assert_eq!(meta["rows"], 8);
    assert_eq!(meta["cols"], 3);
    assert_eq!(meta["spectrum"], json!([1.0, 1.0, 0.5]));
    assert_eq!(meta["frobenius_sq"].as_f64().expect("frobenius_sq"), 2.25);
    let meta_text = fs::read_to_string(dir.join("system.json")).expect("meta text");
    assert!(meta_text.contains("\"eta_min\": 0.1111111111111111"), "{meta_text}");

    let (header, rows) = read_csv(&dir.join("matrix.csv"));
    assert_eq!(header, ["c0", "c1", "c2"]);
    assert_eq!(rows.len(), 8);
    let matrix: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| row.iter().map(|f| f.parse().expect("entry")).collect())
        .collect();

    let column = |name: &str, want_header: &str, len: usize| -> Vec<f64> {
        let (header, rows) = read_csv(&dir.join(name));
        assert_eq!(header, [want_header], "{name}");
        assert_eq!(rows.len(), len, "{name}");
        rows.iter().map(|row| row[0].parse().expect("value")).collect()
    };
    let rhs = column("rhs.csv", "b", 8);
    let solution = column("solution.csv", "x", 3);

    // The emitted triple must satisfy A x = b to full precision, and the
    // squared entries must sum to the declared Frobenius norm.
    let mut frobenius_sq = 0.0;
    for (row, b) in matrix.iter().zip(&rhs) {
        let ax: f64 = row.iter().zip(&solution).map(|(a, x)| a * x).sum();
        assert!((ax - b).abs() <= 1e-12, "residual {} on a consistent system", ax - b);
        frobenius_sq += row.iter().map(|a| a * a).sum::<f64>();
    }
    assert!((frobenius_sq - 2.25).abs() <= 1e-12, "frobenius norm drifted: {frobenius_sq}");
}

#[test]
fn figure_list_names_every_study() {
    let out = run_cli(&["figure", "--list"]);
    expect_status(&out, EXIT_OK, "figure --list");
    let listing = stdout_of(&out);
    let ids: Vec<&str> = listing.lines().collect();
    assert_eq!(
        ids,
        [
            "fig01", "fig02", "fig03", "fig04", "fig05", "fig06", "fig07", "fig_manysmall",
            "fig08", "fig09", "fig_sign", "gauss_a1", "hbm_a2", "spectra_a3", "phase_a4",
        ]
    );
}

#[test]
fn divergent_run_reports_the_iteration_and_exits_zero() {
    let tmp = tempfile::tempdir().expect("tempdir");
    // Deep inside the unstable wedge: the iterates blow up long before the
    // budget runs out. Blow-up is a result, not a failure.
    let out = run_cli(&[
        "run", "--preset", "one-small", "--method", "kgsm", "--mass", "0.965",
        "--beta", "0.932", "--iters", "400000", "--track", "19", "--seed", "1",
        "--out", tmp.path().to_str().unwrap(),
    ]);
    expect_status(&out, EXIT_OK, "divergent run");
    let text = stdout_of(&out);
    assert!(text.contains("final_l2=inf"), "stdout: {text}");
    assert!(text.contains("diverged_at="), "stdout: {text}");
    assert!(!text.contains("diverged_at=-"), "stdout: {text}");

    let manifest = read_json(&tmp.path().join("run/manifest.json"));
    let flag = &manifest["divergence_flags"][0];
    assert_eq!(flag["trace"], "kgsm.csv");
    let at = flag["at"].as_u64().expect("at");
    assert!(at >= 1);
    assert_eq!(manifest["params"]["summaries"][0]["diverged_at"].as_u64(), Some(at));
}
