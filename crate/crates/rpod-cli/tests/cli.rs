use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rpod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpod")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("rpod-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn shipped(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .display()
        .to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Exit code and the single stderr line.
fn failure(out: &Output) -> (i32, String) {
    let err = String::from_utf8_lossy(&out.stderr).trim_end().to_string();
    assert_eq!(err.lines().count(), 1, "{err}");
    (out.status.code().unwrap(), err)
}

const SYNTHETIC: &str = r#"
seed = 5

[model]
type = "synthetic"
kind = "exact"
states = 30
order = 3

[[methods]]
type = "rpod-star"
m = 8
n = 8
spacing = 10
order = "select"

[[methods]]
type = "bpod-modal"
primal_steps = 30

[evaluation]
horizon = 20
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn scalars(dir: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(dir.join("scalars.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn synthetic_run_writes_every_artifact() {
    let d = scratch("artifacts");
    let cfg = write_config(&d, "c.toml", SYNTHETIC);
    let out = d.join("out");
    ok(&rpod(&["run", "--config", s(&cfg), "--out", s(&out), "--single-thread"]));
    for f in [
        "config.toml",
        "manifest.toml",
        "summary.toml",
        "markov_error.csv",
        "markov_norm.csv",
        "output_error.csv",
        "output_norm.csv",
        "frequency_error.csv",
        "frequency_response.csv",
        "scalars.csv",
        "rom-rpod-star/rom.toml",
        "rom-bpod-modal/A.mtx",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let rows = scalars(&out);
    assert_eq!(&rows[0][2], "3");
    for r in &rows {
        assert!(r[4].parse::<f64>().unwrap() <= 1e-8, "{r:?}");
    }
    let manifest: toml::Value = toml::from_str(&fs::read_to_string(out.join("manifest.toml")).unwrap()).unwrap();
    assert_eq!(manifest["seed"].as_integer(), Some(5));
    assert_eq!(manifest["threads"].as_str(), Some("single"));
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    let header = fs::read_to_string(out.join("markov_norm.csv")).unwrap();
    assert!(header.starts_with("step,full,rpod-star,bpod-modal\n"));
}

#[test]
fn csv_values_carry_seventeen_significant_digits() {
    let d = scratch("digits");
    let cfg = write_config(&d, "c.toml", SYNTHETIC);
    let out = d.join("out");
    ok(&rpod(&["run", "--config", s(&cfg), "--out", s(&out), "--single-thread"]));
    let text = fs::read_to_string(out.join("markov_error.csv")).unwrap();
    let value = text.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    let mantissa = value.split('e').next().unwrap().replace(['-', '.'], "");
    assert_eq!(mantissa.len(), 17, "{value}");
}

#[test]
fn reruns_and_manifest_reruns_are_bit_identical() {
    let d = scratch("rerun");
    let cfg = write_config(&d, "c.toml", SYNTHETIC);
    let (a, b, c) = (d.join("a"), d.join("b"), d.join("c"));
    ok(&rpod(&["run", "--config", s(&cfg), "--out", s(&a), "--single-thread"]));
    ok(&rpod(&["run", "--config", s(&cfg), "--out", s(&b), "--single-thread"]));
    ok(&rpod(&["run", "--config", s(&a.join("config.toml")), "--out", s(&c), "--single-thread"]));
    assert_eq!(csvs(&a), csvs(&b));
    assert_eq!(csvs(&a), csvs(&c));
    assert_eq!(
        fs::read(a.join("manifest.toml")).unwrap(),
        fs::read(c.join("manifest.toml")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("rom-rpod-star/A.mtx")).unwrap(),
        fs::read(c.join("rom-rpod-star/A.mtx")).unwrap()
    );
}

#[test]
fn seed_flag_changes_the_run_and_is_recorded() {
    let d = scratch("seed");
    let cfg = write_config(&d, "c.toml", SYNTHETIC);
    let (a, b) = (d.join("a"), d.join("b"));
    ok(&rpod(&["run", "--config", s(&cfg), "--out", s(&a), "--single-thread"]));
    ok(&rpod(&["run", "--config", s(&cfg), "--out", s(&b), "--single-thread", "--seed", "77"]));
    assert_ne!(
        fs::read(a.join("output_norm.csv")).unwrap(),
        fs::read(b.join("output_norm.csv")).unwrap()
    );
    let saved = fs::read_to_string(b.join("config.toml")).unwrap();
    assert!(saved.starts_with("seed = 77"));
    assert!(saved.contains("excitation_seed = 77"));
}

#[test]
fn compare_with_one_method_matches_run() {
    let d = scratch("compare");
    let text = r#"
seed = 2
[model]
type = "synthetic"
states = 20
order = 2
[[methods]]
type = "rpod-star"
m = 6
n = 6
spacing = 8
order = 2
[evaluation]
horizon = 10
"#;
    let cfg = write_config(&d, "c.toml", text);
    let (a, b) = (d.join("run"), d.join("compare"));
    ok(&rpod(&["run", "--config", s(&cfg), "--out", s(&a), "--threads", "1"]));
    ok(&rpod(&["compare", "--config", s(&cfg), "--out", s(&b), "--threads", "1"]));
    assert_eq!(csvs(&a), csvs(&b));
}

#[test]
fn heat_compare_reports_hankel_sizes_and_small_errors() {
    let d = scratch("heat");
    let out = d.join("out");
    ok(&rpod(&[
        "compare",
        "--config",
        &shipped("heat-compare.toml"),
        "--out",
        s(&out),
        "--single-thread",
    ]));
    let summary: toml::Value = toml::from_str(&fs::read_to_string(out.join("summary.toml")).unwrap()).unwrap();
    assert_eq!(summary["complexity"]["output_projection_hankel"].as_str(), Some("16000 x 800"));
    assert_eq!(summary["complexity"]["rpod_star_hankel"].as_str(), Some("80 x 80"));
    let rows = scalars(&out);
    let labels: Vec<&str> = rows.iter().map(|r| &r[0]).collect();
    assert_eq!(labels, ["rpod-star", "output-projection", "bpod"]);
    for r in &rows[..2] {
        assert!(r[3].parse::<f64>().unwrap() <= 1e-4, "{r:?}");
    }
    let header = fs::read_to_string(out.join("frequency_response.csv")).unwrap();
    assert!(header.starts_with("omega,full,rpod-star,output-projection,bpod\n"));
    assert_eq!(header.lines().count(), 61);
}

#[test]
fn shipped_heat_config_clamps_the_order_with_a_warning() {
    let d = scratch("heat-rpod");
    let out = d.join("out");
    ok(&rpod(&["run", "--config", &shipped("heat-rpodstar.toml"), "--out", s(&out)]));
    let rows = scalars(&out);
    assert!(rows[0][3].parse::<f64>().unwrap() <= 1e-4);
    let inspect = rpod(&["inspect-rom", s(&out.join("rom-rpod-star"))]);
    ok(&inspect);
    let text = String::from_utf8(inspect.stdout).unwrap();
    assert!(text.contains("requested order: 70"));
    assert!(text.contains(&format!("order: {}", &rows[0][2])));
    assert!(text.contains("warning: requested order 70"));
}

#[test]
fn short_snapshot_span_runs_with_a_recorded_warning() {
    let d = scratch("short");
    let text = r#"
[model]
type = "heat"
[[methods]]
type = "rpod-star"
m = 10
n = 10
spacing = 5
order = 5
[evaluation]
horizon = 20
settling_steps = 3000
excitation_steps = 200
"#;
    let cfg = write_config(&d, "c.toml", text);
    let out = d.join("out");
    ok(&rpod(&["run", "--config", s(&cfg), "--out", s(&out)]));
    let summary = fs::read_to_string(out.join("summary.toml")).unwrap();
    assert!(summary.contains("settling"), "{summary}");
}

#[test]
fn perturbation_sweep_has_unit_slopes() {
    let d = scratch("sweep");
    let out = d.join("out");
    ok(&rpod(&["run", "--config", &shipped("synthetic-sweep.toml"), "--out", s(&out), "--single-thread"]));
    let rows: Vec<csv::StringRecord> = csv::Reader::from_path(out.join("sweep.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect();
    assert_eq!(rows.len(), 3);
    let summary: toml::Value = toml::from_str(&fs::read_to_string(out.join("summary.toml")).unwrap()).unwrap();
    let sweep = &summary["sweep"][0];
    for key in ["markov_error_slope", "sigma_next_slope"] {
        let v = sweep[key].as_float().unwrap();
        assert!((0.8..=1.2).contains(&v), "{key} {v}");
    }
}

#[test]
fn dispersion_desk_compare_orders_the_methods() {
    let d = scratch("disp");
    let out = d.join("out");
    ok(&rpod(&[
        "compare",
        "--config",
        &shipped("dispersion-compare.toml"),
        "--out",
        s(&out),
        "--single-thread",
    ]));
    let rows = scalars(&out);
    assert!(rows[0][3].parse::<f64>().unwrap() <= 1e-2);
    let mut r = csv::Reader::from_path(out.join("markov_error.csv")).unwrap();
    for rec in r.records() {
        let rec = rec.unwrap();
        assert!(rec[1].parse::<f64>().unwrap() < rec[2].parse::<f64>().unwrap(), "{rec:?}");
    }
}

#[test]
fn generated_synthetic_round_trips_through_a_matrix_market_model() {
    let d = scratch("gen");
    let sys = d.join("sys");
    ok(&rpod(&[
        "gen-synthetic",
        "--kind",
        "perturbed",
        "--states",
        "20",
        "--order",
        "3",
        "--eps",
        "1e-4",
        "--seed",
        "4",
        "--out",
        s(&sys),
    ]));
    let truth: toml::Value = toml::from_str(&fs::read_to_string(sys.join("truth.toml")).unwrap()).unwrap();
    assert_eq!(truth["order"].as_integer(), Some(3));
    assert_eq!(truth["co_eigenvalues_re"].as_array().unwrap().len(), 3);
    let text = r#"
[model]
type = "matrix-market"
path = "sys/system.toml"
[[methods]]
type = "bpod-modal"
primal_steps = 40
order = 3
[evaluation]
horizon = 10
"#;
    let cfg = write_config(&d, "c.toml", text);
    ok(&rpod(&["run", "--config", s(&cfg), "--out", s(&d.join("out"))]));
    let rows = scalars(&d.join("out"));
    assert_eq!(&rows[0][2], "3");
}

#[test]
fn build_model_exports_the_benchmark_systems() {
    let d = scratch("build");
    let out = d.join("heat");
    ok(&rpod(&["build-model", "--config", &shipped("heat-rpodstar.toml"), "--out", s(&out)]));
    let manifest: toml::Value = toml::from_str(&fs::read_to_string(out.join("system.toml")).unwrap()).unwrap();
    assert_eq!(manifest["n"].as_integer(), Some(100));
    assert_eq!(manifest["p"].as_integer(), Some(2));
    // the implicit step has a dense propagator
    assert!(fs::read_to_string(out.join("A.mtx")).unwrap().starts_with("%%MatrixMarket matrix array"));
    let plume = d.join("plume");
    ok(&rpod(&["build-model", "--config", &shipped("dispersion-compare.toml"), "--out", s(&plume)]));
    assert!(fs::read_to_string(plume.join("A.mtx")).unwrap().starts_with("%%MatrixMarket matrix coordinate"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let d = scratch("cfgerr");
    let cases = [
        ("missing.toml", None),
        ("unknown.toml", Some("[model]\ntype = \"heat\"\nnodez = 4\n")),
        ("empty.toml", Some("[model]\ntype = \"heat\"\n")),
        (
            "rank.toml",
            Some("[model]\ntype = \"heat\"\n[[methods]]\ntype = \"output-projection\"\nprimal_steps = 5\nrank = 500\n"),
        ),
        (
            "dup.toml",
            Some("[model]\ntype = \"heat\"\n[[methods]]\ntype = \"identity\"\n[[methods]]\ntype = \"identity\"\n"),
        ),
        (
            "sweep.toml",
            Some("[model]\ntype = \"heat\"\n[[methods]]\ntype = \"identity\"\n[sweep]\neps = [1e-2]\n"),
        ),
    ];
    for (name, text) in cases {
        let p = d.join(name);
        if let Some(t) = text {
            fs::write(&p, t).unwrap();
        }
        let (code, err) = failure(&rpod(&["run", "--config", s(&p), "--out", s(&d.join("o"))]));
        assert_eq!(code, 2, "{name}: {err}");
        assert!(err.starts_with("error[config]: "), "{err}");
    }
    let (code, _) = failure(&rpod(&["gen-synthetic", "--eps", "0.1", "--out", s(&d.join("g"))]));
    assert_eq!(code, 2);
}

fn write_scalar_system(dir: &Path, a: f64, b: f64) {
    fs::create_dir_all(dir).unwrap();
    let m = |v: f64| format!("%%MatrixMarket matrix array real general\n1 1\n{v}\n");
    fs::write(dir.join("A.mtx"), m(a)).unwrap();
    fs::write(dir.join("B.mtx"), m(b)).unwrap();
    fs::write(dir.join("C.mtx"), m(1.0)).unwrap();
    fs::write(
        dir.join("system.toml"),
        "n = 1\np = 1\nq = 1\ndt = 1.0\ndescription = \"scalar\"\na = \"A.mtx\"\nb = \"B.mtx\"\nc = \"C.mtx\"\n",
    )
    .unwrap();
}

#[test]
fn unstable_model_is_a_numerical_error() {
    let d = scratch("unstable");
    write_scalar_system(&d.join("sys"), 1.5, 1.0);
    let cfg = write_config(
        &d,
        "c.toml",
        "[model]\ntype = \"matrix-market\"\npath = \"sys/system.toml\"\n[[methods]]\ntype = \"rpod-star\"\nm = 2\nn = 2\n",
    );
    let (code, err) = failure(&rpod(&["run", "--config", s(&cfg), "--out", s(&d.join("o"))]));
    assert_eq!(code, 3, "{err}");
    assert!(err.starts_with("error[numerical]: "));
}

#[test]
fn unreachable_model_is_a_size_selection_error() {
    let d = scratch("nosize");
    write_scalar_system(&d.join("sys"), 0.5, 0.0);
    let cfg = write_config(
        &d,
        "c.toml",
        "[model]\ntype = \"matrix-market\"\npath = \"sys/system.toml\"\n[[methods]]\ntype = \"rpod-star\"\nm = 2\nn = 2\nspacing = 1\n[evaluation]\nsettling_steps = 10\n",
    );
    let (code, err) = failure(&rpod(&["run", "--config", s(&cfg), "--out", s(&d.join("o"))]));
    assert_eq!(code, 4, "{err}");
    assert!(err.starts_with("error[size-selection]: "));
}
