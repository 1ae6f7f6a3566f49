use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_greyalloc"))
        .args(args)
        .env_remove("GREYALLOC_PORT")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn forecast_verhulst_reports_grade() {
    let out = run(&["forecast", "--series", p(&data("series.csv")), "--horizon", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["model"], "verhulst");
    assert!(v["accuracy"]["grade"].is_string());
    assert_eq!(v["points"].as_array().unwrap().len(), 10);
    assert_eq!(v["points"][0]["period"], "2015-01");
    assert_eq!(v["projection"][1]["period"], "2015-12");
    let (a, b) = (f(&v["params"]["a"]), f(&v["params"]["b"]));
    assert!((f(&v["saturation"]["value"]) - a / b).abs() < 1e-6);
}

#[test]
fn forecast_logistic_reports_r2() {
    let out = run(&["forecast", "--series", p(&data("series.csv")), "--model", "logistic"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(f(&v["fit_quality"]["r2"]) > 0.99);
    assert!(v["params"]["capacity"].is_number());
}

#[test]
fn missing_file_is_usage_error() {
    let out = run(&["forecast", "--series", "/nonexistent/series.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_flag_is_usage_error() {
    assert_eq!(run(&["forecast", "--model", "gompertz"]).status.code(), Some(2));
    assert_eq!(run(&["allocate", "--format", "xml"]).status.code(), Some(2));
}

#[test]
fn too_short_series_is_domain_error() {
    let dir = std::env::temp_dir().join(format!("greyalloc-cli-short-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let s = write(&dir, "s.csv", "period,value\n1,10\n2,20\n3,30\n");
    let out = run(&["forecast", "--series", p(&s)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["error"]["code"], "SeriesTooShort");
}

#[test]
fn allocate_reference_inputs() {
    let out = run(&[
        "allocate",
        "--matrix",
        p(&data("matrix.csv")),
        "--indicators",
        p(&data("countries.csv")),
        "--prenormalized",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let w: Vec<f64> = v["weights"]["weights"].as_array().unwrap().iter().map(f).collect();
    for (got, want) in w.iter().zip([0.1428, 0.2641, 0.5068, 0.0863]) {
        assert!((got - want).abs() < 0.005);
    }
    assert_eq!(v["weights"]["consistent"], true);
    let ranking = v["ranking"].as_array().unwrap();
    assert_eq!(ranking.len(), 3);
    assert_eq!(ranking[0]["entity"], "Ireland");
    assert!((f(&ranking[0]["score"]) - 0.4296).abs() < 1e-3);
    let total: f64 = v["proportions"].as_array().unwrap().iter().map(f).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn allocate_from_config_with_flag_override() {
    let base = run(&["allocate", "--config", p(&data("allocate.conf"))]);
    assert_eq!(base.status.code(), Some(0));
    let flipped = run(&[
        "allocate",
        "--config",
        p(&data("allocate.conf")),
        "--direction",
        "unemployment=benefit",
    ]);
    assert_eq!(flipped.status.code(), Some(0));
    assert_ne!(json(&base)["scores"], json(&flipped)["scores"]);
}

#[test]
fn factor_needs_betas() {
    let out = run(&["allocate", "--indicators", p(&data("countries.csv")), "--method", "factor"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn factor_beta_count_mismatch_is_domain_error() {
    let out = run(&[
        "allocate",
        "--indicators",
        p(&data("countries.csv")),
        "--method",
        "factor",
        "--prenormalized",
        "--betas",
        "0.1,0.2",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["error"]["code"], "LabelMismatch");
}

#[test]
fn factor_scores_with_negative_intercept() {
    let out = run(&[
        "allocate",
        "--indicators",
        p(&data("eu28.csv")),
        "--method",
        "factor",
        "--prenormalized",
        "--betas=-0.1,0.3,0.2,0.4,0.1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v.get("weights").is_none());
    assert_eq!(v["ranking"].as_array().unwrap().len(), 28);
}

#[test]
fn inconsistent_matrix_warns_but_succeeds() {
    let dir = std::env::temp_dir().join(format!("greyalloc-cli-cycle-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let m = write(&dir, "m.csv", "criterion,a,b,c\na,1,9,1/9\nb,1/9,1,9\nc,9,1/9,1\n");
    let t = write(&dir, "t.csv", "entity,a,b,c\nx,1,2,3\ny,3,1,2\nz,2,3,1\n");
    let out = run(&["allocate", "--matrix", p(&m), "--indicators", p(&t)]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["weights"]["consistent"], false);
    assert!(f(&v["weights"]["cr"]) >= 0.1);
    assert!(!v["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn sensitivity_noop_has_zero_deltas() {
    let out = run(&[
        "sensitivity",
        "--matrix",
        p(&data("matrix.csv")),
        "--indicators",
        p(&data("countries.csv")),
        "--prenormalized",
        "--scale-indicator",
        "Estonia,gdp=1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let deltas = v["reports"][0]["deltas"].as_object().unwrap();
    assert!(!deltas.is_empty());
    assert!(deltas.values().all(|d| f(d) == 0.0));
}

#[test]
fn sensitivity_matrix_entry_variant() {
    let out = run(&[
        "sensitivity",
        "--matrix",
        p(&data("matrix.csv")),
        "--indicators",
        p(&data("countries.csv")),
        "--prenormalized",
        "--scale-matrix-entry",
        "3,4=0.6",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = &json(&out)["reports"][0];
    for (label, want) in [("land", 0.1498), ("gdp", 0.2741), ("unemployment", 0.4717), ("welfare", 0.1045)] {
        let got = f(&r["perturbed"][format!("weight.{label}")]);
        assert!((got - want).abs() < 0.005, "{label}: {got}");
    }
    assert_eq!(r["perturbed_consistent"], true);
    assert_eq!(r["rank_shifts"].as_array().unwrap().len(), 3);
}

#[test]
fn sensitivity_remove_point_guard() {
    let dir = std::env::temp_dir().join(format!("greyalloc-cli-four-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let s = write(&dir, "s.csv", "period,value\n1,10\n2,20\n3,28\n4,33\n");
    let out = run(&["sensitivity", "--series", p(&s), "--remove-point", "5"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["error"]["code"], "SeriesTooShort");
}

#[test]
fn sensitivity_needs_a_perturbation() {
    let out = run(&["sensitivity", "--series", p(&data("series.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sensitivity_oat_sweep_parallel_matches_sequential() {
    let conf = data("allocate.conf");
    let args = [
        "sensitivity",
        "--config",
        p(&conf),
        "--oat",
        "0.5,2",
    ];
    let seq = run(&args);
    let mut par_args = args.to_vec();
    par_args.push("--parallel");
    let par = run(&par_args);
    assert_eq!(seq.status.code(), Some(0));
    assert_eq!(seq.stdout, par.stdout);
    // 6 entities × 4 criteria × 2 factors + 6 matrix cells × 2 factors
    assert_eq!(json(&seq)["reports"].as_array().unwrap().len(), 60);
}

fn sim_config(dir: &Path, inflows: &str) -> PathBuf {
    std::fs::copy(data("matrix.csv"), dir.join("matrix.csv")).unwrap();
    std::fs::copy(data("raw_indicators.csv"), dir.join("raw_indicators.csv")).unwrap();
    write(
        dir,
        "sim.conf",
        &format!(
            "matrix = matrix.csv\nindicators = raw_indicators.csv\ndirection.unemployment = cost\n\
             gamma.unemployment = 0.0002\nsimulate.inflows = {inflows}\n"
        ),
    )
}

#[test]
fn simulate_zero_inflow_is_constant() {
    let dir = std::env::temp_dir().join(format!("greyalloc-cli-sim0-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = sim_config(&dir, "0, 0, 0, 0");
    let out = run(&["simulate", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for shares in v["trajectory"].as_object().unwrap().values() {
        let s = shares.as_array().unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|x| x == &s[0]));
    }
}

#[test]
fn simulate_horizon_one_matches_allocate() {
    let dir = std::env::temp_dir().join(format!("greyalloc-cli-sim1-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = sim_config(&dir, "50000");
    let sim = json(&run(&["simulate", "--config", p(&cfg)]));
    let alloc = json(&run(&["allocate", "--config", p(&cfg)]));
    assert_eq!(sim["periods"][0]["proportions"], alloc["proportions"]);
    assert_eq!(sim["periods"][0]["ranking"], alloc["ranking"]);
}

#[test]
fn simulate_sample_config_runs() {
    let out = run(&["simulate", "--config", p(&data("simulate.conf"))]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["periods"].as_array().unwrap().len(), 6);
    for period in v["periods"].as_array().unwrap() {
        let total: f64 = period["proportions"].as_array().unwrap().iter().map(f).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn table_format_is_human_readable() {
    let out = run(&[
        "--format",
        "table",
        "allocate",
        "--matrix",
        p(&data("matrix.csv")),
        "--indicators",
        p(&data("countries.csv")),
        "--prenormalized",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("ratio"));
    assert!(text.lines().any(|l| l.starts_with("Ireland")));
    assert!(serde_json::from_str::<Value>(&text).is_err());
}
