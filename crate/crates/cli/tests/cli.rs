use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use survfair::sim::{readmission_analogue, oracle_po_curve, Coupling, SCMSpec, TimeLaw};
use survfair::{Cohort, FunctionalKind, Query};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_survfair"));
    c.env_remove("SURVFAIR_OUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["simulate", "--out", p(dir)];
    args.extend_from_slice(extra);
    ok(&args);
    dir.join("cohort.csv")
}

fn write_spec(dir: &Path, spec: &SCMSpec) -> PathBuf {
    let path = dir.join("model.json");
    std::fs::write(&path, spec.to_json_string().unwrap()).unwrap();
    path
}

/// `effect -> [(t, estimate, se)]` from a decomposition table.
fn read_series(path: &Path) -> BTreeMap<String, Vec<(f64, f64, Option<f64>)>> {
    let mut out: BTreeMap<String, Vec<_>> = BTreeMap::new();
    let text = std::fs::read_to_string(path).unwrap();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let se = (!f[3].is_empty()).then(|| f[3].parse().unwrap());
        out.entry(f[1].to_string()).or_default().push((f[0].parse().unwrap(), f[2].parse().unwrap(), se));
    }
    out
}

fn read_table(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

fn cohort(path: &Path) -> Cohort {
    Cohort::read_csv(std::fs::File::open(path).unwrap(), None).unwrap()
}

fn binary(p1: f64, v: f64) -> f64 {
    if v == 1.0 {
        p1
    } else {
        1.0 - p1
    }
}

fn daily(h: usize) -> Vec<f64> {
    (1..=h).map(|d| d as f64).collect()
}

/// Daily geometric survival closed at day 30.
fn closing(rate: f64) -> TimeLaw {
    let t = daily(30);
    let mut s: Vec<f64> = t.iter().map(|d| (-rate * d).exp()).collect();
    s[29] = 0.0;
    TimeLaw::from_survival(t, &s).unwrap()
}

/// Group label independent of everything else.
fn symmetric_model() -> SCMSpec {
    SCMSpec::from_fn(
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        1,
        |_, z| 0.5 * binary(0.4, z),
        |_, z, w| binary(0.3 + 0.3 * z, w),
        |_, z, w, _| TimeLaw::discretized_exponential(0.03 * (1.0 + z + w), daily(30)).unwrap(),
        |_, _, _| closing(0.02),
        Coupling::default(),
    )
    .unwrap()
}

fn two_cause_model() -> SCMSpec {
    SCMSpec::from_fn(
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        2,
        |x, z| 0.5 * binary(0.3 + 0.2 * f64::from(x), z),
        |x, z, w| binary(0.3 + 0.2 * f64::from(x) + 0.1 * z, w),
        |x, z, w, k| {
            let rate = if k == 1 { 0.02 * (1.0 + f64::from(x) + w) } else { 0.015 * (1.0 + z) };
            TimeLaw::discretized_exponential(rate, daily(30)).unwrap()
        },
        |_, _, _| closing(0.01),
        Coupling::default(),
    )
    .unwrap()
}

#[test]
fn simulate_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        simulate(d.path(), &["--n", "2000", "--seed", "9"]);
    }
    for f in ["cohort.csv", "spec.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
    let other = TempDir::new().unwrap();
    simulate(other.path(), &["--n", "2000", "--seed", "10"]);
    assert_ne!(std::fs::read(a.path().join("cohort.csv")).unwrap(), std::fs::read(other.path().join("cohort.csv")).unwrap());
}

#[test]
fn simulate_rejects_empty_cohorts() {
    let d = TempDir::new().unwrap();
    assert_eq!(run(&["simulate", "--n", "0", "--out", p(d.path())]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--n", "10", "--example", "icu", "--tau", "0.3", "--out", p(d.path())]).status.code(), Some(2));
}

#[test]
fn bundled_minority_fraction() {
    let d = TempDir::new().unwrap();
    let c = cohort(&simulate(d.path(), &["--n", "100000", "--seed", "1"]));
    let frac = c.count_group(0) as f64 / c.len() as f64;
    assert!((frac - 0.042).abs() < 0.003, "{frac}");
}

#[test]
fn bundled_spec_file_round_trips() {
    let d = TempDir::new().unwrap();
    simulate(d.path(), &["--n", "10"]);
    let text = std::fs::read_to_string(d.path().join("spec.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(value["meta"]["tool"], "survfair");
}

#[test]
fn readmission_example_records_its_coupling() {
    let d = TempDir::new().unwrap();
    simulate(d.path(), &["--example", "readmission", "--tau", "0.6", "--n", "300"]);
    let text = std::fs::read_to_string(d.path().join("spec.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["coupling"]["tau"], 0.6);
    assert_eq!(v["coupling"]["family"], "clayton");
}

#[test]
fn every_output_carries_the_header() {
    let d = TempDir::new().unwrap();
    let input = simulate(d.path(), &["--n", "3000", "--example", "readmission", "--tau", "0"]);
    let out = d.path().join("dec");
    ok(&["decompose", "--input", p(&input), "--out", p(&out), "--estimator", "dr", "--ratio"]);
    let mut seen = 0;
    let mut config = None;
    for entry in std::fs::read_dir(&out).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let tag = if path.extension().unwrap() == "csv" {
            let first = text.lines().next().unwrap();
            assert!(first.starts_with("# survfair 0.1.0 config="), "{}", path.display());
            first.rsplit('=').next().unwrap().to_string()
        } else {
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["meta"]["version"], "0.1.0");
            v["meta"]["config"].as_str().unwrap().to_string()
        };
        assert_eq!(tag.len(), 16);
        assert_eq!(config.get_or_insert(tag.clone()), &tag);
        seen += 1;
    }
    assert_eq!(seen, 8);
}

#[test]
fn informative_mode_writes_one_envelope_per_tau() {
    let d = TempDir::new().unwrap();
    let input = simulate(d.path(), &["--n", "4000", "--example", "readmission", "--tau", "0.5", "--seed", "2"]);
    let out = d.path().join("ic");
    ok(&[
        "decompose", "--input", p(&input), "--out", p(&out), "--mode", "ic", "--estimator", "dr", "--tau", "0.1,0.5,0.8", "--samples", "20",
        "--grid", "10,30,60",
    ]);
    for tau in ["0.1", "0.5", "0.8"] {
        let text = std::fs::read_to_string(out.join(format!("envelope_tau_{tau}.csv"))).unwrap();
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        assert_eq!(lines.next(), Some("t,central,env_lo,env_hi,tau,curve"));
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        assert!(rows.iter().any(|r| r[5] == "tv"));
        assert!(rows.iter().all(|r| r[4] == tau));
        for r in &rows {
            let (c, lo, hi): (f64, f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap());
            assert!(lo <= c && c <= hi);
        }
    }
    let series = read_series(&out.join("decomposition.csv"));
    assert!(series.contains_key("tau0.5_tv"));
    let plugin = d.path().join("ic_plugin");
    ok(&["decompose", "--input", p(&input), "--out", p(&plugin), "--mode", "ic", "--tau", "0.5", "--grid", "10,30,60"]);
    assert!(read_series(&plugin.join("decomposition.csv")).contains_key("tau0.5_x_de"));
    assert_eq!(run(&["decompose", "--input", p(&input), "--out", p(&plugin), "--mode", "ic"]).status.code(), Some(2));
}

#[test]
fn symmetric_cohort_effects_are_null_within_noise() {
    let d = TempDir::new().unwrap();
    let spec = write_spec(d.path(), &symmetric_model());
    let input = simulate(d.path(), &["--spec", p(&spec), "--n", "20000", "--seed", "4"]);
    let out = d.path().join("sym");
    ok(&["decompose", "--input", p(&input), "--out", p(&out), "--estimator", "dr", "--grid", "5,10,15,20,25"]);
    let series = read_series(&out.join("decomposition.csv"));
    // cells at different times of one effect are strongly correlated, so the band is simultaneous
    let z: Vec<f64> = series.values().flatten().filter_map(|&(_, est, se)| se.filter(|s| *s > 0.0).map(|s| est / s)).collect();
    assert!(z.len() >= 16);
    assert!(z.iter().all(|v| v.abs() <= 3.0), "{z:?}");
    assert!(z.iter().map(|v| v.abs()).sum::<f64>() / z.len() as f64 <= 1.2, "{z:?}");
}

#[test]
fn plugin_and_doubly_robust_agree_on_a_large_cohort() {
    let d = TempDir::new().unwrap();
    let input = simulate(d.path(), &["--n", "50000", "--example", "readmission", "--tau", "0", "--seed", "5"]);
    let grid = "5,10,20,30,45,60,75,90";
    let (a, b) = (d.path().join("pi"), d.path().join("dr"));
    ok(&["decompose", "--input", p(&input), "--out", p(&a), "--grid", grid]);
    ok(&["decompose", "--input", p(&input), "--out", p(&b), "--grid", grid, "--estimator", "dr"]);
    let (sa, sb) = (read_series(&a.join("decomposition.csv")), read_series(&b.join("decomposition.csv")));
    let gap = sa["tv"].iter().zip(&sb["tv"]).map(|(x, y)| (x.1 - y.1).abs()).fold(0.0, f64::max);
    assert!(gap <= 0.03, "{gap}");
}

#[test]
fn curves_without_censoring_are_empirical_survival() {
    let d = TempDir::new().unwrap();
    let input = d.path().join("c.csv");
    std::fs::write(&input, "x,z,w,m,delta\n0,0,0,1,1\n0,1,0,2,1\n0,0,1,2,1\n0,1,1,4,1\n1,0,0,3,1\n1,1,1,5,1\n").unwrap();
    let out = d.path().join("out");
    ok(&["curves", "--input", p(&input), "--out", p(&out), "--grid", "0,1,2,3,4,5"]);
    let rows = read_table(&out.join("curves.csv"));
    let expect = [(1.0, 1.0), (0.75, 1.0), (0.25, 1.0), (0.25, 0.5), (0.0, 0.5), (0.0, 0.0)];
    for (r, (a, b)) in rows.iter().zip(expect) {
        assert!((r[1] - a).abs() < 1e-15 && (r[2] - b).abs() < 1e-15);
        assert!((r[3] - (r[2] - r[1])).abs() < 1e-15);
    }
}

#[test]
fn curves_match_the_marginal_oracle() {
    let d = TempDir::new().unwrap();
    let input = simulate(d.path(), &["--n", "100000", "--example", "readmission", "--tau", "0", "--seed", "6"]);
    let out = d.path().join("curves");
    let grid: Vec<f64> = (1..=9).map(|k| f64::from(10 * k)).collect();
    let g: Vec<String> = grid.iter().map(f64::to_string).collect();
    ok(&["curves", "--input", p(&input), "--out", p(&out), "--grid", &g.join(",")]);
    let rows = read_table(&out.join("curves.csv"));
    let spec = readmission_analogue(0.0).unwrap();
    for (col, x) in [(1, 0u8), (2, 1u8)] {
        let truth = oracle_po_curve(&spec, Query::new(x, x, x).unwrap(), FunctionalKind::Survival, &grid).unwrap();
        let err = rows.iter().zip(&truth).map(|(r, t)| (r[col] - t).abs()).fold(0.0, f64::max);
        assert!(err <= 0.01, "x = {x}: {err}");
    }
}

#[test]
fn config_file_overrides_flags() {
    let d = TempDir::new().unwrap();
    let config = d.path().join("cfg.json");
    std::fs::write(&config, r#"{"n": 25, "seed": 3}"#).unwrap();
    simulate(d.path(), &["--config", p(&config), "--n", "1000"]);
    assert_eq!(cohort(&d.path().join("cohort.csv")).len(), 25);
    std::fs::write(&config, r#"{"n": 25, "bogus": 1}"#).unwrap();
    assert_eq!(run(&["simulate", "--config", p(&config), "--out", p(d.path())]).status.code(), Some(2));
}

#[test]
fn malformed_data_exits_with_data_code() {
    let d = TempDir::new().unwrap();
    let input = d.path().join("bad.csv");
    std::fs::write(&input, "x,z,w,m,delta\n0,0,0,-1,1\n").unwrap();
    let out = d.path().join("out");
    let r = run(&["decompose", "--input", p(&input), "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(3));
    let diag: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["status"], "error");
    std::fs::write(&input, "x,z,w,m,delta\n0,0,0,1,1\n0,1,0,2,0\n").unwrap();
    assert_eq!(run(&["decompose", "--input", p(&input), "--out", p(&out)]).status.code(), Some(3));
    assert_eq!(run(&["decompose", "--input", p(&d.path().join("missing.csv")), "--out", p(&out)]).status.code(), Some(3));
}

#[test]
fn usage_errors_exit_with_usage_code() {
    let d = TempDir::new().unwrap();
    let input = simulate(d.path(), &["--n", "500"]);
    for extra in [&["--folds", "1"][..], &["--clip", "0.7"], &["--grid", "3,1"], &["--functional", "rmst:20", "--estimator", "dr"], &["--x0", "1"]] {
        let mut args = vec!["decompose", "--input", p(&input), "--out", p(d.path())];
        args.extend_from_slice(extra);
        assert_eq!(run(&args).status.code(), Some(2), "{extra:?}");
    }
}

#[test]
fn output_directory_from_environment() {
    let d = TempDir::new().unwrap();
    let target = d.path().join("env_out");
    let r = bin().args(["simulate", "--n", "50"]).env("SURVFAIR_OUT_DIR", &target).output().unwrap();
    assert!(r.status.success());
    assert!(target.join("cohort.csv").exists());
}

#[test]
fn competing_risks_mode_from_a_spec_file() {
    let d = TempDir::new().unwrap();
    let spec = write_spec(d.path(), &two_cause_model());
    let input = simulate(d.path(), &["--spec", p(&spec), "--n", "8000", "--seed", "7"]);
    let out = d.path().join("cr");
    ok(&["decompose", "--input", p(&input), "--out", p(&out), "--mode", "cr", "--grid", "5,10,20"]);
    let series = read_series(&out.join("decomposition.csv"));
    for j in 0..3 {
        let sum = series["cif1_tv"][j].1 + series["cif2_tv"][j].1 + series["all_cause_tv"][j].1;
        assert!(sum.abs() <= 1e-6, "{sum}");
    }
    for f in ["po_000_cif1.csv", "po_111_cif2.csv", "po_110_all_cause.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let single = simulate(&d.path().join("one"), &["--n", "500"]);
    assert_eq!(run(&["decompose", "--input", p(&single), "--out", p(&out), "--mode", "cr"]).status.code(), Some(3));
}
