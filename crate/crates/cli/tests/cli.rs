use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use panel_bias_cli::format::read_estimates;
use panel_bias_cli::manifest::Manifest;
use panel_bias_cli::run;

const CONFIG: &str = r#"
seed = 3
min_median = 7.0

[analysis]
covariance = "model-based"

[[discipline]]
discipline = "ARTM"
n_performances = 900
sn_rate = 0.03
true_beta_sn = 0.43
finals_share = 0.2
true_sigma = { alpha = 0.48667686, beta = -0.01994874, gamma = 0.31441382 }
"#;

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["panel-bias", "--quiet"];
    argv.extend(args);
    run(argv)
}

fn simulated(dir: &Path) -> String {
    let config = path(dir, "c.toml");
    fs::write(&config, CONFIG).unwrap();
    let marks = path(dir, "marks.csv");
    assert_eq!(cli(&["--config", &config, "simulate", "--out", &marks, "--truth", &path(dir, "truth.json")]), 0);
    marks
}

fn count(haystack: &str, needle: &str) -> usize {
    haystack.matches(needle).count()
}

#[test]
fn simulate_is_reproducible_and_recorded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulated(a.path());
    simulated(b.path());
    let ma: Manifest = serde_json::from_slice(&fs::read(a.path().join("manifest.json")).unwrap()).unwrap();
    let mb: Manifest = serde_json::from_slice(&fs::read(b.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(ma, mb);
    let run = &ma.runs["simulate"];
    assert_eq!(run.seed, Some(3));
    assert_eq!(run.outputs.len(), 2);
    assert!(run.config.is_some());

    // --seed overrides the configured one
    let c = tempfile::tempdir().unwrap();
    let config = path(a.path(), "c.toml");
    let marks = path(c.path(), "marks.csv");
    assert_eq!(cli(&["--config", &config, "--seed", "4", "simulate", "--out", &marks, "--truth", &path(c.path(), "t.json")]), 0);
    assert_ne!(fs::read(&marks).unwrap(), fs::read(a.path().join("marks.csv")).unwrap());
}

#[test]
fn finals_estimate_has_one_row_per_discipline() {
    let dir = tempfile::tempdir().unwrap();
    let marks = simulated(dir.path());
    let out = path(dir.path(), "finals.csv");
    assert_eq!(cli(&["estimate-bias", "--in", &marks, "--scope", "discipline", "--stage", "finals", "--out", &out]), 0);
    let rows = read_estimates(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].key.as_str(), rows[0].stage.as_str(), rows[0].scope.as_str()), ("ARTM", "finals", "discipline"));
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let marks = simulated(d);
    let sigma = path(d, "sigma.csv");
    let profiles = path(d, "profiles.csv");
    let estimates = path(d, "estimates.csv");
    assert_eq!(cli(&["fit-sigma", "--in", &marks, "--out", &sigma, "--plot", &path(d, "sigma.svg")]), 0);
    assert_eq!(cli(&["marking-scores", "--in", &marks, "--sigma", &sigma, "--out", &profiles]), 0);
    assert_eq!(
        cli(&[
            "estimate-bias",
            "--in",
            &marks,
            "--sigma",
            &sigma,
            "--profiles",
            &profiles,
            "--scope",
            "nation",
            "--min-sn-marks",
            "5",
            "--out",
            &estimates,
            "--ecdf",
            &path(d, "ecdf.csv"),
            "--plot",
            &path(d, "scatter.svg"),
            "--forest",
            &path(d, "forest.svg"),
        ]),
        0
    );
    let rows = read_estimates(fs::File::open(&estimates).unwrap()).unwrap();
    assert!(rows.len() > 5);
    assert!(rows.iter().all(|r| r.n_sn_marks >= 5 && r.key.starts_with("ARTM:")));

    let sigma_svg = fs::read_to_string(d.join("sigma.svg")).unwrap();
    assert_eq!(count(&sigma_svg, r#"class="sigma-curve""#), 1);
    let scatter = fs::read_to_string(d.join("scatter.svg")).unwrap();
    assert_eq!(count(&scatter, "<circle class=\"estimate"), rows.len());
    let significant = rows.iter().filter(|r| r.p_sn < 0.05).count();
    assert_eq!(count(&scatter, r#"data-significant="true""#), significant);
    let forest = fs::read_to_string(d.join("forest.svg")).unwrap();
    assert_eq!(count(&forest, r#"<g class="interval""#), rows.len());
    let ecdf = fs::read_to_string(d.join("ecdf.csv")).unwrap();
    assert!(ecdf.starts_with("x,F\n"));
    assert!(ecdf.trim_end().ends_with(",1"));

    let manifest: Manifest = serde_json::from_slice(&fs::read(d.join("manifest.json")).unwrap()).unwrap();
    let keys: Vec<&str> = manifest.runs.keys().map(String::as_str).collect();
    assert_eq!(keys, ["estimate-bias", "fit-sigma", "marking-scores", "simulate"]);
    assert_eq!(manifest.runs["estimate-bias"].inputs.len(), 3);
    assert_eq!(manifest.runs["estimate-bias"].arguments["scope"], "nation");
}

#[test]
fn report_highlights_strongly_significant_points() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let marks = simulated(d);
    let estimates = path(d, "estimates.csv");
    assert_eq!(cli(&["estimate-bias", "--in", &marks, "--scope", "judge", "--out", &estimates]), 0);
    let rows = read_estimates(fs::File::open(&estimates).unwrap()).unwrap();
    let svg = path(d, "report.svg");
    let table = path(d, "table.md");
    assert_eq!(cli(&["report", "--estimates", &estimates, "--plot", "svg", "--out", &svg, "--table", &table]), 0);
    let chart = fs::read_to_string(&svg).unwrap();
    assert!(chart.contains(r#"data-kind="scatter""#));
    assert_eq!(count(&chart, "<circle class=\"estimate"), rows.len());
    let strong = rows.iter().filter(|r| r.p_sn < 0.01).count();
    assert_eq!(count(&chart, r##"fill="#08306b""##), strong);
    let md = fs::read_to_string(&table).unwrap();
    assert_eq!(md.lines().count(), 2 + rows.len() + rows.iter().filter(|r| r.beta_comp.is_some()).count());

    let ecdf = path(d, "ecdf.svg");
    assert_eq!(cli(&["report", "--estimates", &estimates, "--kind", "ecdf", "--out", &ecdf]), 0);
    assert!(fs::read_to_string(&ecdf).unwrap().contains(r#"class="ecdf""#));
}

#[test]
fn ranking_impact_writes_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let marks = simulated(d);
    let out = path(d, "ranking.csv");
    let summary = path(d, "summary.json");
    assert_eq!(cli(&["ranking-impact", "--in", &marks, "--out", &out, "--summary", &summary]), 0);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("event,gymnast,score_with,score_without,rank_with,rank_without,changed,podium_changed\n"));
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert!(s["events"].as_u64().unwrap() > 0);
    assert!(s["sn_affected_events"].as_u64().unwrap() <= s["events"].as_u64().unwrap());

    let median = path(d, "median.csv");
    assert_eq!(cli(&["ranking-impact", "--in", &marks, "--out", &median, "--trim", "0", "--median", "--reference-handling", "none"]), 0);
    assert_eq!(fs::read_to_string(&median).unwrap().lines().count(), text.lines().count());
}

#[test]
fn exit_codes() {
    assert_eq!(cli(&["no-such-command"]), 2);
    assert_eq!(cli(&["estimate-bias", "--in", "x.csv", "--alpha", "0.1"]), 2);
    assert_eq!(cli(&["estimate-bias", "--in", "x.csv", "--scope", "planet"]), 2);
    assert_eq!(cli(&["simulate", "--out", "m.csv", "--truth", "t.json"]), 2);
    assert_eq!(cli(&["--threads", "0", "fit-sigma", "--in", "x.csv"]), 2);
    assert_eq!(run(["panel-bias", "--help"]), 0);

    let dir = tempfile::tempdir().unwrap();
    let missing = path(dir.path(), "missing.csv");
    assert_eq!(cli(&["fit-sigma", "--in", &missing, "--out", &path(dir.path(), "s.csv")]), 1);
    let bad = path(dir.path(), "bad.csv");
    fs::write(&bad, "not,a,mark,file\n").unwrap();
    assert_eq!(cli(&["fit-sigma", "--in", &bad, "--out", &path(dir.path(), "s.csv")]), 1);
    let config = path(dir.path(), "bad.toml");
    fs::write(&config, "seed = \"x\"\n").unwrap();
    assert_eq!(cli(&["--config", &config, "simulate", "--out", &path(dir.path(), "m.csv"), "--truth", &path(dir.path(), "t.json")]), 1);
}

#[test]
fn config_path_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    fs::write(&config, CONFIG).unwrap();
    let marks: PathBuf = dir.path().join("marks.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_panel-bias"))
        .env("PANEL_BIAS_CONFIG", &config)
        .args(["--quiet", "simulate", "--out"])
        .arg(&marks)
        .arg("--truth")
        .arg(dir.path().join("t.json"))
        .status()
        .unwrap();
    assert!(status.success());
    let direct = tempfile::tempdir().unwrap();
    assert_eq!(fs::read(&marks).unwrap(), fs::read(simulated(direct.path())).unwrap());

    let status = Command::new(env!("CARGO_BIN_EXE_panel-bias")).arg("bogus").output().unwrap().status;
    assert_eq!(status.code(), Some(2));
}
