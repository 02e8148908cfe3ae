use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 3

[synth]
scans_per_class = 6
resolution = 40

[dictionary]
depth = 3

[classifier]
repetitions = 2

[tsne]
perplexity = 4.0
iterations = 250
"#;

fn bin(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shape-concepts"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path.display().to_string()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {line}"))
}

#[test]
fn missing_input_exits_3_and_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(dir.path(), &["stimuli"]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr_json(&o);
    assert_eq!(err["error"], "missing_artifact");
    assert!(err["path"].as_str().unwrap().ends_with("dataset.csv"), "{err}");
}

#[test]
fn bad_config_exits_2_and_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[synth]\nscans_per_clas = 3\n[ensemble]\nsigmaa = 1.0\n").unwrap();
    let o = bin(dir.path(), &["--config", cfg.to_str().unwrap(), "synth"]);
    assert_eq!(o.status.code(), Some(2));
    let problems = stderr_json(&o)["problems"].to_string();
    assert!(problems.contains("synth.scans_per_clas"), "{problems}");
    assert!(problems.contains("ensemble.sigmaa"), "{problems}");

    std::fs::write(&cfg, "[ensemble]\nsigma = -1.0\n[filtration]\nmax_steps = 1\n").unwrap();
    let o = bin(dir.path(), &["--config", cfg.to_str().unwrap(), "synth"]);
    assert_eq!(o.status.code(), Some(2));
    let problems = stderr_json(&o)["problems"].as_array().unwrap().len();
    assert!(problems >= 2);
}

#[test]
fn out_of_range_flag_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(dir.path(), &["concepts", "--t-star", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn small_pipeline_runs_and_stages_rerun_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = small_config(dir.path());
    let o = bin(&out, &["--config", &cfg, "pipeline", "--sweep", "--svg"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    for stage in ["synth", "segment", "concepts", "sweep", "classify", "embed", "export"] {
        assert!(stdout.contains(&format!("{stage}: ")), "{stage} missing from\n{stdout}");
    }
    for file in [
        "dataset.csv",
        "stimuli.csv",
        "concepts.csv",
        "sweep.csv",
        "classification.csv",
        "embedding.csv",
        "barcode.csv",
        "grid.csv",
        "barcode.svg",
        "manifests/export.json",
    ] {
        assert!(out.join(file).is_file(), "{file} not written");
    }

    let before = std::fs::read(out.join("stimuli.csv")).unwrap();
    let manifest_before = std::fs::read(out.join("manifests/stimuli.json")).unwrap();
    let o = bin(&out, &["--config", &cfg, "stimuli"]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(out.join("stimuli.csv")).unwrap(), before);
    assert_eq!(std::fs::read(out.join("manifests/stimuli.json")).unwrap(), manifest_before);

    let o = bin(&out, &["--config", &cfg, "concepts", "--t-star", "0.4", "--min-size", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifests/concepts.json")).unwrap()).unwrap();
    assert_eq!(m["results"]["t_star"], 0.4);
    assert_eq!(m["results"]["t_star_policy"], "fixed");
    assert_eq!(m["seed"], 3);
    assert!(m["outputs"]["concepts.csv"].as_str().unwrap().len() == 64);
}
