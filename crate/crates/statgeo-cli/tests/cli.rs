//! Command-line behavior: scene loading, validation error collection, exit
//! code taxonomy, and report output shape.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_statgeo"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn tmp_scene(name: &str, content: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("statgeo-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path
}

#[test]
fn gallery_lists_all_scenes() {
    let out = run(&["gallery"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for scene in [
        "gaussian",
        "bernoulli",
        "degenerate-reparam",
        "degenerate-line",
        "cusp",
        "quartic-potential",
        "cuspidal-edge",
    ] {
        assert!(text.contains(scene), "missing {scene}");
    }
}

#[test]
fn gallery_scenes_all_load() {
    // an empty-command probe: fisher on each scene would need a model, so
    // just dump and re-load each through a file round trip
    for scene in [
        "gaussian",
        "bernoulli",
        "degenerate-reparam",
        "degenerate-line",
        "cusp",
        "quartic-potential",
        "cuspidal-edge",
    ] {
        let out = run(&["gallery", "--dump", scene]);
        assert_eq!(code(&out), 0, "dump {scene}");
        let json: serde_json::Value =
            serde_json::from_slice(&out.stdout).expect("gallery scene is valid JSON");
        assert_eq!(json["version"], "1");
    }
}

#[test]
fn usage_errors_exit_one() {
    let out = run(&["no-such-command"]);
    assert_eq!(code(&out), 1);
    let out = run(&["fisher", "--scene", "gallery:nope", "--object", "x"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn parse_and_validation_errors_exit_two() {
    let p = tmp_scene("broken.json", "{ not json");
    let out = run(&["fisher", "--scene", p.to_str().unwrap(), "--object", "m"]);
    assert_eq!(code(&out), 2);

    // dangling reference: the probe names a missing metric; the error
    // message names the reference
    let p = tmp_scene(
        "dangling.json",
        r#"{
          "version": "1",
          "charts": { "c": { "names": ["t"], "box": [[0.0, 1.0]], "basepoint": [0.5] } },
          "probes": { "p": { "metric": "missing", "curve": ["t"], "t_values": [0.5] } }
        }"#,
    );
    let out = run(&["blowup-probe", "--scene", p.to_str().unwrap(), "--object", "p"]);
    assert_eq!(code(&out), 2);
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("missing"), "stderr: {text}");

    // several violations are reported together
    let p = tmp_scene(
        "multi.json",
        r#"{
          "version": "1",
          "charts": { "c": { "names": ["t"], "box": [[1.0, 0.0]], "basepoint": [0.5] } },
          "metrics": { "h": { "chart": "nope", "components": ["1"] } }
        }"#,
    );
    let out = run(&["fisher", "--scene", p.to_str().unwrap(), "--object", "m"]);
    assert_eq!(code(&out), 2);
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("chart c"));
    assert!(text.contains("metric h"));
}

#[test]
fn empty_scene_is_valid() {
    let p = tmp_scene("empty.json", r#"{ "version": "1" }"#);
    // loads fine; fisher then fails on the missing object (validation)
    let out = run(&["fisher", "--scene", p.to_str().unwrap(), "--object", "m"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn precondition_failures_exit_three() {
    // raising the index of a rank-one Fisher metric must refuse
    let out = run(&[
        "alpha-check",
        "--scene",
        "gallery:degenerate-reparam",
        "--object",
        "overparametrized",
    ]);
    assert_eq!(code(&out), 3);
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("degenerate"), "stderr: {text}");
}

#[test]
fn tolerance_failures_exit_four() {
    // shrink every tolerance far below the achievable residuals
    let out = run(&[
        "fisher",
        "--scene",
        "gallery:gaussian",
        "--object",
        "gaussian",
        "--tol",
        "1e-14",
    ]);
    assert_eq!(code(&out), 4);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("FAIL"));
    assert!(text.contains("verdict: fail"));
}

#[test]
fn numeric_failures_exit_five() {
    // equal eigenvalues everywhere: tracking is ambiguous
    let p = tmp_scene(
        "ambiguous.json",
        r#"{
          "version": "1",
          "charts": { "c": { "names": ["u", "v"], "box": [[-0.1, 0.1], [0.0, 0.02]], "basepoint": [0.0, 0.01] } },
          "metrics": { "h": { "chart": "c", "components": ["v^2", "0", "0", "v^2"] } },
          "probes": { "p": { "metric": "h", "curve": ["0", "t"], "t_values": [0.001, 0.002] } }
        }"#,
    );
    let out = run(&["blowup-probe", "--scene", p.to_str().unwrap(), "--object", "p"]);
    assert_eq!(code(&out), 5);
}

#[test]
fn json_report_is_written_and_stable() {
    let dir = std::env::temp_dir().join("statgeo-cli-report");
    let _ = std::fs::remove_dir_all(&dir);
    let args = [
        "fisher",
        "--scene",
        "gallery:bernoulli",
        "--object",
        "bernoulli",
        "--format",
        "json",
        "--out",
        dir.to_str().unwrap(),
    ];
    let out1 = run(&args);
    assert_eq!(code(&out1), 0);
    let file1 = std::fs::read(dir.join("report.json")).unwrap();
    assert_eq!(out1.stdout, file1);
    let parsed: serde_json::Value = serde_json::from_slice(&file1).unwrap();
    assert_eq!(parsed["verdict"], "pass");
    assert_eq!(parsed["command"], "fisher");
    // every check carries an anchor string
    for check in parsed["checks"].as_array().unwrap() {
        assert!(check["anchor"].as_str().unwrap().len() > 3);
    }
    let out2 = run(&args);
    assert_eq!(out1.stdout, out2.stdout, "identical runs, identical bytes");
}

#[test]
fn expected_rank_reported_for_degenerate_model() {
    let out = run(&[
        "fisher",
        "--scene",
        "gallery:degenerate-reparam",
        "--object",
        "overparametrized",
        "--format",
        "json",
    ]);
    assert_eq!(code(&out), 0);
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let checks = parsed["checks"].as_array().unwrap();
    assert!(checks
        .iter()
        .any(|c| c["name"] == "fisher-rank" && c["pass"] == true));
    let det = parsed["values"]
        .as_array()
        .unwrap()
        .iter()
        .find(|v| v["name"] == "det g at basepoint")
        .unwrap()["value"]
        .as_f64()
        .unwrap();
    assert!(det.abs() < 1e-12, "det {det}");
}
