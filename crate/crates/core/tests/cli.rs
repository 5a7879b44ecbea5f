use ctflex::cli::{run, EXIT_INPUT, EXIT_OK};

fn instance(name: &str) -> String {
    format!("{}/../../instances/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn assess_writes_tube_summary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        run([
            "ctflex",
            "assess",
            &instance("toy3"),
            "--directions",
            "2",
            "--out",
            out
        ]),
        EXIT_OK
    );
    for name in ["tube.csv", "summary.json", "plot_data.csv", "manifest.json"] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert!(summary.is_object());

    assert_eq!(
        run([
            "ctflex",
            "pqbox",
            "--tube-dir",
            out,
            "--time",
            "1800",
            "--out",
            out
        ]),
        EXIT_OK
    );
    let boxed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("box.json")).unwrap())
            .unwrap();
    let b = &boxed;
    assert!(b["P1"].as_f64().unwrap() >= b["P2"].as_f64().unwrap());
    assert!(b["Q1"].as_f64().unwrap() >= b["Q2"].as_f64().unwrap());
}

#[test]
fn compare_dt_and_metrics_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        run([
            "ctflex",
            "compare-dt",
            &instance("ramp3"),
            "--directions",
            "2",
            "--out",
            out
        ]),
        EXIT_OK
    );
    assert!(dir.path().join("compare.csv").is_file());
    assert_eq!(
        run([
            "ctflex",
            "metrics",
            &instance("toy3"),
            "--directions",
            "2",
            "--alphas",
            "0.05,0.1",
            "--out",
            out
        ]),
        EXIT_OK
    );
    let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn bad_inputs_exit_with_input_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(["ctflex", "validate", &instance("feeder12")]), EXIT_OK);
    assert_eq!(
        run([
            "ctflex",
            "assess",
            &instance("toy3"),
            "--alpha",
            "0.7",
            "--out",
            out
        ]),
        EXIT_INPUT
    );
    assert_eq!(
        run([
            "ctflex",
            "pqbox",
            "--tube-dir",
            "/nonexistent",
            "--time",
            "0",
            "--out",
            out
        ]),
        EXIT_INPUT
    );
    assert_eq!(
        run([
            "ctflex",
            "assess",
            &instance("toy3"),
            "--theta-set",
            "pi/7",
            "--directions",
            "2",
            "--out",
            out
        ]),
        EXIT_INPUT
    );
}
