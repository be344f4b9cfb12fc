//! End-to-end runner behavior: artifact writing, replay byte-compare,
//! tamper detection and worker-count independence.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use pharm_cli::{replay, run, write_outcome, BatteryFilter, CliError, ExperimentConfig};

static COUNTER: AtomicUsize = AtomicUsize::new(0);

fn temp_dir(tag: &str) -> PathBuf {
    let n = COUNTER.fetch_add(1, Ordering::SeqCst);
    let dir = std::env::temp_dir().join(format!(
        "pharm-test-{}-{tag}-{n}",
        std::process::id()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config(out: &std::path::Path) -> ExperimentConfig {
    let json = format!(
        r#"{{
        "mesh_level": 3,
        "metric": {{"kind": "closed_form", "family": "conformal_sin", "params": {{"eps": 0.1, "k": 2.0}}}},
        "energy": {{"p": 2.0, "target_dim": 2}},
        "boundary": {{"family": "random_fourier", "params": {{"dim": 2, "modes": 3, "amplitude": 0.4, "seed": 5}}}},
        "battery": [
            {{"check": "convex_hull"}},
            {{"check": "campanato", "center": [0.0, 0.0], "r0": 0.4, "delta": 0.5, "count": 3, "min_exponent": -10.0}},
            {{"check": "hole_filling", "centers": [[0.0, 0.0]], "radii": [0.3]}}
        ],
        "output_dir": "{}",
        "seed": 7
    }}"#,
        out.display()
    );
    ExperimentConfig::from_json(&json).unwrap()
}

#[test]
fn run_writes_expected_artifacts() {
    let out = temp_dir("artifacts");
    let config = small_config(&out);
    let outcome = run(&config, BatteryFilter::All).unwrap();
    write_outcome(&out, &outcome).unwrap();
    for name in [
        "config_echo.json",
        "report.json",
        "field.csv",
        "mesh_vertices.csv",
        "mesh_triangles.csv",
        "checks/00_convex_hull.csv",
        "checks/01_campanato.csv",
        "checks/02_hole_filling.csv",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["checks"].as_array().unwrap().len(), 3);
    assert!(report["mesh_hash"].is_string());
}

#[test]
fn replay_reproduces_fresh_run() {
    let out = temp_dir("replay");
    let config = small_config(&out);
    let outcome = run(&config, BatteryFilter::All).unwrap();
    write_outcome(&out, &outcome).unwrap();
    let report = replay(&out).unwrap();
    assert_eq!(report.mesh_level, 3);
}

#[test]
fn replay_detects_tampering() {
    let out = temp_dir("tamper");
    let config = small_config(&out);
    let outcome = run(&config, BatteryFilter::All).unwrap();
    write_outcome(&out, &outcome).unwrap();
    // Flip one digit of a recorded artifact.
    let target = out.join("field.csv");
    let mut body = std::fs::read_to_string(&target).unwrap();
    body = body.replacen('3', "4", 1);
    std::fs::write(&target, body).unwrap();
    match replay(&out) {
        Err(CliError::NonReproducible { file, .. }) => assert_eq!(file, "field.csv"),
        other => panic!("expected NonReproducible, got {other:?}"),
    }
}

#[test]
fn artifacts_identical_across_worker_counts() {
    let out = temp_dir("threads");
    let config = small_config(&out);
    let mut bodies = Vec::new();
    for threads in [1usize, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let outcome = pool.install(|| run(&config, BatteryFilter::All).unwrap());
        let mut artifacts = outcome.artifacts.clone();
        artifacts.sort_by(|a, b| a.0.cmp(&b.0));
        bodies.push(artifacts);
    }
    assert_eq!(bodies[0], bodies[1]);
    assert_eq!(bodies[1], bodies[2]);
}

#[test]
fn affine_flat_battery_all_passes() {
    // Flat metric + affine data: hull check trivially clean and every
    // sharp average collapses to zero.
    let out = temp_dir("affine");
    let json = format!(
        r#"{{
        "mesh_level": 3,
        "metric": {{"kind": "closed_form", "family": "identity"}},
        "energy": {{"p": 3.0, "target_dim": 2}},
        "boundary": {{"family": "affine", "params": {{"matrix": [[0.7, -0.2], [0.0, 0.4]]}}}},
        "battery": [
            {{"check": "convex_hull"}},
            {{"check": "campanato", "center": [0.0, 0.0], "r0": 0.4, "delta": 0.5, "count": 3}}
        ],
        "output_dir": "{}"
    }}"#,
        out.display()
    );
    let config = ExperimentConfig::from_json(&json).unwrap();
    let outcome = run(&config, BatteryFilter::All).unwrap();
    assert!(outcome.report.all_passed, "{:?}", outcome.report.checks);
    let campanato = &outcome.report.checks[1];
    assert_eq!(campanato.measured["exponent"], "degenerate");
    let zeros: Vec<f64> =
        serde_json::from_value(campanato.measured["a"].clone()).unwrap();
    assert!(zeros.iter().all(|&a| a == 0.0), "{zeros:?}");
}

#[test]
fn registry_listing_is_sorted_and_complete() {
    let listing = pharm_cli::list_registries();
    for tag in [
        "constant",
        "conformal_sin",
        "checkerboard",
        "affine",
        "radial_pfundamental",
        "circle_valued",
        "zero",
        "directional_growth",
        "unit_vector_saturating",
    ] {
        assert!(listing.contains(tag), "missing {tag} in:\n{listing}");
    }
    // Each section lists its families in sorted order.
    for section in listing.split("families:\n").skip(1) {
        let names: Vec<&str> = section
            .lines()
            .take_while(|l| l.starts_with("  "))
            .map(|l| l.trim())
            .collect();
        let mut sorted = names.clone();
        sorted.sort_unstable();
        assert_eq!(names, sorted);
    }
}

#[test]
fn config_errors_have_paths_and_exit_code() {
    let bad = r#"{
        "mesh_level": 3,
        "metric": {"kind": "closed_form", "family": "identity"},
        "energy": {"p": 1.0, "target_dim": 1},
        "boundary": {"family": "constant", "params": {"value": [0.0]}}
    }"#;
    match ExperimentConfig::from_json(bad) {
        Err(e @ CliError::Config(_)) => {
            assert!(e.to_string().contains("energy.p"), "{e}");
            assert_eq!(e.exit_code(), 3);
        }
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn boundary_dimension_mismatch_is_config_error() {
    let out = temp_dir("dim-mismatch");
    let json = format!(
        r#"{{
        "mesh_level": 2,
        "metric": {{"kind": "closed_form", "family": "identity"}},
        "energy": {{"p": 2.0, "target_dim": 2}},
        "boundary": {{"family": "constant", "params": {{"value": [0.0]}}}},
        "output_dir": "{}"
    }}"#,
        out.display()
    );
    let config = ExperimentConfig::from_json(&json).unwrap();
    match run(&config, BatteryFilter::All) {
        Err(CliError::Config(msg)) => assert!(msg.contains("boundary"), "{msg}"),
        other => panic!("expected config error, got {other:?}"),
    }
}
