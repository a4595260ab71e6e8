//! CLI and runner surface checks: schema stability, manifest handling,
//! reproducibility of outputs, and process exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use coarsespace_cli::manifest::{ExperimentKind, ExperimentManifest};
use coarsespace_cli::runners::{self, RunError, SWEEP_CSV_HEADER, TABLE1_CSV_HEADER, TRACE_CSV_HEADER};

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("coarsespace-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn first_line(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.lines().next().unwrap_or_default().to_string()
}

fn small_sweep_manifest(out: &Path) -> ExperimentManifest {
    ExperimentManifest {
        experiment: ExperimentKind::Sweep,
        c: 0.0,
        omega: 1.0,
        eps_min: -2.0,
        eps_max: 2.0,
        eps_points: 21,
        out_dir: out.to_path_buf(),
        ..Default::default()
    }
}

#[test]
fn sweep_csv_schema_is_stable() {
    let dir = temp_dir("sweep-schema");
    let manifest = small_sweep_manifest(&dir);
    runners::run(&manifest).unwrap();
    assert_eq!(first_line(&dir.join("sweep.csv")), SWEEP_CSV_HEADER);
    assert!(dir.join("sweep.verdict.json").exists());
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn table1_csv_schema_is_stable() {
    let dir = temp_dir("table1-schema");
    // h small enough that the c = 10 panels stay inside the real-spectrum
    // regime c <= 2/h.
    let manifest = ExperimentManifest {
        experiment: ExperimentKind::Table1,
        h: 1.0 / 6.0,
        m_values: vec![1, 2],
        include_optimized: false,
        out_dir: dir.clone(),
        ..Default::default()
    };
    runners::run(&manifest).unwrap();
    assert_eq!(first_line(&dir.join("table1.csv")), TABLE1_CSV_HEADER);
    // Spectral-only rows: 4 panels x 2 dims.
    let text = fs::read_to_string(dir.join("table1.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 8);
    // Energy norm present only for c = 0, kappa2 only for omega = 1.
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let c: f64 = cells[0].parse().unwrap();
        let omega: f64 = cells[1].parse().unwrap();
        assert_eq!(cells[5].is_empty(), c != 0.0, "energy norm presence: {line}");
        assert_eq!(cells[6].is_empty(), omega != 1.0, "kappa2 presence: {line}");
    }
}

#[test]
fn trace_csv_schema_is_stable() {
    let dir = temp_dir("trace-schema");
    let manifest = ExperimentManifest {
        experiment: ExperimentKind::Optimize,
        h: 0.2,
        m: 2,
        k: 3,
        iters: 10,
        out_dir: dir.clone(),
        ..Default::default()
    };
    runners::run(&manifest).unwrap();
    assert_eq!(first_line(&dir.join("trace.csv")), TRACE_CSV_HEADER);
    assert!(dir.join("p_best.coord").exists());
    assert!(dir.join("p_final.coord").exists());
    assert!(dir.join("report.json").exists());
}

#[test]
fn figure1_panels_carry_the_expected_verdicts() {
    let dir = temp_dir("figure1");
    let manifest = ExperimentManifest {
        experiment: ExperimentKind::Figure1,
        eps_points: 121,
        out_dir: dir.clone(),
        ..Default::default()
    };
    runners::run(&manifest).unwrap();

    let verdict = |name: &str| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
    };
    let rows = |name: &str| -> Vec<Vec<String>> {
        fs::read_to_string(dir.join(name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect()
    };

    // (0, 1/2): case B, grid minimum of rho at eps = 0.
    let v = verdict("figure1_c0_omega0.5.verdict.json");
    assert_eq!(v["case"], "B");
    assert_eq!(v["grid_argmin_epsilon"].as_f64().unwrap(), 0.0);

    // (0, 1): case C; the grid contains eps with rho(T(eps)) at |lambda3|.
    let v = verdict("figure1_c0_omega1.verdict.json");
    assert_eq!(v["case"], "C");
    let lambda3 = v["lambda3_abs"].as_f64().unwrap();
    let hit = rows("figure1_c0_omega1.csv").iter().any(|cells| {
        cells[2]
            .parse::<f64>()
            .map(|rho| (rho - lambda3).abs() <= 1e-4)
            .unwrap_or(false)
    });
    assert!(hit, "no grid point reached |lambda3|");

    // (10, 1/2): case D. (10, 1): case E with |lambda| < |lambda2| somewhere.
    let v = verdict("figure1_c10_omega0.5.verdict.json");
    assert_eq!(v["case"], "D");
    let v = verdict("figure1_c10_omega1.verdict.json");
    assert_eq!(v["case"], "E");
    let lambda2 = v["lambda2"].as_f64().unwrap().abs();
    let improved = rows("figure1_c10_omega1.csv").iter().any(|cells| {
        cells[1]
            .parse::<f64>()
            .map(|l| l < lambda2)
            .unwrap_or(false)
    });
    assert!(improved, "no grid point improves on |lambda2|");
}

#[test]
fn optimized_cell_improves_radius_and_conditioning() {
    // (c = 10, ω = 1, m = 15) at defaults: the optimized space must beat the
    // spectral radius and bring the preconditioned condition number below 11.
    let dir = temp_dir("opt-cell");
    let manifest = ExperimentManifest {
        experiment: ExperimentKind::Optimize,
        c: 10.0,
        omega: 1.0,
        m: 15,
        out_dir: dir.clone(),
        ..Default::default()
    };
    runners::run(&manifest).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let best = report["best_rho"].as_f64().unwrap();
    let spectral = report["spectral_rho"].as_f64().unwrap();
    assert!(best < spectral, "{best} !< {spectral}");
    let kappa = report["report"]["kappa2"].as_f64().unwrap();
    assert!(kappa <= 11.0, "kappa2 = {kappa}");
}

#[test]
fn sweep_runs_are_byte_identical() {
    let dir_a = temp_dir("repro-a");
    let dir_b = temp_dir("repro-b");
    runners::run(&small_sweep_manifest(&dir_a)).unwrap();
    runners::run(&small_sweep_manifest(&dir_b)).unwrap();
    for name in ["sweep.csv", "sweep.verdict.json"] {
        let a = fs::read(dir_a.join(name)).unwrap();
        let b = fs::read(dir_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn manifest_copy_reruns_identically() {
    // The manifest written next to the outputs reproduces the run verbatim.
    let dir_a = temp_dir("manifest-a");
    runners::run(&small_sweep_manifest(&dir_a)).unwrap();
    let copied: ExperimentManifest =
        serde_json::from_str(&fs::read_to_string(dir_a.join("manifest.json")).unwrap()).unwrap();
    let dir_b = temp_dir("manifest-b");
    let manifest = ExperimentManifest { out_dir: dir_b.clone(), ..copied };
    runners::run(&manifest).unwrap();
    assert_eq!(
        fs::read(dir_a.join("sweep.csv")).unwrap(),
        fs::read(dir_b.join("sweep.csv")).unwrap()
    );
}

#[test]
fn exit_code_distinguishes_precondition_from_numerical() {
    assert_eq!(
        RunError::Core(coarsespace::Error::InvalidDamping(2.0)).exit_code(),
        2
    );
    assert_eq!(
        RunError::Core(coarsespace::Error::EigensolverFailure("x")).exit_code(),
        3
    );
    assert_eq!(
        RunError::Core(coarsespace::Error::DegenerateCoarseSpace { cond: 1e15 }).exit_code(),
        3
    );
}

#[test]
fn binary_rejects_bad_damping_with_exit_2() {
    let out = temp_dir("exit2");
    let status = Command::new(env!("CARGO_BIN_EXE_coarsespace"))
        .args([
            "sweep",
            "--omega",
            "2.0",
            "--eps-points",
            "3",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn binary_accepts_fractional_mesh_width() {
    let out = temp_dir("fraction");
    let status = Command::new(env!("CARGO_BIN_EXE_coarsespace"))
        .args([
            "classify",
            "--h",
            "1/5",
            "--c",
            "0",
            "--omega",
            "1",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("classify.json")).unwrap()).unwrap();
    assert!(report["case"]["lambda1"].as_f64().unwrap().abs() > 0.0);
}

#[test]
fn binary_respects_config_file() {
    let out = temp_dir("config");
    let config_path = out.join("setup.json");
    fs::write(
        &config_path,
        r#"{"experiment":"sweep","c":10.0,"omega":0.5,"eps_points":5,"eps_min":-1,"eps_max":1}"#,
    )
    .unwrap();
    let run_dir = out.join("run");
    let status = Command::new(env!("CARGO_BIN_EXE_coarsespace"))
        .args([
            "sweep",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            run_dir.to_str().unwrap(),
        ])
        .env("COARSESPACE_THREADS", "1")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let manifest: ExperimentManifest =
        serde_json::from_str(&fs::read_to_string(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.c, 10.0);
    assert_eq!(manifest.omega, 0.5);
    assert_eq!(manifest.eps_points, 5);
    let text = fs::read_to_string(run_dir.join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 6);
}
