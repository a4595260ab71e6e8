//! Experiment runners: wire a manifest to the computational modules and emit
//! machine-readable results with full provenance.

use std::fs;
use std::path::PathBuf;

use coarsespace::optimizer::TraceStatus;
use coarsespace::perturbation::{
    perturbed_coarse_space, select_pair, sweep_epsilon, uniform_grid, CaseAnalysis,
    PerturbationCase, SweepTable,
};
use coarsespace::two_level::spectral_coarse_space_with;
use coarsespace::*;
use serde::Serialize;
use thiserror::Error;

use crate::manifest::{ExperimentKind, ExperimentManifest};
use crate::output::{
    fmt_f64, fmt_opt, fmt_or_pole, fmt_param, write_coord_file, write_csv, write_json,
};

pub const SWEEP_CSV_HEADER: &str = "epsilon,abs_lambda_closed,rho_T_numeric,case_label";
pub const TABLE1_CSV_HEADER: &str = "c,omega,m,coarse_kind,rho,energy_norm,kappa2";
pub const TRACE_CSV_HEADER: &str = "step,objective,grad_norm,rho_probe";

/// The four (c, ω) panels of the perturbation and table experiments.
pub const PANELS: [(f64, f64); 4] = [(0.0, 0.5), (0.0, 1.0), (10.0, 0.5), (10.0, 1.0)];

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] coarsespace::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("optimizer aborted: trace written to {0}")]
    OptimizerAborted(PathBuf),
    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

impl RunError {
    /// Process exit code: 2 preconditions, 3 numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Core(e) if e.is_precondition() => 2,
            RunError::Core(_) => 3,
            RunError::OptimizerAborted(_) | RunError::Consistency(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

pub type RunResult<T> = std::result::Result<T, RunError>;

/// Files produced by a run, in write order.
#[derive(Debug, Default)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
}

/// Dispatches a manifest to its runner. The resolved manifest is written
/// next to the outputs first.
pub fn run(manifest: &ExperimentManifest) -> RunResult<RunSummary> {
    fs::create_dir_all(&manifest.out_dir)?;
    let mut summary = RunSummary::default();
    let manifest_path = manifest.out_dir.join("manifest.json");
    write_json(&manifest_path, manifest)?;
    summary.files.push(manifest_path);
    match manifest.experiment {
        ExperimentKind::Figure1 => run_figure1(manifest, &mut summary)?,
        ExperimentKind::Table1 => run_table1(manifest, &mut summary)?,
        ExperimentKind::Sweep => run_sweep(manifest, &mut summary)?,
        ExperimentKind::Optimize => run_optimize(manifest, &mut summary)?,
        ExperimentKind::Classify => run_classify(manifest, &mut summary)?,
    }
    Ok(summary)
}

fn setup(h: f64, c: f64, omega: f64) -> RunResult<(GridProblem, JacobiSmoother, Eigensystem)> {
    let problem = build_problem(h, c)?;
    let smoother = build_smoother(&problem, omega)?;
    let eigen = eigensystem(&problem, &smoother)?;
    Ok((problem, smoother, eigen))
}

/// Verdict sidecar of a sweep panel.
#[derive(Debug, Serialize)]
struct PanelVerdict {
    h: f64,
    c: f64,
    omega: f64,
    case: String,
    gamma: f64,
    lambda1: f64,
    lambda2: f64,
    lambda3_abs: f64,
    lt1: f64,
    lt2: f64,
    improving_exists: bool,
    min_at_zero: bool,
    epsilon_stars: Vec<f64>,
    grid_min_rho: Option<f64>,
    grid_argmin_epsilon: Option<f64>,
    pair_positions: (usize, usize),
}

fn panel_verdict(h: f64, c: f64, omega: f64, table: &SweepTable) -> PanelVerdict {
    let mut grid_min_rho = None;
    let mut grid_argmin_epsilon = None;
    for row in &table.rows {
        if let Some(r) = row.rho_numeric {
            if grid_min_rho.is_none_or(|best| r < best) {
                grid_min_rho = Some(r);
                grid_argmin_epsilon = Some(row.epsilon);
            }
        }
    }
    PanelVerdict {
        h,
        c,
        omega,
        case: table.analysis.label.to_string(),
        gamma: table.case.gamma,
        lambda1: table.case.lambda1,
        lambda2: table.case.lambda2,
        lambda3_abs: table.lambda3_abs,
        lt1: table.case.lt1,
        lt2: table.case.lt2,
        improving_exists: table.analysis.improving_exists,
        min_at_zero: table.analysis.min_at_zero,
        epsilon_stars: table.analysis.epsilon_stars.clone(),
        grid_min_rho,
        grid_argmin_epsilon,
        pair_positions: table.pair,
    }
}

fn sweep_rows(table: &SweepTable) -> Vec<Vec<String>> {
    let label = table.analysis.label.to_string();
    table
        .rows
        .iter()
        .map(|row| {
            vec![
                fmt_f64(row.epsilon),
                fmt_or_pole(row.abs_lambda_closed),
                fmt_or_pole(row.rho_numeric),
                label.clone(),
            ]
        })
        .collect()
}

fn run_panel(
    manifest: &ExperimentManifest,
    c: f64,
    omega: f64,
    stem: &str,
    summary: &mut RunSummary,
) -> RunResult<SweepTable> {
    if manifest.eps_points < 2 {
        return Err(coarsespace::Error::InvalidConfig(
            "eps_points must be >= 2".into(),
        )
        .into());
    }
    let (problem, smoother, eigen) = setup(manifest.h, c, omega)?;
    let pair = select_pair(&eigen, manifest.pair_policy)?;
    let grid = uniform_grid(manifest.eps_min, manifest.eps_max, manifest.eps_points);
    let table = sweep_epsilon(&problem, &smoother, &eigen, pair, &grid)?;

    let csv_path = manifest.out_dir.join(format!("{stem}.csv"));
    write_csv(&csv_path, SWEEP_CSV_HEADER, &sweep_rows(&table))?;
    summary.files.push(csv_path);

    let verdict = panel_verdict(manifest.h, c, omega, &table);
    let json_path = manifest.out_dir.join(format!("{stem}.verdict.json"));
    write_json(&json_path, &verdict)?;
    summary.files.push(json_path);
    Ok(table)
}

/// Four sweep panels over the fixed (c, ω) set, each with a verdict sidecar.
pub fn run_figure1(manifest: &ExperimentManifest, summary: &mut RunSummary) -> RunResult<()> {
    for (c, omega) in PANELS {
        let stem = format!("figure1_c{}_omega{}", fmt_param(c), fmt_param(omega));
        run_panel(manifest, c, omega, &stem, summary)?;
    }
    Ok(())
}

/// One sweep at the manifest's (c, ω).
pub fn run_sweep(manifest: &ExperimentManifest, summary: &mut RunSummary) -> RunResult<()> {
    run_panel(manifest, manifest.c, manifest.omega, "sweep", summary)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Table1Cell {
    c: f64,
    omega: f64,
    m: usize,
    coarse_kind: String,
    report: MetricReport,
}

fn rho_reverified(
    manifest: &ExperimentManifest,
    c: f64,
    omega: f64,
    m: usize,
    rho: f64,
) -> RunResult<()> {
    // Fresh assembly from scratch; emitted values must reproduce to 1e-9.
    let (problem, smoother, eigen) = setup(manifest.h, c, omega)?;
    let cs = spectral_coarse_space_with(&eigen, m, manifest.tie_policy)?;
    let op = assemble_t(&problem, &smoother, &cs, CoarseKind::Spectral)?;
    let fresh = spectral_radius(&op)?;
    if (fresh - rho).abs() > 1e-9 {
        return Err(RunError::Consistency(format!(
            "rho mismatch on re-assembly: {rho} vs {fresh} at c={c} omega={omega} m={m}"
        )));
    }
    Ok(())
}

/// Spectral and optimized metrics over the (c, ω) × m grid, long-format CSV.
pub fn run_table1(manifest: &ExperimentManifest, summary: &mut RunSummary) -> RunResult<()> {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut cells: Vec<Table1Cell> = Vec::new();

    for (panel_idx, &(c, omega)) in PANELS.iter().enumerate() {
        let (problem, smoother, eigen) = setup(manifest.h, c, omega)?;
        for (m_idx, &m) in manifest.m_values.iter().enumerate() {
            let cs = spectral_coarse_space_with(&eigen, m, manifest.tie_policy)?;
            let op = assemble_t(&problem, &smoother, &cs, CoarseKind::Spectral)?;
            let rho = spectral_radius(&op)?;
            rho_reverified(manifest, c, omega, m, rho)?;
            let energy = if c == 0.0 { Some(energy_norm(&op)?) } else { None };
            let kappa = if omega == 1.0 {
                Some(preconditioned_condition(&op, manifest.kappa2_variant)?)
            } else {
                None
            };
            rows.push(vec![
                fmt_f64(c),
                fmt_f64(omega),
                m.to_string(),
                "spectral".into(),
                fmt_f64(rho),
                fmt_opt(energy),
                fmt_opt(kappa),
            ]);
            cells.push(Table1Cell {
                c,
                omega,
                m,
                coarse_kind: "spectral".into(),
                report: MetricReport {
                    rho,
                    energy_norm: energy,
                    kappa2: kappa,
                    kappa2_variant: manifest.kappa2_variant,
                    provenance: op.provenance.clone(),
                },
            });

            if manifest.include_optimized {
                let cell_seed = manifest
                    .seed
                    .wrapping_add((panel_idx * manifest.m_values.len() + m_idx) as u64);
                let cfg = manifest.optimizer_config(m, cell_seed);
                let trace = optimize(&problem, &smoother, &cfg)?;
                let best_cs = CoarseSpace::new(trace.best_p.clone())?;
                let best_op = assemble_t(&problem, &smoother, &best_cs, CoarseKind::Optimized)?;
                let rho_opt = spectral_radius(&best_op)?;
                let energy_opt = if c == 0.0 { Some(energy_norm(&best_op)?) } else { None };
                let kappa_opt = if omega == 1.0 {
                    Some(preconditioned_condition(&best_op, manifest.kappa2_variant)?)
                } else {
                    None
                };
                rows.push(vec![
                    fmt_f64(c),
                    fmt_f64(omega),
                    m.to_string(),
                    "optimized".into(),
                    fmt_f64(rho_opt),
                    fmt_opt(energy_opt),
                    fmt_opt(kappa_opt),
                ]);
                cells.push(Table1Cell {
                    c,
                    omega,
                    m,
                    coarse_kind: "optimized".into(),
                    report: MetricReport {
                        rho: rho_opt,
                        energy_norm: energy_opt,
                        kappa2: kappa_opt,
                        kappa2_variant: manifest.kappa2_variant,
                        provenance: best_op.provenance.clone(),
                    },
                });
            }
        }
    }

    let csv_path = manifest.out_dir.join("table1.csv");
    write_csv(&csv_path, TABLE1_CSV_HEADER, &rows)?;
    summary.files.push(csv_path);
    let json_path = manifest.out_dir.join("table1.json");
    write_json(&json_path, &cells)?;
    summary.files.push(json_path);

    // Console mirror at two decimals.
    println!("c     omega  m   kind       rho   ||T||_A  kappa2");
    for cell in &cells {
        println!(
            "{:<5} {:<6} {:<3} {:<10} {:<5.2} {:<8} {}",
            cell.c,
            cell.omega,
            cell.m,
            cell.coarse_kind,
            cell.report.rho,
            cell.report
                .energy_norm
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "-".into()),
            cell.report
                .kappa2
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "-".into()),
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EpsilonStarCheck {
    epsilon: f64,
    rho_assembled: f64,
    lambda3_abs: f64,
    deviation: f64,
}

#[derive(Debug, Serialize)]
struct ClassifyReport {
    h: f64,
    c: f64,
    omega: f64,
    case: PerturbationCase,
    analysis: CaseAnalysis,
    pair_positions: (usize, usize),
    /// Assembled-operator cross-validation at each solved ε*.
    epsilon_star_checks: Vec<EpsilonStarCheck>,
}

/// Extracts the case data, classifies, solves for ε*, and cross-validates
/// the solved values against assembled two-level operators.
pub fn run_classify(manifest: &ExperimentManifest, summary: &mut RunSummary) -> RunResult<()> {
    let (problem, smoother, eigen) = setup(manifest.h, manifest.c, manifest.omega)?;
    let pair = select_pair(&eigen, manifest.pair_policy)?;
    let case = PerturbationCase::from_eigensystem(&eigen, pair, 0.0)?;
    let analysis = case.classify()?;

    let mut checks = Vec::new();
    for &eps in &analysis.epsilon_stars {
        let cs = perturbed_coarse_space(&eigen, pair, eps)?;
        let op = assemble_t(&problem, &smoother, &cs, CoarseKind::Perturbed)?;
        let rho = spectral_radius(&op)?;
        checks.push(EpsilonStarCheck {
            epsilon: eps,
            rho_assembled: rho,
            lambda3_abs: case.lambda3.abs(),
            deviation: (rho - case.lambda3.abs()).abs(),
        });
    }

    let report = ClassifyReport {
        h: manifest.h,
        c: manifest.c,
        omega: manifest.omega,
        case,
        analysis,
        pair_positions: pair,
        epsilon_star_checks: checks,
    };
    let path = manifest.out_dir.join("classify.json");
    write_json(&path, &report)?;
    summary.files.push(path);
    Ok(())
}

#[derive(Debug, Serialize)]
struct OptimizeReport {
    h: f64,
    c: f64,
    omega: f64,
    m: usize,
    status: String,
    best_rho: f64,
    final_rho: f64,
    spectral_rho: f64,
    report: MetricReport,
}

/// One optimizer run with trace CSV, coordinate dumps of the iterates and a
/// metric report of the best one.
pub fn run_optimize(manifest: &ExperimentManifest, summary: &mut RunSummary) -> RunResult<()> {
    let (problem, smoother, eigen) = setup(manifest.h, manifest.c, manifest.omega)?;
    let cfg = manifest.optimizer_config(manifest.m, manifest.seed);
    let trace = optimize(&problem, &smoother, &cfg)?;

    let rows: Vec<Vec<String>> = trace
        .steps
        .iter()
        .map(|st| {
            vec![
                st.step.to_string(),
                fmt_f64(st.objective),
                fmt_f64(st.grad_norm),
                fmt_opt(st.rho_probe),
            ]
        })
        .collect();
    let trace_path = manifest.out_dir.join("trace.csv");
    write_csv(&trace_path, TRACE_CSV_HEADER, &rows)?;
    summary.files.push(trace_path.clone());

    let best_path = manifest.out_dir.join("p_best.coord");
    write_coord_file(&best_path, &trace.best_p)?;
    summary.files.push(best_path);
    let final_path = manifest.out_dir.join("p_final.coord");
    write_coord_file(&final_path, &trace.final_p)?;
    summary.files.push(final_path);

    let status = match trace.status {
        TraceStatus::Completed => "completed".to_string(),
        TraceStatus::EarlyStopped { step } => format!("early_stopped_at_{step}"),
        TraceStatus::Aborted { step, halvings } => {
            format!("aborted_at_{step}_after_{halvings}_halvings")
        }
    };
    let report = OptimizeReport {
        h: manifest.h,
        c: manifest.c,
        omega: manifest.omega,
        m: manifest.m,
        status,
        best_rho: trace.best_rho,
        final_rho: trace.final_rho,
        spectral_rho: eigen.values_g[manifest.m].abs(),
        report: trace.report.clone(),
    };
    let report_path = manifest.out_dir.join("report.json");
    write_json(&report_path, &report)?;
    summary.files.push(report_path);

    println!(
        "optimize: m={} best rho = {:.2} (spectral {:.2})",
        manifest.m, trace.best_rho, report.spectral_rho
    );
    if matches!(trace.status, TraceStatus::Aborted { .. }) {
        return Err(RunError::OptimizerAborted(trace_path));
    }
    Ok(())
}
