//! `coarsespace` — convergence analysis and coarse-space optimization for
//! two-level iterative methods on the model advection–diffusion problem.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coarsespace_cli::manifest::{ExperimentKind, ExperimentManifest};
use coarsespace_cli::runners;

#[derive(Parser)]
#[command(
    name = "coarsespace",
    about = "Coarse-space laboratory for two-level iterative methods",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every experiment; unset values fall back to the config
/// file (when given) and then to the built-in defaults.
#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Mesh width, e.g. 0.1 or 1/10.
    #[arg(long = "h", value_parser = parse_mesh_width)]
    h: Option<f64>,
    /// Advection coefficient.
    #[arg(long)]
    c: Option<f64>,
    /// Jacobi damping parameter in (0, 1].
    #[arg(long)]
    omega: Option<f64>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long = "out")]
    out: Option<PathBuf>,
    /// Manifest file supplying any unset option.
    #[arg(long = "config")]
    config: Option<PathBuf>,
    /// Tie-break policy for eigenvalue-magnitude clusters
    /// (signed_descending | negative_first | alternating_negative_first).
    #[arg(long)]
    tie_policy: Option<String>,
    /// Perturbation pair policy (negative_first | positive_first).
    #[arg(long)]
    pair_policy: Option<String>,
    /// Condition-number variant (singular_value | eigenvalue_ratio).
    #[arg(long)]
    kappa2_variant: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct SweepArgs {
    #[arg(long)]
    eps_min: Option<f64>,
    #[arg(long)]
    eps_max: Option<f64>,
    #[arg(long)]
    eps_points: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct OptimizerArgs {
    /// Coarse dimension.
    #[arg(long)]
    m: Option<usize>,
    /// Power of T in the surrogate objective.
    #[arg(long)]
    k: Option<usize>,
    /// Number of Rademacher probes (default: n).
    #[arg(long)]
    samples: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Step budget.
    #[arg(long)]
    iters: Option<usize>,
    /// Probes per step (default: all samples).
    #[arg(long)]
    batch: Option<usize>,
    /// Half-width of the uniform initialization.
    #[arg(long)]
    init_scale: Option<f64>,
    /// Redraw probes every step.
    #[arg(long)]
    resample: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Four ε sweeps over the (c, ω) panel grid with case verdicts.
    Figure1 {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Spectral and optimized coarse-space metrics over the (c, ω) × m grid.
    Table1 {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        optimizer: OptimizerArgs,
        /// Coarse dimensions, e.g. --m-values 1,5,10,15.
        #[arg(long, value_delimiter = ',')]
        m_values: Option<Vec<usize>>,
        /// Skip the per-cell optimizer runs.
        #[arg(long)]
        spectral_only: bool,
    },
    /// One ε sweep at the given (c, ω).
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// One stochastic prolongation optimization run.
    Optimize {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        optimizer: OptimizerArgs,
    },
    /// Perturbation-case classification with ε* cross-validation.
    Classify {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn parse_mesh_width(text: &str) -> Result<f64, String> {
    if let Some((num, den)) = text.split_once('/') {
        let num: f64 = num.trim().parse().map_err(|e| format!("{e}"))?;
        let den: f64 = den.trim().parse().map_err(|e| format!("{e}"))?;
        if den == 0.0 {
            return Err("denominator is zero".into());
        }
        Ok(num / den)
    } else {
        text.trim().parse().map_err(|e| format!("{e}"))
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(name: &str, value: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| format!("invalid {name}: {value}"))
}

fn load_base(config: &Option<PathBuf>, kind: ExperimentKind) -> Result<ExperimentManifest, String> {
    let mut manifest = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("bad manifest: {e}"))?
        }
        None => ExperimentManifest::default(),
    };
    manifest.experiment = kind;
    Ok(manifest)
}

fn apply_common(manifest: &mut ExperimentManifest, args: &CommonArgs) -> Result<(), String> {
    if let Some(h) = args.h {
        manifest.h = h;
    }
    if let Some(c) = args.c {
        manifest.c = c;
    }
    if let Some(omega) = args.omega {
        manifest.omega = omega;
    }
    if let Some(seed) = args.seed {
        manifest.seed = seed;
    }
    if let Some(out) = &args.out {
        manifest.out_dir = out.clone();
    }
    if let Some(p) = &args.tie_policy {
        manifest.tie_policy = parse_enum("tie_policy", p)?;
    }
    if let Some(p) = &args.pair_policy {
        manifest.pair_policy = parse_enum("pair_policy", p)?;
    }
    if let Some(v) = &args.kappa2_variant {
        manifest.kappa2_variant = parse_enum("kappa2_variant", v)?;
    }
    Ok(())
}

fn apply_sweep(manifest: &mut ExperimentManifest, args: &SweepArgs) {
    if let Some(v) = args.eps_min {
        manifest.eps_min = v;
    }
    if let Some(v) = args.eps_max {
        manifest.eps_max = v;
    }
    if let Some(v) = args.eps_points {
        manifest.eps_points = v;
    }
}

fn apply_optimizer(manifest: &mut ExperimentManifest, args: &OptimizerArgs) {
    if let Some(v) = args.m {
        manifest.m = v;
    }
    if let Some(v) = args.k {
        manifest.k = v;
    }
    if let Some(v) = args.samples {
        manifest.samples = Some(v);
    }
    if let Some(v) = args.lr {
        manifest.lr = v;
    }
    if let Some(v) = args.iters {
        manifest.iters = v;
    }
    if let Some(v) = args.batch {
        manifest.batch = Some(v);
    }
    if let Some(v) = args.init_scale {
        manifest.init_scale = Some(v);
    }
    if args.resample {
        manifest.resample = true;
    }
}

fn build_manifest(command: &Command) -> Result<ExperimentManifest, String> {
    match command {
        Command::Figure1 { common, sweep } => {
            let mut m = load_base(&common.config, ExperimentKind::Figure1)?;
            apply_common(&mut m, common)?;
            apply_sweep(&mut m, sweep);
            Ok(m)
        }
        Command::Table1 { common, optimizer, m_values, spectral_only } => {
            let mut m = load_base(&common.config, ExperimentKind::Table1)?;
            apply_common(&mut m, common)?;
            apply_optimizer(&mut m, optimizer);
            if let Some(values) = m_values {
                m.m_values = values.clone();
            }
            if *spectral_only {
                m.include_optimized = false;
            }
            Ok(m)
        }
        Command::Sweep { common, sweep } => {
            let mut m = load_base(&common.config, ExperimentKind::Sweep)?;
            apply_common(&mut m, common)?;
            apply_sweep(&mut m, sweep);
            Ok(m)
        }
        Command::Optimize { common, optimizer } => {
            let mut m = load_base(&common.config, ExperimentKind::Optimize)?;
            apply_common(&mut m, common)?;
            apply_optimizer(&mut m, optimizer);
            Ok(m)
        }
        Command::Classify { common } => {
            let mut m = load_base(&common.config, ExperimentKind::Classify)?;
            apply_common(&mut m, common)?;
            Ok(m)
        }
    }
}

fn init_thread_pool() {
    if let Ok(text) = std::env::var("COARSESPACE_THREADS") {
        if let Ok(threads) = text.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_thread_pool();

    let manifest = match build_manifest(&cli.command) {
        Ok(m) => m,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };

    match runners::run(&manifest) {
        Ok(summary) => {
            for file in &summary.files {
                println!("wrote {}", file.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
