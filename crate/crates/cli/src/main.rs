//! `kks`: event-driven Kawasaki-Kac simulation, exact small-system oracles,
//! the spectral conservative Cahn-Hilliard solver, and the comparison
//! harness. Runs are configured either from a key/value config file
//! (`--config run.cfg`, schema in `docs/config-schema.txt`) or from flags.
//! Exit code 0 means every configured assertion passed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kks_core::harness::{self, config::RunKind, ExperimentConfig, InitKind};
use kks_core::kernel::Profile;
use kks_core::scaling::PlanMode;

#[derive(Parser)]
#[command(
    name = "kks",
    version,
    about = "Kawasaki exchange dynamics with Kac interaction and its conservative Cahn-Hilliard limit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Key/value config file; flags below override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Kac parameters of the sweep (pair with --n-half).
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    /// Lattice half-sizes N (2N+1 sites), one per gamma.
    #[arg(long = "n-half", value_delimiter = ',')]
    n_half: Vec<usize>,
    /// Kernel profile: gaussian | raised_cosine | triangular.
    #[arg(long, default_value = "gaussian")]
    profile: String,
    /// Scaling regime: ratio_locked | vanishing_ratio.
    #[arg(long, default_value = "ratio_locked")]
    mode: String,
    /// Diffusivity target.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Noise intensity target.
    #[arg(long = "sigma-star-sq", default_value_t = 1.0)]
    sigma_star_sq: f64,
    /// Inverse temperature.
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value_t = 8)]
    replicas: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Macroscopic sample times.
    #[arg(long, value_delimiter = ',')]
    schedule: Vec<f64>,
    /// Output directory.
    #[arg(long, default_value = "runs/out")]
    out: String,
    /// Initial condition: bernoulli | modulated | checkerboard.
    #[arg(long, default_value = "bernoulli")]
    init: String,
    /// Mean (bernoulli) or amplitude (modulated) of the initial spins.
    #[arg(long, default_value_t = 0.0)]
    init_level: f64,
    /// Retained Fourier modes on the macroscopic side.
    #[arg(long, default_value_t = 32)]
    k_max: usize,
    /// Macroscopic solver step.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Run a microscopic ensemble and write field/observable series.
    Simulate(CommonOpts),
    /// Run the macroscopic solver ensemble.
    Spde(CommonOpts),
    /// Exact block-measure tables (local equilibrium averages and distances).
    Oracle {
        #[command(flatten)]
        common: CommonOpts,
        /// Largest block half-width in the table.
        #[arg(long, default_value_t = 4)]
        l_max: usize,
    },
    /// Matched micro-vs-macro comparison across the gamma sweep.
    Compare(CommonOpts),
    /// Discrete symbol and semigroup audits.
    SymbolAudit(CommonOpts),
    /// Emit plot data (gnuplot text + SVG) from a result CSV.
    Plot {
        /// Input CSV.
        csv: PathBuf,
        /// Column for x values.
        #[arg(long, default_value = "t")]
        x: String,
        /// Column for y values.
        #[arg(long)]
        y: String,
        /// Optional series column.
        #[arg(long)]
        series: Option<String>,
        /// Output stem (writes stem.dat and stem.svg).
        #[arg(long)]
        out: PathBuf,
    },
}

fn build_config(common: &CommonOpts, kind: RunKind, l_max: usize) -> Result<ExperimentConfig, String> {
    let mut cfg = if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        ExperimentConfig::parse(&text).map_err(|e| e.to_string())?
    } else {
        ExperimentConfig::default()
    };
    cfg.run_kind = kind;
    if !common.gamma.is_empty() {
        if common.gamma.len() != common.n_half.len() {
            return Err("--gamma and --n-half need the same number of entries".into());
        }
        cfg.points = common.gamma.iter().copied().zip(common.n_half.iter().copied()).collect();
    }
    cfg.profile = Profile::parse(&common.profile).map_err(|e| e.to_string())?;
    cfg.plan_mode = match common.mode.as_str() {
        "ratio_locked" => PlanMode::RatioLocked,
        "vanishing_ratio" => PlanMode::VanishingRatio,
        other => return Err(format!("unknown --mode {other}")),
    };
    cfg.lambda = common.lambda;
    cfg.sigma_star_sq = common.sigma_star_sq;
    cfg.beta = common.beta;
    cfg.replicas = common.replicas;
    cfg.seed = common.seed;
    if !common.schedule.is_empty() {
        cfg.schedule = common.schedule.clone();
    }
    cfg.out_dir = common.out.clone();
    cfg.init = match common.init.as_str() {
        "bernoulli" => InitKind::Bernoulli { mean: common.init_level },
        "modulated" => InitKind::Modulated {
            amplitude: common.init_level,
            mode: 1,
        },
        "modulated-field" | "modulated_field" => InitKind::ModulatedField {
            x_amplitude: common.init_level,
            mode: 1,
        },
        "checkerboard" => InitKind::Checkerboard,
        other => return Err(format!("unknown --init {other}")),
    };
    cfg.spde_k_max = common.k_max;
    cfg.spde_dt = common.dt;
    cfg.oracle_l_max = l_max;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => build_config(c, RunKind::Simulate, 4).and_then(run),
        Command::Spde(c) => build_config(c, RunKind::Spde, 4).and_then(run),
        Command::Oracle { common, l_max } => {
            build_config(common, RunKind::Oracle, *l_max).and_then(run)
        }
        Command::Compare(c) => build_config(c, RunKind::Compare, 4).and_then(run_compare),
        Command::SymbolAudit(c) => build_config(c, RunKind::SymbolAudit, 4).and_then(run),
        Command::Plot { csv, x, y, series, out } => {
            harness::plotdata::plot_emit(csv, x, y, series.as_deref(), out)
                .map(|()| println!("wrote {}.dat and {}.svg", out.display(), out.display()))
                .map_err(|e| e.to_string())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cfg: ExperimentConfig) -> Result<(), String> {
    let dir = harness::run_experiment(&cfg).map_err(|e| e.to_string())?;
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn run_compare(cfg: ExperimentConfig) -> Result<(), String> {
    let dir = std::path::PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    harness::write_manifest(&dir, &cfg).map_err(|e| e.to_string())?;
    let report = harness::compare_run(&cfg, &dir).map_err(|e| e.to_string())?;
    let mut gammas: Vec<f64> = cfg.points.iter().map(|p| p.0).collect();
    gammas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let frac = report.trend_fraction(&gammas);
    println!("artifacts in {}", dir.display());
    println!("nonincreasing gap fraction: {frac:.3}");
    if frac < 0.8 {
        return Err(format!("gamma trend failed: fraction {frac:.3} < 0.8"));
    }
    Ok(())
}
