//! `pmloss`: scripting front end for pmloss-core.
//!
//! Every command prints `key = value` lines. Exit codes: 0 ok, 2 I/O or
//! parse failure (including bad flags), 3 shape or precondition violation,
//! 4 numerical degeneracy.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "pmloss",
    version,
    about = "Pointmap-regularised point cloud tools"
)]
struct Cli {
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlyEncoding {
    Ascii,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlignMethod {
    Umeyama,
    Icp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ChamferMode {
    Sd,
    One2one,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OptimizeLoss {
    Pm3d,
    One2one,
    None,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lift a depth map to world points.
    Unproject {
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = PlyEncoding::Binary)]
        format: PlyEncoding,
    },
    /// Fit the similarity mapping `source` onto `target`.
    Align {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_enum, default_value_t = AlignMethod::Umeyama)]
        method: AlignMethod,
        #[arg(long)]
        out_transform: Option<PathBuf>,
        #[arg(long, default_value_t = pmloss_core::alignment::DEFAULT_ICP_MAX_ITERS)]
        max_iters: usize,
        #[arg(long, default_value_t = pmloss_core::alignment::DEFAULT_ICP_REL_TOL)]
        rel_tol: f64,
    },
    /// Single-directional Chamfer (or index-paired) loss from `pred` to `ref`.
    Chamfer {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Align `ref` onto `pred` first (index-paired Umeyama).
        #[arg(long)]
        align: bool,
        #[arg(long, value_enum, default_value_t = ChamferMode::Sd)]
        mode: ChamferMode,
    },
    /// Accuracy, completeness and overall distances against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Toy depth refinement on a generated scene directory; writes a CSV trace.
    Optimize {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_enum, default_value_t = OptimizeLoss::Pm3d)]
        loss: OptimizeLoss,
        #[arg(long, default_value_t = 300)]
        steps: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = pmloss_core::loss::DEFAULT_LAMBDA_PM)]
        lambda_pm: f64,
        #[arg(long, default_value_t = pmloss_core::loss::DEFAULT_LAMBDA_RENDER)]
        lambda_render: f64,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Materialise a synthetic scene from a TOML spec.
    Gen {
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Median wall times of umeyama, icp and chamfer_sd at `n` correspondences.
    Bench {
        #[arg(long, default_value_t = 458_752)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = pmloss_core::alignment::DEFAULT_ICP_MAX_ITERS)]
        icp_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Unproject {
            depth,
            camera,
            out,
            format,
        } => commands::unproject(&depth, &camera, &out, format),
        Command::Align {
            source,
            target,
            method,
            out_transform,
            max_iters,
            rel_tol,
        } => commands::align(
            &source,
            &target,
            method,
            out_transform.as_deref(),
            max_iters,
            rel_tol,
        ),
        Command::Chamfer {
            pred,
            reference,
            align,
            mode,
        } => commands::chamfer(&pred, &reference, align, mode),
        Command::Eval { pred, gt } => commands::eval(&pred, &gt),
        Command::Optimize {
            scene,
            loss,
            steps,
            lr,
            lambda_pm,
            lambda_render,
            trace,
        } => commands::optimize(&scene, loss, steps, lr, lambda_pm, lambda_render, &trace),
        Command::Gen { spec, seed, out } => commands::gen(spec.as_deref(), seed, &out),
        Command::Bench {
            n,
            reps,
            icp_iters,
            seed,
        } => commands::bench(n, reps, icp_iters, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(3);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
