//! `bwdlab` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use bwdlab::bracket::write_order_csv;
use bwdlab::harness::{
    dist_test, run_config_file, run_order_check, stability_report, write_seed_plots, LearningCurve, OrderCheckSpec,
    OrderTarget, Reference, RunManifest,
};
use bwdlab::LabError;
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_CONFIG: u8 = 2;
const EXIT_ALL_DIVERGED: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(name = "bwdlab", about = "Forward and backward SGD composition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its run directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Write per-seed SVG plots for a run directory.
    Plot {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        log_y: bool,
    },
    /// Loss variance and step displacement over the final window, per seed.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, default_value_t = 200)]
        window: usize,
    },
    /// Kolmogorov-Smirnov tests on a run's terminal ensembles.
    DistTest {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = RefArg::Analytic)]
        reference: RefArg,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
    },
    /// Error ratios of an approximation along a halving step-size ladder.
    OrderCheck {
        #[arg(long, value_enum, default_value_t = TargetArg::ApproxBackward)]
        target: TargetArg,
        #[arg(long, default_value_t = 0.1)]
        h0: f64,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        /// Split count for permutation-average and small-batch.
        #[arg(long, default_value_t = 2)]
        c: usize,
        /// Composition length for approx-backward and commutator.
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        data_seed: u64,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        /// Write the h,error,ratio table here as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the tool version.
    Version,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefArg {
    Analytic,
    TwoSample,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    ApproxBackward,
    Commutator,
    PermutationAverage,
    SmallBatch,
    Euler,
}

impl From<TargetArg> for OrderTarget {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::ApproxBackward => OrderTarget::ApproxBackward,
            TargetArg::Commutator => OrderTarget::Commutator,
            TargetArg::PermutationAverage => OrderTarget::PermutationAverage,
            TargetArg::SmallBatch => OrderTarget::SmallBatch,
            TargetArg::Euler => OrderTarget::Euler,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                LabError::Config(_) | LabError::Json(_) => EXIT_CONFIG,
                _ => EXIT_INTERNAL,
            })
        }
    }
}

fn execute(command: Command) -> bwdlab::Result<ExitCode> {
    match command {
        Command::Run { config, output_dir } => {
            let summary = run_config_file(&config, output_dir.as_deref())?;
            let m = &summary.manifest;
            println!("run directory: {}", summary.dir.display());
            for r in &m.runs {
                println!("seed {} {}: {:?} ({} rows, {:.3}s)", r.seed, r.tag, r.status, r.rows, r.wall_clock_s);
            }
            if m.all_seeds_diverged() {
                eprintln!("error: every seed diverged");
                return Ok(ExitCode::from(EXIT_ALL_DIVERGED));
            }
        }
        Command::Plot { run_dir, log_y } => {
            let curves = LearningCurve::read_dir(&run_dir)?;
            for name in write_seed_plots(&run_dir, &curves, log_y)? {
                println!("{}", run_dir.join(name).display());
            }
        }
        Command::Report { run_dir, window } => {
            let curves = LearningCurve::read_dir(&run_dir)?;
            let report = stability_report(&curves, window)?;
            println!("seed,mode,window,loss_variance,max_step_displacement");
            for r in &report.rows {
                let var = r.loss_variance.map_or(String::new(), |v| format!("{v:.6e}"));
                println!("{},{},{},{var},{:.6e}", r.seed, r.mode, r.window, r.max_displacement);
            }
            for c in &report.comparisons {
                println!(
                    "seed {}: backward {} stable than forward (displacement ratio {:.4})",
                    c.seed,
                    if c.backward_more_stable { "more" } else { "not more" },
                    c.displacement_ratio
                );
            }
            let path = run_dir.join("stability.json");
            std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
            println!("{}", path.display());
        }
        Command::DistTest { run_dir, reference, alpha } => {
            let reference = match reference {
                RefArg::Analytic => Reference::Analytic,
                RefArg::TwoSample => Reference::TwoSample,
            };
            let report = dist_test(&run_dir, reference, alpha)?;
            for c in &report.checks {
                println!(
                    "{} {}: n = {}, D = {:.5}, critical = {:.5}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.samples,
                    c.statistic,
                    c.critical
                );
            }
            let diverged = RunManifest::read(&run_dir)?.diverged_seeds();
            if !diverged.is_empty() {
                println!("excluded diverged seeds: {diverged:?}");
            }
        }
        Command::OrderCheck {
            target,
            h0,
            levels,
            c,
            steps,
            data_seed,
            seed,
            out,
        } => {
            let spec = OrderCheckSpec {
                target: target.into(),
                h0,
                levels,
                c,
                steps,
                data_seed,
                seed,
            };
            let rows = run_order_check(&spec)?;
            println!("h,error,ratio");
            for r in &rows {
                let ratio = r.ratio.map_or(String::new(), |x| format!("{x:.4}"));
                println!("{},{:.6e},{ratio}", r.h, r.error);
            }
            if let Some(path) = out {
                write_order_csv(&rows, &path)?;
            }
        }
        Command::Version => println!("bwdlab {}", env!("CARGO_PKG_VERSION")),
    }
    Ok(ExitCode::SUCCESS)
}
