//! `sgmsched`: schedule-tuned score-based generative modeling.
//!
//! Subcommands: `generate`, `train`, `bound`, `metrics`, `tune`, `plot`,
//! `run`. Exit codes: 2 for configuration errors, 3 for numeric failures.
//! `SGM_THREADS` caps the worker count (default: hardware parallelism).

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sgmsched_core::diffusion::Scheme;
use sgmsched_core::Error;

use crate::config::BoundMetricName;

#[derive(Parser)]
#[command(name = "sgmsched", version, about = "Noise-schedule tuning for score-based generative models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample from the backward process (or the exact forward process).
    Generate {
        /// Experiment config with [target] and [schedule].
        #[arg(long)]
        config: PathBuf,
        /// Backward scheme.
        #[arg(long, value_parser = parse_scheme, default_value = "em")]
        scheme: Scheme,
        /// Grid steps N (defaults to the config grid).
        #[arg(long)]
        steps: Option<usize>,
        /// Sample count.
        #[arg(long)]
        n: usize,
        /// Seed override (defaults to the config seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Score source: exact, zero, or net:<params-file>.
        #[arg(long, default_value = "exact")]
        score: String,
        /// Draw from the exact forward marginal at this time instead of
        /// running a backward sampler.
        #[arg(long)]
        forward_t: Option<f64>,
        /// Output samples file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the score network.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Loss: explicit or conditional (defaults to the config).
        #[arg(long)]
        loss: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Batch size.
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// none or rescale.
        #[arg(long)]
        preprocess: Option<String>,
        /// Output parameter file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a KL or W2 upper bound term by term.
    Bound {
        #[arg(long)]
        config: PathBuf,
        /// kl or w2 (defaults to the [bound] section).
        #[arg(long, value_parser = parse_metric)]
        metric: Option<BoundMetricName>,
        /// Use the refined (doubled-exponent) mixing term.
        #[arg(long)]
        refined: bool,
        /// 0, estimate, or a value.
        #[arg(long)]
        eps: Option<String>,
        #[arg(long)]
        n_mc: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        /// Score source: exact, zero, train, or net:<params-file>.
        #[arg(long)]
        score: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Empirical divergence metrics between sample files.
    Metrics {
        #[arg(long)]
        config: PathBuf,
        /// gauss-kl, gauss-w2, sliced-w2, knn-kl, or nll.
        #[arg(long)]
        metric: String,
        /// First (or only) samples file.
        #[arg(long)]
        a: PathBuf,
        /// Second samples file (sliced-w2, knn-kl).
        #[arg(long)]
        b: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        projections: usize,
        /// Neighbor count or auto (= ceil(sqrt(d))).
        #[arg(long, default_value = "auto")]
        k: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the parametric schedule family and locate a*.
    Tune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_metric)]
        metric: Option<BoundMetricName>,
        #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
        a_min: f64,
        #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
        a_max: f64,
        #[arg(long, default_value_t = 1.0)]
        a_step: f64,
        #[arg(long, default_value_t = 0.25)]
        refine_step: f64,
        #[arg(long, default_value_t = 1.0)]
        refine_radius: f64,
        /// Skip the refinement stage.
        #[arg(long)]
        skip_refine: bool,
        /// Empirical runs per refined point.
        #[arg(long, default_value_t = 1)]
        runs: usize,
        /// exact, zero, or train.
        #[arg(long)]
        score: Option<String>,
        #[arg(long)]
        eps: Option<String>,
        /// Also run the sampler and report the empirical metric per a.
        #[arg(long)]
        empirical: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV (a JSON twin is written alongside).
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a CSV as an SVG line chart.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        /// X column name.
        #[arg(long)]
        x: String,
        /// Comma-separated y column names.
        #[arg(long)]
        y: String,
        /// Log-scale the y axis.
        #[arg(long)]
        log_y: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a config-driven experiment (single run or sweep).
    Run {
        config: PathBuf,
    },
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    match s {
        "em" => Ok(Scheme::Em),
        "ei" => Ok(Scheme::Ei),
        other => Err(format!("scheme must be em or ei, got {other}")),
    }
}

fn parse_metric(s: &str) -> Result<BoundMetricName, String> {
    match s {
        "kl" => Ok(BoundMetricName::Kl),
        "w2" => Ok(BoundMetricName::W2),
        other => Err(format!("metric must be kl or w2, got {other}")),
    }
}

fn init_thread_pool() {
    let threads = std::env::var("SGM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1);
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn dispatch(cli: Cli) -> sgmsched_core::Result<()> {
    match cli.command {
        Command::Generate { config, scheme, steps, n, seed, score, forward_t, out } => {
            commands::cmd_generate(&commands::GenerateArgs {
                config,
                scheme,
                steps,
                n,
                seed,
                score,
                forward_t,
                out,
            })
        }
        Command::Train { config, loss, epochs, lr, batch, seed, preprocess, out } => {
            commands::cmd_train(&commands::TrainArgs {
                config,
                loss,
                epochs,
                lr,
                batch,
                seed,
                preprocess,
                out,
            })
        }
        Command::Bound { config, metric, refined, eps, n_mc, steps, score, seed, out } => {
            commands::cmd_bound(&commands::BoundArgs {
                config,
                metric,
                refined,
                eps,
                n_mc,
                steps,
                score,
                seed,
                out,
            })
        }
        Command::Metrics { config, metric, a, b, projections, k, seed, out } => {
            commands::cmd_metrics(&commands::MetricsArgs {
                config,
                metric,
                a,
                b,
                projections,
                k,
                seed,
                out,
            })
        }
        Command::Tune {
            config,
            metric,
            a_min,
            a_max,
            a_step,
            refine_step,
            refine_radius,
            skip_refine,
            runs,
            score,
            eps,
            empirical,
            seed,
            out,
        } => commands::cmd_tune(&commands::TuneArgs {
            config,
            metric,
            a_min,
            a_max,
            a_step,
            refine_step,
            refine_radius,
            skip_refine,
            runs,
            score,
            eps,
            empirical,
            seed,
            out,
        }),
        Command::Plot { csv, x, y, log_y, out } => {
            let y_cols: Vec<String> = y.split(',').map(|s| s.trim().to_string()).collect();
            plot::emit_plot(&csv, &x, &y_cols, &out, log_y)
        }
        Command::Run { config } => commands::cmd_run(&config),
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config(_) | Error::Format(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
