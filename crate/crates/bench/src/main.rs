use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use span_bench::config::ExperimentConfig;
use span_bench::experiment::run_experiment;
use span_bench::plot::{emit_plot_data, write_table, PlotMode};
use span_bench::scaling::{per_iteration_scaling, width_scaling, write_rows, ScalingSettings};
use span_bench::traces::load_trace;
use span_bench::BenchError;

/// Runs SPAN and baseline optimizers from a config file.
///
/// BENCH_THREADS caps the number of worker threads used by numerical
/// kernels. Exit status: 0 ok, 1 config or input error, 2 method failure.
#[derive(Parser)]
#[command(name = "bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every method in the config and write one CSV trace per method.
    Run { config: PathBuf },
    /// Align traces into a plot-ready table.
    Plot {
        /// loss_vs_time, loss_vs_iter or hessian_err
        mode: String,
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        /// Subtract the best loss seen across all traces.
        #[arg(long)]
        suboptimality: bool,
    },
    /// Time SPAN and NewSamp steps on quadratics of growing dimension.
    Scale {
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        /// Also time SPAN at these sketch widths for the first dimension.
        #[arg(long, value_delimiter = ',')]
        widths: Option<Vec<usize>>,
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn configure_threads() -> Result<(), BenchError> {
    let Ok(raw) = std::env::var("BENCH_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| BenchError::Config(format!("BENCH_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| BenchError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<i32, BenchError> {
    configure_threads()?;
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg)?;
            for o in &report.outcomes {
                match &o.result {
                    Ok(run) => {
                        let last = run.trace.last();
                        println!(
                            "{:<8} {:>5} iters  loss {:<22} grad {:<22} {:.3}s",
                            o.method,
                            run.trace.len(),
                            last.map(|r| r.loss.to_string()).unwrap_or_default(),
                            last.map(|r| r.grad_norm.to_string()).unwrap_or_default(),
                            o.seconds
                        );
                    }
                    Err(e) => println!("{:<8} FAILED: {e}", o.method),
                }
            }
            println!("summary: {}", report.summary.display());
            Ok(report.first_failure().map_or(0, BenchError::exit_code))
        }
        Command::Plot {
            mode,
            csv,
            output,
            suboptimality,
        } => {
            let mode: PlotMode = mode.parse()?;
            let traces = csv
                .iter()
                .map(|p| {
                    let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    Ok((name, load_trace(p)?))
                })
                .collect::<Result<Vec<_>, BenchError>>()?;
            let table = emit_plot_data(&traces, mode, suboptimality)?;
            for w in &table.warnings {
                log::warn!("{w}");
            }
            write_table(&table, std::fs::File::create(&output)?)?;
            Ok(0)
        }
        Command::Scale {
            dims,
            widths,
            config,
            output,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dims = dims.unwrap_or_else(|| cfg.scale.dims.clone());
            if dims.is_empty() {
                return Err(BenchError::Config("no dimensions to time".into()));
            }
            let settings = ScalingSettings {
                l: cfg.span.l,
                q: cfg.span.q,
                m: cfg.span.m,
                newsamp_m: cfg.newsamp.m,
                steps: cfg.scale.steps,
                warmup: cfg.scale.warmup,
                newsamp_cap: cfg.scale.newsamp_cap,
                min_seconds: cfg.scale.min_seconds,
                seed: cfg.experiment.seed,
            };
            let mut rows = per_iteration_scaling(&dims, &settings)?;
            if let Some(widths) = widths {
                rows.extend(width_scaling(dims[0], &widths, &settings)?);
            }
            match output {
                Some(path) => write_rows(&rows, std::fs::File::create(path)?)?,
                None => write_rows(&rows, std::io::stdout().lock())?,
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
