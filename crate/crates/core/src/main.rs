use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use koopman_uq::commands;
use koopman_uq::config::{preset, ExperimentConfig, Registry, PRESET_NAMES};
use koopman_uq::error::Error;

/// Learn Koopman / Perron-Frobenius operators from simulated data and push
/// uncertainty sets through them.
#[derive(Parser)]
#[command(name = "koopman-uq", version, about)]
struct Cli {
    /// Experiment config: a JSON file path or a preset name
    /// (example1, example2a, example2b, example3).
    #[arg(long, global = true)]
    config: Option<String>,

    /// Override the RNG seeds: data gets SEED, the MC reference SEED + 1.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for output artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the operator pair from simulated snapshot data and save it.
    Fit,
    /// Propagate moments with the operator and compare against Monte Carlo.
    Propagate {
        /// Reuse a fitted operator file instead of refitting.
        #[arg(long)]
        operator: Option<PathBuf>,
    },
    /// Reconstruct per-axis marginals and support intervals over time.
    Reach {
        /// Reuse a fitted operator file instead of refitting.
        #[arg(long)]
        operator: Option<PathBuf>,
    },
    /// Run one example end to end against its quantitative targets.
    Benchmark {
        /// example1, example2, or example3
        example: String,
    },
    /// Simulate the training ensemble and dump it as CSV.
    Sample,
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let Some(name) = &cli.config else {
        return Err(Error::config(
            "config",
            format!(
                "pass --config with a JSON file or one of: {}",
                PRESET_NAMES.join(", ")
            ),
        ));
    };
    let mut config = if std::path::Path::new(name).is_file() {
        ExperimentConfig::from_file(name)
            .map_err(|e| Error::config("config", format!("{name}: {e}")))?
    } else if let Some(p) = preset(name) {
        p
    } else {
        return Err(Error::config(
            "config",
            format!(
                "{name} is neither a file nor a preset ({})",
                PRESET_NAMES.join(", ")
            ),
        ));
    };
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<u8, Error> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config("threads", e.to_string()))?;
    }
    let registry = Registry::with_builtins();
    match &cli.command {
        Command::Fit => {
            let config = resolve_config(cli)?;
            let path = commands::cmd_fit(&config, &registry, &cli.out)?;
            println!("operator written to {}", path.display());
        }
        Command::Propagate { operator } => {
            let config = resolve_config(cli)?;
            let report =
                commands::cmd_propagate(&config, &registry, operator.as_deref(), &cli.out)?;
            println!(
                "{}: max moment error {:.4e} over {} steps; \
                 MC {:.1} ms vs operator {:.1} ms ({:.1}x, propagation alone {:.1}x)",
                report.example,
                report.max_error,
                report.per_step_error.len().saturating_sub(1),
                report.mc_ms,
                report.op_ms,
                report.speedup,
                report.prop_speedup,
            );
        }
        Command::Reach { operator } => {
            let config = resolve_config(cli)?;
            let reach = commands::cmd_reach(&config, &registry, operator.as_deref(), &cli.out)?;
            for s in &reach.supports_op {
                println!(
                    "t = {:.2}, axis {}: support [{:.3}, {:.3}]",
                    s.t, s.axis, s.lo, s.hi
                );
            }
            println!(
                "operator supports contain the MC sample ranges: {}",
                reach.superset
            );
        }
        Command::Benchmark { example } => {
            let outcome = commands::cmd_benchmark(example, &registry, &cli.out)?;
            for line in &outcome.lines {
                println!("{line}");
            }
            if !outcome.pass {
                return Ok(4);
            }
            println!("{example}: all targets met");
        }
        Command::Sample => {
            let config = resolve_config(cli)?;
            let path = commands::cmd_sample(&config, &registry, &cli.out)?;
            println!("trajectories written to {}", path.display());
        }
    }
    Ok(0)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. } => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
