//! `slicecast` command line.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand};
use slicecast::config::{Overrides, RunConfig, OUTPUT_DIR_ENV};
use slicecast::formats::read_frame;
use slicecast::policy_doc::PolicyFormat;
use slicecast::replay::{serve, ClockMode, ReplayOptions};
use slicecast::stages::Run;
use slicecast::{sample, Error};

#[derive(Debug, Parser)]
#[command(
    name = "slicecast",
    version,
    about = "Slice-level traffic forecasting and policy generation"
)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides SLICECAST_OUTPUT_DIR and the config file.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Seed for every random draw; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Repeat for more log output.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse the network and demand snapshots, then clean and aggregate.
    Ingest {
        /// SNDlib native network file.
        #[arg(long)]
        topology: Option<PathBuf>,
        /// Directory of timestamped demand snapshots.
        #[arg(long)]
        demands: Option<PathBuf>,
    },
    /// Route demands and group them into slices.
    Slices,
    /// Fit every configured model and write checkpoints.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Forecast the test windows and the next horizon.
    Predict,
    /// Score checkpoints on the test windows.
    Evaluate {
        /// Accept artifacts produced under a different config.
        #[arg(long)]
        force: bool,
    },
    /// Turn the latest forecasts into scaling actions (exit 2 on validation failure).
    Policy {
        /// Low-utilisation history from a previous run.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Output rendering on stdout: json or table.
        #[arg(long, default_value = "table")]
        format: String,
    },
    /// Serve a frame as Prometheus gauges at /metrics.
    Replay {
        /// Frame CSV; defaults to the slice frame in the output directory.
        #[arg(long)]
        frame: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:9187")]
        bind: std::net::SocketAddr,
        /// Virtual seconds per wall-clock second.
        #[arg(long, default_value_t = 288.0)]
        speedup: f64,
        /// Stop once virtual time passes the last row.
        #[arg(long)]
        exit_at_end: bool,
    },
    /// Run ingest, slices, train, predict, evaluate and policy in order.
    Pipeline,
    /// Write the bundled sample network, demands and config to a directory.
    GenerateSample { dir: PathBuf },
}

enum Failure {
    Validation(anyhow::Error),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Other(e.into())
    }
}

fn load_config(cli: &Cli, extra: Overrides) -> anyhow::Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .context("--config is required for this subcommand")?;
    let mut cfg = RunConfig::load(path)?;
    let overrides = Overrides {
        output: cli.output_dir.clone(),
        seed: cli.seed,
        ..extra
    };
    cfg.apply(
        &overrides,
        std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from),
    );
    cfg.validate(false)?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let run_for = |extra: Overrides, force: bool| -> anyhow::Result<Run> {
        Ok(Run::new(load_config(cli, extra)?, force))
    };
    match &cli.command {
        Command::Ingest { topology, demands } => {
            let extra = Overrides {
                topology: topology.clone(),
                demands: demands.clone(),
                ..Overrides::default()
            };
            println!("{}", run_for(extra, false)?.ingest()?);
        }
        Command::Slices => println!("{}", run_for(Overrides::default(), false)?.slices()?),
        Command::Train { epochs } => {
            let extra = Overrides {
                epochs: *epochs,
                ..Overrides::default()
            };
            println!("{}", run_for(extra, false)?.train()?);
        }
        Command::Predict => println!("{}", run_for(Overrides::default(), false)?.predict()?),
        Command::Evaluate { force } => {
            println!("{}", run_for(Overrides::default(), *force)?.evaluate()?)
        }
        Command::Policy { history, format } => {
            let format: PolicyFormat = format
                .parse()
                .map_err(|e| Failure::Validation(anyhow::Error::new(e)))?;
            let run = run_for(Overrides::default(), false).map_err(Failure::Validation)?;
            match run.policy(history.as_deref(), format) {
                Ok((summary, text)) => {
                    print!("{text}");
                    eprintln!("{summary}");
                }
                Err(e @ (Error::Policy(_) | Error::Config(_))) => {
                    return Err(Failure::Validation(e.into()))
                }
                Err(e) => return Err(e.into()),
            }
        }
        Command::Replay {
            frame,
            bind,
            speedup,
            exit_at_end,
        } => replay(cli, frame.clone(), *bind, *speedup, *exit_at_end)?,
        Command::Pipeline => {
            for line in run_for(Overrides::default(), false)?.pipeline()? {
                println!("{line}");
            }
        }
        Command::GenerateSample { dir } => {
            let n = sample::write_sample(dir)?;
            println!(
                "generate-sample: wrote {n} snapshots, network.txt and config.json to {}",
                dir.display()
            );
        }
    }
    Ok(())
}

fn replay(
    cli: &Cli,
    frame: Option<PathBuf>,
    bind: std::net::SocketAddr,
    speedup: f64,
    exit_at_end: bool,
) -> anyhow::Result<()> {
    let path = match frame {
        Some(p) => p,
        None => {
            let run = Run::new(load_config(cli, Overrides::default())?, false);
            let p = run.layout.slice_frame();
            if !p.is_file() {
                return Err(Error::MissingArtifact {
                    path: p,
                    producer: "slices",
                }
                .into());
            }
            p
        }
    };
    let (frame, _) = read_frame(&path)?;
    let (rows, cols) = (frame.rows(), frame.cols());
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let opts = ReplayOptions {
            bind,
            mode: ClockMode::Wall { speedup },
            start: None,
            defer_ready: false,
        };
        let handle = serve(frame, opts).await?;
        println!(
            "replay: {rows} rows x {cols} slices on http://{}/metrics at speedup {speedup}",
            handle.local_addr()
        );
        let end = handle.last_timestamp();
        let mut tick = tokio::time::interval(Duration::from_millis(50));
        loop {
            tokio::select! {
                r = tokio::signal::ctrl_c() => { r?; break; }
                _ = tick.tick() => {
                    if exit_at_end && handle.virtual_time() > end {
                        break;
                    }
                }
            }
        }
        handle.shutdown().await?;
        anyhow::Ok(())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
