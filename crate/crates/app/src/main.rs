use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use pursuit_app::commands::{self, CliError, Outcome};
use pursuit_app::config::{AppConfig, Family};
use pursuit_app::service::{self, ServiceOptions};

#[derive(Parser)]
#[command(name = "pursuit", version, about = "Planar pursuit-evasion with two sensing delays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a headless simulation and write its CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replay cursor input from a recorded log (game mode only).
        #[arg(long)]
        cursor_log: Option<PathBuf>,
    },
    /// Sweep the delay plane and classify each cell.
    StabilityMap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// System to analyse; defaults to the one in the config.
        #[arg(long, value_enum)]
        family: Option<FamilyArg>,
    },
    /// Serve the game over WebSocket at /ws.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long)]
        record_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Fig9,
    Lqr,
    Scalar,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Fig9 => Family::Fig9,
            FamilyArg::Lqr => Family::Lqr,
            FamilyArg::Scalar => Family::Scalar,
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Simulate { config, out, cursor_log } => {
            let cfg = AppConfig::load(&config)?;
            let outcome = commands::simulate(&cfg, &out, cursor_log.as_deref())?;
            match &outcome {
                Outcome::Completed { rows } => println!("wrote {rows} rows to {}", out.display()),
                Outcome::Lost { rows, t, reason } => {
                    println!("wrote {rows} rows to {}", out.display());
                    println!("round lost at t = {t} s ({reason})");
                }
            }
            Ok(outcome.exit_code())
        }
        Command::StabilityMap { config, out, family } => {
            let cfg = AppConfig::load(&config)?;
            let family = match family {
                Some(f) => f.into(),
                None => cfg.family()?,
            };
            commands::stability_map_cmd(&cfg, &out, family, &mut std::io::stdout().lock())?;
            Ok(0)
        }
        Command::Serve { config, port, host, record_dir } => {
            let mut cfg = match config {
                Some(p) => AppConfig::load(&p)?,
                None => AppConfig::default(),
            };
            if let Some(p) = port {
                cfg.service.port = p;
            }
            if record_dir.is_some() {
                cfg.service.record_dir = record_dir;
            }
            let opts = Arc::new(ServiceOptions::from_config(&cfg)?);
            let addr = SocketAddr::new(host, cfg.service.port);
            let rt = tokio::runtime::Runtime::new().map_err(|source| CliError::Io {
                path: PathBuf::from("<runtime>"),
                source,
            })?;
            rt.block_on(async move {
                let (listener, local) = service::bind(addr).await?;
                tracing::info!("listening on ws://{local}/ws");
                let shutdown = async {
                    let _ = tokio::signal::ctrl_c().await;
                };
                service::serve(listener, opts, shutdown).await
            })
            .map_err(|source| CliError::Io {
                path: PathBuf::from(addr.to_string()),
                source,
            })?;
            Ok(0)
        }
    }
}
