use clap::{Parser, Subcommand};
use embedtrack_sim::certify::Which;
use embedtrack_sim::commands::{self, CommandError, Status};
use embedtrack_sim::config::Scenario;
use embedtrack_sim::record::format_kv;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Embedding-based attitude tracking: simulation and certificates.
#[derive(Debug, Parser)]
#[command(name = "embedtrack", version, args_conflicts_with_subcommands = true)]
struct Cli {
    /// Simulate every scenario file in DIR concurrently.
    #[arg(long, value_name = "DIR")]
    batch: Option<PathBuf>,
    /// Output directory for --batch.
    #[arg(long, value_name = "DIR", default_value = "out", requires = "batch")]
    out: PathBuf,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write trace.csv and summary.txt.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the built-in published experiment and plot errors.svg.
    ReproducePaper {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a numerical certificate: uco, ucc, decay, gradient or tangency.
    Certify {
        config: PathBuf,
        which: Which,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write the observer gain schedule to gains.csv.
    Gains {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load(path: &Path) -> Result<Scenario, CommandError> {
    Ok(Scenario::load(path)?)
}

fn print_summary(kv: &[(String, String)]) {
    print!("{}", format_kv(kv));
}

fn run(cli: Cli) -> Result<Status, CommandError> {
    if let Some(dir) = cli.batch {
        let mut worst = Status::Ok;
        for (path, result) in commands::batch(&dir, &cli.out)? {
            let status = match result {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{}: {e}", path.display());
                    e.status()
                }
            };
            println!("{}: exit {}", path.display(), status.code());
            worst = worst.max(status);
        }
        return Ok(worst);
    }
    let Some(command) = cli.command else {
        return Err(CommandError::Numerical(
            "no command given (see --help)".into(),
        ));
    };
    match command {
        Command::Simulate { config, out } => {
            let o = commands::simulate(&load(&config)?, &out)?;
            print_summary(&o.summary);
            Ok(o.status)
        }
        Command::ReproducePaper { out } => {
            let a = Scenario::paper().assemble()?;
            let first = (a.initial.r - a.closed_loop.reference.r0(a.options.t0)).norm();
            println!("initial tracking attitude error ||R(0) - R0(0)|| = {first:.4}");
            std::io::stdout().flush().ok();
            let o = commands::reproduce_paper(&out)?;
            print_summary(&o.summary);
            Ok(o.status)
        }
        Command::Certify { config, which, out } => {
            let report = commands::certify(&load(&config)?, which, &out)?;
            print_summary(&report.entries);
            Ok(if report.passed { Status::Ok } else { Status::CertificateFailed })
        }
        Command::Gains { config, out } => {
            let path = commands::gains(&load(&config)?, &out)?;
            println!("wrote {}", path.display());
            Ok(Status::Ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Status::ConfigError.code() as u8 } else { 0 });
        }
    };
    let status = match run(cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CommandError::Numerical(ref m) if m.starts_with("no command") => Status::ConfigError,
                _ => e.status(),
            }
        }
    };
    ExitCode::from(status.code() as u8)
}
