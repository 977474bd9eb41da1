use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dust_einstein_cli::verify::{self, Report, Suite, CRITERION_TITLES};
use dust_einstein_cli::{plotdata, run, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "dust-einstein", version, about = "Dust-Einstein evolution with positive cosmological constant on T³")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a configuration and write diagnostics, checkpoints and a manifest.
    Run {
        config: PathBuf,
        /// Continue from a checkpoint written by an earlier run of the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run a verification suite and report every check.
    Verify {
        /// background, identities, convergence, oracle, decay, stability, breakdown or all.
        suite: Suite,
        /// Emit a JSON report instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Extract diagnostics columns as long-format (t, value, series) rows.
    Plotdata {
        dir: PathBuf,
        /// Column names, or the aliases all-energies and all-norms.
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        quantities: Vec<String>,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn cmd_run(config: PathBuf, resume: Option<PathBuf>) -> Result<u8, CliError> {
    let cfg = RunConfig::load(&config)?;
    cfg.validate()?;
    let dir = run::output_dir(&cfg);
    let outcome = run::execute(&cfg, &dir, resume.as_deref())?;
    let r = &outcome.report;
    eprintln!(
        "{}: {} steps to t = {:.6}, outcome {} (exit {})",
        outcome.dir.display(),
        outcome.steps,
        r.time,
        r.scenario,
        outcome.exit_code
    );
    if let Some(w) = &r.witness {
        eprintln!("witness: {} = {:e} at grid point {} {:?}", w.quantity, w.value, w.index, w.point);
    }
    Ok(outcome.exit_code)
}

fn cmd_verify(suite: Suite, json: bool) -> u8 {
    let report = Report::new(verify::run_suite(suite));
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        for c in &report.checks {
            println!("C{} {}: {c}", c.criterion, CRITERION_TITLES[c.criterion as usize - 1]);
        }
        println!("{}", if report.passed { "all checks passed" } else { "some checks FAILED" });
    }
    u8::from(!report.passed)
}

fn cmd_plotdata(dir: PathBuf, quantities: Vec<String>, out: Option<PathBuf>) -> Result<u8, CliError> {
    let text = plotdata::execute(&dir, &quantities)?;
    match out {
        Some(path) => std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?,
        None => {
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::io(&PathBuf::from("<stdout>"), e))?
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let status = match cli.command {
        Command::Run { config, resume } => cmd_run(config, resume),
        Command::Verify { suite, json } => Ok(cmd_verify(suite, json)),
        Command::Plotdata { dir, quantities, out } => cmd_plotdata(dir, quantities, out),
    };
    match status {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
