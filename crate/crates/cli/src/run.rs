//! The `run` command: builds initial data, evolves, and streams the
//! diagnostics CSV, checkpoints, final state and manifest.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use dust_einstein::checkpoint::{self, Checkpoint};
use dust_einstein::diagnostics::{DiagnosticsRecord, CSV_COLUMNS};
use dust_einstein::evolution::{monitor, sample, BreakdownReport, EvolutionError, Evolver, Scenario, Witness};
use dust_einstein::grid::Grid3;
use dust_einstein::initial_data::{construct_modified_data, perturbed_flrw};
use dust_einstein::state::FieldState;

use crate::config::RunConfig;
use crate::error::CliError;

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const FINAL_STATE_FILE: &str = "final_state.ckpt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const OUTPUT_ROOT_ENV: &str = "DUST_EINSTEIN_OUTPUT_ROOT";

/// Output directory of a run: `output.directory`, relative to the override
/// root when the environment variable is set.
pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(&cfg.output.directory),
        None => PathBuf::from(&cfg.output.directory),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub csv_schema_version: u32,
    pub config_hash: String,
    pub config: RunConfig,
    pub versions: Versions,
    pub resumed_from_step: Option<u64>,
    pub wall_time_seconds: f64,
    pub steps: u64,
    pub final_time: f64,
    pub outcome: Scenario,
    pub exit_code: u8,
    pub non_finite: bool,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub cli: &'static str,
    pub library: &'static str,
    pub checkpoint_format: u32,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: BreakdownReport,
    pub steps: u64,
    pub exit_code: u8,
}

fn hash_hex(hash: u64) -> String {
    format!("{hash:016x}")
}

fn csv_header(hash: u64) -> String {
    format!(
        "# dust-einstein diagnostics schema {CSV_SCHEMA_VERSION}; config_hash {}; columns: {}\n{}\n",
        hash_hex(hash),
        CSV_COLUMNS.join(" "),
        CSV_COLUMNS.join(",")
    )
}

fn csv_row(r: &DiagnosticsRecord) -> String {
    let mut line = r.values().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

/// Keeps the header and every row whose step is at most `step`.
fn truncate_csv(path: &Path, step: u64) -> Result<String, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let step_col = CSV_COLUMNS.iter().position(|c| *c == "step").expect("step column");
    let mut kept = String::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let row_step = line.split(',').nth(step_col).and_then(|s| s.parse::<f64>().ok());
        match row_step {
            Some(s) if line.starts_with(|c: char| c.is_ascii_digit() || c == '-') => {
                if s <= step as f64 {
                    kept.push_str(&line);
                    kept.push('\n');
                }
            }
            _ => {
                kept.push_str(&line);
                kept.push('\n');
            }
        }
    }
    Ok(kept)
}

struct CsvSink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvSink {
    fn create(path: PathBuf, prefix: &str) -> Result<Self, CliError> {
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut sink = Self { out: BufWriter::new(file), path };
        sink.write(prefix)?;
        Ok(sink)
    }

    fn write(&mut self, text: &str) -> Result<(), CliError> {
        self.out.write_all(text.as_bytes()).and_then(|_| self.out.flush()).map_err(|e| CliError::io(&self.path, e))
    }
}

fn evolution_error(e: EvolutionError) -> CliError {
    CliError::ConfigInvalid(vec![e.to_string()])
}

/// Runs the configuration, optionally resuming from a checkpoint, and
/// writes every artifact into `dir`.
pub fn execute(cfg: &RunConfig, dir: &Path, resume: Option<&Path>) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let started = Instant::now();
    let hash = cfg.hash();
    let grid = Grid3::new(cfg.numerics.n).expect("validated");
    let params = cfg.params();
    let evo = cfg.evolution();

    let (initial, first_step) = match resume {
        Some(path) => {
            let ck = checkpoint::load(path, Some(hash))
                .map_err(|e| CliError::Checkpoint { path: path.to_path_buf(), message: e.to_string() })?;
            if ck.state.n() != grid.n() {
                return Err(CliError::Checkpoint {
                    path: path.to_path_buf(),
                    message: format!("grid size {} differs from the config's {}", ck.state.n(), grid.n()),
                });
            }
            (ck.state, Some(ck.step))
        }
        None => {
            let geo = perturbed_flrw(&grid, &params, &cfg.perturbation_spec())
                .map_err(|e| CliError::ConfigInvalid(vec![format!("perturbation: {e}")]))?;
            let st = construct_modified_data(&grid, &geo, &params)
                .map_err(|e| CliError::ConfigInvalid(vec![format!("initial data: {e}")]))?;
            (st, None)
        }
    };

    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let csv_path = dir.join(DIAGNOSTICS_FILE);
    let mut csv = match first_step {
        Some(step) => {
            let kept = truncate_csv(&csv_path, step)?;
            CsvSink::create(csv_path, &kept)?
        }
        None => CsvSink::create(csv_path, &csv_header(hash))?,
    };

    let every = cfg.output.sample_every;
    let take = |st: &FieldState, step: u64, flag: u8| -> Option<String> {
        sample(&grid, st, &params, &cfg.norms, &evo.rhs, step).map(|mut r| {
            r.breakdown = flag;
            csv_row(&r)
        })
    };

    let start_step = first_step.unwrap_or(0);
    let initial_report = monitor(&grid, &initial, &params, &evo.monitor);
    let mut evolver = Evolver::new(&grid, &params, &evo, initial, start_step).map_err(evolution_error)?;
    let mut report = BreakdownReport::clear(evolver.state().t);
    if initial_report.is_breakdown() {
        if first_step.is_none() {
            if let Some(row) = take(evolver.state(), 0, initial_report.scenario.exit_code()) {
                csv.write(&row)?;
            }
        }
        report = initial_report;
    } else {
        if first_step.is_none() {
            if let Some(row) = take(evolver.state(), 0, 0) {
                csv.write(&row)?;
            }
        }
        log::info!("run {} from t = {} to t = {}", hash_hex(hash), evolver.state().t, cfg.numerics.t_final);
        while !evolver.finished() {
            match evolver.advance() {
                Ok(()) => {
                    let steps = evolver.steps();
                    if steps % every == 0 || evolver.finished() {
                        if let Some(row) = take(evolver.state(), steps, 0) {
                            csv.write(&row)?;
                        }
                        log::debug!("step {steps}, t = {:.6}", evolver.state().t);
                    }
                    let ck_every = cfg.output.checkpoint_every;
                    if ck_every > 0 && steps % ck_every == 0 {
                        let ck = Checkpoint { config_hash: hash, step: steps, state: evolver.state().clone() };
                        let path = dir.join(CHECKPOINT_FILE);
                        checkpoint::save(&path, &ck).map_err(|e| CliError::io(&path, e))?;
                    }
                }
                Err(r) => {
                    if !r.non_finite && evolver.state().t == r.time {
                        if let Some(row) = take(evolver.state(), evolver.steps(), r.scenario.exit_code()) {
                            csv.write(&row)?;
                        }
                    }
                    log::warn!("breakdown {} at t = {}: {:?}", r.scenario, r.time, r.witness);
                    report = r;
                    break;
                }
            }
        }
        if !report.is_breakdown() {
            report.time = evolver.state().t;
        }
    }

    let steps = evolver.steps();
    let final_state = evolver.into_state();
    let final_path = dir.join(FINAL_STATE_FILE);
    checkpoint::save(&final_path, &Checkpoint { config_hash: hash, step: steps, state: final_state.clone() })
        .map_err(|e| CliError::io(&final_path, e))?;

    let exit_code = report.scenario.exit_code();
    let manifest = Manifest {
        csv_schema_version: CSV_SCHEMA_VERSION,
        config_hash: hash_hex(hash),
        config: cfg.clone(),
        versions: Versions {
            cli: env!("CARGO_PKG_VERSION"),
            library: dust_einstein::VERSION,
            checkpoint_format: checkpoint::VERSION,
        },
        resumed_from_step: first_step,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        steps,
        final_time: final_state.t,
        outcome: report.scenario,
        exit_code,
        non_finite: report.non_finite,
        witness: report.witness.clone(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(|e| CliError::io(&manifest_path, e))?;

    Ok(RunOutcome { dir: dir.to_path_buf(), report, steps, exit_code })
}
