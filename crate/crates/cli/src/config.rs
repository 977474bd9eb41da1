//! Run configuration: TOML on disk, validated as a whole before anything is
//! allocated, hashed over its semantically meaningful part.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dust_einstein::background::CosmologyParams;
use dust_einstein::diagnostics::NormConfig;
use dust_einstein::evolution::{EvolutionConfig, Integrator, MonitorConfig, StepperConfig};
use dust_einstein::grid::Grid3;
use dust_einstein::initial_data::PerturbationSpec;
use dust_einstein::rhs::RhsOptions;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cosmology {
    pub lambda: f64,
    pub rho_bar: f64,
}

fn default_cfl() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub n: usize,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    pub t_final: f64,
    #[serde(default)]
    pub integrator: Integrator,
}

fn default_directory() -> String {
    "run".to_string()
}

fn default_sample_every() -> u64 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default = "default_directory")]
    pub directory: String,
    /// Diagnostics row every this many steps (plus the first and last).
    #[serde(default = "default_sample_every")]
    pub sample_every: u64,
    /// Checkpoint every this many steps; zero disables checkpoints.
    #[serde(default)]
    pub checkpoint_every: u64,
}

impl Default for Output {
    fn default() -> Self {
        Self { directory: default_directory(), sample_every: default_sample_every(), checkpoint_every: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub cosmology: Cosmology,
    pub numerics: Numerics,
    #[serde(default)]
    pub norms: NormConfig,
    #[serde(default = "PerturbationSpec::none")]
    pub perturbation: PerturbationSpec,
    #[serde(default)]
    pub monitor: MonitorConfig,
    #[serde(default)]
    pub rhs: RhsOptions,
    #[serde(default)]
    pub output: Output,
    /// Seed of every random draw in the run.
    #[serde(default)]
    pub seed: u64,
}

/// The fields the config hash covers: everything except `output`, which
/// only decides where and how often artifacts are written.
#[derive(Serialize)]
struct HashedPart<'a> {
    cosmology: &'a Cosmology,
    numerics: &'a Numerics,
    norms: &'a NormConfig,
    perturbation: &'a PerturbationSpec,
    monitor: &'a MonitorConfig,
    rhs: &'a RhsOptions,
    seed: u64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::ConfigInvalid(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every precondition and reports all violations at once.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut problems = Vec::new();
        if let Err(e) = CosmologyParams::new(self.cosmology.lambda, self.cosmology.rho_bar) {
            problems.push(format!("cosmology: {e}"));
        }
        let n = self.numerics.n;
        if n < 8 || !n.is_power_of_two() {
            problems.push(format!("numerics.n = {n} must be a power of two and at least 8"));
        }
        if !(self.numerics.t_final > 0.0) {
            problems.push(format!("numerics.t_final = {} must be positive", self.numerics.t_final));
        }
        if let Err(e) = self.evolution().stepper.validate() {
            problems.push(format!("numerics: {e}"));
        }
        if let Err(e) = self.monitor.validate() {
            problems.push(format!("monitor: {e}"));
        }
        if !(self.rhs.g00_upper_floor >= 0.0 && self.rhs.g00_upper_floor < 1.0) {
            problems.push(format!("rhs.g00_upper_floor = {} outside [0, 1)", self.rhs.g00_upper_floor));
        }
        if let Err(e) = self.norms.validate() {
            problems.push(format!("norms: {e}"));
        }
        if self.norms.sobolev_order > 3 {
            problems.push(format!("norms.sobolev_order = {} exceeds the supported 3", self.norms.sobolev_order));
        }
        let p = &self.perturbation;
        if !(p.amplitude >= 0.0 && p.amplitude.is_finite()) {
            problems.push(format!("perturbation.amplitude = {} must be non-negative", p.amplitude));
        }
        if p.seed != 0 && p.seed != self.seed {
            problems.push("perturbation.seed: set the seed at top level".to_string());
        }
        if let Ok(grid) = Grid3::new(n) {
            if let Err(e) = p.validate(&grid) {
                problems.push(format!("perturbation: {e}"));
            }
        }
        if self.output.sample_every == 0 {
            problems.push("output.sample_every must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::ConfigInvalid(problems))
        }
    }

    pub fn params(&self) -> CosmologyParams {
        CosmologyParams::new(self.cosmology.lambda, self.cosmology.rho_bar).expect("validated")
    }

    pub fn evolution(&self) -> EvolutionConfig {
        EvolutionConfig {
            stepper: StepperConfig {
                dt: self.numerics.dt,
                cfl_safety: self.numerics.cfl_safety,
                t_final: self.numerics.t_final,
                integrator: self.numerics.integrator,
            },
            monitor: self.monitor,
            rhs: self.rhs,
        }
    }

    /// Perturbation with the run seed applied.
    pub fn perturbation_spec(&self) -> PerturbationSpec {
        PerturbationSpec { seed: self.seed, ..self.perturbation.clone() }
    }

    /// First 64 bits of SHA-256 over the canonical JSON of the hashed part.
    pub fn hash(&self) -> u64 {
        let part = HashedPart {
            cosmology: &self.cosmology,
            numerics: &self.numerics,
            norms: &self.norms,
            perturbation: &self.perturbation_spec(),
            monitor: &self.monitor,
            rhs: &self.rhs,
            seed: self.seed,
        };
        let json = serde_json::to_string(&part).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}
