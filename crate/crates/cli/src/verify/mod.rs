//! Verification suites: each acceptance criterion as one or more measured
//! checks with a pinned tolerance.

mod background;
mod convergence;
mod decay;
mod identities;
mod oracle;
mod stability;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

/// One measured check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    /// Criterion number this check belongs to.
    pub criterion: u8,
    pub name: String,
    pub measured: f64,
    pub tolerance: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed_seconds: f64,
}

impl Check {
    fn new(criterion: u8, name: &str, measured: f64, tolerance: String, passed: bool, detail: String) -> Self {
        Self { criterion, name: name.to_string(), measured, tolerance, passed, detail, elapsed_seconds: 0.0 }
    }

    /// Passes when `measured ≤ bound`; NaN fails.
    fn at_most(criterion: u8, name: &str, measured: f64, bound: f64, detail: String) -> Self {
        Self::new(criterion, name, measured, format!("<= {bound:e}"), measured <= bound, detail)
    }

    /// Passes when `measured ≥ bound`; NaN fails.
    fn at_least(criterion: u8, name: &str, measured: f64, bound: f64, detail: String) -> Self {
        Self::new(criterion, name, measured, format!(">= {bound}"), measured >= bound, detail)
    }

    fn within(criterion: u8, name: &str, measured: f64, range: (f64, f64), detail: String) -> Self {
        let passed = measured >= range.0 && measured <= range.1;
        Self::new(criterion, name, measured, format!("in [{}, {}]", range.0, range.1), passed, detail)
    }

    /// A check that could not be measured because the run itself failed.
    fn failed(criterion: u8, name: &str, detail: String) -> Self {
        Self::new(criterion, name, f64::NAN, "run completes".into(), false, detail)
    }

    fn runtime(criterion: u8, seconds: f64, limit: f64) -> Self {
        Self::new(criterion, "runtime [s]", seconds, format!("< {limit}"), seconds < limit, String::new())
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: measured {:.6e} (tolerance {})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance
        )?;
        if !self.detail.is_empty() {
            write!(f, "; {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    /// Criteria 1 and 3.
    Background,
    /// Criteria 2 and 4.
    Identities,
    /// Criterion 5.
    Convergence,
    /// Criterion 6.
    Oracle,
    /// Criterion 7.
    Decay,
    /// Criterion 8.
    Stability,
    /// Criterion 9.
    Breakdown,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 8] =
        ["background", "identities", "convergence", "oracle", "decay", "stability", "breakdown", "all"];

    /// The criteria this suite measures, in order.
    pub fn criteria(self) -> Vec<u8> {
        match self {
            Suite::Background => vec![1, 3],
            Suite::Identities => vec![2, 4],
            Suite::Convergence => vec![5],
            Suite::Oracle => vec![6],
            Suite::Decay => vec![7],
            Suite::Stability => vec![8],
            Suite::Breakdown => vec![9],
            Suite::All => (1..=9).collect(),
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "background" => Suite::Background,
            "identities" => Suite::Identities,
            "convergence" => Suite::Convergence,
            "oracle" => Suite::Oracle,
            "decay" => Suite::Decay,
            "stability" => Suite::Stability,
            "breakdown" => Suite::Breakdown,
            "all" => Suite::All,
            _ => return Err(format!("unknown suite {s:?}; expected one of {}", Suite::NAMES.join(", "))),
        })
    }
}

pub const CRITERION_TITLES: [&str; 9] = [
    "background exactness",
    "algebraic identity suite",
    "FLRW fixed point",
    "gauge at t = 0",
    "convergence orders",
    "linear-oracle equivalence",
    "decay verification",
    "desk-scale stability",
    "breakdown detection",
];

/// Measures one criterion; each check carries its own timing, and the
/// criterion's runtime bound (if any) is appended as a final check.
pub fn run_criterion(criterion: u8) -> Vec<Check> {
    let started = Instant::now();
    let (mut checks, limit) = match criterion {
        1 => (background::closed_forms(), Some(1.0)),
        2 => (identities::algebraic_suite(), Some(120.0)),
        3 => (background::flrw_fixed_point(), Some(60.0)),
        4 => (identities::initial_gauge(), None),
        5 => (convergence::orders(), Some(600.0)),
        6 => (oracle::equivalence(), Some(300.0)),
        7 => (decay::decay_rates(), None),
        8 => (stability::desk_scale(), Some(900.0)),
        9 => (stability::breakdown(), None),
        _ => panic!("no criterion {criterion}"),
    };
    let elapsed = started.elapsed().as_secs_f64();
    for c in &mut checks {
        c.criterion = criterion;
        if c.elapsed_seconds == 0.0 {
            c.elapsed_seconds = elapsed;
        }
    }
    if let Some(limit) = limit {
        let mut r = Check::runtime(criterion, elapsed, limit);
        r.elapsed_seconds = elapsed;
        checks.push(r);
    }
    checks
}

pub fn run_suite(suite: Suite) -> Vec<Check> {
    suite.criteria().into_iter().flat_map(run_criterion).collect()
}

/// Machine-readable report of a suite run.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(checks: Vec<Check>) -> Self {
        Self { passed: checks.iter().all(|c| c.passed), checks }
    }
}
