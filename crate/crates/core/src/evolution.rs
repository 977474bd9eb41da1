//! Explicit Runge–Kutta time stepping under a CFL bound recomputed from the
//! current inverse metric, with a runtime monitor for the three breakdown
//! scenarios.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::background::{closed_form, CosmologyParams};
use crate::diagnostics::{self, DiagnosticsRecord, NormConfig};
use crate::grid::Grid3;
use crate::lorentz::{invert_metric, AlgebraError, MetricPoint};
use crate::rhs::{assemble_rates, RhsError, RhsOptions};
use crate::snapshot::Snapshot;
use crate::state::{self, flrw_value, FieldRates, FieldState, FIELD_NAMES, NUM_FIELDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Integrator {
    #[default]
    #[serde(rename = "RK4")]
    Rk4,
    #[serde(rename = "RK2")]
    Rk2,
}

fn default_cfl() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    /// Requested step; `None` steps at the smaller of the CFL bound and
    /// cfl_safety/H.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    pub t_final: f64,
    #[serde(default)]
    pub integrator: Integrator,
}

impl StepperConfig {
    pub fn new(dt: Option<f64>, t_final: f64) -> Self {
        Self { dt, cfl_safety: default_cfl(), t_final, integrator: Integrator::Rk4 }
    }
}

fn default_g00_floor() -> f64 {
    0.1
}

fn default_eig_floor() -> f64 {
    1e-3
}

fn default_ceiling() -> f64 {
    1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    /// G00ToZero when max g₀₀ > −g00_floor.
    #[serde(default = "default_g00_floor")]
    pub g00_floor: f64,
    /// SpatialMetricDegenerate when the smallest eigenvalue of g_{jk} drops
    /// below eig_floor·e^{2Ω}.
    #[serde(default = "default_eig_floor")]
    pub eig_floor: f64,
    /// CNormBlowup when a field perturbation or one of its first two spatial
    /// derivatives exceeds this in max norm.
    #[serde(default = "default_ceiling")]
    pub blowup_ceiling: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self { g00_floor: default_g00_floor(), eig_floor: default_eig_floor(), blowup_ceiling: default_ceiling() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub stepper: StepperConfig,
    #[serde(default)]
    pub monitor: MonitorConfig,
    #[serde(default)]
    pub rhs: RhsOptions,
}

impl EvolutionConfig {
    pub fn new(stepper: StepperConfig) -> Self {
        Self { stepper, monitor: MonitorConfig::default(), rhs: RhsOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    None,
    G00ToZero,
    SpatialMetricDegenerate,
    CNormBlowup,
}

impl Scenario {
    /// Process exit status of a run ending in this scenario.
    pub fn exit_code(self) -> u8 {
        match self {
            Scenario::None => 0,
            Scenario::G00ToZero => 10,
            Scenario::SpatialMetricDegenerate => 11,
            Scenario::CNormBlowup => 12,
        }
    }

    fn from_algebra(kind: &AlgebraError) -> Self {
        match kind {
            AlgebraError::NonNegativeG00 { .. } => Scenario::G00ToZero,
            AlgebraError::SpatialNotPositiveDefinite { .. } => Scenario::SpatialMetricDegenerate,
            AlgebraError::SpacelikeVelocity { .. } => Scenario::CNormBlowup,
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub index: usize,
    pub point: [f64; 3],
    pub quantity: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownReport {
    pub scenario: Scenario,
    pub time: f64,
    pub witness: Option<Witness>,
    /// Set when a step produced a non-finite value the monitor had not
    /// anticipated; such a state is never accepted.
    pub non_finite: bool,
}

impl BreakdownReport {
    pub fn clear(time: f64) -> Self {
        Self { scenario: Scenario::None, time, witness: None, non_finite: false }
    }

    pub fn is_breakdown(&self) -> bool {
        self.scenario != Scenario::None
    }

    fn from_rhs(err: &RhsError, grid: &Grid3, time: f64) -> Self {
        let scenario = match err {
            RhsError::Algebra { kind, .. } => Scenario::from_algebra(kind),
            RhsError::DegenerateG00Upper { .. } => Scenario::G00ToZero,
            RhsError::GridMismatch { .. } => Scenario::CNormBlowup,
        };
        let value = match err {
            RhsError::Algebra { kind: AlgebraError::NonNegativeG00 { g00 }, .. } => *g00,
            RhsError::Algebra { kind: AlgebraError::SpatialNotPositiveDefinite { minor }, .. } => *minor,
            RhsError::Algebra { kind: AlgebraError::SpacelikeVelocity { discriminant }, .. } => *discriminant,
            RhsError::DegenerateG00Upper { value, .. } => *value,
            RhsError::GridMismatch { .. } => f64::NAN,
        };
        let witness = err.index().map(|index| Witness {
            index,
            point: grid.point(index),
            quantity: format!("rhs: {err}"),
            value,
        });
        Self { scenario, time, witness, non_finite: false }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("dt = {dt} exceeds the CFL bound {bound:.6e} of the initial state")]
    DtAboveCfl { dt: f64, bound: f64 },
    #[error("invalid stepper setting: {0}")]
    InvalidConfig(String),
    #[error("initial state cannot be stepped: {0}")]
    Rhs(#[from] RhsError),
}

impl StepperConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        if !self.t_final.is_finite() {
            return Err(EvolutionError::InvalidConfig(format!("t_final = {} must be finite", self.t_final)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(EvolutionError::InvalidConfig(format!("cfl_safety = {} outside (0, 1]", self.cfl_safety)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(EvolutionError::InvalidConfig(format!("dt = {dt} must be positive")));
            }
        }
        Ok(())
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let ok = self.g00_floor > 0.0 && self.g00_floor < 1.0 && self.eig_floor > 0.0 && self.blowup_ceiling > 0.0;
        if ok {
            Ok(())
        } else {
            Err(EvolutionError::InvalidConfig(format!("monitor thresholds {self:?} out of range")))
        }
    }
}

fn metric_at(st: &FieldState, idx: usize, e2o: f64) -> MetricPoint {
    let v = st.at(idx);
    let mut m = MetricPoint { g00: v[state::G00], g0: [v[1], v[2], v[3]], gsp: [[0.0; 3]; 3] };
    for j in 0..3 {
        for k in 0..3 {
            m.gsp[j][k] = e2o * v[state::h(j, k)];
        }
    }
    m
}

/// cfl_safety · dx · min over the grid of √(−g⁰⁰ / λ_max(gᵃᵇ)).
pub fn cfl_bound(grid: &Grid3, st: &FieldState, params: &CosmologyParams, cfl_safety: f64) -> Result<f64, RhsError> {
    let e2o = closed_form(params, st.t).exp_omega(2.0);
    let mut min_speed_ratio = f64::INFINITY;
    for idx in 0..st.points() {
        let inv = invert_metric(&metric_at(st, idx, e2o)).map_err(|kind| RhsError::Algebra { kind, index: idx })?;
        let gsp = nalgebra::Matrix3::from_fn(|a, b| inv.gusp[a][b]);
        let lmax = gsp.symmetric_eigenvalues().max();
        min_speed_ratio = min_speed_ratio.min((-inv.gu00 / lmax).sqrt());
    }
    Ok(cfl_safety * grid.dx() * min_speed_ratio)
}

fn combine(out: &mut FieldState, base: &FieldState, terms: &[(f64, &FieldRates)], t: f64) {
    let data = out.data_mut();
    data.copy_from_slice(base.data());
    for (w, r) in terms {
        for (d, v) in data.iter_mut().zip(r.data()) {
            *d += w * v;
        }
    }
    out.t = t;
}

/// One explicit Runge–Kutta step; the background enters every stage through
/// the stage time.
pub fn step(
    grid: &Grid3,
    st: &FieldState,
    params: &CosmologyParams,
    opts: &RhsOptions,
    integrator: Integrator,
    dt: f64,
) -> Result<FieldState, RhsError> {
    let rates = |s: &FieldState| assemble_rates(grid, s, params, opts);
    let mut stage = st.clone();
    let k1 = rates(st)?;
    match integrator {
        Integrator::Rk2 => {
            stage.assign_step(st, &k1, 0.5 * dt);
            let k2 = rates(&stage)?;
            let mut out = st.clone();
            combine(&mut out, st, &[(dt, &k2)], st.t + dt);
            Ok(out)
        }
        Integrator::Rk4 => {
            stage.assign_step(st, &k1, 0.5 * dt);
            let k2 = rates(&stage)?;
            stage.assign_step(st, &k2, 0.5 * dt);
            let k3 = rates(&stage)?;
            stage.assign_step(st, &k3, dt);
            let k4 = rates(&stage)?;
            let mut out = stage;
            let w = dt / 6.0;
            combine(&mut out, st, &[(w, &k1), (2.0 * w, &k2), (2.0 * w, &k3), (w, &k4)], st.t + dt);
            Ok(out)
        }
    }
}

/// Largest field perturbation and first/second spatial derivative, with
/// its location and name.
pub fn c_norm_proxy(grid: &Grid3, st: &FieldState, params: &CosmologyParams) -> (f64, Witness) {
    const OPS: [&[usize]; 9] = [&[0], &[1], &[2], &[0, 0], &[0, 1], &[0, 2], &[1, 1], &[1, 2], &[2, 2]];
    const OP_NAMES: [&str; 9] = ["d1", "d2", "d3", "d11", "d12", "d13", "d22", "d23", "d33"];
    let mut best = (f64::NEG_INFINITY, 0usize, String::new());
    let mut consider = |values: &[f64], name: &dyn Fn() -> String, shift: f64| {
        for (idx, v) in values.iter().enumerate() {
            let a = (v - shift).abs();
            if a > best.0 || a.is_nan() {
                best = (if a.is_nan() { f64::INFINITY } else { a }, idx, name());
            }
        }
    };
    for f in 0..NUM_FIELDS {
        let field = st.field(f);
        consider(field, &|| FIELD_NAMES[f].to_string(), flrw_value(f, params));
        let spec = grid.forward(field);
        for (op, d) in grid.derivative_fields(&spec, &OPS).iter().enumerate() {
            consider(d, &|| format!("{}_{}", OP_NAMES[op], FIELD_NAMES[f]), 0.0);
        }
    }
    let (value, index, quantity) = best;
    (value, Witness { index, point: grid.point(index), quantity, value })
}

/// Checks the three breakdown thresholds on a state.
pub fn monitor(grid: &Grid3, st: &FieldState, params: &CosmologyParams, cfg: &MonitorConfig) -> BreakdownReport {
    let witness = |index: usize, quantity: &str, value: f64| Witness {
        index,
        point: grid.point(index),
        quantity: quantity.to_string(),
        value,
    };
    let report = |scenario, w| BreakdownReport { scenario, time: st.t, witness: Some(w), non_finite: false };

    let g00 = st.field(state::G00);
    let (imax, &gmax) = g00.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("state has at least one point");
    if gmax > -cfg.g00_floor || gmax.is_nan() {
        return report(Scenario::G00ToZero, witness(imax, "g00", gmax));
    }

    // eigenvalues of g_{jk} are e^{2Ω} times those of h_{jk}
    let mut worst = (f64::INFINITY, 0usize);
    for idx in 0..st.points() {
        let v = st.at(idx);
        let h = nalgebra::Matrix3::from_fn(|j, k| v[state::h(j, k)]);
        let e = h.symmetric_eigenvalues().min();
        if e < worst.0 || e.is_nan() {
            worst = (e, idx);
        }
    }
    if worst.0 < cfg.eig_floor || worst.0.is_nan() {
        return report(Scenario::SpatialMetricDegenerate, witness(worst.1, "min_eig_h", worst.0));
    }

    let (value, w) = c_norm_proxy(grid, st, params);
    if value > cfg.blowup_ceiling {
        return report(Scenario::CNormBlowup, w);
    }
    BreakdownReport::clear(st.t)
}

/// Run-loop state: the current slice plus the step counter.
pub struct Evolver<'a> {
    grid: &'a Grid3,
    params: CosmologyParams,
    cfg: EvolutionConfig,
    state: FieldState,
    steps: u64,
}

impl<'a> Evolver<'a> {
    /// Validates the configuration against the initial state; a requested
    /// dt above the CFL bound is rejected here rather than clamped.
    pub fn new(
        grid: &'a Grid3,
        params: &CosmologyParams,
        cfg: &EvolutionConfig,
        state: FieldState,
        steps: u64,
    ) -> Result<Self, EvolutionError> {
        cfg.stepper.validate()?;
        cfg.monitor.validate()?;
        if state.n() != grid.n() {
            return Err(RhsError::GridMismatch { expected: grid.n(), found: state.n() }.into());
        }
        if !(cfg.stepper.t_final > state.t) {
            return Err(EvolutionError::InvalidConfig(format!(
                "t_final = {} must exceed the initial time {}",
                cfg.stepper.t_final, state.t
            )));
        }
        let bound = cfl_bound(grid, &state, params, cfg.stepper.cfl_safety)?;
        if let Some(dt) = cfg.stepper.dt {
            if dt > bound {
                return Err(EvolutionError::DtAboveCfl { dt, bound });
            }
        }
        Ok(Self { grid, params: *params, cfg: *cfg, state, steps })
    }

    pub fn state(&self) -> &FieldState {
        &self.state
    }

    pub fn into_state(self) -> FieldState {
        self.state
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn finished(&self) -> bool {
        self.cfg.stepper.t_final - self.state.t <= 1e-12 * self.cfg.stepper.t_final.max(1.0)
    }

    fn next_dt(&self) -> Result<f64, RhsError> {
        let safety = self.cfg.stepper.cfl_safety;
        let bound = cfl_bound(self.grid, &self.state, &self.params, safety)?;
        // unrequested steps also resolve the Hubble damping rate
        let dt = self.cfg.stepper.dt.map_or_else(|| bound.min(safety / self.params.hubble()), |dt| dt.min(bound));
        let remaining = self.cfg.stepper.t_final - self.state.t;
        // absorb a round-off sliver into the last step
        Ok(if remaining - dt <= 1e-9 * dt { remaining } else { dt })
    }

    /// Takes one step. A step whose stages fail, or whose result crosses a
    /// monitor threshold, ends the run with the report; in the threshold
    /// case the crossing state is kept, a non-finite result never is.
    pub fn advance(&mut self) -> Result<(), BreakdownReport> {
        let t = self.state.t;
        let attempt = self
            .next_dt()
            .and_then(|dt| step(self.grid, &self.state, &self.params, &self.cfg.rhs, self.cfg.stepper.integrator, dt));
        let next = attempt.map_err(|e| BreakdownReport::from_rhs(&e, self.grid, t))?;
        if !next.is_finite() {
            let (_, witness) = c_norm_proxy(self.grid, &next, &self.params);
            return Err(BreakdownReport {
                scenario: Scenario::CNormBlowup,
                time: next.t,
                witness: Some(witness),
                non_finite: true,
            });
        }
        self.state = next;
        self.steps += 1;
        let report = monitor(self.grid, &self.state, &self.params, &self.cfg.monitor);
        if report.is_breakdown() {
            Err(report)
        } else {
            Ok(())
        }
    }
}

/// Diagnostics record of a state; a state the kernel rejects yields `None`.
pub fn sample(
    grid: &Grid3,
    st: &FieldState,
    params: &CosmologyParams,
    norms: &NormConfig,
    opts: &RhsOptions,
    step: u64,
) -> Option<DiagnosticsRecord> {
    let snap = Snapshot::new(grid, st, params, opts).ok()?;
    diagnostics::record(&snap, norms, step).ok()
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub final_state: FieldState,
    pub records: Vec<DiagnosticsRecord>,
    pub report: BreakdownReport,
    pub steps: u64,
}

/// What to record during [`run`].
#[derive(Debug, Clone, Copy)]
pub struct Sampling<'n> {
    pub norms: &'n NormConfig,
    /// Record every this many steps (plus the first and last state); zero
    /// disables diagnostics.
    pub every: u64,
}

/// Evolves to t_final or the first breakdown.
pub fn run(
    grid: &Grid3,
    params: &CosmologyParams,
    initial: FieldState,
    cfg: &EvolutionConfig,
    sampling: Sampling<'_>,
) -> Result<RunOutput, EvolutionError> {
    let initial_report = monitor(grid, &initial, params, &cfg.monitor);
    let mut evolver = Evolver::new(grid, params, cfg, initial, 0)?;
    let mut records = Vec::new();
    let take = |ev: &Evolver<'_>, records: &mut Vec<DiagnosticsRecord>, flag: u8| {
        if sampling.every > 0 {
            if let Some(mut r) = sample(grid, ev.state(), params, sampling.norms, &cfg.rhs, ev.steps()) {
                r.breakdown = flag;
                records.push(r);
            }
        }
    };
    if initial_report.is_breakdown() {
        take(&evolver, &mut records, initial_report.scenario.exit_code());
        let steps = evolver.steps();
        return Ok(RunOutput { final_state: evolver.into_state(), records, report: initial_report, steps });
    }
    take(&evolver, &mut records, 0);
    let mut report = BreakdownReport::clear(evolver.state().t);
    while !evolver.finished() {
        match evolver.advance() {
            Ok(()) => {
                if sampling.every > 0 && (evolver.steps() % sampling.every == 0 || evolver.finished()) {
                    take(&evolver, &mut records, 0);
                }
            }
            Err(r) => {
                if !r.non_finite && evolver.state().t == r.time {
                    take(&evolver, &mut records, r.scenario.exit_code());
                }
                report = r;
                break;
            }
        }
    }
    if !report.is_breakdown() {
        report.time = evolver.state().t;
    }
    let steps = evolver.steps();
    Ok(RunOutput { final_state: evolver.into_state(), records, report, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial_data::random_state;

    fn params(rho_bar: f64) -> CosmologyParams {
        CosmologyParams::new(3.0, rho_bar).unwrap()
    }

    fn cfg(dt: Option<f64>, t_final: f64, integrator: Integrator) -> EvolutionConfig {
        EvolutionConfig::new(StepperConfig { dt, cfl_safety: 0.5, t_final, integrator })
    }

    #[test]
    fn flrw_stays_fixed() {
        let grid = Grid3::new(8).unwrap();
        for rho_bar in [0.0, 3.0] {
            let p = params(rho_bar);
            let st = FieldState::flrw(8, &p, 0.0);
            let out = run(
                &grid,
                &p,
                st,
                &cfg(Some(0.02), 1.0, Integrator::Rk4),
                Sampling { norms: &NormConfig::default(), every: 0 },
            )
            .unwrap();
            assert!(!out.report.is_breakdown());
            assert!((out.final_state.t - 1.0).abs() < 1e-12);
            let worst = out.final_state.perturbation_max(&p).iter().cloned().fold(0.0, f64::max);
            assert!(worst < 1e-10, "{worst}");
        }
    }

    #[test]
    fn flrw_cfl_bound_matches_background_speed() {
        let grid = Grid3::new(16).unwrap();
        let p = params(0.0);
        let st = FieldState::flrw(16, &p, 0.5);
        let bound = cfl_bound(&grid, &st, &p, 0.5).unwrap();
        // √(−g⁰⁰/λ_max(gᵃᵇ)) = a
        let a = closed_form(&p, 0.5).a;
        assert!((bound - 0.5 * grid.dx() * a).abs() < 1e-13);
    }

    #[test]
    fn dt_above_cfl_is_rejected() {
        let grid = Grid3::new(16).unwrap();
        let p = params(1.0);
        let st = FieldState::flrw(16, &p, 0.0);
        let err = Evolver::new(&grid, &p, &cfg(Some(1.0), 1.0, Integrator::Rk4), st, 0).err().unwrap();
        assert!(matches!(err, EvolutionError::DtAboveCfl { .. }));
    }

    #[test]
    fn monitor_flags_each_scenario() {
        let grid = Grid3::new(8).unwrap();
        let p = params(1.0);
        let mc = MonitorConfig::default();
        let base = FieldState::flrw(8, &p, 0.0);
        assert_eq!(monitor(&grid, &base, &p, &mc).scenario, Scenario::None);

        let mut st = base.clone();
        st.field_mut(state::G00).fill(-0.05);
        let r = monitor(&grid, &st, &p, &mc);
        assert_eq!(r.scenario, Scenario::G00ToZero);
        assert_eq!(r.witness.unwrap().value, -0.05);

        let mut st = base.clone();
        st.field_mut(state::h(1, 1))[5] = 5e-4;
        let r = monitor(&grid, &st, &p, &mc);
        assert_eq!(r.scenario, Scenario::SpatialMetricDegenerate);
        assert_eq!(r.witness.unwrap().index, 5);

        let mut st = base;
        st.field_mut(state::u(0)).iter_mut().enumerate().for_each(|(i, v)| *v = 2e6 * (i as f64 * 0.37).sin());
        let r = monitor(&grid, &st, &p, &mc);
        assert_eq!(r.scenario, Scenario::CNormBlowup);
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes: Vec<u8> =
            [Scenario::None, Scenario::G00ToZero, Scenario::SpatialMetricDegenerate, Scenario::CNormBlowup]
                .iter()
                .map(|s| s.exit_code())
                .collect();
        assert_eq!(codes, vec![0, 10, 11, 12]);
    }

    fn perturbed(n: usize, seed: u64) -> (Grid3, CosmologyParams, FieldState) {
        let grid = Grid3::new(n).unwrap();
        let p = params(1.0);
        let st = random_state(&grid, &p, 0.0, 1e-3, seed, 1);
        (grid, p, st)
    }

    fn final_state(grid: &Grid3, p: &CosmologyParams, st: &FieldState, dt: f64, t: f64, i: Integrator) -> FieldState {
        run(grid, p, st.clone(), &cfg(Some(dt), t, i), Sampling { norms: &NormConfig::default(), every: 0 })
            .unwrap()
            .final_state
    }

    fn distance(a: &FieldState, b: &FieldState) -> f64 {
        a.data().iter().zip(b.data()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn rk4_self_convergence_is_fourth_order() {
        let (grid, p, st) = perturbed(8, 2);
        let t = 0.32;
        let f1 = final_state(&grid, &p, &st, 0.04, t, Integrator::Rk4);
        let f2 = final_state(&grid, &p, &st, 0.02, t, Integrator::Rk4);
        let f4 = final_state(&grid, &p, &st, 0.01, t, Integrator::Rk4);
        let factor = distance(&f1, &f2) / distance(&f2, &f4);
        assert!((12.0..=20.0).contains(&factor), "{factor}");
    }

    #[test]
    fn rk2_and_rk4_differ_at_second_order() {
        let (grid, p, st) = perturbed(8, 3);
        let t = 0.32;
        let d = |dt: f64| {
            distance(
                &final_state(&grid, &p, &st, dt, t, Integrator::Rk2),
                &final_state(&grid, &p, &st, dt, t, Integrator::Rk4),
            )
        };
        let ratio = d(0.04) / d(0.02);
        assert!((3.0..=5.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn runs_are_deterministic() {
        let (grid, p, st) = perturbed(8, 4);
        let c = cfg(None, 0.2, Integrator::Rk4);
        let s = Sampling { norms: &NormConfig::default(), every: 2 };
        let a = run(&grid, &p, st.clone(), &c, s).unwrap();
        let b = run(&grid, &p, st, &c, s).unwrap();
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(a.records, b.records);
        assert!(a.records.len() >= 2);
        assert_eq!(a.records[0].step, 0);
        assert!((a.records.last().unwrap().t - 0.2).abs() < 1e-12);
    }

    #[test]
    fn step_split_is_reproducible_from_the_middle() {
        let (grid, p, st) = perturbed(8, 5);
        let c = cfg(Some(0.01), 0.1, Integrator::Rk4);
        let mut whole = Evolver::new(&grid, &p, &c, st.clone(), 0).unwrap();
        while !whole.finished() {
            whole.advance().unwrap();
        }
        let mut first = Evolver::new(&grid, &p, &c, st, 0).unwrap();
        for _ in 0..4 {
            first.advance().unwrap();
        }
        let steps = first.steps();
        let mut second = Evolver::new(&grid, &p, &c, first.into_state(), steps).unwrap();
        while !second.finished() {
            second.advance().unwrap();
        }
        assert_eq!(whole.steps(), second.steps());
        assert_eq!(whole.state(), second.state());
    }
}
