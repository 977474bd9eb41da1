use dust_einstein::background::CosmologyParams;
use dust_einstein::evolution::{EvolutionConfig, Evolver, StepperConfig};
use dust_einstein::grid::Grid3;
use dust_einstein::initial_data::{construct_modified_data, perturbed_flrw, PerturbationSpec, Target};
use dust_einstein::linear_oracle::{evolve_mode, project_state};
use dust_einstein::state::{flrw_value, FieldState, NUM_FIELDS};

use super::Check;

const WAVEVECTOR: [i64; 3] = [1, 0, 0];
const TARGET: Target = Target::Metric(0, 1);
const DT: f64 = 0.01;
const T_FINAL: f64 = 3.0;
const SAMPLE_EVERY: u64 = 25;

/// Max over samples, fields and points of |δf_nl − δf_lin|, and of |δf_lin|.
struct Deviation {
    absolute: f64,
    linear_scale: f64,
}

impl Deviation {
    fn relative(&self) -> f64 {
        self.absolute / self.linear_scale
    }
}

fn deviation(amplitude: f64) -> Result<Deviation, String> {
    let grid = Grid3::new(8).expect("valid size");
    let params = CosmologyParams::new(3.0, 1.0).expect("valid");
    let spec = PerturbationSpec::single(amplitude, WAVEVECTOR, TARGET);
    let geo = perturbed_flrw(&grid, &params, &spec).map_err(|e| e.to_string())?;
    let initial = construct_modified_data(&grid, &geo, &params).map_err(|e| e.to_string())?;
    let mode0 = project_state(&grid, &initial, &params, WAVEVECTOR);

    let cfg = EvolutionConfig::new(StepperConfig::new(Some(DT), T_FINAL));
    let mut ev = Evolver::new(&grid, &params, &cfg, initial.clone(), 0).map_err(|e| e.to_string())?;
    let mut samples: Vec<FieldState> = vec![initial];
    while !ev.finished() {
        ev.advance().map_err(|r| format!("breakdown {} at t = {}", r.scenario, r.time))?;
        if ev.steps() % SAMPLE_EVERY == 0 || ev.finished() {
            samples.push(ev.state().clone());
        }
    }
    let times: Vec<f64> = samples[1..].iter().map(|s| s.t).collect();
    let mut modes = vec![mode0];
    modes.extend(evolve_mode(&params, &mode0, 0.0, &times).map_err(|e| e.to_string())?);

    let mut dev = Deviation { absolute: 0.0, linear_scale: 0.0 };
    for (st, mode) in samples.iter().zip(&modes) {
        for f in 0..NUM_FIELDS {
            let v0 = flrw_value(f, &params);
            let linear = mode.field(&grid, f);
            for (v, l) in st.field(f).iter().zip(&linear) {
                dev.absolute = dev.absolute.max((v - v0 - l).abs());
                dev.linear_scale = dev.linear_scale.max(l.abs());
            }
        }
    }
    Ok(dev)
}

pub fn equivalence() -> Vec<Check> {
    const AMPLITUDES: [f64; 3] = [1e-6, 1e-5, 1e-4];
    let runs: Vec<(Result<Deviation, String>, Result<Deviation, String>)> =
        AMPLITUDES.iter().map(|&a| (deviation(a), deviation(2.0 * a))).collect();
    let mut checks = Vec::new();
    match &runs[1].0 {
        Ok(d) => checks.push(Check::at_most(
            6,
            "nonlinear vs linearized mode evolution, amplitude 1e-5, t ∈ [0, 3]",
            d.relative(),
            1e-2,
            format!("mode k = {WAVEVECTOR:?} in {TARGET}, n = 8, max |δf_nl − δf_lin| / max |δf_lin|"),
        )),
        Err(e) => checks.push(Check::failed(6, "oracle run", e.clone())),
    }
    for (amplitude, run) in AMPLITUDES.iter().zip(&runs) {
        let name = format!("deviation ratio dev(2A)/dev(A), A = {amplitude:e}");
        match run {
            (Ok(a), Ok(b)) => checks.push(Check::within(
                6,
                &name,
                b.absolute / a.absolute,
                (3.0, 5.0),
                format!("dev(A) = {:.3e}, dev(2A) = {:.3e}", a.absolute, b.absolute),
            )),
            (Err(e), _) | (_, Err(e)) => checks.push(Check::failed(6, &name, e.clone())),
        }
    }
    checks
}
