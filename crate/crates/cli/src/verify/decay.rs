use dust_einstein::background::{closed_form, CosmologyParams};
use dust_einstein::diagnostics::fit_decay;
use dust_einstein::evolution::{EvolutionConfig, Evolver, StepperConfig};
use dust_einstein::grid::Grid3;
use dust_einstein::initial_data::{construct_modified_data, perturbed_flrw, PerturbationSpec, Target};
use dust_einstein::state::{self, FieldState};

use super::Check;

const AMPLITUDE: f64 = 1e-5;
const T_FINAL: f64 = 5.0;
const DT: f64 = 0.05;

/// Every state of a homogeneous single-target run at n = 8, Λ = 3, ϱ̄ = 0.
fn homogeneous_run(target: Target) -> Result<(Grid3, Vec<FieldState>), String> {
    let grid = Grid3::new(8).expect("valid size");
    let params = CosmologyParams::new(3.0, 0.0).expect("valid");
    let spec = PerturbationSpec::single(AMPLITUDE, [0, 0, 0], target);
    let geo = perturbed_flrw(&grid, &params, &spec).map_err(|e| e.to_string())?;
    let initial = construct_modified_data(&grid, &geo, &params).map_err(|e| e.to_string())?;
    let cfg = EvolutionConfig::new(StepperConfig::new(Some(DT), T_FINAL));
    let mut ev = Evolver::new(&grid, &params, &cfg, initial.clone(), 0).map_err(|e| e.to_string())?;
    let mut states = vec![initial];
    while !ev.finished() {
        ev.advance().map_err(|r| format!("breakdown {} at t = {}", r.scenario, r.time))?;
        states.push(ev.state().clone());
    }
    Ok((grid, states))
}

fn velocity_decay() -> Result<Check, String> {
    let (grid, states) = homogeneous_run(Target::Velocity(0))?;
    let times: Vec<f64> = states.iter().map(|s| s.t).collect();
    let norms: Vec<f64> = states.iter().map(|s| grid.l2_norm(s.field(state::u(0)))).collect();
    let fit = fit_decay(&times, &norms, (0.0, T_FINAL)).map_err(|e| e.to_string())?;
    let target = -2.0 * CosmologyParams::new(3.0, 0.0).expect("valid").hubble();
    let deviation = (fit.exponent - target).abs() / target.abs();
    Ok(Check::at_most(
        7,
        "fitted decay exponent of ‖u¹‖ vs −2H, relative deviation",
        deviation,
        0.05,
        format!("exponent {:.6} vs {target}, {} samples on [0, {T_FINAL}]", fit.exponent, fit.samples),
    ))
}

fn density_constancy() -> Result<Vec<Check>, String> {
    let (grid, states) = homogeneous_run(Target::Density)?;
    let mean = |s: &FieldState| grid.integrate(s.field(state::RHO)) / grid.integrate(&vec![1.0; grid.len()]);
    let rho0 = mean(&states[0]);
    let drift = states.iter().map(|s| (mean(s) - rho0).abs() / rho0.abs()).fold(0.0f64, f64::max);
    // The perturbed solution is close to the FLRW solution with ϱ̄ = ϱ(0),
    // whose scale factor outgrows the unperturbed one; rescaling by the
    // unperturbed e^{3Ω} leaves a drift of 1 − (e^Ω/a)³.
    let background = CosmologyParams::new(3.0, 0.0).expect("valid");
    let matched = CosmologyParams::new(3.0, rho0).map_err(|e| e.to_string())?;
    let predicted = states
        .iter()
        .map(|s| (1.0 - (closed_form(&background, s.t).a / closed_form(&matched, s.t).a).powi(3)).abs())
        .fold(0.0f64, f64::max);
    Ok(vec![
        Check::at_most(
            7,
            "homogeneous ϱ perturbation, max relative drift",
            drift,
            1e-6,
            format!("ϱ(0) = {rho0:e}, t ∈ [0, {T_FINAL}]"),
        ),
        Check::at_most(
            7,
            "ϱ drift vs FLRW prediction with ϱ̄ = ϱ(0), relative deviation",
            (drift - predicted).abs() / predicted,
            1e-2,
            format!("measured {drift:.6e}, predicted {predicted:.6e}"),
        ),
    ])
}

pub fn decay_rates() -> Vec<Check> {
    let mut checks = vec![velocity_decay().unwrap_or_else(|e| Check::failed(7, "velocity decay run", e))];
    match density_constancy() {
        Ok(c) => checks.extend(c),
        Err(e) => checks.push(Check::failed(7, "density run", e)),
    }
    checks
}
