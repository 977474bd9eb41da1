use dust_einstein::background::{closed_form, ode_integrate, CosmologyParams};
use dust_einstein::evolution::{EvolutionConfig, Evolver, StepperConfig};
use dust_einstein::grid::Grid3;
use dust_einstein::rhs::gauge_residual_max;
use dust_einstein::state::FieldState;

use super::Check;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn closed_forms() -> Vec<Check> {
    let de_sitter = CosmologyParams::new(3.0, 0.0).expect("valid");
    let worst = (0..=1000)
        .map(|i| {
            let t = i as f64 * 0.01;
            rel(closed_form(&de_sitter, t).a, t.exp())
        })
        .fold(0.0f64, f64::max);
    let mut checks = vec![Check::at_most(
        1,
        "closed-form a(t) vs e^t, Λ = 3, ϱ̄ = 0, t ∈ [0, 10]",
        worst,
        1e-12,
        "max relative deviation".into(),
    )];

    let mut ode_worst = 0.0f64;
    let mut detail = Vec::new();
    for rho_bar in [0.0, 1.0, 3.0] {
        let p = CosmologyParams::new(3.0, rho_bar).expect("valid");
        match ode_integrate(&p, 10.0, 1e-3) {
            Ok(path) => {
                let w = path
                    .iter()
                    .map(|s| {
                        let c = closed_form(&p, s.t);
                        rel(s.a, c.a).max(rel(s.omega, c.omega))
                    })
                    .fold(0.0f64, f64::max);
                detail.push(format!("ϱ̄ = {rho_bar}: {w:.2e}"));
                ode_worst = ode_worst.max(w);
            }
            Err(e) => {
                detail.push(format!("ϱ̄ = {rho_bar}: {e}"));
                ode_worst = f64::NAN;
            }
        }
    }
    checks.push(Check::at_most(1, "ODE vs closed form (a, ω), ϱ̄ ∈ {0, 1, 3}", ode_worst, 1e-9, detail.join(", ")));
    checks
}

/// Exact FLRW data evolved to t = 5 at n = 16; every step is sampled.
pub fn flrw_fixed_point() -> Vec<Check> {
    let grid = Grid3::new(16).expect("valid size");
    let mut pert_worst = 0.0f64;
    let mut gauge_worst = 0.0f64;
    let mut detail = Vec::new();
    for rho_bar in [0.0, 3.0] {
        let params = CosmologyParams::new(3.0, rho_bar).expect("valid");
        let cfg = EvolutionConfig::new(StepperConfig::new(None, 5.0));
        let st = FieldState::flrw(16, &params, 0.0);
        let mut ev = match Evolver::new(&grid, &params, &cfg, st, 0) {
            Ok(ev) => ev,
            Err(e) => return vec![Check::failed(3, "FLRW evolution", e.to_string())],
        };
        let mut sample = |st: &FieldState| -> Result<(), String> {
            let p = st.perturbation_max(&params).iter().cloned().fold(0.0f64, f64::max);
            let g = gauge_residual_max(&grid, st, &params).map_err(|e| e.to_string())?;
            pert_worst = pert_worst.max(p);
            gauge_worst = gauge_worst.max(g);
            Ok(())
        };
        if let Err(e) = sample(ev.state()) {
            return vec![Check::failed(3, "FLRW evolution", e)];
        }
        while !ev.finished() {
            if let Err(r) = ev.advance() {
                return vec![Check::failed(3, "FLRW evolution", format!("breakdown {} at t = {}", r.scenario, r.time))];
            }
            if let Err(e) = sample(ev.state()) {
                return vec![Check::failed(3, "FLRW evolution", e)];
            }
        }
        detail.push(format!("ϱ̄ = {rho_bar}: {} steps to t = {}", ev.steps(), ev.state().t));
    }
    let detail = detail.join(", ");
    vec![
        Check::at_most(3, "max perturbation over all samples, ϱ̄ ∈ {0, 3}", pert_worst, 1e-9, detail.clone()),
        Check::at_most(3, "max gauge residual over all samples", gauge_worst, 1e-9, detail),
    ]
}
