use dust_einstein::background::CosmologyParams;
use dust_einstein::evolution::{EvolutionConfig, Evolver, StepperConfig};
use dust_einstein::grid::Grid3;
use dust_einstein::initial_data::random_state;
use dust_einstein::state::{self, FieldState, NUM_FIELDS};

use super::Check;

/// Start of the temporal run. The scale factor is small there, so the
/// spatial wave speed e^{−Ω} is large and the truncation error sits well
/// above round-off at the tested step sizes.
const TIME_T0: f64 = -3.3;
const TIME_SPAN: f64 = 0.1;
const STEPS: [f64; 4] = [8e-4, 4e-4, 2e-4, 1e-4];
const REFERENCE_DT: f64 = 5e-5;

fn evolve(grid: &Grid3, params: &CosmologyParams, st: FieldState, dt: f64, t_final: f64) -> Result<FieldState, String> {
    let cfg = EvolutionConfig::new(StepperConfig::new(Some(dt), t_final));
    let mut ev = Evolver::new(grid, params, &cfg, st, 0).map_err(|e| e.to_string())?;
    while !ev.finished() {
        ev.advance().map_err(|r| format!("breakdown {} at t = {}", r.scenario, r.time))?;
    }
    Ok(ev.into_state())
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Least-squares slope of log(err) against log(dt).
pub(crate) fn log_log_slope(dts: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn temporal() -> Result<Check, String> {
    let grid = Grid3::new(8).expect("valid size");
    let params = CosmologyParams::new(3.0, 0.0).expect("valid");
    let initial = random_state(&grid, &params, TIME_T0, 1e-2, 7, 2);
    let t_final = TIME_T0 + TIME_SPAN;
    let fine = evolve(&grid, &params, initial.clone(), REFERENCE_DT, t_final)?;
    let coarse = evolve(&grid, &params, initial.clone(), 2.0 * REFERENCE_DT, t_final)?;
    // Richardson extrapolation of the fourth-order pair
    let reference: Vec<f64> = fine.data().iter().zip(coarse.data()).map(|(f, c)| f + (f - c) / 15.0).collect();
    let mut errs = Vec::new();
    for dt in STEPS {
        let y = if dt == 2.0 * REFERENCE_DT {
            coarse.clone()
        } else {
            evolve(&grid, &params, initial.clone(), dt, t_final)?
        };
        errs.push(max_diff(y.data(), &reference));
    }
    let slope = log_log_slope(&STEPS, &errs);
    let detail = format!(
        "n = 8, t ∈ [{TIME_T0}, {t_final}], errors {}",
        errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
    );
    Ok(Check::within(5, "RK4 global-error slope over dt ∈ {8,4,2,1}e-4", slope, (3.7, 4.3), detail))
}

/// Smooth, analytic, not band-limited perturbation of every field.
fn analytic_state(grid: &Grid3, params: &CosmologyParams, amplitude: f64) -> FieldState {
    let mut st = FieldState::flrw(grid.n(), params, 0.0);
    for f in 0..NUM_FIELDS {
        let phase = 0.7 * f as f64;
        let shift = if f == state::RHO { 3.0 } else { 0.0 };
        let values = grid.sample(|x| {
            (0.6 * (x[0] + phase).sin() + 0.5 * (x[1] - phase).cos() + 0.4 * (x[2] + 2.0 * phase).sin()).exp() - 1.0
                + shift
        });
        for (v, d) in st.field_mut(f).iter_mut().zip(values) {
            *v += amplitude * d;
        }
    }
    st
}

/// Values of `fine` on the points of the n = 8 grid.
fn restrict(fine: &FieldState, coarse_n: usize) -> Vec<f64> {
    let stride = fine.n() / coarse_n;
    let n = fine.n();
    let mut out = Vec::with_capacity(NUM_FIELDS * coarse_n.pow(3));
    for f in 0..NUM_FIELDS {
        let values = fine.field(f);
        for i in 0..coarse_n {
            for j in 0..coarse_n {
                for k in 0..coarse_n {
                    out.push(values[((i * stride) * n + j * stride) * n + k * stride]);
                }
            }
        }
    }
    out
}

fn spectral() -> Result<Check, String> {
    let params = CosmologyParams::new(3.0, 1.0).expect("valid");
    let mut finals = Vec::new();
    for n in [8, 16, 32] {
        let grid = Grid3::new(n).expect("valid size");
        let st = analytic_state(&grid, &params, 1e-2);
        finals.push(restrict(&evolve(&grid, &params, st, 0.01, 0.05)?, 8));
    }
    let e8 = max_diff(&finals[0], &finals[2]);
    let e16 = max_diff(&finals[1], &finals[2]);
    let detail = format!("|y8 − y32| = {e8:.3e}, |y16 − y32| = {e16:.3e} on the n = 8 points, t = 0.05");
    Ok(Check::at_least(5, "spectral self-convergence factor per doubling of n", e8 / e16, 10.0, detail))
}

pub fn orders() -> Vec<Check> {
    [temporal(), spectral()].into_iter().map(|r| r.unwrap_or_else(|e| Check::failed(5, "convergence run", e))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let dts = [8.0, 4.0, 2.0, 1.0];
        let errs: Vec<f64> = dts.iter().map(|d: &f64| 3.0 * d.powi(4)).collect();
        assert!((log_log_slope(&dts, &errs) - 4.0).abs() < 1e-12);
    }
}
