//! Single-mode evolution under the numerically linearized system: central
//! differences of the full right-hand side about exact FLRW, projected back
//! onto one Fourier mode and integrated with adaptive Dormand–Prince.

use num_complex::Complex64;
use thiserror::Error;

use crate::background::CosmologyParams;
use crate::grid::{Grid3, GridError};
use crate::ode::{integrate_adaptive, OdeError};
use crate::rhs::{assemble_rates, RhsError, RhsOptions};
use crate::state::{flrw_value, FieldState, NUM_FIELDS};

/// Perturbation δf = Re[A e^{ik·x}] of every field; for k = 0 only the real
/// parts are meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeState {
    pub wavevector: [i64; 3],
    pub amplitudes: [Complex64; NUM_FIELDS],
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("integration tolerance not met: {0}")]
    ToleranceNotMet(#[from] OdeError),
    #[error("right-hand side failed at the perturbed state: {0}")]
    Rhs(#[from] RhsError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("t_final = {0} must exceed the start time")]
    BadInterval(f64),
}

pub const JACOBIAN_STEP: f64 = 1e-6;

impl ModeState {
    pub fn zero(wavevector: [i64; 3]) -> Self {
        Self { wavevector, amplitudes: [Complex64::new(0.0, 0.0); NUM_FIELDS] }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.wavevector == [0, 0, 0]
    }

    pub fn max_abs(&self) -> f64 {
        self.amplitudes.iter().fold(0.0, |m, a| m.max(a.norm()))
    }

    /// δf on the grid.
    pub fn field(&self, grid: &Grid3, f: usize) -> Vec<f64> {
        let a = self.amplitudes[f];
        let k = self.wavevector.map(|c| c as f64);
        grid.sample(|x| {
            let phase = k[0] * x[0] + k[1] * x[1] + k[2] * x[2];
            a.re * phase.cos() - a.im * phase.sin()
        })
    }

    fn to_real(self) -> Vec<f64> {
        self.amplitudes.iter().flat_map(|a| [a.re, a.im]).collect()
    }

    fn from_real(wavevector: [i64; 3], y: &[f64]) -> Self {
        let mut m = Self::zero(wavevector);
        for f in 0..NUM_FIELDS {
            m.amplitudes[f] = Complex64::new(y[2 * f], y[2 * f + 1]);
        }
        m
    }
}

/// Smallest supported grid whose dealiased band contains `kv`.
pub fn minimal_grid(kv: [i64; 3]) -> Result<Grid3, GridError> {
    let kmax = kv.iter().map(|k| k.unsigned_abs() as usize).max().unwrap_or(0);
    let n = (3 * kmax + 1).max(8).next_power_of_two();
    Grid3::new(n)
}

/// Mode amplitude of a single field: twice the Fourier coefficient for
/// k ≠ 0, the real mean for k = 0.
fn project_field(grid: &Grid3, values: &[f64], kv: [i64; 3]) -> Complex64 {
    let c = grid.coefficient(&grid.forward(values), kv).expect("wavevector on the grid");
    if kv == [0, 0, 0] {
        Complex64::new(c.re, 0.0)
    } else {
        2.0 * c
    }
}

/// Projects a state's perturbation from FLRW onto the mode `kv`.
pub fn project_state(grid: &Grid3, st: &FieldState, params: &CosmologyParams, kv: [i64; 3]) -> ModeState {
    let mut m = ModeState::zero(kv);
    for f in 0..NUM_FIELDS {
        let v0 = flrw_value(f, params);
        let pert: Vec<f64> = st.field(f).iter().map(|v| v - v0).collect();
        m.amplitudes[f] = project_field(grid, &pert, kv);
    }
    m
}

fn perturbed(grid: &Grid3, params: &CosmologyParams, t: f64, mode: &ModeState, eps: f64) -> FieldState {
    let mut st = FieldState::flrw(grid.n(), params, t);
    for f in 0..NUM_FIELDS {
        if mode.amplitudes[f] != Complex64::new(0.0, 0.0) {
            let d = mode.field(grid, f);
            st.field_mut(f).iter_mut().zip(&d).for_each(|(v, dv)| *v += eps * dv);
        }
    }
    st
}

/// (R(FLRW + ε·mode) − R(FLRW − ε·mode))/(2ε) projected on the mode, with
/// ε = `step` / max amplitude.
pub fn jacobian_action_with_step(
    grid: &Grid3,
    params: &CosmologyParams,
    t: f64,
    mode: &ModeState,
    step: f64,
) -> Result<ModeState, RhsError> {
    let scale = mode.max_abs();
    if scale == 0.0 {
        return Ok(ModeState::zero(mode.wavevector));
    }
    let eps = step / scale;
    let opts = RhsOptions::default();
    let plus = assemble_rates(grid, &perturbed(grid, params, t, mode, eps), params, &opts)?;
    let minus = assemble_rates(grid, &perturbed(grid, params, t, mode, -eps), params, &opts)?;
    let mut out = ModeState::zero(mode.wavevector);
    for f in 0..NUM_FIELDS {
        let diff: Vec<f64> = plus.field(f).iter().zip(minus.field(f)).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        out.amplitudes[f] = project_field(grid, &diff, mode.wavevector);
    }
    Ok(out)
}

pub fn jacobian_action(
    grid: &Grid3,
    params: &CosmologyParams,
    t: f64,
    mode: &ModeState,
) -> Result<ModeState, RhsError> {
    jacobian_action_with_step(grid, params, t, mode, JACOBIAN_STEP)
}

/// Integrates the linearized system from `t0` and reports the mode at each
/// output time (nondecreasing, after `t0`), with relative tolerance 1e-10.
pub fn evolve_mode(
    params: &CosmologyParams,
    mode0: &ModeState,
    t0: f64,
    outputs: &[f64],
) -> Result<Vec<ModeState>, OracleError> {
    if let Some(&last) = outputs.last() {
        if !(last > t0) {
            return Err(OracleError::BadInterval(last));
        }
    }
    let grid = minimal_grid(mode0.wavevector)?;
    let kv = mode0.wavevector;
    let atol = 1e-10 * mode0.max_abs().max(f64::MIN_POSITIVE);
    let mut failure: Option<RhsError> = None;
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        if failure.is_some() {
            dy.fill(0.0);
            return;
        }
        match jacobian_action(&grid, params, t, &ModeState::from_real(kv, y)) {
            Ok(r) => dy.copy_from_slice(&r.to_real()),
            Err(e) => {
                failure = Some(e);
                dy.fill(0.0);
            }
        }
    };
    let ys = integrate_adaptive(rhs, t0, &mode0.to_real(), outputs, 1e-10, atol)?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(ys.iter().map(|y| ModeState::from_real(kv, y)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::closed_form;
    use crate::state;

    fn real(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    #[test]
    fn homogeneous_velocity_rate() {
        let params = CosmologyParams::new(3.0, 1.0).unwrap();
        let grid = minimal_grid([0, 0, 0]).unwrap();
        let t = 0.4;
        let mut mode = ModeState::zero([0, 0, 0]);
        mode.amplitudes[state::u(1)] = real(0.7);
        let rate = jacobian_action(&grid, &params, t, &mode).unwrap();
        let omega = closed_form(&params, t).omega;
        assert!((rate.amplitudes[state::u(1)].re + 2.0 * omega * 0.7).abs() < 1e-8);
        assert!(rate.amplitudes[state::u(0)].norm() < 1e-8);
    }

    #[test]
    fn homogeneous_lapse_is_damped_oscillator() {
        let params = CosmologyParams::new(3.0, 0.0).unwrap();
        let h = params.hubble();
        let grid = minimal_grid([0, 0, 0]).unwrap();
        for (dg, dk) in [(1.0, 0.0), (0.0, 1.0)] {
            let mut mode = ModeState::zero([0, 0, 0]);
            mode.amplitudes[state::G00] = real(dg);
            mode.amplitudes[state::k(0)] = real(dk);
            let rate = jacobian_action(&grid, &params, 0.3, &mode).unwrap();
            let expect = -5.0 * h * dk - 6.0 * h * h * dg;
            assert!((rate.amplitudes[state::k(0)].re - expect).abs() < 1e-7, "{:?}", rate.amplitudes[state::k(0)]);
            assert!((rate.amplitudes[state::G00].re - dk).abs() < 1e-9);
        }
    }

    #[test]
    fn central_difference_is_second_order() {
        let params = CosmologyParams::new(3.0, 1.0).unwrap();
        let grid = minimal_grid([1, 0, 2]).unwrap();
        let mut mode = ModeState::zero([1, 0, 2]);
        mode.amplitudes[state::h(0, 1)] = Complex64::new(0.3, -0.2);
        mode.amplitudes[state::u(2)] = Complex64::new(0.1, 0.4);
        mode.amplitudes[state::RHO] = Complex64::new(-0.5, 0.1);
        let coarse = |step: f64| jacobian_action_with_step(&grid, &params, 0.2, &mode, step).unwrap();
        let diff = |a: &ModeState, b: &ModeState| {
            a.amplitudes.iter().zip(&b.amplitudes).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()))
        };
        let (a, b, c) = (coarse(4e-3), coarse(2e-3), coarse(1e-3));
        let ratio = diff(&a, &b) / diff(&b, &c);
        assert!((3.0..=5.0).contains(&ratio), "{ratio}");
        assert!(diff(&coarse(2e-6), &coarse(1e-6)) < 1e-8);
    }

    #[test]
    fn projection_recovers_mode() {
        let params = CosmologyParams::new(3.0, 2.0).unwrap();
        let grid = Grid3::new(8).unwrap();
        let mut mode = ModeState::zero([-1, 2, 0]);
        mode.amplitudes[state::g0(2)] = Complex64::new(0.25, -1.5);
        let mut st = FieldState::flrw(8, &params, 0.0);
        let d = mode.field(&grid, state::g0(2));
        st.field_mut(state::g0(2)).copy_from_slice(&d);
        let back = project_state(&grid, &st, &params, mode.wavevector);
        assert!((back.amplitudes[state::g0(2)] - mode.amplitudes[state::g0(2)]).norm() < 1e-14);
    }

    #[test]
    fn homogeneous_velocity_decays_exactly() {
        let params = CosmologyParams::new(3.0, 0.0).unwrap();
        let mut mode = ModeState::zero([0, 0, 0]);
        mode.amplitudes[state::u(0)] = real(1e-5);
        let ts = [0.5, 1.0, 2.0];
        let out = evolve_mode(&params, &mode, 0.0, &ts).unwrap();
        for (t, m) in ts.iter().zip(&out) {
            let expect = 1e-5 * (-2.0 * t).exp();
            let got = m.amplitudes[state::u(0)].re;
            assert!(((got - expect) / expect).abs() < 1e-8, "t={t}: {got} vs {expect}");
        }
    }

    #[test]
    fn homogeneous_density_mode_is_constant() {
        let params = CosmologyParams::new(3.0, 0.0).unwrap();
        let mut mode = ModeState::zero([0, 0, 0]);
        mode.amplitudes[state::RHO] = real(1e-5);
        let out = evolve_mode(&params, &mode, 0.0, &[1.0, 3.0]).unwrap();
        for m in out {
            assert!((m.amplitudes[state::RHO].re / 1e-5 - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_empty_interval() {
        let params = CosmologyParams::new(3.0, 0.0).unwrap();
        let mode = ModeState::zero([0, 0, 0]);
        assert!(matches!(evolve_mode(&params, &mode, 1.0, &[0.5]), Err(OracleError::BadInterval(_))));
    }
}
