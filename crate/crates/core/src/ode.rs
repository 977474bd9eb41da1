//! Dormand–Prince 5(4) integration on flat real vectors.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("local error estimate {estimate:.3e} exceeds tolerance {tolerance:.3e} at t = {t}")]
    StepTooLarge { t: f64, estimate: f64, tolerance: f64 },
    #[error("adaptive integration could not meet tolerance at t = {t} (step {step:.3e})")]
    ToleranceNotMet { t: f64, step: f64 },
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// One Dormand–Prince step. Returns the fifth-order update and the
/// scaled error norm `max_i |y5_i - y4_i| / (atol + rtol·max(|y_i|, |y5_i|))`.
pub fn dp45_step<F>(f: &mut F, t: f64, y: &[f64], h: f64, rtol: f64, atol: f64) -> (Vec<f64>, f64)
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    for s in 0..7 {
        for i in 0..n {
            let mut acc = y[i];
            for (j, kj) in k.iter().enumerate().take(s) {
                acc += h * A[s][j] * kj[i];
            }
            tmp[i] = acc;
        }
        f(t + C[s] * h, &tmp, &mut k[s]);
    }
    let mut y5 = vec![0.0; n];
    let mut err = 0.0f64;
    for i in 0..n {
        let mut s5 = 0.0;
        let mut s4 = 0.0;
        for s in 0..7 {
            s5 += B5[s] * k[s][i];
            s4 += B4[s] * k[s][i];
        }
        y5[i] = y[i] + h * s5;
        let scale = atol + rtol * y[i].abs().max(y5[i].abs());
        err = err.max((h * (s5 - s4)).abs() / scale);
    }
    (y5, err)
}

/// Fixed-step integration that fails if any step's scaled error exceeds 1.
pub fn integrate_fixed<F>(
    mut f: F,
    y0: &[f64],
    t_final: f64,
    dt: f64,
    rtol: f64,
    atol: f64,
) -> Result<Vec<(f64, Vec<f64>)>, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let steps = (t_final / dt).ceil().max(1.0) as usize;
    let h = t_final / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = y0.to_vec();
    out.push((0.0, y.clone()));
    for s in 0..steps {
        let t = s as f64 * h;
        let (next, err) = dp45_step(&mut f, t, &y, h, rtol, atol);
        if err > 1.0 {
            return Err(OdeError::StepTooLarge { t, estimate: err * rtol, tolerance: rtol });
        }
        y = next;
        out.push(((s + 1) as f64 * h, y.clone()));
    }
    Ok(out)
}

/// Adaptive integration reporting the solution at each requested output time
/// (which must be nondecreasing and start at or after `t0`).
pub fn integrate_adaptive<F>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    rtol: f64,
    atol: f64,
) -> Result<Vec<Vec<f64>>, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = 1e-3;
    let mut out = Vec::with_capacity(outputs.len());
    for &t_out in outputs {
        while t < t_out {
            let remaining = t_out - t;
            let last = h >= remaining;
            let step = if last { remaining } else { h };
            let (next, err) = dp45_step(&mut f, t, &y, step, rtol, atol);
            if err <= 1.0 {
                t = if last { t_out } else { t + step };
                y = next;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 && last {
                // keep the unconstrained step size for the next interval
                h = h.max(step * factor);
            } else {
                h = step * factor;
            }
            if h < 1e-12 * t_out.abs().max(1.0) {
                return Err(OdeError::ToleranceNotMet { t, step: h });
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}
