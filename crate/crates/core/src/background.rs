//! FLRW background: scale factor a(t), Ω = ln a, ω = a'/a.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ode::{self, OdeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CosmologyError {
    #[error("cosmological constant must be positive and finite, got {0}")]
    NonPositiveLambda(f64),
    #[error("background density must be nonnegative and finite, got {0}")]
    NegativeDensity(f64),
}

/// Cosmological constant and rescaled background dust density. The Hubble
/// constant is derived on demand so it can never disagree with Λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCosmology", into = "RawCosmology")]
pub struct CosmologyParams {
    lambda: f64,
    rho_bar: f64,
}

#[derive(Serialize, Deserialize)]
struct RawCosmology {
    lambda: f64,
    rho_bar: f64,
}

impl TryFrom<RawCosmology> for CosmologyParams {
    type Error = CosmologyError;
    fn try_from(raw: RawCosmology) -> Result<Self, Self::Error> {
        CosmologyParams::new(raw.lambda, raw.rho_bar)
    }
}

impl From<CosmologyParams> for RawCosmology {
    fn from(p: CosmologyParams) -> Self {
        RawCosmology { lambda: p.lambda, rho_bar: p.rho_bar }
    }
}

impl CosmologyParams {
    pub fn new(lambda: f64, rho_bar: f64) -> Result<Self, CosmologyError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(CosmologyError::NonPositiveLambda(lambda));
        }
        if !(rho_bar >= 0.0 && rho_bar.is_finite()) {
            return Err(CosmologyError::NegativeDensity(rho_bar));
        }
        Ok(Self { lambda, rho_bar })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rho_bar(&self) -> f64 {
        self.rho_bar
    }

    pub fn hubble(&self) -> f64 {
        (self.lambda / 3.0).sqrt()
    }

    /// Upper bound sqrt(H² + ϱ̄/3) on the expansion rate.
    pub fn omega_max(&self) -> f64 {
        (self.lambda / 3.0 + self.rho_bar / 3.0).sqrt()
    }

    fn shape(&self) -> f64 {
        let h = self.hubble();
        (self.rho_bar / (3.0 * h * h) + 1.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundState {
    pub t: f64,
    pub a: f64,
    pub omega_log: f64,
    pub omega: f64,
    pub omega_dot: f64,
}

impl BackgroundState {
    /// e^{kΩ} evaluated in log space.
    pub fn exp_omega(&self, k: f64) -> f64 {
        (k * self.omega_log).exp()
    }
}

/// Closed-form background, written as
/// Ω = ⅔[x + ln(1 + ½(s−1)(1−e^{−2x}))], x = 3Ht/2, s = sqrt(ϱ̄/(3H²)+1),
/// so that no intermediate overflows for large t.
pub fn closed_form(params: &CosmologyParams, t: f64) -> BackgroundState {
    let h = params.hubble();
    let s = params.shape();
    let x = 1.5 * h * t;
    let one_minus_e = -(-2.0 * x).exp_m1();
    let e = (-2.0 * x).exp();
    let omega_log = (2.0 / 3.0) * (x + (0.5 * (s - 1.0) * one_minus_e).ln_1p());
    let omega = h * ((s + 1.0) + (s - 1.0) * e) / ((s + 1.0) - (s - 1.0) * e);
    let omega_dot = -0.5 * params.rho_bar * (-3.0 * omega_log).exp();
    BackgroundState { t, a: omega_log.exp(), omega_log, omega, omega_dot }
}

/// Integrates da/dt = a·sqrt(Λ/3 + ϱ̄/(3a³)) from a(0) = 1 with fixed
/// Dormand–Prince steps. Independent cross-check of [`closed_form`].
pub fn ode_integrate(params: &CosmologyParams, t_final: f64, dt: f64) -> Result<Vec<BackgroundState>, OdeError> {
    let lambda = params.lambda;
    let rho_bar = params.rho_bar;
    let rate = move |a: f64| (lambda / 3.0 + rho_bar / (3.0 * a * a * a)).sqrt();
    let path = ode::integrate_fixed(|_, y, dy| dy[0] = y[0] * rate(y[0]), &[1.0], t_final, dt, 1e-8, 1e-14)?;
    Ok(path
        .into_iter()
        .map(|(t, y)| {
            let a = y[0];
            BackgroundState { t, a, omega_log: a.ln(), omega: rate(a), omega_dot: -0.5 * rho_bar / (a * a * a) }
        })
        .collect())
}

/// Checks (1/2)^{2/3} e^{Ht} ≤ a ≤ A e^{Ht} and H ≤ ω ≤ sqrt(H² + ϱ̄/3), in
/// log space with a relative slack of 1e-12 so the ϱ̄ = 0 equalities pass.
pub fn bounds_hold(params: &CosmologyParams, state: &BackgroundState) -> bool {
    let h = params.hubble();
    let s = params.shape();
    let slack = 1e-12 * (1.0 + state.omega_log.abs());
    let ht = h * state.t;
    let lower = (2.0 / 3.0) * 0.5f64.ln() + ht;
    let upper = (2.0 / 3.0) * (0.5 * (s + 1.0)).ln() + ht;
    let log_a = state.omega_log;
    let rate_slack = 1e-12 * params.omega_max();
    log_a >= lower - slack
        && log_a <= upper + slack
        && state.omega >= h - rate_slack
        && state.omega <= params.omega_max() + rate_slack
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(lambda: f64, rho_bar: f64) -> CosmologyParams {
        CosmologyParams::new(lambda, rho_bar).unwrap()
    }

    #[test]
    fn vacuum_background_is_de_sitter() {
        let p = params(3.0, 0.0);
        let b0 = closed_form(&p, 0.0);
        assert_eq!(b0.a, 1.0);
        assert_eq!(b0.omega, 1.0);
        let b2 = closed_form(&p, 2.0);
        assert_relative_eq!(b2.a, 2.0f64.exp(), max_relative = 1e-14);
        assert_relative_eq!(b2.omega, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn matter_background_reference_value() {
        // direct evaluation of {sinh(1.5)·sqrt(2) + cosh(1.5)}^{2/3}
        let direct = (1.5f64.sinh() * 2.0f64.sqrt() + 1.5f64.cosh()).powf(2.0 / 3.0);
        let b = closed_form(&params(3.0, 3.0), 1.0);
        assert_relative_eq!(b.a, direct, max_relative = 1e-14);
        // 30-digit evaluation: 3.06413425769817815154...
        assert_relative_eq!(b.a, 3.064134257698178, max_relative = 1e-14);
    }

    #[test]
    fn huge_times_do_not_overflow_log() {
        let b = closed_form(&params(3.0, 3.0), 1000.0);
        assert!(b.omega_log.is_finite());
        assert_relative_eq!(b.omega, 1.0, max_relative = 1e-14);
        assert!(bounds_hold(&params(3.0, 3.0), &b));
    }

    #[test]
    fn ode_matches_closed_form() {
        let p = params(3.0, 0.0);
        let path = ode_integrate(&p, 1.0, 1e-3).unwrap();
        assert!((path.last().unwrap().a - 1.0f64.exp()).abs() < 1e-10);
        let p = params(3.0, 3.0);
        let path = ode_integrate(&p, 1.0, 1e-3).unwrap();
        let exact = closed_form(&p, 1.0);
        assert_relative_eq!(path.last().unwrap().a, exact.a, max_relative = 1e-9);
    }

    #[test]
    fn ode_rate_within_friedmann_bounds() {
        let p = params(0.3, 1.0);
        let path = ode_integrate(&p, 5.0, 1e-3).unwrap();
        let last = path.last().unwrap();
        assert!(last.omega >= p.hubble() && last.omega <= p.omega_max());
    }

    #[test]
    fn bounds_reject_small_scale_factor() {
        let p = params(3.0, 0.0);
        let mut b = closed_form(&p, 1.0);
        b.omega_log = (0.1f64 * 1.0f64.exp()).ln();
        b.a = b.omega_log.exp();
        assert!(!bounds_hold(&p, &b));
    }

    #[test]
    fn bounds_hold_on_samples() {
        let p = params(3.0, 3.0);
        for t in 0..=10 {
            assert!(bounds_hold(&p, &closed_form(&p, t as f64)));
        }
    }

    #[test]
    fn omega_dot_matches_finite_difference() {
        let p = params(3.0, 3.0);
        let eps = 1e-5;
        for &t in &[0.1, 0.7, 2.0] {
            let fd = (closed_form(&p, t + eps).omega - closed_form(&p, t - eps).omega) / (2.0 * eps);
            let exact = closed_form(&p, t).omega_dot;
            assert_relative_eq!(fd, exact, max_relative = 1e-6);
        }
    }

    #[test]
    fn friedmann_constraint_holds() {
        let p = params(1.7, 2.3);
        for &t in &[0.0, 0.4, 3.0] {
            let b = closed_form(&p, t);
            let lhs = 3.0 * b.omega * b.omega;
            let rhs = p.lambda() + p.rho_bar() * (-3.0 * b.omega_log).exp();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-13);
        }
    }

    #[test]
    fn expansion_rate_decays_to_hubble() {
        // |ω − H| ≤ C e^{−3Ht} with C fitted from t = 0
        let p = params(3.0, 3.0);
        let h = p.hubble();
        let c = closed_form(&p, 0.0).omega - h;
        for i in 1..40 {
            let t = 0.25 * i as f64;
            let gap = closed_form(&p, t).omega - h;
            assert!(gap >= 0.0 && gap <= c * (-3.0 * h * t).exp() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(CosmologyParams::new(0.0, 1.0).is_err());
        assert!(CosmologyParams::new(1.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn bounds_hold_for_random_backgrounds(lambda in 0.01f64..10.0, rho in 0.0f64..10.0, t in 0.0f64..50.0) {
            let p = params(lambda, rho);
            prop_assert!(bounds_hold(&p, &closed_form(&p, t)));
        }

        #[test]
        fn scale_factor_is_exp_of_log(lambda in 0.01f64..10.0, rho in 0.0f64..10.0, t in 0.0f64..20.0) {
            let b = closed_form(&params(lambda, rho), t);
            prop_assert!((b.a.ln() - b.omega_log).abs() <= 1e-13 * (1.0 + b.omega_log.abs()));
        }
    }
}
