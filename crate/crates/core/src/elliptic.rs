//! The two-time-derivative identity, the elliptic identity
//! Hᵃᵇ∂_a∂_b v = e^{2Ω}□̂_g v − e^{2Ω}(g⁰⁰/u⁰)∂_u∂_t v + e^{2Ω}{g⁰⁰uᵃ/(u⁰)² − 2g⁰ᵃ/u⁰}∂_u∂_a v,
//! and top-order spatial derivatives for the elliptic norms.

use crate::grid::Grid3;
use crate::lorentz::{invert_spatial, Mat3};
use crate::snapshot::Snapshot;
use crate::state::NUM_METRIC;

/// Spectral derivatives of component c needed by both identities.
struct ComponentDerivatives {
    /// ∂_a v
    dv: [Vec<f64>; 3],
    /// ∂_a∂_b v over the symmetric pairs.
    ddv: [Vec<f64>; 6],
    /// ∂_a k
    dk: [Vec<f64>; 3],
}

const AXES: [&[usize]; 3] = [&[0], &[1], &[2]];
const PAIR_AXES: [&[usize]; 6] = [&[0, 0], &[0, 1], &[0, 2], &[1, 1], &[1, 2], &[2, 2]];

fn pair_position(a: usize, b: usize) -> usize {
    crate::state::pair_index(a, b)
}

impl ComponentDerivatives {
    fn new(snap: &Snapshot, c: usize) -> Self {
        let grid = snap.grid;
        let sv = grid.forward(snap.state.field(c));
        let sk = grid.forward(snap.k(c));
        let mut dv = grid.derivative_fields(&sv, &AXES).into_iter();
        let mut ddv = grid.derivative_fields(&sv, &PAIR_AXES).into_iter();
        let mut dk = grid.derivative_fields(&sk, &AXES).into_iter();
        Self {
            dv: std::array::from_fn(|_| dv.next().unwrap()),
            ddv: std::array::from_fn(|_| ddv.next().unwrap()),
            dk: std::array::from_fn(|_| dk.next().unwrap()),
        }
    }

    fn dd(&self, a: usize, b: usize) -> &[f64] {
        &self.ddv[pair_position(a, b)]
    }
}

/// ∂_u∂_t v and ∂_u∂_a v built with ∂_u f = u⁰∂_t f + uᵃ∂_a f.
fn du_derivatives(snap: &Snapshot, c: usize, d: &ComponentDerivatives) -> (Vec<f64>, [Vec<f64>; 3]) {
    let du_dt = snap.du_apply(snap.dtt(c), &d.dk);
    let du_da = std::array::from_fn(|a| {
        let grad: [Vec<f64>; 3] = std::array::from_fn(|b| d.dd(a, b).to_vec());
        snap.du_apply(&d.dk[a], &grad)
    });
    (du_dt, du_da)
}

fn max_abs(f: &[f64]) -> f64 {
    f.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Pointwise residual fields together with the scale used for relative reporting.
#[derive(Debug, Clone)]
pub struct IdentityResidual {
    pub residual: Vec<f64>,
    /// max |left side|, max |right side| whichever larger.
    pub scale: f64,
}

impl IdentityResidual {
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.residual)
    }

    /// Max residual relative to the larger side; absolute when both sides vanish.
    pub fn max_relative(&self) -> f64 {
        let m = self.max_abs();
        if self.scale > 0.0 {
            m / self.scale
        } else {
            m
        }
    }
}

/// ∂_tt v − [(1/u⁰)∂_u∂_t v − (uᵃ/(u⁰)²)∂_u∂_a v + (uᵃuᵇ/(u⁰)²)∂_a∂_b v].
pub fn dtt_identity_residual(snap: &Snapshot, c: usize) -> IdentityResidual {
    let d = ComponentDerivatives::new(snap, c);
    let (du_dt, du_da) = du_derivatives(snap, c, &d);
    let u = &snap.u;
    let left = snap.dtt(c);
    let right: Vec<f64> = (0..snap.points())
        .map(|i| {
            let u0 = u[0][i];
            let mut acc = du_dt[i] / u0;
            for a in 0..3 {
                acc -= u[a + 1][i] / (u0 * u0) * du_da[a][i];
                for b in 0..3 {
                    acc += u[a + 1][i] * u[b + 1][i] / (u0 * u0) * d.dd(a, b)[i];
                }
            }
            acc
        })
        .collect();
    IdentityResidual {
        residual: left.iter().zip(&right).map(|(l, r)| l - r).collect(),
        scale: max_abs(left).max(max_abs(&right)),
    }
}

/// Hⁱʲ = e^{2Ω}[gⁱʲ + g⁰⁰uⁱuʲ/(u⁰)² − g⁰ⁱuʲ/u⁰ − g⁰ʲuⁱ/u⁰] at grid point `idx`.
pub fn elliptic_coefficients_at(snap: &Snapshot, idx: usize) -> Mat3 {
    let e2o = snap.bg.exp_omega(2.0);
    let gu = &snap.gu;
    let u = &snap.u;
    let u0 = u[0][idx];
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let (ui, uj) = (u[i + 1][idx], u[j + 1][idx]);
            e2o * (gu[i + 1][j + 1][idx] + gu[0][0][idx] * ui * uj / (u0 * u0)
                - gu[0][i + 1][idx] * uj / u0
                - gu[0][j + 1][idx] * ui / u0)
        })
    })
}

/// Smallest eigenvalue of Hⁱʲ over the grid; `None` if some Hⁱʲ fails the
/// Sylvester test.
pub fn min_elliptic_eigenvalue(snap: &Snapshot) -> Option<f64> {
    let mut min = f64::INFINITY;
    for idx in 0..snap.points() {
        let h = elliptic_coefficients_at(snap, idx);
        invert_spatial(&h).ok()?;
        let m = nalgebra::Matrix3::from_fn(|i, j| h[i][j]);
        let eig = m.symmetric_eigenvalues();
        min = min.min(eig.min());
    }
    Some(min)
}

/// Residual of the elliptic identity for metric component c, with □̂_g v
/// assembled from g^{αβ}∂_α∂_β v.
pub fn elliptic_identity_residual(snap: &Snapshot, c: usize) -> IdentityResidual {
    let d = ComponentDerivatives::new(snap, c);
    let (du_dt, du_da) = du_derivatives(snap, c, &d);
    let gu = &snap.gu;
    let u = &snap.u;
    let e2o = snap.bg.exp_omega(2.0);
    let m = snap.points();
    let mut left = vec![0.0; m];
    let mut right = vec![0.0; m];
    for i in 0..m {
        let h = elliptic_coefficients_at(snap, i);
        let mut box_v = gu[0][0][i] * snap.dtt(c)[i];
        for a in 0..3 {
            box_v += 2.0 * gu[0][a + 1][i] * d.dk[a][i];
            for b in 0..3 {
                left[i] += h[a][b] * d.dd(a, b)[i];
                box_v += gu[a + 1][b + 1][i] * d.dd(a, b)[i];
            }
        }
        let u0 = u[0][i];
        let mut acc = box_v - gu[0][0][i] / u0 * du_dt[i];
        for a in 0..3 {
            acc += (gu[0][0][i] * u[a + 1][i] / (u0 * u0) - 2.0 * gu[0][a + 1][i] / u0) * du_da[a][i];
        }
        right[i] = e2o * acc;
    }
    IdentityResidual {
        residual: left.iter().zip(&right).map(|(l, r)| l - r).collect(),
        scale: max_abs(&left).max(max_abs(&right)),
    }
}

/// Second spatial derivatives of metric component c and the value of the
/// right-hand side of the associated L² bound,
/// e^{2Ω}‖□̂v‖ + e^{2Ω}‖∂_t∂_u v‖ + Σ_a e^{(1−q)Ω}‖∂_a∂_u v‖ + e^{(2−q)Ω}‖∂_t v‖ + Σ_a e^{(1−q)Ω}‖∂_a v‖.
pub struct TopOrder {
    /// ∂_a∂_b v over the symmetric pairs, each computed once.
    pub second: [Vec<f64>; 6],
    /// Σ_{a,b} ‖∂_a∂_b v‖_{L²}.
    pub lhs: f64,
    pub bound: f64,
}

pub fn top_order_spatial(snap: &Snapshot, c: usize, q: f64) -> TopOrder {
    let grid: &Grid3 = snap.grid;
    let d = ComponentDerivatives::new(snap, c);
    let gu = &snap.gu;
    let om = snap.bg.omega_log;
    let m = snap.points();
    let mut box_v = vec![0.0; m];
    for i in 0..m {
        let mut acc = gu[0][0][i] * snap.dtt(c)[i];
        for a in 0..3 {
            acc += 2.0 * gu[0][a + 1][i] * d.dk[a][i];
            for b in 0..3 {
                acc += gu[a + 1][b + 1][i] * d.dd(a, b)[i];
            }
        }
        box_v[i] = acc;
    }
    // ∂_u v and its derivatives in the ∂_α∂_u order
    let du_v = snap.du_apply(snap.k(c), &d.dv);
    let du_v_spec = grid.forward(&du_v);
    let grad_du: Vec<Vec<f64>> = grid.derivative_fields(&du_v_spec, &AXES);
    // ∂_t∂_u v = ∂_t u^μ ∂_μ v + u^μ ∂_μ ∂_t v
    let dt_du: Vec<f64> = (0..m)
        .map(|i| {
            let mut acc = snap.dt_u[0][i] * snap.k(c)[i] + snap.u[0][i] * snap.dtt(c)[i];
            for a in 0..3 {
                acc += snap.dt_u[a + 1][i] * d.dv[a][i] + snap.u[a + 1][i] * d.dk[a][i];
            }
            acc
        })
        .collect();
    let e = |p: f64| (p * om).exp();
    let mut lhs = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            lhs += grid.l2_norm(d.dd(a, b));
        }
    }
    let mut bound =
        e(2.0) * grid.l2_norm(&box_v) + e(2.0) * grid.l2_norm(&dt_du) + e(2.0 - q) * grid.l2_norm(snap.k(c));
    for a in 0..3 {
        bound += e(1.0 - q) * (grid.l2_norm(&grad_du[a]) + grid.l2_norm(&d.dv[a]));
    }
    TopOrder { second: d.ddv, lhs, bound }
}

/// Worst relative residual of both identities over all ten components.
pub fn identity_suite(snap: &Snapshot) -> (f64, f64) {
    let mut dtt_worst = 0.0f64;
    let mut ell_worst = 0.0f64;
    for c in 0..NUM_METRIC {
        dtt_worst = dtt_worst.max(dtt_identity_residual(snap, c).max_relative());
        ell_worst = ell_worst.max(elliptic_identity_residual(snap, c).max_relative());
    }
    (dtt_worst, ell_worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::CosmologyParams;
    use crate::initial_data::random_state;
    use crate::rhs::RhsOptions;
    use crate::state::{self, FieldState};

    #[test]
    fn flrw_residuals_vanish() {
        let grid = Grid3::new(8).unwrap();
        let params = CosmologyParams::new(3.0, 1.0).unwrap();
        let st = FieldState::flrw(8, &params, 0.5);
        let snap = Snapshot::new(&grid, &st, &params, &RhsOptions::default()).unwrap();
        for c in 0..NUM_METRIC {
            assert!(elliptic_identity_residual(&snap, c).max_abs() < 1e-14);
            assert!(dtt_identity_residual(&snap, c).max_abs() < 1e-10);
        }
    }

    #[test]
    fn manufactured_minkowski_slice() {
        // Λ small so the background is close to static; v = sin(x¹ + x²)
        let n = 16;
        let grid = Grid3::new(n).unwrap();
        let params = CosmologyParams::new(3.0, 0.0).unwrap();
        let mut st = FieldState::flrw(n, &params, 0.0);
        for i in 0..st.points() {
            let p = grid.point(i);
            st.field_mut(state::G00)[i] += 1e-3 * (p[0] + p[1]).sin();
            st.field_mut(state::u(0))[i] = 1e-2 * p[2].cos();
        }
        let snap = Snapshot::new(&grid, &st, &params, &RhsOptions::default()).unwrap();
        assert!(elliptic_identity_residual(&snap, state::G00).max_abs() <= 1e-10);
        assert!(dtt_identity_residual(&snap, state::G00).max_abs() <= 1e-10);
    }

    #[test]
    fn random_states_satisfy_both_identities() {
        let grid = Grid3::new(16).unwrap();
        let params = CosmologyParams::new(3.0, 1.0).unwrap();
        for seed in 0..3 {
            let st = random_state(&grid, &params, 0.3, 0.05, seed, 3);
            let snap = Snapshot::new(&grid, &st, &params, &RhsOptions::default()).unwrap();
            let (dtt, ell) = identity_suite(&snap);
            assert!(dtt < 1e-10, "{dtt}");
            assert!(ell < 1e-10, "{ell}");
        }
    }

    #[test]
    fn second_derivatives_of_sine() {
        let grid = Grid3::new(8).unwrap();
        let params = CosmologyParams::new(3.0, 0.0).unwrap();
        let mut st = FieldState::flrw(8, &params, 0.0);
        for i in 0..st.points() {
            st.field_mut(state::G00)[i] += 0.5 * grid.point(i)[0].sin();
        }
        let snap = Snapshot::new(&grid, &st, &params, &RhsOptions::default()).unwrap();
        let top = top_order_spatial(&snap, state::G00, 0.1);
        for i in 0..st.points() {
            let x = grid.point(i)[0];
            assert!((top.second[0][i] + 0.5 * x.sin()).abs() < 1e-12);
            for p in 1..6 {
                assert!(top.second[p][i].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn elliptic_coefficients_positive_definite_near_flrw() {
        let grid = Grid3::new(8).unwrap();
        let params = CosmologyParams::new(3.0, 1.0).unwrap();
        let st = random_state(&grid, &params, 0.0, 0.02, 5, 2);
        let snap = Snapshot::new(&grid, &st, &params, &RhsOptions::default()).unwrap();
        let min = min_elliptic_eigenvalue(&snap).unwrap();
        assert!(min > 0.5, "{min}");
    }
}
