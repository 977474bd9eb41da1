//! Pointwise kinematic fields derived from a state: inverse metric, fluid
//! four-velocity and second time derivatives. Shared by diagnostics and the
//! elliptic checks.

use crate::background::{closed_form, BackgroundState, CosmologyParams};
use crate::grid::Grid3;
use crate::lorentz::invert_metric;
use crate::rhs::{component_indices, for_each_point, Kinematics, RhsError, RhsOptions};
use crate::state::{self, FieldState, NUM_METRIC};

pub struct Snapshot<'a> {
    pub grid: &'a Grid3,
    pub state: &'a FieldState,
    pub params: CosmologyParams,
    pub bg: BackgroundState,
    /// g^{μν} fields indexed [μ][ν].
    pub gu: [[Vec<f64>; 4]; 4],
    /// Contravariant four-velocity fields.
    pub u: [Vec<f64>; 4],
    /// Covariant four-velocity fields.
    pub u_low: [Vec<f64>; 4],
    /// ∂_t∂_t v for the ten metric components (h for the spatial block).
    pub dtt: Vec<Vec<f64>>,
    /// ∂_t u^μ.
    pub dt_u: [Vec<f64>; 4],
    pub dt_rho: Vec<f64>,
}

fn zeros4(m: usize) -> [Vec<f64>; 4] {
    std::array::from_fn(|_| vec![0.0; m])
}

impl<'a> Snapshot<'a> {
    pub fn new(
        grid: &'a Grid3,
        state: &'a FieldState,
        params: &CosmologyParams,
        opts: &RhsOptions,
    ) -> Result<Self, RhsError> {
        let m = state.points();
        let bg = closed_form(params, state.t);
        let mut gu: [[Vec<f64>; 4]; 4] = std::array::from_fn(|_| zeros4(m));
        let mut u = zeros4(m);
        let mut u_low = zeros4(m);
        let mut dt_u = zeros4(m);
        let mut dtt = vec![vec![0.0; m]; NUM_METRIC];
        let mut dt_rho = vec![0.0; m];
        for_each_point(grid, state, params, opts, |idx, inp, r| {
            let metric = inp.metric(&bg);
            // both succeed: the kernel already inverted the same point
            let inv = invert_metric(&metric).expect("metric inverted by the kernel").to_matrix();
            let kin = Kinematics::new(&metric, &inp.u).expect("velocity normalized by the kernel");
            for mu in 0..4 {
                for nu in 0..4 {
                    gu[mu][nu][idx] = inv[mu][nu];
                }
                u[mu][idx] = kin.up[mu];
                u_low[mu][idx] = kin.low[mu];
            }
            for c in 0..NUM_METRIC {
                dtt[c][idx] = r.dtt[c];
            }
            dt_rho[idx] = r.drho;
            // normalization: u_μ∂_t u^μ = −½(∂_t g_{αβ})u^αu^β
            let dg = inp.metric_derivatives(&bg);
            let mut quad = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    quad += dg[0][a][b] * kin.up[a] * kin.up[b];
                }
            }
            let mut spatial = 0.0;
            for j in 0..3 {
                dt_u[j + 1][idx] = r.du[j];
                spatial += kin.low[j + 1] * r.du[j];
            }
            dt_u[0][idx] = -(spatial + 0.5 * quad) / kin.low[0];
        })?;
        Ok(Self { grid, state, params: *params, bg, gu, u, u_low, dtt, dt_u, dt_rho })
    }

    pub fn points(&self) -> usize {
        self.state.points()
    }

    /// g^{μν} at the index pair of metric component c.
    pub fn gu_component(&self, c: usize) -> &[f64] {
        let (mu, nu) = component_indices(c);
        &self.gu[mu][nu]
    }

    /// ∂_u f = u⁰∂_t f + uᵃ∂_a f given ∂_t f and the spatial gradient of f.
    pub fn du_apply(&self, dt_f: &[f64], grad_f: &[Vec<f64>; 3]) -> Vec<f64> {
        du_apply(&self.u, dt_f, grad_f)
    }

    /// ∂_t k for metric component c, i.e. ∂_t∂_t v.
    pub fn dtt(&self, c: usize) -> &[f64] {
        &self.dtt[c]
    }

    pub fn k(&self, c: usize) -> &[f64] {
        self.state.field(state::k(c))
    }
}

/// ∂_u f = u^μ∂_μ f with `u` the contravariant four-velocity fields.
pub fn du_apply(u: &[Vec<f64>; 4], dt_f: &[f64], grad_f: &[Vec<f64>; 3]) -> Vec<f64> {
    (0..dt_f.len())
        .map(|i| u[0][i] * dt_f[i] + u[1][i] * grad_f[0][i] + u[2][i] * grad_f[1][i] + u[3][i] * grad_f[2][i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn du_is_time_derivative_for_static_observer() {
        let m = 5;
        let u = [vec![1.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]];
        let dt: Vec<f64> = (0..m).map(|i| 0.3 * i as f64 - 0.7).collect();
        let grad = [vec![2.0; m], vec![-1.0; m], vec![5.0; m]];
        let out = du_apply(&u, &dt, &grad);
        assert!(out.iter().zip(&dt).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn du_matches_componentwise_contraction() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let m = 64;
        let mut draw = || (0..m).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let u = [draw(), draw(), draw(), draw()];
        let dt = draw();
        let grad = [draw(), draw(), draw()];
        let out = du_apply(&u, &dt, &grad);
        for i in 0..m {
            let mut expect = u[0][i] * dt[i];
            for a in 0..3 {
                expect += u[a + 1][i] * grad[a][i];
            }
            assert!((out[i] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn flrw_snapshot_is_quiet() {
        let grid = Grid3::new(8).unwrap();
        let params = CosmologyParams::new(3.0, 1.0).unwrap();
        let st = FieldState::flrw(8, &params, 0.3);
        let snap = Snapshot::new(&grid, &st, &params, &RhsOptions::default()).unwrap();
        assert!(snap.u[0].iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(snap.dt_u.iter().flatten().all(|v| v.abs() < 1e-12));
        assert!(snap.dtt.iter().flatten().all(|v| v.abs() < 1e-10));
        let a2 = snap.bg.exp_omega(-2.0);
        assert!(snap.gu[1][1].iter().all(|&v| (v - a2).abs() < 1e-14));
    }
}
