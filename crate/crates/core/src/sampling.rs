//! Random near-FLRW sample points for identity checks.

use rand::Rng;

use crate::background::{closed_form, BackgroundState, CosmologyParams};
use crate::lorentz::{dt_h_from_metric, MetricPoint, PointGeometry, Tensor3};
use crate::rhs::PointInputs;
use crate::state::{self, NUM_METRIC};

pub struct RandomPoint {
    pub metric: MetricPoint,
    pub dg: Tensor3,
    pub usp: [f64; 3],
    pub bg: BackgroundState,
}

impl RandomPoint {
    /// A metric within relative distance `eps` of FLRW at a random time, with
    /// derivatives of the same relative size.
    pub fn draw<R: Rng>(rng: &mut R, eps: f64) -> Self {
        let params = CosmologyParams::new(rng.random_range(0.5..4.0), rng.random_range(0.0..4.0)).unwrap();
        let bg = closed_form(&params, rng.random_range(0.0..1.5));
        let a2 = bg.exp_omega(2.0);
        let mut r = || rng.random_range(-eps..eps);
        let mut metric = MetricPoint::flrw(bg.a);
        metric.g00 += r();
        for j in 0..3 {
            metric.g0[j] = bg.a * r();
            for k in j..3 {
                let v = a2 * r() * 0.5;
                metric.gsp[j][k] += v;
                metric.gsp[k][j] += v;
            }
        }
        let mut dg = [[[0.0; 4]; 4]; 4];
        for lam in 0..4 {
            for mu in 0..4 {
                for nu in mu..4 {
                    let scale = match (mu, nu) {
                        (0, 0) => 1.0,
                        (0, _) => bg.a,
                        _ => a2,
                    };
                    let v = scale * r();
                    dg[lam][mu][nu] = v;
                    dg[lam][nu][mu] = v;
                }
            }
        }
        for j in 1..4 {
            for k in 1..4 {
                dg[0][j][k] += 2.0 * bg.omega * metric.gsp[j - 1][k - 1];
            }
        }
        let usp = [r() / bg.a, r() / bg.a, r() / bg.a];
        Self { metric, dg, usp, bg }
    }
}

pub fn random_geometry<R: Rng>(rng: &mut R, eps: f64) -> (RandomPoint, PointGeometry) {
    let pt = RandomPoint::draw(rng, eps);
    let dt_h = dt_h_from_metric(&pt.metric, &pt.dg, &pt.bg);
    let geom = PointGeometry::new(&pt.metric, &pt.dg, &dt_h, &pt.bg).unwrap();
    (pt, geom)
}

/// Kernel inputs within `eps` of FLRW (ϱ at or above ϱ̄).
pub fn random_inputs<R: Rng>(rng: &mut R, eps: f64, params: &CosmologyParams) -> PointInputs {
    let mut r = |scale: f64| scale * rng.random_range(-eps..eps);
    let mut inp = PointInputs::default();
    inp.v[0] = -1.0 + r(1.0);
    for c in 1..NUM_METRIC {
        inp.v[c] = r(1.0);
    }
    for &(j, k) in &[(0usize, 0usize), (1, 1), (2, 2)] {
        inp.v[state::h(j, k)] += 1.0;
    }
    for c in 0..NUM_METRIC {
        inp.k[c] = r(1.0);
        for a in 0..3 {
            inp.dv[a][c] = r(1.0);
            inp.dk[a][c] = r(1.0);
        }
        for p in 0..6 {
            inp.ddv[p][c] = r(1.0);
        }
    }
    inp.rho = params.rho_bar() + r(1.0).abs();
    for a in 0..3 {
        inp.drho[a] = r(1.0);
        inp.u[a] = r(1.0);
        for j in 0..3 {
            inp.du[a][j] = r(1.0);
        }
    }
    inp
}
