use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dust_einstein::background::{closed_form, CosmologyParams};
use dust_einstein::elliptic::identity_suite;
use dust_einstein::grid::Grid3;
use dust_einstein::initial_data::{construct_modified_data, perturbed_flrw, random_state, PerturbationSpec};
use dust_einstein::lorentz::{
    delta_a, delta_c, delta_christoffel, gauge_residual, invert_metric, solve_u0, spatial_trace_gamma, PointGeometry,
};
use dust_einstein::rhs::{component_indices, gauge_residual_max, point_rates, Kinematics, RhsOptions};
use dust_einstein::sampling::{random_geometry, random_inputs, RandomPoint};
use dust_einstein::snapshot::Snapshot;
use dust_einstein::state::NUM_METRIC;
use dust_einstein_reference as reference;

use super::Check;

const POINTS: usize = 10_000;
const FIELD_CONFIGS: u64 = 20;
const TOLERANCE: f64 = 1e-10;
/// Relative distance of the random points from FLRW.
const EPS: f64 = 0.3;

/// Largest |ours − reference| relative to the reference object's max norm.
#[derive(Default)]
struct Worst(f64);

impl Worst {
    fn update(&mut self, pairs: impl IntoIterator<Item = (f64, f64)>, scale: f64) {
        let scale = scale.max(f64::MIN_POSITIVE);
        for (ours, reference) in pairs {
            let r = (ours - reference).abs() / scale;
            self.0 = if r.is_nan() { f64::NAN } else { self.0.max(r) };
        }
    }
}

fn max_abs<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    values.into_iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn check(name: &str, worst: Worst) -> Check {
    Check::at_most(2, name, worst.0, TOLERANCE, format!("{POINTS} random points, max relative residual"))
}

fn inverse_metric(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = Worst::default();
    for _ in 0..POINTS {
        let pt = RandomPoint::draw(rng, EPS);
        let ours = invert_metric(&pt.metric).expect("Lorentzian").to_matrix();
        let direct = reference::inverse4(&pt.metric.to_matrix()).expect("invertible");
        worst.update(
            ours.iter().flatten().copied().zip(direct.iter().flatten().copied()),
            max_abs(direct.iter().flatten()),
        );
    }
    check("inverse metric formulas", worst)
}

fn velocity_normalization(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = Worst::default();
    for _ in 0..POINTS {
        let pt = RandomPoint::draw(rng, EPS);
        let u0 = solve_u0(&pt.metric, &pt.usp).expect("timelike");
        let u = [u0, pt.usp[0], pt.usp[1], pt.usp[2]];
        let g = pt.metric.to_matrix();
        let norm: f64 = (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).map(|(a, b)| g[a][b] * u[a] * u[b]).sum();
        worst.update([(norm, -1.0)], u0 * u0);
    }
    check("velocity normalization g(u, u) = −1", worst)
}

fn christoffel(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = Worst::default();
    for _ in 0..POINTS {
        let (pt, p) = random_geometry(rng, EPS);
        let direct = reference::christoffel_second(&pt.metric.to_matrix(), &pt.dg).expect("invertible");
        let delta = delta_christoffel(&p).to_tensor();
        let scale = max_abs(direct.iter().flatten().flatten());
        let mut pairs = Vec::with_capacity(64);
        for al in 0..4 {
            for mu in 0..4 {
                for nu in 0..4 {
                    let mut principal = 0.0;
                    if al > 0 && ((mu == 0 && nu == al) || (nu == 0 && mu == al)) {
                        principal = p.omega;
                    }
                    if al == 0 && mu > 0 && nu > 0 {
                        principal = p.omega * p.g[mu][nu];
                    }
                    pairs.push((principal + delta[al][mu][nu], direct[al][mu][nu]));
                }
            }
        }
        worst.update(pairs, scale);
    }
    check("Christoffel decomposition", worst)
}

fn gauge(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = Worst::default();
    for _ in 0..POINTS {
        let (pt, p) = random_geometry(rng, EPS);
        let direct = reference::contracted_christoffel(&pt.metric.to_matrix(), &pt.dg).expect("invertible");
        let ours = gauge_residual(&p);
        let expect = std::array::from_fn::<f64, 4, _>(|mu| direct[mu] - if mu == 0 { 3.0 * p.omega } else { 0.0 });
        worst.update(ours.into_iter().zip(expect), max_abs(&direct));
    }
    check("gauge residual Γ^μ − 3ωδ^μ₀", worst)
}

fn a_tensor(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = Worst::default();
    for _ in 0..POINTS {
        let (pt, p) = random_geometry(rng, EPS);
        let g = pt.metric.to_matrix();
        let a = reference::a_tensor(&g, &pt.dg).expect("invertible");
        let da = delta_a(&p);
        let (gu, om, dg) = (p.gu, p.omega, &pt.dg);
        let mut tr_dt = 0.0;
        let mut div = 0.0;
        for i in 1..4 {
            for j in 1..4 {
                tr_dt += gu[i][j] * dg[0][i][j];
                div += gu[i][j] * dg[i][0][j];
            }
        }
        let trg = spatial_trace_gamma(&p);
        let mut pairs = vec![(3.0 * om * om - om * tr_dt + 2.0 * om * div + da[0][0], a[0][0])];
        for j in 1..4 {
            let pj =
                2.0 * om * gu[0][0] * dg[0][0][j] - 2.0 * om * om * gu[0][0] * g[0][j] - om * gu[0][0] * dg[j][0][0]
                    + om * trg[j - 1];
            pairs.push((pj + da[0][j], a[0][j]));
            for k in 1..4 {
                let pjk = 2.0 * om * gu[0][0] * dg[0][j][k] - 2.0 * om * om * gu[0][0] * g[j][k];
                pairs.push((pjk + da[j][k], a[j][k]));
            }
        }
        worst.update(pairs, max_abs(a.iter().flatten()));
    }
    check("A-tensor decomposition", worst)
}

fn gauge_coupled(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = Worst::default();
    for _ in 0..POINTS {
        let (pt, p): (RandomPoint, PointGeometry) = random_geometry(rng, EPS);
        let g = pt.metric.to_matrix();
        let a = reference::a_tensor(&g, &pt.dg).expect("invertible");
        let up = reference::contracted_christoffel(&g, &pt.dg).expect("invertible");
        let da = delta_a(&p);
        let (c00, c0) = delta_c(&p);
        let om = p.omega;
        let lhs00 = a[0][0] + 2.0 * om * up[0] - 6.0 * om * om;
        let rhs00 = om * pt.dg[0][0][0] + 3.0 * om * om * (g[0][0] + 1.0) + 3.0 * om * om * g[0][0] + da[0][0] + c00;
        let mut pairs = vec![(rhs00, lhs00)];
        let trg = spatial_trace_gamma(&p);
        let mut scale = lhs00.abs();
        for j in 1..4 {
            let lower_j: f64 = (0..4).map(|l| g[j][l] * up[l]).sum();
            let lhs = a[0][j] + 2.0 * om * (3.0 * om * g[0][j] - lower_j);
            let rhs = 4.0 * om * om * g[0][j] - om * trg[j - 1] + da[0][j] + c0[j - 1];
            scale = scale.max(lhs.abs());
            pairs.push((rhs, lhs));
        }
        worst.update(pairs, scale.max(max_abs(a.iter().flatten())));
    }
    check("gauge-coupled decomposition", worst)
}

fn random_params(rng: &mut ChaCha8Rng) -> CosmologyParams {
    CosmologyParams::new(rng.random_range(0.5..4.0), rng.random_range(0.0..3.0)).expect("valid")
}

fn metric_accelerations(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = Worst::default();
    for _ in 0..POINTS {
        let params = random_params(rng);
        let bg = closed_form(&params, rng.random_range(0.0..1.5));
        let inp = random_inputs(rng, 0.2, &params);
        let ours = point_rates(&inp, &params, &bg, &RhsOptions::default()).expect("near FLRW");
        let m = inp.metric(&bg);
        let kin = Kinematics::new(&m, &inp.u).expect("timelike");
        let acc = reference::solve_metric_acceleration(
            &m.to_matrix(),
            &inp.metric_derivatives(&bg),
            &inp.metric_second_derivatives(&bg),
            bg.omega,
            bg.omega_dot,
            params.lambda(),
            bg.exp_omega(-3.0) * inp.rho,
            &kin.up,
        )
        .expect("solvable");
        let e2o = bg.exp_omega(2.0);
        let expect: Vec<f64> = (0..NUM_METRIC)
            .map(|c| {
                let (mu, nu) = component_indices(c);
                if c >= 4 {
                    acc[mu][nu] / e2o
                        - 4.0 * bg.omega * inp.k[c]
                        - (4.0 * bg.omega * bg.omega + 2.0 * bg.omega_dot) * inp.v[c]
                } else {
                    acc[mu][nu]
                }
            })
            .collect();
        let scale = max_abs(&expect);
        worst.update(ours.dtt.iter().copied().zip(expect), scale);
    }
    check("metric accelerations vs modified Einstein equations", worst)
}

fn dust_rates(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = Worst::default();
    for _ in 0..POINTS {
        let params = random_params(rng);
        let bg = closed_form(&params, rng.random_range(0.0..1.5));
        let inp = random_inputs(rng, 0.2, &params);
        let ours = point_rates(&inp, &params, &bg, &RhsOptions::default()).expect("near FLRW");
        let g = inp.metric(&bg).to_matrix();
        let em3 = bg.exp_omega(-3.0);
        let grad = inp.drho.map(|d| em3 * d);
        let (dt_rho, dt_u) =
            reference::dust_rates(&g, &inp.metric_derivatives(&bg), em3 * inp.rho, &grad, &inp.u, &inp.du)
                .expect("solvable");
        let (transport, dilution) = (bg.exp_omega(3.0) * dt_rho, 3.0 * bg.omega * inp.rho);
        // the two terms nearly cancel near FLRW, so scale by the larger one
        worst.update([(ours.drho, transport + dilution)], transport.abs().max(dilution.abs()));
        worst.update(ours.du.into_iter().zip(dt_u), max_abs(&dt_u));
    }
    check("dust rates vs ∇_μ T^μν = 0", worst)
}

/// ∂_tt and elliptic identities on random band-limited states at n = 32.
fn field_identities() -> Vec<Check> {
    let grid = Grid3::new(32).expect("valid size");
    let mut dtt_worst = 0.0f64;
    let mut ell_worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for seed in 0..FIELD_CONFIGS {
        let params = random_params(&mut rng);
        let t = rng.random_range(0.0..1.5);
        let st = random_state(&grid, &params, t, 0.05, seed, 4);
        match Snapshot::new(&grid, &st, &params, &RhsOptions::default()) {
            Ok(snap) => {
                let (dtt, ell) = identity_suite(&snap);
                dtt_worst = dtt_worst.max(dtt);
                ell_worst = ell_worst.max(ell);
            }
            Err(e) => return vec![Check::failed(2, "field identities", e.to_string())],
        }
    }
    let detail = format!("{FIELD_CONFIGS} random states, n = 32");
    vec![
        Check::at_most(2, "∂_tt identity", dtt_worst, TOLERANCE, detail.clone()),
        Check::at_most(2, "elliptic identity", ell_worst, TOLERANCE, detail),
    ]
}

pub fn algebraic_suite() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut checks = vec![
        inverse_metric(&mut rng),
        velocity_normalization(&mut rng),
        christoffel(&mut rng),
        gauge(&mut rng),
        a_tensor(&mut rng),
        gauge_coupled(&mut rng),
        metric_accelerations(&mut rng),
        dust_rates(&mut rng),
    ];
    checks.extend(field_identities());
    checks
}

/// Gauge residual of constructed initial data for ten random perturbed-FLRW
/// data sets.
pub fn initial_gauge() -> Vec<Check> {
    let grid = Grid3::new(16).expect("valid size");
    let params = CosmologyParams::new(3.0, 1.0).expect("valid");
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let spec = PerturbationSpec::random(1e-3, seed);
        let st = perturbed_flrw(&grid, &params, &spec)
            .map_err(|e| e.to_string())
            .and_then(|geo| construct_modified_data(&grid, &geo, &params).map_err(|e| e.to_string()))
            .and_then(|st| gauge_residual_max(&grid, &st, &params).map_err(|e| e.to_string()));
        match st {
            Ok(r) => worst = worst.max(r),
            Err(e) => return vec![Check::failed(4, "gauge residual at t = 0", e)],
        }
    }
    vec![Check::at_most(4, "gauge residual at t = 0", worst, 1e-10, "10 data sets, amplitude 1e-3, n = 16".into())]
}
