//! Right-hand sides of the decomposed modified system in first-order form.
//!
//! The metric components v ∈ {g₀₀, g₀ⱼ, h_{jk}} satisfy □̂_g v = RHS_v, from
//! which ∂_t∂_t v = (RHS_v − 2g⁰ᵃ∂_a∂_t v − gᵃᵇ∂_a∂_b v)/g⁰⁰. The fluid obeys
//! u^α∂_α(ϱ − ϱ̄) = Δ and u^α∂_α uʲ = −2ωu⁰uʲ − u⁰Δʲ₀₀ + Δʲ.

use thiserror::Error;

use crate::background::{closed_form, BackgroundState, CosmologyParams};
use crate::grid::Grid3;
use crate::lorentz::{
    delta_a, delta_c, delta_christoffel, gauge_residual, invert_metric, solve_u0, spatial_trace_gamma, AlgebraError,
    MetricPoint, PointGeometry, Tensor3, Tensor4,
};
use crate::state::{self, FieldRates, FieldState, NUM_FIELDS, NUM_METRIC, SYM_PAIRS};
use num_complex::Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RhsError {
    #[error("{kind} at grid point {index}")]
    Algebra { kind: AlgebraError, index: usize },
    #[error("|g⁰⁰| = {value:.3e} below floor {floor} at grid point {index}")]
    DegenerateG00Upper { value: f64, floor: f64, index: usize },
    #[error("state has {found} points per axis, grid has {expected}")]
    GridMismatch { expected: usize, found: usize },
}

impl RhsError {
    pub fn index(&self) -> Option<usize> {
        match self {
            RhsError::Algebra { index, .. } | RhsError::DegenerateG00Upper { index, .. } => Some(*index),
            RhsError::GridMismatch { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RhsOptions {
    /// Smallest admissible |g⁰⁰| when isolating ∂_t∂_t v.
    pub g00_upper_floor: f64,
}

impl Default for RhsOptions {
    fn default() -> Self {
        Self { g00_upper_floor: 0.1 }
    }
}

/// Everything the pointwise kernel reads at one grid point. Metric
/// components are indexed 0..10 as in the state layout; `ddv` runs over
/// [`SYM_PAIRS`]; `du[a][j] = ∂_a uʲ`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointInputs {
    pub v: [f64; NUM_METRIC],
    pub k: [f64; NUM_METRIC],
    pub dv: [[f64; NUM_METRIC]; 3],
    pub ddv: [[f64; NUM_METRIC]; 6],
    pub dk: [[f64; NUM_METRIC]; 3],
    pub rho: f64,
    pub drho: [f64; 3],
    pub u: [f64; 3],
    pub du: [[f64; 3]; 3],
}

impl PointInputs {
    pub fn metric(&self, bg: &BackgroundState) -> MetricPoint {
        let e2o = bg.exp_omega(2.0);
        let mut m = MetricPoint { g00: self.v[0], g0: [self.v[1], self.v[2], self.v[3]], gsp: [[0.0; 3]; 3] };
        for j in 0..3 {
            for k in 0..3 {
                m.gsp[j][k] = e2o * self.v[state::h(j, k)];
            }
        }
        m
    }

    /// Full ∂_σ∂_λ g_{μν} except ∂_t∂_t, assembled from the evolved variables.
    pub fn metric_second_derivatives(&self, bg: &BackgroundState) -> Tensor4 {
        let e2o = bg.exp_omega(2.0);
        let om = bg.omega;
        let mut ddg = [[[[0.0; 4]; 4]; 4]; 4];
        for c in 0..NUM_METRIC {
            let (mu, nu) = component_indices(c);
            let spatial = c >= 4;
            let scale = if spatial { e2o } else { 1.0 };
            let mut set = |s: usize, l: usize, v: f64| {
                ddg[s][l][mu][nu] = v;
                ddg[s][l][nu][mu] = v;
                ddg[l][s][mu][nu] = v;
                ddg[l][s][nu][mu] = v;
            };
            for (p, &(a, b)) in SYM_PAIRS.iter().enumerate() {
                set(a + 1, b + 1, scale * self.ddv[p][c]);
            }
            for a in 0..3 {
                let mixed = if spatial { e2o * (self.dk[a][c] + 2.0 * om * self.dv[a][c]) } else { self.dk[a][c] };
                set(0, a + 1, mixed);
            }
        }
        ddg
    }

    /// ∂_λ g_{μν} with ∂_t g_{jk} = e^{2Ω}(k_{jk} + 2ωh_{jk}).
    pub fn metric_derivatives(&self, bg: &BackgroundState) -> Tensor3 {
        let e2o = bg.exp_omega(2.0);
        let mut dg = [[[0.0; 4]; 4]; 4];
        let mut fill = |lam: usize, c: usize, value: f64| {
            let (mu, nu) = component_indices(c);
            dg[lam][mu][nu] = value;
            dg[lam][nu][mu] = value;
        };
        for c in 0..NUM_METRIC {
            let spatial = c >= 4;
            let t_value = if spatial { e2o * (self.k[c] + 2.0 * bg.omega * self.v[c]) } else { self.k[c] };
            fill(0, c, t_value);
            for a in 0..3 {
                let value = if spatial { e2o * self.dv[a][c] } else { self.dv[a][c] };
                fill(a + 1, c, value);
            }
        }
        dg
    }

    pub fn dt_h(&self) -> [[f64; 3]; 3] {
        std::array::from_fn(|j| std::array::from_fn(|k| self.k[state::h(j, k)]))
    }
}

/// Spacetime index pair (μ, ν) of metric component `c`.
pub const fn component_indices(c: usize) -> (usize, usize) {
    match c {
        0 => (0, 0),
        1..=3 => (0, c),
        _ => {
            let (j, k) = SYM_PAIRS[c - 4];
            (j + 1, k + 1)
        }
    }
}

/// Rates produced by the pointwise kernel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointRates {
    /// RHS_v of □̂_g v = RHS_v.
    pub wave: [f64; NUM_METRIC],
    /// ∂_t∂_t v.
    pub dtt: [f64; NUM_METRIC],
    pub drho: f64,
    pub du: [f64; 3],
}

/// Fluid four-velocity at a point, contravariant and covariant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub up: [f64; 4],
    pub low: [f64; 4],
}

impl Kinematics {
    pub fn new(m: &MetricPoint, usp: &[f64; 3]) -> Result<Self, AlgebraError> {
        let u0 = solve_u0(m, usp)?;
        let up = [u0, usp[0], usp[1], usp[2]];
        let g = m.to_matrix();
        let low = std::array::from_fn(|mu| (0..4).map(|nu| g[mu][nu] * up[nu]).sum());
        Ok(Self { up, low })
    }
}

/// Wave-equation sources RHS₀₀, RHS₀ⱼ, RHS_{jk}, in metric-component order.
pub fn wave_sources(
    inp: &PointInputs,
    geom: &PointGeometry,
    kin: &Kinematics,
    params: &CosmologyParams,
    bg: &BackgroundState,
) -> [f64; NUM_METRIC] {
    let h = params.hubble();
    let om = bg.omega;
    let rho_bar = params.rho_bar();
    let em3 = bg.exp_omega(-3.0);
    let em5 = bg.exp_omega(-5.0);
    let em2 = bg.exp_omega(-2.0);
    let rho = inp.rho;
    let da = delta_a(geom);
    let (c00, c0) = delta_c(geom);
    let trg = spatial_trace_gamma(geom);
    let gu = &geom.gu;
    let (u_0, ul) = (kin.low[0], kin.low);

    let mut out = [0.0; NUM_METRIC];
    let g00p1 = inp.v[0] + 1.0;
    let k00 = inp.k[0];
    let delta00 = -g00p1 * em3 * rho_bar - em3 * (rho - rho_bar) + 2.0 * em3 * rho * (1.0 - u_0 * u_0)
        - em3 * rho * g00p1
        + 2.0 * (da[0][0] + c00)
        + 5.0 * (om - h) * k00
        + 6.0 * (om * om - h * h) * g00p1;
    out[0] = 5.0 * h * k00 + 6.0 * h * h * g00p1 + delta00;

    for j in 0..3 {
        let g0j = inp.v[state::g0(j)];
        let k0j = inp.k[state::g0(j)];
        // g₀ⱼ coefficient 3ω̇ + 8(ω² − H²), checked against the raw equations
        let delta0j = -1.5 * em3 * rho_bar * g0j - 2.0 * em3 * rho * u_0 * ul[j + 1] - em3 * rho * g0j
            + 8.0 * (om * om - h * h) * g0j
            + 3.0 * (om - h) * k0j
            - 2.0 * (om - h) * trg[j]
            + 2.0 * (da[0][j + 1] + c0[j]);
        out[state::g0(j)] = 3.0 * h * k0j + 2.0 * h * h * g0j - 2.0 * h * trg[j] + delta0j;
    }

    for &(j, k) in &SYM_PAIRS {
        let c = state::h(j, k);
        let hjk = inp.v[c];
        let kjk = inp.k[c];
        let mut shift_transport = 0.0;
        for a in 0..3 {
            shift_transport += gu[0][a + 1] * inp.dv[a][c];
        }
        let deltajk = rho_bar * em3 * (gu[0][0] + 1.0) * hjk
            - em3 * (rho - rho_bar) * hjk
            - 2.0 * em5 * rho * ul[j + 1] * ul[k + 1]
            + 3.0 * (om - h) * kjk
            - 4.0 * om * shift_transport
            + 2.0 * em2 * da[j + 1][k + 1];
        out[c] = 3.0 * h * kjk + deltajk;
    }
    out
}

/// ∂_t∂_t v = (RHS_v − 2g⁰ᵃ∂_a k_v − gᵃᵇ∂_a∂_b v)/g⁰⁰ for all ten components.
pub fn second_time_derivatives(
    inp: &PointInputs,
    geom: &PointGeometry,
    wave: &[f64; NUM_METRIC],
    floor: f64,
) -> Result<[f64; NUM_METRIC], f64> {
    let gu = &geom.gu;
    if !(gu[0][0].abs() >= floor) {
        return Err(gu[0][0]);
    }
    let mut out = [0.0; NUM_METRIC];
    for c in 0..NUM_METRIC {
        let mut mixed = 0.0;
        for a in 0..3 {
            mixed += 2.0 * gu[0][a + 1] * inp.dk[a][c];
        }
        let mut spatial = 0.0;
        for (p, &(a, b)) in SYM_PAIRS.iter().enumerate() {
            let mult = if a == b { 1.0 } else { 2.0 };
            spatial += mult * gu[a + 1][b + 1] * inp.ddv[p][c];
        }
        out[c] = (wave[c] - mixed - spatial) / gu[0][0];
    }
    Ok(out)
}

/// (∂_t ϱ, ∂_t uʲ) from u^α∂_α(ϱ − ϱ̄) = Δ and the velocity equation.
pub fn fluid_rates(inp: &PointInputs, geom: &PointGeometry, kin: &Kinematics, bg: &BackgroundState) -> (f64, [f64; 3]) {
    let om = bg.omega;
    let rho = inp.rho;
    let t = delta_christoffel(geom).to_tensor();
    let u = &kin.up;
    let ul = &kin.low;
    let u0 = u[0];
    let u_0 = ul[0];

    let mut delta_j = [0.0; 3];
    for j in 1..4 {
        let mut acc = -u0 * (u0 - 1.0) * t[j][0][0];
        for a in 1..4 {
            acc -= 2.0 * u0 * u[a] * t[j][0][a];
            for b in 1..4 {
                acc -= u[a] * u[b] * t[j][a][b];
            }
        }
        delta_j[j - 1] = acc;
    }

    let mut div = 0.0;
    let mut advect = 0.0;
    let mut speed = 0.0;
    let mut accel = 0.0;
    let mut corr = 0.0;
    for a in 0..3 {
        div += inp.du[a][a];
        speed += ul[a + 1] * u[a + 1];
        accel += ul[a + 1] * t[a + 1][0][0];
        corr += ul[a + 1] * delta_j[a];
        for b in 0..3 {
            advect += ul[a + 1] * u[b + 1] * inp.du[b][a];
        }
    }
    let mut trace = 0.0;
    for al in 0..4 {
        for be in 0..4 {
            trace += t[al][al][be] * u[be];
        }
    }
    let mut dtg_quad = inp.k[0] * u0 * u0;
    for a in 0..3 {
        dtg_quad += 2.0 * inp.k[state::g0(a)] * u[a + 1] * u0;
        for b in 0..3 {
            dtg_quad += (geom.s[a + 1][b + 1] + 2.0 * om * geom.g[a + 1][b + 1]) * u[a + 1] * u[b + 1];
        }
    }
    let delta = -rho * div - rho / (u_0 * u0) * advect - 2.0 * om * rho / u_0 * speed - rho / u_0 * accel
        + rho / (u_0 * u0) * corr
        - rho * trace
        + rho / (2.0 * u_0) * dtg_quad;

    let mut transport_rho = 0.0;
    for a in 0..3 {
        transport_rho += u[a + 1] * inp.drho[a];
    }
    let drho = (delta - transport_rho) / u0;
    let mut du = [0.0; 3];
    for j in 0..3 {
        let mut transport = 0.0;
        for a in 0..3 {
            transport += u[a + 1] * inp.du[a][j];
        }
        du[j] = (-transport - 2.0 * om * u0 * u[j + 1] - u0 * t[j + 1][0][0] + delta_j[j]) / u0;
    }
    (drho, du)
}

/// Full pointwise evaluation.
pub fn point_rates(
    inp: &PointInputs,
    params: &CosmologyParams,
    bg: &BackgroundState,
    opts: &RhsOptions,
) -> Result<PointRates, PointFailure> {
    let m = inp.metric(bg);
    let inv = invert_metric(&m).map_err(PointFailure::Algebra)?;
    let dg = inp.metric_derivatives(bg);
    let geom = PointGeometry::with_inverse(&m, &inv, &dg, &inp.dt_h(), bg);
    let kin = Kinematics::new(&m, &inp.u).map_err(PointFailure::Algebra)?;
    let wave = wave_sources(inp, &geom, &kin, params, bg);
    let dtt = second_time_derivatives(inp, &geom, &wave, opts.g00_upper_floor).map_err(PointFailure::G00Upper)?;
    let (drho, du) = fluid_rates(inp, &geom, &kin, bg);
    Ok(PointRates { wave, dtt, drho, du })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointFailure {
    Algebra(AlgebraError),
    G00Upper(f64),
}

impl PointFailure {
    fn at(self, index: usize, floor: f64) -> RhsError {
        match self {
            PointFailure::Algebra(kind) => RhsError::Algebra { kind, index },
            PointFailure::G00Upper(value) => RhsError::DegenerateG00Upper { value, floor, index },
        }
    }
}

/// Spectral spatial derivatives of every field the kernel needs.
pub struct SpatialDerivatives {
    dv: Vec<Vec<f64>>,
    ddv: Vec<Vec<f64>>,
    dk: Vec<Vec<f64>>,
    drho: Vec<Vec<f64>>,
    du: Vec<Vec<f64>>,
}

const AXES: [&[usize]; 3] = [&[0], &[1], &[2]];
const PAIR_AXES: [&[usize]; 6] = [&[0, 0], &[0, 1], &[0, 2], &[1, 1], &[1, 2], &[2, 2]];

impl SpatialDerivatives {
    pub fn compute(grid: &Grid3, st: &FieldState) -> Self {
        let views: Vec<&[f64]> = (0..NUM_FIELDS).map(|f| st.field(f)).collect();
        let spectra = grid.forward_many(&views);
        let spectra = &spectra;
        let requests = |fields: &[usize], ops: &[&'static [usize]]| {
            let list: Vec<(&[Complex64], &[usize])> =
                fields.iter().flat_map(|&f| ops.iter().map(move |axes| (spectra[f].as_slice(), *axes))).collect();
            grid.derivative_fields_many(&list)
        };
        let metric: Vec<usize> = (0..NUM_METRIC).collect();
        let rates: Vec<usize> = (0..NUM_METRIC).map(state::k).collect();
        Self {
            dv: requests(&metric, &AXES),
            ddv: requests(&metric, &PAIR_AXES),
            dk: requests(&rates, &AXES),
            drho: requests(&[state::RHO], &AXES),
            du: requests(&[state::u(0), state::u(1), state::u(2)], &AXES),
        }
    }

    /// ∂_a of metric component c.
    pub fn dv(&self, c: usize, a: usize) -> &[f64] {
        &self.dv[3 * c + a]
    }

    /// ∂_a∂_b of metric component c, with p the pair index of (a, b).
    pub fn ddv(&self, c: usize, p: usize) -> &[f64] {
        &self.ddv[6 * c + p]
    }

    pub fn dk(&self, c: usize, a: usize) -> &[f64] {
        &self.dk[3 * c + a]
    }

    pub fn gather(&self, st: &FieldState, idx: usize) -> PointInputs {
        let vals = st.at(idx);
        let mut inp = PointInputs {
            rho: vals[state::RHO],
            u: [vals[state::u(0)], vals[state::u(1)], vals[state::u(2)]],
            ..Default::default()
        };
        for c in 0..NUM_METRIC {
            inp.v[c] = vals[c];
            inp.k[c] = vals[state::k(c)];
            for a in 0..3 {
                inp.dv[a][c] = self.dv[3 * c + a][idx];
                inp.dk[a][c] = self.dk[3 * c + a][idx];
            }
            for p in 0..6 {
                inp.ddv[p][c] = self.ddv[6 * c + p][idx];
            }
        }
        for a in 0..3 {
            inp.drho[a] = self.drho[a][idx];
            for j in 0..3 {
                inp.du[a][j] = self.du[3 * j + a][idx];
            }
        }
        inp
    }
}

fn check_grid(grid: &Grid3, st: &FieldState) -> Result<(), RhsError> {
    if grid.n() != st.n() {
        return Err(RhsError::GridMismatch { expected: grid.n(), found: st.n() });
    }
    Ok(())
}

/// Runs the pointwise kernel over the grid, handing each result to `sink`.
pub fn for_each_point(
    grid: &Grid3,
    st: &FieldState,
    params: &CosmologyParams,
    opts: &RhsOptions,
    mut sink: impl FnMut(usize, &PointInputs, &PointRates),
) -> Result<(), RhsError> {
    check_grid(grid, st)?;
    let bg = closed_form(params, st.t);
    let derivs = SpatialDerivatives::compute(grid, st);
    for idx in 0..st.points() {
        let inp = derivs.gather(st, idx);
        let r = point_rates(&inp, params, &bg, opts).map_err(|e| e.at(idx, opts.g00_upper_floor))?;
        sink(idx, &inp, &r);
    }
    Ok(())
}

/// The ten wave-equation source fields RHS_v.
pub fn wave_rhs(grid: &Grid3, st: &FieldState, params: &CosmologyParams) -> Result<Vec<Vec<f64>>, RhsError> {
    let mut out = vec![vec![0.0; st.points()]; NUM_METRIC];
    for_each_point(grid, st, params, &RhsOptions { g00_upper_floor: 0.0 }, |idx, _, r| {
        for c in 0..NUM_METRIC {
            out[c][idx] = r.wave[c];
        }
    })?;
    Ok(out)
}

/// ∂_t∂_t v for the ten metric components (not dealiased).
pub fn second_time_derivative(
    grid: &Grid3,
    st: &FieldState,
    params: &CosmologyParams,
    opts: &RhsOptions,
) -> Result<Vec<Vec<f64>>, RhsError> {
    let mut out = vec![vec![0.0; st.points()]; NUM_METRIC];
    for_each_point(grid, st, params, opts, |idx, _, r| {
        for c in 0..NUM_METRIC {
            out[c][idx] = r.dtt[c];
        }
    })?;
    Ok(out)
}

/// (∂_t ϱ, ∂_t uʲ) fields (not dealiased).
pub fn fluid_rhs(
    grid: &Grid3,
    st: &FieldState,
    params: &CosmologyParams,
) -> Result<(Vec<f64>, [Vec<f64>; 3]), RhsError> {
    let m = st.points();
    let mut drho = vec![0.0; m];
    let mut du = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
    for_each_point(grid, st, params, &RhsOptions { g00_upper_floor: 0.0 }, |idx, _, r| {
        drho[idx] = r.drho;
        for j in 0..3 {
            du[j][idx] = r.du[j];
        }
    })?;
    Ok((drho, du))
}

/// Time derivative of the whole state: ∂_t v = k copied, ∂_t k, ∂_t ϱ and
/// ∂_t uʲ computed pointwise and then dealiased once.
pub fn assemble_rates(
    grid: &Grid3,
    st: &FieldState,
    params: &CosmologyParams,
    opts: &RhsOptions,
) -> Result<FieldRates, RhsError> {
    let m = st.points();
    let mut computed = vec![vec![0.0; m]; NUM_METRIC + 4];
    for_each_point(grid, st, params, opts, |idx, _, r| {
        for c in 0..NUM_METRIC {
            computed[c][idx] = r.dtt[c];
        }
        computed[NUM_METRIC][idx] = r.drho;
        for j in 0..3 {
            computed[NUM_METRIC + 1 + j][idx] = r.du[j];
        }
    })?;
    grid.dealias_many(&mut computed);
    let mut rates = FieldRates::zeros(st.n());
    for c in 0..NUM_METRIC {
        rates.field_mut(c).copy_from_slice(st.field(state::k(c)));
        rates.field_mut(state::k(c)).copy_from_slice(&computed[c]);
    }
    rates.field_mut(state::RHO).copy_from_slice(&computed[NUM_METRIC]);
    for j in 0..3 {
        rates.field_mut(state::u(j)).copy_from_slice(&computed[NUM_METRIC + 1 + j]);
    }
    Ok(rates)
}

/// max over the grid and μ of |Γ^μ − 3ωδ^μ₀|.
pub fn gauge_residual_max(grid: &Grid3, st: &FieldState, params: &CosmologyParams) -> Result<f64, RhsError> {
    check_grid(grid, st)?;
    let bg = closed_form(params, st.t);
    let derivs = SpatialDerivatives::compute(grid, st);
    let mut worst = 0.0f64;
    for idx in 0..st.points() {
        let inp = derivs.gather(st, idx);
        let m = inp.metric(&bg);
        let geom = PointGeometry::new(&m, &inp.metric_derivatives(&bg), &inp.dt_h(), &bg)
            .map_err(|kind| RhsError::Algebra { kind, index: idx })?;
        for r in gauge_residual(&geom) {
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}
