//! Initial data for the modified system: geometric data (g̊, K̊, ρ̊, ů) on the
//! t = 0 slice, the gauge-consistent transversal derivatives, perturbed-FLRW
//! families and the Gauss–Codazzi constraint residuals.

use std::f64::consts::TAU;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::background::{closed_form, CosmologyParams};
use crate::grid::Grid3;
use crate::lorentz::{invert_spatial, AlgebraError, Mat3};
use crate::state::{self, pair_index, FieldState, NUM_FIELDS, SYM_PAIRS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitialDataError {
    #[error("spatial metric not positive definite at grid point {index}: {kind}")]
    NotLorentzian { kind: AlgebraError, index: usize },
    #[error("amplitude {amplitude} breaks positive definiteness of the spatial metric at grid point {index}")]
    AmplitudeTooLarge { amplitude: f64, index: usize },
    #[error("wavevector {wavevector:?} lies outside the dealiasing band of an n = {n} grid")]
    ModeOutsideBand { wavevector: [i64; 3], n: usize },
    #[error("field arrays have {found} points, grid has {expected}")]
    GridMismatch { expected: usize, found: usize },
}

/// Geometric data on the initial slice; symmetric fields are stored over
/// the six unordered pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricData {
    pub gsp0: [Vec<f64>; 6],
    pub k0: [Vec<f64>; 6],
    pub rho0: Vec<f64>,
    pub usp0: [Vec<f64>; 3],
}

impl GeometricData {
    /// Homogeneous FLRW data: g̊ = δ, K̊ = ω(0)δ, ρ̊ = ϱ̄, ů = 0.
    pub fn flrw(grid: &Grid3, params: &CosmologyParams) -> Self {
        let m = grid.len();
        let omega0 = closed_form(params, 0.0).omega;
        let diag = |v: f64| -> [Vec<f64>; 6] {
            std::array::from_fn(|p| {
                let (j, k) = SYM_PAIRS[p];
                vec![if j == k { v } else { 0.0 }; m]
            })
        };
        Self {
            gsp0: diag(1.0),
            k0: diag(omega0),
            rho0: vec![params.rho_bar(); m],
            usp0: std::array::from_fn(|_| vec![0.0; m]),
        }
    }

    pub fn points(&self) -> usize {
        self.rho0.len()
    }

    fn metric_at(&self, idx: usize) -> Mat3 {
        std::array::from_fn(|j| std::array::from_fn(|k| self.gsp0[pair_index(j, k)][idx]))
    }

    fn curvature_at(&self, idx: usize) -> Mat3 {
        std::array::from_fn(|j| std::array::from_fn(|k| self.k0[pair_index(j, k)][idx]))
    }

    fn check(&self, grid: &Grid3) -> Result<(), InitialDataError> {
        let m = grid.len();
        let all = self.gsp0.iter().chain(&self.k0).chain(std::iter::once(&self.rho0)).chain(&self.usp0);
        for f in all {
            if f.len() != m {
                return Err(InitialDataError::GridMismatch { expected: m, found: f.len() });
            }
        }
        Ok(())
    }
}

const AXES: [&[usize]; 3] = [&[0], &[1], &[2]];

/// ∂_a of each symmetric pair field, indexed [pair][a].
fn pair_gradients(grid: &Grid3, fields: &[Vec<f64>; 6]) -> [[Vec<f64>; 3]; 6] {
    std::array::from_fn(|p| {
        let mut d = grid.derivative_fields(&grid.forward(&fields[p]), &AXES).into_iter();
        std::array::from_fn(|_| d.next().unwrap())
    })
}

/// Modified-system state at t = 0: g₀₀ = −1, g₀ⱼ = 0, h = g̊, k_{jk} = 2K̊ − 2ω(0)h,
/// ∂_t g₀₀ = 2(3ω(0) − g̊ᵃᵇK̊_{ab}), ∂_t g₀ⱼ = g̊ᵃᵇ(∂_a g̊_{bj} − ½∂_j g̊_{ab}), ϱ = ρ̊, uʲ = ůʲ.
pub fn construct_modified_data(
    grid: &Grid3,
    geo: &GeometricData,
    params: &CosmologyParams,
) -> Result<FieldState, InitialDataError> {
    geo.check(grid)?;
    let omega0 = closed_form(params, 0.0).omega;
    let mut st = FieldState::zeros(grid.n(), 0.0);
    let dg = pair_gradients(grid, &geo.gsp0);
    let d = |j: usize, k: usize, a: usize, idx: usize| dg[pair_index(j, k)][a][idx];
    st.field_mut(state::G00).fill(-1.0);
    st.field_mut(state::RHO).copy_from_slice(&geo.rho0);
    for j in 0..3 {
        st.field_mut(state::u(j)).copy_from_slice(&geo.usp0[j]);
    }
    for idx in 0..grid.len() {
        let g = geo.metric_at(idx);
        let kc = geo.curvature_at(idx);
        let gi = invert_spatial(&g).map_err(|kind| InitialDataError::NotLorentzian { kind, index: idx })?;
        let mut tr_k = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                tr_k += gi[a][b] * kc[a][b];
            }
        }
        let data = st.data_mut();
        let m = grid.len();
        data[state::k(state::G00) * m + idx] = 2.0 * (3.0 * omega0 - tr_k);
        for j in 0..3 {
            let mut acc = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    acc += gi[a][b] * (d(b, j, a, idx) - 0.5 * d(a, b, j, idx));
                }
            }
            data[state::k(state::g0(j)) * m + idx] = acc;
        }
        for &(j, k) in &SYM_PAIRS {
            let c = state::h(j, k);
            data[c * m + idx] = g[j][k];
            data[state::k(c) * m + idx] = 2.0 * kc[j][k] - 2.0 * omega0 * g[j][k];
        }
    }
    Ok(st)
}

/// Which geometric field a perturbation mode acts on (0-based indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Target {
    Metric(usize, usize),
    Curvature(usize, usize),
    Density,
    Velocity(usize),
}

impl Target {
    /// All sixteen geometric components.
    pub fn all() -> Vec<Target> {
        let mut out = Vec::new();
        for &(j, k) in &SYM_PAIRS {
            out.push(Target::Metric(j, k));
        }
        for &(j, k) in &SYM_PAIRS {
            out.push(Target::Curvature(j, k));
        }
        out.push(Target::Density);
        out.extend((0..3).map(Target::Velocity));
        out
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Target::Metric(j, k) => write!(f, "g{}{}", j + 1, k + 1),
            Target::Curvature(j, k) => write!(f, "K{}{}", j + 1, k + 1),
            Target::Density => write!(f, "rho"),
            Target::Velocity(j) => write!(f, "u{}", j + 1),
        }
    }
}

impl From<Target> for String {
    fn from(t: Target) -> Self {
        t.to_string()
    }
}

impl TryFrom<String> for Target {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        let bad = || format!("unknown perturbation target '{s}' (expected gJK, KJK, rho or uJ with J, K in 1..=3)");
        let digit = |c: u8| -> Option<usize> { (b'1'..=b'3').contains(&c).then(|| (c - b'1') as usize) };
        let b = s.as_bytes();
        match (b.first(), b.len()) {
            _ if s == "rho" => Ok(Target::Density),
            (Some(b'u'), 2) => digit(b[1]).map(Target::Velocity).ok_or_else(bad),
            (Some(&c @ (b'g' | b'K')), 3) => {
                let (j, k) = (digit(b[1]).ok_or_else(bad)?, digit(b[2]).ok_or_else(bad)?);
                let (j, k) = (j.min(k), j.max(k));
                Ok(if c == b'g' { Target::Metric(j, k) } else { Target::Curvature(j, k) })
            }
            _ => Err(bad()),
        }
    }
}

fn default_weight() -> f64 {
    1.0
}

fn default_max_wavenumber() -> i64 {
    2
}

/// One Fourier mode weight·cos(k·x + phase) added to `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub wavevector: [i64; 3],
    pub target: Target,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

/// Perturbation family: explicit modes plus, if `random_modes > 0`, a
/// seeded random superposition of that many modes per component with
/// wavevector entries in [−max_wavenumber, max_wavenumber]; each random
/// component is normalized to sup-norm at most 1 before scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub amplitude: f64,
    #[serde(default)]
    pub modes: Vec<ModeSpec>,
    #[serde(default)]
    pub random_modes: usize,
    #[serde(default = "default_max_wavenumber")]
    pub max_wavenumber: i64,
    #[serde(default)]
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn none() -> Self {
        Self { amplitude: 0.0, modes: Vec::new(), random_modes: 0, max_wavenumber: 2, seed: 0 }
    }

    pub fn single(amplitude: f64, wavevector: [i64; 3], target: Target) -> Self {
        Self { amplitude, modes: vec![ModeSpec { wavevector, target, phase: 0.0, weight: 1.0 }], ..Self::none() }
    }

    pub fn random(amplitude: f64, seed: u64) -> Self {
        Self { amplitude, random_modes: 3, seed, ..Self::none() }
    }

    /// Every wavevector this spec can generate lies inside the dealiasing band.
    pub fn validate(&self, grid: &Grid3) -> Result<(), InitialDataError> {
        let n = grid.n();
        for m in &self.modes {
            if !grid.retains(m.wavevector) {
                return Err(InitialDataError::ModeOutsideBand { wavevector: m.wavevector, n });
            }
        }
        if self.random_modes > 0 {
            let k = self.max_wavenumber;
            if !grid.retains([k, k, k]) {
                return Err(InitialDataError::ModeOutsideBand { wavevector: [k, k, k], n });
            }
        }
        Ok(())
    }
}

/// cos(k·x + phase) sampled on the grid.
pub fn mode_field(grid: &Grid3, wavevector: [i64; 3], phase: f64) -> Vec<f64> {
    let k = wavevector.map(|v| v as f64);
    grid.sample(|x| (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + phase).cos())
}

/// Random superposition of `count` modes with entries in [−kmax, kmax],
/// normalized so that its sup-norm is at most 1.
pub fn random_band_limited<R: Rng>(grid: &Grid3, rng: &mut R, count: usize, kmax: i64) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    let mut total = 0.0;
    for _ in 0..count {
        let kv = [rng.random_range(-kmax..=kmax), rng.random_range(-kmax..=kmax), rng.random_range(-kmax..=kmax)];
        let c: f64 = rng.random_range(-1.0..1.0);
        let phase = rng.random_range(0.0..TAU);
        total += c.abs();
        for (o, v) in out.iter_mut().zip(mode_field(grid, kv, phase)) {
            *o += c * v;
        }
    }
    if total > 0.0 {
        out.iter_mut().for_each(|v| *v /= total);
    }
    out
}

fn target_field(geo: &mut GeometricData, t: Target) -> &mut Vec<f64> {
    match t {
        Target::Metric(j, k) => &mut geo.gsp0[pair_index(j, k)],
        Target::Curvature(j, k) => &mut geo.k0[pair_index(j, k)],
        Target::Density => &mut geo.rho0,
        Target::Velocity(j) => &mut geo.usp0[j],
    }
}

/// Perturbed FLRW data: g̊ = δ + A·(field), K̊ = ω(0)g̊ + A·(field),
/// ρ̊ = ϱ̄ + A·(field) clipped at 0, ů = A·(field).
pub fn perturbed_flrw(
    grid: &Grid3,
    params: &CosmologyParams,
    spec: &PerturbationSpec,
) -> Result<GeometricData, InitialDataError> {
    spec.validate(grid)?;
    let omega0 = closed_form(params, 0.0).omega;
    let mut perturbation = GeometricData {
        gsp0: std::array::from_fn(|_| vec![0.0; grid.len()]),
        k0: std::array::from_fn(|_| vec![0.0; grid.len()]),
        rho0: vec![0.0; grid.len()],
        usp0: std::array::from_fn(|_| vec![0.0; grid.len()]),
    };
    for m in &spec.modes {
        let f = mode_field(grid, m.wavevector, m.phase);
        for (o, v) in target_field(&mut perturbation, m.target).iter_mut().zip(f) {
            *o += m.weight * v;
        }
    }
    if spec.random_modes > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for t in Target::all() {
            let f = random_band_limited(grid, &mut rng, spec.random_modes, spec.max_wavenumber);
            for (o, v) in target_field(&mut perturbation, t).iter_mut().zip(f) {
                *o += v;
            }
        }
    }
    let a = spec.amplitude;
    let mut geo = GeometricData::flrw(grid, params);
    for p in 0..6 {
        for idx in 0..grid.len() {
            geo.gsp0[p][idx] += a * perturbation.gsp0[p][idx];
            geo.k0[p][idx] = omega0 * geo.gsp0[p][idx] + a * perturbation.k0[p][idx];
        }
    }
    let mut clipped = 0usize;
    for (r, d) in geo.rho0.iter_mut().zip(&perturbation.rho0) {
        *r += a * d;
        if *r < 0.0 {
            *r = 0.0;
            clipped += 1;
        }
    }
    if clipped > 0 {
        log::warn!("density perturbation clipped at 0 on {clipped} grid points");
    }
    for j in 0..3 {
        for (u, d) in geo.usp0[j].iter_mut().zip(&perturbation.usp0[j]) {
            *u = a * d;
        }
    }
    for idx in 0..grid.len() {
        if invert_spatial(&geo.metric_at(idx)).is_err() {
            return Err(InitialDataError::AmplitudeTooLarge { amplitude: a, index: idx });
        }
    }
    Ok(geo)
}

/// Gauss residual R̊ − K̊_{ab}K̊ᵃᵇ + (g̊ᵃᵇK̊_{ab})² − 2Λ − 2T(N̂,N̂) and Codazzi
/// residuals D̊ᵃK̊_{aj} − g̊ᵃᵇD̊_jK̊_{ab} − T(N̂,∂_j) with T = ρu_μu_ν.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintResiduals {
    pub gauss: Vec<f64>,
    pub codazzi: [Vec<f64>; 3],
}

impl ConstraintResiduals {
    pub fn max_gauss(&self) -> f64 {
        self.gauss.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_codazzi(&self) -> f64 {
        self.codazzi.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub fn constraint_residuals(
    grid: &Grid3,
    geo: &GeometricData,
    params: &CosmologyParams,
) -> Result<ConstraintResiduals, InitialDataError> {
    geo.check(grid)?;
    let m = grid.len();
    let dg = pair_gradients(grid, &geo.gsp0);
    let dk = pair_gradients(grid, &geo.k0);
    let mut inverse = Vec::with_capacity(m);
    // Christoffel symbols of the second kind, [i][pair(j,k)]
    let mut gamma: [[Vec<f64>; 6]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| vec![0.0; m]));
    for idx in 0..m {
        let gi =
            invert_spatial(&geo.metric_at(idx)).map_err(|kind| InitialDataError::NotLorentzian { kind, index: idx })?;
        let d = |a: usize, b: usize, c: usize| dg[pair_index(b, c)][a][idx];
        for (p, &(j, k)) in SYM_PAIRS.iter().enumerate() {
            for i in 0..3 {
                let mut acc = 0.0;
                for l in 0..3 {
                    acc += gi[i][l] * 0.5 * (d(j, l, k) + d(k, l, j) - d(l, j, k));
                }
                gamma[i][p][idx] = acc;
            }
        }
        inverse.push(gi);
    }
    // ∂_l Γ^i_{jk}, [i][pair][l]
    let dgamma: Vec<Vec<[Vec<f64>; 3]>> = gamma
        .iter()
        .map(|row| {
            row.iter()
                .map(|f| {
                    let mut d = grid.derivative_fields(&grid.forward(f), &AXES).into_iter();
                    std::array::from_fn(|_| d.next().unwrap())
                })
                .collect()
        })
        .collect();

    let mut gauss = vec![0.0; m];
    let mut codazzi: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; m]);
    for idx in 0..m {
        let gi = &inverse[idx];
        let g = geo.metric_at(idx);
        let kc = geo.curvature_at(idx);
        let gam = |i: usize, j: usize, k: usize| gamma[i][pair_index(j, k)][idx];
        let dgam = |l: usize, i: usize, j: usize, k: usize| dgamma[i][pair_index(j, k)][l][idx];
        let mut ricci = [[0.0; 3]; 3];
        for j in 0..3 {
            for k in 0..3 {
                let mut acc = 0.0;
                for i in 0..3 {
                    acc += dgam(i, i, j, k) - dgam(k, i, j, i);
                    for p in 0..3 {
                        acc += gam(i, i, p) * gam(p, j, k) - gam(i, k, p) * gam(p, j, i);
                    }
                }
                ricci[j][k] = acc;
            }
        }
        let mut scalar = 0.0;
        let mut tr_k = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                scalar += gi[a][b] * ricci[a][b];
                tr_k += gi[a][b] * kc[a][b];
            }
        }
        let mut kk = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    for d in 0..3 {
                        kk += kc[a][b] * gi[a][c] * gi[b][d] * kc[c][d];
                    }
                }
            }
        }
        let u: [f64; 3] = std::array::from_fn(|j| geo.usp0[j][idx]);
        let u_low: [f64; 3] = std::array::from_fn(|j| (0..3).map(|a| g[j][a] * u[a]).sum());
        let u0 = (1.0 + (0..3).map(|a| u_low[a] * u[a]).sum::<f64>()).sqrt();
        let rho = geo.rho0[idx];
        gauss[idx] = scalar - kk + tr_k * tr_k - 2.0 * params.lambda() - 2.0 * rho * u0 * u0;

        // D_a K_{bc} = ∂_a K_{bc} − Γ^p_{ab}K_{pc} − Γ^p_{ac}K_{bp}
        let dk_at = |a: usize, b: usize, c: usize| dk[pair_index(b, c)][a][idx];
        let cov = |a: usize, b: usize, c: usize| {
            let mut acc = dk_at(a, b, c);
            for p in 0..3 {
                acc -= gam(p, a, b) * kc[p][c] + gam(p, a, c) * kc[b][p];
            }
            acc
        };
        for j in 0..3 {
            let mut acc = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    acc += gi[a][b] * (cov(b, a, j) - cov(j, a, b));
                }
            }
            // T(N̂, ∂_j) = ρ u_N u_j with u_N = −u⁰ on the initial slice
            codazzi[j][idx] = acc + rho * u0 * u_low[j];
        }
    }
    Ok(ConstraintResiduals { gauss, codazzi })
}

/// Generic perturbed state for identity testing: every field equals its
/// FLRW value plus `amplitude` times a random band-limited field (the
/// density perturbation is kept nonnegative).
pub fn random_state(
    grid: &Grid3,
    params: &CosmologyParams,
    t: f64,
    amplitude: f64,
    seed: u64,
    kmax: i64,
) -> FieldState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = FieldState::flrw(grid.n(), params, t);
    for f in 0..NUM_FIELDS {
        let p = random_band_limited(grid, &mut rng, 4, kmax);
        let shift = if f == state::RHO { 1.0 } else { 0.0 };
        for (v, d) in st.field_mut(f).iter_mut().zip(p) {
            *v += amplitude * (d + shift);
        }
    }
    st
}
