//! Weighted Sobolev norms, building-block energies, their comparison ratios
//! and exponential decay fits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid3, Spectrum};
use crate::rhs::{gauge_residual_max, RhsError};
use crate::snapshot::Snapshot;
use crate::state::{self, flrw_value, SYM_PAIRS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("q = {0} outside (0, 1/8]")]
    InvalidQ(f64),
    #[error("decay window holds {found} samples, at least {required} needed")]
    WindowTooShort { found: usize, required: usize },
    #[error("series value {value} at t = {t} is not positive")]
    NonPositive { t: f64, value: f64 },
    #[error(transparent)]
    Rhs(#[from] RhsError),
}

/// (γ, δ) of a building-block energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyConstants {
    pub gamma: f64,
    pub delta: f64,
}

impl EnergyConstants {
    pub const fn new(gamma: f64, delta: f64) -> Self {
        Self { gamma, delta }
    }

    /// γ = 1 when β > 0 (so the vH²∂_t v cross term vanishes with δ = β + γα),
    /// γ = δ = 0 when β = 0.
    pub fn for_equation(alpha: f64, beta: f64, gamma: f64) -> Self {
        if beta == 0.0 {
            Self::new(0.0, 0.0)
        } else {
            Self::new(gamma, beta + gamma * alpha)
        }
    }
}

fn default_q() -> f64 {
    0.1
}

fn default_order() -> usize {
    3
}

fn default_g00() -> EnergyConstants {
    EnergyConstants::new(1.0, 11.0)
}

fn default_g00_u() -> EnergyConstants {
    EnergyConstants::new(1.0, 13.0)
}

fn default_g0() -> EnergyConstants {
    EnergyConstants::new(2.0 / 3.0, 4.0)
}

fn default_g0_u() -> EnergyConstants {
    EnergyConstants::new(2.0 / 3.0, 16.0 / 3.0)
}

/// Weights and constants of the norm and energy hierarchy. The h-block
/// energies always use (γ, δ) = (0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormConfig {
    #[serde(default = "default_q")]
    pub q: f64,
    /// N − 1.
    #[serde(default = "default_order")]
    pub sobolev_order: usize,
    #[serde(default = "default_g00")]
    pub g00: EnergyConstants,
    #[serde(default = "default_g00_u")]
    pub g00_u: EnergyConstants,
    #[serde(default = "default_g0")]
    pub g0: EnergyConstants,
    #[serde(default = "default_g0_u")]
    pub g0_u: EnergyConstants,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self {
            q: default_q(),
            sobolev_order: default_order(),
            g00: default_g00(),
            g00_u: default_g00_u(),
            g0: default_g0(),
            g0_u: default_g0_u(),
        }
    }
}

impl NormConfig {
    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        if !(self.q > 0.0 && self.q <= 0.125) {
            return Err(DiagnosticsError::InvalidQ(self.q));
        }
        Ok(())
    }
}

/// The S-norms, one field per definition.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Norms {
    pub g00: f64,
    pub g00_u: f64,
    pub g00_ell: f64,
    pub g0: f64,
    pub g0_u: f64,
    pub g0_ell: f64,
    pub h: f64,
    pub h_u: f64,
    pub h_ell: f64,
    pub u: f64,
    pub u_top: f64,
    pub u_u: f64,
    pub rho: f64,
    pub rho_u: f64,
}

impl Norms {
    pub fn metric(&self) -> f64 {
        self.g00 + self.g0 + self.h
    }

    pub fn metric_u(&self) -> f64 {
        self.g00_u + self.g0_u + self.h_u
    }

    pub fn elliptic(&self) -> f64 {
        self.g00_ell + self.g0_ell + self.h_ell
    }

    pub fn below_top(&self) -> f64 {
        self.metric() + self.u + self.rho
    }

    pub fn below_top_u(&self) -> f64 {
        self.metric_u() + self.u_u + self.rho_u
    }

    pub fn total(&self) -> f64 {
        self.below_top() + self.below_top_u() + self.elliptic() + self.u_top
    }
}

/// The energies (not squared).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Energies {
    pub g00: f64,
    pub g00_u: f64,
    pub g0: f64,
    pub g0_u: f64,
    /// Undifferentiated-free h energy of order N − 2.
    pub h_low: f64,
    pub h: f64,
    pub h_u: f64,
    pub u: f64,
    pub u_top: f64,
    pub rho: f64,
}

impl Energies {
    pub fn metric(&self) -> f64 {
        self.g00 + self.g0 + self.h + self.h_low
    }

    pub fn metric_u(&self) -> f64 {
        self.g00_u + self.g0_u + self.h_u
    }

    pub fn below_top(&self) -> f64 {
        self.metric() + self.u + self.rho
    }

    pub fn total(&self) -> f64 {
        self.below_top() + self.metric_u() + self.u_top
    }
}

/// Pointwise monitors reported alongside the norms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Monitors {
    pub gauge_resid_max: f64,
    pub max_g00: f64,
    pub max_g00_upper: f64,
    /// Smallest eigenvalue of h_{jk} = e^{−2Ω}g_{jk}.
    pub min_eig_h: f64,
    /// √Σ_α‖∂_α∂_u v − ∂_u∂_α v‖² over the metric components.
    pub du_commutator: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub step: u64,
    pub norms: Norms,
    pub energies: Energies,
    pub monitors: Monitors,
    /// Exit-code style breakdown flag (0 when none).
    pub breakdown: u8,
}

impl DiagnosticsRecord {
    /// Column values in [`CSV_COLUMNS`] order.
    pub fn values(&self) -> Vec<f64> {
        let n = &self.norms;
        let e = &self.energies;
        let m = &self.monitors;
        vec![
            self.t,
            self.step as f64,
            n.g00,
            n.g00_u,
            n.g00_ell,
            n.g0,
            n.g0_u,
            n.g0_ell,
            n.h,
            n.h_u,
            n.h_ell,
            n.metric(),
            n.metric_u(),
            n.elliptic(),
            n.u,
            n.u_top,
            n.u_u,
            n.rho,
            n.rho_u,
            n.below_top(),
            n.below_top_u(),
            n.total(),
            e.g00,
            e.g00_u,
            e.g0,
            e.g0_u,
            e.h_low,
            e.h,
            e.h_u,
            e.metric(),
            e.metric_u(),
            e.u,
            e.u_top,
            e.rho,
            e.below_top(),
            e.total(),
            m.gauge_resid_max,
            m.max_g00,
            m.max_g00_upper,
            m.min_eig_h,
            m.du_commutator,
            self.breakdown as f64,
        ]
    }

    pub fn value(&self, column: &str) -> Option<f64> {
        CSV_COLUMNS.iter().position(|c| *c == column).map(|i| self.values()[i])
    }

    pub fn ratios(&self) -> Ratios {
        Ratios::from_record(self)
    }
}

/// Stable CSV column names.
pub const CSV_COLUMNS: [&str; 42] = [
    "t",
    "step",
    "S_g00",
    "S_g00_du",
    "S_g00_ell",
    "S_g0",
    "S_g0_du",
    "S_g0_ell",
    "S_h",
    "S_h_du",
    "S_h_ell",
    "S_g",
    "S_g_du",
    "S_ell",
    "S_u",
    "S_u_top",
    "S_u_du",
    "S_rho",
    "S_rho_du",
    "S_below",
    "S_below_du",
    "S_Total",
    "E_g00",
    "E_g00_du",
    "E_g0",
    "E_g0_du",
    "E_h_low",
    "E_h",
    "E_h_du",
    "E_g",
    "E_g_du",
    "E_u",
    "E_u_top",
    "E_rho",
    "E_below",
    "E_Total",
    "gauge_resid_max",
    "max_g00",
    "max_g00_upper",
    "min_eig_h",
    "du_commutator",
    "breakdown",
];

/// Names of the energy columns, in CSV order.
pub fn energy_columns() -> Vec<&'static str> {
    CSV_COLUMNS.iter().copied().filter(|c| c.starts_with("E_")).collect()
}

/// Norm/energy ratios of each equivalent pair; `None` when both sides are
/// below 1e-14.
#[derive(Debug, Clone, PartialEq)]
pub struct Ratios {
    pub entries: Vec<(&'static str, Option<f64>)>,
}

fn guarded_ratio(s: f64, e: f64) -> Option<f64> {
    if s < 1e-14 && e < 1e-14 {
        None
    } else if e == 0.0 {
        Some(f64::INFINITY)
    } else {
        Some(s / e)
    }
}

impl Ratios {
    pub fn from_record(r: &DiagnosticsRecord) -> Self {
        let n = &r.norms;
        let e = &r.energies;
        let entries = vec![
            ("g00", guarded_ratio(n.g00, e.g00)),
            ("g0", guarded_ratio(n.g0, e.g0)),
            ("h", guarded_ratio(n.h, e.h_low + e.h)),
            ("g", guarded_ratio(n.metric(), e.metric())),
            ("g00_du", guarded_ratio(n.g00 + n.g00_u, e.g00 + e.g00_u)),
            ("g0_du", guarded_ratio(n.g0 + n.g0_u, e.g0 + e.g0_u)),
            ("h_du", guarded_ratio(n.h + n.h_u, e.h_low + e.h + e.h_u)),
            ("below", guarded_ratio(n.below_top(), e.below_top())),
            ("below_du", guarded_ratio(n.below_top() + n.below_top_u(), e.below_top() + e.metric_u())),
            ("u_top", guarded_ratio(n.u_top, e.u_top)),
            ("total", guarded_ratio(n.total(), e.total())),
        ];
        Self { entries }
    }
}

/// Largest max/min ratio of each entry over a run, over the entries present
/// at every sample.
pub fn ratio_drift(records: &[DiagnosticsRecord]) -> Vec<(&'static str, f64)> {
    let all: Vec<Ratios> = records.iter().map(|r| r.ratios()).collect();
    let Some(first) = all.first() else { return Vec::new() };
    first
        .entries
        .iter()
        .enumerate()
        .filter_map(|(i, (name, _))| {
            let vals: Option<Vec<f64>> = all.iter().map(|r| r.entries[i].1).collect();
            let vals = vals?;
            let max = vals.iter().cloned().fold(f64::MIN, f64::max);
            let min = vals.iter().cloned().fold(f64::MAX, f64::min);
            Some((*name, max / min))
        })
        .collect()
}

/// Multi-indices with |α| ≤ order, as axis lists.
pub fn multi_indices(order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for a in 0..=order {
        for b in 0..=(order - a) {
            for c in 0..=(order - a - b) {
                let mut axes = vec![0; a];
                axes.extend(std::iter::repeat_n(1, b));
                axes.extend(std::iter::repeat_n(2, c));
                out.push(axes);
            }
        }
    }
    out
}

/// ½∫{−g⁰⁰(∂_t w)² + gᵃᵇ∂_a w∂_b w − 2γHg⁰⁰w∂_t w + δH²w²}dx.
#[allow(clippy::too_many_arguments)]
pub fn building_block_energy_sq(
    grid: &Grid3,
    gu: &[[Vec<f64>; 4]; 4],
    hubble: f64,
    k: EnergyConstants,
    w: Option<&[f64]>,
    w_t: &[f64],
    w_grad: &[Vec<f64>; 3],
) -> f64 {
    let mut sum = 0.0;
    for i in 0..w_t.len() {
        let mut acc = -gu[0][0][i] * w_t[i] * w_t[i];
        for a in 0..3 {
            for b in 0..3 {
                acc += gu[a + 1][b + 1][i] * w_grad[a][i] * w_grad[b][i];
            }
        }
        if let Some(w) = w {
            acc += -2.0 * k.gamma * hubble * gu[0][0][i] * w[i] * w_t[i] + k.delta * hubble * hubble * w[i] * w[i];
        }
        sum += acc;
    }
    0.5 * sum * grid.cell_volume()
}

const AXES: [&[usize]; 3] = [&[0], &[1], &[2]];

/// Spectra of the perturbation v − v_FLRW, k and ∂_t k for one component.
struct ComponentSpectra {
    v: Spectrum,
    k: Spectrum,
    kt: Spectrum,
}

fn component_spectra(snap: &Snapshot, c: usize) -> ComponentSpectra {
    let grid = snap.grid;
    let v0 = flrw_value(c, &snap.params);
    let pert: Vec<f64> = snap.state.field(c).iter().map(|v| v - v0).collect();
    ComponentSpectra { v: grid.forward(&pert), k: grid.forward(snap.k(c)), kt: grid.forward(snap.dtt(c)) }
}

/// Per-component physical fields of the ∂_u hierarchy.
struct DuFields {
    /// ∂_u v
    du_v: Vec<f64>,
    /// ∂_u ∂_t v
    du_k: Vec<f64>,
    /// ∂_u ∂_i v
    du_dv: [Vec<f64>; 3],
}

fn du_fields(snap: &Snapshot, spec: &ComponentSpectra, c: usize) -> DuFields {
    let grid = snap.grid;
    let grad = |s: &Spectrum| -> [Vec<f64>; 3] {
        let mut d = grid.derivative_fields(s, &AXES).into_iter();
        std::array::from_fn(|_| d.next().unwrap())
    };
    let dv = grad(&spec.v);
    let dk = grad(&spec.k);
    let du_v = snap.du_apply(snap.k(c), &dv);
    let du_k = snap.du_apply(snap.dtt(c), &dk);
    let du_dv = std::array::from_fn(|i| {
        let second: [Vec<f64>; 3] = std::array::from_fn(|b| {
            let axes = [i, b];
            grid.inverse(&grid.differentiate_spectrum(&spec.v, &axes))
        });
        snap.du_apply(&dk[i], &second)
    });
    DuFields { du_v, du_k, du_dv }
}

/// Multiplicity of symmetric pair p in sums over ordered (j, k).
fn pair_weight(p: usize) -> f64 {
    let (j, k) = SYM_PAIRS[p];
    if j == k {
        1.0
    } else {
        2.0
    }
}

/// Metric component index and multiplicity for each block.
fn block_components(block: usize) -> Vec<(usize, f64)> {
    match block {
        0 => vec![(state::G00, 1.0)],
        1 => (0..3).map(|j| (state::g0(j), 1.0)).collect(),
        _ => (0..6).map(|p| (4 + p, pair_weight(p))).collect(),
    }
}

/// Computes every norm of the hierarchy.
pub fn compute_norms(snap: &Snapshot, cfg: &NormConfig) -> Norms {
    let grid = snap.grid;
    let ord = cfg.sobolev_order;
    let om = snap.bg.omega_log;
    let q = cfg.q;
    let e = |p: f64| (p * om).exp();
    let sob = |s: &[num_complex::Complex64], axes: &[usize]| grid.sobolev_norm_spectrum(s, ord, axes);
    let sob_low =
        |s: &[num_complex::Complex64], axes: &[usize]| grid.sobolev_norm_spectrum(s, ord.saturating_sub(1), axes);

    let mut out = Norms::default();
    for block in 0..3 {
        let (w_t, w_v, w_d, w_dd) = match block {
            0 => (e(q), e(q), e(q - 1.0), e(q - 2.0)),
            1 => (e(q - 1.0), e(q - 1.0), e(q - 2.0), e(q - 3.0)),
            _ => (e(q), 0.0, e(q - 1.0), e(q - 2.0)),
        };
        let (mut s, mut s_u, mut s_ell) = (0.0, 0.0, 0.0);
        for (c, mult) in block_components(block) {
            let spec = component_spectra(snap, c);
            let du = du_fields(snap, &spec, c);
            let du_v = grid.forward(&du.du_v);
            let du_k = grid.forward(&du.du_k);
            let mut part = w_t * sob(&spec.k, &[]) + w_v * sob(&spec.v, &[]);
            let mut part_u = w_t * sob(&du_k, &[]) + e(if block == 1 { q - 1.0 } else { q }) * sob(&du_v, &[]);
            let mut part_ell = 0.0;
            for i in 0..3 {
                part += w_d * sob(&spec.v, &[i]);
                let du_dv = grid.forward(&du.du_dv[i]);
                part_u += w_d * sob(&du_dv, &[]);
                part_ell += w_d * sob(&spec.k, &[i]);
                for j in 0..3 {
                    part_ell += w_dd * sob(&spec.v, &[i, j]);
                }
                if block == 2 {
                    part += sob_low(&spec.v, &[i]);
                    part_u += e(q) * sob_low(&du_dv, &[]);
                }
            }
            s += mult * part;
            s_u += mult * part_u;
            s_ell += mult * part_ell;
        }
        match block {
            0 => (out.g00, out.g00_u, out.g00_ell) = (s, s_u, s_ell),
            1 => (out.g0, out.g0_u, out.g0_ell) = (s, s_u, s_ell),
            _ => (out.h, out.h_u, out.h_ell) = (s, s_u, s_ell),
        }
    }

    for j in 0..3 {
        let su = grid.forward(snap.state.field(state::u(j)));
        out.u += e(1.0 + q) * sob(&su, &[]);
        for i in 0..3 {
            out.u_top += e(q) * sob(&su, &[i]);
        }
        let grad = grid.derivative_fields(&su, &AXES);
        let grad: [Vec<f64>; 3] = [grad[0].clone(), grad[1].clone(), grad[2].clone()];
        let du_u = snap.du_apply(&snap.dt_u[j + 1], &grad);
        out.u_u += e(1.0 + q) * grid.sobolev_norm(&du_u, ord);
    }
    let rho_bar = snap.params.rho_bar();
    let pert: Vec<f64> = snap.state.field(state::RHO).iter().map(|r| r - rho_bar).collect();
    let srho = grid.forward(&pert);
    out.rho = sob(&srho, &[]);
    let grad = grid.derivative_fields(&srho, &AXES);
    let grad: [Vec<f64>; 3] = [grad[0].clone(), grad[1].clone(), grad[2].clone()];
    out.rho_u = e(q) * grid.sobolev_norm(&snap.du_apply(&snap.dt_rho, &grad), ord);
    out
}

/// Energies plus the ∂_α/∂_u commutator magnitude.
pub fn compute_energies(snap: &Snapshot, cfg: &NormConfig) -> (Energies, f64) {
    let grid = snap.grid;
    let om = snap.bg.omega_log;
    let q = cfg.q;
    let hubble = snap.params.hubble();
    let gu = &snap.gu;
    let alphas = multi_indices(cfg.sobolev_order);
    let inv = |s: &Spectrum, axes: &[usize]| grid.inverse(&grid.differentiate_spectrum(s, axes));

    let max_g00_upper = gu[0][0].iter().cloned().fold(f64::MIN, f64::max);
    if max_g00_upper > -0.5 {
        log::warn!("energy quadratic form losing coercivity: max g⁰⁰ = {max_g00_upper:.3}");
    }

    let mut out = Energies::default();
    let mut commutator_sq = 0.0;
    for block in 0..3 {
        let (k, k_u, weight) = match block {
            0 => (cfg.g00, cfg.g00_u, (2.0 * q * om).exp()),
            1 => (cfg.g0, cfg.g0_u, (2.0 * (q - 1.0) * om).exp()),
            _ => (EnergyConstants::new(0.0, 0.0), EnergyConstants::new(0.0, 0.0), (2.0 * q * om).exp()),
        };
        let (mut e2, mut e2_u) = (0.0, 0.0);
        for (c, mult) in block_components(block) {
            let spec = component_spectra(snap, c);
            let du_v_spec = grid.forward(&snap.du_apply(snap.k(c), &{
                let mut d = grid.derivative_fields(&spec.v, &AXES).into_iter();
                std::array::from_fn(|_| d.next().unwrap())
            }));
            for alpha in &alphas {
                let w = inv(&spec.v, alpha);
                let w_t = inv(&spec.k, alpha);
                let w_tt = inv(&spec.kt, alpha);
                let mut axes_i: Vec<Vec<usize>> = Vec::with_capacity(3);
                for i in 0..3 {
                    let mut a = alpha.clone();
                    a.push(i);
                    axes_i.push(a);
                }
                let w_grad: [Vec<f64>; 3] = std::array::from_fn(|i| inv(&spec.v, &axes_i[i]));
                let w_t_grad: [Vec<f64>; 3] = std::array::from_fn(|i| inv(&spec.k, &axes_i[i]));
                let value = if block == 2 { None } else { Some(w.as_slice()) };
                e2 += mult * building_block_energy_sq(grid, gu, hubble, k, value, &w_t, &w_grad);

                // U = ∂_u∂_α v and its derivatives
                let big_u = snap.du_apply(&w_t, &w_grad);
                let big_u_t: Vec<f64> = (0..w.len())
                    .map(|i| {
                        let mut acc = snap.dt_u[0][i] * w_t[i] + snap.u[0][i] * w_tt[i];
                        for a in 0..3 {
                            acc += snap.dt_u[a + 1][i] * w_grad[a][i] + snap.u[a + 1][i] * w_t_grad[a][i];
                        }
                        acc
                    })
                    .collect();
                let su = grid.forward(&big_u);
                let mut d = grid.derivative_fields(&su, &AXES).into_iter();
                let big_u_grad: [Vec<f64>; 3] = std::array::from_fn(|_| d.next().unwrap());
                let value_u = if block == 2 { None } else { Some(big_u.as_slice()) };
                e2_u += mult * building_block_energy_sq(grid, gu, hubble, k_u, value_u, &big_u_t, &big_u_grad);

                let swapped = inv(&du_v_spec, alpha);
                let diff: Vec<f64> = swapped.iter().zip(&big_u).map(|(a, b)| a - b).collect();
                let l2 = grid.l2_norm(&diff);
                commutator_sq += mult * l2 * l2;
            }
        }
        match block {
            0 => (out.g00, out.g00_u) = ((weight * e2).sqrt(), (weight * e2_u).sqrt()),
            1 => (out.g0, out.g0_u) = ((weight * e2).sqrt(), (weight * e2_u).sqrt()),
            _ => (out.h, out.h_u) = ((weight * e2).sqrt(), (weight * e2_u).sqrt()),
        }
        if block == 2 {
            let ord = cfg.sobolev_order;
            let mut low = 0.0;
            for (c, mult) in block_components(2) {
                let spec = component_spectra(snap, c);
                let full = grid.sobolev_norm_spectrum(&spec.v, ord, &[]);
                let base = grid.l2_norm_spectrum(&spec.v);
                low += mult * (full * full - base * base);
            }
            out.h_low = (0.5 * hubble * hubble * low.max(0.0)).sqrt();
        }
    }

    let ord = cfg.sobolev_order;
    let (mut u2, mut top2) = (0.0, 0.0);
    for j in 0..3 {
        let su = grid.forward(snap.state.field(state::u(j)));
        let n = grid.sobolev_norm_spectrum(&su, ord, &[]);
        u2 += n * n;
        for i in 0..3 {
            let n = grid.sobolev_norm_spectrum(&su, ord, &[i]);
            top2 += n * n;
        }
    }
    out.u = ((2.0 * (1.0 + q) * om).exp() * u2).sqrt();
    out.u_top = ((2.0 * q * om).exp() * top2).sqrt();
    let rho_bar = snap.params.rho_bar();
    let pert: Vec<f64> = snap.state.field(state::RHO).iter().map(|r| r - rho_bar).collect();
    out.rho = grid.sobolev_norm(&pert, ord);
    (out, commutator_sq.sqrt())
}

/// Smallest eigenvalue of the rescaled spatial metric over the grid.
pub fn min_eigenvalue_h(st: &crate::state::FieldState) -> f64 {
    let mut min = f64::INFINITY;
    for idx in 0..st.points() {
        let v = st.at(idx);
        let m = nalgebra::Matrix3::from_fn(|j, k| v[state::h(j, k)]);
        min = min.min(m.symmetric_eigenvalues().min());
    }
    min
}

/// Full diagnostics record for one state.
pub fn record(snap: &Snapshot, cfg: &NormConfig, step: u64) -> Result<DiagnosticsRecord, DiagnosticsError> {
    let norms = compute_norms(snap, cfg);
    let (energies, du_commutator) = compute_energies(snap, cfg);
    let st = snap.state;
    let monitors = Monitors {
        gauge_resid_max: gauge_residual_max(snap.grid, st, &snap.params)?,
        max_g00: st.field(state::G00).iter().cloned().fold(f64::MIN, f64::max),
        max_g00_upper: snap.gu[0][0].iter().cloned().fold(f64::MIN, f64::max),
        min_eig_h: min_eigenvalue_h(st),
        du_commutator,
    };
    Ok(DiagnosticsRecord { t: st.t, step, norms, energies, monitors, breakdown: 0 })
}

/// Least-squares fit of log(value) = a + λt on a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub residual: f64,
    pub samples: usize,
}

pub const MIN_FIT_SAMPLES: usize = 8;

pub fn fit_decay(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<DecayFit, DiagnosticsError> {
    let pts: Vec<(f64, f64)> =
        times.iter().zip(values).filter(|(t, _)| **t >= window.0 && **t <= window.1).map(|(t, v)| (*t, *v)).collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(DiagnosticsError::WindowTooShort { found: pts.len(), required: MIN_FIT_SAMPLES });
    }
    if let Some(&(t, value)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(DiagnosticsError::NonPositive { t, value });
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, v) in &pts {
        sxy += (t - mt) * (v.ln() - my);
        sxx += (t - mt) * (t - mt);
    }
    let exponent = sxy / sxx;
    let intercept = my - exponent * mt;
    let residual = (pts.iter().map(|&(t, v)| (v.ln() - intercept - exponent * t).powi(2)).sum::<f64>() / n).sqrt();
    Ok(DecayFit { exponent, intercept, residual, samples: pts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::CosmologyParams;
    use crate::initial_data::random_state;
    use crate::rhs::RhsOptions;
    use crate::state::FieldState;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn minkowski_like(n: usize) -> (Grid3, CosmologyParams) {
        (Grid3::new(n).unwrap(), CosmologyParams::new(3.0, 0.0).unwrap())
    }

    #[test]
    fn flrw_norms_and_energies_vanish() {
        let (grid, params) = minkowski_like(8);
        for rho_bar in [0.0, 2.0] {
            let params = CosmologyParams::new(params.lambda(), rho_bar).unwrap();
            let st = FieldState::flrw(8, &params, 0.7);
            let snap = Snapshot::new(&grid, &st, &params, &RhsOptions::default()).unwrap();
            let r = record(&snap, &NormConfig::default(), 0).unwrap();
            assert!(r.norms.total() < 1e-12, "{}", r.norms.total());
            assert!(r.energies.total() < 1e-12);
            assert!(r.ratios().entries.iter().all(|(_, v)| v.is_none()));
        }
    }

    #[test]
    fn constant_lapse_perturbation() {
        let (grid, params) = minkowski_like(8);
        let c = -0.03;
        let mut st = FieldState::flrw(8, &params, 0.0);
        st.field_mut(state::G00).iter_mut().for_each(|v| *v += c);
        let snap = Snapshot::new(&grid, &st, &params, &RhsOptions::default()).unwrap();
        let n = compute_norms(&snap, &NormConfig::default());
        let expect = c.abs() * (2.0 * PI).powf(1.5);
        // ∂_t g₀₀ ≠ 0 here only through the wave equation, which the norm
        // does not see at this instant: k₀₀ = 0
        assert!((n.g00 - expect).abs() < 1e-12 * expect, "{} vs {expect}", n.g00);
    }

    #[test]
    fn weight_scales_with_expansion() {
        let (grid, params) = minkowski_like(8);
        let c = 0.01;
        let make = |t: f64| {
            let mut st = FieldState::flrw(8, &params, t);
            st.field_mut(state::G00).iter_mut().for_each(|v| *v += c);
            st
        };
        let cfg = NormConfig::default();
        let s0 = make(0.0);
        let t2 = 2.0 / params.hubble();
        let s2 = make(t2);
        let n0 = compute_norms(&Snapshot::new(&grid, &s0, &params, &RhsOptions::default()).unwrap(), &cfg).g00;
        let n2 = compute_norms(&Snapshot::new(&grid, &s2, &params, &RhsOptions::default()).unwrap(), &cfg).g00;
        assert!((n2 / n0 - (2.0 * cfg.q).exp()).abs() < 1e-12);
    }

    fn unit_inverse(m: usize) -> [[Vec<f64>; 4]; 4] {
        std::array::from_fn(|a| {
            std::array::from_fn(|b| {
                let v = if a != b {
                    0.0
                } else if a == 0 {
                    -1.0
                } else {
                    1.0
                };
                vec![v; m]
            })
        })
    }

    #[test]
    fn building_block_sine_quadrature() {
        let grid = Grid3::new(16).unwrap();
        let gu = unit_inverse(grid.len());
        let w = grid.sample(|x| x[0].sin());
        let grad = grid.gradient(&w);
        let zero = vec![0.0; grid.len()];
        let e2 = building_block_energy_sq(&grid, &gu, 1.0, EnergyConstants::new(0.0, 0.0), Some(&w), &zero, &grad);
        assert!((e2 - 2.0 * PI.powi(3)).abs() < 1e-10, "{e2}");
    }

    #[test]
    fn building_block_constant_only_delta_survives() {
        let grid = Grid3::new(8).unwrap();
        let gu = unit_inverse(grid.len());
        let c = 0.3;
        let w = vec![c; grid.len()];
        let zero = vec![0.0; grid.len()];
        let grad = [zero.clone(), zero.clone(), zero.clone()];
        let e2 = building_block_energy_sq(&grid, &gu, 1.0, EnergyConstants::new(1.0, 11.0), Some(&w), &zero, &grad);
        let expect = 0.5 * 11.0 * c * c * (2.0 * PI).powi(3);
        assert!((e2 - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn default_constants_follow_vanishing_cross_term_rule() {
        let cfg = NormConfig::default();
        assert_eq!(EnergyConstants::for_equation(5.0, 6.0, 1.0), cfg.g00);
        assert_eq!(EnergyConstants::for_equation(7.0, 6.0, 1.0), cfg.g00_u);
        let g0 = EnergyConstants::for_equation(3.0, 2.0, 2.0 / 3.0);
        assert!((g0.delta - cfg.g0.delta).abs() < 1e-15);
        let g0u = EnergyConstants::for_equation(5.0, 2.0, 2.0 / 3.0);
        assert!((g0u.delta - cfg.g0_u.delta).abs() < 1e-15);
        assert_eq!(EnergyConstants::for_equation(3.0, 0.0, 1.0), EnergyConstants::new(0.0, 0.0));
    }

    #[test]
    fn total_is_sum_of_parts() {
        let grid = Grid3::new(8).unwrap();
        let params = CosmologyParams::new(3.0, 1.0).unwrap();
        let st = random_state(&grid, &params, 0.2, 1e-3, 1, 2);
        let snap = Snapshot::new(&grid, &st, &params, &RhsOptions::default()).unwrap();
        let n = compute_norms(&snap, &NormConfig::default());
        let parts = n.g00
            + n.g0
            + n.h
            + n.u
            + n.rho
            + n.g00_u
            + n.g0_u
            + n.h_u
            + n.u_u
            + n.rho_u
            + n.g00_ell
            + n.g0_ell
            + n.h_ell
            + n.u_top;
        assert!((n.total() - parts).abs() <= 1e-14 * parts);
    }

    #[test]
    fn multi_index_count() {
        assert_eq!(multi_indices(3).len(), 20);
        assert_eq!(multi_indices(0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn decay_fits() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|t| 3.0 * (-2.0 * t).exp()).collect();
        let fit = fit_decay(&t, &v, (0.0, 2.0)).unwrap();
        assert!((fit.exponent + 2.0).abs() < 1e-6);
        let flat = vec![5.0; 20];
        assert!(fit_decay(&t, &flat, (0.0, 2.0)).unwrap().exponent.abs() < 1e-8);
        assert!(matches!(fit_decay(&t, &v, (0.0, 0.5)), Err(DiagnosticsError::WindowTooShort { found: 6, .. })));
    }

    #[test]
    fn q_is_validated() {
        let mut cfg = NormConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.q = 0.2;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn building_block_is_quadratic(lambda in 0.01f64..10.0, seed in 0u64..1000) {
            let grid = Grid3::new(8).unwrap();
            let params = CosmologyParams::new(3.0, 1.0).unwrap();
            let st = random_state(&grid, &params, 0.1, 1e-2, seed, 2);
            let snap = Snapshot::new(&grid, &st, &params, &RhsOptions::default()).unwrap();
            let w = grid.sample(|x| (x[0] + 2.0 * x[2]).sin());
            let w_t = grid.sample(|x| x[1].cos());
            let grad = grid.gradient(&w);
            let scale = |f: &[f64]| f.iter().map(|v| lambda * v).collect::<Vec<f64>>();
            let k = EnergyConstants::new(1.0, 11.0);
            let base = building_block_energy_sq(&grid, &snap.gu, 1.0, k, Some(&w), &w_t, &grad);
            let sgrad = [scale(&grad[0]), scale(&grad[1]), scale(&grad[2])];
            let scaled = building_block_energy_sq(&grid, &snap.gu, 1.0, k, Some(&scale(&w)), &scale(&w_t), &sgrad);
            prop_assert!((scaled - lambda * lambda * base).abs() <= 1e-12 * scaled.abs().max(1e-300));
        }

        #[test]
        fn building_block_is_coercive(s in 0.5f64..1.5, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let grid = Grid3::new(8).unwrap();
            let m = grid.len();
            let mut gu = unit_inverse(m);
            gu[0][0] = vec![-s; m];
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || grid.sample(|_| 0.0).iter().map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
            let w = draw();
            let w_t = draw();
            let grad = [draw(), draw(), draw()];
            for (k, c) in [(EnergyConstants::new(1.0, 11.0), 1.0), (EnergyConstants::new(2.0 / 3.0, 4.0), 1.0)] {
                let e2 = building_block_energy_sq(&grid, &gu, 1.0, k, Some(&w), &w_t, &grad);
                // smallest eigenvalue of ½[[s, γs], [γs, δ]] over s ∈ [0.5, 1.5]
                let lam = |s: f64| {
                    let (a, b, d) = (s, k.gamma * s, k.delta);
                    0.5 * (0.5 * (a + d) - (0.25 * (a - d).powi(2) + b * b).sqrt())
                };
                let floor = lam(0.5).min(lam(1.5)).min(0.5);
                let mut rhs = 0.0;
                for i in 0..m {
                    rhs += w_t[i] * w_t[i] + grad.iter().map(|g| g[i] * g[i]).sum::<f64>() + c * w[i] * w[i];
                }
                rhs *= grid.cell_volume();
                prop_assert!(floor > 0.0);
                prop_assert!(e2 >= floor * rhs * (1.0 - 1e-12), "{} < {}", e2, floor * rhs);
            }
        }
    }
}
