//! Evolved fields on the grid, stored as one flat array of 24 scalar fields.
//!
//! Layout (field index): 0 g₀₀; 1..4 g₀ⱼ; 4..10 h_{jk} over the symmetric
//! pairs (11, 12, 13, 22, 23, 33); 10..20 the time derivatives of the
//! previous ten in the same order; 20 ϱ = e^{3Ω}ρ; 21..24 uʲ.

use crate::background::CosmologyParams;

pub const NUM_FIELDS: usize = 24;
/// Number of evolved metric components (g₀₀, g₀ⱼ, h_{jk}).
pub const NUM_METRIC: usize = 10;
pub const G00: usize = 0;
pub const RHO: usize = 20;
pub const K_OFFSET: usize = 10;

/// Symmetric index pairs in storage order.
pub const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

const PAIR_TABLE: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];

/// Storage position of the unordered spatial pair (j, k), 0-based.
pub const fn pair_index(j: usize, k: usize) -> usize {
    PAIR_TABLE[j][k]
}

pub const fn g0(j: usize) -> usize {
    1 + j
}

pub const fn h(j: usize, k: usize) -> usize {
    4 + pair_index(j, k)
}

/// Time derivative slot of metric component `c` (0..10).
pub const fn k(c: usize) -> usize {
    K_OFFSET + c
}

pub const fn u(j: usize) -> usize {
    21 + j
}

/// Short column-style names of the 24 fields.
pub const FIELD_NAMES: [&str; NUM_FIELDS] = [
    "g00", "g01", "g02", "g03", "h11", "h12", "h13", "h22", "h23", "h33", "k00", "k01", "k02", "k03", "k11", "k12",
    "k13", "k22", "k23", "k33", "rho", "u1", "u2", "u3",
];

/// FLRW value of each field (the perturbation variables are deviations
/// from these).
pub fn flrw_value(field: usize, params: &CosmologyParams) -> f64 {
    match field {
        G00 => -1.0,
        4 | 7 | 9 => 1.0,
        RHO => params.rho_bar(),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    n: usize,
    data: Vec<f64>,
}

impl FieldState {
    pub fn zeros(n: usize, t: f64) -> Self {
        Self { t, n, data: vec![0.0; NUM_FIELDS * n * n * n] }
    }

    /// Exact FLRW slice: g₀₀ = −1, h = δ, ϱ = ϱ̄, everything else zero.
    pub fn flrw(n: usize, params: &CosmologyParams, t: f64) -> Self {
        let mut s = Self::zeros(n, t);
        for f in 0..NUM_FIELDS {
            let v = flrw_value(f, params);
            if v != 0.0 {
                s.field_mut(f).fill(v);
            }
        }
        s
    }

    pub fn from_raw(n: usize, t: f64, data: Vec<f64>) -> Option<Self> {
        (data.len() == NUM_FIELDS * n * n * n).then_some(Self { t, n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn field(&self, f: usize) -> &[f64] {
        let m = self.points();
        &self.data[f * m..(f + 1) * m]
    }

    pub fn field_mut(&mut self, f: usize) -> &mut [f64] {
        let m = self.points();
        &mut self.data[f * m..(f + 1) * m]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// All 24 values at one grid point.
    pub fn at(&self, idx: usize) -> [f64; NUM_FIELDS] {
        let m = self.points();
        std::array::from_fn(|f| self.data[f * m + idx])
    }

    /// self ← base + dt·rates, with t advanced by dt.
    pub fn assign_step(&mut self, base: &FieldState, rates: &FieldRates, dt: f64) {
        for ((d, b), r) in self.data.iter_mut().zip(&base.data).zip(&rates.data) {
            *d = b + dt * r;
        }
        self.t = base.t + dt;
    }

    /// Largest |field − FLRW value| over the grid, per field.
    pub fn perturbation_max(&self, params: &CosmologyParams) -> [f64; NUM_FIELDS] {
        std::array::from_fn(|f| {
            let v0 = flrw_value(f, params);
            self.field(f).iter().fold(0.0f64, |m, v| m.max((v - v0).abs()))
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Time derivatives of every field, in the same layout as [`FieldState`].
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRates {
    n: usize,
    data: Vec<f64>,
}

impl FieldRates {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; NUM_FIELDS * n * n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn field(&self, f: usize) -> &[f64] {
        let m = self.n * self.n * self.n;
        &self.data[f * m..(f + 1) * m]
    }

    pub fn field_mut(&mut self, f: usize) -> &mut [f64] {
        let m = self.n * self.n * self.n;
        &mut self.data[f * m..(f + 1) * m]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self, f: usize) -> f64 {
        self.field(f).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_a_bijection() {
        let mut seen = [false; NUM_FIELDS];
        let mut mark = |f: usize| {
            assert!(!seen[f]);
            seen[f] = true;
        };
        mark(G00);
        for j in 0..3 {
            mark(g0(j));
            mark(u(j));
        }
        for &(j, kk) in &SYM_PAIRS {
            mark(h(j, kk));
        }
        for c in 0..NUM_METRIC {
            mark(k(c));
        }
        mark(RHO);
        assert!(seen.iter().all(|&s| s));
        assert_eq!(h(2, 1), h(1, 2));
        assert_eq!(FIELD_NAMES[h(1, 2)], "h23");
        assert_eq!(FIELD_NAMES[k(h(0, 0))], "k11");
    }

    #[test]
    fn flrw_state_has_zero_perturbation() {
        let p = CosmologyParams::new(3.0, 2.0).unwrap();
        let s = FieldState::flrw(8, &p, 0.0);
        assert!(s.perturbation_max(&p).iter().all(|&v| v == 0.0));
        assert_eq!(s.at(5)[RHO], 2.0);
        assert_eq!(s.at(5)[h(1, 1)], 1.0);
    }
}
