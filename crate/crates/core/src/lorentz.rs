//! Pointwise Lorentzian algebra: inverse metric, velocity normalization,
//! Christoffel symbols, gauge residual, and the decomposition of the
//! modified system's lower-order terms into FLRW principal parts plus error
//! terms.
//!
//! Index conventions: 4-index arrays use 0 for time and 1..=3 for space.
//! Metric derivatives are stored as `dg[λ][μ][ν] = ∂_λ g_{μν}` and the
//! first-kind Christoffel symbols as
//! `gamma[μ][λ][ν] = ½(∂_μ g_{λν} + ∂_ν g_{μλ} − ∂_λ g_{μν})`.

use thiserror::Error;

use crate::background::BackgroundState;

pub type Mat3 = [[f64; 3]; 3];
pub type Mat4 = [[f64; 4]; 4];
pub type Tensor3 = [[[f64; 4]; 4]; 4];
pub type Tensor4 = [[[[f64; 4]; 4]; 4]; 4];

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum AlgebraError {
    #[error("metric is not Lorentzian: g00 = {g00} is not negative")]
    NonNegativeG00 { g00: f64 },
    #[error("spatial metric is not positive definite (leading minor {minor})")]
    SpatialNotPositiveDefinite { minor: f64 },
    #[error("velocity cannot be normalized: discriminant {discriminant}")]
    SpacelikeVelocity { discriminant: f64 },
}

impl AlgebraError {
    pub fn is_not_lorentzian(&self) -> bool {
        !matches!(self, AlgebraError::SpacelikeVelocity { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricPoint {
    pub g00: f64,
    pub g0: [f64; 3],
    pub gsp: Mat3,
}

impl MetricPoint {
    pub fn minkowski() -> Self {
        Self::flrw(1.0)
    }

    /// −dt² + a²δ.
    pub fn flrw(a: f64) -> Self {
        let a2 = a * a;
        Self { g00: -1.0, g0: [0.0; 3], gsp: [[a2, 0.0, 0.0], [0.0, a2, 0.0], [0.0, 0.0, a2]] }
    }

    pub fn from_matrix(g: &Mat4) -> Self {
        let mut gsp = [[0.0; 3]; 3];
        for j in 0..3 {
            for k in 0..3 {
                gsp[j][k] = g[j + 1][k + 1];
            }
        }
        Self { g00: g[0][0], g0: [g[0][1], g[0][2], g[0][3]], gsp }
    }

    pub fn to_matrix(&self) -> Mat4 {
        let mut g = [[0.0; 4]; 4];
        g[0][0] = self.g00;
        for j in 0..3 {
            g[0][j + 1] = self.g0[j];
            g[j + 1][0] = self.g0[j];
            for k in 0..3 {
                g[j + 1][k + 1] = self.gsp[j][k];
            }
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseMetricPoint {
    pub gu00: f64,
    pub gu0: [f64; 3],
    pub gusp: Mat3,
}

impl InverseMetricPoint {
    pub fn to_matrix(&self) -> Mat4 {
        MetricPoint { g00: self.gu00, g0: self.gu0, gsp: self.gusp }.to_matrix()
    }
}

/// Inverse of a symmetric 3×3 matrix by cofactors, after checking positive
/// definiteness through its leading minors.
pub fn invert_spatial(m: &Mat3) -> Result<Mat3, AlgebraError> {
    let m1 = m[0][0];
    let m2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    for minor in [m1, m2, det] {
        if !(minor > 0.0) {
            return Err(AlgebraError::SpatialNotPositiveDefinite { minor });
        }
    }
    let inv_det = 1.0 / det;
    let c11 = m[0][0] * m[2][2] - m[0][2] * m[2][0];
    let c12 = m[0][1] * m[2][0] - m[0][0] * m[2][1];
    let c22 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    Ok([
        [c00 * inv_det, c01 * inv_det, c02 * inv_det],
        [c01 * inv_det, c11 * inv_det, c12 * inv_det],
        [c02 * inv_det, c12 * inv_det, c22 * inv_det],
    ])
}

/// Inverse metric from the 3+1 block formulas: g⁰⁰ = 1/(g₀₀ − d²),
/// g⁰ʲ = (g♭⁻¹)^{aj} g₀ₐ / (d² − g₀₀), gʲᵏ = (g♭⁻¹)^{jk} + g⁰⁰ βʲβᵏ with
/// βʲ = (g♭⁻¹)^{ja} g₀ₐ and d² = βᵃ g₀ₐ.
pub fn invert_metric(m: &MetricPoint) -> Result<InverseMetricPoint, AlgebraError> {
    if !(m.g00 < 0.0) {
        return Err(AlgebraError::NonNegativeG00 { g00: m.g00 });
    }
    let flat_inv = invert_spatial(&m.gsp)?;
    let mut beta = [0.0; 3];
    for j in 0..3 {
        for a in 0..3 {
            beta[j] += flat_inv[j][a] * m.g0[a];
        }
    }
    let d2: f64 = (0..3).map(|a| beta[a] * m.g0[a]).sum();
    let gu00 = 1.0 / (m.g00 - d2);
    let scale = 1.0 / (d2 - m.g00);
    let gu0 = [beta[0] * scale, beta[1] * scale, beta[2] * scale];
    let mut gusp = [[0.0; 3]; 3];
    for j in 0..3 {
        for k in 0..3 {
            gusp[j][k] = flat_inv[j][k] + gu00 * beta[j] * beta[k];
        }
    }
    Ok(InverseMetricPoint { gu00, gu0, gusp })
}

/// Future-directed u⁰ from the normalization g_{αβ}u^αu^β = −1:
/// u⁰ = −g₀ₐuᵃ/g₀₀ + sqrt(1 + (g₀ₐuᵃ/g₀₀)² − g_{ab}uᵃuᵇ/g₀₀ − (g₀₀+1)/g₀₀).
pub fn solve_u0(m: &MetricPoint, usp: &[f64; 3]) -> Result<f64, AlgebraError> {
    let p: f64 = (0..3).map(|a| m.g0[a] * usp[a]).sum();
    let mut q = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            q += m.gsp[a][b] * usp[a] * usp[b];
        }
    }
    let r = p / m.g00;
    let discriminant = 1.0 + r * r - q / m.g00 - (m.g00 + 1.0) / m.g00;
    if !(discriminant > 0.0) {
        return Err(AlgebraError::SpacelikeVelocity { discriminant });
    }
    Ok(-r + discriminant.sqrt())
}

/// Γ_{μλν} = ½(∂_μ g_{λν} + ∂_ν g_{μλ} − ∂_λ g_{μν}).
pub fn christoffel_first_kind(dg: &Tensor3) -> Tensor3 {
    let mut gamma = [[[0.0; 4]; 4]; 4];
    for mu in 0..4 {
        for lam in 0..4 {
            for nu in mu..4 {
                let v = 0.5 * (dg[mu][lam][nu] + dg[nu][mu][lam] - dg[lam][mu][nu]);
                gamma[mu][lam][nu] = v;
                gamma[nu][lam][mu] = v;
            }
        }
    }
    gamma
}

/// Everything the decomposition formulas need at one point.
#[derive(Debug, Clone)]
pub struct PointGeometry {
    pub g: Mat4,
    pub gu: Mat4,
    pub dg: Tensor3,
    pub gamma: Tensor3,
    /// e^{2Ω}∂_t h_{jk} (spatial block; row/column 0 unused), the
    /// manifestly small form of ∂_t g_{jk} − 2ωg_{jk}.
    pub s: Mat4,
    pub omega: f64,
    pub e2o: f64,
    /// W[b][l] = gᵃᵇ∂_t g_{al} − 2ωδᵇ_l in its substituted form
    /// e^{2Ω}gᵃᵇ∂_t h_{al} − 2ωg⁰ᵇg_{0l}.
    pub w: Mat4,
}

impl PointGeometry {
    /// `dt_h` is ∂_t h_{jk} for the rescaled spatial metric h = e^{−2Ω}g_{jk}.
    pub fn new(m: &MetricPoint, dg: &Tensor3, dt_h: &Mat3, bg: &BackgroundState) -> Result<Self, AlgebraError> {
        let inv = invert_metric(m)?;
        Ok(Self::with_inverse(m, &inv, dg, dt_h, bg))
    }

    pub fn with_inverse(
        m: &MetricPoint,
        inv: &InverseMetricPoint,
        dg: &Tensor3,
        dt_h: &Mat3,
        bg: &BackgroundState,
    ) -> Self {
        let g = m.to_matrix();
        let gu = inv.to_matrix();
        let e2o = bg.exp_omega(2.0);
        let omega = bg.omega;
        let mut s = [[0.0; 4]; 4];
        for j in 0..3 {
            for k in 0..3 {
                s[j + 1][k + 1] = e2o * dt_h[j][k];
            }
        }
        let mut w = [[0.0; 4]; 4];
        for b in 1..4 {
            for l in 1..4 {
                let mut acc = 0.0;
                for a in 1..4 {
                    acc += gu[a][b] * s[a][l];
                }
                w[b][l] = acc - 2.0 * omega * gu[0][b] * g[0][l];
            }
        }
        Self { g, gu, dg: *dg, gamma: christoffel_first_kind(dg), s, omega, e2o, w }
    }

    /// ∂_λ g_{μν}.
    #[inline]
    fn d(&self, lam: usize, mu: usize, nu: usize) -> f64 {
        self.dg[lam][mu][nu]
    }

    #[inline]
    fn gm(&self, mu: usize, lam: usize, nu: usize) -> f64 {
        self.gamma[mu][lam][nu]
    }
}

/// ∂_t h_{jk} recovered from a full metric derivative: e^{−2Ω}(∂_t g_{jk} − 2ωg_{jk}).
pub fn dt_h_from_metric(m: &MetricPoint, dg: &Tensor3, bg: &BackgroundState) -> Mat3 {
    let em2o = bg.exp_omega(-2.0);
    let mut out = [[0.0; 3]; 3];
    for j in 0..3 {
        for k in 0..3 {
            out[j][k] = em2o * (dg[0][j + 1][k + 1] - 2.0 * bg.omega * m.gsp[j][k]);
        }
    }
    out
}

/// Error parts of the Christoffel symbols of the second kind. Spatial
/// indices run over 0..3 here (offset by one from the 4-index arrays).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeltaChristoffel {
    /// Δ⁰₀₀
    pub t_tt: f64,
    /// Δ⁰ⱼ₀
    pub t_jt: [f64; 3],
    /// Δʲ₀₀
    pub j_tt: [f64; 3],
    /// Δʲ₀ₖ, indexed [j][k]
    pub j_tk: Mat3,
    /// Δ⁰ⱼₖ
    pub t_jk: Mat3,
    /// Δᵏᵢⱼ, indexed [k][i][j]
    pub k_ij: [[[f64; 3]; 3]; 3],
}

impl DeltaChristoffel {
    /// Δ^α_{μν} as a full 4-index array, indexed [α][μ][ν].
    pub fn to_tensor(&self) -> Tensor3 {
        let mut t = [[[0.0; 4]; 4]; 4];
        t[0][0][0] = self.t_tt;
        for j in 0..3 {
            t[0][j + 1][0] = self.t_jt[j];
            t[0][0][j + 1] = self.t_jt[j];
            t[j + 1][0][0] = self.j_tt[j];
            for k in 0..3 {
                t[j + 1][0][k + 1] = self.j_tk[j][k];
                t[j + 1][k + 1][0] = self.j_tk[j][k];
                t[0][j + 1][k + 1] = self.t_jk[j][k];
                for i in 0..3 {
                    t[k + 1][i + 1][j + 1] = self.k_ij[k][i][j];
                }
            }
        }
        t
    }
}

/// Δ^α_{μν} such that Γ⁰₀₀ = Δ, Γ⁰ⱼ₀ = Δ, Γʲ₀₀ = Δ, Γʲ₀ₖ = ωδʲₖ + Δ,
/// Γ⁰ⱼₖ = ωg_{jk} + Δ and Γᵏᵢⱼ = Δ.
pub fn delta_christoffel(p: &PointGeometry) -> DeltaChristoffel {
    let gu = &p.gu;
    let g = &p.g;
    let om = p.omega;
    let mut out = DeltaChristoffel::default();

    let mut acc = gu[0][0] * p.d(0, 0, 0);
    for a in 1..4 {
        acc += 2.0 * gu[0][a] * p.d(0, 0, a) - gu[0][a] * p.d(a, 0, 0);
    }
    out.t_tt = 0.5 * acc;

    for j in 1..4 {
        let mut acc = gu[0][0] * p.d(j, 0, 0);
        for a in 1..4 {
            acc += gu[0][a] * (p.d(j, a, 0) - p.d(a, j, 0)) + 2.0 * om * gu[0][a] * g[j][a] + gu[0][a] * p.s[a][j];
        }
        out.t_jt[j - 1] = 0.5 * acc;

        let mut acc = gu[0][j] * p.d(0, 0, 0);
        for a in 1..4 {
            acc += 2.0 * gu[j][a] * p.d(0, 0, a) - gu[j][a] * p.d(a, 0, 0);
        }
        out.j_tt[j - 1] = 0.5 * acc;

        for k in 1..4 {
            let mut acc = gu[0][j] * p.d(k, 0, 0);
            let mut sub = -2.0 * om * gu[0][j] * g[0][k];
            for a in 1..4 {
                acc += gu[j][a] * p.d(k, 0, a) - gu[j][a] * p.d(a, 0, k);
                sub += gu[j][a] * p.s[a][k];
            }
            out.j_tk[j - 1][k - 1] = 0.5 * (acc + sub);

            let mut acc = gu[0][0] * (p.d(j, 0, k) + p.d(k, 0, j));
            for a in 1..4 {
                acc += gu[0][a] * (p.d(j, a, k) + p.d(k, a, j) - p.d(a, j, k));
            }
            let gu00p1 = gu[0][0] + 1.0;
            acc += p.s[j][k] - 2.0 * om * gu00p1 * g[j][k] - gu00p1 * p.s[j][k];
            out.t_jk[j - 1][k - 1] = 0.5 * acc;
        }
    }

    for k in 1..4 {
        for i in 1..4 {
            for j in i..4 {
                let mut acc =
                    gu[0][k] * (p.d(i, 0, j) + p.d(j, 0, i)) - gu[0][k] * p.s[i][j] - 2.0 * om * gu[0][k] * g[i][j];
                for a in 1..4 {
                    acc += gu[k][a] * (p.d(i, a, j) + p.d(j, i, a) - p.d(a, i, j));
                }
                out.k_ij[k - 1][i - 1][j - 1] = 0.5 * acc;
                out.k_ij[k - 1][j - 1][i - 1] = 0.5 * acc;
            }
        }
    }
    out
}

/// Contracted Christoffel symbols Γ^μ = g^{αβ}g^{μλ}Γ_{αλβ}.
pub fn contracted_christoffel(p: &PointGeometry) -> [f64; 4] {
    let mut lowered = [0.0; 4];
    for (lam, slot) in lowered.iter_mut().enumerate() {
        let mut acc = 0.0;
        for al in 0..4 {
            for be in 0..4 {
                acc += p.gu[al][be] * p.gm(al, lam, be);
            }
        }
        *slot = acc;
    }
    let mut out = [0.0; 4];
    for mu in 0..4 {
        out[mu] = (0..4).map(|lam| p.gu[mu][lam] * lowered[lam]).sum();
    }
    out
}

/// Gauge residual Γ^μ − 3ωδ^μ₀.
pub fn gauge_residual(p: &PointGeometry) -> [f64; 4] {
    let mut out = contracted_christoffel(p);
    out[0] -= 3.0 * p.omega;
    out
}

/// out[b][m][j] = Σ_{a,l} gᵃᵇ gˡᵐ T[a][l][j] over spatial indices (arrays
/// offset by one).
fn raise_pair(gu: &Mat4, t: &[[[f64; 3]; 3]; 3]) -> [[[f64; 3]; 3]; 3] {
    let mut first = [[[0.0; 3]; 3]; 3];
    for b in 0..3 {
        for l in 0..3 {
            for j in 0..3 {
                first[b][l][j] = (0..3).map(|a| gu[a + 1][b + 1] * t[a][l][j]).sum();
            }
        }
    }
    let mut out = [[[0.0; 3]; 3]; 3];
    for b in 0..3 {
        for m in 0..3 {
            for j in 0..3 {
                out[b][m][j] = (0..3).map(|l| gu[l + 1][m + 1] * first[b][l][j]).sum();
            }
        }
    }
    out
}

/// Error terms Δ_{A,μν} of A_{μν} = g^{αβ}g^{κλ}[(∂_α g_{νκ})(∂_β g_{μλ}) − Γ_{ανκ}Γ_{βμλ}]:
/// A₀₀ = 3ω² − ωgᵃᵇ∂_t g_{ab} + 2ωgᵃᵇ∂_a g_{0b} + Δ_{A,00},
/// A₀ⱼ = 2ωg⁰⁰∂_t g_{0j} − 2ω²g⁰⁰g_{0j} − ωg⁰⁰∂_j g₀₀ + ωgᵃᵇΓ_{ajb} + Δ_{A,0j},
/// A_{jk} = 2ωg⁰⁰∂_t g_{jk} − 2ω²g⁰⁰g_{jk} + Δ_{A,jk}.
pub fn delta_a(p: &PointGeometry) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    out[0][0] = delta_a_00(p);
    for j in 1..4 {
        let v = delta_a_0j(p, j);
        out[0][j] = v;
        out[j][0] = v;
    }
    let jk = delta_a_jk(p);
    for j in 0..3 {
        for k in 0..3 {
            out[j + 1][k + 1] = jk[j][k];
        }
    }
    out
}

fn delta_a_00(p: &PointGeometry) -> f64 {
    let gu = &p.gu;
    let w = &p.w;
    let dtg00 = p.d(0, 0, 0);
    let g000 = p.gm(0, 0, 0);
    let mut sum = gu[0][0] * gu[0][0] * (dtg00 * dtg00 - g000 * g000);
    for a in 1..4 {
        sum += gu[0][0] * gu[0][a] * (2.0 * dtg00 * (p.d(0, 0, a) + p.d(a, 0, 0)) - 4.0 * g000 * p.gm(0, 0, a));
    }
    for a in 1..4 {
        for b in 1..4 {
            sum += gu[0][0]
                * gu[a][b]
                * (p.d(0, 0, a) * p.d(0, 0, b) + p.d(a, 0, 0) * p.d(b, 0, 0) - 2.0 * p.gm(0, 0, a) * p.gm(0, 0, b));
            sum += gu[0][a]
                * gu[0][b]
                * (2.0 * dtg00 * p.d(a, 0, b) + 2.0 * p.d(0, 0, b) * p.d(a, 0, 0)
                    - 2.0 * g000 * p.gm(a, 0, b)
                    - 2.0 * p.gm(0, 0, b) * p.gm(0, 0, a));
            for l in 1..4 {
                sum += gu[a][b]
                    * gu[0][l]
                    * (2.0 * p.d(0, 0, a) * p.d(l, 0, b) + 2.0 * p.d(b, 0, 0) * p.d(a, 0, l)
                        - 4.0 * p.gm(0, 0, a) * p.gm(l, 0, b));
            }
        }
    }
    // terms quadratic in the spatial derivatives of g_{0l}
    for a in 1..4 {
        for b in 1..4 {
            for l in 1..4 {
                for m in 1..4 {
                    let gg = gu[a][b] * gu[l][m];
                    sum += gg * p.d(a, 0, l) * p.d(b, 0, m);
                    sum -= 0.25 * gg * (p.d(a, 0, l) + p.d(l, 0, a)) * (p.d(b, 0, m) + p.d(m, 0, b));
                }
            }
        }
    }
    for l in 1..4 {
        for m in 1..4 {
            for b in 1..4 {
                sum += 0.5 * gu[l][m] * w[b][l] * (p.d(b, 0, m) + p.d(m, 0, b));
            }
        }
    }
    for b in 1..4 {
        for l in 1..4 {
            sum -= 0.25 * w[b][l] * w[l][b];
        }
    }
    sum
}

fn delta_a_0j(p: &PointGeometry, j: usize) -> f64 {
    let gu = &p.gu;
    let w = &p.w;
    let om = p.omega;
    let dtg00 = p.d(0, 0, 0);
    let dtg0j = p.d(0, 0, j);
    let g000 = p.gm(0, 0, 0);
    let g0j0 = p.gm(0, j, 0);
    let mut sum = gu[0][0] * gu[0][0] * (dtg00 * dtg0j - g000 * g0j0);
    for a in 1..4 {
        sum += gu[0][0]
            * gu[0][a]
            * (dtg00 * (p.d(0, a, j) + p.d(a, 0, j)) + dtg0j * (p.d(0, 0, a) + p.d(a, 0, 0))
                - 2.0 * g000 * p.gm(0, j, a)
                - 2.0 * g0j0 * p.gm(0, 0, a));
        sum += gu[0][0] * w[a][j] * (p.d(0, 0, a) - 0.5 * p.d(a, 0, 0));
    }
    for a in 1..4 {
        for b in 1..4 {
            sum += 0.5 * gu[0][0] * gu[a][b] * p.d(a, 0, 0) * (p.d(b, 0, j) + p.d(j, 0, b));
            sum += gu[0][a]
                * gu[0][b]
                * (dtg00 * p.d(a, b, j)
                    + p.d(0, 0, b) * p.d(a, 0, j)
                    + p.d(a, 0, 0) * p.d(0, b, j)
                    + p.d(a, 0, b) * dtg0j
                    - g000 * p.gm(a, j, b)
                    - 2.0 * p.gm(0, 0, b) * p.gm(0, j, a)
                    - p.gm(a, 0, b) * g0j0);
            for l in 1..4 {
                let gg = gu[a][b] * gu[0][l];
                sum += gg
                    * (p.d(0, 0, a) * p.d(l, b, j)
                        + p.d(l, 0, a) * p.d(0, b, j)
                        + p.d(b, 0, 0) * p.d(a, l, j)
                        + p.d(b, 0, l) * p.d(a, 0, j)
                        - 2.0 * p.gm(0, 0, a) * p.gm(l, j, b));
                sum -= gg
                    * ((p.d(l, 0, a) + p.d(a, 0, l)) * p.gm(0, j, b)
                        - 0.5 * p.d(0, l, a) * (p.d(b, 0, j) - p.d(j, 0, b)));
            }
        }
    }
    for a in 1..4 {
        sum += om * gu[0][a] * p.s[a][j];
    }
    for l in 1..4 {
        for b in 1..4 {
            sum += 0.5 * gu[0][l] * w[b][l] * p.d(0, b, j);
        }
    }
    for a in 1..4 {
        for b in 1..4 {
            for l in 1..4 {
                for m in 1..4 {
                    sum += gu[a][b]
                        * gu[l][m]
                        * (p.d(a, 0, l) * p.d(b, m, j) - 0.5 * (p.d(a, 0, l) + p.d(l, 0, a)) * p.gm(b, j, m));
                }
            }
        }
    }
    for a in 1..4 {
        for b in 1..4 {
            for m in 1..4 {
                sum += 0.5 * gu[a][b] * w[m][a] * p.gm(b, j, m);
            }
        }
    }
    sum
}

fn delta_a_jk(p: &PointGeometry) -> Mat3 {
    let gu = &p.gu;
    let g = &p.g;
    let w = &p.w;
    let om = p.omega;

    // Σ gᵃᵇgᵐˡ[(∂_a g_{lj})(∂_b g_{mk}) − Γ_{ajl}Γ_{bkm}] via pre-raised tensors
    let mut dsp = [[[0.0; 3]; 3]; 3];
    let mut gsp = [[[0.0; 3]; 3]; 3];
    for a in 0..3 {
        for l in 0..3 {
            for j in 0..3 {
                dsp[a][l][j] = p.d(a + 1, l + 1, j + 1);
                gsp[a][j][l] = p.gm(a + 1, j + 1, l + 1);
            }
        }
    }
    let dsp_up = raise_pair(gu, &dsp);
    // raise the first and last index of Γ_{ajl}: out[b][j][m] = Σ gᵃᵇ gˡᵐ Γ_{ajl}
    let mut gsp_up = [[[0.0; 3]; 3]; 3];
    for b in 0..3 {
        for j in 0..3 {
            for m in 0..3 {
                let mut acc = 0.0;
                for a in 0..3 {
                    for l in 0..3 {
                        acc += gu[a + 1][b + 1] * gu[l + 1][m + 1] * gsp[a][j][l];
                    }
                }
                gsp_up[b][j][m] = acc;
            }
        }
    }

    let mut out = [[0.0; 3]; 3];
    for j in 1..4 {
        for k in j..4 {
            let dtg0j = p.d(0, 0, j);
            let dtg0k = p.d(0, 0, k);
            let g0j0 = p.gm(0, j, 0);
            let g0k0 = p.gm(0, k, 0);
            let mut sum = gu[0][0] * gu[0][0] * (dtg0j * dtg0k - g0j0 * g0k0);
            for a in 1..4 {
                sum += gu[0][0]
                    * gu[0][a]
                    * (dtg0j * (p.d(0, a, k) + p.d(a, 0, k)) + dtg0k * (p.d(0, a, j) + p.d(a, 0, j))
                        - 2.0 * g0j0 * p.gm(0, k, a)
                        - 2.0 * g0k0 * p.gm(0, j, a));
            }
            for a in 1..4 {
                for b in 1..4 {
                    sum += gu[0][0]
                        * gu[a][b]
                        * (p.d(a, 0, j) * p.d(b, 0, k)
                            - 0.5 * (p.d(a, 0, j) - p.d(j, 0, a)) * (p.d(b, 0, k) - p.d(k, 0, b)));
                }
            }
            for b in 1..4 {
                sum -= 0.5 * gu[0][0] * w[b][j] * (p.d(b, 0, k) - p.d(k, 0, b));
                sum -= 0.5 * gu[0][0] * w[b][k] * (p.d(b, 0, j) - p.d(j, 0, b));
            }
            for a in 1..4 {
                sum += om * gu[0][0] * (-g[0][k] * gu[0][a]) * p.d(0, a, j);
            }
            for b in 1..4 {
                sum += 0.5 * gu[0][0] * w[b][j] * p.s[b][k];
            }
            for a in 1..4 {
                for b in 1..4 {
                    sum += gu[0][a]
                        * gu[0][b]
                        * (dtg0j * p.d(a, b, k)
                            + p.d(0, b, j) * p.d(a, 0, k)
                            + p.d(a, 0, j) * p.d(0, b, k)
                            + p.d(a, b, j) * dtg0k
                            - g0j0 * p.gm(a, k, b)
                            - 2.0 * p.gm(0, j, b) * p.gm(0, k, a)
                            - p.gm(a, j, b) * g0k0);
                    for l in 1..4 {
                        sum += gu[a][b]
                            * gu[0][l]
                            * (p.d(0, a, j) * p.d(l, b, k)
                                + p.d(l, a, j) * p.d(0, b, k)
                                + p.d(b, 0, j) * p.d(a, l, k)
                                + p.d(b, l, j) * p.d(a, 0, k)
                                - 2.0 * p.gm(0, j, a) * p.gm(l, k, b)
                                - 2.0 * p.gm(l, j, a) * p.gm(0, k, b));
                    }
                }
            }
            let (jj, kk) = (j - 1, k - 1);
            for b in 0..3 {
                for m in 0..3 {
                    sum += dsp_up[b][m][jj] * dsp[b][m][kk] - gsp_up[b][jj][m] * gsp[b][kk][m];
                }
            }
            out[jj][kk] = sum;
            out[kk][jj] = sum;
        }
    }
    out
}

/// Error terms Δ_{C,00}, Δ_{C,0j} of
/// A₀₀ + 2ωΓ⁰ − 6ω² = ω∂_t g₀₀ + 3ω²(g₀₀+1) + 3ω²g₀₀ + Δ_{A,00} + Δ_{C,00} and
/// A₀ⱼ + 2ω(3ωg₀ⱼ − Γⱼ) = 4ω²g₀ⱼ − ωgᵃᵇΓ_{ajb} + Δ_{A,0j} + Δ_{C,0j}.
/// Δ_{C,00} carries three extra quadratic terms, ω((g⁰⁰)²−1)∂_t g₀₀ +
/// ωg⁰⁰g⁰ᵃ(∂_a g₀₀ + 2∂_t g₀ₐ), without which the first identity fails.
pub fn delta_c(p: &PointGeometry) -> (f64, [f64; 3]) {
    let gu = &p.gu;
    let g = &p.g;
    let om = p.omega;
    let gu00p1 = gu[0][0] + 1.0;
    let mut mixed = 0.0;
    for a in 1..4 {
        mixed += gu[0][a] * g[0][a];
    }
    let mut trace_sub = -2.0 * om * mixed;
    let mut div_shift = 0.0;
    for a in 1..4 {
        for b in 1..4 {
            trace_sub += gu[a][b] * p.s[a][b];
            div_shift += gu[a][b] * p.d(a, 0, b);
        }
    }
    let g00p1 = g[0][0] + 1.0;
    let mut c00 =
        -6.0 / g[0][0] * om * om * (g00p1 * g00p1 - mixed) - om * gu00p1 * trace_sub + 2.0 * om * gu00p1 * div_shift;
    // terms from the g⁰⁰-weighted part of 2ωΓ⁰ that the printed identity omits
    c00 += om * (gu[0][0] * gu[0][0] - 1.0) * p.d(0, 0, 0);
    for a in 1..4 {
        c00 += om * gu[0][0] * gu[0][a] * (p.d(a, 0, 0) + 2.0 * p.d(0, 0, a));
    }
    for a in 1..4 {
        for b in 1..4 {
            c00 += 4.0 * om * gu[0][a] * gu[0][b] * p.gm(0, a, b);
            for l in 1..4 {
                c00 += 2.0 * om * gu[a][b] * gu[0][l] * p.gm(a, l, b);
            }
        }
    }
    let mut c0 = [0.0; 3];
    for j in 1..4 {
        let mut acc = 2.0 * om * om * gu00p1 * g[0][j];
        for a in 1..4 {
            acc -= 2.0 * om * gu[0][a] * (p.s[a][j] + p.d(a, 0, j) - p.d(j, 0, a));
        }
        c0[j - 1] = acc;
    }
    (c00, c0)
}

/// gᵃᵇΓ_{ajb} for each j.
pub fn spatial_trace_gamma(p: &PointGeometry) -> [f64; 3] {
    let mut out = [0.0; 3];
    for j in 1..4 {
        let mut acc = 0.0;
        for a in 1..4 {
            for b in 1..4 {
                acc += p.gu[a][b] * p.gm(a, j, b);
            }
        }
        out[j - 1] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{closed_form, CosmologyParams};
    use crate::sampling::{random_geometry, RandomPoint};
    use dust_einstein_reference as reference;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_close(a: f64, b: f64, scale: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * scale.max(1.0)
    }

    #[test]
    fn minkowski_and_flrw_inverse() {
        let inv = invert_metric(&MetricPoint::minkowski()).unwrap();
        assert_eq!(inv.gu00, -1.0);
        assert_eq!(inv.gusp, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let inv = invert_metric(&MetricPoint::flrw(2.0)).unwrap();
        assert_eq!(inv.gusp[1][1], 0.25);
        assert_eq!(inv.gu0, [0.0; 3]);
    }

    #[test]
    fn shifted_metric_inverse_reference() {
        let m =
            MetricPoint { g00: -1.2, g0: [0.1, 0.0, 0.0], gsp: [[4.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 4.0]] };
        let inv = invert_metric(&m).unwrap();
        assert!((inv.gu00 - 1.0 / (-1.2 - 0.0025)).abs() < 1e-15);
        assert!((inv.gu00 + 0.831601).abs() < 1e-6);
        let direct = reference::inverse4(&m.to_matrix()).unwrap();
        for mu in 0..4 {
            for nu in 0..4 {
                assert!((inv.to_matrix()[mu][nu] - direct[mu][nu]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn invert_metric_errors() {
        let mut m = MetricPoint::minkowski();
        m.g00 = 0.1;
        assert!(matches!(invert_metric(&m), Err(AlgebraError::NonNegativeG00 { .. })));
        let mut m = MetricPoint::minkowski();
        m.gsp[2][2] = -1.0;
        assert!(matches!(invert_metric(&m), Err(AlgebraError::SpatialNotPositiveDefinite { .. })));
    }

    #[test]
    fn inverse_matches_direct_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let pt = RandomPoint::draw(&mut rng, 0.3);
            let inv = invert_metric(&pt.metric).unwrap().to_matrix();
            let direct = reference::inverse4(&pt.metric.to_matrix()).unwrap();
            let scale = direct.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            for mu in 0..4 {
                for nu in 0..4 {
                    assert!(rel_close(inv[mu][nu], direct[mu][nu], scale, 1e-12));
                }
            }
        }
    }

    #[test]
    fn velocity_normalization() {
        let u0 = solve_u0(&MetricPoint::minkowski(), &[0.0; 3]).unwrap();
        assert_eq!(u0, 1.0);
        let u0 = solve_u0(&MetricPoint::minkowski(), &[0.6, 0.0, 0.0]).unwrap();
        assert!((u0 - 1.36f64.sqrt()).abs() < 1e-15);
        let u0 = solve_u0(&MetricPoint::flrw(2.0), &[0.1, 0.0, 0.0]).unwrap();
        assert!((u0 - 1.04f64.sqrt()).abs() < 1e-15);
        // a timelike spatial direction makes uᵃ itself timelike
        let mut m = MetricPoint::minkowski();
        m.gsp[0][0] = -1.0;
        assert!(matches!(solve_u0(&m, &[2.0, 0.0, 0.0]), Err(AlgebraError::SpacelikeVelocity { .. })));
    }

    #[test]
    fn velocity_normalization_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let pt = RandomPoint::draw(&mut rng, 0.3);
            let u0 = solve_u0(&pt.metric, &pt.usp).unwrap();
            let u = [u0, pt.usp[0], pt.usp[1], pt.usp[2]];
            let g = pt.metric.to_matrix();
            let mut norm = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    norm += g[a][b] * u[a] * u[b];
                }
            }
            assert!(u0 > 0.0);
            assert!((norm + 1.0).abs() < 1e-12 * u0 * u0);
        }
    }

    #[test]
    fn flrw_christoffels_and_deltas() {
        let params = CosmologyParams::new(3.0, 3.0).unwrap();
        let bg = closed_form(&params, 0.8);
        let a = bg.a;
        let adot = bg.omega * a;
        let m = MetricPoint::flrw(a);
        let mut dg = [[[0.0; 4]; 4]; 4];
        for j in 1..4 {
            dg[0][j][j] = 2.0 * a * adot;
        }
        let gamma = christoffel_first_kind(&dg);
        for j in 1..4 {
            assert!((gamma[j][0][j] + a * adot).abs() < 1e-12);
            assert!((gamma[j][j][0] - a * adot).abs() < 1e-12);
        }
        let p = PointGeometry::new(&m, &dg, &[[0.0; 3]; 3], &bg).unwrap();
        let d = delta_christoffel(&p);
        assert!(d.to_tensor().iter().flatten().flatten().all(|v| v.abs() < 1e-12));
        assert!(delta_a(&p).iter().flatten().all(|v| v.abs() < 1e-12));
        let (c00, c0) = delta_c(&p);
        assert!(c00.abs() < 1e-12 && c0.iter().all(|v| v.abs() < 1e-12));
        let res = gauge_residual(&p);
        assert!(res.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn minkowski_with_expanding_background() {
        let params = CosmologyParams::new(3.0, 0.0).unwrap();
        let bg = closed_form(&params, 0.0);
        let dg = [[[0.0; 4]; 4]; 4];
        let m = MetricPoint::minkowski();
        let dt_h = dt_h_from_metric(&m, &dg, &bg);
        let p = PointGeometry::new(&m, &dg, &dt_h, &bg).unwrap();
        let d = delta_christoffel(&p);
        for j in 0..3 {
            for k in 0..3 {
                let expect = if j == k { -bg.omega } else { 0.0 };
                assert!((d.j_tk[j][k] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn christoffel_decomposition_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let (pt, p) = random_geometry(&mut rng, 0.3);
            let direct = reference::christoffel_second(&pt.metric.to_matrix(), &pt.dg).unwrap();
            let delta = delta_christoffel(&p).to_tensor();
            let scale = direct.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            for al in 0..4 {
                for mu in 0..4 {
                    for nu in 0..4 {
                        let mut principal = 0.0;
                        if al > 0 && mu == 0 && nu == al || al > 0 && nu == 0 && mu == al {
                            principal = p.omega;
                        }
                        if al == 0 && mu > 0 && nu > 0 {
                            principal = p.omega * p.g[mu][nu];
                        }
                        assert!(
                            rel_close(principal + delta[al][mu][nu], direct[al][mu][nu], scale, 1e-11),
                            "Γ^{al}_{mu}{nu}: {} vs {}",
                            principal + delta[al][mu][nu],
                            direct[al][mu][nu]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn gauge_residual_matches_raised_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let (pt, p) = random_geometry(&mut rng, 0.3);
            let direct = reference::contracted_christoffel(&pt.metric.to_matrix(), &pt.dg).unwrap();
            let ours = gauge_residual(&p);
            let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for mu in 0..4 {
                let expect = direct[mu] - if mu == 0 { 3.0 * p.omega } else { 0.0 };
                assert!(rel_close(ours[mu], expect, scale, 1e-12));
            }
        }
    }

    #[test]
    fn a_tensor_decomposition_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let (pt, p) = random_geometry(&mut rng, 0.3);
            let g = pt.metric.to_matrix();
            let a = reference::a_tensor(&g, &pt.dg).unwrap();
            let da = delta_a(&p);
            let gu = p.gu;
            let om = p.omega;
            let dg = &pt.dg;
            let scale = a.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
            let mut tr_dt = 0.0;
            let mut div = 0.0;
            for i in 1..4 {
                for j in 1..4 {
                    tr_dt += gu[i][j] * dg[0][i][j];
                    div += gu[i][j] * dg[i][0][j];
                }
            }
            let p00 = 3.0 * om * om - om * tr_dt + 2.0 * om * div;
            assert!(rel_close(p00 + da[0][0], a[0][0], scale, 1e-11), "00: {} vs {}", p00 + da[0][0], a[0][0]);
            let trg = spatial_trace_gamma(&p);
            for j in 1..4 {
                let pj = 2.0 * om * gu[0][0] * dg[0][0][j]
                    - 2.0 * om * om * gu[0][0] * g[0][j]
                    - om * gu[0][0] * dg[j][0][0]
                    + om * trg[j - 1];
                assert!(rel_close(pj + da[0][j], a[0][j], scale, 1e-11), "0{j}: {} vs {}", pj + da[0][j], a[0][j]);
                for k in 1..4 {
                    let pjk = 2.0 * om * gu[0][0] * dg[0][j][k] - 2.0 * om * om * gu[0][0] * g[j][k];
                    assert!(
                        rel_close(pjk + da[j][k], a[j][k], scale, 1e-11),
                        "{j}{k}: {} vs {}",
                        pjk + da[j][k],
                        a[j][k]
                    );
                }
            }
        }
    }

    #[test]
    fn modified_ricci_reduces_to_wave_operator_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let pt = RandomPoint::draw(&mut rng, 0.3);
            let g = pt.metric.to_matrix();
            let mut ddg = [[[[0.0; 4]; 4]; 4]; 4];
            for s in 0..4 {
                for l in s..4 {
                    for m in 0..4 {
                        for n in m..4 {
                            let v = rng.random_range(-0.5..0.5);
                            ddg[s][l][m][n] = v;
                            ddg[s][l][n][m] = v;
                            ddg[l][s][m][n] = v;
                            ddg[l][s][n][m] = v;
                        }
                    }
                }
            }
            let om = pt.bg.omega;
            let om_dot = pt.bg.omega_dot;
            let hat = reference::modified_ricci(&g, &pt.dg, &ddg, om, om_dot).unwrap();
            let a = reference::a_tensor(&g, &pt.dg).unwrap();
            let gi = reference::inverse4(&g).unwrap();
            for mu in 0..4 {
                for nu in 0..4 {
                    let mut boxg = 0.0;
                    for al in 0..4 {
                        for be in 0..4 {
                            boxg += gi[al][be] * ddg[al][be][mu][nu];
                        }
                    }
                    let d_om = |i: usize| if i == 0 { om_dot } else { 0.0 };
                    let form = -0.5 * boxg
                        + 1.5 * (g[0][mu] * d_om(nu) + g[0][nu] * d_om(mu))
                        + 1.5 * om * pt.dg[0][mu][nu]
                        + a[mu][nu];
                    let scale = hat[mu][nu].abs().max(a[mu][nu].abs()).max(boxg.abs());
                    assert!(rel_close(form, hat[mu][nu], scale, 1e-11), "{mu}{nu}: {form} vs {}", hat[mu][nu]);
                }
            }
        }
    }

    #[test]
    fn gauge_coupled_decomposition_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..2000 {
            let (pt, p) = random_geometry(&mut rng, 0.3);
            let g = pt.metric.to_matrix();
            let a = reference::a_tensor(&g, &pt.dg).unwrap();
            let up = reference::contracted_christoffel(&g, &pt.dg).unwrap();
            let da = delta_a(&p);
            let (c00, c0) = delta_c(&p);
            let om = p.omega;
            let scale = a.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
            let lhs00 = a[0][0] + 2.0 * om * up[0] - 6.0 * om * om;
            let rhs00 =
                om * pt.dg[0][0][0] + 3.0 * om * om * (g[0][0] + 1.0) + 3.0 * om * om * g[0][0] + da[0][0] + c00;
            assert!(rel_close(lhs00, rhs00, scale, 1e-11), "00: {lhs00} vs {rhs00}");
            let trg = spatial_trace_gamma(&p);
            for j in 1..4 {
                let lower_j: f64 = (0..4).map(|l| g[j][l] * up[l]).sum();
                let lhs = a[0][j] + 2.0 * om * (3.0 * om * g[0][j] - lower_j);
                let rhs = 4.0 * om * om * g[0][j] - om * trg[j - 1] + da[0][j] + c0[j - 1];
                assert!(rel_close(lhs, rhs, scale, 1e-11), "0{j}: {lhs} vs {rhs}");
            }
        }
    }
}
