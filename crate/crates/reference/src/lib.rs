//! Reference evaluations straight from the textbook definitions, written
//! without any of the 3+1 splittings or error-term decompositions used by the
//! solver. Tests compare the solver against these.
//!
//! Conventions: `dg[σ][μ][ν] = ∂_σ g_{μν}`, `ddg[σ][λ][μ][ν] = ∂_σ∂_λ g_{μν}`.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::Matrix4;

pub type Mat4 = [[f64; 4]; 4];
pub type Tensor3 = [[[f64; 4]; 4]; 4];
pub type Tensor4 = [[[[f64; 4]; 4]; 4]; 4];

/// Dense 4×4 inverse by LU decomposition.
pub fn inverse4(g: &Mat4) -> Option<Mat4> {
    let m = Matrix4::from_fn(|i, j| g[i][j]);
    let inv = m.try_inverse()?;
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = inv[(i, j)];
        }
    }
    Some(out)
}

/// low[λ][μ][ν] = ½(∂_μ g_{λν} + ∂_ν g_{λμ} − ∂_λ g_{μν}).
fn lowered(dg: &Tensor3) -> Tensor3 {
    let mut out = [[[0.0; 4]; 4]; 4];
    for l in 0..4 {
        for m in 0..4 {
            for n in 0..4 {
                out[l][m][n] = 0.5 * (dg[m][l][n] + dg[n][l][m] - dg[l][m][n]);
            }
        }
    }
    out
}

/// Γ^α_{μν} = ½g^{αλ}(∂_μ g_{λν} + ∂_ν g_{μλ} − ∂_λ g_{μν}), indexed [α][μ][ν].
pub fn christoffel_second(g: &Mat4, dg: &Tensor3) -> Option<Tensor3> {
    let gi = inverse4(g)?;
    let low = lowered(dg);
    let mut out = [[[0.0; 4]; 4]; 4];
    for a in 0..4 {
        for m in 0..4 {
            for n in 0..4 {
                out[a][m][n] = (0..4).map(|l| gi[a][l] * low[l][m][n]).sum();
            }
        }
    }
    Some(out)
}

/// Γ^μ = g^{αβ}Γ^μ_{αβ}.
pub fn contracted_christoffel(g: &Mat4, dg: &Tensor3) -> Option<[f64; 4]> {
    let gi = inverse4(g)?;
    let gam = christoffel_second(g, dg)?;
    let mut out = [0.0; 4];
    for (mu, v) in out.iter_mut().enumerate() {
        for a in 0..4 {
            for b in 0..4 {
                *v += gi[a][b] * gam[mu][a][b];
            }
        }
    }
    Some(out)
}

/// A_{μν} = g^{αβ}g^{κλ}[(∂_α g_{νκ})(∂_β g_{μλ}) − Γ_{ανκ}Γ_{βμλ}] with
/// Γ_{ανκ} = ½(∂_α g_{νκ} + ∂_κ g_{αν} − ∂_ν g_{ακ}).
pub fn a_tensor(g: &Mat4, dg: &Tensor3) -> Option<Mat4> {
    let gi = inverse4(g)?;
    let first = |a: usize, n: usize, k: usize| 0.5 * (dg[a][n][k] + dg[k][a][n] - dg[n][a][k]);
    let mut out = [[0.0; 4]; 4];
    for mu in 0..4 {
        for nu in 0..4 {
            let mut acc = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    for k in 0..4 {
                        for l in 0..4 {
                            acc +=
                                gi[a][b] * gi[k][l] * (dg[a][nu][k] * dg[b][mu][l] - first(a, nu, k) * first(b, mu, l));
                        }
                    }
                }
            }
            out[mu][nu] = acc;
        }
    }
    Some(out)
}

/// ∂_σ Γ^α_{μν}, indexed [σ][α][μ][ν].
fn christoffel_derivative(g: &Mat4, dg: &Tensor3, ddg: &Tensor4) -> Option<Tensor4> {
    let gi = inverse4(g)?;
    let low = lowered(dg);
    let mut out = [[[[0.0; 4]; 4]; 4]; 4];
    for s in 0..4 {
        // ∂_σ g^{αλ} = −g^{αβ}(∂_σ g_{βγ})g^{γλ}
        let mut dgi = [[0.0; 4]; 4];
        for a in 0..4 {
            for l in 0..4 {
                let mut acc = 0.0;
                for b in 0..4 {
                    for c in 0..4 {
                        acc -= gi[a][b] * dg[s][b][c] * gi[c][l];
                    }
                }
                dgi[a][l] = acc;
            }
        }
        for a in 0..4 {
            for m in 0..4 {
                for n in 0..4 {
                    let mut acc = 0.0;
                    for l in 0..4 {
                        let dlow = 0.5 * (ddg[s][m][l][n] + ddg[s][n][l][m] - ddg[s][l][m][n]);
                        acc += dgi[a][l] * low[l][m][n] + gi[a][l] * dlow;
                    }
                    out[s][a][m][n] = acc;
                }
            }
        }
    }
    Some(out)
}

/// Ric_{μν} = ∂_αΓ^α_{μν} − ∂_νΓ^α_{αμ} + Γ^α_{αλ}Γ^λ_{μν} − Γ^α_{νλ}Γ^λ_{αμ}.
pub fn ricci(g: &Mat4, dg: &Tensor3, ddg: &Tensor4) -> Option<Mat4> {
    let gam = christoffel_second(g, dg)?;
    let dgam = christoffel_derivative(g, dg, ddg)?;
    let mut out = [[0.0; 4]; 4];
    for mu in 0..4 {
        for nu in 0..4 {
            let mut acc = 0.0;
            for a in 0..4 {
                acc += dgam[a][a][mu][nu] - dgam[nu][a][a][mu];
                for l in 0..4 {
                    acc += gam[a][a][l] * gam[l][mu][nu] - gam[a][nu][l] * gam[l][a][mu];
                }
            }
            out[mu][nu] = acc;
        }
    }
    Some(out)
}

/// Ric_{μν} + ½{D_μ(3ωg_{ν0} − Γ_ν) + D_ν(3ωg_{μ0} − Γ_μ)} with Γ_ν = g_{νμ}Γ^μ
/// and ω = ω(t).
pub fn modified_ricci(g: &Mat4, dg: &Tensor3, ddg: &Tensor4, omega: f64, omega_dot: f64) -> Option<Mat4> {
    let gi = inverse4(g)?;
    let ric = ricci(g, dg, ddg)?;
    let gam = christoffel_second(g, dg)?;
    let low = lowered(dg);
    let up = contracted_christoffel(g, dg)?;
    let mut x = [0.0; 4];
    for nu in 0..4 {
        let lowered_gamma: f64 = (0..4).map(|m| g[nu][m] * up[m]).sum();
        x[nu] = 3.0 * omega * g[nu][0] - lowered_gamma;
    }
    // ∂_σ X_ν with Γ_ν = g^{αβ} low[ν][α][β]
    let mut dx = [[0.0; 4]; 4];
    for s in 0..4 {
        let mut dgi = [[0.0; 4]; 4];
        for a in 0..4 {
            for l in 0..4 {
                for b in 0..4 {
                    for c in 0..4 {
                        dgi[a][l] -= gi[a][b] * dg[s][b][c] * gi[c][l];
                    }
                }
            }
        }
        for nu in 0..4 {
            let mut dgam_low = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    let dlow = 0.5 * (ddg[s][a][nu][b] + ddg[s][b][nu][a] - ddg[s][nu][a][b]);
                    dgam_low += dgi[a][b] * low[nu][a][b] + gi[a][b] * dlow;
                }
            }
            let domega = if s == 0 { omega_dot } else { 0.0 };
            dx[s][nu] = 3.0 * domega * g[nu][0] + 3.0 * omega * dg[s][nu][0] - dgam_low;
        }
    }
    let cov = |m: usize, n: usize| dx[m][n] - (0..4).map(|l| gam[l][m][n] * x[l]).sum::<f64>();
    let mut out = [[0.0; 4]; 4];
    for mu in 0..4 {
        for nu in 0..4 {
            out[mu][nu] = ric[mu][nu] + 0.5 * (cov(mu, nu) + cov(nu, mu));
        }
    }
    Some(out)
}

/// Residuals of the modified field equations,
/// E_{μν} = R̂ic_{μν} + I_{μν} − Λg_{μν} − ρ(u_μu_ν + ½g_{μν}), where
/// I₀₀ = 2ωΓ⁰ − 6ω², I₀ⱼ = −2ω(Γ_j − 3ωg_{0j}) and I_{jk} = 0.
/// `u` is the contravariant four-velocity.
#[allow(clippy::too_many_arguments)]
pub fn modified_equation_residual(
    g: &Mat4,
    dg: &Tensor3,
    ddg: &Tensor4,
    omega: f64,
    omega_dot: f64,
    lambda: f64,
    rho: f64,
    u: &[f64; 4],
) -> Option<Mat4> {
    let mut out = modified_ricci(g, dg, ddg, omega, omega_dot)?;
    let up = contracted_christoffel(g, dg)?;
    let mut ul = [0.0; 4];
    for m in 0..4 {
        ul[m] = (0..4).map(|n| g[m][n] * u[n]).sum();
    }
    for mu in 0..4 {
        for nu in 0..4 {
            out[mu][nu] -= lambda * g[mu][nu] + rho * (ul[mu] * ul[nu] + 0.5 * g[mu][nu]);
        }
    }
    out[0][0] += 2.0 * omega * up[0] - 6.0 * omega * omega;
    for j in 1..4 {
        let lowered_gamma: f64 = (0..4).map(|m| g[j][m] * up[m]).sum();
        let v = -2.0 * omega * (lowered_gamma - 3.0 * omega * g[0][j]);
        out[0][j] += v;
        out[j][0] += v;
    }
    Some(out)
}

/// ∂_t∂_t g_{μν} implied by the modified equations, given every other first
/// and second derivative. The residual is affine in ∂_t∂_t g with slope
/// −½g⁰⁰, which is recovered numerically from two evaluations.
#[allow(clippy::too_many_arguments)]
pub fn solve_metric_acceleration(
    g: &Mat4,
    dg: &Tensor3,
    ddg_spatial: &Tensor4,
    omega: f64,
    omega_dot: f64,
    lambda: f64,
    rho: f64,
    u: &[f64; 4],
) -> Option<Mat4> {
    let mut ddg = *ddg_spatial;
    for m in 0..4 {
        for n in 0..4 {
            ddg[0][0][m][n] = 0.0;
        }
    }
    let base = modified_equation_residual(g, dg, &ddg, omega, omega_dot, lambda, rho, u)?;
    let mut out = [[0.0; 4]; 4];
    for mu in 0..4 {
        for nu in mu..4 {
            let mut probe = ddg;
            probe[0][0][mu][nu] = 1.0;
            probe[0][0][nu][mu] = 1.0;
            let shifted = modified_equation_residual(g, dg, &probe, omega, omega_dot, lambda, rho, u)?;
            let slope = shifted[mu][nu] - base[mu][nu];
            let v = -base[mu][nu] / slope;
            out[mu][nu] = v;
            out[nu][mu] = v;
        }
    }
    Some(out)
}

/// Future-directed u⁰ from g_{αβ}u^αu^β = −1, solved as the quadratic
/// g₀₀x² + 2(g₀ₐuᵃ)x + (g_{ab}uᵃuᵇ + 1) = 0.
pub fn normalized_u0(g: &Mat4, usp: &[f64; 3]) -> Option<f64> {
    let a = g[0][0];
    let mut b = 0.0;
    let mut c = 1.0;
    for i in 0..3 {
        b += 2.0 * g[0][i + 1] * usp[i];
        for j in 0..3 {
            c += g[i + 1][j + 1] * usp[i] * usp[j];
        }
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 || a >= 0.0 {
        return None;
    }
    // a < 0 and c > 0 give one positive root
    Some((-b - disc.sqrt()) / (2.0 * a))
}

/// Time derivatives (∂_tρ, ∂_tuʲ) of the dust equations
/// u^α∂_αρ + ρ∂_αu^α + ρΓ^α_{αβ}u^β = 0 and u^α∂_αuʲ + Γʲ_{αβ}u^αu^β = 0, with
/// u⁰ eliminated through the normalization. `du[a][j] = ∂_a uʲ` for spatial a.
pub fn dust_rates(
    g: &Mat4,
    dg: &Tensor3,
    rho: f64,
    grad_rho: &[f64; 3],
    usp: &[f64; 3],
    du: &[[f64; 3]; 3],
) -> Option<(f64, [f64; 3])> {
    let u0 = normalized_u0(g, usp)?;
    let u = [u0, usp[0], usp[1], usp[2]];
    let gam = christoffel_second(g, dg)?;
    let mut ul = [0.0; 4];
    for m in 0..4 {
        ul[m] = (0..4).map(|n| g[m][n] * u[n]).sum();
    }
    let quad = |d: &[[f64; 4]; 4]| {
        let mut acc = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                acc += d[a][b] * u[a] * u[b];
            }
        }
        acc
    };
    let mut dt_u = [0.0; 3];
    for j in 0..3 {
        let mut acc = 0.0;
        for a in 0..3 {
            acc += usp[a] * du[a][j];
        }
        acc += quad(&gam[j + 1]);
        dt_u[j] = -acc / u0;
    }
    // ∂_σu⁰ = −(1/u₀){u_a∂_σuᵃ + ½(∂_σ g_{αβ})u^αu^β}
    let dt_u0 = -((0..3).map(|a| ul[a + 1] * dt_u[a]).sum::<f64>() + 0.5 * quad(&dg[0])) / ul[0];
    let mut div = dt_u0;
    let mut transport = 0.0;
    for a in 0..3 {
        div += du[a][a];
        transport += usp[a] * grad_rho[a];
    }
    let mut trace = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            trace += gam[a][a][b] * u[b];
        }
    }
    let dt_rho = -(transport + rho * div + rho * trace) / u0;
    Some((dt_rho, dt_u))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flrw(a: f64, adot: f64) -> (Mat4, Tensor3) {
        let mut g = [[0.0; 4]; 4];
        g[0][0] = -1.0;
        let mut dg = [[[0.0; 4]; 4]; 4];
        for j in 1..4 {
            g[j][j] = a * a;
            dg[0][j][j] = 2.0 * a * adot;
        }
        (g, dg)
    }

    #[test]
    fn flrw_contracted_christoffel_is_three_omega() {
        let (g, dg) = flrw(2.0, 3.0);
        let up = contracted_christoffel(&g, &dg).unwrap();
        assert!((up[0] - 4.5).abs() < 1e-14);
        assert!(up[1..].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn sphere_like_ricci_of_flrw_de_sitter() {
        // a = e^{Ht}: Ric = Λg with Λ = 3H²
        let h = 0.7;
        let t: f64 = 0.3;
        let a = (h * t).exp();
        let (g, dg) = flrw(a, h * a);
        let mut ddg = [[[[0.0; 4]; 4]; 4]; 4];
        for j in 1..4 {
            ddg[0][0][j][j] = 4.0 * h * h * a * a;
        }
        let ric = ricci(&g, &dg, &ddg).unwrap();
        for mu in 0..4 {
            for nu in 0..4 {
                assert!((ric[mu][nu] - 3.0 * h * h * g[mu][nu]).abs() < 1e-12, "{mu}{nu}");
            }
        }
    }

    #[test]
    fn quadratic_root_is_future_directed() {
        let (g, _) = flrw(1.0, 0.0);
        assert!((normalized_u0(&g, &[0.6, 0.0, 0.0]).unwrap() - 1.36f64.sqrt()).abs() < 1e-14);
    }
}
