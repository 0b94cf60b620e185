//! Compressible neo-Hookean material.
//!
//! `W = μ/2 (I₁ − 3) − μ ln J + λ/2 (ln J)²` with `I₁ = tr(FᵀF)`, `J = det F`.
//! Every function is unit-agnostic: stresses come out in the units of `mu`
//! and `lambda`.

use super::FemError;
use crate::Mat3;

fn det_checked(f: &Mat3) -> Result<f64, FemError> {
    let j = f.determinant();
    if j > 0.0 && j.is_finite() {
        Ok(j)
    } else {
        Err(FemError::Inverted { det: j })
    }
}

pub fn strain_energy_density(f: &Mat3, mu: f64, lambda: f64) -> Result<f64, FemError> {
    let ln_j = det_checked(f)?.ln();
    let i1 = f.norm_squared();
    Ok(0.5 * mu * (i1 - 3.0) - mu * ln_j + 0.5 * lambda * ln_j * ln_j)
}

/// First Piola–Kirchhoff stress `P = μ(F − F⁻ᵀ) + λ ln J F⁻ᵀ`.
pub fn first_piola(f: &Mat3, mu: f64, lambda: f64) -> Result<Mat3, FemError> {
    let ln_j = det_checked(f)?.ln();
    let f_inv_t = f.try_inverse().ok_or(FemError::Inverted { det: 0.0 })?.transpose();
    Ok(f * mu + f_inv_t * (lambda * ln_j - mu))
}

/// Cauchy stress `σ = (μ/J)(B − I) + (λ ln J / J) I`, symmetrized.
pub fn cauchy_stress(f: &Mat3, mu: f64, lambda: f64) -> Result<Mat3, FemError> {
    let j = det_checked(f)?;
    let b = f * f.transpose();
    let s = (b - Mat3::identity()) * (mu / j) + Mat3::identity() * (lambda * j.ln() / j);
    Ok((s + s.transpose()) * 0.5)
}

/// Green–Lagrange strain `E = (FᵀF − I)/2`.
pub fn green_lagrange(f: &Mat3) -> Mat3 {
    (f.transpose() * f - Mat3::identity()) * 0.5
}

/// Material tangent `A = ∂P/∂F` as `a[i][J][k][L]`.
pub fn tangent(f: &Mat3, mu: f64, lambda: f64) -> Result<[[[[f64; 3]; 3]; 3]; 3], FemError> {
    let ln_j = det_checked(f)?.ln();
    let fi = f.try_inverse().ok_or(FemError::Inverted { det: 0.0 })?;
    let c1 = mu - lambda * ln_j;
    let mut a = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for jj in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let d = if i == k && jj == l { mu } else { 0.0 };
                    a[i][jj][k][l] = d + c1 * fi[(jj, k)] * fi[(l, i)] + lambda * fi[(jj, i)] * fi[(l, k)];
                }
            }
        }
    }
    Ok(a)
}
