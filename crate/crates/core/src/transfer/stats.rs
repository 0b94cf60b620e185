//! Texture and agreement statistics for element fields.

use super::{ElementField, TransferError};
use crate::mesh::{HexMesh, Part};
use serde::{Deserialize, Serialize};

/// Neighbour-deviation texture of a field: with `d_i = v_i − mean(face
/// neighbours of i)`, roughness is `mean |d_i|` and rms is `sqrt(mean d_i²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub roughness: f64,
    pub rms: f64,
    /// Elements that contributed (selected and with a selected neighbour).
    pub count: usize,
}

/// Texture over elements whose part is in `parts` (all elements when empty).
/// Only neighbours inside the selection count.
pub fn texture_stats(mesh: &HexMesh, field: &ElementField, parts: &[Part]) -> Result<Texture, TransferError> {
    if field.len() != mesh.element_count() {
        return Err(TransferError::FieldSize(field.len(), mesh.element_count()));
    }
    let selected: Vec<bool> = mesh.parts().iter().map(|p| parts.is_empty() || parts.contains(p)).collect();
    let neighbours = mesh.face_neighbours();
    let (mut sum_abs, mut sum_sq, mut count) = (0.0, 0.0, 0usize);
    for (e, nb) in neighbours.iter().enumerate() {
        if !selected[e] {
            continue;
        }
        let (mut acc, mut n) = (0.0, 0usize);
        for &o in nb.iter().filter(|&&o| selected[o]) {
            acc += field.values[o];
            n += 1;
        }
        if n == 0 {
            continue;
        }
        let d = field.values[e] - acc / n as f64;
        sum_abs += d.abs();
        sum_sq += d * d;
        count += 1;
    }
    if count == 0 {
        return Err(TransferError::EmptySelection);
    }
    Ok(Texture { roughness: sum_abs / count as f64, rms: (sum_sq / count as f64).sqrt(), count })
}

/// Bland–Altman agreement of two paired fields plus the scatter fit of `b` on `a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub n: usize,
    /// Mean of `a − b`.
    pub bias: f64,
    /// Sample standard deviation of `a − b`.
    pub sd: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    /// Least-squares line `b ≈ slope · a + intercept`.
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination of that line.
    pub r_squared: f64,
}

pub fn agreement(a: &ElementField, b: &ElementField) -> Result<AgreementStats, TransferError> {
    agreement_values(&a.values, &b.values)
}

pub fn agreement_values(a: &[f64], b: &[f64]) -> Result<AgreementStats, TransferError> {
    if a.len() != b.len() {
        return Err(TransferError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 3 {
        return Err(TransferError::TooFewPairs(n));
    }
    let nf = n as f64;
    let bias = a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / nf;
    let var_d = a.iter().zip(b).map(|(x, y)| (x - y - bias).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var_d.sqrt();

    let mean_a = a.iter().sum::<f64>() / nf;
    let mean_b = b.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = mean_b - slope * mean_a;
    let ss_res: f64 = a.iter().zip(b).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r_squared = if syy > 0.0 {
        1.0 - ss_res / syy
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(AgreementStats {
        n,
        bias,
        sd,
        loa_low: bias - 1.96 * sd,
        loa_high: bias + 1.96 * sd,
        slope,
        intercept,
        r_squared,
    })
}
