//! Clamped linear T₂ → dynamic-modulus relation and its perturbations.
//!
//! The baseline relation is `E_D = −(3.5/3)·10⁵ · T2 + 9.75·10⁶` Pa with T₂
//! clamped to `[15, 75]` ms, i.e. 8 MPa at 15 ms down to 1 MPa at 75 ms.
//! Two perturbation families are defined on top of it:
//!
//! * **modulus shift** — translate the line by `f` times the 7 MPa baseline
//!   span, keeping the slope;
//! * **altered slope** — scale the slope by `1 − f` while pinning the midpoint
//!   (45 ms, 4.5 MPa). Positive `f` flattens the line towards a homogeneous
//!   modulus.
//!
//! T₂ is always clamped before the relation is evaluated; the resulting
//! modulus is never clamped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BASELINE_SLOPE_PA_PER_MS: f64 = -3.5e5 / 3.0;
pub const BASELINE_INTERCEPT_PA: f64 = 9.75e6;
pub const T2_MIN_MS: f64 = 15.0;
pub const T2_MAX_MS: f64 = 75.0;
/// `E(T2_MIN) − E(T2_MAX)` of the baseline relation.
pub const BASELINE_SPAN_PA: f64 = 7.0e6;

/// Cartilage Poisson ratio.
pub const CARTILAGE_POISSON: f64 = 0.45;
pub const MENISCUS_YOUNG_PA: f64 = 20.0e6;
pub const MENISCUS_POISSON: f64 = 0.3;

/// Fraction range of the perturbation protocol.
pub const PROTOCOL_FRACTIONS: std::ops::RangeInclusive<f64> = -0.10..=0.50;

/// Slope factor applied by [`LinearRelation::alter_slope`]: `1 + SIGN · f`.
const SLOPE_FACTOR_SIGN: f64 = -1.0;

#[derive(Debug, Error, PartialEq)]
pub enum MaterialError {
    #[error("clamp bounds must satisfy t2_min < t2_max (got {0} and {1})")]
    BadClamp(f64, f64),
    #[error("slope fraction {0} > 1 would flip the sign of the relation")]
    SlopeSignFlip(f64),
    #[error("Poisson ratio {0} outside (0, 0.5)")]
    BadPoisson(f64),
    #[error("Young's modulus {0} must be positive")]
    BadYoung(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Baseline,
    ModulusShift { fraction: f64 },
    AlteredSlope { fraction: f64 },
}

impl Provenance {
    pub fn fraction(&self) -> f64 {
        match *self {
            Provenance::Baseline => 0.0,
            Provenance::ModulusShift { fraction } | Provenance::AlteredSlope { fraction } => fraction,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRelation {
    #[serde(rename = "slope_pa_per_ms")]
    pub slope: f64,
    #[serde(rename = "intercept_pa")]
    pub intercept: f64,
    #[serde(rename = "t2_min_ms")]
    pub t2_min: f64,
    #[serde(rename = "t2_max_ms")]
    pub t2_max: f64,
    pub provenance: Provenance,
}

impl Default for LinearRelation {
    fn default() -> Self {
        Self::baseline()
    }
}

impl LinearRelation {
    pub fn baseline() -> Self {
        Self {
            slope: BASELINE_SLOPE_PA_PER_MS,
            intercept: BASELINE_INTERCEPT_PA,
            t2_min: T2_MIN_MS,
            t2_max: T2_MAX_MS,
            provenance: Provenance::Baseline,
        }
    }

    pub fn new(slope: f64, intercept: f64, t2_min: f64, t2_max: f64) -> Result<Self, MaterialError> {
        let r = Self { slope, intercept, t2_min, t2_max, provenance: Provenance::Baseline };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), MaterialError> {
        if !(self.t2_min < self.t2_max) {
            return Err(MaterialError::BadClamp(self.t2_min, self.t2_max));
        }
        Ok(())
    }

    pub fn clamp_t2(&self, t2: f64) -> f64 {
        t2.max(self.t2_min).min(self.t2_max)
    }

    /// Dynamic modulus in Pa.
    pub fn e_d_from_t2(&self, t2: f64) -> f64 {
        self.slope * self.clamp_t2(t2) + self.intercept
    }

    pub fn midpoint_t2(&self) -> f64 {
        0.5 * (self.t2_min + self.t2_max)
    }

    /// Span `|E(t2_min) − E(t2_max)|` of the unperturbed relation this one
    /// derives from. For an altered slope the original slope is recovered
    /// from the provenance; a fully flattened line (`f = 1`) falls back to the
    /// standard 7 MPa span.
    pub fn reference_span(&self) -> f64 {
        let slope = match self.provenance {
            Provenance::AlteredSlope { fraction } => {
                let factor = 1.0 + SLOPE_FACTOR_SIGN * fraction;
                if factor == 0.0 {
                    return BASELINE_SPAN_PA;
                }
                self.slope / factor
            }
            _ => self.slope,
        };
        (slope * (self.t2_max - self.t2_min)).abs()
    }

    /// Translates the relation by `f` times the reference span.
    pub fn shift_modulus(&self, f: f64) -> Self {
        Self {
            intercept: self.intercept + f * self.reference_span(),
            provenance: Provenance::ModulusShift { fraction: f },
            ..*self
        }
    }

    /// Scales the slope by `1 − f` about the midpoint of the clamp range.
    pub fn alter_slope(&self, f: f64) -> Result<Self, MaterialError> {
        let factor = 1.0 + SLOPE_FACTOR_SIGN * f;
        if factor < 0.0 {
            return Err(MaterialError::SlopeSignFlip(f));
        }
        let provenance = Provenance::AlteredSlope { fraction: f };
        if f == 0.0 {
            return Ok(Self { provenance, ..*self });
        }
        let t_mid = self.midpoint_t2();
        let e_mid = self.slope * t_mid + self.intercept;
        let slope = self.slope * factor;
        Ok(Self { slope, intercept: e_mid - slope * t_mid, provenance, ..*self })
    }

    pub fn in_protocol_range(f: f64) -> bool {
        PROTOCOL_FRACTIONS.contains(&(f + 0.0))
    }
}

/// Isotropic elastic constants with derived Lamé parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticConstants {
    pub young: f64,
    pub poisson: f64,
    pub mu: f64,
    pub lambda: f64,
}

impl ElasticConstants {
    pub fn new(young: f64, poisson: f64) -> Result<Self, MaterialError> {
        if !(young > 0.0) || !young.is_finite() {
            return Err(MaterialError::BadYoung(young));
        }
        let (mu, lambda) = lame_from_young_poisson(young, poisson)?;
        Ok(Self { young, poisson, mu, lambda })
    }

    pub fn meniscus() -> Self {
        Self::new(MENISCUS_YOUNG_PA, MENISCUS_POISSON).expect("valid constants")
    }

    /// Same constants with both Lamé parameters multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { young: self.young * c, poisson: self.poisson, mu: self.mu * c, lambda: self.lambda * c }
    }
}

/// `(mu, lambda)` from Young's modulus and Poisson's ratio.
pub fn lame_from_young_poisson(young: f64, nu: f64) -> Result<(f64, f64), MaterialError> {
    if !(nu > 0.0 && nu < 0.5) {
        return Err(MaterialError::BadPoisson(nu));
    }
    let mu = young / (2.0 * (1.0 + nu));
    let lambda = young * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    Ok((mu, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clamp() {
        let r = LinearRelation::baseline();
        assert_eq!(r.clamp_t2(45.0), 45.0);
        assert_eq!(r.clamp_t2(100.0), 75.0);
        assert_eq!(r.clamp_t2(3.0), 15.0);
    }

    #[test]
    fn baseline_anchor_points() {
        let r = LinearRelation::baseline();
        assert!((r.e_d_from_t2(15.0) - 8.0e6).abs() < 1.0);
        assert!((r.e_d_from_t2(75.0) - 1.0e6).abs() < 1.0);
        assert!((r.e_d_from_t2(45.0) - 4.5e6).abs() < 1.0);
        assert!((r.e_d_from_t2(200.0) - 1.0e6).abs() < 1.0);
        assert!((r.reference_span() - BASELINE_SPAN_PA).abs() < 1e-6);
    }

    #[test]
    fn shift_by_ten_percent_adds_point_seven_mpa() {
        let r = LinearRelation::baseline();
        let s = r.shift_modulus(0.10);
        for t in [10.0, 15.0, 33.3, 45.0, 61.0, 75.0, 90.0] {
            assert!((s.e_d_from_t2(t) - r.e_d_from_t2(t) - 0.7e6).abs() < 1e-6);
        }
        assert_eq!(r.shift_modulus(0.0).e_d_from_t2(30.0), r.e_d_from_t2(30.0));
        assert!((r.shift_modulus(0.5).e_d_from_t2(75.0) - 4.5e6).abs() < 1e-6);
        assert_eq!(s.provenance, Provenance::ModulusShift { fraction: 0.10 });
    }

    #[test]
    fn slope_alteration_pivots_on_midpoint() {
        let r = LinearRelation::baseline();
        for f in [-0.1, 0.0, 0.1, 0.3, 0.5, 1.0] {
            let a = r.alter_slope(f).unwrap();
            assert!((a.e_d_from_t2(45.0) - 4.5e6).abs() < 1e-6, "f = {f}");
        }
        assert!((r.alter_slope(0.5).unwrap().e_d_from_t2(15.0) - 6.25e6).abs() < 1e-6);
        assert!((r.alter_slope(-0.1).unwrap().e_d_from_t2(75.0) - 0.65e6).abs() < 1e-6);
        assert_eq!(r.alter_slope(1.0).unwrap().slope, 0.0);
        assert_eq!(r.alter_slope(1.5), Err(MaterialError::SlopeSignFlip(1.5)));
        assert_eq!(r.alter_slope(0.0).unwrap().intercept, r.intercept);
    }

    #[test]
    fn shift_after_slope_uses_baseline_span() {
        let r = LinearRelation::baseline();
        let a = r.alter_slope(0.4).unwrap();
        assert!((a.reference_span() - BASELINE_SPAN_PA).abs() < 1e-6);
        let s = a.shift_modulus(0.1);
        assert!((s.e_d_from_t2(30.0) - a.e_d_from_t2(30.0) - 0.7e6).abs() < 1e-6);
        assert_eq!(r.alter_slope(1.0).unwrap().reference_span(), BASELINE_SPAN_PA);
    }

    #[test]
    fn lame_parameters() {
        let (mu, lambda) = lame_from_young_poisson(8e6, 0.45).unwrap();
        // 8e6 / 2.9 and 8e6 · 0.45 / (1.45 · 0.1)
        assert!((mu - 2.758_620_689_655_172e6).abs() < 1e-3);
        assert!((lambda - 2.482_758_620_689_655e7).abs() < 1e-2);
        let (mu, lambda) = lame_from_young_poisson(20e6, 0.3).unwrap();
        assert!((mu - 7.692_307_692_307_692e6).abs() < 1e-3);
        assert!((lambda - 1.153_846_153_846_154e7).abs() < 1e-2);
        let (mu, lambda) = lame_from_young_poisson(1.0, 1e-12).unwrap();
        assert!(lambda < 1e-11 && (mu - 0.5).abs() < 1e-11);
        assert_eq!(lame_from_young_poisson(1.0, 0.5), Err(MaterialError::BadPoisson(0.5)));
        assert_eq!(lame_from_young_poisson(1.0, 0.0), Err(MaterialError::BadPoisson(0.0)));
        assert!(ElasticConstants::new(-1.0, 0.3).is_err());
    }

    #[test]
    fn relation_validation_and_json() {
        assert_eq!(LinearRelation::new(-1.0, 10.0, 75.0, 15.0), Err(MaterialError::BadClamp(75.0, 15.0)));
        let r = LinearRelation::baseline().alter_slope(0.2).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"slope_pa_per_ms\"") && json.contains("\"altered-slope\""));
        let back: LinearRelation = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn mean_preserved_for_field_symmetric_about_midpoint() {
        let t2: Vec<f64> = [10.0, 20.0, 30.0, 40.0, 45.0, 50.0, 60.0, 70.0, 80.0].to_vec();
        let base = LinearRelation::baseline();
        let mean = |r: &LinearRelation| t2.iter().map(|&t| r.e_d_from_t2(t)).sum::<f64>() / t2.len() as f64;
        for f in [-0.1, 0.2, 0.5] {
            assert!((mean(&base.alter_slope(f).unwrap()) - mean(&base)).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn non_increasing_in_t2(f in -0.5f64..0.99, shift in any::<bool>(), a in 0.0f64..120.0, b in 0.0f64..120.0) {
            let base = LinearRelation::baseline();
            let r = if shift { base.shift_modulus(f) } else { base.alter_slope(f).unwrap() };
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(r.e_d_from_t2(lo) >= r.e_d_from_t2(hi));
        }

        #[test]
        fn shift_round_trip(f in -1.0f64..1.0) {
            let base = LinearRelation::baseline();
            let back = base.shift_modulus(f).shift_modulus(-f);
            prop_assert!((back.intercept - base.intercept).abs() <= 1e-9);
        }

        #[test]
        fn spread_laws(f in -0.1f64..0.9) {
            // field spanning both clamp bounds
            let t2 = [5.0, 15.0, 27.0, 45.0, 58.0, 75.0, 99.0];
            let base = LinearRelation::baseline();
            let spread = |r: &LinearRelation| {
                let e: Vec<f64> = t2.iter().map(|&t| r.e_d_from_t2(t)).collect();
                e.iter().cloned().fold(f64::MIN, f64::max) - e.iter().cloned().fold(f64::MAX, f64::min)
            };
            let s0 = spread(&base);
            prop_assert!((spread(&base.shift_modulus(f)) - s0).abs() <= 1e-6);
            prop_assert!((spread(&base.alter_slope(f).unwrap()) - (1.0 - f).abs() * s0).abs() <= 1e-6);
        }
    }
}
