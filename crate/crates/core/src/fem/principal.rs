use crate::Mat3;
use serde::{Deserialize, Serialize};

/// Principal values of a symmetric tensor, `p1 ≥ p2 ≥ p3`, and the maximum
/// shear `(p1 − p3)/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Principal {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub tau_max: f64,
}

/// Reads only the lower triangle of `t`.
pub fn principal_and_shear(t: &Mat3) -> Principal {
    let mut ev = t.symmetric_eigenvalues();
    ev.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    Principal { p1: ev[0], p2: ev[1], p3: ev[2], tau_max: 0.5 * (ev[0] - ev[2]) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Roots of the characteristic polynomial by the trigonometric method.
    fn cubic_roots(a: &Mat3) -> [f64; 3] {
        let i1 = a.trace();
        let i2 = 0.5 * (i1 * i1 - (a * a).trace());
        let i3 = a.determinant();
        // λ³ − I₁λ² + I₂λ − I₃ = 0, shifted λ = x + I₁/3
        let p = i2 - i1 * i1 / 3.0;
        let q = -2.0 * i1.powi(3) / 27.0 + i1 * i2 / 3.0 - i3;
        let shift = i1 / 3.0;
        if p.abs() < 1e-300 {
            return [shift; 3];
        }
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        let mut r = [0, 1, 2].map(|k| shift + m * (theta - 2.0 * PI * k as f64 / 3.0).cos());
        r.sort_by(|a, b| b.total_cmp(a));
        r
    }

    #[test]
    fn diagonal() {
        let p = principal_and_shear(&Mat3::from_diagonal(&Vec3::new(2.0, 3.0, 1.0)));
        assert_eq!((p.p1, p.p2, p.p3, p.tau_max), (3.0, 2.0, 1.0, 1.0));
    }

    #[test]
    fn pure_shear() {
        let s = 4.5;
        let t = Mat3::new(0.0, s, 0.0, s, 0.0, 0.0, 0.0, 0.0, 0.0);
        let p = principal_and_shear(&t);
        assert!((p.p1 - s).abs() < 1e-14 && p.p2.abs() < 1e-14 && (p.p3 + s).abs() < 1e-14);
        assert!((p.tau_max - s).abs() < 1e-14);
    }

    #[test]
    fn random_symmetric_matches_cubic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let m = Mat3::from_fn(|_, _| rng.random_range(-5.0..5.0));
            let t = (m + m.transpose()) * 0.5;
            let p = principal_and_shear(&t);
            let r = cubic_roots(&t);
            let scale = t.norm().max(1.0);
            for (got, want) in [p.p1, p.p2, p.p3].iter().zip(r) {
                assert!((got - want).abs() <= 1e-9 * scale, "{got} vs {want}");
            }
            assert!(p.p1 >= p.p2 && p.p2 >= p.p3);
        }
    }
}
