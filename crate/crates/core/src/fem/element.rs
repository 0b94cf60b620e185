//! Total-Lagrangian trilinear hexahedron with 2×2×2 Gauss quadrature.

use super::constitutive::{cauchy_stress, green_lagrange};
use super::FemError;
use crate::mesh::{gauss_points, jacobian, shape_gradients};
use crate::{Mat3, Vec3};

pub(crate) const NDOF: usize = 24;

/// Reference-configuration shape gradients and quadrature weights.
#[derive(Clone, Debug)]
pub(crate) struct ElementGeometry {
    /// `grads[q][a]` is `∂N_a/∂X` at Gauss point `q`.
    grads: [[Vec3; 8]; 8],
    /// `w_q · det J(ξ_q)`; sums to the element volume.
    dv: [f64; 8],
}

impl ElementGeometry {
    /// Fails with the smallest Gauss-point Jacobian when any is non-positive.
    pub(crate) fn new(corners: &[Vec3; 8]) -> Result<Self, f64> {
        let mut grads = [[Vec3::zeros(); 8]; 8];
        let mut dv = [0.0; 8];
        for (q, xi) in gauss_points().into_iter().enumerate() {
            let j = jacobian(corners, xi);
            let det = j.determinant();
            if !(det > 0.0) {
                return Err(det);
            }
            let j_inv_t = j.try_inverse().ok_or(det)?.transpose();
            for (a, dn) in shape_gradients(xi).iter().enumerate() {
                grads[q][a] = j_inv_t * Vec3::from(*dn);
            }
            dv[q] = det;
        }
        Ok(Self { grads, dv })
    }

    pub(crate) fn volume(&self) -> f64 {
        self.dv.iter().sum()
    }

    fn deformation_gradient(&self, q: usize, u: &[Vec3; 8]) -> Mat3 {
        let mut f = Mat3::identity();
        for (ua, g) in u.iter().zip(&self.grads[q]) {
            f += ua * g.transpose();
        }
        f
    }
}

/// Internal force, stored energy and optionally the tangent of one element.
pub(crate) struct ElementResponse {
    pub energy: f64,
    pub force: [f64; NDOF],
    /// Row-major `NDOF × NDOF`, dof `3a + i`.
    pub tangent: Option<Box<[f64; NDOF * NDOF]>>,
}

pub(crate) fn evaluate(
    geom: &ElementGeometry,
    u: &[Vec3; 8],
    mu: f64,
    lambda: f64,
    with_tangent: bool,
) -> Result<ElementResponse, FemError> {
    let mut force = [0.0; NDOF];
    let mut tangent = with_tangent.then(|| Box::new([0.0; NDOF * NDOF]));
    let mut energy = 0.0;
    for q in 0..8 {
        let f = geom.deformation_gradient(q, u);
        let det = f.determinant();
        if !(det > 0.0) {
            return Err(FemError::Inverted { det });
        }
        let f_inv = f.try_inverse().ok_or(FemError::Inverted { det })?;
        let ln_j = det.ln();
        let dv = geom.dv[q];
        energy += (0.5 * mu * (f.norm_squared() - 3.0) - mu * ln_j + 0.5 * lambda * ln_j * ln_j) * dv;

        // P g_a = μ F g_a + (λ ln J − μ) h_a with h_a = F⁻ᵀ g_a
        let g = &geom.grads[q];
        let h: [Vec3; 8] = std::array::from_fn(|a| f_inv.transpose() * g[a]);
        let c0 = lambda * ln_j - mu;
        for a in 0..8 {
            let pa = (f * g[a] * mu + h[a] * c0) * dv;
            for i in 0..3 {
                force[3 * a + i] += pa[i];
            }
        }
        if let Some(k) = tangent.as_mut() {
            let c1 = mu - lambda * ln_j;
            for a in 0..8 {
                for b in 0..8 {
                    let gg = mu * g[a].dot(&g[b]) * dv;
                    for i in 0..3 {
                        let row = (3 * a + i) * NDOF + 3 * b;
                        for kk in 0..3 {
                            let diag = if i == kk { gg } else { 0.0 };
                            k[row + kk] += diag + (c1 * h[b][i] * h[a][kk] + lambda * h[a][i] * h[b][kk]) * dv;
                        }
                    }
                }
            }
        }
    }
    Ok(ElementResponse { energy, force, tangent })
}

/// Smallest `det F` over the Gauss points.
pub(crate) fn min_volume_ratio(geom: &ElementGeometry, u: &[Vec3; 8]) -> f64 {
    (0..8).map(|q| geom.deformation_gradient(q, u).determinant()).fold(f64::INFINITY, f64::min)
}

/// Reference-volume-weighted Gauss averages of Cauchy stress and
/// Green–Lagrange strain.
pub(crate) fn recover(geom: &ElementGeometry, u: &[Vec3; 8], mu: f64, lambda: f64) -> Result<(Mat3, Mat3), FemError> {
    let (mut s, mut e) = (Mat3::zeros(), Mat3::zeros());
    for q in 0..8 {
        let f = geom.deformation_gradient(q, u);
        s += cauchy_stress(&f, mu, lambda)? * geom.dv[q];
        e += green_lagrange(&f) * geom.dv[q];
    }
    let v = geom.volume();
    let (s, e) = (s / v, e / v);
    Ok(((s + s.transpose()) * 0.5, (e + e.transpose()) * 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::NATURAL_CORNERS;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn jittered(rng: &mut ChaCha8Rng) -> [Vec3; 8] {
        NATURAL_CORNERS.map(|c| Vec3::from(c) * 0.5 + Vec3::from_fn(|_, _| rng.random_range(-0.08..0.08)))
    }

    #[test]
    fn rigid_translation_is_force_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = ElementGeometry::new(&jittered(&mut rng)).unwrap();
        let r = evaluate(&g, &[Vec3::new(0.3, -0.2, 0.1); 8], 1.0, 2.0, true).unwrap();
        assert!(r.energy.abs() < 1e-14);
        assert!(r.force.iter().all(|f| f.abs() < 1e-14));
        // the tangent annihilates translations
        let k = r.tangent.unwrap();
        for row in 0..NDOF {
            let s: f64 = (0..8).map(|b| k[row * NDOF + 3 * b]).sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn force_is_energy_gradient_and_tangent_is_force_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mu, lambda) = (0.8, 3.0);
        for _ in 0..10 {
            let g = ElementGeometry::new(&jittered(&mut rng)).unwrap();
            let u: [Vec3; 8] = std::array::from_fn(|_| Vec3::from_fn(|_, _| rng.random_range(-0.05..0.05)));
            let r = evaluate(&g, &u, mu, lambda, true).unwrap();
            let k = r.tangent.unwrap();
            let h = 1e-6;
            for d in 0..NDOF {
                let (mut up, mut um) = (u, u);
                up[d / 3][d % 3] += h;
                um[d / 3][d % 3] -= h;
                let rp = evaluate(&g, &up, mu, lambda, false).unwrap();
                let rm = evaluate(&g, &um, mu, lambda, false).unwrap();
                let fd = (rp.energy - rm.energy) / (2.0 * h);
                assert!((fd - r.force[d]).abs() < 1e-7, "{fd} vs {}", r.force[d]);
                for row in 0..NDOF {
                    let kd = (rp.force[row] - rm.force[row]) / (2.0 * h);
                    assert!((kd - k[row * NDOF + d]).abs() < 1e-6);
                }
            }
            for a in 0..NDOF {
                for b in 0..NDOF {
                    assert!((k[a * NDOF + b] - k[b * NDOF + a]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn quadrature_weights_sum_to_volume() {
        let c = NATURAL_CORNERS.map(|c| Vec3::from(c).component_mul(&Vec3::new(1.0, 2.0, 0.5)));
        assert!((ElementGeometry::new(&c).unwrap().volume() - 8.0).abs() < 1e-13);
    }

    #[test]
    fn inverted_reference_is_rejected() {
        let mut c = NATURAL_CORNERS.map(Vec3::from);
        c.swap(0, 1);
        c.swap(3, 2);
        c.swap(4, 5);
        c.swap(7, 6);
        assert!(ElementGeometry::new(&c).is_err());
    }
}
