//! 3x3 singular value decomposition by one-sided Jacobi rotations.
//!
//! Columns of `A = M·V` are rotated pairwise until mutually orthogonal; the
//! singular values are then the column norms. `U` is rebuilt by
//! Gram-Schmidt with a cross-product third column so it stays orthonormal
//! even when `M` is rank deficient.

use super::{Mat3, Vec3};

const MAX_SWEEPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Svd3 {
    pub u: Mat3,
    /// Singular values, descending, non-negative.
    pub sigma: [f64; 3],
    pub v: Mat3,
}

impl Svd3 {
    /// `U·diag(Σ)·Vᵀ`.
    pub fn reconstruct(&self) -> Mat3 {
        self.u * Mat3::from_diagonal(self.sigma) * self.v.transpose()
    }
}

pub fn svd3(m: &Mat3) -> Svd3 {
    let mut a = [m.col(0), m.col(1), m.col(2)];
    let mut v = [
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
    ];

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let alpha = a[p].norm_squared();
            let beta = a[q].norm_squared();
            let gamma = a[p].dot(a[q]);
            if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                continue;
            }
            rotated = true;
            let zeta = (beta - alpha) / (2.0 * gamma);
            let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = c * t;
            let (ap, aq) = (a[p], a[q]);
            a[p] = ap * c - aq * s;
            a[q] = ap * s + aq * c;
            let (vp, vq) = (v[p], v[q]);
            v[p] = vp * c - vq * s;
            v[q] = vp * s + vq * c;
        }
        if !rotated {
            break;
        }
    }

    let mut order = [0usize, 1, 2];
    let norms = [a[0].norm(), a[1].norm(), a[2].norm()];
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let a = order.map(|i| a[i]);
    let v = order.map(|i| v[i]);
    let sigma = order.map(|i| norms[i]);

    let u = orthonormal_basis_from(&a, &sigma);
    Svd3 {
        u: Mat3::from_cols(u[0], u[1], u[2]),
        sigma,
        v: Mat3::from_cols(v[0], v[1], v[2]),
    }
}

fn orthonormal_basis_from(a: &[Vec3; 3], sigma: &[f64; 3]) -> [Vec3; 3] {
    if sigma[0] == 0.0 || !sigma[0].is_finite() {
        return [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
    }
    let u0 = a[0] * (1.0 / sigma[0]);
    let r1 = a[1] - u0 * u0.dot(a[1]);
    let r1n = r1.norm();
    let u1 = if r1n > 0.0 && r1n.is_finite() {
        r1 * (1.0 / r1n)
    } else {
        any_perpendicular(u0)
    };
    let mut u2 = u0.cross(u1);
    u2 = u2 * (1.0 / u2.norm());
    if u2.dot(a[2]) < 0.0 {
        u2 = -u2;
    }
    [u0, u1, u2]
}

fn any_perpendicular(n: Vec3) -> Vec3 {
    // Cross with the coordinate axis least aligned with n.
    let axis = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vec3::new(1.0, 0.0, 0.0)
    } else if n.y.abs() <= n.z.abs() {
        Vec3::new(0.0, 1.0, 0.0)
    } else {
        Vec3::new(0.0, 0.0, 1.0)
    };
    let p = n.cross(axis);
    p * (1.0 / p.norm())
}
