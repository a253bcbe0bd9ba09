//! Small numeric helpers shared across the crate.

use glam::{DMat3, DQuat, DVec3};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Rotation matrix from a quaternion, normalizing first so callers may hand
/// in a slightly drifted quaternion.
pub fn rotation_matrix(q: DQuat) -> DMat3 {
    DMat3::from_quat(q.normalize())
}

/// Derivative of `rotation_matrix` with respect to the *unit* quaternion
/// components, in (x, y, z, w) order. Columns of each matrix follow glam's
/// column-major layout.
pub fn rotation_matrix_jacobian(q: DQuat) -> [DMat3; 4] {
    let (x, y, z, w) = (q.x, q.y, q.z, q.w);
    // d/dx
    let dx = DMat3::from_cols(
        DVec3::new(0.0, 2.0 * y, 2.0 * z),
        DVec3::new(2.0 * y, -4.0 * x, 2.0 * w),
        DVec3::new(2.0 * z, -2.0 * w, -4.0 * x),
    );
    // d/dy
    let dy = DMat3::from_cols(
        DVec3::new(-4.0 * y, 2.0 * x, -2.0 * w),
        DVec3::new(2.0 * x, 0.0, 2.0 * z),
        DVec3::new(2.0 * w, 2.0 * z, -4.0 * y),
    );
    // d/dz
    let dz = DMat3::from_cols(
        DVec3::new(-4.0 * z, 2.0 * w, 2.0 * x),
        DVec3::new(-2.0 * w, -4.0 * z, 2.0 * y),
        DVec3::new(2.0 * x, 2.0 * y, 0.0),
    );
    // d/dw
    let dw = DMat3::from_cols(
        DVec3::new(0.0, 2.0 * z, -2.0 * y),
        DVec3::new(-2.0 * z, 0.0, 2.0 * x),
        DVec3::new(2.0 * y, -2.0 * x, 0.0),
    );
    [dx, dy, dz, dw]
}

/// Backpropagate a gradient on the unit quaternion to the raw (possibly
/// unnormalized) quaternion: project onto the tangent of the unit sphere.
pub fn quat_normalize_backward(q_raw: DQuat, grad_unit: [f64; 4]) -> [f64; 4] {
    let norm = (q_raw.x * q_raw.x + q_raw.y * q_raw.y + q_raw.z * q_raw.z + q_raw.w * q_raw.w)
        .sqrt()
        .max(1e-300);
    let u = [
        q_raw.x / norm,
        q_raw.y / norm,
        q_raw.z / norm,
        q_raw.w / norm,
    ];
    let dot: f64 = (0..4).map(|i| u[i] * grad_unit[i]).sum();
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = (grad_unit[i] - u[i] * dot) / norm;
    }
    out
}

/// Largest eigenvalue of a symmetric 2x2 matrix [[a, b], [b, c]].
pub fn sym2_max_eigenvalue(a: f64, b: f64, c: f64) -> f64 {
    let mid = 0.5 * (a + c);
    let disc = (0.5 * (a - c)).powi(2) + b * b;
    mid + disc.max(0.0).sqrt()
}

/// Median of an unsorted slice (mean of the two middles for even lengths).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Solve A x = b for a symmetric positive-definite matrix (dense, row-major)
/// via Cholesky. Panics if `a` is not SPD to working precision.
pub fn solve_spd(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                assert!(sum > 0.0, "matrix not positive definite");
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    // forward then back substitution
    let mut y = vec![0.0f64; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}
