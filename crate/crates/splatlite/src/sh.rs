//! Real spherical harmonics basis (graphics normalization) up to degree 3.
//!
//! Band 0 is the direction-independent DC term; a model of degree L stores
//! `(L + 1)^2` coefficients per color channel.

use glam::DVec3;

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 3;
pub const MAX_COEFFS: usize = (MAX_DEGREE + 1) * (MAX_DEGREE + 1);

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Degree implied by a per-channel coefficient count, if valid.
pub fn degree_from_coeff_count(count: usize) -> Option<usize> {
    (0..=MAX_DEGREE).find(|&d| coeff_count(d) == count)
}

/// Evaluate the basis functions at a unit direction. Slots past the
/// requested degree are left at zero.
pub fn basis(dir: DVec3, degree: usize) -> [f64; MAX_COEFFS] {
    let mut b = [0.0; MAX_COEFFS];
    let (x, y, z) = (dir.x, dir.y, dir.z);
    b[0] = SH_C0;
    if degree >= 1 {
        b[1] = -C1 * y;
        b[2] = C1 * z;
        b[3] = -C1 * x;
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[4] = C2[0] * x * y;
        b[5] = C2[1] * y * z;
        b[6] = C2[2] * (2.0 * zz - xx - yy);
        b[7] = C2[3] * x * z;
        b[8] = C2[4] * (xx - yy);
    }
    if degree >= 3 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[9] = C3[0] * y * (3.0 * xx - yy);
        b[10] = C3[1] * x * y * z;
        b[11] = C3[2] * y * (4.0 * zz - xx - yy);
        b[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
        b[13] = C3[4] * x * (4.0 * zz - xx - yy);
        b[14] = C3[5] * z * (xx - yy);
        b[15] = C3[6] * x * (xx - 3.0 * yy);
    }
    b
}

/// Partial derivatives of each basis function with respect to the raw
/// direction components (the caller chains through normalization).
pub fn basis_gradient(dir: DVec3, degree: usize) -> [DVec3; MAX_COEFFS] {
    let mut g = [DVec3::ZERO; MAX_COEFFS];
    let (x, y, z) = (dir.x, dir.y, dir.z);
    if degree >= 1 {
        g[1] = DVec3::new(0.0, -C1, 0.0);
        g[2] = DVec3::new(0.0, 0.0, C1);
        g[3] = DVec3::new(-C1, 0.0, 0.0);
    }
    if degree >= 2 {
        g[4] = C2[0] * DVec3::new(y, x, 0.0);
        g[5] = C2[1] * DVec3::new(0.0, z, y);
        g[6] = C2[2] * DVec3::new(-2.0 * x, -2.0 * y, 4.0 * z);
        g[7] = C2[3] * DVec3::new(z, 0.0, x);
        g[8] = C2[4] * DVec3::new(2.0 * x, -2.0 * y, 0.0);
    }
    if degree >= 3 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        g[9] = C3[0] * DVec3::new(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
        g[10] = C3[1] * DVec3::new(y * z, x * z, x * y);
        g[11] = C3[2] * DVec3::new(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
        g[12] = C3[3] * DVec3::new(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
        g[13] = C3[4] * DVec3::new(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
        g[14] = C3[5] * DVec3::new(2.0 * x * z, -2.0 * y * z, xx - yy);
        g[15] = C3[6] * DVec3::new(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
    }
    g
}

/// Evaluate view-dependent color from flat channel-major coefficients
/// (`coeffs[ch * m_count + m]`). No clamping is applied here.
pub fn evaluate(coeffs: &[f64], dir: DVec3, degree: usize) -> Result<[f64; 3]> {
    if degree > MAX_DEGREE {
        return Err(Error::InvalidParameter(format!(
            "sh degree {degree} exceeds maximum {MAX_DEGREE}"
        )));
    }
    let m = coeff_count(degree);
    if coeffs.len() < 3 * m {
        return Err(Error::InvalidParameter(format!(
            "sh evaluation at degree {degree} needs {} coefficients, model stores {}",
            3 * m,
            coeffs.len()
        )));
    }
    let stored_m = coeffs.len() / 3;
    let b = basis(dir, degree);
    let mut out = [0.0; 3];
    for ch in 0..3 {
        let base = ch * stored_m;
        let mut acc = 0.0;
        for k in 0..m {
            acc += coeffs[base + k] * b[k];
        }
        out[ch] = acc;
    }
    Ok(out)
}

/// Quasi-uniform unit directions (Fibonacci sphere lattice).
pub fn fibonacci_sphere(n: usize) -> Vec<DVec3> {
    let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * std::f64::consts::PI * (i as f64 / golden).fract();
            DVec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}
