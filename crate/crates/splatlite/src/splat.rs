//! Gaussian primitive parameterization and covariance algebra.
//!
//! Scales live in log space and opacity as a logit so positivity and the
//! (0, 1) range hold structurally. The covariance of a splat factors as
//! `R diag(exp(2 s)) R^T` from its unit rotation and log-scales.

use glam::{DMat3, DQuat, DVec3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{rotation_matrix, sigmoid};
use crate::sh;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSplat {
    pub position: DVec3,
    /// Unit quaternion; renormalized after every optimizer step.
    pub rotation: DQuat,
    /// Per-axis standard deviation is `exp(log_scales)`, world units.
    pub log_scales: DVec3,
    /// Opacity is `sigmoid(opacity_logit)`.
    pub opacity_logit: f64,
    /// Flat channel-major SH coefficients: `sh_coeffs[ch * m + k]` with
    /// `m = (degree + 1)^2` per channel. Band 0 is the DC color.
    pub sh_coeffs: Vec<f64>,
}

impl GaussianSplat {
    /// Isotropic splat with a direction-independent color.
    pub fn isotropic(position: DVec3, sigma: f64, rgb: [f64; 3], opacity: f64, degree: usize) -> Self {
        let m = sh::coeff_count(degree);
        let mut sh_coeffs = vec![0.0; 3 * m];
        for ch in 0..3 {
            sh_coeffs[ch * m] = rgb[ch] / sh::SH_C0;
        }
        GaussianSplat {
            position,
            rotation: DQuat::IDENTITY,
            log_scales: DVec3::splat(sigma.ln()),
            opacity_logit: crate::math::logit(opacity),
            sh_coeffs,
        }
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    /// Per-axis standard deviations, world units.
    pub fn sigmas(&self) -> DVec3 {
        self.log_scales.exp()
    }

    /// Band-0 (DC) coefficient per channel.
    pub fn dc_coeffs(&self) -> [f64; 3] {
        let m = self.sh_coeffs.len() / 3;
        [self.sh_coeffs[0], self.sh_coeffs[m], self.sh_coeffs[2 * m]]
    }

    /// trace(Sigma) without building the matrix: rotation drops out.
    pub fn covariance_trace(&self) -> f64 {
        (2.0 * self.log_scales).exp().element_sum()
    }
}

/// Ordered splat collection with a shared SH degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplatModel {
    pub splats: Vec<GaussianSplat>,
    pub sh_degree: usize,
}

impl SplatModel {
    pub fn new(splats: Vec<GaussianSplat>, sh_degree: usize) -> Self {
        SplatModel { splats, sh_degree }
    }

    pub fn len(&self) -> usize {
        self.splats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }

    pub fn coeffs_per_channel(&self) -> usize {
        sh::coeff_count(self.sh_degree)
    }
}

/// Symmetric positive-definite 3x3 covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance3(pub DMat3);

impl Covariance3 {
    pub fn trace(&self) -> f64 {
        self.0.col(0).x + self.0.col(1).y + self.0.col(2).z
    }

    pub fn matrix(&self) -> DMat3 {
        self.0
    }
}

/// Build `R diag(exp(2 s)) R^T` from a unit rotation and log-scales.
pub fn covariance_from_params(rotation: DQuat, log_scales: DVec3) -> Result<Covariance3> {
    if !rotation.is_finite() || !log_scales.is_finite() {
        return Err(Error::InvalidParameter(
            "non-finite rotation or log-scales".into(),
        ));
    }
    let r = rotation_matrix(rotation);
    let d = (2.0 * log_scales).exp();
    let rd = DMat3::from_cols(r.col(0) * d.x, r.col(1) * d.y, r.col(2) * d.z);
    Ok(Covariance3(rd * r.transpose()))
}

/// Hinge penalty `max(trace - cap, 0)`; zero at and below the cap.
pub fn trace_penalty(cov: &Covariance3, trace_cap: f64) -> f64 {
    (cov.trace() - trace_cap).max(0.0)
}

/// Same hinge, computed straight from log-scales (no matrix build).
pub fn trace_penalty_from_scales(log_scales: DVec3, trace_cap: f64) -> f64 {
    ((2.0 * log_scales).exp().element_sum() - trace_cap).max(0.0)
}

/// Gradient of the hinge with respect to log-scales. Defined one-sided:
/// exactly at the cap there is no shrink force.
pub fn trace_penalty_gradient(log_scales: DVec3, trace_cap: f64) -> DVec3 {
    let sq = (2.0 * log_scales).exp();
    if sq.element_sum() > trace_cap {
        2.0 * sq
    } else {
        DVec3::ZERO
    }
}
