//! Deterministic synthetic scenes: a hidden reference splat model, rendered
//! ground-truth views on a camera ring, and a degraded initialization that
//! mimics a sparse point-cloud start.

use glam::{DQuat, DVec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::img::ImageBuf;
use crate::math::{logit, median, solve_spd};
use crate::render::{render_image, RenderOptions};
use crate::sh;
use crate::splat::{GaussianSplat, SplatModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub reference_splats: usize,
    /// Scene radius, world units.
    pub extent: f64,
    /// Fraction of splats packed into small high-frequency clusters; the
    /// rest become large smooth background splats.
    pub texture_fraction: f64,
    pub camera_count: usize,
    pub camera_radius: f64,
    pub camera_elevation_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 42,
            reference_splats: 400,
            extent: 1.0,
            texture_fraction: 0.65,
            camera_count: 16,
            camera_radius: 3.0,
            camera_elevation_deg: 20.0,
            width: 64,
            height: 64,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.reference_splats == 0 || self.camera_count == 0 {
            return Err(Error::InvalidParameter(
                "scene needs at least one splat and one camera".into(),
            ));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::InvalidParameter(
                "resolution must be at least 16x16".into(),
            ));
        }
        if !(self.extent > 0.0 && self.camera_radius > self.extent) {
            return Err(Error::InvalidParameter(
                "camera ring must sit outside the scene extent".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SceneData {
    pub reference: SplatModel,
    pub cameras: Vec<Camera>,
    pub ground_truth: Vec<ImageBuf>,
    pub init: SplatModel,
}

fn random_unit_quat(rng: &mut ChaCha12Rng) -> DQuat {
    loop {
        let q = DQuat::from_xyzw(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if q.length() > 1e-3 {
            return q.normalize();
        }
    }
}

fn ball_point(rng: &mut ChaCha12Rng, radius: f64) -> DVec3 {
    loop {
        let p = DVec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if p.length_squared() <= 1.0 {
            return p * radius;
        }
    }
}

/// Build the hidden reference model, its camera ring, exact float ground
/// truth renders, and the degraded init model (`init_degree` sets the SH
/// storage the trainer will optimize).
pub fn generate(
    spec: &SceneSpec,
    background: [f64; 3],
    init_degree: usize,
    opts: &RenderOptions,
) -> Result<SceneData> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let e = spec.extent;
    let n_texture = ((spec.reference_splats as f64) * spec.texture_fraction).round() as usize;
    let n_texture = n_texture.min(spec.reference_splats);
    let cluster_count = (spec.reference_splats / 50).clamp(3, 12);
    let centers: Vec<DVec3> = (0..cluster_count).map(|_| ball_point(&mut rng, 0.6 * e)).collect();

    let ref_degree = 1usize;
    let m_ref = sh::coeff_count(ref_degree);
    let mut splats = Vec::with_capacity(spec.reference_splats);
    for i in 0..spec.reference_splats {
        let textured = i < n_texture;
        let (position, sigma_lo, sigma_hi, opacity) = if textured {
            let center = centers[i % cluster_count];
            let p = center + ball_point(&mut rng, 0.12 * e);
            (p, 0.015 * e, 0.045 * e, rng.random_range(0.75..0.95))
        } else {
            (ball_point(&mut rng, e), 0.10 * e, 0.22 * e, rng.random_range(0.5..0.8))
        };
        let rgb = if textured {
            [
                rng.random_range(0.15..0.95),
                rng.random_range(0.15..0.95),
                rng.random_range(0.15..0.95),
            ]
        } else {
            let base = rng.random_range(0.25..0.6);
            [
                (base + rng.random_range(-0.08..0.08f64)).clamp(0.05, 0.9),
                (base + rng.random_range(-0.08..0.08f64)).clamp(0.05, 0.9),
                (base + rng.random_range(-0.08..0.08f64)).clamp(0.05, 0.9),
            ]
        };
        let base_sigma = rng.random_range(sigma_lo..sigma_hi);
        let mut log_scales = DVec3::ZERO;
        for axis in 0..3 {
            // mild anisotropy, axis ratios below 2
            log_scales[axis] = (base_sigma * rng.random_range(0.7..1.4)).ln();
        }
        let mut sh_coeffs = vec![0.0; 3 * m_ref];
        for ch in 0..3 {
            sh_coeffs[ch * m_ref] = rgb[ch] / sh::SH_C0;
            for k in 1..m_ref {
                sh_coeffs[ch * m_ref + k] = rng.random_range(-0.08..0.08);
            }
        }
        splats.push(GaussianSplat {
            position,
            rotation: random_unit_quat(&mut rng),
            log_scales,
            opacity_logit: logit(opacity),
            sh_coeffs,
        });
    }
    let reference = SplatModel::new(splats, ref_degree);

    // camera ring
    let focal = 0.40 * spec.width as f64 * spec.camera_radius / e;
    let elev = spec.camera_elevation_deg.to_radians();
    let cameras: Vec<Camera> = (0..spec.camera_count)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / spec.camera_count as f64;
            let eye = DVec3::new(
                spec.camera_radius * elev.cos() * angle.cos(),
                spec.camera_radius * elev.sin(),
                spec.camera_radius * elev.cos() * angle.sin(),
            );
            Camera::look_at(
                eye,
                DVec3::ZERO,
                DVec3::Y,
                focal,
                focal,
                spec.width,
                spec.height,
                0.05 * spec.camera_radius,
            )
        })
        .collect();

    let ground_truth: Vec<ImageBuf> = cameras
        .iter()
        .map(|cam| render_image(&reference, cam, background, opts))
        .collect();

    // init: subsample 20 percent of reference positions, jitter them, gray
    // color, enlarged isotropic scales
    let mut order: Vec<usize> = (0..reference.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let init_count = ((reference.len() as f64) * 0.2).round().max(1.0) as usize;
    let picked = &order[..init_count];
    let positions: Vec<DVec3> = picked
        .iter()
        .map(|&i| reference.splats[i].position + ball_point(&mut rng, 0.02 * e))
        .collect();
    let nn: Vec<f64> = positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            positions
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| (*q - *p).length())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let sigma_init = if positions.len() > 1 { 1.3 * median(&nn) } else { 0.2 * e };
    let init_splats: Vec<GaussianSplat> = positions
        .into_iter()
        .map(|p| GaussianSplat::isotropic(p, sigma_init, [0.5; 3], 0.5, init_degree))
        .collect();
    let init = SplatModel::new(init_splats, init_degree);

    Ok(SceneData {
        reference,
        cameras,
        ground_truth,
        init,
    })
}

/// One row of the kernel-anisotropy SH fitting experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnisoRow {
    pub degree: usize,
    pub rmse_isotropic: f64,
    pub rmse_anisotropic: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnisoReport {
    pub seed: u64,
    pub rows: Vec<AnisoRow>,
}

/// Random directional color field with content beyond the degree-3 span:
/// smooth low-order lobes plus a few sharp exponential bumps.
pub fn directional_field(seed: u64) -> impl Fn(DVec3) -> [f64; 3] {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut lobes = Vec::new();
    for _ in 0..4 {
        let u = ball_point(&mut rng, 1.0).normalize_or_zero();
        let u = if u.length() < 0.5 { DVec3::Z } else { u };
        let kappa = rng.random_range(6.0..14.0);
        let amp: [f64; 3] = [
            rng.random_range(0.1..0.5),
            rng.random_range(0.1..0.5),
            rng.random_range(0.1..0.5),
        ];
        lobes.push((u, kappa, amp));
    }
    let base: [f64; 3] = [
        rng.random_range(0.2..0.5),
        rng.random_range(0.2..0.5),
        rng.random_range(0.2..0.5),
    ];
    let tilt = ball_point(&mut rng, 1.0).normalize_or_zero();
    move |d: DVec3| {
        let mut out = base;
        for ch in 0..3 {
            out[ch] += 0.15 * d.dot(tilt);
            for (u, kappa, amp) in &lobes {
                out[ch] += amp[ch] * (kappa * (d.dot(*u) - 1.0)).exp();
            }
        }
        out
    }
}

/// Directional weight of a zero-mean gaussian kernel evaluated on the unit
/// sphere: how strongly the kernel samples each direction.
fn kernel_weight(sigma_diag: DVec3) -> impl Fn(DVec3) -> f64 {
    move |d: DVec3| {
        let q = d.x * d.x / sigma_diag.x + d.y * d.y / sigma_diag.y + d.z * d.z / sigma_diag.z;
        (-0.5 * q).exp()
    }
}

/// Weighted least-squares SH fit of `target` on `dirs`, returning flat
/// channel-major coefficients.
pub fn fit_sh_weighted(
    dirs: &[DVec3],
    targets: &[[f64; 3]],
    weights: &[f64],
    degree: usize,
) -> Vec<f64> {
    let m = sh::coeff_count(degree);
    let mut gram = vec![0.0f64; m * m];
    let mut rhs = vec![vec![0.0f64; m]; 3];
    for ((d, t), w) in dirs.iter().zip(targets).zip(weights) {
        let b = sh::basis(*d, degree);
        for i in 0..m {
            for j in 0..m {
                gram[i * m + j] += w * b[i] * b[j];
            }
            for ch in 0..3 {
                rhs[ch][i] += w * b[i] * t[ch];
            }
        }
    }
    let mut coeffs = vec![0.0f64; 3 * m];
    for ch in 0..3 {
        let solved = solve_spd(&gram, &rhs[ch]);
        coeffs[ch * m..(ch + 1) * m].copy_from_slice(&solved);
    }
    coeffs
}

/// Uniform RMSE of a fitted SH expansion against targets on the grid.
pub fn fit_rmse(dirs: &[DVec3], targets: &[[f64; 3]], coeffs: &[f64], degree: usize) -> f64 {
    let mut sum = 0.0;
    for (d, t) in dirs.iter().zip(targets) {
        let got = sh::evaluate(coeffs, *d, degree).expect("coefficient count matches degree");
        for ch in 0..3 {
            let e = got[ch] - t[ch];
            sum += e * e;
        }
    }
    (sum / (3 * dirs.len()) as f64).sqrt()
}

pub const ANISO_GRID: usize = 2048;

/// Fit SH through an isotropic kernel (0.5 I) and an elongated one
/// (diag(1.5, 0.5, 0.5)) at each degree and compare reconstruction RMSE
/// against the uniform ground truth.
pub fn anisotropy_experiment(degrees: &[usize], seed: u64) -> AnisoReport {
    let dirs = sh::fibonacci_sphere(ANISO_GRID);
    let field = directional_field(seed);
    let targets: Vec<[f64; 3]> = dirs.iter().map(|d| field(*d)).collect();
    let w_iso: Vec<f64> = {
        let k = kernel_weight(DVec3::splat(0.5));
        dirs.iter().map(|d| k(*d)).collect()
    };
    let w_aniso: Vec<f64> = {
        let k = kernel_weight(DVec3::new(1.5, 0.5, 0.5));
        dirs.iter().map(|d| k(*d)).collect()
    };
    let rows = degrees
        .iter()
        .map(|&degree| {
            let c_iso = fit_sh_weighted(&dirs, &targets, &w_iso, degree);
            let c_aniso = fit_sh_weighted(&dirs, &targets, &w_aniso, degree);
            AnisoRow {
                degree,
                rmse_isotropic: fit_rmse(&dirs, &targets, &c_iso, degree),
                rmse_anisotropic: fit_rmse(&dirs, &targets, &c_aniso, degree),
            }
        })
        .collect();
    AnisoReport { seed, rows }
}
