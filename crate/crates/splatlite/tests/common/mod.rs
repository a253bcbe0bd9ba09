//! Shared test-side oracles, independent of the library's rendering path:
//! a from-scratch projection and an O(N * pixels) front-to-back compositor.

#![allow(dead_code)]

use glam::{DQuat, DVec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use splatlite::camera::Camera;
use splatlite::img::ImageBuf;
use splatlite::loss::total_loss;
use splatlite::render::{rasterize, rasterize_backward, RenderOptions};
use splatlite::splat::{GaussianSplat, SplatModel};
use splatlite::trainer;

/// Screen-space data computed by the oracle's own projection math.
pub struct OracleSplat {
    pub mean: [f64; 2],
    /// Dilated 2D covariance entries (a, b, c).
    pub cov: [f64; 3],
    pub depth: f64,
    pub color: [f64; 3],
    pub alpha: f64,
}

fn quat_to_matrix(q: DQuat) -> [[f64; 3]; 3] {
    let q = q.normalize();
    let (x, y, z, w) = (q.x, q.y, q.z, q.w);
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Project one splat with independently written math (no library calls).
/// Returns `None` only for splats in front of the near plane; there is no
/// image-rectangle culling here, so culled-by-footprint splats can be
/// force-rendered.
pub fn oracle_project(
    splat: &GaussianSplat,
    degree: usize,
    camera: &Camera,
    opts: &RenderOptions,
) -> Option<OracleSplat> {
    let r_wc = camera.rotation;
    let p = splat.position;
    let t = [
        r_wc[0][0] * p.x + r_wc[0][1] * p.y + r_wc[0][2] * p.z + camera.translation[0],
        r_wc[1][0] * p.x + r_wc[1][1] * p.y + r_wc[1][2] * p.z + camera.translation[1],
        r_wc[2][0] * p.x + r_wc[2][1] * p.y + r_wc[2][2] * p.z + camera.translation[2],
    ];
    if t[2] < camera.near {
        return None;
    }
    let rot = quat_to_matrix(splat.rotation);
    let var = [
        (2.0 * splat.log_scales.x).exp(),
        (2.0 * splat.log_scales.y).exp(),
        (2.0 * splat.log_scales.z).exp(),
    ];
    // sigma = R D R^T
    let mut rd = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            rd[i][j] = rot[i][j] * var[j];
        }
    }
    let mut sigma = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                sigma[i][j] += rd[i][k] * rot[j][k];
            }
        }
    }
    let inv_z = 1.0 / t[2];
    let jw = {
        let j = [
            [camera.fx * inv_z, 0.0, -camera.fx * t[0] * inv_z * inv_z],
            [0.0, camera.fy * inv_z, -camera.fy * t[1] * inv_z * inv_z],
        ];
        let mut out = [[0.0; 3]; 2];
        for (row, jr) in j.iter().enumerate() {
            for col in 0..3 {
                for k in 0..3 {
                    out[row][col] += jr[k] * r_wc[k][col];
                }
            }
        }
        out
    };
    // cov2 = jw sigma jw^T
    let mut tmp = [[0.0; 3]; 2];
    for (row, jr) in jw.iter().enumerate() {
        for col in 0..3 {
            for k in 0..3 {
                tmp[row][col] += jr[k] * sigma[k][col];
            }
        }
    }
    let mut cov = [0.0; 3];
    cov[0] = tmp[0][0] * jw[0][0] + tmp[0][1] * jw[0][1] + tmp[0][2] * jw[0][2] + opts.dilation;
    cov[1] = tmp[0][0] * jw[1][0] + tmp[0][1] * jw[1][1] + tmp[0][2] * jw[1][2];
    cov[2] = tmp[1][0] * jw[1][0] + tmp[1][1] * jw[1][1] + tmp[1][2] * jw[1][2] + opts.dilation;

    let mean = [
        camera.fx * t[0] * inv_z + camera.cx,
        camera.fy * t[1] * inv_z + camera.cy,
    ];

    let cam_pos = camera.position();
    let dir = (splat.position - cam_pos).normalize_or_zero();
    let raw = splatlite::sh::evaluate(&splat.sh_coeffs, dir, degree).unwrap();
    Some(OracleSplat {
        mean,
        cov,
        depth: t[2],
        color: [raw[0].max(0.0), raw[1].max(0.0), raw[2].max(0.0)],
        alpha: sigmoid(splat.opacity_logit),
    })
}

pub struct OracleRender {
    pub image: ImageBuf,
    pub transmittance: Vec<f64>,
    /// Per-pixel sum of compositing weights alpha_hat * T.
    pub weight_sum: Vec<f64>,
}

/// Straightforward O(N * pixels) front-to-back compositor over every splat
/// (no tiles, no bounding boxes), with the same compositing semantics.
pub fn oracle_rasterize(
    model: &SplatModel,
    camera: &Camera,
    background: [f64; 3],
    opts: &RenderOptions,
) -> OracleRender {
    let mut projected: Vec<(usize, OracleSplat)> = model
        .splats
        .iter()
        .enumerate()
        .filter_map(|(i, s)| oracle_project(s, model.sh_degree, camera, opts).map(|o| (i, o)))
        .collect();
    projected.sort_by(|a, b| a.1.depth.total_cmp(&b.1.depth).then(a.0.cmp(&b.0)));

    let mut image = ImageBuf::new(camera.width, camera.height);
    let mut transmittance = vec![1.0; camera.width * camera.height];
    let mut weight_sum = vec![0.0; camera.width * camera.height];
    for y in 0..camera.height {
        for x in 0..camera.width {
            let (px, py) = (x as f64, y as f64);
            let mut t = 1.0f64;
            let mut rgb = [0.0f64; 3];
            let mut wsum = 0.0f64;
            for (_, o) in &projected {
                let det = o.cov[0] * o.cov[2] - o.cov[1] * o.cov[1];
                if det <= 0.0 {
                    continue;
                }
                let (ia, ib, ic) = (o.cov[2] / det, -o.cov[1] / det, o.cov[0] / det);
                let dx = px - o.mean[0];
                let dy = py - o.mean[1];
                let q = 0.5 * (ia * dx * dx + ic * dy * dy) + ib * dx * dy;
                if q < 0.0 {
                    continue;
                }
                let alpha_hat = (o.alpha * (-q).exp()).min(opts.alpha_clamp);
                if alpha_hat < opts.alpha_floor {
                    continue;
                }
                let w = alpha_hat * t;
                for ch in 0..3 {
                    rgb[ch] += o.color[ch] * w;
                }
                wsum += w;
                t *= 1.0 - alpha_hat;
                if t < opts.transmittance_floor {
                    break;
                }
            }
            let idx = image.idx(x, y);
            for ch in 0..3 {
                image.data[idx + ch] = rgb[ch] + t * background[ch];
            }
            transmittance[y * camera.width + x] = t;
            weight_sum[y * camera.width + x] = wsum;
        }
    }
    OracleRender {
        image,
        transmittance,
        weight_sum,
    }
}

/// Deterministic random scene for gradient and equivalence tests. Splats are
/// spread through the frustum with moderate opacities so compositing clamps
/// and cutoffs stay away from their thresholds.
pub fn random_scene(seed: u64, n_splats: usize, degree: usize, size: usize) -> (SplatModel, Camera) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let camera = Camera {
        fx: 40.0 + rng.random_range(0.0..20.0),
        fy: 40.0 + rng.random_range(0.0..20.0),
        cx: (size / 2) as f64,
        cy: (size / 2) as f64,
        width: size,
        height: size,
        rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        translation: [0.0, 0.0, 0.0],
        near: 0.1,
    };
    let m = splatlite::sh::coeff_count(degree);
    let splats: Vec<GaussianSplat> = (0..n_splats)
        .map(|_| {
            let z = rng.random_range(1.2..2.8);
            let spread = 0.4 * z * (size as f64 / 2.0) / camera.fx;
            let mut sh_coeffs = vec![0.0; 3 * m];
            for ch in 0..3 {
                sh_coeffs[ch * m] = rng.random_range(0.2..2.5);
                for k in 1..m {
                    sh_coeffs[ch * m + k] = rng.random_range(-0.25..0.25);
                }
            }
            let q = DQuat::from_xyzw(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            GaussianSplat {
                position: DVec3::new(
                    rng.random_range(-spread..spread),
                    rng.random_range(-spread..spread),
                    z,
                ),
                rotation: if q.length() > 1e-3 { q.normalize() } else { DQuat::IDENTITY },
                log_scales: DVec3::new(
                    rng.random_range(-3.6..-2.4),
                    rng.random_range(-3.6..-2.4),
                    rng.random_range(-3.6..-2.4),
                ),
                opacity_logit: rng.random_range(-1.1..0.85), // alpha in ~[0.25, 0.7]
                sh_coeffs,
            }
        })
        .collect();
    (SplatModel::new(splats, degree), camera)
}

/// Random scene built for finite-difference gradient checks: footprints
/// wide enough that the 1/255 contribution floor falls outside the image
/// and opacities low enough that neither the alpha clamp nor the
/// transmittance cutoff engages. Inside that envelope the composite is
/// smooth in every parameter, which is what makes the stated FD tolerances
/// attainable.
pub fn fd_scene(seed: u64, n_splats: usize, degree: usize, size: usize) -> (SplatModel, Camera) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let focal = 45.0;
    let camera = Camera {
        fx: focal,
        fy: focal,
        cx: (size / 2) as f64,
        cy: (size / 2) as f64,
        width: size,
        height: size,
        rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        translation: [0.0, 0.0, 0.0],
        near: 0.1,
    };
    let m = splatlite::sh::coeff_count(degree);
    let splats: Vec<GaussianSplat> = (0..n_splats)
        .map(|_| {
            let z = rng.random_range(1.5..2.5);
            let sigma_px = rng.random_range(10.0..16.0);
            let sigma_world = sigma_px * z / focal;
            let px_offset = 5.0 * z / focal;
            let mut sh_coeffs = vec![0.0; 3 * m];
            for ch in 0..3 {
                sh_coeffs[ch * m] = rng.random_range(0.5..2.0);
                for k in 1..m {
                    sh_coeffs[ch * m + k] = rng.random_range(-0.15..0.15);
                }
            }
            let q = DQuat::from_xyzw(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            GaussianSplat {
                position: DVec3::new(
                    rng.random_range(-px_offset..px_offset),
                    rng.random_range(-px_offset..px_offset),
                    z,
                ),
                rotation: if q.length() > 1e-3 { q.normalize() } else { DQuat::IDENTITY },
                log_scales: DVec3::new(
                    (sigma_world * rng.random_range(0.9..1.1)).ln(),
                    (sigma_world * rng.random_range(0.9..1.1)).ln(),
                    (sigma_world * rng.random_range(0.9..1.1)).ln(),
                ),
                opacity_logit: rng.random_range(-1.38..-0.2), // alpha in ~[0.2, 0.45]
                sh_coeffs,
            }
        })
        .collect();
    (SplatModel::new(splats, degree), camera)
}

/// FD target: the scene's own render plus per-channel offsets bounded away
/// from zero, so the L1 sign kink cannot sit inside a finite-difference
/// band. Deliberately not clamped to [0, 1].
pub fn fd_target(model: &SplatModel, camera: &Camera, seed: u64, opts: &RenderOptions) -> ImageBuf {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut img = rasterize(model, camera, [0.1, 0.15, 0.2], opts).image;
    for v in img.data.iter_mut() {
        let mag = rng.random_range(0.05..0.4);
        let sign = if rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
        *v += sign * mag;
    }
    img
}

/// A trace cap sitting safely away from every splat's trace, so hinge kinks
/// never interfere with finite differences.
pub fn safe_trace_cap(model: &SplatModel) -> f64 {
    let traces: Vec<f64> = model.splats.iter().map(|s| s.covariance_trace()).collect();
    let mut sorted = traces.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut cap = 1.31 * sorted[sorted.len() / 2];
    for _ in 0..64 {
        let margin_ok = traces.iter().all(|t| (t - cap).abs() > 0.05 * cap);
        if margin_ok {
            break;
        }
        cap *= 1.043;
    }
    cap
}

/// Scalar objective used by gradient checks: the full weighted loss of the
/// rendered image against a fixed target, including the covariance term.
pub fn scene_loss(
    model: &SplatModel,
    camera: &Camera,
    target: &ImageBuf,
    weights: &splatlite::loss::LossWeights,
    trace_cap: f64,
    opts: &RenderOptions,
) -> f64 {
    let image = rasterize(model, camera, [0.1, 0.15, 0.2], opts).image;
    total_loss(&image, target, model, weights, trace_cap)
        .unwrap()
        .total
}

pub struct SceneGrads {
    pub position: Vec<DVec3>,
    pub rotation: Vec<[f64; 4]>,
    pub log_scales: Vec<DVec3>,
    pub opacity_logit: Vec<f64>,
    pub sh_coeffs: Vec<f64>,
    pub sh_stride: usize,
}

/// Analytic gradient of `scene_loss` for every parameter.
pub fn scene_loss_gradients(
    model: &SplatModel,
    camera: &Camera,
    target: &ImageBuf,
    weights: &splatlite::loss::LossWeights,
    trace_cap: f64,
    opts: &RenderOptions,
) -> SceneGrads {
    let background = [0.1, 0.15, 0.2];
    let result = rasterize(model, camera, background, opts);
    let report = total_loss(&result.image, target, model, weights, trace_cap).unwrap();
    let mut g = rasterize_backward(model, camera, background, &report.dl_dimage, opts).unwrap();
    for (gs, cov) in g.log_scales.iter_mut().zip(&report.cov_grad_log_scales) {
        *gs += *cov;
    }
    SceneGrads {
        position: g.position,
        rotation: g.rotation,
        log_scales: g.log_scales,
        opacity_logit: g.opacity_logit,
        sh_coeffs: g.sh_coeffs,
        sh_stride: g.sh_stride,
    }
}

/// Random target image in [0, 1].
pub fn random_target(seed: u64, size: usize) -> ImageBuf {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut img = ImageBuf::new(size, size);
    for v in img.data.iter_mut() {
        *v = rng.random_range(0.0..1.0);
    }
    img
}

/// The standard toy fixture from the acceptance criteria: seed 42, 64x64,
/// 16 cameras (2 held out), 400 reference splats, 80 init splats, 3000
/// iterations with the stage boundary at 1500.
pub fn toy_config() -> (splatlite::scene::SceneSpec, splatlite::trainer::TrainConfig) {
    let scene = splatlite::scene::SceneSpec {
        seed: 42,
        reference_splats: 400,
        camera_count: 16,
        width: 64,
        height: 64,
        ..Default::default()
    };
    let train = splatlite::trainer::TrainConfig {
        total_iterations: 3000,
        t_refine: Some(1500),
        seed: 42,
        log_interval: 100,
        refine: splatlite::refine::RefineConfig {
            refine_interval: 400,
            ..Default::default()
        },
        ..Default::default()
    };
    (scene, train)
}

/// Run the toy fixture once and cache the outcome for every test that needs it.
pub fn toy_run() -> &'static (splatlite::trainer::TrainOutput, trainer::Dataset, std::time::Duration)
{
    use std::sync::OnceLock;
    static RUN: OnceLock<(
        splatlite::trainer::TrainOutput,
        trainer::Dataset,
        std::time::Duration,
    )> = OnceLock::new();
    RUN.get_or_init(|| {
        let (scene_spec, train_cfg) = toy_config();
        let scene = splatlite::scene::generate(
            &scene_spec,
            train_cfg.background,
            3,
            &train_cfg.render,
        )
        .unwrap();
        let dataset = trainer::Dataset {
            cameras: scene.cameras,
            images: scene.ground_truth,
        };
        let started = std::time::Instant::now();
        let out = trainer::train(&dataset, &scene.init, &train_cfg, None).unwrap();
        (out, dataset, started.elapsed())
    })
}
