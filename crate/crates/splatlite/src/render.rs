//! Differentiable pinhole projection and front-to-back alpha-composited
//! rasterization.
//!
//! The forward pass bins splats into tiles and composites per pixel in depth
//! order. The backward pass recomputes the per-pixel front-to-back state
//! instead of storing per-pixel lists, and accumulates parameter gradients in
//! a fixed order so repeated runs are bit-identical.

use glam::{DMat3, DVec2, DVec3};
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::img::ImageBuf;
use crate::math::{quat_normalize_backward, rotation_matrix, rotation_matrix_jacobian, sigmoid, sym2_max_eigenvalue};
use crate::sh;
use crate::splat::{covariance_from_params, GaussianSplat, SplatModel};

const TILE: usize = 16;
/// Gaussian weight falls below 1/255 beyond this many standard deviations.
const ALPHA_KILL_SIGMA: f64 = 3.328_880_783_385_867; // sqrt(2 ln 255)

/// Rasterizer constants inherited from the ecosystem's base renderer,
/// exposed so configs can see and override them.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    /// Isotropic anti-aliasing dilation added to the 2D covariance, px^2.
    pub dilation: f64,
    /// Upper clamp on per-splat effective alpha.
    pub alpha_clamp: f64,
    /// Contributions below this alpha are skipped.
    pub alpha_floor: f64,
    /// Per-pixel compositing stops once transmittance drops below this.
    pub transmittance_floor: f64,
    /// Multiplier on sqrt(lambda_max) for the footprint radius.
    pub footprint_sigma_mult: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            dilation: 0.3,
            alpha_clamp: 0.99,
            alpha_floor: 1.0 / 255.0,
            transmittance_floor: 1e-4,
            footprint_sigma_mult: 1.0,
        }
    }
}

/// A splat projected to the image plane.
#[derive(Debug, Clone, Copy)]
pub struct ScreenSplat {
    pub mean2d: DVec2,
    /// Dilated 2D covariance entries (a, b, c) of [[a, b], [b, c]], px^2.
    pub cov2d: [f64; 3],
    /// Camera-space z, world units.
    pub depth: f64,
    /// `footprint_sigma_mult * sqrt(lambda_max(cov2d))`, pixels.
    pub footprint_radius: f64,
}

/// sqrt of the largest eigenvalue of the dilated 2D covariance.
pub fn footprint_radius(screen: &ScreenSplat) -> f64 {
    let [a, b, c] = screen.cov2d;
    sym2_max_eigenvalue(a, b, c).max(0.0).sqrt()
}

/// Project one splat. `None` means culled: behind the near plane, or the
/// whole contributing footprint misses the image rectangle.
pub fn project(splat: &GaussianSplat, camera: &Camera, opts: &RenderOptions) -> Option<ScreenSplat> {
    let w = camera.rotation_matrix();
    let t = w * splat.position + camera.translation_vec();
    if t.z < camera.near {
        return None;
    }
    let cov3 = covariance_from_params(splat.rotation, splat.log_scales).ok()?;
    let (fx, fy) = (camera.fx, camera.fy);
    let inv_z = 1.0 / t.z;
    let j = [
        [fx * inv_z, 0.0, -fx * t.x * inv_z * inv_z],
        [0.0, fy * inv_z, -fy * t.y * inv_z * inv_z],
    ];
    let m = mat23_mul_mat3(&j, &w);
    let (mut a, b, mut c) = sym_quad_form23(&m, &cov3.matrix());
    a += opts.dilation;
    c += opts.dilation;
    if !(a.is_finite() && b.is_finite() && c.is_finite()) {
        return None;
    }
    let mean2d = DVec2::new(fx * t.x * inv_z + camera.cx, fy * t.y * inv_z + camera.cy);
    let lambda_max = sym2_max_eigenvalue(a, b, c).max(0.0);
    let kill_radius = ALPHA_KILL_SIGMA * lambda_max.sqrt();
    let (w_px, h_px) = (camera.width as f64, camera.height as f64);
    if mean2d.x + kill_radius < -0.5
        || mean2d.x - kill_radius > w_px - 0.5
        || mean2d.y + kill_radius < -0.5
        || mean2d.y - kill_radius > h_px - 0.5
    {
        return None;
    }
    Some(ScreenSplat {
        mean2d,
        cov2d: [a, b, c],
        depth: t.z,
        footprint_radius: opts.footprint_sigma_mult * lambda_max.sqrt(),
    })
}

#[derive(Debug, Clone)]
pub struct RenderResult {
    pub image: ImageBuf,
    /// One entry per model splat; `None` when culled.
    pub screens: Vec<Option<ScreenSplat>>,
    /// Final per-pixel transmittance.
    pub transmittance: Vec<f64>,
    /// Splats dropped because their 2D covariance was not invertible.
    pub skipped_singular: usize,
}

#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub position: Vec<DVec3>,
    /// Quaternion gradients in (x, y, z, w) order.
    pub rotation: Vec<[f64; 4]>,
    pub log_scales: Vec<DVec3>,
    pub opacity_logit: Vec<f64>,
    /// Flat per-splat SH gradients, stride `3 * coeffs_per_channel`.
    pub sh_coeffs: Vec<f64>,
    pub sh_stride: usize,
    /// Per-pixel magnitude of the photometric image gradient.
    pub g_map: Vec<f64>,
}

impl GradientBundle {
    fn zeros(n: usize, sh_stride: usize, pixels: usize) -> Self {
        GradientBundle {
            position: vec![DVec3::ZERO; n],
            rotation: vec![[0.0; 4]; n],
            log_scales: vec![DVec3::ZERO; n],
            opacity_logit: vec![0.0; n],
            sh_coeffs: vec![0.0; n * sh_stride],
            sh_stride,
            g_map: vec![0.0; pixels],
        }
    }
}

/// Per-splat state shared by the forward and backward passes.
struct ProjSplat {
    id: usize,
    mean2d: DVec2,
    /// Inverse dilated covariance as (A, B, C): q = 0.5 A dx^2 + B dx dy + 0.5 C dy^2.
    conic: [f64; 3],
    cov2d: [f64; 3],
    alpha: f64,
    /// Clamped (>= 0) view-dependent color.
    color: [f64; 3],
    raw_color: [f64; 3],
    t_cam: DVec3,
    bbox: [usize; 4], // x0, x1, y0, y1 inclusive pixel bounds
}

struct Prepared {
    splats: Vec<ProjSplat>,
    screens: Vec<Option<ScreenSplat>>,
    tiles: Vec<Vec<u32>>,
    tiles_x: usize,
    skipped_singular: usize,
}

fn mat23_mul_mat3(m: &[[f64; 3]; 2], n: &DMat3) -> [[f64; 3]; 2] {
    let mut out = [[0.0; 3]; 2];
    for (row, out_row) in out.iter_mut().enumerate() {
        for col in 0..3 {
            // n is column-major: n.col(col)[k] = N[k][col]
            out_row[col] = (0..3).map(|k| m[row][k] * n.col(col)[k]).sum();
        }
    }
    out
}

/// (m S m^T) for symmetric S, returning (a, b, c).
fn sym_quad_form23(m: &[[f64; 3]; 2], s: &DMat3) -> (f64, f64, f64) {
    let mut sm = [[0.0; 3]; 2]; // rows of m * S
    for (row, sm_row) in sm.iter_mut().enumerate() {
        for col in 0..3 {
            sm_row[col] = (0..3).map(|k| m[row][k] * s.col(col)[k]).sum();
        }
    }
    let dot = |p: &[f64; 3], q: &[f64; 3]| p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
    (dot(&sm[0], &m[0]), dot(&sm[0], &m[1]), dot(&sm[1], &m[1]))
}

fn prepare(model: &SplatModel, camera: &Camera, opts: &RenderOptions) -> Prepared {
    let n = model.len();
    let mut screens: Vec<Option<ScreenSplat>> = vec![None; n];
    let mut visible: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut skipped_singular = 0usize;
    let cam_pos = camera.position();
    let w_mat = camera.rotation_matrix();
    let t_vec = camera.translation_vec();

    let mut projected: Vec<Option<ProjSplat>> = Vec::with_capacity(n);
    for (id, splat) in model.splats.iter().enumerate() {
        let Some(screen) = project(splat, camera, opts) else {
            projected.push(None);
            continue;
        };
        let [a, b, c] = screen.cov2d;
        let det = a * c - b * b;
        if !(det > 0.0) || !det.is_finite() {
            skipped_singular += 1;
            projected.push(None);
            continue;
        }
        let inv_det = 1.0 / det;
        let conic = [c * inv_det, -b * inv_det, a * inv_det];
        let dir = (splat.position - cam_pos).normalize_or_zero();
        let raw_color = sh::evaluate(&splat.sh_coeffs, dir, model.sh_degree)
            .unwrap_or([0.0, 0.0, 0.0]);
        let color = [
            raw_color[0].max(0.0),
            raw_color[1].max(0.0),
            raw_color[2].max(0.0),
        ];
        let lambda_max = sym2_max_eigenvalue(a, b, c).max(0.0);
        let r = ALPHA_KILL_SIGMA * lambda_max.sqrt();
        let x0 = (screen.mean2d.x - r).ceil().max(0.0) as usize;
        let x1 = (screen.mean2d.x + r).floor().min(camera.width as f64 - 1.0) as usize;
        let y0 = (screen.mean2d.y - r).ceil().max(0.0) as usize;
        let y1 = (screen.mean2d.y + r).floor().min(camera.height as f64 - 1.0) as usize;
        if x0 > x1 || y0 > y1 || (screen.mean2d.x + r) < 0.0 || (screen.mean2d.y + r) < 0.0 {
            // footprint lies between pixel centers
            screens[id] = Some(screen);
            projected.push(None);
            continue;
        }
        screens[id] = Some(screen);
        visible.push((screen.depth, id));
        projected.push(Some(ProjSplat {
            id,
            mean2d: screen.mean2d,
            conic,
            cov2d: screen.cov2d,
            alpha: sigmoid(splat.opacity_logit),
            color,
            raw_color,
            t_cam: w_mat * splat.position + t_vec,
            bbox: [x0, x1, y0, y1],
        }));
    }

    // front-to-back order, ties broken by splat id
    visible.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    let tiles_x = camera.width.div_ceil(TILE);
    let tiles_y = camera.height.div_ceil(TILE);
    let mut tiles: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    let mut ordered: Vec<ProjSplat> = Vec::with_capacity(visible.len());
    for (slot, (_, id)) in visible.iter().enumerate() {
        let ps = projected[*id].take().expect("visible splat was projected");
        let [x0, x1, y0, y1] = ps.bbox;
        for ty in (y0 / TILE)..=(y1 / TILE) {
            for tx in (x0 / TILE)..=(x1 / TILE) {
                tiles[ty * tiles_x + tx].push(slot as u32);
            }
        }
        ordered.push(ps);
    }

    Prepared {
        splats: ordered,
        screens,
        tiles,
        tiles_x,
        skipped_singular,
    }
}

/// Effective alpha of a projected splat at a pixel center, with the clamp
/// applied. `None` when below the contribution floor.
#[inline]
fn effective_alpha(ps: &ProjSplat, px: f64, py: f64, opts: &RenderOptions) -> Option<(f64, bool)> {
    let dx = px - ps.mean2d.x;
    let dy = py - ps.mean2d.y;
    let q = 0.5 * (ps.conic[0] * dx * dx + ps.conic[2] * dy * dy) + ps.conic[1] * dx * dy;
    if q < 0.0 {
        return None;
    }
    let raw = ps.alpha * (-q).exp();
    let clamped = raw > opts.alpha_clamp;
    let alpha_hat = if clamped { opts.alpha_clamp } else { raw };
    if alpha_hat < opts.alpha_floor {
        return None;
    }
    Some((alpha_hat, clamped))
}

/// Front-to-back alpha compositing of the whole model under one camera.
pub fn rasterize(
    model: &SplatModel,
    camera: &Camera,
    background: [f64; 3],
    opts: &RenderOptions,
) -> RenderResult {
    let prep = prepare(model, camera, opts);
    let mut image = ImageBuf::new(camera.width, camera.height);
    let mut transmittance = vec![1.0f64; camera.pixel_count()];

    for y in 0..camera.height {
        for x in 0..camera.width {
            let (px, py) = (x as f64, y as f64);
            let tile = &prep.tiles[(y / TILE) * prep.tiles_x + (x / TILE)];
            let mut t = 1.0f64;
            let mut rgb = [0.0f64; 3];
            for &slot in tile {
                let ps = &prep.splats[slot as usize];
                if px < ps.bbox[0] as f64 || px > ps.bbox[1] as f64 || py < ps.bbox[2] as f64 || py > ps.bbox[3] as f64 {
                    continue;
                }
                let Some((alpha_hat, _)) = effective_alpha(ps, px, py, opts) else {
                    continue;
                };
                let w = alpha_hat * t;
                for ch in 0..3 {
                    rgb[ch] += ps.color[ch] * w;
                }
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
        }
    }

    RenderResult {
        image,
        screens: prep.screens,
        transmittance,
        skipped_singular: prep.skipped_singular,
    }
}

/// Analytic gradients of the composited image with respect to every splat
/// parameter, chain-ruled with `dl_dimage`. Also carries the per-pixel
/// gradient-magnitude map used by the growth stage.
pub fn rasterize_backward(
    model: &SplatModel,
    camera: &Camera,
    background: [f64; 3],
    dl_dimage: &ImageBuf,
    opts: &RenderOptions,
) -> Result<GradientBundle> {
    if dl_dimage.width != camera.width || dl_dimage.height != camera.height {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", camera.width, camera.height),
            got: format!("{}x{}", dl_dimage.width, dl_dimage.height),
        });
    }
    let n = model.len();
    let sh_stride = 3 * model.coeffs_per_channel();
    let mut grads = GradientBundle::zeros(n, sh_stride, camera.pixel_count());
    for (i, g) in grads.g_map.iter_mut().enumerate() {
        let d = &dl_dimage.data[i * 3..i * 3 + 3];
        *g = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    }
    if n == 0 {
        return Ok(grads);
    }

    let prep = prepare(model, camera, opts);
    let nv = prep.splats.len();
    // accumulators per visible splat
    let mut g_color = vec![[0.0f64; 3]; nv];
    let mut g_alpha = vec![0.0f64; nv];
    let mut g_mean2d = vec![DVec2::ZERO; nv];
    let mut g_conic = vec![[0.0f64; 3]; nv];

    for y in 0..camera.height {
        for x in 0..camera.width {
            let (px, py) = (x as f64, y as f64);
            let tile = &prep.tiles[(y / TILE) * prep.tiles_x + (x / TILE)];
            let idx = dl_dimage.idx(x, y);
            let dpix = [
                dl_dimage.data[idx],
                dl_dimage.data[idx + 1],
                dl_dimage.data[idx + 2],
            ];
            if dpix == [0.0, 0.0, 0.0] {
                continue;
            }

            // first walk: total splat contribution and final transmittance
            let mut c_total = [0.0f64; 3];
            let mut t = 1.0f64;
            for &slot in tile {
                let ps = &prep.splats[slot as usize];
                if px < ps.bbox[0] as f64 || px > ps.bbox[1] as f64 || py < ps.bbox[2] as f64 || py > ps.bbox[3] as f64 {
                    continue;
                }
                let Some((alpha_hat, _)) = effective_alpha(ps, px, py, opts) else {
                    continue;
                };
                let w = alpha_hat * t;
                for ch in 0..3 {
                    c_total[ch] += ps.color[ch] * w;
                }
                t *= 1.0 - alpha_hat;
                if t < opts.transmittance_floor {
                    break;
                }
            }
            let t_final = t;

            // second walk: gradients, maintaining the prefix sum
            let mut prefix = [0.0f64; 3];
            let mut t = 1.0f64;
            for &slot in tile {
                let ps = &prep.splats[slot as usize];
                if px < ps.bbox[0] as f64 || px > ps.bbox[1] as f64 || py < ps.bbox[2] as f64 || py > ps.bbox[3] as f64 {
                    continue;
                }
                let Some((alpha_hat, clamped)) = effective_alpha(ps, px, py, opts) else {
                    continue;
                };
                let w = alpha_hat * t;
                let s = slot as usize;
                // dC/dcolor = alpha_hat * T
                for ch in 0..3 {
                    g_color[s][ch] += dpix[ch] * w;
                }
                // suffix: what renders behind this splat, including background
                let mut d_alpha_hat = 0.0;
                for ch in 0..3 {
                    let suffix =
                        c_total[ch] - prefix[ch] - ps.color[ch] * w + t_final * background[ch];
                    d_alpha_hat += dpix[ch] * (t * ps.color[ch] - suffix / (1.0 - alpha_hat));
                }
                if !clamped {
                    // alpha_hat = alpha * exp(-q)
                    let gaussian = alpha_hat / ps.alpha;
                    g_alpha[s] += d_alpha_hat * gaussian;
                    let d_q = -d_alpha_hat * alpha_hat;
                    let dx = px - ps.mean2d.x;
                    let dy = py - ps.mean2d.y;
                    // q = 0.5 A dx^2 + B dx dy + 0.5 C dy^2
                    g_mean2d[s].x += -d_q * (ps.conic[0] * dx + ps.conic[1] * dy);
                    g_mean2d[s].y += -d_q * (ps.conic[1] * dx + ps.conic[2] * dy);
                    g_conic[s][0] += d_q * 0.5 * dx * dx;
                    g_conic[s][1] += d_q * dx * dy;
                    g_conic[s][2] += d_q * 0.5 * dy * dy;
                }
                for ch in 0..3 {
                    prefix[ch] += ps.color[ch] * w;
                }
                t *= 1.0 - alpha_hat;
                if t < opts.transmittance_floor {
                    break;
                }
            }
        }
    }

    // chain per-splat screen-space gradients back to parameters
    let w_mat = camera.rotation_matrix();
    let cam_pos = camera.position();
    let m_per_ch = model.coeffs_per_channel();
    for (slot, ps) in prep.splats.iter().enumerate() {
        let splat = &model.splats[ps.id];
        let t_cam = ps.t_cam;
        let (fx, fy) = (camera.fx, camera.fy);
        let inv_z = 1.0 / t_cam.z;

        // conic -> dilated cov2d entries
        let [ga_c, gb_c, gc_c] = g_conic[slot];
        let [a, b, c] = ps.cov2d;
        let det = a * c - b * b;
        let inv_det2 = 1.0 / (det * det);
        let g_a = (-ga_c * c * c + gb_c * b * c - gc_c * b * b) * inv_det2;
        let g_b = (2.0 * ga_c * b * c - gb_c * (a * c + b * b) + 2.0 * gc_c * a * b) * inv_det2;
        let g_c = (-ga_c * b * b + gb_c * a * b - gc_c * a * a) * inv_det2;

        // full-matrix gradient of the 2D covariance
        let g2 = [[g_a, 0.5 * g_b], [0.5 * g_b, g_c]];

        let j = [
            [fx * inv_z, 0.0, -fx * t_cam.x * inv_z * inv_z],
            [0.0, fy * inv_z, -fy * t_cam.y * inv_z * inv_z],
        ];
        let m = mat23_mul_mat3(&j, &w_mat);
        let cov3 = covariance_from_params(splat.rotation, splat.log_scales)
            .expect("visible splat has valid covariance");
        let sigma = cov3.matrix();

        // dL/dSigma3 = M^T G2 M
        let mut g_sigma = [[0.0f64; 3]; 3];
        for r in 0..3 {
            for cc in 0..3 {
                let mut acc = 0.0;
                for i in 0..2 {
                    for k in 0..2 {
                        acc += m[i][r] * g2[i][k] * m[k][cc];
                    }
                }
                g_sigma[r][cc] = acc;
            }
        }

        // dL/dM = 2 G2 M Sigma3
        let mut m_sigma = [[0.0f64; 3]; 2];
        for (row, out_row) in m_sigma.iter_mut().enumerate() {
            for cc in 0..3 {
                out_row[cc] = (0..3).map(|k| m[row][k] * sigma.col(cc)[k]).sum();
            }
        }
        let mut g_m = [[0.0f64; 3]; 2];
        for (row, out_row) in g_m.iter_mut().enumerate() {
            for cc in 0..3 {
                out_row[cc] = 2.0 * (0..2).map(|k| g2[row][k] * m_sigma[k][cc]).sum::<f64>();
            }
        }
        // dL/dJ = dL/dM W^T  (W row r of J maps through column r of W^T)
        let mut g_j = [[0.0f64; 3]; 2];
        for (row, out_row) in g_j.iter_mut().enumerate() {
            for cc in 0..3 {
                // (W^T)[k][cc] = W[cc][k] ; w_mat.col(k)[cc] = W[cc][k]
                out_row[cc] = (0..3).map(|k| g_m[row][k] * w_mat.col(k)[cc]).sum();
            }
        }

        let inv_z2 = inv_z * inv_z;
        let inv_z3 = inv_z2 * inv_z;
        let mut g_tcam = DVec3::new(
            g_j[0][2] * (-fx * inv_z2),
            g_j[1][2] * (-fy * inv_z2),
            g_j[0][0] * (-fx * inv_z2)
                + g_j[1][1] * (-fy * inv_z2)
                + g_j[0][2] * (2.0 * fx * t_cam.x * inv_z3)
                + g_j[1][2] * (2.0 * fy * t_cam.y * inv_z3),
        );

        // mean2d path
        let gm = g_mean2d[slot];
        g_tcam.x += gm.x * fx * inv_z;
        g_tcam.y += gm.y * fy * inv_z;
        g_tcam.z += -gm.x * fx * t_cam.x * inv_z2 - gm.y * fy * t_cam.y * inv_z2;

        let mut g_pos = w_mat.transpose() * g_tcam;

        // color path: clamp mask, then SH coefficients and view direction
        let v = splat.position - cam_pos;
        let v_len = v.length();
        let dir = if v_len > 0.0 { v / v_len } else { DVec3::ZERO };
        let basis = sh::basis(dir, model.sh_degree);
        let basis_grad = sh::basis_gradient(dir, model.sh_degree);
        let mut g_dir = DVec3::ZERO;
        let sh_base = ps.id * sh_stride;
        for ch in 0..3 {
            if ps.raw_color[ch] <= 0.0 {
                continue;
            }
            let gc = g_color[slot][ch];
            if gc == 0.0 {
                continue;
            }
            for k in 0..m_per_ch {
                grads.sh_coeffs[sh_base + ch * m_per_ch + k] += gc * basis[k];
                g_dir += gc * splat.sh_coeffs[ch * m_per_ch + k] * basis_grad[k];
            }
        }
        if v_len > 0.0 {
            g_pos += (g_dir - dir * dir.dot(g_dir)) / v_len;
        }
        grads.position[ps.id] = g_pos;

        // Sigma3 -> (rotation, log_scales)
        let r_mat = rotation_matrix(splat.rotation);
        let g_sigma_m = DMat3::from_cols(
            DVec3::new(g_sigma[0][0], g_sigma[1][0], g_sigma[2][0]),
            DVec3::new(g_sigma[0][1], g_sigma[1][1], g_sigma[2][1]),
            DVec3::new(g_sigma[0][2], g_sigma[1][2], g_sigma[2][2]),
        );
        let rt_g_r = r_mat.transpose() * g_sigma_m * r_mat;
        let sq = (2.0 * splat.log_scales).exp();
        grads.log_scales[ps.id] = DVec3::new(
            rt_g_r.col(0).x * 2.0 * sq.x,
            rt_g_r.col(1).y * 2.0 * sq.y,
            rt_g_r.col(2).z * 2.0 * sq.z,
        );

        let d_diag = DMat3::from_diagonal(sq);
        let g_r = 2.0 * g_sigma_m * r_mat * d_diag;
        let jac = rotation_matrix_jacobian(splat.rotation.normalize());
        let mut g_q_unit = [0.0f64; 4];
        for (i, gq) in g_q_unit.iter_mut().enumerate() {
            let mut acc = 0.0;
            for col in 0..3 {
                acc += g_r.col(col).dot(jac[i].col(col));
            }
            *gq = acc;
        }
        grads.rotation[ps.id] = quat_normalize_backward(splat.rotation, g_q_unit);

        // opacity
        let alpha = ps.alpha;
        grads.opacity_logit[ps.id] = g_alpha[slot] * alpha * (1.0 - alpha);
    }

    Ok(grads)
}

/// Render and return only the image (convenience for callers that do not
/// need the per-splat screen data).
pub fn render_image(
    model: &SplatModel,
    camera: &Camera,
    background: [f64; 3],
    opts: &RenderOptions,
) -> ImageBuf {
    rasterize(model, camera, background, opts).image
}
