//! Photometric objective (L1 + L2 + SSIM) with exact per-pixel gradients,
//! plus the trace-hinge covariance term routed straight to splat scales.

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::img::ImageBuf;
use crate::splat::{trace_penalty_from_scales, trace_penalty_gradient, SplatModel};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub l1: f64,
    pub l2: f64,
    pub ssim: f64,
    pub cov: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        // l1 = l2 = 0.5 fixed; ssim follows the usual splatting convention,
        // cov sized so the penalty stays a small fraction of total at init.
        LossWeights {
            l1: 0.5,
            l2: 0.5,
            ssim: 0.2,
            cov: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossReport {
    pub total: f64,
    pub l1: f64,
    pub l2: f64,
    pub ssim_term: f64,
    pub cov_term: f64,
    /// Weighted photometric gradient with respect to the rendered image.
    pub dl_dimage: ImageBuf,
    /// Per-splat log-scale gradient of the weighted covariance term.
    pub cov_grad_log_scales: Vec<DVec3>,
}

/// Mean absolute error and its per-pixel gradient (sign(e) / N, 0 at e = 0).
pub fn l1_loss(rendered: &ImageBuf, target: &ImageBuf) -> Result<(f64, ImageBuf)> {
    rendered.same_shape(target)?;
    let n = rendered.data.len() as f64;
    let mut grad = ImageBuf::new(rendered.width, rendered.height);
    let mut sum = 0.0;
    for i in 0..rendered.data.len() {
        let e = rendered.data[i] - target.data[i];
        sum += e.abs();
        grad.data[i] = if e > 0.0 {
            1.0 / n
        } else if e < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok((sum / n, grad))
}

/// Mean squared error; the gradient 2e / N grows linearly with the error.
pub fn l2_loss(rendered: &ImageBuf, target: &ImageBuf) -> Result<(f64, ImageBuf)> {
    rendered.same_shape(target)?;
    let n = rendered.data.len() as f64;
    let mut grad = ImageBuf::new(rendered.width, rendered.height);
    let mut sum = 0.0;
    for i in 0..rendered.data.len() {
        let e = rendered.data[i] - target.data[i];
        sum += e * e;
        grad.data[i] = 2.0 * e / n;
    }
    Ok((sum / n, grad))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Mirror an index into [0, n) without repeating the edge sample.
#[inline]
fn fold(mut i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * n - 2 - i;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian blur with reflected padding.
fn blur(plane: &[f64], w: usize, h: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let half = SSIM_WINDOW as isize / 2;
    let mut rows = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wk) in win.iter().enumerate() {
                let sx = fold(x as isize + k as isize - half, w);
                acc += wk * plane[y * w + sx];
            }
            rows[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wk) in win.iter().enumerate() {
                let sy = fold(y as isize + k as isize - half, h);
                acc += wk * rows[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Adjoint of `blur` under the same reflected padding (scatter instead of
/// gather), needed to push window-level gradients back to pixels.
fn blur_adjoint(plane: &[f64], w: usize, h: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let half = SSIM_WINDOW as isize / 2;
    let mut cols = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = plane[y * w + x];
            if v == 0.0 {
                continue;
            }
            for (k, wk) in win.iter().enumerate() {
                let sy = fold(y as isize + k as isize - half, h);
                cols[sy * w + x] += wk * v;
            }
        }
    }
    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = cols[y * w + x];
            if v == 0.0 {
                continue;
            }
            for (k, wk) in win.iter().enumerate() {
                let sx = fold(x as isize + k as isize - half, w);
                out[y * w + sx] += wk * v;
            }
        }
    }
    out
}

/// `1 - mean SSIM` over an 11x11 Gaussian window, per channel then averaged,
/// with the analytic gradient with respect to the rendered image.
pub fn ssim_loss(rendered: &ImageBuf, target: &ImageBuf) -> Result<(f64, ImageBuf)> {
    rendered.same_shape(target)?;
    let (w, h) = (rendered.width, rendered.height);
    let win = gaussian_window();
    let npos = (w * h * 3) as f64;
    let mut grad = ImageBuf::new(w, h);
    let mut ssim_sum = 0.0;

    let mut x_plane = vec![0.0f64; w * h];
    let mut y_plane = vec![0.0f64; w * h];
    let mut xx = vec![0.0f64; w * h];
    let mut yy = vec![0.0f64; w * h];
    let mut xy = vec![0.0f64; w * h];
    let mut e0 = vec![0.0f64; w * h];
    let mut e1 = vec![0.0f64; w * h];
    let mut e2 = vec![0.0f64; w * h];

    for ch in 0..3 {
        for i in 0..w * h {
            x_plane[i] = rendered.data[i * 3 + ch];
            y_plane[i] = target.data[i * 3 + ch];
            xx[i] = x_plane[i] * x_plane[i];
            yy[i] = y_plane[i] * y_plane[i];
            xy[i] = x_plane[i] * y_plane[i];
        }
        let mu_x = blur(&x_plane, w, h, &win);
        let mu_y = blur(&y_plane, w, h, &win);
        let bxx = blur(&xx, w, h, &win);
        let byy = blur(&yy, w, h, &win);
        let bxy = blur(&xy, w, h, &win);

        for i in 0..w * h {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let sx2 = bxx[i] - mx * mx;
            let sy2 = byy[i] - my * my;
            let sxy = bxy[i] - mx * my;
            let a1 = 2.0 * mx * my + SSIM_C1;
            let a2 = 2.0 * sxy + SSIM_C2;
            let b1 = mx * mx + my * my + SSIM_C1;
            let b2 = sx2 + sy2 + SSIM_C2;
            let d = b1 * b2;
            let s = a1 * a2 / d;
            ssim_sum += s;
            // partials holding blur(x^2), blur(xy) fixed:
            //   dS/dmu_x collects the direct A1/B1 paths plus the -mu_x^2 and
            //   -mu_x mu_y corrections inside sigma_x^2 and sigma_xy.
            let ds_dbxx = -s / b2;
            let ds_dbxy = 2.0 * a1 / d;
            let ds_dmux = 2.0 * my * a2 / d - 2.0 * mx * s / b1
                + ds_dbxx * (-2.0 * mx)
                + ds_dbxy * (-my);
            e0[i] = ds_dmux;
            e1[i] = ds_dbxx;
            e2[i] = ds_dbxy;
        }
        let g0 = blur_adjoint(&e0, w, h, &win);
        let g1 = blur_adjoint(&e1, w, h, &win);
        let g2 = blur_adjoint(&e2, w, h, &win);
        for i in 0..w * h {
            // d(1 - mean S)/dx
            grad.data[i * 3 + ch] =
                -(g0[i] + 2.0 * x_plane[i] * g1[i] + y_plane[i] * g2[i]) / npos;
        }
    }

    Ok((1.0 - ssim_sum / npos, grad))
}

/// Sum of per-splat trace hinge penalties; gradients flow to log-scales only.
pub fn covariance_loss(model: &SplatModel, trace_cap: f64) -> (f64, Vec<DVec3>) {
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(model.len());
    for splat in &model.splats {
        total += trace_penalty_from_scales(splat.log_scales, trace_cap);
        grads.push(trace_penalty_gradient(splat.log_scales, trace_cap));
    }
    (total, grads)
}

/// Weighted total objective. The photometric gradients are combined into
/// `dl_dimage`; the covariance gradient ships separately, already scaled by
/// its weight, for direct application to splat scales.
pub fn total_loss(
    rendered: &ImageBuf,
    target: &ImageBuf,
    model: &SplatModel,
    weights: &LossWeights,
    trace_cap: f64,
) -> Result<LossReport> {
    let (l1, g1) = l1_loss(rendered, target)?;
    let (l2, g2) = l2_loss(rendered, target)?;
    let (ssim_term, gs) = ssim_loss(rendered, target)?;
    let (cov_term, cov_grads) = covariance_loss(model, trace_cap);

    let mut dl_dimage = ImageBuf::new(rendered.width, rendered.height);
    for i in 0..dl_dimage.data.len() {
        dl_dimage.data[i] =
            weights.l1 * g1.data[i] + weights.l2 * g2.data[i] + weights.ssim * gs.data[i];
    }
    let cov_grad_log_scales = cov_grads.into_iter().map(|g| g * weights.cov).collect();

    Ok(LossReport {
        total: weights.l1 * l1 + weights.l2 * l2 + weights.ssim * ssim_term
            + weights.cov * cov_term,
        l1,
        l2,
        ssim_term,
        cov_term,
        dl_dimage,
        cov_grad_log_scales,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splat::GaussianSplat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> ImageBuf {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut img = ImageBuf::new(w, h);
        for v in img.data.iter_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        img
    }

    #[test]
    fn l1_basic_cases() {
        let a = random_image(8, 8, 1);
        assert_eq!(l1_loss(&a, &a).unwrap().0, 0.0);
        let mut b = a.clone();
        for v in b.data.iter_mut() {
            *v += 0.25;
        }
        assert!((l1_loss(&b, &a).unwrap().0 - 0.25).abs() < 1e-12);
        // elementwise oracle
        let c = random_image(8, 8, 2);
        let (got, _) = l1_loss(&a, &c).unwrap();
        let mut oracle = 0.0;
        for i in 0..a.data.len() {
            oracle += (a.data[i] - c.data[i]).abs();
        }
        oracle /= a.data.len() as f64;
        assert!((got - oracle).abs() < 1e-12);
    }

    #[test]
    fn l2_basic_and_gradient() {
        let a = random_image(4, 4, 3);
        assert_eq!(l2_loss(&a, &a).unwrap().0, 0.0);
        let mut b = a.clone();
        for v in b.data.iter_mut() {
            *v += 0.1;
        }
        assert!((l2_loss(&b, &a).unwrap().0 - 0.01).abs() < 1e-12);

        let target = random_image(4, 4, 4);
        let (_, grad) = l2_loss(&a, &target).unwrap();
        let h = 1e-6;
        for i in 0..a.data.len() {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap.data[i] += h;
            am.data[i] -= h;
            let fd = (l2_loss(&ap, &target).unwrap().0 - l2_loss(&am, &target).unwrap().0)
                / (2.0 * h);
            assert!((fd - grad.data[i]).abs() < 1e-8, "i={i} fd={fd} an={}", grad.data[i]);
        }
    }

    #[test]
    fn l2_gradient_linear_in_error() {
        let target = ImageBuf::new(4, 4);
        let mut one = ImageBuf::new(4, 4);
        let mut two = ImageBuf::new(4, 4);
        for i in 0..one.data.len() {
            one.data[i] = 0.1 * (i % 7) as f64;
            two.data[i] = 2.0 * one.data[i];
        }
        let (_, g1) = l2_loss(&one, &target).unwrap();
        let (_, g2) = l2_loss(&two, &target).unwrap();
        for i in 0..g1.data.len() {
            assert_eq!(g2.data[i], 2.0 * g1.data[i]);
        }
    }

    #[test]
    fn ssim_identical_is_zero() {
        let a = random_image(16, 16, 5);
        let (loss, _) = ssim_loss(&a, &a).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn ssim_symmetry() {
        let a = random_image(16, 16, 6);
        let b = random_image(16, 16, 7);
        let (ab, _) = ssim_loss(&a, &b).unwrap();
        let (ba, _) = ssim_loss(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-10);
    }

    #[test]
    fn ssim_inverted_structured_image() {
        // checkerboard-ish structure
        let mut a = ImageBuf::new(16, 16);
        for y in 0..16 {
            for x in 0..16 {
                let v = if (x / 2 + y / 2) % 2 == 0 { 0.9 } else { 0.1 };
                let i = a.idx(x, y);
                a.data[i] = v;
                a.data[i + 1] = v;
                a.data[i + 2] = v;
            }
        }
        let mut b = a.clone();
        for v in b.data.iter_mut() {
            *v = 1.0 - *v;
        }
        let (loss, _) = ssim_loss(&b, &a).unwrap();
        assert!(loss > 0.5, "inverted ssim loss = {loss}");
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let rendered = random_image(16, 16, 8);
        let target = random_image(16, 16, 9);
        let (_, grad) = ssim_loss(&rendered, &target).unwrap();
        let h = 1e-4;
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        for _ in 0..60 {
            let i = rng.random_range(0..rendered.data.len());
            let mut rp = rendered.clone();
            let mut rm = rendered.clone();
            rp.data[i] += h;
            rm.data[i] -= h;
            let fd = (ssim_loss(&rp, &target).unwrap().0 - ssim_loss(&rm, &target).unwrap().0)
                / (2.0 * h);
            // 1e-5 relative, with an absolute floor for near-zero entries
            // where central differences bottom out on truncation error
            let tol = (1e-5 * fd.abs()).max(1e-10);
            assert!(
                (fd - grad.data[i]).abs() < tol,
                "i={i} fd={fd} an={}",
                grad.data[i]
            );
        }
    }

    #[test]
    fn ssim_small_images_use_reflected_padding() {
        // smaller than the 11x11 window on both axes
        let a = random_image(5, 4, 11);
        let b = random_image(5, 4, 12);
        let (loss, _) = ssim_loss(&a, &b).unwrap();
        assert!(loss.is_finite() && loss >= 0.0);
        let (same, _) = ssim_loss(&a, &a).unwrap();
        assert!(same.abs() < 1e-12);
    }

    fn model_with_traces(traces: &[f64]) -> SplatModel {
        let splats = traces
            .iter()
            .map(|t| {
                // isotropic: 3 sigma^2 = t
                let sigma = (t / 3.0).sqrt();
                GaussianSplat::isotropic(glam::DVec3::ZERO, sigma, [0.5; 3], 0.5, 0)
            })
            .collect();
        SplatModel::new(splats, 0)
    }

    #[test]
    fn covariance_loss_cases() {
        let under = model_with_traces(&[0.5, 1.0, 2.9]);
        assert_eq!(covariance_loss(&under, 3.0).0, 0.0);
        let one_over = model_with_traces(&[4.0]);
        assert!((covariance_loss(&one_over, 3.0).0 - 1.0).abs() < 1e-12);
        // mixed population equals per-splat loop oracle
        let mixed = model_with_traces(&[0.5, 3.5, 2.0, 7.25]);
        let cap = 3.0;
        let oracle: f64 = [0.5f64, 3.5, 2.0, 7.25]
            .iter()
            .map(|t| (t - cap).max(0.0))
            .sum();
        assert!((covariance_loss(&mixed, cap).0 - oracle).abs() < 1e-12);
    }

    #[test]
    fn total_loss_composition() {
        let a = random_image(8, 8, 13);
        let model = model_with_traces(&[0.5, 1.0]);
        // identical images, under-cap splats, no ssim/cov weight -> 0
        let w = LossWeights {
            l1: 0.5,
            l2: 0.5,
            ssim: 0.0,
            cov: 0.0,
        };
        let report = total_loss(&a, &a, &model, &w, 3.0).unwrap();
        assert_eq!(report.total, 0.0);

        // weights (1,0,0,0) reduce to l1
        let b = random_image(8, 8, 14);
        let w1 = LossWeights {
            l1: 1.0,
            l2: 0.0,
            ssim: 0.0,
            cov: 0.0,
        };
        let r1 = total_loss(&a, &b, &model, &w1, 3.0).unwrap();
        assert_eq!(r1.total, l1_loss(&a, &b).unwrap().0);

        // default weights recompose from components
        let wd = LossWeights::default();
        let rd = total_loss(&a, &b, &model, &wd, 3.0).unwrap();
        let hand = wd.l1 * rd.l1 + wd.l2 * rd.l2 + wd.ssim * rd.ssim_term + wd.cov * rd.cov_term;
        assert!((rd.total - hand).abs() < 1e-12);
        assert!(rd.total >= 0.0 && rd.l1 >= 0.0 && rd.l2 >= 0.0 && rd.ssim_term >= 0.0);

        // dl_dimage combines the three photometric gradients elementwise
        let (_, g1) = l1_loss(&a, &b).unwrap();
        let (_, g2) = l2_loss(&a, &b).unwrap();
        let (_, gs) = ssim_loss(&a, &b).unwrap();
        for i in 0..rd.dl_dimage.data.len() {
            let want = wd.l1 * g1.data[i] + wd.l2 * g2.data[i] + wd.ssim * gs.data[i];
            assert!((rd.dl_dimage.data[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = ImageBuf::new(4, 4);
        let b = ImageBuf::new(5, 4);
        assert!(l1_loss(&a, &b).is_err());
        assert!(l2_loss(&a, &b).is_err());
        assert!(ssim_loss(&a, &b).is_err());
    }
}
