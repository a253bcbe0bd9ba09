//! Finite-difference verification of the analytic gradients through the
//! full render + loss pipeline.

mod common;

use common::{fd_scene, fd_target, random_scene, random_target, safe_trace_cap, scene_loss, scene_loss_gradients};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use splatlite::img::ImageBuf;
use splatlite::loss::{l2_loss, LossWeights};
use splatlite::render::{rasterize, rasterize_backward, RenderOptions};
use splatlite::splat::SplatModel;

const H: f64 = 1e-4;

fn fd_tolerance_ok(analytic: f64, fd: f64) -> bool {
    (analytic - fd).abs() <= (1e-4 * fd.abs()).max(1e-7)
}

/// Perturb one flat parameter index of the model. Layout per splat:
/// position(3), rotation(4), log_scales(3), opacity(1), sh(3 * m).
fn perturb(model: &SplatModel, splat: usize, slot: usize, delta: f64) -> SplatModel {
    let mut out = model.clone();
    let s = &mut out.splats[splat];
    match slot {
        0..=2 => s.position[slot] += delta,
        3..=6 => {
            let mut q = [s.rotation.x, s.rotation.y, s.rotation.z, s.rotation.w];
            q[slot - 3] += delta;
            s.rotation = glam::DQuat::from_xyzw(q[0], q[1], q[2], q[3]);
        }
        7..=9 => s.log_scales[slot - 7] += delta,
        10 => s.opacity_logit += delta,
        k => s.sh_coeffs[k - 11] += delta,
    }
    out
}

fn analytic_at(grads: &common::SceneGrads, splat: usize, slot: usize) -> f64 {
    match slot {
        0..=2 => grads.position[splat][slot],
        3..=6 => grads.rotation[splat][slot - 3],
        7..=9 => grads.log_scales[splat][slot - 7],
        10 => grads.opacity_logit[splat],
        k => grads.sh_coeffs[splat * grads.sh_stride + (k - 11)],
    }
}

/// One-splat scene against a constant target under a pure L2 objective:
/// every parameter gradient matches central finite differences.
#[test]
fn one_splat_l2_gradients_match_finite_differences() {
    let opts = RenderOptions::default();
    let (model, camera) = fd_scene(101, 1, 1, 12);
    let target = ImageBuf::filled(12, 12, [0.35, 0.45, 0.55]);
    let weights = LossWeights {
        l1: 0.0,
        l2: 1.0,
        ssim: 0.0,
        cov: 0.0,
    };
    let cap = safe_trace_cap(&model);
    let grads = scene_loss_gradients(&model, &camera, &target, &weights, cap, &opts);
    let slots = 11 + model.splats[0].sh_coeffs.len();
    for slot in 0..slots {
        let lp = scene_loss(&perturb(&model, 0, slot, H), &camera, &target, &weights, cap, &opts);
        let lm = scene_loss(&perturb(&model, 0, slot, -H), &camera, &target, &weights, cap, &opts);
        let fd = (lp - lm) / (2.0 * H);
        let an = analytic_at(&grads, 0, slot);
        assert!(
            fd_tolerance_ok(an, fd),
            "slot {slot}: analytic {an} vs fd {fd}"
        );
    }
}

/// Five-splat 16x16 scene under the full mixed loss: 50 randomly sampled
/// parameters match finite differences.
#[test]
fn five_splat_mixed_loss_sampled_gradients() {
    let opts = RenderOptions::default();
    let (model, camera) = fd_scene(202, 5, 2, 16);
    let target = fd_target(&model, &camera, 203, &opts);
    let weights = LossWeights::default();
    let cap = safe_trace_cap(&model);
    let grads = scene_loss_gradients(&model, &camera, &target, &weights, cap, &opts);
    let slots = 11 + model.splats[0].sh_coeffs.len();
    let mut rng = ChaCha12Rng::seed_from_u64(204);
    for _ in 0..50 {
        let splat = rng.random_range(0..model.len());
        let slot = rng.random_range(0..slots);
        let lp = scene_loss(&perturb(&model, splat, slot, H), &camera, &target, &weights, cap, &opts);
        let lm = scene_loss(&perturb(&model, splat, slot, -H), &camera, &target, &weights, cap, &opts);
        let fd = (lp - lm) / (2.0 * H);
        let an = analytic_at(&grads, splat, slot);
        assert!(
            fd_tolerance_ok(an, fd),
            "splat {splat} slot {slot}: analytic {an} vs fd {fd}"
        );
    }
}

/// Gradient correctness holds across random small scenes as a property.
#[test]
fn random_scene_gradient_property() {
    let opts = RenderOptions::default();
    for seed in 300..306 {
        let n = 2 + (seed as usize % 4);
        let degree = seed as usize % 3;
        let (model, camera) = fd_scene(seed, n, degree, 12);
        let target = fd_target(&model, &camera, seed + 1000, &opts);
        let weights = LossWeights::default();
        let cap = safe_trace_cap(&model);
        let grads = scene_loss_gradients(&model, &camera, &target, &weights, cap, &opts);
        let slots = 11 + model.splats[0].sh_coeffs.len();
        let mut rng = ChaCha12Rng::seed_from_u64(seed + 2000);
        for _ in 0..12 {
            let splat = rng.random_range(0..model.len());
            let slot = rng.random_range(0..slots);
            let lp = scene_loss(&perturb(&model, splat, slot, H), &camera, &target, &weights, cap, &opts);
            let lm = scene_loss(&perturb(&model, splat, slot, -H), &camera, &target, &weights, cap, &opts);
            let fd = (lp - lm) / (2.0 * H);
            let an = analytic_at(&grads, splat, slot);
            assert!(
                fd_tolerance_ok(an, fd),
                "seed {seed} splat {splat} slot {slot}: analytic {an} vs fd {fd}"
            );
        }
    }
}

/// The gradient-magnitude map is the channel norm of the incoming image
/// cotangent, independent of scene content.
#[test]
fn g_map_is_channel_norm_of_cotangent() {
    let (model, camera) = random_scene(400, 3, 1, 10);
    let target = random_target(401, 10);
    let opts = RenderOptions::default();
    let rendered = rasterize(&model, &camera, [0.0; 3], &opts);
    let (_, dl) = l2_loss(&rendered.image, &target).unwrap();
    let g = rasterize_backward(&model, &camera, [0.0; 3], &dl, &opts).unwrap();
    for (i, gv) in g.g_map.iter().enumerate() {
        let d = &dl.data[i * 3..i * 3 + 3];
        let want = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        assert!((gv - want).abs() < 1e-15);
        assert!(*gv >= 0.0);
    }
}
