//! Adaptive moment-based gradient descent over splat parameter groups.
//!
//! Moment arrays track the live splat set across splits, prunes, and merges:
//! surviving splats keep their state through an index map, new splats start
//! from zeroed moments.

use glam::{DQuat, DVec3};
use serde::{Deserialize, Serialize};

use crate::render::GradientBundle;
use crate::splat::SplatModel;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub position: f64,
    /// Position rate decays exponentially to this value by the last iteration.
    pub position_final: f64,
    pub rotation: f64,
    pub log_scales: f64,
    pub opacity: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            position: 1.6e-4,
            position_final: 1.6e-6,
            rotation: 1e-3,
            log_scales: 5e-3,
            opacity: 5e-2,
            sh_dc: 2.5e-3,
            sh_rest: 1.25e-4,
        }
    }
}

impl LearningRates {
    /// Exponential decay of the position rate across the run.
    pub fn position_at(&self, iteration: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.position;
        }
        let t = iteration as f64 / (total - 1) as f64;
        self.position * (self.position_final / self.position).powf(t)
    }
}

/// First/second moment accumulators for one scalar slot.
#[derive(Debug, Clone, Copy, Default)]
struct Moment {
    m: f64,
    v: f64,
}

impl Moment {
    #[inline]
    fn step(&mut self, grad: f64, lr: f64, bias1: f64, bias2: f64) -> f64 {
        self.m = ADAM_BETA1 * self.m + (1.0 - ADAM_BETA1) * grad;
        self.v = ADAM_BETA2 * self.v + (1.0 - ADAM_BETA2) * grad * grad;
        let m_hat = self.m / bias1;
        let v_hat = self.v / bias2;
        -lr * m_hat / (v_hat.sqrt() + ADAM_EPS)
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    position: Vec<[Moment; 3]>,
    rotation: Vec<[Moment; 4]>,
    log_scales: Vec<[Moment; 3]>,
    opacity: Vec<Moment>,
    sh: Vec<Moment>,
    sh_stride: usize,
    steps: u64,
}

impl OptimizerState {
    pub fn new(n: usize, sh_stride: usize) -> Self {
        OptimizerState {
            position: vec![[Moment::default(); 3]; n],
            rotation: vec![[Moment::default(); 4]; n],
            log_scales: vec![[Moment::default(); 3]; n],
            opacity: vec![Moment::default(); n],
            sh: vec![Moment::default(); n * sh_stride],
            sh_stride,
            steps: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    /// Rebuild state after a topology change. `index_map[old] = Some(new)`
    /// keeps the old moments; slots never written stay zeroed.
    pub fn remap(&mut self, index_map: &[Option<usize>], new_len: usize) {
        let mut next = OptimizerState::new(new_len, self.sh_stride);
        next.steps = self.steps;
        for (old, maybe_new) in index_map.iter().enumerate() {
            let Some(new) = *maybe_new else { continue };
            next.position[new] = self.position[old];
            next.rotation[new] = self.rotation[old];
            next.log_scales[new] = self.log_scales[old];
            next.opacity[new] = self.opacity[old];
            let src = old * self.sh_stride;
            let dst = new * self.sh_stride;
            next.sh[dst..dst + self.sh_stride]
                .copy_from_slice(&self.sh[src..src + self.sh_stride]);
        }
        *self = next;
    }

    /// One descent step over every parameter group. Rotations are
    /// renormalized afterwards so the unit-norm invariant survives.
    pub fn step(
        &mut self,
        model: &mut SplatModel,
        grads: &GradientBundle,
        rates: &LearningRates,
        position_lr: f64,
    ) {
        assert_eq!(self.len(), model.len(), "optimizer state tracks the model");
        assert_eq!(self.sh_stride, grads.sh_stride);
        self.steps += 1;
        let bias1 = 1.0 - ADAM_BETA1.powi(self.steps as i32);
        let bias2 = 1.0 - ADAM_BETA2.powi(self.steps as i32);
        let m_per_ch = self.sh_stride / 3;

        for (i, splat) in model.splats.iter_mut().enumerate() {
            for axis in 0..3 {
                let delta =
                    self.position[i][axis].step(grads.position[i][axis], position_lr, bias1, bias2);
                splat.position[axis] += delta;
            }
            let mut q = [splat.rotation.x, splat.rotation.y, splat.rotation.z, splat.rotation.w];
            for k in 0..4 {
                q[k] += self.rotation[i][k].step(grads.rotation[i][k], rates.rotation, bias1, bias2);
            }
            let quat = DQuat::from_xyzw(q[0], q[1], q[2], q[3]);
            splat.rotation = if quat.length() > 1e-12 {
                quat.normalize()
            } else {
                DQuat::IDENTITY
            };
            let mut s = splat.log_scales;
            for axis in 0..3 {
                s[axis] += self.log_scales[i][axis].step(
                    grads.log_scales[i][axis],
                    rates.log_scales,
                    bias1,
                    bias2,
                );
            }
            // keep exp() in safe territory
            splat.log_scales = DVec3::new(
                s.x.clamp(-15.0, 15.0),
                s.y.clamp(-15.0, 15.0),
                s.z.clamp(-15.0, 15.0),
            );
            splat.opacity_logit +=
                self.opacity[i].step(grads.opacity_logit[i], rates.opacity, bias1, bias2);
            splat.opacity_logit = splat.opacity_logit.clamp(-15.0, 15.0);

            let base = i * self.sh_stride;
            for ch in 0..3 {
                for k in 0..m_per_ch {
                    let idx = ch * m_per_ch + k;
                    let lr = if k == 0 { rates.sh_dc } else { rates.sh_rest };
                    splat.sh_coeffs[idx] +=
                        self.sh[base + idx].step(grads.sh_coeffs[base + idx], lr, bias1, bias2);
                }
            }
        }
    }
}
