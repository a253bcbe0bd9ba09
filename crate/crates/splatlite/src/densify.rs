//! Growth stage: footprint-local error scoring, adaptive percentile
//! threshold, and splitting driven by either high local error or an active
//! trace penalty.

use glam::DVec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::rotation_matrix;
use crate::render::ScreenSplat;
use crate::splat::SplatModel;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthConfig {
    /// Percentile of the score distribution that sets the split threshold.
    pub percentile: f64,
    /// Clones replacing each selected splat.
    pub clones_per_split: usize,
    /// Multiplier applied to clone scales (in linear sigma units).
    pub scale_halving_factor: f64,
    /// Iterations between split events.
    pub densify_interval: usize,
    /// Hard cap on the live splat count.
    pub max_splats: usize,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        GrowthConfig {
            percentile: 90.0,
            clones_per_split: 2,
            scale_halving_factor: 0.5,
            densify_interval: 100,
            max_splats: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitReport {
    pub scores: Vec<f64>,
    pub threshold: f64,
    pub split_by_score: Vec<usize>,
    pub split_by_trace: Vec<usize>,
    pub count_before: usize,
    pub count_after: usize,
}

/// Per-splat average of the pixel gradient magnitudes inside each footprint
/// disc, over integer pixel centers clipped to the image. Culled splats and
/// splats covering no pixel centers score zero.
pub fn local_error_scores(
    g_map: &[f64],
    width: usize,
    height: usize,
    screens: &[Option<ScreenSplat>],
) -> Vec<f64> {
    screens
        .iter()
        .map(|screen| {
            let Some(s) = screen else { return 0.0 };
            let r = s.footprint_radius;
            let x0 = (s.mean2d.x - r).ceil().max(0.0) as usize;
            let x1 = (s.mean2d.x + r).floor().min(width as f64 - 1.0);
            let y0 = (s.mean2d.y - r).ceil().max(0.0) as usize;
            let y1 = (s.mean2d.y + r).floor().min(height as f64 - 1.0);
            if x1 < 0.0 || y1 < 0.0 || s.mean2d.x - r > width as f64 - 1.0 || s.mean2d.y - r > height as f64 - 1.0 {
                return 0.0;
            }
            let (x1, y1) = (x1 as usize, y1 as usize);
            let mut sum = 0.0;
            let mut count = 0usize;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let dx = x as f64 - s.mean2d.x;
                    let dy = y as f64 - s.mean2d.y;
                    if dx * dx + dy * dy <= r * r {
                        sum += g_map[y * width + x];
                        count += 1;
                    }
                }
            }
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        })
        .collect()
}

/// Nearest-rank percentile of the score multiset.
pub fn adaptive_threshold(scores: &[f64], percentile: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InvalidParameter(
            "adaptive threshold needs a non-empty score set".into(),
        ));
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::InvalidParameter(format!(
            "percentile must lie in (0, 100], got {percentile}"
        )));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = ((percentile / 100.0 * sorted.len() as f64).ceil() as usize)
        .clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

/// Split every splat whose score exceeds the threshold or whose trace
/// penalty is active. Each selected splat is replaced in place by
/// `clones_per_split` clones with shrunken scales and means pushed apart
/// along the parent's principal axis; everything else is copied verbatim and
/// keeps its order.
pub fn select_and_split(
    model: &SplatModel,
    scores: &[f64],
    threshold: f64,
    penalties: &[f64],
    cfg: &GrowthConfig,
    rng_seed: u64,
) -> (SplatModel, SplitReport, Vec<Option<usize>>) {
    assert_eq!(scores.len(), model.len());
    assert_eq!(penalties.len(), model.len());
    let n = model.len();
    let mut selected: Vec<bool> = (0..n)
        .map(|k| scores[k] > threshold || penalties[k] > 0.0)
        .collect();

    // cap: drop the lowest-score selections first
    let extra_per_split = cfg.clones_per_split - 1;
    let mut selected_ids: Vec<usize> = (0..n).filter(|&k| selected[k]).collect();
    let budget = cfg.max_splats.saturating_sub(n) / extra_per_split.max(1);
    if selected_ids.len() > budget {
        selected_ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        for &k in &selected_ids[budget..] {
            selected[k] = false;
        }
        selected_ids.truncate(budget);
    }

    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let mut splats = Vec::with_capacity(n + selected_ids.len() * extra_per_split);
    // old index -> new index for survivors (None for replaced parents)
    let mut index_map: Vec<Option<usize>> = vec![None; n];
    let mut split_by_score = Vec::new();
    let mut split_by_trace = Vec::new();

    for (k, splat) in model.splats.iter().enumerate() {
        if !selected[k] {
            index_map[k] = Some(splats.len());
            splats.push(splat.clone());
            continue;
        }
        if penalties[k] > 0.0 {
            split_by_trace.push(k);
        }
        if scores[k] > threshold {
            split_by_score.push(k);
        }
        let sigmas = splat.sigmas();
        let max_axis = if sigmas.x >= sigmas.y && sigmas.x >= sigmas.z {
            0
        } else if sigmas.y >= sigmas.z {
            1
        } else {
            2
        };
        let r = rotation_matrix(splat.rotation);
        let principal = r.col(max_axis);
        let step = 0.5 * sigmas[max_axis];
        for j in 0..cfg.clones_per_split {
            let offset = match j {
                0 => principal * step,
                1 => -principal * step,
                _ => {
                    // further clones scatter along a random axis mix
                    let dir = DVec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    let dir = if dir.length() < 1e-9 { DVec3::X } else { dir.normalize() };
                    (r * (dir * sigmas.to_array()[max_axis])) * 0.5
                }
            };
            let mut clone = splat.clone();
            clone.position += offset;
            clone.log_scales += DVec3::splat(cfg.scale_halving_factor.ln());
            splats.push(clone);
        }
    }

    let count_after = splats.len();
    let report = SplitReport {
        scores: scores.to_vec(),
        threshold,
        split_by_score,
        split_by_trace,
        count_before: n,
        count_after,
    };
    (SplatModel::new(splats, model.sh_degree), report, index_map)
}

/// Running per-splat mean of local error scores between split events.
#[derive(Debug, Clone, Default)]
pub struct ScoreAccumulator {
    sums: Vec<f64>,
    steps: usize,
}

impl ScoreAccumulator {
    pub fn reset(&mut self, n: usize) {
        self.sums = vec![0.0; n];
        self.steps = 0;
    }

    pub fn accumulate(&mut self, scores: &[f64]) {
        if self.sums.len() != scores.len() {
            self.reset(scores.len());
        }
        for (acc, s) in self.sums.iter_mut().zip(scores) {
            *acc += s;
        }
        self.steps += 1;
    }

    pub fn means(&self) -> Vec<f64> {
        if self.steps == 0 {
            return vec![0.0; self.sums.len()];
        }
        self.sums.iter().map(|s| s / self.steps as f64).collect()
    }
}
