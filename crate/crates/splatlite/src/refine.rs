//! Refinement stage: importance-score pruning and redundancy-driven pairwise
//! merging with view-agnostic position / color / scale proximity tests.

use std::collections::HashMap;

use glam::{DQuat, DVec3};
use serde::{Deserialize, Serialize};

use crate::math::median;
use crate::splat::{GaussianSplat, SplatModel};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    /// Percentage of splats pruned per event.
    pub prune_fraction: f64,
    /// Spatial merge threshold, world units. `None` selects the data-adaptive
    /// default (half the median nearest-neighbor distance) at stage entry.
    pub tau_xyz: Option<f64>,
    /// DC-color merge threshold (band-0 coefficient units).
    pub tau_col: Option<f64>,
    /// Sigma-vector merge threshold. `None` selects half the median sigma
    /// norm at stage entry.
    pub tau_scale: Option<f64>,
    /// Iterations between refine events.
    pub refine_interval: usize,
}

/// Default DC-color merge threshold, validated on the toy fixture.
pub const DEFAULT_TAU_COL: f64 = 0.25;

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            prune_fraction: 2.0,
            tau_xyz: None,
            tau_col: Some(DEFAULT_TAU_COL),
            tau_scale: None,
            refine_interval: 500,
        }
    }
}

/// Fully resolved merge thresholds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MergeThresholds {
    pub tau_xyz: f64,
    pub tau_col: f64,
    pub tau_scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineReport {
    pub pruned: usize,
    pub merged_pairs: usize,
    pub count_before: usize,
    pub count_after: usize,
    pub score_min: f64,
    pub score_median: f64,
    pub score_max: f64,
}

/// Importance score: opacity times the largest world-space axis standard
/// deviation.
pub fn importance_scores(model: &SplatModel) -> Vec<f64> {
    model
        .splats
        .iter()
        .map(|s| {
            let sig = s.sigmas();
            s.opacity() * sig.x.max(sig.y).max(sig.z)
        })
        .collect()
}

/// Remove exactly `floor(q N / 100)` splats with the smallest importance
/// scores, ties broken by id ascending. Survivor order is preserved.
pub fn prune(model: &SplatModel, q: f64) -> (SplatModel, Vec<usize>, Vec<Option<usize>>) {
    let n = model.len();
    let remove = ((q.clamp(0.0, 100.0) / 100.0) * n as f64).floor() as usize;
    if remove == 0 {
        return (
            model.clone(),
            Vec::new(),
            (0..n).map(Some).collect(),
        );
    }
    let scores = importance_scores(model);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut doomed = vec![false; n];
    let mut pruned_ids: Vec<usize> = order[..remove].to_vec();
    for &id in &pruned_ids {
        doomed[id] = true;
    }
    pruned_ids.sort_unstable();

    let mut splats = Vec::with_capacity(n - remove);
    let mut index_map = vec![None; n];
    for (id, splat) in model.splats.iter().enumerate() {
        if !doomed[id] {
            index_map[id] = Some(splats.len());
            splats.push(splat.clone());
        }
    }
    (SplatModel::new(splats, model.sh_degree), pruned_ids, index_map)
}

/// Data-adaptive thresholds measured on the current model: spatial and scale
/// taus scale with the model's own geometry, color tau is fixed.
pub fn adaptive_merge_thresholds(model: &SplatModel, cfg: &RefineConfig) -> MergeThresholds {
    let tau_xyz = cfg.tau_xyz.unwrap_or_else(|| {
        if model.len() < 2 {
            return 0.0;
        }
        let nn: Vec<f64> = (0..model.len())
            .map(|i| {
                let p = model.splats[i].position;
                (0..model.len())
                    .filter(|&j| j != i)
                    .map(|j| (model.splats[j].position - p).length())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        0.5 * median(&nn)
    });
    let tau_scale = cfg.tau_scale.unwrap_or_else(|| {
        if model.is_empty() {
            return 0.0;
        }
        let norms: Vec<f64> = model.splats.iter().map(|s| s.sigmas().length()).collect();
        0.5 * median(&norms)
    });
    MergeThresholds {
        tau_xyz,
        tau_col: cfg.tau_col.unwrap_or(DEFAULT_TAU_COL),
        tau_scale,
    }
}

fn cell_of(p: DVec3, cell: f64) -> (i64, i64, i64) {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

fn pair_qualifies(a: &GaussianSplat, b: &GaussianSplat, t: &MergeThresholds) -> bool {
    if (a.position - b.position).length() > t.tau_xyz {
        return false;
    }
    let (da, db) = (a.dc_coeffs(), b.dc_coeffs());
    let dcol = ((da[0] - db[0]).powi(2) + (da[1] - db[1]).powi(2) + (da[2] - db[2]).powi(2)).sqrt();
    if dcol > t.tau_col {
        return false;
    }
    (a.sigmas() - b.sigmas()).length() <= t.tau_scale
}

fn merge_pair(a: &GaussianSplat, b: &GaussianSplat) -> GaussianSplat {
    // quaternion average with sign alignment, renormalized
    let qa = a.rotation;
    let qb = if qa.dot(b.rotation) < 0.0 { -b.rotation } else { b.rotation };
    let q = DQuat::from_xyzw(
        0.5 * (qa.x + qb.x),
        0.5 * (qa.y + qb.y),
        0.5 * (qa.z + qb.z),
        0.5 * (qa.w + qb.w),
    );
    let rotation = if q.length() < 1e-9 { qa } else { q.normalize() };
    let sh_coeffs = a
        .sh_coeffs
        .iter()
        .zip(&b.sh_coeffs)
        .map(|(x, y)| 0.5 * (x + y))
        .collect();
    GaussianSplat {
        position: 0.5 * (a.position + b.position),
        rotation,
        log_scales: 0.5 * (a.log_scales + b.log_scales),
        opacity_logit: 0.5 * (a.opacity_logit + b.opacity_logit),
        sh_coeffs,
    }
}

/// Merge redundant neighbor pairs. Candidates come from a uniform spatial
/// hash of cell size `tau_xyz` (27-cell stencil); a pair merges only when
/// the position, DC-color, and sigma tests all pass. Qualifying pairs are
/// consumed greedily in ascending distance order, each splat at most once
/// per invocation. The merged splat takes the lower index; survivor order is
/// otherwise preserved.
pub fn merge(
    model: &SplatModel,
    thresholds: &MergeThresholds,
) -> (SplatModel, Vec<(usize, usize)>, Vec<Option<usize>>) {
    let n = model.len();
    let identity_map = || (0..n).map(Some).collect::<Vec<_>>();
    if n < 2 {
        return (model.clone(), Vec::new(), identity_map());
    }
    let cell = thresholds.tau_xyz.max(1e-12);
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, s) in model.splats.iter().enumerate() {
        grid.entry(cell_of(s.position, cell)).or_default().push(i);
    }

    // candidate pairs within the 27-cell stencil, deduplicated by i < j
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, s) in model.splats.iter().enumerate() {
        let (cx, cy, cz) = cell_of(s.position, cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) else {
                        continue;
                    };
                    for &j in bucket {
                        if j <= i {
                            continue;
                        }
                        if pair_qualifies(s, &model.splats[j], thresholds) {
                            let d = (s.position - model.splats[j].position).length();
                            candidates.push((d, i, j));
                        }
                    }
                }
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut used = vec![false; n];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (_, i, j) in candidates {
        if used[i] || used[j] {
            continue;
        }
        used[i] = true;
        used[j] = true;
        pairs.push((i, j));
    }

    let mut replacement: HashMap<usize, GaussianSplat> = HashMap::new();
    let mut dropped = vec![false; n];
    for &(i, j) in &pairs {
        replacement.insert(i, merge_pair(&model.splats[i], &model.splats[j]));
        dropped[j] = true;
    }

    let mut splats = Vec::with_capacity(n - pairs.len());
    let mut index_map = vec![None; n];
    for (id, splat) in model.splats.iter().enumerate() {
        if dropped[id] {
            continue;
        }
        index_map[id] = Some(splats.len());
        match replacement.remove(&id) {
            Some(merged) => splats.push(merged),
            None => splats.push(splat.clone()),
        }
    }
    (SplatModel::new(splats, model.sh_degree), pairs, index_map)
}

/// One full refine event: prune then merge, with a summary report.
pub fn refine_once(
    model: &SplatModel,
    q: f64,
    thresholds: &MergeThresholds,
) -> (SplatModel, RefineReport, Vec<Option<usize>>) {
    let count_before = model.len();
    let scores = importance_scores(model);
    let (score_min, score_median, score_max) = if scores.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        (sorted[0], median(&sorted), sorted[sorted.len() - 1])
    };
    let (pruned_model, pruned_ids, prune_map) = prune(model, q);
    let (merged_model, pairs, merge_map) = merge(&pruned_model, thresholds);
    let index_map = prune_map
        .iter()
        .map(|maybe| maybe.and_then(|mid| merge_map[mid]))
        .collect();
    let report = RefineReport {
        pruned: pruned_ids.len(),
        merged_pairs: pairs.len(),
        count_before,
        count_after: merged_model.len(),
        score_min,
        score_median,
        score_max,
    };
    (merged_model, report, index_map)
}
