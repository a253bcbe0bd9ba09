//! Command-line surface: train, render, compact, stats, synth, aniso-demo.
//!
//! Failures print one machine-readable JSON line to stderr, exit nonzero,
//! and remove any partially written outputs.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{read_camera_manifest, write_camera_manifest, write_png};
use crate::math::median;
use crate::plot::line_chart;
use crate::ply::{load_ply, save_ply};
use crate::refine::{adaptive_merge_thresholds, refine_once, MergeThresholds, RefineConfig};
use crate::render::{rasterize, RenderOptions};
use crate::scene::{anisotropy_experiment, generate};
use crate::splat::SplatModel;
use crate::trainer::{radius_bin_histogram, train, Dataset};

#[derive(Parser)]
#[command(name = "splatlite", version, about = "CPU gaussian splatting trainer with growth and compaction")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline from a JSON config: synthesize the scene,
    /// train, and write the final model, log, and metric plots.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Render one view of a PLY model through a camera manifest.
    Render {
        #[arg(long)]
        model: PathBuf,
        /// JSON array of cameras.
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Index into the manifest.
        #[arg(long, default_value_t = 0)]
        view: usize,
        /// Background color as r,g,b in [0,1].
        #[arg(long, default_value = "0,0,0")]
        background: String,
    },
    /// Standalone refinement: prune the lowest-importance splats, then merge
    /// redundant neighbors. A threshold of 0 disables merging on that axis;
    /// omitted thresholds use data-adaptive defaults.
    Compact {
        #[arg(long)]
        model: PathBuf,
        /// Percent of splats to prune.
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long)]
        txyz: Option<f64>,
        #[arg(long)]
        tcol: Option<f64>,
        #[arg(long)]
        tscale: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Model statistics: count, on-disk size, importance-score summary, and
    /// (given cameras) the radius-bin histogram.
    Stats {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cameras: Option<PathBuf>,
    },
    /// Generate a synthetic scene: ground-truth PNGs, camera manifest, and
    /// the reference/init models.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// SH-fitting comparison between an isotropic and an elongated kernel.
    AnisoDemo {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Files created so far; on failure everything registered is removed.
#[derive(Default)]
struct OutputGuard {
    files: Vec<PathBuf>,
}

impl OutputGuard {
    fn register(&mut self, path: &Path) {
        self.files.push(path.to_path_buf());
    }

    fn cleanup(&self) {
        for f in &self.files {
            let _ = std::fs::remove_file(f);
        }
    }
}

pub fn main() -> i32 {
    let cli = Cli::parse();
    let mut guard = OutputGuard::default();
    match run(cli.command, &mut guard) {
        Ok(()) => 0,
        Err(e) => {
            guard.cleanup();
            eprintln!("{}", json!({ "error": e.to_string() }));
            1
        }
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn write_file(guard: &mut OutputGuard, path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    guard.register(path);
    std::fs::write(path, bytes)?;
    Ok(())
}

fn parse_background(text: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidParameter(format!(
            "background must be r,g,b; got {text}"
        )));
    }
    let mut bg = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        bg[i] = p
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidParameter(format!("bad background component {p}")))?;
    }
    Ok(bg)
}

fn run(command: Command, guard: &mut OutputGuard) -> Result<()> {
    match command {
        Command::Train { config } => cmd_train(&config, guard),
        Command::Render {
            model,
            camera,
            out,
            view,
            background,
        } => cmd_render(&model, &camera, &out, view, &background, guard),
        Command::Compact {
            model,
            q,
            txyz,
            tcol,
            tscale,
            out,
        } => cmd_compact(&model, q, txyz, tcol, tscale, &out, guard),
        Command::Stats { model, cameras } => cmd_stats(&model, cameras.as_deref()),
        Command::Synth { config, out } => cmd_synth(&config, &out, guard),
        Command::AnisoDemo { out } => cmd_aniso(&out, guard),
    }
}

fn cmd_train(config_path: &Path, guard: &mut OutputGuard) -> Result<()> {
    let cfg = RunConfig::from_file(config_path)?;
    let scene = generate(&cfg.scene, cfg.train.background, cfg.sh_degree, &cfg.train.render)?;
    let dataset = Dataset {
        cameras: scene.cameras,
        images: scene.ground_truth,
    };
    let checkpoint_dir = cfg.output.checkpoint_dir.clone();
    let mut checkpoint_error: Option<Error> = None;
    let mut ckpt_files: Vec<PathBuf> = Vec::new();
    let mut sink = |iteration: usize, model: &SplatModel| {
        if checkpoint_error.is_some() {
            return;
        }
        if let Some(dir) = &checkpoint_dir {
            let path = dir.join(format!("checkpoint_{iteration:06}.ply"));
            if let Err(e) = ensure_parent(&path)
                .and_then(|_| std::fs::write(&path, save_ply(model)).map_err(Error::from))
            {
                checkpoint_error = Some(e);
            } else {
                ckpt_files.push(path);
            }
        }
    };
    let use_sink = cfg.output.checkpoint_dir.is_some() && cfg.train.checkpoint_interval > 0;
    let out = train(
        &dataset,
        &scene.init,
        &cfg.train,
        if use_sink { Some(&mut sink) } else { None },
    )?;
    for f in ckpt_files {
        guard.register(&f);
    }
    if let Some(e) = checkpoint_error {
        return Err(e);
    }

    write_file(guard, &cfg.output.model, &save_ply(&out.model))?;

    // progress records interleaved with split/refine event reports, in
    // iteration order
    let mut lines: Vec<(usize, usize, String)> = Vec::new();
    let jerr = |e: serde_json::Error| Error::Config(e.to_string());
    for record in &out.log {
        lines.push((record.iteration, 0, serde_json::to_string(record).map_err(jerr)?));
    }
    for (iteration, report) in &out.split_events {
        let line = serde_json::to_string(&json!({
            "iteration": iteration,
            "split_report": report,
        }))
        .map_err(jerr)?;
        lines.push((*iteration, 1, line));
    }
    for (iteration, report) in &out.refine_events {
        let line = serde_json::to_string(&json!({
            "iteration": iteration,
            "refine_report": report,
        }))
        .map_err(jerr)?;
        lines.push((*iteration, 1, line));
    }
    lines.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut log_lines = String::new();
    for (_, _, line) in lines {
        log_lines.push_str(&line);
        log_lines.push('\n');
    }
    write_file(guard, &cfg.output.log, log_lines.as_bytes())?;

    let psnr_pts: Vec<(f64, f64)> = out
        .log
        .iter()
        .filter_map(|r| r.psnr.map(|p| (r.iteration as f64, p)))
        .collect();
    let count_pts: Vec<(f64, f64)> = out
        .counts
        .iter()
        .enumerate()
        .map(|(i, c)| (i as f64, *c as f64))
        .collect();
    write_file(
        guard,
        &cfg.output.psnr_plot,
        line_chart("held-out PSNR", "iteration", "dB", &[("psnr", &psnr_pts)]).as_bytes(),
    )?;
    write_file(
        guard,
        &cfg.output.count_plot,
        line_chart("splat count", "iteration", "splats", &[("count", &count_pts)]).as_bytes(),
    )?;

    let final_psnr = out.log.iter().rev().find_map(|r| r.psnr);
    let peak = out.counts.iter().copied().max().unwrap_or(0);
    println!(
        "{}",
        json!({
            "iterations": cfg.train.total_iterations,
            "final_splats": out.model.len(),
            "peak_splats": peak,
            "final_psnr_db": final_psnr,
            "trace_cap": out.resolved_trace_cap,
            "model": cfg.output.model,
            "log": cfg.output.log,
        })
    );
    Ok(())
}

fn cmd_render(
    model_path: &Path,
    camera_path: &Path,
    out: &Path,
    view: usize,
    background: &str,
    guard: &mut OutputGuard,
) -> Result<()> {
    let bg = parse_background(background)?;
    let model = load_ply(&std::fs::read(model_path)?)?;
    let cameras = read_camera_manifest(camera_path)?;
    let camera = cameras.get(view).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "view {view} out of range, manifest has {} cameras",
            cameras.len()
        ))
    })?;
    let result = rasterize(&model, camera, bg, &RenderOptions::default());
    ensure_parent(out)?;
    guard.register(out);
    write_png(out, &result.image)?;
    println!(
        "{}",
        json!({ "out": out, "width": camera.width, "height": camera.height, "splats": model.len() })
    );
    Ok(())
}

fn cmd_compact(
    model_path: &Path,
    q: f64,
    txyz: Option<f64>,
    tcol: Option<f64>,
    tscale: Option<f64>,
    out: &Path,
    guard: &mut OutputGuard,
) -> Result<()> {
    if !(0.0..100.0).contains(&q) {
        return Err(Error::InvalidParameter(format!(
            "prune fraction must lie in [0, 100), got {q}"
        )));
    }
    let model = load_ply(&std::fs::read(model_path)?)?;
    let cfg = RefineConfig {
        prune_fraction: q,
        tau_xyz: txyz,
        tau_col: tcol,
        tau_scale: tscale,
        ..Default::default()
    };
    let resolved = adaptive_merge_thresholds(&model, &cfg);
    // explicit zeros disable merging
    let merge_enabled =
        resolved.tau_xyz > 0.0 && resolved.tau_col > 0.0 && resolved.tau_scale > 0.0;
    let thresholds = if merge_enabled {
        resolved
    } else {
        MergeThresholds {
            tau_xyz: 0.0,
            tau_col: 0.0,
            tau_scale: 0.0,
        }
    };
    let (compact, report, _) = if merge_enabled {
        refine_once(&model, q, &thresholds)
    } else {
        let (pruned, pruned_ids, map) = crate::refine::prune(&model, q);
        let report = crate::refine::RefineReport {
            pruned: pruned_ids.len(),
            merged_pairs: 0,
            count_before: model.len(),
            count_after: pruned.len(),
            score_min: 0.0,
            score_median: 0.0,
            score_max: 0.0,
        };
        (pruned, report, map)
    };
    write_file(guard, out, &save_ply(&compact))?;
    println!(
        "{}",
        json!({
            "before": report.count_before,
            "pruned": report.pruned,
            "merged_pairs": report.merged_pairs,
            "after": report.count_after,
            "tau_xyz": thresholds.tau_xyz,
            "tau_col": thresholds.tau_col,
            "tau_scale": thresholds.tau_scale,
            "out": out,
        })
    );
    Ok(())
}

fn cmd_stats(model_path: &Path, cameras: Option<&Path>) -> Result<()> {
    let bytes = std::fs::read(model_path)?;
    let model = load_ply(&bytes)?;
    let scores = crate::refine::importance_scores(&model);
    let score_summary = if scores.is_empty() {
        json!(null)
    } else {
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        json!({
            "min": sorted[0],
            "median": median(&sorted),
            "mean": sorted.iter().sum::<f64>() / sorted.len() as f64,
            "max": sorted[sorted.len() - 1],
        })
    };
    let histogram = match cameras {
        Some(path) => {
            let cams = read_camera_manifest(path)?;
            json!(radius_bin_histogram(&model, &cams, &RenderOptions::default()))
        }
        None => json!(null),
    };
    println!(
        "{}",
        json!({
            "splats": model.len(),
            "sh_degree": model.sh_degree,
            "size_bytes": bytes.len(),
            "importance": score_summary,
            "radius_bins": histogram,
        })
    );
    Ok(())
}

fn cmd_synth(config_path: &Path, out_dir: &Path, guard: &mut OutputGuard) -> Result<()> {
    let cfg = RunConfig::from_file(config_path)?;
    let scene = generate(&cfg.scene, cfg.train.background, cfg.sh_degree, &cfg.train.render)?;
    std::fs::create_dir_all(out_dir)?;

    let manifest = out_dir.join("cameras.json");
    guard.register(&manifest);
    write_camera_manifest(&manifest, &scene.cameras)?;
    for (i, gt) in scene.ground_truth.iter().enumerate() {
        let path = out_dir.join(format!("gt_{i:04}.png"));
        guard.register(&path);
        write_png(&path, gt)?;
    }
    write_file(guard, &out_dir.join("reference.ply"), &save_ply(&scene.reference))?;
    write_file(guard, &out_dir.join("init.ply"), &save_ply(&scene.init))?;
    println!(
        "{}",
        json!({
            "out": out_dir,
            "views": scene.cameras.len(),
            "reference_splats": scene.reference.len(),
            "init_splats": scene.init.len(),
        })
    );
    Ok(())
}

fn cmd_aniso(out_dir: &Path, guard: &mut OutputGuard) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let degrees = [1usize, 2, 3];
    let reports: Vec<_> = (0..10).map(|seed| anisotropy_experiment(&degrees, seed)).collect();
    let json_path = out_dir.join("aniso_report.json");
    write_file(
        guard,
        &json_path,
        serde_json::to_string_pretty(&reports)
            .map_err(|e| Error::Config(e.to_string()))?
            .as_bytes(),
    )?;

    let mut table = String::from("degree  seed  rmse_isotropic  rmse_anisotropic\n");
    for report in &reports {
        for row in &report.rows {
            table.push_str(&format!(
                "{:>6}  {:>4}  {:>14.6}  {:>16.6}\n",
                row.degree, report.seed, row.rmse_isotropic, row.rmse_anisotropic
            ));
        }
    }
    write_file(guard, &out_dir.join("aniso_report.txt"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}
