//! Python bindings: the splat model, the synthetic-scene generator, the
//! trainer, rendering, and standalone compaction.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use splatlite::config::RunConfig;
use splatlite::img::ImageBuf;
use splatlite::refine::{adaptive_merge_thresholds, refine_once, RefineConfig};
use splatlite::render::{rasterize, RenderOptions};
use splatlite::scene::generate;
use splatlite::trainer::{self, Dataset};

fn to_py_err(e: splatlite::Error) -> PyErr {
    match e {
        splatlite::Error::Io(inner) => PyIOError::new_err(inner.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// An image as (width, height, flat row-major RGB data).
type PyImage = (usize, usize, Vec<f64>);

fn image_to_py(img: &ImageBuf) -> PyImage {
    (img.width, img.height, img.data.clone())
}

fn image_from_py(img: &PyImage) -> PyResult<ImageBuf> {
    let (w, h, data) = img;
    if data.len() != w * h * 3 {
        return Err(PyValueError::new_err(format!(
            "image data length {} does not match {w}x{h}x3",
            data.len()
        )));
    }
    Ok(ImageBuf {
        width: *w,
        height: *h,
        data: data.clone(),
    })
}

/// Ordered splat collection with a shared SH degree.
#[pyclass(name = "SplatModel", from_py_object)]
#[derive(Clone)]
struct PySplatModel {
    inner: splatlite::SplatModel,
}

#[pymethods]
impl PySplatModel {
    /// Load a binary PLY model from disk.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let inner = splatlite::ply::load_ply(&bytes).map_err(to_py_err)?;
        Ok(PySplatModel { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        std::fs::write(path, splatlite::ply::save_ply(&self.inner))
            .map_err(|e| PyIOError::new_err(e.to_string()))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn sh_degree(&self) -> usize {
        self.inner.sh_degree
    }

    fn positions(&self) -> Vec<(f64, f64, f64)> {
        self.inner
            .splats
            .iter()
            .map(|s| (s.position.x, s.position.y, s.position.z))
            .collect()
    }

    fn opacities(&self) -> Vec<f64> {
        self.inner.splats.iter().map(|s| s.opacity()).collect()
    }

    /// Importance score per splat: opacity times the largest axis sigma.
    fn importance_scores(&self) -> Vec<f64> {
        splatlite::refine::importance_scores(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "SplatModel(splats={}, sh_degree={})",
            self.inner.len(),
            self.inner.sh_degree
        )
    }
}

/// Generate the synthetic scene described by a JSON run config. Returns
/// (reference, init, cameras_json, ground_truth_images).
#[pyfunction]
fn synth_scene(config_json: &str) -> PyResult<(PySplatModel, PySplatModel, String, Vec<PyImage>)> {
    let cfg = RunConfig::from_json(config_json).map_err(to_py_err)?;
    let scene = generate(&cfg.scene, cfg.train.background, cfg.sh_degree, &cfg.train.render)
        .map_err(to_py_err)?;
    let cameras_json = serde_json::to_string(&scene.cameras)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((
        PySplatModel {
            inner: scene.reference,
        },
        PySplatModel { inner: scene.init },
        cameras_json,
        scene.ground_truth.iter().map(image_to_py).collect(),
    ))
}

/// Run the full two-stage training pipeline in memory from a JSON run
/// config. Returns the trained model and a JSON summary string.
#[pyfunction]
fn train(config_json: &str) -> PyResult<(PySplatModel, String)> {
    let cfg = RunConfig::from_json(config_json).map_err(to_py_err)?;
    let scene = generate(&cfg.scene, cfg.train.background, cfg.sh_degree, &cfg.train.render)
        .map_err(to_py_err)?;
    let dataset = Dataset {
        cameras: scene.cameras,
        images: scene.ground_truth,
    };
    let out = trainer::train(&dataset, &scene.init, &cfg.train, None).map_err(to_py_err)?;
    let final_psnr = out.log.iter().rev().find_map(|r| r.psnr);
    let summary = serde_json::json!({
        "iterations": cfg.train.total_iterations,
        "final_splats": out.model.len(),
        "peak_splats": out.counts.iter().max(),
        "final_psnr_db": final_psnr,
        "trace_cap": out.resolved_trace_cap,
        "split_events": out.split_events.len(),
        "refine_events": out.refine_events.len(),
    });
    Ok((PySplatModel { inner: out.model }, summary.to_string()))
}

/// Render one view of a model through a JSON camera array.
#[pyfunction]
#[pyo3(signature = (model, cameras_json, view = 0, background = (0.0, 0.0, 0.0)))]
fn render(
    model: &PySplatModel,
    cameras_json: &str,
    view: usize,
    background: (f64, f64, f64),
) -> PyResult<PyImage> {
    let cameras: Vec<splatlite::Camera> = serde_json::from_str(cameras_json)
        .map_err(|e| PyValueError::new_err(format!("camera manifest: {e}")))?;
    let camera = cameras
        .get(view)
        .ok_or_else(|| PyValueError::new_err(format!("view {view} out of range")))?;
    camera.validate().map_err(to_py_err)?;
    let result = rasterize(
        &model.inner,
        camera,
        [background.0, background.1, background.2],
        &RenderOptions::default(),
    );
    Ok(image_to_py(&result.image))
}

/// Peak signal-to-noise ratio between two images; exact matches return inf.
#[pyfunction]
fn psnr(a: PyImage, b: PyImage) -> PyResult<f64> {
    let ia = image_from_py(&a)?;
    let ib = image_from_py(&b)?;
    trainer::psnr(&ia, &ib).map_err(to_py_err)
}

/// Standalone refinement: prune the lowest-importance q percent, then merge
/// redundant neighbors. Omitted thresholds use the data-adaptive defaults;
/// explicit zeros disable merging.
#[pyfunction]
#[pyo3(signature = (model, q = 2.0, tau_xyz = None, tau_col = None, tau_scale = None))]
fn compact(
    model: &PySplatModel,
    q: f64,
    tau_xyz: Option<f64>,
    tau_col: Option<f64>,
    tau_scale: Option<f64>,
) -> PyResult<(PySplatModel, String)> {
    if !(0.0..100.0).contains(&q) {
        return Err(PyValueError::new_err(format!(
            "prune fraction must lie in [0, 100), got {q}"
        )));
    }
    let cfg = RefineConfig {
        prune_fraction: q,
        tau_xyz,
        tau_col,
        tau_scale,
        ..Default::default()
    };
    let thresholds = adaptive_merge_thresholds(&model.inner, &cfg);
    let merge_enabled =
        thresholds.tau_xyz > 0.0 && thresholds.tau_col > 0.0 && thresholds.tau_scale > 0.0;
    let (out, report, _) = if merge_enabled {
        refine_once(&model.inner, q, &thresholds)
    } else {
        let (pruned, ids, map) = splatlite::refine::prune(&model.inner, q);
        (
            pruned.clone(),
            splatlite::refine::RefineReport {
                pruned: ids.len(),
                merged_pairs: 0,
                count_before: model.inner.len(),
                count_after: pruned.len(),
                score_min: 0.0,
                score_median: 0.0,
                score_max: 0.0,
            },
            map,
        )
    };
    let report_json =
        serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((PySplatModel { inner: out }, report_json))
}

/// SH-fitting RMSE comparison between the isotropic and elongated kernels,
/// as a JSON report.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn aniso_report(seed: u64) -> PyResult<String> {
    let report = splatlite::scene::anisotropy_experiment(&[1, 2, 3], seed);
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn splatlite_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySplatModel>()?;
    m.add_function(wrap_pyfunction!(synth_scene, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(compact, m)?)?;
    m.add_function(wrap_pyfunction!(aniso_report, m)?)?;
    Ok(())
}
