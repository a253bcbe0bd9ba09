//! splatlite: a self-contained CPU trainer for 3D gaussian splat scenes.
//!
//! The pipeline optimizes a splat set against posed images with an
//! L1 + L2 + SSIM photometric objective and a trace-capped covariance
//! penalty, growing capacity where reconstruction error concentrates and
//! then compacting the model by importance pruning and redundancy merging.

pub mod camera;
pub mod cli;
pub mod config;
pub mod densify;
pub mod error;
pub mod img;
pub mod io;
pub mod loss;
pub mod math;
pub mod optim;
pub mod plot;
pub mod ply;
pub mod refine;
pub mod render;
pub mod scene;
pub mod sh;
pub mod splat;
pub mod trainer;

pub use camera::Camera;
pub use error::{Error, Result};
pub use img::ImageBuf;
pub use render::{GradientBundle, RenderOptions, RenderResult, ScreenSplat};
pub use splat::{GaussianSplat, SplatModel};
