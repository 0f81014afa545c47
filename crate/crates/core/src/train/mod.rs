//! Scene assembly, objective, optimization loop, evaluation and ablations.

mod ablation;
mod config;
mod eval;
pub mod metrics;
mod scene;
mod trainer;

pub use ablation::{format_ablation_table, run_ablation_suite, variant_config, AblationRow, ABLATION_VARIANTS};
pub use config::TrainConfig;
pub use eval::{evaluate, frame_metrics, FrameMetrics, Metrics};
pub use metrics::{compute_loss, ms_ssim, psnr, ssim};
pub use scene::{init_scene, knn_log_scales, scene_extent, Scene, SceneGradients, ScenePass, INITIAL_OPACITY};
pub use trainer::{train, LogEntry, TrainOptions, TrainResult, Trainer};
