//! Adam, learning-rate schedules and adaptive density control.

mod adam;
mod densify;
mod schedule;

pub use adam::{AdamConfig, AdamState, GaussianAdam, GaussianLrs};
pub use densify::{densify_and_prune, DensifyReport, DensifyStats, DensifyThresholds};
pub use schedule::{lr_factor, DECAY_ITERATIONS, FINAL_LR_FACTOR};
