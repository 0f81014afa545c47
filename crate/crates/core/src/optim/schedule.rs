pub const DECAY_ITERATIONS: usize = 30_000;
pub const FINAL_LR_FACTOR: f64 = 0.001;

/// Exponential decay from 1 at iteration 0 to `final_factor` at `total` and
/// constant afterwards.
pub fn lr_factor(iter: usize, total: usize, final_factor: f64) -> f64 {
    if total == 0 || iter >= total {
        return final_factor;
    }
    if iter == 0 {
        return 1.0;
    }
    final_factor.powf(iter as f64 / total as f64)
}
