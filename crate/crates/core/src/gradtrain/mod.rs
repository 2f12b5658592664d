//! Cost functionals, parameter-shift gradients and training.
//!
//! A parameter `θ_k` may appear in many gates (once per time step in a
//! recurrent model). Its derivative sums the `±π/2` shift contributions of
//! every occurrence; the sampled estimator picks one occurrence and one sign
//! per draw and rescales by the occurrence count.

mod cost;
mod distortion;
mod train;

pub use cost::{
    exact_gradient, exact_shift_gradient, expected_cost, finite_difference, stochastic_gradient,
    stochastic_shift_gradient, two_copy_overlap, two_copy_overlap_gradient, CostWeights, GradientEstimate,
    OverlapEstimate,
};
pub use distortion::{
    distortion, distortion_gradient, distortion_gradient_stochastic, distortion_weights, model_table,
    DistortionGradient,
};
pub use train::{
    adam_step, evaluate_theta, gradient_landscape_scan, random_theta, train, train_from, AdamState, GradientMode,
    HistoryRow, TrainConfig, TrainResult,
};
