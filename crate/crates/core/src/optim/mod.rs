//! Training: losses, Adam, the resolution schedule and the emptiness voxel.

pub mod adam;
pub mod train;
pub mod tv;

pub use adam::{adam_step, AdamState};
pub use train::{
    evaluate, fit, metrics_csv, model_sparsity, total_loss, update_emptiness_voxel, upsample_coeffs,
    upsample_field_params, LossBreakdown, MetricRow, TrainConfig, TrainState, UpsampleStep, CSV_HEADER,
};
pub use tv::{tv, tv_backward, tv_loss};
