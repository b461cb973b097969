//! Loss assembly, schedules, the optimizer, density control and the training loop.

mod config;
mod density;
mod losses;
mod optim;
mod trainer;

pub use config::{Ablation, DensityConfig, FeatureParams, LossWeights, OptimConfig, Schedule, TrainConfig};
pub use density::{density_control, DensityReport, GradStats};
pub use losses::{
    color_loss, dn_loss, edge_weights, laplacian_smoothness, scale_loss, stereo_losses, ActiveTerms, LossReport,
    StereoTerms, TermValues, CSV_HEADER,
};
pub use optim::{flatten, flatten_grad, unflatten, Adam, PARAMS};
pub use trainer::{nearest_views, seed_features, Trainer};
