//! Event-based multi-view stereo depth estimation.
//!
//! The pipeline: event streams and camera poses are fused into ray-density
//! volumes (DSIs) anchored at reference viewpoints; an adaptive Gaussian
//! threshold picks pixels with enough ray support; small normalized
//! sub-volumes around those pixels feed a compact recurrent-convolutional
//! network that regresses per-pixel depth, benchmarked against the argmax
//! baseline with ten standard depth metrics.

pub mod config;
pub mod dsi;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod rng;
pub mod select;
pub mod synth;
pub mod train;

pub use config::{RunConfig, RunMetadata};
pub use dsi::{
    build_dsi, fuse, plane_depths, DsiGrid, Event, FusionMethod, VoteMode, VotingConfig,
};
pub use error::{Error, Result};
pub use geometry::{relative_pose, CameraIntrinsics, Pose, Trajectory};
pub use metrics::{aggregate, compute_metrics, compute_metrics_pooled, MetricsReport};
pub use net::{
    backward, denormalize, forward, init_params, load_model, load_models, normalize_depth,
    param_count, save_model, save_models, DepthMode, Head, ModelParams, NetworkConfig,
};
pub use select::{
    agt_select, argmax_depth, confidence_map, extract_subdsi, morph_dilate, AgtConfig,
    ConfidenceMap, DepthMap, PixelCoord, SubDsi,
};
pub use synth::{demo_scene, expected_plane, generate, SceneSpec, SyntheticSequence};
pub use train::{
    assemble_dataset, predict, train, train_ensemble, EnsembleModel, Sample, TrainConfig,
};
