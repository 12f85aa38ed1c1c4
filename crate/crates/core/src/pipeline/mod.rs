//! End-to-end orchestration: synthetic data, features, pre-training,
//! evaluation and heatmap export.

mod config;
mod features;
mod report;
mod scene;
mod train;

pub use config::{
    read_json, scene_seed, DatasetImage, DatasetSpec, LrSchedule, PseudoLabelSource, RunConfig,
};
pub use features::{
    neck, neck_directions, toy_feature_extractor, ImageFeatures, FEATURE_DIM, NECK_SEED,
};
pub use report::{
    detection_records, evaluate, heatmap, infer, predictions, write_heatmap, write_report,
    EvalReport, MASK_THRESHOLD,
};
pub use scene::{make_synthetic_scene, Blob, BlobShape, SceneSpec, SyntheticScene, PALETTE};
pub use train::{
    assignment_seed, dataset_loss, image_loss, initial_state, injected_kernels, prepare_dataset,
    prepare_image, pretrain, pretrain_prepared, read_log, write_log, LossRecord, PreparedImage,
    PretrainOutput,
};
