//! Class-agnostic detection metrics and kernel activation maps.

mod ap;
mod boxes;
mod heatmap;

pub use ap::{average_precision, ApReport, DetectionRecord, Prediction, IOU_THRESHOLDS};
pub use boxes::{box_iou, mask_area, mask_iou, mask_to_box};
pub use heatmap::{kernel_heatmap, resize_bilinear, KernelHeatmap, HEATMAP_SIZE};
