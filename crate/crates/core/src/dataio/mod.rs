//! Annotation ingestion, tiling, augmentation, images and detection files.

pub mod annotation;
pub mod augment;
pub mod detections;
pub mod image;
pub mod polygon;
pub mod tiling;

pub use annotation::{format_dota, parse_dota, AnnotationRecord, LineError, ParsedAnnotations};
pub use augment::{augment, AugmentOp, GroundTruth, RecordSet};
pub use detections::{format_detection, read_detections, write_detections, Detection};
pub use image::Image;
pub use polygon::{convex_hull, polygon_to_rotated};
pub use tiling::{assign_to_patch, axis_origins, tile_image, PatchSpec};
