//! Quarter-turn rotation and rescaling of labelled images.

use crate::error::{contract, Result};
use crate::geometry::RotatedBox;

/// One labelled object in image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub source_id: String,
    pub class: String,
    pub rbox: RotatedBox<f64>,
    pub difficult: bool,
}

/// Image extent plus the objects inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet {
    pub width: f64,
    pub height: f64,
    pub objects: Vec<GroundTruth>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentOp {
    /// `k` counterclockwise quarter turns, `k` in `0..4`.
    Rotate90(u8),
    Rescale(f64),
}

fn quarter_turn(set: &RecordSet) -> RecordSet {
    let h = set.height;
    let objects = set
        .objects
        .iter()
        .map(|o| {
            let b = o.rbox;
            GroundTruth {
                rbox: RotatedBox::new(h - b.y, b.x, b.h, b.w, b.theta + std::f64::consts::FRAC_PI_2),
                ..o.clone()
            }
        })
        .collect();
    RecordSet {
        width: set.height,
        height: set.width,
        objects,
    }
}

pub fn augment(set: &RecordSet, op: AugmentOp) -> Result<RecordSet> {
    match op {
        AugmentOp::Rotate90(k) => {
            contract!(k < 4, "quarter-turn count must be in 0..4, got {k}");
            let mut out = set.clone();
            for _ in 0..k {
                out = quarter_turn(&out);
            }
            Ok(out)
        }
        AugmentOp::Rescale(s) => {
            contract!(s > 0.0 && s.is_finite(), "rescale factor must be positive, got {s}");
            if s == 1.0 {
                return Ok(set.clone());
            }
            let objects = set
                .objects
                .iter()
                .map(|o| {
                    let b = o.rbox;
                    GroundTruth {
                        rbox: RotatedBox { x: b.x * s, y: b.y * s, h: b.h * s, w: b.w * s, theta: b.theta },
                        ..o.clone()
                    }
                })
                .collect();
            Ok(RecordSet {
                width: set.width * s,
                height: set.height * s,
                objects,
            })
        }
    }
}
