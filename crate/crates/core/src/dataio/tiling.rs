//! Overlapping square patches over a large image.

use crate::error::{contract, Result};

use super::annotation::AnnotationRecord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchSpec {
    pub origin_x: usize,
    pub origin_y: usize,
    /// Nominal square patch side.
    pub size: usize,
    /// Actual extent; smaller than `size` only for images smaller than a patch.
    pub width: usize,
    pub height: usize,
    pub source_id: String,
    /// Set when the image is smaller than `size` on some axis.
    pub undersized: bool,
}

impl PatchSpec {
    /// Name used for the patch's image and label files.
    pub fn patch_id(&self) -> String {
        format!("{}__{}__{}", self.source_id, self.origin_x, self.origin_y)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (x0, y0) = (self.origin_x as f64, self.origin_y as f64);
        x >= x0 && y >= y0 && x < x0 + self.width as f64 && y < y0 + self.height as f64
    }
}

/// Patch origins along one axis of length `len`.
pub fn axis_origins(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    if len <= patch {
        return vec![0];
    }
    let mut out = Vec::new();
    let mut o = 0;
    loop {
        out.push(o);
        if o + patch >= len {
            break;
        }
        o += stride;
        if o + patch > len {
            out.push(len - patch);
            break;
        }
    }
    out
}

/// Row-major patches with stride `patch - overlap`; the last row and column
/// are pulled back so that no patch leaves the image.
pub fn tile_image(img_w: usize, img_h: usize, patch: usize, overlap: usize) -> Result<Vec<PatchSpec>> {
    contract!(patch > overlap, "patch size {patch} must exceed overlap {overlap}");
    contract!(img_w > 0 && img_h > 0, "image must be non-empty, got {img_w}x{img_h}");
    let stride = patch - overlap;
    let (xs, ys) = (axis_origins(img_w, patch, stride), axis_origins(img_h, patch, stride));
    let (width, height) = (patch.min(img_w), patch.min(img_h));
    let undersized = img_w < patch || img_h < patch;
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &oy in &ys {
        for &ox in &xs {
            out.push(PatchSpec {
                origin_x: ox,
                origin_y: oy,
                size: patch,
                width,
                height,
                source_id: String::new(),
                undersized,
            });
        }
    }
    Ok(out)
}

/// Records whose enclosing-box center falls inside `patch`, moved into the
/// patch frame. Records without a valid enclosing box are dropped.
pub fn assign_to_patch(records: &[AnnotationRecord], patch: &PatchSpec) -> Vec<AnnotationRecord> {
    let (ox, oy) = (patch.origin_x as f64, patch.origin_y as f64);
    records
        .iter()
        .filter(|r| r.rotated().is_ok_and(|b| patch.contains(b.x, b.y)))
        .map(|r| r.translated(-ox, -oy))
        .collect()
}
