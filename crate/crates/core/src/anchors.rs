//! Oriented anchor grids and the five-parameter box delta coding.

use crate::error::{contract, Result};
use crate::geometry::{normalize_angle, RotatedBox};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorConfig<T> {
    /// Anchor side lengths in pixels (`sqrt(h * w)`).
    pub scales: Vec<T>,
    /// `h : w` aspect ratios.
    pub ratios: Vec<T>,
    /// Orientations in radians.
    pub angles: Vec<T>,
    /// Feature-map stride in image pixels.
    pub stride: usize,
}

impl<T: Scalar> Default for AnchorConfig<T> {
    fn default() -> Self {
        Self {
            scales: [16.0, 32.0, 64.0].map(T::of).to_vec(),
            ratios: [0.5, 1.0, 2.0].map(T::of).to_vec(),
            angles: [0.0, 45.0, 90.0, 135.0].map(|d: f64| T::of(d.to_radians())).to_vec(),
            stride: 4,
        }
    }
}

impl<T: Scalar> AnchorConfig<T> {
    pub fn validate(&self) -> Result<()> {
        contract!(
            !self.scales.is_empty() && !self.ratios.is_empty() && !self.angles.is_empty(),
            "anchor scales, ratios and angles must be non-empty"
        );
        contract!(
            self.scales.iter().chain(&self.ratios).all(|&v| v > T::zero() && v.is_finite()),
            "anchor scales and ratios must be positive"
        );
        contract!(self.angles.iter().all(|a| a.is_finite()), "anchor angles must be finite");
        contract!(self.stride >= 1, "anchor stride must be >= 1");
        Ok(())
    }

    /// Anchors per feature-map cell.
    pub fn per_cell(&self) -> usize {
        self.scales.len() * self.ratios.len() * self.angles.len()
    }

    /// Same shapes at another stride, with every scale multiplied by `factor`.
    pub fn scaled(&self, factor: T, stride: usize) -> Self {
        Self {
            scales: self.scales.iter().map(|&s| s * factor).collect(),
            stride,
            ..self.clone()
        }
    }
}

/// Anchors for a `feat_h x feat_w` map in row-major cell order; within a cell
/// the order is scale, then ratio, then angle (angle fastest).
pub fn generate_anchors<T: Scalar>(cfg: &AnchorConfig<T>, feat_h: usize, feat_w: usize) -> Vec<RotatedBox<T>> {
    let stride = T::of_usize(cfg.stride);
    let half = T::of(0.5);
    let mut shapes = Vec::with_capacity(cfg.per_cell());
    for &s in &cfg.scales {
        for &r in &cfg.ratios {
            let root = r.sqrt();
            for &a in &cfg.angles {
                shapes.push((s * root, s / root, a));
            }
        }
    }
    let mut out = Vec::with_capacity(feat_h * feat_w * shapes.len());
    for i in 0..feat_h {
        let cy = (T::of_usize(i) + half) * stride;
        for j in 0..feat_w {
            let cx = (T::of_usize(j) + half) * stride;
            out.extend(shapes.iter().map(|&(h, w, a)| RotatedBox::new(cx, cy, h, w, a)));
        }
    }
    out
}

/// Regression target of a box relative to an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoxDelta<T> {
    pub dx: T,
    pub dy: T,
    pub dh: T,
    pub dw: T,
    pub dtheta: T,
}

impl<T: Scalar> BoxDelta<T> {
    pub fn from_slice(v: &[T]) -> Self {
        Self {
            dx: v[0],
            dy: v[1],
            dh: v[2],
            dw: v[3],
            dtheta: v[4],
        }
    }
}

/// Wraps an angle difference into `(-π/2, π/2]`.
pub fn wrap_half_turn<T: Scalar>(d: T) -> T {
    let r = normalize_angle(d);
    if r > T::FRAC_PI_2() {
        r - T::PI()
    } else {
        r
    }
}

pub fn encode_delta<T: Scalar>(anchor: &RotatedBox<T>, target: &RotatedBox<T>) -> Result<BoxDelta<T>> {
    contract!(
        anchor.h > T::zero() && anchor.w > T::zero(),
        "encode_delta: anchor size must be positive, got {anchor:?}"
    );
    contract!(
        target.h > T::zero() && target.w > T::zero(),
        "encode_delta: target size must be positive, got {target:?}"
    );
    Ok(BoxDelta {
        dx: (target.x - anchor.x) / anchor.h,
        dy: (target.y - anchor.y) / anchor.w,
        dh: (target.h / anchor.h).ln(),
        dw: (target.w / anchor.w).ln(),
        dtheta: wrap_half_turn(target.theta - anchor.theta),
    })
}

pub fn decode_delta<T: Scalar>(anchor: &RotatedBox<T>, d: &BoxDelta<T>) -> RotatedBox<T> {
    RotatedBox::new(
        anchor.x + d.dx * anchor.h,
        anchor.y + d.dy * anchor.w,
        anchor.h * d.dh.exp(),
        anchor.w * d.dw.exp(),
        anchor.theta + d.dtheta,
    )
}
