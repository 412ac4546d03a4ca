//! Rotation pooling: max over bilinear samples inside each rotated sub-region.
//!
//! An RoI is split into `rows x cols` cells that share its orientation. Each
//! cell holds a regular `k x k` lattice of sample points at the centers of its
//! `k x k` sub-cells, starting from the cell's rotated origin corner. Samples
//! are read with zero-padded bilinear interpolation, where feature cell
//! `(i, j)` sits at feature coordinate `(j + 0.5, i + 0.5)` and feature
//! coordinates are image coordinates divided by the map's stride.

use crate::error::{contract, Result};
use crate::geometry::{subregion_corner, Point, RotatedBox, SubGrid};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub rows: usize,
    pub cols: usize,
    /// `k`: samples per cell along each axis.
    pub samples: usize,
}

impl Default for PoolSpec {
    fn default() -> Self {
        Self {
            rows: 7,
            cols: 7,
            samples: 2,
        }
    }
}

impl PoolSpec {
    pub fn validate(&self) -> Result<()> {
        contract!(
            self.rows >= 1 && self.cols >= 1 && self.samples >= 1,
            "pool spec needs rows, cols and samples >= 1, got {self:?}"
        );
        Ok(())
    }

    pub fn samples_per_cell(&self) -> usize {
        self.samples * self.samples
    }
}

/// Winner index marking a cell whose RoI lies entirely off the map.
pub const NO_SAMPLE: u32 = u32::MAX;

/// Winning sample per `(channel, u, v)`, produced by [`rotation_pool_forward`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolArgmax {
    pub channels: usize,
    pub spec: PoolSpec,
    /// Index within the cell's `k x k` lattice (`a * k + b`), or [`NO_SAMPLE`].
    pub winners: Vec<u32>,
}

impl PoolArgmax {
    fn slot(&self, c: usize, u: usize, v: usize) -> usize {
        (c * self.spec.rows + u) * self.spec.cols + v
    }

    pub fn get(&self, c: usize, u: usize, v: usize) -> u32 {
        self.winners[self.slot(c, u, v)]
    }
}

/// Sample points in feature coordinates, ordered by cell `(u, v)` and then
/// lattice position `(a, b)`.
pub fn sample_points<T: Scalar>(roi: &RotatedBox<T>, spec: &PoolSpec, stride: T) -> Result<Vec<Point<T>>> {
    spec.validate()?;
    roi.validate()?;
    contract!(stride > T::zero(), "pooling stride must be positive");
    let grid = SubGrid::new(roi, spec.rows, spec.cols)?;
    let (eh, ew) = roi.axes();
    let k = T::of_usize(spec.samples);
    let half = T::of(0.5);
    let mut pts = Vec::with_capacity(spec.rows * spec.cols * spec.samples_per_cell());
    for u in 0..spec.rows {
        for v in 0..spec.cols {
            let corner = subregion_corner(roi, &grid, u, v)?;
            for a in 0..spec.samples {
                let along = (T::of_usize(a) + half) / k * grid.cell_h;
                for b in 0..spec.samples {
                    let across = (T::of_usize(b) + half) / k * grid.cell_w;
                    let px = corner.x + along * eh.x + across * ew.x;
                    let py = corner.y + along * eh.y + across * ew.y;
                    pts.push(Point::new(px / stride, py / stride));
                }
            }
        }
    }
    Ok(pts)
}

/// In-bounds bilinear neighbours of a feature-coordinate point as
/// `(row * width + col, weight)`.
pub fn bilinear_taps<T: Scalar>(height: usize, width: usize, p: Point<T>) -> Vec<(usize, T)> {
    let half = T::of(0.5);
    let (gx, gy) = (p.x - half, p.y - half);
    let (x0, y0) = (gx.floor(), gy.floor());
    let (lx, ly) = (gx - x0, gy - y0);
    let (x0, y0) = (x0.to_i64().unwrap_or(i64::MIN / 2), y0.to_i64().unwrap_or(i64::MIN / 2));
    let one = T::one();
    let mut taps = Vec::with_capacity(4);
    for (dy, wy) in [(0, one - ly), (1, ly)] {
        for (dx, wx) in [(0, one - lx), (1, lx)] {
            let (yy, xx) = (y0 + dy, x0 + dx);
            if yy >= 0 && xx >= 0 && (yy as usize) < height && (xx as usize) < width {
                taps.push((yy as usize * width + xx as usize, wy * wx));
            }
        }
    }
    taps
}

/// Pools `roi` from a batch-1 map into a `(1, C, rows, cols)` tensor.
pub fn rotation_pool_forward<T: Scalar>(
    feat: &Tensor<T>,
    stride: T,
    roi: &RotatedBox<T>,
    spec: &PoolSpec,
) -> Result<(Tensor<T>, PoolArgmax)> {
    contract!(feat.batch() == 1, "rotation pooling expects batch 1, got {:?}", feat.shape());
    let [_, channels, h, w] = feat.shape();
    let points = sample_points(roi, spec, stride)?;
    let taps: Vec<_> = points.iter().map(|&p| bilinear_taps(h, w, p)).collect();
    let cells = spec.rows * spec.cols;
    let per_cell = spec.samples_per_cell();

    let mut out = Tensor::zeros([1, channels, spec.rows, spec.cols]);
    let mut argmax = PoolArgmax {
        channels,
        spec: *spec,
        winners: vec![NO_SAMPLE; channels * cells],
    };
    if taps.iter().all(|t| t.is_empty()) {
        return Ok((out, argmax));
    }
    for c in 0..channels {
        let plane = feat.plane(0, c);
        for cell in 0..cells {
            let mut best = T::neg_infinity();
            let mut winner = NO_SAMPLE;
            for s in 0..per_cell {
                let val = taps[cell * per_cell + s]
                    .iter()
                    .fold(T::zero(), |acc, &(i, wt)| acc + wt * plane[i]);
                // strict comparison: the first sample wins ties
                if val > best {
                    best = val;
                    winner = s as u32;
                }
            }
            out.data_mut()[c * cells + cell] = best;
            argmax.winners[c * cells + cell] = winner;
        }
    }
    Ok((out, argmax))
}

/// Forward pass with the winners fixed by an earlier call; linear in `feat`.
pub fn pool_with_argmax<T: Scalar>(
    feat: &Tensor<T>,
    stride: T,
    roi: &RotatedBox<T>,
    argmax: &PoolArgmax,
) -> Result<Tensor<T>> {
    let spec = argmax.spec;
    let [_, channels, h, w] = feat.shape();
    contract!(
        feat.batch() == 1 && channels == argmax.channels,
        "argmax recorded for {} channels, map is {:?}",
        argmax.channels,
        feat.shape()
    );
    let points = sample_points(roi, &spec, stride)?;
    let cells = spec.rows * spec.cols;
    let per_cell = spec.samples_per_cell();
    let mut out = Tensor::zeros([1, channels, spec.rows, spec.cols]);
    for c in 0..channels {
        let plane = feat.plane(0, c);
        for cell in 0..cells {
            let winner = argmax.winners[c * cells + cell];
            if winner == NO_SAMPLE {
                continue;
            }
            let p = points[cell * per_cell + winner as usize];
            out.data_mut()[c * cells + cell] = bilinear_taps(h, w, p)
                .iter()
                .fold(T::zero(), |acc, &(i, wt)| acc + wt * plane[i]);
        }
    }
    Ok(out)
}

/// Adjoint of [`rotation_pool_forward`] for a fixed argmax.
pub fn rotation_pool_backward<T: Scalar>(
    grad_pooled: &Tensor<T>,
    argmax: &PoolArgmax,
    stride: T,
    roi: &RotatedBox<T>,
    spec: &PoolSpec,
    feat_shape: Shape,
) -> Result<Tensor<T>> {
    let [_, channels, h, w] = feat_shape;
    contract!(
        argmax.spec == *spec && argmax.channels == channels,
        "stale argmax: recorded {:?} with {} channels, called with {spec:?} and {channels}",
        argmax.spec,
        argmax.channels
    );
    contract!(
        grad_pooled.shape() == [1, channels, spec.rows, spec.cols],
        "pooled gradient {:?} does not match ({channels}, {}, {})",
        grad_pooled.shape(),
        spec.rows,
        spec.cols
    );
    contract!(feat_shape[0] == 1, "rotation pooling expects batch 1, got {feat_shape:?}");
    let points = sample_points(roi, spec, stride)?;
    let cells = spec.rows * spec.cols;
    let per_cell = spec.samples_per_cell();
    let mut grad = Tensor::zeros(feat_shape);
    let hw = h * w;
    for c in 0..channels {
        for cell in 0..cells {
            let winner = argmax.winners[c * cells + cell];
            if winner == NO_SAMPLE {
                continue;
            }
            let g = grad_pooled.data()[c * cells + cell];
            let p = points[cell * per_cell + winner as usize];
            for (i, wt) in bilinear_taps(h, w, p) {
                grad.data_mut()[c * hw + i] += g * wt;
            }
        }
    }
    Ok(grad)
}
