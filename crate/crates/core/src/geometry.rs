//! Rotated rectangles `(x, y, h, w, θ)`.
//!
//! `h` is the extent along the direction at angle `θ` from the positive
//! x-axis and `w` the extent perpendicular to it. Angles are radians and a
//! box is canonical when `θ ∈ [0, π)`.

use std::cmp::Ordering;

use crate::error::{contract, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn dist(self, o: Self) -> T {
        ((self.x - o.x).powi(2) + (self.y - o.y).powi(2)).sqrt()
    }

    pub fn cast<U: Scalar>(self) -> Point<U> {
        Point::new(U::narrow(self.x.widen()), U::narrow(self.y.widen()))
    }
}

/// Wraps an angle into `[0, π)`.
pub fn normalize_angle<T: Scalar>(theta: T) -> T {
    let pi = T::PI();
    let mut r = theta % pi;
    if r < T::zero() {
        r += pi;
    }
    if r >= pi {
        T::zero()
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotatedBox<T> {
    pub x: T,
    pub y: T,
    pub h: T,
    pub w: T,
    pub theta: T,
}

impl<T: Scalar> RotatedBox<T> {
    /// Builds a box with `θ` wrapped into `[0, π)`. Sizes are not checked.
    pub fn new(x: T, y: T, h: T, w: T, theta: T) -> Self {
        Self {
            x,
            y,
            h,
            w,
            theta: normalize_angle(theta),
        }
    }

    /// Like [`RotatedBox::new`] but rejects non-finite values and non-positive sizes.
    pub fn try_new(x: T, y: T, h: T, w: T, theta: T) -> Result<Self> {
        let b = Self::new(x, y, h, w, theta);
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        contract!(
            [self.x, self.y, self.h, self.w, self.theta]
                .iter()
                .all(|v| v.is_finite()),
            "rotated box has non-finite fields: {self:?}"
        );
        contract!(
            self.h > T::zero() && self.w > T::zero(),
            "rotated box needs positive size: {self:?}"
        );
        Ok(())
    }

    pub fn center(&self) -> Point<T> {
        Point::new(self.x, self.y)
    }

    pub fn area(&self) -> T {
        self.h * self.w
    }

    /// Unit vectors along the `h` and `w` axes.
    pub fn axes(&self) -> (Point<T>, Point<T>) {
        let (s, c) = self.theta.sin_cos();
        (Point::new(c, s), Point::new(-s, c))
    }

    /// Closed containment test.
    pub fn contains(&self, p: Point<T>) -> bool {
        let (dx, dy) = (p.x - self.x, p.y - self.y);
        let (s, c) = self.theta.sin_cos();
        let along = dx * c + dy * s;
        let across = -dx * s + dy * c;
        let two = T::of(2.0);
        along.abs() <= self.h / two && across.abs() <= self.w / two
    }

    pub fn cast<U: Scalar>(&self) -> RotatedBox<U> {
        RotatedBox {
            x: U::narrow(self.x.widen()),
            y: U::narrow(self.y.widen()),
            h: U::narrow(self.h.widen()),
            w: U::narrow(self.w.widen()),
            theta: U::narrow(self.theta.widen()),
        }
    }

    fn key(&self) -> [T; 5] {
        [self.x, self.y, self.h, self.w, self.theta]
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizontalBox<T> {
    pub xmin: T,
    pub ymin: T,
    pub xmax: T,
    pub ymax: T,
}

impl<T: Scalar> HorizontalBox<T> {
    pub fn area(&self) -> T {
        (self.xmax - self.xmin).max(T::zero()) * (self.ymax - self.ymin).max(T::zero())
    }

    pub fn intersects(&self, o: &Self) -> bool {
        self.xmin <= o.xmax && o.xmin <= self.xmax && self.ymin <= o.ymax && o.ymin <= self.ymax
    }

    /// Closed-form axis-aligned IoU.
    pub fn iou(&self, o: &Self) -> T {
        let iw = (self.xmax.min(o.xmax) - self.xmin.max(o.xmin)).max(T::zero());
        let ih = (self.ymax.min(o.ymax) - self.ymin.max(o.ymin)).max(T::zero());
        let inter = iw * ih;
        let union = self.area() + o.area() - inter;
        if union <= T::zero() {
            T::zero()
        } else {
            inter / union
        }
    }
}

/// How [`rotate_point`] applies the angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RotationMode {
    /// Orthogonal rotation by `θ` (counterclockwise in a y-up frame).
    #[default]
    Standard,
    /// `x' = (x0-x)cosθ + (y0-y)sinθ + x`, `y' = (y0-y)cosθ + (x0-x)sinθ + y`.
    /// Both cross terms carry `+sinθ`, so this map is not an isometry for
    /// `θ ∉ {0, π}`. Kept for comparison only.
    SameSignCrossTerms,
}

pub fn rotate_point<T: Scalar>(p: Point<T>, center: Point<T>, theta: T, mode: RotationMode) -> Point<T> {
    if theta == T::zero() {
        return p;
    }
    let (s, c) = theta.sin_cos();
    let (dx, dy) = (p.x - center.x, p.y - center.y);
    match mode {
        RotationMode::Standard => Point::new(dx * c - dy * s + center.x, dx * s + dy * c + center.y),
        RotationMode::SameSignCrossTerms => Point::new(dx * c + dy * s + center.x, dy * c + dx * s + center.y),
    }
}

/// `H x W` split of a box into equally sized, equally oriented cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubGrid<T> {
    pub rows: usize,
    pub cols: usize,
    /// `h / rows`
    pub cell_h: T,
    /// `w / cols`
    pub cell_w: T,
}

impl<T: Scalar> SubGrid<T> {
    pub fn new(b: &RotatedBox<T>, rows: usize, cols: usize) -> Result<Self> {
        contract!(rows >= 1 && cols >= 1, "sub-grid must be at least 1x1");
        Ok(Self {
            rows,
            cols,
            cell_h: b.h / T::of_usize(rows),
            cell_w: b.w / T::of_usize(cols),
        })
    }
}

/// Origin corner of cell `(u, v)`, rotated with the box.
///
/// The unrotated corner is `(x - h/2 + u*S_h, y - w/2 + v*S_w)`; it is then
/// rotated about the box center by `θ`.
pub fn subregion_corner<T: Scalar>(b: &RotatedBox<T>, grid: &SubGrid<T>, u: usize, v: usize) -> Result<Point<T>> {
    contract!(
        u < grid.rows && v < grid.cols,
        "sub-region ({u}, {v}) outside {}x{} grid",
        grid.rows,
        grid.cols
    );
    let two = T::of(2.0);
    let x0 = b.x - b.h / two + T::of_usize(u) * grid.cell_h;
    let y0 = b.y - b.w / two + T::of_usize(v) * grid.cell_w;
    Ok(rotate_point(Point::new(x0, y0), b.center(), b.theta, RotationMode::Standard))
}

/// Vertices in counterclockwise order (y-up), starting at the `(-h/2, -w/2)` corner.
pub fn corners<T: Scalar>(b: &RotatedBox<T>) -> [Point<T>; 4] {
    let two = T::of(2.0);
    let (hh, hw) = (b.h / two, b.w / two);
    let c = b.center();
    [(-hh, -hw), (hh, -hw), (hh, hw), (-hh, hw)]
        .map(|(dx, dy)| rotate_point(Point::new(c.x + dx, c.y + dy), c, b.theta, RotationMode::Standard))
}

pub fn to_horizontal<T: Scalar>(b: &RotatedBox<T>) -> HorizontalBox<T> {
    let pts = corners(b);
    let mut hb = HorizontalBox {
        xmin: pts[0].x,
        ymin: pts[0].y,
        xmax: pts[0].x,
        ymax: pts[0].y,
    };
    for p in &pts[1..] {
        hb.xmin = hb.xmin.min(p.x);
        hb.ymin = hb.ymin.min(p.y);
        hb.xmax = hb.xmax.max(p.x);
        hb.ymax = hb.ymax.max(p.y);
    }
    hb
}

/// Signed shoelace area (positive for counterclockwise).
pub fn polygon_area<T: Scalar>(pts: &[Point<T>]) -> T {
    let n = pts.len();
    if n < 3 {
        return T::zero();
    }
    let mut s = T::zero();
    for i in 0..n {
        let (p, q) = (pts[i], pts[(i + 1) % n]);
        s += p.x * q.y - q.x * p.y;
    }
    s / T::of(2.0)
}

#[inline]
fn cross<T: Scalar>(o: Point<T>, a: Point<T>, b: Point<T>) -> T {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Sutherland–Hodgman clip of `subject` against the convex counterclockwise `clip`.
pub fn clip_convex<T: Scalar>(subject: &[Point<T>], clip: &[Point<T>]) -> Vec<Point<T>> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (e0, e1) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let dc = cross(e0, e1, cur);
            let dp = cross(e0, e1, prev);
            let (cur_in, prev_in) = (dc >= T::zero(), dp >= T::zero());
            if cur_in != prev_in {
                let t = dp / (dp - dc);
                out.push(Point::new(prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)));
            }
            if cur_in {
                out.push(cur);
            }
        }
    }
    out
}

/// Exact IoU of two rotated rectangles via polygon clipping.
pub fn iou_rotated<T: Scalar>(a: &RotatedBox<T>, b: &RotatedBox<T>) -> T {
    if a.key() == b.key() {
        return T::one();
    }
    // fixed argument order keeps the result bitwise symmetric
    let (a, b) = match a.key().partial_cmp(&b.key()) {
        Some(Ordering::Greater) => (b, a),
        _ => (a, b),
    };
    if !to_horizontal(a).intersects(&to_horizontal(b)) {
        return T::zero();
    }
    let pa = corners(a);
    let pb = corners(b);
    let inter = polygon_area(&clip_convex(&pa, &pb)).max(T::zero());
    let union = polygon_area(&pa).abs() + polygon_area(&pb).abs() - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).max(T::zero()).min(T::one())
}

/// Rasterized IoU estimate: counts `grid_n x grid_n` cell centers over the
/// union's bounding box. Independent of the clipping path in [`iou_rotated`].
pub fn iou_raster_oracle<T: Scalar>(a: &RotatedBox<T>, b: &RotatedBox<T>, grid_n: usize) -> f64 {
    let (a, b) = (a.cast::<f64>(), b.cast::<f64>());
    let (ha, hb) = (to_horizontal(&a), to_horizontal(&b));
    let xmin = ha.xmin.min(hb.xmin);
    let ymin = ha.ymin.min(hb.ymin);
    let dx = (ha.xmax.max(hb.xmax) - xmin) / grid_n as f64;
    let dy = (ha.ymax.max(hb.ymax) - ymin) / grid_n as f64;

    let frame = |r: &RotatedBox<f64>| {
        let (s, c) = r.theta.sin_cos();
        (r.x, r.y, c, s, r.h / 2.0, r.w / 2.0)
    };
    let inside = |f: (f64, f64, f64, f64, f64, f64), px: f64, py: f64| {
        let (ex, ey) = (px - f.0, py - f.1);
        (ex * f.2 + ey * f.3).abs() <= f.4 && (-ex * f.3 + ey * f.2).abs() <= f.5
    };
    let (fa, fb) = (frame(&a), frame(&b));
    let (mut both, mut either) = (0u64, 0u64);
    for i in 0..grid_n {
        let py = ymin + (i as f64 + 0.5) * dy;
        for j in 0..grid_n {
            let px = xmin + (j as f64 + 0.5) * dx;
            let (ia, ib) = (inside(fa, px, py), inside(fb, px, py));
            both += (ia && ib) as u64;
            either += (ia || ib) as u64;
        }
    }
    if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, PI, SQRT_2};

    fn rb(x: f64, y: f64, h: f64, w: f64, t: f64) -> RotatedBox<f64> {
        RotatedBox::new(x, y, h, w, t)
    }

    fn assert_pt(p: Point<f64>, x: f64, y: f64) {
        assert_abs_diff_eq!(p.x, x, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, y, epsilon = 1e-12);
    }

    #[test]
    fn rotate_point_examples() {
        let o = Point::new(0.0, 0.0);
        for mode in [RotationMode::Standard, RotationMode::SameSignCrossTerms] {
            assert_eq!(rotate_point(Point::new(3.0, -2.0), Point::new(1.0, 5.0), 0.0, mode), Point::new(3.0, -2.0));
        }
        assert_pt(rotate_point(Point::new(1.0, 0.0), o, FRAC_PI_2, RotationMode::Standard), 0.0, 1.0);
        let p = rotate_point(Point::new(2.0, 0.0), o, FRAC_PI_6, RotationMode::Standard);
        assert_abs_diff_eq!(p.x, 1.7320508, epsilon = 1e-7);
        assert_abs_diff_eq!(p.y, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn same_sign_mode_is_not_isometric() {
        let c = Point::new(1.0, 2.0);
        let p = Point::new(4.0, 3.0);
        let q = rotate_point(p, c, FRAC_PI_4, RotationMode::SameSignCrossTerms);
        assert!((q.dist(c) - p.dist(c)).abs() > 0.1);
    }

    #[test]
    fn subregion_corner_examples() {
        let b = rb(10.0, 10.0, 4.0, 4.0, 0.0);
        let g = SubGrid::new(&b, 2, 2).unwrap();
        assert_pt(subregion_corner(&b, &g, 0, 0).unwrap(), 8.0, 8.0);
        assert_pt(subregion_corner(&b, &g, 1, 1).unwrap(), 10.0, 10.0);
        assert!(subregion_corner(&b, &g, 2, 0).is_err());

        let b = rb(0.0, 0.0, 2.0, 4.0, FRAC_PI_2);
        let g = SubGrid::new(&b, 1, 1).unwrap();
        assert_pt(subregion_corner(&b, &g, 0, 0).unwrap(), 2.0, -1.0);
    }

    #[test]
    fn corners_examples() {
        let c = corners(&rb(0.0, 0.0, 2.0, 2.0, 0.0));
        let want = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
        for (p, (x, y)) in c.iter().zip(want) {
            assert_pt(*p, x, y);
        }
        assert!(polygon_area(&c) > 0.0);
        for p in corners(&rb(0.0, 0.0, 2.0, 2.0, FRAC_PI_4)) {
            assert_abs_diff_eq!(p.dist(Point::new(0.0, 0.0)), SQRT_2, epsilon = 1e-12);
            assert!(p.x.abs() < 1e-12 || p.y.abs() < 1e-12);
        }
    }

    #[test]
    fn angle_normalization() {
        assert_eq!(rb(0.0, 0.0, 1.0, 1.0, PI).theta, 0.0);
        assert_abs_diff_eq!(rb(0.0, 0.0, 1.0, 1.0, -FRAC_PI_4).theta, 3.0 * FRAC_PI_4, epsilon = 1e-12);
        assert!(RotatedBox::try_new(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(RotatedBox::try_new(f64::NAN, 0.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn iou_examples() {
        let a = rb(0.0, 0.0, 2.0, 2.0, 0.0);
        assert_eq!(iou_rotated(&a, &a), 1.0);
        assert_eq!(iou_rotated(&a, &rb(100.0, 0.0, 2.0, 2.0, 0.0)), 0.0);
        assert_abs_diff_eq!(iou_rotated(&a, &rb(1.0, 1.0, 2.0, 2.0, 0.0)), 1.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn raster_oracle_examples() {
        let a = rb(3.0, 4.0, 10.0, 3.0, 0.7);
        assert_eq!(iou_raster_oracle(&a, &a, 100), 1.0);
        assert_eq!(iou_raster_oracle(&a, &rb(100.0, 0.0, 2.0, 2.0, 0.0), 100), 0.0);
        let b = rb(4.0, 5.0, 8.0, 5.0, 1.1);
        assert!((iou_raster_oracle(&a, &b, 1000) - iou_rotated(&a, &b)).abs() < 0.01);
    }

    #[test]
    fn horizontal_envelope() {
        let h = to_horizontal(&rb(5.0, 6.0, 4.0, 2.0, 0.0));
        assert_eq!((h.xmin, h.ymin, h.xmax, h.ymax), (3.0, 5.0, 7.0, 7.0));
        let h = to_horizontal(&rb(0.0, 0.0, 2.0, 4.0, FRAC_PI_2));
        assert_abs_diff_eq!(h.xmin, -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h.ymin, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h.xmax, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h.ymax, 1.0, epsilon = 1e-12);
        let h = to_horizontal(&rb(0.0, 0.0, 2.0, 2.0, FRAC_PI_4));
        assert_abs_diff_eq!(h.xmax, SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(h.ymin, -SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let a = RotatedBox::<f32>::new(0.0, 0.0, 2.0, 2.0, 0.0);
        let b = RotatedBox::<f32>::new(1.0, 1.0, 2.0, 2.0, 0.0);
        assert!((iou_rotated(&a, &b) - 1.0 / 7.0).abs() < 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_box() -> impl Strategy<Value = RotatedBox<f64>> {
            (-50.0..50.0, -50.0..50.0, 1.0..60.0, 1.0..60.0, 0.0..(2.0 * PI))
                .prop_map(|(x, y, h, w, t)| RotatedBox::new(x, y, h, w, t))
        }

        proptest! {
            #[test]
            fn standard_rotation_is_isometry(px in -100.0f64..100.0, py in -100.0..100.0,
                                             cx in -100.0..100.0, cy in -100.0..100.0, t in -7.0..7.0) {
                let (p, c) = (Point::new(px, py), Point::new(cx, cy));
                let q = rotate_point(p, c, t, RotationMode::Standard);
                prop_assert!((q.dist(c) - p.dist(c)).abs() < 1e-6);
            }

            #[test]
            fn iou_symmetric_and_bounded(a in any_box(), b in any_box()) {
                let ab = iou_rotated(&a, &b);
                prop_assert_eq!(ab, iou_rotated(&b, &a));
                prop_assert!((0.0..=1.0).contains(&ab));
            }

            #[test]
            fn axis_aligned_iou_matches_closed_form(a in any_box(), b in any_box()) {
                let (a, b) = (RotatedBox { theta: 0.0, ..a }, RotatedBox { theta: 0.0, ..b });
                let want = to_horizontal(&a).iou(&to_horizontal(&b));
                prop_assert!((iou_rotated(&a, &b) - want).abs() < 1e-9);
            }

            #[test]
            fn half_turn_keeps_vertex_set(a in any_box()) {
                let flipped = RotatedBox { theta: a.theta + PI, ..a };
                let (p, q) = (corners(&a), corners(&flipped));
                for v in p {
                    prop_assert!(q.iter().any(|w| v.dist(*w) < 1e-9));
                }
            }

            #[test]
            fn unit_grid_corner_is_unrotated_corner(a in any_box()) {
                let a = RotatedBox { theta: 0.0, ..a };
                let g = SubGrid::new(&a, 1, 1).unwrap();
                let p = subregion_corner(&a, &g, 0, 0).unwrap();
                prop_assert_eq!(p, Point::new(a.x - a.h / 2.0, a.y - a.w / 2.0));
            }
        }
    }
}
