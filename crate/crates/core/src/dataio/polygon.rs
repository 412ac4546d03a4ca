//! Minimum-area enclosing rectangle of a polygon.

use crate::error::{contract, Result};
use crate::geometry::{normalize_angle, polygon_area, Point, RotatedBox};
use crate::scalar::Scalar;

fn cross<T: Scalar>(o: Point<T>, a: Point<T>, b: Point<T>) -> T {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Counterclockwise convex hull (Andrew's monotone chain), collinear points dropped.
pub fn convex_hull<T: Scalar>(points: &[Point<T>]) -> Vec<Point<T>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| {
        let key = |p: &Point<T>| (p.x, p.y);
        key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal)
    });
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower = half_hull(pts.iter());
    let mut upper = half_hull(pts.iter().rev());
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn half_hull<'a, T: Scalar>(pts: impl Iterator<Item = &'a Point<T>>) -> Vec<Point<T>> {
    let mut out: Vec<Point<T>> = Vec::new();
    for &p in pts {
        while out.len() >= 2 && cross(out[out.len() - 2], out[out.len() - 1], p) <= T::zero() {
            out.pop();
        }
        out.push(p);
    }
    out
}

/// Smallest rotated rectangle enclosing `polygon`.
///
/// Every hull edge is tried as a rectangle side. The result is canonical:
/// `h >= w`, `θ` in `[0, π)`, and `θ` in `[0, π/2)` for squares.
pub fn polygon_to_rotated<T: Scalar>(polygon: &[Point<T>]) -> Result<RotatedBox<T>> {
    contract!(
        polygon.iter().all(|p| p.x.is_finite() && p.y.is_finite()),
        "polygon has non-finite coordinates"
    );
    let hull = convex_hull(polygon);
    let scale = hull
        .iter()
        .fold(T::zero(), |m, p| m.max(p.x.abs()).max(p.y.abs()))
        .max(T::one());
    contract!(
        hull.len() >= 3 && polygon_area(&hull) > T::epsilon() * scale * scale,
        "degenerate polygon {polygon:?}"
    );

    let mut best: Option<(T, RotatedBox<T>)> = None;
    for i in 0..hull.len() {
        let (p, q) = (hull[i], hull[(i + 1) % hull.len()]);
        let len = p.dist(q);
        let (ux, uy) = ((q.x - p.x) / len, (q.y - p.y) / len);
        let (mut amin, mut amax, mut bmin, mut bmax) = (T::zero(), T::zero(), T::zero(), T::zero());
        for r in &hull {
            let (dx, dy) = (r.x - p.x, r.y - p.y);
            let a = dx * ux + dy * uy;
            let b = -dx * uy + dy * ux;
            amin = amin.min(a);
            amax = amax.max(a);
            bmin = bmin.min(b);
            bmax = bmax.max(b);
        }
        let (ea, eb) = (amax - amin, bmax - bmin);
        let area = ea * eb;
        if best.as_ref().is_some_and(|(a, _)| area >= *a) {
            continue;
        }
        let two = T::of(2.0);
        let (ma, mb) = ((amin + amax) / two, (bmin + bmax) / two);
        let cx = p.x + ma * ux - mb * uy;
        let cy = p.y + ma * uy + mb * ux;
        let edge = uy.atan2(ux);
        let rbox = if ea >= eb {
            RotatedBox::new(cx, cy, ea, eb, edge)
        } else {
            RotatedBox::new(cx, cy, eb, ea, edge + T::FRAC_PI_2())
        };
        best = Some((area, rbox));
    }
    let mut rbox = best.expect("hull has edges").1;
    let square = rbox.h - rbox.w <= T::of(64.0) * T::epsilon() * rbox.h;
    if square && rbox.theta >= T::FRAC_PI_2() {
        rbox.theta = normalize_angle(rbox.theta - T::FRAC_PI_2());
    }
    Ok(rbox)
}
