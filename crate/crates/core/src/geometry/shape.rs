//! Signed distance functions of the built-in domain shapes.
//!
//! Sign convention: negative inside the domain, non-negative outside.

use std::fmt;
use std::sync::Arc;

use super::grid::Point;
use crate::error::{Error, Result};

/// Signed distance supplied by the caller.
#[derive(Clone)]
pub struct AnalyticShape(pub Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

impl fmt::Debug for AnalyticShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AnalyticShape(..)")
    }
}

#[derive(Clone, Debug)]
pub enum Shape {
    Circle { center: Point, radius: f64 },
    /// Axis-aligned ellipse with semi-axes `semi_x` along x and `semi_y` along y.
    Ellipse { center: Point, semi_x: f64, semi_y: f64 },
    Rectangle { min: Point, max: Point },
    /// `outer` with the axis-aligned box `removed` taken out. `removed` must
    /// share exactly one corner with `outer`.
    LShape { outer: (Point, Point), removed: (Point, Point) },
    /// Simple polygon, vertices in either orientation.
    Polygon { vertices: Vec<Point> },
    /// `{ p : (p - point) . normal <= 0 }` with `normal` the outward direction.
    HalfPlane { point: Point, normal: Point },
    /// Disc sector with apex `center`, spanning `[start, start + opening]` radians.
    Sector { center: Point, radius: f64, start: f64, opening: f64 },
    /// `a \ b`, evaluated as `max(d_a, -d_b)`.
    Difference(Box<Shape>, Box<Shape>),
    /// `a ∩ b`, evaluated as `max(d_a, d_b)`.
    Intersection(Box<Shape>, Box<Shape>),
    Analytic(AnalyticShape),
}

impl Shape {
    pub fn circle(cx: f64, cy: f64, radius: f64) -> Self {
        Shape::Circle { center: [cx, cy], radius }
    }

    pub fn ellipse(semi_x: f64, semi_y: f64) -> Self {
        Shape::Ellipse { center: [0.0, 0.0], semi_x, semi_y }
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Shape::Rectangle { min: [x0, y0], max: [x1, y1] }
    }

    pub fn difference(a: Shape, b: Shape) -> Self {
        Shape::Difference(Box::new(a), Box::new(b))
    }

    pub fn intersection(a: Shape, b: Shape) -> Self {
        Shape::Intersection(Box::new(a), Box::new(b))
    }

    pub fn analytic(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Shape::Analytic(AnalyticShape(Arc::new(f)))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidShape(format!("{what} must be positive, got {v}")))
            }
        };
        match self {
            Shape::Circle { radius, .. } => positive(*radius, "circle radius"),
            Shape::Ellipse { semi_x, semi_y, .. } => {
                positive(*semi_x, "ellipse semi-axis")?;
                positive(*semi_y, "ellipse semi-axis")
            }
            Shape::Rectangle { min, max } => {
                positive(max[0] - min[0], "rectangle width")?;
                positive(max[1] - min[1], "rectangle height")
            }
            Shape::LShape { outer, removed } => {
                positive(outer.1[0] - outer.0[0], "l-shape width")?;
                positive(outer.1[1] - outer.0[1], "l-shape height")?;
                positive(removed.1[0] - removed.0[0], "removed box width")?;
                positive(removed.1[1] - removed.0[1], "removed box height")?;
                l_shape_polygon(*outer, *removed).map(|_| ())
            }
            Shape::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::InvalidShape("polygon needs at least 3 vertices".into()));
                }
                positive(polygon_area(vertices).abs(), "polygon area")
            }
            Shape::HalfPlane { normal, .. } => positive(normal[0].hypot(normal[1]), "half-plane normal"),
            Shape::Sector { radius, opening, .. } => {
                positive(*radius, "sector radius")?;
                positive(*opening, "sector opening")?;
                if *opening > std::f64::consts::PI {
                    return Err(Error::InvalidShape("sector opening above pi is not supported".into()));
                }
                Ok(())
            }
            Shape::Difference(a, b) | Shape::Intersection(a, b) => {
                a.validate()?;
                b.validate()
            }
            Shape::Analytic(_) => Ok(()),
        }
    }

    /// Signed distance from `p` to the boundary.
    pub fn signed_distance(&self, p: Point) -> Result<f64> {
        match self {
            Shape::Circle { center, radius } => Ok((p[0] - center[0]).hypot(p[1] - center[1]) - radius),
            Shape::Ellipse { center, semi_x, semi_y } => {
                ellipse_signed_distance(p[0] - center[0], p[1] - center[1], *semi_x, *semi_y)
            }
            Shape::Rectangle { min, max } => Ok(box_signed_distance(p, *min, *max)),
            Shape::LShape { outer, removed } => Ok(polygon_signed_distance(&l_shape_polygon(*outer, *removed)?, p)),
            Shape::Polygon { vertices } => Ok(polygon_signed_distance(vertices, p)),
            Shape::HalfPlane { point, normal } => {
                let n = normal[0].hypot(normal[1]);
                Ok(((p[0] - point[0]) * normal[0] + (p[1] - point[1]) * normal[1]) / n)
            }
            Shape::Sector { center, radius, start, opening } => {
                let disc = (p[0] - center[0]).hypot(p[1] - center[1]) - radius;
                let (s0, c0) = start.sin_cos();
                let (s1, c1) = (start + opening).sin_cos();
                // outward normals of the two bounding rays
                let d0 = (p[0] - center[0]) * s0 - (p[1] - center[1]) * c0;
                let d1 = -(p[0] - center[0]) * s1 + (p[1] - center[1]) * c1;
                Ok(disc.max(d0.max(d1)))
            }
            Shape::Difference(a, b) => Ok(a.signed_distance(p)?.max(-b.signed_distance(p)?)),
            Shape::Intersection(a, b) => Ok(a.signed_distance(p)?.max(b.signed_distance(p)?)),
            Shape::Analytic(f) => Ok((f.0)(p[0], p[1])),
        }
    }
}

fn box_signed_distance(p: Point, min: Point, max: Point) -> f64 {
    let c = [(min[0] + max[0]) / 2.0, (min[1] + max[1]) / 2.0];
    let half = [(max[0] - min[0]) / 2.0, (max[1] - min[1]) / 2.0];
    let qx = (p[0] - c[0]).abs() - half[0];
    let qy = (p[1] - c[1]).abs() - half[1];
    let outside = qx.max(0.0).hypot(qy.max(0.0));
    outside + qx.max(qy).min(0.0)
}

fn polygon_area(v: &[Point]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

/// Exact signed distance to a simple polygon (crossing-number sign).
fn polygon_signed_distance(v: &[Point], p: Point) -> f64 {
    let n = v.len();
    let mut d2 = f64::INFINITY;
    let mut inside = false;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        let e = [b[0] - a[0], b[1] - a[1]];
        let w = [p[0] - a[0], p[1] - a[1]];
        let t = ((w[0] * e[0] + w[1] * e[1]) / (e[0] * e[0] + e[1] * e[1])).clamp(0.0, 1.0);
        let dx = w[0] - e[0] * t;
        let dy = w[1] - e[1] * t;
        d2 = d2.min(dx * dx + dy * dy);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x_cross = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x_cross {
                inside = !inside;
            }
        }
    }
    let d = d2.sqrt();
    if inside && d > 0.0 {
        -d
    } else {
        d
    }
}

/// Vertices of an L-shaped polygon: the outer box with one corner box removed.
fn l_shape_polygon(outer: (Point, Point), removed: (Point, Point)) -> Result<Vec<Point>> {
    let (lo, hi) = outer;
    let (rlo, rhi) = removed;
    let on = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs());
    let inside_x = rlo[0] > lo[0] - 1e-12 && rhi[0] < hi[0] + 1e-12;
    let inside_y = rlo[1] > lo[1] - 1e-12 && rhi[1] < hi[1] + 1e-12;
    if !(inside_x && inside_y) {
        return Err(Error::InvalidShape("removed box must lie inside the outer box".into()));
    }
    let right = on(rhi[0], hi[0]);
    let left = on(rlo[0], lo[0]);
    let top = on(rhi[1], hi[1]);
    let bottom = on(rlo[1], lo[1]);
    if right == left || top == bottom {
        return Err(Error::InvalidShape("removed box must share exactly one corner with the outer box".into()));
    }
    // counter-clockwise starting at the bottom-left of the outer box
    let v = match (right, top) {
        (true, true) => vec![lo, [hi[0], lo[1]], [hi[0], rlo[1]], rlo, [rlo[0], hi[1]], [lo[0], hi[1]]],
        (true, false) => vec![lo, [rlo[0], lo[1]], [rlo[0], rhi[1]], [hi[0], rhi[1]], hi, [lo[0], hi[1]]],
        (false, true) => vec![lo, [hi[0], lo[1]], hi, [rhi[0], hi[1]], [rhi[0], rlo[1]], [lo[0], rlo[1]]],
        (false, false) => vec![[rhi[0], lo[1]], [hi[0], lo[1]], hi, [lo[0], hi[1]], [lo[0], rhi[1]], rhi],
    };
    Ok(v)
}

/// Signed distance to the ellipse `x^2/a^2 + y^2/b^2 = 1`.
///
/// The closest point is found from the Lagrange stationarity condition
/// `G(s) = (a x / (s + a^2))^2 + (b y / (s + b^2))^2 - 1 = 0`, which has a
/// single root on the bracket used below. Newton steps are damped back into
/// the bracket by bisection. Works on `|x|, |y|` so mirrored points give
/// bit-identical distances.
pub fn ellipse_signed_distance(x: f64, y: f64, a: f64, b: f64) -> Result<f64> {
    const MAX_ITERS: usize = 100;
    let (px, py) = (x.abs(), y.abs());
    let inside = (px / a).powi(2) + (py / b).powi(2) < 1.0;
    let sign = if inside { -1.0 } else { 1.0 };

    // work with e0 >= e1
    let swap = b > a;
    let (e0, e1, y0, y1) = if swap { (b, a, py, px) } else { (a, b, px, py) };

    let dist = if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let r0 = (e0 / e1).powi(2);
            let g = |s: f64| (r0 * z0 / (s + r0)).powi(2) + (z1 / (s + 1.0)).powi(2) - 1.0;
            let dg = |s: f64| -2.0 * (r0 * z0).powi(2) / (s + r0).powi(3) - 2.0 * z1 * z1 / (s + 1.0).powi(3);
            // G is decreasing with G(lo) >= 0 >= G(hi)
            let mut lo = z1 - 1.0;
            let mut hi = (r0 * r0 * z0 * z0 + z1 * z1).sqrt() - 1.0;
            let mut s = 0.5 * (lo + hi);
            let mut converged = false;
            for _ in 0..MAX_ITERS {
                let gs = g(s);
                if gs.abs() <= 1e-13 || (hi - lo) <= 1e-16 * (1.0 + s.abs()) {
                    converged = true;
                    break;
                }
                if gs > 0.0 {
                    lo = s;
                } else {
                    hi = s;
                }
                let newton = s - gs / dg(s);
                s = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            }
            if !converged {
                return Err(Error::ProjectionFailed { x, y, iterations: MAX_ITERS });
            }
            let x0 = r0 * y0 / (s + r0);
            let x1 = y1 / (s + 1.0);
            (x0 - y0).hypot(x1 - y1)
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer = e0 * y0;
        let denom = e0 * e0 - e1 * e1;
        if numer < denom {
            let xde0 = numer / denom;
            let x0 = e0 * xde0;
            let x1 = e1 * (1.0 - xde0 * xde0).max(0.0).sqrt();
            (x0 - y0).hypot(x1)
        } else {
            (y0 - e0).abs()
        }
    };
    Ok(sign * dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn circle_values() {
        let c = Shape::circle(0.0, 0.0, 2.0);
        assert_eq!(c.signed_distance([0.0, 0.0]).unwrap(), -2.0);
        assert_eq!(c.signed_distance([3.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn ellipse_center_is_minor_semi_axis() {
        let e = Shape::ellipse(1.5, 2.0);
        assert!((e.signed_distance([0.0, 0.0]).unwrap() + 1.5).abs() < 1e-14);
        assert!((e.signed_distance([0.0, 3.0]).unwrap() - 1.0).abs() < 1e-14);
        assert!((e.signed_distance([2.5, 0.0]).unwrap() - 1.0).abs() < 1e-14);
    }

    /// Brute-force closest point by dense sampling plus golden-section refinement.
    fn ellipse_oracle(x: f64, y: f64, a: f64, b: f64) -> f64 {
        let f = |t: f64| (a * t.cos() - x).hypot(b * t.sin() - y);
        let n = 20_000;
        let mut best = (0.0, f64::INFINITY);
        for k in 0..n {
            let t = k as f64 / n as f64 * std::f64::consts::TAU;
            let d = f(t);
            if d < best.1 {
                best = (t, d);
            }
        }
        let dt = std::f64::consts::TAU / n as f64;
        let (mut lo, mut hi) = (best.0 - dt, best.0 + dt);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let m1 = hi - g * (hi - lo);
            let m2 = lo + g * (hi - lo);
            if f(m1) < f(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let d = f(0.5 * (lo + hi));
        if (x / a).powi(2) + (y / b).powi(2) < 1.0 {
            -d
        } else {
            d
        }
    }

    #[test]
    fn ellipse_matches_brute_force() {
        for &(x, y) in &[(0.3, 0.2), (1.6, 0.1), (-0.1, 1.9), (0.0, 0.4), (1.0, -1.5), (2.5, 2.5), (0.05, 0.0), (-1.2, 0.0)] {
            let d = ellipse_signed_distance(x, y, 1.5, 2.0).unwrap();
            let o = ellipse_oracle(x, y, 1.5, 2.0);
            assert!((d - o).abs() < 1e-9, "({x},{y}): {d} vs {o}");
        }
    }

    #[test]
    fn l_shape_reentrant_region() {
        let l = Shape::LShape { outer: ([-1.0, -1.0], [1.0, 1.0]), removed: ([0.0, 0.0], [1.0, 1.0]) };
        // enumerate distances to the two re-entrant edges: both are 0.5 away
        assert!((l.signed_distance([0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!((l.signed_distance([-0.5, -0.5]).unwrap() + 0.5).abs() < 1e-15);
        assert!((l.signed_distance([-0.1, -0.1]).unwrap() + 0.1_f64.hypot(0.1)).abs() < 1e-15);
        assert!((l.signed_distance([2.0, -0.5]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn l_shape_every_corner_orientation() {
        for (rlo, rhi, probe) in [
            ([0.0, 0.0], [1.0, 1.0], [0.5, 0.5]),
            ([0.0, -1.0], [1.0, 0.0], [0.5, -0.5]),
            ([-1.0, 0.0], [0.0, 1.0], [-0.5, 0.5]),
            ([-1.0, -1.0], [0.0, 0.0], [-0.5, -0.5]),
        ] {
            let l = Shape::LShape { outer: ([-1.0, -1.0], [1.0, 1.0]), removed: (rlo, rhi) };
            l.validate().unwrap();
            assert!((l.signed_distance(probe).unwrap() - 0.5).abs() < 1e-15);
            let opposite = [-probe[0], -probe[1]];
            assert!((l.signed_distance(opposite).unwrap() + 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn rectangle_and_csg() {
        let r = Shape::rectangle(-1.0, -1.0, 1.0, 1.0);
        assert_eq!(r.signed_distance([0.0, 0.0]).unwrap(), -1.0);
        assert_eq!(r.signed_distance([1.0, 0.3]).unwrap(), 0.0);
        assert!((r.signed_distance([2.0, 2.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let moon = Shape::difference(Shape::circle(0.0, 0.0, 1.0), Shape::circle(0.5, 0.0, 0.8));
        assert!((moon.signed_distance([-0.9, 0.0]).unwrap() + 0.1).abs() < 1e-15);
        assert!(moon.signed_distance([0.5, 0.0]).unwrap() > 0.0);
        let lens = Shape::intersection(Shape::circle(-0.5, 0.0, 1.0), Shape::circle(0.5, 0.0, 1.0));
        assert!(lens.signed_distance([0.0, 0.0]).unwrap() < 0.0);
    }

    #[test]
    fn sector_sign() {
        let s = Shape::Sector { center: [0.0, 0.0], radius: 2.0, start: -0.25 * std::f64::consts::PI, opening: 0.5 * std::f64::consts::PI };
        assert!((s.signed_distance([1.0, 0.0]).unwrap() + 1.0_f64.min(2.0_f64.sqrt() / 2.0)).abs() < 1e-14);
        assert!(s.signed_distance([-0.5, 0.0]).unwrap() > 0.0);
        assert!(s.signed_distance([2.5, 0.0]).unwrap() > 0.0);
    }

    #[test]
    fn invalid_shapes() {
        assert!(Shape::circle(0.0, 0.0, -1.0).validate().is_err());
        assert!(Shape::LShape { outer: ([-1.0, -1.0], [1.0, 1.0]), removed: ([-0.5, -0.5], [0.5, 0.5]) }.validate().is_err());
        assert!(Shape::difference(Shape::circle(0.0, 0.0, 1.0), Shape::ellipse(0.0, 1.0)).validate().is_err());
    }

    proptest! {
        #[test]
        fn exact_sdfs_are_one_lipschitz(
            px in -3.0f64..3.0, py in -3.0f64..3.0, qx in -3.0f64..3.0, qy in -3.0f64..3.0, which in 0usize..5
        ) {
            let shape = match which {
                0 => Shape::circle(0.2, -0.1, 1.3),
                1 => Shape::ellipse(1.5, 2.0),
                2 => Shape::rectangle(-1.0, -0.5, 1.2, 0.7),
                3 => Shape::LShape { outer: ([-1.0, -1.0], [1.0, 1.0]), removed: ([0.0, 0.0], [1.0, 1.0]) },
                _ => Shape::Polygon { vertices: vec![[0.0, -1.0], [1.5, 0.2], [-0.4, 1.1]] },
            };
            let dp = shape.signed_distance([px, py]).unwrap();
            let dq = shape.signed_distance([qx, qy]).unwrap();
            prop_assert!((dp - dq).abs() <= (px - qx).hypot(py - qy) + 1e-10);
        }
    }
}
