//! Convex polygon clipping, used as an independent oracle for the rhombus
//! kernel.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

pub type Point = [f64; 2];

/// Signed shoelace area (positive for counter-clockwise vertex order).
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        twice += x0 * y1 - x1 * y0;
    }
    0.5 * twice
}

/// Intersection of `subject` with the convex polygon `clip` (both
/// counter-clockwise) by successive half-plane clipping.
pub fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut out: Vec<Point> = subject.to_vec();
    let m = clip.len();
    for e in 0..m {
        if out.is_empty() {
            break;
        }
        let a = clip[e];
        let b = clip[(e + 1) % m];
        let side = |p: Point| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let input = core::mem::take(&mut out);
        let n = input.len();
        for i in 0..n {
            let cur = input[i];
            let prev = input[(i + n - 1) % n];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    out.push(crossing(prev, cur, sp, sc));
                }
                out.push(cur);
            } else if sp >= 0.0 {
                out.push(crossing(prev, cur, sp, sc));
            }
        }
    }
    out
}

fn crossing(p: Point, q: Point, sp: f64, sq: f64) -> Point {
    let t = sp / (sp - sq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Unit-side rhombus with smaller angle `p`, centered at the origin with its
/// long diagonal on the x-axis. Counter-clockwise.
pub fn rhombus(p: f64) -> [Point; 4] {
    let (s, c) = (p / 2.0).sin_cos();
    [[c, 0.0], [0.0, s], [-c, 0.0], [0.0, -s]]
}

/// `area(R_p) + area(R_q) - 2 area(R_p ∩ R_q)` by exact clipping.
pub fn rhombus_symdiff_area(p: f64, q: f64) -> f64 {
    let (a, b) = (rhombus(p), rhombus(q));
    let inter = clip_convex(&a, &b);
    polygon_area(&a) + polygon_area(&b) - 2.0 * polygon_area(&inter)
}
