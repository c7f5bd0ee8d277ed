//! Convex hulls of pixel regions by Andrew's monotone chain, in exact integer
//! arithmetic so results are translation-invariant to the bit.

type Point = (i64, i64);

#[inline]
fn cross(o: Point, a: Point, b: Point) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise hull without collinear points. Degenerate inputs yield
/// one or two vertices.
pub fn convex_hull(mut points: Vec<Point>) -> Vec<Point> {
    points.sort_unstable();
    points.dedup();
    if points.len() <= 2 {
        return points;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(points.len() + 1);
    for &p in &points {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in points.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Twice the polygon area (shoelace), exact.
pub fn twice_area(polygon: &[Point]) -> i64 {
    if polygon.len() < 3 {
        return 0;
    }
    let n = polygon.len();
    (0..n)
        .map(|i| {
            let (a, b) = (polygon[i], polygon[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<i64>()
        .abs()
}

/// Largest squared distance between any two vertices (brute force).
pub fn max_squared_distance(vertices: &[Point]) -> i64 {
    let mut best = 0;
    for (i, a) in vertices.iter().enumerate() {
        for b in &vertices[i + 1..] {
            let (dx, dy) = (a.0 - b.0, a.1 - b.1);
            best = best.max(dx * dx + dy * dy);
        }
    }
    best
}

/// Hull area and maximum Feret diameter of a point set.
pub fn area_and_diameter(points: Vec<Point>) -> (f64, f64) {
    let hull = convex_hull(points);
    (
        twice_area(&hull) as f64 / 2.0,
        (max_squared_distance(&hull) as f64).sqrt(),
    )
}
