//! Small planar helpers shared by the grid, assembly and analysis code.

pub type Point2 = [f64; 2];

#[inline]
pub fn sub(a: Point2, b: Point2) -> Point2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn dist(a: Point2, b: Point2) -> f64 {
    let d = sub(a, b);
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

#[inline]
pub fn midpoint(a: Point2, b: Point2) -> Point2 {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Signed area of the triangle (a, b, c); positive for counterclockwise order.
#[inline]
pub fn signed_area(a: Point2, b: Point2, c: Point2) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

/// Gradients of the three barycentric hat functions on triangle (a, b, c).
///
/// Row `i` is the constant gradient of the hat that is 1 at vertex `i`.
pub fn hat_gradients(a: Point2, b: Point2, c: Point2) -> [[f64; 2]; 3] {
    let area2 = 2.0 * signed_area(a, b, c);
    // grad of hat_i is the inward normal of the opposite edge scaled by 1/(2A)
    [
        [(b[1] - c[1]) / area2, (c[0] - b[0]) / area2],
        [(c[1] - a[1]) / area2, (a[0] - c[0]) / area2],
        [(a[1] - b[1]) / area2, (b[0] - a[0]) / area2],
    ]
}

/// Barycentric coordinates of `p` with respect to triangle (a, b, c).
pub fn barycentric(p: Point2, a: Point2, b: Point2, c: Point2) -> [f64; 3] {
    let area = signed_area(a, b, c);
    let l0 = signed_area(p, b, c) / area;
    let l1 = signed_area(a, p, c) / area;
    [l0, l1, 1.0 - l0 - l1]
}

pub fn point_in_triangle(p: Point2, a: Point2, b: Point2, c: Point2, tol: f64) -> bool {
    let l = barycentric(p, a, b, c);
    l.iter().all(|&x| x >= -tol)
}

/// Exact integral over a triangle of the product of two affine functions
/// given by their vertex values: `area/12 * (sum f_i g_i + sum f_i * sum g_i)`.
#[inline]
pub fn affine_product_integral(area: f64, f: [f64; 3], g: [f64; 3]) -> f64 {
    let dot = f[0] * g[0] + f[1] * g[1] + f[2] * g[2];
    let sums = (f[0] + f[1] + f[2]) * (g[0] + g[1] + g[2]);
    area / 12.0 * (dot + sums)
}

/// Exact integral over a triangle of `max(0, f)` for an affine `f` with the
/// given vertex values. Clips the triangle against the zero line and
/// integrates the affine function over the positive polygon.
pub fn positive_part_integral(verts: [Point2; 3], vals: [f64; 3]) -> f64 {
    if vals.iter().all(|&v| v >= 0.0) {
        let area = signed_area(verts[0], verts[1], verts[2]).abs();
        return area * (vals[0] + vals[1] + vals[2]) / 3.0;
    }
    if vals.iter().all(|&v| v <= 0.0) {
        return 0.0;
    }
    // Collect the polygon {f >= 0} by walking the triangle edges.
    let mut poly: Vec<(Point2, f64)> = Vec::with_capacity(4);
    for i in 0..3 {
        let j = (i + 1) % 3;
        let (pi, vi) = (verts[i], vals[i]);
        let (pj, vj) = (verts[j], vals[j]);
        if vi >= 0.0 {
            poly.push((pi, vi));
        }
        if (vi > 0.0 && vj < 0.0) || (vi < 0.0 && vj > 0.0) {
            let t = vi / (vi - vj);
            poly.push(([pi[0] + t * (pj[0] - pi[0]), pi[1] + t * (pj[1] - pi[1])], 0.0));
        }
    }
    let mut total = 0.0;
    for k in 1..poly.len().saturating_sub(1) {
        let (p0, v0) = poly[0];
        let (p1, v1) = poly[k];
        let (p2, v2) = poly[k + 1];
        let area = signed_area(p0, p1, p2).abs();
        total += area * (v0 + v1 + v2) / 3.0;
    }
    total
}

/// Exact integral over a triangle of `|f|` for an affine `f`.
pub fn abs_integral(verts: [Point2; 3], vals: [f64; 3]) -> f64 {
    positive_part_integral(verts, vals)
        + positive_part_integral(verts, [-vals[0], -vals[1], -vals[2]])
}
