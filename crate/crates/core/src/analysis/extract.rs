//! Network extraction from a solved state: the scalar image obtained by
//! integrating the primal over the lifting direction, its steep-gradient
//! support, and scanline crossing profiles.

use crate::geom::{self, Point2};
use crate::grid::{NodeLayout, PrismGrid, TriLocator};
use crate::pairing::DiscreteState;

/// One extracted segment: a mesh edge inside the jump band with the image
/// difference across the band as mass estimate.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
    pub mass: f64,
}

#[derive(Debug, Clone, Default)]
pub struct NetworkExtract {
    pub segments: Vec<Segment>,
    /// The per-x-node image values (integral of the primal over s).
    pub image: Vec<f64>,
}

impl NetworkExtract {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "x1,y1,x2,y2,mass")?;
        for s in &self.segments {
            writeln!(w, "{},{},{},{},{}", s.a[0], s.a[1], s.b[0], s.b[1], s.mass)?;
        }
        Ok(())
    }
}

/// Integral of the primal over the lifting direction per x-node.
pub fn node_image(layout: &NodeLayout, state: &DiscreteState) -> Vec<f64> {
    layout
        .columns
        .iter()
        .map(|col| {
            (0..col.interval_count())
                .map(|k| state.primal[col.layered_base + k] * col.heights[k])
                .sum()
        })
        .collect()
}

/// Marks mesh edges whose two adjacent triangles both carry an image
/// gradient above `jump_threshold` times the maximum, and estimates the
/// mass across the band from the image difference between the opposite
/// vertices.
pub fn extract_network(
    grid: &PrismGrid,
    layout: &NodeLayout,
    state: &DiscreteState,
    jump_threshold: f64,
) -> NetworkExtract {
    let image = node_image(layout, state);
    let mut grad: Vec<(u32, [f64; 2])> = Vec::new();
    let mut max_grad = 0.0_f64;
    for tri in grid.active_tris() {
        let verts = grid.tri_verts(tri);
        let pts = grid.tri_points(tri);
        let grads = geom::hat_gradients(pts[0], pts[1], pts[2]);
        let mut g = [0.0, 0.0];
        for i in 0..3 {
            let u = image[verts[i] as usize];
            g[0] += u * grads[i][0];
            g[1] += u * grads[i][1];
        }
        max_grad = max_grad.max((g[0] * g[0] + g[1] * g[1]).sqrt());
        grad.push((tri, g));
    }
    if max_grad == 0.0 {
        return NetworkExtract { segments: Vec::new(), image };
    }
    let cutoff = jump_threshold * max_grad;
    let marked: std::collections::HashMap<u32, [f64; 2]> = grad
        .into_iter()
        .filter(|(_, g)| (g[0] * g[0] + g[1] * g[1]).sqrt() >= cutoff)
        .collect();

    let mut segments = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (&tri, g1) in marked.iter() {
        let verts = grid.tri_verts(tri);
        for i in 0..3 {
            let (a, b) = (verts[i], verts[(i + 1) % 3]);
            let key = if a < b { (a, b) } else { (b, a) };
            if !seen.insert(key) {
                continue;
            }
            let other = match grid.tri_neighbour(key.0, key.1, tri) {
                Some(t) => t,
                None => continue,
            };
            let g2 = match marked.get(&other) {
                Some(g) => g,
                None => continue,
            };
            // the network runs transverse to the image gradient: drop edges
            // aligned with it (they cross the jump band instead)
            let (pa, pb) = (grid.x_node(key.0 as usize), grid.x_node(key.1 as usize));
            let dir = geom::sub(pb, pa);
            let dl = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
            let gm = [g1[0] + g2[0], g1[1] + g2[1]];
            let gl = (gm[0] * gm[0] + gm[1] * gm[1]).sqrt();
            if gl > 0.0 && ((dir[0] * gm[0] + dir[1] * gm[1]) / (dl * gl)).abs() > 0.75 {
                continue;
            }
            // image difference between the two opposite vertices spans the band
            let opp = |t: u32| -> u32 {
                let vs = grid.tri_verts(t);
                vs.into_iter().find(|v| *v != key.0 && *v != key.1).unwrap()
            };
            let mass = (image[opp(tri) as usize] - image[opp(other) as usize]).abs();
            segments.push(Segment { a: pa, b: pb, mass });
        }
    }
    segments.sort_by(|s, t| {
        (s.a[0], s.a[1], s.b[0], s.b[1])
            .partial_cmp(&(t.a[0], t.a[1], t.b[0], t.b[1]))
            .unwrap()
    });
    NetworkExtract { segments, image }
}

/// Evaluates the piecewise-linear image at an arbitrary point.
pub fn sample_image(grid: &PrismGrid, locator: &TriLocator, image: &[f64], p: Point2) -> f64 {
    let tri = locator.locate(p).expect("point inside the domain");
    let verts = grid.tri_verts(tri);
    let pts = grid.tri_points(tri);
    let lam = geom::barycentric(p, pts[0], pts[1], pts[2]);
    (0..3).map(|i| lam[i].max(0.0) * image[verts[i] as usize]).sum()
}

/// Jump clusters of a sampled 1D profile: maximal same-sign runs of the
/// increments carrying at least `min_mass` in total. Returns the
/// mass-weighted positions and signed masses.
pub fn line_jump_clusters(xs: &[f64], us: &[f64], min_mass: f64) -> Vec<(f64, f64)> {
    let eps = 1e-9;
    let mut clusters = Vec::new();
    let mut acc = 0.0_f64;
    let mut weighted = 0.0_f64;
    let mut sign = 0.0_f64;
    let mut flush = |acc: &mut f64, weighted: &mut f64| {
        if acc.abs() >= min_mass {
            clusters.push((*weighted / acc.abs(), *acc));
        }
        *acc = 0.0;
        *weighted = 0.0;
    };
    for i in 1..us.len() {
        let du = us[i] - us[i - 1];
        if du.abs() < eps {
            continue;
        }
        let s = du.signum();
        if sign != 0.0 && s != sign {
            flush(&mut acc, &mut weighted);
        }
        sign = s;
        acc += du;
        weighted += 0.5 * (xs[i] + xs[i - 1]) * du.abs();
    }
    flush(&mut acc, &mut weighted);
    clusters
}

/// Crossing profile of the network along a horizontal line: positions and
/// transported masses where branches cross `y`.
pub fn crossing_profile(
    grid: &PrismGrid,
    locator: &TriLocator,
    image: &[f64],
    y: f64,
    min_mass: f64,
    samples: usize,
) -> Vec<(f64, f64)> {
    let (w, _) = grid.domain.size();
    let xs: Vec<f64> = (0..=samples).map(|i| w * i as f64 / samples as f64).collect();
    let us: Vec<f64> = xs
        .iter()
        .map(|&x| sample_image(grid, locator, image, [x.min(w), y]))
        .collect();
    line_jump_clusters(&xs, &us, min_mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::Domain;

    #[test]
    fn constant_image_gives_empty_extract() {
        let grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 2, 1);
        let layout = NodeLayout::build(&grid);
        let mut state = DiscreteState::zeros(&layout);
        for x in state.primal.iter_mut() {
            *x = 1.0;
        }
        let net = extract_network(&grid, &layout, &state, 0.4);
        assert!(net.is_empty());
    }

    /// Exact indicator of the half plane `x <= 0.5` (a vertical network line
    /// of mass 1 smeared over one element band).
    fn half_plane_state(grid: &PrismGrid, layout: &NodeLayout) -> DiscreteState {
        let mut state = DiscreteState::zeros(layout);
        for col in &layout.columns {
            if grid.x_node(col.x_node)[0] <= 0.5 {
                for k in 0..col.interval_count() {
                    state.primal[col.layered_base + k] = 1.0;
                }
            }
        }
        state
    }

    #[test]
    fn vertical_jump_is_recovered_with_unit_mass() {
        let grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 4, 1);
        let layout = NodeLayout::build(&grid);
        let state = half_plane_state(&grid, &layout);
        let net = extract_network(&grid, &layout, &state, 0.5);
        assert!(!net.is_empty());
        // all segments hug the jump band right of x = 0.5, carrying mass 1
        for s in &net.segments {
            assert!((s.a[0] - 0.625).abs() <= 0.126 && (s.b[0] - 0.625).abs() <= 0.126);
            assert!((s.mass - 1.0).abs() < 1e-9, "mass {}", s.mass);
        }
    }

    #[test]
    fn jump_clusters_on_synthetic_profiles() {
        let n = 400;
        let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        // two ramps: up by 1 around 0.3 (width 0.05), down by 2 around 0.7
        let us: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let up = ((x - 0.275) / 0.05).clamp(0.0, 1.0);
                let down = ((x - 0.675) / 0.05).clamp(0.0, 1.0) * 2.0;
                up - down
            })
            .collect();
        let clusters = line_jump_clusters(&xs, &us, 0.5);
        assert_eq!(clusters.len(), 2);
        assert!((clusters[0].0 - 0.3).abs() < 0.02);
        assert!((clusters[0].1 - 1.0).abs() < 1e-9);
        assert!((clusters[1].0 - 0.7).abs() < 0.02);
        assert!((clusters[1].1 + 2.0).abs() < 1e-9);
    }

    #[test]
    fn crossing_profile_on_binary_state() {
        let grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 4, 1);
        let layout = NodeLayout::build(&grid);
        let state = half_plane_state(&grid, &layout);
        let image = node_image(&layout, &state);
        let locator = TriLocator::new(&grid);
        let crossings = crossing_profile(&grid, &locator, &image, 0.5, 0.5, 400);
        assert_eq!(crossings.len(), 1);
        // the estimate sits inside the one-element smearing band
        assert!((crossings[0].0 - 0.5).abs() < 0.2, "position {}", crossings[0].0);
        assert!((crossings[0].1.abs() - 1.0).abs() < 1e-9);
    }
}
