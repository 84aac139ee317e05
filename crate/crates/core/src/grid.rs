//! Adaptive semi-regular triangular prism grids on `domain x [0, M]`.
//!
//! Elements are triangles from a conforming 2D bisection hierarchy times
//! dyadic s-intervals. The grid allows s-hanging nodes under the half-edge
//! rule (strictly overlapping neighbour intervals differ by at most one
//! bisection level and align) but never x-hanging nodes: x-refinement uses
//! longest-edge bisection with propagation and always splits the full
//! s-column over a triangle.

use crate::boundary::Domain;
use crate::geom::{self, Point2};
use std::collections::HashMap;
use thiserror::Error;

/// Hard cap on the s-bisection depth so dyadic arithmetic stays exact in u64.
pub const MAX_S_LEVEL: u32 = 48;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid is not semi-regular: {0}")]
    NotSemiRegular(String),
    #[error("element {0} is not alive in this grid")]
    DeadElement(u32),
    #[error("grids are not related by refinement")]
    UnrelatedGrids,
}

/// Canonical dyadic fraction in [0, 1]: `num / 2^lev` with `num` odd unless
/// the value is 0 or 1. Used as an exact s-coordinate key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SKey {
    num: u64,
    lev: u32,
}

impl SKey {
    pub fn new(mut num: u64, mut lev: u32) -> Self {
        while lev > 0 && num % 2 == 0 {
            num /= 2;
            lev -= 1;
        }
        SKey { num, lev }
    }

    pub const ZERO: SKey = SKey { num: 0, lev: 0 };
    pub const ONE: SKey = SKey { num: 1, lev: 0 };

    /// Fraction value scaled by the lifting height.
    pub fn value(&self, lift_height: f64) -> f64 {
        lift_height * (self.num as f64) * 0.5_f64.powi(self.lev as i32)
    }
}

impl Ord for SKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let lev = self.lev.max(other.lev);
        let a = self.num << (lev - self.lev);
        let b = other.num << (lev - other.lev);
        a.cmp(&b)
    }
}

impl PartialOrd for SKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Dyadic s-interval `[idx, idx+1] / 2^lev` (scaled by the lifting height).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SInterval {
    pub idx: u64,
    pub lev: u32,
}

impl SInterval {
    pub const FULL: SInterval = SInterval { idx: 0, lev: 0 };

    pub fn lo(&self) -> SKey {
        SKey::new(self.idx, self.lev)
    }
    pub fn hi(&self) -> SKey {
        SKey::new(self.idx + 1, self.lev)
    }
    pub fn mid(&self) -> SKey {
        SKey::new(2 * self.idx + 1, self.lev + 1)
    }
    pub fn halves(&self) -> (SInterval, SInterval) {
        assert!(self.lev < MAX_S_LEVEL, "s-refinement depth exceeds MAX_S_LEVEL");
        (
            SInterval { idx: 2 * self.idx, lev: self.lev + 1 },
            SInterval { idx: 2 * self.idx + 1, lev: self.lev + 1 },
        )
    }
    pub fn strictly_overlaps(&self, other: &SInterval) -> bool {
        self.lo() < other.hi() && other.lo() < self.hi()
    }
    /// Exact interval height as a fraction of the lifting height.
    pub fn height_fraction(&self) -> f64 {
        0.5_f64.powi(self.lev as i32)
    }
    /// Checks the half-edge rule for a strictly overlapping pair: equal
    /// intervals, or one is a half of the other.
    pub fn half_edge_compatible(&self, other: &SInterval) -> bool {
        if self == other {
            return true;
        }
        let fits = |small: &SInterval, big: &SInterval| {
            let (lo, mid, hi) = (big.lo(), big.mid(), big.hi());
            let in_set = |k: SKey| k == lo || k == mid || k == hi;
            in_set(small.lo()) && in_set(small.hi())
        };
        fits(self, other) || fits(other, self)
    }
}

#[derive(Debug, Clone)]
struct Tri {
    verts: [u32; 3],
    level: u32,
    alive: bool,
}

/// A triangular prism element: a triangle of the 2D hierarchy times a dyadic
/// s-interval. Identity is persistent: refinement kills an element and
/// creates children that record their parent.
#[derive(Debug, Clone)]
pub struct PrismElement {
    pub tri: u32,
    pub s: SInterval,
    pub parent: Option<u32>,
    pub alive: bool,
}

#[derive(Debug, Clone)]
pub struct PrismGrid {
    pub domain: Domain,
    pub lift_height: f64,
    x_nodes: Vec<Point2>,
    tris: Vec<Tri>,
    elements: Vec<PrismElement>,
    tri_elems: Vec<Vec<u32>>,
    edge_tris: HashMap<(u32, u32), Vec<u32>>,
    midpoints: HashMap<(u32, u32), u32>,
    vertex_tris: Vec<Vec<u32>>,
}

fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl PrismGrid {
    /// Uniform start grid: the rectangle split into two triangles along its
    /// diagonal, `x_level` uniform longest-edge bisection sweeps, and
    /// `s_level` uniform bisections of `[0, M]`.
    pub fn uniform(domain: Domain, lift_height: f64, x_level: u32, s_level: u32) -> Self {
        assert!(lift_height > 0.0, "lifting height must be positive");
        let corners = domain.corners();
        let mut grid = PrismGrid {
            domain,
            lift_height,
            x_nodes: corners.to_vec(),
            tris: Vec::new(),
            elements: Vec::new(),
            tri_elems: Vec::new(),
            edge_tris: HashMap::new(),
            midpoints: HashMap::new(),
            vertex_tris: vec![Vec::new(); 4],
        };
        grid.add_tri([0, 1, 2], 0);
        grid.add_tri([0, 2, 3], 0);
        for t in 0..2u32 {
            let el = grid.add_element(t, SInterval::FULL, None);
            grid.tri_elems[t as usize].push(el);
        }
        for _ in 0..x_level {
            grid.refine_all_x();
        }
        for _ in 0..s_level {
            grid.refine_all_s();
        }
        grid
    }

    pub fn x_node(&self, i: usize) -> Point2 {
        self.x_nodes[i]
    }
    pub fn x_node_count(&self) -> usize {
        self.x_nodes.len()
    }
    pub fn element(&self, id: u32) -> &PrismElement {
        &self.elements[id as usize]
    }
    pub fn element_slot_count(&self) -> usize {
        self.elements.len()
    }
    pub fn tri_verts(&self, tri: u32) -> [u32; 3] {
        self.tris[tri as usize].verts
    }
    pub fn tri_level(&self, tri: u32) -> u32 {
        self.tris[tri as usize].level
    }
    pub fn tri_points(&self, tri: u32) -> [Point2; 3] {
        let v = self.tris[tri as usize].verts;
        [self.x_nodes[v[0] as usize], self.x_nodes[v[1] as usize], self.x_nodes[v[2] as usize]]
    }
    pub fn tri_area(&self, tri: u32) -> f64 {
        let p = self.tri_points(tri);
        geom::signed_area(p[0], p[1], p[2]).abs()
    }

    pub fn active_elements(&self) -> impl Iterator<Item = (u32, &PrismElement)> {
        self.elements
            .iter()
            .enumerate()
            .filter(|(_, e)| e.alive)
            .map(|(i, e)| (i as u32, e))
    }

    pub fn active_element_count(&self) -> usize {
        self.elements.iter().filter(|e| e.alive).count()
    }

    pub fn active_tris(&self) -> impl Iterator<Item = u32> + '_ {
        self.tris
            .iter()
            .enumerate()
            .filter(|(_, t)| t.alive)
            .map(|(i, _)| i as u32)
    }

    /// Elements over one triangle, sorted by ascending s.
    pub fn column_elements(&self, tri: u32) -> &[u32] {
        &self.tri_elems[tri as usize]
    }

    /// Active triangles having `v` as a vertex.
    pub fn tris_at_vertex(&self, v: u32) -> &[u32] {
        &self.vertex_tris[v as usize]
    }

    /// x-level and s-level of an element (bisection counts).
    pub fn element_levels(&self, id: u32) -> (u32, u32) {
        let e = &self.elements[id as usize];
        (self.tris[e.tri as usize].level, e.s.lev)
    }

    fn add_tri(&mut self, verts: [u32; 3], level: u32) -> u32 {
        let id = self.tris.len() as u32;
        self.tris.push(Tri { verts, level, alive: true });
        self.tri_elems.push(Vec::new());
        for i in 0..3 {
            let k = edge_key(verts[i], verts[(i + 1) % 3]);
            self.edge_tris.entry(k).or_default().push(id);
            self.vertex_tris[verts[i] as usize].push(id);
        }
        id
    }

    fn kill_tri(&mut self, tri: u32) {
        let verts = self.tris[tri as usize].verts;
        self.tris[tri as usize].alive = false;
        for i in 0..3 {
            let k = edge_key(verts[i], verts[(i + 1) % 3]);
            if let Some(list) = self.edge_tris.get_mut(&k) {
                list.retain(|&t| t != tri);
            }
            self.vertex_tris[verts[i] as usize].retain(|&t| t != tri);
        }
    }

    fn add_element(&mut self, tri: u32, s: SInterval, parent: Option<u32>) -> u32 {
        let id = self.elements.len() as u32;
        self.elements.push(PrismElement { tri, s, parent, alive: true });
        id
    }

    fn longest_edge(&self, tri: u32) -> (u32, u32) {
        let verts = self.tris[tri as usize].verts;
        let mut best = edge_key(verts[0], verts[1]);
        let mut best_len = geom::dist(self.x_nodes[verts[0] as usize], self.x_nodes[verts[1] as usize]);
        for i in 1..3 {
            let (a, b) = (verts[i], verts[(i + 1) % 3]);
            let len = geom::dist(self.x_nodes[a as usize], self.x_nodes[b as usize]);
            let key = edge_key(a, b);
            if len > best_len || (len == best_len && key < best) {
                best_len = len;
                best = key;
            }
        }
        best
    }

    fn tri_across(&self, edge: (u32, u32), tri: u32) -> Option<u32> {
        self.edge_tris
            .get(&edge)?
            .iter()
            .copied()
            .find(|&t| t != tri)
    }

    /// The other active triangle sharing the edge `(a, b)`, if any.
    pub fn tri_neighbour(&self, a: u32, b: u32, tri: u32) -> Option<u32> {
        self.tri_across(edge_key(a, b), tri)
    }

    /// Whether `(a, b)` is an active edge with a single incident triangle.
    pub fn is_boundary_edge(&self, a: u32, b: u32) -> bool {
        self.edge_tris
            .get(&edge_key(a, b))
            .map_or(false, |l| l.len() == 1)
    }

    fn midpoint_node(&mut self, edge: (u32, u32)) -> u32 {
        if let Some(&m) = self.midpoints.get(&edge) {
            return m;
        }
        let p = geom::midpoint(self.x_nodes[edge.0 as usize], self.x_nodes[edge.1 as usize]);
        let p = self.domain.snap_to_boundary(p);
        let id = self.x_nodes.len() as u32;
        self.x_nodes.push(p);
        self.vertex_tris.push(Vec::new());
        self.midpoints.insert(edge, id);
        id
    }

    /// Bisects one triangle at `edge`, splitting its whole s-column.
    fn bisect_column(&mut self, tri: u32, edge: (u32, u32), created: &mut Vec<u32>) {
        let m = self.midpoint_node(edge);
        let verts = self.tris[tri as usize].verts;
        let level = self.tris[tri as usize].level;
        let ci = (0..3)
            .find(|&i| verts[i] != edge.0 && verts[i] != edge.1)
            .expect("edge must belong to the triangle");
        let (c, a, b) = (verts[ci], verts[(ci + 1) % 3], verts[(ci + 2) % 3]);
        let elems = self.tri_elems[tri as usize].clone();
        self.kill_tri(tri);
        let t1 = self.add_tri([c, a, m], level + 1);
        let t2 = self.add_tri([c, m, b], level + 1);
        for el in elems {
            let s = self.elements[el as usize].s;
            self.elements[el as usize].alive = false;
            let e1 = self.add_element(t1, s, Some(el));
            let e2 = self.add_element(t2, s, Some(el));
            self.tri_elems[t1 as usize].push(e1);
            self.tri_elems[t2 as usize].push(e2);
            created.push(e1);
            created.push(e2);
        }
    }

    /// Longest-edge propagation refinement of the column over `tri`.
    fn lepp_refine(&mut self, tri: u32, created: &mut Vec<u32>) {
        let mut guard = 0usize;
        while self.tris[tri as usize].alive {
            let mut chain = vec![tri];
            loop {
                guard += 1;
                assert!(guard < 10_000_000, "longest-edge propagation failed to terminate");
                let t = *chain.last().unwrap();
                let e = self.longest_edge(t);
                match self.tri_across(e, t) {
                    Some(n) if self.longest_edge(n) != e => chain.push(n),
                    nbr => {
                        self.bisect_column(t, e, created);
                        if let Some(n) = nbr {
                            self.bisect_column(n, e, created);
                        }
                        break;
                    }
                }
            }
        }
    }

    /// Splits `elem` into its two s-halves without closure. Internal; tests
    /// use it to build rule-violating grids for the checker.
    pub(crate) fn s_split_raw(&mut self, elem: u32) -> (u32, u32) {
        let e = &self.elements[elem as usize];
        assert!(e.alive);
        let tri = e.tri;
        let (lo, hi) = e.s.halves();
        self.elements[elem as usize].alive = false;
        let e1 = self.add_element(tri, lo, Some(elem));
        let e2 = self.add_element(tri, hi, Some(elem));
        let col = &mut self.tri_elems[tri as usize];
        let pos = col.iter().position(|&x| x == elem).unwrap();
        col.splice(pos..=pos, [e1, e2]);
        (e1, e2)
    }

    /// Elements over triangles sharing a vertex with `elem`'s triangle whose
    /// s-interval strictly overlaps `elem`'s.
    fn overlapping_neighbours(&self, elem: u32) -> Vec<u32> {
        let e = &self.elements[elem as usize];
        let verts = self.tris[e.tri as usize].verts;
        let mut tris: Vec<u32> = verts
            .iter()
            .flat_map(|&v| self.vertex_tris[v as usize].iter().copied())
            .filter(|&t| t != e.tri)
            .collect();
        tris.sort_unstable();
        tris.dedup();
        let mut out = Vec::new();
        for t in tris {
            for &other in &self.tri_elems[t as usize] {
                if self.elements[other as usize].s.strictly_overlaps(&e.s) {
                    out.push(other);
                }
            }
        }
        out
    }

    /// s-refinement of one element with closure: neighbours more than twice
    /// as tall as a freshly created element are split until the half-edge
    /// rule holds again. Returns the ids of all created elements that are
    /// still alive when the closure finishes.
    pub fn s_refine(&mut self, elem: u32) -> Result<Vec<u32>, GridError> {
        if !self.elements[elem as usize].alive {
            return Err(GridError::DeadElement(elem));
        }
        let mut created = Vec::new();
        let mut stack = vec![elem];
        while let Some(e) = stack.pop() {
            if !self.elements[e as usize].alive {
                continue;
            }
            let (c1, c2) = self.s_split_raw(e);
            created.push(c1);
            created.push(c2);
            for c in [c1, c2] {
                let hc = self.elements[c as usize].s.lev;
                for nbr in self.overlapping_neighbours(c) {
                    let hn = self.elements[nbr as usize].s.lev;
                    // smaller lev = taller interval
                    if hn + 1 < hc {
                        stack.push(nbr);
                    } else if hc + 1 < hn {
                        stack.push(c);
                    }
                }
            }
        }
        created.retain(|&c| self.elements[c as usize].alive);
        Ok(created)
    }

    /// x-refinement: bisects the longest edge of the element's triangle,
    /// splitting the entire s-column over it, with longest-edge propagation
    /// into neighbouring columns so that no x-hanging node remains.
    pub fn x_refine(&mut self, elem: u32) -> Result<Vec<u32>, GridError> {
        if !self.elements[elem as usize].alive {
            return Err(GridError::DeadElement(elem));
        }
        let tri = self.elements[elem as usize].tri;
        let mut created = Vec::new();
        self.lepp_refine(tri, &mut created);
        created.retain(|&c| self.elements[c as usize].alive);
        Ok(created)
    }

    /// One uniform x-bisection sweep over all triangles.
    pub fn refine_all_x(&mut self) {
        let snapshot: Vec<u32> = self.active_tris().collect();
        let mut created = Vec::new();
        for t in snapshot {
            if self.tris[t as usize].alive {
                self.lepp_refine(t, &mut created);
            }
        }
    }

    /// One uniform s-bisection sweep over all elements.
    pub fn refine_all_s(&mut self) {
        let snapshot: Vec<u32> = self.active_elements().map(|(i, _)| i).collect();
        for e in snapshot {
            if self.elements[e as usize].alive {
                self.s_refine(e).unwrap();
            }
        }
    }

    /// Walks parent links from `id` to the nearest ancestor alive in
    /// `ancestor_grid`.
    pub fn ancestor_in(&self, id: u32, ancestor_grid: &PrismGrid) -> Option<u32> {
        let mut cur = id;
        loop {
            if (cur as usize) < ancestor_grid.elements.len()
                && ancestor_grid.elements[cur as usize].alive
            {
                return Some(cur);
            }
            cur = self.elements[cur as usize].parent?;
        }
    }

    /// Checks that `self` was obtained from `old` by refinement only.
    pub fn refines(&self, old: &PrismGrid) -> bool {
        if self.elements.len() < old.elements.len() {
            return false;
        }
        old.elements.iter().zip(self.elements.iter()).all(|(a, b)| a.s == b.s)
            && old.x_nodes.len() <= self.x_nodes.len()
    }

    /// Verifies the grid invariants; the report lists each violation.
    pub fn check_semi_regular(&self) -> GridReport {
        let mut report = GridReport::default();

        // per-column partitions must tile [0, M]
        for t in self.active_tris() {
            let col = &self.tri_elems[t as usize];
            if col.is_empty() {
                report.violations.push(format!("triangle {t} has no elements"));
                continue;
            }
            let first = &self.elements[col[0] as usize];
            let last = &self.elements[*col.last().unwrap() as usize];
            if first.s.lo() != SKey::ZERO || last.s.hi() != SKey::ONE {
                report
                    .violations
                    .push(format!("column over triangle {t} does not span [0, M]"));
            }
            for w in col.windows(2) {
                let a = &self.elements[w[0] as usize];
                let b = &self.elements[w[1] as usize];
                if a.s.hi() != b.s.lo() {
                    report.violations.push(format!(
                        "column over triangle {t}: elements {} and {} do not tile",
                        w[0], w[1]
                    ));
                }
            }
        }

        // total volume
        let vol: f64 = self
            .active_elements()
            .map(|(_, e)| self.tri_area(e.tri) * e.s.height_fraction() * self.lift_height)
            .sum();
        let expect = self.domain.area() * self.lift_height;
        if (vol - expect).abs() > 1e-10 * expect.max(1.0) {
            report
                .violations
                .push(format!("volume {vol} differs from {expect}"));
        }

        // 2D conformity: interior edges have two triangles, boundary edges one
        for (&(a, b), tris) in &self.edge_tris {
            if tris.is_empty() {
                continue;
            }
            let pa = self.x_nodes[a as usize];
            let pb = self.x_nodes[b as usize];
            let mid = self.domain.snap_to_boundary(geom::midpoint(pa, pb));
            let on_bnd = self.domain.on_boundary(pa)
                && self.domain.on_boundary(pb)
                && self.domain.on_boundary(mid);
            match tris.len() {
                1 if !on_bnd => report.violations.push(format!(
                    "interior edge ({a}, {b}) has one triangle: x-hanging node"
                )),
                1 | 2 => {}
                n => report
                    .violations
                    .push(format!("edge ({a}, {b}) has {n} triangles")),
            }
        }

        // half-edge rule on all strictly overlapping vertex-incident pairs
        for v in 0..self.x_nodes.len() as u32 {
            let tris = &self.vertex_tris[v as usize];
            for (i, &t1) in tris.iter().enumerate() {
                for &t2 in &tris[i + 1..] {
                    for &e1 in &self.tri_elems[t1 as usize] {
                        for &e2 in &self.tri_elems[t2 as usize] {
                            let s1 = self.elements[e1 as usize].s;
                            let s2 = self.elements[e2 as usize].s;
                            if s1.strictly_overlaps(&s2) && !s1.half_edge_compatible(&s2) {
                                report.violations.push(format!(
                                    "half-edge rule violated by elements {e1} and {e2}"
                                ));
                            }
                        }
                    }
                }
            }
        }
        report.violations.sort();
        report.violations.dedup();
        report
    }

    /// Minimum interior angle over all active triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut best = f64::INFINITY;
        for t in self.active_tris() {
            let p = self.tri_points(t);
            for i in 0..3 {
                let a = geom::sub(p[(i + 1) % 3], p[i]);
                let b = geom::sub(p[(i + 2) % 3], p[i]);
                let cosang = (a[0] * b[0] + a[1] * b[1])
                    / ((a[0] * a[0] + a[1] * a[1]).sqrt() * (b[0] * b[0] + b[1] * b[1]).sqrt());
                best = best.min(cosang.clamp(-1.0, 1.0).acos());
            }
        }
        best
    }

    /// Longest edge among the most refined triangles (the finest local mesh
    /// width).
    pub fn finest_h(&self) -> f64 {
        let max_level = self.active_tris().map(|t| self.tris[t as usize].level).max().unwrap_or(0);
        self.active_tris()
            .filter(|&t| self.tris[t as usize].level == max_level)
            .map(|t| {
                let e = self.longest_edge(t);
                geom::dist(self.x_nodes[e.0 as usize], self.x_nodes[e.1 as usize])
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Legacy-VTK ASCII dump with wedge cells. Points are emitted per
    /// element corner (six per cell: bottom triangle then top triangle, in
    /// column vertex order), so no connectivity dedup is performed.
    pub fn write_vtk<W: std::io::Write>(
        &self,
        w: &mut W,
        cell_data: &[(&str, &[f64])],
    ) -> std::io::Result<()> {
        let cells: Vec<(u32, &PrismElement)> = self.active_elements().collect();
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(
            w,
            "prism grid; wedge points ordered bottom(v0 v1 v2) top(v0 v1 v2) per element"
        )?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {} double", cells.len() * 6)?;
        for (_, e) in &cells {
            let pts = self.tri_points(e.tri);
            let (lo, hi) = (e.s.lo().value(self.lift_height), e.s.hi().value(self.lift_height));
            for s in [lo, hi] {
                for p in pts {
                    writeln!(w, "{} {} {}", p[0], p[1], s)?;
                }
            }
        }
        writeln!(w, "CELLS {} {}", cells.len(), cells.len() * 7)?;
        for i in 0..cells.len() {
            let b = 6 * i;
            writeln!(w, "6 {} {} {} {} {} {}", b, b + 1, b + 2, b + 3, b + 4, b + 5)?;
        }
        writeln!(w, "CELL_TYPES {}", cells.len())?;
        for _ in 0..cells.len() {
            writeln!(w, "13")?;
        }
        if !cell_data.is_empty() {
            writeln!(w, "CELL_DATA {}", cells.len())?;
            for (name, data) in cell_data {
                writeln!(w, "SCALARS {name} double 1")?;
                writeln!(w, "LOOKUP_TABLE default")?;
                for (id, _) in &cells {
                    writeln!(w, "{}", data.get(*id as usize).copied().unwrap_or(0.0))?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default, Clone)]
pub struct GridReport {
    pub violations: Vec<String>,
}

impl GridReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// One x-node's column: the ascending s-breakpoints of its non-hanging
/// nodes. Hanging values visible at the node from finer neighbouring
/// columns are slaved to the breakpoint below and do not appear here.
#[derive(Debug, Clone)]
pub struct Column {
    pub x_node: usize,
    pub keys: Vec<SKey>,
    pub breaks: Vec<f64>,
    pub heights: Vec<f64>,
    pub linear_base: usize,
    pub layered_base: usize,
    pub on_boundary: bool,
}

impl Column {
    pub fn interval_count(&self) -> usize {
        self.heights.len()
    }
}

/// Node bookkeeping for the two finite-element spaces: one degree of freedom
/// per non-hanging node for the continuous piecewise-linear space, and one
/// per non-hanging node below the top face for the layered space.
#[derive(Debug, Clone)]
pub struct NodeLayout {
    pub lift_height: f64,
    pub columns: Vec<Column>,
    pub linear_dof_count: usize,
    pub layered_dof_count: usize,
    /// Count of all distinct element-corner nodes, hanging ones included.
    pub node_count: usize,
    /// Active triangles incident to each x-node.
    pub incident_tris: Vec<Vec<u32>>,
}

impl NodeLayout {
    pub fn build(grid: &PrismGrid) -> Self {
        let nv = grid.x_node_count();
        let mut tri_breaks: HashMap<u32, Vec<SKey>> = HashMap::new();
        for t in grid.active_tris() {
            let mut keys: Vec<SKey> = grid
                .column_elements(t)
                .iter()
                .map(|&e| grid.element(e).s.lo())
                .collect();
            keys.push(SKey::ONE);
            tri_breaks.insert(t, keys);
        }

        let mut columns = Vec::with_capacity(nv);
        let mut incident_all = Vec::with_capacity(nv);
        let mut node_count = 0usize;
        let (mut lin, mut lay) = (0usize, 0usize);
        for v in 0..nv {
            let incident: Vec<u32> = grid.tris_at_vertex(v as u32).to_vec();
            assert!(!incident.is_empty(), "x-node {v} has no active triangle");
            // non-hanging breakpoints: present in every incident column
            let mut keys: Vec<SKey> = tri_breaks[&incident[0]].clone();
            for t in &incident[1..] {
                let other = &tri_breaks[t];
                keys.retain(|k| other.binary_search(k).is_ok());
            }
            // all corner values occurring at this node (for node counting)
            let mut union: Vec<SKey> = incident
                .iter()
                .flat_map(|t| tri_breaks[t].iter().copied())
                .collect();
            union.sort();
            union.dedup();
            node_count += union.len();

            let breaks: Vec<f64> = keys.iter().map(|k| k.value(grid.lift_height)).collect();
            let heights: Vec<f64> = breaks.windows(2).map(|w| w[1] - w[0]).collect();
            let col = Column {
                x_node: v,
                linear_base: lin,
                layered_base: lay,
                on_boundary: grid.domain.on_boundary(grid.x_node(v)),
                keys,
                breaks,
                heights,
            };
            lin += col.keys.len();
            lay += col.keys.len() - 1;
            columns.push(col);
            incident_all.push(incident);
        }
        NodeLayout {
            lift_height: grid.lift_height,
            columns,
            linear_dof_count: lin,
            layered_dof_count: lay,
            node_count,
            incident_tris: incident_all,
        }
    }

    #[inline]
    pub fn layered_dof(&self, v: usize, k: usize) -> usize {
        debug_assert!(k + 1 < self.columns[v].keys.len());
        self.columns[v].layered_base + k
    }

    #[inline]
    pub fn linear_dof(&self, v: usize, k: usize) -> usize {
        self.columns[v].linear_base + k
    }

    /// Index of the greatest column breakpoint `<= key` (the governing
    /// degree of freedom for layered values, hanging ones included).
    pub fn floor_index(&self, v: usize, key: SKey) -> usize {
        let keys = &self.columns[v].keys;
        match keys.binary_search(&key) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    /// Interpolation targets for the continuous space at `(v, key)`:
    /// `(dof, weight)` pairs; a single pair when the node is not hanging.
    pub fn linear_weights(&self, v: usize, key: SKey) -> Vec<(usize, f64)> {
        let col = &self.columns[v];
        match col.keys.binary_search(&key) {
            Ok(i) => vec![(col.linear_base + i, 1.0)],
            Err(i) => {
                let s = key.value(self.lift_height);
                let (lo, hi) = (col.breaks[i - 1], col.breaks[i]);
                let w = (s - lo) / (hi - lo);
                vec![(col.linear_base + i - 1, 1.0 - w), (col.linear_base + i, w)]
            }
        }
    }

    /// Layered value of a coefficient vector at node `(v, key)` with
    /// hanging-node slaving.
    #[inline]
    pub fn layered_value(&self, coeffs: &[f64], v: usize, key: SKey) -> f64 {
        coeffs[self.columns[v].layered_base + self.floor_index(v, key)]
    }

    /// Continuous-space value at `(v, key)` with hanging-node slaving.
    #[inline]
    pub fn linear_value(&self, coeffs: &[f64], v: usize, key: SKey) -> f64 {
        self.linear_weights(v, key)
            .iter()
            .map(|&(d, w)| coeffs[d] * w)
            .sum()
    }
}

/// Uniform-bucket point locator over the active triangles.
pub struct TriLocator<'g> {
    grid: &'g PrismGrid,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl<'g> TriLocator<'g> {
    pub fn new(grid: &'g PrismGrid) -> Self {
        let n = (grid.active_tris().count() as f64).sqrt().ceil() as usize;
        let (nx, ny) = (n.clamp(4, 128), n.clamp(4, 128));
        let (w, h) = grid.domain.size();
        let mut buckets = vec![Vec::new(); nx * ny];
        for t in grid.active_tris() {
            let p = grid.tri_points(t);
            let (x0, x1) = p.iter().fold((f64::MAX, f64::MIN), |(lo, hi), q| (lo.min(q[0]), hi.max(q[0])));
            let (y0, y1) = p.iter().fold((f64::MAX, f64::MIN), |(lo, hi), q| (lo.min(q[1]), hi.max(q[1])));
            let i0 = ((x0 / w * nx as f64).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let i1 = ((x1 / w * nx as f64).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let j0 = ((y0 / h * ny as f64).floor() as isize).clamp(0, ny as isize - 1) as usize;
            let j1 = ((y1 / h * ny as f64).floor() as isize).clamp(0, ny as isize - 1) as usize;
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        TriLocator { grid, nx, ny, buckets }
    }

    pub fn locate(&self, p: Point2) -> Option<u32> {
        let (w, h) = self.grid.domain.size();
        let i = ((p[0] / w * self.nx as f64).floor() as isize).clamp(0, self.nx as isize - 1) as usize;
        let j = ((p[1] / h * self.ny as f64).floor() as isize).clamp(0, self.ny as isize - 1) as usize;
        for &t in &self.buckets[j * self.nx + i] {
            let q = self.grid.tri_points(t);
            if geom::point_in_triangle(p, q[0], q[1], q[2], 1e-12) {
                return Some(t);
            }
        }
        // fall back to a full scan for points on bucket borders
        self.grid.active_tris().find(|&t| {
            let q = self.grid.tri_points(t);
            geom::point_in_triangle(p, q[0], q[1], q[2], 1e-9)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn unit_grid(x: u32, s: u32) -> PrismGrid {
        PrismGrid::uniform(Domain::unit_square(), 1.0, x, s)
    }

    #[test]
    fn base_grid_counts() {
        let g = unit_grid(0, 0);
        assert_eq!(g.active_element_count(), 2);
        let layout = NodeLayout::build(&g);
        assert_eq!(layout.node_count, 8);
        assert!(g.check_semi_regular().passed());
    }

    #[test]
    fn uniform_level_counts() {
        let g = unit_grid(4, 2);
        let tris = g.active_tris().count();
        assert_eq!(tris, 2 * 2usize.pow(4));
        assert_eq!(g.active_element_count(), 32 * 4);
        assert!(g.check_semi_regular().passed());
    }

    #[test]
    fn s_refine_uniform_no_closure() {
        let mut g = unit_grid(2, 1);
        let el = g.active_elements().next().unwrap().0;
        let created = g.s_refine(el).unwrap();
        assert_eq!(created.len(), 2);
        assert!(g.check_semi_regular().passed());
    }

    #[test]
    fn s_refine_closure_chases_tall_neighbours() {
        let mut g = unit_grid(1, 0);
        let el = g.active_elements().next().unwrap().0;
        let c1 = g.s_refine(el).unwrap();
        assert_eq!(c1.len(), 2, "height ratio 2 is legal, no closure yet");
        // second split makes quarter-height children next to full-height
        // neighbours, which must now be split as closure
        let created = g.s_refine(c1[0]).unwrap();
        assert!(created.len() > 2, "closure must refine tall neighbours");
        assert!(g.check_semi_regular().passed());
    }

    #[test]
    fn repeated_refinement_stays_semi_regular() {
        let mut g = unit_grid(2, 1);
        let mut el = g.active_elements().next().unwrap().0;
        for _ in 0..3 {
            let created = g.s_refine(el).unwrap();
            assert!(g.check_semi_regular().passed());
            el = created[0];
        }
    }

    #[test]
    fn x_refine_base_splits_both_columns() {
        let mut g = unit_grid(0, 0);
        let el = g.active_elements().next().unwrap().0;
        let created = g.x_refine(el).unwrap();
        // the diagonal is the longest edge of both triangles
        assert_eq!(created.len(), 4);
        assert_eq!(g.active_tris().count(), 4);
        assert!(g.check_semi_regular().passed());
    }

    #[test]
    fn x_refine_splits_whole_column() {
        let mut g = unit_grid(0, 2);
        let el = g.active_elements().next().unwrap().0;
        let tri = g.element(el).tri;
        let created = g.x_refine(el).unwrap();
        let from_this_column = created
            .iter()
            .filter(|&&c| {
                let mut cur = c;
                loop {
                    match g.element(cur).parent {
                        Some(p) => {
                            if g.element(p).tri == tri {
                                return true;
                            }
                            cur = p;
                        }
                        None => return false,
                    }
                }
            })
            .count();
        assert_eq!(from_this_column, 8);
        assert!(g.check_semi_regular().passed());
    }

    #[test]
    fn checker_rejects_quarter_height_neighbour() {
        let mut g = unit_grid(1, 0);
        let el = g.active_elements().next().unwrap().0;
        let (a, _) = g.s_split_raw(el);
        let _ = g.s_split_raw(a);
        let report = g.check_semi_regular();
        assert!(!report.passed());
        assert!(report.violations.iter().any(|v| v.contains("half-edge")));
    }

    #[test]
    fn random_refinements_stress() {
        let mut rng = StdRng::seed_from_u64(7);
        let mut g = unit_grid(2, 1);
        let base_angle = g.min_angle();
        for step in 0..50 {
            let ids: Vec<u32> = g.active_elements().map(|(i, _)| i).collect();
            let id = ids[rng.gen_range(0..ids.len())];
            let before = g.active_element_count();
            if rng.gen_bool(0.5) {
                g.s_refine(id).unwrap();
            } else {
                g.x_refine(id).unwrap();
            }
            assert!(g.active_element_count() > before, "count must grow");
            let report = g.check_semi_regular();
            assert!(report.passed(), "step {step}: {:?}", report.violations);
        }
        assert!(g.min_angle() >= base_angle - 1e-9, "bisection keeps angles bounded");
    }

    #[test]
    fn columns_on_uniform_grid() {
        let g = unit_grid(1, 2);
        let layout = NodeLayout::build(&g);
        for col in &layout.columns {
            assert_eq!(col.breaks, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
            let total: f64 = col.heights.iter().sum();
            assert!((total - 1.0).abs() < 1e-15);
        }
        // top nodes carry linear dofs but no layered dof
        assert_eq!(
            layout.linear_dof_count - layout.layered_dof_count,
            g.x_node_count()
        );
    }

    #[test]
    fn hanging_breakpoints_stay_out_of_columns() {
        let mut g = unit_grid(1, 1);
        let el = g.active_elements().next().unwrap().0;
        let tri = g.element(el).tri;
        let verts = g.tri_verts(tri);
        g.s_refine(el).unwrap();
        let layout = NodeLayout::build(&g);
        // the midpoint value hangs on every neighbouring coarse column, so
        // the column keeps its old breakpoints wherever any incident
        // triangle is unrefined
        for v in verts {
            let col = &layout.columns[v as usize];
            let fully_refined = layout.incident_tris[v as usize]
                .iter()
                .all(|&t| g.column_elements(t).len() > 2);
            if !fully_refined {
                assert_eq!(col.breaks, vec![0.0, 0.5, 1.0]);
            }
        }
        // but the hanging node is still counted as a grid node
        let coarse = NodeLayout::build(&unit_grid(1, 1));
        assert!(layout.node_count > coarse.node_count);
    }

    #[test]
    fn column_heights_partition_lift_interval() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut g = PrismGrid::uniform(Domain::unit_square(), 2.0, 2, 1);
        for _ in 0..20 {
            let ids: Vec<u32> = g.active_elements().map(|(i, _)| i).collect();
            let id = ids[rng.gen_range(0..ids.len())];
            if rng.gen_bool(0.6) {
                g.s_refine(id).unwrap();
            } else {
                g.x_refine(id).unwrap();
            }
        }
        let layout = NodeLayout::build(&g);
        for col in &layout.columns {
            let total: f64 = col.heights.iter().sum();
            assert!((total - 2.0).abs() < 1e-12);
            assert!(col.heights.iter().all(|&h| h > 0.0));
            assert_eq!(col.breaks[0], 0.0);
            assert_eq!(*col.breaks.last().unwrap(), 2.0);
        }
    }

    #[test]
    fn vtk_dump_smoke() {
        let g = unit_grid(1, 1);
        let mut buf = Vec::new();
        let ones = vec![1.0; g.element_slot_count()];
        g.write_vtk(&mut buf, &[("marker", &ones)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("DATASET UNSTRUCTURED_GRID"));
        assert!(text.contains("13"));
    }
}
