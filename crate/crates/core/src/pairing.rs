//! Finite-element spaces and the exact primal/dual pairing.
//!
//! The primal variable and the two horizontal dual components live in the
//! layered space (piecewise linear in x, piecewise constant in s, fixed by
//! values at non-hanging nodes below the top face). The vertical dual
//! component lives in the continuous wedge space (values at all non-hanging
//! nodes). The pairing integrates the dual field against the derivative
//! measure of the primal: an absolutely continuous x-gradient part per prism
//! plus jump terms on horizontal faces, with the primal extended by 1 below
//! the bottom face and the top face dropped.

use crate::boundary::BoundaryData;
use crate::geom;
use crate::grid::{GridError, NodeLayout, PrismGrid, SKey};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PairingError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, Default)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(u32, u32, f64)>) -> Self {
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut cur_row = 0usize;
        for (r, c, v) in t {
            let r = r as usize;
            while cur_row < r {
                cur_row += 1;
                row_ptr[cur_row] = cols.len();
            }
            if cols.len() > row_ptr[r] && *cols.last().unwrap() == c {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
            }
        }
        while cur_row < nrows {
            cur_row += 1;
            row_ptr[cur_row] = cols.len();
        }
        Csr { nrows, ncols, row_ptr, cols, vals }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[i] * x[self.cols[i] as usize];
            }
            y[r] = acc;
        }
    }

    pub fn apply_add_transpose(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.cols[i] as usize] += self.vals[i] * xr;
            }
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }
}

/// Coefficient vectors of the discrete primal and dual fields on one grid.
#[derive(Debug, Clone)]
pub struct DiscreteState {
    pub primal: Vec<f64>,
    pub primal_bar: Vec<f64>,
    pub dual_x: Vec<f64>,
    pub dual_y: Vec<f64>,
    pub dual_s: Vec<f64>,
}

impl DiscreteState {
    pub fn zeros_like(other: &DiscreteState) -> Self {
        DiscreteState {
            primal: vec![0.0; other.primal.len()],
            primal_bar: vec![0.0; other.primal.len()],
            dual_x: vec![0.0; other.dual_x.len()],
            dual_y: vec![0.0; other.dual_y.len()],
            dual_s: vec![0.0; other.dual_s.len()],
        }
    }

    pub fn zeros(layout: &NodeLayout) -> Self {
        DiscreteState {
            primal: vec![0.0; layout.layered_dof_count],
            primal_bar: vec![0.0; layout.layered_dof_count],
            dual_x: vec![0.0; layout.layered_dof_count],
            dual_y: vec![0.0; layout.layered_dof_count],
            dual_s: vec![0.0; layout.linear_dof_count],
        }
    }

    /// Binary initial guess: the indicator of the boundary image extended
    /// into the interior by nearest boundary point.
    pub fn from_boundary_guess(grid: &PrismGrid, layout: &NodeLayout, data: &BoundaryData) -> Self {
        let mut st = Self::zeros(layout);
        for col in &layout.columns {
            let u = data.nearest_point_extension(grid.x_node(col.x_node));
            for k in 0..col.interval_count() {
                st.primal[col.layered_base + k] = if u > col.breaks[k] { 1.0 } else { 0.0 };
            }
        }
        st.primal_bar = st.primal.clone();
        st
    }

    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "field,index,value")?;
        let fields: [(&str, &[f64]); 4] = [
            ("primal", &self.primal),
            ("dual_x", &self.dual_x),
            ("dual_y", &self.dual_y),
            ("dual_s", &self.dual_s),
        ];
        for (name, v) in fields {
            for (i, x) in v.iter().enumerate() {
                writeln!(w, "{name},{i},{x:.17e}")?;
            }
        }
        Ok(())
    }
}

/// Sparse blocks of the pairing `B(V, Phi)` together with the bottom load
/// carrying the constant extension below the bottom face.
#[derive(Debug, Clone)]
pub struct PairingOperator {
    pub grad_x: Csr,
    pub grad_y: Csr,
    pub jump_s: Csr,
    pub bottom_load: Vec<f64>,
    /// Frobenius norm of the combined block matrix; the primal-dual step
    /// sizes are its reciprocal.
    pub frobenius: f64,
}

/// Assembles the pairing on a semi-regular grid. Hanging-node values are
/// slaved at assembly time, so the matrices act directly on non-hanging
/// coefficients.
pub fn assemble(
    grid: &PrismGrid,
    layout: &NodeLayout,
    _data: &BoundaryData,
) -> Result<PairingOperator, GridError> {
    let report = grid.check_semi_regular();
    if !report.passed() {
        return Err(GridError::NotSemiRegular(report.violations.join("; ")));
    }
    let q2 = layout.layered_dof_count;
    let q1 = layout.linear_dof_count;
    let mut tx: Vec<(u32, u32, f64)> = Vec::new();
    let mut ty: Vec<(u32, u32, f64)> = Vec::new();
    let mut ts: Vec<(u32, u32, f64)> = Vec::new();
    let mut load = vec![0.0; q1];

    for tri in grid.active_tris() {
        let verts = grid.tri_verts(tri);
        let pts = grid.tri_points(tri);
        let area = geom::signed_area(pts[0], pts[1], pts[2]).abs();
        let grads = geom::hat_gradients(pts[0], pts[1], pts[2]);

        // x-gradient blocks, one prism at a time
        for &el in grid.column_elements(tri) {
            let e = grid.element(el);
            let h = e.s.height_fraction() * grid.lift_height;
            let lo = e.s.lo();
            let dof: Vec<usize> = verts
                .iter()
                .map(|&v| layout.layered_dof(v as usize, layout.floor_index(v as usize, lo)))
                .collect();
            for i in 0..3 {
                let wx = h * area / 3.0 * grads[i][0];
                let wy = h * area / 3.0 * grads[i][1];
                for &dj in dof.iter() {
                    tx.push((dof[i] as u32, dj as u32, wx));
                    ty.push((dof[i] as u32, dj as u32, wy));
                }
            }
        }

        // horizontal-face jump terms: every element contributes its own
        // bottom face; the top face at s = M is dropped
        let column = grid.column_elements(tri);
        for (k, &el) in column.iter().enumerate() {
            let e = grid.element(el);
            let face = e.s.lo();
            let above: Vec<usize> = verts
                .iter()
                .map(|&v| layout.layered_dof(v as usize, layout.floor_index(v as usize, face)))
                .collect();
            let below: Option<Vec<usize>> = if k == 0 {
                None
            } else {
                let b = grid.element(column[k - 1]);
                Some(
                    verts
                        .iter()
                        .map(|&v| {
                            layout.layered_dof(v as usize, layout.floor_index(v as usize, b.s.lo()))
                        })
                        .collect(),
                )
            };
            for i in 0..3 {
                let targets = layout.linear_weights(verts[i] as usize, face);
                for j in 0..3 {
                    let wij = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                    for &(lin, lw) in &targets {
                        ts.push((above[j] as u32, lin as u32, wij * lw));
                        match &below {
                            Some(b) => ts.push((b[j] as u32, lin as u32, -wij * lw)),
                            None => load[lin] -= wij * lw,
                        }
                    }
                }
            }
        }
    }

    let grad_x = Csr::from_triplets(q2, q2, tx);
    let grad_y = Csr::from_triplets(q2, q2, ty);
    let jump_s = Csr::from_triplets(q2, q1, ts);
    let frobenius =
        (grad_x.frobenius_sq() + grad_y.frobenius_sq() + jump_s.frobenius_sq()).sqrt();
    Ok(PairingOperator { grad_x, grad_y, jump_s, bottom_load: load, frobenius })
}

impl PairingOperator {
    /// Adjoint application: the dual-space gradient of the pairing at `v`,
    /// including the bottom load.
    pub fn apply_primal_to_dual(&self, v: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), PairingError> {
        if v.len() != self.grad_x.nrows {
            return Err(PairingError::DimensionMismatch { expected: self.grad_x.nrows, got: v.len() });
        }
        let mut gx = vec![0.0; self.grad_x.ncols];
        let mut gy = vec![0.0; self.grad_y.ncols];
        let mut gs = self.bottom_load.clone();
        self.grad_x.apply_add_transpose(v, &mut gx);
        self.grad_y.apply_add_transpose(v, &mut gy);
        self.jump_s.apply_add_transpose(v, &mut gs);
        Ok((gx, gy, gs))
    }

    /// Forward application: the primal-space gradient of the pairing at `phi`.
    pub fn apply_dual_to_primal(
        &self,
        phi_x: &[f64],
        phi_y: &[f64],
        phi_s: &[f64],
    ) -> Result<Vec<f64>, PairingError> {
        if phi_x.len() != self.grad_x.ncols || phi_s.len() != self.jump_s.ncols {
            return Err(PairingError::DimensionMismatch {
                expected: self.grad_x.ncols,
                got: phi_x.len(),
            });
        }
        let mut out = vec![0.0; self.grad_x.nrows];
        let mut tmp = vec![0.0; self.grad_x.nrows];
        self.grad_x.apply(phi_x, &mut out);
        self.grad_y.apply(phi_y, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
        self.jump_s.apply(phi_s, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
        Ok(out)
    }

    /// The pairing value `B(V, Phi)`.
    pub fn pairing_value(&self, state: &DiscreteState) -> f64 {
        let forward = self
            .apply_dual_to_primal(&state.dual_x, &state.dual_y, &state.dual_s)
            .expect("state dimensions match operator");
        let vm: f64 = state.primal.iter().zip(&forward).map(|(a, b)| a * b).sum();
        let cl: f64 = self.bottom_load.iter().zip(&state.dual_s).map(|(a, b)| a * b).sum();
        vm + cl
    }

    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "block,row,col,value")?;
        for (name, m) in [("grad_x", &self.grad_x), ("grad_y", &self.grad_y), ("jump_s", &self.jump_s)] {
            for r in 0..m.nrows {
                for i in m.row_ptr[r]..m.row_ptr[r + 1] {
                    writeln!(w, "{name},{r},{},{:.17e}", m.cols[i], m.vals[i])?;
                }
            }
        }
        for (i, v) in self.bottom_load.iter().enumerate() {
            writeln!(w, "bottom_load,{i},0,{v:.17e}")?;
        }
        Ok(())
    }
}

/// Transfers a state to a refined grid by evaluating the old finite-element
/// functions at the new nodes. Old-grid functions are reproduced exactly
/// because refinement nests the spaces.
pub fn prolongate(
    old_grid: &PrismGrid,
    old_layout: &NodeLayout,
    state: &DiscreteState,
    new_grid: &PrismGrid,
    new_layout: &NodeLayout,
) -> Result<DiscreteState, GridError> {
    if !new_grid.refines(old_grid) {
        return Err(GridError::UnrelatedGrids);
    }
    let mut out = DiscreteState::zeros(new_layout);
    for col in &new_layout.columns {
        let v = col.x_node;
        let pos = new_grid.x_node(v);
        for (k, &key) in col.keys.iter().enumerate() {
            let top = k + 1 == col.keys.len();
            // a new element at this x-node whose s-interval covers the node
            let elem = find_covering_element(new_grid, new_layout, v, key, top);
            let anc = new_grid
                .ancestor_in(elem, old_grid)
                .ok_or(GridError::UnrelatedGrids)?;
            let e_old = old_grid.element(anc);
            let overts = old_grid.tri_verts(e_old.tri);
            let opts = old_grid.tri_points(e_old.tri);
            let lam = geom::barycentric(pos, opts[0], opts[1], opts[2]);
            if !top {
                let lo = e_old.s.lo();
                let (mut pv, mut dx, mut dy) = (0.0, 0.0, 0.0);
                for i in 0..3 {
                    let ov = overts[i] as usize;
                    pv += lam[i] * old_layout.layered_value(&state.primal, ov, lo);
                    dx += lam[i] * old_layout.layered_value(&state.dual_x, ov, lo);
                    dy += lam[i] * old_layout.layered_value(&state.dual_y, ov, lo);
                }
                let dof = col.layered_base + k;
                out.primal[dof] = pv;
                out.dual_x[dof] = dx;
                out.dual_y[dof] = dy;
            }
            // wedge interpolation for the vertical component
            let s = key.value(new_layout.lift_height);
            let (lo_f, hi_f) = (
                e_old.s.lo().value(old_layout.lift_height),
                e_old.s.hi().value(old_layout.lift_height),
            );
            let mu = ((s - lo_f) / (hi_f - lo_f)).clamp(0.0, 1.0);
            let mut ds = 0.0;
            for i in 0..3 {
                let ov = overts[i] as usize;
                let bot = old_layout.linear_value(&state.dual_s, ov, e_old.s.lo());
                let top_v = old_layout.linear_value(&state.dual_s, ov, e_old.s.hi());
                ds += lam[i] * ((1.0 - mu) * bot + mu * top_v);
            }
            out.dual_s[col.linear_base + k] = ds;
        }
    }
    out.primal_bar = out.primal.clone();
    Ok(out)
}

/// An active element over a triangle incident to `v` whose closed s-interval
/// contains the node `(v, key)`; for `top` the topmost element is returned.
fn find_covering_element(
    grid: &PrismGrid,
    layout: &NodeLayout,
    v: usize,
    key: SKey,
    top: bool,
) -> u32 {
    let tri = layout.incident_tris[v][0];
    let column = grid.column_elements(tri);
    if top {
        return *column.last().unwrap();
    }
    for &el in column {
        let e = grid.element(el);
        if e.s.lo() <= key && key < e.s.hi() {
            return el;
        }
    }
    unreachable!("column breakpoints always lie in some element interval")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{BoundaryAtom, BoundaryData, Domain};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn line_data() -> BoundaryData {
        BoundaryData::build(
            Domain::unit_square(),
            vec![BoundaryAtom::source(2.5, 1.0), BoundaryAtom::sink(0.5, 1.0)],
        )
        .unwrap()
    }

    fn random_state(layout: &NodeLayout, rng: &mut StdRng) -> DiscreteState {
        let mut st = DiscreteState::zeros(layout);
        for x in st.primal.iter_mut() {
            *x = rng.gen_range(0.0..1.0);
        }
        for x in st.dual_x.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        for x in st.dual_y.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        for x in st.dual_s.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        st.primal_bar = st.primal.clone();
        st
    }

    #[test]
    fn zero_primal_leaves_only_the_load() {
        let grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 1, 1);
        let layout = NodeLayout::build(&grid);
        let op = assemble(&grid, &layout, &line_data()).unwrap();
        let v = vec![0.0; layout.layered_dof_count];
        let (gx, gy, gs) = op.apply_primal_to_dual(&v).unwrap();
        assert!(gx.iter().all(|&x| x == 0.0));
        assert!(gy.iter().all(|&x| x == 0.0));
        assert_eq!(gs, op.bottom_load);
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = StdRng::seed_from_u64(11);
        let mut grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 2, 1);
        // a couple of local refinements so hanging nodes participate
        let ids: Vec<u32> = grid.active_elements().map(|(i, _)| i).collect();
        grid.s_refine(ids[0]).unwrap();
        grid.x_refine(ids[5]).unwrap();
        let layout = NodeLayout::build(&grid);
        let op = assemble(&grid, &layout, &line_data()).unwrap();
        for _ in 0..20 {
            let st = random_state(&layout, &mut rng);
            let (gx, gy, gs) = op.apply_primal_to_dual(&st.primal).unwrap();
            let lhs: f64 = gx.iter().zip(&st.dual_x).map(|(a, b)| a * b).sum::<f64>()
                + gy.iter().zip(&st.dual_y).map(|(a, b)| a * b).sum::<f64>()
                + gs.iter()
                    .zip(&op.bottom_load)
                    .zip(&st.dual_s)
                    .map(|((a, c), b)| (a - c) * b)
                    .sum::<f64>();
            let fwd = op.apply_dual_to_primal(&st.dual_x, &st.dual_y, &st.dual_s).unwrap();
            let rhs: f64 = fwd.iter().zip(&st.primal).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn constant_primal_pairs_to_zero() {
        let mut rng = StdRng::seed_from_u64(3);
        let grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 2, 2);
        let layout = NodeLayout::build(&grid);
        let op = assemble(&grid, &layout, &line_data()).unwrap();
        let mut st = random_state(&layout, &mut rng);
        for x in st.primal.iter_mut() {
            *x = 1.0;
        }
        // constant one matches the bottom extension: every jump term and
        // every gradient term vanishes
        assert!(op.pairing_value(&st).abs() < 1e-12);
    }

    #[test]
    fn x_constant_primal_kills_gradient_blocks() {
        let grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 0, 2);
        let layout = NodeLayout::build(&grid);
        let op = assemble(&grid, &layout, &line_data()).unwrap();
        let mut st = DiscreteState::zeros(&layout);
        // constant in x per layer, varying in s
        for col in &layout.columns {
            for k in 0..col.interval_count() {
                st.primal[col.layered_base + k] = 1.0 / (k + 1) as f64;
            }
        }
        let (gx, gy, _) = op.apply_primal_to_dual(&st.primal).unwrap();
        assert!(gx.iter().all(|&x| x.abs() < 1e-13));
        assert!(gy.iter().all(|&x| x.abs() < 1e-13));
    }

    #[test]
    fn pairing_matches_quadrature_oracle() {
        let mut rng = StdRng::seed_from_u64(42);
        let mut grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 2, 1);
        let ids: Vec<u32> = grid.active_elements().map(|(i, _)| i).collect();
        grid.s_refine(ids[1]).unwrap();
        grid.x_refine(ids[6]).unwrap();
        let layout = NodeLayout::build(&grid);
        let op = assemble(&grid, &layout, &line_data()).unwrap();
        for _ in 0..5 {
            let st = random_state(&layout, &mut rng);
            let fast = op.pairing_value(&st);
            let slow = crate::verify::pairing_quadrature(&grid, &layout, &st);
            assert!(
                (fast - slow).abs() < 1e-10 * (1.0 + fast.abs()),
                "fast {fast} vs quadrature {slow}"
            );
        }
    }

    #[test]
    fn prolongation_reproduces_and_preserves_pairing() {
        let mut rng = StdRng::seed_from_u64(5);
        let grid0 = PrismGrid::uniform(Domain::unit_square(), 1.0, 2, 1);
        let layout0 = NodeLayout::build(&grid0);
        let op0 = assemble(&grid0, &layout0, &line_data()).unwrap();
        let st0 = random_state(&layout0, &mut rng);

        let mut grid1 = grid0.clone();
        let ids: Vec<u32> = grid1.active_elements().map(|(i, _)| i).collect();
        grid1.s_refine(ids[0]).unwrap();
        grid1.x_refine(ids[3]).unwrap();
        grid1.s_refine(*grid1.active_elements().map(|(i, _)| i).collect::<Vec<_>>().last().unwrap()).unwrap();
        let layout1 = NodeLayout::build(&grid1);
        let op1 = assemble(&grid1, &layout1, &line_data()).unwrap();

        let st1 = prolongate(&grid0, &layout0, &st0, &grid1, &layout1).unwrap();
        let b0 = op0.pairing_value(&st0);
        let b1 = op1.pairing_value(&st1);
        assert!((b0 - b1).abs() < 1e-10 * (1.0 + b0.abs()), "{b0} vs {b1}");

        // constant field prolongates to the same constant
        let mut flat = DiscreteState::zeros(&layout0);
        for x in flat.primal.iter_mut() {
            *x = 0.5;
        }
        let flat1 = prolongate(&grid0, &layout0, &flat, &grid1, &layout1).unwrap();
        assert!(flat1.primal.iter().all(|&x| (x - 0.5).abs() < 1e-15));
    }

    #[test]
    fn binary_primal_stays_binary_under_s_refinement() {
        let grid0 = PrismGrid::uniform(Domain::unit_square(), 1.0, 2, 1);
        let layout0 = NodeLayout::build(&grid0);
        let data = line_data();
        let st0 = DiscreteState::from_boundary_guess(&grid0, &layout0, &data);
        let mut grid1 = grid0.clone();
        let ids: Vec<u32> = grid1.active_elements().map(|(i, _)| i).collect();
        for id in ids {
            if grid1.element(id).alive {
                grid1.s_refine(id).unwrap();
            }
        }
        let layout1 = NodeLayout::build(&grid1);
        let st1 = prolongate(&grid0, &layout0, &st0, &grid1, &layout1).unwrap();
        assert!(st1.primal.iter().all(|&x| x == 0.0 || x == 1.0));
    }

    #[test]
    fn unrelated_grids_rejected() {
        let grid0 = PrismGrid::uniform(Domain::unit_square(), 1.0, 2, 1);
        let layout0 = NodeLayout::build(&grid0);
        let grid1 = PrismGrid::uniform(Domain::unit_square(), 1.0, 1, 2);
        let layout1 = NodeLayout::build(&grid1);
        let st = DiscreteState::zeros(&layout0);
        assert!(prolongate(&grid0, &layout0, &st, &grid1, &layout1).is_err());
    }

    #[test]
    fn operator_csv_dump_is_stable() {
        let grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 1, 1);
        let layout = NodeLayout::build(&grid);
        let op = assemble(&grid, &layout, &line_data()).unwrap();
        let mut buf = Vec::new();
        op.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("block,row,col,value"));
        let nnz = op.grad_x.nnz() + op.grad_y.nnz() + op.jump_s.nnz();
        assert_eq!(text.lines().count(), 1 + nnz + op.bottom_load.len());
        assert!(op.frobenius.is_finite() && op.frobenius > 0.0);
    }
}
