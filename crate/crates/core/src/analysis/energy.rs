//! Primal and dual energies of a discrete state and the duality-gap
//! estimate.
//!
//! The primal energy is the supremum of the pairing over the discrete dual
//! set, evaluated per column by projected gradient ascent; the reported
//! value is certified as a lower bound by scaling each column maximizer
//! into its constraint set. The dual energy is the predual objective: the
//! boundary integral of the dual field against the binary trace minus the
//! integral of the positive part of its divergence, both in closed form.

use crate::boundary::BoundaryData;
use crate::constraints::{dykstra_project_column, ColumnConstraintSet};
use crate::geom;
use crate::grid::{NodeLayout, PrismGrid};
use crate::pairing::{DiscreteState, PairingOperator};

#[derive(Debug, Clone, Copy)]
pub struct PrimalEnergy {
    /// Certified lower bound of the supremum.
    pub value: f64,
    /// Set when the primal increases in s beyond tolerance; the true
    /// supremum is then unbounded.
    pub unbounded_flag: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct GapEstimate {
    pub primal: f64,
    pub dual: f64,
    pub unbounded_flag: bool,
}

impl GapEstimate {
    pub fn gap(&self) -> f64 {
        if self.unbounded_flag {
            f64::INFINITY
        } else {
            self.primal - self.dual
        }
    }
}

/// Maximizes the linear functional with the given per-interval gains over
/// one column constraint set. `y` is warm-started in place; the returned
/// value is the certified objective of the best feasible candidate.
pub fn column_linear_max(
    gain: &[[f64; 2]],
    set: &ColumnConstraintSet,
    y: &mut Vec<[f64; 2]>,
    ascent_steps: usize,
    dykstra_tol: f64,
    dykstra_cycles: usize,
) -> f64 {
    let p = gain.len();
    if y.len() != p {
        *y = vec![[0.0, 0.0]; p];
    }
    let gnorm: f64 = gain.iter().map(|g| g[0] * g[0] + g[1] * g[1]).sum::<f64>().sqrt();
    let certify = |cand: &[[f64; 2]]| -> (f64, f64) {
        let ratio = set.max_violation_ratio(cand).max(1.0);
        let val: f64 = cand
            .iter()
            .zip(gain)
            .map(|(a, g)| (a[0] * g[0] + a[1] * g[1]) / ratio)
            .sum();
        (val, ratio)
    };
    let (mut best_val, _) = certify(y);
    if gnorm == 0.0 {
        return best_val.max(0.0);
    }
    let r_max = set
        .constraints
        .iter()
        .map(|c| c.radius)
        .fold(0.0_f64, f64::max);
    let mut eta = r_max.max(1e-12) / gnorm;
    let mut best = y.clone();
    let mut stalls = 0usize;
    for _ in 0..ascent_steps {
        let mut cand: Vec<[f64; 2]> = y
            .iter()
            .zip(gain)
            .map(|(a, g)| [a[0] + eta * g[0], a[1] + eta * g[1]])
            .collect();
        dykstra_project_column(&mut cand, set, dykstra_tol, dykstra_cycles);
        let (val, ratio) = certify(&cand);
        if val > best_val + 1e-14 * (1.0 + best_val.abs()) {
            best_val = val;
            stalls = 0;
            let mut feas = cand.clone();
            if ratio > 1.0 {
                for v in feas.iter_mut() {
                    v[0] /= ratio;
                    v[1] /= ratio;
                }
            }
            best = feas;
        } else {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        }
        *y = cand;
        eta *= 8.0;
    }
    *y = best;
    // the zero field is always feasible
    best_val.max(0.0)
}

/// Certified lower bound of the supremum of the pairing over the discrete
/// dual set at fixed primal. The vertical part contributes zero unless the
/// primal increases in s beyond `monotone_tol`, in which case the result is
/// flagged unbounded.
#[allow(clippy::too_many_arguments)]
pub fn primal_energy(
    state: &DiscreteState,
    op: &PairingOperator,
    layout: &NodeLayout,
    sets: &[ColumnConstraintSet],
    monotone_tol: f64,
    ascent_steps: usize,
    dykstra_tol: f64,
    warm: &mut Vec<Vec<[f64; 2]>>,
) -> PrimalEnergy {
    let (gx, gy, gs) = op
        .apply_primal_to_dual(&state.primal)
        .expect("state matches operator");
    let unbounded_flag = gs.iter().any(|&g| g > monotone_tol);
    if warm.len() != layout.columns.len() {
        *warm = layout
            .columns
            .iter()
            .map(|c| vec![[0.0, 0.0]; c.interval_count()])
            .collect();
    }
    let mut value = 0.0;
    for (col, (set, w)) in layout.columns.iter().zip(sets.iter().zip(warm.iter_mut())) {
        let base = col.layered_base;
        let gain: Vec<[f64; 2]> = (0..col.interval_count())
            .map(|k| [gx[base + k], gy[base + k]])
            .collect();
        value += column_linear_max(&gain, set, w, ascent_steps, dykstra_tol, 60);
    }
    PrimalEnergy { value, unbounded_flag }
}

/// The boundary integral of the predual objective as a linear form in the
/// dual coefficients: the lateral integral of the binary trace against the
/// horizontal flux plus the bottom-face term of the vertical component.
#[derive(Debug, Clone)]
pub struct DualLinearForm {
    pub lx: Vec<f64>,
    pub ly: Vec<f64>,
    pub ls: Vec<f64>,
}

impl DualLinearForm {
    pub fn apply(&self, state: &DiscreteState) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.lx.iter().zip(&state.dual_x) {
            acc += a * b;
        }
        for (a, b) in self.ly.iter().zip(&state.dual_y) {
            acc += a * b;
        }
        for (a, b) in self.ls.iter().zip(&state.dual_s) {
            acc += a * b;
        }
        acc
    }
}

/// The predual objective of the dual field: exact boundary integral against
/// the binary trace minus the integral of the positive divergence part.
pub fn dual_energy(
    state: &DiscreteState,
    grid: &PrismGrid,
    layout: &NodeLayout,
    data: &BoundaryData,
) -> f64 {
    let form = assemble_boundary_form(grid, layout, data);
    dual_energy_with_form(&form, state, grid, layout)
}

/// The predual objective with a prebuilt boundary form.
pub fn dual_energy_with_form(
    form: &DualLinearForm,
    state: &DiscreteState,
    grid: &PrismGrid,
    layout: &NodeLayout,
) -> f64 {
    form.apply(state) - positive_divergence_integral(state, grid, layout)
}

fn outward_normal(domain: &crate::boundary::Domain, a: geom::Point2, b: geom::Point2) -> [f64; 2] {
    let (w, h) = domain.size();
    if a[1] == 0.0 && b[1] == 0.0 {
        [0.0, -1.0]
    } else if a[0] == w && b[0] == w {
        [1.0, 0.0]
    } else if a[1] == h && b[1] == h {
        [0.0, 1.0]
    } else {
        debug_assert!(a[0] == 0.0 && b[0] == 0.0);
        [-1.0, 0.0]
    }
}

/// Assembles the boundary part of the predual objective exactly: per
/// boundary edge and element, the trace is constant between atom positions
/// and the normal flux is affine in arclength; the bottom face pairs the
/// vertical component against the constant extension.
pub fn assemble_boundary_form(
    grid: &PrismGrid,
    layout: &NodeLayout,
    data: &BoundaryData,
) -> DualLinearForm {
    let mut form = DualLinearForm {
        lx: vec![0.0; layout.layered_dof_count],
        ly: vec![0.0; layout.layered_dof_count],
        ls: vec![0.0; layout.linear_dof_count],
    };
    let perim = grid.domain.perimeter();
    for tri in grid.active_tris() {
        let verts = grid.tri_verts(tri);
        for i in 0..3 {
            let (a, b) = (verts[i], verts[(i + 1) % 3]);
            if !grid.is_boundary_edge(a, b) {
                continue;
            }
            let (pa, pb) = (grid.x_node(a as usize), grid.x_node(b as usize));
            let n = outward_normal(&grid.domain, pa, pb);
            let mut ta = grid.domain.arclength_of_point(pa).expect("boundary node");
            let mut tb = grid.domain.arclength_of_point(pb).expect("boundary node");
            let len = geom::dist(pa, pb);
            // corners map to the outgoing side; unwrap across the origin
            if (ta - tb).abs() > perim / 2.0 {
                if ta < tb {
                    ta += perim;
                } else {
                    tb += perim;
                }
            }
            let (t_lo, t_hi) = if ta < tb { (ta, tb) } else { (tb, ta) };
            // split at atom positions so the trace is constant per piece
            let mut cuts = vec![t_lo];
            for &q in data.jump_positions() {
                for q in [q, q + perim] {
                    if q > t_lo + 1e-14 && q < t_hi - 1e-14 {
                        cuts.push(q);
                    }
                }
            }
            cuts.push(t_hi);
            cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());

            for &el in grid.column_elements(tri) {
                let e = grid.element(el);
                let s0 = e.s.lo().value(grid.lift_height);
                let s1 = e.s.hi().value(grid.lift_height);
                let lo = e.s.lo();
                let dof_a = layout.layered_dof(a as usize, layout.floor_index(a as usize, lo));
                let dof_b = layout.layered_dof(b as usize, layout.floor_index(b as usize, lo));
                for w in cuts.windows(2) {
                    let mid = 0.5 * (w[0] + w[1]);
                    let u = data.cumulative(mid % perim);
                    let overlap = (u.min(s1) - s0).max(0.0);
                    if overlap == 0.0 {
                        continue;
                    }
                    // the normal flux is affine in arclength along the edge:
                    // trapezoid weights on the two endpoint coefficients
                    let frac0 = (w[0] - t_lo) / (t_hi - t_lo);
                    let frac1 = (w[1] - t_lo) / (t_hi - t_lo);
                    let mean_far = 0.5 * (frac0 + frac1);
                    let (wa, wb) = if ta < tb {
                        (1.0 - mean_far, mean_far)
                    } else {
                        (mean_far, 1.0 - mean_far)
                    };
                    let scale = (w[1] - w[0]) / (t_hi - t_lo) * len * overlap;
                    form.lx[dof_a] += scale * wa * n[0];
                    form.ly[dof_a] += scale * wa * n[1];
                    form.lx[dof_b] += scale * wb * n[0];
                    form.ly[dof_b] += scale * wb * n[1];
                }
            }
        }
    }
    // bottom face: outward normal -e_s against the constant extension
    for tri in grid.active_tris() {
        let verts = grid.tri_verts(tri);
        let area = grid.tri_area(tri);
        for &v in &verts {
            for (dof, w) in layout.linear_weights(v as usize, crate::grid::SKey::ZERO) {
                form.ls[dof] -= area / 3.0 * w;
            }
        }
    }
    form
}

fn positive_divergence_integral(state: &DiscreteState, grid: &PrismGrid, layout: &NodeLayout) -> f64 {
    let mut total = 0.0;
    for tri in grid.active_tris() {
        let verts = grid.tri_verts(tri);
        let pts = grid.tri_points(tri);
        let grads = geom::hat_gradients(pts[0], pts[1], pts[2]);
        for &el in grid.column_elements(tri) {
            let e = grid.element(el);
            let h = e.s.height_fraction() * grid.lift_height;
            let lo = e.s.lo();
            let hi = e.s.hi();
            let mut div_const = 0.0;
            for i in 0..3 {
                let v = verts[i] as usize;
                div_const += layout.layered_value(&state.dual_x, v, lo) * grads[i][0];
                div_const += layout.layered_value(&state.dual_y, v, lo) * grads[i][1];
            }
            let mut vals = [0.0; 3];
            for i in 0..3 {
                let v = verts[i] as usize;
                let bot = layout.linear_value(&state.dual_s, v, lo);
                let top = layout.linear_value(&state.dual_s, v, hi);
                vals[i] = div_const + (top - bot) / h;
            }
            total += h * geom::positive_part_integral(pts, vals);
        }
    }
    total
}

/// Sparse map from dual coefficients to per-element-vertex divergence
/// values (three rows per active element), together with the vertex-rule
/// quadrature weights `h * area / 3`. Used by the dual polish, which
/// maximizes the certified lower bound
/// `boundary form - sum_rows w_r max(0, div_r)` of the predual objective.
#[derive(Debug)]
pub struct DivergenceOperator {
    pub dx: crate::pairing::Csr,
    pub dy: crate::pairing::Csr,
    pub ds: crate::pairing::Csr,
    pub weights: Vec<f64>,
    pub norm: f64,
}

impl DivergenceOperator {
    pub fn apply(&self, state: &DiscreteState, out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.dx.apply(&state.dual_x, out);
        self.dy.apply(&state.dual_y, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
        self.ds.apply(&state.dual_s, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
    }

    /// Accumulates `-D^T p` into the three gradient accumulators.
    pub fn apply_transpose_neg(
        &self,
        p: &[f64],
        gx: &mut [f64],
        gy: &mut [f64],
        gs: &mut [f64],
    ) {
        let neg: Vec<f64> = p.iter().map(|v| -v).collect();
        self.dx.apply_add_transpose(&neg, gx);
        self.dy.apply_add_transpose(&neg, gy);
        self.ds.apply_add_transpose(&neg, gs);
    }
}

pub fn assemble_divergence(grid: &PrismGrid, layout: &NodeLayout) -> DivergenceOperator {
    let mut tx: Vec<(u32, u32, f64)> = Vec::new();
    let mut ty: Vec<(u32, u32, f64)> = Vec::new();
    let mut ts: Vec<(u32, u32, f64)> = Vec::new();
    let mut weights = Vec::new();
    let mut row = 0u32;
    for tri in grid.active_tris() {
        let verts = grid.tri_verts(tri);
        let pts = grid.tri_points(tri);
        let area = geom::signed_area(pts[0], pts[1], pts[2]).abs();
        let grads = geom::hat_gradients(pts[0], pts[1], pts[2]);
        for &el in grid.column_elements(tri) {
            let e = grid.element(el);
            let h = e.s.height_fraction() * grid.lift_height;
            let (lo, hi) = (e.s.lo(), e.s.hi());
            let dofs: Vec<usize> = verts
                .iter()
                .map(|&v| layout.layered_dof(v as usize, layout.floor_index(v as usize, lo)))
                .collect();
            for i in 0..3 {
                for j in 0..3 {
                    tx.push((row + i as u32, dofs[j] as u32, grads[j][0]));
                    ty.push((row + i as u32, dofs[j] as u32, grads[j][1]));
                }
                let v = verts[i] as usize;
                for (dof, w) in layout.linear_weights(v, hi) {
                    ts.push((row + i as u32, dof as u32, w / h));
                }
                for (dof, w) in layout.linear_weights(v, lo) {
                    ts.push((row + i as u32, dof as u32, -w / h));
                }
                weights.push(h * area / 3.0);
            }
            row += 3;
        }
    }
    let n = row as usize;
    let dx = crate::pairing::Csr::from_triplets(n, layout.layered_dof_count, tx);
    let dy = crate::pairing::Csr::from_triplets(n, layout.layered_dof_count, ty);
    let ds = crate::pairing::Csr::from_triplets(n, layout.linear_dof_count, ts);
    // weighted norm of the scaled operator diag(w) D
    let norm = {
        let mut acc = 0.0;
        for m in [&dx, &dy, &ds] {
            for r in 0..m.nrows {
                let w = weights[r];
                for i in m.row_ptr[r]..m.row_ptr[r + 1] {
                    acc += (w * m.vals[i]).powi(2);
                }
            }
        }
        acc.sqrt()
    };
    DivergenceOperator { dx, dy, ds, weights, norm }
}

/// Divergence vertex values of the dual field on one element (affine in x,
/// constant in s). Shared by the dual energy and the gap indicator.
pub fn element_divergence(
    state: &DiscreteState,
    grid: &PrismGrid,
    layout: &NodeLayout,
    el: u32,
) -> [f64; 3] {
    let e = grid.element(el);
    let verts = grid.tri_verts(e.tri);
    let pts = grid.tri_points(e.tri);
    let grads = geom::hat_gradients(pts[0], pts[1], pts[2]);
    let h = e.s.height_fraction() * grid.lift_height;
    let (lo, hi) = (e.s.lo(), e.s.hi());
    let mut div_const = 0.0;
    for i in 0..3 {
        let v = verts[i] as usize;
        div_const += layout.layered_value(&state.dual_x, v, lo) * grads[i][0];
        div_const += layout.layered_value(&state.dual_y, v, lo) * grads[i][1];
    }
    let mut vals = [0.0; 3];
    for i in 0..3 {
        let v = verts[i] as usize;
        let bot = layout.linear_value(&state.dual_s, v, lo);
        let top = layout.linear_value(&state.dual_s, v, hi);
        vals[i] = div_const + (top - bot) / h;
    }
    vals
}
