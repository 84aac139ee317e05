//! Per-element refinement indicators and the marking strategy.

use crate::constraints::build_column_sets;
use crate::cost::TransportCost;
use crate::geom;
use crate::grid::{GridError, NodeLayout, PrismGrid};
use crate::pairing::{assemble, prolongate, DiscreteState};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorKind {
    Gradient,
    PdGap,
    MaxOfBoth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    X,
    S,
    Both,
}

/// Local derivative mass of the primal per element volume: the x-gradient
/// integral over the prism plus the jump mass on the element's own bottom
/// face (with the constant extension below the grid), divided by the
/// element volume. Indexed by element id; dead elements carry zero.
pub fn indicator_gradient(
    grid: &PrismGrid,
    layout: &NodeLayout,
    state: &DiscreteState,
) -> Vec<f64> {
    let mut eta = vec![0.0; grid.element_slot_count()];
    for tri in grid.active_tris() {
        let verts = grid.tri_verts(tri);
        let pts = grid.tri_points(tri);
        let area = grid.tri_area(tri);
        let grads = geom::hat_gradients(pts[0], pts[1], pts[2]);
        let column = grid.column_elements(tri);
        for (k, &el) in column.iter().enumerate() {
            let e = grid.element(el);
            let h = e.s.height_fraction() * grid.lift_height;
            let lo = e.s.lo();
            let vv: Vec<f64> = verts
                .iter()
                .map(|&v| layout.layered_value(&state.primal, v as usize, lo))
                .collect();
            let g = [
                (0..3).map(|i| vv[i] * grads[i][0]).sum::<f64>(),
                (0..3).map(|i| vv[i] * grads[i][1]).sum::<f64>(),
            ];
            let mut mass = h * area * (g[0] * g[0] + g[1] * g[1]).sqrt();
            // jump across the element's own bottom face; the artificial
            // extension below the grid carries no network signal and is
            // excluded, so constant states have zero indicator everywhere
            if k > 0 {
                let below_el = grid.element(column[k - 1]);
                let mut diff = [0.0; 3];
                for i in 0..3 {
                    let below =
                        layout.layered_value(&state.primal, verts[i] as usize, below_el.s.lo());
                    diff[i] = vv[i] - below;
                }
                mass += geom::abs_integral(pts, diff);
            }
            eta[el as usize] = mass / (area * h);
        }
    }
    eta
}

/// Total derivative mass of the primal (numerator of the gradient
/// indicator, before dividing by volume). Invariant under refinement with a
/// prolongated state.
pub fn total_variation_mass(grid: &PrismGrid, layout: &NodeLayout, state: &DiscreteState) -> f64 {
    let eta = indicator_gradient(grid, layout, state);
    grid.active_elements()
        .map(|(id, e)| {
            eta[id as usize] * grid.tri_area(e.tri) * e.s.height_fraction() * grid.lift_height
        })
        .sum()
}

pub struct PdGapIndicator {
    pub eta: Vec<f64>,
    /// Lower estimate of the duality gap (sum of the element terms before
    /// clamping).
    pub gap_estimate: f64,
}

/// Localized duality-gap indicator: the auxiliary dual field is maximized
/// per column on a once-refined copy of the grid, and each element receives
/// its contribution to the gap from below. Negative element values (the
/// first term may have either sign) are clamped to zero for marking.
pub fn indicator_pd_gap(
    grid: &PrismGrid,
    layout: &NodeLayout,
    state: &DiscreteState,
    cost: &TransportCost,
    ascent_steps: usize,
    dykstra_tol: f64,
) -> Result<PdGapIndicator, GridError> {
    // auxiliary grid: one uniform x- and one uniform s-bisection
    let mut aux = grid.clone();
    aux.refine_all_x();
    aux.refine_all_s();
    let aux_layout = NodeLayout::build(&aux);
    let aux_state = prolongate(grid, layout, state, &aux, &aux_layout)?;
    let aux_op = assemble_for_indicator(&aux, &aux_layout)?;
    let (gx, gy, _) = aux_op
        .apply_primal_to_dual(&aux_state.primal)
        .expect("prolongated state matches auxiliary operator");

    let sets = build_column_sets(&aux_layout, cost);
    let mut opt_x = vec![0.0; aux_layout.layered_dof_count];
    let mut opt_y = vec![0.0; aux_layout.layered_dof_count];
    for (col, set) in aux_layout.columns.iter().zip(&sets) {
        let base = col.layered_base;
        let p = col.interval_count();
        let gain: Vec<[f64; 2]> = (0..p).map(|k| [gx[base + k], gy[base + k]]).collect();
        let mut y: Vec<[f64; 2]> =
            (0..p).map(|k| [aux_state.dual_x[base + k], aux_state.dual_y[base + k]]).collect();
        let warm_obj: f64 = gain.iter().zip(&y).map(|(g, v)| g[0] * v[0] + g[1] * v[1]).sum();
        let best = crate::analysis::energy::column_linear_max(
            &gain,
            set,
            &mut y,
            ascent_steps,
            dykstra_tol,
            60,
        );
        debug_assert!(
            best >= warm_obj - 1e-9 * (1.0 + warm_obj.abs()),
            "per-column maximization cannot fall below the current dual"
        );
        for k in 0..p {
            opt_x[base + k] = y[k][0];
            opt_y[base + k] = y[k][1];
        }
    }

    // first term, accumulated from auxiliary elements into their ancestors
    let mut eta = vec![0.0; grid.element_slot_count()];
    for aux_tri in aux.active_tris() {
        let verts = aux.tri_verts(aux_tri);
        let pts = aux.tri_points(aux_tri);
        let area = geom::signed_area(pts[0], pts[1], pts[2]).abs();
        let grads = geom::hat_gradients(pts[0], pts[1], pts[2]);
        for &el in aux.column_elements(aux_tri) {
            let e = aux.element(el);
            let h = e.s.height_fraction() * aux.lift_height;
            let lo = e.s.lo();
            let mut grad_v = [0.0, 0.0];
            let mut mean_dx = 0.0;
            let mut mean_dy = 0.0;
            for i in 0..3 {
                let v = verts[i] as usize;
                let vv = aux_layout.layered_value(&aux_state.primal, v, lo);
                grad_v[0] += vv * grads[i][0];
                grad_v[1] += vv * grads[i][1];
                mean_dx += (aux_layout.layered_value(&opt_x, v, lo)
                    - aux_layout.layered_value(&aux_state.dual_x, v, lo))
                    / 3.0;
                mean_dy += (aux_layout.layered_value(&opt_y, v, lo)
                    - aux_layout.layered_value(&aux_state.dual_y, v, lo))
                    / 3.0;
            }
            let contrib = h * area * (mean_dx * grad_v[0] + mean_dy * grad_v[1]);
            let anc = aux.ancestor_in(el, grid).expect("auxiliary grid refines the input");
            eta[anc as usize] += contrib;
        }
    }

    // second term: integral of (v_opt - v) div phi on the original grid
    for tri in grid.active_tris() {
        let verts = grid.tri_verts(tri);
        let pts = grid.tri_points(tri);
        let area = grid.tri_area(tri);
        for &el in grid.column_elements(tri) {
            let e = grid.element(el);
            let h = e.s.height_fraction() * grid.lift_height;
            let div = crate::analysis::energy::element_divergence(state, grid, layout, el);
            let vv: [f64; 3] = {
                let lo = e.s.lo();
                [
                    layout.layered_value(&state.primal, verts[0] as usize, lo),
                    layout.layered_value(&state.primal, verts[1] as usize, lo),
                    layout.layered_value(&state.primal, verts[2] as usize, lo),
                ]
            };
            let pos = geom::positive_part_integral(pts, div);
            let vdiv = geom::affine_product_integral(area, vv, div);
            eta[el as usize] += h * (pos - vdiv);
        }
    }

    let gap_estimate: f64 = grid.active_elements().map(|(id, _)| eta[id as usize]).sum();
    for x in eta.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    Ok(PdGapIndicator { eta, gap_estimate })
}

/// Assembly without boundary data (the indicator only needs the gradient
/// blocks and the load is independent of the data anyway).
fn assemble_for_indicator(
    grid: &PrismGrid,
    layout: &NodeLayout,
) -> Result<crate::pairing::PairingOperator, GridError> {
    let dummy = crate::boundary::BoundaryData::build(grid.domain, Vec::new())
        .expect("empty measures are balanced");
    assemble(grid, layout, &dummy)
}

/// Elementwise maximum of the two indicators, each normalized by its own
/// maximum so the scales are commensurable.
pub fn combined_max(a: &[f64], b: &[f64]) -> Vec<f64> {
    let max_a = a.iter().cloned().fold(0.0_f64, f64::max).max(1e-300);
    let max_b = b.iter().cloned().fold(0.0_f64, f64::max).max(1e-300);
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x / max_a).max(y / max_b))
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MarkStats {
    pub marked: usize,
    pub created: usize,
}

/// Refines every element whose indicator reaches `lambda` times the
/// maximum. In mode `Both` the marked elements first receive an
/// x-refinement pass, then every living descendant is s-refined; closure
/// and propagation keep the grid semi-regular.
pub fn mark_and_refine(
    grid: &mut PrismGrid,
    eta: &[f64],
    lambda: f64,
    mode: RefineMode,
) -> MarkStats {
    assert!(lambda > 0.0 && lambda < 1.0);
    let max_eta = grid
        .active_elements()
        .map(|(id, _)| eta[id as usize])
        .fold(0.0_f64, f64::max);
    let marked: Vec<u32> = grid
        .active_elements()
        .filter(|(id, _)| eta[*id as usize] >= lambda * max_eta)
        .map(|(id, _)| id)
        .collect();
    let mut stats = MarkStats { marked: marked.len(), created: 0 };
    if max_eta == 0.0 {
        return stats;
    }

    if matches!(mode, RefineMode::X | RefineMode::Both) {
        for &id in &marked {
            if grid.element(id).alive {
                stats.created += grid.x_refine(id).expect("marked element exists").len();
            }
        }
    }
    if matches!(mode, RefineMode::S | RefineMode::Both) {
        let mark_set: std::collections::HashSet<u32> = marked.iter().copied().collect();
        let descendants: Vec<u32> = grid
            .active_elements()
            .filter(|(id, _)| {
                let mut cur = Some(*id);
                while let Some(c) = cur {
                    if mark_set.contains(&c) {
                        return true;
                    }
                    cur = grid.element(c).parent;
                }
                false
            })
            .map(|(id, _)| id)
            .collect();
        for id in descendants {
            if grid.element(id).alive {
                stats.created += grid.s_refine(id).expect("descendant exists").len();
            }
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{BoundaryAtom, BoundaryData, Domain};

    fn line_data() -> BoundaryData {
        BoundaryData::build(
            Domain::unit_square(),
            vec![BoundaryAtom::source(2.5, 1.0), BoundaryAtom::sink(0.5, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn constant_primal_has_zero_gradient_indicator() {
        let grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 2, 1);
        let layout = NodeLayout::build(&grid);
        let mut state = DiscreteState::zeros(&layout);
        for x in state.primal.iter_mut() {
            *x = 1.0;
        }
        let eta = indicator_gradient(&grid, &layout, &state);
        assert!(eta.iter().all(|&x| x.abs() < 1e-14));
    }

    #[test]
    fn step_primal_concentrates_indicator_near_the_jump() {
        let grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 3, 1);
        let layout = NodeLayout::build(&grid);
        let data = line_data();
        let state = DiscreteState::from_boundary_guess(&grid, &layout, &data);
        let eta = indicator_gradient(&grid, &layout, &state);
        for (id, e) in grid.active_elements() {
            let pts = grid.tri_points(e.tri);
            let cx = (pts[0][0] + pts[1][0] + pts[2][0]) / 3.0;
            let touches_jump = pts.iter().any(|p| (p[0] - 0.5).abs() < 1e-12);
            if eta[id as usize] > 1e-12 {
                assert!(touches_jump, "indicator must live on the jump band, cx = {cx}");
            }
        }
    }

    #[test]
    fn derivative_mass_invariant_under_refinement() {
        let grid0 = PrismGrid::uniform(Domain::unit_square(), 1.0, 2, 1);
        let layout0 = NodeLayout::build(&grid0);
        let data = line_data();
        let state0 = DiscreteState::from_boundary_guess(&grid0, &layout0, &data);
        let tv0 = total_variation_mass(&grid0, &layout0, &state0);

        let mut grid1 = grid0.clone();
        let ids: Vec<u32> = grid1.active_elements().map(|(i, _)| i).collect();
        grid1.s_refine(ids[2]).unwrap();
        grid1.x_refine(ids[7]).unwrap();
        let layout1 = NodeLayout::build(&grid1);
        let state1 = prolongate(&grid0, &layout0, &state0, &grid1, &layout1).unwrap();
        let tv1 = total_variation_mass(&grid1, &layout1, &state1);
        assert!((tv0 - tv1).abs() < 1e-10 * (1.0 + tv0.abs()), "{tv0} vs {tv1}");
    }

    #[test]
    fn pd_gap_with_zero_dual_concentrates_on_gradient_support() {
        let grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 2, 1);
        let layout = NodeLayout::build(&grid);
        let data = line_data();
        let state = DiscreteState::from_boundary_guess(&grid, &layout, &data);
        let cost = TransportCost::branched(0.5).unwrap();
        let ind = indicator_pd_gap(&grid, &layout, &state, &cost, 10, 1e-8).unwrap();
        assert!(ind.gap_estimate > 0.0);
        let eta_grad = indicator_gradient(&grid, &layout, &state);
        for (id, _) in grid.active_elements() {
            if ind.eta[id as usize] > 1e-9 {
                assert!(eta_grad[id as usize] > 1e-12, "gap indicator lives where the primal varies");
            }
        }
    }

    #[test]
    fn marking_examples() {
        let mut grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 1, 1);
        let n = grid.element_slot_count();
        // all equal: everything marked
        let stats = mark_and_refine(&mut grid, &vec![1.0; n], 0.5, RefineMode::S);
        assert_eq!(stats.marked, 8);
        assert!(grid.check_semi_regular().passed());

        // single maximum: at least that element is marked
        let mut grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 1, 1);
        let mut eta = vec![0.1; grid.element_slot_count()];
        let target = grid.active_elements().next().unwrap().0;
        eta[target as usize] = 1.0;
        let stats = mark_and_refine(&mut grid, &eta, 0.99, RefineMode::Both);
        assert!(stats.marked >= 1);
        assert!(!grid.element(target).alive);
        assert!(grid.check_semi_regular().passed());

        // lambda near zero refines uniformly
        let mut grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 1, 1);
        let before = grid.active_element_count();
        let eta = vec![0.5; grid.element_slot_count()];
        mark_and_refine(&mut grid, &eta, 1e-9, RefineMode::S);
        assert_eq!(grid.active_element_count(), 2 * before);
    }
}
