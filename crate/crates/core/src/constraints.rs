//! Feasible sets of the discrete saddle-point problem and the projections
//! onto them.
//!
//! The primal set clamps coefficients to [0, 1] and pins lateral-boundary
//! nodes to the binary boundary trace. The dual set decomposes into a sign
//! constraint on the vertical component and, per x-node column, the
//! intersection of ball preimages `|sum_k h_k Y_k| <= tau(s_j - s_i)` over
//! all breakpoint pairs; each column is projected independently with
//! Dykstra's cyclic scheme.

use crate::boundary::BoundaryData;
use crate::cost::TransportCost;
use crate::grid::{NodeLayout, PrismGrid};
use crate::pairing::DiscreteState;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConstraintError {
    #[error("constraint radius must be nonnegative, got {0}")]
    NegativeRadius(f64),
}

/// One nonlocal ball-preimage constraint over an interval index range.
#[derive(Debug, Clone, Copy)]
pub struct BallConstraint {
    /// First interval index in the range.
    pub start: usize,
    /// One past the last interval index.
    pub end: usize,
    /// `tau` of the covered s-distance.
    pub radius: f64,
    /// Cached `sum h_k^2` over the range.
    pub weight_sq: f64,
}

/// All pair constraints of one x-node column, radii precomputed from the
/// transportation cost. Constraints are cycled in order of ascending range
/// length (ties by start index) during Dykstra iterations.
#[derive(Debug, Clone)]
pub struct ColumnConstraintSet {
    pub x_node: usize,
    pub breakpoints: Vec<f64>,
    pub heights: Vec<f64>,
    pub constraints: Vec<BallConstraint>,
}

impl ColumnConstraintSet {
    pub fn new(x_node: usize, breakpoints: Vec<f64>, cost: &TransportCost) -> Self {
        let heights: Vec<f64> = breakpoints.windows(2).map(|w| w[1] - w[0]).collect();
        let p = heights.len();
        let mut constraints = Vec::with_capacity(p * (p + 1) / 2);
        for i in 0..p {
            for j in (i + 1)..=p {
                let radius = cost.eval_nonneg(breakpoints[j] - breakpoints[i]);
                let weight_sq = heights[i..j].iter().map(|h| h * h).sum();
                constraints.push(BallConstraint { start: i, end: j, radius, weight_sq });
            }
        }
        constraints.sort_by(|a, b| {
            (a.end - a.start, a.start).cmp(&(b.end - b.start, b.start))
        });
        ColumnConstraintSet { x_node, breakpoints, heights, constraints }
    }

    /// Largest violation `|w| - r` over all constraints; nonpositive when
    /// feasible.
    pub fn max_violation(&self, y: &[[f64; 2]]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for c in &self.constraints {
            let w = accumulate(y, &self.heights, c);
            worst = worst.max((w[0] * w[0] + w[1] * w[1]).sqrt() - c.radius);
        }
        worst
    }

    /// Largest ratio `|w| / r`; at most 1 when feasible.
    pub fn max_violation_ratio(&self, y: &[[f64; 2]]) -> f64 {
        let mut worst = 0.0_f64;
        for c in &self.constraints {
            let w = accumulate(y, &self.heights, c);
            if c.radius > 0.0 {
                worst = worst.max((w[0] * w[0] + w[1] * w[1]).sqrt() / c.radius);
            } else {
                worst = worst.max(f64::INFINITY);
            }
        }
        worst
    }
}

/// Builds the per-column constraint sets for a layout. Radii depend only on
/// the breakpoints, so the sets are refreshed only on grid change.
pub fn build_column_sets(layout: &NodeLayout, cost: &TransportCost) -> Vec<ColumnConstraintSet> {
    layout
        .columns
        .par_iter()
        .map(|col| ColumnConstraintSet::new(col.x_node, col.breaks.clone(), cost))
        .collect()
}

#[inline]
fn accumulate(y: &[[f64; 2]], heights: &[f64], c: &BallConstraint) -> [f64; 2] {
    let mut w = [0.0, 0.0];
    for k in c.start..c.end {
        w[0] += heights[k] * y[k][0];
        w[1] += heights[k] * y[k][1];
    }
    w
}

/// Exact Euclidean projection onto one ball-preimage set
/// `{Y : |sum_k h_k Y_k| <= r}`. Returns whether `y` changed.
pub fn project_ball_preimage(
    y: &mut [[f64; 2]],
    heights: &[f64],
    c: &BallConstraint,
) -> Result<bool, ConstraintError> {
    if c.radius < 0.0 {
        return Err(ConstraintError::NegativeRadius(c.radius));
    }
    let w = accumulate(y, heights, c);
    let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
    if norm <= c.radius {
        return Ok(false);
    }
    // KKT of the linear-preimage-of-ball set: subtract h_k * excess / sum h^2
    let scale = (1.0 - c.radius / norm) / c.weight_sq;
    for k in c.start..c.end {
        y[k][0] -= heights[k] * scale * w[0];
        y[k][1] -= heights[k] * scale * w[1];
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DykstraStats {
    pub cycles: usize,
    pub converged: bool,
}

/// Dykstra's cyclic projection of one column onto the intersection of all
/// its ball-preimage sets. Corrections start fresh on every call; only the
/// input point is warm-started across outer iterations.
pub fn dykstra_project_column(
    y: &mut [[f64; 2]],
    set: &ColumnConstraintSet,
    tol: f64,
    max_cycles: usize,
) -> DykstraStats {
    assert!(tol > 0.0);
    let total_len: usize = set.constraints.iter().map(|c| c.end - c.start).sum();
    let mut corrections = vec![[0.0, 0.0]; total_len];
    let mut offsets = Vec::with_capacity(set.constraints.len());
    {
        let mut acc = 0usize;
        for c in &set.constraints {
            offsets.push(acc);
            acc += c.end - c.start;
        }
    }
    let mut prev = y.to_vec();
    let mut before: Vec<[f64; 2]> = Vec::new();
    for cycle in 1..=max_cycles {
        for (ci, c) in set.constraints.iter().enumerate() {
            let corr = &mut corrections[offsets[ci]..offsets[ci] + (c.end - c.start)];
            let zero_corr = corr.iter().all(|p| p[0] == 0.0 && p[1] == 0.0);
            if !zero_corr {
                for (k, p) in (c.start..c.end).zip(corr.iter()) {
                    y[k][0] += p[0];
                    y[k][1] += p[1];
                }
            }
            before.clear();
            before.extend_from_slice(&y[c.start..c.end]);
            let changed = project_ball_preimage(y, &set.heights, c).expect("radius checked");
            if changed || !zero_corr {
                for (i, k) in (c.start..c.end).enumerate() {
                    corr[i][0] = before[i][0] - y[k][0];
                    corr[i][1] = before[i][1] - y[k][1];
                }
            }
        }
        let mut disp = 0.0_f64;
        for (a, b) in y.iter().zip(&prev) {
            disp = disp.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
        }
        if disp < tol {
            return DykstraStats { cycles: cycle, converged: true };
        }
        prev.copy_from_slice(y);
    }
    DykstraStats { cycles: max_cycles, converged: false }
}

/// Lateral-boundary degrees of freedom pinned to the binary boundary trace.
#[derive(Debug, Clone, Default)]
pub struct FixedTrace {
    pub dofs: Vec<(usize, f64)>,
}

impl FixedTrace {
    pub fn build(grid: &PrismGrid, layout: &NodeLayout, data: &BoundaryData) -> Self {
        let mut dofs = Vec::new();
        for col in &layout.columns {
            if !col.on_boundary {
                continue;
            }
            let p = grid.x_node(col.x_node);
            let u = data
                .cumulative_at_point(p)
                .expect("boundary column nodes lie on the boundary");
            for k in 0..col.interval_count() {
                let v = if u > col.breaks[k] { 1.0 } else { 0.0 };
                dofs.push((col.layered_base + k, v));
            }
        }
        FixedTrace { dofs }
    }
}

/// Projection onto the primal set: clamp to [0, 1], then overwrite the
/// lateral-boundary nodes with the trace. Interior bottom nodes stay free.
pub fn project_primal(v: &mut [f64], fixed: &FixedTrace) {
    for x in v.iter_mut() {
        *x = x.clamp(0.0, 1.0);
    }
    for &(dof, val) in &fixed.dofs {
        v[dof] = val;
    }
}

/// Convenience wrapper building the fixed-trace table on the fly.
pub fn project_primal_with_data(
    v: &mut [f64],
    grid: &PrismGrid,
    layout: &NodeLayout,
    data: &BoundaryData,
) {
    let fixed = FixedTrace::build(grid, layout, data);
    project_primal(v, &fixed);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ProjectionStats {
    pub total_cycles: usize,
    pub worst_cycles: usize,
    pub all_converged: bool,
}

/// Projection onto the dual set: clamps the vertical component to be
/// nonnegative and Dykstra-projects every column independently (in
/// parallel; columns own disjoint coefficient ranges).
pub fn project_dual(
    state: &mut DiscreteState,
    sets: &[ColumnConstraintSet],
    layout: &NodeLayout,
    tol: f64,
    max_cycles: usize,
) -> ProjectionStats {
    for x in state.dual_s.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let dual_x = &state.dual_x;
    let dual_y = &state.dual_y;
    let results: Vec<(Vec<[f64; 2]>, DykstraStats)> = sets
        .par_iter()
        .zip(layout.columns.par_iter())
        .map(|(set, col)| {
            let base = col.layered_base;
            let p = col.interval_count();
            let mut y: Vec<[f64; 2]> =
                (0..p).map(|k| [dual_x[base + k], dual_y[base + k]]).collect();
            let stats = dykstra_project_column(&mut y, set, tol, max_cycles);
            (y, stats)
        })
        .collect();
    let mut out = ProjectionStats { all_converged: true, ..Default::default() };
    for ((y, stats), col) in results.iter().zip(&layout.columns) {
        let base = col.layered_base;
        for (k, p) in y.iter().enumerate() {
            state.dual_x[base + k] = p[0];
            state.dual_y[base + k] = p[1];
        }
        out.total_cycles += stats.cycles;
        out.worst_cycles = out.worst_cycles.max(stats.cycles);
        out.all_converged &= stats.converged;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{BoundaryAtom, Domain};
    use crate::verify::{projection_oracle, RangeBall};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn bt(alpha: f64) -> TransportCost {
        TransportCost::branched(alpha).unwrap()
    }

    #[test]
    fn ball_preimage_two_interval_example() {
        let heights = [1.0, 1.0];
        let c = BallConstraint { start: 0, end: 2, radius: 1.0, weight_sq: 2.0 };
        let mut y = [[2.0, 0.0], [0.0, 0.0]];
        assert!(project_ball_preimage(&mut y, &heights, &c).unwrap());
        assert!((y[0][0] - 1.5).abs() < 1e-15);
        assert!((y[1][0] + 0.5).abs() < 1e-15);
        let w = [heights[0] * y[0][0] + heights[1] * y[1][0], 0.0];
        assert!((w[0] - 1.0).abs() < 1e-15);
        // agreement with the dense oracle
        let oracle = projection_oracle(
            &[[2.0, 0.0], [0.0, 0.0]],
            &heights,
            &[RangeBall { start: 0, end: 2, radius: 1.0 }],
        );
        assert!((oracle[0][0] - 1.5).abs() < 1e-5 && (oracle[1][0] + 0.5).abs() < 1e-5);
    }

    #[test]
    fn ball_preimage_feasible_identity_and_radial() {
        let heights = [2.0];
        let c = BallConstraint { start: 0, end: 1, radius: 2.0, weight_sq: 4.0 };
        let mut feasible = [[0.3, 0.4]];
        assert!(!project_ball_preimage(&mut feasible, &heights, &c).unwrap());
        assert_eq!(feasible, [[0.3, 0.4]]);
        // single interval reduces to radial scaling of h*y onto the sphere
        let mut y = [[0.0, 3.0]];
        project_ball_preimage(&mut y, &heights, &c).unwrap();
        assert!((y[0][0]).abs() < 1e-15 && (y[0][1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn negative_radius_rejected() {
        let heights = [1.0];
        let c = BallConstraint { start: 0, end: 1, radius: -1.0, weight_sq: 1.0 };
        let mut y = [[0.0, 0.0]];
        assert!(project_ball_preimage(&mut y, &heights, &c).is_err());
    }

    #[test]
    fn constraint_count_matches_pairs() {
        let set = ColumnConstraintSet::new(0, vec![0.0, 0.25, 0.5, 0.75, 1.0], &bt(0.5));
        assert_eq!(set.constraints.len(), 4 * 5 / 2);
        // cycle order: range length ascending, ties by start
        let lens: Vec<usize> = set.constraints.iter().map(|c| c.end - c.start).collect();
        let mut sorted = lens.clone();
        sorted.sort_unstable();
        assert_eq!(lens, sorted);
    }

    #[test]
    fn dykstra_feasible_point_converges_in_one_cycle() {
        let set = ColumnConstraintSet::new(0, vec![0.0, 0.5, 1.0], &bt(0.5));
        let mut y = vec![[0.1, 0.0], [0.0, -0.1]];
        let before = y.clone();
        let stats = dykstra_project_column(&mut y, &set, 1e-9, 100);
        assert!(stats.converged);
        assert_eq!(stats.cycles, 1);
        assert_eq!(y, before);
    }

    #[test]
    fn dykstra_matches_dense_projection_oracle() {
        let mut rng = StdRng::seed_from_u64(99);
        for trial in 0..10 {
            let p = rng.gen_range(2..=4);
            let mut breaks: Vec<f64> = vec![0.0];
            for _ in 0..p {
                breaks.push(breaks.last().unwrap() + rng.gen_range(0.1..0.6));
            }
            let set = ColumnConstraintSet::new(0, breaks, &bt(0.5));
            let y0: Vec<[f64; 2]> = (0..p)
                .map(|_| [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)])
                .collect();
            let mut y = y0.clone();
            let stats = dykstra_project_column(&mut y, &set, 1e-11, 20000);
            assert!(stats.converged, "trial {trial}");
            let balls: Vec<RangeBall> = set
                .constraints
                .iter()
                .map(|c| RangeBall { start: c.start, end: c.end, radius: c.radius })
                .collect();
            let oracle = projection_oracle(&y0, &set.heights, &balls);
            for (a, b) in y.iter().zip(&oracle) {
                let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                assert!(d < 1e-6, "trial {trial}: {a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn dykstra_symmetric_constant_column_binds_full_range() {
        // constant profile: the binding constraint is the full range because
        // tau(m)/m is smallest at m = M for concave tau
        let p = 4;
        let m = 1.0;
        let breaks: Vec<f64> = (0..=p).map(|i| m * i as f64 / p as f64).collect();
        let cost = bt(0.5);
        let set = ColumnConstraintSet::new(0, breaks, &cost);
        let c0 = [3.0, 1.0];
        let mut y: Vec<[f64; 2]> = vec![c0; p];
        let stats = dykstra_project_column(&mut y, &set, 1e-12, 50000);
        assert!(stats.converged);
        for k in 1..p {
            assert!((y[k][0] - y[0][0]).abs() < 1e-9, "projection keeps symmetry");
            assert!((y[k][1] - y[0][1]).abs() < 1e-9);
        }
        let w: f64 = (0..p)
            .map(|k| set.heights[k] * y[k][0])
            .sum::<f64>()
            .hypot((0..p).map(|k| set.heights[k] * y[k][1]).sum::<f64>());
        let tau_m = cost.eval_nonneg(m);
        assert!((w - tau_m).abs() < 1e-8, "full-range constraint binds: {w} vs {tau_m}");
    }

    #[test]
    fn adjacent_constraints_imply_pointwise_bound() {
        // after projection |Y_k| h_k <= tau(h_k) <= tau'(0) h_k
        let cost = TransportCost::urban(5.0, 1.0).unwrap();
        let set = ColumnConstraintSet::new(0, vec![0.0, 0.2, 0.7, 1.0], &cost);
        let mut rng = StdRng::seed_from_u64(4);
        let mut y: Vec<[f64; 2]> = (0..3)
            .map(|_| [rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0)])
            .collect();
        dykstra_project_column(&mut y, &set, 1e-10, 20000);
        for (k, h) in set.heights.iter().enumerate() {
            let norm = (y[k][0].powi(2) + y[k][1].powi(2)).sqrt();
            assert!(norm * h <= cost.eval_nonneg(*h) + 1e-7);
            assert!(norm <= cost.slope_at_zero() + 1e-7);
        }
    }

    #[test]
    fn barycentric_feasibility_is_inherited() {
        // fields feasible at the three vertices of a triangle stay feasible
        // at interior barycentric points
        let mut rng = StdRng::seed_from_u64(17);
        let breaks = vec![0.0, 0.3, 0.55, 1.0];
        let cost = bt(0.4);
        let set = ColumnConstraintSet::new(0, breaks.clone(), &cost);
        let p = 3;
        let mut corners: Vec<Vec<[f64; 2]>> = Vec::new();
        for _ in 0..3 {
            let mut y: Vec<[f64; 2]> = (0..p)
                .map(|_| [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)])
                .collect();
            let ratio = set.max_violation_ratio(&y);
            if ratio > 1.0 {
                for v in y.iter_mut() {
                    v[0] /= ratio;
                    v[1] /= ratio;
                }
            }
            corners.push(y);
        }
        for _ in 0..100 {
            let mut l = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            let s: f64 = l.iter().sum();
            for x in l.iter_mut() {
                *x /= s;
            }
            let mix: Vec<[f64; 2]> = (0..p)
                .map(|k| {
                    [
                        l[0] * corners[0][k][0] + l[1] * corners[1][k][0] + l[2] * corners[2][k][0],
                        l[0] * corners[0][k][1] + l[1] * corners[1][k][1] + l[2] * corners[2][k][1],
                    ]
                })
                .collect();
            assert!(set.max_violation(&mix) <= 1e-10);
        }
    }

    #[test]
    fn project_primal_clamps_and_pins() {
        let grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 1, 1);
        let layout = NodeLayout::build(&grid);
        let data = BoundaryData::build(
            Domain::unit_square(),
            vec![BoundaryAtom::source(2.5, 1.0), BoundaryAtom::sink(0.5, 1.0)],
        )
        .unwrap();
        let fixed = FixedTrace::build(&grid, &layout, &data);
        let mut v = vec![1.7; layout.layered_dof_count];
        project_primal(&mut v, &fixed);
        assert!(v.iter().all(|&x| (0.0..=1.0).contains(&x)));
        for &(dof, val) in &fixed.dofs {
            assert_eq!(v[dof], val);
        }
        // idempotent, bit-identical
        let once = v.clone();
        project_primal(&mut v, &fixed);
        assert_eq!(v, once);
        // a boundary node where the trace is 1 overrides any value
        if let Some(&(dof, val)) = fixed.dofs.iter().find(|&&(_, val)| val == 1.0) {
            let mut w = vec![0.3; layout.layered_dof_count];
            project_primal(&mut w, &fixed);
            assert_eq!(w[dof], val);
        } else {
            panic!("expected at least one trace-1 boundary node");
        }
    }

    #[test]
    fn project_dual_zero_stays_zero_and_negatives_clamp() {
        let grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 1, 1);
        let layout = NodeLayout::build(&grid);
        let cost = bt(0.5);
        let sets = build_column_sets(&layout, &cost);
        let mut state = DiscreteState::zeros(&layout);
        state.dual_s[0] = -0.5;
        state.dual_s[1] = 0.25;
        let stats = project_dual(&mut state, &sets, &layout, 1e-9, 100);
        assert!(stats.all_converged);
        assert_eq!(state.dual_s[0], 0.0);
        assert_eq!(state.dual_s[1], 0.25);
        assert!(state.dual_x.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn project_dual_leaves_feasible_columns_untouched() {
        let grid = PrismGrid::uniform(Domain::unit_square(), 1.0, 0, 1);
        let layout = NodeLayout::build(&grid);
        let cost = bt(0.5);
        let sets = build_column_sets(&layout, &cost);
        let mut state = DiscreteState::zeros(&layout);
        // column 0: infeasible; column 1: modest feasible values
        let c0 = &layout.columns[0];
        let c1 = &layout.columns[1];
        state.dual_x[c0.layered_base] = 100.0;
        state.dual_x[c1.layered_base] = 0.05;
        state.dual_y[c1.layered_base + 1] = -0.05;
        let before: Vec<f64> = (0..c1.interval_count())
            .flat_map(|k| [state.dual_x[c1.layered_base + k], state.dual_y[c1.layered_base + k]])
            .collect();
        project_dual(&mut state, &sets, &layout, 1e-9, 200);
        let after: Vec<f64> = (0..c1.interval_count())
            .flat_map(|k| [state.dual_x[c1.layered_base + k], state.dual_y[c1.layered_base + k]])
            .collect();
        assert_eq!(before, after, "independent columns stay bit-identical");
        assert!(state.dual_x[c0.layered_base] < 100.0);
    }
}
