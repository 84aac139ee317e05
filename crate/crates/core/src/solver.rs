//! The primal-dual iteration on a fixed grid and the adaptive outer loop.
//!
//! One inner iteration ascends the dual with step `1/L`, projects it onto
//! the per-column constraint sets, descends the primal, projects onto the
//! box with pinned boundary trace, and overrelaxes. The outer loop solves,
//! marks and refines, and prolongates to the next grid.

use crate::analysis::energy::{
    assemble_boundary_form, assemble_divergence, dual_energy_with_form, primal_energy,
};
use crate::boundary::BoundaryData;
use crate::constraints::{build_column_sets, project_dual, project_primal, ColumnConstraintSet, FixedTrace};
use crate::cost::TransportCost;
use crate::grid::{GridError, NodeLayout, PrismGrid};
use crate::pairing::{assemble, prolongate, DiscreteState, PairingError, PairingOperator};
use crate::refine::{combined_max, indicator_gradient, indicator_pd_gap, mark_and_refine, IndicatorKind, RefineMode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("non-finite iterate at level {level}, iteration {iter}")]
    NonFinite { level: usize, iter: usize },
    #[error("energy grew by more than 10x across level {level}: {previous} -> {current}")]
    Diverged { level: usize, previous: f64, current: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Pairing(#[from] PairingError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverParams {
    /// Overrelaxation weight.
    pub theta: f64,
    /// Max-norm primal change below which an iteration counts as stalled.
    pub inner_tol: f64,
    /// Consecutive stalled iterations that stop the inner loop.
    pub stall_iters: usize,
    /// Relative duality-gap tolerance that stops the inner loop.
    pub gap_tol: f64,
    pub max_inner_iters: usize,
    pub num_refinements: usize,
    /// Marking fraction in (0, 1).
    pub lambda: f64,
    pub indicator: IndicatorKind,
    pub refine_mode: RefineMode,
    pub dykstra_tol: f64,
    pub dykstra_max_cycles: usize,
    /// Iterations between duality-gap evaluations.
    pub gap_check_every: usize,
    /// Ascent steps per column and gap check for the primal energy bound.
    pub primal_ascent_steps: usize,
    /// Tolerance for flagging non-monotone primal states.
    pub monotone_tol: f64,
    /// Refinement stops once the grid exceeds this many elements.
    pub max_elements: usize,
    /// Budget for the dual polish that sharpens the predual bound after the
    /// primal iteration has settled.
    pub polish_iters: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            theta: 1.0,
            inner_tol: 1e-6,
            stall_iters: 50,
            gap_tol: 1e-3,
            max_inner_iters: 20_000,
            num_refinements: 4,
            lambda: 0.5,
            indicator: IndicatorKind::Gradient,
            refine_mode: RefineMode::Both,
            dykstra_tol: 1e-7,
            dykstra_max_cycles: 200,
            gap_check_every: 250,
            primal_ascent_steps: 10,
            monotone_tol: 1e-6,
            max_elements: 200_000,
        }
    }
}

/// Stopping rule on a history of primal iterates: the max-norm change must
/// stay below `tol` for 50 consecutive steps, or the supplied duality-gap
/// estimate must fall below its tolerance.
pub fn convergence_check(history: &[Vec<f64>], tol: f64, gap: Option<(f64, f64)>) -> bool {
    if let Some((estimate, gap_tol)) = gap {
        if estimate < gap_tol {
            return true;
        }
    }
    if history.len() < 51 {
        return false;
    }
    history
        .windows(2)
        .rev()
        .take(50)
        .all(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max)
                < tol
        })
}

/// One per-level row of the run history.
#[derive(Debug, Clone, Serialize)]
pub struct LevelRecord {
    pub level: usize,
    pub iters: usize,
    pub elements: usize,
    pub dofs: usize,
    pub energy_primal: f64,
    pub energy_dual: f64,
    pub gap: f64,
    pub seconds: f64,
    pub converged: bool,
    /// `(primal, dual)` energy pairs recorded at every gap check.
    #[serde(skip)]
    pub checkpoints: Vec<(f64, f64)>,
}

#[derive(Debug)]
pub struct AdaptiveResult {
    pub grid: PrismGrid,
    pub layout: NodeLayout,
    pub state: DiscreteState,
    pub history: Vec<LevelRecord>,
    pub converged: bool,
    /// Set when refinement stopped early on the element budget.
    pub budget_exhausted: bool,
}

pub enum SolverEvent<'a> {
    Checkpoint { level: usize, iter: usize, primal: f64, dual: f64, gap: f64, elements: usize },
    LevelDone {
        record: &'a LevelRecord,
        grid: &'a PrismGrid,
        layout: &'a NodeLayout,
        state: &'a DiscreteState,
    },
}

struct InnerOutcome {
    iters: usize,
    converged: bool,
    energy_primal: f64,
    energy_dual: f64,
    gap: f64,
    checkpoints: Vec<(f64, f64)>,
}

#[allow(clippy::too_many_arguments)]
fn inner_loop(
    state: &mut DiscreteState,
    op: &PairingOperator,
    grid: &PrismGrid,
    layout: &NodeLayout,
    sets: &[ColumnConstraintSet],
    fixed: &FixedTrace,
    data: &BoundaryData,
    params: &SolverParams,
    level: usize,
    events: &mut dyn FnMut(SolverEvent<'_>),
) -> Result<InnerOutcome, SolverError> {
    let step = 1.0 / op.frobenius.max(1e-300);
    project_primal(&mut state.primal, fixed);
    state.primal_bar = state.primal.clone();
    let mut warm: Vec<Vec<[f64; 2]>> = Vec::new();
    let mut stalled = 0usize;
    let mut outcome = InnerOutcome {
        iters: 0,
        converged: false,
        energy_primal: f64::NAN,
        energy_dual: f64::NAN,
        gap: f64::INFINITY,
        checkpoints: Vec::new(),
    };

    let mut prev = state.primal.clone();
    // window averages of the dual iterates: averaged feasible points stay
    // feasible and damp the saddle oscillation of the last iterate, giving a
    // much tighter dual bound at the gap checks
    let mut avg = DiscreteState::zeros_like(state);
    let mut avg_count = 0usize;
    let mut iter = 0usize;
    while iter < params.max_inner_iters {
        iter += 1;
        // dual ascent and projection
        let (gx, gy, gs) = op.apply_primal_to_dual(&state.primal_bar)?;
        for (d, g) in state.dual_x.iter_mut().zip(&gx) {
            *d += step * g;
        }
        for (d, g) in state.dual_y.iter_mut().zip(&gy) {
            *d += step * g;
        }
        for (d, g) in state.dual_s.iter_mut().zip(&gs) {
            *d += step * g;
        }
        project_dual(state, sets, layout, params.dykstra_tol, params.dykstra_max_cycles);

        // primal descent, projection, overrelaxation
        let fwd = op.apply_dual_to_primal(&state.dual_x, &state.dual_y, &state.dual_s)?;
        prev.copy_from_slice(&state.primal);
        for k in 0..state.primal.len() {
            state.primal[k] = (state.primal[k] - step * fwd[k]).clamp(0.0, 1.0);
        }
        project_primal(&mut state.primal, fixed);
        let mut delta = 0.0_f64;
        for k in 0..state.primal.len() {
            let new = state.primal[k];
            delta = delta.max((new - prev[k]).abs());
            state.primal_bar[k] = new + params.theta * (new - prev[k]);
        }
        if !delta.is_finite() {
            return Err(SolverError::NonFinite { level, iter });
        }
        stalled = if delta < params.inner_tol { stalled + 1 } else { 0 };

        for (a, d) in avg.dual_x.iter_mut().zip(&state.dual_x) {
            *a += d;
        }
        for (a, d) in avg.dual_y.iter_mut().zip(&state.dual_y) {
            *a += d;
        }
        for (a, d) in avg.dual_s.iter_mut().zip(&state.dual_s) {
            *a += d;
        }
        avg_count += 1;

        let check_now = iter % params.gap_check_every == 0
            || stalled >= params.stall_iters
            || iter == params.max_inner_iters;
        if check_now {
            let pe = primal_energy(
                state,
                op,
                layout,
                sets,
                params.monotone_tol,
                params.primal_ascent_steps,
                params.dykstra_tol,
                &mut warm,
            );
            let de_last = dual_energy(state, grid, layout, data);
            let scale = 1.0 / avg_count as f64;
            let mut averaged = DiscreteState::zeros_like(state);
            for (t, a) in averaged.dual_x.iter_mut().zip(&avg.dual_x) {
                *t = a * scale;
            }
            for (t, a) in averaged.dual_y.iter_mut().zip(&avg.dual_y) {
                *t = a * scale;
            }
            for (t, a) in averaged.dual_s.iter_mut().zip(&avg.dual_s) {
                *t = a * scale;
            }
            let de_avg = dual_energy(&averaged, grid, layout, data);
            let de = de_last.max(de_avg);
            for x in avg.dual_x.iter_mut() {
                *x = 0.0;
            }
            for x in avg.dual_y.iter_mut() {
                *x = 0.0;
            }
            for x in avg.dual_s.iter_mut() {
                *x = 0.0;
            }
            avg_count = 0;
            outcome.energy_primal = pe.value;
            outcome.energy_dual = de;
            outcome.gap = if pe.unbounded_flag { f64::INFINITY } else { pe.value - de };
            outcome.checkpoints.push((pe.value, de));
            events(SolverEvent::Checkpoint {
                level,
                iter,
                primal: pe.value,
                dual: de,
                gap: outcome.gap,
                elements: grid.active_element_count(),
            });
            let rel_ok = outcome.gap < params.gap_tol * (1.0 + pe.value.abs());
            if rel_ok || stalled >= params.stall_iters {
                outcome.converged = rel_ok || stalled >= params.stall_iters;
                outcome.iters = iter;
                return Ok(outcome);
            }
        }
    }
    outcome.iters = params.max_inner_iters;
    Ok(outcome)
}

/// Runs the primal-dual iteration on a fixed grid until the duality gap or
/// the stall criterion triggers. The returned state is feasible for both
/// sets up to the projection tolerances.
#[allow(clippy::too_many_arguments)]
pub fn solve_on_grid(
    state: &mut DiscreteState,
    op: &PairingOperator,
    grid: &PrismGrid,
    layout: &NodeLayout,
    data: &BoundaryData,
    cost: &TransportCost,
    params: &SolverParams,
    events: &mut dyn FnMut(SolverEvent<'_>),
) -> Result<LevelRecord, SolverError> {
    let sets = build_column_sets(layout, cost);
    let fixed = FixedTrace::build(grid, layout, data);
    let start = std::time::Instant::now();
    let outcome = inner_loop(state, op, grid, layout, &sets, &fixed, data, params, 0, events)?;
    Ok(LevelRecord {
        level: 0,
        iters: outcome.iters,
        elements: grid.active_element_count(),
        dofs: layout.layered_dof_count,
        energy_primal: outcome.energy_primal,
        energy_dual: outcome.energy_dual,
        gap: outcome.gap,
        seconds: start.elapsed().as_secs_f64(),
        converged: outcome.converged,
        checkpoints: outcome.checkpoints,
    })
}

/// The adaptive outer loop: solve, refine by indicator, prolongate.
pub fn adaptive_solve(
    data: &BoundaryData,
    cost: &TransportCost,
    x_level: u32,
    s_level: u32,
    params: &SolverParams,
    events: &mut dyn FnMut(SolverEvent<'_>),
) -> Result<AdaptiveResult, SolverError> {
    let lift = if data.lift_height > 0.0 { data.lift_height } else { 1.0 };
    let mut grid = PrismGrid::uniform(data.domain, lift, x_level, s_level);
    let mut layout = NodeLayout::build(&grid);
    let mut state = DiscreteState::from_boundary_guess(&grid, &layout, data);
    let mut history: Vec<LevelRecord> = Vec::new();
    let mut budget_exhausted = false;

    for level in 0..=params.num_refinements {
        let op = assemble(&grid, &layout, data)?;
        let sets = build_column_sets(&layout, cost);
        let fixed = FixedTrace::build(&grid, &layout, data);
        let start = std::time::Instant::now();
        let outcome =
            inner_loop(&mut state, &op, &grid, &layout, &sets, &fixed, data, params, level, events)?;
        let record = LevelRecord {
            level,
            iters: outcome.iters,
            elements: grid.active_element_count(),
            dofs: layout.layered_dof_count,
            energy_primal: outcome.energy_primal,
            energy_dual: outcome.energy_dual,
            gap: outcome.gap,
            seconds: start.elapsed().as_secs_f64(),
            converged: outcome.converged,
            checkpoints: outcome.checkpoints,
        };
        if let Some(prev) = history.last() {
            if record.energy_primal.is_finite()
                && prev.energy_primal.is_finite()
                && record.energy_primal > 10.0 * prev.energy_primal.abs() + 1e-9
            {
                return Err(SolverError::Diverged {
                    level,
                    previous: prev.energy_primal,
                    current: record.energy_primal,
                });
            }
        }
        events(SolverEvent::LevelDone { record: &record, grid: &grid, layout: &layout, state: &state });
        history.push(record);

        if level == params.num_refinements {
            break;
        }
        if grid.active_element_count() >= params.max_elements {
            budget_exhausted = true;
            break;
        }
        let eta = match params.indicator {
            IndicatorKind::Gradient => indicator_gradient(&grid, &layout, &state),
            IndicatorKind::PdGap => {
                indicator_pd_gap(&grid, &layout, &state, cost, params.primal_ascent_steps, params.dykstra_tol)?
                    .eta
            }
            IndicatorKind::MaxOfBoth => {
                let a = indicator_gradient(&grid, &layout, &state);
                let b = indicator_pd_gap(
                    &grid,
                    &layout,
                    &state,
                    cost,
                    params.primal_ascent_steps,
                    params.dykstra_tol,
                )?
                .eta;
                combined_max(&a, &b)
            }
        };
        let old_grid = grid.clone();
        let old_layout = layout;
        mark_and_refine(&mut grid, &eta, params.lambda, params.refine_mode);
        layout = NodeLayout::build(&grid);
        state = prolongate(&old_grid, &old_layout, &state, &grid, &layout)?;
        if grid.active_element_count() > params.max_elements {
            budget_exhausted = true;
        }
    }

    let converged = history.last().map_or(false, |r| r.converged);
    Ok(AdaptiveResult { grid, layout, state, history, converged, budget_exhausted })
}
