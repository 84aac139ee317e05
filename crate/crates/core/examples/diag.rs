use liftnet::analysis::energy::{dual_energy, primal_energy};
use liftnet::boundary::{BoundaryAtom, BoundaryData, Domain};
use liftnet::constraints::build_column_sets;
use liftnet::cost::TransportCost;
use liftnet::grid::NodeLayout;
use liftnet::pairing::assemble;
use liftnet::solver::{adaptive_solve, SolverParams};

fn main() {
    let data = BoundaryData::build(
        Domain::unit_square(),
        vec![BoundaryAtom::source(2.5, 1.0), BoundaryAtom::sink(0.5, 1.0)],
    )
    .unwrap();
    let cost = TransportCost::branched(0.5).unwrap();
    let params = SolverParams {
        num_refinements: 1,
        max_inner_iters: 3000,
        gap_check_every: 500,
        ..Default::default()
    };
    let r = adaptive_solve(&data, &cost, 3, 2, &params, &mut |_| {}).unwrap();
    let grid = &r.grid;
    let layout = &r.layout;
    let state = &r.state;
    let op = assemble(grid, layout, &data).unwrap();
    let sets = build_column_sets(layout, &cost);
    let mut warm = Vec::new();
    let pe = primal_energy(state, &op, layout, &sets, 1e-6, 12, 1e-8, &mut warm);
    let de = dual_energy(state, grid, layout, &data);
    let b = op.pairing_value(state);
    // positive divergence mass
    let mut pos_div = 0.0;
    let mut abs_div = 0.0;
    for tri in grid.active_tris() {
        let pts = grid.tri_points(tri);
        for &el in grid.column_elements(tri) {
            let e = grid.element(el);
            let h = e.s.height_fraction() * grid.lift_height;
            let div = liftnet::analysis::energy::element_divergence(state, grid, layout, el);
            pos_div += h * liftnet::geom_positive_part_integral(pts, div);
            abs_div += h * liftnet::geom_abs_integral(pts, div);
        }
    }
    println!("B = {b:.6}");
    println!("primal_energy = {:.6} (flag {})", pe.value, pe.unbounded_flag);
    println!("dual_energy   = {de:.6}");
    println!("pos_div mass  = {pos_div:.6}");
    println!("abs_div mass  = {abs_div:.6}");
    // dual field magnitude at boundary columns vs interior
    let mut bnd = 0.0f64;
    let mut int = 0.0f64;
    for col in &layout.columns {
        for k in 0..col.interval_count() {
            let m = state.dual_x[col.layered_base + k]
                .hypot(state.dual_y[col.layered_base + k]);
            if col.on_boundary {
                bnd = bnd.max(m);
            } else {
                int = int.max(m);
            }
        }
    }
    println!("max |phi| boundary {bnd:.4} interior {int:.4}");
}
