use liftnet::boundary::{BoundaryAtom, BoundaryData, Domain};
use liftnet::cost::TransportCost;
use liftnet::solver::{adaptive_solve, SolverEvent, SolverParams};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let iters: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(50_000);
    let xl: u32 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2);
    let sl: u32 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let data = BoundaryData::build(
        Domain::unit_square(),
        vec![BoundaryAtom::source(2.5, 1.0), BoundaryAtom::sink(0.5, 1.0)],
    )
    .unwrap();
    let cost = TransportCost::branched(0.5).unwrap();
    let params = SolverParams {
        num_refinements: 0,
        max_inner_iters: iters,
        gap_check_every: iters / 10,
        gap_tol: 1e-9,
        inner_tol: 0.0,
        ..Default::default()
    };
    adaptive_solve(&data, &cost, xl, sl, &params, &mut |e| {
        if let SolverEvent::Checkpoint { iter, primal, dual, gap, .. } = e {
            println!("iter={iter} primal={primal:.6} dual={dual:.6} gap={gap:.6}");
        }
    })
    .unwrap();
}
