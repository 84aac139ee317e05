//! Weighted directed geometric graphs used as the independent energy
//! oracle for transport networks.

use crate::cost::TransportCost;
use crate::geom::{self, Point2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("divergence violated at vertex {vertex}: residual {residual}")]
    Divergence { vertex: usize, residual: f64 },
}

/// A directed graph with positive edge weights and signed vertex supplies
/// (positive for sources, negative for sinks). The discrete divergence at
/// every vertex must match its supply.
#[derive(Debug, Clone, Default)]
pub struct GraphFlux {
    pub vertices: Vec<Point2>,
    /// `(from, to, mass)` with mass > 0.
    pub edges: Vec<(usize, usize, f64)>,
    pub supply: Vec<f64>,
}

impl GraphFlux {
    /// Verifies `outflow - inflow = supply` at every vertex within `tol`.
    pub fn check_divergence(&self, tol: f64) -> Result<(), GraphError> {
        let mut residual = vec![0.0; self.vertices.len()];
        for &(from, to, w) in &self.edges {
            residual[from] += w;
            residual[to] -= w;
        }
        let mut worst = (0usize, 0.0f64);
        for (v, r) in residual.iter().enumerate() {
            let err = (r - self.supply[v]).abs();
            if err > worst.1 {
                worst = (v, err);
            }
        }
        if worst.1 > tol {
            return Err(GraphError::Divergence { vertex: worst.0, residual: worst.1 });
        }
        Ok(())
    }

    pub fn total_length(&self) -> f64 {
        self.edges
            .iter()
            .map(|&(a, b, _)| geom::dist(self.vertices[a], self.vertices[b]))
            .sum()
    }
}

/// Transport cost of a graph flux: `sum tau(mass) * length` over edges.
pub fn graph_energy(g: &GraphFlux, cost: &TransportCost) -> Result<f64, GraphError> {
    g.check_divergence(1e-9)?;
    Ok(g
        .edges
        .iter()
        .map(|&(a, b, w)| cost.eval_nonneg(w) * geom::dist(g.vertices[a], g.vertices[b]))
        .sum())
}

/// First-order optimality residual of a triple junction: zero exactly when
/// `tau(m1) e1 + tau(m2) e2 = tau(m1 + m2) e0` for unit vectors `e0` up the
/// trunk and `e1`, `e2` down the branches.
pub fn angle_condition_residual(
    e0: Point2,
    e1: Point2,
    e2: Point2,
    m1: f64,
    m2: f64,
    cost: &TransportCost,
) -> [f64; 2] {
    let t1 = cost.eval_nonneg(m1);
    let t2 = cost.eval_nonneg(m2);
    let t0 = cost.eval_nonneg(m1 + m2);
    [
        t1 * e1[0] + t2 * e2[0] - t0 * e0[0],
        t1 * e1[1] + t2 * e2[1] - t0 * e0[1],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bt(alpha: f64) -> TransportCost {
        TransportCost::branched(alpha).unwrap()
    }

    #[test]
    fn single_edge_energy() {
        let g = GraphFlux {
            vertices: vec![[0.0, 0.0], [1.0, 0.0]],
            edges: vec![(0, 1, 1.0)],
            supply: vec![1.0, -1.0],
        };
        assert!((graph_energy(&g, &bt(0.5)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unit_disk_triple_junction_energy() {
        // three unit radii carrying masses 2, 1, 1: energy = tau(2) + 2 tau(1)
        let c = bt(0.5);
        let th = std::f64::consts::FRAC_PI_4;
        let e1 = [th.sin(), th.cos()];
        let e2 = [-th.sin(), th.cos()];
        let g = GraphFlux {
            vertices: vec![[0.0, -1.0], [0.0, 0.0], e1, e2],
            edges: vec![(0, 1, 2.0), (1, 2, 1.0), (1, 3, 1.0)],
            supply: vec![2.0, 0.0, -1.0, -1.0],
        };
        let e = graph_energy(&g, &c).unwrap();
        assert!((e - (2.0 + 2.0_f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn divergence_violation_reports_worst_vertex() {
        let g = GraphFlux {
            vertices: vec![[0.0, 0.0], [1.0, 0.0]],
            edges: vec![(0, 1, 1.0)],
            supply: vec![1.0, -0.5],
        };
        match graph_energy(&g, &bt(0.5)) {
            Err(GraphError::Divergence { vertex, residual }) => {
                assert_eq!(vertex, 1);
                assert!((residual - 0.5).abs() < 1e-12);
            }
            other => panic!("expected divergence error, got {other:?}"),
        }
    }

    #[test]
    fn merged_trunk_vs_straight_lines_depends_on_alpha() {
        // two unit masses from (0.25, 1), (0.75, 1) to (0.25, 0), (0.75, 0)
        let straight = |cost: &TransportCost| 2.0 * cost.eval_nonneg(1.0);
        let merged = |cost: &TransportCost| {
            // join at (0.5, 0.75), trunk to (0.5, 0.25), split
            let leg = geom::dist([0.25, 1.0], [0.5, 0.75]);
            4.0 * cost.eval_nonneg(1.0) * leg + cost.eval_nonneg(2.0) * 0.5
        };
        let low = bt(0.2);
        let high = bt(0.95);
        assert!(merged(&low) < straight(&low), "strong concavity favours merging");
        assert!(merged(&high) > straight(&high), "near-linear cost favours straight lines");
    }

    #[test]
    fn angle_condition_symmetric_cases() {
        let c = bt(0.5);
        // symmetric junction: cos(theta) = tau(2) / (2 tau(1)) = sqrt(2)/2
        let theta = (2.0_f64.sqrt() / 2.0).acos();
        let e0 = [0.0, 1.0];
        let e1 = [theta.sin(), theta.cos()];
        let e2 = [-theta.sin(), theta.cos()];
        let r = angle_condition_residual(e0, e1, e2, 1.0, 1.0, &c);
        assert!(r[0].abs() < 1e-12 && r[1].abs() < 1e-12);
        // collinear case leaves the subadditivity defect
        let r = angle_condition_residual(e0, e0, e0, 1.0, 1.0, &c);
        let defect = 2.0 * c.eval_nonneg(1.0) - c.eval_nonneg(2.0);
        assert!((r[1] - defect).abs() < 1e-12 && defect > 0.0);
        // urban planning: tau(1) = 2, tau(2) = 3, cos(theta) = 3/4
        let up = TransportCost::urban(5.0, 1.0).unwrap();
        let theta = (0.75_f64).acos();
        let e1 = [theta.sin(), theta.cos()];
        let e2 = [-theta.sin(), theta.cos()];
        let r = angle_condition_residual(e0, e1, e2, 1.0, 1.0, &up);
        assert!(r[0].abs() < 1e-12 && r[1].abs() < 1e-12);
    }
}
