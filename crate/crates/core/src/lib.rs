//! Globally optimal two-dimensional branched-transport networks.
//!
//! The library solves the lifted convex saddle-point formulation of
//! generalized branched transport (branched transport, urban planning,
//! Steiner-type costs) on adaptive triangular-prism finite-element grids,
//! and cross-checks solutions with graph-flux oracles and calibration
//! certificates.
//!
//! Module map:
//! - [`cost`]: the concave transportation costs and derived quantities.
//! - [`boundary`]: rectangular domains, boundary measures and their
//!   cumulative image.
//! - [`grid`]: semi-regular triangular prism grids with x/s refinement.
//! - [`pairing`]: finite-element spaces and the exact primal/dual pairing.
//! - [`constraints`]: feasible sets and per-column Dykstra projections.
//! - [`solver`]: the primal-dual iteration and the adaptive outer loop.
//! - [`refine`]: refinement indicators and marking.
//! - [`analysis`]: energies, duality gap, network extraction, graph
//!   oracles, calibration certificates.
//! - [`verify`]: slow reference implementations (quadrature, dense
//!   projections) used to cross-check the fast paths in tests.
//! - [`config`]: serde types for the experiment configuration format.

pub mod analysis;
pub mod boundary;
pub mod config;
pub mod constraints;
pub mod cost;
pub(crate) mod geom;
pub mod grid;
pub mod pairing;
pub mod refine;
pub mod solver;
pub mod verify;

pub use boundary::{BoundaryAtom, BoundaryData, Domain, MassSign};
pub use cost::TransportCost;
pub use grid::{NodeLayout, PrismGrid};
pub use pairing::{DiscreteState, PairingOperator};
pub use solver::{AdaptiveResult, SolverParams};

/// Test/diagnostic re-exports of internal quadrature helpers.
pub fn geom_positive_part_integral(verts: [[f64; 2]; 3], vals: [f64; 3]) -> f64 {
    geom::positive_part_integral(verts, vals)
}
pub fn geom_abs_integral(verts: [[f64; 2]; 3], vals: [f64; 3]) -> f64 {
    geom::abs_integral(verts, vals)
}
