//! Energies, duality gap, network extraction, graph-flux oracles and
//! calibration certificates.

pub mod calibrate;
pub mod energy;
pub mod extract;
pub mod graph;
pub mod topology;

pub use calibrate::{diffuse_flux_condition, triple_junction_certificate, CalibrationField};
pub use energy::{dual_energy, primal_energy, GapEstimate, PrimalEnergy};
pub use extract::{extract_network, node_image, NetworkExtract};
pub use graph::{angle_condition_residual, graph_energy, GraphFlux};
pub use topology::{builtin_candidates, optimize_topology, oracle_best_network, Topology};
