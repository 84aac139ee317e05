//! Experiment configuration: a single JSON document describing the domain,
//! the boundary measures, the cost, grid levels, solver knobs and outputs.
//! Defaults are filled in and echoed back for provenance.

use crate::boundary::{BoundaryAtom, BoundaryData, BoundaryError, Domain};
use crate::cost::{CostError, TransportCost};
use crate::refine::{IndicatorKind, RefineMode};
use crate::solver::SolverParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config key '{key}': {message}")]
    Invalid { key: String, message: String },
    #[error("config key 'measures': {0}")]
    Boundary(#[from] BoundaryError),
    #[error("config key 'cost': {0}")]
    Cost(#[from] CostError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainConfig {
    pub width: f64,
    pub height: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig { width: 1.0, height: 1.0 }
    }
}

/// An atom is located either by arclength or by side name plus coordinate
/// (`x` for bottom/top, `y` for left/right).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub mass: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arclength: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coord: Option<f64>,
}

impl AtomConfig {
    pub fn at_arclength(arclength: f64, mass: f64) -> Self {
        AtomConfig { mass, arclength: Some(arclength), edge: None, coord: None }
    }

    fn resolve(&self, domain: &Domain, key: &str) -> Result<f64, ConfigError> {
        let (w, h) = domain.size();
        match (self.arclength, &self.edge, self.coord) {
            (Some(t), None, None) => Ok(t),
            (None, Some(edge), Some(c)) => match edge.as_str() {
                "bottom" => Ok(c),
                "right" => Ok(w + c),
                "top" => Ok(w + h + (w - c)),
                "left" => Ok(2.0 * w + h + (h - c)),
                other => Err(ConfigError::Invalid {
                    key: format!("{key}.edge"),
                    message: format!("unknown edge '{other}'"),
                }),
            },
            _ => Err(ConfigError::Invalid {
                key: key.to_string(),
                message: "specify either 'arclength' or 'edge' plus 'coord'".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MeasuresConfig {
    #[serde(default)]
    pub sources: Vec<AtomConfig>,
    #[serde(default)]
    pub sinks: Vec<AtomConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CostConfig {
    Bt { alpha: f64 },
    Up { a: f64, b: f64 },
    Steiner,
    Custom { table: Vec<(f64, f64)> },
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig::Bt { alpha: 0.5 }
    }
}

impl CostConfig {
    pub fn build(&self) -> Result<TransportCost, CostError> {
        match self {
            CostConfig::Bt { alpha } => TransportCost::branched(*alpha),
            CostConfig::Up { a, b } => TransportCost::urban(*a, *b),
            CostConfig::Steiner => Ok(TransportCost::Steiner),
            CostConfig::Custom { table } => TransportCost::custom(table.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub x_level: u32,
    pub s_level: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { x_level: 4, s_level: 2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub theta: f64,
    pub inner_tol: f64,
    pub gap_tol: f64,
    pub max_inner_iters: usize,
    pub num_refinements: usize,
    pub dykstra_tol: f64,
    pub dykstra_max_cycles: usize,
    pub gap_check_every: usize,
    pub primal_ascent_steps: usize,
    pub max_elements: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let p = SolverParams::default();
        SolverConfig {
            theta: p.theta,
            inner_tol: p.inner_tol,
            gap_tol: p.gap_tol,
            max_inner_iters: p.max_inner_iters,
            num_refinements: p.num_refinements,
            dykstra_tol: p.dykstra_tol,
            dykstra_max_cycles: p.dykstra_max_cycles,
            gap_check_every: p.gap_check_every,
            primal_ascent_steps: p.primal_ascent_steps,
            max_elements: p.max_elements,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementConfig {
    pub lambda: f64,
    pub indicator: IndicatorKind,
    pub mode: RefineMode,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig { lambda: 0.5, indicator: IndicatorKind::Gradient, mode: RefineMode::Both }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    pub measures: MeasuresConfig,
    pub cost: CostConfig,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub refinement: RefinementConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            domain: DomainConfig::default(),
            measures: MeasuresConfig::default(),
            cost: CostConfig::default(),
            grid: GridConfig::default(),
            solver: SolverConfig::default(),
            refinement: RefinementConfig::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn domain(&self) -> Result<Domain, ConfigError> {
        if self.domain.width <= 0.0 || self.domain.height <= 0.0 {
            return Err(ConfigError::Invalid {
                key: "domain".into(),
                message: "width and height must be positive".into(),
            });
        }
        Ok(Domain::rectangle(self.domain.width, self.domain.height))
    }

    pub fn boundary_data(&self) -> Result<BoundaryData, ConfigError> {
        let domain = self.domain()?;
        let mut atoms = Vec::new();
        for (i, a) in self.measures.sources.iter().enumerate() {
            let t = a.resolve(&domain, &format!("measures.sources[{i}]"))?;
            atoms.push(BoundaryAtom::source(t, a.mass));
        }
        for (i, a) in self.measures.sinks.iter().enumerate() {
            let t = a.resolve(&domain, &format!("measures.sinks[{i}]"))?;
            atoms.push(BoundaryAtom::sink(t, a.mass));
        }
        Ok(BoundaryData::build(domain, atoms)?)
    }

    pub fn cost(&self) -> Result<TransportCost, ConfigError> {
        Ok(self.cost.build()?)
    }

    pub fn solver_params(&self) -> Result<SolverParams, ConfigError> {
        if !(self.refinement.lambda > 0.0 && self.refinement.lambda < 1.0) {
            return Err(ConfigError::Invalid {
                key: "refinement.lambda".into(),
                message: format!("must lie in (0, 1), got {}", self.refinement.lambda),
            });
        }
        Ok(SolverParams {
            theta: self.solver.theta,
            inner_tol: self.solver.inner_tol,
            gap_tol: self.solver.gap_tol,
            max_inner_iters: self.solver.max_inner_iters,
            num_refinements: self.solver.num_refinements,
            lambda: self.refinement.lambda,
            indicator: self.refinement.indicator,
            refine_mode: self.refinement.mode,
            dykstra_tol: self.solver.dykstra_tol,
            dykstra_max_cycles: self.solver.dykstra_max_cycles,
            gap_check_every: self.solver.gap_check_every,
            primal_ascent_steps: self.solver.primal_ascent_steps,
            max_elements: self.solver.max_elements,
            ..Default::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_coordinates_resolve_to_arclengths() {
        let cfg = ExperimentConfig {
            measures: MeasuresConfig {
                sources: vec![AtomConfig {
                    mass: 1.0,
                    arclength: None,
                    edge: Some("top".into()),
                    coord: Some(0.5),
                }],
                sinks: vec![AtomConfig::at_arclength(0.5, 1.0)],
            },
            ..Default::default()
        };
        let data = cfg.boundary_data().unwrap();
        assert_eq!(data.jump_positions(), &[0.5, 2.5]);
    }

    #[test]
    fn bad_edge_name_reports_the_key() {
        let cfg = ExperimentConfig {
            measures: MeasuresConfig {
                sources: vec![AtomConfig {
                    mass: 1.0,
                    arclength: None,
                    edge: Some("diagonal".into()),
                    coord: Some(0.5),
                }],
                sinks: vec![],
            },
            ..Default::default()
        };
        let err = cfg.boundary_data().unwrap_err();
        assert!(err.to_string().contains("measures.sources[0].edge"));
    }

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.grid.x_level, 4);
        assert_eq!(back.solver.max_inner_iters, cfg.solver.max_inner_iters);
    }
}
