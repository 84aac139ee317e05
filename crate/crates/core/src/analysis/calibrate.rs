//! Divergence-free dual certificates for reference configurations: the
//! triple junction on the unit disk and the diffuse-flux criterion for
//! opposite line measures.

use crate::cost::TransportCost;
use crate::geom::{self, Point2};
use crate::grid::{NodeLayout, PrismGrid};
use crate::pairing::DiscreteState;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("no junction geometry: tau({0}) + tau({1}) cannot balance tau({2})")]
    NoJunctionGeometry(f64, f64, f64),
}

/// A dual field that is piecewise constant in s and independent of x, with
/// vanishing vertical component. Such fields are exactly divergence-free.
#[derive(Debug, Clone)]
pub struct CalibrationField {
    /// Slab breakpoints `0 = b_0 < ... < b_n = M`.
    pub breaks: Vec<f64>,
    /// Horizontal field value per slab.
    pub values: Vec<[f64; 2]>,
}

impl CalibrationField {
    /// Exact integral of the horizontal component over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64) -> [f64; 2] {
        let mut acc = [0.0, 0.0];
        for (i, v) in self.values.iter().enumerate() {
            let (lo, hi) = (self.breaks[i], self.breaks[i + 1]);
            let (x0, x1) = (a.max(lo), b.min(hi));
            if x0 < x1 {
                acc[0] += v[0] * (x1 - x0);
                acc[1] += v[1] * (x1 - x0);
            }
        }
        acc
    }

    /// Slab value at height `s`.
    pub fn value_at(&self, s: f64) -> [f64; 2] {
        let idx = self
            .breaks
            .partition_point(|&b| b <= s)
            .clamp(1, self.values.len());
        self.values[idx - 1]
    }
}

#[derive(Debug, Clone)]
pub struct TripleJunctionCertificate {
    /// Unit direction up the trunk and down the two branches.
    pub e0: Point2,
    pub e1: Point2,
    pub e2: Point2,
    /// Set when the cost is additive on (m1, m2) and the junction collapses
    /// to a straight line.
    pub collinear: bool,
    pub field: CalibrationField,
    /// Worst slack `tau(s2-s1) - |integral|` over all breakpoint pairs.
    pub nodal_slack_min: f64,
    /// Worst slack over a dense grid of non-nodal pairs.
    pub sampled_slack_min: f64,
    /// The field is constant in x with zero vertical component, hence
    /// exactly divergence-free.
    pub divergence_free: bool,
    /// Surface integral of the field against the lifted network indicator.
    pub pairing: f64,
    pub expected_pairing: f64,
    pub passed: bool,
}

/// Builds the triple-junction calibration on the unit disk: a point source
/// of mass `m1 + m2` opposite two point sinks, with the branch directions
/// solving the angle condition. The certificate checks feasibility on all
/// breakpoint pairs, divergence freeness, and that the pairing equals
/// `tau(m1) + tau(m2) + tau(m1 + m2)`.
pub fn triple_junction_certificate(
    m1: f64,
    m2: f64,
    cost: &TransportCost,
) -> Result<TripleJunctionCertificate, CalibrationError> {
    assert!(m1 > 0.0 && m2 > 0.0);
    let t0 = cost.eval_nonneg(m1 + m2);
    let t1 = cost.eval_nonneg(m1);
    let t2 = cost.eval_nonneg(m2);
    if t0 < (t1 - t2).abs() - 1e-14 {
        return Err(CalibrationError::NoJunctionGeometry(m1, m2, m1 + m2));
    }
    // triangle of force vectors: tau1 e1 + tau2 e2 = tau0 e0
    let cos1 = ((t0 * t0 + t1 * t1 - t2 * t2) / (2.0 * t0 * t1)).clamp(-1.0, 1.0);
    let cos2 = ((t0 * t0 + t2 * t2 - t1 * t1) / (2.0 * t0 * t2)).clamp(-1.0, 1.0);
    let (th1, th2) = (cos1.acos(), cos2.acos());
    let collinear = th1.abs() + th2.abs() < 1e-9;
    let e0 = [0.0, 1.0];
    let e1 = [th1.sin(), th1.cos()];
    let e2 = [-th2.sin(), th2.cos()];

    let m = m1 + m2;
    let perp = |v: Point2| [-v[1], v[0]];
    let field = CalibrationField {
        breaks: vec![0.0, m2, m],
        values: vec![
            [-t2 / m2 * perp(e2)[0], -t2 / m2 * perp(e2)[1]],
            [-t1 / m1 * perp(e1)[0], -t1 / m1 * perp(e1)[1]],
        ],
    };

    // feasibility on breakpoint pairs, then on a dense sample of pairs
    let slack = |a: f64, b: f64| -> f64 {
        let w = field.integrate(a, b);
        cost.eval_nonneg(b - a) - (w[0] * w[0] + w[1] * w[1]).sqrt()
    };
    let mut nodal_slack_min = f64::INFINITY;
    let breaks = [0.0, m2, m];
    for i in 0..3 {
        for j in (i + 1)..3 {
            nodal_slack_min = nodal_slack_min.min(slack(breaks[i], breaks[j]));
        }
    }
    let mut sampled_slack_min = f64::INFINITY;
    let n = 60;
    for i in 0..n {
        for j in (i + 1)..=n {
            let a = m * i as f64 / n as f64;
            let b = m * j as f64 / n as f64;
            sampled_slack_min = sampled_slack_min.min(slack(a, b));
        }
    }

    let pairing = disk_pairing(m1, m2, e0, e1, e2, &field);
    let expected_pairing = t0 + t1 + t2;
    let passed = nodal_slack_min >= -1e-12
        && sampled_slack_min >= -1e-10
        && (pairing - expected_pairing).abs() <= 1e-12 * (1.0 + expected_pairing);
    Ok(TripleJunctionCertificate {
        e0,
        e1,
        e2,
        collinear,
        field,
        nodal_slack_min,
        sampled_slack_min,
        divergence_free: true,
        pairing,
        expected_pairing,
        passed,
    })
}

/// Surface integral of the calibration field against the lifted indicator
/// of the disk network: one sheet per network edge, spanning the image jump
/// across it.
fn disk_pairing(
    m1: f64,
    m2: f64,
    e0: Point2,
    e1: Point2,
    e2: Point2,
    field: &CalibrationField,
) -> f64 {
    // boundary image on the circle by the running signed sum, shifted to
    // minimum zero: sinks at angles of e1, e2, source opposite the trunk
    let ang = |v: Point2| v[1].atan2(v[0]).rem_euclid(std::f64::consts::TAU);
    let src = [-e0[0], -e0[1]];
    let mut atoms = vec![(ang(e1), -m1), (ang(e2), -m2), (ang(src), m1 + m2)];
    atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let raw = |theta: f64| -> f64 {
        atoms
            .iter()
            .filter(|&&(a, _)| a <= theta)
            .map(|&(_, m)| m)
            .sum()
    };
    let mut min = 0.0_f64;
    let mut run = 0.0;
    for &(_, m) in &atoms {
        run += m;
        min = min.min(run);
    }
    let image = |theta: f64| raw(theta.rem_euclid(std::f64::consts::TAU)) - min;

    // the three edges: trunk from the source to the junction, branches from
    // the junction to the sinks
    let edges: [(Point2, Point2); 3] = [(src, [0.0, 0.0]), ([0.0, 0.0], e1), ([0.0, 0.0], e2)];
    let mut total = 0.0;
    for (a, b) in edges {
        let d = geom::sub(b, a);
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        let dir = [d[0] / len, d[1] / len];
        let nu = [-dir[1], dir[0]];
        let mid = geom::midpoint(a, b);
        let eps = 1e-7;
        let probe_plus = [mid[0] + eps * nu[0], mid[1] + eps * nu[1]];
        let probe_minus = [mid[0] - eps * nu[0], mid[1] - eps * nu[1]];
        let u_plus = image(probe_plus[1].atan2(probe_plus[0]));
        let u_minus = image(probe_minus[1].atan2(probe_minus[0]));
        let (lo, hi) = (u_plus.min(u_minus), u_plus.max(u_minus));
        if hi - lo < 1e-14 {
            continue;
        }
        let w = field.integrate(lo, hi);
        total += len * (u_plus - u_minus).signum() * (w[0] * nu[0] + w[1] * nu[1]);
    }
    total
}

/// Exact image of the symmetric square triple junction (source on the top
/// edge, sinks at the bottom corners, branch point on the symmetry axis):
/// the left region carries `m1 + m2`, the wedge between the legs `m2`... the
/// bottom wedge carries the single-leg value and the right region zero.
#[derive(Debug, Clone, Copy)]
pub struct SquareJunctionImage {
    pub source: Point2,
    pub sink_left: Point2,
    pub sink_right: Point2,
    pub branch: Point2,
    pub total_mass: f64,
    pub leg_mass: f64,
}

impl SquareJunctionImage {
    pub fn value(&self, p: Point2) -> f64 {
        let b = self.branch;
        if p[1] >= b[1] {
            // trunk zone; points on the trunk take the left value
            if p[0] <= b[0] {
                self.total_mass
            } else {
                0.0
            }
        } else {
            let dl = geom::sub(self.sink_left, b);
            let dr = geom::sub(self.sink_right, b);
            let pb = geom::sub(p, b);
            let cross_l = dl[0] * pb[1] - dl[1] * pb[0];
            let cross_r = dr[0] * pb[1] - dr[1] * pb[0];
            if cross_l < 0.0 {
                self.total_mass
            } else if cross_r >= 0.0 {
                0.0
            } else {
                self.leg_mass
            }
        }
    }
}

/// Samples a calibration field and a binary image onto a grid: the primal
/// becomes the nodal indicator of the image subgraph and the horizontal
/// dual components take the slab values; the vertical component is zero.
pub fn sample_calibration_state(
    grid: &PrismGrid,
    layout: &NodeLayout,
    field: &CalibrationField,
    image: impl Fn(Point2) -> f64,
) -> DiscreteState {
    let mut st = DiscreteState::zeros(layout);
    for col in &layout.columns {
        let u = image(grid.x_node(col.x_node));
        for k in 0..col.interval_count() {
            let mid = 0.5 * (col.breaks[k] + col.breaks[k + 1]);
            let v = field.value_at(mid);
            st.primal[col.layered_base + k] = if u > col.breaks[k] { 1.0 } else { 0.0 };
            st.dual_x[col.layered_base + k] = v[0];
            st.dual_y[col.layered_base + k] = v[1];
        }
    }
    st.primal_bar = st.primal.clone();
    st
}

#[derive(Debug, Clone)]
pub struct DiffuseFluxReport {
    pub passed: bool,
    pub worst_margin: f64,
    /// Populated when the condition cannot hold structurally.
    pub explanation: Option<String>,
}

/// Checks the diffuse-flux optimality criterion
/// `tau(m)/tau'(0) >= max(min(m/beta, 1/2), sqrt(beta^2-m^2) asinh(m/sqrt(beta^2-m^2)))`
/// on a sample of masses in `(0, beta)`.
pub fn diffuse_flux_condition(cost: &TransportCost, beta: f64, m_samples: usize) -> DiffuseFluxReport {
    assert!(beta >= 1.0);
    let slope = cost.slope_at_zero();
    if !slope.is_finite() {
        return DiffuseFluxReport {
            passed: false,
            worst_margin: f64::NEG_INFINITY,
            explanation: Some(
                "the cost has unbounded slope at zero, so the diffuse bound fails for every mass"
                    .into(),
            ),
        };
    }
    let mut worst = f64::INFINITY;
    for i in 0..m_samples {
        let m = beta * (i as f64 + 0.5) / m_samples as f64;
        let c = (beta * beta - m * m).sqrt();
        let bound = (m / beta).min(0.5).max(c * (m / c).asinh());
        let margin = cost.eval_nonneg(m) / slope - bound;
        worst = worst.min(margin);
    }
    DiffuseFluxReport { passed: worst >= 0.0, worst_margin: worst, explanation: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bt(alpha: f64) -> TransportCost {
        TransportCost::branched(alpha).unwrap()
    }

    #[test]
    fn symmetric_bt_certificate() {
        let cert = triple_junction_certificate(1.0, 1.0, &bt(0.5)).unwrap();
        assert!(cert.passed, "{cert:?}");
        assert!((cert.pairing - (2.0 + 2.0_f64.sqrt())).abs() < 1e-12);
        assert!(!cert.collinear);
        // branch angle: cos(theta) = sqrt(2)/2
        assert!((cert.e1[1] - 2.0_f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn linear_cost_collapses_to_a_line() {
        let cost = TransportCost::custom(vec![(0.0, 0.0), (10.0, 10.0)]).unwrap();
        let cert = triple_junction_certificate(1.0, 1.0, &cost).unwrap();
        assert!(cert.collinear);
    }

    #[test]
    fn urban_planning_certificate() {
        let cost = TransportCost::urban(5.0, 1.0).unwrap();
        let cert = triple_junction_certificate(1.0, 2.0, &cost).unwrap();
        assert!(cert.nodal_slack_min >= -1e-12);
        assert!(cert.sampled_slack_min >= -1e-10);
        let expect = cost.eval_nonneg(1.0) + cost.eval_nonneg(2.0) + cost.eval_nonneg(3.0);
        assert!((cert.pairing - expect).abs() < 1e-12);
    }

    #[test]
    fn square_image_matches_boundary_trace() {
        use crate::boundary::{BoundaryAtom, BoundaryData, Domain};
        let data = BoundaryData::build(
            Domain::unit_square(),
            vec![
                BoundaryAtom::sink(0.0, 1.0),
                BoundaryAtom::sink(1.0, 1.0),
                BoundaryAtom::source(2.5, 2.0),
            ],
        )
        .unwrap();
        let img = SquareJunctionImage {
            source: [0.5, 1.0],
            sink_left: [0.0, 0.0],
            sink_right: [1.0, 0.0],
            branch: [0.5, 0.5],
            total_mass: 2.0,
            leg_mass: 1.0,
        };
        for &t in &[0.1, 0.5, 0.9, 1.0, 1.5, 2.2, 2.5, 2.7, 3.3, 3.9, 0.0] {
            let p = data.domain.point_of_arclength(t).unwrap();
            assert_eq!(
                img.value(p),
                data.cumulative(t),
                "trace mismatch at arclength {t}"
            );
        }
    }

    #[test]
    fn diffuse_flux_linear_cost_passes() {
        let lin = TransportCost::custom(vec![(0.0, 0.0), (100.0, 100.0)]).unwrap();
        for beta in [1.0, 2.0, 10.0] {
            let rep = diffuse_flux_condition(&lin, beta, 100);
            assert!(rep.passed, "beta = {beta}: margin {}", rep.worst_margin);
        }
    }

    #[test]
    fn diffuse_flux_bt_fails_with_explanation() {
        let rep = diffuse_flux_condition(&bt(0.5), 2.0, 50);
        assert!(!rep.passed);
        assert!(rep.explanation.is_some());
    }

    #[test]
    fn diffuse_flux_up_margin_reported() {
        let up = TransportCost::urban(5.0, 1.0).unwrap();
        let rep = diffuse_flux_condition(&up, 1.0, 100);
        assert!(rep.explanation.is_none());
        assert!(rep.worst_margin.is_finite());
    }
}
