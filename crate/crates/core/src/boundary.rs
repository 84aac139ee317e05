//! The rectangular domain, boundary source/sink measures and the cumulative
//! boundary image they induce.
//!
//! The boundary is parameterized counterclockwise by arclength starting at
//! the origin corner, traversing bottom, right, top, left. The cumulative
//! image at arclength `t` is the signed mass of all atoms with arclength
//! `<= t` (sources positive, sinks negative), shifted so that its minimum is
//! zero. Its maximum is the lifting height `M`.

use crate::geom::Point2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const GEOM_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum BoundaryError {
    #[error("unbalanced measures: net mass {0}")]
    Unbalanced(f64),
    #[error("point ({0}, {1}) does not lie on the domain boundary")]
    OffBoundary(f64, f64),
    #[error("arclength {0} outside [0, {1})")]
    ArclengthOutOfRange(f64, f64),
    #[error("atom mass must be positive, got {0}")]
    NonPositiveMass(f64),
}

/// The computational domain. Only axis-aligned rectangles with the lower-left
/// corner at the origin are implemented; the enum leaves room for other
/// shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Rectangle { width: f64, height: f64 },
}

impl Domain {
    pub fn unit_square() -> Self {
        Domain::Rectangle { width: 1.0, height: 1.0 }
    }

    pub fn rectangle(width: f64, height: f64) -> Self {
        assert!(width > 0.0 && height > 0.0);
        Domain::Rectangle { width, height }
    }

    pub fn size(&self) -> (f64, f64) {
        match *self {
            Domain::Rectangle { width, height } => (width, height),
        }
    }

    pub fn perimeter(&self) -> f64 {
        let (w, h) = self.size();
        2.0 * (w + h)
    }

    pub fn area(&self) -> f64 {
        let (w, h) = self.size();
        w * h
    }

    pub fn corners(&self) -> [Point2; 4] {
        let (w, h) = self.size();
        [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]]
    }

    /// Snaps coordinates within `1e-12` of a side onto the side exactly.
    pub fn snap_to_boundary(&self, p: Point2) -> Point2 {
        let (w, h) = self.size();
        let snap = |v: f64, target: f64| if (v - target).abs() < GEOM_TOL { target } else { v };
        let x = snap(snap(p[0], 0.0), w);
        let y = snap(snap(p[1], 0.0), h);
        [x, y]
    }

    pub fn on_boundary(&self, p: Point2) -> bool {
        let (w, h) = self.size();
        let p = self.snap_to_boundary(p);
        let inside =
            p[0] >= -GEOM_TOL && p[0] <= w + GEOM_TOL && p[1] >= -GEOM_TOL && p[1] <= h + GEOM_TOL;
        inside && (p[0] == 0.0 || p[0] == w || p[1] == 0.0 || p[1] == h)
    }

    /// Arclength of a boundary point; corner arclengths belong to the
    /// outgoing side in counterclockwise order.
    pub fn arclength_of_point(&self, p: Point2) -> Result<f64, BoundaryError> {
        let (w, h) = self.size();
        let p = self.snap_to_boundary(p);
        if !self.on_boundary(p) {
            return Err(BoundaryError::OffBoundary(p[0], p[1]));
        }
        // Corners first so each maps to its outgoing edge.
        if p == [0.0, 0.0] {
            return Ok(0.0);
        }
        if p == [w, 0.0] {
            return Ok(w);
        }
        if p == [w, h] {
            return Ok(w + h);
        }
        if p == [0.0, h] {
            return Ok(2.0 * w + h);
        }
        if p[1] == 0.0 {
            Ok(p[0])
        } else if p[0] == w {
            Ok(w + p[1])
        } else if p[1] == h {
            Ok(w + h + (w - p[0]))
        } else {
            Ok(2.0 * w + h + (h - p[1]))
        }
    }

    pub fn point_of_arclength(&self, t: f64) -> Result<Point2, BoundaryError> {
        let (w, h) = self.size();
        let perim = self.perimeter();
        if !(0.0..perim).contains(&t) {
            return Err(BoundaryError::ArclengthOutOfRange(t, perim));
        }
        let p = if t < w {
            [t, 0.0]
        } else if t < w + h {
            [w, t - w]
        } else if t < 2.0 * w + h {
            [w - (t - w - h), h]
        } else {
            [0.0, h - (t - 2.0 * w - h)]
        };
        Ok(self.snap_to_boundary(p))
    }

    /// Nearest boundary point (used for the initial-guess extension of the
    /// boundary image into the interior). Ties pick the side checked first
    /// in bottom, right, top, left order.
    pub fn nearest_boundary_point(&self, p: Point2) -> Point2 {
        let (w, h) = self.size();
        let clamp = |v: f64, lo: f64, hi: f64| v.max(lo).min(hi);
        let candidates = [
            [clamp(p[0], 0.0, w), 0.0],
            [w, clamp(p[1], 0.0, h)],
            [clamp(p[0], 0.0, w), h],
            [0.0, clamp(p[1], 0.0, h)],
        ];
        let mut best = candidates[0];
        let mut best_d = f64::INFINITY;
        for c in candidates {
            let d = crate::geom::dist(p, c);
            if d < best_d - GEOM_TOL {
                best_d = d;
                best = c;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MassSign {
    Source,
    Sink,
}

/// A point mass on the boundary, located by arclength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryAtom {
    pub arclength: f64,
    pub mass: f64,
    pub sign: MassSign,
}

impl BoundaryAtom {
    pub fn source(arclength: f64, mass: f64) -> Self {
        BoundaryAtom { arclength, mass, sign: MassSign::Source }
    }
    pub fn sink(arclength: f64, mass: f64) -> Self {
        BoundaryAtom { arclength, mass, sign: MassSign::Sink }
    }
    fn signed_mass(&self) -> f64 {
        match self.sign {
            MassSign::Source => self.mass,
            MassSign::Sink => -self.mass,
        }
    }
}

/// Boundary measures together with the induced cumulative boundary image.
///
/// `steps` holds the piecewise-constant, right-continuous cumulative
/// function: `steps[k]` is the value on `[positions[k], positions[k+1])`,
/// with the value before the first atom stored in `value_before_first`.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    pub domain: Domain,
    pub atoms: Vec<BoundaryAtom>,
    pub lift_height: f64,
    positions: Vec<f64>,
    steps: Vec<f64>,
    value_before_first: f64,
}

impl BoundaryData {
    /// Builds the cumulative image as the running signed sum of the atoms in
    /// arclength order, shifted so its minimum is zero. Atoms at identical
    /// arclengths merge by signed sum; zero-net positions are dropped.
    pub fn build(domain: Domain, atoms: Vec<BoundaryAtom>) -> Result<Self, BoundaryError> {
        let perim = domain.perimeter();
        for a in &atoms {
            if a.mass <= 0.0 {
                return Err(BoundaryError::NonPositiveMass(a.mass));
            }
            if !(0.0..perim).contains(&a.arclength) {
                return Err(BoundaryError::ArclengthOutOfRange(a.arclength, perim));
            }
        }
        let net: f64 = atoms.iter().map(|a| a.signed_mass()).sum();
        if net.abs() > 1e-10 {
            return Err(BoundaryError::Unbalanced(net));
        }

        let mut merged: Vec<(f64, f64)> = Vec::new();
        let mut sorted = atoms.clone();
        sorted.sort_by(|a, b| a.arclength.partial_cmp(&b.arclength).unwrap());
        for a in &sorted {
            match merged.last_mut() {
                Some((t, m)) if *t == a.arclength => *m += a.signed_mass(),
                _ => merged.push((a.arclength, a.signed_mass())),
            }
        }
        merged.retain(|&(_, m)| m != 0.0);

        let mut positions = Vec::with_capacity(merged.len());
        let mut steps = Vec::with_capacity(merged.len());
        let mut run = 0.0;
        for (t, m) in &merged {
            run += m;
            positions.push(*t);
            steps.push(run);
        }
        let min = steps.iter().cloned().fold(0.0_f64, f64::min);
        for s in &mut steps {
            *s -= min;
        }
        let value_before_first = -min;
        let lift_height = steps.iter().cloned().fold(value_before_first, f64::max);
        Ok(BoundaryData {
            domain,
            atoms,
            lift_height,
            positions,
            steps,
            value_before_first,
        })
    }

    /// The cumulative image at arclength `t` (right-continuous: an atom's
    /// jump takes effect at its own arclength).
    pub fn cumulative(&self, t: f64) -> f64 {
        let idx = self.positions.partition_point(|&p| p <= t);
        if idx == 0 {
            self.value_before_first
        } else {
            self.steps[idx - 1]
        }
    }

    /// The cumulative image at a boundary point.
    pub fn cumulative_at_point(&self, p: Point2) -> Result<f64, BoundaryError> {
        Ok(self.cumulative(self.domain.arclength_of_point(p)?))
    }

    /// The binary lifted trace: 1 where the cumulative image exceeds `s`.
    pub fn trace(&self, p: Point2, s: f64) -> Result<u8, BoundaryError> {
        let u = self.cumulative_at_point(p)?;
        Ok(if u > s { 1 } else { 0 })
    }

    /// Total source mass.
    pub fn total_source_mass(&self) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.sign == MassSign::Source)
            .map(|a| a.mass)
            .sum()
    }

    /// Arclength positions where the cumulative image jumps.
    pub fn jump_positions(&self) -> &[f64] {
        &self.positions
    }

    /// Value of the cumulative image extended to the whole plane by nearest
    /// boundary point; used for the solver's initial guess.
    pub fn nearest_point_extension(&self, p: Point2) -> f64 {
        let q = self.domain.nearest_boundary_point(p);
        self.cumulative_at_point(q).expect("nearest point is on the boundary")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent hand evaluation of the running sum for a list of atoms:
    /// walk the sorted atoms, accumulate signed masses, then shift by the
    /// global minimum. Used to pin the expected step values.
    fn oracle_cumulative(atoms: &[(f64, f64)], ts: &[f64]) -> Vec<f64> {
        let mut sorted = atoms.to_vec();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let raw = |t: f64| -> f64 { sorted.iter().filter(|&&(p, _)| p <= t).map(|&(_, m)| m).sum() };
        let mut min = 0.0_f64;
        let mut run = 0.0;
        for &(_, m) in &sorted {
            run += m;
            min = min.min(run);
        }
        ts.iter().map(|&t| raw(t) - min).collect()
    }

    #[test]
    fn two_atom_running_sum() {
        // source mass 1 at top mid (arclength 2.5), sink mass 1 at bottom mid (0.5)
        let data = BoundaryData::build(
            Domain::unit_square(),
            vec![BoundaryAtom::source(2.5, 1.0), BoundaryAtom::sink(0.5, 1.0)],
        )
        .unwrap();
        assert_eq!(data.lift_height, 1.0);
        let ts = [0.0, 0.25, 0.5, 1.0, 2.0, 2.5, 3.0, 3.9];
        let expect = oracle_cumulative(&[(2.5, 1.0), (0.5, -1.0)], &ts);
        for (&t, &e) in ts.iter().zip(&expect) {
            assert_eq!(data.cumulative(t), e, "t = {t}");
        }
        // the running sum changes only at the two atom positions
        assert_eq!(data.jump_positions(), &[0.5, 2.5]);
        // sources raise the image moving counterclockwise: 1 before the sink,
        // 0 between sink and source, 1 after the source
        assert_eq!(data.cumulative(0.0), 1.0);
        assert_eq!(data.cumulative(1.0), 0.0);
        assert_eq!(data.cumulative(3.0), 1.0);
    }

    #[test]
    fn unbalanced_measures_rejected() {
        let err = BoundaryData::build(
            Domain::unit_square(),
            vec![BoundaryAtom::source(2.5, 1.0), BoundaryAtom::sink(0.5, 0.7)],
        )
        .unwrap_err();
        assert!(matches!(err, BoundaryError::Unbalanced(_)));
    }

    #[test]
    fn interleaved_fifths_take_expected_values() {
        // mu+ = 1/2 (delta_x1 + delta_x2), mu- = 1/3 (delta_y1 + delta_y2 + delta_y3)
        let data = BoundaryData::build(
            Domain::unit_square(),
            vec![
                BoundaryAtom::source(0.5, 0.5),
                BoundaryAtom::source(1.2, 0.5),
                BoundaryAtom::sink(1.9, 1.0 / 3.0),
                BoundaryAtom::sink(2.6, 1.0 / 3.0),
                BoundaryAtom::sink(3.3, 1.0 / 3.0),
            ],
        )
        .unwrap();
        let mut values: Vec<f64> = [0.0, 0.8, 1.5, 2.2, 2.9, 3.6]
            .iter()
            .map(|&t| data.cumulative(t))
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let expected = [0.0, 1.0 / 3.0, 0.5, 2.0 / 3.0, 1.0];
        assert_eq!(values.len(), expected.len());
        for (v, e) in values.iter().zip(expected.iter()) {
            assert!((v - e).abs() < 1e-12, "{v} vs {e}");
        }
    }

    #[test]
    fn trace_values() {
        let data = BoundaryData::build(
            Domain::unit_square(),
            vec![BoundaryAtom::source(2.5, 1.0), BoundaryAtom::sink(0.5, 1.0)],
        )
        .unwrap();
        // at arclength 1.0 the cumulative is 0 here, so the trace is 0
        let p = Domain::unit_square().point_of_arclength(1.0).unwrap();
        assert_eq!(data.trace(p, 0.5).unwrap(), 0);
        // where the cumulative is 1 the trace below s=1 is 1
        let q = Domain::unit_square().point_of_arclength(0.25).unwrap();
        assert_eq!(data.trace(q, 0.5).unwrap(), 1);
        // s >= lift height always yields 0
        assert_eq!(data.trace(q, 1.0).unwrap(), 0);
        // at a point with cumulative 0, the trace at s=0 is 0
        assert_eq!(data.trace(p, 0.0).unwrap(), 0);
        // off-boundary points are rejected
        assert!(data.trace([0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn trace_is_nonincreasing_in_s_and_support_length_matches() {
        let data = BoundaryData::build(
            Domain::unit_square(),
            vec![
                BoundaryAtom::source(0.1, 0.4),
                BoundaryAtom::source(1.7, 0.6),
                BoundaryAtom::sink(2.2, 0.5),
                BoundaryAtom::sink(3.5, 0.5),
            ],
        )
        .unwrap();
        let m = data.lift_height;
        for &t in &[0.0, 0.3, 1.0, 1.8, 2.5, 3.7] {
            let p = data.domain.point_of_arclength(t).unwrap();
            let u = data.cumulative(t);
            let n = 2000;
            let mut prev = 1;
            let mut count = 0;
            for i in 0..n {
                let s = m * i as f64 / n as f64;
                let tr = data.trace(p, s).unwrap();
                assert!(tr <= prev, "trace must be nonincreasing in s");
                prev = tr;
                count += tr as usize;
            }
            let measured = count as f64 * m / n as f64;
            assert!((measured - u).abs() <= 2.0 * m / n as f64);
        }
    }

    #[test]
    fn arclength_point_examples() {
        let d = Domain::unit_square();
        assert_eq!(d.point_of_arclength(0.0).unwrap(), [0.0, 0.0]);
        assert_eq!(d.point_of_arclength(2.5).unwrap(), [0.5, 1.0]);
        assert_eq!(d.arclength_of_point([1.0, 0.0]).unwrap(), 1.0);
        assert!(d.arclength_of_point([0.5, 0.5]).is_err());
    }

    #[test]
    fn corner_atoms_are_legal() {
        let data = BoundaryData::build(
            Domain::unit_square(),
            vec![BoundaryAtom::sink(0.0, 1.0), BoundaryAtom::source(2.5, 1.0)],
        )
        .unwrap();
        assert_eq!(data.cumulative(0.0), 0.0);
        assert_eq!(data.lift_height, 1.0);
    }

    #[test]
    fn coincident_opposite_atoms_cancel() {
        let data = BoundaryData::build(
            Domain::unit_square(),
            vec![
                BoundaryAtom::source(1.0, 0.5),
                BoundaryAtom::sink(1.0, 0.5),
                BoundaryAtom::source(2.0, 1.0),
                BoundaryAtom::sink(0.5, 1.0),
            ],
        )
        .unwrap();
        assert_eq!(data.jump_positions(), &[0.5, 2.0]);
    }

    proptest! {
        #[test]
        fn arclength_roundtrip(t in 0.0f64..3.9999, w in 0.5f64..3.0, h in 0.5f64..2.0) {
            let d = Domain::rectangle(w, h);
            let t = t / 4.0 * d.perimeter();
            let p = d.point_of_arclength(t).unwrap();
            let back = d.arclength_of_point(p).unwrap();
            prop_assert!((back - t).abs() < 1e-12 * (1.0 + d.perimeter()));
        }
    }
}
