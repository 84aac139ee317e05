//! Slow, independent reference implementations used to cross-check the fast
//! paths: quadrature evaluation of the pairing, dense log-barrier solvers
//! for the column constraint sets, and exact piecewise profile integrals.
//!
//! Nothing here is used by the solver itself; tests compare its output
//! against the production code.

use crate::geom;
use crate::grid::{NodeLayout, PrismGrid};
use crate::pairing::DiscreteState;

/// Degree-4 triangle quadrature (6 points), weights summing to one.
const TRI_Q: [([f64; 3], f64); 6] = [
    ([0.108103018168070, 0.445948490915965, 0.445948490915965], 0.223381589678011),
    ([0.445948490915965, 0.108103018168070, 0.445948490915965], 0.223381589678011),
    ([0.445948490915965, 0.445948490915965, 0.108103018168070], 0.223381589678011),
    ([0.816847572980459, 0.091576213509771, 0.091576213509771], 0.109951743655322),
    ([0.091576213509771, 0.816847572980459, 0.091576213509771], 0.109951743655322),
    ([0.091576213509771, 0.091576213509771, 0.816847572980459], 0.109951743655322),
];

/// 3-point Gauss-Legendre on [0, 1].
const GL3: [(f64, f64); 3] = [
    (0.112701665379258, 0.277777777777778),
    (0.5, 0.444444444444444),
    (0.887298334559746, 0.277777777777778),
];

/// Evaluates the pairing integral by nodal evaluation plus quadrature:
/// the x-gradient part with a degree-4 triangle rule tensorised with
/// Gauss-Legendre in s, and the horizontal-face jump terms with the same
/// triangle rule. The primal is extended by 1 below the bottom face and the
/// top face is dropped.
pub fn pairing_quadrature(grid: &PrismGrid, layout: &NodeLayout, state: &DiscreteState) -> f64 {
    let mut total = 0.0;
    for tri in grid.active_tris() {
        let verts = grid.tri_verts(tri);
        let pts = grid.tri_points(tri);
        let area = geom::signed_area(pts[0], pts[1], pts[2]).abs();
        let grads = geom::hat_gradients(pts[0], pts[1], pts[2]);

        let column = grid.column_elements(tri);
        for (k, &el) in column.iter().enumerate() {
            let e = grid.element(el);
            let h = e.s.height_fraction() * grid.lift_height;
            let lo = e.s.lo();
            let vv: Vec<f64> = verts
                .iter()
                .map(|&v| layout.layered_value(&state.primal, v as usize, lo))
                .collect();
            let px: Vec<f64> = verts
                .iter()
                .map(|&v| layout.layered_value(&state.dual_x, v as usize, lo))
                .collect();
            let py: Vec<f64> = verts
                .iter()
                .map(|&v| layout.layered_value(&state.dual_y, v as usize, lo))
                .collect();
            let grad_v = [
                (0..3).map(|i| vv[i] * grads[i][0]).sum::<f64>(),
                (0..3).map(|i| vv[i] * grads[i][1]).sum::<f64>(),
            ];
            for (lam, wq) in TRI_Q {
                let phix: f64 = (0..3).map(|i| lam[i] * px[i]).sum();
                let phiy: f64 = (0..3).map(|i| lam[i] * py[i]).sum();
                for (_, ws) in GL3 {
                    total += wq * ws * area * h * (phix * grad_v[0] + phiy * grad_v[1]);
                }
            }

            // the element's own bottom face
            let below: Option<Vec<f64>> = if k == 0 {
                None
            } else {
                let b = grid.element(column[k - 1]);
                Some(
                    verts
                        .iter()
                        .map(|&v| layout.layered_value(&state.primal, v as usize, b.s.lo()))
                        .collect(),
                )
            };
            let theta: Vec<f64> = verts
                .iter()
                .map(|&v| layout.linear_value(&state.dual_s, v as usize, lo))
                .collect();
            for (lam, wq) in TRI_Q {
                let phis: f64 = (0..3).map(|i| lam[i] * theta[i]).sum();
                let v_above: f64 = (0..3).map(|i| lam[i] * vv[i]).sum();
                let v_below: f64 = match &below {
                    Some(b) => (0..3).map(|i| lam[i] * b[i]).sum(),
                    None => 1.0,
                };
                total += wq * area * phis * (v_above - v_below);
            }
        }
    }
    total
}

/// One nonlocal constraint on a column profile: the accumulated vector over
/// the interval index range `[start, end)` must have norm at most `radius`.
#[derive(Debug, Clone, Copy)]
pub struct RangeBall {
    pub start: usize,
    pub end: usize,
    pub radius: f64,
}

fn accumulate(y: &[[f64; 2]], heights: &[f64], c: &RangeBall) -> [f64; 2] {
    let mut w = [0.0, 0.0];
    for k in c.start..c.end {
        w[0] += heights[k] * y[k][0];
        w[1] += heights[k] * y[k][1];
    }
    w
}

/// Dense log-barrier projection of `y0` onto the intersection of range-ball
/// constraints. Independent of the production projection path; only used as
/// a reference in tests.
pub fn projection_oracle(
    y0: &[[f64; 2]],
    heights: &[f64],
    constraints: &[RangeBall],
) -> Vec<[f64; 2]> {
    let n = 2 * y0.len();
    let flat0: Vec<f64> = y0.iter().flatten().copied().collect();
    let mut y = vec![0.0; n];
    let mut mu = 1.0;
    let value = |y: &[f64]| 0.5 * y.iter().zip(&flat0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let grad_hess = |y: &[f64], g: &mut [f64], h: &mut [f64]| {
        for i in 0..n {
            g[i] += y[i] - flat0[i];
            h[i * n + i] += 1.0;
        }
    };
    while mu > 1e-11 {
        newton_barrier(&mut y, heights, constraints, mu, &value, &grad_hess);
        mu *= 0.15;
    }
    y.chunks(2).map(|c| [c[0], c[1]]).collect()
}

/// Dense log-barrier maximization of a linear functional over the same
/// intersection. Returns `(argmax, value)`; the value is reliable, the
/// argmax only up to non-uniqueness of the maximizer.
pub fn linear_max_oracle(
    gain: &[[f64; 2]],
    heights: &[f64],
    constraints: &[RangeBall],
) -> (Vec<[f64; 2]>, f64) {
    let n = 2 * gain.len();
    let flat_g: Vec<f64> = gain.iter().flatten().copied().collect();
    let mut y = vec![0.0; n];
    let mut mu = 1.0;
    let value = |y: &[f64]| -y.iter().zip(&flat_g).map(|(a, b)| a * b).sum::<f64>();
    let grad_hess = |_: &[f64], g: &mut [f64], _: &mut [f64]| {
        for i in 0..n {
            g[i] -= flat_g[i];
        }
    };
    while mu > 1e-10 {
        newton_barrier(&mut y, heights, constraints, mu, &value, &grad_hess);
        mu *= 0.2;
    }
    let value = y.iter().zip(&flat_g).map(|(a, b)| a * b).sum();
    (y.chunks(2).map(|c| [c[0], c[1]]).collect(), value)
}

/// A few damped Newton steps on `objective + mu * barrier` at fixed `mu`.
fn newton_barrier(
    y: &mut [f64],
    heights: &[f64],
    constraints: &[RangeBall],
    mu: f64,
    obj_value: &dyn Fn(&[f64]) -> f64,
    obj_grad_hess: &dyn Fn(&[f64], &mut [f64], &mut [f64]),
) {
    let n = y.len();
    let feasible = |y: &[f64]| -> bool {
        let pts: Vec<[f64; 2]> = y.chunks(2).map(|c| [c[0], c[1]]).collect();
        constraints.iter().all(|c| {
            let w = accumulate(&pts, heights, c);
            c.radius * c.radius - (w[0] * w[0] + w[1] * w[1]) > 0.0
        })
    };
    let merit = |y: &[f64]| -> f64 {
        let pts: Vec<[f64; 2]> = y.chunks(2).map(|c| [c[0], c[1]]).collect();
        let mut val = obj_value(y);
        for c in constraints {
            let w = accumulate(&pts, heights, c);
            let d = c.radius * c.radius - (w[0] * w[0] + w[1] * w[1]);
            val -= mu * d.ln();
        }
        val
    };
    for _ in 0..60 {
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n * n];
        obj_grad_hess(y, &mut grad, &mut hess);
        let pts: Vec<[f64; 2]> = y.chunks(2).map(|c| [c[0], c[1]]).collect();
        for c in constraints {
            let w = accumulate(&pts, heights, c);
            let d = c.radius * c.radius - (w[0] * w[0] + w[1] * w[1]);
            // gradient: 2 mu / d * A^T w; Hessian: 2 mu/d A^T A + 4 mu/d^2 (A^T w)(A^T w)^T
            let mut atw = vec![0.0; n];
            for k in c.start..c.end {
                atw[2 * k] = heights[k] * w[0];
                atw[2 * k + 1] = heights[k] * w[1];
            }
            for i in 0..n {
                grad[i] += 2.0 * mu / d * atw[i];
            }
            for k in c.start..c.end {
                for l in c.start..c.end {
                    let hh = 2.0 * mu / d * heights[k] * heights[l];
                    hess[2 * k * n + 2 * l] += hh;
                    hess[(2 * k + 1) * n + 2 * l + 1] += hh;
                }
            }
            for i in 0..n {
                if atw[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    hess[i * n + j] += 4.0 * mu / (d * d) * atw[i] * atw[j];
                }
            }
        }
        let step = solve_dense(&mut hess, &grad, n);
        let decrement: f64 = step.iter().zip(&grad).map(|(s, g)| s * g).sum();
        if decrement.abs() < 1e-14 {
            break;
        }
        let mut t = 1.0;
        let base = merit(y);
        loop {
            let trial: Vec<f64> = y.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            if feasible(&trial) && merit(&trial) <= base - 0.25 * t * decrement {
                y.copy_from_slice(&trial);
                break;
            }
            t *= 0.5;
            if t < 1e-16 {
                break;
            }
        }
    }
}

/// Gaussian elimination with partial pivoting; `a` is row-major `n x n`.
fn solve_dense(a: &mut [f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut x = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            x.swap(col, piv);
        }
        let d = a[col * n + col];
        if d.abs() < 1e-300 {
            continue;
        }
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let d = a[col * n + col];
        if d.abs() < 1e-300 {
            x[col] = 0.0;
            continue;
        }
        x[col] /= d;
        for r in 0..col {
            x[r] -= a[r * n + col] * x[col];
        }
    }
    x
}

/// A piecewise-linear vector profile on [0, M] given by per-segment end
/// values; segments may be discontinuous at breakpoints. Integrates exactly.
#[derive(Debug, Clone)]
pub struct PiecewiseLinearProfile {
    pub breaks: Vec<f64>,
    /// `(value at segment start, value at segment end)` per segment.
    pub segments: Vec<([f64; 2], [f64; 2])>,
}

impl PiecewiseLinearProfile {
    pub fn integrate(&self, a: f64, b: f64) -> [f64; 2] {
        assert!(a <= b);
        let mut acc = [0.0, 0.0];
        for (i, seg) in self.segments.iter().enumerate() {
            let (lo, hi) = (self.breaks[i], self.breaks[i + 1]);
            let (x0, x1) = (a.max(lo), b.min(hi));
            if x0 >= x1 {
                continue;
            }
            let len = hi - lo;
            for d in 0..2 {
                // linear interpolation of the segment over [x0, x1]
                let v0 = seg.0[d] + (seg.1[d] - seg.0[d]) * (x0 - lo) / len;
                let v1 = seg.0[d] + (seg.1[d] - seg.0[d]) * (x1 - lo) / len;
                acc[d] += 0.5 * (v0 + v1) * (x1 - x0);
            }
        }
        acc
    }
}

/// A piecewise-constant vector profile on [0, M]: value `values[i]` on
/// `[breaks[i], breaks[i+1])`.
#[derive(Debug, Clone)]
pub struct PiecewiseConstantProfile {
    pub breaks: Vec<f64>,
    pub values: Vec<[f64; 2]>,
}

impl PiecewiseConstantProfile {
    pub fn integrate(&self, a: f64, b: f64) -> [f64; 2] {
        assert!(a <= b);
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
}
