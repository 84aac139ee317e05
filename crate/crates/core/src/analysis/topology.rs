//! Explicit optimization of tree topologies with free branch vertices: the
//! independent oracle for globally optimal networks in symmetric settings.

use crate::cost::TransportCost;
use crate::geom::{self, Point2};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

/// Node of an abstract tree topology: a fixed terminal or a free vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Terminal(usize),
    Free(usize),
}

/// An abstract forest connecting all terminals (one tree per transport
/// component; every component must balance). Edge masses are determined by
/// flow conservation from the signed terminal masses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Topology {
    pub name: String,
    /// `(position, signed mass)`: positive for sources, negative for sinks.
    pub terminals: Vec<(Point2, f64)>,
    pub free_count: usize,
    pub edges: Vec<(Node, Node)>,
}

impl Topology {
    fn node_index(&self, n: Node) -> usize {
        match n {
            Node::Terminal(i) => i,
            Node::Free(i) => self.terminals.len() + i,
        }
    }

    fn node_count(&self) -> usize {
        self.terminals.len() + self.free_count
    }

    /// Edge masses by flow conservation: each edge carries the net signed
    /// mass of the subtree behind it. Every forest component must be a
    /// balanced tree.
    pub fn edge_masses(&self) -> Vec<f64> {
        self.try_edge_masses().expect("topology must be a balanced forest")
    }

    pub fn try_edge_masses(&self) -> Result<Vec<f64>, String> {
        let n = self.node_count();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (ei, &(a, b)) in self.edges.iter().enumerate() {
            let (ia, ib) = (self.node_index(a), self.node_index(b));
            adj[ia].push((ib, ei));
            adj[ib].push((ia, ei));
        }
        let mut supply = vec![0.0; n];
        for (i, &(_, m)) in self.terminals.iter().enumerate() {
            supply[i] = m;
        }
        let mut masses = vec![0.0; self.edges.len()];
        let mut visited = vec![false; n];
        let mut seen_edges = 0usize;
        for root in 0..n {
            if visited[root] {
                continue;
            }
            let mut order = Vec::new();
            let mut stack = vec![(root, usize::MAX)];
            visited[root] = true;
            while let Some((v, parent_edge)) = stack.pop() {
                order.push((v, parent_edge));
                for &(u, ei) in &adj[v] {
                    if !visited[u] {
                        visited[u] = true;
                        seen_edges += 1;
                        stack.push((u, ei));
                    }
                }
            }
            let mut subtree = vec![0.0; n];
            for &(v, _) in &order {
                subtree[v] = supply[v];
            }
            for &(v, parent_edge) in order.iter().rev() {
                if parent_edge != usize::MAX {
                    masses[parent_edge] = subtree[v].abs();
                    let (a, b) = self.edges[parent_edge];
                    let (ia, ib) = (self.node_index(a), self.node_index(b));
                    let parent = if ia == v { ib } else { ia };
                    subtree[parent] += subtree[v];
                }
            }
            if subtree[root].abs() > 1e-9 {
                return Err(format!(
                    "component of node {root} is unbalanced by {}",
                    subtree[root]
                ));
            }
        }
        if seen_edges != self.edges.len() {
            return Err("edge set contains a cycle".into());
        }
        Ok(masses)
    }

    /// Network cost for given free-vertex positions.
    pub fn energy(&self, free: &[Point2], cost: &TransportCost) -> f64 {
        let masses = self.edge_masses();
        self.edges
            .iter()
            .zip(&masses)
            .map(|(&(a, b), &m)| {
                let pa = self.position(a, free);
                let pb = self.position(b, free);
                cost.eval_nonneg(m) * geom::dist(pa, pb)
            })
            .sum()
    }

    pub fn position(&self, n: Node, free: &[Point2]) -> Point2 {
        match n {
            Node::Terminal(i) => self.terminals[i].0,
            Node::Free(i) => free[i],
        }
    }
}

/// Result of optimizing one topology.
#[derive(Debug, Clone)]
pub struct OptimizedTopology {
    pub free_positions: Vec<Point2>,
    pub energy: f64,
    /// Worst angle-condition residual over interior degree-3 vertices.
    pub junction_residual: f64,
}

/// Minimizes the network cost over the free-vertex positions with
/// Nelder-Mead multi-starts followed by a subgradient polish (the objective
/// is convex in the positions; kinks only occur at coincident vertices).
pub fn optimize_topology(topology: &Topology, cost: &TransportCost, seed: u64) -> OptimizedTopology {
    let dim = 2 * topology.free_count;
    if dim == 0 {
        let energy = topology.energy(&[], cost);
        return OptimizedTopology { free_positions: Vec::new(), energy, junction_residual: 0.0 };
    }
    let masses = topology.edge_masses();
    let f = |x: &[f64]| {
        let free: Vec<Point2> = x.chunks(2).map(|c| [c[0], c[1]]).collect();
        topology
            .edges
            .iter()
            .zip(&masses)
            .map(|(&(a, b), &m)| {
                let pa = topology.position(a, &free);
                let pb = topology.position(b, &free);
                cost.eval_nonneg(m) * geom::dist(pa, pb)
            })
            .sum::<f64>()
    };

    let mut rng = StdRng::seed_from_u64(seed);
    let centroid: Point2 = {
        let mut c = [0.0, 0.0];
        for &(p, _) in &topology.terminals {
            c[0] += p[0];
            c[1] += p[1];
        }
        [c[0] / topology.terminals.len() as f64, c[1] / topology.terminals.len() as f64]
    };
    let mut best_x: Vec<f64> = Vec::new();
    let mut best_val = f64::INFINITY;
    for restart in 0..8 {
        let mut x0 = vec![0.0; dim];
        for i in 0..topology.free_count {
            // random convex combination of a terminal and the centroid
            let t = rng.gen_range(0..topology.terminals.len());
            let lam: f64 = if restart == 0 { 0.5 } else { rng.gen_range(0.1..0.9) };
            x0[2 * i] = lam * topology.terminals[t].0[0] + (1.0 - lam) * centroid[0];
            x0[2 * i + 1] = lam * topology.terminals[t].0[1] + (1.0 - lam) * centroid[1];
        }
        let x = nelder_mead(&f, &x0, 0.15, 2000, 1e-12);
        let x = gradient_polish(topology, &masses, cost, &x);
        let v = f(&x);
        if v < best_val {
            best_val = v;
            best_x = x;
        }
    }

    let free: Vec<Point2> = best_x.chunks(2).map(|c| [c[0], c[1]]).collect();
    let junction_residual = worst_junction_residual(topology, &masses, cost, &free);
    OptimizedTopology { free_positions: free, energy: best_val, junction_residual }
}

/// Subgradient descent with backtracking on the convex length objective.
fn gradient_polish(
    topology: &Topology,
    masses: &[f64],
    cost: &TransportCost,
    x0: &[f64],
) -> Vec<f64> {
    let f = |x: &[f64]| {
        let free: Vec<Point2> = x.chunks(2).map(|c| [c[0], c[1]]).collect();
        topology
            .edges
            .iter()
            .zip(masses)
            .map(|(&(a, b), &m)| {
                cost.eval_nonneg(m)
                    * geom::dist(topology.position(a, &free), topology.position(b, &free))
            })
            .sum::<f64>()
    };
    let grad = |x: &[f64]| {
        let free: Vec<Point2> = x.chunks(2).map(|c| [c[0], c[1]]).collect();
        let mut g = vec![0.0; x.len()];
        for (&(a, b), &m) in topology.edges.iter().zip(masses) {
            let pa = topology.position(a, &free);
            let pb = topology.position(b, &free);
            let d = geom::dist(pa, pb);
            if d < 1e-12 {
                continue; // collapsed edge: zero subgradient choice
            }
            let w = cost.eval_nonneg(m) / d;
            if let Node::Free(i) = a {
                g[2 * i] += w * (pa[0] - pb[0]);
                g[2 * i + 1] += w * (pa[1] - pb[1]);
            }
            if let Node::Free(i) = b {
                g[2 * i] += w * (pb[0] - pa[0]);
                g[2 * i + 1] += w * (pb[1] - pa[1]);
            }
        }
        g
    };
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut step = 0.05;
    for _ in 0..400 {
        let g = grad(&x);
        let gn: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn < 1e-12 {
            break;
        }
        let mut improved = false;
        let mut t = step;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, gi)| a - t * gi / gn).collect();
            let ft = f(&trial);
            if ft < fx - 1e-15 {
                x = trial;
                fx = ft;
                step = t * 1.5;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    x
}

fn worst_junction_residual(
    topology: &Topology,
    masses: &[f64],
    cost: &TransportCost,
    free: &[Point2],
) -> f64 {
    let n = topology.node_count();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (ei, &(a, b)) in topology.edges.iter().enumerate() {
        incident[topology.node_index(a)].push(ei);
        incident[topology.node_index(b)].push(ei);
    }
    let mut worst = 0.0_f64;
    for i in 0..topology.free_count {
        let node = topology.terminals.len() + i;
        if incident[node].len() != 3 {
            continue;
        }
        let p = free[i];
        // unit directions away from the junction scaled by tau(mass) must
        // balance at an interior optimum
        let mut residual = [0.0, 0.0];
        let mut degenerate = false;
        for &ei in &incident[node] {
            let (a, b) = topology.edges[ei];
            let other = if topology.node_index(a) == node { b } else { a };
            let q = topology.position(other, free);
            let d = geom::dist(p, q);
            if d < 1e-9 {
                degenerate = true;
                break;
            }
            let t = cost.eval_nonneg(masses[ei]);
            residual[0] += t * (q[0] - p[0]) / d;
            residual[1] += t * (q[1] - p[1]) / d;
        }
        if !degenerate {
            worst = worst.max((residual[0].powi(2) + residual[1].powi(2)).sqrt());
        }
    }
    worst
}

fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    scale: f64,
    max_iters: usize,
    tol: f64,
) -> Vec<f64> {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += scale;
        let v = f(&x);
        simplex.push((x, v));
    }
    for _ in 0..max_iters {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        if (simplex[n].1 - simplex[0].1).abs() < tol * (1.0 + simplex[0].1.abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|(x, _)| x[d]).sum::<f64>() / n as f64)
            .collect();
        let xr: Vec<f64> = centroid
            .iter()
            .zip(&simplex[n].0)
            .map(|(c, w)| c + (c - w))
            .collect();
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + 2.0 * (c - w))
                .collect();
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let xc: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + 0.5 * (w - c))
                .collect();
            let fc = f(&xc);
            if fc < simplex[n].1 {
                simplex[n] = (xc, fc);
            } else {
                let x0c = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = item.0.iter().zip(&x0c).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    let v = f(&x);
                    *item = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    simplex[0].0.clone()
}

/// Outcome of comparing candidate topologies.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub best_index: usize,
    pub optimized: Vec<OptimizedTopology>,
    /// Candidate pairs whose optimal energies tie within `1e-8`.
    pub bifurcations: Vec<(usize, usize)>,
}

/// Built-in candidate families for the reference configurations: the
/// straight line for one source and one sink, the branched and direct
/// topologies for one source against two sinks, and the five symmetric
/// families for four sources against four sinks. Unbalanced candidates
/// (impossible flow splits for the given masses) are dropped. Returns an
/// empty list for patterns without a built-in family.
pub fn builtin_candidates(
    sources: &[(Point2, f64)],
    sinks: &[(Point2, f64)],
) -> Vec<Topology> {
    let mut sources = sources.to_vec();
    let mut sinks = sinks.to_vec();
    sources.sort_by(|a, b| a.0[0].partial_cmp(&b.0[0]).unwrap());
    sinks.sort_by(|a, b| a.0[0].partial_cmp(&b.0[0]).unwrap());
    let t = |i: usize| Node::Terminal(i);
    let f = |i: usize| Node::Free(i);

    let mut out: Vec<Topology> = Vec::new();
    match (sources.len(), sinks.len()) {
        (1, 1) => {
            out.push(Topology {
                name: "line".into(),
                terminals: vec![(sources[0].0, sources[0].1), (sinks[0].0, -sinks[0].1)],
                free_count: 0,
                edges: vec![(t(0), t(1))],
            });
        }
        (1, 2) => {
            let (p, _) = sources[0];
            let (m1, m2) = (sinks[0].1, sinks[1].1);
            out.push(Topology {
                name: "branched".into(),
                terminals: vec![(p, m1 + m2), (sinks[0].0, -m1), (sinks[1].0, -m2)],
                free_count: 1,
                edges: vec![(t(0), f(0)), (f(0), t(1)), (f(0), t(2))],
            });
            out.push(Topology {
                name: "direct".into(),
                terminals: vec![
                    (p, m1),
                    (p, m2),
                    (sinks[0].0, -m1),
                    (sinks[1].0, -m2),
                ],
                free_count: 0,
                edges: vec![(t(0), t(2)), (t(1), t(3))],
            });
        }
        (4, 4) => {
            let term = |src: &[usize], snk: &[usize]| -> Vec<(Point2, f64)> {
                let mut v: Vec<(Point2, f64)> =
                    src.iter().map(|&i| (sources[i].0, sources[i].1)).collect();
                v.extend(snk.iter().map(|&i| (sinks[i].0, -sinks[i].1)));
                v
            };
            out.push(Topology {
                name: "four_parallels".into(),
                terminals: term(&[0, 1, 2, 3], &[0, 1, 2, 3]),
                free_count: 0,
                edges: (0..4).map(|i| (t(i), t(i + 4))).collect(),
            });
            out.push(Topology {
                name: "paired_trees".into(),
                terminals: term(&[0, 1, 2, 3], &[0, 1, 2, 3]),
                free_count: 4,
                edges: vec![
                    (t(0), f(0)),
                    (t(1), f(0)),
                    (f(0), f(1)),
                    (f(1), t(4)),
                    (f(1), t(5)),
                    (t(2), f(2)),
                    (t(3), f(2)),
                    (f(2), f(3)),
                    (f(3), t(6)),
                    (f(3), t(7)),
                ],
            });
            out.push(Topology {
                name: "outer_parallels_middle_tree".into(),
                terminals: term(&[0, 1, 2, 3], &[0, 1, 2, 3]),
                free_count: 2,
                edges: vec![
                    (t(0), t(4)),
                    (t(3), t(7)),
                    (t(1), f(0)),
                    (t(2), f(0)),
                    (f(0), f(1)),
                    (f(1), t(5)),
                    (f(1), t(6)),
                ],
            });
            out.push(Topology {
                name: "nested_trees".into(),
                terminals: term(&[0, 1, 2, 3], &[0, 1, 2, 3]),
                free_count: 4,
                edges: vec![
                    (t(1), f(0)),
                    (t(2), f(0)),
                    (f(0), f(1)),
                    (f(1), t(5)),
                    (f(1), t(6)),
                    (t(0), f(2)),
                    (t(3), f(2)),
                    (f(2), f(3)),
                    (f(3), t(4)),
                    (f(3), t(7)),
                ],
            });
            out.push(Topology {
                name: "single_tree".into(),
                terminals: term(&[0, 1, 2, 3], &[0, 1, 2, 3]),
                free_count: 6,
                edges: vec![
                    (t(0), f(0)),
                    (t(1), f(0)),
                    (t(2), f(1)),
                    (t(3), f(1)),
                    (f(0), f(2)),
                    (f(1), f(2)),
                    (f(2), f(3)),
                    (f(3), f(4)),
                    (f(3), f(5)),
                    (f(4), t(4)),
                    (f(4), t(5)),
                    (f(5), t(6)),
                    (f(5), t(7)),
                ],
            });
        }
        _ => {}
    }
    out.retain(|c| c.try_edge_masses().is_ok());
    out
}

/// Optimizes every candidate topology and returns the cheapest; near-ties
/// are reported as bifurcations.
pub fn oracle_best_network(
    candidates: &[Topology],
    cost: &TransportCost,
    seed: u64,
) -> OracleResult {
    assert!(!candidates.is_empty());
    let optimized: Vec<OptimizedTopology> = candidates
        .iter()
        .enumerate()
        .map(|(i, t)| optimize_topology(t, cost, seed.wrapping_add(i as u64)))
        .collect();
    let best_index = optimized
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.energy.partial_cmp(&b.1.energy).unwrap())
        .unwrap()
        .0;
    let mut bifurcations = Vec::new();
    for i in 0..optimized.len() {
        for j in i + 1..optimized.len() {
            if (optimized[i].energy - optimized[j].energy).abs() < 1e-8 {
                bifurcations.push((i, j));
            }
        }
    }
    OracleResult { best_index, optimized, bifurcations }
}
