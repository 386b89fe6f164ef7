//! Discrete Fréchet distance between resampled curves, its optimal coupling,
//! and navigation through the space of curves: distance matrices, k-nearest
//! neighbour graphs, shortest paths and morph animations along them.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::aggregate::{resample_all_with, ResampledCurve};
use crate::coloring::Polyline;
use crate::geometry::Point;
use crate::model::CurveDrawing;
use crate::par::{map_range, Exec};
use crate::{Error, Result};

pub const DEFAULT_MATRIX_POINTS: usize = 64;
pub const DEFAULT_NEIGHBOURS: usize = 5;
/// Edges between coincident curves get this weight so all weights stay
/// positive.
pub const MIN_EDGE_WEIGHT: f64 = 1e-12;

/// Coupled-walk DP table, row-major `rows × cols`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrechetTable {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl FrechetTable {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn distance(&self) -> f64 {
        self.get(self.rows - 1, self.cols - 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrechetResult {
    pub distance: f64,
    pub table: FrechetTable,
}

fn check_nonempty(p: &[Point], q: &[Point]) -> Result<()> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyInput("Fréchet distance of an empty sequence".into()));
    }
    Ok(())
}

/// `dp[i][j] = max(|P_i − Q_j|, min(dp[i−1][j], dp[i][j−1], dp[i−1][j−1]))`.
pub fn discrete_frechet(p: &[Point], q: &[Point]) -> Result<FrechetResult> {
    check_nonempty(p, q)?;
    let (rows, cols) = (p.len(), q.len());
    let mut values = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let d = p[i].distance(q[j]);
            let reach = match (i, j) {
                (0, 0) => d,
                (0, _) => values[j - 1],
                (_, 0) => values[(i - 1) * cols],
                _ => values[(i - 1) * cols + j]
                    .min(values[i * cols + j - 1])
                    .min(values[(i - 1) * cols + j - 1]),
            };
            values[i * cols + j] = d.max(reach);
        }
    }
    let table = FrechetTable { rows, cols, values };
    Ok(FrechetResult {
        distance: table.distance(),
        table,
    })
}

/// Distance only, keeping two rows of the table.
pub fn frechet_distance(p: &[Point], q: &[Point]) -> Result<f64> {
    check_nonempty(p, q)?;
    let cols = q.len();
    let mut prev = vec![0.0; cols];
    let mut cur = vec![0.0; cols];
    for (i, pi) in p.iter().enumerate() {
        for j in 0..cols {
            let d = pi.distance(q[j]);
            let reach = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = d.max(reach);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[cols - 1])
}

/// Monotone staircase of index pairs from `(0, 0)` to `(m − 1, n − 1)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Coupling {
    pub steps: Vec<(usize, usize)>,
}

impl Coupling {
    pub fn is_valid(&self, m: usize, n: usize) -> bool {
        let (Some(&first), Some(&last)) = (self.steps.first(), self.steps.last()) else {
            return false;
        };
        first == (0, 0)
            && last == (m - 1, n - 1)
            && self.steps.windows(2).all(|w| {
                let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
                matches!((di, dj), (1, 0) | (0, 1) | (1, 1))
            })
    }

    /// Largest paired point distance along the coupling.
    pub fn bottleneck(&self, p: &[Point], q: &[Point]) -> f64 {
        self.steps
            .iter()
            .map(|&(i, j)| p[i].distance(q[j]))
            .fold(0.0, f64::max)
    }
}

/// Backtracks from the last cell through minimal predecessors, preferring
/// the diagonal, then `(i − 1, j)`, then `(i, j − 1)`.
pub fn optimal_coupling(table: &FrechetTable) -> Coupling {
    let (mut i, mut j) = (table.rows - 1, table.cols - 1);
    let mut steps = vec![(i, j)];
    while (i, j) != (0, 0) {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = table.get(i - 1, j - 1);
            let up = table.get(i - 1, j);
            let left = table.get(i, j - 1);
            let best = diag.min(up).min(left);
            if diag == best {
                (i - 1, j - 1)
            } else if up == best {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        steps.push((i, j));
    }
    steps.reverse();
    Coupling { steps }
}

/// One point per coupling step: `(1 − t)·P_i + t·Q_j`.
pub fn morph(p: &[Point], q: &[Point], coupling: &Coupling, t: f64) -> Polyline {
    Polyline::new(
        coupling
            .steps
            .iter()
            .map(|&(i, j)| p[i].lerp(q[j], t))
            .collect(),
    )
}

/// Symmetric matrix of pairwise discrete Fréchet distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub ids: Vec<String>,
    /// Resampling density the distances were computed at.
    pub m: usize,
    pub distances: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.distances[i][j]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }
}

/// Each unordered pair is computed once and mirrored, so the matrix is
/// exactly symmetric.
pub fn distance_matrix_with(
    curves: &[ResampledCurve],
    ids: Vec<String>,
    exec: Exec,
) -> Result<DistanceMatrix> {
    let n = curves.len();
    if ids.len() != n {
        return Err(Error::InvalidParams("one id per curve required".into()));
    }
    let m = curves.first().map_or(0, ResampledCurve::len);
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let values = map_range(exec, pairs.len(), |k| {
        let (i, j) = pairs[k];
        frechet_distance(&curves[i].points, &curves[j].points)
    });
    let mut distances = vec![vec![0.0; n]; n];
    for (&(i, j), d) in pairs.iter().zip(values) {
        let d = d?;
        distances[i][j] = d;
        distances[j][i] = d;
    }
    Ok(DistanceMatrix { ids, m, distances })
}

pub fn distance_matrix(curves: &[ResampledCurve], ids: Vec<String>) -> Result<DistanceMatrix> {
    distance_matrix_with(curves, ids, Exec::default())
}

/// Resamples every drawing at `m` points and builds the matrix.
pub fn curve_distance_matrix_with<T>(drawings: &[T], m: usize, exec: Exec) -> Result<DistanceMatrix>
where
    T: std::borrow::Borrow<CurveDrawing> + Sync,
{
    if drawings.is_empty() {
        return Err(Error::EmptyInput("distance matrix needs at least one curve drawing".into()));
    }
    let curves = resample_all_with(drawings, m, exec)?;
    let ids = drawings.iter().map(|d| d.borrow().id.clone()).collect();
    let mut matrix = distance_matrix_with(&curves, ids, exec)?;
    matrix.m = m;
    Ok(matrix)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Undirected weighted graph over drawing ids.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<GraphEdge>,
    #[serde(skip)]
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl CurveGraph {
    fn new(nodes: Vec<String>, edges: Vec<GraphEdge>) -> Self {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for e in &edges {
            adjacency[e.a].push((e.b, e.weight));
            adjacency[e.b].push((e.a, e.weight));
        }
        CurveGraph {
            nodes,
            edges,
            adjacency,
        }
    }

    pub fn neighbours(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|x| x == id)
    }

    pub fn is_connected(&self) -> bool {
        let n = self.nodes.len();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Links each node to its `k` nearest neighbours (distance ties broken by id)
/// as undirected edges. Remaining components are joined with minimum
/// spanning tree edges taken from the full matrix.
pub fn knn_graph(matrix: &DistanceMatrix, k: usize) -> Result<CurveGraph> {
    let n = matrix.len();
    if k == 0 {
        return Err(Error::InvalidParams("k must be at least 1".into()));
    }
    let ids = &matrix.ids;
    let by_distance_then_id = |a: &(usize, usize), b: &(usize, usize)| -> Ordering {
        matrix
            .get(a.0, a.1)
            .total_cmp(&matrix.get(b.0, b.1))
            .then_with(|| ids[a.0].cmp(&ids[b.0]))
            .then_with(|| ids[a.1].cmp(&ids[b.1]))
    };

    let mut chosen = std::collections::BTreeSet::new();
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| matrix.get(i, a).total_cmp(&matrix.get(i, b)).then_with(|| ids[a].cmp(&ids[b])));
        for &j in others.iter().take(k) {
            chosen.insert((i.min(j), i.max(j)));
        }
    }
    let mut sets = DisjointSets::new(n);
    for &(a, b) in &chosen {
        sets.union(a, b);
    }
    let mut cross: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|&(i, j)| sets.find(i) != sets.find(j))
        .collect();
    cross.sort_by(by_distance_then_id);
    for (a, b) in cross {
        if sets.union(a, b) {
            chosen.insert((a, b));
        }
    }
    let edges = chosen
        .into_iter()
        .map(|(a, b)| GraphEdge {
            a,
            b,
            weight: matrix.get(a, b).max(MIN_EDGE_WEIGHT),
        })
        .collect();
    Ok(CurveGraph::new(ids.clone(), edges))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphPath {
    pub nodes: Vec<String>,
    pub weight: f64,
}

/// Minimum-weight path. Among equal weights the lexicographically smallest
/// id sequence wins.
pub fn shortest_path(graph: &CurveGraph, from: &str, to: &str) -> Result<GraphPath> {
    let source = graph
        .index_of(from)
        .ok_or_else(|| Error::UnknownId(from.to_string()))?;
    let target = graph.index_of(to).ok_or_else(|| Error::UnknownId(to.to_string()))?;
    let n = graph.nodes.len();
    let ids = &graph.nodes;
    let label_cmp = |a: &(f64, Vec<usize>), b: &(f64, Vec<usize>)| -> Ordering {
        a.0.total_cmp(&b.0).then_with(|| {
            let ka = a.1.iter().map(|&i| ids[i].as_str());
            let kb = b.1.iter().map(|&i| ids[i].as_str());
            ka.cmp(kb)
        })
    };

    let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; n];
    let mut done = vec![false; n];
    best[source] = Some((0.0, vec![source]));
    loop {
        let next = (0..n)
            .filter(|&v| !done[v] && best[v].is_some())
            .min_by(|&a, &b| label_cmp(best[a].as_ref().unwrap(), best[b].as_ref().unwrap()));
        let Some(u) = next else { break };
        done[u] = true;
        if u == target {
            break;
        }
        let (du, pu) = best[u].clone().unwrap();
        for &(v, w) in graph.neighbours(u) {
            if done[v] {
                continue;
            }
            let mut path = pu.clone();
            path.push(v);
            let candidate = (du + w, path);
            let better = match &best[v] {
                None => true,
                Some(current) => label_cmp(&candidate, current) == Ordering::Less,
            };
            if better {
                best[v] = Some(candidate);
            }
        }
    }
    let (weight, path) = best[target]
        .clone()
        .ok_or_else(|| Error::UnknownId(format!("{to} is unreachable from {from}")))?;
    Ok(GraphPath {
        nodes: path.into_iter().map(|i| ids[i].clone()).collect(),
        weight,
    })
}

/// Morph frames along consecutive curves of a path, `frames_per_hop`
/// frames per hop at `t = 0, 1/(f−1), …, 1`. Neighbouring hops share their
/// boundary frame, so an `L`-hop path yields `L·(f−1) + 1` frames.
pub fn path_animation(curves: &[&ResampledCurve], frames_per_hop: usize) -> Result<Vec<Polyline>> {
    if frames_per_hop < 2 {
        return Err(Error::InvalidParams("frames per hop must be at least 2".into()));
    }
    let first = curves
        .first()
        .ok_or_else(|| Error::EmptyInput("path has no nodes".into()))?;
    if curves.len() == 1 {
        return Ok(vec![Polyline::new(first.points.clone())]);
    }
    let mut frames = Vec::with_capacity((curves.len() - 1) * (frames_per_hop - 1) + 1);
    for (hop, pair) in curves.windows(2).enumerate() {
        let (p, q) = (&pair[0].points, &pair[1].points);
        let coupling = optimal_coupling(&discrete_frechet(p, q)?.table);
        let start = if hop == 0 { 0 } else { 1 };
        for f in start..frames_per_hop {
            let t = f as f64 / (frames_per_hop - 1) as f64;
            frames.push(morph(p, q, &coupling, t));
        }
    }
    Ok(frames)
}
