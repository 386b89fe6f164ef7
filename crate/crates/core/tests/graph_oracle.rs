#![allow(clippy::needless_range_loop)]

use reshape_core::frechet::{knn_graph, shortest_path, CurveGraph, DistanceMatrix};
use reshape_core::synth::SeededRng;

fn random_matrix(rng: &mut SeededRng, n: usize) -> DistanceMatrix {
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            // Coarse weights so equal-weight ties actually occur.
            let w = (1 + rng.below(6)) as f64 / 4.0;
            d[i][j] = w;
            d[j][i] = w;
        }
    }
    DistanceMatrix {
        ids: (0..n).map(|i| format!("n{i}")).collect(),
        m: 0,
        distances: d,
    }
}

/// Every simple path by depth-first enumeration; returns the minimum weight
/// and, among minima, the lexicographically smallest id sequence.
fn enumerate(g: &CurveGraph, from: usize, to: usize) -> (f64, Vec<String>) {
    fn walk(g: &CurveGraph, at: usize, to: usize, seen: &mut Vec<bool>, path: &mut Vec<usize>, w: f64,
            best: &mut Option<(f64, Vec<String>)>) {
        if at == to {
            let ids: Vec<String> = path.iter().map(|&i| g.nodes[i].clone()).collect();
            let better = match best {
                None => true,
                Some((bw, bp)) => w < *bw || (w == *bw && ids < *bp),
            };
            if better {
                *best = Some((w, ids));
            }
            return;
        }
        for &(v, ew) in g.neighbours(at) {
            if !seen[v] {
                seen[v] = true;
                path.push(v);
                walk(g, v, to, seen, path, w + ew, best);
                path.pop();
                seen[v] = false;
            }
        }
    }
    let mut seen = vec![false; g.nodes.len()];
    seen[from] = true;
    let mut best = None;
    walk(g, from, to, &mut seen, &mut vec![from], 0.0, &mut best);
    best.expect("graph is connected")
}

#[test]
fn dijkstra_matches_exhaustive_enumeration() {
    let mut rng = SeededRng::new(2024);
    for trial in 0..150 {
        let n = 2 + trial % 7;
        let k = 1 + rng.below(3) as usize;
        let g = knn_graph(&random_matrix(&mut rng, n), k).unwrap();
        assert!(g.is_connected());
        for a in 0..n {
            for b in 0..n {
                let got = shortest_path(&g, &g.nodes[a], &g.nodes[b]).unwrap();
                let (w, ids) = enumerate(&g, a, b);
                assert_eq!(got.weight, w, "trial {trial} {a}->{b}");
                assert_eq!(got.nodes, ids, "trial {trial} {a}->{b}");
            }
        }
    }
}

#[test]
fn every_node_has_an_edge() {
    let mut rng = SeededRng::new(9);
    for n in 2..9 {
        let g = knn_graph(&random_matrix(&mut rng, n), 1).unwrap();
        assert!((0..n).all(|i| g.degree(i) >= 1));
        assert!(g.edges.iter().all(|e| e.weight > 0.0));
    }
}
