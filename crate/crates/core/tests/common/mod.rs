//! Reference computations shared by the oracle and acceptance suites.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use optoslime_core::circuit::{ConductiveNetwork, NodeKind};
use optoslime_core::geometry::Point;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_network(rng: &mut ChaCha8Rng, nodes: usize, edges: usize) -> ConductiveNetwork {
    let mut net = ConductiveNetwork::default();
    for i in 0..nodes {
        let kind = match i {
            0 => NodeKind::Electrode("X".into()),
            1 => NodeKind::Electrode("Y".into()),
            _ => NodeKind::Junction,
        };
        net.add_node(kind, Point::new(i as f64, 0.0));
    }
    for _ in 0..edges {
        let a = rng.random_range(0..nodes);
        let b = rng.random_range(0..nodes);
        let r = 10f64.powf(rng.random_range(2.0..5.0));
        net.add_edge(a, b, 1.0, r);
    }
    net
}

/// Effective resistance by dense nodal analysis: inject 1 A at `s`, ground
/// `t`, solve the reduced Laplacian over the nodes reachable from `s`.
pub fn nodal_oracle(net: &ConductiveNetwork, s: usize, t: usize) -> Option<f64> {
    let n = net.nodes.len();
    let mut reach = vec![false; n];
    let mut queue = VecDeque::from([s]);
    reach[s] = true;
    while let Some(u) = queue.pop_front() {
        for e in &net.edges {
            for (x, y) in [(e.a, e.b), (e.b, e.a)] {
                if x == u && !reach[y] {
                    reach[y] = true;
                    queue.push_back(y);
                }
            }
        }
    }
    if !reach[t] {
        return None;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| reach[i] && i != t).collect();
    let pos: BTreeMap<usize, usize> = keep.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let m = keep.len();
    let mut lap = DMatrix::<f64>::zeros(m, m);
    for e in net.edges.iter().filter(|e| e.a != e.b) {
        let g = 1.0 / e.resistance;
        let (pa, pb) = (pos.get(&e.a), pos.get(&e.b));
        if let Some(&i) = pa {
            lap[(i, i)] += g;
        }
        if let Some(&j) = pb {
            lap[(j, j)] += g;
        }
        if let (Some(&i), Some(&j)) = (pa, pb) {
            lap[(i, j)] -= g;
            lap[(j, i)] -= g;
        }
    }
    let mut rhs = DVector::<f64>::zeros(m);
    rhs[pos[&s]] = 1.0;
    let v = lap.lu().solve(&rhs).expect("reduced Laplacian of a connected graph is nonsingular");
    Some(v[pos[&s]])
}
