//! Electrical reading of a plasmodial network.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::scene::Scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    /// Contracted terminal region of an electrode.
    Electrode(String),
    Junction,
    /// Dead end of a tube.
    Tip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub position: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// mm.
    pub length: f64,
    /// Ohms; the conductance is its reciprocal.
    pub resistance: f64,
}

impl Edge {
    pub fn conductance(&self) -> f64 {
        1.0 / self.resistance
    }
}

/// Simple undirected graph of tubes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConductiveNetwork {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl ConductiveNetwork {
    pub fn add_node(&mut self, kind: NodeKind, position: Point) -> usize {
        self.nodes.push(Node { kind, position });
        self.nodes.len() - 1
    }

    pub fn add_edge(&mut self, a: usize, b: usize, length: f64, resistance: f64) {
        self.edges.push(Edge { a, b, length, resistance });
    }

    pub fn electrode_node(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| matches!(&n.kind, NodeKind::Electrode(e) if e == id))
    }

    /// Whether any path joins the two nodes.
    pub fn connected(&self, from: usize, to: usize) -> bool {
        let adj = self.adjacency();
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(n) = queue.pop_front() {
            if n == to {
                return true;
            }
            for &(m, _) in &adj[n] {
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        false
    }

    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (k, e) in self.edges.iter().enumerate() {
            adj[e.a].push((e.b, k));
            adj[e.b].push((e.a, k));
        }
        adj
    }

    /// Effective resistance between two nodes, `None` when they are not
    /// connected.
    pub fn effective_resistance(&self, from: usize, to: usize) -> Option<f64> {
        if from == to {
            return Some(0.0);
        }
        if !self.connected(from, to) {
            return None;
        }
        let mut reduced = self.component(from);
        let (from, to) = (reduced.1[&from], reduced.1[&to]);
        reduced.0.reduce_series_parallel(&[from, to]);
        let net = &reduced.0;
        let live: Vec<&Edge> = net.edges.iter().collect();
        if live.len() == 1 && ((live[0].a, live[0].b) == (from, to) || (live[0].a, live[0].b) == (to, from)) {
            return Some(live[0].resistance);
        }
        Some(nodal_resistance(net, from, to))
    }

    /// The connected component containing `root`, with an old→new index map.
    fn component(&self, root: usize) -> (ConductiveNetwork, BTreeMap<usize, usize>) {
        let adj = self.adjacency();
        let mut map = BTreeMap::new();
        let mut order = vec![root];
        map.insert(root, 0);
        let mut i = 0;
        while i < order.len() {
            let n = order[i];
            i += 1;
            for &(m, _) in &adj[n] {
                if !map.contains_key(&m) {
                    map.insert(m, order.len());
                    order.push(m);
                }
            }
        }
        let mut out = ConductiveNetwork::default();
        for &n in &order {
            out.nodes.push(self.nodes[n].clone());
        }
        for e in &self.edges {
            if let (Some(&a), Some(&b)) = (map.get(&e.a), map.get(&e.b)) {
                out.edges.push(Edge { a, b, ..*e });
            }
        }
        (out, map)
    }

    /// Merges parallel edges and eliminates degree-2 nodes (other than
    /// `keep`) and dangling degree-1 nodes, exactly, in resistance form.
    /// Node indices are preserved; eliminated nodes simply lose their edges.
    fn reduce_series_parallel(&mut self, keep: &[usize]) {
        loop {
            let mut changed = false;
            self.edges.retain(|e| e.a != e.b);
            let mut by_pair: BTreeMap<(usize, usize), Edge> = BTreeMap::new();
            for e in &self.edges {
                let key = (e.a.min(e.b), e.a.max(e.b));
                by_pair
                    .entry(key)
                    .and_modify(|x| {
                        x.resistance = x.resistance * e.resistance / (x.resistance + e.resistance);
                        changed = true;
                    })
                    .or_insert(Edge { a: key.0, b: key.1, ..*e });
            }
            self.edges = by_pair.into_values().collect();
            let adj = self.adjacency();
            for (n, list) in adj.iter().enumerate() {
                if keep.contains(&n) {
                    continue;
                }
                if list.len() == 1 {
                    self.edges.remove(list[0].1);
                    changed = true;
                    break;
                }
                if list.len() == 2 {
                    let (e1, e2) = (self.edges[list[0].1], self.edges[list[1].1]);
                    let merged = Edge {
                        a: list[0].0,
                        b: list[1].0,
                        length: e1.length + e2.length,
                        resistance: e1.resistance + e2.resistance,
                    };
                    let (hi, lo) = (list[0].1.max(list[1].1), list[0].1.min(list[1].1));
                    self.edges.remove(hi);
                    self.edges.remove(lo);
                    self.edges.push(merged);
                    changed = true;
                    break;
                }
            }
            if !changed {
                return;
            }
        }
    }
}

/// Two-terminal resistance by grounding `to`, injecting 1 A at `from` and
/// solving the reduced Laplacian.
fn nodal_resistance(net: &ConductiveNetwork, from: usize, to: usize) -> f64 {
    let n = net.nodes.len();
    let idx: Vec<Option<usize>> = {
        let mut k = 0;
        (0..n)
            .map(|i| {
                (i != to).then(|| {
                    k += 1;
                    k - 1
                })
            })
            .collect()
    };
    let m = n - 1;
    let mut a = vec![vec![0.0; m + 1]; m];
    for e in &net.edges {
        let g = e.conductance();
        for (p, q) in [(e.a, e.b), (e.b, e.a)] {
            if let Some(i) = idx[p] {
                a[i][i] += g;
                if let Some(j) = idx[q] {
                    a[i][j] -= g;
                }
            }
        }
    }
    let src = idx[from].expect("from differs from to");
    a[src][m] = 1.0;
    // Nodes cut off by series-parallel reduction have empty rows; pin them.
    for (i, row) in a.iter_mut().enumerate() {
        if row[..m].iter().all(|&v| v == 0.0) {
            row[i] = 1.0;
        }
    }
    solve(&mut a)[src]
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve(a: &mut [Vec<f64>]) -> Vec<f64> {
    let m = a.len();
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).expect("non-empty");
        a.swap(col, pivot);
        let p = a[col][col];
        for row in col + 1..m {
            let f = a[row][col] / p;
            if f != 0.0 {
                for k in col..=m {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let s: f64 = (row + 1..m).map(|k| a[row][k] * x[k]).sum();
        x[row] = (a[row][m] - s) / a[row][row];
    }
    x
}

/// Resistance between two electrodes including the agar blob under each.
/// `None` means an open circuit.
pub fn path_resistance(network: &ConductiveNetwork, scene: &Scene, from: &str, to: &str) -> Option<f64> {
    let (a, b) = (network.electrode_node(from)?, network.electrode_node(to)?);
    let tubes = network.effective_resistance(a, b)?;
    let blob = |id: &str| scene.blob_on_electrode(id).map_or(0.0, |i| scene.agar_blobs[i].resistance);
    Some(blob(from) + tubes + blob(to))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputReading {
    /// Ohms; `None` is an open circuit.
    pub resistance: Option<f64>,
    pub output_voltage: f64,
    pub logic_level: u8,
    pub tubule_count: usize,
}

/// Output circuit: supply, series plasmodium, load resistor; the output is
/// the voltage across the load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputCircuit {
    pub supply: f64,
    pub load: f64,
    pub threshold: f64,
}

impl OutputCircuit {
    pub fn with_supply(supply: f64) -> Self {
        OutputCircuit { supply, load: 10_000.0, threshold: 0.5 }
    }
}

pub fn read_output(resistance: Option<f64>, supply_voltage: f64, load: f64, logic_threshold: f64) -> OutputReading {
    let output_voltage = match resistance {
        Some(r) => supply_voltage * load / (load + r),
        None => 0.0,
    };
    OutputReading {
        resistance,
        output_voltage,
        logic_level: u8::from(output_voltage >= logic_threshold),
        tubule_count: 0,
    }
}

/// Number of edge-disjoint paths between two electrodes.
pub fn count_tubules(network: &ConductiveNetwork, from: &str, to: &str) -> usize {
    match (network.electrode_node(from), network.electrode_node(to)) {
        (Some(a), Some(b)) if a != b => edge_disjoint_paths(network, a, b),
        _ => 0,
    }
}

/// Unit-capacity max flow on the undirected graph (Edmonds–Karp).
pub fn edge_disjoint_paths(network: &ConductiveNetwork, s: usize, t: usize) -> usize {
    let n = network.nodes.len();
    // Arc 2k runs a→b, arc 2k+1 runs b→a; each has capacity 1.
    let mut flow = vec![0i32; network.edges.len() * 2];
    let adj = network.adjacency();
    let mut total = 0;
    loop {
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut queue = VecDeque::from([s]);
        let mut seen = vec![false; n];
        seen[s] = true;
        while let Some(u) = queue.pop_front() {
            if u == t {
                break;
            }
            for &(v, k) in &adj[u] {
                let arc = if network.edges[k].a == u && network.edges[k].b == v { 2 * k } else { 2 * k + 1 };
                let reverse = arc ^ 1;
                let residual = 1 - flow[arc] + flow[reverse];
                if residual > 0 && !seen[v] {
                    seen[v] = true;
                    prev[v] = Some((u, arc));
                    queue.push_back(v);
                }
            }
        }
        if !seen[t] {
            return total;
        }
        let mut v = t;
        while let Some((u, arc)) = prev[v] {
            if flow[arc ^ 1] > 0 {
                flow[arc ^ 1] -= 1;
            } else {
                flow[arc] += 1;
            }
            v = u;
        }
        total += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(resistances: &[f64]) -> ConductiveNetwork {
        let mut n = ConductiveNetwork::default();
        let x = n.add_node(NodeKind::Electrode("X".into()), Point::default());
        let mut prev = x;
        for (i, &r) in resistances.iter().enumerate() {
            let next = if i + 1 == resistances.len() {
                n.add_node(NodeKind::Electrode("Y".into()), Point::default())
            } else {
                n.add_node(NodeKind::Junction, Point::default())
            };
            n.add_edge(prev, next, 1.0, r);
            prev = next;
        }
        n
    }

    #[test]
    fn series_sums() {
        let n = chain(&[100.0, 250.0, 650.0]);
        assert_eq!(n.effective_resistance(0, 3), Some(1000.0));
    }

    #[test]
    fn open_reads_zero() {
        let r = read_output(None, 9.0, 10_000.0, 0.5);
        assert_eq!((r.output_voltage, r.logic_level), (0.0, 0));
        let r = read_output(Some(0.0), 9.0, 10_000.0, 0.5);
        assert_eq!((r.output_voltage, r.logic_level), (9.0, 1));
    }

    #[test]
    fn dangling_branch_is_ignored() {
        let mut n = chain(&[100.0, 100.0]);
        let tip = n.add_node(NodeKind::Tip, Point::default());
        n.add_edge(1, tip, 1.0, 7.0);
        assert_eq!(n.effective_resistance(0, 2), Some(200.0));
        assert_eq!(edge_disjoint_paths(&n, 0, 2), 1);
    }
}
