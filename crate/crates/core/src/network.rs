//! Turning a trail grid into a graph of tubes.
//!
//! Cells at or above the threshold form a mask. Each electrode owns a
//! terminal region (its footprint plus mask cells on its own agar blob that
//! touch the footprint), which is contracted to one node. The rest of the
//! mask is thinned to a one-pixel skeleton, and chains of skeleton pixels
//! between branch points become edges.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::calibration::Electrical;
use crate::circuit::{ConductiveNetwork, NodeKind};
use crate::geometry::Point;
use crate::grid::{GridSpec, Raster};
use crate::plasmodium::PlasmodiumState;
use crate::scene::Scene;

/// Offsets in Yokoi order: E, NE, N, NW, W, SW, S, SE.
const RING: [(isize, isize); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

fn offset(spec: &GridSpec, idx: usize, (dc, dr): (isize, isize)) -> Option<usize> {
    let (c, r) = spec.col_row(idx);
    let (nc, nr) = (c as isize + dc, r as isize + dr);
    (nc >= 0 && nr >= 0 && (nc as usize) < spec.width && (nr as usize) < spec.height)
        .then(|| spec.index(nc as usize, nr as usize))
}

/// Terminal label per cell (electrode index), following the footprint rule.
pub fn terminal_regions(raster: &Raster, mask: &[bool]) -> Vec<Option<u16>> {
    let spec = raster.spec;
    let mut label = vec![None; spec.len()];
    for (e, cells) in raster.footprint_cells.iter().enumerate() {
        let blob = raster.blob.iter().zip(&raster.electrode).find_map(|(b, el)| match (b, el) {
            (Some(b), Some(el)) if *el as usize == e => Some(*b),
            _ => None,
        });
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &c in cells {
            if label[c].is_none() {
                label[c] = Some(e as u16);
                queue.push_back(c);
            }
        }
        let Some(blob) = blob else { continue };
        while let Some(c) = queue.pop_front() {
            for n in spec.neighbours8(c) {
                if label[n].is_none() && mask[n] && raster.blob[n] == Some(blob) {
                    label[n] = Some(e as u16);
                    queue.push_back(n);
                }
            }
        }
    }
    label
}

/// Whether the thresholded trail joins two electrodes' footprints through
/// 8-connected cells.
pub fn footprints_connected(raster: &Raster, mask: &[bool], from: usize, to: usize) -> bool {
    footprints_connected_by(raster, |c| mask[c], from, to)
}

/// [`footprints_connected`] with the mask evaluated lazily.
pub fn footprints_connected_by(raster: &Raster, on: impl Fn(usize) -> bool, from: usize, to: usize) -> bool {
    let spec = raster.spec;
    let passable = |c: usize| raster.in_dish[c] && (raster.electrode[c].is_some() || on(c));
    let mut seen = vec![false; spec.len()];
    let mut queue: VecDeque<usize> = raster.footprint_cells[from].iter().copied().collect();
    for &c in &queue {
        seen[c] = true;
    }
    while let Some(c) = queue.pop_front() {
        if raster.electrode[c] == Some(to as u16) {
            return true;
        }
        for n in spec.neighbours8(c) {
            if !seen[n] && passable(n) {
                seen[n] = true;
                queue.push_back(n);
            }
        }
    }
    false
}

/// Yokoi 8-connectivity number of a pixel.
fn connectivity_number(fg: &[bool], spec: &GridSpec, idx: usize) -> u8 {
    let x: Vec<bool> = RING.iter().map(|&d| offset(spec, idx, d).is_some_and(|n| fg[n])).collect();
    let y = |k: usize| u8::from(!x[k % 8]);
    (0..4).map(|i| 2 * i).map(|k| y(k) - y(k) * y(k + 1) * y(k + 2)).sum()
}

fn neighbour_count(fg: &[bool], spec: &GridSpec, idx: usize) -> usize {
    spec.neighbours8(idx).filter(|&n| fg[n]).count()
}

/// Sequential thinning: repeatedly removes simple border pixels that are not
/// endpoints, never touching `fixed` pixels.
pub fn thin(fg: &mut [bool], fixed: &[bool], spec: &GridSpec) {
    const SIDES: [(isize, isize); 4] = [(0, 1), (1, 0), (0, -1), (-1, 0)];
    loop {
        let mut changed = false;
        for side in SIDES {
            let candidates: Vec<usize> = (0..spec.len())
                .filter(|&i| fg[i] && !fixed[i] && offset(spec, i, side).is_none_or(|n| !fg[n]))
                .collect();
            for i in candidates {
                if neighbour_count(fg, spec, i) >= 2 && connectivity_number(fg, spec, i) == 1 {
                    fg[i] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            return;
        }
    }
}

/// Builds the tube graph of an arbitrary trail grid.
pub fn network_from_trail(trail: &[f64], scene: &Scene, raster: &Raster, threshold: f64, electrical: &Electrical) -> ConductiveNetwork {
    let spec = raster.spec;
    let mask: Vec<bool> = trail.iter().zip(&raster.in_dish).map(|(&t, &d)| d && t >= threshold).collect();
    let terminal = terminal_regions(raster, &mask);
    let fixed: Vec<bool> = terminal.iter().map(Option::is_some).collect();
    let mut fg: Vec<bool> = mask.iter().zip(&fixed).map(|(&m, &f)| m || f).collect();
    let depth = chamfer_depth(&fg, &spec);
    thin(&mut fg, &fixed, &spec);

    let mut net = ConductiveNetwork::default();
    for e in &scene.electrodes {
        net.add_node(NodeKind::Electrode(e.id.clone()), e.center);
    }
    // Vertex of the pixel graph: terminals first, then skeleton pixels.
    let n_term = scene.electrodes.len();
    let mut vertex_of = vec![usize::MAX; spec.len()];
    let mut pixels = Vec::new();
    for i in 0..spec.len() {
        if let Some(t) = terminal[i] {
            vertex_of[i] = t as usize;
        } else if fg[i] {
            vertex_of[i] = n_term + pixels.len();
            pixels.push(i);
        }
    }
    let nv = n_term + pixels.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nv];
    let link = |adj: &mut Vec<Vec<usize>>, a: usize, b: usize| {
        if a != b && !adj[a].contains(&b) {
            adj[a].push(b);
            adj[b].push(a);
        }
    };
    for &p in &pixels {
        for (k, &d) in RING.iter().enumerate() {
            let Some(q) = offset(&spec, p, d) else { continue };
            if !fg[q] {
                continue;
            }
            if k % 2 == 1 {
                // m-adjacency: a diagonal only counts when no shared
                // 4-neighbour is foreground.
                let side_a = offset(&spec, p, (d.0, 0)).is_some_and(|n| fg[n]);
                let side_b = offset(&spec, p, (0, d.1)).is_some_and(|n| fg[n]);
                if side_a || side_b {
                    continue;
                }
            }
            link(&mut adj, vertex_of[p], vertex_of[q]);
        }
    }

    let is_node = |v: usize| v < n_term || adj[v].len() != 2;
    let position = |v: usize| if v < n_term { scene.electrodes[v].center } else { spec.center(pixels[v - n_term]) };
    let step = |a: usize, b: usize| {
        if a < n_term || b < n_term {
            0.5 * spec.cell_size
        } else {
            spec.center(pixels[a - n_term]).distance(spec.center(pixels[b - n_term]))
        }
    };
    let mut node_of: BTreeMap<usize, usize> = (0..n_term).map(|v| (v, v)).collect();
    let mut node_for = |net: &mut ConductiveNetwork, v: usize| -> usize {
        *node_of.entry(v).or_insert_with(|| {
            let kind = if adj[v].len() >= 3 { NodeKind::Junction } else { NodeKind::Tip };
            net.add_node(kind, position(v))
        })
    };
    let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut pairs: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let unit = electrical.tube_resistance / 10.0 * electrical.canonical_tube_trail;
    for start in 0..nv {
        if !is_node(start) {
            continue;
        }
        for &first in &adj[start] {
            if used.contains(&(start, first)) {
                continue;
            }
            let mut length = step(start, first);
            let mut trail_sum = 0.0;
            let mut trail_n = 0usize;
            let mut widths = Vec::new();
            let mut count = |v: usize, s: &mut f64, n: &mut usize| {
                if v >= n_term {
                    *s += trail[pixels[v - n_term]];
                    *n += 1;
                    widths.push(2.0 * depth[pixels[v - n_term]] - 1.0);
                }
            };
            count(start, &mut trail_sum, &mut trail_n);
            let (mut prev, mut cur) = (start, first);
            used.insert((start, first));
            while !is_node(cur) {
                count(cur, &mut trail_sum, &mut trail_n);
                let next = if adj[cur][0] == prev { adj[cur][1] } else { adj[cur][0] };
                length += step(cur, next);
                used.insert((cur, next));
                prev = cur;
                cur = next;
            }
            used.insert((cur, prev));
            count(cur, &mut trail_sum, &mut trail_n);
            if cur == start {
                continue;
            }
            let mean = if trail_n == 0 { electrical.canonical_tube_trail } else { trail_sum / trail_n as f64 };
            let resistance = unit * length / mean;
            let strands = strand_count(&mut widths, electrical.tubule_width);
            let (a, b) = (node_for(&mut net, start), node_for(&mut net, cur));
            let key = (a.min(b), a.max(b));
            // Each strand carries an equal share, so together they keep the
            // chain's resistance.
            let each = resistance * strands as f64;
            for _ in 0..strands {
                let seen = pairs.entry(key).or_insert(0);
                *seen += 1;
                if *seen == 1 {
                    net.add_edge(a, b, length, each);
                } else {
                    let mid = net.add_node(NodeKind::Junction, midpoint(position(start), position(cur)));
                    net.add_edge(a, mid, length / 2.0, each / 2.0);
                    net.add_edge(mid, b, length / 2.0, each / 2.0);
                }
            }
        }
    }
    net
}

/// Parallel tubules in a chain whose pixels have the given local widths.
fn strand_count(widths: &mut [f64], tubule_width: f64) -> usize {
    if widths.is_empty() {
        return 1;
    }
    widths.sort_by(f64::total_cmp);
    let median = widths[widths.len() / 2];
    ((median / tubule_width).floor() as usize).max(1)
}

/// Approximate Euclidean distance from each foreground cell to the nearest
/// background cell (3-4 chamfer, in cells; 1 on the boundary). Off-grid
/// counts as background.
pub fn chamfer_depth(fg: &[bool], spec: &GridSpec) -> Vec<f64> {
    const FAR: u32 = u32::MAX / 2;
    let mut d: Vec<u32> = fg.iter().map(|&f| if f { FAR } else { 0 }).collect();
    let get = |d: &[u32], idx: usize, off: (isize, isize)| offset(spec, idx, off).map_or(0, |n| d[n]);
    for idx in 0..spec.len() {
        if d[idx] == 0 {
            continue;
        }
        let m = [((-1, 0), 3), ((0, -1), 3), ((-1, -1), 4), ((1, -1), 4)]
            .iter()
            .map(|&(o, w)| get(&d, idx, o) + w)
            .min()
            .unwrap_or(3);
        d[idx] = d[idx].min(m);
    }
    for idx in (0..spec.len()).rev() {
        if d[idx] == 0 {
            continue;
        }
        let m = [((1, 0), 3), ((0, 1), 3), ((1, 1), 4), ((-1, 1), 4)]
            .iter()
            .map(|&(o, w)| get(&d, idx, o) + w)
            .min()
            .unwrap_or(3);
        d[idx] = d[idx].min(m);
    }
    d.into_iter().map(|v| v as f64 / 3.0).collect()
}

fn midpoint(a: Point, b: Point) -> Point {
    Point::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y))
}

/// Tube graph of a plasmodium's current trail.
pub fn extract_network(
    state: &PlasmodiumState,
    scene: &Scene,
    raster: &Raster,
    threshold: f64,
    electrical: &Electrical,
) -> ConductiveNetwork {
    network_from_trail(&state.trail_grid(), scene, raster, threshold, electrical)
}
