//! Independent reference computations checked against the library.

mod common;

use common::{nodal_oracle, random_network};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use optoslime_core::calibration::{Calibration, FieldParams};
use optoslime_core::cascade::{estimate_cascade, Netlist, BENCH_MARGIN};
use optoslime_core::circuit::{count_tubules, edge_disjoint_paths, path_resistance, read_output, ConductiveNetwork, NodeKind};
use optoslime_core::fields::StimulusFields;
use optoslime_core::gates::build_pnot;
use optoslime_core::geometry::{segments_intersect, Point};
use optoslime_core::grid::{GridSpec, Raster};
use optoslime_core::network::{footprints_connected, network_from_trail};
use optoslime_core::scene::{AttractantSource, Scene, AGAR_BLOB_OHMS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn path_resistance_matches_nodal_analysis_on_random_graphs() {
    let scene = build_pnot(10.0, 9.0).scene;
    let blobs = 2.0 * AGAR_BLOB_OHMS;
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut connected = 0;
    for _ in 0..100 {
        let nodes = rng.random_range(2..=20);
        let edges = rng.random_range(1..=3 * nodes);
        let net = random_network(&mut rng, nodes, edges);
        let got = path_resistance(&net, &scene, "X", "Y");
        match nodal_oracle(&net, 0, 1) {
            None => assert_eq!(got, None),
            Some(r) => {
                connected += 1;
                let got = got.expect("connected graph has a finite resistance");
                let want = r + blobs;
                assert!(((got - want) / want).abs() <= 1e-9, "{got} vs {want}");
            }
        }
    }
    assert!(connected > 50, "only {connected} connected graphs");
}

#[test]
fn canonical_single_tube_is_blob_plus_tube_plus_blob() {
    let scene = build_pnot(10.0, 9.0).scene;
    let mut net = ConductiveNetwork::default();
    let x = net.add_node(NodeKind::Electrode("X".into()), Point::new(-10.0, 0.0));
    let y = net.add_node(NodeKind::Electrode("Y".into()), Point::new(10.0, 0.0));
    net.add_edge(x, y, 10.0, 5_000.0);
    assert_eq!(path_resistance(&net, &scene, "X", "Y"), Some(18_000.0 + 5_000.0 + 18_000.0));

    // Two parallel 10 kΩ tubes.
    net.edges[0].resistance = 10_000.0;
    net.add_edge(x, y, 10.0, 10_000.0);
    let got = path_resistance(&net, &scene, "X", "Y").unwrap();
    let want = nodal_oracle(&net, x, y).unwrap() + 36_000.0;
    assert!((got - 41_000.0).abs() <= 1e-9 * 41_000.0 && (got - want).abs() <= 1e-9 * want);
}

#[test]
fn extracted_thin_tube_reads_as_one_series_resistor() {
    let h = build_pnot(10.0, 9.0);
    let cal = Calibration::default();
    let raster = Raster::new(&h.scene, GridSpec::for_scene(&h.scene, cal.fields.grid_resolution));
    let spec = raster.spec;
    let mut trail = vec![0.0; spec.len()];
    let row = spec.cell_of(Point::new(0.0, 0.2)).map(|c| spec.col_row(c).1).unwrap();
    for c in 0..spec.width {
        let i = spec.index(c, row);
        let x = spec.center(i).x;
        if (-6.0..=6.0).contains(&x) {
            trail[i] = 100.0;
        }
    }
    let net = network_from_trail(&trail, &h.scene, &raster, cal.electrical.trail_threshold, &cal.electrical);
    assert_eq!(net.edges.len(), 1, "{net:?}");
    let tube = net.edges[0].resistance;
    assert_eq!(path_resistance(&net, &h.scene, "X", "Y"), Some(AGAR_BLOB_OHMS + tube + AGAR_BLOB_OHMS));
    assert_eq!(count_tubules(&net, "X", "Y"), 1);
}

#[test]
fn divider_reference_value() {
    let r = read_output(Some(41_000.0), 9.0, 10_000.0, 0.5);
    assert!((r.output_voltage - 9.0 * 10.0 / 51.0).abs() < 1e-12);
    assert!((r.output_voltage - 1.7647).abs() < 1e-4);
    assert_eq!(r.logic_level, 1);
    assert_eq!(read_output(None, 9.0, 10_000.0, 0.5).output_voltage, 0.0);
    assert_eq!(read_output(Some(0.0), 9.0, 10_000.0, 0.5).output_voltage, 9.0);
}

/// Largest number of edge-disjoint s–t paths by trying every subset of
/// edges as a candidate path family.
fn brute_force_disjoint(net: &ConductiveNetwork, s: usize, t: usize) -> usize {
    let m = net.edges.len();
    // Simple paths as edge bitmasks.
    let mut paths: Vec<u32> = Vec::new();
    fn walk(net: &ConductiveNetwork, at: usize, t: usize, used: u32, visited: u64, out: &mut Vec<u32>) {
        if at == t {
            out.push(used);
            return;
        }
        for (k, e) in net.edges.iter().enumerate() {
            let next = if e.a == at { e.b } else if e.b == at { e.a } else { continue };
            if used & (1 << k) != 0 || visited & (1 << next) != 0 {
                continue;
            }
            walk(net, next, t, used | (1 << k), visited | (1 << next), out);
        }
    }
    walk(net, s, t, 0, 1 << s, &mut paths);
    paths.sort_unstable();
    paths.dedup();
    fn best(paths: &[u32], taken: u32) -> usize {
        match paths.split_first() {
            None => 0,
            Some((&p, rest)) => {
                let skip = best(rest, taken);
                if p & taken == 0 {
                    skip.max(1 + best(rest, taken | p))
                } else {
                    skip
                }
            }
        }
    }
    assert!(m <= 12);
    best(&paths, 0)
}

#[test]
fn tubule_count_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..150 {
        let nodes = rng.random_range(2..=7);
        let edges = rng.random_range(0..=12);
        let net = random_network(&mut rng, nodes, edges);
        assert_eq!(edge_disjoint_paths(&net, 0, 1), brute_force_disjoint(&net, 0, 1), "{net:?}");
    }
    // Ladder with three rails.
    let mut net = ConductiveNetwork::default();
    for i in 0..8 {
        net.add_node(NodeKind::Junction, Point::new(i as f64, 0.0));
    }
    for rail in 0..3 {
        let (a, b) = (2 + 2 * rail, 3 + 2 * rail);
        net.add_edge(0, a, 1.0, 1.0);
        net.add_edge(a, b, 1.0, 1.0);
        net.add_edge(b, 1, 1.0, 1.0);
    }
    net.add_edge(2, 4, 1.0, 1.0);
    net.add_edge(5, 7, 1.0, 1.0);
    assert_eq!(edge_disjoint_paths(&net, 0, 1), 3);
    assert_eq!(brute_force_disjoint(&net, 0, 1), 3);
}

#[test]
fn diffusion_matches_dense_operator() {
    let mut scene = Scene { dish_diameter: 16.0, ..Scene::default() };
    scene.attractants.push(AttractantSource { center: Point::new(2.3, -1.6), strength: 1.5, kind: "oat".into() });
    scene.attractants.push(AttractantSource { center: Point::new(-4.1, 3.2), strength: 0.5, kind: "oat".into() });
    let params = FieldParams::default();
    let cal = Calibration { fields: params.clone(), ..Calibration::default() };
    let raster = Raster::new(&scene, GridSpec::for_scene(&scene, 1.0));
    let spec = raster.spec;
    assert_eq!((spec.width, spec.height), (16, 16));
    let mut fields = StimulusFields::new(&scene, &raster, &cal);

    let n = spec.len();
    let d = params.diffusion;
    let mut op = DMatrix::<f64>::zeros(n, n);
    for i in (0..n).filter(|&i| raster.in_dish[i]) {
        let (c, r) = spec.col_row(i);
        let mut stay = 1.0;
        for (dc, dr) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            let (nc, nr) = (c as i64 + dc, r as i64 + dr);
            if nc < 0 || nr < 0 || nc >= spec.width as i64 || nr >= spec.height as i64 {
                continue;
            }
            let j = spec.index(nc as usize, nr as usize);
            if raster.in_dish[j] {
                op[(i, j)] += d;
                stay -= d;
            }
        }
        op[(i, i)] = stay;
    }
    let mut source = DVector::<f64>::zeros(n);
    for a in &scene.attractants {
        source[spec.cell_of(a.center).unwrap()] += a.strength;
    }
    let mut expect = DVector::from_column_slice(&fields.attractant);
    for _ in 0..5 {
        expect = (&op * (&expect + &source)) * (1.0 - params.attractant_decay);
    }
    fields.diffuse_attractant(&scene, &raster, 5, &params);
    for i in 0..n {
        assert!((fields.attractant[i] - expect[i]).abs() <= 1e-9, "cell {i}: {} vs {}", fields.attractant[i], expect[i]);
    }
}

#[test]
fn segment_intersection_matches_parametric_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    while checked < 100 {
        let mut p = || Point::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let (p1, p2, q1, q2) = (p(), p(), p(), p());
        let m = Matrix2::new(p2.x - p1.x, -(q2.x - q1.x), p2.y - p1.y, -(q2.y - q1.y));
        if m.determinant().abs() < 1e-3 {
            continue;
        }
        let st = m.lu().solve(&Vector2::new(q1.x - p1.x, q1.y - p1.y)).unwrap();
        let (s, t) = (st[0], st[1]);
        let margin = 1e-9;
        if [s, t].iter().any(|v| v.abs() < margin || (v - 1.0).abs() < margin) {
            continue;
        }
        let want = (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t);
        assert_eq!(segments_intersect(p1, p2, q1, q2), want, "{p1:?} {p2:?} {q1:?} {q2:?}");
        checked += 1;
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

#[test]
fn footprint_connectivity_matches_union_find() {
    let h = build_pnot(10.0, 9.0);
    let raster = Raster::new(&h.scene, GridSpec::for_scene(&h.scene, 1.0));
    let spec = raster.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut joined = 0;
    for trial in 0..60 {
        let density = 0.3 + 0.4 * (trial as f64 / 60.0);
        let mask: Vec<bool> = (0..spec.len()).map(|_| rng.random_bool(density)).collect();
        let open = |c: usize| raster.in_dish[c] && (raster.electrode[c].is_some() || mask[c]);
        let mut parent: Vec<usize> = (0..spec.len()).collect();
        for c in (0..spec.len()).filter(|&c| open(c)) {
            for n in spec.neighbours8(c).filter(|&n| open(n)) {
                let (a, b) = (find(&mut parent, c), find(&mut parent, n));
                parent[a] = b;
            }
        }
        let x = find(&mut parent, raster.footprint_cells[0][0]);
        let want = raster.footprint_cells[1].iter().any(|&c| find(&mut parent, c) == x);
        joined += usize::from(want);
        assert_eq!(footprints_connected(&raster, &mask, 0, 1), want);
    }
    assert!(joined > 0 && joined < 60, "joined {joined} of 60");
}

#[test]
fn half_adder_bench_area() {
    let e = estimate_cascade(&Netlist::half_adder(), 90.0, 3000.0).unwrap();
    let tile = (90.0 + BENCH_MARGIN) / 1000.0;
    assert_eq!(e.gates, 7);
    assert!((e.area_m2 - 7.0 * tile * tile).abs() < 1e-12);
    assert!((e.area_m2 - 0.5).abs() <= 0.1);
    assert_eq!(e.delay_ticks, 3.0 * 3000.0);
    let small = estimate_cascade(&Netlist::half_adder(), 30.0, 3000.0).unwrap();
    let ratio = (30.0 + BENCH_MARGIN).powi(2) / (90.0 + BENCH_MARGIN).powi(2);
    assert!((small.area_m2 / e.area_m2 - ratio).abs() < 1e-12);
}
