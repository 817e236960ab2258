use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::OnceLock;

use optoslime_core::calibration::Calibration;
use optoslime_core::circuit::{read_output, ConductiveNetwork, NodeKind};
use optoslime_core::experiments::{two_proportion_z, COLOURS};
use optoslime_core::gates::{build, run_gate, GateKind, Prepared};
use optoslime_core::geometry::{wrap_angle, Point};
use optoslime_core::plasmodium::Mode;
use optoslime_core::record::{Script, ScriptStep};
use proptest::prelude::*;

fn pnot() -> &'static std::sync::Arc<Prepared> {
    static P: OnceLock<std::sync::Arc<Prepared>> = OnceLock::new();
    P.get_or_init(|| Prepared::new(build(GateKind::Pnot, 10.0, 9.0), Calibration::default()).unwrap())
}

fn two_node(resistances: &[f64], series: bool) -> f64 {
    let mut n = ConductiveNetwork::default();
    let x = n.add_node(NodeKind::Electrode("X".into()), Point::default());
    let mut prev = x;
    let y = n.add_node(NodeKind::Electrode("Y".into()), Point::default());
    for (i, &r) in resistances.iter().enumerate() {
        if series {
            let next = if i + 1 == resistances.len() { y } else { n.add_node(NodeKind::Junction, Point::default()) };
            n.add_edge(prev, next, 1.0, r);
            prev = next;
        } else {
            n.add_edge(x, y, 1.0, r);
        }
    }
    n.effective_resistance(x, y).unwrap()
}

fn mode() -> impl Strategy<Value = Mode> {
    prop_oneof![
        Just(Mode::Exploring),
        Just(Mode::Migrating),
        Just(Mode::Withdrawing),
        Just(Mode::Sclerotized),
        Just(Mode::Fragmented)
    ]
}

fn bits() -> impl Strategy<Value = BTreeMap<String, u8>> {
    prop::collection::btree_map(prop::sample::select(vec!["A".to_string(), "B".to_string(), "C".to_string()]), 0..=1u8, 1..=3)
}

proptest! {
    #[test]
    fn output_voltage_falls_as_resistance_rises(r1 in 0.0..1e7f64, dr in 0.0..1e7f64, supply in 1.0..30.0f64) {
        let lo = read_output(Some(r1), supply, 10_000.0, 0.5);
        let hi = read_output(Some(r1 + dr), supply, 10_000.0, 0.5);
        prop_assert!(hi.output_voltage <= lo.output_voltage);
        prop_assert!(lo.output_voltage <= supply);
        prop_assert!(hi.logic_level <= lo.logic_level);
    }

    #[test]
    fn series_resistances_add(rs in prop::collection::vec(1.0..1e6f64, 1..8)) {
        let want: f64 = rs.iter().sum();
        prop_assert!((two_node(&rs, true) - want).abs() <= 1e-9 * want);
    }

    #[test]
    fn parallel_conductances_add(rs in prop::collection::vec(1.0..1e6f64, 1..8)) {
        let want = 1.0 / rs.iter().map(|r| 1.0 / r).sum::<f64>();
        prop_assert!((two_node(&rs, false) - want).abs() <= 1e-9 * want);
    }

    #[test]
    fn wrapped_angles_stay_in_range(theta in -1e4..1e4f64) {
        let w = wrap_angle(theta);
        prop_assert!((0.0..TAU).contains(&w));
        let turns = (theta - w) / TAU;
        prop_assert!((turns - turns.round()).abs() < 1e-6);
    }

    #[test]
    fn scripts_round_trip(
        gaps in prop::collection::vec(0..5000u64, 0..6),
        inputs in prop::collection::vec(bits(), 6),
        tail in prop::option::of(0..5000u64),
    ) {
        let mut tick = 0;
        let steps: Vec<ScriptStep> = gaps.iter().zip(&inputs).map(|(g, b)| {
            tick += g;
            ScriptStep { tick, inputs: b.clone() }
        }).collect();
        let script = Script { steps, end: tail.map(|t| tick + t) };
        prop_assert_eq!(Script::parse(&script.to_text()).unwrap(), script);
    }

    #[test]
    fn mode_graph_has_no_exits_from_terminal_modes(a in mode(), b in mode()) {
        if a.is_terminal() {
            prop_assert!(!a.can_become(b));
        }
        prop_assert!(!a.can_become(a));
    }

    #[test]
    fn z_test_is_symmetric(x1 in 0..40usize, x2 in 0..40usize) {
        let ab = two_proportion_z(x1, 40, x2, 40);
        let ba = two_proportion_z(x2, 40, x1, 40);
        prop_assert!((ab.z + ba.z).abs() < 1e-12);
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn gate_runs_are_deterministic_and_follow_the_mode_graph(seed in any::<u64>(), lit in 0..=1u8) {
        let inputs: BTreeMap<String, u8> = [("A".to_string(), lit)].into();
        let a = run_gate(pnot(), &inputs, seed).unwrap();
        let b = run_gate(pnot(), &inputs, seed).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for e in a.trace.iter().filter(|e| e.kind == "mode") {
            let (from, to) = e.detail.split_once("->").unwrap();
            let parse = |s: &str| serde_json::from_value::<Mode>(serde_json::Value::String(s.into())).unwrap();
            prop_assert!(parse(from).can_become(parse(to)), "illegal transition {}", e.detail);
        }
        if lit == 1 {
            prop_assert_eq!(a.logic_output, 0);
        }
    }
}

#[test]
fn phobia_weights_follow_the_ranking() {
    let cal = Calibration::default();
    let w: Vec<f64> = COLOURS.iter().map(|&nm| cal.phobia.weight(nm)).collect();
    let (blue, green, yellow, red) = (w[0], w[1], w[2], w[3]);
    assert!(green > red && red > yellow && yellow > blue, "{w:?}");
    assert!(Calibration::default().violations().is_empty());
}

#[test]
fn every_mode_edge_is_listed() {
    use Mode::*;
    let all = [Exploring, Migrating, Withdrawing, Sclerotized, Fragmented];
    let edges: Vec<(Mode, Mode)> = all.iter().flat_map(|&a| all.iter().map(move |&b| (a, b))).filter(|(a, b)| a.can_become(*b)).collect();
    assert_eq!(
        edges,
        [
            (Exploring, Migrating),
            (Migrating, Exploring),
            (Migrating, Withdrawing),
            (Withdrawing, Exploring),
            (Withdrawing, Sclerotized),
            (Withdrawing, Fragmented)
        ]
    );
}
