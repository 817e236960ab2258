//! Runs each headline criterion at its stated tolerance and prints one
//! PASS/FAIL line per criterion. Exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use common::{nodal_oracle, random_network};
use optoslime_core::calibration::Calibration;
use optoslime_core::cascade::{estimate_cascade, Netlist};
use optoslime_core::circuit::{path_resistance, ConductiveNetwork, NodeKind};
use optoslime_core::experiments::{fault_sweep, rank_colours, reuse_campaign, two_proportion_z, FaultVariable, SweepLevel};
use optoslime_core::gates::{build, GateKind, TruthTable};
use optoslime_core::geometry::Point;
use optoslime_core::record::{replay, RunRecord};
use optoslime_core::scene::{AGAR_BLOB_OHMS, BLUE_NM, GREEN_NM, RED_NM, YELLOW_NM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIALS: usize = 40;
const SEED: u64 = 1;

struct Report {
    failed: usize,
}

impl Report {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
        }
    }
}

fn pct(x: f64) -> f64 {
    100.0 * x
}

fn level(sweep: &[SweepLevel], gate: GateKind) -> &SweepLevel {
    sweep.iter().find(|l| l.gate == gate).expect("both gates are swept")
}

fn pooled(sweep: &[SweepLevel]) -> (usize, usize) {
    sweep.iter().fold((0, 0), |(f, n), l| (f + l.failures, n + l.runs))
}

fn rate(t: &TruthTable, bits: &[u8]) -> f64 {
    t.row(bits).expect("row exists").success_rate
}

fn phototaxis(r: &mut Report, cal: &Calibration) {
    let start = Instant::now();
    let ranking = rank_colours(cal, TRIALS, SEED).expect("ranking runs");
    let secs = start.elapsed().as_secs_f64();
    let pts: Vec<usize> = [GREEN_NM, RED_NM, YELLOW_NM, BLUE_NM].iter().map(|&c| ranking.points_of(c)).collect();
    let ordered = ranking.order == [GREEN_NM, RED_NM, YELLOW_NM, BLUE_NM];
    let gaps_ok = pts.windows(2).all(|w| w[0] >= w[1] + 4);
    r.check("phototaxis order green>red>yellow>blue", ordered, format!("points G {} R {} Y {} B {}", pts[0], pts[1], pts[2], pts[3]));
    r.check("phototaxis adjacent gaps >= 4", gaps_ok, format!("{pts:?}"));
    r.check("phototaxis campaign under 60 s", secs < 60.0, format!("{secs:.1} s"));
}

fn gates(r: &mut Report, pnot: &TruthTable, pnand: &TruthTable) {
    let one = pnot.row(&[1]).unwrap();
    r.check("PNOT input 1 gives logic 0 always", one.successes == one.trials, format!("{}/{}", one.successes, one.trials));
    let zero = pnot.row(&[0]).unwrap();
    let base = zero.success_rate;
    r.check("PNOT input 0 gives logic 1 in 75% +/- 10", (base - 0.75).abs() <= 0.10, format!("{:.1}%", pct(base)));
    let inside = zero.delays.iter().filter(|d| (1440..=5760).contains(*d)).count();
    let share = inside as f64 / zero.delays.len().max(1) as f64;
    r.check("PNOT delays in [1440, 5760] for >= 80%", share >= 0.80 && !zero.delays.is_empty(), format!("{inside}/{}", zero.delays.len()));

    let rows = [[0, 0], [0, 1], [1, 0]].map(|b| rate(pnand, &b));
    r.check(
        "PNAND rows 00/01/10 within 10 points of PNOT row 0",
        rows.iter().all(|x| (x - base).abs() <= 0.10),
        format!("{:.1}% {:.1}% {:.1}% vs {:.1}%", pct(rows[0]), pct(rows[1]), pct(rows[2]), pct(base)),
    );
    let both = pnand.row(&[1, 1]).unwrap();
    r.check("PNAND row 11 gives logic 0 always", both.successes == both.trials, format!("{}/{}", both.successes, both.trials));
    r.check("PNAND rows 01 and 10 differ by < 10 points", (rows[1] - rows[2]).abs() < 0.10, format!("{:.1} points", pct((rows[1] - rows[2]).abs())));
}

fn reuse(r: &mut Report, cal: &Calibration) {
    let rep = reuse_campaign(cal, TRIALS, SEED).expect("reuse campaign runs");
    r.check("reset withdrawal in 120-360 ticks for >= 90%", rep.withdrawal_in_window >= 0.90, format!("{:.1}%", pct(rep.withdrawal_in_window)));
    let faster = matches!((rep.reset_median_delay, rep.fresh_median_delay), (Some(a), Some(b)) if a < b);
    r.check("reset median delay below fresh median", faster, format!("{:?} vs {:?}", rep.reset_median_delay, rep.fresh_median_delay));
    let attempted = rep.pnot.iter().filter(|t| t.rereset_logic.is_some()).count();
    r.check("PNOT re-reset leaves logic 0 always", attempted > 0 && rep.rereset_failure_rate == 1.0, format!("{:.1}% of {attempted}", pct(rep.rereset_failure_rate)));
}

fn faults(r: &mut Report, cal: &Calibration, gap: &[SweepLevel]) {
    let (g10, g20): (Vec<_>, Vec<_>) = gap.iter().cloned().partition(|l| l.level == 10.0);
    let ((f10, n10), (f20, n20)) = (pooled(&g10), pooled(&g20));
    let z = two_proportion_z(f20, n20, f10, n10);
    r.check(
        "gap 20 fails more than gap 10, p < 0.05",
        f20 * n10 > f10 * n20 && z.p_value < 0.05,
        format!("{f20}/{n20} vs {f10}/{n10}, p = {:.4}", z.p_value),
    );

    let lum = fault_sweep(cal, FaultVariable::Luminosity, &[250.0], TRIALS, SEED).expect("luminosity sweep");
    let (fl, nl) = pooled(&lum);
    let z = two_proportion_z(fl, nl, f10, n10);
    r.check("luminosity +50 mcd not significant", z.p_value >= 0.05, format!("{fl}/{nl} vs {f10}/{n10}, p = {:.4}", z.p_value));

    let volt = fault_sweep(cal, FaultVariable::Voltage, &[24.0], TRIALS, SEED).expect("voltage sweep");
    let high = level(&volt, GateKind::Pnot).mean_tubules.unwrap_or(0.0);
    let low = level(&g10, GateKind::Pnot).mean_tubules.unwrap_or(0.0);
    r.check("24 V mean tubules > 1, 9 V about 1", high > 1.0 && (low - 1.0).abs() <= 0.1, format!("24 V {high:.2}, 9 V {low:.2}"));
}

fn circuit(r: &mut Report) {
    let scene = build(GateKind::Pnot, 10.0, 9.0).scene;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    let mut agree = true;
    for _ in 0..100 {
        let nodes = rng.random_range(2..=20);
        let edges = rng.random_range(1..=3 * nodes);
        let net = random_network(&mut rng, nodes, edges);
        match (path_resistance(&net, &scene, "X", "Y"), nodal_oracle(&net, 0, 1)) {
            (None, None) => {}
            (Some(got), Some(r)) => {
                let want = r + 2.0 * AGAR_BLOB_OHMS;
                worst = worst.max(((got - want) / want).abs());
            }
            _ => agree = false,
        }
    }
    r.check("circuit matches nodal oracle within 1e-9", agree && worst <= 1e-9, format!("worst relative error {worst:.1e}"));

    let mut net = ConductiveNetwork::default();
    let x = net.add_node(NodeKind::Electrode("X".into()), Point::new(-10.0, 0.0));
    let y = net.add_node(NodeKind::Electrode("Y".into()), Point::new(10.0, 0.0));
    net.add_edge(x, y, 10.0, 7_350.0);
    let got = path_resistance(&net, &scene, "X", "Y");
    r.check("canonical path is 18k + R + 18k", got == Some(18_000.0 + 7_350.0 + 18_000.0), format!("{got:?}"));
}

fn cascade(r: &mut Report) {
    let e = estimate_cascade(&Netlist::half_adder(), 90.0, 2880.0).expect("built-in netlist");
    r.check("half adder area within 20% of 0.5 m2", (e.area_m2 - 0.5).abs() <= 0.1, format!("{} gates, {:.4} m2", e.gates, e.area_m2));
}

fn determinism(r: &mut Report, cal: &Calibration) {
    let harness = build(GateKind::Pnand, 10.0, 9.0);
    let inputs: BTreeMap<String, u8> = [("A".to_string(), 0), ("B".to_string(), 1)].into();
    let a = RunRecord::execute(harness.clone(), cal, &inputs, None, 7).expect("run").to_ndjson();
    let b = RunRecord::execute(harness, cal, &inputs, None, 7).expect("run").to_ndjson();
    r.check("same seed gives byte-identical records", a == b, format!("{} bytes", a.len()));
    let parsed = RunRecord::parse(&a).expect("record parses");
    let same = replay(&parsed).map(|rp| rp.matches()).unwrap_or(false);
    r.check("record replays to an identical summary", same, String::new());
}

fn main() {
    let cal = Calibration::default();
    let mut r = Report { failed: 0 };
    phototaxis(&mut r, &cal);
    let gap = fault_sweep(&cal, FaultVariable::Gap, &[10.0, 20.0], TRIALS, SEED).expect("gap sweep");
    let base: Vec<SweepLevel> = gap.iter().filter(|l| l.level == 10.0).cloned().collect();
    gates(&mut r, &level(&base, GateKind::Pnot).table, &level(&base, GateKind::Pnand).table);
    reuse(&mut r, &cal);
    faults(&mut r, &cal, &gap);
    circuit(&mut r);
    cascade(&mut r);
    determinism(&mut r, &cal);
    println!("acceptance: {} failed", r.failed);
    if r.failed > 0 {
        std::process::exit(1);
    }
}
