//! Experimental campaigns: colour preference, fault tolerance, gate reuse,
//! and the calibration search that ties the model to them.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::calibration::Calibration;
use crate::gates::{build, median, reset_gate, trial_seed, truth_table, Arena, GateError, GateKind, GateSim, Prepared, TruthTable, BASELINE_LUMINOSITY};
use crate::geometry::{Point, Segment};
use crate::parallel::par_map;
use crate::plasmodium::inoculate_blob;
use crate::scene::{AgarBlob, AttractantSource, Barrier, Led, Scene, AGAR_BLOB_OHMS, ALWAYS_ON, BLUE_NM, GREEN_NM, RED_NM, YELLOW_NM};

/// Ten simulated days.
pub const PHOTOTAXIS_BUDGET: u64 = 14_400;
/// Pole centres sit this far either side of the dish centre, mm.
pub const POLE_OFFSET: f64 = 27.0;
/// Offset of the light screens that shade the corridor between the squares.
pub const BARRIER_X: f64 = 18.5;
/// Fraction of the mass a pole must hold to count as colonised.
pub const COLONY_FRACTION: f64 = 0.10;
pub const COLONY_HOLD: u64 = 30;
/// Radius of a disc with the 2.5 cm² face of an agar cube.
pub const SQUARE_RADIUS: f64 = 8.92;
/// Millilitres in a cube with that face.
pub const SQUARE_VOLUME: f64 = 3.95;
pub const COLOURS: [f64; 4] = [BLUE_NM, GREEN_NM, YELLOW_NM, RED_NM];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error("{0}")]
    InvalidArgument(String),
}

/// One trial of any campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: String,
    pub seed: u64,
    pub config: String,
    pub outcome: String,
    pub duration_ticks: u64,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
    Neither,
}

impl Choice {
    pub fn as_str(self) -> &'static str {
        match self {
            Choice::A => "A",
            Choice::B => "B",
            Choice::Neither => "neither",
        }
    }
}

fn square(center: Point) -> AgarBlob {
    AgarBlob { center, radius: SQUARE_RADIUS, volume: SQUARE_VOLUME, resistance: AGAR_BLOB_OHMS, initial_moisture: 1.0 }
}

/// Colour-choice dish: inoculum in the centre, an oat-flake square at each
/// pole lit by two LEDs (colour A on the left, B on the right), card strips
/// between centre and poles.
pub fn phototaxis_scene(colour_a: f64, colour_b: f64, luminosity: f64) -> Scene {
    let mut scene = Scene {
        agar_blobs: vec![square(Point::new(0.0, 0.0)), square(Point::new(-POLE_OFFSET, 0.0)), square(Point::new(POLE_OFFSET, 0.0))],
        attractants: [-POLE_OFFSET, POLE_OFFSET]
            .iter()
            .map(|&x| AttractantSource { center: Point::new(x, 0.0), strength: 1.0, kind: "oat flake".into() })
            .collect(),
        ..Scene::default()
    };
    let reach = (scene.dish_radius().powi(2) - BARRIER_X.powi(2)).sqrt() - 1.0;
    for x in [-BARRIER_X, BARRIER_X] {
        scene.barriers.push(Barrier {
            segment: Segment::new(Point::new(x, -reach), Point::new(x, reach)),
            gap_height: 0.5,
            light_transmission: 0.05,
            passable_by_plasmodium: true,
        });
    }
    for (side, x, colour) in [("A", -POLE_OFFSET, colour_a), ("B", POLE_OFFSET, colour_b)] {
        for (k, y) in [(1, 4.0), (2, -4.0)] {
            scene.leds.push(Led {
                id: format!("{side}{k}"),
                position: Point::new(x, y),
                wavelength: colour,
                luminosity,
                channel: ALWAYS_ON.into(),
            });
        }
    }
    scene
}

/// Runs one colour-choice trial on a prepared dish.
pub fn run_phototaxis(arena: &Arena, seed: u64, budget: u64) -> Result<TrialRecord, ExperimentError> {
    let cal = &arena.cal;
    let mut fields = arena.fields.clone();
    fields.set_led_states(&arena.scene, &BTreeMap::new());
    let mut p = inoculate_blob(&arena.scene, &arena.raster, 0, cal.swarm.agents, seed, cal).map_err(GateError::from)?;
    let need = (COLONY_FRACTION * p.total_mass as f64).ceil() as usize;
    let mut held: [u64; 2] = [0, 0];
    let mut choice = Choice::Neither;
    let habitat = arena.habitat(false);
    while p.tick < budget {
        if p.is_quiescent() {
            let rest = budget - p.tick;
            fields.desiccate(&arena.raster, rest);
            p.idle(rest, cal);
            break;
        }
        fields.desiccate(&arena.raster, 1);
        p.step(&fields, &habitat, 1).map_err(GateError::from)?;
        for (k, pole) in [1usize, 2].into_iter().enumerate() {
            held[k] = if p.blob_count(pole) >= need { held[k] + 1 } else { 0 };
        }
        if let Some(k) = held.iter().position(|&h| h >= COLONY_HOLD) {
            choice = if k == 0 { Choice::A } else { Choice::B };
            break;
        }
    }
    let colour = |side: &str| arena.scene.leds.iter().find(|l| l.id.starts_with(side)).map_or(0.0, |l| l.wavelength);
    let mut metrics = BTreeMap::new();
    metrics.insert("desiccated".into(), f64::from(u8::from(p.desiccated)));
    if let Some(since) = p.hunger_since {
        metrics.insert("hungry_since".into(), since as f64);
    }
    Ok(TrialRecord {
        experiment: "phototaxis".into(),
        seed,
        config: format!("A={}nm B={}nm", colour("A"), colour("B")),
        outcome: choice.as_str().into(),
        duration_ticks: p.tick,
        metrics,
    })
}

/// Builds the dish for two colours and runs one trial.
pub fn phototaxis_trial(cal: &Calibration, colour_a: f64, colour_b: f64, seed: u64) -> Result<Choice, ExperimentError> {
    let arena = Arena::new(phototaxis_scene(colour_a, colour_b, BASELINE_LUMINOSITY), cal.clone())?;
    let r = run_phototaxis(&arena, seed, PHOTOTAXIS_BUDGET)?;
    Ok(parse_choice(&r.outcome))
}

fn parse_choice(s: &str) -> Choice {
    match s {
        "A" => Choice::A,
        "B" => Choice::B,
        _ => Choice::Neither,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTally {
    pub colour_a: f64,
    pub colour_b: f64,
    pub chose_a: usize,
    pub chose_b: usize,
    pub neither: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Wavelengths from most to least avoided.
    pub order: Vec<f64>,
    /// Phobia points per wavelength, in `order`.
    pub points: Vec<(f64, usize)>,
    pub pairs: Vec<PairTally>,
    pub trials: Vec<TrialRecord>,
}

impl Ranking {
    pub fn points_of(&self, nm: f64) -> usize {
        self.points.iter().find(|(w, _)| *w == nm).map_or(0, |p| p.1)
    }
}

/// Runs every unordered pair of the four colours `trials` times, giving the
/// avoided colour of each decided trial one phobia point.
pub fn rank_colours(cal: &Calibration, trials: usize, seed: u64) -> Result<Ranking, ExperimentError> {
    if trials == 0 {
        return Err(ExperimentError::InvalidArgument("trials must be at least 1".into()));
    }
    let mut pairs = Vec::new();
    for i in 0..COLOURS.len() {
        for j in i + 1..COLOURS.len() {
            pairs.push((COLOURS[i], COLOURS[j]));
        }
    }
    let arenas: Vec<Arc<Arena>> = pairs
        .iter()
        .map(|&(a, b)| Arena::new(phototaxis_scene(a, b, BASELINE_LUMINOSITY), cal.clone()).map(Arc::new))
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> = (0..pairs.len()).flat_map(|p| (0..trials).map(move |t| (p, t))).collect();
    let records = par_map(jobs, |(p, t)| run_phototaxis(&arenas[p], trial_seed(seed, t), PHOTOTAXIS_BUDGET));
    let records: Vec<TrialRecord> = records.into_iter().collect::<Result<_, _>>()?;

    let mut points: BTreeMap<u64, usize> = COLOURS.iter().map(|&c| (c.to_bits(), 0)).collect();
    let mut tallies = Vec::new();
    for (k, &(a, b)) in pairs.iter().enumerate() {
        let mut tally = PairTally { colour_a: a, colour_b: b, chose_a: 0, chose_b: 0, neither: 0 };
        for r in &records[k * trials..(k + 1) * trials] {
            match parse_choice(&r.outcome) {
                Choice::A => {
                    tally.chose_a += 1;
                    *points.get_mut(&b.to_bits()).expect("known colour") += 1;
                }
                Choice::B => {
                    tally.chose_b += 1;
                    *points.get_mut(&a.to_bits()).expect("known colour") += 1;
                }
                Choice::Neither => tally.neither += 1,
            }
        }
        tallies.push(tally);
    }
    let mut ranked: Vec<(f64, usize)> = points.into_iter().map(|(bits, n)| (f64::from_bits(bits), n)).collect();
    ranked.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.total_cmp(&y.0)));
    Ok(Ranking { order: ranked.iter().map(|r| r.0).collect(), points: ranked, pairs: tallies, trials: records })
}

/// Result of a two-sided two-proportion z-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub z: f64,
    pub p_value: f64,
}

pub fn two_proportion_z(x1: usize, n1: usize, x2: usize, n2: usize) -> ZTest {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    if n1 == 0 || n2 == 0 {
        return ZTest { z: 0.0, p_value: 1.0 };
    }
    let (p1, p2) = (x1 as f64 / n1f, x2 as f64 / n2f);
    let pooled = (x1 + x2) as f64 / (n1f + n2f);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    if se == 0.0 {
        return ZTest { z: 0.0, p_value: 1.0 };
    }
    let z = (p1 - p2) / se;
    let normal = Normal::standard();
    ZTest { z, p_value: 2.0 * (1.0 - normal.cdf(z.abs())) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultVariable {
    /// LED luminosity, mcd.
    Luminosity,
    /// Electrode gap, mm.
    Gap,
    /// Output-circuit supply, V.
    Voltage,
}

impl std::str::FromStr for FaultVariable {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "luminosity" => Ok(FaultVariable::Luminosity),
            "gap" => Ok(FaultVariable::Gap),
            "voltage" => Ok(FaultVariable::Voltage),
            other => Err(ExperimentError::InvalidArgument(format!("unknown fault variable {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepLevel {
    pub level: f64,
    pub gate: GateKind,
    /// Failed runs among those whose ideal output is 1.
    pub failures: usize,
    pub runs: usize,
    pub failure_rate: f64,
    pub median_delay: Option<f64>,
    pub mean_tubules: Option<f64>,
    pub table: TruthTable,
}

/// Builds a gate harness with one fault variable moved off its baseline
/// (10 mm gap, 9 V, 200 mcd).
pub fn faulted_harness(kind: GateKind, variable: FaultVariable, level: f64) -> crate::gates::GateHarness {
    let (gap, supply, lum) = match variable {
        FaultVariable::Gap => (level, 9.0, BASELINE_LUMINOSITY),
        FaultVariable::Voltage => (10.0, level, BASELINE_LUMINOSITY),
        FaultVariable::Luminosity => (10.0, 9.0, level),
    };
    let mut h = build(kind, gap, supply);
    for l in &mut h.scene.leds {
        l.luminosity = lum;
    }
    h
}

/// PNOT and PNAND truth tables at each level of one fault variable.
pub fn fault_sweep(
    cal: &Calibration,
    variable: FaultVariable,
    levels: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepLevel>, ExperimentError> {
    if levels.is_empty() {
        return Err(ExperimentError::InvalidArgument("at least one level is required".into()));
    }
    let mut out = Vec::new();
    for &level in levels {
        for kind in [GateKind::Pnot, GateKind::Pnand] {
            let prepared = Prepared::new(faulted_harness(kind, variable, level), cal.clone())?;
            let table = truth_table(&prepared, trials, seed)?;
            let runs: usize = table.rows.iter().filter(|r| r.ideal == 1).map(|r| r.trials).sum();
            let delays: Vec<f64> = table.all_delays().iter().map(|&d| d as f64).collect();
            let tubules: Vec<f64> = table.rows.iter().filter_map(|r| r.mean_tubules.map(|m| (m, r.delays.len()))).flat_map(|(m, n)| std::iter::repeat_n(m, n)).collect();
            out.push(SweepLevel {
                level,
                gate: kind,
                failures: table.rows.iter().filter(|r| r.ideal == 1).map(|r| r.failures).sum(),
                runs,
                failure_rate: table.failure_rate(),
                median_delay: median(&delays),
                mean_tubules: (!tubules.is_empty()).then(|| tubules.iter().sum::<f64>() / tubules.len() as f64),
                table,
            });
        }
    }
    Ok(out)
}

/// One scripted PNAND reprogramming: complete on Y with Z lit, then light Y
/// and darken Z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReprogramTrial {
    pub seed: u64,
    pub fresh_delay: Option<u64>,
    /// Ticks until Y held under 5% of the mass.
    pub withdrawal_ticks: Option<u64>,
    pub reset_completed: bool,
    pub reset_delay: Option<u64>,
    pub reset_logic: Option<u8>,
    pub error: Option<String>,
}

/// One PNOT reset (input 0 → 1) followed by a re-reset (back to 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReresetTrial {
    pub seed: u64,
    pub fresh_completed: bool,
    pub reset_logic: Option<u8>,
    pub withdrawal_ticks: Option<u64>,
    pub rereset_logic: Option<u8>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseReport {
    pub pnand: Vec<ReprogramTrial>,
    pub pnot: Vec<ReresetTrial>,
    pub fresh_median_delay: Option<f64>,
    pub reset_median_delay: Option<f64>,
    /// Share of completed first runs whose withdrawal took 120–360 ticks.
    pub withdrawal_in_window: f64,
    /// Share of completed PNOT re-resets that failed, leaving logic 0.
    pub rereset_failure_rate: f64,
}

fn bits(pairs: &[(&str, u8)]) -> BTreeMap<String, u8> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

pub fn reprogram_trial(prepared: &Arc<Prepared>, seed: u64) -> Result<ReprogramTrial, ExperimentError> {
    let mut sim = GateSim::new(Arc::clone(prepared), &bits(&[("A", 0), ("B", 1)]), seed)?;
    sim.run_epoch();
    let first = sim.outcome();
    let mut t = ReprogramTrial {
        seed,
        fresh_delay: first.propagation_delay,
        withdrawal_ticks: None,
        reset_completed: false,
        reset_delay: None,
        reset_logic: None,
        error: None,
    };
    if !first.completed {
        return Ok(t);
    }
    match reset_gate(&mut sim, &bits(&[("A", 1), ("B", 0)])) {
        Ok(o) => {
            t.withdrawal_ticks = o.withdrawal_ticks;
            t.reset_completed = o.completed;
            t.reset_delay = o.propagation_delay;
            t.reset_logic = Some(o.logic_output);
        }
        Err(e) => t.error = Some(e.to_string()),
    }
    Ok(t)
}

pub fn rereset_trial(prepared: &Arc<Prepared>, seed: u64) -> Result<ReresetTrial, ExperimentError> {
    let mut sim = GateSim::new(Arc::clone(prepared), &bits(&[("A", 0)]), seed)?;
    sim.run_epoch();
    let mut t = ReresetTrial {
        seed,
        fresh_completed: sim.completed(),
        reset_logic: None,
        withdrawal_ticks: None,
        rereset_logic: None,
        error: None,
    };
    if !t.fresh_completed {
        return Ok(t);
    }
    let step = reset_gate(&mut sim, &bits(&[("A", 1)])).and_then(|o| {
        t.reset_logic = Some(o.logic_output);
        t.withdrawal_ticks = o.withdrawal_ticks;
        reset_gate(&mut sim, &bits(&[("A", 0)]))
    });
    match step {
        Ok(o) => t.rereset_logic = Some(o.logic_output),
        Err(e) => t.error = Some(e.to_string()),
    }
    Ok(t)
}

/// The reset and reprogramming campaign over `trials` seeds.
pub fn reuse_campaign(cal: &Calibration, trials: usize, seed: u64) -> Result<ReuseReport, ExperimentError> {
    let pnand = Prepared::new(build(GateKind::Pnand, 10.0, 9.0), cal.clone())?;
    let pnot = Prepared::new(build(GateKind::Pnot, 10.0, 9.0), cal.clone())?;
    let seeds: Vec<u64> = (0..trials).map(|i| trial_seed(seed, i)).collect();
    let nand: Vec<ReprogramTrial> = par_map(seeds.clone(), |s| reprogram_trial(&pnand, s)).into_iter().collect::<Result<_, _>>()?;
    let not: Vec<ReresetTrial> = par_map(seeds, |s| rereset_trial(&pnot, s)).into_iter().collect::<Result<_, _>>()?;
    let fresh: Vec<f64> = nand.iter().filter_map(|t| t.fresh_delay.map(|d| d as f64)).collect();
    let reset: Vec<f64> = nand.iter().filter_map(|t| t.reset_delay.map(|d| d as f64)).collect();
    let completed: Vec<&ReprogramTrial> = nand.iter().filter(|t| t.fresh_delay.is_some()).collect();
    let in_window = completed.iter().filter(|t| t.withdrawal_ticks.is_some_and(|w| (120..=360).contains(&w))).count();
    let rereset: Vec<u8> = not.iter().filter_map(|t| t.rereset_logic).collect();
    Ok(ReuseReport {
        fresh_median_delay: median(&fresh),
        reset_median_delay: median(&reset),
        withdrawal_in_window: in_window as f64 / completed.len().max(1) as f64,
        rereset_failure_rate: rereset.iter().filter(|&&l| l == 0).count() as f64 / rereset.len().max(1) as f64,
        pnand: nand,
        pnot: not,
    })
}

/// A statistic the calibration search tries to reproduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// Phobia ranking, most avoided first.
    Ranking(Vec<f64>),
    /// PNOT input-0 failure rate.
    PnotFailure { rate: f64, tolerance: f64 },
    /// Share of completion delays inside `[lo, hi]`.
    DelayWindow { lo: u64, hi: u64, min_fraction: f64 },
}

impl Target {
    fn name(&self) -> String {
        match self {
            Target::Ranking(_) => "ranking".into(),
            Target::PnotFailure { .. } => "pnot_failure".into(),
            Target::DelayWindow { .. } => "delay_window".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub target: String,
    pub value: f64,
    /// Zero when the target is met.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub calibration: Calibration,
    pub residuals: Vec<Residual>,
    pub satisfied: bool,
    pub evaluations: usize,
}

fn evaluate(cal: &Calibration, targets: &[Target], trials: usize, seed: u64) -> Result<Vec<Residual>, ExperimentError> {
    let mut pnot: Option<TruthTable> = None;
    let mut table = |cal: &Calibration| -> Result<TruthTable, ExperimentError> {
        if let Some(t) = &pnot {
            return Ok(t.clone());
        }
        let t = truth_table(&Prepared::new(build(GateKind::Pnot, 10.0, 9.0), cal.clone())?, trials, seed)?;
        pnot = Some(t.clone());
        Ok(t)
    };
    let mut out = Vec::new();
    for target in targets {
        let (value, violation) = match target {
            Target::Ranking(want) => {
                let r = rank_colours(cal, trials, seed)?;
                let misplaced = r.order.iter().zip(want).filter(|(a, b)| a != b).count();
                (misplaced as f64, misplaced as f64)
            }
            Target::PnotFailure { rate, tolerance } => {
                let f = table(cal)?.failure_rate();
                (f, ((f - rate).abs() - tolerance).max(0.0))
            }
            Target::DelayWindow { lo, hi, min_fraction } => {
                let d = table(cal)?.all_delays();
                let frac = d.iter().filter(|x| (*lo..=*hi).contains(*x)).count() as f64 / d.len().max(1) as f64;
                (frac, (min_fraction - frac).max(0.0))
            }
        };
        out.push(Residual { target: target.name(), value, violation });
    }
    Ok(out)
}

/// Coordinate search over the dwell median and the four phobia weights,
/// stopping as soon as every target is met or the evaluation budget runs out.
pub fn calibrate(
    start: &Calibration,
    targets: &[Target],
    budget: usize,
    trials: usize,
    seed: u64,
) -> Result<CalibrationReport, ExperimentError> {
    if targets.is_empty() {
        return Ok(CalibrationReport { calibration: start.clone(), residuals: Vec::new(), satisfied: true, evaluations: 0 });
    }
    let total = |r: &[Residual]| r.iter().map(|x| x.violation).sum::<f64>();
    let mut best = start.clone();
    let mut best_res = evaluate(&best, targets, trials, seed)?;
    let mut evaluations = 1;
    let knobs = 1 + best.phobia.anchors.len();
    let mut factor = 1.3;
    'search: while total(&best_res) > 0.0 && evaluations < budget {
        let mut improved = false;
        for knob in 0..knobs {
            for f in [factor, 1.0 / factor] {
                if evaluations >= budget {
                    break 'search;
                }
                let mut cand = best.clone();
                if knob == 0 {
                    cand.reluctance.dwell_median_ticks *= f;
                } else {
                    cand.phobia.anchors[knob - 1].weight *= f;
                }
                let res = evaluate(&cand, targets, trials, seed)?;
                evaluations += 1;
                if total(&res) < total(&best_res) {
                    best = cand;
                    best_res = res;
                    improved = true;
                    if total(&best_res) == 0.0 {
                        break 'search;
                    }
                }
            }
        }
        if !improved {
            factor = 1.0 + (factor - 1.0) / 2.0;
            if factor < 1.01 {
                break;
            }
        }
    }
    let satisfied = total(&best_res) == 0.0;
    Ok(CalibrationReport { calibration: best, residuals: best_res, satisfied, evaluations })
}
