//! PNOT and PNAND gate harnesses and the live gate simulation.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::Calibration;
use crate::circuit::{count_tubules, path_resistance, read_output, ConductiveNetwork, OutputCircuit, OutputReading};
use crate::fields::StimulusFields;
use crate::geometry::{Point, Rect, Segment};
use crate::grid::{GridSpec, Raster};
use crate::network::{extract_network, footprints_connected_by};
use crate::plasmodium::{inoculate, Habitat, Mode, PlasmodiumError, PlasmodiumState};
use crate::rng::derive_seed;
use crate::scene::{validate_scene, AgarBlob, AttractantSource, Barrier, Electrode, Led, Scene, Violation, AGAR_BLOB_OHMS, GREEN_NM};

/// Six simulated days.
pub const DEFAULT_BUDGET: u64 = 8640;
/// Ticks a conductive path must persist before a run counts as complete.
pub const COMPLETION_HOLD: u64 = 30;
pub const BASELINE_LUMINOSITY: f64 = 200.0;
/// Radius of a 2 ml agar blob, mm.
pub const BLOB_RADIUS: f64 = 5.0;
const OAT_FLAKE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    Pnot,
    Pnand,
}

impl GateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GateKind::Pnot => "pnot",
            GateKind::Pnand => "pnand",
        }
    }

    /// Ideal output for input bits in channel order.
    pub fn ideal(self, bits: &[u8]) -> u8 {
        u8::from(!bits.iter().all(|&b| b == 1))
    }
}

impl std::str::FromStr for GateKind {
    type Err = GateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pnot" | "not" => Ok(GateKind::Pnot),
            "pnand" | "nand" => Ok(GateKind::Pnand),
            other => Err(GateError::UnknownGate(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum GateError {
    #[error("unknown gate kind {0:?}")]
    UnknownGate(String),
    #[error("invalid scene: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidScene(Vec<Violation>),
    #[error("invalid calibration: {}", .0.join("; "))]
    InvalidCalibration(Vec<String>),
    #[error("invalid harness: {0}")]
    InvalidHarness(String),
    #[error("invalid inputs: {0}")]
    InvalidInputs(String),
    #[error("unknown channel {0:?}")]
    UnknownChannel(String),
    #[error("gate cannot be reset: {0}")]
    NotResettable(String),
    #[error(transparent)]
    Plasmodium(#[from] PlasmodiumError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateHarness {
    pub gate_kind: GateKind,
    pub scene: Scene,
    /// Input name → LED channel.
    pub inputs: BTreeMap<String, String>,
    pub source_electrode: String,
    pub target_electrodes: Vec<String>,
    pub output_circuit: OutputCircuit,
    pub budget: u64,
}

impl GateHarness {
    pub fn channels(&self) -> Vec<String> {
        self.inputs.values().cloned().collect()
    }

    /// Checks the harness invariants against its scene.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, ch) in &self.inputs {
            if !self.scene.leds.iter().any(|l| &l.channel == ch) {
                out.push(format!("input {name} drives no LED"));
            }
        }
        for id in std::iter::once(&self.source_electrode).chain(&self.target_electrodes) {
            if self.scene.electrode(id).is_none() {
                out.push(format!("electrode {id} is missing"));
            }
        }
        if self.scene.blob_on_electrode(&self.source_electrode).is_none() {
            out.push("source electrode has no agar".into());
        }
        let expected = match self.gate_kind {
            GateKind::Pnot => 1,
            GateKind::Pnand => 2,
        };
        if self.target_electrodes.len() != expected {
            out.push(format!("{} needs {expected} target electrode(s)", self.gate_kind.as_str()));
        }
        if self.gate_kind == GateKind::Pnand && self.target_electrodes.len() == 2 {
            let (y, z) = (self.scene.electrode(&self.target_electrodes[0]), self.scene.electrode(&self.target_electrodes[1]));
            if let (Some(y), Some(z)) = (y, z) {
                let separated = self
                    .scene
                    .barriers
                    .iter()
                    .any(|b| b.light_transmission < 1.0 && b.segment.intersects(&Segment::new(y.center, z.center)));
                if !separated {
                    out.push("targets are not separated by a light barrier".into());
                }
            }
        }
        if self.budget == 0 {
            out.push("budget must be positive".into());
        }
        out
    }

    /// LED channels lit under an input assignment.
    pub fn led_states(&self, inputs: &BTreeMap<String, u8>) -> BTreeMap<String, bool> {
        self.inputs.iter().map(|(name, ch)| (ch.clone(), inputs.get(name).copied().unwrap_or(0) == 1)).collect()
    }

    /// Whether any lit LED sits over the electrode.
    pub fn electrode_lit(&self, id: &str, led_states: &BTreeMap<String, bool>) -> bool {
        let Some(e) = self.scene.electrode(id) else { return false };
        let fp = e.footprint();
        self.scene.leds.iter().any(|l| fp.distance_to(l.position) <= 1.0 && crate::fields::led_is_on(l, led_states))
    }

    /// Full input assignments in lexicographic order, all-zero first.
    pub fn input_rows(&self) -> Vec<BTreeMap<String, u8>> {
        let names: Vec<&String> = self.inputs.keys().collect();
        (0..1u32 << names.len())
            .map(|bits| {
                names
                    .iter()
                    .enumerate()
                    .map(|(i, n)| ((*n).clone(), ((bits >> (names.len() - 1 - i)) & 1) as u8))
                    .collect()
            })
            .collect()
    }
}

fn blob_at(center: Point) -> AgarBlob {
    AgarBlob { center, radius: BLOB_RADIUS, volume: 2.0, resistance: AGAR_BLOB_OHMS, initial_moisture: 1.0 }
}

fn green_led(id: &str, position: Point, channel: &str) -> Led {
    Led { id: id.into(), position, wavelength: GREEN_NM, luminosity: BASELINE_LUMINOSITY, channel: channel.into() }
}

fn oat(center: Point) -> AttractantSource {
    AttractantSource { center, strength: OAT_FLAKE, kind: "oat flake".into() }
}

/// Two electrodes `gap` mm apart edge to edge, plasmodium on X, oat flake and
/// a green LED on Y.
pub fn build_pnot(gap: f64, supply: f64) -> GateHarness {
    let half = gap / 2.0 + BLOB_RADIUS;
    let (x, y) = (Point::new(-half, 0.0), Point::new(half, 0.0));
    let side = 2.0 * BLOB_RADIUS;
    let scene = Scene {
        electrodes: vec![
            Electrode { id: "X".into(), center: x, width: side, height: side },
            Electrode { id: "Y".into(), center: y, width: side, height: side },
        ],
        agar_blobs: vec![blob_at(x), blob_at(y)],
        attractants: vec![oat(y)],
        leds: vec![green_led("A1", y, "A")],
        ..Scene::default()
    };
    GateHarness {
        gate_kind: GateKind::Pnot,
        scene,
        inputs: BTreeMap::from([("A".to_string(), "A".to_string())]),
        source_electrode: "X".into(),
        target_electrodes: vec!["Y".into()],
        output_circuit: OutputCircuit::with_supply(supply),
        budget: DEFAULT_BUDGET,
    }
}

/// X in the centre, Y up-left and Z up-right with blob edges `gap` mm from
/// X's, a card barrier between Y and Z, green LEDs on channels A (Y) and B (Z).
pub fn build_pnand(gap: f64, supply: f64) -> GateHarness {
    let d = (gap + 2.0 * BLOB_RADIUS) / std::f64::consts::SQRT_2;
    let (x, y, z) = (Point::new(0.0, 0.0), Point::new(-d, d), Point::new(d, d));
    let side = BLOB_RADIUS * std::f64::consts::SQRT_2;
    let scene = Scene {
        electrodes: vec![
            Electrode { id: "X".into(), center: x, width: side, height: side },
            Electrode { id: "Y".into(), center: y, width: side, height: side },
            Electrode { id: "Z".into(), center: z, width: side, height: side },
        ],
        agar_blobs: vec![blob_at(x), blob_at(y), blob_at(z)],
        attractants: vec![oat(y), oat(z)],
        barriers: vec![Barrier {
            segment: Segment::new(Point::new(0.0, BLOB_RADIUS + 0.5), Point::new(0.0, d + 2.0 * BLOB_RADIUS + 5.0)),
            gap_height: 0.5,
            light_transmission: 0.05,
            passable_by_plasmodium: true,
        }],
        leds: vec![green_led("A1", y, "A"), green_led("B1", z, "B")],
        ..Scene::default()
    };
    GateHarness {
        gate_kind: GateKind::Pnand,
        scene,
        inputs: BTreeMap::from([("A".to_string(), "A".to_string()), ("B".to_string(), "B".to_string())]),
        source_electrode: "X".into(),
        target_electrodes: vec!["Y".into(), "Z".into()],
        output_circuit: OutputCircuit::with_supply(supply),
        budget: DEFAULT_BUDGET,
    }
}

pub fn build(kind: GateKind, gap: f64, supply: f64) -> GateHarness {
    match kind {
        GateKind::Pnot => build_pnot(gap, supply),
        GateKind::Pnand => build_pnand(gap, supply),
    }
}

/// A scene rasterised under a calibration with its attractant at steady state.
#[derive(Debug, Clone)]
pub struct Arena {
    pub scene: Scene,
    pub cal: Calibration,
    pub raster: Raster,
    pub fields: StimulusFields,
}

impl Arena {
    pub fn new(scene: Scene, cal: Calibration) -> Result<Self, GateError> {
        let v = validate_scene(&scene);
        if !v.is_empty() {
            return Err(GateError::InvalidScene(v));
        }
        let problems = cal.violations();
        if !problems.is_empty() {
            return Err(GateError::InvalidCalibration(problems));
        }
        let raster = Raster::new(&scene, GridSpec::for_scene(&scene, cal.fields.grid_resolution));
        let mut fields = StimulusFields::new(&scene, &raster, &cal);
        fields.equilibrate_attractant(&scene, &raster, &cal.fields, 1e-12, 100_000);
        Ok(Arena { scene, cal, raster, fields })
    }

    pub fn habitat(&self, overvoltage: bool) -> Habitat<'_> {
        Habitat { scene: &self.scene, raster: &self.raster, cal: &self.cal, overvoltage }
    }

    /// Cells within `margin` mm of an electrode footprint.
    pub fn near_electrode(&self, id: &str, margin: f64) -> Vec<bool> {
        let Some(e) = self.scene.electrode(id) else { return vec![false; self.raster.spec.len()] };
        let fp = e.footprint();
        let grown = Rect { center: fp.center, width: fp.width + 2.0 * margin, height: fp.height + 2.0 * margin };
        (0..self.raster.spec.len()).map(|c| self.raster.in_dish[c] && grown.contains(self.raster.spec.center(c))).collect()
    }
}

/// A harness bound to a calibration, shareable between runs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub harness: GateHarness,
    pub arena: Arena,
}

impl Prepared {
    pub fn new(harness: GateHarness, cal: Calibration) -> Result<Arc<Self>, GateError> {
        let problems = harness.problems();
        if !problems.is_empty() {
            return Err(GateError::InvalidHarness(problems.join("; ")));
        }
        let arena = Arena::new(harness.scene.clone(), cal)?;
        Ok(Arc::new(Prepared { harness, arena }))
    }

    pub fn overvoltage(&self) -> bool {
        self.harness.output_circuit.supply > self.arena.cal.electrical.overvoltage_threshold
    }

    fn electrode_index(&self, id: &str) -> usize {
        self.arena.scene.electrodes.iter().position(|e| e.id == id).expect("harness electrodes exist")
    }

    /// Validates and completes an input map: every input must be present
    /// with a 0/1 value.
    pub fn check_inputs(&self, inputs: &BTreeMap<String, u8>) -> Result<(), GateError> {
        for (k, v) in inputs {
            if !self.harness.inputs.contains_key(k) {
                return Err(GateError::UnknownChannel(k.clone()));
            }
            if *v > 1 {
                return Err(GateError::InvalidInputs(format!("{k}={v} is not a bit")));
            }
        }
        for k in self.harness.inputs.keys() {
            if !inputs.contains_key(k) {
                return Err(GateError::InvalidInputs(format!("input {k} is not set")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub logic_output: u8,
    pub completed: bool,
    pub failed: bool,
    /// Ticks from input application to the start of the stable path.
    pub propagation_delay: Option<u64>,
    pub final_reading: OutputReading,
    /// Electrode the completed path reached.
    pub target: Option<String>,
    /// Duration of the last withdrawal, if one finished during this epoch.
    pub withdrawal_ticks: Option<u64>,
    pub mode: Mode,
    pub tick: u64,
    pub trace: Vec<Event>,
}

#[derive(Debug, Clone)]
struct Epoch {
    start: u64,
    dark_targets: Vec<usize>,
    connected_since: Option<(u64, usize)>,
    completion: Option<(u64, usize)>,
    next_check: u64,
}

/// Snapshot payload shared by the record and streaming formats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub mode: Mode,
    pub inputs: BTreeMap<String, u8>,
    pub output: SnapshotOutput,
    pub grid: SnapshotGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotOutput {
    pub voltage: f64,
    pub logic: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotGrid {
    pub w: usize,
    pub h: usize,
    /// Mean trail per block, row-major from the bottom row.
    pub cells: Vec<f32>,
    /// Agents per block.
    pub density: Vec<u32>,
}

/// One gate with a live plasmodium that can be advanced tick by tick and
/// have its inputs changed between ticks.
#[derive(Debug, Clone)]
pub struct GateSim {
    prepared: Arc<Prepared>,
    pub fields: StimulusFields,
    pub plasmodium: PlasmodiumState,
    inputs: BTreeMap<String, u8>,
    epoch: Epoch,
    events: Vec<Event>,
    seen_transitions: usize,
    desiccation_logged: bool,
    withdrawal_logged: Option<(u64, u64)>,
}

impl GateSim {
    pub fn new(prepared: Arc<Prepared>, inputs: &BTreeMap<String, u8>, seed: u64) -> Result<Self, GateError> {
        prepared.check_inputs(inputs)?;
        let arena = &prepared.arena;
        let plasmodium = inoculate(
            &arena.scene,
            &arena.raster,
            &prepared.harness.source_electrode,
            arena.cal.swarm.agents,
            seed,
            &arena.cal,
        )?;
        let mut sim = GateSim {
            fields: arena.fields.clone(),
            plasmodium,
            inputs: inputs.clone(),
            epoch: Epoch { start: 0, dark_targets: Vec::new(), connected_since: None, completion: None, next_check: 0 },
            events: Vec::new(),
            seen_transitions: 0,
            desiccation_logged: false,
            withdrawal_logged: None,
            prepared,
        };
        sim.apply_inputs(false);
        Ok(sim)
    }

    pub fn prepared(&self) -> &Arc<Prepared> {
        &self.prepared
    }

    pub fn tick(&self) -> u64 {
        self.plasmodium.tick
    }

    pub fn inputs(&self) -> &BTreeMap<String, u8> {
        &self.inputs
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn epoch_start(&self) -> u64 {
        self.epoch.start
    }

    pub fn completed(&self) -> bool {
        self.epoch.completion.is_some()
    }

    /// The current epoch has run out of budget.
    pub fn expired(&self) -> bool {
        self.tick() >= self.epoch.start + self.prepared.harness.budget
    }

    fn log(&mut self, kind: &str, detail: String) {
        self.events.push(Event { tick: self.tick(), kind: kind.into(), detail });
    }

    fn apply_inputs(&mut self, trigger: bool) {
        let prepared = Arc::clone(&self.prepared);
        let h = &prepared.harness;
        let states = h.led_states(&self.inputs);
        let before: Vec<bool> = if trigger {
            h.target_electrodes.iter().map(|t| self.epoch.dark_targets.contains(&self.prepared.electrode_index(t))).collect()
        } else {
            vec![true; h.target_electrodes.len()]
        };
        self.fields.set_led_states(&self.prepared.arena.scene, &states);
        let dark: Vec<usize> = h
            .target_electrodes
            .iter()
            .filter(|t| !h.electrode_lit(t, &states))
            .map(|t| prepared.electrode_index(t))
            .collect();
        let detail = self.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",");
        self.log("inputs", detail);
        if trigger {
            let newly_lit: Vec<String> = h
                .target_electrodes
                .iter()
                .zip(&before)
                .filter(|(t, &was_dark)| was_dark && !dark.contains(&prepared.electrode_index(t)))
                .map(|(t, _)| t.clone())
                .collect();
            for t in newly_lit {
                let region = prepared.arena.near_electrode(&t, 2.0);
                if self.plasmodium.trigger_withdrawal(&prepared.arena.raster, &region, &prepared.arena.cal) {
                    self.log("withdrawal", t);
                }
            }
            self.note_transitions();
        }
        self.epoch = Epoch { start: self.tick(), dark_targets: dark, connected_since: None, completion: None, next_check: 0 };
    }

    /// Latches new input bits; they take effect from the next tick. Returns
    /// false when the bits were already in force.
    pub fn set_inputs(&mut self, inputs: &BTreeMap<String, u8>) -> Result<bool, GateError> {
        for (k, v) in inputs {
            if !self.prepared.harness.inputs.contains_key(k) {
                return Err(GateError::UnknownChannel(k.clone()));
            }
            if *v > 1 {
                return Err(GateError::InvalidInputs(format!("{k}={v} is not a bit")));
            }
        }
        let mut next = self.inputs.clone();
        next.extend(inputs.iter().map(|(k, v)| (k.clone(), *v)));
        if next == self.inputs {
            return Ok(false);
        }
        self.inputs = next;
        self.apply_inputs(true);
        Ok(true)
    }

    fn note_transitions(&mut self) {
        while self.seen_transitions < self.plasmodium.transitions.len() {
            let t = self.plasmodium.transitions[self.seen_transitions];
            self.events.push(Event { tick: t.tick, kind: "mode".into(), detail: format!("{}->{}", t.from.as_str(), t.to.as_str()) });
            self.seen_transitions += 1;
        }
    }

    /// Advances `n` ticks.
    pub fn advance(&mut self, n: u64) {
        for _ in 0..n {
            self.step_once();
        }
    }

    fn step_once(&mut self) {
        let prepared = Arc::clone(&self.prepared);
        let arena = &prepared.arena;
        self.fields.desiccate(&arena.raster, 1);
        if self.plasmodium.is_quiescent() {
            self.plasmodium.idle(1, &arena.cal);
        } else {
            let habitat = arena.habitat(prepared.overvoltage());
            self.plasmodium.step(&self.fields, &habitat, 1).expect("non-terminal plasmodium steps");
        }
        self.note_transitions();
        if self.plasmodium.desiccated && !self.desiccation_logged {
            self.desiccation_logged = true;
            self.log("desiccated", String::new());
        }
        if self.plasmodium.last_withdrawal != self.withdrawal_logged {
            self.withdrawal_logged = self.plasmodium.last_withdrawal;
            if let Some((s, e)) = self.withdrawal_logged {
                self.log("withdrawn", format!("{}", e - s));
            }
        }
        self.check_connection();
    }

    fn check_connection(&mut self) {
        if self.epoch.completion.is_some() || self.epoch.dark_targets.is_empty() {
            return;
        }
        let p = &self.plasmodium;
        if p.hunger_since.is_none() && !p.nourished && self.epoch.connected_since.is_none() {
            return;
        }
        let prepared = Arc::clone(&self.prepared);
        let arena = &prepared.arena;
        let source = prepared.electrode_index(&self.prepared.harness.source_electrode);
        let thr = arena.cal.electrical.trail_threshold;
        let hit = self
            .epoch
            .dark_targets
            .iter()
            .copied()
            .find(|&t| footprints_connected_by(&arena.raster, |c| p.trail(c) >= thr, source, t));
        let tick = self.tick();
        match hit {
            None => {
                if self.epoch.connected_since.take().is_some() {
                    self.log("disconnected", String::new());
                }
            }
            Some(t) => {
                let since = match self.epoch.connected_since {
                    Some((s, _)) => s,
                    None => {
                        self.epoch.connected_since = Some((tick, t));
                        let id = arena.scene.electrodes[t].id.clone();
                        self.log("connected", id);
                        tick
                    }
                };
                if tick + 1 >= since + COMPLETION_HOLD && tick >= self.epoch.next_check {
                    if self.reading().logic_level == 1 {
                        self.epoch.completion = Some((since, t));
                        let id = arena.scene.electrodes[t].id.clone();
                        self.log("complete", id);
                    } else {
                        self.epoch.next_check = tick + COMPLETION_HOLD;
                    }
                }
            }
        }
    }

    pub fn network(&self) -> ConductiveNetwork {
        let a = &self.prepared.arena;
        extract_network(&self.plasmodium, &a.scene, &a.raster, a.cal.electrical.trail_threshold, &a.cal.electrical)
    }

    /// Output circuit reading: the source against the best-connected target.
    pub fn reading(&self) -> OutputReading {
        let h = &self.prepared.harness;
        let net = self.network();
        let scene = &self.prepared.arena.scene;
        let best = h
            .target_electrodes
            .iter()
            .filter_map(|t| path_resistance(&net, scene, &h.source_electrode, t).map(|r| (r, t)))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        let oc = h.output_circuit;
        let mut reading = read_output(best.map(|b| b.0), oc.supply, oc.load, oc.threshold);
        if let Some((_, t)) = best {
            reading.tubule_count = count_tubules(&net, &h.source_electrode, t);
        }
        reading
    }

    /// Runs the current epoch until it completes or its budget expires.
    pub fn run_epoch(&mut self) {
        let end = self.epoch.start + self.prepared.harness.budget;
        while self.tick() < end && self.epoch.completion.is_none() {
            if self.plasmodium.is_quiescent() && self.epoch.connected_since.is_none() {
                let rest = end - self.tick();
                let arena = &self.prepared.arena;
                self.fields.desiccate(&arena.raster, rest);
                self.plasmodium.idle(rest, &arena.cal);
                break;
            }
            self.step_once();
        }
    }

    /// Outcome of the current epoch as of now.
    pub fn outcome(&self) -> GateOutcome {
        let reading = self.reading();
        let completion = self.epoch.completion;
        let has_dark = !self.epoch.dark_targets.is_empty();
        let completed = completion.is_some();
        let failed = !completed && has_dark && reading.logic_level == 0;
        let withdrawal_ticks = self.plasmodium.last_withdrawal.filter(|(_, e)| *e >= self.epoch.start).map(|(s, e)| e - s);
        GateOutcome {
            logic_output: reading.logic_level,
            completed,
            failed,
            propagation_delay: completion.map(|(s, _)| s - self.epoch.start),
            final_reading: reading,
            target: completion.map(|(_, t)| self.prepared.arena.scene.electrodes[t].id.clone()),
            withdrawal_ticks,
            mode: self.plasmodium.mode,
            tick: self.tick(),
            trace: self.events.iter().filter(|e| e.tick >= self.epoch.start).cloned().collect(),
        }
    }

    pub fn snapshot(&self, max_side: usize) -> Snapshot {
        let spec = self.prepared.arena.raster.spec;
        let f = spec.width.max(spec.height).div_ceil(max_side.max(1)).max(1);
        let (w, h) = (spec.width.div_ceil(f), spec.height.div_ceil(f));
        let mut cells = vec![0f32; w * h];
        let mut counts = vec![0u32; w * h];
        let mut density = vec![0u32; w * h];
        for idx in 0..spec.len() {
            let (c, r) = spec.col_row(idx);
            let k = (r / f) * w + c / f;
            cells[k] += self.plasmodium.trail(idx) as f32;
            counts[k] += 1;
        }
        for (v, n) in cells.iter_mut().zip(&counts) {
            *v /= (*n).max(1) as f32;
        }
        for a in &self.plasmodium.agents {
            if let Some(idx) = spec.cell_of(a.position) {
                let (c, r) = spec.col_row(idx);
                density[(r / f) * w + c / f] += 1;
            }
        }
        let reading = self.reading();
        Snapshot {
            tick: self.tick(),
            mode: self.plasmodium.mode,
            inputs: self.inputs.clone(),
            output: SnapshotOutput { voltage: reading.output_voltage, logic: reading.logic_level },
            grid: SnapshotGrid { w, h, cells, density },
        }
    }
}

/// Simulates one gate run from inoculation.
pub fn run_gate(prepared: &Arc<Prepared>, inputs: &BTreeMap<String, u8>, seed: u64) -> Result<GateOutcome, GateError> {
    let mut sim = GateSim::new(Arc::clone(prepared), inputs, seed)?;
    sim.run_epoch();
    Ok(sim.outcome())
}

/// Switches a live gate to new inputs and runs until the new operation
/// settles.
pub fn reset_gate(sim: &mut GateSim, new_inputs: &BTreeMap<String, u8>) -> Result<GateOutcome, GateError> {
    let last = sim.outcome();
    if last.failed {
        return Err(GateError::NotResettable("the previous operation failed".into()));
    }
    if sim.plasmodium.is_terminal() {
        return Err(GateError::NotResettable(format!("plasmodium is {}", sim.plasmodium.mode.as_str())));
    }
    if sim.plasmodium.desiccated {
        return Err(GateError::NotResettable("plasmodium has desiccated".into()));
    }
    sim.prepared().check_inputs(new_inputs)?;
    sim.set_inputs(new_inputs)?;
    sim.run_epoch();
    Ok(sim.outcome())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub inputs: BTreeMap<String, u8>,
    pub ideal: u8,
    pub trials: usize,
    /// Trials whose output matched the ideal.
    pub successes: usize,
    pub success_rate: f64,
    pub failures: usize,
    pub mean_delay: Option<f64>,
    pub median_delay: Option<f64>,
    pub mean_tubules: Option<f64>,
    pub delays: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTable {
    pub gate: GateKind,
    pub rows: Vec<TruthRow>,
}

impl TruthTable {
    /// Fraction of runs that failed, over rows whose ideal output is 1.
    pub fn failure_rate(&self) -> f64 {
        let (f, n) = self.rows.iter().filter(|r| r.ideal == 1).fold((0, 0), |(f, n), r| (f + r.failures, n + r.trials));
        if n == 0 {
            0.0
        } else {
            f as f64 / n as f64
        }
    }

    pub fn row(&self, bits: &[u8]) -> Option<&TruthRow> {
        self.rows.iter().find(|r| r.inputs.values().copied().eq(bits.iter().copied()))
    }

    pub fn all_delays(&self) -> Vec<u64> {
        self.rows.iter().flat_map(|r| r.delays.iter().copied()).collect()
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Seed of trial `i`. It depends only on the base seed and the trial index,
/// so every row and every gate variant sees the same organisms.
pub fn trial_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, "trial", i as u64)
}

/// Runs every input row `trials` times.
pub fn truth_table(prepared: &Arc<Prepared>, trials: usize, seed: u64) -> Result<TruthTable, GateError> {
    let h = &prepared.harness;
    let mut rows = Vec::new();
    for inputs in h.input_rows() {
        let bits: Vec<u8> = inputs.values().copied().collect();
        let ideal = h.gate_kind.ideal(&bits);
        let mut successes = 0;
        let mut failures = 0;
        let mut delays = Vec::new();
        let mut tubules = Vec::new();
        let outcomes = crate::parallel::par_map((0..trials).collect(), |i| run_gate(prepared, &inputs, trial_seed(seed, i)));
        for out in outcomes {
            let out = out?;
            if out.logic_output == ideal {
                successes += 1;
            }
            if out.failed {
                failures += 1;
            }
            if let Some(d) = out.propagation_delay {
                delays.push(d);
                tubules.push(out.final_reading.tubule_count as f64);
            }
        }
        let df: Vec<f64> = delays.iter().map(|&d| d as f64).collect();
        rows.push(TruthRow {
            inputs,
            ideal,
            trials,
            successes,
            success_rate: successes as f64 / trials.max(1) as f64,
            failures,
            mean_delay: (!df.is_empty()).then(|| df.iter().sum::<f64>() / df.len() as f64),
            median_delay: median(&df),
            mean_tubules: (!tubules.is_empty()).then(|| tubules.iter().sum::<f64>() / tubules.len() as f64),
            delays,
        });
    }
    Ok(TruthTable { gate: h.gate_kind, rows })
}
