//! Agent model of the living plasmodium.
//!
//! The organism is a swarm of trail-following agents. Each agent senses a
//! scalar drive at three points ahead of it, turns toward the best one and
//! takes a step if the destination is tolerable. Organism-level state
//! (remaining inoculum reserve, hunger, nourishment, withdrawal) is shared by
//! all agents.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::Calibration;
use crate::fields::StimulusFields;
use crate::geometry::{wrap_angle, Point};
use crate::grid::Raster;
use crate::rng::stream;
use crate::scene::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exploring,
    Migrating,
    Withdrawing,
    Sclerotized,
    Fragmented,
}

impl Mode {
    pub fn is_terminal(self) -> bool {
        matches!(self, Mode::Sclerotized | Mode::Fragmented)
    }

    /// Whether `self → next` is an edge of the mode graph.
    pub fn can_become(self, next: Mode) -> bool {
        use Mode::*;
        matches!(
            (self, next),
            (Exploring, Migrating)
                | (Migrating, Withdrawing)
                | (Migrating, Exploring)
                | (Withdrawing, Exploring)
                | (Withdrawing, Sclerotized)
                | (Withdrawing, Fragmented)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Exploring => "exploring",
            Mode::Migrating => "migrating",
            Mode::Withdrawing => "withdrawing",
            Mode::Sclerotized => "sclerotized",
            Mode::Fragmented => "fragmented",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlasmodiumError {
    #[error("unknown electrode {0}")]
    UnknownElectrode(String),
    #[error("electrode {0} has no agar to inoculate")]
    NoAgar(String),
    #[error("there is no agar blob #{0}")]
    UnknownBlob(usize),
    #[error("a plasmodium needs at least one agent")]
    EmptyMass,
    #[error("cannot step a plasmodium in terminal mode {0:?}")]
    Terminal(Mode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentPhase {
    Free,
    /// Under newly switched-on light, waiting to stream back.
    Held,
    /// Streaming out of a lit region.
    Retreating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub position: Point,
    pub heading: f64,
    pub sensor_angle: f64,
    pub sensor_offset: f64,
    pub phase: AgentPhase,
}

impl Agent {
    /// Left, front and right sensor positions.
    pub fn sensors(&self) -> [Point; 3] {
        self.sensors_rotated(self.sensor_angle.sin_cos(), self.heading.sin_cos())
    }

    /// As `sensors`, given the sine and cosine of the sensor angle and of
    /// the heading.
    fn sensors_rotated(&self, (sa, ca): (f64, f64), (s, c): (f64, f64)) -> [Point; 3] {
        let d = self.sensor_offset;
        let at = |dx: f64, dy: f64| Point::new(self.position.x + d * dx, self.position.y + d * dy);
        [at(c * ca - s * sa, s * ca + c * sa), at(c, s), at(c * ca + s * sa, s * ca - c * sa)]
    }
}

/// What an agent perceives at its left, front and right sensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stimulus {
    pub attraction: [f64; 3],
    pub repulsion: [f64; 3],
    pub moisture_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub tick: u64,
    pub from: Mode,
    pub to: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WithdrawalState {
    pub region: Vec<bool>,
    pub started: u64,
    pub fragment: bool,
}

/// Static context a plasmodium lives in.
#[derive(Clone, Copy)]
pub struct Habitat<'a> {
    pub scene: &'a Scene,
    pub raster: &'a Raster,
    pub cal: &'a Calibration,
    /// The output circuit runs above the overvoltage threshold.
    pub overvoltage: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlasmodiumState {
    pub agents: Vec<Agent>,
    pub total_mass: usize,
    pub mode: Mode,
    pub rng_seed: u64,
    pub tick: u64,
    pub home_blob: usize,
    /// Ticks of dwelling left before the inoculum runs out of food.
    pub reserve: f64,
    /// Tick at which the current bout of hunger began.
    pub hunger_since: Option<u64>,
    /// Has fed at least once; a fed plasmodium no longer depends on its
    /// home blob for moisture.
    pub nourished: bool,
    /// Home blob dried out before the plasmodium found food; it no longer moves.
    pub desiccated: bool,
    /// Repellent left on areas the plasmodium withdrew from.
    pub residue: Vec<f64>,
    pub withdrawal: Option<WithdrawalState>,
    /// (start, end) ticks of the last completed withdrawal.
    pub last_withdrawal: Option<(u64, u64)>,
    pub transitions: Vec<Transition>,
    trail_raw: Vec<f64>,
    trail_scale: f64,
    blob_counts: Vec<usize>,
    off_agar: usize,
    /// Per agent: the heading its sine and cosine were last taken of.
    heading_trig: Vec<(f64, (f64, f64))>,
    rng: ChaCha8Rng,
}

/// Places `mass` agents uniformly on the agar blob over `electrode_id`.
pub fn inoculate(
    scene: &Scene,
    raster: &Raster,
    electrode_id: &str,
    mass: usize,
    seed: u64,
    cal: &Calibration,
) -> Result<PlasmodiumState, PlasmodiumError> {
    if scene.electrode(electrode_id).is_none() {
        return Err(PlasmodiumError::UnknownElectrode(electrode_id.to_string()));
    }
    let home = scene.blob_on_electrode(electrode_id).ok_or_else(|| PlasmodiumError::NoAgar(electrode_id.to_string()))?;
    inoculate_blob(scene, raster, home, mass, seed, cal)
}

/// Places `mass` agents uniformly on agar blob `home`.
pub fn inoculate_blob(
    scene: &Scene,
    raster: &Raster,
    home: usize,
    mass: usize,
    seed: u64,
    cal: &Calibration,
) -> Result<PlasmodiumState, PlasmodiumError> {
    if home >= scene.agar_blobs.len() || raster.blob_cells[home].is_empty() {
        return Err(PlasmodiumError::UnknownBlob(home));
    }
    if mass == 0 {
        return Err(PlasmodiumError::EmptyMass);
    }
    let blob = &scene.agar_blobs[home];
    let swarm = &cal.swarm;
    let mut rng = stream(seed, "agents");
    let mut agents = Vec::with_capacity(mass);
    while agents.len() < mass {
        let r = blob.radius * rng.random::<f64>().sqrt();
        let a = rng.random::<f64>() * std::f64::consts::TAU;
        let p = blob.center.offset(a, r);
        match raster.spec.cell_of(p) {
            Some(c) if raster.blob[c] == Some(home as u16) => {}
            _ => continue,
        }
        agents.push(Agent {
            position: p,
            heading: rng.random::<f64>() * std::f64::consts::TAU,
            sensor_angle: swarm.sensor_angle,
            sensor_offset: swarm.sensor_offset,
            phase: AgentPhase::Free,
        });
    }
    let z: f64 = StandardNormal.sample(&mut stream(seed, "dwell"));
    let reserve = cal.reluctance.dwell_median_ticks * (cal.reluctance.dwell_sigma * z).exp();
    let mut state = PlasmodiumState {
        agents,
        total_mass: mass,
        mode: Mode::Exploring,
        rng_seed: seed,
        tick: 0,
        home_blob: home,
        reserve,
        hunger_since: None,
        nourished: false,
        desiccated: false,
        residue: vec![0.0; raster.spec.len()],
        withdrawal: None,
        last_withdrawal: None,
        transitions: Vec::new(),
        trail_raw: vec![0.0; raster.spec.len()],
        trail_scale: 1.0,
        blob_counts: vec![0; scene.agar_blobs.len()],
        off_agar: 0,
        heading_trig: Vec::new(),
        rng,
    };
    state.recount(raster);
    let deposit = cal.swarm.deposit;
    for i in 0..state.agents.len() {
        if let Some(c) = raster.spec.cell_of(state.agents[i].position) {
            state.trail_raw[c] += deposit;
        }
    }
    Ok(state)
}

/// Reads the stimulus at an agent's sensors.
pub fn sense(agent: &Agent, fields: &StimulusFields, cal: &Calibration) -> Stimulus {
    let spec = fields.spec;
    let mut attraction = [0.0; 3];
    let mut repulsion = [0.0; 3];
    for (k, p) in agent.sensors().into_iter().enumerate() {
        if let Some(c) = spec.cell_of(p) {
            attraction[k] = fields.attractant[c];
            repulsion[k] = fields.repulsion()[c];
        }
    }
    let moisture_ok = match spec.cell_of(agent.position) {
        Some(c) => fields.moisture[c] == 0.0 || fields.moisture[c] >= cal.fields.viability_threshold,
        None => false,
    };
    Stimulus { attraction, repulsion, moisture_ok }
}

impl PlasmodiumState {
    pub fn is_terminal(&self) -> bool {
        self.mode.is_terminal()
    }

    /// Trail strength of one cell.
    #[inline]
    pub fn trail(&self, idx: usize) -> f64 {
        self.trail_raw[idx] * self.trail_scale
    }

    pub fn trail_grid(&self) -> Vec<f64> {
        self.trail_raw.iter().map(|v| v * self.trail_scale).collect()
    }

    /// Overwrites one cell's trail strength.
    pub fn set_trail(&mut self, idx: usize, value: f64) {
        self.trail_raw[idx] = value / self.trail_scale;
    }

    pub fn hunger(&self, cal: &Calibration) -> f64 {
        let r = &cal.reluctance;
        match self.hunger_since {
            Some(since) => (r.hunger_onset + (self.tick - since) as f64 / r.hunger_ramp_ticks).min(r.hunger_max),
            None => 0.0,
        }
    }

    /// Agents standing on blob `b`.
    pub fn blob_count(&self, b: usize) -> usize {
        self.blob_counts[b]
    }

    /// Agents standing off every agar blob.
    pub fn off_agar(&self) -> usize {
        self.off_agar
    }

    /// Agents standing on cells flagged in `mask`.
    pub fn count_in(&self, raster: &Raster, mask: &[bool]) -> usize {
        self.agents.iter().filter(|a| raster.spec.cell_of(a.position).is_some_and(|c| mask[c])).count()
    }

    pub fn centroid(&self) -> Point {
        let n = self.agents.len().max(1) as f64;
        let (sx, sy) = self.agents.iter().fold((0.0, 0.0), |(x, y), a| (x + a.position.x, y + a.position.y));
        Point::new(sx / n, sy / n)
    }

    /// Every agent is frozen; only the trail still changes.
    pub fn is_quiescent(&self) -> bool {
        self.desiccated || self.is_terminal()
    }

    fn set_mode(&mut self, to: Mode) {
        debug_assert!(self.mode.can_become(to), "{:?} -> {:?}", self.mode, to);
        self.transitions.push(Transition { tick: self.tick, from: self.mode, to });
        self.mode = to;
    }

    fn recount(&mut self, raster: &Raster) {
        self.blob_counts.iter_mut().for_each(|c| *c = 0);
        self.off_agar = 0;
        for a in &self.agents {
            match raster.spec.cell_of(a.position).and_then(|c| raster.blob[c]) {
                Some(b) => self.blob_counts[b as usize] += 1,
                None => self.off_agar += 1,
            }
        }
    }

    fn evaporate(&mut self, ticks: u64, evaporation: f64) {
        self.trail_scale *= (1.0 - evaporation).powi(ticks.min(i32::MAX as u64) as i32);
        if self.trail_scale < 1e-150 {
            let s = self.trail_scale;
            self.trail_raw.iter_mut().for_each(|v| *v *= s);
            self.trail_scale = 1.0;
        }
    }

    /// Advances a frozen plasmodium by `ticks` without moving any agent.
    pub fn idle(&mut self, ticks: u64, cal: &Calibration) {
        self.tick += ticks;
        self.evaporate(ticks, cal.swarm.evaporation);
    }

    /// Starts a withdrawal from the cells flagged in `lit_region`. Returns
    /// false, leaving the state untouched, when no agent is inside it.
    pub fn trigger_withdrawal(&mut self, raster: &Raster, lit_region: &[bool], cal: &Calibration) -> bool {
        if self.is_terminal() {
            return false;
        }
        let inside: Vec<usize> = (0..self.agents.len())
            .filter(|&i| raster.spec.cell_of(self.agents[i].position).is_some_and(|c| lit_region[c]))
            .collect();
        if inside.is_empty() {
            return false;
        }
        for &i in &inside {
            self.agents[i].phase = AgentPhase::Held;
        }
        match self.withdrawal.as_mut() {
            Some(w) => {
                for (r, &l) in w.region.iter_mut().zip(lit_region) {
                    *r |= l;
                }
            }
            None => {
                if self.mode == Mode::Exploring {
                    self.set_mode(Mode::Migrating);
                }
                self.set_mode(Mode::Withdrawing);
                let fragment = self.rng.random::<f64>() < cal.withdrawal.fragmentation_probability;
                self.withdrawal = Some(WithdrawalState { region: lit_region.to_vec(), started: self.tick, fragment });
            }
        }
        true
    }

    /// Advances the plasmodium by `dt` ticks.
    pub fn step(&mut self, fields: &StimulusFields, habitat: &Habitat, dt: u64) -> Result<(), PlasmodiumError> {
        for _ in 0..dt {
            if self.is_terminal() {
                return Err(PlasmodiumError::Terminal(self.mode));
            }
            self.tick_once(fields, habitat);
        }
        Ok(())
    }

    fn tick_once(&mut self, fields: &StimulusFields, habitat: &Habitat) {
        let cal = habitat.cal;
        let raster = habitat.raster;
        self.tick += 1;
        self.evaporate(1, cal.swarm.evaporation);
        if !self.nourished && fields.blob_moisture(self.home_blob) < cal.fields.viability_threshold {
            self.desiccated = true;
        }
        if self.desiccated {
            return;
        }
        let mass = self.total_mass as f64;
        if self.reserve > 0.0 {
            self.reserve -= self.blob_counts[self.home_blob] as f64 / mass;
            if self.reserve <= 0.0 && self.hunger_since.is_none() {
                self.hunger_since = Some(self.tick);
            }
        }
        self.move_agents(fields, habitat);

        let fed = (0..self.blob_counts.len()).any(|b| {
            b != self.home_blob && raster.food_blob[b] && self.blob_counts[b] as f64 >= cal.reluctance.feeding_fraction * mass
        });
        if fed {
            self.nourished = true;
            self.hunger_since = None;
            if self.mode == Mode::Migrating {
                self.set_mode(Mode::Exploring);
            }
        } else if self.reserve <= 0.0 && self.hunger_since.is_none() {
            self.hunger_since = Some(self.tick);
        }
        if self.mode == Mode::Exploring && self.hunger_since.is_some() && self.off_agar > 0 {
            self.set_mode(Mode::Migrating);
        }
        self.progress_withdrawal(raster, cal);
    }

    fn progress_withdrawal(&mut self, raster: &Raster, cal: &Calibration) {
        let Some(w) = self.withdrawal.as_ref() else { return };
        let occupancy = self.count_in(raster, &w.region) as f64 / self.total_mass as f64;
        if occupancy >= cal.withdrawal.complete_below {
            return;
        }
        let w = self.withdrawal.take().expect("checked above");
        for (c, _) in w.region.iter().enumerate().filter(|(_, &r)| r) {
            self.residue[c] = self.residue[c].max(cal.withdrawal.residue_strength);
            self.trail_raw[c] = 0.0;
        }
        for a in &mut self.agents {
            if a.phase == AgentPhase::Held {
                a.phase = AgentPhase::Retreating;
            }
        }
        self.last_withdrawal = Some((w.started, self.tick));
        let next = if w.fragment {
            Mode::Fragmented
        } else if self.desiccated {
            Mode::Sclerotized
        } else {
            Mode::Exploring
        };
        self.set_mode(next);
    }

    fn move_agents(&mut self, fields: &StimulusFields, habitat: &Habitat) {
        let cal = habitat.cal;
        let raster = habitat.raster;
        let spec = raster.spec;
        let sw = &cal.swarm;
        let hunger = self.hunger(cal);
        let dwelling = self.reserve > 0.0;
        let home = self.home_blob as u16;
        let (deposit, noise) = if habitat.overvoltage {
            (sw.deposit * cal.electrical.overvoltage_deposit_gain, sw.steering_noise * cal.electrical.overvoltage_noise_gain)
        } else {
            (sw.deposit, sw.steering_noise)
        };
        let threshold = cal.reluctance.leave_threshold;
        let repulsion = fields.repulsion();
        let appetite = fields.appetite();
        let region = self.withdrawal.as_ref().map(|w| w.region.clone());
        let releasing = self.withdrawal.as_ref().is_none_or(|w| self.tick >= w.started + cal.withdrawal.reaction_latency);
        let mut agents = std::mem::take(&mut self.agents);
        let mut rotation = (f64::NAN, (0.0, 1.0));
        let mut trig = std::mem::take(&mut self.heading_trig);
        trig.resize(agents.len(), (f64::NAN, (0.0, 0.0)));
        let sin_cos = |t: &mut (f64, (f64, f64)), heading: f64| {
            if t.0 != heading {
                *t = (heading, heading.sin_cos());
            }
            t.1
        };
        let mut counts = vec![0; self.blob_counts.len()];
        let mut off_agar = 0;
        let mut count = |c: Option<usize>| match c.and_then(|c| raster.blob[c]) {
            Some(b) => counts[b as usize] += 1,
            None => off_agar += 1,
        };

        let trail_term = |s: &Self, c: usize| {
            let t = s.trail(c);
            sw.trail_gain * t / (t + sw.trail_half_saturation)
        };
        let drive = |s: &Self, c: usize| {
            let agar = if raster.blob[c].is_some() { sw.agar_comfort } else { 0.0 };
            hunger * appetite[c] + trail_term(s, c) + agar - repulsion[c] - s.residue[c]
        };

        for (a, t) in agents.iter_mut().zip(trig.iter_mut()) {
            let Some(cell) = spec.cell_of(a.position) else {
                count(None);
                continue;
            };
            if a.phase == AgentPhase::Held {
                if releasing && self.rng.random::<f64>() < cal.withdrawal.release_rate {
                    a.phase = AgentPhase::Retreating;
                } else {
                    self.trail_raw[cell] += deposit / self.trail_scale;
                    count(Some(cell));
                    continue;
                }
            }
            if dwelling
                && a.phase == AgentPhase::Free
                && raster.blob[cell] == Some(home)
                && self.rng.random::<f64>() >= cal.reluctance.dwell_move_probability
            {
                self.trail_raw[cell] += deposit / self.trail_scale;
                count(Some(cell));
                continue;
            }

            let retreating = a.phase == AgentPhase::Retreating;
            let score = |p: Point| -> f64 {
                match spec.cell_of(p) {
                    Some(c) if raster.in_dish[c] => {
                        if retreating {
                            trail_term(self, c) - repulsion[c] - self.residue[c]
                        } else {
                            drive(self, c)
                        }
                    }
                    _ => f64::NEG_INFINITY,
                }
            };
            if a.sensor_angle != rotation.0 {
                rotation = (a.sensor_angle, a.sensor_angle.sin_cos());
            }
            let [l, f, r] = a.sensors_rotated(rotation.1, sin_cos(t, a.heading)).map(score);
            if f >= l && f >= r {
            } else if f < l && f < r {
                a.heading += if self.rng.random::<bool>() { sw.rotation_angle } else { -sw.rotation_angle };
            } else if l > r {
                a.heading += sw.rotation_angle;
            } else {
                a.heading -= sw.rotation_angle;
            }
            let jitter: f64 = StandardNormal.sample(&mut self.rng);
            a.heading = wrap_angle(a.heading + noise * jitter);

            let (s, c) = sin_cos(t, a.heading);
            let q = Point::new(a.position.x + sw.step_length * c, a.position.y + sw.step_length * s);
            let accepted = match spec.cell_of(q) {
                Some(qc) if raster.in_dish[qc] && habitat.scene.in_dish(q) && !raster.blocked(a.position, q) => {
                    qc == cell
                        || drive(self, qc) >= threshold
                        || (drive(self, cell) < threshold && repulsion[qc] < repulsion[cell] && self.residue[qc] <= self.residue[cell])
                }
                _ => false,
            };
            let mut here = cell;
            if accepted {
                a.position = q;
                here = spec.cell_of(q).expect("accepted moves stay on the grid");
                if retreating && !region.as_ref().is_some_and(|m| m[here]) {
                    a.phase = AgentPhase::Free;
                }
            } else {
                a.heading = self.rng.random::<f64>() * std::f64::consts::TAU;
            }
            self.trail_raw[here] += deposit / self.trail_scale;
            count(Some(here));
        }
        self.agents = agents;
        self.heading_trig = trig;
        self.blob_counts = counts;
        self.off_agar = off_agar;
    }
}
