//! Every free parameter of the model, in one auditable record.
//!
//! The shipped [`Calibration::default`] was fitted so that the phototaxis
//! ranking, the PNOT failure rate and the delay windows reproduce; see
//! `experiments::calibrate` for the search that refines it.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ConfigError;

/// Wavelength → phobia weight anchors, in weight per mcd.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhobiaTable {
    pub anchors: Vec<PhobiaAnchor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhobiaAnchor {
    pub wavelength: f64,
    pub weight: f64,
}

impl Default for PhobiaTable {
    fn default() -> Self {
        let anchor = |wavelength, weight| PhobiaAnchor { wavelength, weight };
        PhobiaTable {
            anchors: vec![
                anchor(466.0, 0.0040),
                anchor(568.0, 0.0400),
                anchor(585.0, 0.0060),
                anchor(626.0, 0.0090),
            ],
        }
    }
}

impl PhobiaTable {
    /// Weight at `wavelength`: linear between anchors, clamped outside.
    pub fn weight(&self, wavelength: f64) -> f64 {
        let mut pts: Vec<PhobiaAnchor> = self.anchors.clone();
        pts.sort_by(|a, b| a.wavelength.total_cmp(&b.wavelength));
        match pts.as_slice() {
            [] => 0.0,
            [only] => only.weight,
            [first, ..] if wavelength <= first.wavelength => first.weight,
            [.., last] if wavelength >= last.wavelength => last.weight,
            _ => {
                let hi = pts.iter().position(|a| a.wavelength >= wavelength).unwrap_or(pts.len() - 1);
                let (a, b) = (pts[hi - 1], pts[hi]);
                if b.wavelength == a.wavelength {
                    return b.weight;
                }
                let t = (wavelength - a.wavelength) / (b.wavelength - a.wavelength);
                a.weight + t * (b.weight - a.weight)
            }
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        PhobiaTable {
            anchors: self.anchors.iter().map(|a| PhobiaAnchor { wavelength: a.wavelength, weight: a.weight * k }).collect(),
        }
    }
}

/// Dwell and hunger behaviour of a plasmodium sitting on moist agar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Reluctance {
    /// Median time for the inoculum to exhaust its blob, in ticks.
    pub dwell_median_ticks: f64,
    /// Log-normal spread of the dwell time between runs.
    pub dwell_sigma: f64,
    /// Per-tick move probability while the blob still holds nutrient.
    pub dwell_move_probability: f64,
    /// Hunger at the moment the blob is exhausted.
    pub hunger_onset: f64,
    /// Ticks for hunger to grow by one unit afterwards.
    pub hunger_ramp_ticks: f64,
    /// Ceiling on hunger.
    pub hunger_max: f64,
    /// Minimum drive needed to advance onto bare plastic.
    pub leave_threshold: f64,
    /// Attractant concentration perceived as half-saturating.
    pub attraction_half_saturation: f64,
    /// Fraction of mass on unlit food that counts as feeding.
    pub feeding_fraction: f64,
}

impl Default for Reluctance {
    fn default() -> Self {
        Reluctance {
            dwell_median_ticks: 3700.0,
            dwell_sigma: 0.55,
            dwell_move_probability: 0.05,
            hunger_onset: 1.0,
            hunger_ramp_ticks: 1440.0,
            hunger_max: 3.0,
            leave_threshold: 0.13,
            attraction_half_saturation: 1.0,
            feeding_fraction: 0.05,
        }
    }
}

/// Agent kinematics and trail bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Swarm {
    pub agents: usize,
    /// mm per tick.
    pub step_length: f64,
    /// Radians between the front sensor and each side sensor.
    pub sensor_angle: f64,
    /// mm ahead of the agent.
    pub sensor_offset: f64,
    /// Radians turned per tick when steering.
    pub rotation_angle: f64,
    /// Standard deviation of the heading jitter, radians.
    pub steering_noise: f64,
    pub deposit: f64,
    /// Fraction of trail lost per tick.
    pub evaporation: f64,
    pub trail_gain: f64,
    pub trail_half_saturation: f64,
    /// Drive bonus for standing on agar.
    pub agar_comfort: f64,
}

impl Default for Swarm {
    fn default() -> Self {
        Swarm {
            agents: 300,
            step_length: 0.5,
            sensor_angle: std::f64::consts::FRAC_PI_4,
            sensor_offset: 2.0,
            rotation_angle: std::f64::consts::FRAC_PI_6,
            steering_noise: 0.2,
            deposit: 1.0,
            evaporation: 0.01,
            trail_gain: 1.0,
            trail_half_saturation: 5.0,
            agar_comfort: 1.0,
        }
    }
}

/// Stimulus-field constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldParams {
    /// Cells per mm.
    pub grid_resolution: f64,
    /// Explicit-stencil diffusion number per tick; capped at 0.25.
    pub diffusion: f64,
    /// Fraction of attractant lost per tick.
    pub attractant_decay: f64,
    /// Ticks until a 2 ml blob at full moisture stops being viable.
    pub desiccation_horizon_ticks: f64,
    /// Blob volume (ml) the horizon refers to; larger blobs last longer.
    pub reference_volume: f64,
    pub viability_threshold: f64,
    /// Distance (mm) at which LED intensity halves.
    pub light_softening: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        FieldParams {
            grid_resolution: 1.0,
            diffusion: 0.2,
            attractant_decay: 0.002,
            desiccation_horizon_ticks: 5760.0,
            reference_volume: 2.0,
            viability_threshold: 0.2,
            light_softening: 6.0,
        }
    }
}

/// Withdrawal, fragmentation and the residue left on abandoned trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Withdrawal {
    /// Ticks between the light switching on and the first agent leaving.
    pub reaction_latency: u64,
    /// Per-tick probability that an agent under light starts streaming back.
    pub release_rate: f64,
    pub fragmentation_probability: f64,
    /// Repulsion left on withdrawn trail cells.
    pub residue_strength: f64,
    /// Occupancy (fraction of mass) below which withdrawal is complete.
    pub complete_below: f64,
}

impl Default for Withdrawal {
    fn default() -> Self {
        Withdrawal {
            reaction_latency: 120,
            release_rate: 0.0095,
            fragmentation_probability: 0.15,
            residue_strength: 50.0,
            complete_below: 0.05,
        }
    }
}

/// Electrical scale of the plasmodial network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Electrical {
    /// Resistance of a canonical tube across a 10 mm gap, ohms.
    pub tube_resistance: f64,
    /// Mean trail strength of that canonical tube.
    pub canonical_tube_trail: f64,
    /// Trail level above which a cell is part of a tube.
    pub trail_threshold: f64,
    /// Supply voltage above which morphology changes.
    pub overvoltage_threshold: f64,
    pub overvoltage_deposit_gain: f64,
    pub overvoltage_noise_gain: f64,
    /// Width, in cells, of the plasmodium carried by one tubule. A wider
    /// strand counts as several tubules in parallel.
    pub tubule_width: f64,
}

impl Default for Electrical {
    fn default() -> Self {
        Electrical {
            tube_resistance: 5_000.0,
            canonical_tube_trail: 20.0,
            trail_threshold: 5.0,
            overvoltage_threshold: 12.0,
            overvoltage_deposit_gain: 3.0,
            overvoltage_noise_gain: 3.0,
            tubule_width: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Calibration {
    pub phobia: PhobiaTable,
    pub reluctance: Reluctance,
    pub swarm: Swarm,
    pub fields: FieldParams,
    pub withdrawal: Withdrawal,
    pub electrical: Electrical,
}

impl Calibration {
    /// Broken invariants, empty when the calibration is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.phobia.anchors.is_empty() {
            out.push("phobia table has no anchors".to_string());
        }
        for a in &self.phobia.anchors {
            if !(a.weight > 0.0) {
                out.push(format!("phobia weight at {} nm must be positive", a.wavelength));
            }
        }
        let probs = [
            ("dwell_move_probability", self.reluctance.dwell_move_probability),
            ("feeding_fraction", self.reluctance.feeding_fraction),
            ("fragmentation_probability", self.withdrawal.fragmentation_probability),
            ("release_rate", self.withdrawal.release_rate),
            ("complete_below", self.withdrawal.complete_below),
            ("evaporation", self.swarm.evaporation),
            ("attractant_decay", self.fields.attractant_decay),
            ("viability_threshold", self.fields.viability_threshold),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                out.push(format!("{name} must lie in [0, 1]"));
            }
        }
        let positive = [
            ("dwell_median_ticks", self.reluctance.dwell_median_ticks),
            ("hunger_ramp_ticks", self.reluctance.hunger_ramp_ticks),
            ("attraction_half_saturation", self.reluctance.attraction_half_saturation),
            ("step_length", self.swarm.step_length),
            ("trail_half_saturation", self.swarm.trail_half_saturation),
            ("grid_resolution", self.fields.grid_resolution),
            ("desiccation_horizon_ticks", self.fields.desiccation_horizon_ticks),
            ("reference_volume", self.fields.reference_volume),
            ("light_softening", self.fields.light_softening),
            ("tube_resistance", self.electrical.tube_resistance),
            ("canonical_tube_trail", self.electrical.canonical_tube_trail),
            ("trail_threshold", self.electrical.trail_threshold),
            ("tubule_width", self.electrical.tubule_width),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                out.push(format!("{name} must be positive"));
            }
        }
        if self.swarm.agents == 0 {
            out.push("swarm must have at least one agent".to_string());
        }
        if !(self.reluctance.dwell_sigma >= 0.0) {
            out.push("dwell_sigma must be non-negative".to_string());
        }
        if self.fields.viability_threshold == 0.0 {
            out.push("viability_threshold must be positive".to_string());
        }
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calibration always serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::from_toml(text, e))
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{BLUE_NM, GREEN_NM, RED_NM, YELLOW_NM};

    #[test]
    fn default_is_valid() {
        assert!(Calibration::default().violations().is_empty());
    }

    #[test]
    fn toml_round_trip() {
        let c = Calibration::default();
        let back = Calibration::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
    }

    #[test]
    fn interpolation_and_clamping() {
        let t = PhobiaTable::default();
        assert_eq!(t.weight(300.0), t.weight(BLUE_NM));
        assert_eq!(t.weight(900.0), t.weight(RED_NM));
        let mid = t.weight(0.5 * (GREEN_NM + YELLOW_NM));
        assert!((mid - 0.5 * (t.weight(GREEN_NM) + t.weight(YELLOW_NM))).abs() < 1e-15);
    }
}
