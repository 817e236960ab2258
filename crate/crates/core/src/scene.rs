//! Declarative description of the experimental arena.
//!
//! A [`Scene`] is a flat collection of placed objects inside a circular dish
//! centred on the origin. Scenes are plain values: they are never mutated
//! once a simulation has been prepared from them.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Rect, Segment};

/// Channel label for LEDs that are lit regardless of gate inputs.
pub const ALWAYS_ON: &str = "on";
/// Channel label for LEDs that never light.
pub const ALWAYS_OFF: &str = "off";

/// Canonical blue, green, yellow and red LED wavelengths in nm.
pub const BLUE_NM: f64 = 466.0;
pub const GREEN_NM: f64 = 568.0;
pub const YELLOW_NM: f64 = 585.0;
pub const RED_NM: f64 = 626.0;

/// Electrical resistance of one agar blob.
pub const AGAR_BLOB_OHMS: f64 = 18_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Electrode {
    pub id: String,
    pub center: Point,
    pub width: f64,
    pub height: f64,
}

impl Electrode {
    pub fn footprint(&self) -> Rect {
        Rect { center: self.center, width: self.width, height: self.height }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgarBlob {
    pub center: Point,
    pub radius: f64,
    /// Millilitres.
    pub volume: f64,
    /// Ohms.
    pub resistance: f64,
    pub initial_moisture: f64,
}

impl AgarBlob {
    pub fn contains(&self, p: Point) -> bool {
        self.center.distance(p) <= self.radius
    }

    pub fn overlaps(&self, rect: &Rect) -> bool {
        rect.distance_to(self.center) < self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractantSource {
    pub center: Point,
    /// Concentration units emitted per tick.
    pub strength: f64,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Barrier {
    pub segment: Segment,
    pub gap_height: f64,
    pub light_transmission: f64,
    pub passable_by_plasmodium: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Led {
    pub id: String,
    pub position: Point,
    /// Nanometres.
    pub wavelength: f64,
    /// Millicandela.
    pub luminosity: f64,
    pub channel: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    /// Millimetres.
    pub dish_diameter: f64,
    pub electrodes: Vec<Electrode>,
    pub agar_blobs: Vec<AgarBlob>,
    pub attractants: Vec<AttractantSource>,
    pub barriers: Vec<Barrier>,
    pub leds: Vec<Led>,
    /// Simulated minutes per tick.
    pub time_scale: f64,
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            dish_diameter: 90.0,
            electrodes: Vec::new(),
            agar_blobs: Vec::new(),
            attractants: Vec::new(),
            barriers: Vec::new(),
            leds: Vec::new(),
            time_scale: 1.0,
        }
    }
}

/// One broken invariant, naming the offending object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub object: String,
    pub invariant: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.object, self.invariant)
    }
}

fn violation(object: impl Into<String>, invariant: impl Into<String>) -> Violation {
    Violation { object: object.into(), invariant: invariant.into() }
}

impl Scene {
    pub fn dish_radius(&self) -> f64 {
        self.dish_diameter / 2.0
    }

    pub fn in_dish(&self, p: Point) -> bool {
        let r = self.dish_radius();
        p.x * p.x + p.y * p.y <= r * r
    }

    pub fn electrode(&self, id: &str) -> Option<&Electrode> {
        self.electrodes.iter().find(|e| e.id == id)
    }

    /// Index of the agar blob sitting on the given electrode, if any.
    pub fn blob_on_electrode(&self, id: &str) -> Option<usize> {
        let e = self.electrode(id)?;
        let fp = e.footprint();
        self.agar_blobs.iter().position(|b| b.overlaps(&fp))
    }

    /// Distinct input channels the LEDs are bound to, excluding constants.
    pub fn input_channels(&self) -> BTreeSet<String> {
        self.leds
            .iter()
            .filter(|l| l.channel != ALWAYS_ON && l.channel != ALWAYS_OFF)
            .map(|l| l.channel.clone())
            .collect()
    }

    /// Sorts every object list into the order used by [`emit_config`].
    pub fn canonicalize(&mut self) {
        let key = |p: &Point| (p.x, p.y);
        self.electrodes.sort_by(|a, b| a.id.cmp(&b.id));
        self.agar_blobs
            .sort_by(|a, b| key(&a.center).partial_cmp(&key(&b.center)).unwrap_or(std::cmp::Ordering::Equal));
        self.attractants
            .sort_by(|a, b| key(&a.center).partial_cmp(&key(&b.center)).unwrap_or(std::cmp::Ordering::Equal));
        self.barriers.sort_by(|a, b| {
            (key(&a.segment.a), key(&a.segment.b))
                .partial_cmp(&(key(&b.segment.a), key(&b.segment.b)))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        self.leds.sort_by(|a, b| a.id.cmp(&b.id));
    }
}

/// Checks every scene invariant. An empty result means the scene is valid.
pub fn validate_scene(scene: &Scene) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(scene.dish_diameter > 0.0) {
        out.push(violation("dish", "diameter must be positive"));
    }
    if !(scene.time_scale > 0.0) {
        out.push(violation("scene", "time_scale must be positive"));
    }

    let mut seen = BTreeSet::new();
    for e in &scene.electrodes {
        let name = format!("electrode {}", e.id);
        if !seen.insert(e.id.as_str()) {
            out.push(violation(&name, "identifier is not unique"));
        }
        if !(e.footprint().area() > 0.0) {
            out.push(violation(&name, "footprint area must be positive"));
        }
        if e.footprint().corners().iter().any(|c| !scene.in_dish(*c)) {
            out.push(violation(&name, "lies outside the dish"));
        }
    }

    for (i, b) in scene.agar_blobs.iter().enumerate() {
        let name = format!("agar #{i}");
        if !(b.radius > 0.0) {
            out.push(violation(&name, "radius must be positive"));
        }
        if !(b.resistance > 0.0) {
            out.push(violation(&name, "resistance must be positive"));
        }
        if !(0.0..=1.0).contains(&b.initial_moisture) {
            out.push(violation(&name, "initial moisture must lie in [0, 1]"));
        }
        if !(b.volume > 0.0) {
            out.push(violation(&name, "volume must be positive"));
        }
        if b.center.norm() + b.radius > scene.dish_radius() {
            out.push(violation(&name, "lies outside the dish"));
        }
        let overlapping = scene.electrodes.iter().filter(|e| b.overlaps(&e.footprint())).count();
        if overlapping > 1 {
            out.push(violation(&name, format!("overlaps {overlapping} electrodes (at most one allowed)")));
        }
    }

    for (i, a) in scene.attractants.iter().enumerate() {
        let name = format!("attractant #{i}");
        if !(a.strength >= 0.0) {
            out.push(violation(&name, "strength must be non-negative"));
        }
        if !scene.in_dish(a.center) {
            out.push(violation(&name, "lies outside the dish"));
        }
    }

    for (i, b) in scene.barriers.iter().enumerate() {
        let name = format!("barrier #{i}");
        if !(0.0..=1.0).contains(&b.light_transmission) {
            out.push(violation(&name, "light transmission must lie in [0, 1]"));
        }
        if !(b.gap_height >= 0.0) {
            out.push(violation(&name, "gap height must be non-negative"));
        }
        if !scene.in_dish(b.segment.a) || !scene.in_dish(b.segment.b) {
            out.push(violation(&name, "lies outside the dish"));
        }
    }

    let mut seen_leds = BTreeSet::new();
    for l in &scene.leds {
        let name = format!("led {}", l.id);
        if !seen_leds.insert(l.id.as_str()) {
            out.push(violation(&name, "identifier is not unique"));
        }
        if !(l.wavelength > 0.0) {
            out.push(violation(&name, "wavelength must be positive"));
        }
        if !(l.luminosity > 0.0) {
            out.push(violation(&name, "luminosity must be positive"));
        }
        if !scene.in_dish(l.position) {
            out.push(violation(&name, "lies outside the dish"));
        }
        if l.channel.is_empty() {
            out.push(violation(&name, "channel label is empty"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::build_pnot;

    fn electrode(id: &str, x: f64) -> Electrode {
        Electrode { id: id.into(), center: Point::new(x, 0.0), width: 10.0, height: 10.0 }
    }

    #[test]
    fn electrode_outside_dish_is_named() {
        let scene = Scene { electrodes: vec![electrode("X", 0.0), electrode("far", 60.0)], ..Scene::default() };
        let v = validate_scene(&scene);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].object, "electrode far");
    }

    #[test]
    fn canonical_pnot_is_valid() {
        assert!(validate_scene(&build_pnot(10.0, 9.0).scene).is_empty());
    }

    #[test]
    fn duplicate_electrode_ids() {
        let scene = Scene { electrodes: vec![electrode("X", -15.0), electrode("X", 15.0)], ..Scene::default() };
        let v = validate_scene(&scene);
        assert!(v.iter().any(|v| v.invariant.contains("not unique")), "{v:?}");
    }

    #[test]
    fn blob_bridging_two_electrodes() {
        let scene = Scene {
            electrodes: vec![electrode("X", -6.0), electrode("Y", 6.0)],
            agar_blobs: vec![AgarBlob {
                center: Point::new(0.0, 0.0),
                radius: 5.0,
                volume: 2.0,
                resistance: AGAR_BLOB_OHMS,
                initial_moisture: 1.0,
            }],
            ..Scene::default()
        };
        let v = validate_scene(&scene);
        assert!(v.iter().any(|v| v.invariant.contains("overlaps 2")), "{v:?}");
    }

    #[test]
    fn bad_scalar_fields() {
        let scene = Scene {
            time_scale: 0.0,
            agar_blobs: vec![AgarBlob {
                center: Point::default(),
                radius: 3.0,
                volume: 1.0,
                resistance: -1.0,
                initial_moisture: 1.5,
            }],
            barriers: vec![Barrier {
                segment: Segment::new(Point::new(0.0, 0.0), Point::new(1.0, 0.0)),
                gap_height: 0.5,
                light_transmission: 2.0,
                passable_by_plasmodium: true,
            }],
            ..Scene::default()
        };
        assert_eq!(validate_scene(&scene).len(), 4);
    }

    #[test]
    fn validate_is_total_on_nan() {
        let scene = Scene { dish_diameter: f64::NAN, ..Scene::default() };
        assert!(!validate_scene(&scene).is_empty());
    }
}
