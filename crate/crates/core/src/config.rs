//! Text format for scenes.
//!
//! A scene document is TOML: a few top-level keys plus one `[[electrode]]`,
//! `[[agar]]`, `[[attractant]]`, `[[barrier]]` or `[[led]]` block per object.
//! Lengths are in mm, wavelengths in nm, luminosity in mcd.
//!
//! ```toml
//! dish_diameter = 90.0
//! time_scale = 1.0
//!
//! [[electrode]]
//! id = "X"
//! x = -10.0
//! y = 0.0
//! width = 10.0
//! height = 10.0
//!
//! [[led]]
//! id = "A1"
//! x = 10.0
//! y = 0.0
//! wavelength = 568.0
//! luminosity = 200.0
//! channel = "A"
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, Segment};
use crate::scene::{validate_scene, AgarBlob, AttractantSource, Barrier, Electrode, Led, Scene, Violation};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("scene is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

impl ConfigError {
    pub(crate) fn from_toml(text: &str, err: toml::de::Error) -> Self {
        let (line, column) = match err.span() {
            Some(span) => line_col(text, span.start),
            None => (1, 1),
        };
        ConfigError::Parse { line, column, message: err.message().to_string() }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

fn default_time_scale() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    dish_diameter: f64,
    #[serde(default = "default_time_scale")]
    time_scale: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    electrode: Vec<ElectrodeDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    agar: Vec<AgarDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    attractant: Vec<AttractantDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    barrier: Vec<BarrierDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    led: Vec<LedDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElectrodeDoc {
    id: String,
    x: f64,
    y: f64,
    width: f64,
    height: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgarDoc {
    x: f64,
    y: f64,
    radius: f64,
    volume: f64,
    resistance: f64,
    moisture: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttractantDoc {
    x: f64,
    y: f64,
    strength: f64,
    kind: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BarrierDoc {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    gap_height: f64,
    light_transmission: f64,
    passable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LedDoc {
    id: String,
    x: f64,
    y: f64,
    wavelength: f64,
    luminosity: f64,
    channel: String,
}

impl From<SceneDoc> for Scene {
    fn from(d: SceneDoc) -> Self {
        Scene {
            dish_diameter: d.dish_diameter,
            time_scale: d.time_scale,
            electrodes: d
                .electrode
                .into_iter()
                .map(|e| Electrode { id: e.id, center: Point::new(e.x, e.y), width: e.width, height: e.height })
                .collect(),
            agar_blobs: d
                .agar
                .into_iter()
                .map(|a| AgarBlob {
                    center: Point::new(a.x, a.y),
                    radius: a.radius,
                    volume: a.volume,
                    resistance: a.resistance,
                    initial_moisture: a.moisture,
                })
                .collect(),
            attractants: d
                .attractant
                .into_iter()
                .map(|a| AttractantSource { center: Point::new(a.x, a.y), strength: a.strength, kind: a.kind })
                .collect(),
            barriers: d
                .barrier
                .into_iter()
                .map(|b| Barrier {
                    segment: Segment::new(Point::new(b.x1, b.y1), Point::new(b.x2, b.y2)),
                    gap_height: b.gap_height,
                    light_transmission: b.light_transmission,
                    passable_by_plasmodium: b.passable,
                })
                .collect(),
            leds: d
                .led
                .into_iter()
                .map(|l| Led {
                    id: l.id,
                    position: Point::new(l.x, l.y),
                    wavelength: l.wavelength,
                    luminosity: l.luminosity,
                    channel: l.channel,
                })
                .collect(),
        }
    }
}

impl From<&Scene> for SceneDoc {
    fn from(s: &Scene) -> Self {
        SceneDoc {
            dish_diameter: s.dish_diameter,
            time_scale: s.time_scale,
            electrode: s
                .electrodes
                .iter()
                .map(|e| ElectrodeDoc { id: e.id.clone(), x: e.center.x, y: e.center.y, width: e.width, height: e.height })
                .collect(),
            agar: s
                .agar_blobs
                .iter()
                .map(|a| AgarDoc {
                    x: a.center.x,
                    y: a.center.y,
                    radius: a.radius,
                    volume: a.volume,
                    resistance: a.resistance,
                    moisture: a.initial_moisture,
                })
                .collect(),
            attractant: s
                .attractants
                .iter()
                .map(|a| AttractantDoc { x: a.center.x, y: a.center.y, strength: a.strength, kind: a.kind.clone() })
                .collect(),
            barrier: s
                .barriers
                .iter()
                .map(|b| BarrierDoc {
                    x1: b.segment.a.x,
                    y1: b.segment.a.y,
                    x2: b.segment.b.x,
                    y2: b.segment.b.y,
                    gap_height: b.gap_height,
                    light_transmission: b.light_transmission,
                    passable: b.passable_by_plasmodium,
                })
                .collect(),
            led: s
                .leds
                .iter()
                .map(|l| LedDoc {
                    id: l.id.clone(),
                    x: l.position.x,
                    y: l.position.y,
                    wavelength: l.wavelength,
                    luminosity: l.luminosity,
                    channel: l.channel.clone(),
                })
                .collect(),
        }
    }
}

/// Parses and validates a scene document.
pub fn scene_from_config(text: &str) -> Result<Scene, ConfigError> {
    let doc: SceneDoc = toml::from_str(text).map_err(|e| ConfigError::from_toml(text, e))?;
    let scene = Scene::from(doc);
    let violations = validate_scene(&scene);
    if violations.is_empty() {
        Ok(scene)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

/// Writes a scene document with objects in canonical order.
pub fn emit_config(scene: &Scene) -> String {
    let mut sorted = scene.clone();
    sorted.canonicalize();
    toml::to_string(&SceneDoc::from(&sorted)).expect("scene documents always serialise")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{build_pnand, build_pnot};

    #[test]
    fn empty_document_is_a_parse_error() {
        match scene_from_config("") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn reads_dish_and_electrode_gap() {
        let text = r#"
dish_diameter = 90.0

[[electrode]]
id = "X"
x = -10.0
y = 0.0
width = 10.0
height = 10.0

[[electrode]]
id = "Y"
x = 10.0
y = 0.0
width = 10.0
height = 10.0

[[led]]
id = "A1"
x = 10.0
y = 0.0
wavelength = 568
luminosity = 200.0
channel = "A"
"#;
        let scene = scene_from_config(text).unwrap();
        assert_eq!(scene.dish_diameter, 90.0);
        let (x, y) = (scene.electrode("X").unwrap(), scene.electrode("Y").unwrap());
        let gap = (y.footprint().min().x - x.footprint().max().x).abs();
        assert_eq!(gap, 10.0);
        assert_eq!(scene.leds[0].wavelength, 568.0);
    }

    #[test]
    fn error_location_points_at_bad_field() {
        let text = "dish_diameter = 90.0\n\n[[electrode]]\nid = \"X\"\nx = \"left\"\n";
        match scene_from_config(text) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(scene_from_config("dish_diameter = 90.0\ncolour = 3\n"), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn invalid_scene_reports_violations() {
        let text = "dish_diameter = 90.0\ntime_scale = -1.0\n";
        match scene_from_config(text) {
            Err(ConfigError::Invalid(v)) => assert_eq!(v.len(), 1),
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn builder_scenes_round_trip() {
        for scene in [build_pnot(10.0, 9.0).scene, build_pnand(10.0, 9.0).scene] {
            let text = emit_config(&scene);
            let back = scene_from_config(&text).unwrap();
            let mut canon = scene.clone();
            canon.canonicalize();
            assert_eq!(back, canon);
            assert_eq!(emit_config(&back), text);
        }
    }
}
