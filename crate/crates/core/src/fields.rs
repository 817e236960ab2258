//! Chemoattractant, LED irradiance and moisture fields over the dish grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calibration::{Calibration, FieldParams, PhobiaTable};
use crate::geometry::{segments_intersect, Point};
use crate::grid::{GridSpec, Raster};
use crate::scene::{Led, Scene, ALWAYS_OFF, ALWAYS_ON};

/// Irradiance contributed by one LED, in mcd-equivalent units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedGrid {
    pub led_id: String,
    pub wavelength: f64,
    pub on: bool,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StimulusFields {
    pub spec: GridSpec,
    pub attractant: Vec<f64>,
    pub irradiance: Vec<LedGrid>,
    pub moisture: Vec<f64>,
    /// Ticks of desiccation applied so far.
    pub elapsed: u64,
    blob_moisture: Vec<f64>,
    blob_rate: Vec<f64>,
    /// Full-brightness grid of every LED, in scene order.
    led_full: Vec<Vec<f64>>,
    phobia: PhobiaTable,
    half_saturation: f64,
    repulsion: Vec<f64>,
    appetite: Vec<f64>,
}

/// Mass accounting for one attractant update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassBudget {
    pub before: f64,
    pub emitted: f64,
    pub decayed: f64,
    pub after: f64,
}

impl MassBudget {
    /// Relative error of `after` against `before + emitted − decayed`.
    pub fn imbalance(&self) -> f64 {
        let expected = self.before + self.emitted - self.decayed;
        (self.after - expected).abs() / expected.abs().max(1e-300)
    }
}

/// Per-tick decay rate for a blob: a fully hydrated blob stays viable up to
/// tick `horizon − 1` and is below the threshold from `horizon` onwards.
pub fn desiccation_rate(horizon_ticks: f64, viability_threshold: f64) -> f64 {
    (1.0 / viability_threshold).ln() / (horizon_ticks - 0.5).max(0.5)
}

impl StimulusFields {
    /// Zero attractant, all LEDs dark, blobs at their initial moisture.
    pub fn new(scene: &Scene, raster: &Raster, cal: &Calibration) -> Self {
        let params = &cal.fields;
        let spec = raster.spec;
        let mut moisture = vec![0.0; spec.len()];
        let mut blob_moisture = Vec::with_capacity(scene.agar_blobs.len());
        let mut blob_rate = Vec::with_capacity(scene.agar_blobs.len());
        for (b, blob) in scene.agar_blobs.iter().enumerate() {
            for &idx in &raster.blob_cells[b] {
                moisture[idx] = blob.initial_moisture;
            }
            blob_moisture.push(blob.initial_moisture);
            let horizon = params.desiccation_horizon_ticks * blob.volume / params.reference_volume;
            blob_rate.push(desiccation_rate(horizon, params.viability_threshold));
        }
        let irradiance = scene
            .leds
            .iter()
            .map(|l| LedGrid { led_id: l.id.clone(), wavelength: l.wavelength, on: false, values: vec![0.0; spec.len()] })
            .collect();
        let led_full = scene.leds.iter().map(|l| led_irradiance(scene, &spec, l, params)).collect();
        StimulusFields {
            spec,
            attractant: vec![0.0; spec.len()],
            irradiance,
            moisture,
            elapsed: 0,
            blob_moisture,
            blob_rate,
            led_full,
            phobia: cal.phobia.clone(),
            half_saturation: cal.reluctance.attraction_half_saturation,
            repulsion: vec![0.0; spec.len()],
            appetite: vec![0.0; spec.len()],
        }
    }

    /// Switches LEDs to match the channel states and refreshes repulsion.
    pub fn set_led_states(&mut self, scene: &Scene, led_states: &BTreeMap<String, bool>) {
        for ((grid, led), full) in self.irradiance.iter_mut().zip(&scene.leds).zip(&self.led_full) {
            let on = led_is_on(led, led_states);
            if on != grid.on {
                grid.on = on;
                if on {
                    grid.values.copy_from_slice(full);
                } else {
                    grid.values.iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
        self.repulsion = self.compute_repulsion();
    }

    /// Σ phobia weight · irradiance over lit LEDs, per cell.
    pub fn repulsion(&self) -> &[f64] {
        &self.repulsion
    }

    /// Saturating attractant response A / (A + K), per cell.
    pub fn appetite(&self) -> &[f64] {
        &self.appetite
    }

    fn refresh_appetite(&mut self) {
        let k = self.half_saturation;
        for (o, &a) in self.appetite.iter_mut().zip(&self.attractant) {
            *o = a / (a + k);
        }
    }

    pub fn attractant_mass(&self) -> f64 {
        self.attractant.iter().sum()
    }

    /// Current moisture of blob `b`.
    pub fn blob_moisture(&self, b: usize) -> f64 {
        self.blob_moisture[b]
    }

    /// Advances the attractant by `dt` steps of emission, diffusion and decay.
    ///
    /// Diffusion is a 5-point explicit stencil with no-flux dish walls, so the
    /// only mass changes are emission and decay.
    pub fn diffuse_attractant(&mut self, scene: &Scene, raster: &Raster, dt: u64, params: &FieldParams) -> MassBudget {
        let before = self.attractant_mass();
        let mut emitted = 0.0;
        let mut decayed = 0.0;
        let d = params.diffusion.clamp(0.0, 0.25);
        let k = params.attractant_decay;
        let sources: Vec<(usize, f64)> = scene
            .attractants
            .iter()
            .filter_map(|a| raster.spec.cell_of(a.center).filter(|&c| raster.in_dish[c]).map(|c| (c, a.strength)))
            .collect();
        let mut scratch = vec![0.0; self.attractant.len()];
        for _ in 0..dt {
            for &(c, s) in &sources {
                self.attractant[c] += s;
                emitted += s;
            }
            diffusion_step(&self.attractant, &mut scratch, raster, d);
            let mut lost = 0.0;
            for (a, &v) in self.attractant.iter_mut().zip(&scratch) {
                let loss = k * v;
                lost += loss;
                *a = v - loss;
            }
            decayed += lost;
        }
        self.refresh_appetite();
        MassBudget { before, emitted, decayed, after: self.attractant_mass() }
    }

    /// Solves for the steady attractant field, the fixed point of
    /// `diffuse_attractant`, by successive over-relaxation. Stops once a sweep
    /// changes no cell by more than `rel_tol` of the field maximum and
    /// returns the number of sweeps.
    pub fn equilibrate_attractant(
        &mut self,
        scene: &Scene,
        raster: &Raster,
        params: &FieldParams,
        rel_tol: f64,
        max_sweeps: u64,
    ) -> u64 {
        let spec = raster.spec;
        let (w, h) = (spec.width, spec.height);
        let d = params.diffusion.clamp(0.0, 0.25);
        let keep = 1.0 - params.attractant_decay;
        let mut source = vec![0.0; spec.len()];
        for a in &scene.attractants {
            if let Some(c) = spec.cell_of(a.center).filter(|&c| raster.in_dish[c]) {
                source[c] += a.strength;
            }
        }
        let neighbours = |i: usize| {
            let (r, c) = (i / w, i % w);
            [
                (c > 0).then(|| i - 1),
                (c + 1 < w).then(|| i + 1),
                (r > 0).then(|| i - w),
                (r + 1 < h).then(|| i + w),
            ]
            .into_iter()
            .flatten()
            .filter(|&j| raster.in_dish[j])
        };
        let cells: Vec<usize> = (0..spec.len()).filter(|&i| raster.in_dish[i]).collect();
        for i in 0..spec.len() {
            if !raster.in_dish[i] {
                self.attractant[i] = 0.0;
            }
        }
        let omega = 1.9;
        let mut sweeps = max_sweeps;
        for sweep in 1..=max_sweeps {
            let mut delta: f64 = 0.0;
            let mut max: f64 = 0.0;
            for &i in &cells {
                let mut n = 0.0;
                let mut around = 0.0;
                for j in neighbours(i) {
                    n += 1.0;
                    around += self.attractant[j] + source[j];
                }
                let own = 1.0 - d * n;
                let target = keep * (own * source[i] + d * around) / (1.0 - keep * own);
                let old = self.attractant[i];
                let next = (old + omega * (target - old)).max(0.0);
                self.attractant[i] = next;
                delta = delta.max((next - old).abs());
                max = max.max(next);
            }
            if delta <= rel_tol * max.max(f64::MIN_POSITIVE) {
                sweeps = sweep;
                break;
            }
        }
        self.refresh_appetite();
        sweeps
    }

    /// Dries every blob by `dt` ticks. Bare plastic stays at zero.
    pub fn desiccate(&mut self, raster: &Raster, dt: u64) {
        if dt == 0 {
            return;
        }
        for (b, cells) in raster.blob_cells.iter().enumerate() {
            let factor = (-self.blob_rate[b] * dt as f64).exp();
            self.blob_moisture[b] *= factor;
            let m = self.blob_moisture[b];
            for &idx in cells {
                self.moisture[idx] = m;
            }
        }
        self.elapsed += dt;
    }

    fn compute_repulsion(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.len()];
        for g in self.irradiance.iter().filter(|g| g.on) {
            let w = self.phobia.weight(g.wavelength);
            for (o, &v) in out.iter_mut().zip(&g.values) {
                *o += w * v;
            }
        }
        out
    }
}

fn diffusion_step(src: &[f64], dst: &mut [f64], raster: &Raster, d: f64) {
    let spec = raster.spec;
    let (w, h) = (spec.width, spec.height);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !raster.in_dish[i] {
                dst[i] = 0.0;
                continue;
            }
            let v = src[i];
            let mut flux = 0.0;
            if c > 0 && raster.in_dish[i - 1] {
                flux += src[i - 1] - v;
            }
            if c + 1 < w && raster.in_dish[i + 1] {
                flux += src[i + 1] - v;
            }
            if r > 0 && raster.in_dish[i - w] {
                flux += src[i - w] - v;
            }
            if r + 1 < h && raster.in_dish[i + w] {
                flux += src[i + w] - v;
            }
            dst[i] = v + d * flux;
        }
    }
}

/// Light falloff for a lid-mounted point source: 1 directly below it.
pub fn falloff(distance: f64, softening: f64) -> f64 {
    let q = distance / softening;
    1.0 / (1.0 + q * q)
}

/// Product of the transmissions of every barrier crossed between two points.
pub fn transmission(scene: &Scene, from: Point, to: Point) -> f64 {
    scene
        .barriers
        .iter()
        .filter(|b| segments_intersect(from, to, b.segment.a, b.segment.b))
        .map(|b| b.light_transmission)
        .product()
}

/// Full-brightness irradiance grid of one LED.
pub fn led_irradiance(scene: &Scene, spec: &GridSpec, led: &Led, params: &FieldParams) -> Vec<f64> {
    (0..spec.len())
        .map(|idx| {
            let p = spec.center(idx);
            if !scene.in_dish(p) {
                return 0.0;
            }
            led.luminosity * falloff(p.distance(led.position), params.light_softening) * transmission(scene, led.position, p)
        })
        .collect()
}

/// Whether an LED is lit under the given channel states. Channels missing
/// from the map are off.
pub fn led_is_on(led: &Led, led_states: &BTreeMap<String, bool>) -> bool {
    match led.channel.as_str() {
        ALWAYS_ON => true,
        ALWAYS_OFF => false,
        ch => led_states.get(ch).copied().unwrap_or(false),
    }
}

/// Per-LED irradiance grids; LEDs that are off contribute the zero grid.
pub fn compute_irradiance(
    scene: &Scene,
    spec: &GridSpec,
    led_states: &BTreeMap<String, bool>,
    params: &FieldParams,
) -> Vec<LedGrid> {
    scene
        .leds
        .iter()
        .map(|led| {
            let on = led_is_on(led, led_states);
            let values = if on { led_irradiance(scene, spec, led, params) } else { vec![0.0; spec.len()] };
            LedGrid { led_id: led.id.clone(), wavelength: led.wavelength, on, values }
        })
        .collect()
}

/// Dimensionless repellence of a wavelength under the given table.
pub fn phobia_weight(table: &PhobiaTable, wavelength: f64) -> f64 {
    table.weight(wavelength)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::Calibration;
    use crate::geometry::Segment;
    use crate::scene::{AgarBlob, AttractantSource, Barrier, BLUE_NM, GREEN_NM, RED_NM, YELLOW_NM};

    fn small_scene() -> Scene {
        Scene { dish_diameter: 16.0, ..Scene::default() }
    }

    #[test]
    fn uniform_field_without_sources_is_fixed() {
        let scene = small_scene();
        let raster = Raster::new(&scene, GridSpec::for_scene(&scene, 1.0));
        let params = FieldParams { attractant_decay: 0.0, ..FieldParams::default() };
        let mut f = StimulusFields::new(&scene, &raster, &Calibration { fields: params.clone(), ..Calibration::default() });
        for (a, &inside) in f.attractant.iter_mut().zip(&raster.in_dish) {
            *a = if inside { 3.25 } else { 0.0 };
        }
        let before = f.attractant.clone();
        f.diffuse_attractant(&scene, &raster, 10, &params);
        assert_eq!(f.attractant, before);
    }

    #[test]
    fn single_source_adds_exactly_its_strength() {
        let mut scene = small_scene();
        scene.attractants.push(AttractantSource { center: Point::new(0.2, 0.3), strength: 2.5, kind: "oat".into() });
        let raster = Raster::new(&scene, GridSpec::for_scene(&scene, 1.0));
        let params = FieldParams { attractant_decay: 0.0, ..FieldParams::default() };
        let mut f = StimulusFields::new(&scene, &raster, &Calibration { fields: params.clone(), ..Calibration::default() });
        let b = f.diffuse_attractant(&scene, &raster, 1, &params);
        assert_eq!(b.emitted, 2.5);
        assert!((b.after - 2.5).abs() < 1e-12);
        let b = f.diffuse_attractant(&scene, &raster, 3, &params);
        assert!((b.after - b.before - 7.5).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_is_a_fixed_point_of_diffusion() {
        let mut scene = Scene::default();
        scene.attractants.push(AttractantSource { center: Point::new(12.0, -4.0), strength: 1.0, kind: "oat".into() });
        let raster = Raster::new(&scene, GridSpec::for_scene(&scene, 1.0));
        let cal = Calibration::default();
        let mut f = StimulusFields::new(&scene, &raster, &cal);
        let sweeps = f.equilibrate_attractant(&scene, &raster, &cal.fields, 1e-13, 100_000);
        assert!(sweeps < 100_000);
        let settled = f.attractant.clone();
        let max = settled.iter().cloned().fold(0.0, f64::max);
        f.diffuse_attractant(&scene, &raster, 1, &cal.fields);
        for (a, b) in f.attractant.iter().zip(&settled) {
            assert!((a - b).abs() <= 1e-9 * max, "{a} vs {b}");
        }
    }

    #[test]
    fn decay_is_accounted() {
        let mut scene = small_scene();
        scene.attractants.push(AttractantSource { center: Point::new(-3.0, 1.0), strength: 1.0, kind: "oat".into() });
        let raster = Raster::new(&scene, GridSpec::for_scene(&scene, 1.0));
        let params = FieldParams::default();
        let mut f = StimulusFields::new(&scene, &raster, &Calibration { fields: params.clone(), ..Calibration::default() });
        let b = f.diffuse_attractant(&scene, &raster, 50, &params);
        assert!(b.imbalance() < 1e-9, "{b:?}");
        assert!(b.decayed > 0.0);
    }

    #[test]
    fn dark_leds_give_zero_grids() {
        let cal = Calibration::default();
        let scene = crate::gates::build_pnand(10.0, 9.0).scene;
        let spec = GridSpec::for_scene(&scene, 1.0);
        let grids = compute_irradiance(&scene, &spec, &BTreeMap::new(), &cal.fields);
        assert_eq!(grids.len(), scene.leds.len());
        assert!(grids.iter().all(|g| !g.on && g.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn intensity_under_led_is_luminosity() {
        let mut scene = small_scene();
        scene.leds.push(Led {
            id: "g".into(),
            position: Point::new(0.5, 0.5),
            wavelength: GREEN_NM,
            luminosity: 180.0,
            channel: "A".into(),
        });
        let spec = GridSpec::for_scene(&scene, 1.0);
        let states = BTreeMap::from([("A".to_string(), true)]);
        let grids = compute_irradiance(&scene, &spec, &states, &FieldParams::default());
        let cell = spec.cell_of(Point::new(0.5, 0.5)).unwrap();
        assert_eq!(grids[0].values[cell], 180.0);
        assert!(grids[0].values.iter().all(|&v| (0.0..=180.0).contains(&v)));
    }

    #[test]
    fn shadowed_cell_matches_hand_computation() {
        let mut scene = small_scene();
        scene.leds.push(Led {
            id: "g".into(),
            position: Point::new(-4.5, 0.5),
            wavelength: GREEN_NM,
            luminosity: 100.0,
            channel: "on".into(),
        });
        scene.barriers.push(Barrier {
            segment: Segment::new(Point::new(0.0, -6.0), Point::new(0.0, 6.0)),
            gap_height: 0.5,
            light_transmission: 0.1,
            passable_by_plasmodium: true,
        });
        let params = FieldParams::default();
        let spec = GridSpec::for_scene(&scene, 1.0);
        let grids = compute_irradiance(&scene, &spec, &BTreeMap::new(), &params);
        let cell = spec.cell_of(Point::new(3.5, 0.5)).unwrap();
        let expected = 100.0 * 0.1 / (1.0 + (8.0f64 / params.light_softening).powi(2));
        assert!((grids[0].values[cell] - expected).abs() < 1e-12);
    }

    #[test]
    fn moisture_crosses_threshold_at_horizon() {
        let mut scene = small_scene();
        scene.agar_blobs.push(AgarBlob {
            center: Point::new(0.0, 0.0),
            radius: 3.0,
            volume: 2.0,
            resistance: 18_000.0,
            initial_moisture: 1.0,
        });
        let params = FieldParams { desiccation_horizon_ticks: 100.0, ..FieldParams::default() };
        let raster = Raster::new(&scene, GridSpec::for_scene(&scene, 1.0));
        let mut f = StimulusFields::new(&scene, &raster, &Calibration { fields: params.clone(), ..Calibration::default() });
        let agar = raster.blob_cells[0][0];
        let plastic = raster.spec.cell_of(Point::new(6.0, 0.0)).unwrap();
        f.desiccate(&raster, 0);
        assert_eq!(f.moisture[agar], 1.0);
        f.desiccate(&raster, 99);
        let closed_form = (-desiccation_rate(100.0, params.viability_threshold) * 99.0).exp();
        assert!((f.moisture[agar] - closed_form).abs() < 1e-12);
        assert!(f.moisture[agar] >= params.viability_threshold);
        f.desiccate(&raster, 1);
        assert!(f.moisture[agar] < params.viability_threshold);
        assert_eq!(f.moisture[plastic], 0.0);
    }

    #[test]
    fn phobia_order() {
        let t = PhobiaTable::default();
        let w = |nm| phobia_weight(&t, nm);
        assert!(w(GREEN_NM) > w(RED_NM) && w(RED_NM) > w(YELLOW_NM) && w(YELLOW_NM) > w(BLUE_NM) && w(BLUE_NM) > 0.0);
        assert_eq!(w(GREEN_NM), w(GREEN_NM));
        let mid = w(597.0);
        assert!(mid > w(YELLOW_NM).min(w(RED_NM)) && mid < w(YELLOW_NM).max(w(RED_NM)));
    }
}
