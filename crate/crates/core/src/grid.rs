//! Regular square grid covering the dish, and the static rasterisation of a
//! scene onto it.

use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Segment};
use crate::scene::Scene;

/// Shape of every field grid over a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Edge length of one cell in mm.
    pub cell_size: f64,
    /// Lower-left corner of cell (0, 0).
    pub origin: Point,
}

impl GridSpec {
    /// Smallest grid of `resolution` cells per mm covering the dish.
    pub fn for_scene(scene: &Scene, resolution: f64) -> Self {
        let cell_size = 1.0 / resolution;
        let n = (scene.dish_diameter / cell_size).ceil().max(1.0) as usize;
        let half = n as f64 * cell_size / 2.0;
        GridSpec { width: n, height: n, cell_size, origin: Point::new(-half, -half) }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn col_row(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    pub fn center(&self, idx: usize) -> Point {
        let (c, r) = self.col_row(idx);
        Point::new(
            self.origin.x + (c as f64 + 0.5) * self.cell_size,
            self.origin.y + (r as f64 + 0.5) * self.cell_size,
        )
    }

    /// Cell containing `p`, or `None` outside the grid.
    #[inline]
    pub fn cell_of(&self, p: Point) -> Option<usize> {
        let fx = (p.x - self.origin.x) / self.cell_size;
        let fy = (p.y - self.origin.y) / self.cell_size;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (c, r) = (fx as usize, fy as usize);
        (c < self.width && r < self.height).then(|| self.index(c, r))
    }

    /// The eight neighbours of a cell that fall inside the grid.
    pub fn neighbours8(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (c, r) = self.col_row(idx);
        let (c, r) = (c as isize, r as isize);
        const D: [(isize, isize); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];
        D.iter().filter_map(move |(dc, dr)| {
            let (nc, nr) = (c + dc, r + dr);
            (nc >= 0 && nr >= 0 && (nc as usize) < self.width && (nr as usize) < self.height)
                .then(|| self.index(nc as usize, nr as usize))
        })
    }
}

/// Static per-cell classification of a scene.
#[derive(Debug, Clone)]
pub struct Raster {
    pub spec: GridSpec,
    pub in_dish: Vec<bool>,
    /// Index of the agar blob covering each cell.
    pub blob: Vec<Option<u16>>,
    /// Index of the electrode whose footprint covers each cell.
    pub electrode: Vec<Option<u16>>,
    /// Cells of each blob, per blob index.
    pub blob_cells: Vec<Vec<usize>>,
    /// Cells of each electrode footprint, per electrode index.
    pub footprint_cells: Vec<Vec<usize>>,
    /// Blob indices that hold at least one attractant source.
    pub food_blob: Vec<bool>,
    impassable: Vec<Segment>,
}

impl Raster {
    pub fn new(scene: &Scene, spec: GridSpec) -> Self {
        let n = spec.len();
        let mut in_dish = vec![false; n];
        let mut blob = vec![None; n];
        let mut electrode = vec![None; n];
        let mut blob_cells = vec![Vec::new(); scene.agar_blobs.len()];
        let mut footprint_cells = vec![Vec::new(); scene.electrodes.len()];
        for idx in 0..n {
            let p = spec.center(idx);
            if !scene.in_dish(p) {
                continue;
            }
            in_dish[idx] = true;
            if let Some(b) = scene.agar_blobs.iter().position(|b| b.contains(p)) {
                blob[idx] = Some(b as u16);
                blob_cells[b].push(idx);
            }
            if let Some(e) = scene.electrodes.iter().position(|e| e.footprint().contains(p)) {
                electrode[idx] = Some(e as u16);
                footprint_cells[e].push(idx);
            }
        }
        let food_blob = scene
            .agar_blobs
            .iter()
            .map(|b| scene.attractants.iter().any(|a| b.contains(a.center) && a.strength > 0.0))
            .collect();
        let impassable = scene
            .barriers
            .iter()
            .filter(|b| !b.passable_by_plasmodium)
            .map(|b| b.segment)
            .collect();
        Raster { spec, in_dish, blob, electrode, blob_cells, footprint_cells, food_blob, impassable }
    }

    /// Whether a straight move between two points crosses an impassable barrier.
    pub fn blocked(&self, from: Point, to: Point) -> bool {
        self.impassable.iter().any(|s| crate::geometry::segments_intersect(from, to, s.a, s.b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_lookup_matches_centre() {
        let spec = GridSpec::for_scene(&Scene::default(), 1.0);
        assert_eq!(spec.width, 90);
        for idx in [0, 45, 4049, spec.len() - 1] {
            assert_eq!(spec.cell_of(spec.center(idx)), Some(idx));
        }
        assert_eq!(spec.cell_of(Point::new(-46.0, 0.0)), None);
        assert_eq!(spec.cell_of(Point::new(45.0, 0.0)), None);
    }

    #[test]
    fn corner_has_three_neighbours() {
        let spec = GridSpec::for_scene(&Scene::default(), 1.0);
        assert_eq!(spec.neighbours8(0).count(), 3);
        assert_eq!(spec.neighbours8(spec.index(5, 5)).count(), 8);
    }
}
