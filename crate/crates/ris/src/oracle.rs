//! Ground-truth machinery for verification.
//!
//! Mazes are discretized into square cells (`resolution` cells per unit,
//! a cell is free when its center is free). Shortest paths run over the
//! 8-connected free grid with cost 1 per straight move and sqrt(2) per
//! diagonal, scaled to units; diagonals may not cut wall corners. On top of
//! the distance fields sit the closed-form optimal value, the brute-force
//! subgoal midpoints, and the subgoal-error metric used to judge the
//! high-level policy.

use crate::env::{MazeSpec, StateGoal};
use crate::error::{Result, RisError};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub const DEFAULT_RESOLUTION: usize = 4;

/// Grid of shortest-path distances (in units) from a source position.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub resolution: usize,
    nx: usize,
    ny: usize,
    dist: Vec<f64>,
    free: Vec<bool>,
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    cell: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance; distances are finite non-negative here.
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Free-cell mask of a maze at a given resolution.
fn free_mask(spec: &MazeSpec, resolution: usize) -> (usize, usize, Vec<bool>) {
    let nx = (spec.bounds.0 * resolution as f64).round() as usize;
    let ny = (spec.bounds.1 * resolution as f64).round() as usize;
    let cell = 1.0 / resolution as f64;
    let mut free = vec![false; nx * ny];
    for cy in 0..ny {
        for cx in 0..nx {
            let center = ((cx as f64 + 0.5) * cell, (cy as f64 + 0.5) * cell);
            free[cy * nx + cx] = spec.is_free(center);
        }
    }
    (nx, ny, free)
}

impl DistanceField {
    pub fn cell_of(&self, p: (f64, f64)) -> (usize, usize) {
        let cx = ((p.0 * self.resolution as f64) as usize).min(self.nx - 1);
        let cy = ((p.1 * self.resolution as f64) as usize).min(self.ny - 1);
        (cx, cy)
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> (f64, f64) {
        let cell = 1.0 / self.resolution as f64;
        ((cx as f64 + 0.5) * cell, (cy as f64 + 0.5) * cell)
    }

    /// Distance in units from the source to the cell containing `p`;
    /// infinite when unreachable or inside a wall.
    pub fn distance_to(&self, p: (f64, f64)) -> f64 {
        let (cx, cy) = self.cell_of(p);
        self.dist[cy * self.nx + cx]
    }

    pub fn distance_at_cell(&self, cx: usize, cy: usize) -> f64 {
        self.dist[cy * self.nx + cx]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn is_free_cell(&self, cx: usize, cy: usize) -> bool {
        self.free[cy * self.nx + cx]
    }
}

/// Dijkstra from `source` over the free cells.
pub fn build_distance_field(
    spec: &MazeSpec,
    source: (f64, f64),
    resolution: usize,
) -> Result<DistanceField> {
    let (nx, ny, free) = free_mask(spec, resolution);
    let cell = 1.0 / resolution as f64;
    let scx = ((source.0 * resolution as f64) as usize).min(nx - 1);
    let scy = ((source.1 * resolution as f64) as usize).min(ny - 1);
    let start = scy * nx + scx;
    if !free[start] {
        return Err(RisError::Usage(format!(
            "distance-field source {source:?} lies inside a wall"
        )));
    }
    let mut dist = vec![f64::INFINITY; nx * ny];
    dist[start] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry {
        dist: 0.0,
        cell: start,
    });
    let diag = std::f64::consts::SQRT_2 * cell;
    while let Some(HeapEntry { dist: d, cell: c }) = heap.pop() {
        if d > dist[c] {
            continue;
        }
        let (cx, cy) = (c % nx, c / nx);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (tx, ty) = (cx as i64 + dx, cy as i64 + dy);
                if tx < 0 || ty < 0 || tx >= nx as i64 || ty >= ny as i64 {
                    continue;
                }
                let t = ty as usize * nx + tx as usize;
                if !free[t] {
                    continue;
                }
                // Diagonals may not squeeze between two blocked cells.
                if dx != 0 && dy != 0 {
                    let side_a = cy * nx + tx as usize;
                    let side_b = ty as usize * nx + cx;
                    if !free[side_a] || !free[side_b] {
                        continue;
                    }
                }
                let step = if dx != 0 && dy != 0 { diag } else { cell };
                let nd = d + step;
                if nd < dist[t] {
                    dist[t] = nd;
                    heap.push(HeapEntry { dist: nd, cell: t });
                }
            }
        }
    }
    Ok(DistanceField {
        resolution,
        nx,
        ny,
        dist,
        free,
    })
}

/// Value of optimal play at integer step distance `d` under -1 rewards:
/// `-(1 - gamma^d) / (1 - gamma)`.
pub fn optimal_value(d: u32, gamma: f64) -> f64 {
    -(1.0 - gamma.powi(d as i32)) / (1.0 - gamma)
}

/// Integer agent steps needed to cover `units` of path at `max_step` per
/// move (ceiling).
pub fn steps_for_distance(units: f64, max_step: f64) -> u32 {
    (units / max_step).ceil().max(0.0) as u32
}

/// All free cells minimizing `max(d(s, c), d(c, g))`, i.e. the grid-metric
/// midpoints between `s` and `g`. Returns cell centers; minimizers within
/// 1e-9 of the optimum are all included.
pub fn bruteforce_midpoint(
    spec: &MazeSpec,
    s: (f64, f64),
    g: (f64, f64),
    resolution: usize,
) -> Result<Vec<(f64, f64)>> {
    let from_s = build_distance_field(spec, s, resolution)?;
    let from_g = build_distance_field(spec, g, resolution)?;
    minimize_max_legs(&from_s, &from_g)
}

fn minimize_max_legs(from_s: &DistanceField, from_g: &DistanceField) -> Result<Vec<(f64, f64)>> {
    let (nx, ny) = from_s.dims();
    let mut best = f64::INFINITY;
    for cy in 0..ny {
        for cx in 0..nx {
            let c = from_s.distance_at_cell(cx, cy).max(from_g.distance_at_cell(cx, cy));
            if c < best {
                best = c;
            }
        }
    }
    if !best.is_finite() {
        return Err(RisError::Usage(
            "start and goal are not connected through free space".into(),
        ));
    }
    let mut out = Vec::new();
    for cy in 0..ny {
        for cx in 0..nx {
            let c = from_s.distance_at_cell(cx, cy).max(from_g.distance_at_cell(cx, cy));
            if c <= best + 1e-9 {
                out.push(from_s.cell_center(cx, cy));
            }
        }
    }
    Ok(out)
}

/// Dense all-pairs distance table over free cells. Built once per maze when
/// grid midpoints must be answered per training batch (the oracle-subgoal
/// prior) rather than per fixed pair.
pub struct MidpointTable {
    resolution: usize,
    nx: usize,
    ny: usize,
    free_index: Vec<i32>,
    free_cells: Vec<usize>,
    /// dist[i][j] over free-cell indices, stored f32 to halve the footprint.
    dist: Vec<f32>,
}

impl MidpointTable {
    pub fn build(spec: &MazeSpec, resolution: usize) -> Result<Self> {
        let (nx, ny, free) = free_mask(spec, resolution);
        let free_cells: Vec<usize> = (0..nx * ny).filter(|&i| free[i]).collect();
        let mut free_index = vec![-1i32; nx * ny];
        for (fi, &cell) in free_cells.iter().enumerate() {
            free_index[cell] = fi as i32;
        }
        let n = free_cells.len();
        if n == 0 {
            return Err(RisError::Config("maze has no free cells".into()));
        }
        let cellsz = 1.0 / resolution as f64;
        let mut dist = vec![f32::INFINITY; n * n];
        for (fi, &cell) in free_cells.iter().enumerate() {
            let (cx, cy) = (cell % nx, cell / nx);
            let center = ((cx as f64 + 0.5) * cellsz, (cy as f64 + 0.5) * cellsz);
            let field = build_distance_field(spec, center, resolution)?;
            for (fj, &other) in free_cells.iter().enumerate() {
                let (ox, oy) = (other % nx, other / nx);
                dist[fi * n + fj] = field.distance_at_cell(ox, oy) as f32;
            }
        }
        Ok(MidpointTable {
            resolution,
            nx,
            ny,
            free_index,
            free_cells,
            dist,
        })
    }

    fn free_index_of(&self, p: (f64, f64)) -> Option<usize> {
        let cx = ((p.0 * self.resolution as f64) as usize).min(self.nx - 1);
        let cy = ((p.1 * self.resolution as f64) as usize).min(self.ny - 1);
        let fi = self.free_index[cy * self.nx + cx];
        (fi >= 0).then_some(fi as usize)
    }

    /// First minimizer of the max-leg cost between `s` and `g`, as a cell
    /// center. Positions inside walls snap to no cell and return None.
    pub fn midpoint(&self, s: (f64, f64), g: (f64, f64)) -> Option<(f64, f64)> {
        let (si, gi) = (self.free_index_of(s)?, self.free_index_of(g)?);
        let n = self.free_cells.len();
        let mut best = f32::INFINITY;
        let mut best_cell = None;
        for j in 0..n {
            let c = self.dist[si * n + j].max(self.dist[gi * n + j]);
            if c < best {
                best = c;
                best_cell = Some(self.free_cells[j]);
            }
        }
        if !best.is_finite() {
            return None;
        }
        let cell = best_cell?;
        let cellsz = 1.0 / self.resolution as f64;
        let (cx, cy) = (cell % self.nx, cell / self.nx);
        Some(((cx as f64 + 0.5) * cellsz, (cy as f64 + 0.5) * cellsz))
    }
}

/// A frozen set of (state, goal) pairs with precomputed oracle midpoints,
/// against which high-level policy predictions are scored.
pub struct SubgoalEvalSet {
    pub pairs: Vec<StateGoal>,
    midpoints: Vec<Vec<(f64, f64)>>,
}

impl SubgoalEvalSet {
    pub fn new(
        spec: &MazeSpec,
        pairs: Vec<StateGoal>,
        resolution: usize,
    ) -> Result<Self> {
        let midpoints = pairs
            .iter()
            .map(|&(s, g)| bruteforce_midpoint(spec, s, g, resolution))
            .collect::<Result<Vec<_>>>()?;
        Ok(SubgoalEvalSet { pairs, midpoints })
    }

    /// Mean distance from each predicted subgoal to the nearest oracle
    /// midpoint of its pair.
    pub fn error(&self, predictions: &[(f64, f64)]) -> f64 {
        assert_eq!(predictions.len(), self.pairs.len(), "one prediction per pair");
        let mut total = 0.0;
        for (pred, mids) in predictions.iter().zip(self.midpoints.iter()) {
            let nearest = mids
                .iter()
                .map(|m| ((pred.0 - m.0).powi(2) + (pred.1 - m.1).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            total += nearest;
        }
        total / self.pairs.len() as f64
    }
}
