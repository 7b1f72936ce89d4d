//! Morphology lattices and the training schedules that present one
//! morphology per generation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::Morphology;
use crate::error::{Error, Result};
use crate::seed;

/// Rounds lattice coordinates so that `0.1 + 2 * 0.1` prints as `0.3`.
fn snap(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

/// A rectangular lattice of morphologies.
///
/// Cells are stored with the x index varying fastest: cell `k` sits at
/// lattice position `(k % n_x, k / n_x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphologyGrid {
    pub origin: (f64, f64),
    pub steps: (f64, f64),
    pub shape: (usize, usize),
    cells: Vec<Morphology>,
}

impl MorphologyGrid {
    pub fn lattice(origin: (f64, f64), steps: (f64, f64), shape: (usize, usize)) -> Result<Self> {
        let (n_x, n_y) = shape;
        if n_x == 0 || n_y == 0 {
            return Err(Error::Grid(format!("empty lattice shape {n_x}x{n_y}")));
        }
        if !(steps.0 > 0.0 && steps.1 > 0.0) {
            return Err(Error::Grid(format!(
                "lattice steps must be positive, got ({}, {})",
                steps.0, steps.1
            )));
        }
        let mut cells = Vec::with_capacity(n_x * n_y);
        for j in 0..n_y {
            for i in 0..n_x {
                let m = Morphology::new(
                    snap(origin.0 + i as f64 * steps.0),
                    snap(origin.1 + j as f64 * steps.1),
                )?;
                cells.push(m.with_index(i, j));
            }
        }
        Ok(Self {
            origin,
            steps,
            shape,
            cells,
        })
    }

    /// Training grid of `n` morphologies: the default morphology alone when
    /// `n = 1`, otherwise a `√n × √n` lattice starting at `origin`.
    pub fn training(
        origin: (f64, f64),
        steps: (f64, f64),
        n: usize,
        default: &Morphology,
    ) -> Result<Self> {
        if n == 1 {
            return Self::lattice((default.x_param, default.y_param), steps, (1, 1));
        }
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n || n == 0 {
            return Err(Error::Grid(format!(
                "training set size must be a perfect square, got {n}"
            )));
        }
        Self::lattice(origin, steps, (side, side))
    }

    pub fn cells(&self) -> &[Morphology] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, i: usize, j: usize) -> Option<&Morphology> {
        (i < self.shape.0 && j < self.shape.1).then(|| &self.cells[j * self.shape.0 + i])
    }

    pub fn position(&self, index: usize) -> (usize, usize) {
        (index % self.shape.0, index / self.shape.0)
    }

    /// Chebyshev distance between two cells in lattice units.
    pub fn lattice_distance(&self, a: usize, b: usize) -> usize {
        let (ai, aj) = self.position(a);
        let (bi, bj) = self.position(b);
        ai.abs_diff(bi).max(aj.abs_diff(bj))
    }

    /// Index of the cell with the given parameters, if it lies on the lattice.
    pub fn locate(&self, morph: &Morphology) -> Option<usize> {
        let i = ((morph.x_param - self.origin.0) / self.steps.0).round();
        let j = ((morph.y_param - self.origin.1) / self.steps.1).round();
        if i < 0.0 || j < 0.0 {
            return None;
        }
        let idx = self
            .cell(i as usize, j as usize)
            .map(|_| j as usize * self.shape.0 + i as usize)?;
        self.cells[idx].same_params(morph).then_some(idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Row-major sweep, x first, cycling.
    Incremental,
    /// Uniform i.i.d. cell each generation.
    Random,
    /// Uniform move to a cell within `step` lattice units in each coordinate.
    RandomWalk { step: usize },
}

impl ScheduleKind {
    pub fn label(&self) -> String {
        match self {
            Self::Incremental => "incremental".into(),
            Self::Random => "random".into(),
            Self::RandomWalk { step } => format!("random_walk_{step}"),
        }
    }
}

/// Stateful, seeded iterator over a (possibly restricted) set of grid cells.
///
/// All randomness is derived from `(seed, draws)`, so the schedule
/// serializes to a handful of integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    kind: ScheduleKind,
    seed: u64,
    draws: u64,
    /// Last emitted cell.
    current: Option<usize>,
    /// Allowed cells in ascending (row-major) order; `None` means all.
    active: Option<Vec<usize>>,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, seed: u64) -> Result<Self> {
        if let ScheduleKind::RandomWalk { step: 0 } = kind {
            return Err(Error::Grid("random walk step must be positive".into()));
        }
        Ok(Self {
            kind,
            seed,
            draws: 0,
            current: None,
            active: None,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn current(&self) -> Option<usize> {
        self.current
    }

    pub fn active_cells(&self, grid: &MorphologyGrid) -> Vec<usize> {
        match &self.active {
            Some(cells) => cells.clone(),
            None => (0..grid.len()).collect(),
        }
    }

    /// Limits future draws to `subset`; the cursor is kept.
    pub fn restrict(&mut self, subset: &[usize]) -> Result<()> {
        if subset.is_empty() {
            return Err(Error::Grid(
                "cannot restrict a schedule to an empty set".into(),
            ));
        }
        let mut cells = subset.to_vec();
        cells.sort_unstable();
        cells.dedup();
        self.active = Some(cells);
        Ok(())
    }

    /// Emits the next cell index.
    pub fn next_index(&mut self, grid: &MorphologyGrid) -> usize {
        assert!(!grid.is_empty(), "schedule needs a non-empty grid");
        let active = self.active_cells(grid);
        let mut rng = seed::rng(seed::derive(self.seed, self.draws));
        self.draws += 1;
        let next = match self.kind {
            ScheduleKind::Incremental => match self.current {
                Some(last) => active
                    .iter()
                    .copied()
                    .find(|&c| c > last)
                    .unwrap_or(active[0]),
                None => active[0],
            },
            ScheduleKind::Random => active[rng.random_range(0..active.len())],
            ScheduleKind::RandomWalk { step } => match self.current {
                None => active[rng.random_range(0..active.len())],
                Some(here) => {
                    let neighbours: Vec<usize> = active
                        .iter()
                        .copied()
                        .filter(|&c| {
                            let d = grid.lattice_distance(here, c);
                            d >= 1 && d <= step
                        })
                        .collect();
                    if !neighbours.is_empty() {
                        neighbours[rng.random_range(0..neighbours.len())]
                    } else if active.contains(&here) {
                        here
                    } else {
                        active[rng.random_range(0..active.len())]
                    }
                }
            },
        };
        self.current = Some(next);
        next
    }

    pub fn next(&mut self, grid: &MorphologyGrid) -> Morphology {
        let idx = self.next_index(grid);
        grid.cells()[idx]
    }
}
