//! Robustness and generalization metrics: fitness sweeps over morphology
//! lattices, the default / local / global test sets, and sufficiency counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{Environment, Morphology};
use crate::error::{Error, Result};
use crate::generalist::GeneralistArchive;
use crate::net::Controller;
use crate::schedule::MorphologyGrid;
use crate::seed;

/// Lattice distance (Chebyshev, in cells) defining the local test set.
pub const LOCAL_DISTANCE: usize = 6;

/// Anything that can pick a controller for a morphology.
pub trait ControllerSource: Sync {
    fn controller_for(&self, morphology: &Morphology) -> Result<&Controller>;
}

impl ControllerSource for Controller {
    fn controller_for(&self, _: &Morphology) -> Result<&Controller> {
        Ok(self)
    }
}

impl ControllerSource for GeneralistArchive {
    fn controller_for(&self, morphology: &Morphology) -> Result<&Controller> {
        self.dispatch(morphology)
    }
}

/// Mean episode reward per lattice cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessGrid {
    pub grid: MorphologyGrid,
    /// Mean raw reward, indexed like `grid.cells()`.
    pub mean_reward: Vec<f64>,
    pub n_eval: usize,
}

impl FitnessGrid {
    pub fn new(grid: MorphologyGrid, mean_reward: Vec<f64>, n_eval: usize) -> Result<Self> {
        if mean_reward.len() != grid.len() {
            return Err(Error::Dimension {
                what: "fitness grid values",
                expected: grid.len(),
                got: mean_reward.len(),
            });
        }
        if mean_reward.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("fitness grid"));
        }
        Ok(Self {
            grid,
            mean_reward,
            n_eval,
        })
    }

    /// Minimization-convention fitness of cell `index`.
    pub fn fitness(&self, index: usize) -> f64 {
        -self.mean_reward[index]
    }

    pub fn mean_fitness_over(&self, cells: &[usize]) -> f64 {
        -cells.iter().map(|&c| self.mean_reward[c]).sum::<f64>() / cells.len() as f64
    }
}

/// Evaluates `source` on every cell of `grid`, averaging `n_eval` episodes.
///
/// Episode `e` on cell `c` uses [`seed::episode_seed`]`(seed, c, e)`.
pub fn sweep<E, S>(
    env: &E,
    source: &S,
    grid: &MorphologyGrid,
    n_eval: usize,
    seed: u64,
) -> Result<FitnessGrid>
where
    E: Environment + ?Sized,
    S: ControllerSource + ?Sized,
{
    if n_eval == 0 {
        return Err(Error::Run(
            "sweeps need at least one episode per cell".into(),
        ));
    }
    let values = grid
        .cells()
        .par_iter()
        .enumerate()
        .map(|(c, morph)| {
            let controller = source.controller_for(morph)?;
            let total = (0..n_eval)
                .map(|e| {
                    Ok(env
                        .evaluate(morph, controller, seed::episode_seed(seed, c, e))?
                        .reward_total)
                })
                .sum::<Result<f64>>()?;
            Ok(total / n_eval as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    FitnessGrid::new(grid.clone(), values, n_eval)
}

/// Cells whose mean reward reaches `threshold`, and their share of the grid.
pub fn sufficiency_count(grid: &FitnessGrid, threshold: f64) -> (usize, f64) {
    let count = grid.mean_reward.iter().filter(|&&r| r >= threshold).count();
    (count, count as f64 / grid.mean_reward.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSets {
    /// Index of the default morphology in `global`.
    pub default_cell: usize,
    /// Cells of `global` near the training set, training cells included.
    pub local_set: Vec<usize>,
    pub global: MorphologyGrid,
    /// Training cells located on `global`.
    pub training_cells: Vec<usize>,
}

/// Places `training` on the `global` lattice and derives the test sets.
pub fn build_test_sets(
    training: &MorphologyGrid,
    global: &MorphologyGrid,
    default: &Morphology,
    local_distance: usize,
) -> Result<TestSets> {
    let locate = |m: &Morphology| {
        global.locate(m).ok_or_else(|| {
            Error::Grid(format!(
                "morphology ({}, {}) is not on the global lattice",
                m.x_param, m.y_param
            ))
        })
    };
    let training_cells = training
        .cells()
        .iter()
        .map(locate)
        .collect::<Result<Vec<_>>>()?;
    let default_cell = locate(default)?;
    let local_set = (0..global.len())
        .filter(|&c| {
            training_cells
                .iter()
                .any(|&t| global.lattice_distance(c, t) <= local_distance)
        })
        .collect();
    Ok(TestSets {
        default_cell,
        local_set,
        global: global.clone(),
        training_cells,
    })
}

/// The metric triple plus sufficiency over the global set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub default_fitness: f64,
    pub local_mean: f64,
    pub global_mean: f64,
    pub sufficiency: usize,
    pub sufficiency_fraction: f64,
}

/// Computes the metrics from an existing sweep of the global lattice.
pub fn summarize_grid(grid: &FitnessGrid, sets: &TestSets, threshold: f64) -> Result<Summary> {
    if grid.grid != sets.global {
        return Err(Error::Grid(
            "fitness grid does not cover the global test set".into(),
        ));
    }
    let (sufficiency, sufficiency_fraction) = sufficiency_count(grid, threshold);
    let all: Vec<usize> = (0..grid.grid.len()).collect();
    Ok(Summary {
        default_fitness: grid.fitness(sets.default_cell),
        local_mean: grid.mean_fitness_over(&sets.local_set),
        global_mean: grid.mean_fitness_over(&all),
        sufficiency,
        sufficiency_fraction,
    })
}

/// Sweeps the global lattice and reduces it to a [`Summary`].
pub fn summarize<E, S>(
    env: &E,
    source: &S,
    sets: &TestSets,
    n_eval: usize,
    seed: u64,
) -> Result<(Summary, FitnessGrid)>
where
    E: Environment + ?Sized,
    S: ControllerSource + ?Sized,
{
    let grid = sweep(env, source, &sets.global, n_eval, seed)?;
    let summary = summarize_grid(&grid, sets, env.spec().sufficiency_threshold)?;
    Ok((summary, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::CartPole;
    use crate::net::{NetworkTopology, ParamVector};

    fn global() -> MorphologyGrid {
        MorphologyGrid::lattice((0.1, 0.1), (0.1, 0.1), (18, 18)).unwrap()
    }

    fn default() -> Morphology {
        Morphology::new(0.5, 0.1).unwrap()
    }

    #[test]
    fn cartpole_global_size_matches_reported_shares() {
        assert_eq!(global().len(), 324);
        // 121 and 224 sufficient cells were reported as 37.35% and 69.14%
        assert!((121.0 / 324.0 * 100.0 - 37.35f64).abs() < 0.005);
        assert!((224.0 / 324.0 * 100.0 - 69.14f64).abs() < 0.005);
    }

    #[test]
    fn sufficiency_reference_points() {
        let mk = |good: usize| {
            let values = (0..324)
                .map(|c| if c < good { 900.0 } else { 10.0 })
                .collect();
            FitnessGrid::new(global(), values, 1).unwrap()
        };
        let (n, f) = sufficiency_count(&mk(121), 800.0);
        assert_eq!(n, 121);
        assert!((f * 100.0 - 37.35).abs() < 0.005);
        let (n, f) = sufficiency_count(&mk(224), 800.0);
        assert_eq!(n, 224);
        assert!((f * 100.0 - 69.14).abs() < 0.005);
        assert_eq!(sufficiency_count(&mk(0), 800.0), (0, 0.0));
        // the threshold is inclusive
        let edge = FitnessGrid::new(global(), vec![800.0; 324], 1).unwrap();
        assert_eq!(sufficiency_count(&edge, 800.0).0, 324);
    }

    #[test]
    fn single_default_cell_local_set() {
        let training = MorphologyGrid::training((0.1, 0.1), (0.1, 0.1), 1, &default()).unwrap();
        let sets = build_test_sets(&training, &global(), &default(), LOCAL_DISTANCE).unwrap();
        assert_eq!(sets.default_cell, 4);
        // x: 0..=10, y: 0..=6
        assert_eq!(sets.local_set.len(), 11 * 7);
        let unseen = sets.local_set.len() - 1;
        assert!(unseen >= 36);
        assert!(sets.local_set.contains(&4));
    }

    #[test]
    fn block_local_set_is_dilation() {
        let training = MorphologyGrid::training((0.1, 0.1), (0.1, 0.1), 64, &default()).unwrap();
        let g = global();
        let sets = build_test_sets(&training, &g, &default(), LOCAL_DISTANCE).unwrap();
        // 8x8 block at the lattice corner dilated by 6: 14x14 cells
        assert_eq!(sets.local_set.len(), 14 * 14);
        for &c in &sets.local_set {
            let (i, j) = g.position(c);
            assert!(i < 14 && j < 14);
        }
        assert!(sets
            .training_cells
            .iter()
            .all(|c| sets.local_set.contains(c)));
    }

    #[test]
    fn off_lattice_training_rejected() {
        let training = MorphologyGrid::lattice((0.15, 0.1), (0.1, 0.1), (2, 2)).unwrap();
        assert!(build_test_sets(&training, &global(), &default(), 6).is_err());
    }

    fn zero() -> Controller {
        Controller::zeros(NetworkTopology::new(4, 20, 1).unwrap())
    }

    #[test]
    fn single_cell_sweep_equals_one_episode() {
        let env = CartPole::default();
        let g = MorphologyGrid::lattice((0.5, 0.1), (0.1, 0.1), (1, 1)).unwrap();
        let fg = sweep(&env, &zero(), &g, 1, 17).unwrap();
        let direct = env
            .evaluate(&g.cells()[0], &zero(), seed::episode_seed(17, 0, 0))
            .unwrap();
        assert_eq!(fg.mean_reward[0], direct.reward_total);
    }

    #[test]
    fn sweep_is_linear_in_episodes() {
        let env = CartPole::default();
        let g = MorphologyGrid::lattice((0.1, 0.1), (0.2, 0.2), (3, 3)).unwrap();
        let c = Controller::new(
            NetworkTopology::new(4, 20, 1).unwrap(),
            ParamVector::new(
                (0..121)
                    .map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0)
                    .collect(),
            )
            .unwrap(),
        )
        .unwrap();
        let three = sweep(&env, &c, &g, 3, 5).unwrap();
        for cell in 0..g.len() {
            let manual: f64 = (0..3)
                .map(|e| {
                    env.evaluate(&g.cells()[cell], &c, seed::episode_seed(5, cell, e))
                        .unwrap()
                        .reward_total
                })
                .sum::<f64>()
                / 3.0;
            assert_eq!(three.mean_reward[cell], manual);
        }
    }

    #[test]
    fn perfect_controller_summary() {
        let env = CartPole::default().with_initial_state([0.0; 4]);
        let training = MorphologyGrid::training((0.1, 0.1), (0.1, 0.1), 16, &default()).unwrap();
        let sets = build_test_sets(&training, &global(), &default(), LOCAL_DISTANCE).unwrap();
        let (s, fg) = summarize(&env, &zero(), &sets, 1, 0).unwrap();
        assert_eq!(s.default_fitness, -1000.0);
        assert_eq!(s.local_mean, -1000.0);
        assert_eq!(s.global_mean, -1000.0);
        assert_eq!(s.sufficiency, 324);
        assert_eq!(summarize_grid(&fg, &sets, 800.0).unwrap(), s);
    }
}
