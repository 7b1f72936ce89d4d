//! Evolving generalist controllers over a set of morphologies.
//!
//! A run evolves one controller (the branch champion) against the whole
//! training set `M`, presenting one morphology per generation through a
//! [`Schedule`]. When the best per-generation fitness stops improving for
//! `h` generations, morphologies on which the champion scores worse than
//! `f̂ + k·std` are split off into an outlier set `O`. A branch ends once the
//! champion's mean fitness reaches the satisfaction target, once a
//! stagnation check removes nothing, or when the generation budget runs
//! out. Every finished branch contributes one archive entry, and the run
//! restarts from a fresh search distribution on `O` until `O` is empty.
//!
//! All fitness values follow the minimization convention: fitness is the
//! negated episode reward.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{Environment, Morphology};
use crate::error::{Error, Result};
use crate::net::{Controller, NetworkTopology, ParamVector};
use crate::schedule::{MorphologyGrid, Schedule, ScheduleKind};
use crate::seed::{self, purpose};
use crate::xnes::SearchState;

/// Minimum decrease of the best per-generation fitness that counts as
/// progress for stagnation detection.
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunBudget {
    /// Generations shared by all branches of a run, restarts included.
    pub max_generations: u64,
    /// Generations without improvement before outlier removal (`h`).
    pub stagnation_window: u64,
    /// Mean fitness at or below which a branch is satisfied.
    pub satisfaction_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub schedule: ScheduleKind,
    pub budget: RunBudget,
    /// Initial xNES step size σ₀.
    pub sigma0: f64,
    /// Multiplier `k` of the standard deviation in the outlier rule.
    pub threshold_multiplier: f64,
    /// Initial means are drawn uniformly from `[-init_range, init_range]`.
    pub init_range: f64,
    pub run_seed: u64,
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::Run(format!(
                "sigma0 must be positive, got {}",
                self.sigma0
            )));
        }
        if self.threshold_multiplier.is_nan() || self.threshold_multiplier < 0.0 {
            return Err(Error::Run(format!(
                "threshold multiplier must be non-negative, got {}",
                self.threshold_multiplier
            )));
        }
        if !(self.init_range >= 0.0 && self.init_range.is_finite()) {
            return Err(Error::Run(format!(
                "init range must be non-negative, got {}",
                self.init_range
            )));
        }
        if self.budget.stagnation_window == 0 {
            return Err(Error::Run("stagnation window must be at least 1".into()));
        }
        Ok(())
    }

    /// Seed for the champion cross-evaluation episodes of this run.
    pub fn cross_eval_seed(&self) -> u64 {
        seed::derive(self.run_seed, purpose::CROSS_EVAL)
    }

    fn schedule_seed(&self) -> u64 {
        seed::derive(self.run_seed, purpose::SCHEDULE)
    }

    fn candidate_seed(&self, generation: u64) -> u64 {
        seed::derive_path(self.run_seed, &[purpose::CANDIDATE_EPISODE, generation])
    }
}

/// Fitness (negated reward) of one episode.
pub fn episode_fitness<E: Environment + ?Sized>(
    env: &E,
    morphology: &Morphology,
    controller: &Controller,
    seed: u64,
) -> Result<f64> {
    Ok(-env.evaluate(morphology, controller, seed)?.reward_total)
}

/// Per-cell fitness of `controller` on `cells`, one seeded episode each.
pub fn cell_fitnesses<E: Environment + ?Sized>(
    env: &E,
    controller: &Controller,
    grid: &MorphologyGrid,
    cells: &[usize],
    cross_seed: u64,
) -> Result<Vec<f64>> {
    cells
        .par_iter()
        .map(|&c| {
            episode_fitness(
                env,
                &grid.cells()[c],
                controller,
                seed::episode_seed(cross_seed, c, 0),
            )
        })
        .collect()
}

/// Mean fitness `f̂` of a controller over a set of cells.
pub fn mean_fitness<E: Environment + ?Sized>(
    env: &E,
    controller: &Controller,
    grid: &MorphologyGrid,
    cells: &[usize],
    cross_seed: u64,
) -> Result<f64> {
    if cells.is_empty() {
        return Err(Error::Run(
            "mean fitness over an empty morphology set".into(),
        ));
    }
    Ok(mean(&cell_fitnesses(
        env, controller, grid, cells, cross_seed,
    )?))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Outcome of the outlier rule on one set of per-morphology fitnesses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalEvent {
    pub mean: f64,
    pub std: f64,
    pub threshold: f64,
    /// Removed cells with the champion's fitness on each.
    pub removed: Vec<(usize, f64)>,
    pub kept: usize,
}

/// Splits off every cell whose fitness exceeds `mean + multiplier·std`.
pub fn outlier_rule(fitness: &[(usize, f64)], multiplier: f64) -> RemovalEvent {
    let values: Vec<f64> = fitness.iter().map(|&(_, f)| f).collect();
    let m = mean(&values);
    let s = std_dev(&values);
    let threshold = if multiplier.is_infinite() {
        f64::INFINITY
    } else {
        m + multiplier * s
    };
    let removed: Vec<(usize, f64)> = fitness
        .iter()
        .copied()
        .filter(|&(_, f)| f > threshold)
        .collect();
    RemovalEvent {
        mean: m,
        std: s,
        threshold,
        kept: fitness.len() - removed.len(),
        removed,
    }
}

/// One generation of one branch, as written to the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub branch: usize,
    /// Generation counted over the whole run.
    pub generation: u64,
    pub branch_generation: u64,
    pub morphology: usize,
    pub x_param: f64,
    pub y_param: f64,
    /// Best candidate fitness on the scheduled morphology.
    pub f_best: f64,
    /// Mean fitness of this generation's best candidate over `M`.
    pub f_hat_candidate: f64,
    /// Champion mean fitness over `M` after this generation.
    pub f_hat: f64,
    pub members: usize,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removal: Option<RemovalEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Champion {
    params: Vec<f64>,
    f_hat: f64,
    /// Fitness on each member cell, same seeds as the cross-evaluation.
    fitness: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchEnd {
    Satisfied,
    NothingRemoved,
    BudgetExhausted,
}

/// Resumable state of a single branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchState {
    index: usize,
    members: Vec<usize>,
    outliers: Vec<usize>,
    search: SearchState,
    champion: Option<Champion>,
    best_f_best: f64,
    since_improvement: u64,
    generations: u64,
}

impl BranchState {
    pub fn start(
        index: usize,
        members: Vec<usize>,
        topology: &NetworkTopology,
        settings: &RunSettings,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Run("a branch needs at least one morphology".into()));
        }
        let d = topology.parameter_count();
        let mut rng = seed::rng(seed::derive_path(
            settings.run_seed,
            &[purpose::INIT_MEAN, index as u64],
        ));
        let r = settings.init_range;
        let mean: Vec<f64> = (0..d)
            .map(|_| {
                if r > 0.0 {
                    rng.random_range(-r..=r)
                } else {
                    0.0
                }
            })
            .collect();
        let search = SearchState::new(
            mean,
            settings.sigma0,
            seed::derive_path(settings.run_seed, &[purpose::SAMPLING, index as u64]),
        )?;
        Ok(Self {
            index,
            members,
            outliers: Vec::new(),
            search,
            champion: None,
            best_f_best: f64::INFINITY,
            since_improvement: 0,
            generations: 0,
        })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn outliers(&self) -> &[usize] {
        &self.outliers
    }

    pub fn generations(&self) -> u64 {
        self.generations
    }

    pub fn champion_f_hat(&self) -> f64 {
        self.champion.as_ref().map_or(f64::INFINITY, |c| c.f_hat)
    }

    /// Runs one generation. Returns the trace record and, if the branch
    /// is over, why.
    #[allow(clippy::too_many_arguments)]
    pub fn step<E: Environment + ?Sized>(
        &mut self,
        env: &E,
        grid: &MorphologyGrid,
        topology: &NetworkTopology,
        settings: &RunSettings,
        schedule: &mut Schedule,
        run_generation: u64,
    ) -> Result<(TraceRecord, Option<BranchEnd>)> {
        let cell = schedule.next_index(grid);
        let morphology = grid.cells()[cell];

        let mut population = self.search.ask();
        let episode_seed = settings.candidate_seed(run_generation);
        let fitnesses: Vec<f64> = population
            .candidates()
            .par_iter()
            .map(|x| {
                let controller = Controller {
                    topology: *topology,
                    params: ParamVector::new(x.clone())?,
                };
                episode_fitness(env, &morphology, &controller, episode_seed)
            })
            .collect::<Result<_>>()?;
        population.set_fitnesses(fitnesses)?;
        let best = population.best_index().expect("population is non-empty");
        let f_best = population.fitnesses().expect("fitnesses set")[best];
        let best_params = population.candidates()[best].clone();
        self.search.tell(&population)?;

        let best_controller = Controller {
            topology: *topology,
            params: ParamVector::new(best_params.clone())?,
        };
        let per_cell = cell_fitnesses(
            env,
            &best_controller,
            grid,
            &self.members,
            settings.cross_eval_seed(),
        )?;
        let f_hat_candidate = mean(&per_cell);
        if f_hat_candidate < self.champion_f_hat() {
            self.champion = Some(Champion {
                params: best_params,
                f_hat: f_hat_candidate,
                fitness: self.members.iter().copied().zip(per_cell).collect(),
            });
        }

        if f_best < self.best_f_best - IMPROVEMENT_TOLERANCE {
            self.best_f_best = f_best;
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        self.generations += 1;

        let mut end = None;
        let mut removal = None;
        if self.since_improvement >= settings.budget.stagnation_window {
            let champion = self
                .champion
                .as_mut()
                .expect("champion set in the first generation");
            let event = outlier_rule(&champion.fitness, settings.threshold_multiplier);
            if event.removed.is_empty() {
                end = Some(BranchEnd::NothingRemoved);
            } else {
                self.outliers.extend(event.removed.iter().map(|&(c, _)| c));
                self.outliers.sort_unstable();
                champion.fitness.retain(|&(_, f)| f <= event.threshold);
                self.members = champion.fitness.iter().map(|&(c, _)| c).collect();
                let kept: Vec<f64> = champion.fitness.iter().map(|&(_, f)| f).collect();
                champion.f_hat = mean(&kept);
                schedule.restrict(&self.members)?;
                self.since_improvement = 0;
            }
            removal = Some(event);
        }
        if end.is_none() && self.champion_f_hat() <= settings.budget.satisfaction_target {
            end = Some(BranchEnd::Satisfied);
        }

        let record = TraceRecord {
            branch: self.index,
            generation: run_generation,
            branch_generation: self.generations - 1,
            morphology: cell,
            x_param: morphology.x_param,
            y_param: morphology.y_param,
            f_best,
            f_hat_candidate,
            f_hat: self.champion_f_hat(),
            members: self.members.len(),
            sigma: self.search.sigma(),
            removal,
        };
        Ok((record, end))
    }

    fn into_entry(self, topology: &NetworkTopology) -> Result<ArchiveEntry> {
        let champion = self
            .champion
            .ok_or_else(|| Error::Run("branch finished before its first generation".into()))?;
        Ok(ArchiveEntry {
            controller: Controller::new(*topology, ParamVector::new(champion.params)?)?,
            cluster: self.members,
            mean_fitness: champion.f_hat,
            generations_used: self.generations,
        })
    }
}

/// Result of [`evolve_branch`].
#[derive(Debug, Clone, PartialEq)]
pub struct BranchOutcome {
    pub entry: ArchiveEntry,
    pub outliers: Vec<usize>,
    pub generations: u64,
    pub end: BranchEnd,
    pub trace: Vec<TraceRecord>,
}

/// Evolves a single branch on `members` with at most `generations`
/// generations.
#[allow(clippy::too_many_arguments)]
pub fn evolve_branch<E: Environment + ?Sized>(
    env: &E,
    grid: &MorphologyGrid,
    members: Vec<usize>,
    schedule: &mut Schedule,
    generations: u64,
    topology: &NetworkTopology,
    settings: &RunSettings,
    branch_index: usize,
) -> Result<BranchOutcome> {
    settings.validate()?;
    if generations == 0 {
        return Err(Error::Run(
            "no generation budget left for the branch".into(),
        ));
    }
    schedule.restrict(&members)?;
    let mut branch = BranchState::start(branch_index, members, topology, settings)?;
    let mut trace = Vec::new();
    let end = loop {
        let (record, end) =
            branch.step(env, grid, topology, settings, schedule, branch.generations)?;
        trace.push(record);
        if let Some(end) = end {
            break end;
        }
        if branch.generations >= generations {
            break BranchEnd::BudgetExhausted;
        }
    };
    let outliers = branch.outliers.clone();
    let generations = branch.generations;
    Ok(BranchOutcome {
        entry: branch.into_entry(topology)?,
        outliers,
        generations,
        end,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub controller: Controller,
    /// Training-grid cell indices assigned to this controller.
    pub cluster: Vec<usize>,
    pub mean_fitness: f64,
    pub generations_used: u64,
}

/// The final ensemble `G` of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralistArchive {
    pub grid: MorphologyGrid,
    pub topology: NetworkTopology,
    pub entries: Vec<ArchiveEntry>,
    /// Training cells left without a controller when the budget ran out.
    pub uncovered: Vec<usize>,
}

impl GeneralistArchive {
    pub fn cluster_morphologies(&self, entry: usize) -> Vec<Morphology> {
        self.entries[entry]
            .cluster
            .iter()
            .map(|&c| self.grid.cells()[c])
            .collect()
    }

    /// Index of the entry responsible for `morphology`.
    ///
    /// Members of a cluster map to its controller. Any other morphology goes
    /// to the cluster with the nearest member, distances measured with each
    /// axis scaled by the grid step; ties go to the earlier entry.
    pub fn dispatch_index(&self, morphology: &Morphology) -> Result<usize> {
        if self.entries.is_empty() {
            return Err(Error::EmptyArchive);
        }
        if let Some(hit) = self.entries.iter().position(|e| {
            e.cluster
                .iter()
                .any(|&c| self.grid.cells()[c].same_params(morphology))
        }) {
            return Ok(hit);
        }
        let (sx, sy) = self.grid.steps;
        let mut best = (0, f64::INFINITY);
        for (k, entry) in self.entries.iter().enumerate() {
            let d = entry
                .cluster
                .iter()
                .map(|&c| {
                    let m = &self.grid.cells()[c];
                    ((m.x_param - morphology.x_param) / sx)
                        .hypot((m.y_param - morphology.y_param) / sy)
                })
                .fold(f64::INFINITY, f64::min);
            if d < best.1 - 1e-12 {
                best = (k, d);
            }
        }
        Ok(best.0)
    }

    pub fn dispatch(&self, morphology: &Morphology) -> Result<&Controller> {
        Ok(&self.entries[self.dispatch_index(morphology)?].controller)
    }

    /// Checks that clusters are disjoint, lie on the grid, and together with
    /// `uncovered` never exceed it.
    pub fn check_partition(&self) -> Result<()> {
        let mut seen = vec![false; self.grid.len()];
        for &c in self
            .entries
            .iter()
            .flat_map(|e| &e.cluster)
            .chain(&self.uncovered)
        {
            if c >= seen.len() {
                return Err(Error::Run(format!("cell {c} is not on the training grid")));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::Run(format!("cell {c} is assigned twice")));
            }
        }
        Ok(())
    }
}

/// Resumable state of a whole run; serializes for checkpointing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    generations_used: u64,
    schedule: Schedule,
    entries: Vec<ArchiveEntry>,
    branch: Option<BranchState>,
    /// Cells waiting for the next branch.
    pending: Vec<usize>,
    uncovered: Vec<usize>,
    next_branch: usize,
    finished: bool,
}

impl RunState {
    pub fn generations_used(&self) -> u64 {
        self.generations_used
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn branches_started(&self) -> usize {
        self.next_branch
    }
}

/// An evolutionary run as a resumable state machine.
pub struct Evolution<'a, E: Environment + ?Sized> {
    env: &'a E,
    grid: &'a MorphologyGrid,
    topology: NetworkTopology,
    settings: RunSettings,
    state: RunState,
}

impl<'a, E: Environment + ?Sized> Evolution<'a, E> {
    pub fn new(
        env: &'a E,
        grid: &'a MorphologyGrid,
        topology: NetworkTopology,
        settings: RunSettings,
    ) -> Result<Self> {
        settings.validate()?;
        topology.validate()?;
        if grid.is_empty() {
            return Err(Error::Grid("training grid is empty".into()));
        }
        let spec = env.spec();
        if topology.n_inputs != spec.observation_dim || topology.n_outputs != spec.action_dim {
            return Err(Error::Topology(format!(
                "({}, {}, {}) does not match the {} environment ({} observations, {} actions)",
                topology.n_inputs,
                topology.n_hidden,
                topology.n_outputs,
                spec.name,
                spec.observation_dim,
                spec.action_dim
            )));
        }
        let state = RunState {
            generations_used: 0,
            schedule: Schedule::new(settings.schedule, settings.schedule_seed())?,
            entries: Vec::new(),
            branch: None,
            pending: (0..grid.len()).collect(),
            uncovered: Vec::new(),
            next_branch: 0,
            finished: false,
        };
        Ok(Self {
            env,
            grid,
            topology,
            settings,
            state,
        })
    }

    pub fn resume(
        env: &'a E,
        grid: &'a MorphologyGrid,
        topology: NetworkTopology,
        settings: RunSettings,
        state: RunState,
    ) -> Result<Self> {
        let mut run = Self::new(env, grid, topology, settings)?;
        run.state = state;
        Ok(run)
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn settings(&self) -> &RunSettings {
        &self.settings
    }

    pub fn is_finished(&self) -> bool {
        self.state.finished
    }

    fn remaining(&self) -> u64 {
        self.settings
            .budget
            .max_generations
            .saturating_sub(self.state.generations_used)
    }

    /// Advances one generation; `None` once the run is complete.
    pub fn step(&mut self) -> Result<Option<TraceRecord>> {
        if self.state.finished {
            return Ok(None);
        }
        if self.state.branch.is_none() {
            if self.state.pending.is_empty() {
                self.state.finished = true;
                return Ok(None);
            }
            if self.remaining() == 0 {
                let pending = std::mem::take(&mut self.state.pending);
                self.state.uncovered.extend(pending);
                self.state.uncovered.sort_unstable();
                self.state.finished = true;
                return Ok(None);
            }
            let members = std::mem::take(&mut self.state.pending);
            self.state.schedule.restrict(&members)?;
            self.state.branch = Some(BranchState::start(
                self.state.next_branch,
                members,
                &self.topology,
                &self.settings,
            )?);
            self.state.next_branch += 1;
        }

        let branch = self.state.branch.as_mut().expect("branch started above");
        let (record, end) = branch.step(
            self.env,
            self.grid,
            &self.topology,
            &self.settings,
            &mut self.state.schedule,
            self.state.generations_used,
        )?;
        self.state.generations_used += 1;

        let exhausted = self.remaining() == 0;
        if end.is_some() || exhausted {
            let branch = self.state.branch.take().expect("branch in progress");
            self.state.pending = branch.outliers.clone();
            self.state.entries.push(branch.into_entry(&self.topology)?);
        }
        if exhausted && self.state.branch.is_none() {
            let pending = std::mem::take(&mut self.state.pending);
            self.state.uncovered.extend(pending);
            self.state.uncovered.sort_unstable();
            self.state.finished = true;
        }
        Ok(Some(record))
    }

    /// Runs to completion, handing every trace record to `sink`.
    pub fn run(mut self, mut sink: impl FnMut(&TraceRecord)) -> Result<GeneralistArchive> {
        while let Some(record) = self.step()? {
            sink(&record);
        }
        Ok(self.archive())
    }

    /// Archive of all finished branches so far.
    pub fn archive(&self) -> GeneralistArchive {
        GeneralistArchive {
            grid: self.grid.clone(),
            topology: self.topology,
            entries: self.state.entries.clone(),
            uncovered: self.state.uncovered.clone(),
        }
    }
}

/// Evolves the full ensemble for `grid`.
pub fn evolve_generalists<E: Environment + ?Sized>(
    env: &E,
    grid: &MorphologyGrid,
    topology: NetworkTopology,
    settings: RunSettings,
) -> Result<(GeneralistArchive, Vec<TraceRecord>)> {
    let mut trace = Vec::new();
    let archive = Evolution::new(env, grid, topology, settings)?.run(|r| trace.push(r.clone()))?;
    Ok((archive, trace))
}
