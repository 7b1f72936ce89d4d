//! Subcommand implementations.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use morphevo::generalist::Evolution;
use morphevo::metrics::{summarize, sweep as sweep_grid, FitnessGrid};
use morphevo::schedule::ScheduleKind;
use morphevo::stats::PAdjust;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::{
    load_archive, load_checkpoint, read_csv, read_json, sweep_rows, trace_header_line, trace_line,
    write_csv, write_json, ArchiveDocument, Checkpoint, RunMetadata, SummaryRow, SweepRow,
    TraceHeader, FORMAT_VERSION,
};
use crate::config::{sweep_seed, ExperimentConfig, LatticeSpec, Resolved};
use crate::error::{CliError, CliResult};
use crate::report::{analyze, render_text, table, METRICS};
use crate::svg::heatmap;

pub const SCHEDULES: [ScheduleKind; 4] = [
    ScheduleKind::Incremental,
    ScheduleKind::Random,
    ScheduleKind::RandomWalk { step: 1 },
    ScheduleKind::RandomWalk { step: 5 },
];

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub quiet: bool,
    /// Stop every run after this many generations, leaving a checkpoint.
    pub halt_after: Option<u64>,
}

/// Outcome of a multi-run command.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome<T> {
    Done(T),
    Halted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredSummary {
    config_hash: String,
    row: SummaryRow,
}

struct RunContext<'a> {
    config: &'a ExperimentConfig,
    resolved: Resolved,
    hash: String,
    group: String,
    out: PathBuf,
    options: &'a RunOptions,
}

pub fn run_dir(out: &Path, index: usize) -> PathBuf {
    out.join(format!("run_{index:03}"))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path.display(), e))
}

fn pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))
}

/// Runs `config.experiment.runs` seeded runs into `out` and writes
/// `summary.csv`. Finished runs found in `out` are reused and interrupted
/// ones resume from their checkpoint.
pub fn evolve(
    config: &ExperimentConfig,
    out: &Path,
    group: &str,
    options: &RunOptions,
) -> CliResult<Outcome<Vec<SummaryRow>>> {
    let ctx = RunContext {
        config,
        resolved: config.resolve()?,
        hash: config.hash(),
        group: group.to_string(),
        out: out.to_path_buf(),
        options,
    };
    create_dir(out)?;
    fs::write(out.join("config.toml"), config.to_toml())
        .map_err(|e| CliError::io(out.display(), e))?;
    let results: Vec<CliResult<Option<SummaryRow>>> = pool(config.experiment.jobs)?.install(|| {
        (0..config.experiment.runs)
            .into_par_iter()
            .map(|i| run_one(&ctx, i))
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut halted = false;
    for r in results {
        match r? {
            Some(row) => rows.push(row),
            None => halted = true,
        }
    }
    if halted {
        return Ok(Outcome::Halted);
    }
    write_csv(&out.join("summary.csv"), &rows)?;
    Ok(Outcome::Done(rows))
}

fn run_one(ctx: &RunContext, index: usize) -> CliResult<Option<SummaryRow>> {
    let dir = run_dir(&ctx.out, index);
    create_dir(&dir)?;
    let archive_path = dir.join("archive.json");
    let summary_path = dir.join("summary.json");
    let checkpoint_path = dir.join("checkpoint.json");
    let trace_path = dir.join("trace.jsonl");
    let run_seed = ctx.config.run_seed(index);

    if archive_path.exists() && summary_path.exists() {
        let stored: StoredSummary = read_json(&summary_path)?;
        if stored.config_hash != ctx.hash {
            return Err(stale(&dir));
        }
        let mut row = stored.row;
        row.group = ctx.group.clone();
        return Ok(Some(row));
    }

    let r = &ctx.resolved;
    let settings = r.settings(run_seed, ctx.config);
    let (mut evolution, mut trace, mut trace_bytes) = if checkpoint_path.exists() {
        let cp = load_checkpoint(&checkpoint_path)?;
        if cp.config_hash != ctx.hash || cp.run_index != index {
            return Err(stale(&dir));
        }
        let mut file = OpenOptions::new()
            .write(true)
            .open(&trace_path)
            .map_err(|e| CliError::io(trace_path.display(), e))?;
        file.set_len(cp.trace_bytes)
            .and_then(|_| file.seek(SeekFrom::End(0)))
            .map_err(|e| CliError::io(trace_path.display(), e))?;
        let evolution = Evolution::resume(&r.env, &r.training, r.topology, settings, cp.state)?;
        (evolution, BufWriter::new(file), cp.trace_bytes)
    } else {
        let file = File::create(&trace_path).map_err(|e| CliError::io(trace_path.display(), e))?;
        let mut w = BufWriter::new(file);
        let header = trace_header_line(&TraceHeader {
            format_version: FORMAT_VERSION,
            config_hash: ctx.hash.clone(),
            run_index: index,
            run_seed,
        });
        w.write_all(header.as_bytes())
            .map_err(|e| CliError::io(trace_path.display(), e))?;
        let evolution = Evolution::new(&r.env, &r.training, r.topology, settings)?;
        (evolution, w, header.len() as u64)
    };

    let checkpoint =
        |evolution: &Evolution<_>, trace: &mut BufWriter<File>, bytes: u64| -> CliResult<()> {
            trace
                .flush()
                .map_err(|e| CliError::io(trace_path.display(), e))?;
            write_json(
                &checkpoint_path,
                &Checkpoint {
                    format_version: FORMAT_VERSION,
                    config_hash: ctx.hash.clone(),
                    run_index: index,
                    state: evolution.state().clone(),
                    trace_bytes: bytes,
                },
            )
        };

    let every = ctx.config.experiment.checkpoint_every;
    loop {
        if let Some(limit) = ctx.options.halt_after {
            if !evolution.is_finished() && evolution.state().generations_used() >= limit {
                checkpoint(&evolution, &mut trace, trace_bytes)?;
                return Ok(None);
            }
        }
        match evolution.step()? {
            Some(record) => {
                let line = trace_line(&record);
                trace
                    .write_all(line.as_bytes())
                    .map_err(|e| CliError::io(trace_path.display(), e))?;
                trace_bytes += line.len() as u64;
                let used = evolution.state().generations_used();
                if every > 0 && used % every == 0 {
                    checkpoint(&evolution, &mut trace, trace_bytes)?;
                }
            }
            None => break,
        }
    }
    trace
        .flush()
        .map_err(|e| CliError::io(trace_path.display(), e))?;

    let archive = evolution.archive();
    let doc = ArchiveDocument {
        format_version: FORMAT_VERSION,
        config_hash: ctx.hash.clone(),
        env: r.env.clone(),
        run: RunMetadata {
            run_index: index,
            run_seed,
            schedule: r.schedule.label(),
            training_size: r.training.len(),
            generations_used: evolution.state().generations_used(),
            branch_generations: archive.entries.iter().map(|e| e.generations_used).collect(),
        },
        archive,
        global: ctx.config.metrics.global,
    };
    write_json(&archive_path, &doc)?;

    let (summary, grid) = summarize(
        &r.env,
        &doc.archive,
        &r.sets,
        ctx.config.metrics.n_eval,
        sweep_seed(run_seed),
    )?;
    write_sweep(&dir.join("global"), &grid)?;
    let row = SummaryRow {
        run: index,
        seed: run_seed,
        group: ctx.group.clone(),
        default_fitness: summary.default_fitness,
        local_mean: summary.local_mean,
        global_mean: summary.global_mean,
        sufficiency: summary.sufficiency,
        clusters: doc.archive.entries.len(),
    };
    write_json(
        &summary_path,
        &StoredSummary {
            config_hash: ctx.hash.clone(),
            row: row.clone(),
        },
    )?;
    if checkpoint_path.exists() {
        fs::remove_file(&checkpoint_path)
            .map_err(|e| CliError::io(checkpoint_path.display(), e))?;
    }
    if !ctx.options.quiet {
        eprintln!(
            "[{}] run {index}: {} cluster(s), {} generations, global mean {:.2}, sufficiency {}",
            ctx.group, row.clusters, doc.run.generations_used, row.global_mean, row.sufficiency
        );
    }
    Ok(Some(row))
}

fn stale(dir: &Path) -> CliError {
    CliError::Config(format!(
        "{} holds results of a different configuration; choose another output directory",
        dir.display()
    ))
}

fn sweep_title(rows: &[SweepRow]) -> String {
    let n = rows.first().map_or(0, |r| r.n_eval);
    format!("mean reward per morphology, {n} episode(s) per cell")
}

/// Writes `<stem>.csv` and `<stem>.svg`.
fn write_sweep(stem: &Path, grid: &FitnessGrid) -> CliResult<()> {
    let rows = sweep_rows(grid);
    write_csv(&stem.with_extension("csv"), &rows)?;
    let svg = heatmap(&rows, &sweep_title(&rows))?;
    let path = stem.with_extension("svg");
    fs::write(&path, svg).map_err(|e| CliError::io(path.display(), e))
}

/// Evaluates a saved archive over a lattice; writes `sweep.csv` and
/// `sweep.svg` into `out`.
pub fn sweep(
    archive: &Path,
    lattice: Option<LatticeSpec>,
    n_eval: usize,
    seed: Option<u64>,
    out: &Path,
) -> CliResult<FitnessGrid> {
    let doc = load_archive(archive)?;
    if n_eval == 0 {
        return Err(CliError::Config("--n-eval must be at least 1".into()));
    }
    let spec = lattice.unwrap_or(doc.global);
    let grid = spec.grid().map_err(|e| {
        CliError::Config(format!(
            "lattice does not fit the {} environment: {e}",
            doc.env.name()
        ))
    })?;
    let seed = seed.unwrap_or_else(|| sweep_seed(doc.run.run_seed));
    let fitness = sweep_grid(&doc.env, &doc.archive, &grid, n_eval, seed)?;
    create_dir(out)?;
    write_sweep(&out.join("sweep"), &fitness)?;
    Ok(fitness)
}

/// Re-renders a sweep CSV as an SVG heatmap.
pub fn render(csv: &Path, out: &Path) -> CliResult<()> {
    let rows: Vec<SweepRow> = read_csv(csv)?;
    let svg = heatmap(&rows, &sweep_title(&rows))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(out, svg).map_err(|e| CliError::io(out.display(), e))
}

/// Kruskal-Wallis, Dunn and medians for every metric of the given summary
/// files. Returns the text report; with `out`, also writes `stats.txt` and
/// `stats.csv` there.
pub fn stats(
    files: &[PathBuf],
    alpha: f64,
    adjust: PAdjust,
    out: Option<&Path>,
) -> CliResult<String> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let mut rows: Vec<SummaryRow> = Vec::new();
    for f in files {
        rows.extend(read_csv::<SummaryRow>(f)?);
    }
    write_stats(&rows, alpha, adjust, out)
}

fn write_stats(
    rows: &[SummaryRow],
    alpha: f64,
    adjust: PAdjust,
    out: Option<&Path>,
) -> CliResult<String> {
    let reports = analyze(rows, &METRICS, alpha, adjust)?;
    let text = render_text(&reports, alpha, adjust);
    if let Some(dir) = out {
        create_dir(dir)?;
        fs::write(dir.join("stats.txt"), &text).map_err(|e| CliError::io(dir.display(), e))?;
        write_csv(&dir.join("stats.csv"), &table(&reports))?;
    }
    Ok(text)
}

/// Runs the template under each of the four schedules with matched seeds,
/// one subdirectory per schedule, then compares them.
pub fn schedule_compare(
    template: &ExperimentConfig,
    out: &Path,
    options: &RunOptions,
) -> CliResult<Outcome<String>> {
    let configs: Vec<ExperimentConfig> = SCHEDULES
        .iter()
        .map(|&kind| {
            let mut c = template.clone();
            c.set_schedule(kind);
            c
        })
        .collect();
    let grids = configs
        .iter()
        .map(|c| c.resolve().map(|r| r.training))
        .collect::<CliResult<Vec<_>>>()?;
    if grids.windows(2).any(|w| w[0] != w[1]) {
        return Err(CliError::Runtime(
            "schedules would train on different morphology grids".into(),
        ));
    }
    let mut rows = Vec::new();
    for (kind, config) in SCHEDULES.iter().zip(&configs) {
        let label = kind.label();
        match evolve(config, &out.join(&label), &label, options)? {
            Outcome::Done(r) => rows.extend(r),
            Outcome::Halted => return Ok(Outcome::Halted),
        }
    }
    write_csv(&out.join("summary.csv"), &rows)?;
    write_stats(&rows, 0.05, PAdjust::None, Some(out)).map(Outcome::Done)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules_are_the_four_compared() {
        let labels: Vec<String> = SCHEDULES.iter().map(|s| s.label()).collect();
        assert_eq!(
            labels,
            ["incremental", "random", "random_walk_1", "random_walk_5"]
        );
    }
}
