//! On-disk formats: archive documents, traces, checkpoints and CSV tables.

use std::fs;
use std::io::Write;
use std::path::Path;

use morphevo::envs::{EnvKind, Environment};
use morphevo::generalist::{GeneralistArchive, RunState, TraceRecord};
use morphevo::metrics::FitnessGrid;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::LatticeSpec;
use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub run_index: usize,
    pub run_seed: u64,
    pub schedule: String,
    pub training_size: usize,
    pub generations_used: u64,
    pub branch_generations: Vec<u64>,
}

/// A finished run: everything needed to re-evaluate its controllers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveDocument {
    pub format_version: u32,
    pub config_hash: String,
    pub env: EnvKind,
    pub archive: GeneralistArchive,
    /// Lattice of the global test set used at evolve time.
    pub global: LatticeSpec,
    pub run: RunMetadata,
}

impl ArchiveDocument {
    pub fn validate(&self) -> CliResult<()> {
        check_version(self.format_version, "archive")?;
        let spec = self.env.spec();
        let t = &self.archive.topology;
        if t.n_inputs != spec.observation_dim || t.n_outputs != spec.action_dim {
            return Err(CliError::Input(format!(
                "archive topology ({}, {}, {}) does not fit the {} environment",
                t.n_inputs, t.n_hidden, t.n_outputs, spec.name
            )));
        }
        let g = &self.archive.grid;
        let rebuilt = morphevo::schedule::MorphologyGrid::lattice(g.origin, g.steps, g.shape)?;
        if rebuilt.cells() != g.cells() {
            return Err(CliError::Input(
                "archive training grid is inconsistent".into(),
            ));
        }
        self.archive.check_partition()?;
        for e in &self.archive.entries {
            if e.controller.topology != *t || e.controller.params.len() != t.parameter_count() {
                return Err(CliError::Input(
                    "archive entry does not match the archive topology".into(),
                ));
            }
        }
        Ok(())
    }
}

fn check_version(found: u32, what: &str) -> CliResult<()> {
    if found != FORMAT_VERSION {
        return Err(CliError::Input(format!(
            "{what} has format version {found}, this build reads version {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

/// First line of every trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format_version: u32,
    pub config_hash: String,
    pub run_index: usize,
    pub run_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config_hash: String,
    pub run_index: usize,
    pub state: RunState,
    /// Length of the trace file when the checkpoint was taken.
    pub trace_bytes: u64,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Writes through a temporary file and a rename so readers never see a
/// partial document.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(&tmp, text + "\n").map_err(|e| CliError::io(tmp.display(), e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path.display(), e))
}

pub fn load_archive(path: &Path) -> CliResult<ArchiveDocument> {
    let value: serde_json::Value = read_json(path)?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .unwrap_or(0);
    check_version(version as u32, &format!("archive {}", path.display()))?;
    let doc: ArchiveDocument = serde_json::from_value(value)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    doc.validate()?;
    Ok(doc)
}

pub fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    let c: Checkpoint = read_json(path)?;
    check_version(c.format_version, "checkpoint")?;
    Ok(c)
}

pub fn trace_line(record: &TraceRecord) -> String {
    let mut line = serde_json::to_string(record).expect("trace record serializes");
    line.push('\n');
    line
}

pub fn trace_header_line(header: &TraceHeader) -> String {
    let mut line = serde_json::to_string(header).expect("trace header serializes");
    line.push('\n');
    line
}

/// Parses a trace file into its header and records.
pub fn read_trace(path: &Path) -> CliResult<(TraceHeader, Vec<TraceRecord>)> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    let mut lines = text.lines();
    let header: TraceHeader = lines
        .next()
        .ok_or_else(|| CliError::Input(format!("{}: empty trace", path.display())))
        .and_then(|l| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Input(format!("{}: line 1: {e}", path.display())))
        })?;
    check_version(header.format_version, "trace")?;
    let records = lines
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Input(format!("{}: line {}: {e}", path.display(), i + 2)))
        })
        .collect::<CliResult<Vec<TraceRecord>>>()?;
    Ok((header, records))
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run: usize,
    pub seed: u64,
    pub group: String,
    pub default_fitness: f64,
    pub local_mean: f64,
    pub global_mean: f64,
    pub sufficiency: usize,
    pub clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub x_param: f64,
    pub y_param: f64,
    pub mean_reward: f64,
    pub n_eval: usize,
}

pub fn sweep_rows(grid: &FitnessGrid) -> Vec<SweepRow> {
    grid.grid
        .cells()
        .iter()
        .zip(&grid.mean_reward)
        .map(|(m, &r)| SweepRow {
            x_param: m.x_param,
            y_param: m.y_param,
            mean_reward: r,
            n_eval: grid.n_eval,
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        w.serialize(row)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path.display(), e))?;
    f.write_all(&bytes)
        .map_err(|e| CliError::io(path.display(), e))
}

/// Reads a headed CSV; errors carry the file and line number.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| {
            row.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                let detail = match e.kind() {
                    csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                    _ => e.to_string(),
                };
                CliError::Input(format!("{}: line {line}: {detail}", path.display()))
            })
        })
        .collect()
}
