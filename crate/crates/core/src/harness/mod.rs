//! Experiment drivers: configuration, seeded runs, recorded trajectories and
//! the artifacts written for each experiment.
//!
//! Every driver takes an [`ExperimentConfig`] and returns an in-memory
//! outcome. When `out_dir` is set it also writes:
//!
//! - `trajectory.csv` (see [`Trajectory`] for the columns),
//! - `summary.json`,
//! - gnuplot-ready whitespace-separated `.dat` files,
//! - `checkpoint.json` ([`Checkpoint`]) where a final state exists.

mod checkpoint;
mod config;
mod drive;
mod freeze;
mod projection;
mod quadratic;
mod seeds;
mod segments;
mod stability_map;
mod synthgan;
mod trajectory;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::games::GameError;
use crate::optimizers::OptimError;
use crate::stability::StabilityError;

pub use checkpoint::{Checkpoint, GameSpec, CHECKPOINT_FORMAT_VERSION};
pub use config::{
    linspace, ExperimentConfig, ExperimentKind, FreezeSection, Overrides, ProjectionSection,
    QuadraticSection, StabilitySection, SynthganSection,
};
pub use freeze::{run_freeze, BranchReport, FreezeOutcome};
pub use projection::{
    run_projection, ProjectionOutcome, ProjectionReport, ProjectionRun, ProjectionRunSummary,
};
pub use quadratic::{run_quadratic, QuadraticOutcome, QuadraticSummary};
pub use seeds::{stream_rng, Stream};
pub use segments::{
    detect_metastable_segments, detect_segments, prediction_distance, MetastabilitySegment,
};
pub use stability_map::{run_stability_map, EmpiricalCell, StabilityMapOutcome};
pub use synthgan::{run_synthgan, SampleDump, SynthganOutcome, SynthganSummary};
pub use trajectory::{Record, Trajectory};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Converged,
    Diverged,
    BudgetExhausted,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Converged => "converged",
            Verdict::Diverged => "diverged",
            Verdict::BudgetExhausted => "budget-exhausted",
        }
    }
}

pub(crate) fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| HarnessError::Invalid(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

/// Whitespace-separated columns, one row per line, for gnuplot.
pub(crate) fn write_dat<I, R>(path: &Path, header: &str, rows: I) -> Result<(), HarnessError>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    use std::fmt::Write;
    let mut out = format!("# {header}\n");
    for row in rows {
        let cols: Vec<String> = row.as_ref().iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "{}", cols.join(" "));
    }
    write_text(path, &out)
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::Invalid(format!("{}: {other:?}", path.display())),
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}
