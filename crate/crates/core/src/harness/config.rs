//! Experiment configuration: one TOML file per experiment, every field
//! optional with a documented default, plus command-line overrides.
//!
//! ```toml
//! experiment = "quadratic"    # quadratic | projection | synthgan | stability-map | freeze
//! seed = 0
//! iterations = 2000
//! stride = 1
//! out_dir = "out"
//!
//! [optimizer]                 # omitted: per-experiment default
//! kind = "simgd"              # simgd | cgd | acgd | adam
//! eta_x = 0.09
//! eta_y = 0.01
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::games::{DiscriminatorHead, QuadraticGame};
use crate::optimizers::{AcgdHyper, AdamHyper, OptimizerKind};
use crate::stability::UpdateRule;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Quadratic,
    Projection,
    Synthgan,
    StabilityMap,
    Freeze,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Quadratic => "quadratic",
            ExperimentKind::Projection => "projection",
            ExperimentKind::Synthgan => "synthgan",
            ExperimentKind::StabilityMap => "stability-map",
            ExperimentKind::Freeze => "freeze",
        }
    }

    pub fn default_iterations(&self) -> u64 {
        match self {
            ExperimentKind::Quadratic => 2_000,
            ExperimentKind::Projection => 100_000,
            ExperimentKind::Synthgan => 10_000,
            ExperimentKind::StabilityMap => 5_000,
            ExperimentKind::Freeze => 1_000,
        }
    }

    pub fn default_stride(&self) -> u64 {
        match self {
            ExperimentKind::Quadratic | ExperimentKind::Freeze => 1,
            ExperimentKind::Projection => 10,
            ExperimentKind::Synthgan | ExperimentKind::StabilityMap => 100,
        }
    }

    pub fn default_optimizer(&self) -> OptimizerKind {
        match self {
            ExperimentKind::Quadratic => OptimizerKind::Simgd {
                eta_x: 0.09,
                eta_y: 0.01,
            },
            ExperimentKind::Projection | ExperimentKind::Freeze => OptimizerKind::Simgd {
                eta_x: 0.01,
                eta_y: 0.01,
            },
            ExperimentKind::Synthgan => OptimizerKind::Adam(AdamHyper::default()),
            ExperimentKind::StabilityMap => OptimizerKind::Simgd {
                eta_x: 0.01,
                eta_y: 0.01,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadraticSection {
    pub a_coef: f64,
    pub b_coef: f64,
    pub c_coef: f64,
    /// Initial `(x, y)`.
    pub start: [f64; 2],
    /// Converged once `||(x, y)||` drops below this.
    pub converge_norm: f64,
}

impl Default for QuadraticSection {
    fn default() -> Self {
        let q = QuadraticGame::icr_example();
        Self {
            a_coef: q.a_coef,
            b_coef: q.b_coef,
            c_coef: q.c_coef,
            start: [1.0, 1.0],
            converge_norm: 1e-3,
        }
    }
}

impl QuadraticSection {
    pub fn game(&self) -> QuadraticGame {
        QuadraticGame::new(self.a_coef, self.b_coef, self.c_coef)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionSection {
    /// Diagonal of the discriminator's input rescaling.
    pub eta: [f64; 2],
    /// Runs use seeds `seed, seed + 1, ...`.
    pub n_runs: u64,
    /// Relative tolerance for `|G_1 - 2| / 2`.
    pub rel_tol: f64,
    /// Minimum segment length, in recorded rows.
    pub min_len: usize,
}

impl Default for ProjectionSection {
    fn default() -> Self {
        Self {
            eta: [1.0, 1e-2],
            n_runs: 20,
            rel_tol: 0.05,
            min_len: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthganSection {
    pub head: DiscriminatorHead,
    pub batch_size: usize,
    pub dataset_seed: u64,
    /// Adam/SimGD only: train the generator on `E[-log D(G(z))]` (OGAN head).
    pub log_trick: bool,
    /// Generated points written per sample dump.
    pub sample_count: usize,
    /// Iterations between sample dumps.
    pub sample_stride: u64,
}

impl Default for SynthganSection {
    fn default() -> Self {
        Self {
            head: DiscriminatorHead::Ogan,
            batch_size: 32,
            dataset_seed: 0,
            log_trick: true,
            sample_count: 256,
            sample_stride: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub rule: UpdateRule,
    pub eta_x: Vec<f64>,
    pub eta_y: Vec<f64>,
    /// Fixed point `(x, y)` of the quadratic game to linearize at.
    pub point: [f64; 2],
    /// Also run SimGD from `quadratic.start` for `iterations` steps per cell.
    pub simulate: bool,
}

/// `count` evenly spaced values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            rule: UpdateRule::Simgd,
            eta_x: linspace(0.01, 0.2, 20),
            eta_y: linspace(0.01, 0.2, 20),
            point: [0.0, 0.0],
            simulate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreezeSection {
    /// Checkpoint written by a `projection` or `synthgan` run.
    pub checkpoint: Option<PathBuf>,
    /// Size of each of the real and fake reference sets (synthetic GAN).
    pub reference_size: usize,
}

impl Default for FreezeSection {
    fn default() -> Self {
        Self {
            checkpoint: None,
            reference_size: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Step budget; `None` uses the experiment default.
    pub iterations: Option<u64>,
    /// Record every `stride`-th iterate; `None` uses the experiment default.
    pub stride: Option<u64>,
    /// Where artifacts go; `None` keeps everything in memory.
    pub out_dir: Option<PathBuf>,
    /// `None` uses the experiment default.
    pub optimizer: Option<OptimizerKind>,
    pub quadratic: QuadraticSection,
    pub projection: ProjectionSection,
    pub synthgan: SynthganSection,
    pub stability: StabilitySection,
    pub freeze: FreezeSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::new(ExperimentKind::Quadratic)
    }
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            seed: 0,
            iterations: None,
            stride: None,
            out_dir: None,
            optimizer: None,
            quadratic: QuadraticSection::default(),
            projection: ProjectionSection::default(),
            synthgan: SynthganSection::default(),
            stability: StabilitySection::default(),
            freeze: FreezeSection::default(),
        }
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
            .unwrap_or_else(|| self.experiment.default_iterations())
    }

    pub fn stride(&self) -> u64 {
        self.stride
            .unwrap_or_else(|| self.experiment.default_stride())
            .max(1)
    }

    pub fn optimizer(&self) -> OptimizerKind {
        self.optimizer
            .unwrap_or_else(|| self.experiment.default_optimizer())
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Parses a config for a specific experiment. A file without an
    /// `experiment` key is taken to be for `kind`; one naming another
    /// experiment is rejected.
    pub fn from_toml_for(text: &str, kind: ExperimentKind) -> Result<Self, HarnessError> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        match table.get("experiment").and_then(|v| v.as_str()) {
            Some(k) if k != kind.as_str() => {
                return Err(HarnessError::Config(format!(
                    "config is for experiment `{k}`, not `{}`",
                    kind.as_str()
                )))
            }
            _ => {
                table.insert("experiment".into(), kind.as_str().into());
            }
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), HarnessError> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(iters) = o.iters {
            self.iterations = Some(iters);
        }
        if let Some(dir) = &o.out_dir {
            self.out_dir = Some(dir.clone());
        }
        let mut opt = match o.optimizer.as_deref() {
            None => self.optimizer(),
            Some(name) => optimizer_by_name(name, &self.optimizer())?,
        };
        if o.eta_x.is_some() || o.eta_y.is_some() {
            opt = with_step_sizes(opt, o.eta_x, o.eta_y)?;
        }
        if o.optimizer.is_some() || o.eta_x.is_some() || o.eta_y.is_some() {
            self.optimizer = Some(opt);
        }
        Ok(())
    }
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub iters: Option<u64>,
    pub optimizer: Option<String>,
    pub eta_x: Option<f64>,
    pub eta_y: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

/// Switches optimizer family, carrying a step size across where one exists.
fn optimizer_by_name(name: &str, current: &OptimizerKind) -> Result<OptimizerKind, HarnessError> {
    let eta = match *current {
        OptimizerKind::Simgd { eta_x, .. } => eta_x,
        OptimizerKind::Cgd { eta } => eta,
        OptimizerKind::Acgd(_) | OptimizerKind::Adam(_) => 0.01,
    };
    Ok(match (name, current) {
        (n, c) if n == c.name() => *c,
        ("simgd", OptimizerKind::Simgd { .. }) => *current,
        ("simgd", _) => OptimizerKind::Simgd {
            eta_x: eta,
            eta_y: eta,
        },
        ("cgd", _) => OptimizerKind::Cgd { eta },
        ("acgd", _) => OptimizerKind::Acgd(AcgdHyper::default()),
        ("adam", _) => OptimizerKind::Adam(AdamHyper::default()),
        (other, _) => {
            return Err(HarnessError::Config(format!(
                "unknown optimizer `{other}` (expected simgd, cgd, acgd or adam)"
            )))
        }
    })
}

/// `--eta-x`/`--eta-y`: SimGD step sizes, the CGD step (`eta_x`), or the
/// Adam/ACGD base rate `alpha` (`eta_x`).
fn with_step_sizes(
    opt: OptimizerKind,
    eta_x: Option<f64>,
    eta_y: Option<f64>,
) -> Result<OptimizerKind, HarnessError> {
    Ok(match opt {
        OptimizerKind::Simgd { eta_x: ex, eta_y: ey } => OptimizerKind::Simgd {
            eta_x: eta_x.unwrap_or(ex),
            eta_y: eta_y.unwrap_or(ey),
        },
        OptimizerKind::Cgd { eta } => {
            if eta_y.is_some() && eta_y != eta_x {
                return Err(HarnessError::Config(
                    "CGD uses one shared step size; pass --eta-x only".into(),
                ));
            }
            OptimizerKind::Cgd {
                eta: eta_x.or(eta_y).unwrap_or(eta),
            }
        }
        OptimizerKind::Acgd(mut h) => {
            h.alpha = eta_x.unwrap_or(h.alpha);
            OptimizerKind::Acgd(h)
        }
        OptimizerKind::Adam(mut h) => {
            h.alpha = eta_x.unwrap_or(h.alpha);
            OptimizerKind::Adam(h)
        }
    })
}
