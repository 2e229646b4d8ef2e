use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::games::{generator_forward, init_projection_weights, ProjectionGame};
use crate::optimizers::{OptimizerKind, OptimizerState};

use super::drive::drive;
use super::{
    create_dir, detect_metastable_segments, stream_rng, write_dat, write_json, Checkpoint,
    ExperimentConfig, GameSpec, HarnessError, MetastabilitySegment, Stream, Trajectory, Verdict,
};

/// One seeded run.
#[derive(Debug, Clone)]
pub struct ProjectionRun {
    pub seed: u64,
    pub trajectory: Trajectory,
    pub verdict: Verdict,
    pub segments: Vec<MetastabilitySegment>,
    pub state: OptimizerState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRunSummary {
    pub seed: u64,
    pub verdict: Verdict,
    pub segments: Vec<MetastabilitySegment>,
    /// Longest segment, in iterations (0 if none).
    pub longest_segment: u64,
    pub final_g1: f64,
    pub final_g2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub experiment: String,
    pub optimizer: OptimizerKind,
    pub eta: [f64; 2],
    pub iterations: u64,
    pub stride: u64,
    pub rel_tol: f64,
    pub min_len: usize,
    pub n_runs: u64,
    pub runs_with_segment: u64,
    pub fraction_with_segment: f64,
    /// Mean over all detected segments, in iterations (0 if none).
    pub mean_segment_duration: f64,
    pub runs: Vec<ProjectionRunSummary>,
}

#[derive(Debug, Clone)]
pub struct ProjectionOutcome {
    /// Sorted by seed.
    pub runs: Vec<ProjectionRun>,
    pub report: ProjectionReport,
}

impl ProjectionOutcome {
    pub fn any_diverged(&self) -> bool {
        self.runs.iter().any(|r| r.verdict == Verdict::Diverged)
    }
}

fn run_one(
    game: &ProjectionGame,
    opt: &OptimizerKind,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<ProjectionRun, HarnessError> {
    let zs = game.game();
    let (wg, wd) = init_projection_weights(&mut stream_rng(seed, Stream::Init));
    let d = drive(
        &zs,
        opt,
        opt.init_state(wg, wd),
        cfg.iterations(),
        cfg.stride(),
        ["g1", "g2", "norm_w_g", "norm_w_d"].map(String::from).to_vec(),
        |s| {
            let g = generator_forward(&s.x);
            vec![g[0], g[1], s.norm_x(), s.norm_y()]
        },
        None,
    )?;
    let p = &cfg.projection;
    let segments =
        detect_metastable_segments(&d.trajectory, 0, game.p_data[0], p.rel_tol, p.min_len);
    Ok(ProjectionRun {
        seed,
        trajectory: d.trajectory,
        verdict: d.verdict,
        segments,
        state: d.state,
    })
}

/// `projection.n_runs` independent runs with master seeds `seed, seed + 1, ...`,
/// executed in parallel.
///
/// Trajectory value columns: `g1,g2,norm_w_g,norm_w_d`. Writes
/// `summary.json` plus `run_<seed>/{trajectory.csv,g1.dat,checkpoint.json}`.
pub fn run_projection(cfg: &ExperimentConfig) -> Result<ProjectionOutcome, HarnessError> {
    let p = &cfg.projection;
    if p.n_runs == 0 {
        return Err(HarnessError::Invalid("projection.n_runs must be at least 1".into()));
    }
    if !(p.rel_tol > 0.0) {
        return Err(HarnessError::Invalid("projection.rel_tol must be positive".into()));
    }
    let game = ProjectionGame::new(p.eta);
    let opt = cfg.optimizer();
    let mut runs: Vec<ProjectionRun> = (0..p.n_runs)
        .into_par_iter()
        .map(|i| run_one(&game, &opt, cfg, cfg.seed + i))
        .collect::<Result<_, _>>()?;
    runs.sort_by_key(|r| r.seed);

    let all: Vec<u64> = runs
        .iter()
        .flat_map(|r| r.segments.iter().map(MetastabilitySegment::duration))
        .collect();
    let with = runs.iter().filter(|r| !r.segments.is_empty()).count() as u64;
    let report = ProjectionReport {
        experiment: "projection".into(),
        optimizer: opt,
        eta: p.eta,
        iterations: cfg.iterations(),
        stride: cfg.stride(),
        rel_tol: p.rel_tol,
        min_len: p.min_len,
        n_runs: p.n_runs,
        runs_with_segment: with,
        fraction_with_segment: with as f64 / p.n_runs as f64,
        mean_segment_duration: if all.is_empty() {
            0.0
        } else {
            all.iter().sum::<u64>() as f64 / all.len() as f64
        },
        runs: runs
            .iter()
            .map(|r| {
                let g = generator_forward(&r.state.x);
                ProjectionRunSummary {
                    seed: r.seed,
                    verdict: r.verdict,
                    segments: r.segments.clone(),
                    longest_segment: r.segments.iter().map(|s| s.duration()).max().unwrap_or(0),
                    final_g1: g[0],
                    final_g2: g[1],
                }
            })
            .collect(),
    };

    if let Some(dir) = &cfg.out_dir {
        create_dir(dir)?;
        write_json(&dir.join("summary.json"), &report)?;
        for r in &runs {
            let sub = dir.join(format!("run_{:04}", r.seed));
            create_dir(&sub)?;
            r.trajectory.write_csv(&sub.join("trajectory.csv"))?;
            let g1 = r.trajectory.column("g1").unwrap_or_default();
            write_dat(
                &sub.join("g1.dat"),
                "iteration g1",
                r.trajectory
                    .records
                    .iter()
                    .zip(&g1)
                    .map(|(rec, v)| [rec.iteration as f64, *v]),
            )?;
            Checkpoint::new(GameSpec::Projection(game), opt, r.seed, r.state.clone())
                .save(&sub.join("checkpoint.json"))?;
        }
    }
    Ok(ProjectionOutcome { runs, report })
}
