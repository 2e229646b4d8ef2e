use serde::{Deserialize, Serialize};

use crate::optimizers::{OptimizerKind, OptimizerState};

use super::drive::drive;
use super::{
    create_dir, write_dat, Checkpoint, ExperimentConfig, GameSpec, HarnessError, Trajectory,
    Verdict,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSummary {
    pub experiment: String,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub verdict: Verdict,
    pub steps: u64,
    pub final_x: f64,
    pub final_y: f64,
    pub final_norm: f64,
}

#[derive(Debug, Clone)]
pub struct QuadraticOutcome {
    pub trajectory: Trajectory,
    pub verdict: Verdict,
    /// Steps actually taken.
    pub steps: u64,
    pub state: OptimizerState,
    pub summary: QuadraticSummary,
}

impl QuadraticOutcome {
    /// First recorded iteration with `||(x, y)|| > threshold`.
    pub fn first_exceeding(&self, threshold: f64) -> Option<u64> {
        self.trajectory
            .records
            .iter()
            .find(|r| r.values[0].hypot(r.values[1]) > threshold)
            .map(|r| r.iteration)
    }
}

/// Scalar quadratic game from `quadratic.start`; verdict by the
/// `quadratic.converge_norm` and divergence thresholds.
///
/// Trajectory value columns: `x,y`. Writes `trajectory.csv`, `summary.json`,
/// `xy.dat` (x y), `norm.dat` (iteration norm) and `checkpoint.json`.
pub fn run_quadratic(cfg: &ExperimentConfig) -> Result<QuadraticOutcome, HarnessError> {
    let q = &cfg.quadratic;
    let game = q.game().game();
    let opt = cfg.optimizer();
    let state = opt.init_state(vec![q.start[0]], vec![q.start[1]]);
    let d = drive(
        &game,
        &opt,
        state,
        cfg.iterations(),
        cfg.stride(),
        vec!["x".into(), "y".into()],
        |s| vec![s.x[0], s.y[0]],
        Some(q.converge_norm),
    )?;
    let summary = QuadraticSummary {
        experiment: "quadratic".into(),
        optimizer: opt,
        seed: cfg.seed,
        verdict: d.verdict,
        steps: d.steps,
        final_x: d.state.x[0],
        final_y: d.state.y[0],
        final_norm: d.state.norm(),
    };
    if let Some(dir) = &cfg.out_dir {
        create_dir(dir)?;
        d.trajectory.write_csv(&dir.join("trajectory.csv"))?;
        super::write_json(&dir.join("summary.json"), &summary)?;
        let recs = &d.trajectory.records;
        write_dat(
            &dir.join("xy.dat"),
            "x y",
            recs.iter().map(|r| [r.values[0], r.values[1]]),
        )?;
        write_dat(
            &dir.join("norm.dat"),
            "iteration norm",
            recs.iter()
                .map(|r| [r.iteration as f64, r.values[0].hypot(r.values[1])]),
        )?;
        Checkpoint::new(GameSpec::Quadratic(q.game()), opt, cfg.seed, d.state.clone())
            .save(&dir.join("checkpoint.json"))?;
    }
    Ok(QuadraticOutcome {
        trajectory: d.trajectory,
        verdict: d.verdict,
        steps: d.steps,
        state: d.state,
        summary,
    })
}
