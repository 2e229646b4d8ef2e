use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::optimizers::{competitive_step_diag, simgd_step, CgSettings, OptimizerState, StepSizes};
use crate::stability::{stability_sweep, Classification, SweepGrid, UpdateRule};

use super::drive::drive_with;
use super::{create_dir, csv_err, write_json, ExperimentConfig, HarnessError, Verdict};

/// Outcome of an actual run at one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCell {
    pub eta_x: f64,
    pub eta_y: f64,
    pub spectral_radius: f64,
    pub classification: Classification,
    pub verdict: Verdict,
    pub steps: u64,
    pub initial_norm: f64,
    pub final_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityMapOutcome {
    pub grid: SweepGrid,
    /// Present when `stability.simulate` is set; same order as `grid.cells`.
    pub empirical: Option<Vec<EmpiricalCell>>,
}

/// Spectral-radius sweep of the quadratic game's update map at
/// `stability.point` over `stability.eta_x` by `stability.eta_y`.
///
/// With `stability.simulate`, every cell is also run from `quadratic.start`
/// for `iterations` steps (per-player step sizes, CGD via diagonal `A`).
/// Writes `sweep.csv` (`eta_x,eta_y,spectral_radius,classification`),
/// `stability.dat` (gnuplot `splot` blocks), `summary.json`, and with
/// simulation `empirical.csv`.
pub fn run_stability_map(cfg: &ExperimentConfig) -> Result<StabilityMapOutcome, HarnessError> {
    let st = &cfg.stability;
    let q = cfg.quadratic.game();
    let game = q.game();
    let grid = stability_sweep(
        &game,
        st.rule,
        &st.eta_x,
        &st.eta_y,
        &[st.point[0]],
        &[st.point[1]],
    )?;
    let empirical = if st.simulate {
        Some(
            grid.cells
                .par_iter()
                .map(|c| simulate_cell(cfg, c.eta_x, c.eta_y, c.spectral_radius, c.classification))
                .collect::<Result<Vec<_>, _>>()?,
        )
    } else {
        None
    };

    if let Some(dir) = &cfg.out_dir {
        create_dir(dir)?;
        let path = dir.join("sweep.csv");
        let file = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        grid.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| csv_err(&path, e))?;
        write_splot(&dir.join("stability.dat"), &grid)?;
        #[derive(Serialize)]
        struct Summary<'a> {
            experiment: &'a str,
            rule: UpdateRule,
            point: [f64; 2],
            cells: usize,
            stable: usize,
            unstable: usize,
            marginal: usize,
        }
        let count = |k| grid.cells.iter().filter(|c| c.classification == k).count();
        write_json(
            &dir.join("summary.json"),
            &Summary {
                experiment: "stability-map",
                rule: st.rule,
                point: st.point,
                cells: grid.cells.len(),
                stable: count(Classification::Stable),
                unstable: count(Classification::Unstable),
                marginal: count(Classification::Marginal),
            },
        )?;
        if let Some(emp) = &empirical {
            let path = dir.join("empirical.csv");
            write_empirical(&path, emp).map_err(|e| csv_err(&path, e))?;
        }
    }
    Ok(StabilityMapOutcome { grid, empirical })
}

fn simulate_cell(
    cfg: &ExperimentConfig,
    eta_x: f64,
    eta_y: f64,
    spectral_radius: f64,
    classification: Classification,
) -> Result<EmpiricalCell, HarnessError> {
    let q = &cfg.quadratic;
    let game = q.game().game();
    let state = OptimizerState::new(vec![q.start[0]], vec![q.start[1]]);
    let initial_norm = state.norm();
    let steps = StepSizes::new(eta_x, eta_y)?;
    let rule = cfg.stability.rule;
    let d = drive_with(
        &game,
        |s| {
            Ok(match rule {
                UpdateRule::Simgd => simgd_step(&game, s, steps)?,
                UpdateRule::Cgd => {
                    competitive_step_diag(&game, s, &[eta_x], &[eta_y], CgSettings::default())?
                }
            })
        },
        state,
        cfg.iterations(),
        cfg.iterations().max(1),
        Vec::new(),
        |_| Vec::new(),
        Some(q.converge_norm),
    )?;
    Ok(EmpiricalCell {
        eta_x,
        eta_y,
        spectral_radius,
        classification,
        verdict: d.verdict,
        steps: d.steps,
        initial_norm,
        final_norm: d.state.norm(),
    })
}

fn write_splot(path: &std::path::Path, grid: &SweepGrid) -> Result<(), HarnessError> {
    use std::fmt::Write;
    let mut out = String::from("# eta_x eta_y spectral_radius\n");
    for (ix, _) in grid.eta_x.iter().enumerate() {
        for iy in 0..grid.eta_y.len() {
            let c = grid.cell(ix, iy);
            let _ = writeln!(out, "{:e} {:e} {:e}", c.eta_x, c.eta_y, c.spectral_radius);
        }
        out.push('\n');
    }
    super::write_text(path, &out)
}

fn write_empirical(path: &std::path::Path, cells: &[EmpiricalCell]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "eta_x",
        "eta_y",
        "spectral_radius",
        "classification",
        "verdict",
        "steps",
        "initial_norm",
        "final_norm",
    ])?;
    for c in cells {
        w.write_record([
            c.eta_x.to_string(),
            c.eta_y.to_string(),
            c.spectral_radius.to_string(),
            c.classification.as_str().to_string(),
            c.verdict.as_str().to_string(),
            c.steps.to_string(),
            c.initial_norm.to_string(),
            c.final_norm.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
