use crate::games::ZeroSumGame;
use crate::optimizers::{OptimizerKind, OptimizerState, StepReport};

use super::{HarnessError, Record, Trajectory, Verdict};

pub(crate) struct Driven {
    pub state: OptimizerState,
    pub trajectory: Trajectory,
    pub verdict: Verdict,
    pub steps: u64,
}

/// Runs `opt` on a fixed game for up to `budget` steps, recording
/// `values(state)` every `stride` iterations (indexed by `state.t`).
///
/// Stops early once the parameter norm drops below `converge_norm` or any
/// player's norm exceeds the divergence cutoff.
#[allow(clippy::too_many_arguments)]
pub(crate) fn drive<F>(
    game: &ZeroSumGame,
    opt: &OptimizerKind,
    state: OptimizerState,
    budget: u64,
    stride: u64,
    columns: Vec<String>,
    values: F,
    converge_norm: Option<f64>,
) -> Result<Driven, HarnessError>
where
    F: Fn(&OptimizerState) -> Vec<f64>,
{
    drive_with(
        game,
        |s| Ok(opt.step(game, s)?),
        state,
        budget,
        stride,
        columns,
        values,
        converge_norm,
    )
}

/// [`drive`] with an arbitrary step rule.
#[allow(clippy::too_many_arguments)]
pub(crate) fn drive_with<S, F>(
    game: &ZeroSumGame,
    mut step: S,
    mut state: OptimizerState,
    budget: u64,
    stride: u64,
    columns: Vec<String>,
    values: F,
    converge_norm: Option<f64>,
) -> Result<Driven, HarnessError>
where
    S: FnMut(&mut OptimizerState) -> Result<StepReport, HarnessError>,
    F: Fn(&OptimizerState) -> Vec<f64>,
{
    let mut trajectory = Trajectory::new(columns, stride, budget);
    let mut verdict = Verdict::BudgetExhausted;
    let mut steps = 0;
    let status = |s: &OptimizerState| {
        if converge_norm.is_some_and(|tol| s.norm() < tol) {
            Some(Verdict::Converged)
        } else if s.exceeds_cutoff() {
            Some(Verdict::Diverged)
        } else {
            None
        }
    };
    while steps < budget {
        if let Some(v) = status(&state) {
            verdict = v;
            break;
        }
        let k = state.t;
        let snapshot = trajectory.wants(k).then(|| values(&state));
        let report = step(&mut state)?;
        if let Some(v) = snapshot {
            trajectory.push_step(k, v, &report);
        }
        if report.diverged {
            verdict = Verdict::Diverged;
            break;
        }
        steps += 1;
    }
    if verdict == Verdict::BudgetExhausted {
        if let Some(v) = status(&state) {
            verdict = v;
        }
    }
    push_final(&mut trajectory, game, &state, values(&state));
    Ok(Driven {
        state,
        trajectory,
        verdict,
        steps,
    })
}

/// Final row at the last iterate, evaluated directly (no step diagnostics).
pub(crate) fn push_final(
    trajectory: &mut Trajectory,
    game: &ZeroSumGame,
    state: &OptimizerState,
    values: Vec<f64>,
) {
    let (loss, gx, gy) = match game.value_and_grads(&state.x, &state.y) {
        Ok((f, gx, gy)) => (f, norm(&gx), norm(&gy)),
        Err(_) => (f64::NAN, f64::NAN, f64::NAN),
    };
    trajectory.push(Record {
        iteration: state.t,
        loss,
        grad_norm_x: gx,
        grad_norm_y: gy,
        values,
        cg_iterations: 0,
        nash_residual: 0.0,
    });
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
