//! Update rules for two-player zero-sum games: simultaneous gradient
//! descent, single-player training, Adam, competitive gradient descent and
//! its adaptive variant.
//!
//! All steps mutate an [`OptimizerState`] in place and return a
//! [`StepReport`]. A non-finite gradient or update leaves the state untouched
//! and sets [`StepReport::diverged`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::games::{Player, ZeroSumGame};
use crate::linsolve::{cg_solve, make_cgd_operator, LinsolveError, DEFAULT_TOL, ITER_SLACK};

/// Runs halt as diverged once any player's parameter norm exceeds this.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Linsolve(#[from] LinsolveError),
    #[error("CG for player {player:?} stopped at relative residual {residual:e} after {iterations} iterations")]
    CgNotConverged {
        player: Player,
        residual: f64,
        iterations: usize,
    },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("optimizer state lacks the {0} moment estimates")]
    MissingMoments(&'static str),
    #[error("state dims ({x}, {y}) do not match the game ({gx}, {gy})")]
    DimensionMismatch { x: usize, y: usize, gx: usize, gy: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub eta_x: f64,
    pub eta_y: f64,
}

impl StepSizes {
    pub fn new(eta_x: f64, eta_y: f64) -> Result<Self, OptimError> {
        for (name, v) in [("eta_x", eta_x), ("eta_y", eta_y)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(OptimError::InvalidHyper(format!("{name} = {v}")));
            }
        }
        Ok(Self { eta_x, eta_y })
    }

    pub fn uniform(eta: f64) -> Result<Self, OptimError> {
        Self::new(eta, eta)
    }
}

/// Moment estimates carried between steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Moments {
    None,
    /// Second moments only (ACGD).
    Rms { v_x: Vec<f64>, v_y: Vec<f64> },
    Adam {
        m_x: Vec<f64>,
        v_x: Vec<f64>,
        m_y: Vec<f64>,
        v_y: Vec<f64>,
    },
}

/// Parameters of both players plus everything needed to resume a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub t: u64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub moments: Moments,
}

impl OptimizerState {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            t: 0,
            x,
            y,
            moments: Moments::None,
        }
    }

    pub fn with_rms(x: Vec<f64>, y: Vec<f64>) -> Self {
        let moments = Moments::Rms {
            v_x: vec![0.0; x.len()],
            v_y: vec![0.0; y.len()],
        };
        Self { t: 0, x, y, moments }
    }

    pub fn with_adam(x: Vec<f64>, y: Vec<f64>) -> Self {
        let moments = Moments::Adam {
            m_x: vec![0.0; x.len()],
            v_x: vec![0.0; x.len()],
            m_y: vec![0.0; y.len()],
            v_y: vec![0.0; y.len()],
        };
        Self { t: 0, x, y, moments }
    }

    pub fn norm_x(&self) -> f64 {
        norm(&self.x)
    }

    pub fn norm_y(&self) -> f64 {
        norm(&self.y)
    }

    /// Norm of the concatenated parameter vector.
    pub fn norm(&self) -> f64 {
        self.norm_x().hypot(self.norm_y())
    }

    pub fn exceeds_cutoff(&self) -> bool {
        self.norm_x() > DIVERGENCE_NORM || self.norm_y() > DIVERGENCE_NORM
    }

    fn check(&self, game: &ZeroSumGame) -> Result<(), OptimError> {
        let (gx, gy) = (game.dim(Player::X), game.dim(Player::Y));
        if self.x.len() != gx || self.y.len() != gy {
            return Err(OptimError::DimensionMismatch {
                x: self.x.len(),
                y: self.y.len(),
                gx,
                gy,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub delta_x: Vec<f64>,
    pub delta_y: Vec<f64>,
    pub loss_before: f64,
    pub loss_after: f64,
    pub grad_norm_x: f64,
    pub grad_norm_y: f64,
    /// CG iterations over both inner solves.
    pub cg_iterations: usize,
    /// Residuals of the local game's coupled first-order conditions.
    pub nash_residual_x: f64,
    pub nash_residual_y: f64,
    pub diverged: bool,
}

impl StepReport {
    fn diverged(loss_before: f64) -> Self {
        Self {
            loss_before,
            loss_after: f64::NAN,
            grad_norm_x: f64::NAN,
            grad_norm_y: f64::NAN,
            diverged: true,
            ..Self::default()
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad_norm_x.hypot(self.grad_norm_y)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|a| a.is_finite())
}

/// Gradients, or `None` when they are not finite.
fn grads_or_diverge(
    game: &ZeroSumGame,
    state: &OptimizerState,
) -> Result<Option<(f64, Vec<f64>, Vec<f64>)>, OptimError> {
    state.check(game)?;
    match game.value_and_grads(&state.x, &state.y) {
        Ok(g) => Ok(Some(g)),
        Err(AutodiffError::NonFinite { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Applies the deltas unless they produce non-finite parameters.
fn commit(
    game: &ZeroSumGame,
    state: &mut OptimizerState,
    mut report: StepReport,
) -> StepReport {
    let x: Vec<f64> = state.x.iter().zip(&report.delta_x).map(|(a, d)| a + d).collect();
    let y: Vec<f64> = state.y.iter().zip(&report.delta_y).map(|(a, d)| a + d).collect();
    if !all_finite(&x) || !all_finite(&y) {
        report.diverged = true;
        report.loss_after = f64::NAN;
        return report;
    }
    report.loss_after = game.value(&x, &y).unwrap_or(f64::NAN);
    state.x = x;
    state.y = y;
    state.t += 1;
    report
}

/// `x <- x - eta_x grad_x f`, `y <- y + eta_y grad_y f`.
pub fn simgd_step(
    game: &ZeroSumGame,
    state: &mut OptimizerState,
    steps: StepSizes,
) -> Result<StepReport, OptimError> {
    let Some((f, gx, gy)) = grads_or_diverge(game, state)? else {
        return Ok(StepReport::diverged(f64::NAN));
    };
    let report = StepReport {
        delta_x: gx.iter().map(|g| -steps.eta_x * g).collect(),
        delta_y: gy.iter().map(|g| steps.eta_y * g).collect(),
        loss_before: f,
        grad_norm_x: norm(&gx),
        grad_norm_y: norm(&gy),
        ..StepReport::default()
    };
    Ok(commit(game, state, report))
}

/// Trains one player while the other is held fixed: descent for `X`,
/// ascent for `Y`.
pub fn frozen_step(
    game: &ZeroSumGame,
    state: &mut OptimizerState,
    player: Player,
    eta: f64,
) -> Result<StepReport, OptimError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(OptimError::InvalidHyper(format!("eta = {eta}")));
    }
    let Some((f, gx, gy)) = grads_or_diverge(game, state)? else {
        return Ok(StepReport::diverged(f64::NAN));
    };
    let (delta_x, delta_y) = match player {
        Player::X => (gx.iter().map(|g| -eta * g).collect(), vec![0.0; gy.len()]),
        Player::Y => (vec![0.0; gx.len()], gy.iter().map(|g| eta * g).collect()),
    };
    let report = StepReport {
        delta_x,
        delta_y,
        loss_before: f,
        grad_norm_x: norm(&gx),
        grad_norm_y: norm(&gy),
        ..StepReport::default()
    };
    Ok(commit(game, state, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamHyper {
    fn validate(&self) -> Result<(), OptimError> {
        let ok = self.alpha > 0.0
            && self.eps > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && self.beta2 > 0.0
            && self.beta2 < 1.0;
        if ok {
            Ok(())
        } else {
            Err(OptimError::InvalidHyper(format!("{self:?}")))
        }
    }
}

/// One bias-corrected Adam step on caller-supplied gradients.
///
/// `grad_x` is descended, `grad_y` ascended; pass `None` to leave a player
/// untouched. The step counter advances once.
pub fn adam_update(
    state: &mut OptimizerState,
    grad_x: Option<&[f64]>,
    grad_y: Option<&[f64]>,
    hyper: AdamHyper,
) -> Result<(Vec<f64>, Vec<f64>), OptimError> {
    hyper.validate()?;
    let t = state.t + 1;
    let Moments::Adam { m_x, v_x, m_y, v_y } = &mut state.moments else {
        return Err(OptimError::MissingMoments("Adam"));
    };
    let bc1 = 1.0 - hyper.beta1.powf(t as f64);
    let bc2 = 1.0 - hyper.beta2.powf(t as f64);
    let update = |g: Option<&[f64]>, m: &mut [f64], v: &mut [f64], sign: f64| -> Vec<f64> {
        let Some(g) = g else {
            return vec![0.0; m.len()];
        };
        g.iter()
            .zip(m.iter_mut().zip(v.iter_mut()))
            .map(|(&g, (m, v))| {
                *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
                *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                sign * hyper.alpha * m_hat / (v_hat.sqrt() + hyper.eps)
            })
            .collect()
    };
    let dx = update(grad_x, m_x, v_x, -1.0);
    let dy = update(grad_y, m_y, v_y, 1.0);
    Ok((dx, dy))
}

/// Adam on the game's own payoff; `None` updates both players simultaneously.
pub fn adam_step(
    game: &ZeroSumGame,
    state: &mut OptimizerState,
    player: Option<Player>,
    hyper: AdamHyper,
) -> Result<StepReport, OptimError> {
    let Some((f, gx, gy)) = grads_or_diverge(game, state)? else {
        return Ok(StepReport::diverged(f64::NAN));
    };
    let use_x = player != Some(Player::Y);
    let use_y = player != Some(Player::X);
    adam_step_with_grads(game, state, f, &gx, &gy, use_x, use_y, hyper)
}

/// Adam step where the gradients were computed elsewhere (e.g. a separate
/// generator objective). Moments are only committed when the step is finite.
#[allow(clippy::too_many_arguments)]
pub fn adam_step_with_grads(
    game: &ZeroSumGame,
    state: &mut OptimizerState,
    loss: f64,
    gx: &[f64],
    gy: &[f64],
    use_x: bool,
    use_y: bool,
    hyper: AdamHyper,
) -> Result<StepReport, OptimError> {
    let mut trial = state.clone();
    let (dx, dy) = adam_update(
        &mut trial,
        use_x.then_some(gx),
        use_y.then_some(gy),
        hyper,
    )?;
    let report = StepReport {
        delta_x: dx,
        delta_y: dy,
        loss_before: loss,
        grad_norm_x: norm(gx),
        grad_norm_y: norm(gy),
        ..StepReport::default()
    };
    let report = commit(game, &mut trial, report);
    if !report.diverged {
        *state = trial;
    }
    Ok(report)
}

/// Tolerances for the inner conjugate-gradient solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgSettings {
    pub tol: f64,
    /// Iterations allowed beyond the system dimension.
    pub slack: usize,
}

impl Default for CgSettings {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            slack: ITER_SLACK,
        }
    }
}

fn op_err(e: AutodiffError) -> LinsolveError {
    LinsolveError::Operator(Box::new(e))
}

fn is_nonfinite(e: &OptimError) -> bool {
    matches!(
        e,
        OptimError::Autodiff(AutodiffError::NonFinite { .. })
            | OptimError::Linsolve(LinsolveError::NonFinite { .. })
    ) || matches!(e, OptimError::Linsolve(LinsolveError::Operator(inner))
        if matches!(inner.downcast_ref::<AutodiffError>(), Some(AutodiffError::NonFinite { .. })))
}

/// Nash equilibrium of the local bilinear game with diagonal step-size
/// matrices `A_x`, `A_y`:
///
/// ```text
/// dx = -A_x^{1/2} (I + A_x^{1/2} D_xy A_y D_yx A_x^{1/2})^{-1} A_x^{1/2} (g_x + D_xy A_y g_y)
/// dy =  A_y^{1/2} (I + A_y^{1/2} D_yx A_x D_xy A_y^{1/2})^{-1} A_y^{1/2} (g_y - D_yx A_x g_x)
/// ```
///
/// With `A_x = A_y = eta I` this is the CGD update. Exposed so callers can
/// inject constant diagonals.
pub fn competitive_step_diag(
    game: &ZeroSumGame,
    state: &mut OptimizerState,
    a_x: &[f64],
    a_y: &[f64],
    cg: CgSettings,
) -> Result<StepReport, OptimError> {
    let Some((f, gx, gy)) = grads_or_diverge(game, state)? else {
        return Ok(StepReport::diverged(f64::NAN));
    };
    match competitive_deltas(game, state, &gx, &gy, a_x, a_y, cg) {
        Ok(mut report) => {
            report.loss_before = f;
            Ok(commit(game, state, report))
        }
        Err(e) if is_nonfinite(&e) => Ok(StepReport::diverged(f)),
        Err(e) => Err(e),
    }
}

fn competitive_deltas(
    game: &ZeroSumGame,
    state: &OptimizerState,
    gx: &[f64],
    gy: &[f64],
    a_x: &[f64],
    a_y: &[f64],
    cg: CgSettings,
) -> Result<StepReport, OptimError> {
    let (x, y) = (state.x.as_slice(), state.y.as_slice());
    if a_x.len() != x.len() || a_y.len() != y.len() {
        return Err(OptimError::DimensionMismatch {
            x: a_x.len(),
            y: a_y.len(),
            gx: x.len(),
            gy: y.len(),
        });
    }
    if a_x.iter().chain(a_y).any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(OptimError::InvalidHyper(
            "step-size diagonals must be positive".into(),
        ));
    }
    let d_xy = |v: &[f64]| game.d_xy(x, y, v).map_err(op_err);
    let d_yx = |u: &[f64]| game.d_yx(x, y, u).map_err(op_err);
    let sx: Vec<f64> = a_x.iter().map(|a| a.sqrt()).collect();
    let sy: Vec<f64> = a_y.iter().map(|a| a.sqrt()).collect();

    let ay_gy: Vec<f64> = a_y.iter().zip(gy).map(|(a, g)| a * g).collect();
    let cross_x = d_xy(&ay_gy)?;
    let rhs_x: Vec<f64> = (0..x.len()).map(|i| sx[i] * (gx[i] + cross_x[i])).collect();
    let op_x = make_cgd_operator(d_xy, d_yx, a_x, a_y);
    let sol_x = cg_solve(&op_x, &rhs_x, cg.tol, x.len() + cg.slack)?;
    if !sol_x.converged {
        return Err(OptimError::CgNotConverged {
            player: Player::X,
            residual: sol_x.relative_residual,
            iterations: sol_x.iterations,
        });
    }
    let delta_x: Vec<f64> = sol_x.solution.iter().zip(&sx).map(|(u, s)| -s * u).collect();

    let ax_gx: Vec<f64> = a_x.iter().zip(gx).map(|(a, g)| a * g).collect();
    let cross_y = d_yx(&ax_gx)?;
    let rhs_y: Vec<f64> = (0..y.len()).map(|i| sy[i] * (gy[i] - cross_y[i])).collect();
    let op_y = make_cgd_operator(d_yx, d_xy, a_y, a_x);
    let sol_y = cg_solve(&op_y, &rhs_y, cg.tol, y.len() + cg.slack)?;
    if !sol_y.converged {
        return Err(OptimError::CgNotConverged {
            player: Player::Y,
            residual: sol_y.relative_residual,
            iterations: sol_y.iterations,
        });
    }
    let delta_y: Vec<f64> = sol_y.solution.iter().zip(&sy).map(|(v, s)| s * v).collect();

    // dx = -A_x (g_x + D_xy dy),  dy = A_y (g_y + D_yx dx)
    let dxy_dy = d_xy(&delta_y)?;
    let dyx_dx = d_yx(&delta_x)?;
    let res_x: Vec<f64> = (0..x.len())
        .map(|i| delta_x[i] + a_x[i] * (gx[i] + dxy_dy[i]))
        .collect();
    let res_y: Vec<f64> = (0..y.len())
        .map(|i| delta_y[i] - a_y[i] * (gy[i] + dyx_dx[i]))
        .collect();

    Ok(StepReport {
        delta_x,
        delta_y,
        grad_norm_x: norm(gx),
        grad_norm_y: norm(gy),
        cg_iterations: sol_x.iterations + sol_y.iterations,
        nash_residual_x: norm(&res_x),
        nash_residual_y: norm(&res_y),
        ..StepReport::default()
    })
}

/// Competitive gradient descent with one shared step size.
pub fn cgd_step(
    game: &ZeroSumGame,
    state: &mut OptimizerState,
    eta: f64,
) -> Result<StepReport, OptimError> {
    cgd_step_with(game, state, eta, CgSettings::default())
}

pub fn cgd_step_with(
    game: &ZeroSumGame,
    state: &mut OptimizerState,
    eta: f64,
    cg: CgSettings,
) -> Result<StepReport, OptimError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(OptimError::InvalidHyper(format!("eta = {eta}")));
    }
    let a_x = vec![eta; state.x.len()];
    let a_y = vec![eta; state.y.len()];
    competitive_step_diag(game, state, &a_x, &a_y, cg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcgdHyper {
    pub alpha: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AcgdHyper {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            beta2: 0.99,
            eps: 1e-5,
        }
    }
}

/// Per-coordinate step sizes `alpha / (sqrt(v_hat) + eps)` after folding
/// `g^2` into the running second moment `v` (updated in place).
pub fn rms_step_sizes(v: &mut [f64], g: &[f64], t: u64, hyper: AcgdHyper) -> Vec<f64> {
    let bc = 1.0 - hyper.beta2.powf(t as f64);
    v.iter_mut()
        .zip(g)
        .map(|(v, g)| {
            *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
            let v_hat = *v / bc;
            hyper.alpha / (v_hat.sqrt() + hyper.eps)
        })
        .collect()
}

/// Adaptive CGD: RMSProp-style diagonals fed into [`competitive_step_diag`].
///
/// Gradients are computed once and reused for the moment update and the
/// inner solve. The stored `v` is the raw running average; bias correction
/// only enters the step sizes.
pub fn acgd_step(
    game: &ZeroSumGame,
    state: &mut OptimizerState,
    hyper: AcgdHyper,
) -> Result<StepReport, OptimError> {
    acgd_step_with(game, state, hyper, CgSettings::default())
}

pub fn acgd_step_with(
    game: &ZeroSumGame,
    state: &mut OptimizerState,
    hyper: AcgdHyper,
    cg: CgSettings,
) -> Result<StepReport, OptimError> {
    if !(hyper.alpha > 0.0 && hyper.eps > 0.0 && hyper.beta2 > 0.0 && hyper.beta2 < 1.0) {
        return Err(OptimError::InvalidHyper(format!("{hyper:?}")));
    }
    let Some((f, gx, gy)) = grads_or_diverge(game, state)? else {
        return Ok(StepReport::diverged(f64::NAN));
    };
    let Moments::Rms { v_x, v_y } = &state.moments else {
        return Err(OptimError::MissingMoments("second"));
    };
    let (mut v_x, mut v_y) = (v_x.clone(), v_y.clone());
    let t = state.t + 1;
    let a_x = rms_step_sizes(&mut v_x, &gx, t, hyper);
    let a_y = rms_step_sizes(&mut v_y, &gy, t, hyper);
    if !all_finite(&a_x) || !all_finite(&a_y) {
        return Ok(StepReport::diverged(f));
    }
    let mut report = match competitive_deltas(game, state, &gx, &gy, &a_x, &a_y, cg) {
        Ok(r) => r,
        Err(e) if is_nonfinite(&e) => return Ok(StepReport::diverged(f)),
        Err(e) => return Err(e),
    };
    report.loss_before = f;
    let report = commit(game, state, report);
    if !report.diverged {
        state.moments = Moments::Rms { v_x, v_y };
    }
    Ok(report)
}

/// Optimizer selection with hyperparameters, as used by the experiment drivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Simgd { eta_x: f64, eta_y: f64 },
    Cgd { eta: f64 },
    Acgd(AcgdHyper),
    Adam(AdamHyper),
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Simgd { .. } => "simgd",
            OptimizerKind::Cgd { .. } => "cgd",
            OptimizerKind::Acgd(_) => "acgd",
            OptimizerKind::Adam(_) => "adam",
        }
    }

    /// Fresh state with the moment buffers this optimizer needs.
    pub fn init_state(&self, x: Vec<f64>, y: Vec<f64>) -> OptimizerState {
        match self {
            OptimizerKind::Acgd(_) => OptimizerState::with_rms(x, y),
            OptimizerKind::Adam(_) => OptimizerState::with_adam(x, y),
            _ => OptimizerState::new(x, y),
        }
    }

    pub fn step(
        &self,
        game: &ZeroSumGame,
        state: &mut OptimizerState,
    ) -> Result<StepReport, OptimError> {
        match *self {
            OptimizerKind::Simgd { eta_x, eta_y } => {
                simgd_step(game, state, StepSizes::new(eta_x, eta_y)?)
            }
            OptimizerKind::Cgd { eta } => cgd_step(game, state, eta),
            OptimizerKind::Acgd(h) => acgd_step(game, state, h),
            OptimizerKind::Adam(h) => adam_step(game, state, None, h),
        }
    }
}
