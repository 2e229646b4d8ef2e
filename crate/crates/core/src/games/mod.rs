//! Zero-sum payoffs: the quadratic game, the 28-parameter projection GAN and
//! a small synthetic 2-D GAN.
//!
//! Every game is a single scalar `f(x, y)`; `x` minimizes and `y` maximizes.

mod projection;
mod quadratic;
mod synthgan;

pub use projection::{
    discriminator_forward, generator_forward, init_projection_weights, projection_loss,
    record_projection_discriminator, record_projection_generator, ProjectionGame,
    PROJECTION_PARAMS,
};
pub use quadratic::QuadraticGame;
pub use synthgan::{
    gaussian_ring, nonsat_loss_from_outputs, ogan_loss_from_outputs, wgan_loss_from_outputs,
    DiscriminatorHead, Minibatch, SynthGanGame, PROB_CLAMP,
};

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, ComputationGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("minimizing and maximizing groups must differ (both `{0}`)")]
    SameGroup(String),
    #[error("payoff graph must have exactly the two player groups, found {0}")]
    GroupCount(usize),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Which player an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    /// The minimizing player (generator).
    X,
    /// The maximizing player (discriminator).
    Y,
}

/// A payoff graph together with the split of its inputs into the two players.
#[derive(Debug, Clone)]
pub struct ZeroSumGame {
    payoff: ComputationGraph,
    min_group: String,
    max_group: String,
    x_first: bool,
}

impl ZeroSumGame {
    pub fn new(
        payoff: ComputationGraph,
        min_group: &str,
        max_group: &str,
    ) -> Result<Self, GameError> {
        if min_group == max_group {
            return Err(GameError::SameGroup(min_group.to_string()));
        }
        let n = payoff.group_names().count();
        if n != 2 {
            return Err(GameError::GroupCount(n));
        }
        let xi = payoff.group_index(min_group)?;
        payoff.group_index(max_group)?;
        Ok(Self {
            payoff,
            min_group: min_group.to_string(),
            max_group: max_group.to_string(),
            x_first: xi == 0,
        })
    }

    pub fn payoff(&self) -> &ComputationGraph {
        &self.payoff
    }

    pub fn min_group(&self) -> &str {
        &self.min_group
    }

    pub fn max_group(&self) -> &str {
        &self.max_group
    }

    fn idx(&self, p: Player) -> usize {
        match (p, self.x_first) {
            (Player::X, true) | (Player::Y, false) => 0,
            _ => 1,
        }
    }

    pub fn dim(&self, p: Player) -> usize {
        self.payoff.group_dim(self.idx(p))
    }

    fn point<'a>(&self, x: &'a [f64], y: &'a [f64]) -> [&'a [f64]; 2] {
        if self.x_first {
            [x, y]
        } else {
            [y, x]
        }
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> Result<f64, AutodiffError> {
        self.payoff.eval_at(&self.point(x, y))
    }

    /// `(f, grad_x f, grad_y f)`.
    pub fn value_and_grads(
        &self,
        x: &[f64],
        y: &[f64],
    ) -> Result<(f64, Vec<f64>, Vec<f64>), AutodiffError> {
        let (v, mut g) = self.payoff.value_and_grad_at(&self.point(x, y))?;
        let second = g.pop().expect("two groups");
        let first = g.pop().expect("two groups");
        Ok(if self.x_first {
            (v, first, second)
        } else {
            (v, second, first)
        })
    }

    /// `D_xy f * v` for `v` in the maximizing player's space.
    pub fn d_xy(&self, x: &[f64], y: &[f64], v: &[f64]) -> Result<Vec<f64>, AutodiffError> {
        self.payoff
            .hvp_at(&self.point(x, y), self.idx(Player::Y), v, self.idx(Player::X))
    }

    /// `D_yx f * u` for `u` in the minimizing player's space.
    pub fn d_yx(&self, x: &[f64], y: &[f64], u: &[f64]) -> Result<Vec<f64>, AutodiffError> {
        self.payoff
            .hvp_at(&self.point(x, y), self.idx(Player::X), u, self.idx(Player::Y))
    }

    /// `D_pp f * v` for the diagonal block of one player.
    pub fn d_self(
        &self,
        player: Player,
        x: &[f64],
        y: &[f64],
        v: &[f64],
    ) -> Result<Vec<f64>, AutodiffError> {
        let i = self.idx(player);
        self.payoff.hvp_at(&self.point(x, y), i, v, i)
    }
}

/// Uniform(-1, 1) scaled by `1 / sqrt(fan_in)`.
pub(crate) fn scaled_uniform<R: Rng + ?Sized>(rng: &mut R, fan_in: usize) -> f64 {
    let s = 1.0 / (fan_in as f64).sqrt();
    rng.random_range(-1.0..1.0) * s
}
