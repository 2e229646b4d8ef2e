//! Two-player zero-sum optimization laboratory.
//!
//! - [`autodiff`]: recorded scalar graphs with gradients and matrix-free
//!   mixed Hessian-vector products
//! - [`games`]: quadratic, projection and synthetic GAN payoffs
//! - [`optimizers`]: SimGD, single-player GD, Adam, CGD and ACGD
//! - [`linsolve`]: conjugate gradient on implicit SPD operators
//! - [`stability`]: update-map Jacobians, eigenvalues and step-size sweeps
//! - [`harness`]: experiment drivers, configs and CSV/JSON artifacts

pub mod autodiff;
pub mod games;
pub mod linsolve;
pub mod optimizers;
pub mod stability;
pub mod harness;

pub use autodiff::{AutodiffError, ComputationGraph, GraphBuilder, ParamGroup, Var};
pub use games::{
    DiscriminatorHead, Player, ProjectionGame, QuadraticGame, SynthGanGame, ZeroSumGame,
};
pub use optimizers::{
    AcgdHyper, AdamHyper, OptimError, OptimizerKind, OptimizerState, StepReport, StepSizes,
};
pub use stability::{Classification, StabilityReport, SweepGrid, UpdateRule};
