//! Local stability of the SimGD and CGD update maps.
//!
//! A fixed point of `z -> z + F(z)` is locally stable when the Jacobian of
//! the map has spectral radius below one. For SimGD the Jacobian is `I - M`
//! with
//!
//! ```text
//! M = [[ eta_x D_xx,  eta_x D_xy],
//!      [-eta_y D_yx, -eta_y D_yy]]
//! ```
//!
//! and for scalar players `M` has the characteristic polynomial
//! `l^2 - (eta_x a - eta_y c) l + eta_x eta_y (b^2 - a c)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::games::{Player, ZeroSumGame};
use crate::optimizers::{
    competitive_step_diag, CgSettings, OptimError, OptimizerState, StepSizes,
};

/// Half-width of the band around spectral radius 1 classified as marginal.
pub const MARGINAL_BAND: f64 = 1e-9;
/// Largest matrix handed to the eigen solver.
pub const MAX_EIGEN_DIM: usize = 128;
/// Central-difference step for numerically differentiated update maps.
pub const JACOBIAN_FD_STEP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("matrix is {rows}x{cols}; expected square with dim <= {MAX_EIGEN_DIM}")]
    BadShape { rows: usize, cols: usize },
    #[error("eigenvalue iteration did not converge")]
    EigenNoConvergence,
    #[error("update map diverged while differentiating at coordinate {0}")]
    Diverged(usize),
    #[error("empty step-size grid")]
    EmptyGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Stable,
    Unstable,
    Marginal,
}

impl Classification {
    pub fn from_radius(rho: f64) -> Self {
        if rho < 1.0 - MARGINAL_BAND {
            Classification::Stable
        } else if rho > 1.0 + MARGINAL_BAND {
            Classification::Unstable
        } else {
            Classification::Marginal
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Stable => "stable",
            Classification::Unstable => "unstable",
            Classification::Marginal => "marginal",
        }
    }
}

/// Which update map to linearize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    Simgd,
    /// Competitive step with `A_x = eta_x I`, `A_y = eta_y I` (CGD when equal).
    Cgd,
}

/// `(linear, constant)` coefficients of the monic characteristic polynomial
/// of `M` for scalar players with `a = D_xx`, `b = D_xy`, `c = D_yy`.
pub fn char_poly_1d(a: f64, b: f64, c: f64, eta_x: f64, eta_y: f64) -> (f64, f64) {
    (-(eta_x * a - eta_y * c), eta_x * eta_y * (b * b - a * c))
}

/// Both roots of [`char_poly_1d`].
pub fn eigvals_of_m_1d(a: f64, b: f64, c: f64, eta_x: f64, eta_y: f64) -> [Complex64; 2] {
    let (p, q) = char_poly_1d(a, b, c, eta_x, eta_y);
    let disc = Complex64::new(p * p - 4.0 * q, 0.0).sqrt();
    [(-p + disc) / 2.0, (-p - disc) / 2.0]
}

/// Eigenvalue moduli `|1 - l|` of the SimGD update map `I - M`.
pub fn update_map_moduli_1d(a: f64, b: f64, c: f64, eta_x: f64, eta_y: f64) -> [f64; 2] {
    eigvals_of_m_1d(a, b, c, eta_x, eta_y).map(|l| (Complex64::new(1.0, 0.0) - l).norm())
}

/// `eta_x a > eta_y c` and `eta_x eta_y b^2 > eta_x eta_y a c`: both roots
/// of `M` then have positive real part.
pub fn positive_real_part_check(a: f64, b: f64, c: f64, eta_x: f64, eta_y: f64) -> bool {
    eta_x * a > eta_y * c && eta_x * eta_y * b * b > eta_x * eta_y * a * c
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>, StabilityError> {
    let (rows, cols) = m.shape();
    if rows != cols || rows == 0 || rows > MAX_EIGEN_DIM {
        return Err(StabilityError::BadShape { rows, cols });
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or(StabilityError::EigenNoConvergence)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64, StabilityError> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max))
}

/// Jacobian of one update step at `(x, y)`, ordered `[x; y]`.
pub fn update_map_jacobian(
    game: &ZeroSumGame,
    rule: UpdateRule,
    steps: StepSizes,
    x: &[f64],
    y: &[f64],
) -> Result<DMatrix<f64>, StabilityError> {
    let (nx, ny) = (x.len(), y.len());
    let n = nx + ny;
    if n > MAX_EIGEN_DIM {
        return Err(StabilityError::BadShape { rows: n, cols: n });
    }
    match rule {
        UpdateRule::Simgd => simgd_jacobian(game, steps, x, y),
        UpdateRule::Cgd => cgd_jacobian(game, steps, x, y),
    }
}

fn simgd_jacobian(
    game: &ZeroSumGame,
    steps: StepSizes,
    x: &[f64],
    y: &[f64],
) -> Result<DMatrix<f64>, StabilityError> {
    let (nx, ny) = (x.len(), y.len());
    let mut j = DMatrix::identity(nx + ny, nx + ny);
    let mut e_x = vec![0.0; nx];
    for k in 0..nx {
        e_x[k] = 1.0;
        let col_xx = game.d_self(Player::X, x, y, &e_x)?;
        let col_yx = game.d_yx(x, y, &e_x)?;
        for i in 0..nx {
            j[(i, k)] -= steps.eta_x * col_xx[i];
        }
        for i in 0..ny {
            j[(nx + i, k)] += steps.eta_y * col_yx[i];
        }
        e_x[k] = 0.0;
    }
    let mut e_y = vec![0.0; ny];
    for k in 0..ny {
        e_y[k] = 1.0;
        let col_xy = game.d_xy(x, y, &e_y)?;
        let col_yy = game.d_self(Player::Y, x, y, &e_y)?;
        for i in 0..nx {
            j[(i, nx + k)] -= steps.eta_x * col_xy[i];
        }
        for i in 0..ny {
            j[(nx + i, nx + k)] += steps.eta_y * col_yy[i];
        }
        e_y[k] = 0.0;
    }
    Ok(j)
}

fn cgd_jacobian(
    game: &ZeroSumGame,
    steps: StepSizes,
    x: &[f64],
    y: &[f64],
) -> Result<DMatrix<f64>, StabilityError> {
    let (nx, ny) = (x.len(), y.len());
    let n = nx + ny;
    let a_x = vec![steps.eta_x; nx];
    let a_y = vec![steps.eta_y; ny];
    // tight inner solves keep CG error well below the FD truncation error
    let cg = CgSettings {
        tol: 1e-14,
        slack: n + 5,
    };
    let step_map = |z: &[f64], k: usize| -> Result<Vec<f64>, StabilityError> {
        let mut s = OptimizerState::new(z[..nx].to_vec(), z[nx..].to_vec());
        let r = match competitive_step_diag(game, &mut s, &a_x, &a_y, cg) {
            Err(OptimError::CgNotConverged { .. }) => {
                let cg = CgSettings { tol: 1e-12, ..cg };
                competitive_step_diag(game, &mut s, &a_x, &a_y, cg)?
            }
            other => other?,
        };
        if r.diverged {
            return Err(StabilityError::Diverged(k));
        }
        Ok(s.x.into_iter().chain(s.y).collect())
    };
    let base: Vec<f64> = x.iter().chain(y).copied().collect();
    let mut j = DMatrix::zeros(n, n);
    for k in 0..n {
        let h = JACOBIAN_FD_STEP * (1.0 + base[k].abs());
        let mut zp = base.clone();
        let mut zm = base.clone();
        zp[k] += h;
        zm[k] -= h;
        let fp = step_map(&zp, k)?;
        let fm = step_map(&zm, k)?;
        for i in 0..n {
            j[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(j)
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub fixed_point: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    pub eigenvalues: Vec<Complex64>,
    pub spectral_radius: f64,
    pub classification: Classification,
}

pub fn analyze(
    game: &ZeroSumGame,
    rule: UpdateRule,
    steps: StepSizes,
    x: &[f64],
    y: &[f64],
) -> Result<StabilityReport, StabilityError> {
    let jacobian = update_map_jacobian(game, rule, steps, x, y)?;
    let eigenvalues = eigenvalues(&jacobian)?;
    let spectral_radius = eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max);
    Ok(StabilityReport {
        fixed_point: x.iter().chain(y).copied().collect(),
        jacobian,
        eigenvalues,
        spectral_radius,
        classification: Classification::from_radius(spectral_radius),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub eta_x: f64,
    pub eta_y: f64,
    pub spectral_radius: f64,
    pub classification: Classification,
}

/// Per-cell stability over an `eta_x` by `eta_y` grid, `eta_x`-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub eta_x: Vec<f64>,
    pub eta_y: Vec<f64>,
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn cell(&self, ix: usize, iy: usize) -> &SweepCell {
        &self.cells[ix * self.eta_y.len() + iy]
    }

    /// CSV with header `eta_x,eta_y,spectral_radius,classification`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["eta_x", "eta_y", "spectral_radius", "classification"])?;
        for c in &self.cells {
            out.write_record([
                c.eta_x.to_string(),
                c.eta_y.to_string(),
                c.spectral_radius.to_string(),
                c.classification.as_str().to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn stability_sweep(
    game: &ZeroSumGame,
    rule: UpdateRule,
    eta_x: &[f64],
    eta_y: &[f64],
    x: &[f64],
    y: &[f64],
) -> Result<SweepGrid, StabilityError> {
    if eta_x.is_empty() || eta_y.is_empty() {
        return Err(StabilityError::EmptyGrid);
    }
    let pairs: Vec<(f64, f64)> = eta_x
        .iter()
        .flat_map(|&ex| eta_y.iter().map(move |&ey| (ex, ey)))
        .collect();
    let cells = pairs
        .par_iter()
        .map(|&(ex, ey)| {
            let steps = StepSizes::new(ex, ey)?;
            let r = analyze(game, rule, steps, x, y)?;
            Ok(SweepCell {
                eta_x: ex,
                eta_y: ey,
                spectral_radius: r.spectral_radius,
                classification: r.classification,
            })
        })
        .collect::<Result<Vec<_>, StabilityError>>()?;
    Ok(SweepGrid {
        eta_x: eta_x.to_vec(),
        eta_y: eta_y.to_vec(),
        cells,
    })
}
