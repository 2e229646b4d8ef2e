//! Matrix-free conjugate gradient for the symmetric positive definite systems
//! that arise in competitive updates.

use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-10;
/// Iterations allowed on top of the system dimension.
pub const ITER_SLACK: usize = 5;

#[derive(Debug, Error)]
pub enum LinsolveError {
    #[error("operator of dimension {op} applied to a vector of length {rhs}")]
    DimensionMismatch { op: usize, rhs: usize },
    #[error("conjugate gradient requires an operator declared SPD")]
    NotSpd,
    #[error("non-finite iterate at CG iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("operator application failed: {0}")]
    Operator(#[source] Box<dyn std::error::Error + Send + Sync>),
}

type ApplyFn<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>, LinsolveError> + 'a;

/// A linear map known only through its action on vectors.
pub struct LinearOperator<'a> {
    dim: usize,
    spd: bool,
    apply: Box<ApplyFn<'a>>,
}

impl<'a> LinearOperator<'a> {
    pub fn new<F>(dim: usize, spd: bool, apply: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<f64>, LinsolveError> + 'a,
    {
        Self {
            dim,
            spd,
            apply: Box::new(apply),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(dim, true, |v| Ok(v.to_vec()))
    }

    /// Wraps a dense row-major square matrix.
    pub fn dense(matrix: &'a nalgebra::DMatrix<f64>, spd: bool) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols());
        Self::new(matrix.nrows(), spd, move |v| {
            Ok((matrix * nalgebra::DVector::from_column_slice(v))
                .as_slice()
                .to_vec())
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_spd(&self) -> bool {
        self.spd
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, LinsolveError> {
        if v.len() != self.dim {
            return Err(LinsolveError::DimensionMismatch {
                op: self.dim,
                rhs: v.len(),
            });
        }
        (self.apply)(v)
    }
}

/// `z -> z + A_x^{1/2} D_xy A_y D_yx A_x^{1/2} z` for diagonal `A_x`, `A_y`.
///
/// `hvp_xy` maps the second player's space into the first's (`D_xy v`),
/// `hvp_yx` the reverse. The Gram-type term makes the operator SPD whenever
/// `D_yx = D_xy^T`.
pub fn make_cgd_operator<'a, F, G>(
    hvp_xy: F,
    hvp_yx: G,
    a_x: &'a [f64],
    a_y: &'a [f64],
) -> LinearOperator<'a>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, LinsolveError> + 'a,
    G: Fn(&[f64]) -> Result<Vec<f64>, LinsolveError> + 'a,
{
    assert!(
        a_x.iter().chain(a_y).all(|&a| a > 0.0 && a.is_finite()),
        "step-size diagonals must be strictly positive"
    );
    let sqrt_x: Vec<f64> = a_x.iter().map(|a| a.sqrt()).collect();
    LinearOperator::new(a_x.len(), true, move |z| {
        let u: Vec<f64> = z.iter().zip(&sqrt_x).map(|(z, s)| z * s).collect();
        let w = hvp_yx(&u)?;
        let w: Vec<f64> = w.iter().zip(a_y).map(|(w, a)| w * a).collect();
        let r = hvp_xy(&w)?;
        Ok(z.iter()
            .zip(&r)
            .zip(&sqrt_x)
            .map(|((z, r), s)| z + s * r)
            .collect())
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub solution: Vec<f64>,
    /// `||A x - b|| / ||b||` of the returned solution.
    pub relative_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Conjugate gradient from a zero initial guess.
///
/// Stops when the recursively updated residual drops below `tol * ||rhs||`,
/// then reports the true residual. If `max_iter` runs out, returns the
/// iterate with the smallest residual seen and `converged = false`.
pub fn cg_solve(
    op: &LinearOperator<'_>,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveResult, LinsolveError> {
    if !op.is_spd() {
        return Err(LinsolveError::NotSpd);
    }
    let n = op.dim();
    if rhs.len() != n {
        return Err(LinsolveError::DimensionMismatch { op: n, rhs: rhs.len() });
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(LinsolveError::NonFinite { iteration: 0 });
    }
    let b_norm = norm(rhs);
    if b_norm == 0.0 {
        return Ok(SolveResult {
            solution: vec![0.0; n],
            relative_residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut best = (x.clone(), 1.0);
    let mut iterations = 0;
    while iterations < max_iter {
        if rr.sqrt() <= tol * b_norm {
            break;
        }
        let ap = op.apply(&p)?;
        let pap = dot(&p, &ap);
        iterations += 1;
        if !(pap > 0.0) {
            // breakdown: keep the best iterate so far
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if x.iter().chain(&r).any(|v| !v.is_finite()) {
            return Err(LinsolveError::NonFinite { iteration: iterations });
        }
        let rr_new = dot(&r, &r);
        let rel = rr_new.sqrt() / b_norm;
        if rel < best.1 {
            best = (x.clone(), rel);
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }

    let solution = best.0;
    let ax = op.apply(&solution)?;
    let residual: Vec<f64> = ax.iter().zip(rhs).map(|(a, b)| a - b).collect();
    let relative_residual = norm(&residual) / b_norm;
    Ok(SolveResult {
        solution,
        relative_residual,
        iterations,
        converged: relative_residual <= tol,
    })
}

/// [`cg_solve`] with the default tolerance and `dim + ITER_SLACK` iterations.
pub fn cg_solve_default(
    op: &LinearOperator<'_>,
    rhs: &[f64],
) -> Result<SolveResult, LinsolveError> {
    cg_solve(op, rhs, DEFAULT_TOL, op.dim() + ITER_SLACK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn identity_solves_in_one_iteration() {
        let op = LinearOperator::identity(4);
        let b = [1.0, -2.0, 3.0, 0.5];
        let r = cg_solve_default(&op, &b).unwrap();
        assert_eq!(r.solution, b.to_vec());
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
    }

    #[test]
    fn scalar_division() {
        let op = LinearOperator::new(1, true, |z| Ok(vec![2.0 * z[0]]));
        let r = cg_solve_default(&op, &[24.0]).unwrap();
        assert_eq!(r.solution, vec![12.0]);
    }

    #[test]
    fn zero_rhs_short_circuits() {
        let op = LinearOperator::identity(3);
        let r = cg_solve_default(&op, &[0.0; 3]).unwrap();
        assert_eq!(r.solution, vec![0.0; 3]);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn rejects_non_spd_and_bad_rhs() {
        let op = LinearOperator::new(2, false, |z| Ok(z.to_vec()));
        assert!(matches!(cg_solve_default(&op, &[1.0, 1.0]), Err(LinsolveError::NotSpd)));
        let op = LinearOperator::identity(2);
        assert!(matches!(
            cg_solve_default(&op, &[1.0]),
            Err(LinsolveError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            cg_solve_default(&op, &[f64::NAN, 1.0]),
            Err(LinsolveError::NonFinite { .. })
        ));
    }

    #[test]
    fn non_convergence_returns_best_iterate() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 10.0, 100.0]));
        let op = LinearOperator::dense(&m, true);
        let r = cg_solve(&op, &[1.0, 1.0, 1.0], 1e-14, 1).unwrap();
        assert!(!r.converged);
        assert!(r.relative_residual <= 1.0);
    }

    #[test]
    fn cgd_operator_scalar_case() {
        // eta = 0.1, b = 10: 1 + 0.01 * 100 = 2
        let op = make_cgd_operator(
            |v| Ok(vec![10.0 * v[0]]),
            |v| Ok(vec![10.0 * v[0]]),
            &[0.1],
            &[0.1],
        );
        let out = op.apply(&[3.0]).unwrap();
        assert!((out[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn cgd_operator_without_interaction_is_identity() {
        let op = make_cgd_operator(
            |v| Ok(vec![0.0; v.len() - 1]),
            |v| Ok(vec![0.0; v.len() + 1]),
            &[0.3, 0.2],
            &[0.5, 0.5, 0.5],
        );
        assert_eq!(op.apply(&[1.5, -2.0]).unwrap(), vec![1.5, -2.0]);
    }
}
