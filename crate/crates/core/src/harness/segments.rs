use serde::{Deserialize, Serialize};

use super::{HarnessError, Trajectory};

/// A maximal stretch of records during which one generator output stays
/// within a relative tolerance of its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetastabilitySegment {
    pub start_iteration: u64,
    /// Iteration of the last record inside the segment.
    pub end_iteration: u64,
    /// Zero-based generator output component.
    pub component: usize,
    pub mean_abs_deviation: f64,
}

impl MetastabilitySegment {
    pub fn duration(&self) -> u64 {
        self.end_iteration - self.start_iteration
    }
}

/// Maximal runs of consecutive records with `|v - target| / |target| < rel_tol`
/// spanning at least `min_len` records. `min_len` is raised to 2 so that every
/// segment has positive duration.
pub fn detect_segments(
    iterations: &[u64],
    values: &[f64],
    component: usize,
    target: f64,
    rel_tol: f64,
    min_len: usize,
) -> Vec<MetastabilitySegment> {
    let min_len = min_len.max(2);
    let inside = |v: f64| ((v - target) / target).abs() < rel_tol;
    let mut out = Vec::new();
    let mut i = 0;
    let n = values.len().min(iterations.len());
    while i < n {
        if !inside(values[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && inside(values[i]) {
            i += 1;
        }
        if i - start >= min_len {
            let dev = values[start..i]
                .iter()
                .map(|v| (v - target).abs())
                .sum::<f64>()
                / (i - start) as f64;
            out.push(MetastabilitySegment {
                start_iteration: iterations[start],
                end_iteration: iterations[i - 1],
                component,
                mean_abs_deviation: dev,
            });
        }
    }
    out
}

/// Segments of generator output `component` (column `g1`, `g2`, ...).
/// A trajectory without that column has none.
pub fn detect_metastable_segments(
    traj: &Trajectory,
    component: usize,
    target: f64,
    rel_tol: f64,
    min_len: usize,
) -> Vec<MetastabilitySegment> {
    match traj.column(&format!("g{}", component + 1)) {
        Some(values) => detect_segments(
            &traj.iterations(),
            &values,
            component,
            target,
            rel_tol,
            min_len,
        ),
        None => Vec::new(),
    }
}

/// `sqrt(sum_x (D_t(x) - D_c(x))^2)` over the reference points.
pub fn prediction_distance<T, C, P>(
    model_t: T,
    model_c: C,
    reference: &[P],
) -> Result<f64, HarnessError>
where
    T: Fn(&P) -> f64,
    C: Fn(&P) -> f64,
{
    if reference.is_empty() {
        return Err(HarnessError::Invalid(
            "prediction distance needs a non-empty reference set".into(),
        ));
    }
    Ok(reference
        .iter()
        .map(|p| {
            let d = model_t(p) - model_c(p);
            d * d
        })
        .sum::<f64>()
        .sqrt())
}
