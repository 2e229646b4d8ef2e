use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::optimizers::StepReport;

use super::{csv_err, HarnessError};

/// One recorded iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub iteration: u64,
    /// Payoff at this iterate.
    pub loss: f64,
    pub grad_norm_x: f64,
    pub grad_norm_y: f64,
    /// Experiment-specific columns: parameters, or norms and outputs.
    pub values: Vec<f64>,
    /// CG iterations of the step taken from this iterate (0 for explicit
    /// methods and for the final row).
    pub cg_iterations: usize,
    /// Largest local-Nash residual of that step.
    pub nash_residual: f64,
}

/// Recorded iterates of one run.
///
/// CSV columns: `iteration,loss,grad_norm_x,grad_norm_y`, then the
/// experiment's value columns, then `cg_iterations,nash_residual`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub value_columns: Vec<String>,
    pub stride: u64,
    pub budget: u64,
    pub records: Vec<Record>,
}

impl Trajectory {
    pub fn new(value_columns: Vec<String>, stride: u64, budget: u64) -> Self {
        Self {
            value_columns,
            stride: stride.max(1),
            budget,
            records: Vec::new(),
        }
    }

    pub fn max_rows(&self) -> usize {
        (self.budget / self.stride) as usize + 1
    }

    /// Whether iterate `k` falls on the recording stride.
    pub fn wants(&self, k: u64) -> bool {
        k % self.stride == 0
    }

    /// Appends a row; ignored if it would break the ordering or row cap.
    pub fn push(&mut self, record: Record) -> bool {
        debug_assert_eq!(record.values.len(), self.value_columns.len());
        let ordered = self
            .records
            .last()
            .is_none_or(|r| r.iteration < record.iteration);
        if ordered && self.records.len() < self.max_rows() {
            self.records.push(record);
            true
        } else {
            false
        }
    }

    pub(crate) fn push_step(&mut self, k: u64, values: Vec<f64>, report: &StepReport) {
        self.push(Record {
            iteration: k,
            loss: report.loss_before,
            grad_norm_x: report.grad_norm_x,
            grad_norm_y: report.grad_norm_y,
            values,
            cg_iterations: report.cg_iterations,
            nash_residual: report.nash_residual_x.max(report.nash_residual_y),
        });
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.value_columns.iter().position(|c| c == name)?;
        Some(self.records.iter().map(|r| r.values[i]).collect())
    }

    pub fn iterations(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.iteration).collect()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["iteration", "loss", "grad_norm_x", "grad_norm_y"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend(self.value_columns.iter().cloned());
        h.push("cg_iterations".into());
        h.push("nash_residual".into());
        h
    }

    pub fn write_csv_to<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header())?;
        for r in &self.records {
            let mut row = vec![
                r.iteration.to_string(),
                r.loss.to_string(),
                r.grad_norm_x.to_string(),
                r.grad_norm_y.to_string(),
            ];
            row.extend(r.values.iter().map(f64::to_string));
            row.push(r.cg_iterations.to_string());
            row.push(r.nash_residual.to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
        self.write_csv_to(std::io::BufWriter::new(file))
            .map_err(|e| csv_err(path, e))
    }
}
