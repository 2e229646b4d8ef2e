use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use icrlab::harness::{
    run_freeze, run_projection, run_quadratic, run_stability_map, run_synthgan, ExperimentConfig,
    ExperimentKind, HarnessError, Overrides, Verdict,
};

/// Toy-game experiments for simultaneous and competitive gradient methods.
#[derive(Parser)]
#[command(name = "icrlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// SimGD/CGD on f = a x^2 + b xy + c y^2 from a start point.
    Quadratic(RunArgs),
    /// Seeded runs of the projection game with metastability detection.
    Projection(RunArgs),
    /// Two-dimensional ring GAN with periodic sample dumps.
    Synthgan(RunArgs),
    /// Joint vs discriminator-only training from a checkpoint.
    Freeze(RunArgs),
    /// Spectral-radius map of the quadratic game over step sizes.
    StabilityMap(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration budget.
    #[arg(long)]
    iters: Option<u64>,
    /// simgd, cgd, acgd or adam.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    eta_x: Option<f64>,
    #[arg(long)]
    eta_y: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self, kind: ExperimentKind) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                ExperimentConfig::from_toml_for(&text, kind)?
            }
            None => ExperimentConfig::new(kind),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            iters: self.iters,
            optimizer: self.optimizer.clone(),
            eta_x: self.eta_x,
            eta_y: self.eta_y,
            out_dir: self.out_dir.clone(),
        })?;
        Ok(cfg)
    }
}

/// Runs the experiment; `Ok(true)` when a divergence verdict was reached.
fn run(command: &Command) -> Result<bool, HarnessError> {
    match command {
        Command::Quadratic(a) => {
            let out = run_quadratic(&a.config(ExperimentKind::Quadratic)?)?;
            let s = &out.summary;
            println!(
                "{} after {} steps: (x, y) = ({:e}, {:e}), norm {:e}",
                s.verdict.as_str(),
                s.steps,
                s.final_x,
                s.final_y,
                s.final_norm
            );
            Ok(out.verdict == Verdict::Diverged)
        }
        Command::Projection(a) => {
            let out = run_projection(&a.config(ExperimentKind::Projection)?)?;
            let r = &out.report;
            println!(
                "{}/{} runs with a metastable segment, mean duration {:.0} iterations",
                r.runs_with_segment, r.n_runs, r.mean_segment_duration
            );
            for run in &r.runs {
                println!(
                    "  seed {:>4}: {} segment(s), longest {}, final G = ({:.3}, {:.3})",
                    run.seed,
                    run.segments.len(),
                    run.longest_segment,
                    run.final_g1,
                    run.final_g2
                );
            }
            Ok(out.any_diverged())
        }
        Command::Synthgan(a) => {
            let out = run_synthgan(&a.config(ExperimentKind::Synthgan)?)?;
            let s = &out.summary;
            println!(
                "{} after {} steps: |w_g| = {:.4}, |w_d| = {:.4}",
                s.verdict.as_str(),
                s.steps,
                s.final_norm_w_g,
                s.final_norm_w_d
            );
            Ok(out.verdict == Verdict::Diverged)
        }
        Command::Freeze(a) => {
            let out = run_freeze(&a.config(ExperimentKind::Freeze)?)?;
            println!("{} steps from the checkpoint", out.steps);
            for b in [&out.joint, &out.frozen] {
                println!(
                    "  {:<6} loss improvement {:e}, parameter distance {:e}, prediction distance {:e}",
                    b.name, b.loss_improvement, b.parameter_distance, b.prediction_distance
                );
            }
            Ok(out.joint.diverged || out.frozen.diverged)
        }
        Command::StabilityMap(a) => {
            let out = run_stability_map(&a.config(ExperimentKind::StabilityMap)?)?;
            let stable = out
                .grid
                .cells
                .iter()
                .filter(|c| c.classification == icrlab::Classification::Stable)
                .count();
            println!("{stable}/{} cells stable", out.grid.cells.len());
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
