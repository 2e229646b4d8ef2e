use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::AutodiffError;
use crate::games::{DiscriminatorHead, Player, SynthGanGame, ZeroSumGame};
use crate::optimizers::{
    adam_step_with_grads, frozen_step, OptimError, OptimizerKind, OptimizerState, StepReport,
};

use super::drive::push_final;
use super::{
    create_dir, stream_rng, write_dat, write_json, Checkpoint, ExperimentConfig, GameSpec,
    HarnessError, Stream, SynthganSection, Trajectory, Verdict,
};

/// Generated points at one iteration, from a latent set fixed per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDump {
    pub iteration: u64,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthganSummary {
    pub experiment: String,
    pub optimizer: OptimizerKind,
    pub head: DiscriminatorHead,
    pub log_trick: bool,
    pub seed: u64,
    pub verdict: Verdict,
    pub steps: u64,
    pub final_norm_w_g: f64,
    pub final_norm_w_d: f64,
}

#[derive(Debug, Clone)]
pub struct SynthganOutcome {
    pub trajectory: Trajectory,
    pub samples: Vec<SampleDump>,
    pub verdict: Verdict,
    pub steps: u64,
    pub state: OptimizerState,
    pub summary: SynthganSummary,
}

pub(crate) fn synth_game(s: &SynthganSection) -> SynthGanGame {
    SynthGanGame::new(s.head, s.batch_size, s.dataset_seed)
}

pub(crate) fn latents<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)])
        .collect()
}

/// Whether the generator follows `E[-log D(G(z))]` instead of the payoff.
/// Only the Adam driver supports it, and only on the OGAN head.
pub(crate) fn uses_log_trick(log_trick: bool, head: DiscriminatorHead, opt: &OptimizerKind) -> bool {
    log_trick && head == DiscriminatorHead::Ogan && matches!(opt, OptimizerKind::Adam(_))
}

/// One step on a fixed payoff. `disc_only` holds the generator fixed; the
/// discriminator then follows the optimizer's own single-player rule
/// (gradient ascent for SimGD and CGD, Adam for Adam).
pub(crate) fn branch_step(
    zs: &ZeroSumGame,
    nonsat: Option<&crate::autodiff::ComputationGraph>,
    opt: &OptimizerKind,
    state: &mut OptimizerState,
    disc_only: bool,
) -> Result<StepReport, HarnessError> {
    if let (OptimizerKind::Adam(h), Some(gen_graph)) = (opt, nonsat) {
        let (f, gx_payoff, gy) = match zs.value_and_grads(&state.x, &state.y) {
            Ok(v) => v,
            Err(AutodiffError::NonFinite { .. }) => return Ok(diverged_report()),
            Err(e) => return Err(e.into()),
        };
        let gx = if disc_only {
            gx_payoff
        } else {
            match gen_graph.value_and_grad_at(&[&state.x, &state.y]) {
                Ok((_, mut g)) => g.swap_remove(0),
                Err(AutodiffError::NonFinite { .. }) => return Ok(diverged_report()),
                Err(e) => return Err(e.into()),
            }
        };
        return Ok(adam_step_with_grads(
            zs, state, f, &gx, &gy, !disc_only, true, *h,
        )?);
    }
    if !disc_only {
        return Ok(opt.step(zs, state)?);
    }
    Ok(match *opt {
        OptimizerKind::Simgd { eta_y, .. } => frozen_step(zs, state, Player::Y, eta_y)?,
        OptimizerKind::Cgd { eta } => frozen_step(zs, state, Player::Y, eta)?,
        OptimizerKind::Adam(h) => {
            let (f, gx, gy) = match zs.value_and_grads(&state.x, &state.y) {
                Ok(v) => v,
                Err(AutodiffError::NonFinite { .. }) => return Ok(diverged_report()),
                Err(e) => return Err(e.into()),
            };
            adam_step_with_grads(zs, state, f, &gx, &gy, false, true, h)?
        }
        OptimizerKind::Acgd(_) => {
            return Err(OptimError::InvalidHyper(
                "discriminator-only training is defined for simgd, cgd and adam".into(),
            )
            .into())
        }
    })
}

fn diverged_report() -> StepReport {
    StepReport {
        loss_before: f64::NAN,
        loss_after: f64::NAN,
        grad_norm_x: f64::NAN,
        grad_norm_y: f64::NAN,
        diverged: true,
        ..StepReport::default()
    }
}

/// Synthetic ring GAN with a fresh minibatch per step.
///
/// Trajectory value columns: `norm_w_g,norm_w_d,accuracy` (discriminator
/// accuracy on the step's minibatch). Every `synthgan.sample_stride`
/// iterations `synthgan.sample_count` generated points are dumped. Writes
/// `trajectory.csv`, `summary.json`, `samples/samples_<iter>.dat` and
/// `checkpoint.json`.
pub fn run_synthgan(cfg: &ExperimentConfig) -> Result<SynthganOutcome, HarnessError> {
    let s = &cfg.synthgan;
    if s.batch_size == 0 {
        return Err(HarnessError::Invalid("synthgan.batch_size must be positive".into()));
    }
    let sg = synth_game(s);
    let opt = cfg.optimizer();
    let trick = uses_log_trick(s.log_trick, s.head, &opt);
    let (wg, wd) = SynthGanGame::init_weights(&mut stream_rng(cfg.seed, Stream::Init));
    let mut state = opt.init_state(wg, wd);
    let mut batches = stream_rng(cfg.seed, Stream::Minibatch);
    let sample_latents = latents(&mut stream_rng(cfg.seed, Stream::Reference), s.sample_count);
    let sample_stride = s.sample_stride.max(1);
    let dump = |st: &OptimizerState| SampleDump {
        iteration: st.t,
        points: sample_latents
            .iter()
            .map(|&z| SynthGanGame::generator_sample(&st.x, z))
            .collect(),
    };

    let budget = cfg.iterations();
    let mut traj = Trajectory::new(
        ["norm_w_g", "norm_w_d", "accuracy"].map(String::from).to_vec(),
        cfg.stride(),
        budget,
    );
    let mut samples = Vec::new();
    let mut verdict = Verdict::BudgetExhausted;
    let mut steps = 0;
    let mut last = None;
    while steps < budget {
        if state.exceeds_cutoff() {
            verdict = Verdict::Diverged;
            break;
        }
        let k = state.t;
        if k % sample_stride == 0 {
            samples.push(dump(&state));
        }
        let mb = sg.sample_minibatch(&mut batches);
        let zs = sg.game(&mb);
        let nonsat = trick.then(|| sg.nonsat_generator_graph(&mb));
        let snapshot = traj.wants(k).then(|| {
            vec![
                state.norm_x(),
                state.norm_y(),
                sg.discriminator_accuracy(&state.x, &state.y, &mb),
            ]
        });
        let report = branch_step(&zs, nonsat.as_ref(), &opt, &mut state, false)?;
        if let Some(v) = snapshot {
            traj.push_step(k, v, &report);
        }
        if report.diverged {
            verdict = Verdict::Diverged;
            break;
        }
        steps += 1;
        last = Some((zs, mb));
    }
    if verdict == Verdict::BudgetExhausted && state.exceeds_cutoff() {
        verdict = Verdict::Diverged;
    }
    if let Some((zs, mb)) = &last {
        let acc = sg.discriminator_accuracy(&state.x, &state.y, mb);
        push_final(&mut traj, zs, &state, vec![state.norm_x(), state.norm_y(), acc]);
    }
    if samples.last().is_none_or(|d| d.iteration < state.t) {
        samples.push(dump(&state));
    }

    let summary = SynthganSummary {
        experiment: "synthgan".into(),
        optimizer: opt,
        head: s.head,
        log_trick: trick,
        seed: cfg.seed,
        verdict,
        steps,
        final_norm_w_g: state.norm_x(),
        final_norm_w_d: state.norm_y(),
    };
    if let Some(dir) = &cfg.out_dir {
        create_dir(dir)?;
        traj.write_csv(&dir.join("trajectory.csv"))?;
        write_json(&dir.join("summary.json"), &summary)?;
        let sdir = dir.join("samples");
        create_dir(&sdir)?;
        for d in &samples {
            write_dat(
                &sdir.join(format!("samples_{:07}.dat", d.iteration)),
                "x y",
                d.points.iter().copied(),
            )?;
        }
        let spec = GameSpec::Synthgan {
            head: s.head,
            batch_size: s.batch_size,
            dataset_seed: s.dataset_seed,
            log_trick: s.log_trick,
        };
        Checkpoint::new(spec, opt, cfg.seed, state.clone()).save(&dir.join("checkpoint.json"))?;
    }
    Ok(SynthganOutcome {
        trajectory: traj,
        samples,
        verdict,
        steps,
        state,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ExperimentKind;
    use crate::optimizers::{AcgdHyper, AdamHyper};

    fn cfg(opt: OptimizerKind, head: DiscriminatorHead, iters: u64) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(ExperimentKind::Synthgan);
        c.optimizer = Some(opt);
        c.synthgan.head = head;
        c.synthgan.sample_stride = 50;
        c.synthgan.sample_count = 16;
        c.iterations = Some(iters);
        c.stride = Some(10);
        c
    }

    #[test]
    fn adam_log_trick_short_run() {
        let out = run_synthgan(&cfg(
            OptimizerKind::Adam(AdamHyper::default()),
            DiscriminatorHead::Ogan,
            120,
        ))
        .unwrap();
        assert_eq!(out.verdict, Verdict::BudgetExhausted);
        assert!(out.summary.log_trick);
        let its: Vec<u64> = out.samples.iter().map(|d| d.iteration).collect();
        assert_eq!(its, vec![0, 50, 100, 120]);
        assert_eq!(out.trajectory.records.len(), 13);
        assert!(out.trajectory.records.iter().all(|r| r.loss.is_finite()));
    }

    #[test]
    fn acgd_wgan_short_run() {
        let out = run_synthgan(&cfg(
            OptimizerKind::Acgd(AcgdHyper::default()),
            DiscriminatorHead::Wgan,
            20,
        ))
        .unwrap();
        assert_eq!(out.verdict, Verdict::BudgetExhausted);
        assert!(out.trajectory.records[0].cg_iterations > 0);
    }

    #[test]
    fn deterministic_per_seed() {
        let c = cfg(
            OptimizerKind::Simgd {
                eta_x: 0.01,
                eta_y: 0.01,
            },
            DiscriminatorHead::Ogan,
            30,
        );
        let a = run_synthgan(&c).unwrap();
        let b = run_synthgan(&c).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.trajectory, b.trajectory);
    }
}
