use serde::{Deserialize, Serialize};

use crate::games::{
    discriminator_forward, generator_forward, Minibatch, ProjectionGame, SynthGanGame,
};
use crate::optimizers::{OptimizerKind, OptimizerState};

use super::synthgan::{branch_step, latents, uses_log_trick};
use super::{
    create_dir, euclid, prediction_distance, stream_rng, write_dat, write_json, Checkpoint,
    ExperimentConfig, GameSpec, HarnessError, Stream,
};

/// One branch of a freeze comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub name: String,
    /// Discriminator loss `-f` on the evaluation set, every `stride` steps
    /// and at step K: `(iteration offset, loss)`.
    pub loss_curve: Vec<(u64, f64)>,
    /// Discriminator loss at the checkpoint minus at step K.
    pub loss_improvement: f64,
    /// Euclidean distance of all parameters from the checkpoint.
    pub parameter_distance: f64,
    /// Prediction distance of the final discriminator from the checkpoint's
    /// over the reference points.
    pub prediction_distance: f64,
    /// Discriminator accuracy on the evaluation set (synthetic GAN only).
    pub accuracy_start: Option<f64>,
    pub accuracy_end: Option<f64>,
    pub diverged: bool,
    #[serde(skip)]
    pub state: Option<OptimizerState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreezeOutcome {
    pub experiment: String,
    pub game: GameSpec,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub steps: u64,
    pub reference_points: usize,
    pub joint: BranchReport,
    pub frozen: BranchReport,
}

/// Evaluation hooks for one game kind.
struct Evaluator<'a> {
    /// Discriminator loss of a full state.
    disc_loss: Box<dyn Fn(&OptimizerState) -> f64 + 'a>,
    /// Discriminator output at a reference point.
    predict: Box<dyn Fn(&[f64], &[f64; 2]) -> f64 + 'a>,
    accuracy: Option<Box<dyn Fn(&OptimizerState) -> f64 + 'a>>,
    reference: Vec<[f64; 2]>,
}

/// Continues a checkpointed joint run along two branches for K steps: joint
/// training as before, and discriminator-only training with the generator
/// frozen at the checkpoint. Both branches consume the same minibatch stream.
///
/// The evaluation set and reference points come from the `Reference` stream
/// of `seed`:
/// - projection game: the discriminator loss is the exact payoff; reference
///   points are the real point `p_data` and the checkpoint generator's output;
/// - synthetic GAN: `reference_size` real points and as many latents form a
///   fixed evaluation minibatch; reference points are those real points plus
///   the checkpoint generator's samples at those latents.
///
/// Writes `summary.json`, `loss_joint.dat` and `loss_frozen.dat`.
pub fn run_freeze(cfg: &ExperimentConfig) -> Result<FreezeOutcome, HarnessError> {
    let path = cfg.freeze.checkpoint.as_ref().ok_or_else(|| {
        HarnessError::Invalid("freeze.checkpoint must name a checkpoint file".into())
    })?;
    let ck = Checkpoint::load(path)?;
    let opt = cfg.optimizer.unwrap_or(ck.optimizer);
    let start = if opt.name() == ck.optimizer.name() {
        ck.state.clone()
    } else {
        let mut s = opt.init_state(ck.state.x.clone(), ck.state.y.clone());
        s.t = ck.state.t;
        s
    };
    let steps = cfg.iterations();
    let stride = cfg.stride();

    let outcome = match &ck.game {
        GameSpec::Quadratic(_) => {
            return Err(HarnessError::Invalid(
                "freeze runs on projection or synthgan checkpoints".into(),
            ))
        }
        GameSpec::Projection(pg) => {
            let zs = pg.game();
            let eval = projection_evaluator(pg, &start);
            let run = |disc_only: bool| {
                run_branch(&eval, &start, steps, stride, |s| {
                    branch_step(&zs, None, &opt, s, disc_only)
                })
            };
            (run(false)?, run(true)?, eval.reference.len())
        }
        GameSpec::Synthgan {
            head,
            batch_size,
            dataset_seed,
            log_trick,
        } => {
            let sg = SynthGanGame::new(*head, *batch_size, *dataset_seed);
            let trick = uses_log_trick(*log_trick, *head, &opt);
            let eval_batch = synth_eval_batch(&sg, cfg.seed, cfg.freeze.reference_size);
            let eval = synth_evaluator(&sg, &eval_batch, &start);
            let run = |disc_only: bool| {
                let mut rng = stream_rng(cfg.seed, Stream::Minibatch);
                run_branch(&eval, &start, steps, stride, |s| {
                    let mb = sg.sample_minibatch(&mut rng);
                    let zs = sg.game(&mb);
                    let nonsat = trick.then(|| sg.nonsat_generator_graph(&mb));
                    branch_step(&zs, nonsat.as_ref(), &opt, s, disc_only)
                })
            };
            (run(false)?, run(true)?, eval.reference.len())
        }
    };
    let (mut joint, mut frozen, reference_points) = outcome;
    joint.name = "joint".into();
    frozen.name = "frozen".into();
    let out = FreezeOutcome {
        experiment: "freeze".into(),
        game: ck.game.clone(),
        optimizer: opt,
        seed: cfg.seed,
        steps,
        reference_points,
        joint,
        frozen,
    };
    if let Some(dir) = &cfg.out_dir {
        create_dir(dir)?;
        write_json(&dir.join("summary.json"), &out)?;
        for b in [&out.joint, &out.frozen] {
            write_dat(
                &dir.join(format!("loss_{}.dat", b.name)),
                "step discriminator_loss",
                b.loss_curve.iter().map(|&(k, l)| [k as f64, l]),
            )?;
        }
    }
    Ok(out)
}

fn run_branch<S>(
    eval: &Evaluator,
    start: &OptimizerState,
    steps: u64,
    stride: u64,
    mut step: S,
) -> Result<BranchReport, HarnessError>
where
    S: FnMut(&mut OptimizerState) -> Result<crate::optimizers::StepReport, HarnessError>,
{
    let mut state = start.clone();
    let mut curve = vec![(0, (eval.disc_loss)(&state))];
    let mut diverged = false;
    for k in 1..=steps {
        let r = step(&mut state)?;
        if r.diverged || state.exceeds_cutoff() {
            diverged = true;
            break;
        }
        if k % stride == 0 || k == steps {
            curve.push((k, (eval.disc_loss)(&state)));
        }
    }
    let last = curve.last().map(|&(_, l)| l).unwrap_or(f64::NAN);
    let joined = |s: &OptimizerState| [s.x.as_slice(), s.y.as_slice()].concat();
    Ok(BranchReport {
        name: String::new(),
        loss_improvement: curve[0].1 - last,
        loss_curve: curve,
        parameter_distance: euclid(&joined(&state), &joined(start)),
        prediction_distance: prediction_distance(
            |p: &[f64; 2]| (eval.predict)(&state.y, p),
            |p: &[f64; 2]| (eval.predict)(&start.y, p),
            &eval.reference,
        )?,
        accuracy_start: eval.accuracy.as_ref().map(|a| a(start)),
        accuracy_end: eval.accuracy.as_ref().map(|a| a(&state)),
        diverged,
        state: Some(state),
    })
}

fn projection_evaluator<'a>(pg: &'a ProjectionGame, start: &OptimizerState) -> Evaluator<'a> {
    let reference = vec![pg.p_data, generator_forward(&start.x)];
    Evaluator {
        disc_loss: Box::new(move |s| -pg.loss(&s.x, &s.y)),
        predict: Box::new(move |wd, p| discriminator_forward(wd, *p, pg.eta)),
        accuracy: None,
        reference,
    }
}

fn synth_eval_batch(sg: &SynthGanGame, seed: u64, n: usize) -> Minibatch {
    use rand::Rng;
    let mut rng = stream_rng(seed, Stream::Reference);
    let real = (0..n)
        .map(|_| sg.dataset[rng.random_range(0..sg.dataset.len())])
        .collect();
    let latent = latents(&mut rng, n);
    Minibatch { real, latent }
}

fn synth_evaluator<'a>(
    sg: &'a SynthGanGame,
    batch: &'a Minibatch,
    start: &OptimizerState,
) -> Evaluator<'a> {
    let mut reference = batch.real.clone();
    reference.extend(
        batch
            .latent
            .iter()
            .map(|&z| SynthGanGame::generator_sample(&start.x, z)),
    );
    Evaluator {
        disc_loss: Box::new(move |s| -sg.loss(&s.x, &s.y, batch)),
        predict: Box::new(move |wd, p| sg.discriminator_output(wd, *p)),
        accuracy: Some(Box::new(move |s| sg.discriminator_accuracy(&s.x, &s.y, batch))),
        reference,
    }
}
