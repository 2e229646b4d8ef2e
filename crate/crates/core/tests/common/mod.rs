#![allow(dead_code)]

pub mod fd;

use icrlab::games::{init_projection_weights, Minibatch, ProjectionGame, QuadraticGame};
use icrlab::{DiscriminatorHead, SynthGanGame, ZeroSumGame};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
}

/// A named game together with a sampler of evaluation points.
pub struct Case {
    pub name: &'static str,
    pub game: ZeroSumGame,
    pub second_order: bool,
    pub point: Box<dyn Fn(&mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>)>,
}

pub fn synth_batch(seed: u64, head: DiscriminatorHead) -> (SynthGanGame, Minibatch) {
    let sg = SynthGanGame::new(head, 8, seed);
    let mb = sg.sample_minibatch(&mut rng(seed + 100));
    (sg, mb)
}

/// Every game family in the crate, at representative settings.
pub fn all_games() -> Vec<Case> {
    let scalar = |r: &mut ChaCha8Rng| (random_vec(r, 1, 2.0), random_vec(r, 1, 2.0));
    let proj = |r: &mut ChaCha8Rng| init_projection_weights(r);
    let synth = |r: &mut ChaCha8Rng| SynthGanGame::init_weights(r);
    let (ogan, ogan_mb) = synth_batch(1, DiscriminatorHead::Ogan);
    let (wgan, wgan_mb) = synth_batch(2, DiscriminatorHead::Wgan);
    vec![
        Case {
            name: "quadratic",
            game: QuadraticGame::icr_example().game(),
            second_order: true,
            point: Box::new(scalar),
        },
        Case {
            name: "bilinear",
            game: QuadraticGame::bilinear(10.0).game(),
            second_order: true,
            point: Box::new(scalar),
        },
        Case {
            name: "projection-anisotropic",
            game: ProjectionGame::anisotropic().game(),
            second_order: true,
            point: Box::new(proj),
        },
        Case {
            name: "projection-isotropic",
            game: ProjectionGame::isotropic().game(),
            second_order: true,
            point: Box::new(proj),
        },
        Case {
            name: "synthgan-ogan",
            game: ogan.game(&ogan_mb),
            second_order: false,
            point: Box::new(synth),
        },
        Case {
            name: "synthgan-wgan",
            game: wgan.game(&wgan_mb),
            second_order: true,
            point: Box::new(synth),
        },
    ]
}

/// `I + B B^T / n` scaled so the spectrum stays within [1, 1 + 4 scale].
pub fn spd(r: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
    DMatrix::identity(n, n) + (&b * b.transpose()) * (scale / n as f64)
}
