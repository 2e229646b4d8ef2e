//! Desk-scale GAN on a 2-D Gaussian ring.
//!
//! Generator: latent `z in R^2` -> 8 (atan) -> 8 (atan) -> 2 (linear).
//! Discriminator: `p in R^2` -> 8 (atan) -> 8 (atan) -> 1, read either raw
//! (WGAN critic) or through a sigmoid (original GAN). Dense layers store the
//! row-major weight matrix followed by the bias vector.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::autodiff::{ComputationGraph, GraphBuilder, Var};

use super::{scaled_uniform, ZeroSumGame};

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

const LATENT: usize = 2;
const HIDDEN: usize = 8;

/// (fan_in, fan_out) per layer.
const GEN_LAYERS: [(usize, usize); 3] = [(LATENT, HIDDEN), (HIDDEN, HIDDEN), (HIDDEN, 2)];
const DISC_LAYERS: [(usize, usize); 3] = [(2, HIDDEN), (HIDDEN, HIDDEN), (HIDDEN, 1)];

fn layer_params(layers: &[(usize, usize)]) -> usize {
    layers.iter().map(|(i, o)| i * o + o).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscriminatorHead {
    /// Sigmoid output, binary cross-entropy payoff.
    Ogan,
    /// Unbounded critic, difference-of-means payoff.
    Wgan,
}

/// Real samples and latent codes for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub real: Vec<[f64; 2]>,
    pub latent: Vec<[f64; 2]>,
}

/// `n` points from an 8-component ring of radius 2, std 0.05.
pub fn gaussian_ring(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.05).expect("valid std");
    (0..n)
        .map(|_| {
            let k = rng.random_range(0..8) as f64;
            let angle = 2.0 * PI * k / 8.0;
            [
                2.0 * angle.cos() + noise.sample(&mut rng),
                2.0 * angle.sin() + noise.sample(&mut rng),
            ]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthGanGame {
    pub dataset: Vec<[f64; 2]>,
    pub batch_size: usize,
    pub head: DiscriminatorHead,
}

impl SynthGanGame {
    pub const DATASET_SIZE: usize = 2_000;

    pub fn new(head: DiscriminatorHead, batch_size: usize, dataset_seed: u64) -> Self {
        assert!(batch_size > 0, "batch size must be positive");
        Self {
            dataset: gaussian_ring(Self::DATASET_SIZE, dataset_seed),
            batch_size,
            head,
        }
    }

    pub fn generator_params() -> usize {
        layer_params(&GEN_LAYERS)
    }

    pub fn discriminator_params() -> usize {
        layer_params(&DISC_LAYERS)
    }

    pub fn init_weights<R: Rng + ?Sized>(rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        fn init<R: Rng + ?Sized>(rng: &mut R, layers: &[(usize, usize)]) -> Vec<f64> {
            let mut w = Vec::new();
            for &(fan_in, fan_out) in layers {
                w.extend((0..fan_in * fan_out).map(|_| scaled_uniform(rng, fan_in)));
                w.extend(std::iter::repeat_n(0.0, fan_out));
            }
            w
        }
        let g = init(rng, &GEN_LAYERS);
        let d = init(rng, &DISC_LAYERS);
        (g, d)
    }

    pub fn sample_minibatch<R: Rng + ?Sized>(&self, rng: &mut R) -> Minibatch {
        let real = (0..self.batch_size)
            .map(|_| self.dataset[rng.random_range(0..self.dataset.len())])
            .collect();
        let latent = (0..self.batch_size)
            .map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)])
            .collect();
        Minibatch { real, latent }
    }

    /// Zero-sum payoff for this head: OGAN
    /// `1/2 E[log D(x)] + 1/2 E[log(1 - D(G(z)))]`, or WGAN
    /// `E[D(x)] - E[D(G(z))]`. `x = w_g` minimizes, `y = w_d` maximizes.
    pub fn game(&self, batch: &Minibatch) -> ZeroSumGame {
        let (mut b, wg, wd) = Self::builder();
        let (real, fake) = Self::record_outputs(&mut b, &wg, &wd, batch);
        let f = match self.head {
            DiscriminatorHead::Wgan => {
                let mr = b.mean(&real);
                let mf = b.mean(&fake);
                b.sub(mr, mf)
            }
            DiscriminatorHead::Ogan => {
                let lr: Vec<Var> = real
                    .iter()
                    .map(|&z| {
                        let p = Self::clamped_prob(&mut b, z);
                        b.log(p)
                    })
                    .collect();
                let lf: Vec<Var> = fake
                    .iter()
                    .map(|&z| {
                        let p = Self::clamped_prob(&mut b, z);
                        let q = b.linear(&[(p, -1.0)], 1.0);
                        b.log(q)
                    })
                    .collect();
                let mr = b.mean(&lr);
                let mf = b.mean(&lf);
                b.linear(&[(mr, 0.5), (mf, 0.5)], 0.0)
            }
        };
        ZeroSumGame::new(b.finish(f), "w_g", "w_d").expect("two distinct groups")
    }

    /// Generator objective `E[-log D(G(z))]` over the same groups as [`Self::game`].
    pub fn nonsat_generator_graph(&self, batch: &Minibatch) -> ComputationGraph {
        let (mut b, wg, wd) = Self::builder();
        let batch = Minibatch {
            real: Vec::new(),
            latent: batch.latent.clone(),
        };
        let (_, fake) = Self::record_outputs(&mut b, &wg, &wd, &batch);
        let terms: Vec<Var> = fake
            .iter()
            .map(|&z| {
                let p = Self::clamped_prob(&mut b, z);
                let l = b.log(p);
                b.neg(l)
            })
            .collect();
        let m = b.mean(&terms);
        b.finish(m)
    }

    fn builder() -> (GraphBuilder, Vec<Var>, Vec<Var>) {
        let mut b = GraphBuilder::new();
        let wg = b.group("w_g", Self::generator_params()).expect("fresh builder");
        let wd = b.group("w_d", Self::discriminator_params()).expect("fresh builder");
        (b, wg, wd)
    }

    fn clamped_prob(b: &mut GraphBuilder, raw: Var) -> Var {
        let s = b.sigmoid(raw);
        b.clamp(s, PROB_CLAMP, 1.0 - PROB_CLAMP)
    }

    /// Raw discriminator outputs on real and generated samples.
    fn record_outputs(
        b: &mut GraphBuilder,
        wg: &[Var],
        wd: &[Var],
        batch: &Minibatch,
    ) -> (Vec<Var>, Vec<Var>) {
        let real = batch
            .real
            .iter()
            .map(|p| {
                let first = record_const_layer(b, &wd[..DISC_LAYERS[0].0 * HIDDEN + HIDDEN], p);
                record_disc_tail(b, wd, first)
            })
            .collect();
        let fake = batch
            .latent
            .iter()
            .map(|z| {
                let h1 = record_const_layer(b, &wg[..LATENT * HIDDEN + HIDDEN], z);
                let h1: Vec<Var> = h1.into_iter().map(|v| b.atan(v)).collect();
                let (w2, rest) = wg[LATENT * HIDDEN + HIDDEN..].split_at(HIDDEN * HIDDEN + HIDDEN);
                let h2: Vec<Var> = record_layer(b, w2, &h1).into_iter().map(|v| b.atan(v)).collect();
                let out = record_layer(b, rest, &h2);
                let q = record_layer(b, &wd[..2 * HIDDEN + HIDDEN], &out);
                record_disc_tail(b, wd, q)
            })
            .collect();
        (real, fake)
    }

    pub fn generator_sample(w_g: &[f64], z: [f64; 2]) -> [f64; 2] {
        let (l1, rest) = w_g.split_at(LATENT * HIDDEN + HIDDEN);
        let (l2, l3) = rest.split_at(HIDDEN * HIDDEN + HIDDEN);
        let h1: Vec<f64> = dense(l1, &z).into_iter().map(f64::atan).collect();
        let h2: Vec<f64> = dense(l2, &h1).into_iter().map(f64::atan).collect();
        let o = dense(l3, &h2);
        [o[0], o[1]]
    }

    pub fn discriminator_raw(w_d: &[f64], p: [f64; 2]) -> f64 {
        let (l1, rest) = w_d.split_at(2 * HIDDEN + HIDDEN);
        let (l2, l3) = rest.split_at(HIDDEN * HIDDEN + HIDDEN);
        let h1: Vec<f64> = dense(l1, &p).into_iter().map(f64::atan).collect();
        let h2: Vec<f64> = dense(l2, &h1).into_iter().map(f64::atan).collect();
        dense(l3, &h2)[0]
    }

    /// Discriminator output on this game's head: probability for OGAN, raw for WGAN.
    pub fn discriminator_output(&self, w_d: &[f64], p: [f64; 2]) -> f64 {
        let raw = Self::discriminator_raw(w_d, p);
        match self.head {
            DiscriminatorHead::Ogan => crate::autodiff::sigmoid(raw),
            DiscriminatorHead::Wgan => raw,
        }
    }

    fn outputs(&self, w_g: &[f64], w_d: &[f64], batch: &Minibatch) -> (Vec<f64>, Vec<f64>) {
        let real = batch.real.iter().map(|&p| self.discriminator_output(w_d, p)).collect();
        let fake = batch
            .latent
            .iter()
            .map(|&z| self.discriminator_output(w_d, Self::generator_sample(w_g, z)))
            .collect();
        (real, fake)
    }

    pub fn ogan_loss(&self, w_g: &[f64], w_d: &[f64], batch: &Minibatch) -> f64 {
        let (r, f) = self.outputs(w_g, w_d, batch);
        ogan_loss_from_outputs(&r, &f)
    }

    pub fn wgan_loss(&self, w_g: &[f64], w_d: &[f64], batch: &Minibatch) -> f64 {
        let (r, f) = self.outputs(w_g, w_d, batch);
        wgan_loss_from_outputs(&r, &f)
    }

    pub fn nonsat_generator_loss(&self, w_g: &[f64], w_d: &[f64], batch: &Minibatch) -> f64 {
        let (_, f) = self.outputs(w_g, w_d, batch);
        nonsat_loss_from_outputs(&f)
    }

    /// Payoff for this game's head.
    pub fn loss(&self, w_g: &[f64], w_d: &[f64], batch: &Minibatch) -> f64 {
        match self.head {
            DiscriminatorHead::Ogan => self.ogan_loss(w_g, w_d, batch),
            DiscriminatorHead::Wgan => self.wgan_loss(w_g, w_d, batch),
        }
    }

    /// Fraction of correct real/fake calls at threshold 1/2 (OGAN head) or 0 (WGAN head).
    pub fn discriminator_accuracy(&self, w_g: &[f64], w_d: &[f64], batch: &Minibatch) -> f64 {
        let threshold = match self.head {
            DiscriminatorHead::Ogan => 0.5,
            DiscriminatorHead::Wgan => 0.0,
        };
        let (r, f) = self.outputs(w_g, w_d, batch);
        let correct = r.iter().filter(|&&d| d > threshold).count()
            + f.iter().filter(|&&d| d < threshold).count();
        correct as f64 / (r.len() + f.len()) as f64
    }
}

fn clamp_prob(d: f64) -> f64 {
    d.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// `1/2 mean log D(real) + 1/2 mean log(1 - D(fake))`, probabilities clamped.
pub fn ogan_loss_from_outputs(real: &[f64], fake: &[f64]) -> f64 {
    0.5 * mean(real.iter().map(|&d| clamp_prob(d).ln()))
        + 0.5 * mean(fake.iter().map(|&d| (1.0 - clamp_prob(d)).ln()))
}

pub fn wgan_loss_from_outputs(real: &[f64], fake: &[f64]) -> f64 {
    mean(real.iter().copied()) - mean(fake.iter().copied())
}

/// `mean -log D(fake)`, probabilities clamped.
pub fn nonsat_loss_from_outputs(fake: &[f64]) -> f64 {
    mean(fake.iter().map(|&d| -clamp_prob(d).ln()))
}

fn dense(layer: &[f64], input: &[f64]) -> Vec<f64> {
    let n_in = input.len();
    let n_out = layer.len() / (n_in + 1);
    let (w, bias) = layer.split_at(n_in * n_out);
    w.chunks(n_in)
        .zip(bias)
        .map(|(row, b)| b + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>())
        .collect()
}

/// Dense layer (weights + bias variables) applied to constant inputs.
fn record_const_layer(b: &mut GraphBuilder, layer: &[Var], input: &[f64; 2]) -> Vec<Var> {
    let n_out = layer.len() / 3;
    let (w, bias) = layer.split_at(2 * n_out);
    w.chunks(2)
        .zip(bias)
        .map(|(row, &bv)| b.linear(&[(row[0], input[0]), (row[1], input[1]), (bv, 1.0)], 0.0))
        .collect()
}

/// Dense layer (weights + bias variables) applied to variable inputs.
fn record_layer(b: &mut GraphBuilder, layer: &[Var], input: &[Var]) -> Vec<Var> {
    let n_in = input.len();
    let n_out = layer.len() / (n_in + 1);
    let (w, bias) = layer.split_at(n_in * n_out);
    w.chunks(n_in)
        .zip(bias)
        .map(|(row, &bv)| {
            let d = b.dot(row, input);
            b.add(d, bv)
        })
        .collect()
}


/// Everything after the first discriminator layer's pre-activation.
fn record_disc_tail(b: &mut GraphBuilder, wd: &[Var], first: Vec<Var>) -> Var {
    let h1: Vec<Var> = first.into_iter().map(|v| b.atan(v)).collect();
    let rest = &wd[2 * HIDDEN + HIDDEN..];
    let (l2, l3) = rest.split_at(HIDDEN * HIDDEN + HIDDEN);
    let h2: Vec<Var> = record_layer(b, l2, &h1).into_iter().map(|v| b.atan(v)).collect();
    record_layer(b, l3, &h2)[0]
}
