//! The 28-parameter generator and discriminator used to show adversarial
//! training acting as an approximate projection.
//!
//! Generator (no input, weights only):
//! 1. `h1 = atan(w[0..4])`
//! 2. `h2 = atan(W2 h1)`, `W2 = w[4..20]` row-major 4x4
//! 3. `(u, v) = W3 h2`, `W3 = w[20..28]` row-major 2x4, then
//!    `(exp(atan(v)/pi + u), exp(atan(v)/pi - u))`
//!
//! Discriminator on a point `p`:
//! 1. `h1 = atan(W1 (eta p))`, `W1 = w[0..8]` row-major 4x2
//! 2. `h2 = atan(W2 h1)`, `W2 = w[8..24]`
//! 3. `atan(W3 h2)`, `W3 = w[24..28]`
//!
//! The generator's outputs lie in `{(e^{s+t}, e^{s-t}) : |s| <= 1/2}`, which
//! excludes the target `(2, 2)`.

use std::f64::consts::PI;

use rand::Rng;

use crate::autodiff::{GraphBuilder, Var};

use super::{scaled_uniform, ZeroSumGame};

pub const PROJECTION_PARAMS: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProjectionGame {
    /// Diagonal of the input rescaling.
    pub eta: [f64; 2],
    pub p_data: [f64; 2],
}

impl Default for ProjectionGame {
    fn default() -> Self {
        Self::anisotropic()
    }
}

impl ProjectionGame {
    pub fn new(eta: [f64; 2]) -> Self {
        Self {
            eta,
            p_data: [2.0, 2.0],
        }
    }

    pub fn isotropic() -> Self {
        Self::new([1.0, 1.0])
    }

    /// First component far more visible to the discriminator than the second.
    pub fn anisotropic() -> Self {
        Self::new([1.0, 1e-2])
    }

    /// Payoff `D(eta p_data) - D(eta G(w_G))` with `x = w_G`, `y = w_D`.
    pub fn game(&self) -> ZeroSumGame {
        let mut b = GraphBuilder::new();
        let wg = b.group("w_g", PROJECTION_PARAMS).expect("fresh builder");
        let wd = b.group("w_d", PROJECTION_PARAMS).expect("fresh builder");
        let g = record_projection_generator(&mut b, &wg);
        let p = [b.constant(self.p_data[0]), b.constant(self.p_data[1])];
        let d_real = record_projection_discriminator(&mut b, &wd, p, self.eta);
        let d_fake = record_projection_discriminator(&mut b, &wd, g, self.eta);
        let f = b.sub(d_real, d_fake);
        ZeroSumGame::new(b.finish(f), "w_g", "w_d").expect("two distinct groups")
    }

    pub fn loss(&self, w_g: &[f64], w_d: &[f64]) -> f64 {
        discriminator_forward(w_d, self.p_data, self.eta)
            - discriminator_forward(w_d, generator_forward(w_g), self.eta)
    }
}

/// Records the generator on `w` (28 variables) and returns its output.
pub fn record_projection_generator(b: &mut GraphBuilder, w: &[Var]) -> [Var; 2] {
    assert_eq!(w.len(), PROJECTION_PARAMS);
    let h1: Vec<Var> = w[..4].iter().map(|&v| b.atan(v)).collect();
    let h2: Vec<Var> = b.dense(&w[4..20], &h1).into_iter().map(|v| b.atan(v)).collect();
    let o = b.dense(&w[20..28], &h2);
    let at = b.atan(o[1]);
    let plus = b.linear(&[(at, 1.0 / PI), (o[0], 1.0)], 0.0);
    let minus = b.linear(&[(at, 1.0 / PI), (o[0], -1.0)], 0.0);
    [b.exp(plus), b.exp(minus)]
}

/// Records the discriminator on weights `w` at `point`, rescaled by `eta`.
pub fn record_projection_discriminator(
    b: &mut GraphBuilder,
    w: &[Var],
    point: [Var; 2],
    eta: [f64; 2],
) -> Var {
    assert_eq!(w.len(), PROJECTION_PARAMS);
    let q = [b.scale(point[0], eta[0]), b.scale(point[1], eta[1])];
    let h1: Vec<Var> = b.dense(&w[..8], &q).into_iter().map(|v| b.atan(v)).collect();
    let h2: Vec<Var> = b.dense(&w[8..24], &h1).into_iter().map(|v| b.atan(v)).collect();
    let o = b.dot(&w[24..28], &h2);
    b.atan(o)
}

fn dense_atan(w: &[f64], input: &[f64]) -> Vec<f64> {
    w.chunks(input.len())
        .map(|row| row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>().atan())
        .collect()
}

pub fn generator_forward(w_g: &[f64]) -> [f64; 2] {
    assert_eq!(w_g.len(), PROJECTION_PARAMS);
    let h1: Vec<f64> = w_g[..4].iter().map(|v| v.atan()).collect();
    let h2 = dense_atan(&w_g[4..20], &h1);
    let u: f64 = w_g[20..24].iter().zip(&h2).map(|(a, b)| a * b).sum();
    let v: f64 = w_g[24..28].iter().zip(&h2).map(|(a, b)| a * b).sum();
    let s = v.atan() / PI;
    [(s + u).exp(), (s - u).exp()]
}

pub fn discriminator_forward(w_d: &[f64], point: [f64; 2], eta: [f64; 2]) -> f64 {
    assert_eq!(w_d.len(), PROJECTION_PARAMS);
    let q = [eta[0] * point[0], eta[1] * point[1]];
    let h1 = dense_atan(&w_d[..8], &q);
    let h2 = dense_atan(&w_d[8..24], &h1);
    dense_atan(&w_d[24..28], &h2)[0]
}

pub fn projection_loss(w_g: &[f64], w_d: &[f64], eta: [f64; 2]) -> f64 {
    ProjectionGame::new(eta).loss(w_g, w_d)
}

/// Seeded `(w_G, w_D)`; each weight uniform in `±1/sqrt(fan_in)`.
pub fn init_projection_weights<R: Rng + ?Sized>(rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    // generator layers: 4 free inputs (fan-in 1), 4x4, 2x4
    let wg = (0..PROJECTION_PARAMS)
        .map(|i| scaled_uniform(rng, if i < 4 { 1 } else { 4 }))
        .collect();
    // discriminator layers: 4x2, 4x4, 1x4
    let wd = (0..PROJECTION_PARAMS)
        .map(|i| scaled_uniform(rng, if i < 8 { 2 } else { 4 }))
        .collect();
    (wg, wd)
}
