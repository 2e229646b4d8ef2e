//! Central-difference references.

use icrlab::ZeroSumGame;

use super::{dist, norm};

pub fn step(t: f64) -> f64 {
    1e-5 * (1.0 + t.abs())
}

/// Error of `got` relative to `want`, with an absolute floor of 1.
pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    dist(got, want) / norm(want).max(1.0)
}

pub fn fd_grad(game: &ZeroSumGame, x: &[f64], y: &[f64], wrt_x: bool) -> Vec<f64> {
    let n = if wrt_x { x.len() } else { y.len() };
    (0..n)
        .map(|i| {
            let (mut xp, mut yp) = (x.to_vec(), y.to_vec());
            let (mut xm, mut ym) = (x.to_vec(), y.to_vec());
            let h = if wrt_x {
                let h = step(x[i]);
                xp[i] += h;
                xm[i] -= h;
                h
            } else {
                let h = step(y[i]);
                yp[i] += h;
                ym[i] -= h;
                h
            };
            (game.value(&xp, &yp).unwrap() - game.value(&xm, &ym).unwrap()) / (2.0 * h)
        })
        .collect()
}

/// `D_xy v` as the directional derivative of `grad_x f` along `y + t v`.
pub fn fd_dxy(game: &ZeroSumGame, x: &[f64], y: &[f64], v: &[f64]) -> Vec<f64> {
    let h = 1e-5 * (1.0 + norm(y)) / norm(v).max(1e-300);
    let yp: Vec<f64> = y.iter().zip(v).map(|(a, b)| a + h * b).collect();
    let ym: Vec<f64> = y.iter().zip(v).map(|(a, b)| a - h * b).collect();
    let (_, gp, _) = game.value_and_grads(x, &yp).unwrap();
    let (_, gm, _) = game.value_and_grads(x, &ym).unwrap();
    gp.iter().zip(&gm).map(|(p, m)| (p - m) / (2.0 * h)).collect()
}

pub fn fd_dyx(game: &ZeroSumGame, x: &[f64], y: &[f64], u: &[f64]) -> Vec<f64> {
    let h = 1e-5 * (1.0 + norm(x)) / norm(u).max(1e-300);
    let xp: Vec<f64> = x.iter().zip(u).map(|(a, b)| a + h * b).collect();
    let xm: Vec<f64> = x.iter().zip(u).map(|(a, b)| a - h * b).collect();
    let (_, _, gp) = game.value_and_grads(&xp, y).unwrap();
    let (_, _, gm) = game.value_and_grads(&xm, y).unwrap();
    gp.iter().zip(&gm).map(|(p, m)| (p - m) / (2.0 * h)).collect()
}
