//! Stopping, serializing and resuming must not change a trajectory.

mod common;

use icrlab::games::init_projection_weights;
use icrlab::harness::{Checkpoint, GameSpec};
use icrlab::optimizers::{AcgdHyper, AdamHyper, OptimizerKind};
use icrlab::ProjectionGame;

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|a| a.to_bits()).collect()
}

#[test]
fn resumed_runs_are_bit_identical() {
    let pg = ProjectionGame::anisotropic();
    let game = pg.game();
    let opts = [
        OptimizerKind::Simgd { eta_x: 0.01, eta_y: 0.01 },
        OptimizerKind::Cgd { eta: 0.01 },
        OptimizerKind::Adam(AdamHyper { alpha: 1e-3, ..AdamHyper::default() }),
        OptimizerKind::Acgd(AcgdHyper { alpha: 1e-3, ..AcgdHyper::default() }),
    ];
    for opt in opts {
        let (wg, wd) = init_projection_weights(&mut common::rng(7));
        let mut straight = opt.init_state(wg.clone(), wd.clone());
        for _ in 0..200 {
            opt.step(&game, &mut straight).unwrap();
        }

        let mut first = opt.init_state(wg, wd);
        for _ in 0..100 {
            opt.step(&game, &mut first).unwrap();
        }
        let text = Checkpoint::new(GameSpec::Projection(pg), opt, 7, first).to_json();
        let ck = Checkpoint::from_json(&text).unwrap();
        let mut resumed = ck.state;
        for _ in 0..100 {
            ck.optimizer.step(&game, &mut resumed).unwrap();
        }

        assert_eq!(resumed.t, straight.t, "{}", opt.name());
        assert_eq!(bits(&resumed.x), bits(&straight.x), "{}", opt.name());
        assert_eq!(bits(&resumed.y), bits(&straight.y), "{}", opt.name());
        assert_eq!(resumed, straight, "{}", opt.name());
    }
}
