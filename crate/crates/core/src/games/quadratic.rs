use crate::autodiff::GraphBuilder;

use super::ZeroSumGame;

/// `f(x, y) = a_coef x^2 + b_coef x y + c_coef y^2` over scalar `x`, `y`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadraticGame {
    pub a_coef: f64,
    pub b_coef: f64,
    pub c_coef: f64,
}

impl Default for QuadraticGame {
    fn default() -> Self {
        Self::icr_example()
    }
}

impl QuadraticGame {
    pub fn new(a_coef: f64, b_coef: f64, c_coef: f64) -> Self {
        assert!(
            a_coef.is_finite() && b_coef.is_finite() && c_coef.is_finite(),
            "quadratic game coefficients must be finite"
        );
        Self {
            a_coef,
            b_coef,
            c_coef,
        }
    }

    /// `x^2 + 10 x y + y^2`: for fixed `x`, ascent on `y` diverges, yet SimGD
    /// with suitable step sizes converges to `(0, 0)`.
    pub fn icr_example() -> Self {
        Self::new(1.0, 10.0, 1.0)
    }

    /// `b * x * y`.
    pub fn bilinear(b: f64) -> Self {
        Self::new(0.0, b, 0.0)
    }

    /// Second derivatives `(D_xx f, D_xy f, D_yy f)`.
    pub fn second_derivatives(&self) -> (f64, f64, f64) {
        (2.0 * self.a_coef, self.b_coef, 2.0 * self.c_coef)
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.a_coef * x * x + self.b_coef * x * y + self.c_coef * y * y
    }

    pub fn game(&self) -> ZeroSumGame {
        let mut b = GraphBuilder::new();
        let x = b.group("x", 1).expect("fresh builder")[0];
        let y = b.group("y", 1).expect("fresh builder")[0];
        let xx = b.mul(x, x);
        let xy = b.mul(x, y);
        let yy = b.mul(y, y);
        let f = b.linear(&[(xx, self.a_coef), (xy, self.b_coef), (yy, self.c_coef)], 0.0);
        ZeroSumGame::new(b.finish(f), "x", "y").expect("two distinct groups")
    }
}
