#![allow(dead_code)]

use mlsvgd::fem::ForwardMatrix;
use mlsvgd::targets::{LevelTarget, LevelTargetSpec, NoiseSpec, PriorSpec};
use mlsvgd::Result;
use nalgebra::DMatrix;

pub fn base_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.3, -0.8, 0.6, 0.4])
}

pub const DATA: [f64; 3] = [0.6, -0.2, 0.5];

/// Two-dimensional conjugate Gaussian posterior.
pub fn analytic_d2() -> LevelTargetSpec {
    LevelTargetSpec::analytic(
        PriorSpec::decaying(2).unwrap(),
        NoiseSpec::new(3, 0.25).unwrap(),
        DATA.to_vec(),
        base_matrix(),
        1.0,
        1.0,
    )
    .unwrap()
}

/// Gaussian posteriors with forward matrices `A (1 + 2^{-ℓ} δ)` for
/// `ℓ = 0..=max_level`, so level differences decay like `2^{-ℓ}`.
pub fn artificial_hierarchy(max_level: u32, delta: f64) -> LevelTargetSpec {
    let points = vec![0.25, 0.5, 0.75];
    let matrices = (0..=max_level).map(|l| {
        let scale = 1.0 + delta * 2f64.powi(-(l as i32));
        ForwardMatrix::from_matrix(l, base_matrix() * scale, points.clone()).unwrap()
    });
    LevelTargetSpec::pde(
        PriorSpec::decaying(2).unwrap(),
        NoiseSpec::new(3, 0.25).unwrap(),
        DATA.to_vec(),
        matrices,
        1.0,
        1.0,
    )
    .unwrap()
}

/// Every level answers with the score of `level` of the inner target.
pub struct SharedLevel<'a, T> {
    pub inner: &'a T,
    pub level: u32,
}

impl<T: LevelTarget> LevelTarget for SharedLevel<'_, T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn prior(&self) -> &PriorSpec {
        self.inner.prior()
    }

    fn grad_log_density(&self, _level: u32, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.inner.grad_log_density(self.level, x, out)
    }
}
