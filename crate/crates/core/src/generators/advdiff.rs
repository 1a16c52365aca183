use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snapshots::SnapshotMatrix;

/// 1D advection-diffusion `u_t + v(x) u_x = D u_xx` on `[0, L]` with
/// homogeneous Dirichlet ends and `v(x) = velocity_base + velocity_amplitude cos(pi x)`.
///
/// Both ends sit on the grid: `x_i = i L / (Nx - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvDiff1DConfig {
    pub diffusion: f64,
    pub length: f64,
    pub velocity_base: f64,
    pub velocity_amplitude: f64,
    pub nx: usize,
    pub nt: usize,
    pub dt: f64,
}

impl Default for AdvDiff1DConfig {
    fn default() -> Self {
        Self { diffusion: 0.1, length: 1.0, velocity_base: 1.0, velocity_amplitude: 0.1, nx: 100, nt: 5000, dt: 2e-4 }
    }
}

impl AdvDiff1DConfig {
    pub fn dx(&self) -> f64 {
        self.length / (self.nx - 1) as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.nx).map(|i| i as f64 * self.dx()).collect()
    }

    pub fn velocity(&self, x: f64) -> f64 {
        self.velocity_base + self.velocity_amplitude * (PI * x).cos()
    }

    pub fn diffusion_number(&self) -> f64 {
        self.diffusion * self.dt / (self.dx() * self.dx())
    }

    fn validate(&self) -> Result<()> {
        if self.nx < 3 || !(self.length > 0.0) || !(self.dt > 0.0) || !(self.diffusion >= 0.0) {
            return Err(Error::InvalidParameter(format!("invalid advection-diffusion configuration {self:?}")));
        }
        let number = self.diffusion_number();
        if !(number <= 0.5) {
            return Err(Error::StabilityViolated { number });
        }
        Ok(())
    }
}

/// Runs from `u(x, 0) = sin(pi x)`; returns `Nx x (Nt + 1)`.
pub fn gen_advdiff1d(cfg: &AdvDiff1DConfig) -> Result<SnapshotMatrix> {
    gen_advdiff1d_with(cfg, |x| (PI * x).sin())
}

pub fn gen_advdiff1d_with(cfg: &AdvDiff1DConfig, init: impl Fn(f64) -> f64) -> Result<SnapshotMatrix> {
    cfg.validate()?;
    let n = cfg.nx;
    let dx = cfg.dx();
    let grid = cfg.grid();
    let courant: Vec<f64> = grid.iter().map(|&x| cfg.velocity(x) * cfg.dt / dx).collect();
    let diff = cfg.diffusion_number();

    let mut u: Vec<f64> = grid.iter().map(|&x| init(x)).collect();
    u[0] = 0.0;
    u[n - 1] = 0.0;
    let mut next = vec![0.0; n];
    let mut out = Mat::<f64>::zeros(n, cfg.nt + 1);
    for (i, v) in u.iter().enumerate() {
        out[(i, 0)] = *v;
    }
    for step in 1..=cfg.nt {
        for i in 1..n - 1 {
            let c = courant[i];
            let adv = if c >= 0.0 { c * (u[i] - u[i - 1]) } else { c * (u[i + 1] - u[i]) };
            next[i] = u[i] - adv + diff * (u[i + 1] - 2.0 * u[i] + u[i - 1]);
        }
        std::mem::swap(&mut u, &mut next);
        for i in 1..n - 1 {
            out[(i, step)] = u[i];
        }
    }
    SnapshotMatrix::new(out, cfg.dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries_are_zero() {
        let s = gen_advdiff1d(&AdvDiff1DConfig { nt: 500, ..Default::default() }).unwrap();
        assert_eq!((s.n_state(), s.n_time()), (100, 501));
        for k in 0..s.n_time() {
            assert_eq!(s.values()[(0, k)], 0.0);
            assert_eq!(s.values()[(99, k)], 0.0);
        }
    }

    #[test]
    fn pure_diffusion_mass_decays() {
        let cfg = AdvDiff1DConfig { velocity_base: 0.0, velocity_amplitude: 0.0, nt: 2000, ..Default::default() };
        let s = gen_advdiff1d(&cfg).unwrap();
        let mass: Vec<f64> = (0..s.n_time()).map(|k| s.column(k).iter().sum::<f64>() * cfg.dx()).collect();
        assert!(mass.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn unstable_step_is_rejected() {
        let cfg = AdvDiff1DConfig { dt: 1e-3, ..Default::default() };
        assert!(matches!(gen_advdiff1d(&cfg), Err(Error::StabilityViolated { .. })));
    }

    #[test]
    fn refinement_oracle_at_half_time() {
        let coarse_cfg = AdvDiff1DConfig { nt: 2500, ..Default::default() };
        let fine_cfg = AdvDiff1DConfig { nx: 400, dt: 2.5e-5, nt: 20_000, ..Default::default() };
        let coarse = gen_advdiff1d(&coarse_cfg).unwrap();
        let fine = gen_advdiff1d(&fine_cfg).unwrap();
        let fdx = fine_cfg.dx();
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &x) in coarse_cfg.grid().iter().enumerate() {
            let j = ((x / fdx).floor() as usize).min(fine_cfg.nx - 2);
            let w = x / fdx - j as f64;
            let reference = (1.0 - w) * fine.values()[(j, 20_000)] + w * fine.values()[(j + 1, 20_000)];
            num += (coarse.values()[(i, 2500)] - reference).powi(2);
            den += reference * reference;
        }
        let rel = (num / den).sqrt();
        eprintln!("advdiff refinement relative error {rel:.3e}");
        assert!(rel <= 2e-2, "{rel}");
    }
}
