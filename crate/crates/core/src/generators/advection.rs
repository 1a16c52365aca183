use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snapshots::SnapshotMatrix;

/// First-order upwind advection of a scalar field on a periodic unit-cell grid.
///
/// Grid points sit at `x_i = i Lx / Nx`, `y_j = j Ly / Ny` (the periodic image
/// at `Lx` is not stored). States are flattened with `y` fastest:
/// component `i * Ny + j` holds `u(x_i, y_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Advection2DConfig {
    pub cx: f64,
    pub cy: f64,
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub t_final: f64,
}

impl Default for Advection2DConfig {
    fn default() -> Self {
        Self { cx: 0.5, cy: 0.5, lx: 1.0, ly: 1.0, nx: 15, ny: 15, nt: 5000, t_final: 1.0 }
    }
}

impl Advection2DConfig {
    pub fn dt(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    pub fn cfl(&self) -> f64 {
        let dt = self.dt();
        (self.cx.abs() * dt * self.nx as f64 / self.lx).max(self.cy.abs() * dt * self.ny as f64 / self.ly)
    }

    fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 || self.nt < 1 || !(self.lx > 0.0 && self.ly > 0.0 && self.t_final > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid advection grid {self:?}")));
        }
        let cfl = self.cfl();
        if !(cfl <= 1.0) {
            return Err(Error::CflViolated { cfl });
        }
        Ok(())
    }
}

/// Runs from `u(x, y, 0) = sin(pi x) sin(pi y)`; returns `(Nx Ny) x (Nt + 1)`.
pub fn gen_advection2d(cfg: &Advection2DConfig) -> Result<SnapshotMatrix> {
    gen_advection2d_with(cfg, |x, y| (PI * x).sin() * (PI * y).sin())
}

pub fn gen_advection2d_with(cfg: &Advection2DConfig, init: impl Fn(f64, f64) -> f64) -> Result<SnapshotMatrix> {
    cfg.validate()?;
    let (nx, ny) = (cfg.nx, cfg.ny);
    let dx = cfg.lx / nx as f64;
    let dy = cfg.ly / ny as f64;
    let dt = cfg.dt();
    let (ax, ay) = (cfg.cx * dt / dx, cfg.cy * dt / dy);
    let idx = |i: usize, j: usize| i * ny + j;

    let mut out = Mat::<f64>::zeros(nx * ny, cfg.nt + 1);
    let mut u: Vec<f64> = (0..nx * ny).map(|k| init((k / ny) as f64 * dx, (k % ny) as f64 * dy)).collect();
    let mut next = vec![0.0; nx * ny];
    for (k, v) in u.iter().enumerate() {
        out[(k, 0)] = *v;
    }
    for step in 1..=cfg.nt {
        for i in 0..nx {
            let (im, ip) = ((i + nx - 1) % nx, (i + 1) % nx);
            for j in 0..ny {
                let (jm, jp) = ((j + ny - 1) % ny, (j + 1) % ny);
                let c = u[idx(i, j)];
                let ddx = if cfg.cx >= 0.0 { c - u[idx(im, j)] } else { u[idx(ip, j)] - c };
                let ddy = if cfg.cy >= 0.0 { c - u[idx(i, jm)] } else { u[idx(i, jp)] - c };
                next[idx(i, j)] = c - ax * ddx - ay * ddy;
            }
        }
        std::mem::swap(&mut u, &mut next);
        for (k, v) in u.iter().enumerate() {
            out[(k, step)] = *v;
        }
    }
    SnapshotMatrix::new(out, dt)
}
