use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snapshots::SnapshotMatrix;

pub const N_MASSES: usize = 5;

/// Five masses in a fixed-fixed chain, integrated with Newmark-beta.
///
/// The excitation is an initial velocity at the last mass equal to
/// `impulse * N(0, 1)` drawn from `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Msd5Config {
    pub m: f64,
    pub c: f64,
    pub k: f64,
    pub gamma: f64,
    pub beta: f64,
    pub dt: f64,
    pub t_final: f64,
    pub impulse: f64,
    pub seed: u64,
}

impl Default for Msd5Config {
    fn default() -> Self {
        Self { m: 1.0, c: 0.06, k: 1.0, gamma: 0.5, beta: 0.25, dt: 0.005, t_final: 1000.0, impulse: 1.0, seed: 0 }
    }
}

impl Msd5Config {
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    fn validate(&self) -> Result<()> {
        let ok = self.m > 0.0
            && self.k > 0.0
            && self.c >= 0.0
            && self.dt > 0.0
            && self.t_final > 0.0
            && self.beta > 0.0
            && self.gamma >= 0.0
            && self.impulse.is_finite();
        if !ok {
            return Err(Error::InvalidParameter(format!("invalid mass-spring-damper configuration {self:?}")));
        }
        Ok(())
    }
}

/// Tridiagonal chain stiffness: `2k` on the diagonal, `-k` beside it.
pub fn stiffness_matrix(k: f64) -> Mat<f64> {
    Mat::from_fn(N_MASSES, N_MASSES, |i, j| match i.abs_diff(j) {
        0 => 2.0 * k,
        1 => -k,
        _ => 0.0,
    })
}

/// Returns `[x; x_dot]` as `10 x (steps + 1)`.
pub fn gen_msd5(cfg: &Msd5Config) -> Result<SnapshotMatrix> {
    cfg.validate()?;
    let n = N_MASSES;
    let stiff = stiffness_matrix(cfg.k);
    let damp = faer::Scale(cfg.c / cfg.k) * &stiff;
    let (dt, g, b) = (cfg.dt, cfg.gamma, cfg.beta);

    let mut x = Mat::<f64>::zeros(n, 1);
    let mut v = Mat::<f64>::zeros(n, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draw: f64 = StandardNormal.sample(&mut rng);
    v[(n - 1, 0)] = cfg.impulse * draw;

    let inv_m = 1.0 / cfg.m;
    let mut a = faer::Scale(-inv_m) * (&damp * &v + &stiff * &x);

    let c0 = 1.0 / (b * dt * dt);
    let c1 = g / (b * dt);
    let k_eff = Mat::from_fn(n, n, |i, j| {
        stiff[(i, j)] + c1 * damp[(i, j)] + if i == j { c0 * cfg.m } else { 0.0 }
    });
    let chol = k_eff.llt(Side::Lower).map_err(|_| Error::Singular)?;

    let steps = cfg.steps();
    let mut out = Mat::<f64>::zeros(2 * n, steps + 1);
    let store = |out: &mut Mat<f64>, col: usize, x: &Mat<f64>, v: &Mat<f64>| {
        for i in 0..n {
            out[(i, col)] = x[(i, 0)];
            out[(n + i, col)] = v[(i, 0)];
        }
    };
    store(&mut out, 0, &x, &v);
    for step in 1..=steps {
        let inertial = Mat::from_fn(n, 1, |i, _| {
            cfg.m * (c0 * x[(i, 0)] + v[(i, 0)] / (b * dt) + (0.5 / b - 1.0) * a[(i, 0)])
        });
        let viscous_arg = Mat::from_fn(n, 1, |i, _| {
            c1 * x[(i, 0)] + (g / b - 1.0) * v[(i, 0)] + dt * (0.5 * g / b - 1.0) * a[(i, 0)]
        });
        let rhs = &inertial + &damp * &viscous_arg;
        let x_new = chol.solve(&rhs);
        let a_new = Mat::from_fn(n, 1, |i, _| {
            c0 * (x_new[(i, 0)] - x[(i, 0)]) - v[(i, 0)] / (b * dt) - (0.5 / b - 1.0) * a[(i, 0)]
        });
        let v_new = Mat::from_fn(n, 1, |i, _| v[(i, 0)] + dt * ((1.0 - g) * a[(i, 0)] + g * a_new[(i, 0)]));
        x = x_new;
        v = v_new;
        a = a_new;
        store(&mut out, step, &x, &v);
    }
    SnapshotMatrix::new(out, dt)
}
