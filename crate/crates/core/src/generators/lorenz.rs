use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snapshots::SnapshotMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LorenzConfig {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub init: [f64; 3],
}

impl Default for LorenzConfig {
    fn default() -> Self {
        Self { sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0, dt: 0.01, n_steps: 150_000, init: [1.0, 1.0, 1.0] }
    }
}

pub fn lorenz_rhs(cfg: &LorenzConfig, s: [f64; 3]) -> [f64; 3] {
    let [x, y, z] = s;
    [cfg.sigma * (y - x), x * (cfg.rho - z) - y, x * y - cfg.beta * z]
}

fn rk4_step(cfg: &LorenzConfig, s: [f64; 3]) -> [f64; 3] {
    let h = cfg.dt;
    let shift = |s: [f64; 3], k: [f64; 3], a: f64| [s[0] + a * k[0], s[1] + a * k[1], s[2] + a * k[2]];
    let k1 = lorenz_rhs(cfg, s);
    let k2 = lorenz_rhs(cfg, shift(s, k1, h / 2.0));
    let k3 = lorenz_rhs(cfg, shift(s, k2, h / 2.0));
    let k4 = lorenz_rhs(cfg, shift(s, k3, h));
    std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Classical RK4 trajectory; column 0 is `init`, `n_steps` columns in total.
pub fn gen_lorenz(cfg: &LorenzConfig) -> Result<SnapshotMatrix> {
    if cfg.n_steps < 2 || !(cfg.dt > 0.0) {
        return Err(Error::InvalidParameter(format!("lorenz needs n_steps >= 2 and dt > 0, got {cfg:?}")));
    }
    let mut out = Mat::<f64>::zeros(3, cfg.n_steps);
    let mut s = cfg.init;
    for k in 0..cfg.n_steps {
        if k > 0 {
            s = rk4_step(cfg, s);
        }
        for i in 0..3 {
            out[(i, k)] = s[i];
        }
    }
    SnapshotMatrix::new(out, cfg.dt)
}
