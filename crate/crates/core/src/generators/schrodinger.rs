use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snapshots::SnapshotMatrix;

/// Real observable emitted for the complex wave function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// `|psi|`, one row per grid point.
    #[default]
    Modulus,
    /// `Re psi`, one row per grid point.
    RealPart,
    /// `Re psi` rows followed by `Im psi` rows (twice the grid size).
    StackedReIm,
}

/// Free-particle Schrodinger equation on the periodic interval
/// `[-Lx/2, Lx/2)`, grid `x_j = -Lx/2 + j Lx / Nx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schrodinger1DConfig {
    pub hbar: f64,
    pub mass: f64,
    pub lx: f64,
    pub x0: f64,
    pub k0: f64,
    pub sigma: f64,
    pub nx: usize,
    pub nt: usize,
    pub dt: f64,
    pub observable: Observable,
}

impl Default for Schrodinger1DConfig {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            lx: 10.0,
            x0: 0.0,
            k0: 20.0,
            sigma: 1.0,
            nx: 200,
            nt: 10_000,
            dt: 1e-4,
            observable: Observable::Modulus,
        }
    }
}

impl Schrodinger1DConfig {
    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.nx).map(|j| -0.5 * self.lx + j as f64 * self.dx()).collect()
    }

    fn validate(&self) -> Result<()> {
        let positive = [self.hbar, self.mass, self.lx, self.sigma, self.dt];
        if self.nx < 3 || positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!("invalid Schrodinger configuration {self:?}")));
        }
        Ok(())
    }
}

/// Constant-coefficient cyclic tridiagonal system `sub psi_{j-1} + diag psi_j + sup psi_{j+1}`
/// solved by the Thomas sweep plus a Sherman-Morrison correction for the corners.
struct CyclicSolver {
    n: usize,
    sub: c64,
    // modified diagonal after the corner split, and forward-sweep factors
    c_prime: Vec<c64>,
    denom: Vec<c64>,
    z: Vec<c64>,
    gamma: c64,
    corner_top: c64,
}

impl CyclicSolver {
    fn new(n: usize, sub: c64, diag: c64, sup: c64) -> Self {
        // corners: A[0][n-1] = sub (psi_{-1}), A[n-1][0] = sup (psi_n)
        let corner_top = sub;
        let corner_bottom = sup;
        let gamma = -diag;
        let mut d = vec![diag; n];
        d[0] = diag - gamma;
        d[n - 1] = diag - corner_bottom * corner_top / gamma;

        let mut c_prime = vec![c64::new(0.0, 0.0); n];
        let mut denom = vec![c64::new(0.0, 0.0); n];
        denom[0] = d[0];
        c_prime[0] = sup / d[0];
        for i in 1..n {
            denom[i] = d[i] - sub * c_prime[i - 1];
            c_prime[i] = sup / denom[i];
        }
        let mut solver = Self { n, sub, c_prime, denom, z: Vec::new(), gamma, corner_top };
        let mut u = vec![c64::new(0.0, 0.0); n];
        u[0] = gamma;
        u[n - 1] = corner_bottom;
        solver.z = solver.thomas(&u);
        solver
    }

    fn thomas(&self, rhs: &[c64]) -> Vec<c64> {
        let n = self.n;
        let mut y = vec![c64::new(0.0, 0.0); n];
        y[0] = rhs[0] / self.denom[0];
        for i in 1..n {
            y[i] = (rhs[i] - self.sub * y[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            let next = y[i + 1];
            y[i] -= self.c_prime[i] * next;
        }
        y
    }

    fn solve(&self, rhs: &[c64]) -> Vec<c64> {
        let n = self.n;
        let mut x = self.thomas(rhs);
        let fact = (x[0] + self.corner_top * x[n - 1] / self.gamma)
            / (c64::new(1.0, 0.0) + self.z[0] + self.corner_top * self.z[n - 1] / self.gamma);
        for (xi, zi) in x.iter_mut().zip(&self.z) {
            *xi -= fact * zi;
        }
        x
    }
}

/// Crank-Nicolson evolution; returns `Nt + 1` states (each of length `Nx`).
pub fn schrodinger_wavefunctions(cfg: &Schrodinger1DConfig) -> Result<Vec<Vec<c64>>> {
    cfg.validate()?;
    let n = cfg.nx;
    let dx = cfg.dx();
    // (I - i r L) psi^{n+1} = (I + i r L) psi^n with L the periodic second difference
    let r = cfg.hbar * cfg.dt / (4.0 * cfg.mass * dx * dx);
    let ir = c64::new(0.0, r);
    let one = c64::new(1.0, 0.0);
    let solver = CyclicSolver::new(n, -ir, one + ir * 2.0, -ir);

    let psi0: Vec<c64> = cfg
        .grid()
        .iter()
        .map(|&x| {
            let env = (-(x - cfg.x0).powi(2) / (2.0 * cfg.sigma * cfg.sigma)).exp();
            c64::from_polar(env, cfg.k0 * x)
        })
        .collect();
    let mut states = Vec::with_capacity(cfg.nt + 1);
    states.push(psi0);
    let mut rhs = vec![c64::new(0.0, 0.0); n];
    for _ in 0..cfg.nt {
        let psi = states.last().unwrap();
        for j in 0..n {
            let lap = psi[(j + n - 1) % n] - psi[j] * 2.0 + psi[(j + 1) % n];
            rhs[j] = psi[j] + ir * lap;
        }
        states.push(solver.solve(&rhs));
    }
    Ok(states)
}

pub fn gen_schrodinger1d(cfg: &Schrodinger1DConfig) -> Result<SnapshotMatrix> {
    let states = schrodinger_wavefunctions(cfg)?;
    let n = cfg.nx;
    let rows = match cfg.observable {
        Observable::StackedReIm => 2 * n,
        _ => n,
    };
    let values = Mat::from_fn(rows, states.len(), |i, k| {
        let psi = states[k][i % n];
        match cfg.observable {
            Observable::Modulus => psi.norm(),
            Observable::RealPart => psi.re,
            Observable::StackedReIm if i < n => psi.re,
            Observable::StackedReIm => psi.im,
        }
    });
    SnapshotMatrix::new(values, cfg.dt)
}
