//! Per-snapshot proximal gradient updates of a constrained operator, and the
//! recursive least-squares Online DMD baseline.
//!
//! Each update sees only the newest pair `(x, y)` and the single-pair loss
//! `g(A) = ||y - A x||^2`, with gradient `-2 (y - A x) x^T`. The step is
//! followed by the prox of the active constraint, so a structural constraint
//! holds exactly after every update.

use std::io::Write;
use std::path::Path;

use faer::{ColRef, Mat, MatRef};

use crate::error::{Error, Result};
use crate::prox::{apply_prox, backtrack_step, ConstraintSpec, StepRule};
use crate::snapshots::SnapshotPairStream;

/// Largest admissible |entry| of a fitted operator before it is declared diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

fn check_pair(n: usize, x: ColRef<'_, f64>, y: ColRef<'_, f64>) -> Result<()> {
    if x.nrows() != n || y.nrows() != n {
        return Err(Error::shape(
            format!("x, y of length {n}"),
            format!("x of length {}, y of length {}", x.nrows(), y.nrows()),
        ));
    }
    Ok(())
}

fn residual(a: MatRef<'_, f64>, x: ColRef<'_, f64>, y: ColRef<'_, f64>) -> Vec<f64> {
    let ax = a * x;
    (0..y.nrows()).map(|i| y[i] - ax[i]).collect()
}

/// `||y - A x||^2`.
pub fn pair_loss(a: MatRef<'_, f64>, x: ColRef<'_, f64>, y: ColRef<'_, f64>) -> f64 {
    residual(a, x, y).iter().map(|r| r * r).sum()
}

/// Gradient of `||y - A x||^2` with respect to `A`: `-2 (y - A x) x^T`.
pub fn grad_g(a: MatRef<'_, f64>, x: ColRef<'_, f64>, y: ColRef<'_, f64>) -> Result<Mat<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    check_pair(a.nrows(), x, y)?;
    let r = residual(a, x, y);
    Ok(Mat::from_fn(a.nrows(), a.ncols(), |i, j| -2.0 * r[i] * x[j]))
}

fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, j)].abs();
            if !(v <= m) {
                m = v;
            }
        }
    }
    m
}

fn divergence_check(a: MatRef<'_, f64>, step: usize) -> Result<()> {
    let m = max_abs(a);
    if !(m <= DIVERGENCE_LIMIT) {
        return Err(Error::Diverged { step, max_abs: m });
    }
    Ok(())
}

/// Current operator estimate `A_k` with its constraint and step rule.
#[derive(Debug, Clone)]
pub struct OnlineState {
    a: Mat<f64>,
    spec: ConstraintSpec,
    rule: StepRule,
    k: usize,
}

/// What one update did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    /// Single-pair loss before the update.
    pub loss: f64,
    pub step: f64,
    /// Frobenius distance of the updated operator from the constraint manifold.
    pub violation: f64,
}

impl OnlineState {
    /// Starts from the zero operator, which lies on every constraint manifold.
    pub fn new(n: usize, spec: ConstraintSpec, rule: StepRule) -> Result<Self> {
        Self::with_initial(Mat::zeros(n, n), spec, rule)
    }

    /// Starts from `a0`, projected onto the constraint when it is structural.
    pub fn with_initial(a0: Mat<f64>, spec: ConstraintSpec, rule: StepRule) -> Result<Self> {
        spec.validate()?;
        rule.validate()?;
        if a0.nrows() != a0.ncols() {
            return Err(Error::NotSquare { rows: a0.nrows(), cols: a0.ncols() });
        }
        let a = if spec.is_structural() { apply_prox(&spec, a0.as_ref(), 1.0)? } else { a0 };
        Ok(Self { a, spec, rule, k: 0 })
    }

    pub fn operator(&self) -> MatRef<'_, f64> {
        self.a.as_ref()
    }

    pub fn into_operator(self) -> Mat<f64> {
        self.a
    }

    pub fn spec(&self) -> &ConstraintSpec {
        &self.spec
    }

    pub fn rule(&self) -> &StepRule {
        &self.rule
    }

    /// Number of updates applied so far.
    pub fn updates(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// One online proximal gradient update with the pair `(x, y)`.
    ///
    /// On `Diverged` the state already holds the offending operator.
    pub fn step(&mut self, x: ColRef<'_, f64>, y: ColRef<'_, f64>) -> Result<StepRecord> {
        let n = self.n();
        check_pair(n, x, y)?;
        let r = residual(self.a.as_ref(), x, y);
        let loss: f64 = r.iter().map(|v| v * v).sum();
        let l2 = match self.spec {
            ConstraintSpec::L2 { lambda } => lambda,
            _ => 0.0,
        };

        let (step, next) = match self.rule {
            StepRule::Fixed { step } => {
                let mut z = self.a.clone();
                let shrink = 1.0 - 2.0 * step * l2;
                for j in 0..n {
                    let xj = 2.0 * step * x[j];
                    for i in 0..n {
                        z[(i, j)] = shrink * z[(i, j)] + r[i] * xj;
                    }
                }
                let next = match self.spec {
                    ConstraintSpec::Unconstrained | ConstraintSpec::L2 { .. } => z,
                    _ => apply_prox(&self.spec, z.as_ref(), step)?,
                };
                (step, next)
            }
            StepRule::Backtracking { .. } => {
                let a = self.a.as_ref();
                let grad = Mat::from_fn(n, n, |i, j| -2.0 * r[i] * x[j] + 2.0 * l2 * a[(i, j)]);
                let g = |m: MatRef<'_, f64>| pair_loss(m, x, y) + l2 * m.squared_norm_l2();
                let bt = backtrack_step(g, grad.as_ref(), a, &self.rule, &self.spec)?;
                (bt.step, bt.next)
            }
        };

        self.a = next;
        self.k += 1;
        divergence_check(self.a.as_ref(), self.k)?;
        Ok(StepRecord {
            k: self.k,
            loss,
            step,
            violation: self.spec.violation(self.a.as_ref())?,
        })
    }
}

pub fn opidmd_step(state: &mut OnlineState, x: ColRef<'_, f64>, y: ColRef<'_, f64>) -> Result<StepRecord> {
    state.step(x, y)
}

#[derive(Debug)]
pub struct OnlineFit {
    pub state: OnlineState,
    pub trace: Vec<StepRecord>,
    /// Set when the divergence guard tripped; fitting stopped at that update.
    pub diverged: Option<Error>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub epochs: usize,
    pub record_trace: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { epochs: 1, record_trace: false }
    }
}

/// Streams every pair through [`OnlineState::step`], `opts.epochs` times.
///
/// Divergence is reported in [`OnlineFit::diverged`] rather than as an error
/// so the pathological operator can still be scored.
pub fn opidmd_fit(
    pairs: &SnapshotPairStream,
    spec: ConstraintSpec,
    rule: StepRule,
    init: Option<Mat<f64>>,
    opts: FitOptions,
) -> Result<OnlineFit> {
    if opts.epochs == 0 {
        return Err(Error::InvalidParameter("epochs must be >= 1".into()));
    }
    let n = pairs.n_state();
    let mut state = match init {
        Some(a0) => {
            if a0.nrows() != n {
                return Err(Error::shape(format!("{n}x{n} initial operator"), format!("{}x{}", a0.nrows(), a0.ncols())));
            }
            OnlineState::with_initial(a0, spec, rule)?
        }
        None => OnlineState::new(n, spec, rule)?,
    };
    let mut trace = Vec::new();
    for _ in 0..opts.epochs {
        for k in 0..pairs.len() {
            match state.step(pairs.x(k), pairs.y(k)) {
                Ok(rec) => {
                    if opts.record_trace {
                        trace.push(rec);
                    }
                }
                Err(e @ Error::Diverged { .. }) => {
                    return Ok(OnlineFit { state, trace, diverged: Some(e) });
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(OnlineFit { state, trace, diverged: None })
}

/// Writes `k,loss,step,violation` rows.
pub fn write_trace_csv(trace: &[StepRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io { path: path.to_path_buf(), source };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    writeln!(w, "k,loss,step,violation").map_err(io_err)?;
    for r in trace {
        writeln!(w, "{},{:e},{:e},{:e}", r.k, r.loss, r.step, r.violation).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Recursive least-squares tracker of the unconstrained operator.
#[derive(Debug, Clone)]
pub struct RlsState {
    a: Mat<f64>,
    p: Mat<f64>,
    rho: f64,
    k: usize,
}

pub const DEFAULT_RLS_ALPHA: f64 = 1e6;

impl RlsState {
    /// `A = 0`, `P = alpha I`, forgetting factor `rho` in `(0, 1]`.
    pub fn new(n: usize, alpha: f64, rho: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidParameter(format!("rho must lie in (0, 1], got {rho}")));
        }
        Ok(Self {
            a: Mat::zeros(n, n),
            p: Mat::from_fn(n, n, |i, j| if i == j { alpha } else { 0.0 }),
            rho,
            k: 0,
        })
    }

    pub fn operator(&self) -> MatRef<'_, f64> {
        self.a.as_ref()
    }

    pub fn into_operator(self) -> Mat<f64> {
        self.a
    }

    pub fn gain_matrix(&self) -> MatRef<'_, f64> {
        self.p.as_ref()
    }

    pub fn updates(&self) -> usize {
        self.k
    }

    /// Rank-one update: `gamma = 1 / (rho + x^T P x)`,
    /// `A += gamma (y - A x) (P x)^T`, `P = (P - gamma (P x)(P x)^T) / rho`,
    /// then `P` is re-symmetrized.
    pub fn step(&mut self, x: ColRef<'_, f64>, y: ColRef<'_, f64>) -> Result<()> {
        let n = self.a.nrows();
        check_pair(n, x, y)?;
        let px = &self.p * x;
        let xpx: f64 = (0..n).map(|i| x[i] * px[i]).sum();
        let gamma = 1.0 / (self.rho + xpx);
        self.k += 1;
        if !gamma.is_finite() {
            return Err(Error::IllConditioned { step: self.k });
        }
        let r = residual(self.a.as_ref(), x, y);
        for j in 0..n {
            let pj = gamma * px[j];
            for i in 0..n {
                self.a[(i, j)] += r[i] * pj;
            }
        }
        let inv_rho = 1.0 / self.rho;
        for j in 0..n {
            for i in 0..n {
                self.p[(i, j)] = (self.p[(i, j)] - gamma * px[i] * px[j]) * inv_rho;
            }
        }
        for j in 0..n {
            for i in 0..j {
                let s = 0.5 * (self.p[(i, j)] + self.p[(j, i)]);
                self.p[(i, j)] = s;
                self.p[(j, i)] = s;
            }
        }
        divergence_check(self.a.as_ref(), self.k)
    }
}

pub fn online_dmd_step(state: &mut RlsState, x: ColRef<'_, f64>, y: ColRef<'_, f64>) -> Result<()> {
    state.step(x, y)
}

#[derive(Debug)]
pub struct RlsFit {
    pub state: RlsState,
    pub diverged: Option<Error>,
}

/// Streams every pair through [`RlsState::step`]. Divergence and loss of
/// conditioning stop the fit and are reported in [`RlsFit::diverged`].
pub fn online_dmd_fit(pairs: &SnapshotPairStream, alpha: f64, rho: f64) -> Result<RlsFit> {
    let mut state = RlsState::new(pairs.n_state(), alpha, rho)?;
    for k in 0..pairs.len() {
        match state.step(pairs.x(k), pairs.y(k)) {
            Ok(()) => {}
            Err(e @ (Error::Diverged { .. } | Error::IllConditioned { .. })) => {
                return Ok(RlsFit { state, diverged: Some(e) });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RlsFit { state, diverged: None })
}
