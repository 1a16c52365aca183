//! Fitting every configured method to the prepared training pairs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use faer::{c64, Mat};
use opidmd_core::batch::{batch_pi_dmd, exact_dmd, ridge_dmd, standard_dmd, ExactDmdResult};
use opidmd_core::online::{OnlineState, RlsState, StepRecord};
use opidmd_core::snapshots::{read_csv, write_csv, SnapshotMatrix, SnapshotPairStream};
use opidmd_core::spectral::{eigen, from_eigenpairs, ModalDecomposition};
use opidmd_core::{Error, Result};

use crate::config::{InitialOperator, MethodSpec};
use crate::data::Prepared;

/// A fitted model: either the full operator or the reduced exact DMD form.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Operator(Mat<f64>),
    /// Modes are `lift * W` for the eigenvectors `W` of `reduced`.
    Reduced { lift: Mat<f64>, reduced: Mat<f64> },
}

impl FittedModel {
    fn from_exact(res: ExactDmdResult) -> Self {
        FittedModel::Reduced { lift: res.lift, reduced: res.a_reduced }
    }

    pub fn n_state(&self) -> usize {
        match self {
            FittedModel::Operator(a) => a.nrows(),
            FittedModel::Reduced { lift, .. } => lift.nrows(),
        }
    }

    /// Number of eigenpairs available for prediction.
    pub fn n_modes(&self) -> usize {
        match self {
            FittedModel::Operator(a) => a.nrows(),
            FittedModel::Reduced { reduced, .. } => reduced.nrows(),
        }
    }

    /// All eigenvalues with their (lifted) modes.
    pub fn spectrum(&self) -> Result<(Vec<c64>, Mat<c64>)> {
        match self {
            FittedModel::Operator(a) => eigen(a.as_ref()),
            FittedModel::Reduced { lift, reduced } => {
                let (vals, w) = eigen(reduced.as_ref())?;
                let lift_c = Mat::from_fn(lift.nrows(), lift.ncols(), |i, j| c64::new(lift[(i, j)], 0.0));
                Ok((vals, &lift_c * &w))
            }
        }
    }

    pub fn decomposition(&self, r_used: usize, x0: &[f64]) -> Result<ModalDecomposition> {
        let (vals, modes) = self.spectrum()?;
        from_eigenpairs(&vals, modes.as_ref(), r_used, x0)
    }

    /// Writes `<stem>.operator.csv`, or `<stem>.lift.csv` and `<stem>.reduced.csv`.
    pub fn write(&self, dir: &Path, stem: &str, dt: f64) -> Result<Vec<PathBuf>> {
        let save = |m: &Mat<f64>, suffix: &str| -> Result<PathBuf> {
            let path = dir.join(format!("{stem}.{suffix}.csv"));
            write_csv(&SnapshotMatrix::new(m.clone(), dt)?, &path)?;
            Ok(path)
        };
        match self {
            FittedModel::Operator(a) => Ok(vec![save(a, "operator")?]),
            FittedModel::Reduced { lift, reduced } => Ok(vec![save(lift, "lift")?, save(reduced, "reduced")?]),
        }
    }

    pub fn read_operator(path: &Path) -> Result<Self> {
        let a = read_csv(path)?.into_values();
        if a.nrows() != a.ncols() {
            return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
        }
        Ok(FittedModel::Operator(a))
    }

    pub fn read_reduced(lift: &Path, reduced: &Path) -> Result<Self> {
        let lift = read_csv(lift)?.into_values();
        let reduced = read_csv(reduced)?.into_values();
        if reduced.nrows() != reduced.ncols() {
            return Err(Error::NotSquare { rows: reduced.nrows(), cols: reduced.ncols() });
        }
        if lift.ncols() != reduced.nrows() {
            return Err(Error::ShapeMismatch {
                expected: format!("lift with {} columns", reduced.nrows()),
                got: format!("{}", lift.ncols()),
            });
        }
        Ok(FittedModel::Reduced { lift, reduced })
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: FittedModel,
    pub fit_seconds: f64,
    /// Wall time of each online update; empty for batch methods.
    pub update_seconds: Vec<f64>,
    /// Divergence guard message when it tripped.
    pub divergence: Option<String>,
    pub trace: Vec<StepRecord>,
}

impl FitOutcome {
    fn batch(model: FittedModel, start: Instant) -> Self {
        Self {
            model,
            fit_seconds: start.elapsed().as_secs_f64(),
            update_seconds: Vec::new(),
            divergence: None,
            trace: Vec::new(),
        }
    }
}

fn exact(pairs: &SnapshotPairStream, r: Option<usize>) -> Result<ExactDmdResult> {
    match r {
        Some(r) => exact_dmd(pairs.x_matrix(), pairs.y_matrix(), r),
        None => standard_dmd(pairs.x_matrix(), pairs.y_matrix()),
    }
}

/// Fits one method; online methods are timed update by update.
pub fn fit(method: &MethodSpec, data: &Prepared, record_trace: bool) -> Result<FitOutcome> {
    let pairs = &data.split.train;
    let n = pairs.n_state();
    let start = Instant::now();
    match method {
        MethodSpec::TrueDmd { r } => Ok(FitOutcome::batch(FittedModel::from_exact(exact(&data.clean_train, *r)?), start)),
        MethodSpec::ExactDmd { r } => Ok(FitOutcome::batch(FittedModel::from_exact(exact(pairs, *r)?), start)),
        MethodSpec::StandardDmd => Ok(FitOutcome::batch(FittedModel::from_exact(exact(pairs, None)?), start)),
        MethodSpec::Ridge { lambda } => {
            let sol = ridge_dmd(pairs.x_matrix(), pairs.y_matrix(), *lambda)?;
            Ok(FitOutcome::batch(FittedModel::Operator(sol.a), start))
        }
        MethodSpec::BatchPidmd { constraint, iters, step } => {
            let fit = batch_pi_dmd(pairs.x_matrix(), pairs.y_matrix(), *constraint, *iters, *step)?;
            Ok(FitOutcome::batch(FittedModel::Operator(fit.a), start))
        }
        MethodSpec::Opidmd { constraint, step, epochs, init } => {
            let mut state = match init {
                InitialOperator::Zero => OnlineState::new(n, *constraint, *step)?,
                InitialOperator::Identity => {
                    OnlineState::with_initial(Mat::identity(n, n), *constraint, *step)?
                }
            };
            let mut times = Vec::with_capacity(pairs.len() * epochs);
            let mut trace = Vec::new();
            let mut divergence = None;
            'outer: for _ in 0..*epochs {
                for k in 0..pairs.len() {
                    let t = Instant::now();
                    let res = state.step(pairs.x(k), pairs.y(k));
                    times.push(t.elapsed().as_secs_f64());
                    match res {
                        Ok(rec) if record_trace => trace.push(rec),
                        Ok(_) => {}
                        Err(e @ Error::Diverged { .. }) => {
                            divergence = Some(e.to_string());
                            break 'outer;
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            Ok(FitOutcome {
                model: FittedModel::Operator(state.into_operator()),
                fit_seconds: start.elapsed().as_secs_f64(),
                update_seconds: times,
                divergence,
                trace,
            })
        }
        MethodSpec::OnlineDmd { rho, alpha } => {
            let mut state = RlsState::new(n, *alpha, *rho)?;
            let mut times = Vec::with_capacity(pairs.len());
            let mut divergence = None;
            for k in 0..pairs.len() {
                let t = Instant::now();
                let res = state.step(pairs.x(k), pairs.y(k));
                times.push(t.elapsed().as_secs_f64());
                match res {
                    Ok(()) => {}
                    Err(e @ (Error::Diverged { .. } | Error::IllConditioned { .. })) => {
                        divergence = Some(e.to_string());
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(FitOutcome {
                model: FittedModel::Operator(state.into_operator()),
                fit_seconds: start.elapsed().as_secs_f64(),
                update_seconds: times,
                divergence,
                trace: Vec::new(),
            })
        }
    }
}
