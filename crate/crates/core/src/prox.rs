//! Projection and proximal operators for the constraint catalog, and the
//! step-size rules shared by the online and batch solvers.
//!
//! Structural constraints (symmetric, circulant, upper triangular,
//! tridiagonal) enter the objective as indicator functions, so their prox is
//! the Frobenius-nearest projection and does not depend on the step. The
//! `l1` and nuclear penalties use the usual soft thresholds at `step * lambda`.
//! The `l2` penalty is smooth and is handled in the gradient instead.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSpec {
    /// Plain online gradient descent.
    Unconstrained,
    L1 { lambda: f64 },
    L2 { lambda: f64 },
    Nuclear { lambda: f64 },
    Symmetric,
    Circulant,
    UpperTriangular,
    Tridiagonal,
}

impl ConstraintSpec {
    pub fn id(&self) -> &'static str {
        match self {
            ConstraintSpec::Unconstrained => "unconstrained",
            ConstraintSpec::L1 { .. } => "l1",
            ConstraintSpec::L2 { .. } => "l2",
            ConstraintSpec::Nuclear { .. } => "nuclear",
            ConstraintSpec::Symmetric => "symmetric",
            ConstraintSpec::Circulant => "circulant",
            ConstraintSpec::UpperTriangular => "upper_triangular",
            ConstraintSpec::Tridiagonal => "tridiagonal",
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            ConstraintSpec::L1 { lambda } | ConstraintSpec::L2 { lambda } | ConstraintSpec::Nuclear { lambda } => {
                lambda
            }
            _ => 0.0,
        }
    }

    pub fn is_structural(&self) -> bool {
        matches!(
            self,
            ConstraintSpec::Symmetric
                | ConstraintSpec::Circulant
                | ConstraintSpec::UpperTriangular
                | ConstraintSpec::Tridiagonal
        )
    }

    pub fn validate(&self) -> Result<()> {
        let lambda = self.lambda();
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{} penalty weight must be finite and >= 0, got {lambda}",
                self.id()
            )));
        }
        Ok(())
    }

    /// `lambda * R(A)` for the penalty variants; zero for the indicator
    /// variants on their manifold and for `Unconstrained`.
    pub fn penalty(&self, a: MatRef<'_, f64>) -> Result<f64> {
        Ok(match *self {
            ConstraintSpec::L1 { lambda } => lambda * l1_norm(a),
            ConstraintSpec::L2 { lambda } => lambda * a.squared_norm_l2(),
            ConstraintSpec::Nuclear { lambda } => lambda * nuclear_norm(a)?,
            _ => 0.0,
        })
    }

    /// Frobenius distance from `a` to the constraint manifold; zero for the
    /// penalty variants.
    pub fn violation(&self, a: MatRef<'_, f64>) -> Result<f64> {
        if !self.is_structural() {
            return Ok(0.0);
        }
        let p = apply_prox(self, a, 1.0)?;
        Ok((&p - a).norm_l2())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepRule {
    Fixed { step: f64 },
    Backtracking { t_init: f64, beta: f64 },
}

impl StepRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepRule::Fixed { step } if step > 0.0 && step.is_finite() => Ok(()),
            StepRule::Backtracking { t_init, beta }
                if t_init > 0.0 && t_init.is_finite() && beta > 0.0 && beta < 1.0 =>
            {
                Ok(())
            }
            other => Err(Error::InvalidParameter(format!("invalid step rule {other:?}"))),
        }
    }
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Fixed { step: 1e-3 }
    }
}

fn ensure_square(a: MatRef<'_, f64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(a.nrows())
}

pub fn project_symmetric(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = ensure_square(a)?;
    Ok(Mat::from_fn(n, n, |i, j| {
        if i == j {
            a[(i, i)]
        } else {
            0.5 * (a[(i, j)] + a[(j, i)])
        }
    }))
}

/// Averages each wrapped diagonal: `c_k = mean_i a[i, (i + k) mod n]` and
/// `C[i, j] = c_{(j - i) mod n}`.
pub fn project_circulant(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = ensure_square(a)?;
    let mut c = vec![0.0; n];
    for (k, ck) in c.iter_mut().enumerate() {
        let mut s = 0.0;
        for i in 0..n {
            s += a[(i, (i + k) % n)];
        }
        *ck = s / n as f64;
    }
    Ok(Mat::from_fn(n, n, |i, j| c[(j + n - i) % n]))
}

pub fn project_upper_triangular(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = ensure_square(a)?;
    Ok(Mat::from_fn(n, n, |i, j| if i > j { 0.0 } else { a[(i, j)] }))
}

pub fn project_tridiagonal(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = ensure_square(a)?;
    Ok(Mat::from_fn(n, n, |i, j| if i.abs_diff(j) > 1 { 0.0 } else { a[(i, j)] }))
}

#[inline]
pub fn soft_threshold(v: f64, threshold: f64) -> f64 {
    let m = v.abs() - threshold;
    if m > 0.0 {
        m.copysign(v)
    } else {
        0.0
    }
}

/// Entrywise soft threshold; entries with `|a_ij| <= threshold` become exactly 0.
pub fn prox_l1(a: MatRef<'_, f64>, threshold: f64) -> Result<Mat<f64>> {
    check_threshold(threshold)?;
    Ok(Mat::from_fn(a.nrows(), a.ncols(), |i, j| soft_threshold(a[(i, j)], threshold)))
}

/// Singular value soft threshold `U max(S - threshold, 0) V^T`.
pub fn prox_nuclear(a: MatRef<'_, f64>, threshold: f64) -> Result<Mat<f64>> {
    check_threshold(threshold)?;
    let svd = a.thin_svd().map_err(|_| Error::SvdFailure)?;
    let s = svd.S().column_vector();
    let (u, v) = (svd.U(), svd.V());
    let shrunk: Vec<f64> = s.iter().map(|&x| (x - threshold).max(0.0)).collect();
    let keep = shrunk.iter().take_while(|&&x| x > 0.0).count();
    let mut out = Mat::zeros(a.nrows(), a.ncols());
    if keep > 0 {
        let us = Mat::from_fn(a.nrows(), keep, |i, k| u[(i, k)] * shrunk[k]);
        out = &us * v.subcols(0, keep).transpose();
    }
    Ok(out)
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidParameter(format!("threshold must be >= 0, got {threshold}")));
    }
    Ok(())
}

pub fn l1_norm(a: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].abs();
        }
    }
    s
}

pub fn nuclear_norm(a: MatRef<'_, f64>) -> Result<f64> {
    let s = a.singular_values().map_err(|_| Error::SvdFailure)?;
    Ok(s.iter().sum())
}

/// `prox_{t R}(a)` for the constraint `spec`.
pub fn apply_prox(spec: &ConstraintSpec, a: MatRef<'_, f64>, step: f64) -> Result<Mat<f64>> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be > 0, got {step}")));
    }
    ensure_square(a)?;
    match *spec {
        ConstraintSpec::Unconstrained | ConstraintSpec::L2 { .. } => Ok(a.to_owned()),
        ConstraintSpec::L1 { lambda } => prox_l1(a, step * lambda),
        ConstraintSpec::Nuclear { lambda } => prox_nuclear(a, step * lambda),
        ConstraintSpec::Symmetric => project_symmetric(a),
        ConstraintSpec::Circulant => project_circulant(a),
        ConstraintSpec::UpperTriangular => project_upper_triangular(a),
        ConstraintSpec::Tridiagonal => project_tridiagonal(a),
    }
}

pub const MIN_STEP: f64 = 1e-300;

#[derive(Debug, Clone)]
pub struct Backtrack {
    pub step: f64,
    pub shrinks: usize,
    /// `prox_{t R}(a - t grad)` at the accepted step.
    pub next: Mat<f64>,
}

/// Shrinks `t_init` by `beta` until the proximal sufficient-decrease test
/// `g(a - t G) <= g(a) - t <grad, G> + t/2 ||G||^2` holds, where
/// `G = (a - prox_{t R}(a - t grad)) / t` is recomputed for each trial step.
pub fn backtrack_step(
    g: impl Fn(MatRef<'_, f64>) -> f64,
    grad: MatRef<'_, f64>,
    a: MatRef<'_, f64>,
    rule: &StepRule,
    spec: &ConstraintSpec,
) -> Result<Backtrack> {
    let StepRule::Backtracking { t_init, beta } = *rule else {
        return Err(Error::InvalidParameter("backtracking needs a Backtracking step rule".into()));
    };
    rule.validate()?;
    let g0 = g(a);
    let mut t = t_init;
    let mut shrinks = 0;
    loop {
        let trial = &a - faer::Scale(t) * grad;
        let next = apply_prox(spec, trial.as_ref(), t)?;
        // t * G = a - next
        let tg = &a - &next;
        let inner = inner_product(grad, tg.as_ref());
        let rhs = g0 - inner + tg.squared_norm_l2() / (2.0 * t);
        let lhs = g(next.as_ref());
        if lhs <= rhs {
            return Ok(Backtrack { step: t, shrinks, next });
        }
        t *= beta;
        shrinks += 1;
        if t < MIN_STEP {
            return Err(Error::StepUnderflow { min_step: MIN_STEP });
        }
    }
}

pub fn inner_product(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * b[(i, j)];
        }
    }
    s
}
