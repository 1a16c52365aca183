//! Batch baselines: exact DMD, least squares, ridge, and a full-batch proximal
//! gradient solver for the constrained problem `min_A ||Y - A X||_F^2 + lambda R(A)`.
//! Also the analytic expectation and variance of the ridge estimator under
//! i.i.d. Gaussian output noise.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, MatRef, Side};

use crate::error::{Error, Result};
use crate::online::DIVERGENCE_LIMIT;
use crate::prox::{apply_prox, backtrack_step, inner_product, ConstraintSpec, StepRule};
use crate::spectral;

/// Relative singular value cutoff for rank decisions.
pub const RANK_CUTOFF: f64 = 1e-12;

fn check_xy(x: MatRef<'_, f64>, y: MatRef<'_, f64>) -> Result<()> {
    if x.ncols() != y.ncols() || x.ncols() == 0 {
        return Err(Error::shape(
            format!("X and Y with equal, non-zero column counts (X has {})", x.ncols()),
            format!("Y with {}", y.ncols()),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ExactDmdResult {
    pub rank: usize,
    /// Leading left singular vectors of `X` (n x r).
    pub basis: Mat<f64>,
    /// `U_r^T Y V_r S_r^{-1}` (r x r).
    pub a_reduced: Mat<f64>,
    /// `Y V_r S_r^{-1}` (n x r); exact modes are `lift * W`.
    pub lift: Mat<f64>,
    pub eigenvalues: Vec<c64>,
    /// Exact DMD modes (n x r).
    pub modes: Mat<c64>,
}

impl ExactDmdResult {
    /// Rebuilds the n x n operator as `Phi diag(lambda) Phi^+` (real part).
    pub fn full_operator(&self) -> Result<Mat<f64>> {
        let svd = self.modes.thin_svd().map_err(|_| Error::SvdFailure)?;
        let pinv = svd.pseudoinverse();
        let scaled = Mat::from_fn(self.modes.nrows(), self.rank, |i, k| self.modes[(i, k)] * self.eigenvalues[k]);
        let full = &scaled * &pinv;
        Ok(Mat::from_fn(full.nrows(), full.ncols(), |i, j| full[(i, j)].re))
    }

    /// `U_r A_reduced U_r^T`, the operator restricted to the POD subspace.
    pub fn projected_operator(&self) -> Mat<f64> {
        &self.basis * &self.a_reduced * self.basis.transpose()
    }
}

/// Number of singular values of `x` above `RANK_CUTOFF * sigma_1`.
pub fn effective_rank(x: MatRef<'_, f64>) -> Result<usize> {
    let s = x.singular_values().map_err(|_| Error::SvdFailure)?;
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > RANK_CUTOFF * top).count())
}

/// Rank-`r` exact DMD via the truncated SVD of `X`.
pub fn exact_dmd(x: MatRef<'_, f64>, y: MatRef<'_, f64>, r: usize) -> Result<ExactDmdResult> {
    check_xy(x, y)?;
    let max_rank = x.nrows().min(x.ncols());
    if r == 0 || r > max_rank {
        return Err(Error::InvalidParameter(format!("rank must lie in 1..={max_rank}, got {r}")));
    }
    let svd = x.thin_svd().map_err(|_| Error::SvdFailure)?;
    let s = svd.S().column_vector();
    let ratio = if s[0] > 0.0 { s[r - 1] / s[0] } else { 0.0 };
    if !(ratio >= RANK_CUTOFF) {
        return Err(Error::RankDeficient { rank: r, ratio });
    }
    let u = svd.U().subcols(0, r);
    let v = svd.V().subcols(0, r);
    let yv = y * v;
    let lift = Mat::from_fn(yv.nrows(), r, |i, k| yv[(i, k)] / s[k]);
    let a_reduced = u.transpose() * &lift;
    let (eigenvalues, w) = spectral::eigen(a_reduced.as_ref())?;
    let lift_c = Mat::from_fn(lift.nrows(), r, |i, k| c64::new(lift[(i, k)], 0.0));
    let modes = &lift_c * &w;
    Ok(ExactDmdResult {
        rank: r,
        basis: u.to_owned(),
        a_reduced,
        lift,
        eigenvalues,
        modes,
    })
}

/// Exact DMD without truncation beyond the numerical rank of `X`.
pub fn standard_dmd(x: MatRef<'_, f64>, y: MatRef<'_, f64>) -> Result<ExactDmdResult> {
    check_xy(x, y)?;
    let r = effective_rank(x)?;
    if r == 0 {
        return Err(Error::RankDeficient { rank: 1, ratio: 0.0 });
    }
    exact_dmd(x, y, r)
}

/// Minimum-norm least-squares operator `Y X^+`.
pub fn least_squares_dmd(x: MatRef<'_, f64>, y: MatRef<'_, f64>) -> Result<Mat<f64>> {
    check_xy(x, y)?;
    let svd = x.thin_svd().map_err(|_| Error::SvdFailure)?;
    let s = svd.S().column_vector();
    let r = s.iter().filter(|&&v| v > RANK_CUTOFF * s[0]).count();
    let u = svd.U().subcols(0, r);
    let v = svd.V().subcols(0, r);
    let yv = y * v;
    let scaled = Mat::from_fn(yv.nrows(), r, |i, k| yv[(i, k)] / s[k]);
    Ok(&scaled * u.transpose())
}

#[derive(Debug, Clone)]
pub struct RidgeSolution {
    pub a: Mat<f64>,
    pub lambda: f64,
}

/// `A = Y X^T (X X^T + lambda I)^{-1}` through a Cholesky solve.
pub fn ridge_dmd(x: MatRef<'_, f64>, y: MatRef<'_, f64>, lambda: f64) -> Result<RidgeSolution> {
    check_xy(x, y)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let n = x.nrows();
    if lambda == 0.0 && effective_rank(x)? < n {
        return Err(Error::Singular);
    }
    let mut gram = x * x.transpose();
    for i in 0..n {
        gram[(i, i)] += lambda;
    }
    let llt = gram.llt(Side::Lower).map_err(|_| Error::Singular)?;
    // (X X^T + lambda I) A^T = X Y^T
    let rhs = x * y.transpose();
    let at = llt.solve(&rhs);
    Ok(RidgeSolution { a: at.transpose().to_owned(), lambda })
}

/// `E[A] = A* U diag(s_i^2 / (s_i^2 + lambda)) U^T` for `Y = A* X + E`.
pub fn ridge_expectation(a_star: MatRef<'_, f64>, x: MatRef<'_, f64>, lambda: f64) -> Result<Mat<f64>> {
    let n = x.nrows();
    if a_star.ncols() != n {
        return Err(Error::shape(format!("A* with {n} columns"), format!("{}", a_star.ncols())));
    }
    let svd = x.svd().map_err(|_| Error::SvdFailure)?;
    let s = svd.S().column_vector();
    let u = svd.U();
    let shrink = Mat::from_fn(n, n, |i, j| {
        let mut acc = 0.0;
        for k in 0..s.nrows() {
            let s2 = s[k] * s[k];
            let f = if s2 + lambda > 0.0 { s2 / (s2 + lambda) } else { 0.0 };
            acc += u[(i, k)] * f * u[(j, k)];
        }
        acc
    });
    Ok(a_star * &shrink)
}

/// `E[A] - A*`.
pub fn ridge_bias(a_star: MatRef<'_, f64>, x: MatRef<'_, f64>, lambda: f64) -> Result<Mat<f64>> {
    Ok(ridge_expectation(a_star, x, lambda)? - a_star)
}

/// `tr Var(A) = n sigma^2 sum_i s_i^2 / (s_i^2 + lambda)^2`, where `n` is the
/// number of output rows and `sigma` the noise standard deviation.
pub fn ridge_variance_trace(x: MatRef<'_, f64>, sigma: f64, lambda: f64, n: usize) -> Result<f64> {
    let s = x.singular_values().map_err(|_| Error::SvdFailure)?;
    let sum: f64 = s
        .iter()
        .map(|&si| {
            let s2 = si * si;
            let d = s2 + lambda;
            if d > 0.0 {
                s2 / (d * d)
            } else {
                0.0
            }
        })
        .sum();
    Ok(n as f64 * sigma * sigma * sum)
}

#[derive(Debug, Clone)]
pub struct BatchFit {
    pub a: Mat<f64>,
    pub iterations: usize,
    /// Objective `||Y - A X||^2 + lambda R(A)` after each iteration, starting with `A = 0`.
    pub objective: Vec<f64>,
}

/// Relative iterate change below which the batch solver stops.
pub const BATCH_TOL: f64 = 1e-10;

/// Full-batch proximal gradient on `||Y - A X||^2 + lambda R(A)` from `A = 0`.
///
/// With `rule = None` the step is `1 / L` for `L = 2 sigma_max(X)^2` (plus
/// `2 lambda` for the `l2` penalty).
pub fn batch_pi_dmd(
    x: MatRef<'_, f64>,
    y: MatRef<'_, f64>,
    spec: ConstraintSpec,
    iters: usize,
    rule: Option<StepRule>,
) -> Result<BatchFit> {
    check_xy(x, y)?;
    spec.validate()?;
    if iters == 0 {
        return Err(Error::InvalidParameter("iters must be >= 1".into()));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::shape(format!("Y with {} rows", x.nrows()), format!("{}", y.nrows())));
    }
    let n = x.nrows();
    let l2 = match spec {
        ConstraintSpec::L2 { lambda } => lambda,
        _ => 0.0,
    };
    let rule = match rule {
        Some(r) => {
            r.validate()?;
            r
        }
        None => {
            let smax = x.singular_values().map_err(|_| Error::SvdFailure)?[0];
            let lip = 2.0 * smax * smax + 2.0 * l2;
            StepRule::Fixed { step: if lip > 0.0 { 1.0 / lip } else { 1.0 } }
        }
    };

    let gram = x * x.transpose();
    let yxt = y * x.transpose();
    let yy = y.squared_norm_l2();
    // Wide data: ||Y - A X||^2 = ||Y||^2 - 2 <A, Y X^T> + <A G, A> costs O(n^3) instead of O(n^2 m).
    let wide = x.ncols() > x.nrows();
    let misfit = |a: MatRef<'_, f64>| -> f64 {
        if wide {
            let ag = a * &gram;
            (yy - 2.0 * inner_product(a, yxt.as_ref()) + inner_product(ag.as_ref(), a)).max(0.0)
        } else {
            (y - a * x).squared_norm_l2()
        }
    };
    let smooth = |a: MatRef<'_, f64>| misfit(a) + l2 * a.squared_norm_l2();
    let objective = |a: MatRef<'_, f64>| -> Result<f64> { Ok(misfit(a) + spec.penalty(a)?) };

    let mut a = Mat::<f64>::zeros(n, n);
    let mut history = vec![objective(a.as_ref())?];
    let mut iterations = 0;
    for it in 0..iters {
        // grad = -2 (Y - A X) X^T + 2 l2 A = 2 (A X X^T - Y X^T) + 2 l2 A
        let grad = faer::Scale(2.0) * (&a * &gram - &yxt) + faer::Scale(2.0 * l2) * &a;
        let next = match rule {
            StepRule::Fixed { step } => {
                let z = &a - faer::Scale(step) * &grad;
                apply_prox(&spec, z.as_ref(), step)?
            }
            StepRule::Backtracking { .. } => backtrack_step(smooth, grad.as_ref(), a.as_ref(), &rule, &spec)?.next,
        };
        let moved = (&next - &a).norm_l2();
        a = next;
        iterations = it + 1;
        let max_abs = (0..n).flat_map(|j| (0..n).map(move |i| (i, j))).map(|(i, j)| a[(i, j)].abs()).fold(0.0, f64::max);
        if !(max_abs <= DIVERGENCE_LIMIT) {
            return Err(Error::Diverged { step: iterations, max_abs });
        }
        let f = objective(a.as_ref())?;
        history.push(f);
        if (!wide && f == 0.0) || moved <= BATCH_TOL * a.norm_l2().max(1.0) {
            break;
        }
    }
    Ok(BatchFit { a, iterations, objective: history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::mat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
        Mat::from_fn(n, m, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn exact_dmd_identity_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a_true = Mat::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let x = Mat::<f64>::identity(4, 4);
        let res = exact_dmd(x.as_ref(), a_true.as_ref(), 4).unwrap();
        assert!((res.full_operator().unwrap() - &a_true).norm_l2() < 1e-10);
        assert!((res.projected_operator() - &a_true).norm_l2() < 1e-10);
    }

    #[test]
    fn exact_dmd_rank_checks() {
        let x = mat![[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]];
        let y = x.clone();
        assert!(matches!(exact_dmd(x.as_ref(), y.as_ref(), 2), Err(Error::RankDeficient { rank: 2, .. })));
        assert_eq!(effective_rank(x.as_ref()).unwrap(), 1);
        assert_eq!(standard_dmd(x.as_ref(), y.as_ref()).unwrap().rank, 1);
        assert!(exact_dmd(x.as_ref(), y.as_ref(), 0).is_err());
    }

    #[test]
    fn reduced_eigenvalues_match_projected_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let x = gaussian(6, 30, &mut rng);
        let y = gaussian(6, 30, &mut rng);
        let res = exact_dmd(x.as_ref(), y.as_ref(), 3).unwrap();
        let full = res.projected_operator();
        let mut ev = spectral::eigen_summary(full.as_ref()).unwrap().eigenvalues;
        ev.truncate(3);
        let mut mine = res.eigenvalues.clone();
        mine.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        for (a, b) in ev.iter().zip(&mine) {
            assert!((a.norm() - b.norm()).abs() < 1e-10);
        }
    }

    #[test]
    fn ridge_scalar_example() {
        let r = ridge_dmd(mat![[1.0]].as_ref(), mat![[2.0]].as_ref(), 1.0).unwrap();
        assert!((r.a[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ridge_tends_to_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let x = gaussian(5, 40, &mut rng);
        let y = gaussian(5, 40, &mut rng);
        let ls = least_squares_dmd(x.as_ref(), y.as_ref()).unwrap();
        let r = ridge_dmd(x.as_ref(), y.as_ref(), 1e-12).unwrap();
        assert!((&r.a - &ls).norm_l2() < 1e-8);
        let r0 = ridge_dmd(x.as_ref(), y.as_ref(), 0.0).unwrap();
        assert!((&r0.a - &ls).norm_l2() < 1e-8);
    }

    #[test]
    fn ridge_singular_without_penalty() {
        let x = mat![[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]];
        assert!(matches!(ridge_dmd(x.as_ref(), x.as_ref(), 0.0), Err(Error::Singular)));
        assert!(ridge_dmd(x.as_ref(), x.as_ref(), 0.1).is_ok());
    }

    #[test]
    fn ridge_beats_random_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let x = gaussian(5, 50, &mut rng);
        let y = gaussian(5, 50, &mut rng);
        let lambda = 0.7;
        let sol = ridge_dmd(x.as_ref(), y.as_ref(), lambda).unwrap();
        let f = |a: &Mat<f64>| (&y - a * &x).squared_norm_l2() + lambda * a.squared_norm_l2();
        let best = f(&sol.a);
        for _ in 0..10_000 {
            let scale = 10f64.powf(rng.random_range(-4.0..0.0));
            let d = Mat::from_fn(5, 5, |_, _| scale * rng.random_range(-1.0..1.0));
            assert!(f(&(&sol.a + &d)) >= best);
        }
    }

    #[test]
    fn ridge_shrinks_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let x = gaussian(4, 20, &mut rng);
        let y = gaussian(4, 20, &mut rng);
        let mut prev = f64::INFINITY;
        for lambda in [0.0, 0.1, 1.0, 10.0, 100.0] {
            let norm = ridge_dmd(x.as_ref(), y.as_ref(), lambda).unwrap().a.norm_l2();
            assert!(norm <= prev);
            prev = norm;
        }
    }

    #[test]
    fn ridge_statistics_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let x = gaussian(4, 20, &mut rng);
        let a_star = gaussian(4, 4, &mut rng);
        assert!(ridge_bias(a_star.as_ref(), x.as_ref(), 0.0).unwrap().norm_l2() < 1e-12);
        let s = x.singular_values().unwrap();
        let expected: f64 = 4.0 * 0.01 * s.iter().map(|v| 1.0 / (v * v)).sum::<f64>();
        let got = ridge_variance_trace(x.as_ref(), 0.1, 0.0, 4).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected);
        assert!(ridge_expectation(a_star.as_ref(), x.as_ref(), 1e12).unwrap().norm_l2() < 1e-9);
        assert!(ridge_variance_trace(x.as_ref(), 0.1, 1e12, 4).unwrap() < 1e-20);
    }

    #[test]
    fn batch_symmetric_with_orthonormal_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let y = gaussian(5, 5, &mut rng);
        let x = Mat::<f64>::identity(5, 5);
        let fit = batch_pi_dmd(x.as_ref(), y.as_ref(), ConstraintSpec::Symmetric, 500, None).unwrap();
        let expected = faer::Scale(0.5) * (&y + y.transpose());
        assert!((&fit.a - &expected).norm_l2() < 1e-10);
    }

    #[test]
    fn batch_unconstrained_matches_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let x = gaussian(4, 60, &mut rng);
        let y = gaussian(4, 60, &mut rng);
        let ls = least_squares_dmd(x.as_ref(), y.as_ref()).unwrap();
        let fit = batch_pi_dmd(x.as_ref(), y.as_ref(), ConstraintSpec::Unconstrained, 100_000, None).unwrap();
        assert!((&fit.a - &ls).norm_l2() < 1e-6, "{}", (&fit.a - &ls).norm_l2());
    }

    #[test]
    fn batch_backtracking_objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let x = gaussian(5, 30, &mut rng);
        let y = gaussian(5, 30, &mut rng);
        let rule = StepRule::Backtracking { t_init: 1.0, beta: 0.5 };
        for spec in [ConstraintSpec::Nuclear { lambda: 2.0 }, ConstraintSpec::L1 { lambda: 1.0 }, ConstraintSpec::Tridiagonal] {
            let fit = batch_pi_dmd(x.as_ref(), y.as_ref(), spec, 200, Some(rule)).unwrap();
            for w in fit.objective.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{spec:?}: {} -> {}", w[0], w[1]);
            }
        }
    }
}
