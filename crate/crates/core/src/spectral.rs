//! Modal decomposition of a fitted operator, multi-step modal prediction and
//! the R^2 score.

use faer::linalg::solvers::SolveLstsq;
use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};
use crate::snapshots::SnapshotMatrix;

/// Retained eigenpairs of an operator with amplitudes fitted to an initial state.
#[derive(Debug, Clone)]
pub struct ModalDecomposition {
    /// Sorted by descending modulus.
    pub eigenvalues: Vec<c64>,
    /// One column per retained eigenvalue.
    pub modes: Mat<c64>,
    pub amplitudes: Vec<c64>,
    pub r_used: usize,
}

/// Relative tolerance for recognising the conjugate partner of an eigenvalue.
const CONJ_TOL: f64 = 1e-10;

/// Eigendecomposition of the square operator `a`, keeping `r_used` modes.
pub fn decompose(a: MatRef<'_, f64>, r_used: usize, x0: &[f64]) -> Result<ModalDecomposition> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    let n = a.nrows();
    if r_used == 0 || r_used > n {
        return Err(Error::InvalidParameter(format!("r_used must lie in 1..={n}, got {r_used}")));
    }
    if x0.len() != n {
        return Err(Error::shape(format!("x0 of length {n}"), format!("length {}", x0.len())));
    }
    let (eigenvalues, vectors) = eigen(a)?;
    from_eigenpairs(&eigenvalues, vectors.as_ref(), r_used, x0)
}

/// Builds a decomposition from precomputed eigenpairs; `vectors` holds one
/// (possibly lifted) mode per column.
pub fn from_eigenpairs(
    eigenvalues: &[c64],
    vectors: MatRef<'_, c64>,
    r_used: usize,
    x0: &[f64],
) -> Result<ModalDecomposition> {
    let p = eigenvalues.len();
    let n = vectors.nrows();
    if vectors.ncols() != p {
        return Err(Error::shape(format!("{p} mode columns"), format!("{}", vectors.ncols())));
    }
    if r_used == 0 || r_used > p {
        return Err(Error::InvalidParameter(format!("r_used must lie in 1..={p}, got {r_used}")));
    }
    if x0.len() != n {
        return Err(Error::shape(format!("x0 of length {n}"), format!("length {}", x0.len())));
    }

    // Amplitudes in the full basis only serve as the tie-break key.
    let full_b = fit_amplitudes(vectors, x0);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| {
        eigenvalues[j]
            .norm()
            .total_cmp(&eigenvalues[i].norm())
            .then_with(|| full_b[j].norm().total_cmp(&full_b[i].norm()))
            .then_with(|| i.cmp(&j))
    });

    let mut keep: Vec<usize> = order[..r_used].to_vec();
    // Keep conjugate pairs whole so predictions stay real.
    let mut extra = Vec::new();
    for &i in &keep {
        let lam = eigenvalues[i];
        if lam.im == 0.0 {
            continue;
        }
        let has_partner = keep.iter().chain(&extra).any(|&j| j != i && is_conjugate(eigenvalues[j], lam));
        if !has_partner {
            if let Some(&j) = order[r_used..].iter().find(|&&j| !extra.contains(&j) && is_conjugate(eigenvalues[j], lam)) {
                extra.push(j);
            }
        }
    }
    keep.extend(extra);

    let modes = Mat::from_fn(n, keep.len(), |i, k| vectors[(i, keep[k])]);
    let amplitudes = fit_amplitudes(modes.as_ref(), x0);
    Ok(ModalDecomposition {
        eigenvalues: keep.iter().map(|&i| eigenvalues[i]).collect(),
        r_used: keep.len(),
        modes,
        amplitudes,
    })
}

fn is_conjugate(a: c64, b: c64) -> bool {
    let scale = a.norm().max(b.norm()).max(f64::MIN_POSITIVE);
    (a - b.conj()).norm() <= CONJ_TOL * scale
}

/// Least-squares `b` with `W b ~ x0`.
fn fit_amplitudes(w: MatRef<'_, c64>, x0: &[f64]) -> Vec<c64> {
    let rhs = Mat::from_fn(x0.len(), 1, |i, _| c64::new(x0[i], 0.0));
    if w.nrows() >= w.ncols() {
        let b = w.qr().solve_lstsq(&rhs);
        (0..w.ncols()).map(|k| b[(k, 0)]).collect()
    } else {
        // Underdetermined: minimum-norm solution via the pseudo-inverse.
        match w.thin_svd() {
            Ok(svd) => {
                let b = svd.pseudoinverse() * &rhs;
                (0..w.ncols()).map(|k| b[(k, 0)]).collect()
            }
            Err(_) => vec![c64::new(0.0, 0.0); w.ncols()],
        }
    }
}

/// Eigenvalues and eigenvectors (columns) of a real square matrix.
pub fn eigen(a: MatRef<'_, f64>) -> Result<(Vec<c64>, Mat<c64>)> {
    if a.nrows() == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let e = a.eigen().map_err(|_| Error::EigFailure)?;
    let vals: Vec<c64> = e.S().column_vector().iter().copied().collect();
    if vals.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::EigFailure);
    }
    Ok((vals, e.U().to_owned()))
}

/// Column `k` (1-based) is `Re(W diag(lambda)^k b)`.
pub fn predict(md: &ModalDecomposition, steps: usize, dt: f64) -> Result<SnapshotMatrix> {
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be >= 1".into()));
    }
    let n = md.modes.nrows();
    let p = md.eigenvalues.len();
    let mut coeff: Vec<c64> = md.amplitudes.clone();
    let mut out = Mat::<f64>::zeros(n, steps);
    for k in 0..steps {
        for (c, lam) in coeff.iter_mut().zip(&md.eigenvalues) {
            *c *= *lam;
        }
        for m in 0..p {
            let c = coeff[m];
            for i in 0..n {
                let w = md.modes[(i, m)];
                out[(i, k)] += w.re * c.re - w.im * c.im;
            }
        }
    }
    for k in 0..steps {
        for i in 0..n {
            if !out[(i, k)].is_finite() {
                // Saturate so a blown-up prediction still scores.
                out[(i, k)] = if out[(i, k)].is_nan() { f64::MAX } else { f64::MAX.copysign(out[(i, k)]) };
            }
        }
    }
    SnapshotMatrix::new(out, dt)
}

/// `1 - SS_res / SS_tot` over all entries, with one global mean of `truth`.
pub fn r_squared(pred: MatRef<'_, f64>, truth: MatRef<'_, f64>) -> Result<f64> {
    check_same_shape(pred, truth)?;
    let count = (truth.nrows() * truth.ncols()) as f64;
    let mut mean = 0.0;
    for j in 0..truth.ncols() {
        for i in 0..truth.nrows() {
            mean += truth[(i, j)];
        }
    }
    mean /= count;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for j in 0..truth.ncols() {
        for i in 0..truth.nrows() {
            let d = pred[(i, j)] - truth[(i, j)];
            ss_res += d * d;
            let c = truth[(i, j)] - mean;
            ss_tot += c * c;
        }
    }
    if ss_tot == 0.0 {
        return Err(Error::DegenerateTruth);
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean of per-row R^2 values, skipping constant rows of `truth`.
pub fn r_squared_per_channel(pred: MatRef<'_, f64>, truth: MatRef<'_, f64>) -> Result<f64> {
    check_same_shape(pred, truth)?;
    let mut scores = Vec::new();
    for i in 0..truth.nrows() {
        match r_squared(pred.subrows(i, 1), truth.subrows(i, 1)) {
            Ok(s) => scores.push(s),
            Err(Error::DegenerateTruth) => {}
            Err(e) => return Err(e),
        }
    }
    if scores.is_empty() {
        return Err(Error::DegenerateTruth);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

fn check_same_shape(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<()> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() || b.ncols() == 0 {
        return Err(Error::shape(
            format!("{}x{} (non-empty)", b.nrows(), b.ncols()),
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSummary {
    pub spectral_radius: f64,
    pub eigenvalues: Vec<c64>,
    /// `| |lambda| - 1 |` per eigenvalue.
    pub unit_circle_distance: Vec<f64>,
}

pub fn eigen_summary(a: MatRef<'_, f64>) -> Result<EigenSummary> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    let mut eigenvalues = a.eigenvalues().map_err(|_| Error::EigFailure)?;
    if eigenvalues.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::EigFailure);
    }
    eigenvalues.sort_by(|x, y| y.norm().total_cmp(&x.norm()));
    Ok(summary_of(eigenvalues))
}

pub fn summary_of(eigenvalues: Vec<c64>) -> EigenSummary {
    let spectral_radius = eigenvalues.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let unit_circle_distance = eigenvalues.iter().map(|v| (v.norm() - 1.0).abs()).collect();
    EigenSummary { spectral_radius, eigenvalues, unit_circle_distance }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub r2: f64,
    /// Euclidean error of each predicted column.
    pub step_errors: Vec<f64>,
    pub spectral_radius: f64,
    pub eigenvalues: Vec<c64>,
}

/// Scores a prediction against the truth and attaches the retained spectrum.
pub fn evaluate(pred: MatRef<'_, f64>, truth: MatRef<'_, f64>, eigenvalues: &[c64], per_channel: bool) -> Result<EvalReport> {
    let r2 = if per_channel { r_squared_per_channel(pred, truth)? } else { r_squared(pred, truth)? };
    let step_errors = (0..truth.ncols())
        .map(|k| (0..truth.nrows()).map(|i| (pred[(i, k)] - truth[(i, k)]).powi(2)).sum::<f64>().sqrt())
        .collect();
    let summary = summary_of(eigenvalues.to_vec());
    Ok(EvalReport {
        r2,
        step_errors,
        spectral_radius: summary.spectral_radius,
        eigenvalues: summary.eigenvalues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::linalg::solvers::DenseSolveCore;
    use faer::mat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_operator() {
        let a = mat![[0.5, 0.0], [0.0, 0.1]];
        let md = decompose(a.as_ref(), 2, &[1.0, 1.0]).unwrap();
        assert!((md.eigenvalues[0] - c64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((md.eigenvalues[1] - c64::new(0.1, 0.0)).norm() < 1e-15);
        // b depends on eigenvector scaling; W b must reproduce x0
        for i in 0..2 {
            let x: c64 = (0..2).map(|k| md.modes[(i, k)] * md.amplitudes[k]).sum();
            assert!((x - c64::new(1.0, 0.0)).norm() < 1e-14);
        }
        let pred = predict(&md, 3, 1.0).unwrap();
        assert!((pred.values()[(0, 2)] - 0.125).abs() < 1e-15);
        assert!((pred.values()[(1, 0)] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn scalar_geometric_prediction() {
        let md = decompose(mat![[0.5]].as_ref(), 1, &[1.0]).unwrap();
        let p = predict(&md, 3, 1.0).unwrap();
        let got: Vec<f64> = p.values().row(0).iter().copied().collect();
        for (g, e) in got.iter().zip([0.5, 0.25, 0.125]) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_predicts_constant() {
        let a = Mat::<f64>::identity(4, 4);
        let x0 = [1.0, -2.0, 3.0, 0.5];
        let md = decompose(a.as_ref(), 4, &x0).unwrap();
        assert!(md.eigenvalues.iter().all(|l| (*l - c64::new(1.0, 0.0)).norm() < 1e-14));
        let p = predict(&md, 5, 1.0).unwrap();
        for k in 0..5 {
            for i in 0..4 {
                assert!((p.values()[(i, k)] - x0[i]).abs() < 1e-12);
            }
        }
    }

    fn random_diagonalizable(n: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
        let s = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let d = Mat::from_fn(n, n, |i, j| if i == j { 0.3 + 0.1 * i as f64 } else { 0.0 });
        let s_inv = s.partial_piv_lu().inverse();
        &s * &d * &s_inv
    }

    #[test]
    fn full_rank_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_diagonalizable(6, &mut rng);
        let md = decompose(a.as_ref(), 6, &[1.0; 6]).unwrap();
        let lam = Mat::from_fn(6, 6, |i, j| if i == j { md.eigenvalues[i] } else { c64::new(0.0, 0.0) });
        let w_inv = md.modes.partial_piv_lu().inverse();
        let rec = &md.modes * &lam * &w_inv;
        for j in 0..6 {
            for i in 0..6 {
                assert!((rec[(i, j)] - c64::new(a[(i, j)], 0.0)).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn prediction_matches_matrix_powers() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = Mat::from_fn(5, 5, |_, _| rng.random_range(-0.45..0.45));
        let x0: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let md = decompose(a.as_ref(), 5, &x0).unwrap();
        let pred = predict(&md, 20, 1.0).unwrap();
        let mut x = faer::Col::from_fn(5, |i| x0[i]);
        for k in 0..20 {
            x = &a * &x;
            let norm = x.norm_l2();
            for i in 0..5 {
                assert!((pred.values()[(i, k)] - x[i]).abs() <= 1e-6 * norm.max(1e-300));
            }
        }
    }

    #[test]
    fn conjugate_pairs_stay_whole() {
        // rotation-scaling block plus a real eigenvalue of the same modulus ordering
        let a = mat![[0.0, -0.9, 0.0], [0.9, 0.0, 0.0], [0.0, 0.0, 0.5]];
        let md = decompose(a.as_ref(), 1, &[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(md.r_used, 2);
        assert!((md.eigenvalues[0] - md.eigenvalues[1].conj()).norm() < 1e-12);
        let p = predict(&md, 1, 1.0).unwrap();
        assert!((p.values()[(1, 0)] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn decompose_errors() {
        assert!(decompose(Mat::<f64>::zeros(2, 3).as_ref(), 1, &[0.0, 0.0]).is_err());
        assert!(decompose(Mat::<f64>::identity(2, 2).as_ref(), 0, &[0.0, 0.0]).is_err());
        assert!(decompose(Mat::<f64>::identity(2, 2).as_ref(), 3, &[0.0, 0.0]).is_err());
        assert!(decompose(Mat::<f64>::identity(2, 2).as_ref(), 2, &[0.0]).is_err());
    }

    #[test]
    fn r_squared_examples() {
        let truth = mat![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        assert_eq!(r_squared(truth.as_ref(), truth.as_ref()).unwrap(), 1.0);
        let mean = Mat::from_fn(2, 3, |_, _| 3.5);
        assert!(r_squared(mean.as_ref(), truth.as_ref()).unwrap().abs() < 1e-15);
        let flat = Mat::from_fn(2, 3, |_, _| 1.0);
        assert!(matches!(r_squared(truth.as_ref(), flat.as_ref()), Err(Error::DegenerateTruth)));
        let far = Mat::from_fn(2, 3, |_, _| 1e100);
        assert!(r_squared(far.as_ref(), truth.as_ref()).unwrap() < -1e190);
    }

    #[test]
    fn r_squared_ignores_column_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let truth = Mat::from_fn(3, 8, |_, _| rng.random_range(-1.0..1.0));
        let pred = Mat::from_fn(3, 8, |_, _| rng.random_range(-1.0..1.0));
        let perm = [3, 7, 0, 1, 6, 2, 5, 4];
        let tp = Mat::from_fn(3, 8, |i, j| truth[(i, perm[j])]);
        let pp = Mat::from_fn(3, 8, |i, j| pred[(i, perm[j])]);
        let a = r_squared(pred.as_ref(), truth.as_ref()).unwrap();
        let b = r_squared(pp.as_ref(), tp.as_ref()).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn per_channel_score() {
        let truth = mat![[1.0, 2.0, 3.0], [10.0, 20.0, 30.0]];
        let pred = mat![[1.0, 2.0, 3.0], [20.0, 20.0, 20.0]];
        assert!((r_squared_per_channel(pred.as_ref(), truth.as_ref()).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn summaries() {
        let s = eigen_summary(Mat::<f64>::identity(3, 3).as_ref()).unwrap();
        assert!((s.spectral_radius - 1.0).abs() < 1e-14);
        assert!(s.unit_circle_distance.iter().all(|d| *d < 1e-14));
        let half = Mat::from_fn(3, 3, |i, j| if i == j { 0.5 } else { 0.0 });
        assert!((eigen_summary(half.as_ref()).unwrap().spectral_radius - 0.5).abs() < 1e-14);
    }

    #[test]
    fn companion_radius_matches_roots() {
        // roots 0.9, -0.5, 0.3 +- 0.4i
        let roots = [c64::new(0.9, 0.0), c64::new(-0.5, 0.0), c64::new(0.3, 0.4), c64::new(0.3, -0.4)];
        let mut coeffs = vec![c64::new(1.0, 0.0)];
        for r in roots {
            let mut next = vec![c64::new(0.0, 0.0); coeffs.len() + 1];
            for (k, c) in coeffs.iter().enumerate() {
                next[k] += *c;
                next[k + 1] -= *c * r;
            }
            coeffs = next;
        }
        // x^4 + c1 x^3 + ... + c4: companion with last row -c
        let n = 4;
        let comp = Mat::from_fn(n, n, |i, j| {
            if i + 1 == j {
                1.0
            } else if i == n - 1 {
                -coeffs[n - j].re
            } else {
                0.0
            }
        });
        let s = eigen_summary(comp.as_ref()).unwrap();
        let expected = roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
        assert!((s.spectral_radius - expected).abs() < 1e-8);
    }
}
