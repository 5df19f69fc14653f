//! Linear solvers: the sparse symmetric-indefinite direct path for the
//! saddle systems, conjugate gradients for symmetric positive definite
//! operators, and Lanczos extreme-eigenvalue estimation.

use crate::assembly::SaddleSystem;
use crate::sparse::{FactorError, LdlSolver, SymMatrix};
use nalgebra::{DMatrix, SymmetricEigen};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error("solver reached residual {achieved:.3e}, requested {requested:.3e}")]
    Tolerance { achieved: f64, requested: f64 },
    #[error("cg did not converge within {max_iter} iterations (residual {residual:.3e})")]
    NonConvergence { max_iter: usize, residual: f64 },
    #[error("operator not positive definite: direction at iteration {iter} has curvature {curvature:.3e}")]
    IndefiniteOperator { iter: usize, curvature: f64 },
    #[error("lanczos breakdown at step {0}")]
    LanczosBreakdown(usize),
}

#[derive(Clone, Debug)]
pub struct SolverReport {
    pub method: String,
    pub iterations: Option<usize>,
    pub residual: f64,
    pub wall_seconds: f64,
}

pub struct SaddleSolution {
    /// Full velocity dof vector, strong boundary values included.
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    /// Zero-mean constraint multiplier, when the constraint is active.
    pub multiplier: Option<f64>,
    pub report: SolverReport,
}

/// Direct solve of the assembled saddle system: signed-shift LDL^T with
/// iterative refinement; deterministic for identical inputs.
pub fn solve_saddle(system: &SaddleSystem, tol: f64) -> Result<SaddleSolution, SolveError> {
    let start = Instant::now();
    let (mat, rhs, signs, coords, force_last) = system.to_symmetric();
    let solver = LdlSolver::new(mat, &coords, &force_last, Some(&signs), 1e-8)?;
    let (x, iters, rel) = solver.solve(&rhs)?;
    if rel > tol {
        return Err(SolveError::Tolerance { achieved: rel, requested: tol });
    }
    let nu = system.n_u_free;
    let np = system.n_p;
    let u = system.constraints.expand(&x[..nu]);
    let p = x[nu..nu + np].to_vec();
    let multiplier = system.mean_row.as_ref().map(|_| x[nu + np]);
    Ok(SaddleSolution {
        u,
        p,
        multiplier,
        report: SolverReport {
            method: "ldlt-refined".into(),
            iterations: Some(iters),
            residual: rel,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

/// Abstract symmetric operator for the iterative solvers.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for SymMatrix {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        SymMatrix::apply(self, x, y)
    }
}

pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Quadratic-energy history 1/2 x'Ax - b'x, strictly non-increasing on
    /// positive definite operators.
    pub energy_history: Vec<f64>,
}

/// Conjugate gradients for symmetric positive definite operators, optional
/// Jacobi preconditioner. Detects indefiniteness through negative curvature.
pub fn solve_spd_cg(
    op: &dyn LinearOperator,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
    precond_diag: Option<&[f64]>,
) -> Result<CgResult, SolveError> {
    let n = op.dim();
    assert_eq!(rhs.len(), n);
    let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        return Ok(CgResult { x: vec![0.0; n], iterations: 0, residual: 0.0, energy_history: vec![0.0] });
    }
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let apply_prec = |r: &[f64], z: &mut [f64]| match precond_diag {
        Some(d) => {
            for i in 0..r.len() {
                z[i] = r[i] / d[i];
            }
        }
        None => z.copy_from_slice(r),
    };
    let mut z = vec![0.0; n];
    apply_prec(&r, &mut z);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    let mut energy = 0.0;
    let mut history = vec![energy];
    for it in 0..max_iter {
        op.apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(SolveError::IndefiniteOperator { iter: it, curvature: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        energy -= 0.5 * alpha * rz;
        history.push(energy);
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= tol * bnorm {
            return Ok(CgResult {
                x,
                iterations: it + 1,
                residual: rnorm / bnorm,
                energy_history: history,
            });
        }
        apply_prec(&r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    Err(SolveError::NonConvergence { max_iter, residual: rnorm / bnorm })
}

#[derive(Clone, Copy, Debug)]
pub struct EigenEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    pub residual_min: f64,
    pub residual_max: f64,
}

/// Lanczos with full reorthogonalization; returns estimates of the extreme
/// eigenvalues with their Ritz residuals and kappa = lambda_max / lambda_min.
pub fn estimate_extreme_eigenvalues(
    op: &dyn LinearOperator,
    iters: usize,
) -> Result<EigenEstimate, SolveError> {
    let n = op.dim();
    let steps = iters.min(n).max(1);
    // Deterministic pseudo-random start vector.
    let mut v: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 12.9898).sin()).collect();
    let nrm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    for a in v.iter_mut() {
        *a /= nrm;
    }
    let mut basis: Vec<Vec<f64>> = vec![v.clone()];
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut beta_last = 0.0;
    let mut w = vec![0.0; n];
    for j in 0..steps {
        op.apply(&basis[j], &mut w);
        let alpha: f64 = w.iter().zip(&basis[j]).map(|(a, b)| a * b).sum();
        alphas.push(alpha);
        // Full reorthogonalization, two passes.
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = w.iter().zip(b).map(|(a, b)| a * b).sum();
                for i in 0..n {
                    w[i] -= c * b[i];
                }
            }
        }
        let beta = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        beta_last = beta;
        if j + 1 == steps || beta < 1e-14 {
            break;
        }
        betas.push(beta);
        basis.push(w.iter().map(|a| a / beta).collect());
    }
    let k = alphas.len();
    if k == 0 {
        return Err(SolveError::LanczosBreakdown(0));
    }
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut idx_min = 0;
    let mut idx_max = 0;
    for i in 0..k {
        if eig.eigenvalues[i] < eig.eigenvalues[idx_min] {
            idx_min = i;
        }
        if eig.eigenvalues[i] > eig.eigenvalues[idx_max] {
            idx_max = i;
        }
    }
    let resid = |col: usize| -> f64 { (beta_last * eig.eigenvectors[(k - 1, col)]).abs() };
    let lambda_min = eig.eigenvalues[idx_min];
    let lambda_max = eig.eigenvalues[idx_max];
    Ok(EigenEstimate {
        lambda_min,
        lambda_max,
        kappa: lambda_max / lambda_min,
        residual_min: resid(idx_min),
        residual_max: resid(idx_max),
    })
}

/// Exact spectrum condition number max|l| / min|l| of a modest-size
/// symmetric matrix (used by the condition-number study).
pub fn dense_condition_number(mat: &SymMatrix) -> (f64, f64, f64) {
    assert!(mat.n <= 6000, "dense eigensolve limited to modest sizes");
    let mut dm = DMatrix::zeros(mat.n, mat.n);
    for i in 0..mat.n {
        for p in mat.row_ptr[i]..mat.row_ptr[i + 1] {
            dm[(i, mat.col_idx[p])] = mat.vals[p];
        }
    }
    let eig = SymmetricEigen::new(dm);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &l in eig.eigenvalues.iter() {
        lo = lo.min(l.abs());
        hi = hi.max(l.abs());
    }
    (lo, hi, hi / lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct DiagOp(Vec<f64>);
    impl LinearOperator for DiagOp {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for i in 0..x.len() {
                y[i] = self.0[i] * x[i];
            }
        }
    }

    #[test]
    fn cg_identity_converges_in_one_iteration() {
        let op = DiagOp(vec![1.0; 17]);
        let b: Vec<f64> = (0..17).map(|i| i as f64).collect();
        let r = solve_spd_cg(&op, &b, 1e-12, 10, None).unwrap();
        assert_eq!(r.iterations, 1);
        for (xi, bi) in r.x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_diagonal_solve_and_energy_monotonicity() {
        let op = DiagOp(vec![1.0, 1e4]);
        let r = solve_spd_cg(&op, &[1.0, 1.0], 1e-12, 50, None).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-10);
        assert!((r.x[1] - 1e-4).abs() < 1e-12);

        let diag: Vec<f64> = (1..=40).map(|i| i as f64).collect();
        let op = DiagOp(diag);
        let b: Vec<f64> = (0..40).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let r = solve_spd_cg(&op, &b, 1e-11, 200, None).unwrap();
        for w in r.energy_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-14, "energy not monotone: {w:?}");
        }
    }

    #[test]
    fn cg_rejects_indefinite_operators() {
        let op = DiagOp(vec![1.0, -2.0]);
        match solve_spd_cg(&op, &[1.0, 1.0], 1e-12, 10, None) {
            Err(SolveError::IndefiniteOperator { curvature, .. }) => assert!(curvature <= 0.0),
            other => panic!("expected indefiniteness error, got {:?}", other.is_ok()),
        }
    }

    #[test]
    fn lanczos_estimates() {
        let op = DiagOp(vec![1.0; 13]);
        let est = estimate_extreme_eigenvalues(&op, 13).unwrap();
        assert!((est.kappa - 1.0).abs() < 1e-10);

        let diag: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let op = DiagOp(diag);
        let est = estimate_extreme_eigenvalues(&op, 100).unwrap();
        assert!((est.kappa - 100.0).abs() < 1.0, "kappa {}", est.kappa);
        assert!(est.residual_max < 1e-6);
    }

    #[test]
    fn dense_condition_number_on_known_spectrum() {
        let trips: Vec<(usize, usize, f64)> =
            (0..10).map(|i| (i, i, (i + 1) as f64)).collect();
        let mat = SymMatrix::from_triplets(10, &trips);
        let (lo, hi, kappa) = dense_condition_number(&mat);
        assert!((lo - 1.0).abs() < 1e-12);
        assert!((hi - 10.0).abs() < 1e-12);
        assert!((kappa - 10.0).abs() < 1e-10);
    }
}
