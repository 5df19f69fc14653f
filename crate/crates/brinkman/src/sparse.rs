//! Sparse symmetric matrices and a no-pivoting LDL^T factorization.
//!
//! Saddle-point systems are factored after symmetric equilibration with a
//! small signed diagonal shift, which makes the shifted matrix symmetric
//! quasidefinite and the factorization stable under any symmetric
//! permutation; iterative refinement against the unshifted matrix then
//! restores full accuracy. The fill-reducing ordering is a geometric nested
//! dissection guided by dof coordinates with graph-consistent separators.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FactorError {
    #[error("zero or near-zero pivot at dof {0}")]
    SingularPivot(usize),
    #[error("iterative refinement stalled: relative residual {residual:.3e} after {iters} steps")]
    RefinementStalled { residual: f64, iters: usize },
}

/// Full symmetric sparse matrix in CSR form; duplicate triplets are summed.
#[derive(Clone, Debug)]
pub struct SymMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SymMatrix {
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> SymMatrix {
        let mut counts = vec![0usize; n + 1];
        for &(i, _, _) in triplets {
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut col_raw = vec![0usize; triplets.len()];
        let mut val_raw = vec![0.0; triplets.len()];
        let mut cursor = counts.clone();
        for &(i, j, v) in triplets {
            let p = cursor[i];
            col_raw[p] = j;
            val_raw[p] = v;
            cursor[i] += 1;
        }
        // Sort each row and combine duplicates.
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for i in 0..n {
            entries.clear();
            entries.extend(
                (counts[i]..counts[i + 1]).map(|p| (col_raw[p], val_raw[p])),
            );
            entries.sort_unstable_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for &(j, v) in entries.iter() {
                if last == Some(j) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    vals.push(v);
                    last = Some(j);
                }
            }
            row_ptr[i + 1] = col_idx.len();
        }
        SymMatrix { n, row_ptr, col_idx, vals }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[p] * x[self.col_idx[p]];
            }
            y[i] = acc;
        }
    }

    pub fn residual_norm(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut r = vec![0.0; self.n];
        self.apply(x, &mut r);
        r.iter()
            .zip(b)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest relative asymmetry max |a_ij - a_ji| / max|a|.
    pub fn symmetry_error(&self) -> f64 {
        let mut scale = 0.0f64;
        for &v in &self.vals {
            scale = scale.max(v.abs());
        }
        if scale == 0.0 {
            return 0.0;
        }
        let get = |i: usize, j: usize| -> f64 {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            match self.col_idx[lo..hi].binary_search(&j) {
                Ok(p) => self.vals[lo + p],
                Err(_) => 0.0,
            }
        };
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[p];
                if j > i {
                    worst = worst.max((self.vals[p] - get(j, i)).abs());
                }
            }
        }
        worst / scale
    }

    /// Coordinate-format text dump (row col value per line).
    pub fn dump_coo(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s.push_str(&format!("{} {} {:.16e}\n", i, self.col_idx[p], self.vals[p]));
            }
        }
        s
    }
}

/// Geometric nested dissection: recursive coordinate bisection with
/// graph-consistent separators ordered last. `force_last` dofs (dense rows
/// such as a mean constraint) are appended at the very end.
pub fn nested_dissection(
    mat: &SymMatrix,
    coords: &[[f64; 2]],
    force_last: &[usize],
) -> Vec<usize> {
    let n = mat.n;
    let mut excluded = vec![false; n];
    for &f in force_last {
        excluded[f] = true;
    }
    let mut order = Vec::with_capacity(n);
    let initial: Vec<usize> = (0..n).filter(|&i| !excluded[i]).collect();
    // side[i]: 0 unused, 1 = A half, 2 = B half for the current split.
    let mut side = vec![0u8; n];
    let mut stack: Vec<Vec<usize>> = vec![initial];
    let mut pending: Vec<Vec<usize>> = Vec::new(); // separators, emitted in reverse

    while let Some(mut nodes) = stack.pop() {
        if nodes.len() <= 48 {
            nodes.sort_unstable();
            order.extend_from_slice(&nodes);
            continue;
        }
        // Split along the longer bounding-box axis at the median.
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for &v in &nodes {
            for a in 0..2 {
                lo[a] = lo[a].min(coords[v][a]);
                hi[a] = hi[a].max(coords[v][a]);
            }
        }
        let axis = if hi[0] - lo[0] >= hi[1] - lo[1] { 0 } else { 1 };
        nodes.sort_unstable_by(|&a, &b| {
            coords[a][axis]
                .partial_cmp(&coords[b][axis])
                .unwrap()
                .then(a.cmp(&b))
        });
        let half = nodes.len() / 2;
        for (idx, &v) in nodes.iter().enumerate() {
            side[v] = if idx < half { 1 } else { 2 };
        }
        let mut sep = Vec::new();
        let mut a_part = Vec::new();
        let mut b_part = Vec::new();
        for &v in &nodes {
            let mine = side[v];
            let crosses = (mat.row_ptr[v]..mat.row_ptr[v + 1]).any(|p| {
                let w = mat.col_idx[p];
                side[w] != 0 && side[w] != mine && !excluded[w]
            });
            if crosses {
                sep.push(v);
            } else if mine == 1 {
                a_part.push(v);
            } else {
                b_part.push(v);
            }
        }
        for &v in &nodes {
            side[v] = 0;
        }
        sep.sort_unstable();
        pending.push(sep);
        // Guard against degenerate splits (everything in the separator).
        if a_part.is_empty() && b_part.is_empty() {
            continue;
        }
        stack.push(a_part);
        stack.push(b_part);
    }
    while let Some(sep) = pending.pop() {
        order.extend_from_slice(&sep);
    }
    let mut last: Vec<usize> = force_last.to_vec();
    last.sort_unstable();
    order.extend_from_slice(&last);
    debug_assert_eq!(order.len(), n);
    order
}

/// LDL^T factorization of a permuted, equilibrated, optionally shifted
/// symmetric matrix, with iterative refinement against the original matrix.
pub struct LdlSolver {
    matrix: SymMatrix,
    scale: Vec<f64>,
    iperm: Vec<usize>, // iperm[old] = new
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    pub refine_tol: f64,
    pub max_refine: usize,
}

impl LdlSolver {
    /// Factor `matrix`. `diag_sign` (+1/-1 per dof) selects the sign of the
    /// stabilizing shift `delta` (pass `delta = 0` for quasidefinite or
    /// definite matrices that need no shift).
    pub fn new(
        matrix: SymMatrix,
        coords: &[[f64; 2]],
        force_last: &[usize],
        diag_sign: Option<&[i8]>,
        delta: f64,
    ) -> Result<LdlSolver, FactorError> {
        let n = matrix.n;
        // Symmetric equilibration by row max-norms.
        let mut scale = vec![1.0f64; n];
        for i in 0..n {
            let mut m = 0.0f64;
            for p in matrix.row_ptr[i]..matrix.row_ptr[i + 1] {
                m = m.max(matrix.vals[p].abs());
            }
            if m > 0.0 {
                scale[i] = 1.0 / m.sqrt();
            }
        }
        let perm = nested_dissection(&matrix, coords, force_last);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // Upper triangle of P (S A S + delta * sign) P^T in column-compressed
        // form, columns sorted by row index.
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for i in 0..n {
            let ni = iperm[i];
            for p in matrix.row_ptr[i]..matrix.row_ptr[i + 1] {
                let j = matrix.col_idx[p];
                let nj = iperm[j];
                let v = matrix.vals[p] * scale[i] * scale[j];
                if ni <= nj {
                    cols[nj].push((ni, v));
                }
            }
        }
        if delta != 0.0 {
            let signs = diag_sign.expect("diag_sign required with a nonzero shift");
            for i in 0..n {
                cols[iperm[i]].push((iperm[i], delta * signs[i] as f64));
            }
        }
        let mut cp = vec![0usize; n + 1];
        let mut ci = Vec::new();
        let mut cx = Vec::new();
        for j in 0..n {
            cols[j].sort_unstable_by_key(|e| e.0);
            let mut last = usize::MAX;
            for &(i, v) in &cols[j] {
                if i == last {
                    *cx.last_mut().unwrap() += v;
                } else {
                    ci.push(i);
                    cx.push(v);
                    last = i;
                }
            }
            cp[j + 1] = ci.len();
        }
        drop(cols);

        // Symbolic: elimination tree and column counts.
        let none = usize::MAX;
        let mut parent = vec![none; n];
        let mut flag = vec![none; n];
        let mut lnz = vec![0usize; n];
        for j in 0..n {
            flag[j] = j;
            for p in cp[j]..cp[j + 1] {
                let mut k = ci[p];
                if k == j {
                    continue;
                }
                while flag[k] != j {
                    if parent[k] == none {
                        parent[k] = j;
                    }
                    lnz[k] += 1;
                    flag[k] = j;
                    k = parent[k];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for j in 0..n {
            lp[j + 1] = lp[j] + lnz[j];
        }
        let nnz_l = lp[n];
        let mut li = vec![0usize; nnz_l];
        let mut lx = vec![0.0f64; nnz_l];
        let mut d = vec![0.0f64; n];

        // Numeric: up-looking factorization.
        let mut y = vec![0.0f64; n];
        let mut pattern = vec![0usize; n];
        let mut scratch = vec![0usize; n];
        let mut lfill = vec![0usize; n];
        let mut flag = vec![none; n];
        for j in 0..n {
            let mut top = n;
            flag[j] = j;
            for p in cp[j]..cp[j + 1] {
                let i = ci[p];
                y[i] += cx[p];
                if i == j {
                    continue;
                }
                let mut len = 0;
                let mut k = i;
                while flag[k] != j {
                    scratch[len] = k;
                    len += 1;
                    flag[k] = j;
                    k = parent[k];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    pattern[top] = scratch[len];
                }
            }
            let mut dj = y[j];
            y[j] = 0.0;
            for t in top..n {
                let k = pattern[t];
                let yk = y[k];
                y[k] = 0.0;
                let p2 = lp[k] + lfill[k];
                for p in lp[k]..p2 {
                    y[li[p]] -= lx[p] * yk;
                }
                let ljk = yk / d[k];
                dj -= ljk * yk;
                li[p2] = j;
                lx[p2] = ljk;
                lfill[k] += 1;
            }
            if dj == 0.0 || dj.abs() < 1e-300 {
                return Err(FactorError::SingularPivot(perm[j]));
            }
            d[j] = dj;
        }

        Ok(LdlSolver {
            matrix,
            scale,
            iperm,
            lp,
            li,
            lx,
            d,
            refine_tol: 1e-11,
            max_refine: 60,
        })
    }

    fn solve_factored(&self, b: &[f64], x: &mut [f64]) {
        let n = self.matrix.n;
        // x_perm = P S b
        for i in 0..n {
            x[self.iperm[i]] = b[i] * self.scale[i];
        }
        for j in 0..n {
            let xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                x[self.li[p]] -= self.lx[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                xj -= self.lx[p] * x[self.li[p]];
            }
            x[j] = xj;
        }
        // b := S P^T x_perm, reusing the caller's buffer layout.
        let tmp: Vec<f64> = (0..n).map(|i| x[self.iperm[i]] * self.scale[i]).collect();
        x.copy_from_slice(&tmp);
    }

    /// Solve against the original (unshifted) matrix with iterative
    /// refinement; returns the solution, refinement steps and the final
    /// relative residual.
    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, usize, f64), FactorError> {
        let n = self.matrix.n;
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            return Ok((vec![0.0; n], 0, 0.0));
        }
        let mut x = vec![0.0f64; n];
        let mut r = b.to_vec();
        let mut dx = vec![0.0f64; n];
        let mut ax = vec![0.0f64; n];
        let mut best = f64::INFINITY;
        for it in 0..self.max_refine {
            self.solve_factored(&r, &mut dx);
            for i in 0..n {
                x[i] += dx[i];
            }
            self.matrix.apply(&x, &mut ax);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
            let rel = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
            if rel <= self.refine_tol {
                return Ok((x, it + 1, rel));
            }
            if rel > 0.9 * best && it > 4 {
                return Err(FactorError::RefinementStalled { residual: rel, iters: it + 1 });
            }
            best = best.min(rel);
        }
        Err(FactorError::RefinementStalled { residual: best, iters: self.max_refine })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn dense_of(triplets: &[(usize, usize, f64)], n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for &(i, j, v) in triplets {
            m[(i, j)] += v;
        }
        m
    }

    #[test]
    fn spd_system_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 60;
        // SPD: diagonally dominant random symmetric matrix.
        let mut trips = Vec::new();
        for i in 0..n {
            trips.push((i, i, 10.0 + rng.gen::<f64>()));
            for _ in 0..3 {
                let j = rng.gen_range(0..n);
                if j != i {
                    let v = rng.gen::<f64>() - 0.5;
                    trips.push((i, j, v));
                    trips.push((j, i, v));
                }
            }
        }
        let mat = SymMatrix::from_triplets(n, &trips);
        assert!(mat.symmetry_error() < 1e-15);
        let coords: Vec<[f64; 2]> = (0..n).map(|i| [i as f64, (i * i % 13) as f64]).collect();
        let solver = LdlSolver::new(mat.clone(), &coords, &[], None, 0.0).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let (x, _, rel) = solver.solve(&b).unwrap();
        assert!(rel < 1e-11);
        let dm = dense_of(&trips, n);
        let xd = dm.lu().solve(&DVector::from_vec(b.clone())).unwrap();
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-8, "{} vs {}", x[i], xd[i]);
        }
    }

    #[test]
    fn saddle_system_with_sqd_shift_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let nu = 50;
        let np = 20;
        let n = nu + np;
        let mut trips = Vec::new();
        for i in 0..nu {
            trips.push((i, i, 3.0 + rng.gen::<f64>()));
            let j = rng.gen_range(0..nu);
            if j != i {
                let v = 0.3 * (rng.gen::<f64>() - 0.5);
                trips.push((i, j, v));
                trips.push((j, i, v));
            }
        }
        for q in 0..np {
            for _ in 0..4 {
                let j = rng.gen_range(0..nu);
                let v = rng.gen::<f64>() - 0.5;
                trips.push((nu + q, j, v));
                trips.push((j, nu + q, v));
            }
        }
        let mat = SymMatrix::from_triplets(n, &trips);
        let coords: Vec<[f64; 2]> = (0..n).map(|i| [(i % 9) as f64, (i / 9) as f64]).collect();
        let signs: Vec<i8> = (0..n).map(|i| if i < nu { 1 } else { -1 }).collect();
        let solver = LdlSolver::new(mat.clone(), &coords, &[], Some(&signs), 1e-8).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos()).collect();
        let (x, iters, rel) = solver.solve(&b).unwrap();
        assert!(rel < 1e-11, "rel {rel} after {iters}");
        let dm = dense_of(&trips, n);
        let xd = dm.lu().solve(&DVector::from_vec(b.clone())).unwrap();
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-7 * (1.0 + xd[i].abs()));
        }
    }

    #[test]
    fn dense_constraint_row_ordered_last() {
        // A saddle system with one dense row, as produced by the zero-mean
        // pressure constraint.
        let n = 40;
        let mut trips = Vec::new();
        for i in 0..n - 1 {
            trips.push((i, i, 2.0));
            trips.push((i, n - 1, 1.0));
            trips.push((n - 1, i, 1.0));
        }
        let mat = SymMatrix::from_triplets(n, &trips);
        let coords: Vec<[f64; 2]> = (0..n).map(|i| [i as f64, 0.0]).collect();
        let perm = nested_dissection(&mat, &coords, &[n - 1]);
        assert_eq!(perm.len(), n);
        assert_eq!(*perm.last().unwrap(), n - 1);
        let mut seen = vec![false; n];
        for &p in &perm {
            assert!(!seen[p]);
            seen[p] = true;
        }
        let signs: Vec<i8> = (0..n).map(|i| if i < n - 1 { 1 } else { -1 }).collect();
        let solver = LdlSolver::new(mat, &coords, &[n - 1], Some(&signs), 1e-8).unwrap();
        let b: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let (_, _, rel) = solver.solve(&b).unwrap();
        assert!(rel < 1e-11);
    }

    #[test]
    fn singular_matrix_reported() {
        let trips = vec![(0, 0, 1.0), (1, 1, 0.0)];
        let mat = SymMatrix::from_triplets(2, &trips);
        let coords = vec![[0.0, 0.0], [1.0, 0.0]];
        match LdlSolver::new(mat, &coords, &[], None, 0.0) {
            Err(FactorError::SingularPivot(_)) => {}
            other => panic!("expected singular pivot, got {:?}", other.err()),
        }
    }
}
