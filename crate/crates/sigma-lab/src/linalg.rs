//! Sparse matrices and Krylov solvers for the finite element systems.
//!
//! The assembled stiffness matrices are small enough (tens of thousands of
//! unknowns) that preconditioned Krylov iterations reach the 1e-10 relative
//! residual contract quickly: conjugate gradients for symmetric coefficient
//! fields, BiCGSTAB for nonsymmetric ones, both with an ILU(0) preconditioner.
//! Everything here is single-threaded and bitwise deterministic.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("linear solve failed: residual {achieved:.3e} after {iterations} iterations (target {target:.3e})")]
    SolveFailure {
        achieved: f64,
        target: f64,
        iterations: usize,
    },
    #[error("singular system: zero or non-finite pivot at row {row}")]
    SingularSystem { row: usize },
}

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    /// Builds a CSR matrix from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_counts = vec![0usize; n];
        let mut col = Vec::with_capacity(triplets.len());
        let mut val = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(c);
                val.push(v);
                row_counts[r] += 1;
                last = Some((r, c));
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + row_counts[i];
        }
        Csr {
            n,
            row_ptr,
            col,
            val,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.val[k] * x[self.col[k]];
            }
            y[r] = acc;
        }
    }

    pub fn residual_norm(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.n];
        self.matvec(x, &mut ax);
        let mut s = 0.0;
        for i in 0..self.n {
            let d = b[i] - ax[i];
            s += d * d;
        }
        s.sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// ILU(0): incomplete LU factorization on the sparsity pattern of `a`.
///
/// `l` has unit diagonal (not stored); `u` holds the diagonal. Both share the
/// column layout of `a` restricted to their triangle.
pub struct Ilu0 {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &Csr) -> Result<Self, LinalgError> {
        let n = a.n;
        let row_ptr = a.row_ptr.clone();
        let col = a.col.clone();
        let mut val = a.val.clone();
        let mut diag = vec![usize::MAX; n];
        for r in 0..n {
            for k in row_ptr[r]..row_ptr[r + 1] {
                if col[k] == r {
                    diag[r] = k;
                }
            }
            if diag[r] == usize::MAX {
                return Err(LinalgError::SingularSystem { row: r });
            }
        }
        // IKJ variant restricted to the pattern.
        let mut colmap = vec![usize::MAX; n];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                colmap[col[k]] = k;
            }
            for kk in row_ptr[i]..diag[i] {
                let k = col[kk]; // k < i
                let pivot = val[diag[k]];
                if pivot == 0.0 || !pivot.is_finite() {
                    return Err(LinalgError::SingularSystem { row: k });
                }
                let factor = val[kk] / pivot;
                val[kk] = factor;
                for jj in (diag[k] + 1)..row_ptr[k + 1] {
                    let j = col[jj];
                    let pos = colmap[j];
                    if pos != usize::MAX {
                        val[pos] -= factor * val[jj];
                    }
                }
            }
            if val[diag[i]] == 0.0 || !val[diag[i]].is_finite() {
                return Err(LinalgError::SingularSystem { row: i });
            }
            for k in row_ptr[i]..row_ptr[i + 1] {
                colmap[col[k]] = usize::MAX;
            }
        }
        Ok(Ilu0 {
            n,
            row_ptr,
            col,
            val,
            diag,
        })
    }

    /// z = (LU)^{-1} r
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        // forward: L y = r, unit diagonal
        for i in 0..self.n {
            let mut acc = r[i];
            for k in self.row_ptr[i]..self.diag[i] {
                acc -= self.val[k] * z[self.col[k]];
            }
            z[i] = acc;
        }
        // backward: U z = y
        for i in (0..self.n).rev() {
            let mut acc = z[i];
            for k in (self.diag[i] + 1)..self.row_ptr[i + 1] {
                acc -= self.val[k] * z[self.col[k]];
            }
            z[i] = acc / self.val[self.diag[i]];
        }
    }
}

pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for symmetric positive definite systems.
pub fn solve_cg(
    a: &Csr,
    b: &[f64],
    x: &mut [f64],
    precond: &Ilu0,
    tol_rel: f64,
    max_iter: usize,
) -> Result<SolveStats, LinalgError> {
    let n = a.n;
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        if norm(&r) <= tol_rel * bnorm {
            let achieved = a.residual_norm(x, b) / bnorm;
            if achieved <= tol_rel * 10.0 {
                return Ok(SolveStats {
                    iterations: it,
                    relative_residual: achieved,
                });
            }
        }
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(LinalgError::SingularSystem { row: it.min(n - 1) });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let achieved = a.residual_norm(x, b) / bnorm;
    if achieved <= tol_rel {
        Ok(SolveStats {
            iterations: max_iter,
            relative_residual: achieved,
        })
    } else {
        Err(LinalgError::SolveFailure {
            achieved,
            target: tol_rel,
            iterations: max_iter,
        })
    }
}

/// Preconditioned BiCGSTAB for nonsymmetric systems.
pub fn solve_bicgstab(
    a: &Csr,
    b: &[f64],
    x: &mut [f64],
    precond: &Ilu0,
    tol_rel: f64,
    max_iter: usize,
) -> Result<SolveStats, LinalgError> {
    let n = a.n;
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r0 = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 0..max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            break; // breakdown; report what we have
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond.apply(&p, &mut phat);
        a.matvec(&phat, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= tol_rel * bnorm {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            let achieved = a.residual_norm(x, b) / bnorm;
            return Ok(SolveStats {
                iterations: it + 1,
                relative_residual: achieved,
            });
        }
        precond.apply(&s, &mut shat);
        a.matvec(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            break;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm(&r) <= tol_rel * bnorm {
            let achieved = a.residual_norm(x, b) / bnorm;
            if achieved <= tol_rel * 10.0 {
                return Ok(SolveStats {
                    iterations: it + 1,
                    relative_residual: achieved,
                });
            }
        }
        if omega.abs() < 1e-300 {
            break;
        }
    }
    let achieved = a.residual_norm(x, b) / bnorm;
    if achieved <= tol_rel {
        Ok(SolveStats {
            iterations: max_iter,
            relative_residual: achieved,
        })
    } else {
        Err(LinalgError::SolveFailure {
            achieved,
            target: tol_rel,
            iterations: max_iter,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> Csr {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        Csr::from_triplets(n, t)
    }

    #[test]
    fn csr_from_triplets_sums_duplicates() {
        let a = Csr::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 1, 4.0), (1, 0, -1.0)]);
        let mut y = vec![0.0; 2];
        a.matvec(&[1.0, 1.0], &mut y);
        assert_eq!(y, vec![3.0, 3.0]);
    }

    #[test]
    fn cg_solves_tridiagonal() {
        let n = 200;
        let a = laplace_1d(n);
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let p = Ilu0::new(&a).unwrap();
        let stats = solve_cg(&a, &b, &mut x, &p, 1e-12, 10_000).unwrap();
        assert!(stats.relative_residual <= 1e-10);
    }

    #[test]
    fn bicgstab_solves_nonsymmetric() {
        let n = 120;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0));
            if i > 0 {
                t.push((i, i - 1, -1.3));
            }
            if i + 1 < n {
                t.push((i, i + 1, -0.7));
            }
        }
        let a = Csr::from_triplets(n, t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut x = vec![0.0; n];
        let p = Ilu0::new(&a).unwrap();
        let stats = solve_bicgstab(&a, &b, &mut x, &p, 1e-12, 10_000).unwrap();
        assert!(stats.relative_residual <= 1e-10);
    }
}
