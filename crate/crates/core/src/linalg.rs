//! Sparse symmetric matrices and the preconditioned CG solver used for
//! mass-matrix systems.

use crate::error::{Error, Result};

/// Compressed sparse row matrix. Only the patterns produced by mass
/// assembly are needed: square, symmetric, positive definite.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut row_counts = vec![0usize; n];
        let mut col_idx: Vec<usize> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &triplets {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_counts[r] += 1;
                last = Some((r, c));
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for r in 0..n {
            row_ptr[r + 1] = row_ptr[r] + row_counts[r];
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    d[r] += self.values[k];
                }
            }
        }
        d
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        let mut acc = 0.0;
        for k in self.row_ptr[r]..self.row_ptr[r + 1] {
            if self.col_idx[k] == c {
                acc += self.values[k];
            }
        }
        acc
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.values[self.row_ptr[r]..self.row_ptr[r + 1]]
            .iter()
            .sum()
    }
}

/// Jacobi-preconditioned conjugate gradients.
///
/// Mass matrices are uniformly well conditioned, so this converges in a
/// few dozen iterations regardless of mesh size.
pub fn pcg(mat: &CsrMatrix, rhs: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = mat.n();
    debug_assert_eq!(rhs.len(), n);
    let rhs_norm = norm(rhs);
    if rhs_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let diag = mat.diagonal();
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(Error::SingularSystem("non-positive diagonal"));
    }

    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz: f64 = dot(&r, &z);
    let mut ap = vec![0.0; n];

    let mut res = 1.0;
    for _ in 0..max_iter {
        mat.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SingularSystem("matrix not positive definite"));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm(&r) / rhs_norm;
        if res <= rel_tol {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDidNotConverge { residual: res })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(
            2,
            vec![(0, 0, 1.0), (0, 0, 2.0), (1, 1, 4.0), (0, 1, 0.5), (1, 0, 0.5)],
        );
        assert_eq!(m.entry(0, 0), 3.0);
        assert_eq!(m.entry(0, 1), 0.5);
        assert_eq!(m.entry(1, 1), 4.0);
    }

    #[test]
    fn pcg_solves_spd_system() {
        // 1D linear-element mass matrix on 4 periodic cells
        let h = 0.25;
        let mut t = Vec::new();
        for i in 0..4usize {
            let j = (i + 1) % 4;
            t.push((i, i, 2.0 * h / 3.0));
            t.push((i, j, h / 6.0));
            t.push((j, i, h / 6.0));
        }
        let m = CsrMatrix::from_triplets(4, t);
        let rhs = vec![1.0, -2.0, 0.5, 3.0];
        let x = pcg(&m, &rhs, 1e-14, 200).unwrap();
        let mut back = vec![0.0; 4];
        m.matvec(&x, &mut back);
        for i in 0..4 {
            assert!((back[i] - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn pcg_zero_rhs_returns_zero() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 1, 1.0)]);
        let x = pcg(&m, &[0.0, 0.0], 1e-14, 10).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
    }
}
