//! Small dense linear algebra: LU with partial pivoting and Cholesky.
//!
//! Matrices are square, row-major `Vec<f64>`.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Dot product with eight interleaved partial sums. The summation order is
/// fixed, so results are reproducible, and the loop vectorizes.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// LU factorization `P A = L U` of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    min_pivot: f64,
    max_pivot: f64,
}

impl Lu {
    /// Factors `a` (row-major, `n*n`). Fails if a pivot falls below
    /// `n * eps * max|a_ij|`.
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix must be n*n");
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let threshold = n as f64 * f64::EPSILON * scale;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot = 0.0f64;

        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold(
                    (k, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
            if !(pv > threshold) || scale == 0.0 {
                return Err(Error::Numerical(format!(
                    "singular matrix: pivot {pv:.3e} at column {k} of {n} (threshold {threshold:.3e})"
                )));
            }
            min_pivot = min_pivot.min(pv);
            max_pivot = max_pivot.max(pv);
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            let (head, tail) = a.split_at_mut((k + 1) * n);
            let row_k = &head[k * n..];
            for row in tail.chunks_exact_mut(n) {
                let f = row[k] / pivot;
                row[k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        row[j] -= f * row_k[j];
                    }
                }
            }
        }
        Ok(Self {
            n,
            lu: a,
            perm,
            min_pivot,
            max_pivot,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Ratio of the largest to the smallest pivot magnitude, a cheap
    /// conditioning indicator.
    pub fn pivot_ratio(&self) -> f64 {
        self.max_pivot / self.min_pivot
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s = dot(&self.lu[i * n..i * n + i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n..(i + 1) * n];
            let s = dot(&row[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }
}

/// Lower Cholesky factor `L` with `A = L L^T`, row-major, upper part zeroed.
///
/// Blocked right-looking factorization. Every entry receives its updates in
/// the same order however the row loops are scheduled, so the result does
/// not depend on the thread count.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    const NB: usize = 64;
    assert_eq!(a.len(), n * n, "matrix must be n*n");
    let mut l = a.to_vec();
    let mut panel = Vec::with_capacity(n * NB);
    for k0 in (0..n).step_by(NB) {
        let k1 = (k0 + NB).min(n);
        let nb = k1 - k0;
        let (head, tail) = l.split_at_mut(k1 * n);

        for j in k0..k1 {
            let (upper, lower) = head.split_at_mut((j + 1) * n);
            let row_j = &mut upper[j * n..];
            let d = row_j[j] - dot(&row_j[k0..j], &row_j[k0..j]);
            if !(d > 0.0) {
                return Err(Error::Numerical(format!(
                    "matrix not positive definite at row {j} (pivot {d:.3e})"
                )));
            }
            let d = d.sqrt();
            row_j[j] = d;
            let row_j = &row_j[..];
            for row_i in lower[..(k1 - j - 1) * n].chunks_exact_mut(n) {
                row_i[j] = (row_i[j] - dot(&row_i[k0..j], &row_j[k0..j])) / d;
            }
        }
        let diag = &head[k0 * n..];

        let solve_row = |row: &mut [f64]| {
            for j in k0..k1 {
                let row_j = &diag[(j - k0) * n..(j - k0 + 1) * n];
                row[j] = (row[j] - dot(&row[k0..j], &row_j[k0..j])) / row_j[j];
            }
        };
        if tail.len() / n > 64 {
            tail.par_chunks_mut(n).for_each(solve_row);
        } else {
            tail.chunks_mut(n).for_each(solve_row);
        }

        panel.clear();
        for row in tail.chunks(n) {
            panel.extend_from_slice(&row[k0..k1]);
        }
        let panel = &panel;
        let update = |(off, row): (usize, &mut [f64])| {
            let p_i = &panel[off * nb..(off + 1) * nb];
            for jj in 0..=off {
                let p_j = &panel[jj * nb..(jj + 1) * nb];
                row[k1 + jj] -= dot(p_i, p_j);
            }
        };
        if tail.len() / n > 64 {
            tail.par_chunks_mut(n).enumerate().for_each(update);
        } else {
            tail.chunks_mut(n).enumerate().for_each(update);
        }
    }
    for i in 0..n {
        l[i * n + i + 1..(i + 1) * n].fill(0.0);
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_with_pivoting() {
        // zero leading entry forces a row swap
        let a = vec![0.0, 2.0, 1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0];
        let x_true = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| a[i * 3 + j] * x_true[j]).sum())
            .collect();
        let x = Lu::factor(a, 3).unwrap().solve(&b);
        for (u, v) in x.iter().zip(x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn lu_rejects_singular() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        assert!(Lu::factor(a, 2).is_err());
        assert!(Lu::factor(vec![0.0; 4], 2).is_err());
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = vec![4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert!((v - a[i * 3 + j]).abs() < 1e-12);
            }
        }
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
    }

    #[test]
    fn blocked_cholesky_matches_definition() {
        // spans several blocks, with a ragged last one
        let n = 150;
        let pts: Vec<f64> = (0..n)
            .map(|i| (i as f64 * 0.37).sin() * 40.0 + i as f64)
            .collect();
        let a: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                (-(pts[i] - pts[j]).abs() / 30.0).exp() + if i == j { 0.1 } else { 0.0 }
            })
            .collect();
        let l = cholesky(&a, n).unwrap();
        for i in 0..n {
            for j in 0..n {
                if j > i {
                    assert_eq!(l[i * n + j], 0.0);
                }
                let v: f64 = (0..n).map(|k| l[i * n + k] * l[j * n + k]).sum();
                assert!((v - a[i * n + j]).abs() < 1e-12, "{i},{j}");
            }
        }
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..37).map(|i| i as f64 * 0.5 - 3.0).collect();
        let b: Vec<f64> = (0..37).map(|i| (i as f64).sqrt()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
        assert_eq!(dot(&[], &[]), 0.0);
    }
}
