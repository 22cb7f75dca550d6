//! Small dense matrix kernels.
//!
//! Everything here targets the desk-scale shapes this crate works with
//! (at most a few dozen rows), so the implementations favour determinism
//! and accuracy over asymptotics: one-sided Jacobi for singular values,
//! Householder QR for least squares, partially pivoted LU for square
//! solves. All routines are pure functions of their inputs.
#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument(
                "matrix needs at least one row".into(),
            ));
        }
        let cols = rows[0].len();
        if cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged or empty matrix rows".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend_from_slice(r);
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// New matrix keeping only the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Mat<S> {
        let mut out = Mat::zeros(idx.len(), self.cols);
        for (i, &r) in idx.iter().enumerate() {
            for c in 0..self.cols {
                out.set(i, c, self.get(r, c));
            }
        }
        out
    }

    pub fn matvec(&self, x: &[S]) -> Vec<S> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let mut acc = S::zero();
                for c in 0..self.cols {
                    acc += self.get(r, c) * x[c];
                }
                acc
            })
            .collect()
    }

    pub fn transpose(&self) -> Mat<S> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }
}

/// Singular values in descending order, via one-sided Jacobi.
///
/// Accurate to near machine precision for the tiny matrices used here,
/// including tiny singular values.
pub fn singular_values<S: Scalar>(m: &Mat<S>) -> Vec<S> {
    let work = if m.nrows() >= m.ncols() {
        m.clone()
    } else {
        m.transpose()
    };
    let rows = work.nrows();
    let cols = work.ncols();
    // Column vectors that the sweeps orthogonalize in place.
    let mut col: Vec<Vec<S>> = (0..cols)
        .map(|c| (0..rows).map(|r| work.get(r, c)).collect())
        .collect();

    let tol = S::epsilon() * S::from_f64_lossy(8.0);
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..cols.saturating_sub(1) {
            for q in p + 1..cols {
                let mut app = S::zero();
                let mut aqq = S::zero();
                let mut apq = S::zero();
                for r in 0..rows {
                    app += col[p][r] * col[p][r];
                    aqq += col[q][r] * col[q][r];
                    apq += col[p][r] * col[q][r];
                }
                if apq.abs() <= tol * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (S::from_f64_lossy(2.0) * apq);
                let t = if tau >= S::zero() {
                    S::one() / (tau + (S::one() + tau * tau).sqrt())
                } else {
                    -S::one() / (-tau + (S::one() + tau * tau).sqrt())
                };
                let c = S::one() / (S::one() + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let vp = col[p][r];
                    let vq = col[q][r];
                    col[p][r] = c * vp - s * vq;
                    col[q][r] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<S> = col
        .iter()
        .map(|v| v.iter().map(|&x| x * x).sum::<S>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Largest singular value (operator 2-norm).
pub fn spectral_norm<S: Scalar>(m: &Mat<S>) -> S {
    singular_values(m)[0]
}

/// Smallest singular value.
pub fn min_singular_value<S: Scalar>(m: &Mat<S>) -> S {
    *singular_values(m).last().unwrap()
}

/// Least-squares solution of an overdetermined system via Householder QR.
///
/// Expects `a` to have full column rank; a structurally zero column yields
/// a zero entry in the solution rather than a failure.
pub fn solve_least_squares<S: Scalar>(a: &Mat<S>, b: &[S]) -> Vec<S> {
    let m = a.nrows();
    let n = a.ncols();
    debug_assert!(m >= n);
    debug_assert_eq!(b.len(), m);
    let mut r = a.clone();
    let mut qtb = b.to_vec();

    for k in 0..n {
        let mut norm = S::zero();
        for i in k..m {
            norm += r.get(i, k) * r.get(i, k);
        }
        let norm = norm.sqrt();
        if norm == S::zero() {
            continue;
        }
        let alpha = if r.get(k, k) >= S::zero() {
            -norm
        } else {
            norm
        };
        let mut v: Vec<S> = (k..m).map(|i| r.get(i, k)).collect();
        v[0] -= alpha;
        let vtv: S = v.iter().map(|&x| x * x).sum();
        if vtv == S::zero() {
            continue;
        }
        let two = S::from_f64_lossy(2.0);
        for c in k..n {
            let mut dot = S::zero();
            for i in k..m {
                dot += v[i - k] * r.get(i, c);
            }
            let f = two * dot / vtv;
            for i in k..m {
                let val = r.get(i, c) - f * v[i - k];
                r.set(i, c, val);
            }
        }
        let mut dot = S::zero();
        for i in k..m {
            dot += v[i - k] * qtb[i];
        }
        let f = two * dot / vtv;
        for i in k..m {
            qtb[i] -= f * v[i - k];
        }
    }

    let mut x = vec![S::zero(); n];
    for i in (0..n).rev() {
        let mut acc = qtb[i];
        for j in i + 1..n {
            acc -= r.get(i, j) * x[j];
        }
        let diag = r.get(i, i);
        x[i] = if diag == S::zero() {
            S::zero()
        } else {
            acc / diag
        };
    }
    x
}

/// Solve a square system by LU with partial pivoting. `None` if a pivot
/// vanishes exactly.
pub fn solve_square<S: Scalar>(a: &Mat<S>, b: &[S]) -> Option<Vec<S>> {
    let n = a.nrows();
    debug_assert_eq!(a.ncols(), n);
    debug_assert_eq!(b.len(), n);
    let mut lu = a.clone();
    let mut x = b.to_vec();

    for k in 0..n {
        let mut piv = k;
        let mut best = lu.get(k, k).abs();
        for i in k + 1..n {
            if lu.get(i, k).abs() > best {
                best = lu.get(i, k).abs();
                piv = i;
            }
        }
        if best == S::zero() {
            return None;
        }
        if piv != k {
            for c in 0..n {
                let tmp = lu.get(k, c);
                lu.set(k, c, lu.get(piv, c));
                lu.set(piv, c, tmp);
            }
            x.swap(k, piv);
        }
        for i in k + 1..n {
            let f = lu.get(i, k) / lu.get(k, k);
            lu.set(i, k, f);
            for c in k + 1..n {
                let val = lu.get(i, c) - f * lu.get(k, c);
                lu.set(i, c, val);
            }
            x[i] = x[i] - f * x[k];
        }
    }
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in i + 1..n {
            acc -= lu.get(i, j) * x[j];
        }
        x[i] = acc / lu.get(i, i);
    }
    Some(x)
}

/// Visit every k-element subset of `0..n` in lexicographic order.
pub fn for_each_combination<F: FnMut(&[usize])>(n: usize, k: usize, mut f: F) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // advance to the next combination
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Mat<f64> {
        Mat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn singular_values_of_diagonal() {
        let m = mat(&[&[3.0, 0.0], &[0.0, -2.0], &[0.0, 0.0]]);
        let sv = singular_values(&m);
        assert!((sv[0] - 3.0).abs() < 1e-14);
        assert!((sv[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_values_match_characteristic_polynomial_2x2() {
        // sigma^2 are eigenvalues of A^T A, solved by the quadratic formula.
        let m = mat(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let (a, b, c, d) = (1.0f64, 2.0, 3.0, 4.0);
        let g11 = a * a + c * c;
        let g12 = a * b + c * d;
        let g22 = b * b + d * d;
        let tr = g11 + g22;
        let det = g11 * g22 - g12 * g12;
        let disc = (tr * tr / 4.0 - det).sqrt();
        let l1 = (tr / 2.0 + disc).sqrt();
        let l2 = (tr / 2.0 - disc).sqrt();
        let sv = singular_values(&m);
        assert!((sv[0] - l1).abs() < 1e-12);
        assert!((sv[1] - l2).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_matrix_has_zero_singular_value() {
        let m = mat(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]);
        let sv = singular_values(&m);
        assert!(sv[1].abs() < 1e-14 * sv[0]);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let a = mat(&[&[1.0, 0.5], &[0.3, 2.0], &[-1.0, 0.7], &[0.2, -0.4]]);
        let b = [1.0, -2.0, 0.5, 3.0];
        let x = solve_least_squares(&a, &b);
        // normal equations A^T A x = A^T b solved independently
        let at = a.transpose();
        let mut g = Mat::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += at.get(i, k) * at.get(j, k);
                }
                g.set(i, j, acc);
            }
        }
        let atb: Vec<f64> = (0..2)
            .map(|i| (0..4).map(|k| at.get(i, k) * b[k]).sum())
            .collect();
        let y = solve_square(&g, &atb).unwrap();
        assert!((x[0] - y[0]).abs() < 1e-12);
        assert!((x[1] - y[1]).abs() < 1e-12);
    }

    #[test]
    fn square_solve_roundtrip() {
        let a = mat(&[&[2.0, 1.0, 0.0], &[1.0, 3.0, 1.0], &[0.0, 1.0, 4.0]]);
        let x_true = [1.0, -2.0, 0.5];
        let b = a.matvec(&x_true);
        let x = solve_square(&a, &b).unwrap();
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_square_solve_is_none() {
        let a = mat(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(solve_square(&a, &[1.0, 1.0]).is_none());
    }

    #[test]
    fn combinations_enumerate_all_subsets() {
        let mut seen = Vec::new();
        for_each_combination(5, 3, |c| seen.push(c.to_vec()));
        assert_eq!(seen.len(), 10);
        assert_eq!(seen[0], vec![0, 1, 2]);
        assert_eq!(seen[9], vec![2, 3, 4]);
        let mut sorted = seen.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), 10);
    }

    #[test]
    fn combinations_edge_cases() {
        let mut count = 0;
        for_each_combination(4, 4, |_| count += 1);
        assert_eq!(count, 1);
        let mut count = 0;
        for_each_combination(3, 0, |c| {
            assert!(c.is_empty());
            count += 1;
        });
        assert_eq!(count, 1);
        let mut count = 0;
        for_each_combination(2, 3, |_| count += 1);
        assert_eq!(count, 0);
    }
}
