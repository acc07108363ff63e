//! Fixed-capacity vectors and matrices sized by a runtime count, plus a dense solver.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::{MAX_DIM, MAX_VARS};

pub type VarVec<T> = [T; MAX_VARS];
pub type VarMat<T> = [[T; MAX_VARS]; MAX_VARS];
pub type DimVec<T> = [T; MAX_DIM];
pub type DimMat<T> = [[T; MAX_DIM]; MAX_DIM];

pub fn zero_vec<T: Real>() -> VarVec<T> {
    [T::zero(); MAX_VARS]
}

pub fn zero_mat<T: Real>() -> VarMat<T> {
    [[T::zero(); MAX_VARS]; MAX_VARS]
}

pub fn identity<T: Real>(n: usize) -> VarMat<T> {
    let mut m = zero_mat();
    for (i, row) in m.iter_mut().enumerate().take(n) {
        row[i] = T::one();
    }
    m
}

#[inline]
pub fn matvec<T: Real>(m: &VarMat<T>, v: &VarVec<T>, n: usize) -> VarVec<T> {
    let mut out = zero_vec();
    for i in 0..n {
        let mut s = T::zero();
        for j in 0..n {
            s += m[i][j] * v[j];
        }
        out[i] = s;
    }
    out
}

pub fn matmul<T: Real>(a: &VarMat<T>, b: &VarMat<T>, n: usize) -> VarMat<T> {
    let mut out = zero_mat();
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// Max-norm of `a - b` over the leading `n × n` block.
pub fn max_abs_diff<T: Real>(a: &VarMat<T>, b: &VarMat<T>, n: usize) -> T {
    let mut m = T::zero();
    for i in 0..n {
        for j in 0..n {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Determinant of the leading `d × d` block, `d <= 3`.
pub fn det<T: Real>(m: &DimMat<T>, d: usize) -> T {
    match d {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => unreachable!("dimension {d} not supported"),
    }
}

/// Inverse of the leading `d × d` block via the adjugate.
pub fn inverse<T: Real>(m: &DimMat<T>, d: usize) -> DimMat<T> {
    let det = det(m, d);
    let mut inv = [[T::zero(); MAX_DIM]; MAX_DIM];
    match d {
        1 => inv[0][0] = T::one() / det,
        2 => {
            inv[0][0] = m[1][1] / det;
            inv[0][1] = -m[0][1] / det;
            inv[1][0] = -m[1][0] / det;
            inv[1][1] = m[0][0] / det;
        }
        3 => {
            for i in 0..3 {
                for j in 0..3 {
                    let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                    let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                    inv[i][j] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
                }
            }
        }
        _ => unreachable!("dimension {d} not supported"),
    }
    inv
}

/// Solves the dense system `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite entries"))
            .expect("non-empty range");
        if a[piv][col] == T::zero() {
            return Err(Error::Assembly("singular dense system".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != T::zero() {
                for k in col..n {
                    let v = a[col][k];
                    a[row][k] -= f * v;
                }
                let bc = b[col];
                b[row] -= f * bc;
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Ok(x)
}
