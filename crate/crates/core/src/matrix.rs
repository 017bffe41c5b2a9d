//! Dense matrices over `ℚ(i)`.

use crate::error::{Error, Result};
use crate::scalars::GaussianRational;

pub type Matrix = Vec<Vec<GaussianRational>>;

pub fn identity(n: usize) -> Matrix {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { GaussianRational::one() } else { GaussianRational::zero() })
                .collect()
        })
        .collect()
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let m = b.first().map_or(0, Vec::len);
    let k = b.len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut acc = GaussianRational::zero();
                    for l in 0..k {
                        if !a[i][l].is_zero() && !b[l][j].is_zero() {
                            acc += &(&a[i][l] * &b[l][j]);
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn is_symmetric(a: &Matrix) -> bool {
    (0..a.len()).all(|i| (0..i).all(|j| a[i][j] == a[j][i]))
}

/// Determinant by Bareiss fraction-free elimination.
pub fn determinant(a: &Matrix) -> GaussianRational {
    let n = a.len();
    if n == 0 {
        return GaussianRational::one();
    }
    let mut m = a.clone();
    let mut sign_flip = false;
    let mut prev = GaussianRational::one();
    for k in 0..n - 1 {
        if m[k][k].is_zero() {
            match (k + 1..n).find(|&r| !m[r][k].is_zero()) {
                Some(r) => {
                    m.swap(k, r);
                    sign_flip = !sign_flip;
                }
                None => return GaussianRational::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let num = &(&m[i][j] * &m[k][k]) - &(&m[i][k] * &m[k][j]);
                // exact division guaranteed by Sylvester's identity
                m[i][j] = num.checked_div(&prev).expect("Bareiss pivot is nonzero");
            }
        }
        prev = m[k][k].clone();
    }
    let d = m[n - 1][n - 1].clone();
    if sign_flip {
        -d
    } else {
        d
    }
}

/// Exact inverse by Gauss–Jordan elimination.
pub fn inverse(a: &Matrix) -> Result<Matrix> {
    let n = a.len();
    let mut m = a.clone();
    let mut inv = identity(n);
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero()).ok_or(Error::Singular)?;
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let p = m[col][col].inv()?;
        for j in 0..n {
            m[col][j] = &m[col][j] * &p;
            inv[col][j] = &inv[col][j] * &p;
        }
        for r in 0..n {
            if r == col || m[r][col].is_zero() {
                continue;
            }
            let factor = m[r][col].clone();
            for j in 0..n {
                let t = &factor * &m[col][j];
                m[r][j] -= &t;
                let t = &factor * &inv[col][j];
                inv[r][j] -= &t;
            }
        }
    }
    Ok(inv)
}
