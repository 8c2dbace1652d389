//! Dense linear-algebra helpers shared by the rest of the crate.
//!
//! Matrices and vectors are `nalgebra` dynamic types; the helpers here add
//! the three induced norms, a cyclic Jacobi eigensolver for symmetric
//! matrices and a scaling-and-squaring matrix exponential.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// The vector norm in use, together with its induced matrix norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Inf,
    One,
    Two,
}

impl NormKind {
    pub const ALL: [NormKind; 3] = [NormKind::Inf, NormKind::One, NormKind::Two];

    pub fn vector_norm(self, v: &Vector) -> f64 {
        match self {
            NormKind::Inf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            NormKind::One => v.iter().map(|x| x.abs()).sum(),
            NormKind::Two => v.norm(),
        }
    }

    /// Induced operator norm.
    pub fn matrix_norm(self, a: &Matrix) -> f64 {
        match self {
            NormKind::Inf => (0..a.nrows())
                .map(|i| a.row(i).iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0, f64::max),
            NormKind::One => (0..a.ncols())
                .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0, f64::max),
            NormKind::Two => {
                if a.is_empty() {
                    return 0.0;
                }
                let ata = a.transpose() * a;
                symmetric_eigenvalues(&ata)
                    .into_iter()
                    .fold(0.0, f64::max)
                    .max(0.0)
                    .sqrt()
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::Inf => "inf",
            NormKind::One => "one",
            NormKind::Two => "two",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "max" => Ok(NormKind::Inf),
            "one" | "1" | "l1" => Ok(NormKind::One),
            "two" | "2" | "l2" | "euclidean" => Ok(NormKind::Two),
            other => Err(Error::Argument(format!("unknown norm `{other}`"))),
        }
    }
}

pub(crate) fn ensure_square(a: &Matrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument("matrix has non-finite entries".into()));
    }
    Ok(a.nrows())
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
///
/// Only the lower triangle is trusted; the input is symmetrized first.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.nrows();
    let mut m = (a + a.transpose()) * 0.5;
    let scale = m.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    if scale == 0.0 {
        return vec![0.0; n];
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off.sqrt() <= 1e-17 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[(i, i)]).collect()
}

/// Largest eigenvalue of a symmetric matrix.
pub fn largest_symmetric_eigenvalue(a: &Matrix) -> f64 {
    symmetric_eigenvalues(a).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn expm(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let norm = NormKind::One.matrix_norm(a);
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let scaled = a / 2f64.powi(squarings as i32);
    let mut result = Matrix::identity(n, n);
    let mut term = Matrix::identity(n, n);
    for k in 1..=20 {
        term = &term * &scaled / k as f64;
        result += &term;
        if NormKind::One.matrix_norm(&term) < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Row-major construction from nested rows.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(Matrix::from_row_iterator(
        nrows,
        ncols,
        rows.iter().flat_map(|r| r.iter().copied()),
    ))
}

pub fn matrix_to_rows(a: &Matrix) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn jacobi_matches_nalgebra() {
        let a = Matrix::from_row_slice(3, 3, &[2.0, -1.0, 0.5, -1.0, 3.0, 0.25, 0.5, 0.25, -4.0]);
        let mut ours = symmetric_eigenvalues(&a);
        let mut reference: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        ours.sort_by(f64::total_cmp);
        reference.sort_by(f64::total_cmp);
        for (x, y) in ours.iter().zip(&reference) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn expm_of_diagonal_and_rotation() {
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, 2.0]));
        let e = expm(&(d * 3.0));
        assert_relative_eq!(e[(0, 0)], (-3.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(e[(1, 1)], 6.0f64.exp(), max_relative = 1e-13);
        let r = Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let e = expm(&r);
        assert_relative_eq!(e[(0, 0)], 1.0f64.cos(), epsilon = 1e-15);
        assert_relative_eq!(e[(1, 0)], 1.0f64.sin(), epsilon = 1e-15);
    }

    #[test]
    fn two_norm_of_rank_one() {
        let a = Matrix::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 0.0]);
        assert_relative_eq!(NormKind::Two.matrix_norm(&a), 5.0, epsilon = 1e-14);
        assert_eq!(NormKind::Inf.matrix_norm(&a), 7.0);
        assert_eq!(NormKind::One.matrix_norm(&a), 4.0);
    }

    #[test]
    fn non_square_rejected() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(ensure_square(&a), Err(Error::Dimension(_))));
    }
}
