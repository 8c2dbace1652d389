//! Logarithmic norms (Lozinskiĭ measures) of square matrices.
//!
//! `mu(A) = lim_{h->0+} (|I + hA| - 1) / h` for the induced norm `|.|`.
//! Closed forms exist for the three norms supported here:
//!
//! ```text
//! mu_inf(A) = max_i ( a_ii + sum_{k != i} |a_ik| )
//! mu_1(A)   = max_k ( a_kk + sum_{i != k} |a_ik| )
//! mu_2(A)   = largest eigenvalue of (A + A^T) / 2
//! ```
//!
//! [`mu_limit`] evaluates the one-sided difference quotient directly and is
//! kept as an independent oracle for [`mu_closed`].

use crate::error::{Error, Result};
use crate::linalg::{ensure_square, largest_symmetric_eigenvalue, Matrix, NormKind};
use crate::numerics::{linspace, trapezoid_weights};

/// Default step for the difference quotient in [`mu_limit`].
pub const DEFAULT_LIMIT_STEP: f64 = 1e-6;

/// Closed-form logarithmic norm.
pub fn mu_closed(a: &Matrix, k: NormKind) -> Result<f64> {
    let n = ensure_square(a)?;
    Ok(mu_unchecked(a, n, k))
}

pub(crate) fn mu_unchecked(a: &Matrix, n: usize, k: NormKind) -> f64 {
    match k {
        NormKind::Inf => (0..n)
            .map(|i| a[(i, i)] + (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max),
        NormKind::One => (0..n)
            .map(|j| a[(j, j)] + (0..n).filter(|&i| i != j).map(|i| a[(i, j)].abs()).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max),
        NormKind::Two => largest_symmetric_eigenvalue(&((a + a.transpose()) * 0.5)),
    }
}

/// One-sided difference quotient `(|I + hA|_k - 1) / h`.
pub fn mu_limit(a: &Matrix, k: NormKind, h: f64) -> Result<f64> {
    let n = ensure_square(a)?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Argument(format!("step h must be positive, got {h}")));
    }
    let shifted = Matrix::identity(n, n) + a * h;
    Ok((k.matrix_norm(&shifted) - 1.0) / h)
}

/// A continuous matrix-valued path on `[0, 1]`, piecewise linear between samples.
#[derive(Debug, Clone)]
pub struct MatrixPath {
    samples: Vec<(f64, Matrix)>,
}

impl MatrixPath {
    pub fn new(samples: Vec<(f64, Matrix)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Argument("a path needs at least two samples".into()));
        }
        let n = ensure_square(&samples[0].1)?;
        for (_, m) in &samples {
            if ensure_square(m)? != n {
                return Err(Error::Dimension(format!("path mixes dimensions {n} and {}", m.nrows())));
            }
        }
        if samples[0].0 != 0.0 || samples[samples.len() - 1].0 != 1.0 {
            return Err(Error::Argument(
                "path samples must start at s = 0 and end at s = 1".into(),
            ));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Argument("path parameters must be strictly increasing".into()));
        }
        Ok(Self { samples })
    }

    /// Samples `f` at `count` equally spaced parameters.
    pub fn from_fn<F: Fn(f64) -> Matrix>(f: F, count: usize) -> Result<Self> {
        Self::new(
            linspace(0.0, 1.0, count.max(2))
                .into_iter()
                .map(|s| (s, f(s)))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.samples[0].1.nrows()
    }

    pub fn eval(&self, s: f64) -> Matrix {
        let s = s.clamp(0.0, 1.0);
        let idx = self.samples.partition_point(|(si, _)| *si <= s);
        if idx == 0 {
            return self.samples[0].1.clone();
        }
        if idx >= self.samples.len() {
            return self.samples[self.samples.len() - 1].1.clone();
        }
        let (s0, m0) = &self.samples[idx - 1];
        let (s1, m1) = &self.samples[idx];
        let w = (s - s0) / (s1 - s0);
        m0 * (1.0 - w) + m1 * w
    }
}

/// Both sides of `mu(int M) <= int mu(M)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl IntegralCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol
    }
}

/// Trapezoid evaluation of both sides of the integral inequality for log norms.
pub fn mu_integral_check(path: &MatrixPath, k: NormKind, quadrature_points: usize) -> Result<IntegralCheck> {
    if quadrature_points < 2 {
        return Err(Error::Argument("need at least two quadrature points".into()));
    }
    let n = path.dim();
    let nodes = linspace(0.0, 1.0, quadrature_points);
    let weights = trapezoid_weights(&nodes);
    let mut integral = Matrix::zeros(n, n);
    let mut rhs = 0.0;
    for (s, w) in nodes.iter().zip(&weights) {
        let m = path.eval(*s);
        rhs += w * mu_unchecked(&m, n, k);
        integral += m * *w;
    }
    Ok(IntegralCheck {
        lhs: mu_unchecked(&integral, n, k),
        rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vector;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn square(n: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-3.0f64..3.0, n * n).prop_map(move |v| Matrix::from_row_slice(n, n, &v))
    }

    fn any_square() -> impl Strategy<Value = Matrix> {
        (1usize..=5).prop_flat_map(square)
    }

    fn norm_kind() -> impl Strategy<Value = NormKind> {
        prop_oneof![Just(NormKind::Inf), Just(NormKind::One), Just(NormKind::Two)]
    }

    #[test]
    fn zero_matrix_has_zero_measure() {
        for k in NormKind::ALL {
            for n in 1..4 {
                assert_eq!(mu_closed(&Matrix::zeros(n, n), k).unwrap(), 0.0);
                assert_eq!(mu_limit(&Matrix::zeros(n, n), k, 1e-6).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn scalar_measure_is_the_entry() {
        let a = Matrix::from_element(1, 1, -3.0);
        for k in NormKind::ALL {
            assert_relative_eq!(mu_closed(&a, k).unwrap(), -3.0, epsilon = 1e-15);
            assert!((mu_limit(&a, k, 1e-6).unwrap() + 3.0).abs() <= 1e-5);
        }
    }

    #[test]
    fn si_jacobian_inf_measure() {
        // Jacobian of the SI field at S = 0.5, I = 0.3.
        let a = Matrix::from_row_slice(2, 2, &[-1.3, -0.5, 0.3, -0.5]);
        assert_relative_eq!(mu_closed(&a, NormKind::Inf).unwrap(), -0.2, epsilon = 1e-15);
        let lim = mu_limit(&a, NormKind::Inf, 1e-6).unwrap();
        assert!((lim + 0.2).abs() < 1e-5);
    }

    #[test]
    fn diagonal_two_measure() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, -2.0]));
        assert_relative_eq!(mu_closed(&a, NormKind::Two).unwrap(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            mu_closed(&Matrix::zeros(2, 3), NormKind::Inf),
            Err(Error::Dimension(_))
        ));
        let a = Matrix::identity(2, 2);
        assert!(matches!(mu_limit(&a, NormKind::One, 0.0), Err(Error::Argument(_))));
        assert!(matches!(mu_limit(&a, NormKind::One, -1.0), Err(Error::Argument(_))));
    }

    #[test]
    fn integral_check_constant_path() {
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.5, -3.0]);
        let path = MatrixPath::new(vec![(0.0, a.clone()), (1.0, a.clone())]).unwrap();
        for k in NormKind::ALL {
            let c = mu_integral_check(&path, k, 11).unwrap();
            let mu = mu_closed(&a, k).unwrap();
            assert_relative_eq!(c.lhs, mu, epsilon = 1e-14);
            assert_relative_eq!(c.rhs, mu, epsilon = 1e-14);
        }
    }

    #[test]
    fn integral_check_diag_ramp() {
        // M(s) = diag(-1, s): int max(-1, s) ds = 1/2 and mu(diag(-1, 1/2)) = 1/2.
        let path = MatrixPath::new(vec![
            (0.0, Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, 0.0]))),
            (1.0, Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, 1.0]))),
        ])
        .unwrap();
        let c = mu_integral_check(&path, NormKind::Inf, 101).unwrap();
        assert_relative_eq!(c.lhs, 0.5, epsilon = 1e-14);
        assert_relative_eq!(c.rhs, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn integral_check_rotating_family() {
        let path = MatrixPath::from_fn(
            |s| {
                let th = std::f64::consts::PI * s;
                let (c, sn) = (th.cos(), th.sin());
                let r = Matrix::from_row_slice(2, 2, &[c, -sn, sn, c]);
                let d = Matrix::from_row_slice(2, 2, &[1.0, 3.0, 0.0, -2.0]);
                &r * d * r.transpose()
            },
            1000,
        )
        .unwrap();
        let c = mu_integral_check(&path, NormKind::Two, 1000).unwrap();
        assert!(c.lhs <= c.rhs, "{c:?}");
        assert!(
            c.lhs < c.rhs - 1e-3,
            "expected a strict gap for non-commuting family: {c:?}"
        );
    }

    #[test]
    fn path_validation() {
        let a = Matrix::zeros(2, 2);
        let b = Matrix::zeros(3, 3);
        assert!(matches!(
            MatrixPath::new(vec![(0.0, a.clone()), (1.0, b)]),
            Err(Error::Dimension(_))
        ));
        assert!(MatrixPath::new(vec![(0.0, a.clone()), (0.5, a.clone())]).is_err());
        assert!(MatrixPath::new(vec![(0.0, a.clone()), (0.0, a.clone()), (1.0, a)]).is_err());
    }

    proptest! {
        #[test]
        fn homogeneity(a in any_square(), alpha in 0.0f64..10.0, k in norm_kind()) {
            let lhs = mu_closed(&(&a * alpha), k).unwrap();
            let rhs = alpha * mu_closed(&a, k).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn dominated_by_norm(a in any_square(), k in norm_kind()) {
            prop_assert!(mu_closed(&a, k).unwrap().abs() <= k.matrix_norm(&a) + 1e-12);
        }

        #[test]
        fn subadditive((a, b) in (1usize..=5).prop_flat_map(|n| (square(n), square(n))), k in norm_kind()) {
            let sum = mu_closed(&(&a + &b), k).unwrap();
            prop_assert!(sum <= mu_closed(&a, k).unwrap() + mu_closed(&b, k).unwrap() + 1e-12);
        }

        #[test]
        fn lipschitz((a, b) in (1usize..=5).prop_flat_map(|n| (square(n), square(n))), k in norm_kind()) {
            let d = (mu_closed(&a, k).unwrap() - mu_closed(&b, k).unwrap()).abs();
            prop_assert!(d <= k.matrix_norm(&(&a - &b)) + 1e-12);
        }

        #[test]
        fn limit_oracle_agrees(a in any_square(), k in norm_kind()) {
            let closed = mu_closed(&a, k).unwrap();
            let lim = mu_limit(&a, k, DEFAULT_LIMIT_STEP).unwrap();
            prop_assert!((closed - lim).abs() <= 1e-4, "closed {} limit {}", closed, lim);
        }
    }
}
