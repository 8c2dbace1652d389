//! Linear systems `x' = A(t) x`: transition matrices, exponential dichotomy
//! data with grid verification, and Coppel growth bounds.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ensure_square, expm, Matrix, NormKind, Vector};
use crate::lognorm::mu_unchecked;
use crate::numerics::adaptive_simpson;
use crate::ode::{Rk45, Stop};

pub type MatrixFn = Arc<dyn Fn(f64) -> Matrix + Send + Sync>;

/// Coefficient matrix `A(t)` of a linear system.
#[derive(Clone)]
pub enum LinearSystem {
    Constant(Matrix),
    /// Stored on a time grid, linearly interpolated and held constant outside it.
    Grid {
        times: Vec<f64>,
        matrices: Vec<Matrix>,
    },
    Analytic {
        dim: usize,
        family: MatrixFn,
    },
}

impl fmt::Debug for LinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinearSystem::Constant(a) => f.debug_tuple("Constant").field(a).finish(),
            LinearSystem::Grid { times, .. } => f.debug_struct("Grid").field("points", &times.len()).finish(),
            LinearSystem::Analytic { dim, .. } => f.debug_struct("Analytic").field("dim", dim).finish(),
        }
    }
}

impl LinearSystem {
    pub fn constant(a: Matrix) -> Result<Self> {
        ensure_square(&a)?;
        Ok(LinearSystem::Constant(a))
    }

    pub fn scalar(a: f64) -> Self {
        LinearSystem::Constant(Matrix::from_element(1, 1, a))
    }

    pub fn grid(times: Vec<f64>, matrices: Vec<Matrix>) -> Result<Self> {
        if times.is_empty() || times.len() != matrices.len() {
            return Err(Error::Data("grid system needs one matrix per time".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data("grid times must be strictly increasing".into()));
        }
        let n = ensure_square(&matrices[0])?;
        for m in &matrices {
            if ensure_square(m)? != n {
                return Err(Error::Dimension("grid matrices differ in size".into()));
            }
        }
        Ok(LinearSystem::Grid { times, matrices })
    }

    pub fn analytic<F>(dim: usize, family: F) -> Self
    where
        F: Fn(f64) -> Matrix + Send + Sync + 'static,
    {
        LinearSystem::Analytic {
            dim,
            family: Arc::new(family),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LinearSystem::Constant(a) => a.nrows(),
            LinearSystem::Grid { matrices, .. } => matrices[0].nrows(),
            LinearSystem::Analytic { dim, .. } => *dim,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, LinearSystem::Constant(_))
    }

    pub fn at(&self, t: f64) -> Matrix {
        match self {
            LinearSystem::Constant(a) => a.clone(),
            LinearSystem::Analytic { family, .. } => family(t),
            LinearSystem::Grid { times, matrices } => {
                let idx = times.partition_point(|&ti| ti <= t);
                if idx == 0 {
                    return matrices[0].clone();
                }
                if idx >= times.len() {
                    return matrices[times.len() - 1].clone();
                }
                let w = (t - times[idx - 1]) / (times[idx] - times[idx - 1]);
                &matrices[idx - 1] * (1.0 - w) + &matrices[idx] * w
            }
        }
    }

    /// Grid breakpoints inside `(a, b)`, used to split quadrature at kinks.
    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut pts = vec![a];
        if let LinearSystem::Grid { times, .. } = self {
            pts.extend(times.iter().copied().filter(|&t| t > a && t < b));
        }
        pts.push(b);
        pts
    }
}

/// Transition matrix `T(t, s)`: maps the state at time `s` to the state at `t`.
///
/// Constant systems use the matrix exponential; otherwise the matrix ODE
/// `X' = A(u) X`, `X(s) = I` is integrated from `u = s` to `u = t`.
pub fn transition(sys: &LinearSystem, t: f64, s: f64, tol: f64) -> Result<Matrix> {
    if !(tol > 0.0) {
        return Err(Error::Argument("tolerance must be positive".into()));
    }
    let n = sys.dim();
    if t == s {
        return Ok(Matrix::identity(n, n));
    }
    if let LinearSystem::Constant(a) = sys {
        return Ok(expm(&(a * (t - s))));
    }
    let rhs = |u: f64, x: &Vector| {
        let a = sys.at(u);
        let xm = Matrix::from_column_slice(n, n, x.as_slice());
        let prod = a * xm;
        Vector::from_column_slice(prod.as_slice())
    };
    let mut x = Vector::from_column_slice(Matrix::identity(n, n).as_slice());
    let rk = Rk45::new(tol);
    let mut h = 0.0;
    // Integrate piecewise across grid breakpoints so the kinks of the
    // interpolated coefficient do not stall the step controller.
    let (lo, hi) = if s < t { (s, t) } else { (t, s) };
    let mut pts = sys.breakpoints(lo, hi);
    if s > t {
        pts.reverse();
    }
    for w in pts.windows(2) {
        match rk.advance(&rhs, w[0], w[1], &mut x, &mut h, |_, _| {})? {
            Stop::Reached => {}
            Stop::BlowUp { t } | Stop::Underflow { t, .. } => {
                return Err(Error::Stiffness { t, h });
            }
        }
    }
    Ok(Matrix::from_column_slice(n, n, x.as_slice()))
}

/// Degenerate or genuine dichotomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DichotomyKind {
    Dichotomy,
    Contraction,
    Expansion,
}

/// Projection family `P(t)`.
#[derive(Clone)]
pub enum Projection {
    Constant(Matrix),
    Analytic(MatrixFn),
}

impl fmt::Debug for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Projection::Constant(p) => f.debug_tuple("Constant").field(p).finish(),
            Projection::Analytic(_) => f.write_str("Analytic(..)"),
        }
    }
}

impl Projection {
    pub fn at(&self, t: f64) -> Matrix {
        match self {
            Projection::Constant(p) => p.clone(),
            Projection::Analytic(f) => f(t),
        }
    }
}

/// Exponential dichotomy constants: projections `P`, bound `N`, rate `lambda`.
#[derive(Debug, Clone)]
pub struct DichotomyData {
    pub projection: Projection,
    pub n: f64,
    pub lambda: f64,
    pub kind: DichotomyKind,
}

const IDEMPOTENCE_TOL: f64 = 1e-10;

impl DichotomyData {
    pub fn new(projection: Projection, n: f64, lambda: f64, kind: DichotomyKind) -> Result<Self> {
        if !(n > 0.0) || !(lambda > 0.0) {
            return Err(Error::Argument(format!(
                "dichotomy constants must be positive (N = {n}, lambda = {lambda})"
            )));
        }
        if let Projection::Constant(p) = &projection {
            let dim = ensure_square(p)?;
            check_projection(p, kind, dim)?;
        }
        Ok(Self {
            projection,
            n,
            lambda,
            kind,
        })
    }

    pub fn contraction(dim: usize, n: f64, lambda: f64) -> Result<Self> {
        Self::new(
            Projection::Constant(Matrix::identity(dim, dim)),
            n,
            lambda,
            DichotomyKind::Contraction,
        )
    }

    pub fn expansion(dim: usize, n: f64, lambda: f64) -> Result<Self> {
        Self::new(
            Projection::Constant(Matrix::zeros(dim, dim)),
            n,
            lambda,
            DichotomyKind::Expansion,
        )
    }

    pub fn projection_at(&self, t: f64) -> Matrix {
        self.projection.at(t)
    }
}

fn check_projection(p: &Matrix, kind: DichotomyKind, dim: usize) -> Result<()> {
    let idem = (p * p - p).abs().max();
    if idem > IDEMPOTENCE_TOL {
        return Err(Error::Argument(format!("P is not a projection (|P^2 - P| = {idem:e})")));
    }
    let id = Matrix::identity(dim, dim);
    match kind {
        DichotomyKind::Contraction if (p - &id).abs().max() > 0.0 => {
            Err(Error::Argument("a contraction requires P = I".into()))
        }
        DichotomyKind::Expansion if p.abs().max() > 0.0 => Err(Error::Argument("an expansion requires P = 0".into())),
        _ => Ok(()),
    }
}

/// Worst observed value of one dichotomy condition on the sampled grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub condition: String,
    pub passed: bool,
    /// `(t, s)` of the worst margin, if any pair was checked.
    pub worst_pair: Option<(f64, f64)>,
    /// Smallest `bound + tol - value`; negative means violated.
    pub margin: f64,
    pub pairs_checked: usize,
}

/// Grid verification of the dichotomy conditions. Only sampled pairs are
/// checked; a pass is evidence, not a proof.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub norm: NormKind,
    pub grid_points: usize,
    pub projection: ConditionCheck,
    pub commutation: ConditionCheck,
    pub forward_decay: ConditionCheck,
    pub backward_decay: ConditionCheck,
    pub passed: bool,
    pub note: String,
}

impl DichotomyReport {
    pub fn conditions(&self) -> [&ConditionCheck; 4] {
        [
            &self.projection,
            &self.commutation,
            &self.forward_decay,
            &self.backward_decay,
        ]
    }

    /// Flat `key = value` summary, one section per condition.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "passed = {}\nnorm = \"{}\"\ngrid_points = {}\nnote = \"{}\"\n",
            self.passed, self.norm, self.grid_points, self.note
        );
        for c in self.conditions() {
            out.push_str(&format!("\n[{}]\npassed = {}\n", c.condition, c.passed));
            if let Some((t, s)) = c.worst_pair {
                out.push_str(&format!("worst_t = {t:.16e}\nworst_s = {s:.16e}\n"));
            }
            out.push_str(&format!(
                "margin = {:.16e}\npairs_checked = {}\n",
                c.margin, c.pairs_checked
            ));
        }
        out
    }
}

struct Tracker {
    name: &'static str,
    margin: f64,
    worst: Option<(f64, f64)>,
    count: usize,
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            margin: f64::INFINITY,
            worst: None,
            count: 0,
        }
    }

    fn record(&mut self, t: f64, s: f64, margin: f64) {
        self.count += 1;
        if margin < self.margin {
            self.margin = margin;
            self.worst = Some((t, s));
        }
    }

    fn finish(self) -> ConditionCheck {
        ConditionCheck {
            condition: self.name.to_string(),
            passed: self.margin >= 0.0,
            worst_pair: self.worst,
            margin: self.margin,
            pairs_checked: self.count,
        }
    }
}

/// Checks invariance, forward decay and backward decay on all grid pairs.
pub fn verify_dichotomy(
    sys: &LinearSystem,
    d: &DichotomyData,
    grid: &[f64],
    k: NormKind,
    tol: f64,
) -> Result<DichotomyReport> {
    if grid.is_empty() {
        return Err(Error::Argument("verification grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("verification grid must be increasing".into()));
    }
    let n = sys.dim();
    let id = Matrix::identity(n, n);
    let projections: Vec<Matrix> = grid.iter().map(|&t| d.projection_at(t)).collect();
    if projections[0].nrows() != n {
        return Err(Error::Dimension("projection and system dimensions differ".into()));
    }
    let ode_tol = (tol * 1e-3).clamp(1e-13, 1e-8);

    let mut proj = Tracker::new("projection");
    let mut comm = Tracker::new("commutation");
    let mut fwd = Tracker::new("forward_decay");
    let mut bwd = Tracker::new("backward_decay");

    for (i, &t) in grid.iter().enumerate() {
        let p = &projections[i];
        let idem = k.matrix_norm(&(p * p - p));
        proj.record(t, t, IDEMPOTENCE_TOL - idem);
    }
    for (i, &t) in grid.iter().enumerate() {
        for (j, &s) in grid.iter().enumerate() {
            let tm = transition(sys, t, s, ode_tol)?;
            let lhs = &projections[i] * &tm;
            let rhs = &tm * &projections[j];
            comm.record(t, s, tol - k.matrix_norm(&(lhs - &rhs)));
            if t >= s {
                let bound = d.n * (-d.lambda * (t - s)).exp();
                fwd.record(t, s, bound + tol - k.matrix_norm(&rhs));
            }
            if t <= s && d.kind != DichotomyKind::Contraction {
                let bound = d.n * (-d.lambda * (s - t)).exp();
                let val = k.matrix_norm(&(&tm * (&id - &projections[j])));
                bwd.record(t, s, bound + tol - val);
            }
        }
    }
    let checks = [proj.finish(), comm.finish(), fwd.finish(), bwd.finish()];
    let [projection, commutation, forward_decay, mut backward_decay] = checks;
    if d.kind == DichotomyKind::Contraction {
        // I - P = 0: the backward condition holds vacuously.
        backward_decay.passed = true;
        backward_decay.margin = f64::INFINITY;
    }
    let passed = projection.passed && commutation.passed && forward_decay.passed && backward_decay.passed;
    Ok(DichotomyReport {
        norm: k,
        grid_points: grid.len(),
        projection,
        commutation,
        forward_decay,
        backward_decay,
        passed,
        note: "conditions checked on sampled grid pairs only".into(),
    })
}

/// `exp(int_s^t mu_k(A(u)) du)`, the Coppel bound on `|T(t, s)|_k` for `s <= t`.
pub fn coppel_bound(sys: &LinearSystem, s: f64, t: f64, k: NormKind) -> Result<f64> {
    if !(0.0 <= s && s <= t) {
        return Err(Error::Argument(format!("need 0 <= s <= t, got s = {s}, t = {t}")));
    }
    let n = sys.dim();
    if let LinearSystem::Constant(a) = sys {
        return Ok((mu_unchecked(a, n, k) * (t - s)).exp());
    }
    let mu = |u: f64| mu_unchecked(&sys.at(u), n, k);
    let pts = sys.breakpoints(s, t);
    let integral: f64 = pts.windows(2).map(|w| adaptive_simpson(&mu, w[0], w[1], 1e-13)).sum();
    Ok(integral.exp())
}

/// Dichotomy data of a constant hyperbolic matrix with real spectrum.
///
/// `P` projects onto the span of eigenvectors with negative eigenvalues along
/// the rest, `lambda` is the smallest eigenvalue modulus and `N` is the
/// condition number of the eigenvector matrix in the chosen norm.
pub fn spectral_dichotomy(a: &Matrix, k: NormKind) -> Result<DichotomyData> {
    let n = ensure_square(a)?;
    let eig = a
        .clone()
        .eigenvalues()
        .ok_or_else(|| Error::NotApplicable("spectrum is not real".into()))?;
    let scale = a.abs().max().max(1.0);
    if eig.iter().any(|l| l.abs() <= 1e-12 * scale) {
        return Err(Error::NotApplicable(
            "matrix is not hyperbolic (zero eigenvalue)".into(),
        ));
    }
    let mut vecs = Matrix::zeros(n, n);
    for (j, &l) in eig.iter().enumerate() {
        let shifted = a - Matrix::identity(n, n) * l;
        let svd = shifted.svd(false, true);
        let vt = svd
            .v_t
            .ok_or_else(|| Error::NotApplicable("eigenvector computation failed".into()))?;
        let (idx, _) =
            svd.singular_values.iter().enumerate().fold(
                (0, f64::INFINITY),
                |best, (i, &sv)| if sv < best.1 { (i, sv) } else { best },
            );
        vecs.set_column(j, &vt.row(idx).transpose());
    }
    let inv = vecs
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotApplicable("matrix is not diagonalizable".into()))?;
    let cond = k.matrix_norm(&vecs) * k.matrix_norm(&inv);
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::NotApplicable(format!(
            "eigenvector matrix too ill-conditioned ({cond:e})"
        )));
    }
    let lambda = eig.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
    let stable = eig.iter().filter(|l| **l < 0.0).count();
    let (projection, kind) = if stable == n {
        (Matrix::identity(n, n), DichotomyKind::Contraction)
    } else if stable == 0 {
        (Matrix::zeros(n, n), DichotomyKind::Expansion)
    } else {
        let mask = Matrix::from_diagonal(&Vector::from_iterator(
            n,
            eig.iter().map(|l| if *l < 0.0 { 1.0 } else { 0.0 }),
        ));
        (&vecs * mask * &inv, DichotomyKind::Dichotomy)
    };
    // Round-off in V^{-1} can leave P slightly off idempotent; re-project.
    let projection = if kind == DichotomyKind::Dichotomy {
        let p2 = &projection * &projection;
        (&p2 * 3.0 - &p2 * &projection * 2.0).map(|x| if x.abs() < 1e-15 { 0.0 } else { x })
    } else {
        projection
    };
    DichotomyData::new(Projection::Constant(projection), cond.max(1.0), lambda, kind)
}
