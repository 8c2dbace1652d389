//! Construction of true solutions near pseudosolutions.
//!
//! The dichotomy routes iterate the fixed-point operator
//! `z -> int T(t,s) P(s) w(s) ds - int T(t,s) (I - P(s)) w(s) ds` on the
//! pseudosolution grid; the log-norm route integrates from `y(0)`.

use std::io::Write;

use serde::Serialize;

use crate::certify::{Certificate, Route};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, NormKind, Vector};
use crate::linear_dynamics::{transition, DichotomyData, LinearSystem};
use crate::numerics::interval_weights;
use crate::pseudo::{fd_derivative, measure, PseudoSolution};
use crate::region::Region;
use crate::systems::{fmt_f64, integrate_on_grid, OdeSystem, Split, Trajectory};

/// Solver settings shared by the shadowing constructions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowOptions {
    /// Fixed-point stopping tolerance and integrator tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Slack allowed on top of the certified bound when judging a run.
    pub check_tol: f64,
}

impl Default for ShadowOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 500,
            check_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShadowResult {
    pub solution: Trajectory,
    pub pseudo: Vec<Vector>,
    pub sup_dist: f64,
    /// `kappa * sigma_y`.
    pub bound: f64,
    pub sigma: f64,
    pub iterations: usize,
    /// Max grid residual `|x' - g(t, x)|`.
    pub residual: f64,
    pub passed: bool,
    /// Ratios of successive fixed-point increments.
    pub ratios: Vec<f64>,
    /// Estimated discretisation error of the fixed point.
    pub quadrature_error: f64,
    /// Strict interior check `|x - y| < sigma/m` at every grid point
    /// (log-norm route only).
    pub strict_bound: Option<bool>,
    pub norm: NormKind,
}

#[derive(Serialize)]
struct Summary {
    sup_dist: f64,
    bound: f64,
    sigma: f64,
    iterations: usize,
    residual: f64,
    passed: bool,
    max_ratio: Option<f64>,
    quadrature_error: f64,
    strict_bound: Option<bool>,
    norm: NormKind,
}

impl ShadowResult {
    pub fn max_ratio(&self) -> Option<f64> {
        self.ratios.iter().copied().reduce(f64::max)
    }

    /// CSV with header `t,y1..yn,x1..xn,dist`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.solution.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("y{i}")));
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.push("dist".into());
        writeln!(w, "{}", header.join(","))?;
        for ((t, x), y) in self.solution.grid.iter().zip(&self.solution.states).zip(&self.pseudo) {
            let mut row = vec![fmt_f64(*t)];
            row.extend(y.iter().map(|v| fmt_f64(*v)));
            row.extend(x.iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(self.norm.vector_norm(&(x - y))));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Summary {
            sup_dist: self.sup_dist,
            bound: self.bound,
            sigma: self.sigma,
            iterations: self.iterations,
            residual: self.residual,
            passed: self.passed,
            max_ratio: self.max_ratio(),
            quadrature_error: self.quadrature_error,
            strict_bound: self.strict_bound,
            norm: self.norm,
        })?)
    }
}

/// Discretised dichotomy operator on a fixed grid.
///
/// Each step integral is a four-node interpolatory rule applied to the
/// kernel `T(t_e, s) P(s) w(s)`, so the whole operator costs O(K).
struct GridOperator {
    dim: usize,
    proj: Vec<Matrix>,
    comp: Vec<Matrix>,
    phi: Vec<Matrix>,
    psi: Vec<Matrix>,
    fwd: Vec<Vec<(usize, Matrix)>>,
    bwd: Vec<Vec<(usize, Matrix)>>,
    has_stable: bool,
    has_unstable: bool,
}

impl GridOperator {
    fn new(linear: &LinearSystem, d: &DichotomyData, grid: &[f64], tol: f64) -> Result<Self> {
        let k = grid.len();
        if k < 4 {
            return Err(Error::Data(
                "the fixed-point solver needs at least 4 grid points".into(),
            ));
        }
        let dim = linear.dim();
        let id = Matrix::identity(dim, dim);
        let proj: Vec<Matrix> = grid.iter().map(|&t| d.projection_at(t)).collect();
        if proj.iter().any(|p| p.nrows() != dim || p.ncols() != dim) {
            return Err(Error::Dimension("projection and linear part differ in size".into()));
        }
        let comp: Vec<Matrix> = proj.iter().map(|p| &id - p).collect();
        let ttol = (tol * 1e-2).max(1e-14);
        let mut phi: Vec<Matrix> = Vec::with_capacity(k - 1);
        let mut psi: Vec<Matrix> = Vec::with_capacity(k - 1);
        let step_cache = linear.is_constant() && uniform(grid);
        for i in 0..k - 1 {
            if step_cache && i > 0 {
                phi.push(phi[0].clone());
                psi.push(psi[0].clone());
                continue;
            }
            phi.push(transition(linear, grid[i + 1], grid[i], ttol)?);
            psi.push(transition(linear, grid[i], grid[i + 1], ttol)?);
        }
        let has_stable = proj.iter().any(|p| p.abs().max() > 0.0);
        let has_unstable = comp.iter().any(|q| q.abs().max() > 0.0);
        let mut op = Self {
            dim,
            proj,
            comp,
            phi,
            psi,
            fwd: Vec::with_capacity(k - 1),
            bwd: Vec::with_capacity(k - 1),
            has_stable,
            has_unstable,
        };
        for i in 0..k - 1 {
            let start = i.saturating_sub(1).min(k - 4);
            let nodes: Vec<usize> = (start..start + 4).collect();
            let xs: Vec<f64> = nodes.iter().map(|&j| grid[j]).collect();
            let w = interval_weights(&xs, grid[i], grid[i + 1]);
            let mut f = Vec::with_capacity(4);
            let mut b = Vec::with_capacity(4);
            for (&j, wj) in nodes.iter().zip(&w) {
                if has_stable {
                    f.push((j, op.between(i + 1, j) * &op.proj[j] * *wj));
                }
                if has_unstable {
                    b.push((j, op.between(i, j) * &op.comp[j] * *wj));
                }
            }
            op.fwd.push(f);
            op.bwd.push(b);
        }
        Ok(op)
    }

    /// `T(t_a, t_b)` from the one-step transitions.
    fn between(&self, a: usize, b: usize) -> Matrix {
        let mut m = Matrix::identity(self.dim, self.dim);
        if a > b {
            for i in b..a {
                m = &self.phi[i] * m;
            }
        } else {
            for i in (a..b).rev() {
                m = &self.psi[i] * m;
            }
        }
        m
    }

    fn apply(&self, w: &[Vector]) -> Vec<Vector> {
        let k = w.len();
        let mut z = vec![Vector::zeros(self.dim); k];
        if self.has_stable {
            let mut f = Vector::zeros(self.dim);
            for i in 0..k - 1 {
                let mut next = &self.phi[i] * &f;
                for (j, m) in &self.fwd[i] {
                    next += m * &w[*j];
                }
                f = &self.proj[i + 1] * next;
                z[i + 1] += &f;
            }
        }
        if self.has_unstable {
            let mut b = Vector::zeros(self.dim);
            for i in (0..k - 1).rev() {
                let mut next = &self.psi[i] * &b;
                for (j, m) in &self.bwd[i] {
                    next += m * &w[*j];
                }
                b = &self.comp[i] * next;
                z[i] -= &b;
            }
        }
        z
    }
}

fn uniform(grid: &[f64]) -> bool {
    let h = grid[1] - grid[0];
    grid.windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-12 * h.abs().max(1.0))
}

struct FixedPoint {
    z: Vec<Vector>,
    iterations: usize,
    ratios: Vec<f64>,
}

/// Iterates `z <- (1 - omega) z + omega F(w(z))` from zero until the sup
/// increment drops below `tol`.
fn iterate<W>(op: &GridOperator, kernel: W, omega: f64, k: NormKind, opts: &ShadowOptions) -> Result<FixedPoint>
where
    W: Fn(usize, &Vector) -> Vector,
{
    let mut z = vec![Vector::zeros(op.dim); op.proj.len()];
    let mut ratios = Vec::new();
    let mut prev = f64::NAN;
    for it in 1..=opts.max_iter {
        let w: Vec<Vector> = z.iter().enumerate().map(|(i, zi)| kernel(i, zi)).collect();
        if w.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Evaluation { t: f64::NAN });
        }
        let fz = op.apply(&w);
        let next: Vec<Vector> = if omega == 1.0 {
            fz
        } else {
            z.iter().zip(&fz).map(|(a, b)| a * (1.0 - omega) + b * omega).collect()
        };
        let step = z
            .iter()
            .zip(&next)
            .map(|(a, b)| k.vector_norm(&(a - b)))
            .fold(0.0, f64::max);
        if prev > 0.0 {
            ratios.push(step / prev);
        }
        z = next;
        if step <= opts.tol {
            return Ok(FixedPoint {
                z,
                iterations: it,
                ratios,
            });
        }
        prev = step;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        last_step: prev,
        last_ratio: ratios.last().copied().unwrap_or(f64::NAN),
    })
}

/// Every other grid index, always keeping the last one.
fn coarse_indices(len: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).step_by(2).collect();
    if *idx.last().unwrap() != len - 1 {
        idx.push(len - 1);
    }
    idx
}

fn split_of(sys: &OdeSystem) -> Result<&Split> {
    sys.split()
        .ok_or_else(|| Error::Structure("the dichotomy route needs a linear/nonlinear split".into()))
}

/// `h_y(t) = A(t) y + f(t, y) - y'` at the grid points.
fn defect(split: &Split, y: &PseudoSolution) -> Vec<Vector> {
    y.grid()
        .iter()
        .zip(y.states())
        .zip(&y.deriv)
        .map(|((t, yi), dy)| split.linear.at(*t) * yi + (split.f)(*t, yi) - dy)
        .collect()
}

/// Shadowing by the dichotomy fixed point: `x = y + z` with `z = F z`.
///
/// The backward integral runs to the end of the pseudosolution grid. The
/// discretisation error is estimated by re-solving on every other grid
/// point and is added to the bound check.
pub fn shadow_dichotomy(
    sys: &OdeSystem,
    d: &DichotomyData,
    y: &PseudoSolution,
    cert: &Certificate,
    opts: &ShadowOptions,
) -> Result<ShadowResult> {
    if !cert.route.uses_dichotomy() {
        return Err(Error::Argument(format!(
            "route {} does not provide a dichotomy certificate",
            cert.route
        )));
    }
    let split = split_of(sys)?;
    if y.sigma > cert.eps0 {
        return Err(Error::Admissibility(format!(
            "sigma = {} exceeds eps0 = {}",
            y.sigma, cert.eps0
        )));
    }
    let k = y.norm;
    let grid = y.grid();
    let hy = defect(split, y);
    let fy: Vec<Vector> = grid.iter().zip(y.states()).map(|(t, yi)| (split.f)(*t, yi)).collect();

    let solve = |idx: &[usize]| -> Result<FixedPoint> {
        let g: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
        let op = GridOperator::new(&split.linear, d, &g, opts.tol)?;
        let kernel = |j: usize, z: &Vector| {
            let i = idx[j];
            (split.f)(grid[i], &(&y.states()[i] + z)) - &fy[i] + &hy[i]
        };
        iterate(&op, kernel, 1.0, k, opts)
    };
    let all: Vec<usize> = (0..grid.len()).collect();
    let fine = solve(&all)?;
    let quadrature_error = if grid.len() >= 7 {
        let idx = coarse_indices(grid.len());
        let coarse = solve(&idx)?;
        idx.iter()
            .zip(&coarse.z)
            .map(|(&i, zc)| k.vector_norm(&(&fine.z[i] - zc)))
            .fold(0.0, f64::max)
            / 15.0
    } else {
        0.0
    };

    let states: Vec<Vector> = y.states().iter().zip(&fine.z).map(|(a, b)| a + b).collect();
    let sup_dist = fine.z.iter().map(|z| k.vector_norm(z)).fold(0.0, f64::max);
    let residual = if grid.len() >= 5 {
        let dz = fd_derivative(grid, &fine.z)?;
        grid.iter()
            .zip(&states)
            .zip(y.deriv.iter().zip(&dz))
            .map(|((t, x), (dy, dzi))| k.vector_norm(&(dy + dzi - sys.g(*t, x))))
            .fold(0.0, f64::max)
    } else {
        f64::NAN
    };
    let bound = cert.kappa * y.sigma;
    Ok(ShadowResult {
        solution: Trajectory::new(grid.to_vec(), states)?,
        pseudo: y.states().to_vec(),
        sup_dist,
        bound,
        sigma: y.sigma,
        iterations: fine.iterations,
        residual,
        passed: sup_dist <= bound + quadrature_error + opts.check_tol,
        ratios: fine.ratios,
        quadrature_error,
        strict_bound: None,
        norm: k,
    })
}

/// Shadowing by the log-norm route: the true solution through `y(0)`.
pub fn shadow_lognorm(
    sys: &OdeSystem,
    y: &PseudoSolution,
    cert: &Certificate,
    region: &Region,
    opts: &ShadowOptions,
) -> Result<ShadowResult> {
    if cert.route != Route::LogNorm {
        return Err(Error::Argument(format!(
            "route {} is not the log-norm route",
            cert.route
        )));
    }
    let m = cert
        .assumptions
        .m
        .ok_or_else(|| Error::Argument("log-norm certificate without m".into()))?;
    if y.sigma > cert.eps0 {
        return Err(Error::Admissibility(format!(
            "sigma = {} exceeds eps0 = {}",
            y.sigma, cert.eps0
        )));
    }
    if let Some((t, _)) = y.grid().iter().zip(y.states()).find(|(_, s)| !region.contains(s)) {
        return Err(Error::Admissibility(format!("pseudosolution leaves H at t = {t}")));
    }
    let k = y.norm;
    let grid = y.grid();
    // The residual is measured by finite differences on a 4x refined grid.
    let fine_grid = refine(grid, RESIDUAL_REFINEMENT);
    let fine = integrate_on_grid(sys, &y.states()[0], &fine_grid, opts.tol.max(1e-13))?;
    if let Some(t) = fine.blow_up {
        return Err(Error::HypothesisCheck(format!(
            "the solution through y(0) is not continuable past t = {t}; the supplied m = {m}, delta = {} cannot hold",
            cert.assumptions.delta
        )));
    }
    let residual = measure(fine.clone(), None, sys, k)?.sigma;
    let sol = Trajectory::new(
        grid.to_vec(),
        fine.states.iter().step_by(RESIDUAL_REFINEMENT).cloned().collect(),
    )?;
    let dists: Vec<f64> = sol
        .states
        .iter()
        .zip(y.states())
        .map(|(x, yi)| k.vector_norm(&(x - yi)))
        .collect();
    let sup_dist = dists.iter().copied().fold(0.0, f64::max);
    let limit = y.sigma / m;
    let strict = if y.sigma > 0.0 {
        dists.iter().all(|d| *d < limit)
    } else {
        sup_dist <= opts.check_tol
    };
    let bound = cert.kappa * y.sigma;
    Ok(ShadowResult {
        solution: sol,
        pseudo: y.states().to_vec(),
        sup_dist,
        bound,
        sigma: y.sigma,
        iterations: 1,
        residual,
        passed: sup_dist <= bound + opts.check_tol && strict,
        ratios: Vec::new(),
        quadrature_error: 0.0,
        strict_bound: Some(strict),
        norm: k,
    })
}

const RESIDUAL_REFINEMENT: usize = 4;

/// Inserts `factor - 1` equally spaced points into every grid interval.
fn refine(grid: &[f64], factor: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((grid.len() - 1) * factor + 1);
    for w in grid.windows(2) {
        let h = (w[1] - w[0]) / factor as f64;
        out.extend((0..factor).map(|j| w[0] + h * j as f64));
    }
    out.push(grid[grid.len() - 1]);
    out
}

/// Outcome of [`relocate`].
#[derive(Debug, Clone)]
pub struct Relocation {
    /// The relocated curve; its error function is measured independently.
    pub z: PseudoSolution,
    pub iterations: usize,
    pub ratios: Vec<f64>,
    /// `sup |z|`.
    pub sup_norm: f64,
    /// `max_i |e_z(t_i) - e_y(t_i)|`.
    pub error_gap: f64,
    pub within_ball: bool,
    /// Largest admissible maximum error `(lambda/(2N) - L) rho`.
    pub epsilon: f64,
}

const RELOCATE_DAMPING: f64 = 0.5;

/// Finds `z` in `B_rho(0)` with the same error function as `y`, by a damped
/// iteration of the operator with kernel `f(s, z(s)) - h_y(s)`.
///
/// `lipschitz` is the sublinear growth constant `|f(t, x)| <= L |x|` on
/// `B_rho(0)`, which is spot-checked on seeded samples.
pub fn relocate(
    sys: &OdeSystem,
    d: &DichotomyData,
    y: &PseudoSolution,
    rho: f64,
    lipschitz: f64,
    opts: &ShadowOptions,
) -> Result<Relocation> {
    let split = split_of(sys)?;
    if !(rho > 0.0) || !(lipschitz >= 0.0) {
        return Err(Error::Argument("rho must be positive and L nonnegative".into()));
    }
    let epsilon = (d.lambda / (2.0 * d.n) - lipschitz) * rho;
    if epsilon <= 0.0 {
        return Err(Error::NotApplicable(format!(
            "L = {lipschitz} violates L < lambda/(2N) = {}",
            d.lambda / (2.0 * d.n)
        )));
    }
    if y.sigma > epsilon {
        return Err(Error::Admissibility(format!(
            "sigma = {} exceeds epsilon = {epsilon}",
            y.sigma
        )));
    }
    let k = y.norm;
    check_sublinear(split, y.grid(), rho, lipschitz, k)?;
    let grid = y.grid();
    let hy = defect(split, y);
    let op = GridOperator::new(&split.linear, d, grid, opts.tol)?;
    let kernel = |i: usize, z: &Vector| (split.f)(grid[i], z) - &hy[i];
    let fp = iterate(&op, kernel, RELOCATE_DAMPING, k, opts)?;
    let sup_norm = fp.z.iter().map(|z| k.vector_norm(z)).fold(0.0, f64::max);
    let mut z = measure(Trajectory::new(grid.to_vec(), fp.z)?, None, sys, k)?;
    z.meta.source = "relocate".into();
    let error_gap = z.err.iter().zip(&y.err).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(Relocation {
        z,
        iterations: fp.iterations,
        ratios: fp.ratios,
        sup_norm,
        error_gap,
        within_ball: sup_norm <= rho,
        epsilon,
    })
}

fn check_sublinear(split: &Split, grid: &[f64], rho: f64, l: f64, k: NormKind) -> Result<()> {
    use rand::{Rng, SeedableRng};
    let n = split.linear.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let times: Vec<f64> = grid.iter().step_by((grid.len() / 16).max(1)).copied().collect();
    for _ in 0..256 {
        let dir = Vector::from_iterator(n, (0..n).map(|_| rng.gen_range(-1.0..=1.0)));
        let len = k.vector_norm(&dir);
        if len == 0.0 {
            continue;
        }
        let x = dir * (rho * rng.gen::<f64>() / len);
        for &t in &times {
            let fx = k.vector_norm(&(split.f)(t, &x));
            let cap = l * k.vector_norm(&x);
            if fx > cap * (1.0 + 1e-12) + 1e-15 {
                return Err(Error::HypothesisCheck(format!(
                    "|f(t, x)| = {fx} exceeds L|x| = {cap} at t = {t}, x = {:?}",
                    x.as_slice()
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{certify_lognorm, certify_t1, certify_t2};
    use crate::linear_dynamics::{DichotomyKind, Projection};
    use crate::numerics::linspace;
    use crate::pseudo::{constant_pseudosolution, trig_pseudosolution};
    use crate::systems::{exm, si};

    fn scalar_linear(a: f64, slope: f64) -> OdeSystem {
        OdeSystem::semilinear(
            LinearSystem::scalar(a),
            move |_t, x| x * slope,
            move |_t, _x| Matrix::from_element(1, 1, slope),
        )
    }

    fn saddle() -> (OdeSystem, DichotomyData) {
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let sys = OdeSystem::semilinear(
            LinearSystem::constant(a).unwrap(),
            |_t, x| x.map(|v| 0.1 * v.sin()),
            |_t, x| Matrix::from_diagonal(&x.map(|v| 0.1 * v.cos())),
        );
        let p = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let d = DichotomyData::new(Projection::Constant(p), 1.0, 1.0, DichotomyKind::Dichotomy).unwrap();
        (sys, d)
    }

    #[test]
    fn exact_solution_is_its_own_shadow() {
        let sys = scalar_linear(-1.0, 0.0);
        let d = DichotomyData::contraction(1, 1.0, 1.0).unwrap();
        let grid = linspace(0.0, 5.0, 101);
        let y = constant_pseudosolution(&sys, &Vector::zeros(1), &grid, NormKind::Inf).unwrap();
        let cert = certify_t2(1.0, 1.0, 0.0, 1.0, DichotomyKind::Contraction).unwrap();
        let r = shadow_dichotomy(&sys, &d, &y, &cert, &ShadowOptions::default()).unwrap();
        assert_eq!(r.sup_dist, 0.0);
        assert!(r.passed);
    }

    #[test]
    fn constant_defect_closed_form() {
        // y = 0 with y' = -eps: h_y = eps, so z' = -z + eps, z = eps (1 - e^{-t}).
        let eps = 0.01;
        let sys = scalar_linear(-1.0, 0.0);
        let d = DichotomyData::contraction(1, 1.0, 1.0).unwrap();
        let grid = linspace(0.0, 20.0, 2001);
        let traj = Trajectory::new(grid.clone(), vec![Vector::zeros(1); grid.len()]).unwrap();
        let deriv = vec![Vector::from_element(1, -eps); grid.len()];
        let y = measure(traj, Some(deriv), &sys, NormKind::Inf).unwrap();
        assert!((y.sigma - eps).abs() < 1e-16);
        let cert = certify_t2(1.0, 1.0, 0.0, 1.0, DichotomyKind::Contraction).unwrap();
        let r = shadow_dichotomy(&sys, &d, &y, &cert, &ShadowOptions::default()).unwrap();
        for (t, x) in r.solution.grid.iter().zip(&r.solution.states) {
            let e = (x[0] - eps * (1.0 - (-t).exp())).abs();
            assert!(e < 1e-11, "t = {t}: error {e:e}");
        }
        assert!(r.sup_dist <= eps);
        assert!(r.passed);
        assert!(r.residual < 1e-9);
    }

    #[test]
    fn saddle_with_sine_nonlinearity() {
        let (sys, d) = saddle();
        let cert = certify_t1(1.0, 1.0, 0.1, 1.0).unwrap();
        assert!((cert.kappa - 2.5).abs() < 1e-12);
        let grid = linspace(0.0, 20.0, 2001);
        let y = trig_pseudosolution(&sys, &Vector::zeros(2), 0.005, 1.0, &grid, 4, NormKind::Inf).unwrap();
        assert!(y.sigma <= 0.05);
        let r = shadow_dichotomy(&sys, &d, &y, &cert, &ShadowOptions::default()).unwrap();
        assert!(r.passed, "sup = {}, bound = {}", r.sup_dist, r.bound);
        assert!(r.max_ratio().unwrap() <= 0.25, "{:?}", r.ratios);
        assert!(r.residual <= 1e-6, "residual {}", r.residual);
        assert!(r.quadrature_error < 1e-8);
    }

    #[test]
    fn dichotomy_rejects_inadmissible_input() {
        let (sys, d) = saddle();
        let cert = certify_t1(1.0, 1.0, 0.1, 0.01).unwrap();
        let grid = linspace(0.0, 2.0, 21);
        let y = trig_pseudosolution(&sys, &Vector::zeros(2), 0.5, 3.0, &grid, 1, NormKind::Inf).unwrap();
        assert!(matches!(
            shadow_dichotomy(&sys, &d, &y, &cert, &ShadowOptions::default()),
            Err(Error::Admissibility(_))
        ));
        let ln = certify_lognorm(1.0, 1.0).unwrap();
        assert!(shadow_dichotomy(&sys, &d, &y, &ln, &ShadowOptions::default()).is_err());
        assert!(matches!(
            shadow_dichotomy(&si(), &d, &y, &cert, &ShadowOptions::default()),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn iteration_limit_is_reported() {
        let (sys, d) = saddle();
        let cert = certify_t1(1.0, 1.0, 0.1, 1.0).unwrap();
        let grid = linspace(0.0, 5.0, 101);
        let y = trig_pseudosolution(&sys, &Vector::zeros(2), 0.01, 1.0, &grid, 2, NormKind::Inf).unwrap();
        let opts = ShadowOptions {
            max_iter: 2,
            ..Default::default()
        };
        assert!(matches!(
            shadow_dichotomy(&sys, &d, &y, &cert, &opts),
            Err(Error::NonConvergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn lognorm_equilibrium() {
        let region = Region::simplex_gamma(0.0, 0.0, NormKind::Inf).unwrap();
        let grid = linspace(0.0, 5.0, 51);
        let y = constant_pseudosolution(&si(), &Vector::from_vec(vec![1.0, 0.0]), &grid, NormKind::Inf).unwrap();
        let cert = certify_lognorm(0.5, 0.1).unwrap();
        let r = shadow_lognorm(&si(), &y, &cert, &region, &ShadowOptions::default()).unwrap();
        assert_eq!(r.sup_dist, 0.0);
        assert!(r.passed);
    }

    #[test]
    fn lognorm_exm() {
        let region = Region::half_line(Vector::from_element(1, -0.3), 0.1, NormKind::Inf).unwrap();
        let cert = certify_lognorm(0.2, 0.1).unwrap();
        let y = crate::pseudo::perturbed_orbit(
            &exm(),
            &Vector::from_element(1, 1.0),
            3.0,
            0.02,
            8,
            &region,
            Default::default(),
        )
        .unwrap();
        let r = shadow_lognorm(&exm(), &y, &cert, &region, &ShadowOptions::default()).unwrap();
        assert!(r.passed && r.strict_bound == Some(true));
        assert!(r.sup_dist <= 5.0 * y.sigma + 1e-6);
        assert!(r.residual < 1e-6);
    }

    #[test]
    fn relocate_linear_problem() {
        let sys = scalar_linear(-1.0, 0.1);
        let d = DichotomyData::contraction(1, 1.0, 1.0).unwrap();
        let grid = linspace(0.0, 20.0, 2001);
        let y = trig_pseudosolution(&sys, &Vector::from_element(1, 0.1), 0.15, 1.0, &grid, 7, NormKind::Inf).unwrap();
        assert!(y.sigma <= 0.4);
        let r = relocate(&sys, &d, &y, 1.0, 0.1, &ShadowOptions::default()).unwrap();
        assert!((r.epsilon - 0.4).abs() < 1e-15);
        assert!(r.within_ball);
        assert!(r.error_gap <= 1e-6, "gap {}", r.error_gap);
    }

    #[test]
    fn relocate_zero_defect() {
        let sys = scalar_linear(-1.0, 0.1);
        let d = DichotomyData::contraction(1, 1.0, 1.0).unwrap();
        let grid = linspace(0.0, 5.0, 51);
        let y = constant_pseudosolution(&sys, &Vector::zeros(1), &grid, NormKind::Inf).unwrap();
        let r = relocate(&sys, &d, &y, 1.0, 0.1, &ShadowOptions::default()).unwrap();
        assert_eq!(r.sup_norm, 0.0);
    }

    #[test]
    fn relocate_preconditions() {
        let sys = scalar_linear(-1.0, 0.1);
        let d = DichotomyData::contraction(1, 1.0, 1.0).unwrap();
        let grid = linspace(0.0, 5.0, 51);
        let y = constant_pseudosolution(&sys, &Vector::from_element(1, 1.0), &grid, NormKind::Inf).unwrap();
        // sigma = 0.9 > 0.4.
        assert!(matches!(
            relocate(&sys, &d, &y, 1.0, 0.1, &ShadowOptions::default()),
            Err(Error::Admissibility(_))
        ));
        // The sublinear bound |0.1 x| <= 0.05 |x| fails.
        let y0 = constant_pseudosolution(&sys, &Vector::zeros(1), &grid, NormKind::Inf).unwrap();
        assert!(matches!(
            relocate(&sys, &d, &y0, 1.0, 0.05, &ShadowOptions::default()),
            Err(Error::HypothesisCheck(_))
        ));
        assert!(matches!(
            relocate(&sys, &d, &y0, 1.0, 0.5, &ShadowOptions::default()),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn csv_and_summary() {
        let region = Region::simplex_gamma(0.0, 0.0, NormKind::Inf).unwrap();
        let grid = linspace(0.0, 1.0, 11);
        let y = constant_pseudosolution(&si(), &Vector::from_vec(vec![1.0, 0.0]), &grid, NormKind::Inf).unwrap();
        let r = shadow_lognorm(
            &si(),
            &y,
            &certify_lognorm(0.5, 0.1).unwrap(),
            &region,
            &ShadowOptions::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t,y1,y2,x1,x2,dist\n"));
        let j: serde_json::Value = serde_json::from_str(&r.summary_json().unwrap()).unwrap();
        assert_eq!(j["passed"], true);
    }
}
