//! ODE systems `x' = g(t, x)`, the named examples, and trajectory integration.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::linear_dynamics::LinearSystem;
use crate::ode::{Rk45, Stop};

pub type VectorField = Arc<dyn Fn(f64, &Vector) -> Vector + Send + Sync>;
pub type JacobianField = Arc<dyn Fn(f64, &Vector) -> Matrix + Send + Sync>;

/// Sup-norm threshold past which an integration is declared to blow up.
pub const BLOWUP_THRESHOLD: f64 = 1e8;
/// Default local error tolerance for replication runs.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Which registered family a system came from; drives closed-form bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum SystemKind {
    /// `x' = -(x + 1/2)^2`.
    Exm,
    /// `x' = x (a x + b)`.
    Logistic {
        a: f64,
        b: f64,
    },
    /// `S' = 1 - IS - S`, `I' = IS - I`.
    Si,
    LinearPoly,
    Custom,
}

/// Semilinear decomposition `g(t, x) = A(t) x + f(t, x)`.
#[derive(Clone)]
pub struct Split {
    pub linear: LinearSystem,
    pub f: VectorField,
    pub fx: JacobianField,
}

#[derive(Clone)]
pub struct OdeSystem {
    pub dim: usize,
    pub kind: SystemKind,
    g: VectorField,
    gx: JacobianField,
    split: Option<Split>,
}

impl fmt::Debug for OdeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeSystem")
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .field("semilinear", &self.split.is_some())
            .finish()
    }
}

impl OdeSystem {
    pub fn new<G, J>(dim: usize, g: G, gx: J) -> Self
    where
        G: Fn(f64, &Vector) -> Vector + Send + Sync + 'static,
        J: Fn(f64, &Vector) -> Matrix + Send + Sync + 'static,
    {
        Self {
            dim,
            kind: SystemKind::Custom,
            g: Arc::new(g),
            gx: Arc::new(gx),
            split: None,
        }
    }

    /// `x' = A(t) x + f(t, x)` with Jacobian `A(t) + f_x(t, x)`.
    pub fn semilinear<F, J>(linear: LinearSystem, f: F, fx: J) -> Self
    where
        F: Fn(f64, &Vector) -> Vector + Send + Sync + 'static,
        J: Fn(f64, &Vector) -> Matrix + Send + Sync + 'static,
    {
        let dim = linear.dim();
        let f: VectorField = Arc::new(f);
        let fx: JacobianField = Arc::new(fx);
        let (lin_g, f_g) = (linear.clone(), f.clone());
        let (lin_j, fx_j) = (linear.clone(), fx.clone());
        Self {
            dim,
            kind: SystemKind::Custom,
            g: Arc::new(move |t, x| lin_g.at(t) * x + f_g(t, x)),
            gx: Arc::new(move |t, x| lin_j.at(t) + fx_j(t, x)),
            split: Some(Split { linear, f, fx }),
        }
    }

    pub fn with_kind(mut self, kind: SystemKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn g(&self, t: f64, x: &Vector) -> Vector {
        (self.g)(t, x)
    }

    pub fn gx(&self, t: f64, x: &Vector) -> Matrix {
        (self.gx)(t, x)
    }

    pub fn split(&self) -> Option<&Split> {
        self.split.as_ref()
    }

    pub(crate) fn field(&self) -> &VectorField {
        &self.g
    }
}

/// `x' = -(x + 1/2)^2`, split as `A = -1`, `f(x) = -x^2 - 1/4`.
pub fn exm() -> OdeSystem {
    OdeSystem::semilinear(
        LinearSystem::scalar(-1.0),
        |_t, x| Vector::from_element(1, -x[0] * x[0] - 0.25),
        |_t, x| Matrix::from_element(1, 1, -2.0 * x[0]),
    )
    .with_kind(SystemKind::Exm)
}

/// Logistic equation `x' = x (a x + b)`, split as `A = b`, `f(x) = a x^2`.
pub fn logistic(a: f64, b: f64) -> OdeSystem {
    OdeSystem::semilinear(
        LinearSystem::scalar(b),
        move |_t, x| Vector::from_element(1, a * x[0] * x[0]),
        move |_t, x| Matrix::from_element(1, 1, 2.0 * a * x[0]),
    )
    .with_kind(SystemKind::Logistic { a, b })
}

/// Kermack–McKendrick type SI system on `(S, I)`.
pub fn si() -> OdeSystem {
    OdeSystem::new(
        2,
        |_t, x| {
            let (s, i) = (x[0], x[1]);
            Vector::from_vec(vec![1.0 - i * s - s, i * s - i])
        },
        |_t, x| {
            let (s, i) = (x[0], x[1]);
            Matrix::from_row_slice(2, 2, &[-i - 1.0, -s, i, s - 1.0])
        },
    )
    .with_kind(SystemKind::Si)
}

/// One monomial `coeff * prod_j x_j^{powers[j]}` in component `component` of `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub component: usize,
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// Sparse multivariate polynomial map `R^n -> R^n`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn validate(&self, n: usize) -> Result<()> {
        for m in &self.terms {
            if m.component >= n || m.powers.len() != n {
                return Err(Error::Dimension(format!("monomial {m:?} does not fit dimension {n}")));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &Vector) -> Vector {
        let mut out = Vector::zeros(x.len());
        for m in &self.terms {
            let v: f64 = m.powers.iter().enumerate().map(|(j, &p)| x[j].powi(p as i32)).product();
            out[m.component] += m.coeff * v;
        }
        out
    }

    pub fn jacobian(&self, x: &Vector) -> Matrix {
        let n = x.len();
        let mut out = Matrix::zeros(n, n);
        for m in &self.terms {
            for (j, &pj) in m.powers.iter().enumerate() {
                if pj == 0 {
                    continue;
                }
                let v: f64 = m
                    .powers
                    .iter()
                    .enumerate()
                    .map(|(l, &p)| {
                        if l == j {
                            pj as f64 * x[l].powi(p as i32 - 1)
                        } else {
                            x[l].powi(p as i32)
                        }
                    })
                    .product();
                out[(m.component, j)] += m.coeff * v;
            }
        }
        out
    }
}

/// Constant linear part plus polynomial nonlinearity.
pub fn linear_poly(a: Matrix, poly: Polynomial) -> Result<OdeSystem> {
    let linear = LinearSystem::constant(a)?;
    poly.validate(linear.dim())?;
    let p2 = poly.clone();
    Ok(
        OdeSystem::semilinear(linear, move |_t, x| poly.eval(x), move |_t, x| p2.jacobian(x))
            .with_kind(SystemKind::LinearPoly),
    )
}

/// Parameters accepted by [`registry`].
#[derive(Debug, Clone, Default)]
pub struct RegistryParams {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub linear: Option<Matrix>,
    pub poly: Option<Polynomial>,
}

/// Looks up a named system: `exm`, `logistic`, `si` or `linear_poly`.
pub fn registry(name: &str, params: &RegistryParams) -> Result<OdeSystem> {
    match name {
        "exm" => Ok(exm()),
        "si" => Ok(si()),
        "logistic" => {
            let a = params
                .a
                .ok_or_else(|| Error::Argument("logistic needs parameter a".into()))?;
            let b = params
                .b
                .ok_or_else(|| Error::Argument("logistic needs parameter b".into()))?;
            Ok(logistic(a, b))
        }
        "linear_poly" => {
            let a = params
                .linear
                .clone()
                .ok_or_else(|| Error::Argument("linear_poly needs a linear matrix".into()))?;
            linear_poly(a, params.poly.clone().unwrap_or_default())
        }
        other => Err(Error::Registry(other.to_string())),
    }
}

/// Closed-form solution of `x' = -(x + 1/2)^2`, `x(0) = c`.
pub fn exm_exact(c: f64, t: f64) -> Result<f64> {
    let gamma = c + 0.5;
    if gamma == 0.0 {
        return Ok(-0.5);
    }
    let denom = gamma * t + 1.0;
    // Domain (-1/gamma, inf) for gamma > 0 and (-inf, -1/gamma) for gamma < 0.
    if denom <= 0.0 {
        return Err(Error::Domain(format!(
            "t = {t} outside the maximal interval of the solution with x(0) = {c}"
        )));
    }
    Ok(-0.5 + gamma / denom)
}

/// Sampled solution on `[0, horizon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub states: Vec<Vector>,
    pub horizon: f64,
    /// Blow-up time when the solution was not continuable to the horizon.
    pub blow_up: Option<f64>,
}

impl Trajectory {
    pub fn new(grid: Vec<f64>, states: Vec<Vector>) -> Result<Self> {
        if grid.is_empty() || grid.len() != states.len() {
            return Err(Error::Data("trajectory needs one state per grid point".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data("trajectory grid must be strictly increasing".into()));
        }
        let horizon = grid[grid.len() - 1];
        Ok(Self {
            grid,
            states,
            horizon,
            blow_up: None,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn last(&self) -> &Vector {
        &self.states[self.states.len() - 1]
    }

    /// CSV with header `t,x1..xn`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.dim();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=n).map(|i| format!("x{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (t, x) in self.grid.iter().zip(&self.states) {
            let row: Vec<String> = std::iter::once(fmt_f64(*t))
                .chain(x.iter().map(|v| fmt_f64(*v)))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Adaptive integration on `[0, horizon]`, recording every accepted step.
///
/// Integration stops early, flagging `blow_up`, once the state norm exceeds
/// [`BLOWUP_THRESHOLD`] or the step size underflows.
pub fn integrate(sys: &OdeSystem, x0: &Vector, horizon: f64, tol: f64) -> Result<Trajectory> {
    check_ivp(sys, x0, horizon, tol)?;
    let rk = Rk45::new(tol).with_blowup(BLOWUP_THRESHOLD);
    let field = sys.field();
    let rhs = |t: f64, x: &Vector| field(t, x);
    let mut grid = vec![0.0];
    let mut states = vec![x0.clone()];
    let mut y = x0.clone();
    let mut h = 0.0;
    let stop = rk.advance(&rhs, 0.0, horizon, &mut y, &mut h, |t, x| {
        grid.push(t);
        states.push(x.clone());
    })?;
    Ok(Trajectory {
        grid,
        states,
        horizon,
        blow_up: blow_up_time(stop),
    })
}

/// Integration reporting the state at each prescribed grid time.
pub fn integrate_on_grid(sys: &OdeSystem, x0: &Vector, grid: &[f64], tol: f64) -> Result<Trajectory> {
    let field = sys.field();
    integrate_field_on_grid(&|t: f64, x: &Vector| field(t, x), x0, grid, tol)
}

pub(crate) fn integrate_field_on_grid<F>(rhs: &F, x0: &Vector, grid: &[f64], tol: f64) -> Result<Trajectory>
where
    F: Fn(f64, &Vector) -> Vector,
{
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument(
            "integration grid must be nonempty and increasing".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::Argument("tolerance must be positive".into()));
    }
    let rk = Rk45::new(tol).with_blowup(BLOWUP_THRESHOLD);
    let mut states = Vec::with_capacity(grid.len());
    let mut y = x0.clone();
    states.push(y.clone());
    let mut h = 0.0;
    let mut blow_up = None;
    for w in grid.windows(2) {
        let stop = rk.advance(rhs, w[0], w[1], &mut y, &mut h, |_, _| {})?;
        if let Some(t) = blow_up_time(stop) {
            blow_up = Some(t);
            break;
        }
        states.push(y.clone());
    }
    let kept = states.len();
    Ok(Trajectory {
        grid: grid[..kept].to_vec(),
        states,
        horizon: grid[grid.len() - 1],
        blow_up,
    })
}

fn blow_up_time(stop: Stop) -> Option<f64> {
    match stop {
        Stop::Reached => None,
        Stop::BlowUp { t } | Stop::Underflow { t, .. } => Some(t),
    }
}

fn check_ivp(sys: &OdeSystem, x0: &Vector, horizon: f64, tol: f64) -> Result<()> {
    if x0.len() != sys.dim {
        return Err(Error::Dimension(format!(
            "initial state has length {}, system dimension is {}",
            x0.len(),
            sys.dim
        )));
    }
    if !(horizon > 0.0) {
        return Err(Error::Argument(format!("horizon must be positive, got {horizon}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Argument("tolerance must be positive".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::linspace;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    fn fd_jacobian(sys: &OdeSystem, t: f64, x: &Vector) -> Matrix {
        let n = x.len();
        let mut j = Matrix::zeros(n, n);
        for c in 0..n {
            let h = 1e-6 * (1.0 + x[c].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let col = (sys.g(t, &xp) - sys.g(t, &xm)) / (2.0 * h);
            j.set_column(c, &col);
        }
        j
    }

    #[test]
    fn registry_values() {
        let p = RegistryParams::default();
        assert_eq!(registry("exm", &p).unwrap().g(0.0, &v(&[0.0]))[0], -0.25);
        let s = registry("si", &p).unwrap();
        let j = s.gx(0.0, &v(&[0.4, 0.7]));
        assert_eq!(j, Matrix::from_row_slice(2, 2, &[-1.7, -0.4, 0.7, -0.6]));
        let lp = RegistryParams {
            a: Some(-1.0),
            b: Some(1.0),
            ..Default::default()
        };
        assert_eq!(registry("logistic", &lp).unwrap().g(0.0, &v(&[1.0]))[0], 0.0);
        assert!(matches!(registry("lorenz", &p), Err(Error::Registry(_))));
        assert!(registry("logistic", &p).is_err());
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let poly = Polynomial {
            terms: vec![
                Monomial {
                    component: 0,
                    coeff: 0.3,
                    powers: vec![2, 1],
                },
                Monomial {
                    component: 1,
                    coeff: -1.5,
                    powers: vec![0, 3],
                },
                Monomial {
                    component: 1,
                    coeff: 0.7,
                    powers: vec![1, 1],
                },
            ],
        };
        let systems = vec![
            exm(),
            logistic(-1.0, 1.0),
            si(),
            linear_poly(Matrix::from_row_slice(2, 2, &[-1.0, 0.2, 0.0, 1.0]), poly).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for sys in &systems {
            for _ in 0..100 {
                let t = rng.gen_range(0.0..10.0);
                let x = Vector::from_iterator(sys.dim, (0..sys.dim).map(|_| rng.gen_range(-2.0..2.0)));
                let exact = sys.gx(t, &x);
                let fd = fd_jacobian(sys, t, &x);
                let scale = exact.abs().max().max(1.0);
                assert!((exact - fd).abs().max() <= 1e-5 * scale, "{sys:?}");
            }
        }
    }

    #[test]
    fn split_consistent_with_g() {
        let sys = exm();
        let split = sys.split().unwrap();
        for x in [-1.0, -0.5, 0.0, 0.3, 2.0] {
            let xv = v(&[x]);
            let via_split = split.linear.at(0.0) * &xv + (split.f)(0.0, &xv);
            assert!((via_split - sys.g(0.0, &xv)).abs().max() <= 1e-12);
        }
    }

    #[test]
    fn exm_exact_values() {
        for t in [0.0, 1.0, 100.0] {
            assert_eq!(exm_exact(-0.5, t).unwrap(), -0.5);
        }
        assert_relative_eq!(exm_exact(0.5, 1.0).unwrap(), 0.0, epsilon = 1e-15);
        assert!((exm_exact(0.5, 1e9).unwrap() + 0.5).abs() < 1e-8);
        // gamma = -1/2: the solution exists only for t < 2.
        assert!(exm_exact(-1.0, 1.9).is_ok());
        assert!(matches!(exm_exact(-1.0, 2.0), Err(Error::Domain(_))));
        assert!(matches!(exm_exact(-1.0, 3.0), Err(Error::Domain(_))));
    }

    #[test]
    fn integrate_exm_equilibrium_and_blowup() {
        let sys = exm();
        let tr = integrate(&sys, &v(&[-0.5]), 10.0, 1e-10).unwrap();
        assert!(tr.blow_up.is_none());
        assert!(tr.states.iter().all(|x| x[0] == -0.5));
        let tr = integrate(&sys, &v(&[-1.0]), 5.0, 1e-10).unwrap();
        let tb = tr.blow_up.expect("blow-up expected");
        assert!((tb - 2.0).abs() < 1e-6, "blow-up at {tb}");
    }

    #[test]
    fn integrate_matches_exact_solution() {
        let sys = exm();
        let tol = 1e-10;
        for c in [-0.3, 0.0, 0.5, 2.0] {
            let tr = integrate(&sys, &v(&[c]), 20.0, tol).unwrap();
            for (t, x) in tr.grid.iter().zip(&tr.states) {
                assert!(
                    (x[0] - exm_exact(c, *t).unwrap()).abs() <= 10.0 * tol,
                    "c = {c}, t = {t}"
                );
            }
        }
    }

    #[test]
    fn si_disease_free_equilibrium() {
        let tr = integrate(&si(), &v(&[1.0, 0.0]), 10.0, 1e-10).unwrap();
        assert!(tr.states.iter().all(|x| x[0] == 1.0 && x[1] == 0.0));
    }

    #[test]
    fn grid_integration_hits_grid_points() {
        let grid = linspace(0.0, 3.0, 31);
        let tr = integrate_on_grid(&exm(), &v(&[0.5]), &grid, 1e-12).unwrap();
        assert_eq!(tr.grid, grid);
        for (t, x) in tr.grid.iter().zip(&tr.states) {
            assert!((x[0] - exm_exact(0.5, *t).unwrap()).abs() < 1e-11);
        }
    }

    #[test]
    fn csv_export() {
        let tr = Trajectory::new(vec![0.0, 0.5], vec![v(&[1.0, 2.0]), v(&[3.0, 4.0])]).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2");
        assert_eq!(
            lines.next().unwrap(),
            "0.0000000000000000e0,1.0000000000000000e0,2.0000000000000000e0"
        );
    }

    #[test]
    fn bad_inputs() {
        assert!(integrate(&exm(), &v(&[0.0, 1.0]), 1.0, 1e-8).is_err());
        assert!(integrate(&exm(), &v(&[0.0]), 0.0, 1e-8).is_err());
        assert!(Trajectory::new(vec![0.0, 0.0], vec![v(&[1.0]), v(&[1.0])]).is_err());
    }
}
