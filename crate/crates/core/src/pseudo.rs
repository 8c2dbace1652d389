//! Pseudosolutions: error functions, maximum errors and generators.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{NormKind, Vector};
use crate::numerics::differentiate;
use crate::region::Region;
use crate::systems::{fmt_f64, integrate_field_on_grid, OdeSystem, Trajectory};

/// Provenance and generator settings carried alongside a pseudosolution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PseudoMeta {
    pub source: String,
    pub seed: Option<u64>,
    pub amplitude: Option<f64>,
    /// Bound on how far the curve may move between consecutive grid points,
    /// `max |y'| * max step`; containment is only checked on the grid.
    pub excursion_bound: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PseudoSolution {
    pub traj: Trajectory,
    pub deriv: Vec<Vector>,
    /// `e_y(t_i) = |y'(t_i) - g(t_i, y(t_i))|`.
    pub err: Vec<f64>,
    pub sigma: f64,
    pub norm: NormKind,
    pub meta: PseudoMeta,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    sigma: f64,
    seed: Option<u64>,
    amplitude: Option<f64>,
    norm: NormKind,
    source: &'a str,
    grid_points: usize,
    horizon: f64,
    excursion_bound: Option<f64>,
}

impl PseudoSolution {
    pub fn grid(&self) -> &[f64] {
        &self.traj.grid
    }

    pub fn states(&self) -> &[Vector] {
        &self.traj.states
    }

    pub fn dim(&self) -> usize {
        self.traj.dim()
    }

    /// CSV with header `t,y1..yn,e`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("y{i}")));
        header.push("e".into());
        writeln!(w, "{}", header.join(","))?;
        for ((t, y), e) in self.traj.grid.iter().zip(&self.traj.states).zip(&self.err) {
            let mut row = vec![fmt_f64(*t)];
            row.extend(y.iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(*e));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// JSON sidecar with sigma, seed and amplitude.
    pub fn sidecar_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Sidecar {
            sigma: self.sigma,
            seed: self.meta.seed,
            amplitude: self.meta.amplitude,
            norm: self.norm,
            source: &self.meta.source,
            grid_points: self.traj.len(),
            horizon: self.traj.horizon,
            excursion_bound: self.meta.excursion_bound,
        })?)
    }
}

/// Fills in the error function and maximum error of `traj`.
///
/// Without derivative samples, `y'` is taken from fourth-order finite
/// differences, which needs at least five grid points.
pub fn measure(traj: Trajectory, deriv: Option<Vec<Vector>>, sys: &OdeSystem, k: NormKind) -> Result<PseudoSolution> {
    if traj.is_empty() {
        return Err(Error::Data("pseudosolution grid is empty".into()));
    }
    if traj.dim() != sys.dim {
        return Err(Error::Dimension(format!(
            "pseudosolution has dimension {}, system has {}",
            traj.dim(),
            sys.dim
        )));
    }
    let deriv = match deriv {
        Some(d) => {
            if d.len() != traj.len() {
                return Err(Error::Data("one derivative sample per grid point required".into()));
            }
            d
        }
        None => fd_derivative(&traj.grid, &traj.states)?,
    };
    let err: Vec<f64> = traj
        .grid
        .iter()
        .zip(&traj.states)
        .zip(&deriv)
        .map(|((t, y), d)| k.vector_norm(&(d - sys.g(*t, y))))
        .collect();
    let sigma = err.iter().copied().fold(0.0, f64::max);
    if !sigma.is_finite() {
        return Err(Error::Data("maximum error is not finite".into()));
    }
    Ok(PseudoSolution {
        traj,
        deriv,
        err,
        sigma,
        norm: k,
        meta: PseudoMeta {
            source: "measured".into(),
            ..Default::default()
        },
    })
}

pub(crate) fn fd_derivative(grid: &[f64], states: &[Vector]) -> Result<Vec<Vector>> {
    if grid.len() < 5 {
        return Err(Error::Data(
            "no derivative samples and fewer than 5 grid points for finite differences".into(),
        ));
    }
    let n = states[0].len();
    let mut out = vec![Vector::zeros(n); grid.len()];
    for c in 0..n {
        let vals: Vec<f64> = states.iter().map(|s| s[c]).collect();
        for (o, d) in out.iter_mut().zip(differentiate(grid, &vals)) {
            o[c] = d;
        }
    }
    Ok(out)
}

/// `y(t) = -1/2 + delta * tanh(delta t)`, a pseudosolution of the EXM
/// equation with constant error `delta^2`.
pub fn exm_pseudosolution(delta: f64, grid: &[f64]) -> Result<PseudoSolution> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Argument(format!("delta must lie in (0, 1), got {delta}")));
    }
    let states: Vec<Vector> = grid
        .iter()
        .map(|&t| Vector::from_element(1, -0.5 + delta * (delta * t).tanh()))
        .collect();
    let deriv: Vec<Vector> = grid
        .iter()
        .map(|&t| {
            let th = (delta * t).tanh();
            Vector::from_element(1, delta * delta * (1.0 - th * th))
        })
        .collect();
    let traj = Trajectory::new(grid.to_vec(), states)?;
    let mut ps = measure(traj, Some(deriv), &crate::systems::exm(), NormKind::Inf)?;
    ps.meta.source = format!("exm_pseudosolution(delta={delta})");
    Ok(ps)
}

/// Smooth bounded signal: per component a sum of at most five sinusoids.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    /// `(amplitude, frequency, phase)` triples per component.
    pub modes: Vec<Vec<(f64, f64, f64)>>,
}

impl Forcing {
    /// Random modes with `|eta(t)|_k <= amplitude` for all `t`.
    pub fn random(n: usize, amplitude: f64, k: NormKind, max_freq: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut modes: Vec<Vec<(f64, f64, f64)>> = (0..n)
            .map(|_| {
                let count = rng.gen_range(1..=5);
                (0..count)
                    .map(|_| {
                        (
                            rng.gen_range(0.1..1.0),
                            rng.gen_range(0.05..1.0) * max_freq,
                            rng.gen_range(0.0..std::f64::consts::TAU),
                        )
                    })
                    .collect()
            })
            .collect();
        let bounds = Vector::from_iterator(n, modes.iter().map(|m| m.iter().map(|(a, _, _)| a).sum::<f64>()));
        let scale = if amplitude == 0.0 {
            0.0
        } else {
            amplitude / k.vector_norm(&bounds)
        };
        for m in &mut modes {
            for mode in m.iter_mut() {
                mode.0 *= scale;
            }
        }
        Self { modes }
    }

    pub fn eval(&self, t: f64) -> Vector {
        Vector::from_iterator(
            self.modes.len(),
            self.modes
                .iter()
                .map(|m| m.iter().map(|(a, w, p)| a * (w * t + p).sin()).sum::<f64>()),
        )
    }

    pub fn derivative(&self, t: f64) -> Vector {
        Vector::from_iterator(
            self.modes.len(),
            self.modes
                .iter()
                .map(|m| m.iter().map(|(a, w, p)| a * w * (w * t + p).cos()).sum::<f64>()),
        )
    }
}

/// Generator settings for [`perturbed_orbit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitOptions {
    /// Output grid spacing.
    pub dt: f64,
    pub tol: f64,
    /// Largest angular frequency of the forcing.
    pub max_freq: f64,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        Self {
            dt: 0.01,
            tol: 1e-10,
            max_freq: 2.0,
        }
    }
}

fn uniform_grid(horizon: f64, dt: f64) -> Result<Vec<f64>> {
    if !(horizon > 0.0) || !(dt > 0.0) {
        return Err(Error::Argument("horizon and grid step must be positive".into()));
    }
    let steps = (horizon / dt).ceil().max(4.0) as usize;
    Ok(crate::numerics::linspace(0.0, horizon, steps + 1))
}

fn excursion(grid: &[f64], deriv: &[Vector], k: NormKind) -> f64 {
    let h = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    deriv.iter().map(|d| k.vector_norm(d)).fold(0.0, f64::max) * h
}

/// Solves `y' = g(t, y) + eta(t)` from `x0` with a seeded smooth forcing
/// bounded by `amplitude` in the region's norm, so `sigma <= amplitude`.
///
/// The orbit must stay in `H` at every grid point up to `horizon`.
pub fn perturbed_orbit(
    sys: &OdeSystem,
    x0: &Vector,
    horizon: f64,
    amplitude: f64,
    seed: u64,
    region: &Region,
    opts: OrbitOptions,
) -> Result<PseudoSolution> {
    if !(amplitude >= 0.0) {
        return Err(Error::Argument(format!("amplitude must be >= 0, got {amplitude}")));
    }
    if x0.len() != sys.dim {
        return Err(Error::Dimension("initial state does not match the system".into()));
    }
    let k = region.norm;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let forcing = Forcing::random(sys.dim, amplitude, k, opts.max_freq, &mut rng);
    let grid = uniform_grid(horizon, opts.dt)?;
    let rhs = |t: f64, y: &Vector| sys.g(t, y) + forcing.eval(t);
    let traj = integrate_field_on_grid(&rhs, x0, &grid, opts.tol)?;
    for (t, y) in traj.grid.iter().zip(&traj.states) {
        if !region.contains(y) {
            return Err(Error::Containment {
                exit_time: *t,
                state: y.iter().copied().collect(),
            });
        }
    }
    if let Some(t) = traj.blow_up {
        return Err(Error::Containment {
            exit_time: t,
            state: traj.last().iter().copied().collect(),
        });
    }
    let deriv: Vec<Vector> = traj.grid.iter().zip(&traj.states).map(|(t, y)| rhs(*t, y)).collect();
    let exc = excursion(&traj.grid, &deriv, k);
    let mut ps = measure(traj, Some(deriv), sys, k)?;
    ps.meta = PseudoMeta {
        source: "perturbed_orbit".into(),
        seed: Some(seed),
        amplitude: Some(amplitude),
        excursion_bound: Some(exc),
    };
    Ok(ps)
}

/// `y(t) = base + eta(t)` with a seeded smooth signal `|eta|_k <= amplitude`
/// and its exact derivative; the maximum error is measured, not prescribed.
pub fn trig_pseudosolution(
    sys: &OdeSystem,
    base: &Vector,
    amplitude: f64,
    max_freq: f64,
    grid: &[f64],
    seed: u64,
    k: NormKind,
) -> Result<PseudoSolution> {
    if base.len() != sys.dim {
        return Err(Error::Dimension("base point does not match the system".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eta = Forcing::random(sys.dim, amplitude, k, max_freq, &mut rng);
    let states = grid.iter().map(|&t| base + eta.eval(t)).collect();
    let deriv: Vec<Vector> = grid.iter().map(|&t| eta.derivative(t)).collect();
    let exc = excursion(grid, &deriv, k);
    let mut ps = measure(Trajectory::new(grid.to_vec(), states)?, Some(deriv), sys, k)?;
    ps.meta = PseudoMeta {
        source: "trig_pseudosolution".into(),
        seed: Some(seed),
        amplitude: Some(amplitude),
        excursion_bound: Some(exc),
    };
    Ok(ps)
}

/// Constant curve `y(t) = point`, whose derivative vanishes.
pub fn constant_pseudosolution(sys: &OdeSystem, point: &Vector, grid: &[f64], k: NormKind) -> Result<PseudoSolution> {
    let states = vec![point.clone(); grid.len()];
    let deriv = vec![Vector::zeros(point.len()); grid.len()];
    let mut ps = measure(Trajectory::new(grid.to_vec(), states)?, Some(deriv), sys, k)?;
    ps.meta.source = "constant".into();
    Ok(ps)
}
