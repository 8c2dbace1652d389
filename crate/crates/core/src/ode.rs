//! Dormand–Prince 5(4) integrator with adaptive step control.

use crate::error::{Error, Result};
use crate::linalg::Vector;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B_LOW: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// How an integration segment ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Stop {
    Reached,
    /// State norm exceeded the blow-up threshold.
    BlowUp {
        t: f64,
    },
    /// Step size fell below the resolvable minimum.
    Underflow {
        t: f64,
        h: f64,
    },
}

/// Adaptive explicit Runge–Kutta stepper.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Rk45 {
    /// Mixed absolute/relative local error tolerance.
    pub tol: f64,
    /// Sup-norm threshold treated as blow-up.
    pub blowup: f64,
    pub max_steps: usize,
}

impl Rk45 {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            blowup: f64::INFINITY,
            max_steps: 5_000_000,
        }
    }

    pub fn with_blowup(mut self, threshold: f64) -> Self {
        self.blowup = threshold;
        self
    }

    /// Advances `y` from `t0` to `t1` (either direction). `h` carries the step
    /// size between calls; pass 0 to pick one automatically.
    pub fn advance<F, S>(&self, rhs: &F, t0: f64, t1: f64, y: &mut Vector, h: &mut f64, mut on_step: S) -> Result<Stop>
    where
        F: Fn(f64, &Vector) -> Vector,
        S: FnMut(f64, &Vector),
    {
        let span = t1 - t0;
        if span == 0.0 {
            return Ok(Stop::Reached);
        }
        let dir = span.signum();
        let mut t = t0;
        let mut step = if *h > 0.0 {
            *h
        } else {
            initial_step(rhs, t0, y, self.tol, span.abs())?
        };
        let mut k: [Vector; 7] = std::array::from_fn(|_| Vector::zeros(y.len()));
        let mut steps = 0usize;
        while (t1 - t) * dir > 0.0 {
            steps += 1;
            if steps > self.max_steps {
                return Ok(Stop::Underflow { t, h: step });
            }
            let remaining = (t1 - t).abs();
            let last = step >= remaining;
            let hs = if last { remaining } else { step };
            let min_h = 1e-14 * t.abs().max(1.0);
            if hs < min_h && !last {
                return Ok(Stop::Underflow { t, h: hs });
            }
            let hd = hs * dir;
            k[0] = eval(rhs, t, y)?;
            for s in 1..7 {
                let mut ys = y.clone();
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        ys.axpy(hd * a, kj, 1.0);
                    }
                }
                k[s] = eval(rhs, t + C[s] * hd, &ys)?;
            }
            let mut y_new = y.clone();
            let mut err_vec = Vector::zeros(y.len());
            for s in 0..7 {
                if B[s] != 0.0 {
                    y_new.axpy(hd * B[s], &k[s], 1.0);
                }
                let e = B[s] - B_LOW[s];
                if e != 0.0 {
                    err_vec.axpy(hd * e, &k[s], 1.0);
                }
            }
            let err = err_vec
                .iter()
                .zip(y.iter().zip(y_new.iter()))
                .map(|(e, (a, b))| e.abs() / (self.tol * (1.0 + a.abs().max(b.abs()))))
                .fold(0.0, f64::max);
            if !err.is_finite() {
                step = hs * 0.2;
                continue;
            }
            if err <= 1.0 {
                t = if last { t1 } else { t + hd };
                *y = y_new;
                on_step(t, y);
                if y.iter().fold(0.0f64, |m, v| m.max(v.abs())) > self.blowup {
                    *h = hs;
                    return Ok(Stop::BlowUp { t });
                }
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !last {
                    step = hs * fac;
                } else {
                    step = step.max(hs * fac.min(1.0));
                }
            } else {
                let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                step = hs * fac;
            }
        }
        *h = step;
        Ok(Stop::Reached)
    }
}

fn eval<F: Fn(f64, &Vector) -> Vector>(rhs: &F, t: f64, y: &Vector) -> Result<Vector> {
    let v = rhs(t, y);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Evaluation { t });
    }
    Ok(v)
}

fn initial_step<F: Fn(f64, &Vector) -> Vector>(rhs: &F, t: f64, y: &Vector, tol: f64, span: f64) -> Result<f64> {
    let f0 = eval(rhs, t, y)?;
    let scale = |v: &Vector| {
        v.iter()
            .zip(y.iter())
            .map(|(a, b)| (a / (tol * (1.0 + b.abs()))).powi(2))
            .sum::<f64>()
            .sqrt()
            / (y.len() as f64).sqrt()
    };
    let d0 = scale(y);
    let d1 = scale(&f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    Ok(h0.min(span).min(0.1 * span.max(1e-3)).max(1e-12 * span))
}
