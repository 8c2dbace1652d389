//! Shadowing certificates `(eps0, kappa)` and the sup estimates they rest on.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{NormKind, Vector};
use crate::linear_dynamics::DichotomyKind;
use crate::lognorm::mu_closed;
use crate::region::{Region, Shape};
use crate::systems::{OdeSystem, SystemKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    T1,
    T2,
    BallCor,
    GenPerturb,
    PolyPerturb,
    LogNorm,
}

impl Route {
    pub fn uses_dichotomy(self) -> bool {
        self != Route::LogNorm
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Constants a certificate was derived from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Assumptions {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<DichotomyKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub route: Route,
    pub eps0: f64,
    pub kappa: f64,
    pub assumptions: Assumptions,
    /// False when some constant came from sampling (evidence, not proof).
    pub exact: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Certificate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Contraction factor of the fixed-point operator: `2NL/lambda` for a
    /// general dichotomy, `NL/lambda` for a contraction or expansion.
    pub fn contraction_factor(&self) -> Option<f64> {
        let a = &self.assumptions;
        let (n, lambda, l) = (a.n?, a.lambda?, a.lipschitz?);
        let factor = match a.kind? {
            DichotomyKind::Dichotomy => 2.0,
            _ => 1.0,
        };
        Some(factor * n * l / lambda)
    }

    fn mark_sampled(&mut self, est: &SupEstimate) {
        if !est.exact {
            self.exact = false;
            self.samples = Some(est.samples);
            self.seed = Some(est.seed);
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_dichotomy_constants(n: f64, lambda: f64, l: f64, delta: f64) -> Result<()> {
    positive("N", n)?;
    positive("lambda", lambda)?;
    positive("delta", delta)?;
    if !(l >= 0.0) || !l.is_finite() {
        return Err(Error::Argument(format!("L must be finite and >= 0, got {l}")));
    }
    Ok(())
}

/// Dichotomy route: `kappa = 2N / (lambda - 2NL)`, `eps0 = delta / kappa`.
pub fn certify_t1(n: f64, lambda: f64, l: f64, delta: f64) -> Result<Certificate> {
    check_dichotomy_constants(n, lambda, l, delta)?;
    let bound = lambda / (2.0 * n);
    if l >= bound {
        return Err(Error::NotApplicable(format!(
            "L = {l} violates L < lambda/(2N) = {bound}"
        )));
    }
    let kappa = 2.0 * n / (lambda - 2.0 * n * l);
    Ok(Certificate {
        route: Route::T1,
        eps0: delta / kappa,
        kappa,
        assumptions: Assumptions {
            n: Some(n),
            lambda: Some(lambda),
            lipschitz: Some(l),
            delta,
            kind: Some(DichotomyKind::Dichotomy),
            ..Default::default()
        },
        exact: true,
        samples: None,
        seed: None,
    })
}

/// Contraction/expansion route: `kappa = N / (lambda - NL)`, `eps0 = delta / kappa`.
pub fn certify_t2(n: f64, lambda: f64, l: f64, delta: f64, kind: DichotomyKind) -> Result<Certificate> {
    if kind == DichotomyKind::Dichotomy {
        return Err(Error::Argument(
            "the contraction/expansion route needs kind contraction or expansion".into(),
        ));
    }
    check_dichotomy_constants(n, lambda, l, delta)?;
    let bound = lambda / n;
    if l >= bound {
        return Err(Error::NotApplicable(format!("L = {l} violates L < lambda/N = {bound}")));
    }
    let kappa = n / (lambda - n * l);
    Ok(Certificate {
        route: Route::T2,
        eps0: delta / kappa,
        kappa,
        assumptions: Assumptions {
            n: Some(n),
            lambda: Some(lambda),
            lipschitz: Some(l),
            delta,
            kind: Some(kind),
            ..Default::default()
        },
        exact: true,
        samples: None,
        seed: None,
    })
}

fn certify_kind(n: f64, lambda: f64, l: f64, delta: f64, kind: DichotomyKind) -> Result<Certificate> {
    match kind {
        DichotomyKind::Dichotomy => certify_t1(n, lambda, l, delta),
        _ => certify_t2(n, lambda, l, delta, kind),
    }
}

/// Growth bound `|f_x(t, x)| <= L1 + L2 |x| + ... + L_{k+1} |x|^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSpec {
    pub coeffs: Vec<f64>,
}

impl GrowthSpec {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Argument("growth bound needs at least one coefficient".into()));
        }
        if coeffs.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::Argument("growth coefficients must be finite and >= 0".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c)
    }

    fn is_constant(&self) -> bool {
        self.coeffs[1..].iter().all(|c| *c == 0.0)
    }
}

fn threshold(n: f64, lambda: f64, kind: DichotomyKind) -> f64 {
    match kind {
        DichotomyKind::Dichotomy => lambda / (2.0 * n),
        _ => lambda / n,
    }
}

/// Certificate on `B_rho(0)` from a polynomial growth bound of the Jacobian.
///
/// `delta` is placed by bisection so that `p(rho + delta)` sits at the
/// midpoint of `[p(rho), theta]`.
pub fn certify_gen_perturb(
    n: f64,
    lambda: f64,
    growth: &GrowthSpec,
    rho: f64,
    kind: DichotomyKind,
) -> Result<Certificate> {
    positive("rho", rho)?;
    positive("N", n)?;
    positive("lambda", lambda)?;
    let theta = threshold(n, lambda, kind);
    let p_rho = growth.eval(rho);
    if p_rho >= theta {
        return Err(Error::NotApplicable(format!(
            "p(rho) = {p_rho} >= {theta} at rho = {rho}{}",
            rho_bound(growth, theta)
                .map(|b| format!("; admissible radii satisfy rho < {b}"))
                .unwrap_or_else(|| "; no radius is admissible".into())
        )));
    }
    let delta = if growth.is_constant() {
        rho
    } else {
        let target = 0.5 * (p_rho + theta);
        let mut lo = 0.0;
        let mut hi = rho.max(1.0);
        while growth.eval(rho + hi) < target {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if growth.eval(rho + mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        lo
    };
    let l = growth.eval(rho + delta);
    let mut cert = certify_kind(n, lambda, l, delta, kind)?;
    cert.route = if growth.coeffs.len() <= 2 {
        Route::GenPerturb
    } else {
        Route::PolyPerturb
    };
    cert.assumptions.growth = Some(growth.coeffs.clone());
    cert.assumptions.rho = Some(rho);
    cert.assumptions.region = Some(format!("ball(center=0, radius={rho})"));
    Ok(cert)
}

/// Largest `rho` with `p(rho) < theta`, when `p(0) < theta`.
fn rho_bound(growth: &GrowthSpec, theta: f64) -> Option<f64> {
    if growth.eval(0.0) >= theta {
        return None;
    }
    if growth.is_constant() {
        return Some(f64::INFINITY);
    }
    let mut hi = 1.0;
    while growth.eval(hi) < theta {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if growth.eval(mid) < theta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

/// Log-norm route: `eps0 = m delta`, `kappa = 1/m`.
pub fn certify_lognorm(m: f64, delta: f64) -> Result<Certificate> {
    positive("m", m)?;
    positive("delta", delta)?;
    Ok(Certificate {
        route: Route::LogNorm,
        eps0: m * delta,
        kappa: 1.0 / m,
        assumptions: Assumptions {
            m: Some(m),
            delta,
            ..Default::default()
        },
        exact: true,
        samples: None,
        seed: None,
    })
}

/// Sampling controls for sup estimates over neighbourhoods.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOptions {
    pub samples: usize,
    pub seed: u64,
    /// Times at which time-dependent Jacobians are evaluated.
    pub times: Vec<f64>,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 0,
            times: vec![0.0],
        }
    }
}

/// A supremum, either in closed form or as the max over sampled points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupEstimate {
    pub value: f64,
    pub witness: Vec<f64>,
    pub t: f64,
    pub exact: bool,
    pub samples: usize,
    pub seed: u64,
}

const SHARD: usize = 1024;

/// Max of `score(t, x)` over extreme points and `samples` seeded draws.
/// Shard `i` uses stream `i` of the seed, so a larger sample count sees a
/// superset of the points of a smaller one.
fn sampled_sup<D, S>(draw: D, score: S, extremes: Vec<Vector>, opts: &SampleOptions) -> Result<SupEstimate>
where
    D: Fn(&mut ChaCha8Rng) -> Vector + Sync,
    S: Fn(f64, &Vector) -> f64 + Sync,
{
    if opts.times.is_empty() {
        return Err(Error::Argument("sampling needs at least one time".into()));
    }
    let best_of = |pts: &[Vector]| -> (f64, Vector, f64) {
        let mut best = (f64::NEG_INFINITY, Vector::zeros(0), 0.0);
        for x in pts {
            for &t in &opts.times {
                let s = score(t, x);
                if s > best.0 || s.is_nan() {
                    best = (s, x.clone(), t);
                }
            }
        }
        best
    };
    let shards = opts.samples.div_ceil(SHARD);
    let mut results: Vec<(f64, Vector, f64)> = (0..shards)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            let count = SHARD.min(opts.samples - i * SHARD);
            let pts: Vec<Vector> = (0..count).map(|_| draw(&mut rng)).collect();
            best_of(&pts)
        })
        .collect();
    results.insert(0, best_of(&extremes));
    let mut best = results.swap_remove(0);
    for r in results {
        if r.0 > best.0 {
            best = r;
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Data(format!("sampled supremum is not finite ({})", best.0)));
    }
    Ok(SupEstimate {
        value: best.0,
        witness: best.1.iter().copied().collect(),
        t: best.2,
        exact: false,
        samples: opts.samples,
        seed: opts.seed,
    })
}

fn exact(value: f64, witness: Vec<f64>) -> SupEstimate {
    SupEstimate {
        value,
        witness,
        t: 0.0,
        exact: true,
        samples: 0,
        seed: 0,
    }
}

/// Interval `[lo, hi]` covered by a one-dimensional neighbourhood.
fn interval_1d(region: &Region) -> Option<(f64, f64)> {
    if region.dim() != 1 {
        return None;
    }
    let d = region.delta;
    match &region.shape {
        Shape::Ball { center, radius } => Some((center[0] - radius - d, center[0] + radius + d)),
        Shape::Box { lower, upper } => Some((lower[0] - d, upper[0] + d)),
        Shape::HalfLine { lower } => Some((lower[0] - d, f64::INFINITY)),
        _ => None,
    }
}

/// Sup of `|f_x(t, x)|_k` over `conv(N_delta(H))`.
///
/// Closed forms are used for the scalar registry systems on intervals;
/// otherwise the value is a sampled lower bound on the true supremum.
pub fn estimate_lipschitz(sys: &OdeSystem, region: &Region, k: NormKind, opts: &SampleOptions) -> Result<SupEstimate> {
    let split = sys
        .split()
        .ok_or_else(|| Error::Structure("system has no linear/nonlinear split".into()))?;
    if region.dim() != sys.dim {
        return Err(Error::Dimension("region and system dimensions differ".into()));
    }
    let scalar_quadratic = match sys.kind {
        SystemKind::Exm => Some(-1.0),
        SystemKind::Logistic { a, .. } => Some(a),
        _ => None,
    };
    if let (Some(a), Some((lo, hi))) = (scalar_quadratic, interval_1d(region)) {
        // |f_x| = 2|a||x| is maximal at the endpoint farthest from 0.
        let x = if lo.abs() >= hi.abs() { lo } else { hi };
        return Ok(exact(2.0 * a.abs() * x.abs(), vec![x]));
    }
    let fx = split.fx.clone();
    sampled_sup(
        |rng| region.sample_hull(rng),
        |t, x| k.matrix_norm(&fx(t, x)),
        region.extreme_points(),
        opts,
    )
}

/// `m = -sup mu_k(g_x(t, x))` over `N_delta(H)`.
///
/// Closed forms cover the SI system on `Gamma_c` in the max norm and the
/// scalar registry systems on intervals; other cases are sampled. A
/// nonpositive result is reported as a violated hypothesis with its witness.
pub fn estimate_m(sys: &OdeSystem, region: &Region, k: NormKind, opts: &SampleOptions) -> Result<SupEstimate> {
    if region.dim() != sys.dim {
        return Err(Error::Dimension("region and system dimensions differ".into()));
    }
    let sup = match exact_sup_mu(sys, region, k) {
        Some(s) => s,
        None => {
            let gx = |t: f64, x: &Vector| mu_closed(&sys.gx(t, x), k).unwrap_or(f64::NAN);
            sampled_sup(|rng| region.sample_neighborhood(rng), gx, region.extreme_points(), opts)?
        }
    };
    if sup.value >= 0.0 {
        return Err(Error::HypothesisViolated {
            sup_mu: sup.value,
            witness: sup.witness,
        });
    }
    Ok(SupEstimate {
        value: -sup.value,
        ..sup
    })
}

fn exact_sup_mu(sys: &OdeSystem, region: &Region, k: NormKind) -> Option<SupEstimate> {
    let d = region.delta;
    match (&sys.kind, &region.shape) {
        // mu_inf of [[-I-1, -S], [I, S-1]] is max(|S| - I, S + |I|) - 1; over
        // the max-norm neighbourhood of Gamma_c both rows peak at 2 delta - c,
        // e.g. at (1 - c + delta, -delta).
        (SystemKind::Si, Shape::SimplexGamma { c }) if k == NormKind::Inf => {
            Some(exact(2.0 * d - c, vec![1.0 - c + d, -d]))
        }
        (SystemKind::Exm, _) | (SystemKind::Logistic { .. }, _) => {
            let (lo, hi) = interval_1d(region)?;
            // g_x is affine in x, so the sup over an interval sits at an end.
            let gx = |x: f64| -> f64 {
                match sys.kind {
                    SystemKind::Exm => -2.0 * x - 1.0,
                    SystemKind::Logistic { a, b } => 2.0 * a * x + b,
                    _ => unreachable!(),
                }
            };
            let (vlo, vhi) = (gx(lo), gx(hi));
            if hi.is_infinite() && vhi > vlo {
                return Some(exact(f64::INFINITY, vec![hi]));
            }
            if vlo >= vhi || hi.is_infinite() {
                Some(exact(vlo, vec![lo]))
            } else {
                Some(exact(vhi, vec![hi]))
            }
        }
        _ => None,
    }
}

/// Certificate on `H = B_rho(0)` with `L` the sup of `|f_x|` over
/// `B_{rho + delta}(0)`, delegated to the dichotomy or contraction route.
#[allow(clippy::too_many_arguments)]
pub fn certify_ball(
    sys: &OdeSystem,
    n: f64,
    lambda: f64,
    kind: DichotomyKind,
    rho: f64,
    delta: f64,
    k: NormKind,
    opts: &SampleOptions,
) -> Result<Certificate> {
    positive("rho", rho)?;
    let region = Region::ball(Vector::zeros(sys.dim), rho, delta, k)?;
    let est = estimate_lipschitz(sys, &region, k, opts)?;
    let mut cert = certify_kind(n, lambda, est.value, delta, kind)?;
    cert.route = Route::BallCor;
    cert.assumptions.rho = Some(rho);
    cert.assumptions.region = Some(region.shape.describe());
    cert.assumptions.norm = Some(k);
    cert.mark_sampled(&est);
    Ok(cert)
}

/// Log-norm certificate with `m` estimated on `N_delta(H)`.
pub fn certify_lognorm_region(sys: &OdeSystem, region: &Region, opts: &SampleOptions) -> Result<Certificate> {
    let est = estimate_m(sys, region, region.norm, opts)?;
    let mut cert = certify_lognorm(est.value, region.delta)?;
    cert.assumptions.region = Some(region.shape.describe());
    cert.assumptions.norm = Some(region.norm);
    cert.mark_sampled(&est);
    Ok(cert)
}
