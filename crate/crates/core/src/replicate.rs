//! End-to-end replications: the EXM equation on balls and half-lines, its
//! counterexample on `B_{1/2}(0)`, and the SI system on `Gamma_c`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::certify::{certify_gen_perturb, certify_lognorm_region, Certificate, GrowthSpec, SampleOptions};
use crate::error::{Error, Result};
use crate::linalg::{NormKind, Vector};
use crate::linear_dynamics::{DichotomyData, DichotomyKind};
use crate::numerics::linspace;
use crate::pseudo::{constant_pseudosolution, exm_pseudosolution, perturbed_orbit, OrbitOptions, PseudoSolution};
use crate::region::Region;
use crate::shadow::{shadow_dichotomy, shadow_lognorm, ShadowOptions, ShadowResult};
use crate::systems::{exm, fmt_f64, integrate_on_grid, si};

/// Shared settings for the shadowing sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateOptions {
    pub runs: usize,
    pub seed: u64,
    /// Pseudosolution grid spacing.
    pub dt: f64,
    pub shadow: ShadowOptions,
}

impl Default for ReplicateOptions {
    fn default() -> Self {
        Self {
            runs: 20,
            seed: 0,
            dt: 0.01,
            shadow: ShadowOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Every shadowing run met its certified bound.
    Passed,
    /// Some run missed its bound.
    Failed,
    /// The negative result was certified for the tested constants.
    FailureCertified,
    /// The computation did not certify the negative result.
    Inconclusive,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Passed | Outcome::FailureCertified => 0,
            Outcome::Failed | Outcome::Inconclusive => 1,
        }
    }
}

/// A named numeric inequality `value <relation> threshold`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: String,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, relation: &str, threshold: f64) -> Self {
        let passed = match relation {
            ">=" => value >= threshold,
            ">" => value > threshold,
            "<=" => value <= threshold,
            "<" => value < threshold,
            _ => false,
        };
        Self {
            name: name.into(),
            value,
            relation: relation.into(),
            threshold,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub index: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub sigma: f64,
    pub sup_dist: f64,
    pub bound: f64,
    pub passed: bool,
    pub iterations: usize,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_contraction_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strict_bound: Option<bool>,
}

/// File written into a report directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub name: String,
    pub parameters: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<RunRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass_rate: Option<f64>,
    /// Largest `sup_dist / bound` over the runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_ratio: Option<f64>,
    pub checks: Vec<Check>,
    pub outcome: Outcome,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub artifacts: Vec<Artifact>,
}

impl Report {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            parameters: BTreeMap::new(),
            certificate: None,
            runs: Vec::new(),
            pass_rate: None,
            worst_ratio: None,
            checks: Vec::new(),
            outcome: Outcome::Inconclusive,
            notes: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn param(&mut self, key: &str, value: f64) {
        self.parameters.insert(key.into(), value);
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn exit_code(&self) -> i32 {
        self.outcome.exit_code()
    }

    /// Summary as TOML text; `timestamp` adds the generation time.
    pub fn summary_toml(&self, timestamp: bool) -> Result<String> {
        let mut text = toml::to_string(self).map_err(|e| Error::Data(format!("summary serialization: {e}")))?;
        if timestamp {
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            text = format!("generated_unix = {secs}\n{text}");
        }
        Ok(text)
    }

    /// Writes `summary.toml`, `certificate.json` and the CSV artifacts.
    pub fn write_dir(&self, dir: &Path, timestamp: bool) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.toml"), self.summary_toml(timestamp)?)?;
        if let Some(c) = &self.certificate {
            fs::write(dir.join("certificate.json"), c.to_json()? + "\n")?;
        }
        for a in &self.artifacts {
            fs::write(dir.join(&a.name), &a.contents)?;
        }
        Ok(())
    }

    fn finish_runs(&mut self, runs: Vec<(RunRecord, Vec<Artifact>)>) {
        for (r, a) in runs {
            self.runs.push(r);
            self.artifacts.extend(a);
        }
        let n = self.runs.len().max(1) as f64;
        let passed = self.runs.iter().filter(|r| r.passed).count();
        self.pass_rate = Some(passed as f64 / n);
        self.worst_ratio = self
            .runs
            .iter()
            .map(|r| if r.bound > 0.0 { r.sup_dist / r.bound } else { 0.0 })
            .reduce(f64::max);
        self.outcome = if passed == self.runs.len() {
            Outcome::Passed
        } else {
            Outcome::Failed
        };
    }
}

fn csv_of<F: FnOnce(&mut Vec<u8>) -> Result<()>>(f: F) -> Result<String> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Data(e.to_string()))
}

fn run_record(index: usize, seed: u64, y: &PseudoSolution, r: &ShadowResult) -> Result<(RunRecord, Vec<Artifact>)> {
    let record = RunRecord {
        index,
        seed,
        x0: y.states()[0].iter().copied().collect(),
        sigma: y.sigma,
        sup_dist: r.sup_dist,
        bound: r.bound,
        passed: r.passed,
        iterations: r.iterations,
        residual: r.residual,
        max_contraction_ratio: r.max_ratio(),
        strict_bound: r.strict_bound,
    };
    let artifacts = vec![
        Artifact {
            name: format!("pseudo_{index:02}.csv"),
            contents: csv_of(|w| y.write_csv(w))?,
        },
        Artifact {
            name: format!("shadow_{index:02}.csv"),
            contents: csv_of(|w| r.write_csv(w))?,
        },
    ];
    Ok((record, artifacts))
}

const MAX_ATTEMPTS: u64 = 16;

/// Runs `runs` seeded shadowing jobs in parallel. `make` draws a contained
/// pseudosolution from a seed; seeds whose orbit leaves `H` are retried.
fn sweep<M, S>(opts: &ReplicateOptions, make: M, shadow: S) -> Result<Vec<(RunRecord, Vec<Artifact>)>>
where
    M: Fn(u64) -> Result<PseudoSolution> + Sync,
    S: Fn(&PseudoSolution) -> Result<ShadowResult> + Sync,
{
    (0..opts.runs)
        .into_par_iter()
        .map(|i| {
            let mut last = None;
            for attempt in 0..MAX_ATTEMPTS {
                let seed = opts
                    .seed
                    .wrapping_mul(1_000_003)
                    .wrapping_add(i as u64 * MAX_ATTEMPTS + attempt);
                match make(seed) {
                    Ok(y) => {
                        let r = shadow(&y)?;
                        return run_record(i, seed, &y, &r);
                    }
                    Err(e @ Error::Containment { .. }) => last = Some(e),
                    Err(e) => return Err(e),
                }
            }
            Err(last.expect("at least one attempt"))
        })
        .collect()
}

/// EXM equation on `B_rho(0)` through the polynomial-growth certificate
/// (`N = 1`, `lambda = 1`, `|f_x| <= 2|x|`, contraction).
pub fn replicate_exm_positive(rho: f64, opts: &ReplicateOptions) -> Result<Report> {
    let growth = GrowthSpec::new(vec![0.0, 2.0])?;
    let cert = certify_gen_perturb(1.0, 1.0, &growth, rho, DichotomyKind::Contraction)?;
    let mut report = Report::new("exm");
    report.param("rho", rho);
    report.param("delta", cert.assumptions.delta);
    let sys = exm();
    let d = DichotomyData::contraction(1, 1.0, 1.0)?;
    let region = Region::ball(Vector::zeros(1), rho, 0.0, NormKind::Inf)?;
    // Orbits start in [rho/2, rho] and decrease; stop well before the exact
    // solution from rho reaches -rho.
    let exit = 1.0 / (0.5 - rho) - 1.0 / (0.5 * rho + 0.5);
    let horizon = (0.8 * exit).min(5.0);
    report.param("horizon", horizon);
    let eps0 = cert.eps0;
    let orbit = OrbitOptions {
        dt: opts.dt,
        ..Default::default()
    };
    let runs = sweep(
        opts,
        |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0 = rng.gen_range(0.5 * rho..=rho);
            let amp = eps0 * rng.gen_range(0.1..=1.0);
            perturbed_orbit(&sys, &Vector::from_element(1, x0), horizon, amp, seed, &region, orbit)
        },
        |y| shadow_dichotomy(&sys, &d, y, &cert, &opts.shadow),
    )?;
    report.certificate = Some(cert);
    report.finish_runs(runs);
    Ok(report)
}

/// Lower and upper bounds on `min_c sup_t |x_c(t) - y(t)|` over the
/// solutions `x_c` with `c` in `[-1/2, 1/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapBounds {
    /// Valid for every `c` in the range (sup evaluated on the time grid).
    pub lower: f64,
    /// Attained by the best sampled `c`.
    pub upper: f64,
    pub argmin_c: f64,
}

/// Branch and bound over `gamma = c + 1/2`: solutions are ordered in
/// `gamma`, so on a cell `[ga, gb]` each `x_c(t)` lies between `x_ga(t)` and
/// `x_gb(t)`, and the distance from `y(t)` to that interval bounds
/// `|x_c(t) - y(t)|` from below.
fn exm_gap_bounds(times: &[f64], ys: &[f64]) -> GapBounds {
    let x = |g: f64, t: f64| -0.5 + g / (g * t + 1.0);
    let sup_at = |g: f64| {
        times
            .iter()
            .zip(ys)
            .map(|(t, y)| (x(g, *t) - y).abs())
            .fold(0.0, f64::max)
    };
    let cell_lower = |ga: f64, gb: f64| {
        times
            .iter()
            .zip(ys)
            .map(|(t, y)| {
                let (lo, hi) = (x(ga, *t), x(gb, *t));
                (lo - y).max(y - hi).max(0.0)
            })
            .fold(0.0, f64::max)
    };
    let mut edges = vec![0.0];
    let mut g = 1e-9;
    while g < 1.0 {
        edges.push(g);
        g *= 1.05;
    }
    edges.push(1.0);
    let mut cells: Vec<(f64, f64)> = edges.windows(2).map(|w| (w[0], w[1])).collect();
    let mut best = (f64::INFINITY, 0.0);
    let mut lower = 0.0;
    for _ in 0..40 {
        let evaluated: Vec<(f64, f64, f64, f64)> = cells
            .par_iter()
            .map(|&(a, b)| {
                let mid = 0.5 * (a + b);
                (a, b, cell_lower(a, b), sup_at(mid))
            })
            .collect();
        for e in &evaluated {
            if e.3 < best.0 {
                best = (e.3, 0.5 * (e.0 + e.1));
            }
        }
        lower = evaluated.iter().map(|e| e.2).fold(f64::INFINITY, f64::min);
        let keep: Vec<(f64, f64)> = evaluated.iter().filter(|e| e.2 <= best.0).map(|e| (e.0, e.1)).collect();
        if best.0 - lower <= 1e-9 * best.0 {
            break;
        }
        cells = keep
            .iter()
            .flat_map(|&(a, b)| {
                let m = 0.5 * (a + b);
                [(a, m), (m, b)]
            })
            .collect();
    }
    GapBounds {
        lower: lower.min(best.0),
        upper: best.0,
        argmin_c: best.1 - 0.5,
    }
}

/// Certifies that no solution stays within `kappa delta^2` of the EXM
/// pseudosolution with maximum error `delta^2` on `[0, T]`.
pub fn replicate_exm_counterexample(delta: f64, kappa: f64, horizon: f64) -> Result<Report> {
    if !(kappa > 0.0) {
        return Err(Error::Argument(format!("kappa must be positive, got {kappa}")));
    }
    if !(delta > 0.0 && delta < 1.0f64.min(1.0 / kappa)) {
        return Err(Error::Argument(format!(
            "delta must lie in (0, min(1, 1/kappa)), got {delta}"
        )));
    }
    if !(horizon >= 10.0 / delta) {
        return Err(Error::Argument(format!(
            "horizon must be at least 10/delta = {}, got {horizon}",
            10.0 / delta
        )));
    }
    let mut report = Report::new("exm-counter");
    report.param("delta", delta);
    report.param("kappa", kappa);
    report.param("horizon", horizon);
    let mut times = linspace(0.0, horizon, 4001);
    let ratio = (horizon / 1e-3).powf(1.0 / 3999.0);
    times.extend((0..4000).map(|j| 1e-3 * ratio.powi(j)));
    times.retain(|t| *t <= horizon);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let y = exm_pseudosolution(delta, &times)?;
    let ys: Vec<f64> = y.states().iter().map(|v| v[0]).collect();
    let gap = exm_gap_bounds(&times, &ys);
    let sigma = y.sigma;
    let tail = delta * (delta * horizon).tanh();

    report
        .checks
        .push(Check::new("sigma", sigma, "<=", delta * delta * (1.0 + 1e-12)));
    report
        .checks
        .push(Check::new("min_gap_vs_c_half", gap.lower, ">=", tail - 1e-12));
    report
        .checks
        .push(Check::new("min_gap_vs_kappa_sigma", gap.lower, ">", kappa * sigma));
    report.param("min_gap_lower", gap.lower);
    report.param("min_gap_upper", gap.upper);
    report.param("argmin_c", gap.argmin_c);
    report.param("asymptotic_gap", delta);
    report.param("kappa_certified", gap.lower / sigma);
    report.notes.push(format!(
        "for every kappa < {} no solution with c in [-1/2, 1/2] stays within kappa*sigma of y on [0, {horizon}]",
        gap.lower / sigma
    ));
    report
        .notes
        .push("c < -1/2 blows up in finite time; c > 1/2 already has |x(0) - y(0)| > 1".into());
    report.outcome = if report.check("min_gap_vs_kappa_sigma").is_some_and(|c| c.passed) {
        Outcome::FailureCertified
    } else {
        Outcome::Inconclusive
    };

    let stride = (times.len() / 2000).max(1);
    let sub: Vec<f64> = times.iter().step_by(stride).copied().collect();
    let ysub = exm_pseudosolution(delta, &sub)?;
    report.artifacts.push(Artifact {
        name: "pseudosolution.csv".into(),
        contents: csv_of(|w| ysub.write_csv(w))?,
    });
    let x = |g: f64, t: f64| -0.5 + g / (g * t + 1.0);
    let mut sweep_csv = String::from("c,sup_dist\n");
    for c in linspace(-0.5, 0.5, 201) {
        let g = c + 0.5;
        let s = times
            .iter()
            .zip(&ys)
            .map(|(t, y)| (x(g, *t) - y).abs())
            .fold(0.0, f64::max);
        sweep_csv.push_str(&format!("{},{}\n", fmt_f64(c), fmt_f64(s)));
    }
    report.artifacts.push(Artifact {
        name: "gap_sweep.csv".into(),
        contents: sweep_csv,
    });
    Ok(report)
}

/// EXM equation on `[-rho, inf)` through the log-norm certificate.
pub fn replicate_revisited(rho: f64, opts: &ReplicateOptions) -> Result<Report> {
    if !(rho > 0.0 && rho < 0.5) {
        return Err(Error::NotApplicable(format!(
            "rho = {rho}: no delta in (0, 1/2 - rho) is admissible"
        )));
    }
    let delta = 0.5 * (0.5 - rho);
    let sys = exm();
    let region = Region::half_line(Vector::from_element(1, -rho), delta, NormKind::Inf)?;
    let cert = certify_lognorm_region(&sys, &region, &SampleOptions::default())?;
    let mut report = Report::new("revisited");
    report.param("rho", rho);
    report.param("delta", delta);
    // Solutions from x0 >= 1/2 need at least 1/(1/2 - rho) - 1 to reach -rho.
    let horizon = (0.8 * (1.0 / (0.5 - rho) - 1.0)).min(3.0);
    report.param("horizon", horizon);
    let eps0 = cert.eps0;
    let orbit = OrbitOptions {
        dt: opts.dt,
        ..Default::default()
    };
    let runs = sweep(
        opts,
        |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0 = rng.gen_range(0.5..=3.0);
            let amp = eps0 * rng.gen_range(0.1..=1.0);
            perturbed_orbit(&sys, &Vector::from_element(1, x0), horizon, amp, seed, &region, orbit)
        },
        |y| shadow_lognorm(&sys, y, &cert, &region, &opts.shadow),
    )?;
    report.certificate = Some(cert);
    report.finish_runs(runs);
    Ok(report)
}

/// SI system on `Gamma_c`: shadowing runs for `c > 0`; for `c = 0` the
/// escape of the true solution from the near-equilibrium `P_eps`.
pub fn replicate_si(c: f64, epsilon: f64, kappa: f64, horizon: f64, opts: &ReplicateOptions) -> Result<Report> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::Argument(format!("c must lie in [0, 1), got {c}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Argument(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if c > 0.0 {
        si_positive(c, opts)
    } else {
        si_negative(epsilon, kappa, horizon)
    }
}

fn si_positive(c: f64, opts: &ReplicateOptions) -> Result<Report> {
    let delta = 0.25 * c;
    let sys = si();
    let region = Region::simplex_gamma(c, delta, NormKind::Inf)?;
    let cert = certify_lognorm_region(&sys, &region, &SampleOptions::default())?;
    let mut report = Report::new("si");
    report.param("c", c);
    report.param("delta", delta);
    // S + I relaxes to 1 as 1 - (1 - u0) e^{-t}; starting below u_max keeps
    // the orbit inside S + I <= 1 - c until ln((1 - u_max)/c).
    let u_max = 0.375 * (1.0 - c);
    let horizon = (0.8 * ((1.0 - u_max) / c).ln()).min(1.0);
    report.param("horizon", horizon);
    report
        .notes
        .push("orbits of the SI flow converge to (1, 0), outside Gamma_c for c > 0; runs use short horizons".into());
    let eps0 = cert.eps0;
    let orbit = OrbitOptions {
        dt: opts.dt,
        ..Default::default()
    };
    let runs = sweep(
        opts,
        |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u0 = u_max * rng.gen_range(0.2..=1.0);
            let s = rng.gen_range(0.2..=0.8);
            let x0 = Vector::from_vec(vec![s * u0, (1.0 - s) * u0]);
            let amp = eps0 * rng.gen_range(0.1..=1.0);
            perturbed_orbit(&sys, &x0, horizon, amp, seed, &region, orbit)
        },
        |y| shadow_lognorm(&sys, y, &cert, &region, &opts.shadow),
    )?;
    report.certificate = Some(cert);
    report.finish_runs(runs);
    Ok(report)
}

fn si_negative(epsilon: f64, kappa: f64, horizon: f64) -> Result<Report> {
    if !(horizon > 0.0) {
        return Err(Error::Argument(format!("horizon must be positive, got {horizon}")));
    }
    let sys = si();
    let r = epsilon.sqrt();
    let p = Vector::from_vec(vec![1.0 - r, r]);
    let mut report = Report::new("si");
    report.param("c", 0.0);
    report.param("epsilon", epsilon);
    report.param("kappa", kappa);
    report.param("horizon", horizon);

    let grid = linspace(0.0, horizon, 10_001);
    let y = constant_pseudosolution(&sys, &p, &grid, NormKind::Inf)?;
    // h(P_eps) = (eps, -eps) exactly, so P_eps is an equilibrium of the
    // system perturbed by (-eps, eps).
    let h = sys.g(0.0, &p);
    let perturbed = (h[0] - epsilon).abs().max((h[1] + epsilon).abs());
    report
        .checks
        .push(Check::new("perturbed_equilibrium_residual", perturbed, "<=", 1e-15));
    report
        .checks
        .push(Check::new("sigma_minus_eps", (y.sigma - epsilon).abs(), "<=", 1e-15));

    let tol = 1e-12;
    let x = integrate_on_grid(&sys, &p, &grid, tol)?;
    if x.blow_up.is_some() {
        return Err(Error::HypothesisCheck("SI solution not continuable".into()));
    }
    let xt = x.last();
    let dist = NormKind::Inf.vector_norm(&(xt - &p));
    // S + I = 1 on this orbit, so I' = -I^2 and I(t) = sqrt(eps)/(1 + sqrt(eps) t).
    let i_closed = r / (1.0 + r * horizon);
    let dist_closed = (r - i_closed).abs().max(((1.0 - i_closed) - (1.0 - r)).abs());
    report.param("distance_numeric", dist);
    report.param("distance_closed_form", dist_closed);
    report.checks.push(Check::new(
        "numeric_vs_closed_form",
        (dist - dist_closed).abs(),
        "<=",
        1e-9,
    ));
    report
        .checks
        .push(Check::new("escape_vs_half_sqrt_eps", dist_closed, ">=", 0.5 * r));
    report
        .checks
        .push(Check::new("escape_vs_kappa_eps", dist_closed, ">", kappa * epsilon));

    let increments: Vec<f64> = x.states.windows(2).map(|w| w[1][1] - w[0][1]).collect();
    let max_increase = increments.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    report
        .checks
        .push(Check::new("lyapunov_max_increase_of_I", max_increase, "<=", 1e-9));
    let strictly = x
        .states
        .windows(2)
        .zip(&increments)
        .filter(|(w, _)| w[0][0] < 1.0 && w[0][1] > 0.0)
        .all(|(_, d)| *d < 0.0);
    report.checks.push(Check::new(
        "strict_decrease_while_s_below_1",
        if strictly { 1.0 } else { 0.0 },
        ">=",
        1.0,
    ));
    let dist_e = |v: &Vector| v[1].abs().min((1.0 - v[0]).abs());
    report.param("distance_to_E_initial", dist_e(&p));
    report.param("distance_to_E_terminal", dist_e(xt));
    report
        .checks
        .push(Check::new("approach_to_E", dist_e(xt), "<", dist_e(&p)));
    report.param("kappa_certified", dist_closed / epsilon);
    report.notes.push(format!(
        "for every kappa < {} the true solution through P_eps leaves the kappa*eps tube by t = {horizon}",
        dist_closed / epsilon
    ));

    report.outcome = if report.checks.iter().all(|c| c.passed) {
        Outcome::FailureCertified
    } else {
        Outcome::Inconclusive
    };
    let stride = 10;
    let sub = crate::systems::Trajectory::new(
        x.grid.iter().step_by(stride).copied().collect(),
        x.states.iter().step_by(stride).cloned().collect(),
    )?;
    report.artifacts.push(Artifact {
        name: "trajectory.csv".into(),
        contents: csv_of(|w| sub.write_csv(w))?,
    });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ReplicateOptions {
        ReplicateOptions {
            runs: 4,
            ..Default::default()
        }
    }

    #[test]
    fn exm_positive_rho_03() {
        let r = replicate_exm_positive(0.3, &small()).unwrap();
        assert_eq!(r.outcome, Outcome::Passed);
        let c = r.certificate.as_ref().unwrap();
        assert!((c.kappa - 5.0).abs() < 1e-9 && (c.eps0 - 0.02).abs() < 1e-12);
        assert_eq!(r.runs.len(), 4);
        assert!(r.runs.iter().all(|run| run.sigma <= c.eps0));
    }

    #[test]
    fn exm_positive_boundary() {
        assert!(matches!(
            replicate_exm_positive(0.5, &small()),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn revisited_rho_03() {
        let r = replicate_revisited(0.3, &small()).unwrap();
        assert_eq!(r.outcome, Outcome::Passed);
        let c = r.certificate.as_ref().unwrap();
        assert!((c.assumptions.m.unwrap() - 0.2).abs() < 1e-15);
        assert!((c.kappa - 5.0).abs() < 1e-12);
        assert!(replicate_revisited(0.5, &small()).is_err());
    }

    #[test]
    fn revisited_rho_045() {
        let r = replicate_revisited(0.45, &small()).unwrap();
        assert_eq!(r.outcome, Outcome::Passed);
        let c = r.certificate.as_ref().unwrap();
        assert!((c.assumptions.m.unwrap() - 0.05).abs() < 1e-12);
        assert!((c.kappa - 20.0).abs() < 1e-9);
    }

    #[test]
    fn exm_counter_small_kappa() {
        let r = replicate_exm_counterexample(0.05, 4.0, 200.0).unwrap();
        assert_eq!(r.outcome, Outcome::FailureCertified);
        let lower = r.parameters["min_gap_lower"];
        let upper = r.parameters["min_gap_upper"];
        assert!(lower <= upper && upper - lower < 1e-6);
        assert!(lower > 0.01);
        assert!(replicate_exm_counterexample(0.5, 4.0, 200.0).is_err());
        assert!(replicate_exm_counterexample(0.05, 4.0, 100.0).is_err());
    }

    #[test]
    fn gap_bounds_match_direct_scan() {
        let delta: f64 = 0.05;
        let times = linspace(0.0, 200.0, 2001);
        let ys: Vec<f64> = times.iter().map(|t| -0.5 + delta * (delta * t).tanh()).collect();
        let gb = exm_gap_bounds(&times, &ys);
        let direct = linspace(0.0, 1.0, 20_001)
            .into_iter()
            .map(|g| {
                times
                    .iter()
                    .zip(&ys)
                    .map(|(t, y)| (-0.5 + g / (g * t + 1.0) - y).abs())
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(gb.lower <= direct + 1e-12);
        assert!(direct - gb.lower < 1e-5);
    }

    #[test]
    fn si_negative_certified() {
        let r = replicate_si(0.0, 1e-4, 40.0, 100.0, &small()).unwrap();
        assert_eq!(r.outcome, Outcome::FailureCertified, "{:#?}", r.checks);
        assert!(r.parameters["kappa_certified"] >= 49.0);
    }

    #[test]
    fn si_positive_runs() {
        let r = replicate_si(0.2, 1e-4, 40.0, 100.0, &small()).unwrap();
        assert_eq!(r.outcome, Outcome::Passed);
        let c = r.certificate.as_ref().unwrap();
        assert!((c.assumptions.m.unwrap() - 0.1).abs() < 1e-15);
        assert!(replicate_si(1.0, 1e-4, 40.0, 100.0, &small()).is_err());
    }

    #[test]
    fn report_directory() {
        let r = replicate_si(0.0, 1e-4, 40.0, 100.0, &small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        r.write_dir(dir.path(), false).unwrap();
        let summary = fs::read_to_string(dir.path().join("summary.toml")).unwrap();
        assert!(summary.contains("outcome = \"failure_certified\""));
        assert!(dir.path().join("trajectory.csv").exists());
        let r = replicate_revisited(0.3, &small()).unwrap();
        r.write_dir(dir.path(), true).unwrap();
        assert!(dir.path().join("certificate.json").exists());
        assert!(dir.path().join("shadow_00.csv").exists());
    }
}
