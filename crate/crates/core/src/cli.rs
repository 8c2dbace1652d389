//! Command-line front end. [`run`] returns the process exit code:
//! 0 on success (including a certified negative replication), 1 when a
//! check fails or a certificate does not apply, 2 on errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::certify::{
    certify_ball, certify_gen_perturb, certify_lognorm, certify_lognorm_region, certify_t1, certify_t2,
    estimate_lipschitz, Certificate, GrowthSpec, SampleOptions,
};
use crate::config::{self, Config, SEED_ENV};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, NormKind};
use crate::linear_dynamics::{verify_dichotomy, DichotomyKind};
use crate::lognorm::mu_closed;
use crate::pseudo::PseudoSolution;
use crate::replicate::{
    replicate_exm_counterexample, replicate_exm_positive, replicate_revisited, replicate_si, ReplicateOptions,
};
use crate::shadow::{relocate, shadow_dichotomy, shadow_lognorm, ShadowResult};
use crate::systems::{fmt_f64, OdeSystem};

#[derive(Debug, Parser)]
#[command(
    name = "shadowlab",
    version,
    about = "Shadowing certificates and shadowing solvers for ODEs"
)]
struct Cli {
    /// Omit generation timestamps so outputs are byte-for-byte reproducible.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Logarithmic norm of a matrix read from CSV (row-major).
    Lognorm {
        matrix: PathBuf,
        #[arg(long, value_parser = parse_norm)]
        norm: Option<NormKind>,
    },
    /// Shadowing constants (eps0, kappa) as JSON.
    Certify {
        #[arg(long, value_enum)]
        route: CertifyRoute,
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Lipschitz constant of the nonlinear part.
        #[arg(long = "l")]
        lipschitz: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        m: Option<f64>,
        #[arg(long)]
        rho: Option<f64>,
        /// Growth coefficients `L1,L2,...` of `|f_x(t, x)| <= L1 + L2 |x| + ...`.
        #[arg(long, value_delimiter = ',')]
        growth: Option<Vec<f64>>,
        #[arg(long, value_parser = parse_kind)]
        kind: Option<DichotomyKind>,
    },
    /// Shadow the configured pseudosolution.
    Shadow {
        #[arg(long, value_enum)]
        route: ShadowRoute,
        config: PathBuf,
        /// Directory for the solution CSV, certificate and summary.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Move the configured pseudosolution into `B_rho(0)` keeping its error function.
    Relocate {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduce one of the worked examples.
    Replicate {
        #[arg(value_enum)]
        experiment: Experiment,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the dichotomy inequalities of the configured linear part on a grid.
    VerifyDichotomy { config: PathBuf },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CertifyRoute {
    T1,
    T2,
    Gen,
    Lognorm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ShadowRoute {
    Dichotomy,
    Lognorm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Experiment {
    Exm,
    ExmCounter,
    Revisited,
    Si,
}

fn parse_norm(s: &str) -> std::result::Result<NormKind, String> {
    match s {
        "inf" => Ok(NormKind::Inf),
        "one" | "1" => Ok(NormKind::One),
        "two" | "2" => Ok(NormKind::Two),
        _ => Err(format!("unknown norm `{s}` (expected inf, one or two)")),
    }
}

fn parse_kind(s: &str) -> std::result::Result<DichotomyKind, String> {
    match s {
        "dichotomy" => Ok(DichotomyKind::Dichotomy),
        "contraction" => Ok(DichotomyKind::Contraction),
        "expansion" => Ok(DichotomyKind::Expansion),
        _ => Err(format!(
            "unknown kind `{s}` (expected dichotomy, contraction or expansion)"
        )),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e @ (Error::NotApplicable(_) | Error::HypothesisViolated { .. })) => {
            eprintln!("not applicable: {e}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let stamp = !cli.no_timestamp;
    match cli.command {
        Command::Lognorm { matrix, norm } => cmd_lognorm(&matrix, norm),
        Command::Certify {
            route,
            config,
            n,
            lambda,
            lipschitz,
            delta,
            m,
            rho,
            growth,
            kind,
        } => {
            let cfg = config.as_deref().map(config::load).transpose()?;
            let flags = CertifyFlags {
                n,
                lambda,
                lipschitz,
                delta,
                m,
                rho,
                growth,
                kind,
            };
            let cert = certify_cmd(route, cfg.as_ref(), flags)?;
            emit(&format!("{}\n", cert.to_json()?));
            Ok(0)
        }
        Command::Shadow { route, config, out } => cmd_shadow(route, &config::load(&config)?, out.as_deref(), stamp),
        Command::Relocate { config, out } => cmd_relocate(&config::load(&config)?, out.as_deref()),
        Command::Replicate {
            experiment,
            rho,
            delta,
            kappa,
            horizon,
            c,
            epsilon,
            runs,
            seed,
            dt,
            out,
        } => {
            let defaults = ReplicateOptions::default();
            let opts = ReplicateOptions {
                runs: runs.unwrap_or(defaults.runs),
                seed: resolve_seed(seed)?,
                dt: dt.unwrap_or(defaults.dt),
                shadow: defaults.shadow,
            };
            let report = match experiment {
                Experiment::Exm => replicate_exm_positive(rho.unwrap_or(0.4), &opts)?,
                Experiment::ExmCounter => {
                    let delta = delta.unwrap_or(0.01);
                    replicate_exm_counterexample(delta, kappa.unwrap_or(10.0), horizon.unwrap_or(10.0 / delta))?
                }
                Experiment::Revisited => replicate_revisited(rho.unwrap_or(0.3), &opts)?,
                Experiment::Si => {
                    let eps = epsilon.unwrap_or(1e-4);
                    replicate_si(
                        c.unwrap_or(0.2),
                        eps,
                        kappa.unwrap_or(0.5 / eps.sqrt() - 1.0),
                        horizon.unwrap_or(100.0),
                        &opts,
                    )?
                }
            };
            emit(&report.summary_toml(stamp)?);
            if let Some(dir) = out {
                report.write_dir(&dir, stamp)?;
            }
            Ok(report.exit_code())
        }
        Command::VerifyDichotomy { config } => cmd_verify(&config::load(&config)?),
    }
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

/// Seed precedence: command-line flag, then the environment, then 0.
fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Argument(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

/// Reads a row-major matrix; blank lines and `#` comments are skipped.
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            return Err(Error::Data(format!(
                "{}:{}: expected {} columns, found {}",
                path.display(),
                i + 1,
                rows[0].len(),
                row.len()
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no matrix rows", path.display())));
    }
    crate::linalg::matrix_from_rows(&rows)
}

fn cmd_lognorm(path: &Path, norm: Option<NormKind>) -> Result<i32> {
    let a = read_matrix_csv(path)?;
    match norm {
        Some(k) => emit(&format!("{}\n", fmt_f64(mu_closed(&a, k)?))),
        None => {
            for k in NormKind::ALL {
                emit(&format!("{} {}\n", k.as_str(), fmt_f64(mu_closed(&a, k)?)));
            }
        }
    }
    Ok(0)
}

struct CertifyFlags {
    n: Option<f64>,
    lambda: Option<f64>,
    lipschitz: Option<f64>,
    delta: Option<f64>,
    m: Option<f64>,
    rho: Option<f64>,
    growth: Option<Vec<f64>>,
    kind: Option<DichotomyKind>,
}

fn sample_options(cfg: &Config) -> SampleOptions {
    SampleOptions {
        samples: cfg.constants.samples.unwrap_or(SampleOptions::default().samples),
        seed: cfg.seed,
        ..Default::default()
    }
}

fn certify_cmd(route: CertifyRoute, cfg: Option<&Config>, f: CertifyFlags) -> Result<Certificate> {
    let constants = cfg.map(|c| c.constants.clone()).unwrap_or_default();
    let dich = cfg.and_then(|c| c.dichotomy.as_ref());
    let need = |name: &str, v: Option<f64>| v.ok_or_else(|| Error::Argument(format!("missing constant `{name}`")));
    let n = f.n.or(constants.n).or(dich.and_then(|d| d.n));
    let lambda = f.lambda.or(constants.lambda).or(dich.and_then(|d| d.lambda));
    let kind = f.kind.or(constants.kind).or(dich.map(|d| d.kind));
    let delta = f.delta.or(constants.delta);
    let rho = f.rho.or(constants.rho);
    match route {
        CertifyRoute::T1 | CertifyRoute::T2 => {
            let (n, lambda) = (need("n", n)?, need("lambda", lambda)?);
            let kind = kind.unwrap_or(DichotomyKind::Dichotomy);
            let lipschitz = f.lipschitz.or(constants.lipschitz);
            match (lipschitz, cfg, rho) {
                (None, Some(cfg), Some(rho)) => {
                    // L estimated on the ball; the kind decides between the two bounds.
                    if matches!(route, CertifyRoute::T2) && kind == DichotomyKind::Dichotomy {
                        return Err(Error::Argument("route t2 needs a contraction or expansion".into()));
                    }
                    if matches!(route, CertifyRoute::T1) && kind != DichotomyKind::Dichotomy {
                        return Err(Error::Argument("route t1 needs kind = dichotomy".into()));
                    }
                    let sys = cfg.system()?;
                    certify_ball(
                        &sys,
                        n,
                        lambda,
                        kind,
                        rho,
                        need("delta", delta)?,
                        cfg.norm,
                        &sample_options(cfg),
                    )
                }
                (Some(l), _, _) => {
                    let delta = need("delta", delta)?;
                    match route {
                        CertifyRoute::T1 => certify_t1(n, lambda, l, delta),
                        _ => certify_t2(n, lambda, l, delta, kind),
                    }
                }
                _ => Err(Error::Argument(
                    "missing constant `l` (or a config with a system and `rho` to estimate it)".into(),
                )),
            }
        }
        CertifyRoute::Gen => {
            let coeffs = f
                .growth
                .or(constants.growth)
                .ok_or_else(|| Error::Argument("missing constant `growth`".into()))?;
            let growth = GrowthSpec::new(coeffs)?;
            certify_gen_perturb(
                need("n", n)?,
                need("lambda", lambda)?,
                &growth,
                need("rho", rho)?,
                kind.unwrap_or(DichotomyKind::Dichotomy),
            )
        }
        CertifyRoute::Lognorm => {
            if let Some(m) = f.m.or(constants.m) {
                let delta = match (delta, cfg.and_then(|c| c.region.as_ref())) {
                    (Some(d), _) => d,
                    (None, Some(r)) => r.delta,
                    (None, None) => return Err(Error::Argument("missing constant `delta`".into())),
                };
                return certify_lognorm(m, delta);
            }
            let cfg = cfg.ok_or_else(|| Error::Argument("missing constant `m` (or a config to estimate it)".into()))?;
            let sys = cfg.system()?;
            let mut region = cfg.region()?;
            if let Some(d) = f.delta {
                region = region.with_delta(d);
            }
            certify_lognorm_region(&sys, &region, &sample_options(cfg))
        }
    }
}

/// Certificate for the dichotomy route: T2 for contractions and expansions,
/// T1 otherwise; `L` is taken from the config or estimated on the region.
fn dichotomy_certificate(
    cfg: &Config,
    sys: &OdeSystem,
    kind: DichotomyKind,
    n: f64,
    lambda: f64,
) -> Result<Certificate> {
    let delta = cfg
        .constants
        .delta
        .ok_or_else(|| Error::Config("[constants] delta is required for the dichotomy route".into()))?;
    let l = match cfg.constants.lipschitz {
        Some(l) => l,
        None => estimate_lipschitz(sys, &cfg.region()?, cfg.norm, &sample_options(cfg))?.value,
    };
    match kind {
        DichotomyKind::Dichotomy => certify_t1(n, lambda, l, delta),
        _ => certify_t2(n, lambda, l, delta, kind),
    }
}

fn write_outputs(dir: &Path, y: &PseudoSolution, r: &ShadowResult, cert: &Certificate) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut buf = Vec::new();
    r.write_csv(&mut buf)?;
    fs::write(dir.join("shadow.csv"), buf)?;
    let mut buf = Vec::new();
    y.write_csv(&mut buf)?;
    fs::write(dir.join("pseudo.csv"), buf)?;
    fs::write(dir.join("pseudo.json"), y.sidecar_json()? + "\n")?;
    fs::write(dir.join("certificate.json"), cert.to_json()? + "\n")?;
    Ok(())
}

fn timestamped(mut text: String, stamp: bool) -> Result<String> {
    if stamp {
        let mut v: serde_json::Value = serde_json::from_str(&text)?;
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        if let Some(obj) = v.as_object_mut() {
            obj.insert("generated_unix".into(), json!(secs));
        }
        text = serde_json::to_string_pretty(&v)?;
    }
    Ok(text)
}

fn cmd_shadow(route: ShadowRoute, cfg: &Config, out: Option<&Path>, stamp: bool) -> Result<i32> {
    let sys = cfg.system()?;
    let y = cfg.pseudo(&sys)?;
    let opts = cfg.shadow_options();
    let (result, cert) = match route {
        ShadowRoute::Dichotomy => {
            let split = sys
                .split()
                .ok_or_else(|| Error::Structure("system has no linear/nonlinear split".into()))?;
            let d = cfg.dichotomy(&split.linear)?;
            let cert = dichotomy_certificate(cfg, &sys, d.kind, d.n, d.lambda)?;
            (shadow_dichotomy(&sys, &d, &y, &cert, &opts)?, cert)
        }
        ShadowRoute::Lognorm => {
            let region = cfg.region()?;
            let cert = match cfg.constants.m {
                Some(m) => certify_lognorm(m, region.delta)?,
                None => certify_lognorm_region(&sys, &region, &sample_options(cfg))?,
            };
            (shadow_lognorm(&sys, &y, &cert, &region, &opts)?, cert)
        }
    };
    let summary = timestamped(result.summary_json()?, stamp)?;
    emit(&format!("{summary}\n"));
    if let Some(dir) = out {
        write_outputs(dir, &y, &result, &cert)?;
        fs::write(dir.join("summary.json"), summary + "\n")?;
    }
    Ok(if result.passed { 0 } else { 1 })
}

fn cmd_relocate(cfg: &Config, out: Option<&Path>) -> Result<i32> {
    let sys = cfg.system()?;
    let split = sys
        .split()
        .ok_or_else(|| Error::Structure("system has no linear/nonlinear split".into()))?;
    let d = cfg.dichotomy(&split.linear)?;
    let y = cfg.pseudo(&sys)?;
    let rho = cfg
        .constants
        .rho
        .ok_or_else(|| Error::Config("[constants] rho is required for relocation".into()))?;
    let l = cfg
        .constants
        .lipschitz
        .ok_or_else(|| Error::Config("[constants] lipschitz is required for relocation".into()))?;
    let opts = cfg.shadow_options();
    let r = relocate(&sys, &d, &y, rho, l, &opts)?;
    let passed = r.within_ball && r.error_gap <= opts.check_tol;
    let summary = json!({
        "sigma": y.sigma,
        "epsilon": r.epsilon,
        "rho": rho,
        "sup_norm": r.sup_norm,
        "within_ball": r.within_ball,
        "error_gap": r.error_gap,
        "iterations": r.iterations,
        "ratios": r.ratios,
        "passed": passed,
    });
    emit(&format!("{}\n", serde_json::to_string_pretty(&summary)?));
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut buf = Vec::new();
        r.z.write_csv(&mut buf)?;
        fs::write(dir.join("relocated.csv"), buf)?;
    }
    Ok(if passed { 0 } else { 1 })
}

fn cmd_verify(cfg: &Config) -> Result<i32> {
    let sys = cfg.system()?;
    let split = sys
        .split()
        .ok_or_else(|| Error::Structure("system has no linear/nonlinear split".into()))?;
    let d = cfg.dichotomy(&split.linear)?;
    let grid = cfg.verification_grid();
    let report = verify_dichotomy(&split.linear, &d, &grid, cfg.norm, cfg.solver.check_tol)?;
    emit(&report.to_text());
    Ok(if report.passed { 0 } else { 1 })
}
