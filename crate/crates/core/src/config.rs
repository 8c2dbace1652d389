//! Declarative run configuration (TOML) and its translation into library
//! objects.
//!
//! ```toml
//! seed = 7
//! norm = "inf"
//!
//! [system]
//! name = "exm"
//!
//! [region]
//! shape = "halfline"
//! lower = [-0.3]
//! delta = 0.1
//!
//! [constants]
//! m = 0.2
//!
//! [pseudo]
//! kind = "perturbed"
//! x0 = [1.0]
//! horizon = 3.0
//! amplitude = 0.02
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::{matrix_from_rows, NormKind, Vector};
use crate::linear_dynamics::{spectral_dichotomy, DichotomyData, DichotomyKind, LinearSystem, Projection};
use crate::numerics::linspace;
use crate::pseudo::{
    constant_pseudosolution, exm_pseudosolution, measure, perturbed_orbit, trig_pseudosolution, OrbitOptions,
    PseudoSolution,
};
use crate::region::{Region, Shape};
use crate::shadow::ShadowOptions;
use crate::systems::{registry, Monomial, OdeSystem, Polynomial, RegistryParams, Trajectory};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "SHADOWLAB_SEED";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_norm")]
    pub norm: NormKind,
    pub system: SystemConfig,
    pub region: Option<RegionConfig>,
    #[serde(default)]
    pub constants: ConstantsConfig,
    pub dichotomy: Option<DichotomyConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    pub pseudo: Option<PseudoConfig>,
    /// Directory the config was read from; relative paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
    #[serde(skip)]
    source: String,
}

fn default_norm() -> NormKind {
    NormKind::Inf
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// Row-major linear part for `linear_poly`.
    pub linear: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub terms: Vec<Monomial>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub shape: String,
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub c: Option<f64>,
    #[serde(default)]
    pub delta: f64,
    pub extent: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub n: Option<f64>,
    pub lambda: Option<f64>,
    pub lipschitz: Option<f64>,
    pub growth: Option<Vec<f64>>,
    pub m: Option<f64>,
    pub delta: Option<f64>,
    pub rho: Option<f64>,
    pub kind: Option<DichotomyKind>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DichotomyConfig {
    #[serde(default = "default_kind")]
    pub kind: DichotomyKind,
    /// Row-major constant projection; omitted for contractions/expansions
    /// or when `spectral = true`.
    pub projection: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub spectral: bool,
    pub n: Option<f64>,
    pub lambda: Option<f64>,
    /// Verification grid `[0, grid_end]` with `grid_points` points.
    pub grid_end: Option<f64>,
    pub grid_points: Option<usize>,
}

fn default_kind() -> DichotomyKind {
    DichotomyKind::Dichotomy
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_check_tol")]
    pub check_tol: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_tol() -> f64 {
    1e-12
}
fn default_max_iter() -> usize {
    500
}
fn default_check_tol() -> f64 {
    1e-6
}
fn default_dt() -> f64 {
    0.01
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            check_tol: default_check_tol(),
            dt: default_dt(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudoConfig {
    /// `perturbed`, `trig`, `exm`, `constant` or `file`.
    pub kind: String,
    pub x0: Option<Vec<f64>>,
    pub horizon: Option<f64>,
    pub amplitude: Option<f64>,
    pub max_freq: Option<f64>,
    pub delta: Option<f64>,
    /// CSV with header `t,y1..yn`; derivatives come from finite differences.
    pub file: Option<PathBuf>,
}

/// Parses a config, mapping syntax and schema errors to `line:column`.
pub fn parse(source: &str) -> Result<Config> {
    let mut cfg: Config = toml::from_str(source).map_err(|e| {
        let location = e
            .span()
            .map(|s| {
                let (line, col) = line_col(source, s.start);
                format!("line {line}, column {col}: ")
            })
            .unwrap_or_default();
        Error::Config(format!("{location}{}", e.message().trim()))
    })?;
    cfg.source = source.to_string();
    if let Ok(v) = std::env::var(SEED_ENV) {
        cfg.seed = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?;
    }
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<Config> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(cfg)
}

fn line_col(source: &str, offset: usize) -> (usize, usize) {
    let before = &source[..offset.min(source.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

impl Config {
    /// Line of `key = ...` inside `[section]`, for semantic diagnostics.
    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        let mut current = String::new();
        for (i, raw) in self.source.lines().enumerate() {
            let line = raw.trim();
            if line.starts_with('[') {
                current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
                continue;
            }
            if current == section && line.split('=').next().is_some_and(|k| k.trim() == key) {
                return Some(i + 1);
            }
        }
        None
    }

    fn err(&self, section: &str, key: &str, msg: impl std::fmt::Display) -> Error {
        match self.line_of(section, key) {
            Some(l) => Error::Config(format!("line {l}: [{section}] {key}: {msg}")),
            None => Error::Config(format!("[{section}] {key}: {msg}")),
        }
    }

    pub fn system(&self) -> Result<OdeSystem> {
        let s = &self.system;
        let linear = s
            .linear
            .as_ref()
            .map(|rows| matrix_from_rows(rows))
            .transpose()
            .map_err(|e| self.err("system", "linear", e))?;
        let params = RegistryParams {
            a: s.a,
            b: s.b,
            linear,
            poly: Some(Polynomial { terms: s.terms.clone() }),
        };
        registry(&s.name, &params).map_err(|e| self.err("system", "name", e))
    }

    pub fn region(&self) -> Result<Region> {
        let r = self
            .region
            .as_ref()
            .ok_or_else(|| Error::Config("missing [region] section".into()))?;
        let vec_of = |key: &str, v: &Option<Vec<f64>>| -> Result<Vector> {
            v.as_ref()
                .map(|x| Vector::from_row_slice(x))
                .ok_or_else(|| self.err("region", key, "required for this shape"))
        };
        let shape = match r.shape.as_str() {
            "ball" => Shape::Ball {
                center: vec_of("center", &r.center)?,
                radius: r
                    .radius
                    .ok_or_else(|| self.err("region", "radius", "required for a ball"))?,
            },
            "box" => Shape::Box {
                lower: vec_of("lower", &r.lower)?,
                upper: vec_of("upper", &r.upper)?,
            },
            "halfline" => Shape::HalfLine {
                lower: vec_of("lower", &r.lower)?,
            },
            "simplex_gamma" => Shape::SimplexGamma {
                c: r.c
                    .ok_or_else(|| self.err("region", "c", "required for simplex_gamma"))?,
            },
            "whole" => {
                let dim = self.system()?.dim;
                return Ok(Region::whole_space(dim, self.norm));
            }
            other => return Err(self.err("region", "shape", format!("unknown shape `{other}`"))),
        };
        let region = Region::new(shape, r.delta, self.norm).map_err(|e| self.err("region", "shape", e))?;
        Ok(match r.extent {
            Some(e) => region.with_extent(e),
            None => region,
        })
    }

    pub fn shadow_options(&self) -> ShadowOptions {
        ShadowOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            check_tol: self.solver.check_tol,
        }
    }

    /// Dichotomy data for the linear part of the configured system.
    pub fn dichotomy(&self, linear: &LinearSystem) -> Result<DichotomyData> {
        let d = self
            .dichotomy
            .as_ref()
            .ok_or_else(|| Error::Config("missing [dichotomy] section".into()))?;
        let dim = linear.dim();
        if d.spectral {
            let LinearSystem::Constant(a) = linear else {
                return Err(self.err("dichotomy", "spectral", "needs a constant linear part"));
            };
            return spectral_dichotomy(a, self.norm);
        }
        let n =
            d.n.or(self.constants.n)
                .ok_or_else(|| self.err("dichotomy", "n", "dichotomy bound N is required"))?;
        let lambda = d
            .lambda
            .or(self.constants.lambda)
            .ok_or_else(|| self.err("dichotomy", "lambda", "dichotomy rate is required"))?;
        let result = match d.kind {
            DichotomyKind::Contraction => DichotomyData::contraction(dim, n, lambda),
            DichotomyKind::Expansion => DichotomyData::expansion(dim, n, lambda),
            DichotomyKind::Dichotomy => {
                let rows = d
                    .projection
                    .as_ref()
                    .ok_or_else(|| self.err("dichotomy", "projection", "required for a general dichotomy"))?;
                let p = matrix_from_rows(rows).map_err(|e| self.err("dichotomy", "projection", e))?;
                DichotomyData::new(Projection::Constant(p), n, lambda, d.kind)
            }
        };
        result.map_err(|e| self.err("dichotomy", "kind", e))
    }

    pub fn verification_grid(&self) -> Vec<f64> {
        let d = self.dichotomy.as_ref();
        let end = d.and_then(|d| d.grid_end).unwrap_or(10.0);
        let points = d.and_then(|d| d.grid_points).unwrap_or(41);
        linspace(0.0, end, points.max(2))
    }

    /// Builds the configured pseudosolution for `sys`.
    pub fn pseudo(&self, sys: &OdeSystem) -> Result<PseudoSolution> {
        let p = self
            .pseudo
            .as_ref()
            .ok_or_else(|| Error::Config("missing [pseudo] section".into()))?;
        let need = |key: &str, v: Option<f64>| v.ok_or_else(|| self.err("pseudo", key, "required for this kind"));
        let x0 = || -> Result<Vector> {
            let v =
                p.x0.as_ref()
                    .ok_or_else(|| self.err("pseudo", "x0", "required for this kind"))?;
            if v.len() != sys.dim {
                return Err(self.err("pseudo", "x0", format!("expected {} entries", sys.dim)));
            }
            Ok(Vector::from_row_slice(v))
        };
        let horizon = || need("horizon", p.horizon);
        let grid = || -> Result<Vec<f64>> {
            let h = horizon()?;
            let steps = (h / self.solver.dt).ceil().max(4.0) as usize;
            Ok(linspace(0.0, h, steps + 1))
        };
        let ps = match p.kind.as_str() {
            "perturbed" => {
                let region = match &self.region {
                    Some(_) => self.region()?,
                    None => Region::whole_space(sys.dim, self.norm),
                };
                let opts = OrbitOptions {
                    dt: self.solver.dt,
                    tol: 1e-10,
                    max_freq: p.max_freq.unwrap_or(2.0),
                };
                perturbed_orbit(
                    sys,
                    &x0()?,
                    horizon()?,
                    need("amplitude", p.amplitude)?,
                    self.seed,
                    &region,
                    opts,
                )?
            }
            "trig" => trig_pseudosolution(
                sys,
                &x0()?,
                need("amplitude", p.amplitude)?,
                p.max_freq.unwrap_or(1.0),
                &grid()?,
                self.seed,
                self.norm,
            )?,
            "exm" => exm_pseudosolution(need("delta", p.delta)?, &grid()?)?,
            "constant" => constant_pseudosolution(sys, &x0()?, &grid()?, self.norm)?,
            "file" => {
                let file = p
                    .file
                    .as_ref()
                    .ok_or_else(|| self.err("pseudo", "file", "required for kind = \"file\""))?;
                let path = self.base_dir.join(file);
                let traj = read_trajectory_csv(&path)?;
                measure(traj, None, sys, self.norm)?
            }
            other => return Err(self.err("pseudo", "kind", format!("unknown kind `{other}`"))),
        };
        Ok(ps)
    }
}

/// Reads a CSV with header `t,y1..yn`.
pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut grid = Vec::new();
    let mut states = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if vals.len() < 2 {
            return Err(Error::Data(format!(
                "{}:{}: expected t and at least one state",
                path.display(),
                i + 1
            )));
        }
        grid.push(vals[0]);
        states.push(Vector::from_row_slice(&vals[1..]));
    }
    Trajectory::new(grid, states)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
seed = 3
norm = "inf"

[system]
name = "exm"

[region]
shape = "halfline"
lower = [-0.3]
delta = 0.1

[constants]
m = 0.2

[pseudo]
kind = "perturbed"
x0 = [1.0]
horizon = 2.0
amplitude = 0.01
"#;

    #[test]
    fn parses_example() {
        let cfg = parse(EXAMPLE).unwrap();
        assert_eq!(cfg.norm, NormKind::Inf);
        assert_eq!(cfg.system.name, "exm");
        let region = cfg.region().unwrap();
        assert!(region.contains(&Vector::from_element(1, -0.3)));
        let sys = cfg.system().unwrap();
        let y = cfg.pseudo(&sys).unwrap();
        assert!(y.sigma <= 0.01);
    }

    #[test]
    fn syntax_error_has_line() {
        let src = "seed = 1\n[system\nname = \"exm\"\n";
        let e = parse(src).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn unknown_field_has_line() {
        let src = "[system]\nname = \"exm\"\nbogus = 1\n";
        let e = parse(src).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
    }

    #[test]
    fn semantic_error_has_line() {
        let src = "seed = 1\n\n[system]\nname = \"lorenz\"\n";
        let cfg = parse(src).unwrap();
        let e = cfg.system().unwrap_err().to_string();
        assert!(e.contains("line 4") && e.contains("lorenz"), "{e}");
    }

    #[test]
    fn linear_poly_and_dichotomy() {
        let src = r#"
[system]
name = "linear_poly"
linear = [[-1.0, 0.0], [0.0, 1.0]]
[[system.terms]]
component = 0
coeff = 0.1
powers = [2, 0]

[dichotomy]
kind = "dichotomy"
projection = [[1.0, 0.0], [0.0, 0.0]]
n = 1.0
lambda = 1.0
"#;
        let cfg = parse(src).unwrap();
        let sys = cfg.system().unwrap();
        let g = sys.g(0.0, &Vector::from_vec(vec![2.0, 1.0]));
        assert!((g[0] - (-2.0 + 0.4)).abs() < 1e-15 && (g[1] - 1.0).abs() < 1e-15);
        let d = cfg.dichotomy(&sys.split().unwrap().linear).unwrap();
        assert_eq!(d.kind, DichotomyKind::Dichotomy);
    }
}
