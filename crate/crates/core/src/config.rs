//! Instance configuration: a single TOML file describing the technology, the
//! grids, breakthrough distributions, an optional frontier mixture and the
//! verification settings.
//!
//! ```toml
//! lambda = 1.0
//! w = 1.0
//! phi = { kind = "power", exponent = 0.5 }
//! kappa = { kind = "power", exponent = 2.0 }
//! r = 1.0
//!
//! [grid]
//! u_step = 0.0025
//! time_step = 0.05
//! horizon = 20.0
//!
//! [[distributions]]
//! kind = "exponential"
//! rate = 1.0
//! ```
//!
//! Instead of the moral-hazard keys, `[frontiers]` may give `f0` and `f1`
//! directly as piecewise-linear, quadratic or affine frontiers.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::distribution::BreakthroughDistribution;
use crate::error::{Error, Result};
use crate::frontier::{Affine, PiecewiseLinear, Quadratic, SharedFrontier};
use crate::mechanism::TimeGrid;
use crate::mixture::{FrontierDistribution, MixtureOptions};
use crate::numeric::linspace;
use crate::suite::Suite;
use crate::technology::{make_moral_hazard_technology, Curve, MoralHazardPrimitives, PowerTable, Technology};

/// The configuration used when none is given.
pub const DEFAULT_CONFIG: &str = r#"lambda = 1.0
w = 1.0
phi = { kind = "power", exponent = 0.5 }
kappa = { kind = "power", exponent = 2.0 }
r = 1.0

[grid]
u_step = 0.0025
time_step = 0.05
horizon = 20.0

[[distributions]]
name = "exp1"
kind = "exponential"
rate = 1.0

[smoothing]
n_list = [16, 32, 64]
"#;

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    lambda: Option<f64>,
    w: Option<f64>,
    phi: Option<RawCurve>,
    kappa: Option<RawCurve>,
    divergence_factor: Option<f64>,
    frontiers: Option<RawPair>,
    r: Option<f64>,
    grid: Option<RawGrid>,
    distributions: Option<Vec<RawDistribution>>,
    mixture: Option<RawMixture>,
    smoothing: Option<RawSmoothing>,
    verify: Option<RawVerify>,
    output_dir: Option<String>,
}

#[derive(Deserialize, Debug)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RawCurve {
    Power { exponent: f64 },
    Table { xs: Vec<f64>, ys: Vec<f64> },
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawPair {
    f0: RawFrontier,
    f1: RawFrontier,
    /// Drop the conflict-of-interest and dominance requirements.
    #[serde(default)]
    relaxed: bool,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RawFrontier {
    PiecewiseLinear {
        #[serde(default)]
        lo: f64,
        hi: Option<f64>,
        start: f64,
        breaks: Vec<f64>,
        slopes: Vec<f64>,
    },
    Quadratic {
        center: f64,
        curvature: f64,
        level: f64,
        #[serde(default)]
        lo: f64,
        hi: Option<f64>,
    },
    Affine {
        intercept: f64,
        slope: f64,
        #[serde(default)]
        lo: f64,
        hi: Option<f64>,
    },
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    u_step: Option<f64>,
    u_min: Option<f64>,
    u_max: Option<f64>,
    time_step: Option<f64>,
    horizon: Option<f64>,
}

#[derive(Deserialize, Debug)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RawDistribution {
    Exponential { name: Option<String>, rate: f64 },
    Atom { name: Option<String>, at: f64 },
    Rows { name: Option<String>, rows: Vec<[f64; 3]> },
    Csv { name: Option<String>, path: String },
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawMember {
    probability: f64,
    frontier: RawFrontier,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawMixture {
    members: Vec<RawMember>,
    alloc_cap: Option<f64>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawSmoothing {
    n_list: Vec<usize>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    suites: Option<Vec<String>>,
    seed: Option<u64>,
    trials: Option<usize>,
    euler_perturbation: Option<f64>,
}

/// Grids for frontier curves (`u`) and mechanisms (`t`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridConfig {
    pub u_step: f64,
    pub u_min: f64,
    /// Defaults to `u0`.
    pub u_max: Option<f64>,
    pub time: TimeGrid,
}

impl GridConfig {
    /// `u_min, u_min + u_step, ...` up to `u_max` (or `u0`); empty when `u_max < u_min`.
    pub fn u_points(&self, u0: f64) -> Vec<f64> {
        let hi = self.u_max.unwrap_or(u0);
        if !(hi >= self.u_min) {
            return Vec::new();
        }
        let cells = ((hi - self.u_min) / self.u_step + 1e-9).floor() as usize;
        linspace(self.u_min, self.u_min + cells as f64 * self.u_step, cells + 1)
    }
}

/// A named breakthrough distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedDistribution {
    pub name: String,
    pub dist: BreakthroughDistribution,
}

/// A fully validated instance.
#[derive(Clone, Debug)]
pub struct InstanceConfig {
    pub technology: Technology,
    pub grid: GridConfig,
    pub distributions: Vec<NamedDistribution>,
    pub mixture: Option<(FrontierDistribution, MixtureOptions)>,
    pub smoothing_n: Vec<usize>,
    /// Suites run by `verify` when none are named.
    pub suites: Vec<Suite>,
    pub seed: u64,
    /// Overrides every randomized suite's own trial count.
    pub trials: Option<usize>,
    /// Added to `phi0` on one grid cell in the `euler` suite; a nonzero value
    /// makes the suite fail on purpose.
    pub euler_perturbation: f64,
    pub output_dir: PathBuf,
}

impl InstanceConfig {
    pub fn default_instance() -> Result<Self> {
        parse_config(DEFAULT_CONFIG, None)
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be positive and finite, got {v}")))
    }
}

fn curve(key: &str, raw: Option<RawCurve>, default_exponent: f64) -> Result<Curve> {
    match raw {
        None => Ok(Curve::Power { exponent: default_exponent }),
        Some(RawCurve::Power { exponent }) => Ok(Curve::Power { exponent: positive(&format!("{key}.exponent"), exponent)? }),
        Some(RawCurve::Table { xs, ys }) => PowerTable::new(xs, ys)
            .map(Curve::Table)
            .map_err(|e| Error::config(key, e.to_string())),
    }
}

fn frontier(key: &str, raw: &RawFrontier) -> Result<SharedFrontier> {
    let inf = f64::INFINITY;
    let built: Result<SharedFrontier> = match raw.clone() {
        RawFrontier::PiecewiseLinear { lo, hi, start, breaks, slopes } => {
            PiecewiseLinear::new(lo, hi.unwrap_or(inf), start, breaks, slopes).map(|f| Arc::new(f) as SharedFrontier)
        }
        RawFrontier::Quadratic { center, curvature, level, lo, hi } => {
            Quadratic::new(center, curvature, level, lo, hi.unwrap_or(inf)).map(|f| Arc::new(f) as SharedFrontier)
        }
        RawFrontier::Affine { intercept, slope, lo, hi } => {
            Affine::new(intercept, slope, lo, hi.unwrap_or(inf)).map(|f| Arc::new(f) as SharedFrontier)
        }
    };
    built.map_err(|e| Error::config(key, e.to_string()))
}

fn technology(raw: &mut RawConfig) -> Result<Technology> {
    if let Some(pair) = raw.frontiers.take() {
        let set = [
            ("lambda", raw.lambda.is_some()),
            ("w", raw.w.is_some()),
            ("phi", raw.phi.is_some()),
            ("kappa", raw.kappa.is_some()),
            ("divergence_factor", raw.divergence_factor.is_some()),
        ];
        if let Some((key, _)) = set.iter().find(|s| s.1) {
            return Err(Error::config(*key, "cannot be combined with [frontiers]"));
        }
        let f0 = frontier("frontiers.f0", &pair.f0)?;
        let f1 = frontier("frontiers.f1", &pair.f1)?;
        let tech = if pair.relaxed {
            Technology::from_frontiers_relaxed(f0, f1, None)
        } else {
            Technology::from_frontiers(f0, f1)
        };
        return tech.map_err(|e| Error::config("frontiers", e.to_string()));
    }
    let lambda = positive("lambda", raw.lambda.unwrap_or(1.0))?;
    let w = positive("w", raw.w.unwrap_or(1.0))?;
    let phi = curve("phi", raw.phi.take(), 0.5)?;
    let kappa = curve("kappa", raw.kappa.take(), 2.0)?;
    let mut prims = MoralHazardPrimitives::new(lambda, w, phi, kappa);
    if let Some(f) = raw.divergence_factor {
        prims.divergence_factor = positive("divergence_factor", f)?;
    }
    make_moral_hazard_technology(&prims).map_err(|e| Error::config("technology", e.to_string()))
}

fn distribution(i: usize, raw: RawDistribution, base: Option<&Path>) -> Result<NamedDistribution> {
    let key = format!("distributions[{i}]");
    let (name, built) = match raw {
        RawDistribution::Exponential { name, rate } => {
            positive(&format!("{key}.rate"), rate)?;
            (name.unwrap_or_else(|| format!("exp{rate}")), BreakthroughDistribution::exponential(rate))
        }
        RawDistribution::Atom { name, at } => (name.unwrap_or_else(|| format!("atom{at}")), BreakthroughDistribution::atom(at)),
        RawDistribution::Rows { name, rows } => {
            let rows: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r[0], r[1], r[2])).collect();
            (name.unwrap_or_else(|| format!("rows{i}")), BreakthroughDistribution::from_rows(&rows))
        }
        RawDistribution::Csv { name, path } => {
            let Some(base) = base else {
                return Err(Error::config(format!("{key}.path"), "file references need a config file location"));
            };
            let full = base.join(&path);
            let text = std::fs::read_to_string(&full)
                .map_err(|e| Error::config(format!("{key}.path"), format!("{}: {e}", full.display())))?;
            let dist = crate::export::parse_distribution_csv(&text)?;
            (name.unwrap_or(path), Ok(dist))
        }
    };
    let dist = built.map_err(|e| Error::config(key, e.to_string()))?;
    Ok(NamedDistribution { name, dist })
}

/// Parses and validates a configuration. `base` resolves relative file
/// references; without it, file references are rejected.
pub fn parse_config(text: &str, base: Option<&Path>) -> Result<InstanceConfig> {
    let mut raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let technology = technology(&mut raw)?;
    let r = positive("r", raw.r.unwrap_or(1.0))?;
    let g = raw.grid.take().unwrap_or_default();
    let u_step = positive("grid.u_step", g.u_step.unwrap_or(0.0025))?;
    let u_min = g.u_min.unwrap_or(0.0);
    if !(u_min >= 0.0 && u_min.is_finite()) {
        return Err(Error::config("grid.u_min", format!("must be finite and nonnegative, got {u_min}")));
    }
    if let Some(m) = g.u_max {
        if !m.is_finite() {
            return Err(Error::config("grid.u_max", "must be finite"));
        }
    }
    let time_step = positive("grid.time_step", g.time_step.unwrap_or(0.05))?;
    let horizon = positive("grid.horizon", g.horizon.unwrap_or(20.0))?;
    let time = TimeGrid::new(horizon, time_step, r).map_err(|e| Error::config("grid.horizon", e.to_string()))?;
    let grid = GridConfig { u_step, u_min, u_max: g.u_max, time };

    let raw_dists = raw.distributions.take().unwrap_or_else(|| {
        vec![RawDistribution::Exponential {
            name: Some("exp1".into()),
            rate: 1.0,
        }]
    });
    let distributions = raw_dists
        .into_iter()
        .enumerate()
        .map(|(i, d)| distribution(i, d, base))
        .collect::<Result<Vec<_>>>()?;

    let mixture = match raw.mixture.take() {
        None => None,
        Some(m) => {
            let members = m
                .members
                .iter()
                .enumerate()
                .map(|(i, mem)| Ok((frontier(&format!("mixture.members[{i}].frontier"), &mem.frontier)?, mem.probability)))
                .collect::<Result<Vec<_>>>()?;
            let dist = FrontierDistribution::new(members).map_err(|e| Error::config("mixture.members", e.to_string()))?;
            let cap = m.alloc_cap.unwrap_or(f64::INFINITY);
            if !(cap > 0.0) {
                return Err(Error::config("mixture.alloc_cap", format!("must be positive, got {cap}")));
            }
            Some((dist, MixtureOptions { alloc_cap: cap }))
        }
    };

    let smoothing_n = raw.smoothing.take().map_or_else(|| vec![16, 32, 64], |s| s.n_list);
    if smoothing_n.contains(&0) {
        return Err(Error::config("smoothing.n_list", "entries must be positive"));
    }
    let (suites, seed, trials, euler_perturbation) = match raw.verify.take() {
        None => (Vec::new(), 42, None, 0.0),
        Some(v) => (v.suites.unwrap_or_default(), v.seed.unwrap_or(42), v.trials, v.euler_perturbation.unwrap_or(0.0)),
    };
    let suites = suites
        .iter()
        .map(|s| {
            s.parse::<Suite>()
                .map_err(|_| Error::config("verify.suites", format!("unknown suite `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if trials == Some(0) {
        return Err(Error::config("verify.trials", "must be positive"));
    }
    if !euler_perturbation.is_finite() {
        return Err(Error::config("verify.euler_perturbation", "must be finite"));
    }
    Ok(InstanceConfig {
        technology,
        grid,
        distributions,
        mixture,
        smoothing_n,
        suites,
        seed,
        trials,
        euler_perturbation,
        output_dir: PathBuf::from(raw.output_dir.unwrap_or_else(|| "out".into())),
    })
}

/// Reads and parses a configuration file; relative file references resolve
/// against its directory.
pub fn load_config(path: &Path) -> Result<InstanceConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, Some(path.parent().unwrap_or(Path::new("."))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_instance_parses() {
        let cfg = InstanceConfig::default_instance().unwrap();
        assert!((cfg.technology.u0 - 0.5).abs() < 1e-9);
        assert_eq!(cfg.distributions.len(), 1);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.trials, None);
    }

    #[test]
    fn nonpositive_lambda_names_key() {
        let err = parse_config("lambda = -1.0\n", None).unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "lambda"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = parse_config("lambda = 1.0\nw = = 2\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(parse_config("lamda = 1.0\n", None).is_err());
    }

    #[test]
    fn piecewise_linear_pair() {
        let text = r#"
[frontiers]
f0 = { kind = "piecewise-linear", start = 0.0, breaks = [0.3, 0.6, 1.0], slopes = [1.0, 0.4, -0.5, -3.0] }
f1 = { kind = "piecewise-linear", start = 2.0, breaks = [0.1, 0.4, 0.8], slopes = [0.5, -0.2, -0.8, -2.5] }
"#;
        let cfg = parse_config(text, None).unwrap();
        assert!((cfg.technology.u0 - 0.6).abs() < 1e-12);
        assert!((cfg.technology.u1 - 0.1).abs() < 1e-12);
        let mixed = format!("w = 2.0\n{text}");
        assert!(matches!(parse_config(&mixed, None), Err(Error::Config { .. })));
    }

    #[test]
    fn empty_u_grid() {
        let cfg = parse_config("[grid]\nu_min = 0.4\nu_max = 0.1\n", None).unwrap();
        assert!(cfg.grid.u_points(cfg.technology.u0).is_empty());
        let full = InstanceConfig::default_instance().unwrap();
        let pts = full.grid.u_points(full.technology.u0);
        assert_eq!(pts.len(), 201);
        assert!((pts[200] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn distributions_and_mixture() {
        let text = r#"
[[distributions]]
kind = "atom"
at = 0.5

[[distributions]]
kind = "rows"
rows = [[0.0, 0.25, 0.5], [1.0, 0.0, 0.25]]

[mixture]
members = [
  { probability = 0.5, frontier = { kind = "quadratic", center = 1.0, curvature = 1.0, level = 1.0 } },
  { probability = 0.5, frontier = { kind = "affine", intercept = 1.0, slope = -1.0 } },
]
"#;
        let cfg = parse_config(text, None).unwrap();
        assert_eq!(cfg.distributions.len(), 2);
        assert_eq!(cfg.mixture.as_ref().unwrap().0.len(), 2);
        let bad = "[[distributions]]\nkind = \"csv\"\npath = \"g.csv\"\n";
        assert!(matches!(parse_config(bad, None), Err(Error::Config { .. })));
    }
}
