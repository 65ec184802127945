//! Run configuration: JSON with `//` and `/* */` comments, numbers in
//! original coordinates.

use std::io::Read;
use std::path::Path;

use logbound::grid::GridMode;
use logbound::penalty::Region;
use logbound::potential::{parse_potential, BuiltinPotential, Potential};
use logbound::solve::{ProblemTemplate, Seed, SolveOptions, Symmetry};
use serde::Deserialize;
use serde_json::Value;

use crate::CliError;

/// A potential given either as an expression in `x1, .., xN` or as a
/// built-in family object.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PotentialSource {
    Expr(String),
    Builtin(BuiltinPotential),
}

impl PotentialSource {
    pub fn build(&self, key: &str) -> Result<Potential, CliError> {
        match self {
            PotentialSource::Expr(s) => parse_potential(s)
                .map(Potential::Expr)
                .map_err(|e| CliError::Config(format!("`{key}`: {e}"))),
            PotentialSource::Builtin(b) => Ok(Potential::Builtin(*b)),
        }
    }
}

/// `"auto"` or a number.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub enum AutoOr {
    #[default]
    Auto,
    Value(f64),
}

impl<'de> Deserialize<'de> for AutoOr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::String(s) if s == "auto" => Ok(AutoOr::Auto),
            Value::Number(n) => n
                .as_f64()
                .map(AutoOr::Value)
                .ok_or_else(|| serde::de::Error::custom("number out of range")),
            other => Err(serde::de::Error::custom(format!("expected \"auto\" or a number, got {other}"))),
        }
    }
}

impl AutoOr {
    pub fn value(&self) -> Option<f64> {
        match self {
            AutoOr::Auto => None,
            AutoOr::Value(v) => Some(*v),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: Option<usize>,
    #[serde(default = "default_mode")]
    pub mode: GridMode,
    pub n: Option<usize>,
    /// Half-width in rescaled units.
    #[serde(default, rename = "L")]
    pub half_width: AutoOr,
}

fn default_mode() -> GridMode {
    GridMode::Full
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dim: None, mode: GridMode::Full, n: None, half_width: AutoOr::Auto }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSeed {
    /// Original coordinates.
    #[serde(default)]
    pub center: Vec<f64>,
    /// Rescaled units.
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for GaussianSeed {
    fn default() -> Self {
        Self { center: Vec::new(), width: 1.0, amplitude: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol_residual: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_armijo")]
    pub armijo: f64,
    #[serde(default = "default_backtrack")]
    pub backtrack: f64,
    #[serde(default = "yes")]
    pub positivity: bool,
    #[serde(default)]
    pub symmetry: Symmetry,
    #[serde(default)]
    pub gaussian: GaussianSeed,
    #[serde(default = "yes")]
    pub warm_start: bool,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

fn default_tol() -> f64 {
    1e-8
}
fn default_max_iters() -> usize {
    20_000
}
fn default_armijo() -> f64 {
    1e-4
}
fn default_backtrack() -> f64 {
    0.5
}
fn default_snapshot_every() -> usize {
    100
}
fn yes() -> bool {
    true
}

impl Default for SolverConfig {
    fn default() -> Self {
        serde_json::from_value(Value::Object(Default::default())).expect("all fields defaulted")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaddleConfig {
    /// Seed points in original coordinates.
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MountainPassConfig {
    pub path_seeds: Vec<f64>,
    #[serde(default = "default_mp_iters")]
    pub iterations: usize,
}

fn default_mp_iters() -> usize {
    300
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub potential: PotentialSource,
    #[serde(default)]
    pub k: Option<PotentialSource>,
    pub omega: Region,
    #[serde(default)]
    pub r0: AutoOr,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default)]
    pub gauge_shift: AutoOr,
    #[serde(default)]
    pub r_weight: Option<f64>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Decay-fit annulus in rescaled units.
    #[serde(default = "default_annulus")]
    pub annulus: (f64, f64),
    #[serde(default)]
    pub saddle: Option<SaddleConfig>,
    #[serde(default)]
    pub mountain_pass: Option<MountainPassConfig>,
}

fn default_annulus() -> (f64, f64) {
    (2.0, 4.0)
}

/// A validated configuration together with its comment-free echo.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub echo: Value,
    pub template: ProblemTemplate,
}

pub fn strip_comments(src: &str) -> Result<String, CliError> {
    let mut out = String::with_capacity(src.len());
    json_comments::StripComments::new(src.as_bytes())
        .read_to_string(&mut out)
        .map_err(|e| CliError::Config(format!("comment stripping: {e}")))?;
    Ok(out)
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let src = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_str(&src).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(src: &str) -> Result<Self, CliError> {
        let clean = strip_comments(src)?;
        let echo: Value = serde_json::from_str(&clean)
            .map_err(|e| CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        let raw: RawConfig = serde_json::from_value(echo.clone()).map_err(|e| CliError::Config(e.to_string()))?;
        let template = build_template(&raw)?;
        Ok(Self { raw, echo, template })
    }

    /// `ε` for single-run commands.
    pub fn eps(&self) -> Result<f64, CliError> {
        match (self.raw.eps, &self.raw.eps_list) {
            (Some(e), _) => Ok(e),
            (None, Some(l)) if l.len() == 1 => Ok(l[0]),
            _ => Err(CliError::Config("`eps` is required".into())),
        }
    }

    pub fn eps_list(&self) -> Result<Vec<f64>, CliError> {
        match &self.raw.eps_list {
            Some(l) if l.is_empty() => Err(CliError::Config("`eps_list` is empty".into())),
            Some(l) => Ok(l.clone()),
            None => Err(CliError::Config("`eps_list` is required".into())),
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        let s = &self.raw.solver;
        SolveOptions {
            tol_residual: s.tol_residual,
            max_iters: s.max_iters,
            armijo: s.armijo,
            backtrack: s.backtrack,
            positivity: s.positivity,
            symmetry: s.symmetry,
            seed: Seed::Gaussian {
                center: s.gaussian.center.clone(),
                width: s.gaussian.width,
                amplitude: s.gaussian.amplitude,
            },
            ..Default::default()
        }
    }
}

fn build_template(raw: &RawConfig) -> Result<ProblemTemplate, CliError> {
    let potential = raw.potential.build("potential")?;
    let k = raw.k.as_ref().map(|s| s.build("k")).transpose()?;
    let need = potential.dimension_required().max(k.as_ref().map_or(0, Potential::dimension_required));
    let dim = raw.grid.dim.unwrap_or(need.max(1));
    if dim == 0 || dim < need {
        return Err(CliError::Config(format!("`grid.dim` = {dim} but the potential needs {need}")));
    }
    let r0 = match raw.r0 {
        AutoOr::Auto => 2.0 * raw.omega.circumradius() + 1.0,
        AutoOr::Value(v) => v,
    };
    if let Some(e) = raw.eps {
        if !(e > 0.0) {
            return Err(CliError::Config(format!("`eps` must be positive, got {e}")));
        }
    }
    let n = raw.grid.n.unwrap_or(match (dim, raw.grid.mode) {
        (1, _) | (_, GridMode::Radial) => 4096,
        (2, _) => 129,
        _ => 41,
    });
    Ok(ProblemTemplate {
        potential,
        k,
        omega: raw.omega.clone(),
        r0,
        kappa: raw.kappa,
        gauge_shift: raw.gauge_shift.value(),
        dim,
        mode: raw.grid.mode,
        n,
        half_width: raw.grid.half_width.value(),
        r_weight: raw.r_weight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_commented_config() {
        let src = r#"{
            // repulsive harmonic
            "potential": "-x1^2",
            "omega": {"shape": "ball", "radius": 1.5}, /* inline */
            "eps": 0.25,
            "grid": {"n": 4096, "L": "auto"}
        }"#;
        let c = RunConfig::from_str(src).unwrap();
        assert_eq!(c.template.r0, 4.0);
        assert_eq!(c.template.dim, 1);
        assert!(c.template.half_width.is_none());
        assert_eq!(c.eps().unwrap(), 0.25);
        assert!(c.echo.get("potential").is_some());
    }

    #[test]
    fn builtin_and_errors() {
        let src = r#"{"potential": {"family": "local-min-unbounded", "a": 1, "gamma": 0.5},
                      "omega": {"shape": "ball", "radius": 1}, "r0": 3, "eps_list": [0.5, 0.25]}"#;
        let c = RunConfig::from_str(src).unwrap();
        assert_eq!(c.template.r0, 3.0);
        assert_eq!(c.eps_list().unwrap(), vec![0.5, 0.25]);
        assert!(c.eps().is_err());

        let bad = RunConfig::from_str("{\n\"potential\": \"-x1^\",\n\"omega\": {\"shape\": \"ball\", \"radius\": 1}}");
        assert!(matches!(bad, Err(CliError::Config(m)) if m.contains("potential")));
        let bad = RunConfig::from_str("{\n\"potential\": 1,\n");
        assert!(matches!(bad, Err(CliError::Config(m)) if m.contains("line")));
        let bad = RunConfig::from_str(r#"{"potential": "1", "omega": {"shape": "ball", "radius": 1}, "r0": "big"}"#);
        assert!(bad.is_err());
        let bad = RunConfig::from_str(r#"{"potential": "1", "omega": {"shape": "ball", "radius": 1}, "typo": 1}"#);
        assert!(matches!(bad, Err(CliError::Config(m)) if m.contains("typo")));
    }
}
