//! Run configuration files (TOML).

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tugobs::geometry::{Domain, Point};
use tugobs::problem_data::{BoundaryData, Expr, GameParameters, Obstacle, Problem};

/// Function names accepted for `F` and `ψ`.
pub const FUNCTION_REGISTRY: [&str; 8] = ["constant", "affine", "quadratic", "trig", "bump", "sum", "max", "min"];

pub const STRATEGIES: [&str; 4] = ["value_greedy", "stationary", "pull_toward", "pull_away"];

pub const STOPPING_RULES: [&str; 3] = ["boundary_only", "contact_or_boundary", "fixed_horizon"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid configuration: {invariant}")]
    Validation { invariant: String },
}

fn invalid(invariant: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        invariant: invariant.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametersBlock {
    pub p: f64,
    pub n: usize,
    pub eps: f64,
    pub t_final: f64,
    /// `ε / h`.
    #[serde(default = "default_h_ratio")]
    pub h_ratio: f64,
}

fn default_h_ratio() -> f64 {
    8.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    /// `interval`, `box`, `ball` or `annulus`.
    pub kind: String,
    #[serde(default)]
    pub lo: Vec<f64>,
    #[serde(default)]
    pub hi: Vec<f64>,
    #[serde(default)]
    pub center: Vec<f64>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub inner: Option<f64>,
    #[serde(default)]
    pub outer: Option<f64>,
    /// Exterior sphere radius the run relies on.
    #[serde(default)]
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    pub boundary: Expr,
    pub obstacle: Expr,
    /// Lipschitz bound of `F`.
    pub c1: f64,
    /// Lipschitz bound of `ψ`.
    pub c2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    pub episodes: usize,
    #[serde(default)]
    pub seed: u64,
    pub start: Vec<f64>,
    /// Defaults to the last level `M`.
    #[serde(default)]
    pub start_level: Option<usize>,
    #[serde(default = "default_strategy")]
    pub player_one: String,
    #[serde(default = "default_strategy")]
    pub player_two: String,
    /// Target point of `pull_toward` / `pull_away`.
    #[serde(default)]
    pub target: Vec<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_stopping")]
    pub stopping: String,
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Episodes written with full paths (the estimate always uses all).
    #[serde(default = "default_logged")]
    pub logged_episodes: usize,
}

fn default_strategy() -> String {
    "value_greedy".into()
}

fn default_eta() -> f64 {
    1e-3
}

fn default_stopping() -> String {
    "contact_or_boundary".into()
}

fn default_logged() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyBlock {
    pub eps: Vec<f64>,
    /// Reference spacing; defaults to a quarter of the finest DPP spacing.
    #[serde(default)]
    pub h_ref: Option<f64>,
    #[serde(default = "default_pairs")]
    pub comparison_pairs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Consistency probe point; the boundary function is probed.
    #[serde(default)]
    pub probe_point: Vec<f64>,
    #[serde(default)]
    pub probe_time: f64,
}

fn default_pairs() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_dir() -> String {
    "out".into()
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: default_dir(),
            formats: default_formats(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub parameters: ParametersBlock,
    pub domain: DomainBlock,
    pub data: DataBlock,
    #[serde(default)]
    pub simulation: Option<SimulationBlock>,
    #[serde(default)]
    pub study: Option<StudyBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

impl RunConfig {
    pub fn h(&self) -> f64 {
        self.parameters.eps / self.parameters.h_ratio
    }

    pub fn build_domain(&self) -> Result<Domain, ConfigError> {
        let d = &self.domain;
        let pt = |v: &[f64], what: &str| {
            if v.is_empty() || v.len() > 3 {
                Err(invalid(format!("domain.{what} needs 1 to 3 coordinates")))
            } else {
                Ok(Point::new(v))
            }
        };
        let need = |v: Option<f64>, what: &str| v.ok_or_else(|| invalid(format!("domain.{what} is required for {}", d.kind)));
        let domain = match d.kind.as_str() {
            "interval" | "box" => Domain::boxed(pt(&d.lo, "lo")?, pt(&d.hi, "hi")?),
            "ball" => Domain::ball(pt(&d.center, "center")?, need(d.radius, "radius")?),
            "annulus" => Domain::annulus(pt(&d.center, "center")?, need(d.inner, "inner")?, need(d.outer, "outer")?),
            other => {
                return Err(invalid(format!(
                    "unknown domain kind `{other}` (expected interval, box, ball or annulus)"
                )))
            }
        }
        .map_err(|e| invalid(e.to_string()))?;
        if domain.dim() != self.parameters.n {
            return Err(invalid(format!(
                "domain dimension {} differs from n = {}",
                domain.dim(),
                self.parameters.n
            )));
        }
        if let Some(delta) = d.delta {
            let radius = domain.exterior_sphere_radius();
            if !(delta > 0.0) || delta > radius {
                return Err(invalid(format!("δ = {delta} exceeds the exterior sphere radius {radius}")));
            }
        }
        Ok(domain)
    }

    pub fn problem(&self) -> Result<Problem, ConfigError> {
        let p = &self.parameters;
        let params = GameParameters::new(p.p, p.n, p.eps, p.t_final).map_err(|e| invalid(e.to_string()))?;
        Problem::new(
            params,
            self.build_domain()?,
            BoundaryData {
                f: self.data.boundary.clone(),
                lipschitz: self.data.c1,
            },
            Obstacle {
                psi: self.data.obstacle.clone(),
                lipschitz: self.data.c2,
            },
        )
        .map_err(|e| invalid(e.to_string()))
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.parameters;
        if !(p.p >= 2.0) || !p.p.is_finite() {
            return Err(invalid(format!("p ≥ 2 (got p = {})", p.p)));
        }
        if !(1..=3).contains(&p.n) {
            return Err(invalid(format!("1 ≤ n ≤ 3 (got n = {})", p.n)));
        }
        if !(p.eps > 0.0) || !(p.t_final > 0.0) {
            return Err(invalid("ε > 0 and T > 0"));
        }
        if !(p.h_ratio >= 4.0) {
            return Err(invalid(format!("ε/h ≥ 4 (got {})", p.h_ratio)));
        }
        if !(self.data.c1 >= 0.0) || !(self.data.c2 >= 0.0) {
            return Err(invalid("Lipschitz bounds c1, c2 ≥ 0"));
        }
        self.problem()?;
        if let Some(s) = &self.simulation {
            if s.episodes == 0 {
                return Err(invalid("simulation.episodes ≥ 1"));
            }
            if s.start.len() != p.n {
                return Err(invalid("simulation.start must have n coordinates"));
            }
            for (who, name) in [("player_one", &s.player_one), ("player_two", &s.player_two)] {
                if !STRATEGIES.contains(&name.as_str()) {
                    return Err(invalid(format!("unknown strategy `{name}` for simulation.{who}")));
                }
                if name.starts_with("pull") && s.target.len() != p.n {
                    return Err(invalid(format!("simulation.target must have n coordinates for `{name}`")));
                }
            }
            if !STOPPING_RULES.contains(&s.stopping.as_str()) {
                return Err(invalid(format!("unknown stopping rule `{}`", s.stopping)));
            }
            if s.stopping == "fixed_horizon" && s.horizon.is_none() {
                return Err(invalid("simulation.horizon is required for fixed_horizon"));
            }
            if !(s.eta > 0.0) {
                return Err(invalid("simulation.eta > 0"));
            }
        }
        if let Some(st) = &self.study {
            if st.eps.is_empty() || st.eps.windows(2).any(|w| !(w[1] < w[0])) || st.eps.iter().any(|e| !(*e > 0.0)) {
                return Err(invalid("study.eps must be positive and strictly decreasing"));
            }
            if let Some(h) = st.h_ref {
                let finest = st.eps.last().unwrap() / p.h_ratio;
                if !(h > 0.0) || h > finest / 4.0 {
                    return Err(invalid(format!("study.h_ref ≤ h/4 = {}", finest / 4.0)));
                }
            }
            if !st.probe_point.is_empty() && st.probe_point.len() != p.n {
                return Err(invalid("study.probe_point must have n coordinates"));
            }
        }
        for f in &self.output.formats {
            if f != "csv" && f != "json" {
                return Err(invalid(format!("unknown output format `{f}`")));
            }
        }
        Ok(())
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map(|l| l.chars().count()).unwrap_or(0) + 1;
    (line, column)
}

/// Registry names used anywhere inside a function table.
fn check_registry(value: &toml::Value, path: &str) -> Result<(), ConfigError> {
    let Some(table) = value.as_table() else {
        return Err(invalid(format!("{path} must be a table")));
    };
    match table.get("kind").and_then(|k| k.as_str()) {
        Some(kind) if FUNCTION_REGISTRY.contains(&kind) => {}
        Some(kind) => return Err(invalid(format!("unknown function `{kind}` in {path}"))),
        None => return Err(invalid(format!("{path}.kind is required"))),
    }
    if let Some(terms) = table.get("terms").and_then(|t| t.as_array()) {
        for (i, t) in terms.iter().enumerate() {
            check_registry(t, &format!("{path}.terms[{i}]"))?;
        }
    }
    Ok(())
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let parse_err = |e: toml::de::Error| {
        let (line, column) = e.span().map(|s| line_column(text, s.start)).unwrap_or((0, 0));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    };
    let raw: toml::Table = toml::from_str(text).map_err(parse_err)?;
    if let Some(data) = raw.get("data").and_then(|d| d.as_table()) {
        for key in ["boundary", "obstacle"] {
            if let Some(v) = data.get(key) {
                check_registry(v, &format!("data.{key}"))?;
            }
        }
    }
    let config: RunConfig = toml::from_str(text).map_err(parse_err)?;
    config.validate()?;
    Ok(config)
}
