//! Subcommand pipelines and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tugobs::dpp_solver::{consistency_probe, solve_time_marching, ProbeBranch, ValueField};
use tugobs::game_engine::{
    estimate_value, simulate_episodes, value_greedy_strategy, GameSetup, Player, PullAway, PullToward, Stationary,
    StoppingRule, Strategy,
};
use tugobs::geometry::{DomainShape, Point};
use tugobs::io::{
    write_comparison_csv, write_convergence_csv, write_convergence_long_csv, write_episodes_jsonl, write_field_csv,
    write_json, write_modulus_csv, write_probe_csv, IoError,
};
use tugobs::problem_data::{validate_compatibility, Problem};
use tugobs::validation::{
    comparison_test, convergence_study, fd_obstacle_reference, modulus_report, modulus_spread, Verdict,
};

use crate::config::{ConfigError, RunConfig};

pub const MANIFEST_SCHEMA: &str = "tugobs.manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Largest accepted spread of modulus quotients across the ε ladder.
pub const MODULUS_SPREAD_LIMIT: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Solve,
    Simulate,
    Converge,
    Validate,
}

impl Subcommand {
    pub fn as_str(&self) -> &'static str {
        match self {
            Subcommand::Solve => "solve",
            Subcommand::Simulate => "simulate",
            Subcommand::Converge => "converge",
            Subcommand::Validate => "validate",
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl RunError {
    /// 2 config, 3 numerical, 4 validation, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Validation(_) => 4,
            RunError::Io(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Numerical(_) => "numerical",
            RunError::Validation(_) => "validation",
            RunError::Io(_) => "io",
        }
    }
}

impl From<IoError> for RunError {
    fn from(e: IoError) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

fn numerical<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> RunError + '_ {
    move |e| RunError::Numerical(format!("{context}: {e}"))
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides `output.directory`.
    pub out_dir: Option<PathBuf>,
    /// Overrides the simulation and study seeds.
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub alpha: f64,
    pub beta: f64,
    pub levels: usize,
    pub h: f64,
    pub shape: Vec<usize>,
    pub nodes: usize,
    pub interior_nodes: usize,
    pub strip_nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub kind: String,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub software_version: String,
    pub subcommand: Subcommand,
    /// Stages in execution order (`simulate` runs `solve` first).
    pub pipeline: Vec<String>,
    pub config: RunConfig,
    pub derived: Option<Derived>,
    pub residual: Option<f64>,
    pub results: serde_json::Map<String, serde_json::Value>,
    pub files: Vec<FileEntry>,
    pub timings: Vec<Timing>,
    pub complete: bool,
    pub failure: Option<FailureRecord>,
}

#[derive(Debug, Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: RunError,
    pub manifest: Option<Box<RunManifest>>,
}

struct Recorder {
    dir: PathBuf,
    csv: bool,
    json: bool,
    manifest: RunManifest,
}

impl Recorder {
    fn emit(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<(), IoError>) -> Result<(), RunError> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        fs::write(self.dir.join(name), &buf)?;
        self.manifest.files.push(FileEntry {
            path: name.to_string(),
            bytes: buf.len() as u64,
            sha256: hex::encode(Sha256::digest(&buf)),
        });
        Ok(())
    }

    fn emit_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        if self.json {
            self.emit(name, |b| write_json(value, b))?;
        }
        Ok(())
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T, RunError>) -> Result<T, RunError> {
        self.manifest.pipeline.push(name.to_string());
        let start = Instant::now();
        let out = f(self);
        self.manifest.timings.push(Timing {
            stage: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    fn result<T: Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).expect("results serialize");
        self.manifest.results.insert(key.to_string(), v);
    }

    fn write_manifest(&self) -> Result<(), RunError> {
        let mut buf = Vec::new();
        write_json(&self.manifest, &mut buf)?;
        fs::write(self.dir.join(MANIFEST_FILE), buf)?;
        Ok(())
    }
}

/// Runs a subcommand and writes its artifacts plus `manifest.json` into the
/// output directory. The manifest is written on failure too, with
/// `complete = false` (or a failure record after a failed validation).
pub fn run(subcommand: Subcommand, config: &RunConfig, options: &RunOptions) -> Result<RunManifest, RunFailure> {
    let mut config = config.clone();
    if let Some(seed) = options.seed {
        if let Some(s) = config.simulation.as_mut() {
            s.seed = seed;
        }
        if let Some(s) = config.study.as_mut() {
            s.seed = seed;
        }
    }
    let dir = options
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.output.directory));
    if let Some(o) = options.out_dir.as_ref() {
        config.output.directory = o.display().to_string();
    }
    if let Err(e) = fs::create_dir_all(&dir) {
        return Err(RunFailure {
            error: e.into(),
            manifest: None,
        });
    }
    let mut rec = Recorder {
        csv: config.output.formats.iter().any(|f| f == "csv"),
        json: config.output.formats.iter().any(|f| f == "json"),
        dir,
        manifest: RunManifest {
            schema: MANIFEST_SCHEMA.into(),
            software_version: env!("CARGO_PKG_VERSION").into(),
            subcommand,
            pipeline: Vec::new(),
            config: config.clone(),
            derived: None,
            residual: None,
            results: serde_json::Map::new(),
            files: Vec::new(),
            timings: Vec::new(),
            complete: false,
            failure: None,
        },
    };
    let outcome = match subcommand {
        Subcommand::Solve => solve_stage(&mut rec, &config).map(|_| ()),
        Subcommand::Simulate => simulate(&mut rec, &config),
        Subcommand::Converge => converge(&mut rec, &config),
        Subcommand::Validate => validate(&mut rec, &config),
    };
    match outcome {
        Ok(()) => {
            rec.manifest.complete = true;
            match rec.write_manifest() {
                Ok(()) => Ok(rec.manifest),
                Err(error) => Err(RunFailure { error, manifest: None }),
            }
        }
        Err(error) => {
            // A failed check still produced every artifact.
            rec.manifest.complete = matches!(error, RunError::Validation(_));
            rec.manifest.failure = Some(FailureRecord {
                kind: error.kind().into(),
                exit_code: error.exit_code(),
                message: error.to_string(),
            });
            let _ = rec.write_manifest();
            Err(RunFailure {
                error,
                manifest: Some(Box::new(rec.manifest)),
            })
        }
    }
}

fn derived(u: &ValueField) -> Derived {
    let lat = u.lattice();
    let params = &u.problem().params;
    Derived {
        alpha: params.alpha,
        beta: params.beta,
        levels: lat.last_level(),
        h: lat.h(),
        shape: lat.shape().to_vec(),
        nodes: lat.node_count(),
        interior_nodes: lat.interior_nodes().count(),
        strip_nodes: lat.strip_nodes().count(),
    }
}

fn solve_stage(rec: &mut Recorder, config: &RunConfig) -> Result<ValueField, RunError> {
    let problem = config.problem()?;
    rec.stage("solve", |rec| {
        let u = solve_time_marching(&problem, config.h()).map_err(numerical("solve"))?;
        let residual = u.residual().map_err(numerical("residual"))?;
        let compat = validate_compatibility(&problem, u.lattice()).map_err(numerical("compatibility"))?;
        let contact = u.contact_set(u.default_contact_tol()).len();
        rec.manifest.derived = Some(derived(&u));
        rec.manifest.residual = Some(residual);
        rec.result("contact_nodes", &contact);
        rec.result("compatibility", &compat);
        if rec.csv {
            rec.emit("field.csv", |b| write_field_csv(&u, b))?;
        }
        rec.emit_json(
            "solve.json",
            &serde_json::json!({
                "residual": residual,
                "contact_nodes": contact,
                "compatibility": compat,
                "fingerprint": problem.fingerprint(),
            }),
        )?;
        Ok(u)
    })
}

fn strategy<'a>(name: &str, u: &'a ValueField, player: Player, target: &[f64], eta: f64) -> Box<dyn Strategy + 'a> {
    let eps = u.problem().params.eps;
    match name {
        "value_greedy" => Box::new(value_greedy_strategy(u, player, eta)),
        "pull_toward" => Box::new(PullToward {
            target: Point::new(target),
            eps,
        }),
        "pull_away" => Box::new(PullAway {
            source: Point::new(target),
            eps,
        }),
        _ => Box::new(Stationary),
    }
}

fn simulate(rec: &mut Recorder, config: &RunConfig) -> Result<(), RunError> {
    let sim = config.simulation.clone().ok_or_else(|| ConfigError::Validation {
        invariant: "simulate needs a [simulation] block".into(),
    })?;
    let u = solve_stage(rec, config)?;
    rec.stage("simulate", |rec| {
        let problem: &Problem = u.problem();
        let one = strategy(&sim.player_one, &u, Player::I, &sim.target, sim.eta);
        let two = strategy(&sim.player_two, &u, Player::II, &sim.target, sim.eta);
        let rule = match sim.stopping.as_str() {
            "contact_or_boundary" => StoppingRule::ContactOrBoundary {
                field: &u,
                tol: u.default_contact_tol(),
            },
            "fixed_horizon" => StoppingRule::FixedHorizon(sim.horizon.unwrap_or(0)),
            _ => StoppingRule::BoundaryOnly,
        };
        let start_level = sim.start_level.unwrap_or(u.last_level());
        let setup = GameSetup {
            problem,
            start: Point::new(&sim.start),
            start_level,
            player_one: one.as_ref(),
            player_two: two.as_ref(),
            rule,
        };
        let estimate = estimate_value(&setup, sim.episodes, sim.seed).map_err(numerical("simulate"))?;
        let logged = simulate_episodes(&setup, sim.logged_episodes.min(sim.episodes), sim.seed, true)
            .map_err(numerical("simulate"))?;
        rec.emit("episodes.jsonl", |b| write_episodes_jsonl(&logged, b))?;
        let dpp = u.sample(&setup.start, start_level.min(u.last_level()));
        let summary = serde_json::json!({
            "estimate": estimate,
            "dpp_value": dpp,
            "start": sim.start,
            "start_level": start_level,
            "player_one": one.describe(),
            "player_two": two.describe(),
            "stopping": sim.stopping,
        });
        rec.emit_json("estimate.json", &summary)?;
        rec.result("estimate", &estimate);
        rec.result("dpp_value", &dpp);
        Ok(())
    })
}

/// Reference spacing dividing the interval and at most `bound`.
fn reference_spacing(length: f64, bound: f64) -> f64 {
    length / (length / bound).ceil()
}

fn converge(rec: &mut Recorder, config: &RunConfig) -> Result<(), RunError> {
    let study = config.study.clone().ok_or_else(|| ConfigError::Validation {
        invariant: "converge needs a [study] block".into(),
    })?;
    let problem = config.problem()?;
    let (lo, hi) = match problem.domain.shape() {
        DomainShape::Box { lo, hi } if problem.domain.dim() == 1 => (lo[0], hi[0]),
        _ => {
            return Err(ConfigError::Validation {
                invariant: "converge needs an interval domain".into(),
            }
            .into())
        }
    };
    let table = rec.stage("converge", |rec| {
        let finest = study.eps.last().copied().unwrap_or(problem.params.eps) / config.parameters.h_ratio;
        let h_ref = reference_spacing(hi - lo, study.h_ref.unwrap_or(finest / 4.0));
        let reference = fd_obstacle_reference(
            &problem.boundary.f,
            &problem.obstacle.psi,
            lo,
            hi,
            h_ref,
            problem.params.t_final,
            None,
        )
        .map_err(numerical("reference"))?;
        let table = convergence_study(&problem, &study.eps, config.parameters.h_ratio, &reference)
            .map_err(numerical("convergence"))?;
        if rec.csv {
            rec.emit("convergence.csv", |b| write_convergence_csv(&table, b))?;
            rec.emit("convergence_long.csv", |b| write_convergence_long_csv(&table, b))?;
        }
        rec.emit_json("convergence.json", &table)?;
        rec.result("h_ref", &h_ref);
        rec.result("convergence", &table);
        Ok(table)
    })?;
    for row in &table.rows {
        rec.manifest.timings.push(Timing {
            stage: format!("converge eps={}", row.eps),
            seconds: row.runtime_s,
        });
    }
    match table.verdict {
        Verdict::Violation { eps_coarse, eps_fine } => Err(RunError::Validation(format!(
            "errors do not decrease strictly between ε = {eps_coarse} and ε = {eps_fine}"
        ))),
        _ => Ok(()),
    }
}

fn validate(rec: &mut Recorder, config: &RunConfig) -> Result<(), RunError> {
    let study = config.study.clone().ok_or_else(|| ConfigError::Validation {
        invariant: "validate needs a [study] block".into(),
    })?;
    let problem = config.problem()?;
    let mut failures = Vec::new();
    rec.stage("comparison", |rec| {
        let rep = comparison_test(
            &problem.params,
            &problem.domain,
            config.h(),
            study.comparison_pairs,
            study.seed,
        )
        .map_err(numerical("comparison"))?;
        if !rep.all_passed {
            failures.push(format!("comparison principle violated (worst margin {:e})", rep.worst_margin));
        }
        if rec.csv {
            rec.emit("comparison.csv", |b| write_comparison_csv(std::slice::from_ref(&rep), b))?;
        }
        rec.emit_json("comparison.json", &rep)?;
        rec.result("comparison_worst_margin", &rep.worst_margin);
        Ok(())
    })?;
    rec.stage("modulus", |rec| {
        let mut reports = Vec::new();
        for &eps in &study.eps {
            let p = problem.with_eps(eps).map_err(numerical("modulus"))?;
            let u = solve_time_marching(&p, eps / config.parameters.h_ratio).map_err(numerical("modulus"))?;
            reports.push(modulus_report(&u));
        }
        let spread = modulus_spread(&reports);
        for (class, s) in &spread {
            if *s > MODULUS_SPREAD_LIMIT {
                failures.push(format!("modulus quotients for {} spread by {s:.3}", class.as_str()));
            }
        }
        if rec.csv {
            rec.emit("modulus.csv", |b| write_modulus_csv(&reports, b))?;
        }
        rec.emit_json("modulus.json", &serde_json::json!({ "reports": reports, "spread": spread }))?;
        rec.result("modulus_spread", &spread);
        Ok(())
    })?;
    if !study.probe_point.is_empty() {
        rec.stage("probe", |rec| {
            let ladder: Vec<(f64, f64)> = study.eps.iter().map(|&e| (e, e / config.parameters.h_ratio)).collect();
            let table = consistency_probe(
                problem.params.p,
                &problem.boundary.f,
                &Point::new(&study.probe_point),
                study.probe_time,
                &ladder,
                ProbeBranch::Auto,
            )
            .map_err(numerical("probe"))?;
            if rec.csv {
                rec.emit("probe.csv", |b| write_probe_csv(&table, b))?;
            }
            rec.emit_json("probe.json", &table)?;
            rec.result("probe", &table);
            Ok(())
        })?;
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(RunError::Validation(failures.join("; ")))
    }
}

/// Reads and hashes a file listed in a manifest.
pub fn file_sha256(dir: &Path, entry: &FileEntry) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(dir.join(&entry.path))?)))
}
