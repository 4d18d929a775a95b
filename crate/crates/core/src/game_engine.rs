//! Tug-of-war with noise and optimal stopping.
//!
//! A token starts at `(x₀, t_{j₀})`. Each round, with probability α/2 player
//! I moves it, with probability α/2 player II moves it, and with probability
//! β it jumps uniformly inside `B_ε(x)`; the level drops by one. The game
//! ends when the token lands in `S_ε`, when level 0 is reached, or when the
//! stopping rule of player I fires.
//!
//! Every episode draws from its own ChaCha stream keyed by `(seed, index)`,
//! so Monte Carlo runs are reproducible and independent of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dpp_solver::ValueField;
use crate::geometry::{NodeClass, Point, MAX_DIM};
use crate::problem_data::{Problem, ProblemError};

/// Schema tag written with every exported episode.
pub const EPISODE_SCHEMA: &str = "tugobs.episode/1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("strategy of player {player:?} moved from {from} to {to}, outside the open ε-ball")]
    IllegalMove { player: Player, from: Point, to: Point },
    #[error("invalid start: {0}")]
    InvalidStart(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("need at least {needed} episodes for the drift diagnostic, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Player {
    I,
    II,
}

/// Which branch of the transition law produced a move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    CoinI,
    CoinII,
    Noise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Token reached the lateral strip `S_ε`; paid `F`.
    Strip,
    /// Level 0 reached inside Ω; paid `F` of the initial slab.
    InitialSlab,
    /// Player I stopped on the contact set; paid `ψ`.
    PlayerIStop,
    /// Fixed horizon reached inside Ω; paid `ψ`.
    Horizon,
}

/// Current position, level and path of a running game.
#[derive(Clone, Debug, PartialEq)]
pub struct GameState {
    pub position: Point,
    pub level: usize,
    pub step: usize,
    /// Positions `x₀, …, x_k` (the current position is last).
    pub history: Vec<Point>,
    pub in_strip: bool,
    pub absorbed: bool,
}

impl GameState {
    pub fn start(problem: &Problem, x0: Point, level: usize) -> Result<Self, GameError> {
        let class = problem.classify(&x0);
        if class == NodeClass::Exterior {
            return Err(GameError::InvalidStart(format!("{x0} lies outside Ω ∪ S_ε")));
        }
        let in_strip = class == NodeClass::LateralStrip;
        Ok(GameState {
            position: x0,
            level,
            step: 0,
            history: vec![x0],
            in_strip,
            absorbed: in_strip || level == 0,
        })
    }
}

/// A deterministic rule choosing the next point inside `B_ε(x_k)`.
pub trait Strategy: Send + Sync {
    fn select(&self, state: &GameState) -> Point;

    fn describe(&self) -> String;
}

/// Leaves the token where it is.
#[derive(Clone, Copy, Debug, Default)]
pub struct Stationary;

impl Strategy for Stationary {
    fn select(&self, state: &GameState) -> Point {
        state.position
    }

    fn describe(&self) -> String {
        "stationary".into()
    }
}

/// Step of length `ε − ε³` toward `target`; identity on the strip.
#[derive(Clone, Copy, Debug)]
pub struct PullToward {
    pub target: Point,
    pub eps: f64,
}

/// The barrier strategy `x_k + (ε − ε³)(z − x_k)/|z − x_k|` for `x_k ∈ Ω`.
pub fn pull_strategy(z: Point, eps: f64) -> PullToward {
    PullToward { target: z, eps }
}

impl Strategy for PullToward {
    fn select(&self, state: &GameState) -> Point {
        let x = state.position;
        let d = self.target - x;
        let r = d.norm();
        if state.in_strip || r == 0.0 {
            return x;
        }
        x + d * ((self.eps - self.eps.powi(3)) / r)
    }

    fn describe(&self) -> String {
        format!("pull_toward{}", self.target)
    }
}

/// Step of length `ε − ε³` directly away from `source`.
#[derive(Clone, Copy, Debug)]
pub struct PullAway {
    pub source: Point,
    pub eps: f64,
}

impl Strategy for PullAway {
    fn select(&self, state: &GameState) -> Point {
        let x = state.position;
        let d = x - self.source;
        let r = d.norm();
        if state.in_strip || r == 0.0 {
            return x;
        }
        x + d * ((self.eps - self.eps.powi(3)) / r)
    }

    fn describe(&self) -> String {
        format!("pull_away{}", self.source)
    }
}

/// Moves to the candidate that maximizes (player I) or minimizes (player II)
/// the interpolated field one level down.
///
/// Candidates are the stencil nodes of the lattice node nearest to `x` that
/// fall inside `B_ε(x)`, the 2n axis points at radius `ε(1 − 10⁻⁹)`, and a
/// fixed set of extra uniform points of the ball. Ties go to the first
/// candidate.
pub struct ValueGreedy<'a> {
    field: &'a ValueField,
    player: Player,
    eta: f64,
    extra: Vec<Point>,
}

/// Radius factor that keeps boundary candidates strictly inside the ball.
const INSIDE: f64 = 1.0 - 1e-9;

impl<'a> ValueGreedy<'a> {
    pub fn new(field: &'a ValueField, player: Player, eta: f64, extra_samples: usize, seed: u64) -> Self {
        let dim = field.lattice().dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let extra = (0..extra_samples).map(|_| sample_unit_ball(dim, &mut rng)).collect();
        ValueGreedy {
            field,
            player,
            eta,
            extra,
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn player(&self) -> Player {
        self.player
    }

    fn candidates(&self, x: &Point) -> Vec<Point> {
        let lattice = self.field.lattice();
        let eps = lattice.eps();
        let h = lattice.h();
        let dim = lattice.dim();
        let mut out = Vec::with_capacity(lattice.template().len() + 2 * dim + self.extra.len());
        if let Some(node) = lattice.nearest_node(x) {
            let base = lattice.coords(node);
            let tpl = lattice.template();
            for k in tpl.members.iter().chain(&tpl.rim) {
                let mut y = base;
                for i in 0..dim {
                    y.as_mut_slice()[i] += k[i] as f64 * h;
                }
                if y.dist(x) < eps * INSIDE {
                    out.push(y);
                }
            }
        }
        for i in 0..dim {
            let e = Point::unit(dim, i) * (eps * INSIDE);
            out.push(*x + e);
            out.push(*x - e);
        }
        for u in &self.extra {
            out.push(*x + *u * (eps * INSIDE));
        }
        out
    }
}

/// `value_greedy_strategy(u, player, η)` with 16 extra ball samples.
pub fn value_greedy_strategy(field: &ValueField, player: Player, eta: f64) -> ValueGreedy<'_> {
    ValueGreedy::new(field, player, eta, 16, 0x5eed)
}

impl Strategy for ValueGreedy<'_> {
    fn select(&self, state: &GameState) -> Point {
        if state.in_strip || state.level == 0 {
            return state.position;
        }
        let target = state.level - 1;
        let mut best = state.position;
        let mut best_val = match self.player {
            Player::I => f64::NEG_INFINITY,
            Player::II => f64::INFINITY,
        };
        for y in self.candidates(&state.position) {
            let Some(v) = self.field.sample(&y, target) else { continue };
            let better = match self.player {
                Player::I => v > best_val,
                Player::II => v < best_val,
            };
            if better {
                best = y;
                best_val = v;
            }
        }
        best
    }

    fn describe(&self) -> String {
        format!("value_greedy({:?}, eta={})", self.player, self.eta)
    }
}

/// When player I ends the game (on top of the mandatory strip / level-0 stops).
#[derive(Clone, Copy)]
pub enum StoppingRule<'a> {
    /// Never stops voluntarily.
    BoundaryOnly,
    /// Stops where the value touches the obstacle: `u − ψ ≤ tol`.
    ContactOrBoundary { field: &'a ValueField, tol: f64 },
    /// Stops after a fixed number of rounds, paying `ψ`.
    FixedHorizon(usize),
}

impl std::fmt::Debug for StoppingRule<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StoppingRule::BoundaryOnly => write!(f, "BoundaryOnly"),
            StoppingRule::ContactOrBoundary { tol, .. } => write!(f, "ContactOrBoundary(tol={tol})"),
            StoppingRule::FixedHorizon(k) => write!(f, "FixedHorizon({k})"),
        }
    }
}

impl StoppingRule<'_> {
    fn fires(&self, problem: &Problem, state: &GameState) -> Option<StopReason> {
        match self {
            StoppingRule::BoundaryOnly => None,
            StoppingRule::ContactOrBoundary { field, tol } => {
                let u = field.sample(&state.position, state.level)?;
                let psi = problem.psi(&state.position, problem.time(state.level));
                (u - psi <= *tol).then_some(StopReason::PlayerIStop)
            }
            StoppingRule::FixedHorizon(k) => (state.step >= *k).then_some(StopReason::Horizon),
        }
    }
}

/// One position of an episode path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub x: Point,
    pub level: usize,
}

/// One game run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub schema: String,
    pub index: u64,
    /// Full path `x₀ … x_τ`; only start and end when paths are not kept.
    pub path: Vec<PathPoint>,
    /// Branch of each of the τ moves (empty when paths are not kept).
    pub branches: Vec<Branch>,
    /// Stopping step τ.
    pub tau: usize,
    pub payoff: f64,
    pub reason: StopReason,
}

impl EpisodeRecord {
    pub fn end(&self) -> &PathPoint {
        self.path.last().expect("episode paths are never empty")
    }
}

/// Uniform point of the open unit ball, by rejection from the cube.
pub fn sample_unit_ball<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Point {
    loop {
        let mut c = [0.0; MAX_DIM];
        let mut r2 = 0.0;
        for v in c.iter_mut().take(dim) {
            *v = rng.gen_range(-1.0..1.0);
            r2 += *v * *v;
        }
        if r2 < 1.0 {
            return Point::new(&c[..dim]);
        }
    }
}

/// Draws the branch of one round: coin I with α/2, coin II with α/2, noise
/// with β.
pub fn sample_branch<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Branch {
    let r: f64 = rng.gen();
    if r < 0.5 * alpha {
        Branch::CoinI
    } else if r < alpha {
        Branch::CoinII
    } else {
        Branch::Noise
    }
}

/// Plays one round from a non-absorbed state.
pub fn step<R: Rng + ?Sized>(
    problem: &Problem,
    state: &GameState,
    player_one: &dyn Strategy,
    player_two: &dyn Strategy,
    rng: &mut R,
) -> Result<(GameState, Branch), GameError> {
    debug_assert!(!state.absorbed && state.level > 0);
    let eps = problem.params.eps;
    let x = state.position;
    let branch = sample_branch(problem.params.alpha, rng);
    let next = match branch {
        Branch::CoinI | Branch::CoinII => {
            let (player, strategy) = if branch == Branch::CoinI {
                (Player::I, player_one)
            } else {
                (Player::II, player_two)
            };
            let to = strategy.select(state);
            if !(to.dist(&x) < eps) || !to.is_finite() {
                return Err(GameError::IllegalMove { player, from: x, to });
            }
            to
        }
        Branch::Noise => x + sample_unit_ball(x.dim(), rng) * eps,
    };
    let class = problem.classify(&next);
    if class == NodeClass::Exterior {
        return Err(GameError::Problem(ProblemError::OutOfDomain(next)));
    }
    let in_strip = class == NodeClass::LateralStrip;
    let level = state.level - 1;
    let mut history = state.history.clone();
    history.push(next);
    Ok((
        GameState {
            position: next,
            level,
            step: state.step + 1,
            history,
            in_strip,
            absorbed: in_strip || level == 0,
        },
        branch,
    ))
}

fn stop_reason(problem: &Problem, state: &GameState, rule: &StoppingRule<'_>) -> Option<StopReason> {
    if state.in_strip {
        Some(StopReason::Strip)
    } else if state.level == 0 {
        Some(StopReason::InitialSlab)
    } else {
        rule.fires(problem, state)
    }
}

fn payoff_for(problem: &Problem, x: &Point, level: usize, reason: StopReason) -> f64 {
    let t = problem.time(level);
    match reason {
        StopReason::Strip | StopReason::InitialSlab => problem.f(x, t),
        StopReason::PlayerIStop | StopReason::Horizon => problem.psi(x, t),
    }
}

/// Deterministic per-episode generator.
pub fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Description of a game to simulate.
#[derive(Clone, Copy)]
pub struct GameSetup<'a> {
    pub problem: &'a Problem,
    pub start: Point,
    pub start_level: usize,
    pub player_one: &'a dyn Strategy,
    pub player_two: &'a dyn Strategy,
    pub rule: StoppingRule<'a>,
}

impl GameSetup<'_> {
    fn check(&self) -> Result<(), GameError> {
        if let StoppingRule::ContactOrBoundary { field, .. } = self.rule {
            if self.start_level > field.last_level() {
                return Err(GameError::InvalidStart(format!(
                    "start level {} beyond the solved horizon {}",
                    self.start_level,
                    field.last_level()
                )));
            }
        }
        Ok(())
    }
}

/// Runs one game to its stopping time; `τ ≤ j₀` always.
pub fn run_episode<R: Rng + ?Sized>(
    setup: &GameSetup<'_>,
    index: u64,
    rng: &mut R,
    keep_path: bool,
) -> Result<EpisodeRecord, GameError> {
    setup.check()?;
    let problem = setup.problem;
    let mut state = GameState::start(problem, setup.start, setup.start_level)?;
    let mut branches = Vec::new();
    let reason = loop {
        if let Some(reason) = stop_reason(problem, &state, &setup.rule) {
            break reason;
        }
        let (next, branch) = step(problem, &state, setup.player_one, setup.player_two, rng)?;
        if keep_path {
            branches.push(branch);
        } else {
            // Only the endpoints are reported.
            let mut trimmed = next;
            trimmed.history = vec![trimmed.position];
            state = trimmed;
            continue;
        }
        state = next;
    };
    let payoff = payoff_for(problem, &state.position, state.level, reason);
    let path = if keep_path {
        state
            .history
            .iter()
            .enumerate()
            .map(|(k, x)| PathPoint {
                x: *x,
                level: setup.start_level - k,
            })
            .collect()
    } else {
        vec![
            PathPoint {
                x: setup.start,
                level: setup.start_level,
            },
            PathPoint {
                x: state.position,
                level: state.level,
            },
        ]
    };
    Ok(EpisodeRecord {
        schema: EPISODE_SCHEMA.to_string(),
        index,
        path,
        branches,
        tau: state.step,
        payoff,
        reason,
    })
}

/// Runs `episodes` games with per-episode streams and returns them in index
/// order.
pub fn simulate_episodes(setup: &GameSetup<'_>, episodes: usize, seed: u64, keep_path: bool) -> Result<Vec<EpisodeRecord>, GameError> {
    (0..episodes as u64)
        .into_par_iter()
        .map(|i| run_episode(setup, i, &mut episode_rng(seed, i), keep_path))
        .collect()
}

/// Monte Carlo estimate of the expected payoff.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub episodes: usize,
    pub mean: f64,
    /// Sample standard deviation over √episodes.
    pub std_error: f64,
    pub seed: u64,
}

impl McEstimate {
    pub fn from_payoffs(payoffs: &[f64], seed: u64) -> Self {
        let count = payoffs.len();
        let mean = payoffs.iter().sum::<f64>() / count as f64;
        let std_error = if count > 1 {
            let var = payoffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else {
            0.0
        };
        McEstimate {
            episodes: count,
            mean,
            std_error,
            seed,
        }
    }
}

/// Mean payoff over `episodes` independent games; the reduction runs in
/// episode order.
pub fn estimate_value(setup: &GameSetup<'_>, episodes: usize, seed: u64) -> Result<McEstimate, GameError> {
    if episodes == 0 {
        return Err(GameError::InvalidStart("at least one episode is required".into()));
    }
    let payoffs: Vec<f64> = (0..episodes as u64)
        .into_par_iter()
        .map(|i| run_episode(setup, i, &mut episode_rng(seed, i), false).map(|r| r.payoff))
        .collect::<Result<_, _>>()?;
    Ok(McEstimate::from_payoffs(&payoffs, seed))
}

/// Tally of transition branches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchCounts {
    pub coin_one: u64,
    pub coin_two: u64,
    pub noise: u64,
}

impl BranchCounts {
    pub fn record(&mut self, b: Branch) {
        match b {
            Branch::CoinI => self.coin_one += 1,
            Branch::CoinII => self.coin_two += 1,
            Branch::Noise => self.noise += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.coin_one + self.coin_two + self.noise
    }

    pub fn from_episodes(episodes: &[EpisodeRecord]) -> Self {
        let mut c = BranchCounts::default();
        for b in episodes.iter().flat_map(|e| &e.branches) {
            c.record(*b);
        }
        c
    }

    /// Largest deviation from `(α/2, α/2, β)` in binomial standard deviations.
    pub fn max_sigma_deviation(&self, alpha: f64) -> f64 {
        let n = self.total() as f64;
        let probs = [0.5 * alpha, 0.5 * alpha, 1.0 - alpha];
        let counts = [self.coin_one, self.coin_two, self.noise];
        probs
            .iter()
            .zip(counts)
            .map(|(&q, c)| {
                let sd = (n * q * (1.0 - q)).sqrt();
                let dev = (c as f64 - n * q).abs();
                if sd > 0.0 {
                    dev / sd
                } else if dev == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Empirical one-step drift at a given round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDrift {
    pub step: usize,
    pub count: usize,
    /// Mean of `|x_k − z| − |x_{k−1} − z|`.
    pub mean: f64,
    pub std_error: f64,
    /// Mean of `|x_k − y|² − |x_{k−1} − y|²`.
    pub mean_sq: f64,
    pub std_error_sq: f64,
}

/// Drift pooled over a block of consecutive rounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftBin {
    pub first_step: usize,
    pub last_step: usize,
    /// Number of pooled increments.
    pub count: usize,
    pub mean: f64,
    pub std_error: f64,
    pub mean_sq: f64,
    pub std_error_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub eps: f64,
    pub z: Point,
    pub y: Point,
    pub episodes: usize,
    /// Bins with fewer pooled increments than this are not fitted.
    pub min_count: usize,
    pub steps: Vec<StepDrift>,
    pub bins: Vec<DriftBin>,
    /// Smallest C with binned mean drift ≤ Cε² in every fitted bin (clamped
    /// at 0).
    pub c_hat: f64,
    /// Same with the mean replaced by mean + 3 standard errors.
    pub c_hat_upper: f64,
    /// Constant for the squared distance to `y`.
    pub c_hat_sq: f64,
    pub c_hat_sq_upper: f64,
}

/// Minimum number of episodes accepted by [`martingale_diagnostic`].
pub const MIN_DRIFT_EPISODES: usize = 1000;

/// Per-round drift of `|x_k − z|` and `|x_k − y|²` along recorded paths, and
/// the fitted constants of the supermartingales `|x_k − z| − Cε²k` and
/// `|x_k − y|² − Cε²k`.
///
/// Single-round means are noisy at small ε, so the constants are fitted on
/// `bins` blocks of consecutive rounds, each pooling every increment it
/// contains.
pub fn martingale_diagnostic(
    episodes: &[EpisodeRecord],
    z: Point,
    y: Option<Point>,
    eps: f64,
    bins: usize,
) -> Result<DriftReport, GameError> {
    if episodes.len() < MIN_DRIFT_EPISODES {
        return Err(GameError::InsufficientData {
            needed: MIN_DRIFT_EPISODES,
            got: episodes.len(),
        });
    }
    let y = y.unwrap_or(z);
    let rounds = episodes.iter().map(|e| e.path.len()).max().unwrap_or(1) - 1;
    let width = rounds.div_ceil(bins.max(1)).max(1);
    let min_count = (episodes.len() / 100).max(100);
    let eps2 = eps * eps;
    let mut steps = Vec::with_capacity(rounds);
    let mut pooled_lin: Vec<f64> = Vec::new();
    let mut pooled_quad: Vec<f64> = Vec::new();
    let mut bin_list = Vec::new();
    for k in 1..=rounds {
        let mut lin = Vec::new();
        let mut quad = Vec::new();
        for e in episodes.iter().filter(|e| e.path.len() > k) {
            let a = e.path[k - 1].x;
            let b = e.path[k].x;
            lin.push(b.dist(&z) - a.dist(&z));
            quad.push(b.dist(&y).powi(2) - a.dist(&y).powi(2));
        }
        let (mean, se) = mean_se(&lin);
        let (mean_sq, se_sq) = mean_se(&quad);
        steps.push(StepDrift {
            step: k,
            count: lin.len(),
            mean,
            std_error: se,
            mean_sq,
            std_error_sq: se_sq,
        });
        pooled_lin.extend_from_slice(&lin);
        pooled_quad.extend_from_slice(&quad);
        if k % width == 0 || k == rounds {
            let (mean, se) = mean_se(&pooled_lin);
            let (mean_sq, se_sq) = mean_se(&pooled_quad);
            bin_list.push(DriftBin {
                first_step: (k - 1) / width * width + 1,
                last_step: k,
                count: pooled_lin.len(),
                mean,
                std_error: se,
                mean_sq,
                std_error_sq: se_sq,
            });
            pooled_lin.clear();
            pooled_quad.clear();
        }
    }
    let (mut c_hat, mut c_up, mut c_sq, mut c_sq_up) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for b in bin_list.iter().filter(|b| b.count >= min_count) {
        c_hat = c_hat.max(b.mean / eps2);
        c_up = c_up.max((b.mean + 3.0 * b.std_error) / eps2);
        c_sq = c_sq.max(b.mean_sq / eps2);
        c_sq_up = c_sq_up.max((b.mean_sq + 3.0 * b.std_error_sq) / eps2);
    }
    Ok(DriftReport {
        eps,
        z,
        y,
        episodes: episodes.len(),
        min_count,
        steps,
        bins: bin_list,
        c_hat,
        c_hat_upper: c_up,
        c_hat_sq: c_sq,
        c_hat_sq_upper: c_sq_up,
    })
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
