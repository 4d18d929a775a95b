//! Discrete dynamic programming and tug-of-war with noise for the parabolic
//! obstacle problem of the normalized p-Laplacian.
//!
//! * [`geometry`]: domains, ε-strips, the space-time lattice and ball stencils.
//! * [`problem_data`]: parameters, boundary data, obstacle and payoff.
//! * [`dpp_solver`]: the DPP operator, the value field and the consistency probe.
//! * [`game_engine`]: episode simulation, strategies, stopping rules and Monte Carlo.
//! * [`validation`]: reference solver, convergence, comparison and modulus studies.
//! * [`io`]: CSV / JSON artifacts.

pub mod dpp_solver;
pub mod game_engine;
pub mod geometry;
pub mod io;
pub mod problem_data;
pub mod validation;

pub use dpp_solver::{
    consistency_probe, solve_fixed_point, solve_time_marching, ContactSet, DppOperator, ProbeBranch, ProbeTable,
    SolverError, ValueField,
};
pub use geometry::{classify_node, BallStencil, Domain, GeometryError, NodeClass, Point, SpaceTimeLattice};
pub use problem_data::{
    make_parameters, validate_compatibility, BoundaryData, Expr, GameParameters, Obstacle, Problem, ProblemError,
};
pub use game_engine::{
    estimate_value, martingale_diagnostic, pull_strategy, run_episode, simulate_episodes, value_greedy_strategy,
    Branch, BranchCounts, EpisodeRecord, GameError, GameSetup, GameState, McEstimate, Player, StopReason,
    StoppingRule, Strategy,
};
pub use validation::{
    comparison_test, convergence_study, fd_obstacle_reference, linf_error, modulus_report, ConvergenceTable,
    ReferenceSolution, ValidationError,
};
