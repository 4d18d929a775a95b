//! Cross-checks of the DPP field: a projected finite-difference reference for
//! `p = 2`, convergence tables, the comparison principle on random ordered
//! data and empirical moduli of continuity.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dpp_solver::{solve_time_marching, SolverError, ValueField};
use crate::geometry::{Domain, NodeClass, Point};
use crate::problem_data::{BoundaryData, Expr, GameParameters, Obstacle, Problem, ProblemError};

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("time step {dt} violates the CFL bound {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("invalid reference setup: {0}")]
    InvalidSetup(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Explicit projected scheme for `3u_t = u_xx`, `u ≥ ψ` on an interval.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub lo: f64,
    pub hi: f64,
    pub h: f64,
    pub dt: f64,
    pub t_final: f64,
    pub projection: String,
    /// Times of the stored snapshots, from 0 to `t_final`.
    pub times: Vec<f64>,
    /// Snapshot-major grid values.
    pub values: Vec<f64>,
    pub closed_form: Option<Expr>,
}

/// Largest stable step of the explicit scheme in one dimension.
pub fn cfl_limit(h: f64) -> f64 {
    // Δt · (2/h²) / (n + 2) ≤ 1 with n = 1.
    1.5 * h * h
}

/// Snapshot spacing cap: at most this many stored time layers.
const MAX_SNAPSHOTS: usize = 2000;

impl ReferenceSolution {
    pub fn points(&self) -> usize {
        ((self.hi - self.lo) / self.h).round() as usize + 1
    }

    pub fn snapshot(&self, k: usize) -> &[f64] {
        let m = self.points();
        &self.values[k * m..(k + 1) * m]
    }

    /// Linear interpolation in space and time.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let m = self.points();
        let s = ((x - self.lo) / self.h).clamp(0.0, (m - 1) as f64);
        let i = (s.floor() as usize).min(m - 2);
        let a = s - i as f64;
        let at = |k: usize| {
            let row = self.snapshot(k);
            (1.0 - a) * row[i] + a * row[i + 1]
        };
        let nt = self.times.len();
        if nt == 1 {
            return at(0);
        }
        let dt = self.times[1] - self.times[0];
        let r = (t / dt).clamp(0.0, (nt - 1) as f64);
        let k = (r.floor() as usize).min(nt - 2);
        let b = r - k as f64;
        (1.0 - b) * at(k) + b * at(k + 1)
    }
}

/// Projected explicit Euler for the `n = 1, p = 2` obstacle problem
/// `min{3u_t − u_xx, u − ψ} = 0` on `(lo, hi)` with `u = F` on the parabolic
/// boundary.
///
/// `dt = None` picks the largest step below 0.9 of the CFL bound that divides
/// `t_final` evenly.
pub fn fd_obstacle_reference(
    f: &Expr,
    psi: &Expr,
    lo: f64,
    hi: f64,
    h_ref: f64,
    t_final: f64,
    dt: Option<f64>,
) -> Result<ReferenceSolution, ValidationError> {
    if !(hi > lo) || !(h_ref > 0.0) || !(t_final > 0.0) {
        return Err(ValidationError::InvalidSetup(format!(
            "interval ({lo}, {hi}), h = {h_ref}, T = {t_final}"
        )));
    }
    let cells = ((hi - lo) / h_ref).round() as usize;
    if cells < 2 || ((hi - lo) / cells as f64 - h_ref).abs() > 1e-9 * h_ref {
        return Err(ValidationError::InvalidSetup(format!("h = {h_ref} does not divide ({lo}, {hi})")));
    }
    let limit = cfl_limit(h_ref);
    let steps = match dt {
        Some(dt) if dt > limit * (1.0 + 1e-12) => return Err(ValidationError::CflViolation { dt, limit }),
        Some(dt) if dt <= 0.0 => return Err(ValidationError::InvalidSetup(format!("dt = {dt}"))),
        Some(dt) => (t_final / dt).round().max(1.0) as usize,
        None => (t_final / (0.9 * limit)).ceil() as usize,
    };
    let stride = steps.div_ceil(MAX_SNAPSHOTS);
    let steps = steps.div_ceil(stride) * stride;
    let dt = t_final / steps as f64;
    if dt > limit * (1.0 + 1e-12) {
        return Err(ValidationError::CflViolation { dt, limit });
    }
    let m = cells + 1;
    let xs: Vec<Point> = (0..m).map(|i| Point::new(&[lo + i as f64 * h_ref])).collect();
    let mut u: Vec<f64> = xs.iter().map(|x| f.eval(x, 0.0)).collect();
    let mut next = u.clone();
    let mut times = vec![0.0];
    let mut values = u.clone();
    let lambda = dt / (3.0 * h_ref * h_ref);
    for k in 1..=steps {
        let t = k as f64 * dt;
        for i in 1..m - 1 {
            let v = u[i] + lambda * (u[i + 1] - 2.0 * u[i] + u[i - 1]);
            next[i] = v.max(psi.eval(&xs[i], t));
        }
        next[0] = f.eval(&xs[0], t);
        next[m - 1] = f.eval(&xs[m - 1], t);
        std::mem::swap(&mut u, &mut next);
        if k % stride == 0 {
            times.push(t);
            values.extend_from_slice(&u);
        }
    }
    Ok(ReferenceSolution {
        lo,
        hi,
        h: h_ref,
        dt,
        t_final,
        projection: "u <- max(u, psi)".into(),
        times,
        values,
        closed_form: None,
    })
}

/// `max |u − ref|` over interior nodes at levels with `t_j ∈ [0.1·T, T]`.
pub fn linf_error(u: &ValueField, reference: &ReferenceSolution) -> f64 {
    let lattice = u.lattice();
    let t_final = u.problem().params.t_final;
    let tol = 1e-12 * t_final;
    let interior: Vec<usize> = lattice.interior_nodes().collect();
    let mut worst: f64 = 0.0;
    for level in 1..lattice.level_count() {
        let t = lattice.time(level);
        if t < 0.1 * t_final - tol || t > t_final + tol {
            continue;
        }
        for &node in &interior {
            let x = lattice.coords(node)[0];
            worst = worst.max((u.get(node, level) - reference.eval(x, t)).abs());
        }
    }
    worst
}

/// `max |ref − closed form|` over the grid at every stored snapshot with
/// `t ≥ t_min`.
pub fn reference_gap(reference: &ReferenceSolution, exact: &Expr, t_min: f64) -> f64 {
    let m = reference.points();
    let mut worst: f64 = 0.0;
    for (k, &t) in reference.times.iter().enumerate() {
        if t < t_min {
            continue;
        }
        let row = reference.snapshot(k);
        for (i, v) in row.iter().enumerate().take(m) {
            let x = Point::new(&[reference.lo + i as f64 * reference.h]);
            worst = worst.max((v - exact.eval(&x, t)).abs());
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub h: f64,
    pub error: f64,
    /// Wall-clock seconds; kept out of serialized artifacts.
    #[serde(skip)]
    pub runtime_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Monotone,
    /// Errors at `eps_coarse` and `eps_fine` break the strict decrease.
    Violation { eps_coarse: f64, eps_fine: f64 },
    NotApplicable { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub p: f64,
    pub n: usize,
    pub h_ratio: f64,
    pub rows: Vec<ConvergenceRow>,
    pub verdict: Verdict,
}

impl ConvergenceTable {
    pub fn is_monotone(&self) -> bool {
        self.verdict == Verdict::Monotone
    }
}

/// Solves `instance` at every `ε` with `h = ε / h_ratio` and measures the
/// error against `reference`.
///
/// The reference solves the `p = 2` problem in one dimension, so other
/// instances get errors but a `NotApplicable` verdict.
pub fn convergence_study(
    instance: &Problem,
    eps_list: &[f64],
    h_ratio: f64,
    reference: &ReferenceSolution,
) -> Result<ConvergenceTable, ValidationError> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(ValidationError::InvalidSetup("ε list must be non-empty and strictly decreasing".into()));
    }
    let rows = eps_list
        .par_iter()
        .map(|&eps| {
            let start = Instant::now();
            let problem = instance.with_eps(eps)?;
            let h = eps / h_ratio;
            let u = solve_time_marching(&problem, h)?;
            let error = linf_error(&u, reference);
            Ok(ConvergenceRow {
                eps,
                h,
                error,
                runtime_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>, ValidationError>>()?;
    let params = &instance.params;
    let verdict = if params.p != 2.0 || params.n != 1 {
        Verdict::NotApplicable {
            reason: format!("reference covers p = 2, n = 1 only (got p = {}, n = {})", params.p, params.n),
        }
    } else {
        rows.windows(2)
            .find(|w| !(w[1].error < w[0].error))
            .map(|w| Verdict::Violation {
                eps_coarse: w[0].eps,
                eps_fine: w[1].eps,
            })
            .unwrap_or(Verdict::Monotone)
    };
    Ok(ConvergenceTable {
        p: params.p,
        n: params.n,
        h_ratio,
        rows,
        verdict,
    })
}

/// Long-format `(ε, error)` pairs for plotting.
pub fn convergence_long_format(table: &ConvergenceTable) -> Vec<(f64, f64)> {
    table.rows.iter().map(|r| (r.eps, r.error)).collect()
}

/// A pair `F₁ ≥ F₂`, `ψ₁ ≥ ψ₂` of compatible data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderedPair {
    pub f1: Expr,
    pub psi1: Expr,
    pub f2: Expr,
    pub psi2: Expr,
}

fn random_point<R: Rng>(rng: &mut R, domain: &Domain) -> Vec<f64> {
    let (lo, hi) = domain.bounding_box();
    (0..domain.dim()).map(|i| rng.gen_range(lo[i]..hi[i])).collect()
}

/// Bump with height drawn between 0 and `peak` (either sign).
fn random_bump<R: Rng>(rng: &mut R, domain: &Domain, peak: f64) -> Expr {
    Expr::Bump {
        center: random_point(rng, domain),
        radius: rng.gen_range(0.3..0.9),
        height: peak * rng.gen::<f64>(),
    }
}

/// Random smooth data pair ordered by construction.
///
/// `F₁` is an affine plus trigonometric plus bump profile, `ψ₁ = min{F₁, g}`
/// with a rising parabola `g`, `F₂ = F₁ − b₁` and `ψ₂ = min{F₂, ψ₁ − b₂}` for
/// nonnegative bumps `b₁, b₂`. Both obstacles stay below their data
/// everywhere, so every lattice is compatible.
pub fn random_ordered_pair<R: Rng>(rng: &mut R, domain: &Domain) -> OrderedPair {
    let n = domain.dim();
    let f1 = Expr::Sum {
        terms: vec![
            Expr::Affine {
                constant: rng.gen_range(-0.5..0.5),
                gradient: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                time: rng.gen_range(-1.0..1.0),
            },
            Expr::Trig {
                amplitude: rng.gen_range(0.0..0.5),
                wave: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
                decay: rng.gen_range(0.0..2.0),
            },
            random_bump(rng, domain, 0.5),
        ],
    };
    let center = random_point(rng, domain);
    let g = Expr::Quadratic {
        constant: rng.gen_range(-0.2..0.6) - center.iter().map(|c| c * c).sum::<f64>(),
        linear: center.iter().map(|c| 2.0 * c).collect(),
        quadratic: vec![-1.0; n],
        time: rng.gen_range(0.0..4.0),
    };
    let psi1 = Expr::Min {
        terms: vec![f1.clone(), g],
    };
    let f2 = Expr::Sum {
        terms: vec![f1.clone(), random_bump(rng, domain, -0.4)],
    };
    let psi2 = Expr::Min {
        terms: vec![
            f2.clone(),
            Expr::Sum {
                terms: vec![psi1.clone(), random_bump(rng, domain, -0.4)],
            },
        ],
    };
    OrderedPair { f1, psi1, f2, psi2 }
}

fn make_problem(params: &GameParameters, domain: &Domain, f: Expr, psi: Expr) -> Result<Problem, ProblemError> {
    Problem::new(
        *params,
        domain.clone(),
        BoundaryData { f, lipschitz: 10.0 },
        Obstacle { psi, lipschitz: 10.0 },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub index: usize,
    /// `min (u₁ − u₂)` over all active nodes and levels.
    pub worst_margin: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub p: f64,
    pub n: usize,
    pub seed: u64,
    pub pairs: Vec<PairOutcome>,
    pub worst_margin: f64,
    pub all_passed: bool,
}

/// Tolerance of the comparison check.
pub const COMPARISON_TOL: f64 = 1e-12;

/// `min (u₁ − u₂)` over all non-exterior nodes and levels.
pub fn comparison_margin(u1: &ValueField, u2: &ValueField) -> f64 {
    u1.values()
        .iter()
        .zip(u2.values())
        .filter(|(a, _)| !a.is_nan())
        .map(|(a, b)| a - b)
        .fold(f64::INFINITY, f64::min)
}

/// Solves `instance_count` random ordered pairs and checks `u₁ ≥ u₂ − 10⁻¹²`.
pub fn comparison_test(
    params: &GameParameters,
    domain: &Domain,
    h: f64,
    instance_count: usize,
    seed: u64,
) -> Result<ComparisonReport, ValidationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<OrderedPair> = (0..instance_count).map(|_| random_ordered_pair(&mut rng, domain)).collect();
    let outcomes = pairs
        .into_par_iter()
        .enumerate()
        .map(|(index, pair)| {
            let p1 = make_problem(params, domain, pair.f1, pair.psi1)?;
            let p2 = make_problem(params, domain, pair.f2, pair.psi2)?;
            let u1 = solve_time_marching(&p1, h)?;
            let u2 = solve_time_marching(&p2, h)?;
            let worst_margin = comparison_margin(&u1, &u2);
            Ok(PairOutcome {
                index,
                worst_margin,
                passed: worst_margin >= -COMPARISON_TOL,
            })
        })
        .collect::<Result<Vec<_>, ValidationError>>()?;
    let worst_margin = outcomes.iter().map(|o| o.worst_margin).fold(f64::INFINITY, f64::min);
    Ok(ComparisonReport {
        p: params.p,
        n: params.n,
        seed,
        all_passed: outcomes.iter().all(|o| o.passed),
        pairs: outcomes,
        worst_margin,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    InteriorInterior,
    InteriorStrip,
    InteriorSlab,
}

impl PairClass {
    pub const ALL: [PairClass; 3] = [PairClass::InteriorInterior, PairClass::InteriorStrip, PairClass::InteriorSlab];

    pub fn as_str(&self) -> &'static str {
        match self {
            PairClass::InteriorInterior => "interior_interior",
            PairClass::InteriorStrip => "interior_strip",
            PairClass::InteriorSlab => "interior_slab",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassQuotient {
    pub class: PairClass,
    pub pairs: usize,
    pub max_quotient: f64,
}

/// Largest parabolic Hölder quotients `|u(x,t) − u(y,s)| / (|x − y| + |t − s|^{1/2})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub eps: f64,
    pub h: f64,
    pub classes: Vec<ClassQuotient>,
}

impl ModulusReport {
    pub fn max_quotient(&self, class: PairClass) -> f64 {
        self.classes
            .iter()
            .find(|c| c.class == class)
            .map(|c| c.max_quotient)
            .unwrap_or(0.0)
    }
}

/// Quotients over three families of pairs:
///
/// * interior–interior: lattice neighbours along each axis at the same level,
///   and the same node at consecutive levels `≥ 1`;
/// * interior–strip: an interior node and every strip node of its ε-ball at
///   the same level;
/// * interior–initial slab: an interior node at level `j ≥ 1` against itself
///   at level 0.
pub fn modulus_report(u: &ValueField) -> ModulusReport {
    let lattice = u.lattice();
    let dim = lattice.dim();
    let strides = lattice.strides();
    let template = lattice.template();
    let interior: Vec<usize> = lattice.interior_nodes().collect();
    let quotient = |a: f64, b: f64, dx: f64, dt: f64| {
        let den = dx + dt.abs().sqrt();
        if den > 0.0 {
            (a - b).abs() / den
        } else {
            0.0
        }
    };
    let per_level: Vec<[(usize, f64); 3]> = (1..lattice.level_count())
        .into_par_iter()
        .map(|level| {
            let mut acc = [(0usize, 0.0f64); 3];
            let t = lattice.time(level);
            for &node in &interior {
                let v = u.get(node, level);
                let x = lattice.coords(node);
                for s in strides.iter().take(dim) {
                    let other = node + s;
                    if other < lattice.node_count() && lattice.class(other) == NodeClass::Interior {
                        let q = quotient(v, u.get(other, level), lattice.coords(other).dist(&x), 0.0);
                        acc[0] = (acc[0].0 + 1, acc[0].1.max(q));
                    }
                }
                if level >= 2 {
                    let q = quotient(v, u.get(node, level - 1), 0.0, t - lattice.time(level - 1));
                    acc[0] = (acc[0].0 + 1, acc[0].1.max(q));
                }
                for d in template.member_deltas.iter().chain(&template.rim_deltas) {
                    let other = (node as isize + d) as usize;
                    if lattice.class(other) == NodeClass::LateralStrip {
                        let q = quotient(v, u.get(other, level), lattice.coords(other).dist(&x), 0.0);
                        acc[1] = (acc[1].0 + 1, acc[1].1.max(q));
                    }
                }
                let q = quotient(v, u.get(node, 0), 0.0, t);
                acc[2] = (acc[2].0 + 1, acc[2].1.max(q));
            }
            acc
        })
        .collect();
    let classes = PairClass::ALL
        .iter()
        .enumerate()
        .map(|(k, &class)| ClassQuotient {
            class,
            pairs: per_level.iter().map(|a| a[k].0).sum(),
            max_quotient: per_level.iter().map(|a| a[k].1).fold(0.0, f64::max),
        })
        .collect();
    ModulusReport {
        eps: lattice.eps(),
        h: lattice.h(),
        classes,
    }
}

/// Per class, the ratio between the largest and smallest max quotient over a
/// ladder of reports. Classes without pairs are skipped.
pub fn modulus_spread(reports: &[ModulusReport]) -> Vec<(PairClass, f64)> {
    PairClass::ALL
        .iter()
        .filter_map(|&class| {
            let qs: Vec<f64> = reports
                .iter()
                .filter(|r| r.classes.iter().any(|c| c.class == class && c.pairs > 0))
                .map(|r| r.max_quotient(class))
                .collect();
            if qs.is_empty() {
                return None;
            }
            let hi = qs.iter().cloned().fold(0.0, f64::max);
            let lo = qs.iter().cloned().fold(f64::INFINITY, f64::min);
            Some((class, if lo > 0.0 { hi / lo } else if hi == 0.0 { 1.0 } else { f64::INFINITY }))
        })
        .collect()
}

/// The `p = 2`, `n = 1` heat instance on `(0, 1)`: `F = e^{−π²t/3} sin(πx)`
/// and an obstacle far below.
pub fn sine_instance(eps: f64, t_final: f64) -> Result<Problem, ProblemError> {
    let f = sine_solution();
    Problem::new(
        GameParameters::new(2.0, 1, eps, t_final)?,
        Domain::interval(0.0, 1.0).map_err(|e| ProblemError::InvalidParameter(e.to_string()))?,
        BoundaryData {
            f,
            lipschitz: std::f64::consts::PI,
        },
        Obstacle {
            psi: Expr::constant(-10.0),
            lipschitz: 0.0,
        },
    )
}

/// `e^{−π²t/3} sin(πx)`.
pub fn sine_solution() -> Expr {
    let pi = std::f64::consts::PI;
    Expr::Trig {
        amplitude: 1.0,
        wave: vec![1.0],
        phase: 0.0,
        decay: pi * pi / 3.0,
    }
}
