//! The discrete dynamic programming operator
//!
//! ```text
//! T v(x, t) = max{ ψ(x, t), (α/2)(sup_B v + inf_B v) + β ⨍_B v },   B = B_ε(x) at t − ε²/2
//! ```
//!
//! and the value field `u^ε` obtained from it, either by marching levels
//! forward in time or by iterating `T` on the whole field until it stops
//! changing.
//!
//! On the lattice the supremum and infimum run over the open-ball members
//! plus the rim nodes lying on the sphere, and the ball average is a
//! weighted sum over the members with symmetric radial weights
//! `w = a + b|y − x|²` fixed by `Σw = 1` and `Σw|y − x|² = nε²/(n + 2)`.
//! These weights reproduce the exact ball mean of every quadratic.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, NodeClass, Point, SpaceTimeLattice, StencilTemplate};
use crate::problem_data::{validate_compatibility, CompatibilityReport, Expr, GameParameters, Problem, ProblemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("fixed-point iteration still changing after {iterations} sweeps (limit {limit})")]
    NonStabilizing { iterations: usize, limit: usize },
    #[error("ball quadrature produced a non-positive weight ({weight:e}) for ε/h = {ratio:.3}")]
    NegativeWeight { weight: f64, ratio: f64 },
    #[error("gradient branch requested at a critical point of the test function")]
    DegenerateGradient,
}

/// Radial ball-average weights over the template members, in template order.
pub fn ball_mean_weights(template: &StencilTemplate, dim: usize, eps: f64, h: f64) -> Result<Vec<f64>, SolverError> {
    let m = template.len() as f64;
    let s2: f64 = template.member_dist2.iter().sum();
    let s4: f64 = template.member_dist2.iter().map(|r2| r2 * r2).sum();
    let target = dim as f64 * eps * eps / (dim as f64 + 2.0);
    let det = m * s4 - s2 * s2;
    if template.len() < 3 || det <= 0.0 {
        return Err(GeometryError::StencilTooSmall {
            node: 0,
            count: template.len(),
        }
        .into());
    }
    let a = (s4 - s2 * target) / det;
    let b = (m * target - s2) / det;
    let weights: Vec<f64> = template.member_dist2.iter().map(|r2| a + b * r2).collect();
    if let Some(&w) = weights.iter().find(|w| **w <= 0.0) {
        return Err(SolverError::NegativeWeight { weight: w, ratio: eps / h });
    }
    Ok(weights)
}

/// The operator `T` bound to a lattice and a problem.
pub struct DppOperator<'a> {
    lattice: &'a SpaceTimeLattice,
    problem: &'a Problem,
    weights: Vec<f64>,
}

impl<'a> DppOperator<'a> {
    pub fn new(lattice: &'a SpaceTimeLattice, problem: &'a Problem) -> Result<Self, SolverError> {
        let weights = ball_mean_weights(lattice.template(), lattice.dim(), lattice.eps(), lattice.h())?;
        for node in lattice.interior_nodes() {
            if !lattice.stencil_is_full(node) {
                let st = lattice.ball_nodes(node)?;
                return Err(GeometryError::StencilTooSmall {
                    node,
                    count: st.members.len(),
                }
                .into());
            }
        }
        Ok(DppOperator {
            lattice,
            problem,
            weights,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(α/2)(max + min) + β·mean` of the previous level around `node`.
    /// Reductions run in template (node-id) order.
    pub fn averaging(&self, prev: &[f64], node: usize) -> f64 {
        let tpl = self.lattice.template();
        let base = node as isize;
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        let mut mean = 0.0;
        // Deviations from the center value keep constants exact.
        let c = prev[node];
        for (d, w) in tpl.member_deltas.iter().zip(&self.weights) {
            let v = prev[(base + d) as usize];
            hi = hi.max(v);
            lo = lo.min(v);
            mean += w * (v - c);
        }
        for d in &tpl.rim_deltas {
            let v = prev[(base + d) as usize];
            hi = hi.max(v);
            lo = lo.min(v);
        }
        let params = &self.problem.params;
        c + 0.5 * params.alpha * ((hi - c) + (lo - c)) + params.beta * mean
    }

    /// `T v` at an interior node of `level ≥ 1`, given level `level − 1`.
    pub fn apply(&self, prev: &[f64], node: usize, level: usize) -> f64 {
        let x = self.lattice.coords(node);
        let psi = self.problem.psi(&x, self.lattice.time(level));
        psi.max(self.averaging(prev, node))
    }

    /// Fills one level: `F` on strip nodes, `T` on interior nodes, NaN on
    /// exterior nodes.
    fn sweep_level(&self, prev: &[f64], next: &mut [f64], level: usize) {
        let t = self.lattice.time(level);
        next.par_iter_mut().enumerate().for_each(|(node, out)| {
            *out = match self.lattice.class(node) {
                NodeClass::Interior => self.apply(prev, node, level),
                NodeClass::LateralStrip => self.problem.f(&self.lattice.coords(node), t),
                NodeClass::Exterior => f64::NAN,
            };
        });
    }
}

/// `u^ε` sampled on the lattice, one layer per time level.
#[derive(Clone, Debug)]
pub struct ValueField {
    lattice: SpaceTimeLattice,
    problem: Problem,
    values: Vec<f64>,
}

impl ValueField {
    /// Wraps precomputed values (level-major, NaN on exterior nodes).
    pub fn from_values(lattice: SpaceTimeLattice, problem: Problem, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), lattice.node_count() * lattice.level_count());
        ValueField {
            lattice,
            problem,
            values,
        }
    }

    pub fn lattice(&self) -> &SpaceTimeLattice {
        &self.lattice
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn level(&self, level: usize) -> &[f64] {
        let n = self.lattice.node_count();
        &self.values[level * n..(level + 1) * n]
    }

    pub fn get(&self, node: usize, level: usize) -> f64 {
        self.values[level * self.lattice.node_count() + node]
    }

    pub fn set(&mut self, node: usize, level: usize, value: f64) {
        let n = self.lattice.node_count();
        self.values[level * n + node] = value;
    }

    pub fn last_level(&self) -> usize {
        self.lattice.last_level()
    }

    /// Value at a lattice point, looked up by its coordinates.
    pub fn at(&self, x: &Point, level: usize) -> Option<f64> {
        let node = self.lattice.nearest_node(x)?;
        if self.lattice.coords(node).dist(x) > 1e-9 * self.lattice.h() {
            return None;
        }
        Some(self.get(node, level))
    }

    /// The field at an arbitrary point of Ω ∪ S_ε: `F` on the strip and at
    /// level 0, multilinear interpolation of the lattice values inside Ω.
    pub fn sample(&self, x: &Point, level: usize) -> Option<f64> {
        let t = self.lattice.time(level);
        match self.problem.classify(x) {
            NodeClass::Exterior => None,
            NodeClass::LateralStrip => Some(self.problem.f(x, t)),
            NodeClass::Interior if level == 0 => Some(self.problem.f(x, t)),
            NodeClass::Interior => {
                let (ids, ws, count) = self.lattice.interpolation_cell(x)?;
                let layer = self.level(level);
                let mut v = 0.0;
                for c in 0..count {
                    if ws[c] != 0.0 {
                        v += ws[c] * layer[ids[c]];
                    }
                }
                Some(v)
            }
        }
    }

    /// `max |u − T u|` over interior nodes and levels ≥ 1.
    pub fn residual(&self) -> Result<f64, SolverError> {
        let op = DppOperator::new(&self.lattice, &self.problem)?;
        let interior: Vec<usize> = self.lattice.interior_nodes().collect();
        let worst = (1..self.lattice.level_count())
            .into_par_iter()
            .map(|level| {
                let prev = self.level(level - 1);
                interior
                    .iter()
                    .map(|&node| (self.get(node, level) - op.apply(prev, node, level)).abs())
                    .fold(0.0, f64::max)
            })
            .collect::<Vec<_>>();
        Ok(worst.into_iter().fold(0.0, f64::max))
    }

    /// Default contact tolerance `1e-9·(1 + max|ψ|)` over the interior nodes.
    pub fn default_contact_tol(&self) -> f64 {
        let mut m: f64 = 0.0;
        for level in 1..self.lattice.level_count() {
            let t = self.lattice.time(level);
            for node in self.lattice.interior_nodes() {
                m = m.max(self.problem.psi(&self.lattice.coords(node), t).abs());
            }
        }
        1e-9 * (1.0 + m)
    }

    /// Interior nodes at levels ≥ 1 where `u − ψ ≤ tol`.
    pub fn contact_set(&self, tol: f64) -> ContactSet {
        let mut entries = Vec::new();
        for level in 1..self.lattice.level_count() {
            let t = self.lattice.time(level);
            for node in self.lattice.interior_nodes() {
                let gap = self.get(node, level) - self.problem.psi(&self.lattice.coords(node), t);
                if gap <= tol {
                    entries.push((node, level));
                }
            }
        }
        ContactSet { tol, entries }
    }

    /// Largest absolute difference between two fields on the same lattice.
    pub fn max_abs_diff(&self, other: &ValueField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .filter(|(a, _)| !a.is_nan())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Lattice points where the value touches the obstacle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactSet {
    pub tol: f64,
    /// `(node, level)` pairs in level-major order.
    pub entries: Vec<(usize, usize)>,
}

impl ContactSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, node: usize, level: usize) -> bool {
        self.entries.binary_search_by(|&(n, l)| (l, n).cmp(&(level, node))).is_ok()
    }
}

fn build_lattice(problem: &Problem, h: f64) -> Result<(SpaceTimeLattice, CompatibilityReport), SolverError> {
    let lattice = SpaceTimeLattice::new(problem.domain.clone(), problem.params.eps, h, problem.params.t_final)?;
    let report = validate_compatibility(problem, &lattice)?;
    Ok((lattice, report))
}

fn initial_levels(lattice: &SpaceTimeLattice, problem: &Problem, interior_fill: impl Fn(&Point, f64) -> f64) -> Vec<f64> {
    let n = lattice.node_count();
    let mut values = vec![f64::NAN; n * lattice.level_count()];
    for level in 0..lattice.level_count() {
        let t = lattice.time(level);
        let layer = &mut values[level * n..(level + 1) * n];
        for (node, v) in layer.iter_mut().enumerate() {
            let x = lattice.coords(node);
            *v = match lattice.class(node) {
                NodeClass::Exterior => f64::NAN,
                NodeClass::LateralStrip => problem.f(&x, t),
                NodeClass::Interior if level == 0 => problem.f(&x, t),
                NodeClass::Interior => interior_fill(&x, t),
            };
        }
    }
    values
}

/// Computes `u^ε` level by level: level 0 and the strip from `F`, then each
/// level from the previous one through `T`.
pub fn solve_time_marching(problem: &Problem, h: f64) -> Result<ValueField, SolverError> {
    let (lattice, _) = build_lattice(problem, h)?;
    let op = DppOperator::new(&lattice, problem)?;
    let n = lattice.node_count();
    let mut values = initial_levels(&lattice, problem, |_, _| f64::NAN);
    for level in 1..lattice.level_count() {
        let (done, rest) = values.split_at_mut(level * n);
        op.sweep_level(&done[(level - 1) * n..], &mut rest[..n], level);
    }
    drop(op);
    Ok(ValueField::from_values(lattice, problem.clone(), values))
}

/// Iterates `u_{k+1} = T u_k` on the whole field from `u_0 = ψ` in Ω_T and
/// `F` on Γ_p^ε until no value moves by more than 1e-14.
///
/// Returns the field and the number of sweeps, counting the final sweep that
/// confirms stabilization. At most `M + 1` sweeps are ever needed.
pub fn solve_fixed_point(problem: &Problem, h: f64, max_iters: usize) -> Result<(ValueField, usize), SolverError> {
    let (lattice, _) = build_lattice(problem, h)?;
    let op = DppOperator::new(&lattice, problem)?;
    let n = lattice.node_count();
    let limit = (lattice.last_level() + 1).min(max_iters);
    let mut current = initial_levels(&lattice, problem, |x, t| problem.psi(x, t));
    let mut next = current.clone();
    let mut iterations = 0;
    loop {
        iterations += 1;
        for level in 1..lattice.level_count() {
            op.sweep_level(&current[(level - 1) * n..level * n], &mut next[level * n..(level + 1) * n], level);
        }
        let change = current
            .iter()
            .zip(&next)
            .filter(|(a, _)| !a.is_nan())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut current, &mut next);
        if change <= 1e-14 {
            break;
        }
        if iterations >= limit {
            return Err(SolverError::NonStabilizing { iterations, limit });
        }
    }
    drop(op);
    Ok((ValueField::from_values(lattice, problem.clone(), current), iterations))
}

/// Which limit the consistency probe compares against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeBranch {
    /// Gradient branch when `∇φ ≠ 0`, eigenvalue bracket otherwise.
    Auto,
    /// `(p − 2)Δ_∞φ + Δφ − (n + p)φ_t`; fails at critical points.
    Gradient,
    /// `[(p − 2)λ_min + Δφ − (n + p)φ_t, (p − 2)λ_max + Δφ − (n + p)φ_t]`.
    Critical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub eps: f64,
    pub h: f64,
    /// `(Tφ − φ)(x, t) / (ε² / (2(n + p)))`.
    pub scaled: f64,
    pub target_lo: f64,
    pub target_hi: f64,
    /// Distance from `scaled` to the target interval.
    pub gap: f64,
    pub rel_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeTable {
    pub p: f64,
    pub n: usize,
    pub branch: ProbeBranch,
    pub rows: Vec<ProbeRow>,
}

impl ProbeTable {
    /// True when the gap does not grow along the ladder, allowing `slack`
    /// for round-off.
    pub fn gap_nonincreasing(&self, slack: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].gap <= w[0].gap + slack)
    }
}

/// Applies the lattice operator to a smooth `φ` at `(x, t)` for each `(ε, h)`
/// and compares the scaled increment with the limiting differential operator.
/// The obstacle branch of `T` is not involved.
pub fn consistency_probe(
    p: f64,
    phi: &Expr,
    x: &Point,
    t: f64,
    ladder: &[(f64, f64)],
    branch: ProbeBranch,
) -> Result<ProbeTable, SolverError> {
    let n = x.dim();
    let params0 = GameParameters::new(p, n, 1.0, 1.0)?;
    let jet = phi.jet(x, t)?;
    let nf = n as f64;
    let lap = jet.laplacian();
    let (target_lo, target_hi, used) = match (branch, jet.infinity_laplacian()) {
        (ProbeBranch::Gradient, None) => return Err(SolverError::DegenerateGradient),
        (ProbeBranch::Gradient | ProbeBranch::Auto, Some(inf_lap)) => {
            let v = (p - 2.0) * inf_lap + lap - (nf + p) * jet.dt;
            (v, v, ProbeBranch::Gradient)
        }
        (ProbeBranch::Critical, _) | (ProbeBranch::Auto, None) => {
            let eig = DMatrix::from_row_slice(n, n, &jet.hess).symmetric_eigen().eigenvalues;
            let lmin = eig.iter().copied().fold(f64::INFINITY, f64::min);
            let lmax = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let base = lap - (nf + p) * jet.dt;
            (base + (p - 2.0) * lmin, base + (p - 2.0) * lmax, ProbeBranch::Critical)
        }
    };

    let mut rows = Vec::with_capacity(ladder.len());
    for &(eps, h) in ladder {
        let params = params0.with_eps(eps)?;
        let strides = [0usize; crate::geometry::MAX_DIM];
        let template = StencilTemplate::build(n, h, eps, &strides);
        if template.len() < 3 {
            return Err(GeometryError::StencilTooSmall {
                node: 0,
                count: template.len(),
            }
            .into());
        }
        let weights = ball_mean_weights(&template, n, eps, h)?;
        let s = t - eps * eps / 2.0;
        let at = |k: &[i64; crate::geometry::MAX_DIM]| {
            let mut y = *x;
            for i in 0..n {
                y.as_mut_slice()[i] += k[i] as f64 * h;
            }
            phi.eval(&y, s)
        };
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        let mut mean = 0.0;
        for (k, w) in template.members.iter().zip(&weights) {
            let v = at(k);
            hi = hi.max(v);
            lo = lo.min(v);
            mean += w * v;
        }
        for k in &template.rim {
            let v = at(k);
            hi = hi.max(v);
            lo = lo.min(v);
        }
        let t_phi = 0.5 * params.alpha * (hi + lo) + params.beta * mean;
        let scaled = (t_phi - jet.value) / (eps * eps / (2.0 * (nf + p)));
        let gap = if scaled < target_lo {
            target_lo - scaled
        } else if scaled > target_hi {
            scaled - target_hi
        } else {
            0.0
        };
        let scale = target_lo.abs().max(target_hi.abs());
        rows.push(ProbeRow {
            eps,
            h,
            scaled,
            target_lo,
            target_hi,
            gap,
            rel_gap: if scale > 0.0 { gap / scale } else { gap },
        });
    }
    Ok(ProbeTable {
        p,
        n,
        branch: used,
        rows,
    })
}
