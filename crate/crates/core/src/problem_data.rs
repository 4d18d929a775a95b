//! Game parameters, boundary data `F`, obstacle `ψ` and the payoff `G`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{classify_node, Domain, NodeClass, Point, SpaceTimeLattice, MAX_DIM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "obstacle exceeds boundary data at {point} (level {level}): ψ − F = {excess:e}"
    )]
    Incompatible {
        node: usize,
        level: usize,
        point: Point,
        excess: f64,
    },
    #[error("point {0} lies outside Ω ∪ S_ε")]
    OutOfDomain(Point),
    #[error("expression `{0}` has no closed-form second derivatives")]
    NotSmooth(&'static str),
}

/// PDE and game parameters with the tug-of-war weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameParameters {
    pub p: f64,
    pub n: usize,
    pub eps: f64,
    pub t_final: f64,
    /// Probability of a coin toss, `(p − 2)/(p + n)`.
    pub alpha: f64,
    /// Probability of a noise move, `1 − α = (n + 2)/(p + n)`.
    pub beta: f64,
}

impl GameParameters {
    pub fn new(p: f64, n: usize, eps: f64, t_final: f64) -> Result<Self, ProblemError> {
        if !(p.is_finite() && p >= 2.0) {
            return Err(ProblemError::InvalidParameter(format!("p ≥ 2 required, got p = {p}")));
        }
        if n == 0 || n > MAX_DIM {
            return Err(ProblemError::InvalidParameter(format!(
                "dimension n = {n} outside 1..={MAX_DIM}"
            )));
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(ProblemError::InvalidParameter(format!("ε > 0 required, got {eps}")));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(ProblemError::InvalidParameter(format!("T > 0 required, got {t_final}")));
        }
        let alpha = (p - 2.0) / (p + n as f64);
        Ok(GameParameters {
            p,
            n,
            eps,
            t_final,
            alpha,
            beta: 1.0 - alpha,
        })
    }

    /// Same `p`, `n` and `T` with a different step.
    pub fn with_eps(&self, eps: f64) -> Result<Self, ProblemError> {
        Self::new(self.p, self.n, eps, self.t_final)
    }

    pub fn step_time(&self) -> f64 {
        self.eps * self.eps / 2.0
    }
}

/// Convenience wrapper for [`GameParameters::new`].
pub fn make_parameters(p: f64, n: usize, eps: f64, t_final: f64) -> Result<GameParameters, ProblemError> {
    GameParameters::new(p, n, eps, t_final)
}

/// Closed-form functions of `(x, t)` selectable from configuration.
///
/// Vector coefficients shorter than the point dimension are padded with
/// zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Expr {
    Constant {
        value: f64,
    },
    /// `c + a·x + b·t`
    Affine {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        gradient: Vec<f64>,
        #[serde(default)]
        time: f64,
    },
    /// `c + a·x + Σ qᵢ xᵢ² + b·t`
    Quadratic {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        linear: Vec<f64>,
        #[serde(default)]
        quadratic: Vec<f64>,
        #[serde(default)]
        time: f64,
    },
    /// `A·exp(−λt)·sin(π k·x + φ)`
    Trig {
        amplitude: f64,
        wave: Vec<f64>,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        decay: f64,
    },
    /// `H·(1 − |x − c|²/r²)₊²`, a C¹ bump.
    Bump {
        center: Vec<f64>,
        radius: f64,
        height: f64,
    },
    Sum {
        terms: Vec<Expr>,
    },
    Max {
        terms: Vec<Expr>,
    },
    Min {
        terms: Vec<Expr>,
    },
}

/// Value and exact derivatives at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Row-major n×n Hessian.
    pub hess: Vec<f64>,
    pub dt: f64,
}

impl Jet {
    fn zero(n: usize) -> Self {
        Jet {
            value: 0.0,
            grad: vec![0.0; n],
            hess: vec![0.0; n * n],
            dt: 0.0,
        }
    }

    pub fn laplacian(&self) -> f64 {
        let n = self.grad.len();
        (0..n).map(|i| self.hess[i * n + i]).sum()
    }

    /// `⟨D²φ ∇φ, ∇φ⟩ / |∇φ|²`, `None` at a critical point.
    pub fn infinity_laplacian(&self) -> Option<f64> {
        let n = self.grad.len();
        let g2: f64 = self.grad.iter().map(|g| g * g).sum();
        if g2 == 0.0 {
            return None;
        }
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += self.hess[i * n + j] * self.grad[i] * self.grad[j];
            }
        }
        Some(q / g2)
    }
}

fn coef(v: &[f64], i: usize) -> f64 {
    v.get(i).copied().unwrap_or(0.0)
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Constant { value }
    }

    pub fn eval(&self, x: &Point, t: f64) -> f64 {
        let xs = x.as_slice();
        match self {
            Expr::Constant { value } => *value,
            Expr::Affine {
                constant,
                gradient,
                time,
            } => constant + xs.iter().enumerate().map(|(i, xi)| coef(gradient, i) * xi).sum::<f64>() + time * t,
            Expr::Quadratic {
                constant,
                linear,
                quadratic,
                time,
            } => {
                constant
                    + xs
                        .iter()
                        .enumerate()
                        .map(|(i, xi)| coef(linear, i) * xi + coef(quadratic, i) * xi * xi)
                        .sum::<f64>()
                    + time * t
            }
            Expr::Trig {
                amplitude,
                wave,
                phase,
                decay,
            } => {
                let arg = std::f64::consts::PI * xs.iter().enumerate().map(|(i, xi)| coef(wave, i) * xi).sum::<f64>() + phase;
                amplitude * (-decay * t).exp() * arg.sin()
            }
            Expr::Bump {
                center,
                radius,
                height,
            } => {
                let r2: f64 = xs.iter().enumerate().map(|(i, xi)| (xi - coef(center, i)).powi(2)).sum();
                let s = 1.0 - r2 / (radius * radius);
                if s > 0.0 {
                    height * s * s
                } else {
                    0.0
                }
            }
            Expr::Sum { terms } => terms.iter().map(|e| e.eval(x, t)).sum(),
            Expr::Max { terms } => terms.iter().map(|e| e.eval(x, t)).fold(f64::NEG_INFINITY, f64::max),
            Expr::Min { terms } => terms.iter().map(|e| e.eval(x, t)).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Expr::Constant { .. } => "constant",
            Expr::Affine { .. } => "affine",
            Expr::Quadratic { .. } => "quadratic",
            Expr::Trig { .. } => "trig",
            Expr::Bump { .. } => "bump",
            Expr::Sum { .. } => "sum",
            Expr::Max { .. } => "max",
            Expr::Min { .. } => "min",
        }
    }

    /// Value, gradient, Hessian and time derivative.
    ///
    /// Available for the smooth registry entries and sums of them; `max`,
    /// `min` and `bump` (only C¹ at its support edge) are rejected.
    pub fn jet(&self, x: &Point, t: f64) -> Result<Jet, ProblemError> {
        let n = x.dim();
        let xs = x.as_slice();
        let mut jet = Jet::zero(n);
        match self {
            Expr::Constant { value } => jet.value = *value,
            Expr::Affine { gradient, time, .. } => {
                jet.value = self.eval(x, t);
                for i in 0..n {
                    jet.grad[i] = coef(gradient, i);
                }
                jet.dt = *time;
            }
            Expr::Quadratic {
                linear,
                quadratic,
                time,
                ..
            } => {
                jet.value = self.eval(x, t);
                for i in 0..n {
                    jet.grad[i] = coef(linear, i) + 2.0 * coef(quadratic, i) * xs[i];
                    jet.hess[i * n + i] = 2.0 * coef(quadratic, i);
                }
                jet.dt = *time;
            }
            Expr::Trig {
                amplitude,
                wave,
                phase,
                decay,
            } => {
                let pi = std::f64::consts::PI;
                let arg = pi * xs.iter().enumerate().map(|(i, xi)| coef(wave, i) * xi).sum::<f64>() + phase;
                let a = amplitude * (-decay * t).exp();
                jet.value = a * arg.sin();
                for i in 0..n {
                    let ki = pi * coef(wave, i);
                    jet.grad[i] = a * ki * arg.cos();
                    for j in 0..n {
                        jet.hess[i * n + j] = -a * ki * pi * coef(wave, j) * arg.sin();
                    }
                }
                jet.dt = -decay * jet.value;
            }
            Expr::Sum { terms } => {
                for term in terms {
                    let j = term.jet(x, t)?;
                    jet.value += j.value;
                    jet.dt += j.dt;
                    for (a, b) in jet.grad.iter_mut().zip(&j.grad) {
                        *a += b;
                    }
                    for (a, b) in jet.hess.iter_mut().zip(&j.hess) {
                        *a += b;
                    }
                }
            }
            Expr::Bump { .. } | Expr::Max { .. } | Expr::Min { .. } => {
                return Err(ProblemError::NotSmooth(self.name()));
            }
        }
        Ok(jet)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("expressions serialize");
        hex::encode(Sha256::digest(&json))
    }
}

/// Boundary data `F` on the parabolic strip Γ_p^ε.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub f: Expr,
    /// Constant C₁ of the parabolic Lipschitz bound.
    pub lipschitz: f64,
}

/// Obstacle `ψ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub psi: Expr,
    /// Constant C₂ of the parabolic Lipschitz bound.
    pub lipschitz: f64,
}

/// Everything needed to define `u^ε`: parameters, Ω, `F` and `ψ`.
#[derive(Clone, Debug)]
pub struct Problem {
    pub params: GameParameters,
    pub domain: Domain,
    pub boundary: BoundaryData,
    pub obstacle: Obstacle,
}

/// Where a space-time point sits relative to Γ_p^ε and Ω_T.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PayoffBranch {
    /// Lateral strip `S_ε × (−ε²/2, T]`: pays `F`.
    Strip,
    /// Initial slab `Ω × (−ε²/2, 0]`: pays `F`.
    InitialSlab,
    /// Ω_T: player I stopping pays `ψ`.
    Obstacle,
}

impl Problem {
    pub fn new(
        params: GameParameters,
        domain: Domain,
        boundary: BoundaryData,
        obstacle: Obstacle,
    ) -> Result<Self, ProblemError> {
        if domain.dim() != params.n {
            return Err(ProblemError::InvalidParameter(format!(
                "domain dimension {} differs from n = {}",
                domain.dim(),
                params.n
            )));
        }
        Ok(Problem {
            params,
            domain,
            boundary,
            obstacle,
        })
    }

    /// Same data with a different step ε.
    pub fn with_eps(&self, eps: f64) -> Result<Self, ProblemError> {
        Ok(Problem {
            params: self.params.with_eps(eps)?,
            ..self.clone()
        })
    }

    pub fn time(&self, level: usize) -> f64 {
        level as f64 * self.params.step_time()
    }

    pub fn f(&self, x: &Point, t: f64) -> f64 {
        self.boundary.f.eval(x, t)
    }

    pub fn psi(&self, x: &Point, t: f64) -> f64 {
        self.obstacle.psi.eval(x, t)
    }

    pub fn classify(&self, x: &Point) -> NodeClass {
        classify_node(&self.domain, x, self.params.eps)
    }

    pub fn payoff_branch(&self, x: &Point, level: usize) -> Result<PayoffBranch, ProblemError> {
        match self.classify(x) {
            NodeClass::Exterior => Err(ProblemError::OutOfDomain(*x)),
            NodeClass::LateralStrip => Ok(PayoffBranch::Strip),
            NodeClass::Interior if level == 0 => Ok(PayoffBranch::InitialSlab),
            NodeClass::Interior => Ok(PayoffBranch::Obstacle),
        }
    }

    /// The payoff `G(x, t_j)`: `F` on Γ_p^ε, `ψ` on Ω_T.
    pub fn payoff(&self, x: &Point, level: usize) -> Result<f64, ProblemError> {
        let t = self.time(level);
        Ok(match self.payoff_branch(x, level)? {
            PayoffBranch::Strip | PayoffBranch::InitialSlab => self.f(x, t),
            PayoffBranch::Obstacle => self.psi(x, t),
        })
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.boundary.f.fingerprint().as_bytes());
        h.update(self.obstacle.psi.fingerprint().as_bytes());
        h.update(serde_json::to_vec(&self.params).expect("parameters serialize"));
        h.update(format!("{:?}", self.domain.shape()).as_bytes());
        hex::encode(h.finalize())
    }
}

/// Outcome of [`validate_compatibility`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    /// `min (F − ψ)` over the sampled Γ_p^ε.
    pub min_margin: f64,
    /// Largest `|ΔF| / (|Δx| + |Δt|^{1/2})` over lattice-neighbour pairs on Γ_p^ε.
    pub lipschitz_f: f64,
    /// Same quotient for `ψ` over all non-exterior nodes and levels.
    pub lipschitz_psi: f64,
    pub warnings: Vec<String>,
}

/// Checks `ψ ≤ F` on the sampled Γ_p^ε (every strip node at every level and
/// every node at level 0) and measures empirical Lipschitz quotients.
///
/// Lipschitz excesses over the declared constants only produce warnings.
pub fn validate_compatibility(problem: &Problem, lattice: &SpaceTimeLattice) -> Result<CompatibilityReport, ProblemError> {
    let levels = lattice.level_count();
    let dt_half = (problem.params.step_time()).sqrt();
    let mut min_margin = f64::INFINITY;
    let mut worst: Option<(usize, usize, f64)> = None;

    let on_gamma = |node: usize, level: usize| {
        lattice.class(node) == NodeClass::LateralStrip || (level == 0 && lattice.class(node) != NodeClass::Exterior)
    };

    for level in 0..levels {
        let t = lattice.time(level);
        for node in lattice.active_nodes() {
            if !on_gamma(node, level) {
                continue;
            }
            let x = lattice.coords(node);
            let margin = problem.f(&x, t) - problem.psi(&x, t);
            if margin < min_margin {
                min_margin = margin;
            }
            if margin < 0.0 && worst.is_none_or(|(_, _, e)| -margin > e) {
                worst = Some((node, level, -margin));
            }
        }
    }
    if let Some((node, level, excess)) = worst {
        return Err(ProblemError::Incompatible {
            node,
            level,
            point: lattice.coords(node),
            excess,
        });
    }

    let mut lip_f: f64 = 0.0;
    let mut lip_psi: f64 = 0.0;
    let h = lattice.h();
    let dim = lattice.dim();
    for level in 0..levels {
        let t = lattice.time(level);
        for node in lattice.active_nodes() {
            let x = lattice.coords(node);
            let f0 = problem.f(&x, t);
            let p0 = problem.psi(&x, t);
            let k = lattice.multi_index(node);
            for axis in 0..dim {
                let mut kk = k;
                kk[axis] += 1;
                let Some(other) = lattice.node_at(&kk[..dim]) else { continue };
                if lattice.class(other) == NodeClass::Exterior {
                    continue;
                }
                let y = lattice.coords(other);
                lip_psi = lip_psi.max((problem.psi(&y, t) - p0).abs() / h);
                if on_gamma(node, level) && on_gamma(other, level) {
                    lip_f = lip_f.max((problem.f(&y, t) - f0).abs() / h);
                }
            }
            if level + 1 < levels {
                let t1 = lattice.time(level + 1);
                lip_psi = lip_psi.max((problem.psi(&x, t1) - p0).abs() / dt_half);
                if on_gamma(node, level) && on_gamma(node, level + 1) {
                    lip_f = lip_f.max((problem.f(&x, t1) - f0).abs() / dt_half);
                }
            }
        }
    }

    let mut warnings = Vec::new();
    if lip_f > problem.boundary.lipschitz * (1.0 + 1e-9) {
        warnings.push(format!(
            "boundary data quotient {lip_f:.4} exceeds declared C1 = {}",
            problem.boundary.lipschitz
        ));
    }
    if lip_psi > problem.obstacle.lipschitz * (1.0 + 1e-9) {
        warnings.push(format!(
            "obstacle quotient {lip_psi:.4} exceeds declared C2 = {}",
            problem.obstacle.lipschitz
        ));
    }
    Ok(CompatibilityReport {
        min_margin,
        lipschitz_f: lip_f,
        lipschitz_psi: lip_psi,
        warnings,
    })
}
