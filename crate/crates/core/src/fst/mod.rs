//! Fair Score Transformer.
//!
//! Given calibrated scores `r`, finds transformed scores `s` minimizing the
//! summed cross-entropy `Σ -r ln s - (1-r) ln(1-s)` subject to four linear
//! constraints bounding the generalized equalized-odds gap by `epsilon`:
//! for each label class `y` and sign `σ`,
//!
//! ```text
//! σ · Σ_i u_i(y) (1[a_i = 1] / U[y][1] - 1[a_i = 0] / U[y][0]) · s_i <= epsilon
//! ```
//!
//! with label-free weights `u_i(1) = r_i`, `u_i(0) = 1 - r_i` and group
//! normalizers `U[y][a] = Σ_{a_i = a} u_i(y)`.
//!
//! The Lagrangian separates per sample, so the transform is a pure function
//! of `(r, a)` and the four dual variables. Two solvers maximize the dual:
//! scaled projected gradient ascent ([`Solver::Pgd`]) and an ADMM splitting
//! whose per-sample step is a cubic ([`Solver::Admm`]).

mod admm;
mod inner;
mod pgd;

use serde::{Deserialize, Serialize};

use crate::calibrate::clamp_score;
use crate::dataset::ScoredDataset;
use crate::error::{Error, Result};
use crate::metrics::EoMode;
use crate::numeric::CompensatedSum;

pub use inner::{admm_cubic_step, cross_entropy, primal_from_mu};

/// Constraint order used for `lambdas`: (label class, sign).
pub const CONSTRAINTS: [(usize, f64); 4] = [(1, 1.0), (1, -1.0), (0, 1.0), (0, -1.0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// Projected dual gradient ascent (reference path).
    #[default]
    Pgd,
    /// ADMM with the closed-form cubic per-sample step.
    Admm,
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgd" => Ok(Solver::Pgd),
            "admm" => Ok(Solver::Admm),
            other => Err(Error::invalid(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FstOptions {
    pub solver: Solver,
    pub mode: EoMode,
    pub max_iters: usize,
    /// Allowed constraint violation at termination.
    pub tol_feas: f64,
    /// Relative dual-objective change at termination.
    pub rel_tol: f64,
    /// Initial ADMM penalty.
    pub admm_rho: f64,
}

impl Default for FstOptions {
    fn default() -> Self {
        Self {
            solver: Solver::Pgd,
            mode: EoMode::Complement,
            max_iters: 10_000,
            tol_feas: 1e-3,
            rel_tol: 1e-9,
            admm_rho: 1.0,
        }
    }
}

/// Weight sums `U[y][group]`, indexed by label class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizers {
    pub sensitive: [f64; 2],
    pub complement: [f64; 2],
    pub overall: [f64; 2],
}

impl Normalizers {
    /// Per-class coefficients of one sample in the constraint rows (sign
    /// `+1`). Samples without a membership annotation get zero.
    pub fn coefficients(&self, mode: EoMode, r: f64, member: Option<bool>) -> [f64; 2] {
        let Some(sensitive) = member else {
            return [0.0, 0.0];
        };
        let mut out = [0.0; 2];
        for (y, c) in out.iter_mut().enumerate() {
            let u = if y == 1 { r } else { 1.0 - r };
            let g = match (mode, sensitive) {
                (EoMode::Complement, true) => 1.0 / self.sensitive[y],
                (EoMode::Complement, false) => -1.0 / self.complement[y],
                (EoMode::Overall, true) => 1.0 / self.sensitive[y] - 1.0 / self.overall[y],
                (EoMode::Overall, false) => -1.0 / self.overall[y],
            };
            *c = u * g;
        }
        out
    }
}

#[inline]
pub(crate) fn multiplier(lambdas: &[f64; 4], coef: &[f64; 2]) -> f64 {
    let mut mu = 0.0;
    for (l, (y, sign)) in lambdas.iter().zip(CONSTRAINTS) {
        if *l != 0.0 {
            mu += l * sign * coef[y];
        }
    }
    mu
}

/// Dual function value, its gradient and the primal scores it induces.
#[derive(Debug, Clone)]
pub struct DualEval {
    pub value: f64,
    pub gradient: [f64; 4],
    pub scores: Vec<f64>,
    /// `max_j (constraint_j(s) - epsilon)^+`.
    pub max_violation: f64,
}

/// The constraint system frozen on a fit split.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    epsilon: f64,
    mode: EoMode,
    normalizers: Normalizers,
    scores: Vec<f64>,
    coef: Vec<[f64; 2]>,
}

impl ConstraintSystem {
    pub fn from_dataset(ds: &ScoredDataset, attribute: &str, epsilon: f64, mode: EoMode) -> Result<Self> {
        let raw = ds.scores()?;
        let membership = ds.membership(attribute)?;
        Self::new(&raw, &membership, epsilon, mode)
    }

    pub fn new(raw_scores: &[f64], membership: &[Option<bool>], epsilon: f64, mode: EoMode) -> Result<Self> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::invalid(format!("epsilon = {epsilon} must be positive")));
        }
        if raw_scores.len() != membership.len() {
            return Err(Error::LengthMismatch {
                expected: raw_scores.len(),
                actual: membership.len(),
            });
        }
        if let Some(s) = raw_scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::invalid(format!("score {s} outside [0, 1]")));
        }
        let scores: Vec<f64> = raw_scores.iter().map(|&s| clamp_score(s)).collect();
        let mut sums = [[CompensatedSum::new(); 2]; 3];
        for (&r, m) in scores.iter().zip(membership) {
            let pop = match m {
                Some(true) => 0,
                Some(false) => 1,
                None => continue,
            };
            for (y, u) in [(0, 1.0 - r), (1, r)] {
                sums[pop][y].add(u);
                sums[2][y].add(u);
            }
        }
        let value = |p: usize| [sums[p][0].value(), sums[p][1].value()];
        let normalizers = Normalizers {
            sensitive: value(0),
            complement: value(1),
            overall: value(2),
        };
        for (name, u) in [("sensitive", normalizers.sensitive), ("complement", normalizers.complement)] {
            if u.iter().any(|w| w.is_nan() || *w <= 0.0) {
                return Err(Error::Infeasible(format!(
                    "{name} group has no weight mass (empty group)"
                )));
            }
        }
        let coef = scores
            .iter()
            .zip(membership)
            .map(|(&r, &m)| normalizers.coefficients(mode, r, m))
            .collect();
        Ok(Self {
            epsilon,
            mode,
            normalizers,
            scores,
            coef,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn normalizers(&self) -> &Normalizers {
        &self.normalizers
    }

    /// Clamped input scores.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub(crate) fn coef(&self) -> &[[f64; 2]] {
        &self.coef
    }

    /// Per-class row sums `Σ_i coef_i[y] s_i`.
    pub fn class_gaps(&self, s: &[f64]) -> [f64; 2] {
        let mut acc = [CompensatedSum::new(); 2];
        for (c, &si) in self.coef.iter().zip(s) {
            acc[0].add(c[0] * si);
            acc[1].add(c[1] * si);
        }
        [acc[0].value(), acc[1].value()]
    }

    /// Constraint left-hand sides in [`CONSTRAINTS`] order.
    pub fn constraint_values(&self, s: &[f64]) -> [f64; 4] {
        let gaps = self.class_gaps(s);
        CONSTRAINTS.map(|(y, sign)| sign * gaps[y])
    }

    /// The weighted GEO gap of `s`: `max_y |Σ_i coef_i[y] s_i|`.
    pub fn geo_gap(&self, s: &[f64]) -> f64 {
        let g = self.class_gaps(s);
        g[0].abs().max(g[1].abs())
    }

    pub fn multipliers(&self, lambdas: &[f64; 4]) -> Vec<f64> {
        self.coef.iter().map(|c| multiplier(lambdas, c)).collect()
    }

    /// Primal scores minimizing the Lagrangian at `lambdas`.
    pub fn primal(&self, lambdas: &[f64; 4]) -> Vec<f64> {
        self.scores
            .iter()
            .zip(&self.coef)
            .map(|(&r, c)| inner::primal_from_mu_unchecked(r, multiplier(lambdas, c)))
            .collect()
    }

    /// Summed cross-entropy of `s` against the input scores.
    pub fn cross_entropy(&self, s: &[f64]) -> f64 {
        self.scores
            .iter()
            .zip(s)
            .map(|(&r, &si)| cross_entropy(r, si))
            .collect::<CompensatedSum>()
            .value()
    }

    /// Concave dual `D(λ) = Σ_i [CE_i(s_i) + μ_i s_i] - ε Σ_j λ_j`, with
    /// gradient `constraint_j(s(λ)) - ε`.
    pub fn dual(&self, lambdas: &[f64; 4]) -> DualEval {
        let mut value = CompensatedSum::new();
        let mut gaps = [CompensatedSum::new(); 2];
        let mut scores = Vec::with_capacity(self.scores.len());
        for (&r, c) in self.scores.iter().zip(&self.coef) {
            let mu = multiplier(lambdas, c);
            let s = inner::primal_from_mu_unchecked(r, mu);
            value.add(cross_entropy(r, s) + mu * s);
            gaps[0].add(c[0] * s);
            gaps[1].add(c[1] * s);
            scores.push(s);
        }
        let penalty: f64 = lambdas.iter().sum::<f64>() * self.epsilon;
        let gaps = [gaps[0].value(), gaps[1].value()];
        let gradient = CONSTRAINTS.map(|(y, sign)| sign * gaps[y] - self.epsilon);
        let max_violation = gradient.iter().fold(0.0f64, |m, g| m.max(*g));
        DualEval {
            value: value.value() - penalty,
            gradient,
            scores,
            max_violation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FstDiagnostics {
    pub solver: Solver,
    pub iterations: usize,
    pub max_violation: f64,
    pub dual_objective: f64,
    /// Weighted GEO gap of the fit split before and after the transform.
    pub baseline_geo: f64,
    pub fitted_geo: f64,
    pub n_fit: usize,
}

/// Fitted transform: dual variables plus the frozen normalizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FstModel {
    pub attribute: String,
    pub epsilon: f64,
    pub eo_mode: EoMode,
    pub lambdas: [f64; 4],
    pub normalizers: Normalizers,
    pub diagnostics: FstDiagnostics,
}

impl FstModel {
    /// Per-sample multiplier `μ(r, a; λ)`.
    pub fn multiplier(&self, r: f64, member: Option<bool>) -> f64 {
        let c = self.normalizers.coefficients(self.eo_mode, clamp_score(r), member);
        multiplier(&self.lambdas, &c)
    }

    /// Transformed score. Exactly `r` wherever the multiplier vanishes.
    pub fn transform(&self, r: f64, member: Option<bool>) -> Result<f64> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::invalid(format!("score {r} outside [0, 1]")));
        }
        let mu = self.multiplier(r, member);
        if mu == 0.0 {
            return Ok(r);
        }
        Ok(inner::primal_from_mu_unchecked(clamp_score(r), mu))
    }

    pub fn transform_scores(&self, scores: &[f64], membership: &[Option<bool>]) -> Result<Vec<f64>> {
        if scores.len() != membership.len() {
            return Err(Error::LengthMismatch {
                expected: scores.len(),
                actual: membership.len(),
            });
        }
        scores
            .iter()
            .zip(membership)
            .map(|(&r, &m)| self.transform(r, m))
            .collect()
    }

    /// Maps every record's score through the transform.
    pub fn apply(&self, ds: &ScoredDataset) -> Result<ScoredDataset> {
        let scores = ds.scores()?;
        let membership = ds.membership(&self.attribute)?;
        ds.with_scores(&self.transform_scores(&scores, &membership)?)
    }

    pub fn is_identity(&self) -> bool {
        self.lambdas.iter().all(|l| *l == 0.0)
    }
}

/// Solver output shared by both paths.
pub(crate) struct SolveOutcome {
    pub lambdas: [f64; 4],
    pub iterations: usize,
    pub eval: DualEval,
}

pub fn fit(ds: &ScoredDataset, attribute: &str, epsilon: f64, opts: &FstOptions) -> Result<FstModel> {
    let system = ConstraintSystem::from_dataset(ds, attribute, epsilon, opts.mode)?;
    fit_system(&system, attribute, opts)
}

pub fn fit_system(system: &ConstraintSystem, attribute: &str, opts: &FstOptions) -> Result<FstModel> {
    if opts.max_iters == 0 {
        return Err(Error::invalid("max_iters must be positive"));
    }
    let outcome = match opts.solver {
        Solver::Pgd => pgd::solve(system, opts)?,
        Solver::Admm => admm::solve(system, opts)?,
    };
    let baseline_geo = system.geo_gap(system.scores());
    let fitted_geo = system.geo_gap(&outcome.eval.scores);
    Ok(FstModel {
        attribute: attribute.to_string(),
        epsilon: system.epsilon(),
        eo_mode: system.mode,
        lambdas: outcome.lambdas,
        normalizers: *system.normalizers(),
        diagnostics: FstDiagnostics {
            solver: opts.solver,
            iterations: outcome.iterations,
            max_violation: outcome.eval.max_violation,
            dual_objective: outcome.eval.value,
            baseline_geo,
            fitted_geo,
            n_fit: system.len(),
        },
    })
}
