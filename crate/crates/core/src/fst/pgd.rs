//! Projected gradient ascent on the dual, scaled by a fixed diagonal
//! preconditioner and step-sized by backtracking.

use super::{ConstraintSystem, FstOptions, SolveOutcome, CONSTRAINTS};
use crate::error::{Error, Result};

const MIN_STEP: f64 = 1e-40;

/// Inverse curvature of the dual along each coordinate at `λ = 0`.
fn preconditioner(system: &ConstraintSystem) -> [f64; 4] {
    let mut curv = [0.0f64; 2];
    for (c, &r) in system.coef().iter().zip(system.scores()) {
        let v = r * (1.0 - r);
        curv[0] += c[0] * c[0] * v;
        curv[1] += c[1] * c[1] * v;
    }
    CONSTRAINTS.map(|(y, _)| 1.0 / curv[y].max(1e-300))
}

pub(super) fn solve(system: &ConstraintSystem, opts: &FstOptions) -> Result<SolveOutcome> {
    let scale = preconditioner(system);
    let mut lambdas = [0.0f64; 4];
    let mut eval = system.dual(&lambdas);
    let mut step = 1.0f64;

    for it in 1..=opts.max_iters {
        let (next, next_eval) = loop {
            let mut cand = [0.0f64; 4];
            for j in 0..4 {
                cand[j] = (lambdas[j] + step * scale[j] * eval.gradient[j]).max(0.0);
            }
            let cand_eval = system.dual(&cand);
            let mut linear = 0.0;
            let mut quad = 0.0;
            for j in 0..4 {
                let d = cand[j] - lambdas[j];
                linear += eval.gradient[j] * d;
                quad += d * d / scale[j];
            }
            let bound = eval.value + linear - quad / (2.0 * step);
            if cand_eval.value >= bound - 1e-12 * eval.value.abs().max(1.0) || step < MIN_STEP {
                break (cand, cand_eval);
            }
            step *= 0.5;
        };

        let rel = (next_eval.value - eval.value).abs() / next_eval.value.abs().max(1.0);
        let stalled = next == lambdas;
        lambdas = next;
        eval = next_eval;
        if eval.max_violation <= opts.tol_feas && (rel <= opts.rel_tol || stalled) {
            return Ok(SolveOutcome {
                lambdas,
                iterations: it,
                eval,
            });
        }
        step *= 2.0;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iters,
        max_violation: eval.max_violation,
        dual_objective: eval.value,
    })
}
