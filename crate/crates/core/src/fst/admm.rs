//! ADMM on the consensus split `s = z`, with the cross-entropy on `s` and
//! the constraint polytope on `z`.
//!
//! The `s`-step is the per-sample cubic. The `z`-step is the exact Euclidean
//! projection onto `{z : |a_0 · z| <= eps, |a_1 · z| <= eps}`, found by
//! enumerating the at most two active rows. With scaled dual `w`, the
//! projection multipliers `κ` give the dual variables `λ = ρ κ`.

use super::inner::admm_cubic_step_unchecked;
use super::{ConstraintSystem, FstOptions, SolveOutcome, CONSTRAINTS};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

const CHECK_EVERY: usize = 5;
const BALANCE_RATIO: f64 = 10.0;
const BALANCE_UNTIL: usize = 2_000;

struct Projector {
    gram: [[f64; 2]; 2],
    epsilon: f64,
}

/// Active-set candidates as indices into [`CONSTRAINTS`].
const ACTIVE_SETS: [&[usize]; 8] = [&[0], &[1], &[2], &[3], &[0, 2], &[0, 3], &[1, 2], &[1, 3]];

impl Projector {
    /// Projection multipliers `κ_j >= 0` for the point with row products `t`.
    fn multipliers(&self, t: [f64; 2]) -> [f64; 4] {
        let eps = self.epsilon;
        if t[0].abs() <= eps && t[1].abs() <= eps {
            return [0.0; 4];
        }
        let tol = 1e-12 * eps.max(t[0].abs()).max(t[1].abs());
        let mut best: Option<([f64; 4], f64)> = None;
        for set in ACTIVE_SETS {
            let Some(kappa) = self.solve_active(set, t) else {
                continue;
            };
            if kappa.iter().any(|k| *k < 0.0) {
                continue;
            }
            let z = self.rows_after(t, &kappa);
            let excess = (z[0].abs() - eps).max(z[1].abs() - eps).max(0.0);
            if excess <= tol {
                return kappa;
            }
            if best.map_or(true, |(_, e)| excess < e) {
                best = Some((kappa, excess));
            }
        }
        best.map(|(k, _)| k).unwrap_or([0.0; 4])
    }

    fn solve_active(&self, set: &[usize], t: [f64; 2]) -> Option<[f64; 4]> {
        let g = &self.gram;
        let mut kappa = [0.0; 4];
        match *set {
            [j] => {
                let (y, sign) = CONSTRAINTS[j];
                if g[y][y] <= 0.0 {
                    return None;
                }
                kappa[j] = (sign * t[y] - self.epsilon) / g[y][y];
            }
            [j, k] => {
                let (yj, sj) = CONSTRAINTS[j];
                let (yk, sk) = CONSTRAINTS[k];
                let a = g[yj][yj];
                let b = sj * sk * g[yj][yk];
                let d = g[yk][yk];
                let det = a * d - b * b;
                if det <= 1e-12 * a * d {
                    return None;
                }
                let rj = sj * t[yj] - self.epsilon;
                let rk = sk * t[yk] - self.epsilon;
                kappa[j] = (d * rj - b * rk) / det;
                kappa[k] = (a * rk - b * rj) / det;
            }
            _ => return None,
        }
        Some(kappa)
    }

    /// Row products `a_y · z` for `z = x - Σ_j κ_j σ_j a_{y_j}`.
    fn rows_after(&self, t: [f64; 2], kappa: &[f64; 4]) -> [f64; 2] {
        let mut z = t;
        for (k, (yk, sk)) in kappa.iter().zip(CONSTRAINTS) {
            for (y, zy) in z.iter_mut().enumerate() {
                *zy -= k * sk * self.gram[y][yk];
            }
        }
        z
    }
}

pub(super) fn solve(system: &ConstraintSystem, opts: &FstOptions) -> Result<SolveOutcome> {
    if !(opts.admm_rho > 0.0 && opts.admm_rho.is_finite()) {
        return Err(Error::invalid(format!("penalty rho = {} must be positive", opts.admm_rho)));
    }
    let r = system.scores();
    let coef = system.coef();
    let n = r.len();

    let start = system.dual(&[0.0; 4]);
    if start.max_violation <= 0.0 {
        return Ok(SolveOutcome {
            lambdas: [0.0; 4],
            iterations: 0,
            eval: start,
        });
    }

    let mut gram = [[0.0f64; 2]; 2];
    for c in coef {
        for y in 0..2 {
            for k in 0..2 {
                gram[y][k] += c[y] * c[k];
            }
        }
    }
    let projector = Projector {
        gram,
        epsilon: system.epsilon(),
    };

    let mut rho = opts.admm_rho;
    let mut z = r.to_vec();
    let mut w = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut last_value: Option<f64> = None;
    let mut eval = start;

    for it in 1..=opts.max_iters {
        let mut t = [CompensatedSum::new(); 2];
        for i in 0..n {
            s[i] = admm_cubic_step_unchecked(r[i], z[i] - w[i], rho);
            x[i] = s[i] + w[i];
            t[0].add(coef[i][0] * x[i]);
            t[1].add(coef[i][1] * x[i]);
        }
        let kappa = projector.multipliers([t[0].value(), t[1].value()]);

        let mut primal_sq = CompensatedSum::new();
        let mut dual_sq = CompensatedSum::new();
        for i in 0..n {
            let shift: f64 = kappa
                .iter()
                .zip(CONSTRAINTS)
                .map(|(k, (y, sign))| k * sign * coef[i][y])
                .sum();
            let zi = x[i] - shift;
            primal_sq.add((s[i] - zi) * (s[i] - zi));
            dual_sq.add((zi - z[i]) * (zi - z[i]));
            z[i] = zi;
            w[i] = shift;
        }
        let primal_res = primal_sq.value().sqrt();
        let dual_res = rho * dual_sq.value().sqrt();

        if it % CHECK_EVERY == 0 || it == opts.max_iters {
            let lambdas = kappa.map(|k| rho * k);
            eval = system.dual(&lambdas);
            let converged = match last_value {
                Some(prev) => {
                    let rel = (eval.value - prev).abs() / eval.value.abs().max(1.0);
                    eval.max_violation <= opts.tol_feas && rel <= opts.rel_tol
                }
                None => false,
            };
            if converged {
                return Ok(SolveOutcome {
                    lambdas,
                    iterations: it,
                    eval,
                });
            }
            last_value = Some(eval.value);
        }

        if it < BALANCE_UNTIL {
            if primal_res > BALANCE_RATIO * dual_res {
                rho *= 2.0;
                w.iter_mut().for_each(|v| *v *= 0.5);
            } else if dual_res > BALANCE_RATIO * primal_res {
                rho *= 0.5;
                w.iter_mut().for_each(|v| *v *= 2.0);
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iters,
        max_violation: eval.max_violation,
        dual_objective: eval.value,
    })
}
