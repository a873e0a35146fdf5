//! Hardt–Price–Srebro equalized-odds post-processing.
//!
//! The post-processed classifier outputs 1 with probability `p[a][ŷ]` given
//! group `a` (1 = sensitive) and base prediction `ŷ`. Post rates are then
//! bilinear in `p` and the base rates:
//!
//! ```text
//! TPR_a = p[a][1] · P(ŷ=1 | y=1, a) + p[a][0] · P(ŷ=0 | y=1, a)
//! FPR_a = p[a][1] · P(ŷ=1 | y=0, a) + p[a][0] · P(ŷ=0 | y=0, a)
//! ```
//!
//! `p` minimizes the expected 0-1 error subject to equal TPR and FPR across
//! groups. With four variables and two equality rows the LP is solved
//! exactly by enumerating its basic feasible points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ScoredDataset;
use crate::error::{Error, LabelClass, Result};
use crate::metrics::{EoMode, FairnessReport, GroupRates};

const FEAS_TOL: f64 = 1e-12;
const TIE_TOL: f64 = 1e-12;

/// Fit-data snapshot; every array is indexed by group (0 = complement,
/// 1 = sensitive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseRates {
    /// `P(ŷ=1 | y=1, a)`.
    pub tpr: [f64; 2],
    /// `P(ŷ=1 | y=0, a)`.
    pub fpr: [f64; 2],
    /// Joint priors `π(y, a)`, indexed `[y][a]`.
    pub priors: [[f64; 2]; 2],
    pub n: usize,
}

impl BaseRates {
    pub fn from_predictions(labels: &[u8], predictions: &[u8], membership: &[Option<bool>], attribute: &str) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: labels.len(),
                actual: predictions.len(),
            });
        }
        if membership.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: labels.len(),
                actual: membership.len(),
            });
        }
        // counts[y][a] = (total, predicted positive)
        let mut counts = [[(0u64, 0u64); 2]; 2];
        let mut n = 0usize;
        for ((&y, &p), m) in labels.iter().zip(predictions).zip(membership) {
            if p > 1 {
                return Err(Error::invalid(format!("prediction {p} is not binary")));
            }
            let Some(a) = m else { continue };
            let cell = &mut counts[usize::from(y)][usize::from(*a)];
            cell.0 += 1;
            cell.1 += u64::from(p);
            n += 1;
        }
        let mut rates = [[0.0; 2]; 2];
        let mut priors = [[0.0; 2]; 2];
        for y in 0..2 {
            for a in 0..2 {
                let (total, pos) = counts[y][a];
                if total == 0 {
                    let group = if a == 1 {
                        attribute.to_string()
                    } else {
                        format!("not {attribute}")
                    };
                    let class = if y == 1 { LabelClass::Positive } else { LabelClass::Negative };
                    return Err(Error::DegenerateGroup { group, class });
                }
                rates[y][a] = pos as f64 / total as f64;
                priors[y][a] = total as f64 / n as f64;
            }
        }
        Ok(Self {
            tpr: rates[1],
            fpr: rates[0],
            priors,
            n,
        })
    }

    /// Post-processed `(TPR_a, FPR_a)` for mixing probabilities `p`.
    pub fn post_rates(&self, p: &[[f64; 2]; 2]) -> ([f64; 2], [f64; 2]) {
        let mix = |a: usize, base: f64| p[a][1] * base + p[a][0] * (1.0 - base);
        ([mix(0, self.tpr[0]), mix(1, self.tpr[1])], [mix(0, self.fpr[0]), mix(1, self.fpr[1])])
    }

    /// Expected 0-1 error `Σ_a π(1,a)(1 - TPR_a) + π(0,a) FPR_a`.
    pub fn expected_error(&self, p: &[[f64; 2]; 2]) -> f64 {
        let (tpr, fpr) = self.post_rates(p);
        (0..2)
            .map(|a| self.priors[1][a] * (1.0 - tpr[a]) + self.priors[0][a] * fpr[a])
            .sum()
    }

    /// Variables in the order `p[0][0], p[0][1], p[1][0], p[1][1]`:
    /// rows of `TPR_0 - TPR_1 = 0` and `FPR_0 - FPR_1 = 0`, and the linear
    /// part of the objective.
    fn lp(&self) -> ([[f64; 4]; 2], [f64; 4]) {
        let row = |r: [f64; 2]| [1.0 - r[0], r[0], -(1.0 - r[1]), -r[1]];
        let mut cost = [0.0; 4];
        for a in 0..2 {
            let (pi1, pi0) = (self.priors[1][a], self.priors[0][a]);
            cost[2 * a] = -pi1 * (1.0 - self.tpr[a]) + pi0 * (1.0 - self.fpr[a]);
            cost[2 * a + 1] = -pi1 * self.tpr[a] + pi0 * self.fpr[a];
        }
        ([row(self.tpr), row(self.fpr)], cost)
    }
}

/// Solves the equalized-odds LP by vertex enumeration. Ties in the
/// objective go to the lexicographically smallest `p`.
pub fn solve_lp(base: &BaseRates) -> Result<[[f64; 2]; 2]> {
    let (rows, cost) = base.lp();
    let mut best: Option<([f64; 4], f64)> = None;

    for mask in 0u32..16 {
        let fixed: Vec<usize> = (0..4).filter(|i| mask & (1 << i) != 0).collect();
        if fixed.len() < 2 {
            continue;
        }
        let free: Vec<usize> = (0..4).filter(|i| mask & (1 << i) == 0).collect();
        for bits in 0u32..(1 << fixed.len()) {
            let mut x = [0.0; 4];
            for (k, &i) in fixed.iter().enumerate() {
                x[i] = f64::from((bits >> k) & 1);
            }
            let rhs = rows.map(|r| -fixed.iter().map(|&i| r[i] * x[i]).sum::<f64>());
            let ok = match free.as_slice() {
                [] => true,
                [j] => {
                    let col = [rows[0][*j], rows[1][*j]];
                    let nrm = col[0] * col[0] + col[1] * col[1];
                    if nrm > 0.0 {
                        x[*j] = (col[0] * rhs[0] + col[1] * rhs[1]) / nrm;
                        true
                    } else {
                        false
                    }
                }
                [j, k] => {
                    let (a, b, c, d) = (rows[0][*j], rows[0][*k], rows[1][*j], rows[1][*k]);
                    let det = a * d - b * c;
                    if det.abs() > 1e-12 {
                        x[*j] = (rhs[0] * d - b * rhs[1]) / det;
                        x[*k] = (a * rhs[1] - c * rhs[0]) / det;
                        true
                    } else {
                        false
                    }
                }
                _ => unreachable!("at least two variables are fixed"),
            };
            if !ok || x.iter().any(|v| !(-FEAS_TOL..=1.0 + FEAS_TOL).contains(v)) {
                continue;
            }
            let x = x.map(|v| v.clamp(0.0, 1.0));
            let residual = rows
                .iter()
                .map(|r| r.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>().abs())
                .fold(0.0, f64::max);
            if residual > 1e-10 {
                continue;
            }
            let obj: f64 = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
            let better = match &best {
                None => true,
                Some((bx, bobj)) => obj < bobj - TIE_TOL || ((obj - bobj).abs() <= TIE_TOL && lex_less(&x, bx)),
            };
            if better {
                best = Some((x, obj));
            }
        }
    }
    match best {
        Some((x, _)) => Ok([[x[0], x[1]], [x[2], x[3]]]),
        None => Err(Error::Infeasible(format!(
            "no feasible mixing for base rates tpr = {:?}, fpr = {:?}",
            base.tpr, base.fpr
        ))),
    }
}

fn lex_less(a: &[f64; 4], b: &[f64; 4]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedRates {
    pub tpr: [f64; 2],
    pub fpr: [f64; 2],
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpsModel {
    pub attribute: String,
    pub eo_mode: EoMode,
    /// `p[a][ŷ]`: probability of outputting 1.
    pub p: [[f64; 2]; 2],
    pub base_rates: BaseRates,
    pub expected: ExpectedRates,
}

impl HpsModel {
    pub fn from_base_rates(attribute: &str, base_rates: BaseRates) -> Result<Self> {
        let p = solve_lp(&base_rates)?;
        Ok(Self::with_mixing(attribute, base_rates, p))
    }

    /// Model with explicit mixing probabilities.
    pub fn with_mixing(attribute: &str, base_rates: BaseRates, p: [[f64; 2]; 2]) -> Self {
        let (tpr, fpr) = base_rates.post_rates(&p);
        let error = base_rates.expected_error(&p);
        Self {
            attribute: attribute.to_string(),
            eo_mode: EoMode::Complement,
            p,
            base_rates,
            expected: ExpectedRates { tpr, fpr, error },
        }
    }

    pub fn with_eo_mode(mut self, mode: EoMode) -> Self {
        self.eo_mode = mode;
        self
    }

    /// Leaves every base prediction unchanged.
    pub fn is_identity(&self) -> bool {
        self.p == [[0.0, 1.0], [0.0, 1.0]]
    }

    /// Draws one post-processed bit per record. The draw sequence is fixed
    /// by `seed` and independent of the predictions.
    pub fn apply(&self, predictions: &[u8], membership: &[Option<bool>], seed: u64) -> Result<Vec<u8>> {
        if predictions.len() != membership.len() {
            return Err(Error::LengthMismatch {
                expected: predictions.len(),
                actual: membership.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        predictions
            .iter()
            .zip(membership)
            .enumerate()
            .map(|(i, (&y_hat, m))| {
                let u: f64 = rng.random();
                let a = m.ok_or_else(|| Error::invalid(format!("record {i} has no `{}` membership", self.attribute)))?;
                if y_hat > 1 {
                    return Err(Error::invalid(format!("prediction {y_hat} is not binary")));
                }
                Ok(u8::from(u < self.p[usize::from(a)][usize::from(y_hat)]))
            })
            .collect()
    }

    /// Sampled realization applied to a dataset's records.
    pub fn apply_dataset(&self, ds: &ScoredDataset, predictions: &[u8], seed: u64) -> Result<Vec<u8>> {
        self.apply(predictions, &ds.membership(&self.attribute)?, seed)
    }
}

pub fn fit(ds: &ScoredDataset, predictions: &[u8], attribute: &str) -> Result<HpsModel> {
    let membership = ds.membership(attribute)?;
    let base = BaseRates::from_predictions(&ds.labels(), predictions, &membership, attribute)?;
    HpsModel::from_base_rates(attribute, base)
}

/// In-expectation report of the randomized classifier on the fit
/// population. GEO equals the expected post rates' gap, as the expected
/// score of a sample is its output probability.
pub fn expected_report(m: &HpsModel) -> FairnessReport {
    let b = &m.base_rates;
    let e = &m.expected;
    let pos = b.priors[1][0] + b.priors[1][1];
    let neg = b.priors[0][0] + b.priors[0][1];
    let tpr_all = (b.priors[1][0] * e.tpr[0] + b.priors[1][1] * e.tpr[1]) / pos;
    let fpr_all = (b.priors[0][0] * e.fpr[0] + b.priors[0][1] * e.fpr[1]) / neg;
    let reference = |rates: [f64; 2], overall: f64| match m.eo_mode {
        EoMode::Complement => rates[0],
        EoMode::Overall => overall,
    };
    let dt = (e.tpr[1] - reference(e.tpr, tpr_all)).abs();
    let df = (e.fpr[1] - reference(e.fpr, fpr_all)).abs();
    let positive_rate = |a: usize| (b.priors[1][a] * e.tpr[a] + b.priors[0][a] * e.fpr[a]) / (b.priors[1][a] + b.priors[0][a]);
    FairnessReport {
        attribute: m.attribute.clone(),
        eo_mode: m.eo_mode,
        n: b.n,
        accuracy: 1.0 - e.error,
        balanced_accuracy: 0.5 * (tpr_all + 1.0 - fpr_all),
        tpr: GroupRates {
            sensitive: e.tpr[1],
            complement: e.tpr[0],
            overall: tpr_all,
        },
        fpr: GroupRates {
            sensitive: e.fpr[1],
            complement: e.fpr[0],
            overall: fpr_all,
        },
        eo: dt.max(df),
        avg_eo: 0.5 * (dt + df),
        geo: dt.max(df),
        spd: positive_rate(1) - positive_rate(0),
    }
}
