//! Logit-to-probability calibration: logistic regression on both logits (a
//! generalization of temperature scaling), clipped least squares, or the
//! plain softmax.

use serde::{Deserialize, Serialize};

use crate::dataset::{SampleRecord, ScoredDataset};
use crate::error::{Error, Result};
use crate::numeric::{sigmoid, softplus, solve_pivoted, stable_sum, CompensatedSum};

/// Scores handed to the score transformer are clamped into
/// `[SCORE_EPS, 1 - SCORE_EPS]`.
pub const SCORE_EPS: f64 = 1e-6;

pub fn clamp_score(s: f64) -> f64 {
    s.clamp(SCORE_EPS, 1.0 - SCORE_EPS)
}

const LOGIT_DIM: usize = 2;
const MAX_NEWTON_ITERS: usize = 100;
const GRADIENT_TOL: f64 = 1e-8;
const WEIGHT_NORM_CAP: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibratorKind {
    Logistic,
    LinearClip,
    Identity,
}

impl std::str::FromStr for CalibratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(CalibratorKind::Logistic),
            "linear-clip" | "linear_clip" => Ok(CalibratorKind::LinearClip),
            "identity" => Ok(CalibratorKind::Identity),
            other => Err(Error::invalid(format!("unknown calibration method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub gradient_norm: f64,
    /// The weight-norm cap was hit (perfectly separable labels).
    pub separated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibrator {
    pub kind: CalibratorKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    #[serde(default)]
    pub diagnostics: FitDiagnostics,
}

impl Calibrator {
    pub fn identity() -> Self {
        Self {
            kind: CalibratorKind::Identity,
            weights: vec![0.0; LOGIT_DIM],
            bias: 0.0,
            diagnostics: FitDiagnostics::default(),
        }
    }

    pub fn logistic(weights: [f64; 2], bias: f64) -> Self {
        Self {
            kind: CalibratorKind::Logistic,
            weights: weights.to_vec(),
            bias,
            diagnostics: FitDiagnostics::default(),
        }
    }

    fn linear_predictor(&self, logits: &[f64; 2]) -> f64 {
        self.weights[0] * logits[0] + self.weights[1] * logits[1] + self.bias
    }

    /// Calibrated score of one record.
    pub fn score(&self, record: &SampleRecord) -> Result<f64> {
        if self.weights.len() != LOGIT_DIM {
            return Err(Error::invalid(format!(
                "calibrator has {} weights, expected {LOGIT_DIM}",
                self.weights.len()
            )));
        }
        match (self.kind, record.logits) {
            (CalibratorKind::Identity, Some(l)) => Ok(sigmoid(l[1] - l[0])),
            (CalibratorKind::Identity, None) => record.score.ok_or_else(|| Error::MissingField {
                id: record.id.clone(),
                what: "logits or a score",
            }),
            (CalibratorKind::Logistic, Some(l)) => Ok(sigmoid(self.linear_predictor(&l))),
            (CalibratorKind::LinearClip, Some(l)) => Ok(self.linear_predictor(&l).clamp(0.0, 1.0)),
            (_, None) => Err(Error::MissingField {
                id: record.id.clone(),
                what: "logits",
            }),
        }
    }

    /// Returns the dataset with calibrated scores; nothing else changes.
    pub fn apply(&self, ds: &ScoredDataset) -> Result<ScoredDataset> {
        let scores = ds.records().iter().map(|r| self.score(r)).collect::<Result<Vec<_>>>()?;
        ds.with_scores(&scores)
    }
}

fn design(ds: &ScoredDataset) -> Result<(Vec<[f64; 3]>, Vec<f64>)> {
    if ds.is_empty() {
        return Err(Error::Empty("calibration needs at least one record".into()));
    }
    let mut xs = Vec::with_capacity(ds.len());
    let mut ys = Vec::with_capacity(ds.len());
    for r in ds.records() {
        let l = r.logits.ok_or_else(|| Error::MissingField {
            id: r.id.clone(),
            what: "logits",
        })?;
        xs.push([l[0], l[1], 1.0]);
        ys.push(f64::from(r.label));
    }
    Ok((xs, ys))
}

fn mean_nll(xs: &[[f64; 3]], ys: &[f64], theta: &[f64; 3]) -> f64 {
    let n = xs.len() as f64;
    stable_sum(xs.iter().zip(ys).map(|(x, &y)| {
        let eta = x[0] * theta[0] + x[1] * theta[1] + x[2] * theta[2];
        softplus(eta) - y * eta
    })) / n
}

/// Maximum-likelihood logistic regression of the label on both logits,
/// by damped Newton (step halving on likelihood increase).
pub fn fit_logistic(ds: &ScoredDataset) -> Result<Calibrator> {
    let (xs, ys) = design(ds)?;
    let positives = ys.iter().filter(|&&y| y == 1.0).count();
    if positives == 0 || positives == ys.len() {
        return Err(Error::invalid("logistic calibration needs both label classes"));
    }
    let n = xs.len() as f64;
    let base = positives as f64 / n;
    let mut theta = [0.0, 0.0, (base / (1.0 - base)).ln()];
    let mut loss = mean_nll(&xs, &ys, &theta);
    let mut diagnostics = FitDiagnostics::default();

    for iter in 0..=MAX_NEWTON_ITERS {
        let mut grad = [CompensatedSum::new(); 3];
        let mut hess = [[CompensatedSum::new(); 3]; 3];
        for (x, &y) in xs.iter().zip(&ys) {
            let p = sigmoid(x[0] * theta[0] + x[1] * theta[1] + x[2] * theta[2]);
            let w = p * (1.0 - p);
            for a in 0..3 {
                grad[a].add((p - y) * x[a]);
                for b in a..3 {
                    hess[a][b].add(w * x[a] * x[b]);
                }
            }
        }
        let g: Vec<f64> = grad.iter().map(|s| s.value() / n).collect();
        let mut h = vec![vec![0.0; 3]; 3];
        for a in 0..3 {
            for b in a..3 {
                h[a][b] = hess[a][b].value() / n;
                h[b][a] = h[a][b];
            }
        }
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        diagnostics.iterations = iter;
        diagnostics.gradient_norm = gnorm;
        if gnorm <= GRADIENT_TOL || iter == MAX_NEWTON_ITERS {
            break;
        }
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let step = solve_pivoted(&h, &neg_g, 1e-13).x;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = [theta[0] + t * step[0], theta[1] + t * step[1], theta[2] + t * step[2]];
            let cand_loss = mean_nll(&xs, &ys, &cand);
            if cand_loss <= loss {
                theta = cand;
                loss = cand_loss;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no decrease representable in floating point: at the optimum
            break;
        }
        if theta[0].hypot(theta[1]) > WEIGHT_NORM_CAP {
            diagnostics.separated = true;
            break;
        }
    }

    // Strictly separable labels have no finite MLE: Newton drives the loss
    // to ~0 at a moderate norm, so push along the separating direction to
    // the cap instead of reporting a spurious optimum.
    let separable = xs.iter().zip(&ys).all(|(x, &y)| {
        let eta = x[0] * theta[0] + x[1] * theta[1] + x[2] * theta[2];
        if y == 1.0 {
            eta > 0.0
        } else {
            eta < 0.0
        }
    });
    let norm = theta[0].hypot(theta[1]);
    if separable && norm > 0.0 {
        let scale = WEIGHT_NORM_CAP / norm;
        if scale > 1.0 {
            theta.iter_mut().for_each(|t| *t *= scale);
        }
        diagnostics.separated = true;
    }

    Ok(Calibrator {
        kind: CalibratorKind::Logistic,
        weights: vec![theta[0], theta[1]],
        bias: theta[2],
        diagnostics,
    })
}

/// Ordinary least squares of the label on both logits; scores are the fit
/// clipped to [0, 1]. Collinear logits are an error.
pub fn fit_linear_clip(ds: &ScoredDataset) -> Result<Calibrator> {
    let (xs, ys) = design(ds)?;
    let mut xtx = [[CompensatedSum::new(); 3]; 3];
    let mut xty = [CompensatedSum::new(); 3];
    for (x, &y) in xs.iter().zip(&ys) {
        for a in 0..3 {
            xty[a].add(x[a] * y);
            for b in 0..3 {
                xtx[a][b].add(x[a] * x[b]);
            }
        }
    }
    let a: Vec<Vec<f64>> = xtx.iter().map(|row| row.iter().map(|s| s.value()).collect()).collect();
    let b: Vec<f64> = xty.iter().map(|s| s.value()).collect();
    let sol = solve_pivoted(&a, &b, 1e-12);
    if sol.rank < 3 {
        return Err(Error::Singular(format!(
            "least-squares design has rank {} < 3 (collinear logits)",
            sol.rank
        )));
    }
    Ok(Calibrator {
        kind: CalibratorKind::LinearClip,
        weights: vec![sol.x[0], sol.x[1]],
        bias: sol.x[2],
        diagnostics: FitDiagnostics::default(),
    })
}

pub fn fit(ds: &ScoredDataset, kind: CalibratorKind) -> Result<Calibrator> {
    match kind {
        CalibratorKind::Logistic => fit_logistic(ds),
        CalibratorKind::LinearClip => fit_linear_clip(ds),
        CalibratorKind::Identity => Ok(Calibrator::identity()),
    }
}
