//! Operating-point search: threshold sweeps, the (epsilon, threshold) FST
//! grid over a dev-train / dev-eval split, Pareto extraction, selection
//! under an EO cap and frozen evaluation on test.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::calibrate::{self, Calibrator, CalibratorKind};
use crate::dataset::{self, ScoredDataset};
use crate::error::{Error, Result};
use crate::fst::{self, FstModel, FstOptions};
use crate::metrics::{pareto_filter, EoMode, FairnessReport};

pub const DEFAULT_EPSILONS: [f64; 7] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];
pub const DEFAULT_EO_CAP: f64 = 0.05;
pub const DEFAULT_DEV_FRACTION: f64 = 0.5;

/// `0.05, 0.10, ..., 0.95`.
pub fn default_thresholds() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// `None` for threshold post-processing.
    pub epsilon: Option<f64>,
    pub threshold: f64,
    pub calibrated: bool,
    pub dev_eval: FairnessReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<FairnessReport>,
}

impl OperatingPoint {
    fn key(&self) -> (f64, f64) {
        (self.dev_eval.eo, self.dev_eval.balanced_accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFailure {
    pub epsilon: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: Method,
    pub attribute: String,
    pub eo_mode: EoMode,
    pub epsilons: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub calibrated: bool,
    pub dev_fraction: f64,
    pub seed: u64,
    pub n_dev_train: usize,
    pub n_dev_eval: usize,
    pub n_candidates: usize,
    pub failures: Vec<FitFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFrontier {
    /// Mutually non-dominated in (dev-eval EO, balanced accuracy), sorted
    /// by EO ascending.
    pub points: Vec<OperatingPoint>,
    pub provenance: Provenance,
}

impl ParetoFrontier {
    pub fn from_candidates(candidates: Vec<OperatingPoint>, provenance: Provenance) -> Self {
        Self {
            points: pareto_filter(candidates, OperatingPoint::key),
            provenance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Fst,
    Tpp,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fst" => Ok(Method::Fst),
            "tpp" => Ok(Method::Tpp),
            other => Err(Error::invalid(format!("unknown tuning method `{other}`"))),
        }
    }
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::Empty("threshold grid".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::invalid(format!("threshold {t} outside (0, 1)")));
    }
    Ok(())
}

/// One point per threshold, predicting `score >= t`.
pub fn tpp_sweep(dev_eval: &ScoredDataset, attribute: &str, thresholds: &[f64], mode: EoMode) -> Result<Vec<OperatingPoint>> {
    check_thresholds(thresholds)?;
    let scores = dev_eval.scores()?;
    thresholds
        .iter()
        .map(|&t| {
            Ok(OperatingPoint {
                epsilon: None,
                threshold: t,
                calibrated: false,
                dev_eval: FairnessReport::from_scores(dev_eval, &scores, t, attribute, mode)?,
                test: None,
            })
        })
        .collect()
}

/// Everything `fst_grid` fits, kept frozen for test evaluation.
#[derive(Debug, Clone)]
pub struct FstGrid {
    /// Grid order: epsilon-major, threshold-minor.
    pub points: Vec<OperatingPoint>,
    pub models: Vec<FstModel>,
    pub calibrator: Option<Calibrator>,
    pub failures: Vec<FitFailure>,
}

impl FstGrid {
    pub fn model_for(&self, epsilon: f64) -> Option<&FstModel> {
        self.models.iter().find(|m| m.epsilon == epsilon)
    }
}

/// For each epsilon, fits FST on dev-train and scores every threshold on
/// dev-eval. Per-epsilon fit failures are recorded and skipped.
pub fn fst_grid(
    dev_train: &ScoredDataset,
    dev_eval: &ScoredDataset,
    attribute: &str,
    epsilons: &[f64],
    thresholds: &[f64],
    calibrate: bool,
    opts: &FstOptions,
) -> Result<FstGrid> {
    check_thresholds(thresholds)?;
    if epsilons.is_empty() {
        return Err(Error::Empty("epsilon grid".into()));
    }
    if let Some(e) = epsilons.iter().find(|e| e.is_nan() || **e <= 0.0) {
        return Err(Error::invalid(format!("epsilon {e} must be positive")));
    }
    let calibrator = if calibrate {
        Some(calibrate::fit(dev_train, CalibratorKind::Logistic)?)
    } else {
        None
    };
    let (train, eval) = match &calibrator {
        Some(c) => (c.apply(dev_train)?, c.apply(dev_eval)?),
        None => (dev_train.clone(), dev_eval.clone()),
    };
    let eval_scores = eval.scores()?;
    let eval_membership = eval.membership(attribute)?;

    let mut points = Vec::with_capacity(epsilons.len() * thresholds.len());
    let mut models = Vec::new();
    let mut failures = Vec::new();
    for &eps in epsilons {
        let model = match fst::fit(&train, attribute, eps, opts) {
            Ok(m) => m,
            Err(e) => {
                failures.push(FitFailure {
                    epsilon: eps,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let transformed = model.transform_scores(&eval_scores, &eval_membership)?;
        for &t in thresholds {
            points.push(OperatingPoint {
                epsilon: Some(eps),
                threshold: t,
                calibrated: calibrate,
                dev_eval: FairnessReport::from_scores(&eval, &transformed, t, attribute, opts.mode)?,
                test: None,
            });
        }
        models.push(model);
    }
    if models.is_empty() {
        let detail = failures
            .iter()
            .map(|f| format!("epsilon {}: {}", f.epsilon, f.message))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Infeasible(format!("FST fit failed for every epsilon ({detail})")));
    }
    Ok(FstGrid {
        points,
        models,
        calibrator,
        failures,
    })
}

fn cmp_ident(a: &OperatingPoint, b: &OperatingPoint) -> Ordering {
    let eps = |p: &OperatingPoint| p.epsilon.unwrap_or(f64::INFINITY);
    eps(a)
        .total_cmp(&eps(b))
        .then_with(|| a.threshold.total_cmp(&b.threshold))
        .then_with(|| a.calibrated.cmp(&b.calibrated))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub point: OperatingPoint,
    /// False when no point met the cap and the minimum-EO point was taken.
    pub within_cap: bool,
    pub eo_cap: f64,
}

/// Maximum balanced accuracy among points with dev-eval EO at most
/// `eo_cap`; otherwise the minimum-EO point, flagged. The result does not
/// depend on the order of `points`.
pub fn select_operating_point(points: &[OperatingPoint], eo_cap: f64) -> Result<Selection> {
    let by_accuracy = |a: &&OperatingPoint, b: &&OperatingPoint| {
        a.dev_eval
            .balanced_accuracy
            .total_cmp(&b.dev_eval.balanced_accuracy)
            .then_with(|| b.dev_eval.eo.total_cmp(&a.dev_eval.eo))
            .then_with(|| cmp_ident(b, a))
    };
    if let Some(best) = points.iter().filter(|p| p.dev_eval.eo <= eo_cap).max_by(by_accuracy) {
        return Ok(Selection {
            point: best.clone(),
            within_cap: true,
            eo_cap,
        });
    }
    let fairest = points
        .iter()
        .min_by(|a, b| {
            a.dev_eval
                .eo
                .total_cmp(&b.dev_eval.eo)
                .then_with(|| b.dev_eval.balanced_accuracy.total_cmp(&a.dev_eval.balanced_accuracy))
                .then_with(|| cmp_ident(a, b))
        })
        .ok_or_else(|| Error::Empty("no operating points to select from".into()))?;
    Ok(Selection {
        point: fairest.clone(),
        within_cap: false,
        eo_cap,
    })
}

/// Applies the frozen calibrator, FST model and threshold to `test` and
/// fills the point's test metrics. Nothing is refitted.
pub fn evaluate_on_test(
    op: &OperatingPoint,
    model: Option<&FstModel>,
    calibrator: Option<&Calibrator>,
    test: &ScoredDataset,
    attribute: &str,
    mode: EoMode,
) -> Result<OperatingPoint> {
    let test = match (op.calibrated, calibrator) {
        (true, Some(c)) => c.apply(test)?,
        (true, None) => return Err(Error::invalid("calibrated operating point needs its calibrator")),
        (false, _) => test.clone(),
    };
    let scores = test.scores()?;
    let scores = match (op.epsilon, model) {
        (Some(eps), Some(m)) => {
            if m.epsilon != eps {
                return Err(Error::invalid(format!(
                    "model fitted for epsilon {} used for point with epsilon {eps}",
                    m.epsilon
                )));
            }
            m.transform_scores(&scores, &test.membership(&m.attribute)?)?
        }
        (Some(eps), None) => {
            return Err(Error::invalid(format!("operating point with epsilon {eps} needs its FST model")))
        }
        (None, _) => scores,
    };
    let mut out = op.clone();
    out.test = Some(FairnessReport::from_scores(&test, &scores, op.threshold, attribute, mode)?);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub method: Method,
    pub attribute: String,
    pub epsilons: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub calibrate: bool,
    pub eo_cap: f64,
    pub dev_fraction: f64,
    pub seed: u64,
    pub fst: FstOptions,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            method: Method::Fst,
            attribute: String::new(),
            epsilons: DEFAULT_EPSILONS.to_vec(),
            thresholds: default_thresholds(),
            calibrate: false,
            eo_cap: DEFAULT_EO_CAP,
            dev_fraction: DEFAULT_DEV_FRACTION,
            seed: 0,
            fst: FstOptions::default(),
        }
    }
}

/// Full protocol output. Frontier points carry test metrics from the
/// frozen artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub frontier: ParetoFrontier,
    pub selected: Selection,
    /// Input scores thresholded at 0.5.
    pub baseline_dev_eval: FairnessReport,
    pub baseline_test: FairnessReport,
    pub calibrator: Option<Calibrator>,
    /// FST model behind the selected point.
    pub model: Option<FstModel>,
}

pub fn run(dev: &ScoredDataset, test: &ScoredDataset, cfg: &TuneConfig) -> Result<TuneOutcome> {
    let attr = cfg.attribute.as_str();
    let mode = cfg.fst.mode;
    let (dev_train, dev_eval) = dataset::split(dev, cfg.dev_fraction, cfg.seed)?;

    let (candidates, models, calibrator, failures, epsilons) = match cfg.method {
        Method::Tpp => (tpp_sweep(&dev_eval, attr, &cfg.thresholds, mode)?, Vec::new(), None, Vec::new(), Vec::new()),
        Method::Fst => {
            let grid = fst_grid(&dev_train, &dev_eval, attr, &cfg.epsilons, &cfg.thresholds, cfg.calibrate, &cfg.fst)?;
            (grid.points, grid.models, grid.calibrator, grid.failures, cfg.epsilons.clone())
        }
    };
    let provenance = Provenance {
        method: cfg.method,
        attribute: attr.to_string(),
        eo_mode: mode,
        epsilons,
        thresholds: cfg.thresholds.clone(),
        calibrated: calibrator.is_some(),
        dev_fraction: cfg.dev_fraction,
        seed: cfg.seed,
        n_dev_train: dev_train.len(),
        n_dev_eval: dev_eval.len(),
        n_candidates: candidates.len(),
        failures,
    };
    let frontier = ParetoFrontier::from_candidates(candidates, provenance);
    let model_for = |eps: Option<f64>| eps.and_then(|e| models.iter().find(|m| m.epsilon == e));

    let points = frontier
        .points
        .iter()
        .map(|p| evaluate_on_test(p, model_for(p.epsilon), calibrator.as_ref(), test, attr, mode))
        .collect::<Result<Vec<_>>>()?;
    let frontier = ParetoFrontier { points, ..frontier };
    let selected = select_operating_point(&frontier.points, cfg.eo_cap)?;
    let model = model_for(selected.point.epsilon).cloned();

    let baseline = |ds: &ScoredDataset| FairnessReport::from_scores(ds, &ds.scores()?, 0.5, attr, mode);
    Ok(TuneOutcome {
        baseline_dev_eval: baseline(&dev_eval)?,
        baseline_test: baseline(test)?,
        frontier,
        selected,
        calibrator,
        model,
    })
}
