//! Accuracy and group-fairness measures, Pearson correlation and Pareto
//! filtering over (equalized odds, balanced accuracy).
//!
//! Rates are ratios of integer counts. Score means use compensated
//! summation in dataset order so reports are bit-stable.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dataset::ScoredDataset;
use crate::error::{Error, LabelClass, Result};
use crate::numeric::CompensatedSum;

/// Comparison population for group gaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EoMode {
    /// Sensitive group vs its complement.
    #[default]
    Complement,
    /// Sensitive group vs the whole (annotated) population.
    Overall,
}

impl std::str::FromStr for EoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complement" => Ok(EoMode::Complement),
            "overall" => Ok(EoMode::Overall),
            other => Err(Error::invalid(format!("unknown eo mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Sensitive,
    Complement,
    Overall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub scope: Scope,
}

impl ConfusionCounts {
    pub fn empty(scope: Scope) -> Self {
        Self {
            tp: 0,
            fp: 0,
            tn: 0,
            fn_: 0,
            scope,
        }
    }

    fn record(&mut self, label: u8, pred: u8) {
        match (label, pred) {
            (1, 1) => self.tp += 1,
            (1, _) => self.fn_ += 1,
            (_, 1) => self.fp += 1,
            _ => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    /// True positive rate; `group` names the population in the diagnostic.
    pub fn tpr(&self, group: &str) -> Result<f64> {
        if self.positives() == 0 {
            return Err(Error::DegenerateGroup {
                group: group.to_string(),
                class: LabelClass::Positive,
            });
        }
        Ok(self.tp as f64 / self.positives() as f64)
    }

    pub fn fpr(&self, group: &str) -> Result<f64> {
        if self.negatives() == 0 {
            return Err(Error::DegenerateGroup {
                group: group.to_string(),
                class: LabelClass::Negative,
            });
        }
        Ok(self.fp as f64 / self.negatives() as f64)
    }
}

/// Confusion counts for the sensitive group, its complement and both
/// together (records excluded for missing membership are not counted).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub sensitive: ConfusionCounts,
    pub complement: ConfusionCounts,
    pub overall: ConfusionCounts,
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}

fn check_bits(name: &str, bits: &[u8]) -> Result<()> {
    if let Some(b) = bits.iter().find(|b| **b > 1) {
        return Err(Error::invalid(format!("{name} contain non-binary value {b}")));
    }
    Ok(())
}

pub fn confusion_from_parts(labels: &[u8], predictions: &[u8], membership: &[Option<bool>]) -> Result<GroupConfusion> {
    check_len(labels.len(), predictions.len())?;
    check_len(labels.len(), membership.len())?;
    check_bits("predictions", predictions)?;
    let mut sensitive = ConfusionCounts::empty(Scope::Sensitive);
    let mut complement = ConfusionCounts::empty(Scope::Complement);
    let mut overall = ConfusionCounts::empty(Scope::Overall);
    for ((&y, &p), m) in labels.iter().zip(predictions).zip(membership) {
        match m {
            Some(true) => sensitive.record(y, p),
            Some(false) => complement.record(y, p),
            None => continue,
        }
        overall.record(y, p);
    }
    Ok(GroupConfusion {
        sensitive,
        complement,
        overall,
    })
}

pub fn confusion(ds: &ScoredDataset, predictions: &[u8], attribute: &str) -> Result<GroupConfusion> {
    check_len(ds.len(), predictions.len())?;
    let membership = ds.membership(attribute)?;
    confusion_from_parts(&ds.labels(), predictions, &membership)
}

/// TPR and FPR of the sensitive group and of the comparison population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateGaps {
    pub tpr_sensitive: f64,
    pub tpr_reference: f64,
    pub fpr_sensitive: f64,
    pub fpr_reference: f64,
}

impl RateGaps {
    pub fn tpr_gap(&self) -> f64 {
        (self.tpr_sensitive - self.tpr_reference).abs()
    }

    pub fn fpr_gap(&self) -> f64 {
        (self.fpr_sensitive - self.fpr_reference).abs()
    }

    pub fn equalized_odds(&self) -> f64 {
        self.tpr_gap().max(self.fpr_gap())
    }

    pub fn average_equalized_odds(&self) -> f64 {
        0.5 * (self.tpr_gap() + self.fpr_gap())
    }
}

fn reference_label(attribute: &str, mode: EoMode) -> String {
    match mode {
        EoMode::Complement => format!("not {attribute}"),
        EoMode::Overall => "overall".to_string(),
    }
}

pub fn rate_gaps(counts: &GroupConfusion, attribute: &str, mode: EoMode) -> Result<RateGaps> {
    let reference = match mode {
        EoMode::Complement => &counts.complement,
        EoMode::Overall => &counts.overall,
    };
    let ref_name = reference_label(attribute, mode);
    Ok(RateGaps {
        tpr_sensitive: counts.sensitive.tpr(attribute)?,
        fpr_sensitive: counts.sensitive.fpr(attribute)?,
        tpr_reference: reference.tpr(&ref_name)?,
        fpr_reference: reference.fpr(&ref_name)?,
    })
}

/// max(|ΔTPR|, |ΔFPR|) between the sensitive group and the population
/// selected by `mode`. Degenerate groups are errors, never 0.
pub fn equalized_odds(ds: &ScoredDataset, predictions: &[u8], attribute: &str, mode: EoMode) -> Result<f64> {
    let counts = confusion(ds, predictions, attribute)?;
    Ok(rate_gaps(&counts, attribute, mode)?.equalized_odds())
}

pub fn average_equalized_odds(ds: &ScoredDataset, predictions: &[u8], attribute: &str, mode: EoMode) -> Result<f64> {
    let counts = confusion(ds, predictions, attribute)?;
    Ok(rate_gaps(&counts, attribute, mode)?.average_equalized_odds())
}

fn overall_counts(labels: &[u8], predictions: &[u8]) -> Result<ConfusionCounts> {
    check_len(labels.len(), predictions.len())?;
    check_bits("predictions", predictions)?;
    let mut c = ConfusionCounts::empty(Scope::Overall);
    for (&y, &p) in labels.iter().zip(predictions) {
        c.record(y, p);
    }
    Ok(c)
}

pub fn accuracy(ds: &ScoredDataset, predictions: &[u8]) -> Result<f64> {
    let c = overall_counts(&ds.labels(), predictions)?;
    if c.total() == 0 {
        return Err(Error::Empty("accuracy of an empty dataset".into()));
    }
    Ok((c.tp + c.tn) as f64 / c.total() as f64)
}

/// Mean of TPR and TNR over all records.
pub fn balanced_accuracy(ds: &ScoredDataset, predictions: &[u8]) -> Result<f64> {
    let c = overall_counts(&ds.labels(), predictions)?;
    let tpr = c.tpr("all records")?;
    let tnr = 1.0 - c.fpr("all records")?;
    Ok(0.5 * (tpr + tnr))
}

/// Label-conditional score means of one population.
#[derive(Debug, Default, Clone, Copy)]
struct ScoreMeans {
    sum: [CompensatedSum; 2],
    count: [u64; 2],
}

impl ScoreMeans {
    fn mean(&self, y: usize, group: &str) -> Result<f64> {
        if self.count[y] == 0 {
            return Err(Error::DegenerateGroup {
                group: group.to_string(),
                class: if y == 1 { LabelClass::Positive } else { LabelClass::Negative },
            });
        }
        Ok(self.sum[y].value() / self.count[y] as f64)
    }
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("non-finite score {s}")));
    }
    Ok(())
}

pub fn geo_difference_from_parts(
    labels: &[u8],
    scores: &[f64],
    membership: &[Option<bool>],
    attribute: &str,
    mode: EoMode,
) -> Result<f64> {
    check_len(labels.len(), scores.len())?;
    check_len(labels.len(), membership.len())?;
    check_scores(scores)?;
    let mut sensitive = ScoreMeans::default();
    let mut complement = ScoreMeans::default();
    let mut overall = ScoreMeans::default();
    for ((&y, &s), m) in labels.iter().zip(scores).zip(membership) {
        let y = usize::from(y == 1);
        let target = match m {
            Some(true) => &mut sensitive,
            Some(false) => &mut complement,
            None => continue,
        };
        target.sum[y].add(s);
        target.count[y] += 1;
        overall.sum[y].add(s);
        overall.count[y] += 1;
    }
    let reference = match mode {
        EoMode::Complement => &complement,
        EoMode::Overall => &overall,
    };
    let ref_name = reference_label(attribute, mode);
    let mut worst = 0.0f64;
    for y in [1, 0] {
        let gap = (sensitive.mean(y, attribute)? - reference.mean(y, &ref_name)?).abs();
        worst = worst.max(gap);
    }
    Ok(worst)
}

/// Generalized equalized odds: max over label classes of the absolute
/// difference in mean score between the sensitive group and its complement.
pub fn geo_difference(ds: &ScoredDataset, scores: &[f64], attribute: &str) -> Result<f64> {
    geo_difference_with_mode(ds, scores, attribute, EoMode::Complement)
}

pub fn geo_difference_with_mode(ds: &ScoredDataset, scores: &[f64], attribute: &str, mode: EoMode) -> Result<f64> {
    check_len(ds.len(), scores.len())?;
    let membership = ds.membership(attribute)?;
    geo_difference_from_parts(&ds.labels(), scores, &membership, attribute, mode)
}

/// GEO with the label indicator replaced by calibrated-score weights:
/// class 1 weighs sample i by `reference[i]`, class 0 by `1 - reference[i]`.
/// This is the label-free quantity the score transformer constrains.
pub fn proxy_geo_difference(
    reference: &[f64],
    scores: &[f64],
    membership: &[Option<bool>],
    attribute: &str,
    mode: EoMode,
) -> Result<f64> {
    check_len(reference.len(), scores.len())?;
    check_len(reference.len(), membership.len())?;
    check_scores(scores)?;
    check_scores(reference)?;
    // [population][class] -> (weighted sum, weight)
    let mut acc = [[(CompensatedSum::new(), CompensatedSum::new()); 2]; 3];
    for ((&r, &s), m) in reference.iter().zip(scores).zip(membership) {
        let pop = match m {
            Some(true) => 0,
            Some(false) => 1,
            None => continue,
        };
        for (y, w) in [(0usize, 1.0 - r), (1usize, r)] {
            for p in [pop, 2] {
                acc[p][y].0.add(w * s);
                acc[p][y].1.add(w);
            }
        }
    }
    let reference_pop = match mode {
        EoMode::Complement => 1,
        EoMode::Overall => 2,
    };
    let ref_name = reference_label(attribute, mode);
    let mean = |p: usize, y: usize, name: &str| -> Result<f64> {
        let w = acc[p][y].1.value();
        if w <= 0.0 {
            return Err(Error::DegenerateGroup {
                group: name.to_string(),
                class: if y == 1 { LabelClass::Positive } else { LabelClass::Negative },
            });
        }
        Ok(acc[p][y].0.value() / w)
    };
    let mut worst = 0.0f64;
    for y in [1, 0] {
        worst = worst.max((mean(0, y, attribute)? - mean(reference_pop, y, &ref_name)?).abs());
    }
    Ok(worst)
}

/// mean(prediction | sensitive) − mean(prediction | complement).
pub fn statistical_parity_difference(ds: &ScoredDataset, predictions: &[u8], attribute: &str) -> Result<f64> {
    let counts = confusion(ds, predictions, attribute)?;
    spd_from_counts(&counts, attribute)
}

fn spd_from_counts(counts: &GroupConfusion, attribute: &str) -> Result<f64> {
    let rate = |c: &ConfusionCounts, name: &str| -> Result<f64> {
        if c.total() == 0 {
            return Err(Error::Empty(format!("group `{name}` has no samples")));
        }
        Ok((c.tp + c.fp) as f64 / c.total() as f64)
    };
    Ok(rate(&counts.sensitive, attribute)? - rate(&counts.complement, &format!("not {attribute}"))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub sensitive: f64,
    pub complement: f64,
    pub overall: f64,
}

/// Everything the tuning and reporting layers need about one prediction
/// vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub attribute: String,
    pub eo_mode: EoMode,
    pub n: usize,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub tpr: GroupRates,
    pub fpr: GroupRates,
    pub eo: f64,
    pub avg_eo: f64,
    pub geo: f64,
    pub spd: f64,
}

impl FairnessReport {
    /// Report for hard predictions. `scores` feed GEO; without them GEO is
    /// measured on the 0/1 predictions.
    pub fn from_predictions(
        ds: &ScoredDataset,
        predictions: &[u8],
        scores: Option<&[f64]>,
        attribute: &str,
        mode: EoMode,
    ) -> Result<Self> {
        let counts = confusion(ds, predictions, attribute)?;
        let gaps = rate_gaps(&counts, attribute, mode)?;
        let hard: Vec<f64>;
        let geo_scores = match scores {
            Some(s) => s,
            None => {
                hard = predictions.iter().map(|&p| f64::from(p)).collect();
                &hard
            }
        };
        let membership = ds.membership(attribute)?;
        let geo = geo_difference_from_parts(&ds.labels(), geo_scores, &membership, attribute, mode)?;
        let comp_name = format!("not {attribute}");
        Ok(Self {
            attribute: attribute.to_string(),
            eo_mode: mode,
            n: ds.len(),
            accuracy: accuracy(ds, predictions)?,
            balanced_accuracy: balanced_accuracy(ds, predictions)?,
            tpr: GroupRates {
                sensitive: counts.sensitive.tpr(attribute)?,
                complement: counts.complement.tpr(&comp_name)?,
                overall: counts.overall.tpr("overall")?,
            },
            fpr: GroupRates {
                sensitive: counts.sensitive.fpr(attribute)?,
                complement: counts.complement.fpr(&comp_name)?,
                overall: counts.overall.fpr("overall")?,
            },
            eo: gaps.equalized_odds(),
            avg_eo: gaps.average_equalized_odds(),
            geo,
            spd: spd_from_counts(&counts, attribute)?,
        })
    }

    /// Report for scores thresholded as `score >= threshold`.
    pub fn from_scores(ds: &ScoredDataset, scores: &[f64], threshold: f64, attribute: &str, mode: EoMode) -> Result<Self> {
        let preds = threshold_predictions(scores, threshold);
        Self::from_predictions(ds, &preds, Some(scores), attribute, mode)
    }
}

pub fn threshold_predictions(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= threshold)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pearson {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Sample Pearson correlation with a two-sided p-value from the exact
/// t-distribution: p = I_{1-r²}((n-2)/2, 1/2).
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Pearson> {
    check_len(xs.len(), ys.len())?;
    let n = xs.len();
    if n < 3 {
        return Err(Error::invalid(format!("pearson needs at least 3 points, got {n}")));
    }
    check_scores(xs)?;
    check_scores(ys)?;
    let mean = |v: &[f64]| v.iter().copied().collect::<CompensatedSum>().value() / n as f64;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxx, mut syy, mut sxy) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx.add(dx * dx);
        syy.add(dy * dy);
        sxy.add(dx * dy);
    }
    let (sxx, syy, sxy) = (sxx.value(), syy.value(), sxy.value());
    if sxx <= 0.0 {
        return Err(Error::ZeroVariance("xs"));
    }
    if syy <= 0.0 {
        return Err(Error::ZeroVariance("ys"));
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let one_minus_r2 = (1.0 - rho) * (1.0 + rho);
    let p_value = if one_minus_r2 <= 0.0 {
        0.0
    } else {
        let dof = (n - 2) as f64;
        statrs::function::beta::beta_reg(0.5 * dof, 0.5, one_minus_r2).clamp(0.0, 1.0)
    };
    Ok(Pearson { rho, p_value, n })
}

fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

/// Keeps the items not dominated in (lower eo, higher balanced accuracy).
/// An item is dominated when another has eo ≤ and balanced accuracy ≥,
/// with at least one strict. Identical points are all kept. Output is
/// sorted by eo ascending (ties: balanced accuracy descending, then input
/// order).
pub fn pareto_filter<T, F>(items: Vec<T>, key: F) -> Vec<T>
where
    F: Fn(&T) -> (f64, f64),
{
    let mut keyed: Vec<((f64, f64), T)> = items.into_iter().map(|t| (key(&t), t)).collect();
    keyed.sort_by(|(a, _), (b, _)| cmp_f64(a.0, b.0).then_with(|| cmp_f64(b.1, a.1)));

    let mut keep = vec![false; keyed.len()];
    let mut best_before = f64::NEG_INFINITY;
    let mut start = 0;
    while start < keyed.len() {
        let eo = keyed[start].0 .0;
        let end = start + keyed[start..].iter().take_while(|(k, _)| k.0 == eo).count();
        // first entry of a block carries the block's best accuracy
        let block_best = keyed[start].0 .1;
        if block_best > best_before {
            for (flag, (k, _)) in keep[start..end].iter_mut().zip(&keyed[start..end]) {
                *flag = k.1 == block_best;
            }
        }
        best_before = best_before.max(block_best);
        start = end;
    }
    keyed
        .into_iter()
        .zip(keep)
        .filter_map(|((_, t), k)| k.then_some(t))
        .collect()
}
