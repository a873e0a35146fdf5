//! Tables behind the evaluation: subgroup before/after EO, seed-variation
//! aggregates and correlations across runs. CSV writers flatten map-valued
//! fields into `<field>:<key>` columns.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::ScoredDataset;
use crate::error::{Error, Result};
use crate::metrics::{confusion_from_parts, pearson, rate_gaps, EoMode};

pub const DEFAULT_MIN_SAMPLES: usize = 100;
/// Runs at or below this balanced accuracy are treated as collapsed.
pub const DEGENERATE_BALANCED_ACCURACY: f64 = 0.52;
/// EO spread (max - min over seeds) worth flagging.
pub const SPREAD_FLAG: f64 = 0.15;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub name: String,
    pub n_test: usize,
    pub eo_before: f64,
    pub eo_after: f64,
}

/// EO before and after mitigation for the coarse group and every
/// subgroup with at least `min_samples` test members. Subgroups are
/// compared with their own complement and may overlap. Rows: the coarse
/// group first, then subgroups by name.
pub fn subgroup_report(
    test: &ScoredDataset,
    baseline: &[u8],
    mitigated: &[u8],
    attribute: &str,
    subgroups: Option<&[String]>,
    min_samples: usize,
    mode: EoMode,
) -> Result<Vec<SubgroupRow>> {
    let labels = test.labels();
    let row = |name: &str| -> Result<SubgroupRow> {
        let membership = test.membership(name)?;
        let eo = |preds: &[u8]| -> Result<f64> {
            let counts = confusion_from_parts(&labels, preds, &membership)?;
            Ok(rate_gaps(&counts, name, mode)?.equalized_odds())
        };
        Ok(SubgroupRow {
            name: name.to_string(),
            n_test: membership.iter().filter(|m| **m == Some(true)).count(),
            eo_before: eo(baseline)?,
            eo_after: eo(mitigated)?,
        })
    };

    let names: BTreeSet<String> = match subgroups {
        Some(list) => list.iter().cloned().collect(),
        None => test.subgroup_names().iter().cloned().collect(),
    };
    let mut rows = vec![row(attribute)?];
    for name in &names {
        if !test.subgroup_names().contains(name) {
            return Err(Error::UnknownAttribute(name.clone()));
        }
        let members = test.membership(name)?.iter().filter(|m| **m == Some(true)).count();
        if members >= min_samples {
            rows.push(row(name)?);
        }
    }
    if rows.len() == 1 {
        return Err(Error::Empty(format!("no subgroup has at least {min_samples} test samples")));
    }
    Ok(rows)
}

/// One trained model's evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub model: String,
    pub seed: u64,
    pub fraction: f64,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub eo: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<f64>,
}

impl RunSummary {
    pub fn is_degenerate(&self) -> bool {
        self.balanced_accuracy <= DEGENERATE_BALANCED_ACCURACY
    }

    /// Numeric field by name: `accuracy`, `balanced_accuracy`, `fraction`,
    /// `seed`, `params` or `eo:<attribute>`.
    pub fn field(&self, name: &str) -> Result<f64> {
        let missing = || Error::invalid(format!("run {}/{} has no field `{name}`", self.model, self.seed));
        match name {
            "accuracy" => Ok(self.accuracy),
            "balanced_accuracy" => Ok(self.balanced_accuracy),
            "fraction" => Ok(self.fraction),
            "seed" => Ok(self.seed as f64),
            "params" => self.params.ok_or_else(missing),
            other => match other.strip_prefix("eo:") {
                Some(attr) => self.eo.get(attr).copied().ok_or_else(missing),
                None => Err(Error::invalid(format!("unknown run field `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    /// Sample standard deviation over `√k`; absent for a single run.
    pub se: Option<f64>,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Self {
        let k = values.len() as f64;
        // centred on the first value so identical runs give exact zeros
        let origin = values[0];
        let shift = values.iter().map(|v| v - origin).sum::<f64>() / k;
        let se = (values.len() >= 2).then(|| {
            let var = values.iter().map(|v| (v - origin - shift).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        });
        Self { mean: origin + shift, se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub model: String,
    pub fraction: f64,
    pub runs: usize,
    pub excluded: usize,
    pub accuracy: MeanSe,
    pub balanced_accuracy: MeanSe,
    pub eo: BTreeMap<String, MeanSe>,
    /// `max - min` of EO over the included runs.
    pub eo_spread: BTreeMap<String, f64>,
    pub spread_flagged: bool,
}

/// Mean and standard error per (model, fraction) cell over the
/// non-degenerate runs. Cells are ordered by model, then fraction.
pub fn seed_summary(runs: &[RunSummary]) -> Result<Vec<SeedAggregate>> {
    let mut cells: BTreeMap<(String, u64), Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        if !r.fraction.is_finite() || r.fraction < 0.0 {
            return Err(Error::invalid(format!("run {}/{} has fraction {}", r.model, r.seed, r.fraction)));
        }
        // nonnegative floats order like their bit patterns
        cells.entry((r.model.clone(), r.fraction.to_bits())).or_default().push(r);
    }
    if cells.is_empty() {
        return Err(Error::Empty("no runs to summarize".into()));
    }
    cells
        .into_iter()
        .map(|((model, fraction), cell)| {
            let fraction = f64::from_bits(fraction);
            if cell.len() < 2 {
                return Err(Error::invalid(format!("cell ({model}, {fraction}) has a single run")));
            }
            let attrs: BTreeSet<&String> = cell[0].eo.keys().collect();
            if cell.iter().any(|r| r.eo.keys().collect::<BTreeSet<_>>() != attrs) {
                return Err(Error::invalid(format!("runs in cell ({model}, {fraction}) report different attributes")));
            }
            let kept: Vec<&RunSummary> = cell.iter().copied().filter(|r| !r.is_degenerate()).collect();
            if kept.is_empty() {
                return Err(Error::Empty(format!("every run in cell ({model}, {fraction}) is degenerate")));
            }
            let column = |f: &dyn Fn(&RunSummary) -> f64| kept.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let mut eo = BTreeMap::new();
            let mut eo_spread = BTreeMap::new();
            for attr in attrs {
                let vals = column(&|r| r.eo[attr]);
                let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
                eo.insert(attr.clone(), MeanSe::of(&vals));
                eo_spread.insert(attr.clone(), max - min);
            }
            Ok(SeedAggregate {
                spread_flagged: eo_spread.values().any(|s| *s >= SPREAD_FLAG),
                model,
                fraction,
                runs: kept.len(),
                excluded: cell.len() - kept.len(),
                accuracy: MeanSe::of(&column(&|r| r.accuracy)),
                balanced_accuracy: MeanSe::of(&column(&|r| r.balanced_accuracy)),
                eo,
                eo_spread,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub x_field: String,
    pub y_field: String,
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub excluded: usize,
}

/// Pearson correlation of two run fields over the non-degenerate runs.
pub fn correlation_report(runs: &[RunSummary], x_field: &str, y_field: &str) -> Result<Correlation> {
    let kept: Vec<&RunSummary> = runs.iter().filter(|r| !r.is_degenerate()).collect();
    let xs = kept.iter().map(|r| r.field(x_field)).collect::<Result<Vec<_>>>()?;
    let ys = kept.iter().map(|r| r.field(y_field)).collect::<Result<Vec<_>>>()?;
    let p = pearson(&xs, &ys)?;
    Ok(Correlation {
        x_field: x_field.to_string(),
        y_field: y_field.to_string(),
        rho: p.rho,
        p_value: p.p_value,
        n: p.n,
        excluded: runs.len() - kept.len(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_subgroup_csv<W: Write>(rows: &[SubgroupRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_seed_csv<W: Write>(rows: &[SeedAggregate], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let attrs: BTreeSet<&String> = rows.iter().flat_map(|r| r.eo.keys()).collect();
    let mut header: Vec<String> = [
        "model",
        "fraction",
        "runs",
        "excluded",
        "accuracy_mean",
        "accuracy_se",
        "balanced_accuracy_mean",
        "balanced_accuracy_se",
    ]
    .map(String::from)
    .to_vec();
    for a in &attrs {
        header.extend([format!("eo_mean:{a}"), format!("eo_se:{a}"), format!("eo_spread:{a}")]);
    }
    header.push("spread_flagged".into());
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.model.clone(),
            r.fraction.to_string(),
            r.runs.to_string(),
            r.excluded.to_string(),
            r.accuracy.mean.to_string(),
            fmt_opt(r.accuracy.se),
            r.balanced_accuracy.mean.to_string(),
            fmt_opt(r.balanced_accuracy.se),
        ];
        for a in &attrs {
            let m = r.eo.get(*a);
            rec.push(fmt_opt(m.map(|m| m.mean)));
            rec.push(fmt_opt(m.and_then(|m| m.se)));
            rec.push(fmt_opt(r.eo_spread.get(*a).copied()));
        }
        rec.push(r.spread_flagged.to_string());
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_correlation_csv<W: Write>(rows: &[Correlation], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Runs from JSONL (one object per line) or a JSON array.
pub fn read_runs(bytes: &[u8]) -> Result<Vec<RunSummary>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::invalid(format!("runs file is not UTF-8: {e}")))?;
    if text.trim_start().starts_with('[') {
        return Ok(serde_json::from_str(text)?);
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Malformed {
                line: i + 1,
                field: "run".into(),
                message: e.to_string(),
            })
        })
        .collect()
}
