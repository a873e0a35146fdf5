//! Scored datasets: record schema, JSONL/CSV ingestion, deterministic splits
//! and a synthetic generator with controllable group bias.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::error::{Error, Result};
use crate::numeric::round_half_up;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

/// One scored example. Field names are the JSONL schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub label: u8,
    #[serde(default)]
    pub groups: BTreeMap<String, u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgroups: Option<BTreeMap<String, u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl SampleRecord {
    /// Checks the record invariants, returning the offending field and a
    /// message on failure.
    pub fn check(&self) -> std::result::Result<(), (String, String)> {
        if self.logits.is_none() && self.score.is_none() {
            return Err(("score".into(), "record has neither logits nor score".into()));
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(("score".into(), format!("score {s} outside [0, 1]")));
            }
        }
        if let Some(l) = self.logits {
            if l.iter().any(|v| !v.is_finite()) {
                return Err(("logits".into(), "logits must be finite".into()));
            }
        }
        if self.label > 1 {
            return Err(("label".into(), format!("label {} not in {{0, 1}}", self.label)));
        }
        for (k, v) in &self.groups {
            if *v > 1 {
                return Err((format!("groups.{k}"), format!("membership {v} not in {{0, 1}}")));
            }
        }
        for (k, v) in self.subgroups.iter().flatten() {
            if *v > 1 {
                return Err((format!("subgroups.{k}"), format!("membership {v} not in {{0, 1}}")));
            }
        }
        Ok(())
    }
}

/// How records without an annotation for an attribute are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingMembership {
    /// Absent membership counts as the complement group.
    #[default]
    Complement,
    /// Absent membership excludes the record from group comparisons.
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
        ext.parse()
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::UnknownFormat(s.to_string())),
        }
    }
}

/// An ordered, validated collection of records. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDataset {
    records: Vec<SampleRecord>,
    attributes: Vec<String>,
    subgroup_names: Vec<String>,
    missing: MissingMembership,
}

impl ScoredDataset {
    /// Validates records and builds the attribute registries (sorted union of
    /// the membership keys seen).
    pub fn new(records: Vec<SampleRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        let mut attributes = BTreeSet::new();
        let mut subgroups = BTreeSet::new();
        for (i, r) in records.iter().enumerate() {
            if let Err((field, message)) = r.check() {
                return Err(Error::Malformed {
                    line: i + 1,
                    field,
                    message,
                });
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
            attributes.extend(r.groups.keys().cloned());
            subgroups.extend(r.subgroups.iter().flat_map(|m| m.keys().cloned()));
        }
        if let Some(name) = attributes.intersection(&subgroups).next() {
            return Err(Error::invalid(format!(
                "`{name}` is used both as a group attribute and a subgroup"
            )));
        }
        Ok(Self {
            records,
            attributes: attributes.into_iter().collect(),
            subgroup_names: subgroups.into_iter().collect(),
            missing: MissingMembership::default(),
        })
    }

    pub fn with_missing_membership(mut self, policy: MissingMembership) -> Self {
        self.missing = policy;
        self
    }

    pub fn missing_membership(&self) -> MissingMembership {
        self.missing
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Registered group attribute names, sorted.
    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    /// Registered subgroup names, sorted.
    pub fn subgroup_names(&self) -> &[String] {
        &self.subgroup_names
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Scores of every record; errors on the first record without one.
    pub fn scores(&self) -> Result<Vec<f64>> {
        self.records
            .iter()
            .map(|r| {
                r.score.ok_or_else(|| Error::MissingField {
                    id: r.id.clone(),
                    what: "a score",
                })
            })
            .collect()
    }

    /// Membership per record for a group attribute or subgroup name.
    /// `None` marks a record excluded under [`MissingMembership::Exclude`].
    pub fn membership(&self, name: &str) -> Result<Vec<Option<bool>>> {
        let is_group = self.attributes.binary_search_by(|a| a.as_str().cmp(name)).is_ok();
        let is_subgroup = !is_group
            && self
                .subgroup_names
                .binary_search_by(|a| a.as_str().cmp(name))
                .is_ok();
        if !is_group && !is_subgroup {
            return Err(Error::UnknownAttribute(name.to_string()));
        }
        let absent = match self.missing {
            MissingMembership::Complement => Some(false),
            MissingMembership::Exclude => None,
        };
        Ok(self
            .records
            .iter()
            .map(|r| {
                let value = if is_group {
                    r.groups.get(name).copied()
                } else {
                    r.subgroups.as_ref().and_then(|m| m.get(name).copied())
                };
                value.map(|v| v == 1).or(absent)
            })
            .collect())
    }

    /// Hard 0/1 membership; excluded records are treated as complement.
    pub fn membership_bits(&self, name: &str) -> Result<Vec<u8>> {
        Ok(self
            .membership(name)?
            .into_iter()
            .map(|m| u8::from(m == Some(true)))
            .collect())
    }

    /// Returns a copy with every record's score replaced.
    pub fn with_scores(&self, scores: &[f64]) -> Result<Self> {
        if scores.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: scores.len(),
            });
        }
        let records = self
            .records
            .iter()
            .zip(scores)
            .map(|(r, &s)| SampleRecord {
                score: Some(s),
                ..r.clone()
            })
            .collect();
        Ok(Self {
            records,
            ..self.clone()
        })
    }

    fn subset(&self, indices: &[usize]) -> Self {
        let records: Vec<SampleRecord> = indices.iter().map(|&i| self.records[i].clone()).collect();
        // registry of a subset stays the parent's registry
        Self {
            records,
            attributes: self.attributes.clone(),
            subgroup_names: self.subgroup_names.clone(),
            missing: self.missing,
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }
}

// ---------------------------------------------------------------------------
// IO

pub fn load(path: impl AsRef<Path>, format: Format) -> Result<ScoredDataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        Format::Jsonl => read_jsonl(reader),
        Format::Csv => read_csv(reader),
    }
}

/// Loads a file, inferring the format from its extension.
pub fn load_auto(path: impl AsRef<Path>) -> Result<ScoredDataset> {
    let path = path.as_ref();
    load(path, Format::from_path(path)?)
}

pub fn save(ds: &ScoredDataset, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(ds, format)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Canonical serialization of a dataset.
pub fn to_bytes(ds: &ScoredDataset, format: Format) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match format {
        Format::Jsonl => write_jsonl(ds, &mut out)?,
        Format::Csv => write_csv(ds, &mut out)?,
    }
    Ok(out)
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<ScoredDataset> {
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Malformed {
            line: lineno,
            field: "<line>".into(),
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: lineno,
            field: serde_field_hint(&e.to_string()),
            message: e.to_string(),
        })?;
        push_checked(&mut records, &mut ids, record, lineno)?;
    }
    ScoredDataset::new(records)
}

fn serde_field_hint(msg: &str) -> String {
    // serde_json messages name the field as "... field `x` ..."
    msg.split('`').nth(1).unwrap_or("<record>").to_string()
}

fn push_checked(
    records: &mut Vec<SampleRecord>,
    ids: &mut HashSet<String>,
    record: SampleRecord,
    lineno: usize,
) -> Result<()> {
    if let Err((field, message)) = record.check() {
        return Err(Error::Malformed {
            line: lineno,
            field,
            message,
        });
    }
    if !ids.insert(record.id.clone()) {
        return Err(Error::Malformed {
            line: lineno,
            field: "id".into(),
            message: format!("duplicate id `{}`", record.id),
        });
    }
    records.push(record);
    Ok(())
}

pub fn write_jsonl<W: Write>(ds: &ScoredDataset, mut w: W) -> Result<()> {
    for r in ds.records() {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

enum CsvColumn {
    Id,
    Label,
    Score,
    Logit0,
    Logit1,
    Split,
    Group(String),
    Subgroup(String),
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<ScoredDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut columns = Vec::with_capacity(headers.len());
    for h in headers.iter() {
        let col = match h {
            "id" => CsvColumn::Id,
            "label" => CsvColumn::Label,
            "score" => CsvColumn::Score,
            "logit0" => CsvColumn::Logit0,
            "logit1" => CsvColumn::Logit1,
            "split" => CsvColumn::Split,
            other => {
                if let Some(name) = other.strip_prefix("group:") {
                    CsvColumn::Group(name.to_string())
                } else if let Some(name) = other.strip_prefix("subgroup:") {
                    CsvColumn::Subgroup(name.to_string())
                } else {
                    return Err(Error::Malformed {
                        line: 1,
                        field: other.to_string(),
                        message: "unknown column".into(),
                    });
                }
            }
        };
        columns.push(col);
    }
    for required in ["id", "label"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Malformed {
                line: 1,
                field: required.into(),
                message: "missing required column".into(),
            });
        }
    }

    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        let lineno = row.position().map(|p| p.line() as usize).unwrap_or(idx + 2);
        let bad = |field: &str, message: String| Error::Malformed {
            line: lineno,
            field: field.to_string(),
            message,
        };
        let mut id = None;
        let mut label = None;
        let mut score = None;
        let (mut l0, mut l1) = (None, None);
        let mut split = None;
        let mut groups = BTreeMap::new();
        let mut subgroups: Option<BTreeMap<String, u8>> = None;

        for (col, cell) in columns.iter().zip(row.iter()) {
            if cell.is_empty() {
                continue;
            }
            let real = |field: &str| {
                cell.parse::<f64>()
                    .map_err(|e| bad(field, format!("`{cell}`: {e}")))
            };
            let bit = |field: &str| {
                cell.parse::<u8>()
                    .map_err(|e| bad(field, format!("`{cell}`: {e}")))
            };
            match col {
                CsvColumn::Id => id = Some(cell.to_string()),
                CsvColumn::Label => label = Some(bit("label")?),
                CsvColumn::Score => score = Some(real("score")?),
                CsvColumn::Logit0 => l0 = Some(real("logit0")?),
                CsvColumn::Logit1 => l1 = Some(real("logit1")?),
                CsvColumn::Split => split = Some(cell.parse::<Split>().map_err(|e| bad("split", e.to_string()))?),
                CsvColumn::Group(name) => {
                    groups.insert(name.clone(), bit(&format!("group:{name}"))?);
                }
                CsvColumn::Subgroup(name) => {
                    subgroups
                        .get_or_insert_with(BTreeMap::new)
                        .insert(name.clone(), bit(&format!("subgroup:{name}"))?);
                }
            }
        }
        let logits = match (l0, l1) {
            (Some(a), Some(b)) => Some([a, b]),
            (None, None) => None,
            _ => return Err(bad("logit0", "logit0 and logit1 must be both present or both absent".into())),
        };
        let record = SampleRecord {
            id: id.ok_or_else(|| bad("id", "missing id".into()))?,
            logits,
            score,
            label: label.ok_or_else(|| bad("label", "missing label".into()))?,
            groups,
            subgroups,
            split,
        };
        push_checked(&mut records, &mut ids, record, lineno)?;
    }
    ScoredDataset::new(records)
}

pub fn write_csv<W: Write>(ds: &ScoredDataset, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["id", "label", "score", "logit0", "logit1", "split"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(ds.attributes().iter().map(|a| format!("group:{a}")));
    header.extend(ds.subgroup_names().iter().map(|a| format!("subgroup:{a}")));
    wtr.write_record(&header)?;

    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in ds.records() {
        let mut row = vec![
            r.id.clone(),
            r.label.to_string(),
            opt(r.score),
            opt(r.logits.map(|l| l[0])),
            opt(r.logits.map(|l| l[1])),
            r.split.map(|s| s.to_string()).unwrap_or_default(),
        ];
        for a in ds.attributes() {
            row.push(r.groups.get(a).map(|v| v.to_string()).unwrap_or_default());
        }
        for s in ds.subgroup_names() {
            row.push(
                r.subgroups
                    .as_ref()
                    .and_then(|m| m.get(s))
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            );
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Splits

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx
}

/// Random partition into two parts; the first has `round_half_up(fraction * n)`
/// records. Both parts keep file order.
pub fn split(ds: &ScoredDataset, fraction: f64, seed: u64) -> Result<(ScoredDataset, ScoredDataset)> {
    if ds.is_empty() {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction {fraction} not in (0, 1)")));
    }
    let n = ds.len();
    let k = round_half_up(fraction * n as f64).min(n);
    let perm = permutation(n, seed);
    let mut first: Vec<usize> = perm[..k].to_vec();
    let mut second: Vec<usize> = perm[k..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    Ok((ds.subset(&first), ds.subset(&second)))
}

/// Nested subsamples: prefixes of one seeded permutation, so each smaller
/// sample is contained in every larger one.
pub fn subsample_nested(ds: &ScoredDataset, fractions: &[f64], seed: u64) -> Result<Vec<ScoredDataset>> {
    if fractions.is_empty() {
        return Err(Error::invalid("no fractions given"));
    }
    for w in fractions.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::invalid(format!(
                "fractions must be strictly ascending ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::invalid(format!("fraction {f} not in (0, 1]")));
    }
    let n = ds.len();
    let perm = permutation(n, seed);
    Ok(fractions
        .iter()
        .map(|&f| {
            let k = round_half_up(f * n as f64).min(n);
            let mut idx = perm[..k].to_vec();
            idx.sort_unstable();
            ds.subset(&idx)
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Synthetic data

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaShape {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConcentration {
    pub positive: BetaShape,
    pub negative: BetaShape,
}

/// Injected rate gaps, sensitive minus complement, at threshold 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupBias {
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n: usize,
    pub positive_rate: f64,
    pub group_rate: f64,
    pub attribute: String,
    pub score_concentration: ScoreConcentration,
    pub group_bias: GroupBias,
    /// Standard deviation of the common shift added to both logits.
    pub logit_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    /// Jigsaw-like prevalence: ~8% toxic, religion mentioned in
    /// 50748 / 1443899 of the training comments.
    fn default() -> Self {
        Self {
            n: 100_000,
            positive_rate: 0.08,
            group_rate: 50_748.0 / 1_443_899.0,
            attribute: "religion".into(),
            score_concentration: ScoreConcentration {
                positive: BetaShape { alpha: 5.0, beta: 1.0 },
                negative: BetaShape { alpha: 1.0, beta: 5.0 },
            },
            group_bias: GroupBias::default(),
            logit_noise: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} = {v} not in (0, 1)")))
            }
        };
        if self.n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        open("positive_rate", self.positive_rate)?;
        open("group_rate", self.group_rate)?;
        let sc = &self.score_concentration;
        for (name, v) in [
            ("positive.alpha", sc.positive.alpha),
            ("positive.beta", sc.positive.beta),
            ("negative.alpha", sc.negative.alpha),
            ("negative.beta", sc.negative.beta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("shape {name} = {v} must be > 0")));
            }
        }
        if !(self.logit_noise >= 0.0 && self.logit_noise.is_finite()) {
            return Err(Error::invalid("logit_noise must be >= 0"));
        }
        if self.attribute.is_empty() {
            return Err(Error::invalid("attribute name must be nonempty"));
        }
        self.swap_plan()?;
        Ok(())
    }

    /// Probability that a Beta-distributed score lands at or above 0.5.
    fn rate_above_half(shape: BetaShape) -> Result<f64> {
        let dist = statrs::distribution::Beta::new(shape.alpha, shape.beta)
            .map_err(|e| Error::invalid(format!("beta shape: {e}")))?;
        Ok(1.0 - dist.cdf(0.5))
    }

    /// (positive plan, negative plan).
    fn swap_plan(&self) -> Result<(SwapPlan, SwapPlan)> {
        let sc = &self.score_concentration;
        let pos = SwapPlan::new("tpr", self.group_bias.tpr, Self::rate_above_half(sc.positive)?)?;
        let neg = SwapPlan::new("fpr", self.group_bias.fpr, Self::rate_above_half(sc.negative)?)?;
        Ok((pos, neg))
    }

    /// Baseline rates at threshold 0.5 implied by the score law, without bias.
    pub fn expected_base_rates(&self) -> Result<(f64, f64)> {
        let sc = &self.score_concentration;
        Ok((Self::rate_above_half(sc.positive)?, Self::rate_above_half(sc.negative)?))
    }
}

/// Reflect a `probability` fraction of scores on one side of 0.5.
#[derive(Debug, Clone, Copy)]
struct SwapPlan {
    /// true: move scores below 0.5 up; false: move scores at/above 0.5 down.
    upward: bool,
    probability: f64,
}

impl SwapPlan {
    fn new(name: &str, delta: f64, rate_above: f64) -> Result<Self> {
        if !delta.is_finite() {
            return Err(Error::invalid(format!("group_bias.{name} must be finite")));
        }
        let (upward, pool) = if delta >= 0.0 {
            (true, 1.0 - rate_above)
        } else {
            (false, rate_above)
        };
        let probability = if delta == 0.0 { 0.0 } else { delta.abs() / pool };
        if probability > 1.0 {
            return Err(Error::invalid(format!(
                "group_bias.{name} = {delta} is not reachable: only {pool:.4} of the scores can cross 0.5"
            )));
        }
        Ok(Self { upward, probability })
    }

    fn apply(&self, score: f64, u: f64) -> f64 {
        let eligible = if self.upward { score < 0.5 } else { score >= 0.5 };
        if eligible && u < self.probability {
            1.0 - score
        } else {
            score
        }
    }
}

/// Draws a synthetic scored dataset. Every record consumes the same fixed
/// sequence of random draws, so output is a pure function of the config.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<ScoredDataset> {
    cfg.validate()?;
    let (pos_plan, neg_plan) = cfg.swap_plan()?;
    let sc = &cfg.score_concentration;
    let beta = |s: BetaShape| Beta::new(s.alpha, s.beta).map_err(|e| Error::invalid(format!("beta shape: {e}")));
    let pos_law = beta(sc.positive)?;
    let neg_law = beta(sc.negative)?;
    let noise = Normal::new(0.0, cfg.logit_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = cfg.n.to_string().len();

    let mut records = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let label = u8::from(rng.random::<f64>() < cfg.positive_rate);
        let sensitive = rng.random::<f64>() < cfg.group_rate;
        let raw = if label == 1 {
            pos_law.sample(&mut rng)
        } else {
            neg_law.sample(&mut rng)
        };
        let u: f64 = rng.random();
        let shift: f64 = noise.sample(&mut rng);
        let score = if sensitive {
            let plan = if label == 1 { &pos_plan } else { &neg_plan };
            plan.apply(raw, u)
        } else {
            raw
        };
        let clamped = score.clamp(1e-12, 1.0 - 1e-12);
        let z = (clamped / (1.0 - clamped)).ln();
        let mut groups = BTreeMap::new();
        groups.insert(cfg.attribute.clone(), u8::from(sensitive));
        records.push(SampleRecord {
            id: format!("syn-{i:0width$}"),
            logits: Some([shift - 0.5 * z, shift + 0.5 * z]),
            score: Some(score),
            label,
            groups,
            subgroups: None,
            split: None,
        });
    }
    ScoredDataset::new(records)
}
