use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use fairpost_core::calibrate::{self, Calibrator, CalibratorKind};
use fairpost_core::dataset::{self, Format, ScoredDataset, SyntheticConfig};
use fairpost_core::fst::{self, FstModel, FstOptions, Solver};
use fairpost_core::hps::{self, HpsModel};
use fairpost_core::metrics::{threshold_predictions, EoMode, FairnessReport};
use fairpost_core::report::{self, sha256_hex, RunSummary};
use fairpost_core::tuning::{self, Method, TuneConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Parser)]
#[command(name = "fairpost", version, about = "Post-processing for group fairness of binary classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scored dataset.
    Synth(SynthArgs),
    /// Accuracy and fairness metrics of thresholded scores.
    Metrics(MetricsArgs),
    /// Fit or apply a score calibrator.
    Calibrate(CalibrateArgs),
    /// Fair Score Transformer.
    #[command(subcommand)]
    Fst(FstCommand),
    /// Randomized post-processing of hard predictions.
    #[command(subcommand)]
    Hps(HpsCommand),
    /// Sweep a method on dev data and evaluate its frontier on test.
    Tune(TuneArgs),
    /// Tables for subgroups, seed variation and correlations.
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Args)]
struct SynthArgs {
    /// JSON generator configuration; defaults apply to absent fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the sample count in the configuration.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    attribute: String,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value = "complement")]
    eo_mode: EoMode,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "logistic", conflicts_with = "apply")]
    method: CalibratorKind,
    /// Apply a saved calibrator instead of fitting one.
    #[arg(long)]
    apply: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Where to save the fitted calibrator.
    #[arg(long, conflicts_with = "apply")]
    model: Option<PathBuf>,
}

#[derive(Subcommand)]
enum FstCommand {
    Fit(FstFitArgs),
    Apply(ApplyArgs),
}

#[derive(Args)]
struct FstFitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    attribute: String,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value = "pgd")]
    solver: Solver,
    #[arg(long, default_value = "complement")]
    eo_mode: EoMode,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum HpsCommand {
    Fit(HpsFitArgs),
    Apply(HpsApplyArgs),
}

#[derive(Args)]
struct HpsFitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    attribute: String,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value = "complement")]
    eo_mode: EoMode,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct HpsApplyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    seed: u64,
    /// JSONL of `{"id", "prediction"}`.
    #[arg(long)]
    out: PathBuf,
    /// Expected and sampled fairness reports on the input labels.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    attribute: String,
    #[arg(long, default_value = "fst")]
    method: Method,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    epsilons: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    thresholds: Option<Vec<f64>>,
    /// Fit a logistic calibrator on dev-train before FST.
    #[arg(long)]
    calibrate: bool,
    #[arg(long, default_value_t = tuning::DEFAULT_EO_CAP)]
    eo_cap: f64,
    #[arg(long, default_value_t = tuning::DEFAULT_DEV_FRACTION)]
    dev_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "pgd")]
    solver: Solver,
    #[arg(long, default_value = "complement")]
    eo_mode: EoMode,
    #[arg(long)]
    out: PathBuf,
    /// Where to save the FST model of the selected point.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Where to save the calibrator fitted on dev-train.
    #[arg(long)]
    calibrator: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ReportCommand {
    /// EO before and after mitigation per group and qualifying subgroup.
    Subgroups(SubgroupArgs),
    /// Mean and standard error over seeds per (model, fraction) cell.
    Seeds(RunsArgs),
    /// Pearson correlation between two run fields.
    Correlation(CorrelationArgs),
}

#[derive(Args)]
struct SubgroupArgs {
    /// Baseline scored test set followed by its mitigated counterpart.
    #[arg(long, num_args = 2, required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    attribute: String,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Restrict to these subgroups; all annotated ones otherwise.
    #[arg(long, value_delimiter = ',')]
    subgroups: Option<Vec<String>>,
    #[arg(long, default_value_t = report::DEFAULT_MIN_SAMPLES)]
    min_samples: usize,
    #[arg(long, default_value = "complement")]
    eo_mode: EoMode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunsArgs {
    /// Run summaries as JSONL or JSON arrays.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrelationArgs {
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    /// Run field, e.g. `balanced_accuracy` or `eo:religion`.
    #[arg(long)]
    x: String,
    #[arg(long)]
    y: String,
    #[arg(long)]
    out: PathBuf,
}

/// HPS model file: the core model plus the threshold that produced the
/// hard predictions it was fitted on.
#[derive(Serialize, Deserialize)]
struct HpsFile {
    threshold: f64,
    #[serde(flatten)]
    model: HpsModel,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth(a) => synth(a),
        Command::Metrics(a) => metrics(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Fst(FstCommand::Fit(a)) => fst_fit(a),
        Command::Fst(FstCommand::Apply(a)) => fst_apply(a),
        Command::Hps(HpsCommand::Fit(a)) => hps_fit(a),
        Command::Hps(HpsCommand::Apply(a)) => hps_apply(a),
        Command::Tune(a) => tune(a),
        Command::Report(ReportCommand::Subgroups(a)) => report_subgroups(a),
        Command::Report(ReportCommand::Seeds(a)) => report_seeds(a),
        Command::Report(ReportCommand::Correlation(a)) => report_correlation(a),
    }
}

fn load(path: &Path) -> Result<ScoredDataset> {
    dataset::load_auto(path).with_context(|| format!("loading {}", path.display()))
}

fn save(ds: &ScoredDataset, path: &Path) -> Result<()> {
    let format = Format::from_path(path).unwrap_or(Format::Jsonl);
    dataset::save(ds, path, format).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value)?;
            writeln!(stdout)?;
            Ok(())
        }
    }
}

/// Records input and output digests next to a report so every number can
/// be traced back to the exact bytes it came from.
fn write_meta(out: &Path, command: &str, inputs: &[PathBuf], extra: serde_json::Value) -> Result<()> {
    let digest = |p: &Path| -> Result<serde_json::Value> {
        let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(json!({ "path": p.display().to_string(), "sha256": sha256_hex(&bytes) }))
    };
    let meta = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "inputs": inputs.iter().map(|p| digest(p)).collect::<Result<Vec<_>>>()?,
        "output": digest(out)?,
        "parameters": extra,
    });
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    write_json(Path::new(&name), &meta)
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg: SyntheticConfig = match &a.config {
        Some(path) => read_json(path)?,
        None => SyntheticConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    let ds = dataset::generate_synthetic(&cfg).context("generating synthetic data")?;
    save(&ds, &a.out)
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let ds = load(&a.input)?;
    let scores = ds.scores()?;
    let report = FairnessReport::from_scores(&ds, &scores, a.threshold, &a.attribute, a.eo_mode)?;
    emit_json(a.out.as_deref(), &report)
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let ds = load(&a.input)?;
    let cal: Calibrator = match &a.apply {
        Some(path) => read_json(path)?,
        None => calibrate::fit(&ds, a.method).context("fitting calibrator")?,
    };
    save(&cal.apply(&ds)?, &a.out)?;
    if let Some(path) = &a.model {
        write_json(path, &cal)?;
    }
    Ok(())
}

fn fst_fit(a: FstFitArgs) -> Result<()> {
    let ds = load(&a.input)?;
    let mut opts = FstOptions {
        solver: a.solver,
        mode: a.eo_mode,
        ..Default::default()
    };
    if let Some(iters) = a.max_iters {
        opts.max_iters = iters;
    }
    let model = fst::fit(&ds, &a.attribute, a.epsilon, &opts).context("fitting FST")?;
    let d = &model.diagnostics;
    eprintln!(
        "fst: {:?} converged in {} iterations, GEO {:.4} -> {:.4} (eps {})",
        d.solver, d.iterations, d.baseline_geo, d.fitted_geo, model.epsilon
    );
    write_json(&a.model, &model)
}

fn fst_apply(a: ApplyArgs) -> Result<()> {
    let model: FstModel = read_json(&a.model)?;
    let ds = load(&a.input)?;
    save(&model.apply(&ds)?, &a.out)
}

fn hps_fit(a: HpsFitArgs) -> Result<()> {
    let ds = load(&a.input)?;
    let preds = threshold_predictions(&ds.scores()?, a.threshold);
    let model = hps::fit(&ds, &preds, &a.attribute).context("fitting HPS")?.with_eo_mode(a.eo_mode);
    write_json(&a.model, &HpsFile { threshold: a.threshold, model })
}

fn hps_apply(a: HpsApplyArgs) -> Result<()> {
    let HpsFile { threshold, model } = read_json(&a.model)?;
    let ds = load(&a.input)?;
    let preds = threshold_predictions(&ds.scores()?, threshold);
    let out = model.apply_dataset(&ds, &preds, a.seed)?;
    let mut lines = Vec::new();
    for (id, p) in ds.ids().zip(&out) {
        serde_json::to_writer(&mut lines, &json!({ "id": id, "prediction": p }))?;
        lines.push(b'\n');
    }
    write_bytes(&a.out, &lines)?;
    if let Some(path) = &a.report {
        let sampled = FairnessReport::from_predictions(&ds, &out, None, &model.attribute, model.eo_mode)?;
        let report = json!({
            "expected": hps::expected_report(&model),
            "sampled": sampled,
            "seed": a.seed,
        });
        write_json(path, &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TuneFile<'a> {
    #[serde(flatten)]
    frontier: &'a tuning::ParetoFrontier,
    selected: &'a tuning::Selection,
    baseline_dev_eval: &'a FairnessReport,
    baseline_test: &'a FairnessReport,
    inputs: serde_json::Value,
}

fn tune(a: TuneArgs) -> Result<()> {
    let dev = load(&a.dev)?;
    let test = load(&a.test)?;
    let defaults = TuneConfig::default();
    let cfg = TuneConfig {
        method: a.method,
        attribute: a.attribute,
        epsilons: a.epsilons.unwrap_or(defaults.epsilons),
        thresholds: a.thresholds.unwrap_or(defaults.thresholds),
        calibrate: a.calibrate,
        eo_cap: a.eo_cap,
        dev_fraction: a.dev_fraction,
        seed: a.seed,
        fst: FstOptions {
            solver: a.solver,
            mode: a.eo_mode,
            ..defaults.fst
        },
    };
    let outcome = tuning::run(&dev, &test, &cfg).context("tuning")?;
    if !outcome.selected.within_cap {
        eprintln!("tune: no frontier point meets EO cap {}, selected the minimum-EO point", cfg.eo_cap);
    }
    let digest = |p: &Path| -> Result<String> { Ok(sha256_hex(&fs::read(p)?)) };
    let file = TuneFile {
        frontier: &outcome.frontier,
        selected: &outcome.selected,
        baseline_dev_eval: &outcome.baseline_dev_eval,
        baseline_test: &outcome.baseline_test,
        inputs: json!({ "dev_sha256": digest(&a.dev)?, "test_sha256": digest(&a.test)? }),
    };
    write_json(&a.out, &file)?;
    if let Some(path) = &a.model {
        let Some(model) = &outcome.model else {
            bail!("the selected point has no FST model (method {:?})", cfg.method);
        };
        write_json(path, model)?;
    }
    if let Some(path) = &a.calibrator {
        let Some(cal) = &outcome.calibrator else {
            bail!("no calibrator was fitted; pass --calibrate");
        };
        write_json(path, cal)?;
    }
    Ok(())
}

fn report_subgroups(a: SubgroupArgs) -> Result<()> {
    let base = load(&a.inputs[0])?;
    let mitigated = load(&a.inputs[1])?;
    ensure!(base.ids().eq(mitigated.ids()), "the two inputs must list the same ids in the same order");
    ensure!(base.labels() == mitigated.labels(), "the two inputs disagree on labels");
    let before = threshold_predictions(&base.scores()?, a.threshold);
    let after = threshold_predictions(&mitigated.scores()?, a.threshold);
    let rows = report::subgroup_report(
        &base,
        &before,
        &after,
        &a.attribute,
        a.subgroups.as_deref(),
        a.min_samples,
        a.eo_mode,
    )?;
    let mut bytes = Vec::new();
    report::write_subgroup_csv(&rows, &mut bytes)?;
    write_bytes(&a.out, &bytes)?;
    let params = json!({
        "attribute": a.attribute,
        "threshold": a.threshold,
        "min_samples": a.min_samples,
        "eo_mode": a.eo_mode,
    });
    write_meta(&a.out, "report subgroups", &a.inputs, params)
}

fn read_all_runs(paths: &[PathBuf]) -> Result<Vec<RunSummary>> {
    let mut runs = Vec::new();
    for p in paths {
        let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        runs.extend(report::read_runs(&bytes).with_context(|| format!("parsing {}", p.display()))?);
    }
    Ok(runs)
}

fn report_seeds(a: RunsArgs) -> Result<()> {
    let rows = report::seed_summary(&read_all_runs(&a.inputs)?)?;
    let mut bytes = Vec::new();
    report::write_seed_csv(&rows, &mut bytes)?;
    write_bytes(&a.out, &bytes)?;
    write_meta(
        &a.out,
        "report seeds",
        &a.inputs,
        json!({ "degenerate_balanced_accuracy": report::DEGENERATE_BALANCED_ACCURACY }),
    )
}

fn report_correlation(a: CorrelationArgs) -> Result<()> {
    let c = report::correlation_report(&read_all_runs(&a.inputs)?, &a.x, &a.y)?;
    let mut bytes = Vec::new();
    report::write_correlation_csv(std::slice::from_ref(&c), &mut bytes)?;
    write_bytes(&a.out, &bytes)?;
    write_meta(&a.out, "report correlation", &a.inputs, json!({ "x": a.x, "y": a.y }))
}
