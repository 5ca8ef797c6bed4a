//! `vpr-integrity` command-line driver.

mod manifest;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use vpr_integrity::dataset::{self, DatasetFormat};
use vpr_integrity::experiments::report::{self, MetricsFile, ResultHeader};
use vpr_integrity::experiments::threshold::{self, ThresholdReport};
use vpr_integrity::experiments::{self, Exp1Config, Exp2Config, Method};
use vpr_integrity::localizer::DEFAULT_WINDOW;
use vpr_integrity::mlp::{self, TrainConfig};
use vpr_integrity::model_io;
use vpr_integrity::pipeline::{self, PreparedQuery};
use vpr_integrity::{
    DistanceMetric, DistanceMode, MatchRecord, Matcher, MatcherConfig, QueryStream, StatCatalogue, SynthConfig,
    ToleranceConfig, Traverse,
};

use manifest::{file_hash, write_json, FileConfig, RunManifest};

/// Failure reported on stderr with exit code 1.
#[derive(Debug)]
pub struct CliError(String);

impl CliError {
    pub fn msg(s: impl Into<String>) -> Self {
        CliError(s.into())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError(format!("{}: {e}", path.display()))
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Parser)]
#[command(name = "vpr-integrity", version, about = "Integrity monitoring for visual place recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic reference traverse and query stream.
    GenSynth(GenSynthArgs),
    /// Train the integrity monitor on a dataset.
    Train(TrainArgs),
    /// Calibrate the N_P / N_R match-distance thresholds.
    CalibrateThresholds(CalibrateArgs),
    /// Write per-query monitor predictions.
    Verify(VerifyArgs),
    /// Goal-zone missions with single-query localization.
    SimulateExp1(Exp1Args),
    /// Continuous history-of-queries localization.
    SimulateExp2(Exp2Args),
    /// Recompute metrics from result CSVs.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct Common {
    /// JSON file with default values; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct MatchArgs {
    /// Dataset root holding `reference/` and `query/`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Position tolerance in meters.
    #[arg(long)]
    tolerance: Option<f64>,
    /// along-track or euclidean
    #[arg(long)]
    distance_mode: Option<String>,
    /// euclidean or cosine
    #[arg(long)]
    metric: Option<String>,
}

#[derive(Args)]
struct GenSynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long)]
    aliasing: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    blend: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    matching: MatchArgs,
    /// Out-of-tolerance loss weight; chosen from the label balance if absent.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Model file to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    matching: MatchArgs,
    /// Match the training precision/recall of this model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Stored operating point to target when no model is given (AP-GeM, NetVLAD, SALAD).
    #[arg(long)]
    technique: Option<String>,
    #[arg(long)]
    target_precision: Option<f64>,
    #[arg(long)]
    target_recall: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    matching: MatchArgs,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MethodArgs {
    /// baseline, np, nr, verified or oracle
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Calibration report from `calibrate-thresholds`, for np/nr.
    #[arg(long)]
    thresholds: Option<PathBuf>,
}

#[derive(Args)]
struct Exp1Args {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    matching: MatchArgs,
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long)]
    n_starts: Option<usize>,
    /// Comma-separated goal distances in meters.
    #[arg(long, value_delimiter = ',')]
    goals: Option<Vec<f64>>,
    #[arg(long)]
    arrival_margin: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Exp2Args {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    matching: MatchArgs,
    #[command(flatten)]
    method: MethodArgs,
    /// History window in meters.
    #[arg(long)]
    window: Option<f64>,
    /// Odometer travel before the first estimate; defaults to the window.
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Directory written by simulate-exp1 or simulate-exp2.
    #[arg(long)]
    results: PathBuf,
    /// Fail unless the recomputed metrics equal metrics.json within 1e-9.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynth(a) => gen_synth(a),
        Command::Train(a) => train(a),
        Command::CalibrateThresholds(a) => calibrate(a),
        Command::Verify(a) => verify(a),
        Command::SimulateExp1(a) => simulate_exp1(a),
        Command::SimulateExp2(a) => simulate_exp2(a),
        Command::Metrics(a) => metrics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::msg(format!("missing required --{flag}")))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn ensure_parent(file: &Path) -> Result<(), CliError> {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

/// `<file>.manifest.json` next to a single-file output.
fn sidecar(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    file.with_file_name(name)
}

struct Loaded {
    reference: Traverse,
    queries: QueryStream,
    tolerance: ToleranceConfig,
    matcher_cfg: MatcherConfig,
    data: PathBuf,
}

impl Loaded {
    fn config_json(&self) -> serde_json::Value {
        json!({
            "data": self.data,
            "tolerance": self.tolerance.tolerance,
            "distance-mode": self.tolerance.distance_mode,
            "metric": self.matcher_cfg.metric,
            "normalize": self.matcher_cfg.normalize,
        })
    }

    fn matcher(&self) -> Matcher<'_> {
        Matcher::new(&self.reference, self.matcher_cfg)
    }

    fn records(&self) -> Result<Vec<MatchRecord>, CliError> {
        Ok(self.matcher().match_stream(&self.queries, &self.tolerance)?)
    }

    fn prepared(&self, catalogue: &StatCatalogue) -> Result<Vec<PreparedQuery>, CliError> {
        Ok(pipeline::prepare_queries(&self.matcher(), &self.queries, &self.tolerance, catalogue)?)
    }
}

fn load_data(args: &MatchArgs, file: &FileConfig) -> Result<Loaded, CliError> {
    let data: PathBuf = required(file.pick(args.data.clone(), "data")?, "data")?;
    let (ref_dir, query_dir) = dataset::dataset_paths(&data);
    let reference = dataset::load_traverse(&ref_dir, DatasetFormat::Directory)?;
    let queries = dataset::load_queries(&query_dir)?;
    let mode: DistanceMode = file
        .or(args.distance_mode.clone(), "distance-mode", "along-track".to_string())?
        .parse()?;
    let tolerance = ToleranceConfig::new(file.or(args.tolerance, "tolerance", 0.5)?, mode)?;
    let metric: DistanceMetric = file.or(args.metric.clone(), "metric", "euclidean".to_string())?.parse()?;
    Ok(Loaded {
        reference,
        queries,
        tolerance,
        matcher_cfg: MatcherConfig {
            metric,
            ..MatcherConfig::default()
        },
        data,
    })
}

fn load_model(path: &Path) -> Result<mlp::MlpModel, CliError> {
    if !path.exists() {
        return Err(CliError::msg(format!(
            "model file {} not found; run `train` first",
            path.display()
        )));
    }
    Ok(model_io::load_model(path)?)
}

fn gen_synth(a: GenSynthArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        n: file.or(a.n, "n", d.n)?,
        m: file.or(a.m, "m", d.m)?,
        spacing: file.or(a.spacing, "spacing", d.spacing)?,
        aliasing_rate: file.or(a.aliasing, "aliasing", d.aliasing_rate)?,
        noise_sigma: file.or(a.noise, "noise", d.noise_sigma)?,
        aliasing_blend: file.or(a.blend, "blend", d.aliasing_blend)?,
        seed: file.or(a.common.seed, "seed", d.seed)?,
    };
    let out: PathBuf = required(file.pick(a.out, "out")?, "out")?;
    let ds = vpr_integrity::generate_synthetic(&cfg)?;
    ensure_dir(&out)?;
    RunManifest::new("gen-synth", serde_json::to_value(&cfg)?, json!({ "synth": cfg.seed }), None)
        .write(&out.join("manifest.json"))?;
    let (ref_dir, query_dir) = dataset::dataset_paths(&out);
    dataset::save_traverse(&ds.reference, &ref_dir, DatasetFormat::Directory)?;
    dataset::save_queries(&ds.queries, &query_dir)?;
    dataset::save_provenance(&ds.provenance, &query_dir)?;
    write_json(&out.join("synth.json"), &cfg)?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let loaded = load_data(&a.matching, &file)?;
    let out: PathBuf = required(file.pick(a.out, "out")?, "out")?;
    let catalogue = StatCatalogue::v1();
    let prepared = loaded.prepared(&catalogue)?;
    let records: Vec<MatchRecord> = prepared.iter().map(|p| p.record.clone()).collect();
    let alpha = match file.pick(a.alpha, "alpha")? {
        Some(alpha) => alpha,
        None => mlp::choose_alpha_default(pipeline::out_of_tolerance_fraction(&records))?,
    };
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        alpha,
        epochs: file.or(a.epochs, "epochs", d.epochs)?,
        learning_rate: file.or(a.learning_rate, "learning-rate", d.learning_rate)?,
        batch_size: file.or(a.batch_size, "batch-size", d.batch_size)?,
        seed: file.or(a.common.seed, "seed", d.seed)?,
        ..d
    };
    cfg.validate()?;

    ensure_parent(&out)?;
    let mut config = loaded.config_json();
    config["train"] = serde_json::to_value(&cfg)?;
    RunManifest::new("train", config, json!({ "train": cfg.seed }), None).write(&sidecar(&out))?;

    let outcome = mlp::train(&pipeline::training_set(&prepared), &cfg)?;
    model_io::save_model(&outcome.model, &out)?;
    let log_path = out.with_file_name("train_log.csv");
    let mut log = String::from("epoch,loss,train_precision,train_recall\n");
    for e in &outcome.log {
        log.push_str(&format!("{},{},{},{}\n", e.epoch, e.loss, e.precision, e.recall));
    }
    fs::write(&log_path, log).map_err(|e| CliError::io(&log_path, e))?;
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let loaded = load_data(&a.matching, &file)?;
    let out: PathBuf = required(file.pick(a.out, "out")?, "out")?;
    let model_path: Option<PathBuf> = file.pick(a.model, "model")?;
    let technique: Option<String> = file.pick(a.technique, "technique")?;
    let tp: Option<f64> = file.pick(a.target_precision, "target-precision")?;
    let tr: Option<f64> = file.pick(a.target_recall, "target-recall")?;

    let mut model_hash = None;
    let target = match (tp, tr) {
        (Some(precision), Some(recall)) => threshold::OperatingPoint {
            technique: "custom".into(),
            precision,
            recall,
        },
        (None, None) => match (&model_path, &technique) {
            (Some(path), _) => {
                let model = load_model(path)?;
                model_hash = Some(file_hash(path)?);
                let catalogue = StatCatalogue::v1();
                let prepared = loaded.prepared(&catalogue)?;
                let preds = pipeline::predict_all(&model, &prepared, &catalogue)?;
                let labels: Vec<bool> = prepared.iter().map(|p| p.record.label).collect();
                let binary: Vec<bool> = preds.iter().map(|p| p.binary).collect();
                let (precision, recall) = mlp::precision_recall(&labels, &binary);
                threshold::OperatingPoint {
                    technique: "monitor".into(),
                    precision,
                    recall,
                }
            }
            (None, Some(name)) => threshold::reference_operating_points()
                .into_iter()
                .find(|p| p.technique.eq_ignore_ascii_case(name))
                .ok_or_else(|| CliError::msg(format!("unknown technique {name:?}")))?,
            (None, None) => {
                return Err(CliError::msg(
                    "give --model, --technique or both --target-precision and --target-recall",
                ))
            }
        },
        _ => return Err(CliError::msg("--target-precision and --target-recall go together")),
    };

    ensure_parent(&out)?;
    let mut config = loaded.config_json();
    config["target"] = serde_json::to_value(&target)?;
    RunManifest::new("calibrate-thresholds", config, json!({}), model_hash).write(&sidecar(&out))?;
    let report = threshold::calibrate_pair(&loaded.records()?, &target)?;
    for b in [&report.np, &report.nr] {
        if !b.attained {
            eprintln!(
                "warning: {} target {} not attainable, using closest point (precision {}, recall {})",
                b.kind.name(),
                b.target,
                b.precision,
                b.recall
            );
        }
    }
    write_json(&out, &report)
}

fn verify(a: VerifyArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let model_path: PathBuf = required(file.pick(a.model, "model")?, "model")?;
    let model = load_model(&model_path)?;
    let loaded = load_data(&a.matching, &file)?;
    let out: PathBuf = required(file.pick(a.out, "out")?, "out")?;
    let catalogue = StatCatalogue::v1();
    let prepared = loaded.prepared(&catalogue)?;
    let preds = pipeline::predict_all(&model, &prepared, &catalogue)?;

    ensure_dir(&out)?;
    RunManifest::new("verify", loaded.config_json(), json!({}), Some(file_hash(&model_path)?))
        .write(&out.join("manifest.json"))?;
    let mut text = String::from("query,best_index,best_distance,raw,prediction,label\n");
    for (p, pred) in prepared.iter().zip(&preds) {
        let r = &p.record;
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.query_index + 1,
            r.best_index + 1,
            r.best_distance(),
            pred.raw,
            u8::from(pred.binary),
            u8::from(r.label)
        ));
    }
    let path = out.join("predictions.csv");
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

struct Resolved {
    method: Method,
    model_hash: Option<String>,
}

fn resolve_method(args: &MethodArgs, file: &FileConfig, loaded: &Loaded, records: &[MatchRecord]) -> Result<Resolved, CliError> {
    let name = file.or(args.method.clone(), "method", "baseline".to_string())?;
    let mut model_hash = None;
    let method = match name.as_str() {
        "baseline" => Method::Baseline,
        "oracle" => Method::verified("oracle", &pipeline::oracle_predictions(records)),
        "verified" => {
            let path: PathBuf = required(file.pick(args.model.clone(), "model")?, "model")?;
            let model = load_model(&path)?;
            model_hash = Some(file_hash(&path)?);
            let catalogue = StatCatalogue::v1();
            let prepared = loaded.prepared(&catalogue)?;
            Method::verified("verified", &pipeline::predict_all(&model, &prepared, &catalogue)?)
        }
        "np" | "nr" => {
            let path: PathBuf = required(file.pick(args.thresholds.clone(), "thresholds")?, "thresholds")?;
            let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let report: ThresholdReport = serde_json::from_str(&text)?;
            let b = if name == "np" { report.np } else { report.nr };
            Method::Threshold {
                name: name.clone(),
                max_distance: b.threshold,
            }
        }
        other => {
            return Err(CliError::msg(format!(
                "unknown method {other:?} (baseline, np, nr, verified, oracle)"
            )))
        }
    };
    Ok(Resolved { method, model_hash })
}

fn header(experiment: &str, method: &str, tolerance: f64, seed: Option<u64>, config: serde_json::Value) -> ResultHeader {
    ResultHeader {
        experiment: experiment.into(),
        method: method.into(),
        tolerance,
        seed,
        manifest: "manifest.json".into(),
        config,
    }
}

fn simulate_exp1(a: Exp1Args) -> Result<(), CliError> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let loaded = load_data(&a.matching, &file)?;
    let out: PathBuf = required(file.pick(a.out, "out")?, "out")?;
    let records = loaded.records()?;
    let resolved = resolve_method(&a.method, &file, &loaded, &records)?;
    let d = Exp1Config::default();
    let cfg = Exp1Config {
        n_starts: file.or(a.n_starts, "n-starts", d.n_starts)?,
        goal_distances: file.or(a.goals, "goals", d.goal_distances)?,
        assessment_tolerance: loaded.tolerance.tolerance,
        arrival_margin: file.or(a.arrival_margin, "arrival-margin", d.arrival_margin)?,
        seed: file.or(a.common.seed, "seed", d.seed)?,
    };
    cfg.validate()?;

    ensure_dir(&out)?;
    let mut config = loaded.config_json();
    config["method"] = json!(resolved.method.name());
    config["exp1"] = serde_json::to_value(&cfg)?;
    RunManifest::new("simulate-exp1", config.clone(), json!({ "starts": cfg.seed }), resolved.model_hash)
        .write(&out.join("manifest.json"))?;

    let result = experiments::run_exp1(&loaded.reference, &loaded.queries, &records, &resolved.method, &cfg)?;
    for d in &result.diagnostics {
        eprintln!("note: {d}");
    }
    let h = header("exp1", resolved.method.name(), cfg.assessment_tolerance, Some(cfg.seed), config);
    report::write_missions(&out.join(report::MISSIONS_FILE), &h, &result.missions)?;
    report::write_queries(&out.join(report::EXP1_QUERIES_FILE), &h, &result.queries)?;
    report::write_metrics(
        &out.join(report::METRICS_FILE),
        &MetricsFile {
            header: h,
            metrics: result.metrics,
        },
    )?;
    Ok(())
}

fn simulate_exp2(a: Exp2Args) -> Result<(), CliError> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let loaded = load_data(&a.matching, &file)?;
    let out: PathBuf = required(file.pick(a.out, "out")?, "out")?;
    let records = loaded.records()?;
    let resolved = resolve_method(&a.method, &file, &loaded, &records)?;
    let window = file.or(a.window, "window", DEFAULT_WINDOW)?;
    let cfg = Exp2Config {
        window_d: window,
        warmup: file.or(a.warmup, "warmup", window)?,
        tolerance: loaded.tolerance.tolerance,
    };
    cfg.validate()?;
    let seed = file.pick(a.common.seed, "seed")?;

    ensure_dir(&out)?;
    let mut config = loaded.config_json();
    config["method"] = json!(resolved.method.name());
    config["exp2"] = serde_json::to_value(&cfg)?;
    RunManifest::new("simulate-exp2", config.clone(), json!({ "seed": seed }), resolved.model_hash)
        .write(&out.join("manifest.json"))?;

    let result = experiments::run_exp2(&loaded.reference, &loaded.queries, &records, &resolved.method, &cfg)?;
    let h = header("exp2", resolved.method.name(), cfg.tolerance, seed, config);
    report::write_queries(&out.join(report::EXP2_QUERIES_FILE), &h, &result.queries)?;
    report::write_metrics(
        &out.join(report::METRICS_FILE),
        &MetricsFile {
            header: h,
            metrics: result.metrics,
        },
    )?;
    Ok(())
}

fn metrics(a: MetricsArgs) -> Result<(), CliError> {
    let dir = &a.results;
    let missions_path = dir.join(report::MISSIONS_FILE);
    let (header, missions, queries) = if missions_path.exists() {
        let (h, missions) = report::read_missions(&missions_path)?;
        let (_, queries) = report::read_queries(&dir.join(report::EXP1_QUERIES_FILE))?;
        (h, missions, queries)
    } else {
        let (h, queries) = report::read_queries(&dir.join(report::EXP2_QUERIES_FILE))?;
        (h, Vec::new(), queries)
    };
    let recomputed = experiments::compute_metrics(&missions, &queries, header.tolerance)?;
    println!("{}", serde_json::to_string_pretty(&recomputed)?);
    if a.check {
        let stored = report::read_metrics(&dir.join(report::METRICS_FILE))?;
        let (x, y) = (serde_json::to_value(&recomputed)?, serde_json::to_value(&stored.metrics)?);
        if let Some(path) = first_difference(&x, &y, 1e-9, "") {
            return Err(CliError::msg(format!("metrics differ from metrics.json at {path}")));
        }
    }
    Ok(())
}

/// Path of the first value that differs beyond `tol`, numbers compared
/// numerically.
fn first_difference(a: &serde_json::Value, b: &serde_json::Value, tol: f64, path: &str) -> Option<String> {
    use serde_json::Value;
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64()?, y.as_f64()?);
            ((x - y).abs() > tol).then(|| path.to_string())
        }
        (Value::Object(x), Value::Object(y)) => {
            if x.len() != y.len() {
                return Some(path.to_string());
            }
            x.iter().find_map(|(k, v)| match y.get(k) {
                Some(w) => first_difference(v, w, tol, &format!("{path}.{k}")),
                None => Some(format!("{path}.{k}")),
            })
        }
        _ => (a != b).then(|| path.to_string()),
    }
}
