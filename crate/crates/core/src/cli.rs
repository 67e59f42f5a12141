//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, bad config, missing
//! prerequisites), 2 runtime failure.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bounds::{bound, BoundInput, LN2_PER_PARAM};
use crate::checkpoint::{self, Selection};
use crate::config::ExperimentConfig;
use crate::error::Error;
use crate::flops::{adaptergnn_variants, estimate_flops, FlopReport, Phase};
use crate::gin::{init_params, predict};
use crate::graph::{split, Dataset, GraphBatch};
use crate::metrics::roc_auc;
use crate::peft::{apply_peft, PeftMode};
use crate::sweep::{self, prepare_data, pretrain_corpus, Init, RunSpec};
use crate::train::{
    fmt_f64, load_backbone, pretrain_edgepred, train_supervised, EdgePredConfig, TrainConfig,
};

/// Runs above this count need `--yes`.
pub const CONFIRM_ABOVE: usize = 50;

#[derive(Debug, Parser)]
#[command(name = "adaptergnn", version, about = "GIN training with adapter-based parameter-efficient tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
struct Common {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; each command writes to `<out>/<command>-<fingerprint>/`.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Run seed (overrides the config; a comma list for sweeps).
    #[arg(long)]
    seed: Option<String>,
    /// Extra assignments, `--set key=value`, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Overwrite an existing output directory.
    #[arg(long)]
    force: bool,
    /// Print CSV to stdout instead of the human-readable summary.
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Args, Clone, Default)]
struct ModelFlags {
    /// Tuning mode.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    emb: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    tasks: Option<String>,
    #[arg(long)]
    bottleneck: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    lr: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic planted-motif dataset as JSONL.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// EdgePred pre-training; writes an encoder-only checkpoint.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        /// Unlabeled JSONL corpus (default: synthetic corpus from the config).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Supervised training or tuning.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        /// Labeled JSONL dataset (default: synthetic data from the config).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Backbone checkpoint written by `pretrain`.
        #[arg(long)]
        backbone_ckpt: Option<PathBuf>,
        /// Tune over a random backbone (expressivity experiments).
        #[arg(long)]
        allow_random_backbone: bool,
    },
    /// Evaluate a trained checkpoint on every split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint written by `train`.
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        backbone_ckpt: Option<PathBuf>,
    },
    /// Cartesian sweep over comma-separated config values.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        /// model_size, data_size, bottleneck or expressivity.
        #[arg(long)]
        kind: String,
        /// Concurrent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Confirm sweeps above the run-count guardrail.
        #[arg(long)]
        yes: bool,
        /// Allow tuning modes over a random backbone.
        #[arg(long)]
        allow_random_backbone: bool,
    },
    /// Parameter counts by group.
    CountParams {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Analytic FLOPs of the GNN layers for one batch.
    Flops {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        /// Node rows in the batch.
        #[arg(long, default_value_t = 1000)]
        rows: u64,
    },
    /// Hoeffding gap and bound.
    Bound {
        #[command(flatten)]
        common: Common,
        /// ln|H| directly.
        #[arg(long = "logH", alias = "log-h")]
        log_h: Option<f64>,
        /// Parameter count; ln|H| = c · params.
        #[arg(long, conflicts_with = "log_h")]
        params: Option<u64>,
        /// Nats per parameter for `--params`.
        #[arg(long, default_value_t = LN2_PER_PARAM)]
        c: f64,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        train_error: f64,
    },
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `argv` (including the program name) and runs the command.
pub fn run_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn assemble(common: &Common, model: Option<&ModelFlags>) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => ExperimentConfig::new(),
    };
    let mut flags = ExperimentConfig::new();
    let mut put = |k: &str, v: &Option<String>| -> CliResult<()> {
        if let Some(v) = v {
            flags.set(k, v).map_err(usage)?;
        }
        Ok(())
    };
    if let Some(m) = model {
        put("mode", &m.mode)?;
        put("emb", &m.emb)?;
        put("layers", &m.layers)?;
        put("tasks", &m.tasks)?;
        put("bottleneck", &m.bottleneck)?;
        put("epochs", &m.epochs)?;
        put("lr", &m.lr)?;
    }
    put("seed", &common.seed)?;
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        flags.set(k.trim(), v.trim()).map_err(usage)?;
    }
    cfg.merge(&flags);
    Ok(cfg)
}

fn single_spec(cfg: &ExperimentConfig) -> CliResult<RunSpec> {
    cfg.run_spec().map_err(usage)
}

/// Creates `<out>/<command>-<fp>/` with the config echo.
fn prepare_dir(common: &Common, command: &str, cfg: &ExperimentConfig) -> CliResult<(PathBuf, String)> {
    let fp = cfg.fingerprint(command);
    let dir = common.out.join(format!("{command}-{fp}"));
    if dir.exists() {
        if !common.force {
            return Err(Failure::Runtime(Error::Argument(format!(
                "{} already exists; pass --force to overwrite",
                dir.display()
            ))));
        }
        fs::remove_dir_all(&dir).map_err(Error::from)?;
    }
    fs::create_dir_all(&dir).map_err(Error::from)?;
    fs::write(dir.join("config.txt"), cfg.canonical()).map_err(Error::from)?;
    Ok((dir, fp))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(Error::from)?;
    Ok(())
}

fn load_data(spec: &RunSpec, path: Option<&Path>) -> CliResult<Dataset> {
    match path {
        Some(p) => Ok(Dataset::load_jsonl(p, spec.model.vocab)?),
        None => Ok(crate::graph::generate_synthetic(&spec.data.synthetic, spec.data.seed)?),
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::GenData { common } => gen_data(&common, out),
        Command::Pretrain { common, model, data } => pretrain(&common, &model, data.as_deref(), out),
        Command::Train {
            common,
            model,
            data,
            backbone_ckpt,
            allow_random_backbone,
        } => train(&common, &model, data.as_deref(), backbone_ckpt.as_deref(), allow_random_backbone, out),
        Command::Eval {
            common,
            model,
            data,
            ckpt,
            backbone_ckpt,
        } => eval(&common, &model, data.as_deref(), &ckpt, backbone_ckpt.as_deref(), out),
        Command::Sweep {
            common,
            model,
            kind,
            jobs,
            yes,
            allow_random_backbone,
        } => sweep_cmd(&common, &model, &kind, jobs, yes, allow_random_backbone, out, err),
        Command::CountParams { common, model } => count_params(&common, &model, out),
        Command::Flops { common, model, rows } => flops(&common, &model, rows, out),
        Command::Bound {
            common,
            log_h,
            params,
            c,
            n,
            delta,
            train_error,
        } => bound_cmd(&common, log_h, params, c, n, delta, train_error, out),
    }
}

fn gen_data(common: &Common, out: &mut dyn Write) -> CliResult<()> {
    let cfg = assemble(common, None)?;
    let spec = single_spec(&cfg)?;
    let (dir, fp) = prepare_dir(common, "gen-data", &cfg)?;
    let data = crate::graph::generate_synthetic(&spec.data.synthetic, spec.data.seed)?;
    let path = dir.join(format!("data-{fp}.jsonl"));
    data.write_jsonl(&path)?;
    let positives: Vec<usize> = (0..data.num_tasks())
        .map(|t| data.graphs.iter().filter(|g| g.labels[t] == Some(true)).count())
        .collect();
    let _ = writeln!(out, "graphs {}", data.len());
    let _ = writeln!(out, "positives per task {positives:?}");
    let _ = writeln!(out, "wrote {}", path.display());
    Ok(())
}

fn pretrain(common: &Common, model: &ModelFlags, data: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    let cfg = assemble(common, Some(model))?;
    let spec = single_spec(&cfg)?;
    let corpus = match data {
        Some(p) => Dataset::load_jsonl(p, spec.model.vocab)?,
        None => pretrain_corpus(&spec)?,
    };
    let (dir, fp) = prepare_dir(common, "pretrain", &cfg)?;
    let tc = TrainConfig {
        epochs: spec.pretrain.epochs,
        lr: spec.pretrain.lr,
        batch_size: spec.pretrain.batch_size,
        ..spec.train.clone()
    };
    let edge = EdgePredConfig {
        hide_fraction: spec.pretrain.hide_fraction,
    };
    let (reg, losses) = pretrain_edgepred(&corpus, &spec.model, &tc, &edge)?;
    let ckpt = dir.join(format!("backbone-{fp}.ckpt"));
    let mut meta = BTreeMap::new();
    meta.insert("config".to_string(), cfg.canonical());
    checkpoint::save(&ckpt, &reg, Selection::Backbone, None, meta)?;
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i + 1, fmt_f64(*l)));
    }
    fs::write(dir.join(format!("pretrain-{fp}.csv")), &csv).map_err(Error::from)?;
    if common.csv {
        let _ = write!(out, "{csv}");
    } else {
        let _ = writeln!(out, "final loss {}", fmt_f64(*losses.last().expect("epochs ≥ 1")));
        let _ = writeln!(out, "wrote {}", ckpt.display());
    }
    Ok(())
}

fn needs_backbone(mode: PeftMode) -> bool {
    mode != PeftMode::Full
}

fn train(
    common: &Common,
    model: &ModelFlags,
    data: Option<&Path>,
    backbone: Option<&Path>,
    allow_random: bool,
    out: &mut dyn Write,
) -> CliResult<()> {
    let mut cfg = assemble(common, Some(model))?;
    if model.mode.is_none() && cfg.get("mode").is_none() {
        return Err(usage("train requires --mode (or `mode` in the config)"));
    }
    let mode = cfg.mode().map_err(usage)?;
    if needs_backbone(mode) && backbone.is_none() && !allow_random {
        return Err(usage(format!(
            "mode {mode} tunes a frozen backbone: pass --backbone-ckpt, or --allow-random-backbone to tune a random one"
        )));
    }
    let backbone_sha = match backbone {
        Some(p) => {
            let sha = checkpoint::file_sha256(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            cfg.set("backbone_sha256", &sha).map_err(usage)?;
            Some(sha)
        }
        None => None,
    };
    let spec = single_spec(&cfg)?;
    let dataset = load_data(&spec, data)?;
    let (dir, fp) = prepare_dir(common, "train", &cfg)?;
    let splits = split(&dataset, &spec.data.split, spec.data.seed)?;
    let n = sweep::subset_size(splits.train.len(), spec.data.train_fraction);
    let train_set = if data.is_none() {
        prepare_data(&spec.data)?.0
    } else {
        splits.train.subset(&(0..n).collect::<Vec<_>>())
    };
    let mut reg = init_params(&spec.model, crate::SeedStream::new(spec.train.seed).split("init").key())?;
    if let Some(p) = backbone {
        let (_, bb) = checkpoint::load(p)?;
        load_backbone(&mut reg, &bb)?;
    }
    if mode != PeftMode::Full {
        apply_peft(&mut reg, &spec.model, &spec.peft, crate::SeedStream::new(spec.train.seed).split("peft").key())?;
    }
    let counts = reg.count();
    let record = train_supervised(&train_set, &splits.test, &mut reg, &spec.model, &spec.train, &fp)?;
    let csv = record.to_csv();
    fs::write(dir.join(format!("run-{fp}.csv")), &csv).map_err(Error::from)?;
    write_json(&dir.join(format!("summary-{fp}.json")), &record.summary())?;
    let sel = if mode == PeftMode::Full { Selection::All } else { Selection::Tuned };
    let mut meta = BTreeMap::new();
    meta.insert("config".to_string(), cfg.canonical());
    let ckpt = dir.join(format!("model-{fp}.ckpt"));
    checkpoint::save(&ckpt, &reg, sel, backbone_sha, meta)?;
    if common.csv {
        let _ = write!(out, "{csv}");
    } else {
        let s = record.summary();
        let _ = writeln!(out, "fingerprint {fp}");
        let _ = writeln!(out, "trainable {} of {} ({:.4}%)", counts.trainable, counts.total, 100.0 * counts.fraction);
        let _ = writeln!(out, "train auc {}", fmt_f64(s.final_train_auc));
        let _ = writeln!(out, "test auc {}", fmt_f64(s.final_test_auc));
        let _ = writeln!(out, "gap {}", fmt_f64(s.gap_auc));
        let _ = writeln!(out, "wrote {}", dir.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint: String,
    train_auc: f64,
    valid_auc: f64,
    test_auc: f64,
}

fn split_auc(reg: &mut crate::registry::ParamRegistry, spec: &RunSpec, data: &Dataset) -> CliResult<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let batch = GraphBatch::from_dataset(data, &idx)?;
    let scores = predict(reg, &spec.model, &batch)?;
    match roc_auc(scores.data(), &batch.targets, &batch.mask, batch.num_tasks) {
        Ok(v) => Ok(v),
        Err(Error::MetricUndefined) => Ok(f64::NAN),
        Err(e) => Err(e.into()),
    }
}

fn eval(
    common: &Common,
    model: &ModelFlags,
    data: Option<&Path>,
    ckpt: &Path,
    backbone: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let mut cfg = assemble(common, Some(model))?;
    let (manifest, _) = checkpoint::load(ckpt).map_err(|e| usage(e.to_string()))?;
    // the checkpoint records the config it was trained with; flags win
    if let Some(text) = manifest.meta.get("config") {
        let mut saved = ExperimentConfig::parse(text)?;
        saved.merge(&cfg);
        cfg = saved;
    }
    cfg.set("mode", manifest.mode.as_str()).map_err(usage)?;
    if manifest.backbone_sha256.is_some() && backbone.is_none() {
        return Err(usage("checkpoint was trained on a backbone: pass --backbone-ckpt"));
    }
    let spec = single_spec(&cfg)?;
    let dataset = load_data(&spec, data)?;
    let mut reg = init_params(&spec.model, 0)?;
    if let Some(p) = backbone {
        let (_, bb) = checkpoint::load(p)?;
        load_backbone(&mut reg, &bb)?;
    }
    if manifest.mode != PeftMode::Full {
        apply_peft(&mut reg, &spec.model, &spec.peft, 0)?;
    }
    checkpoint::restore_tuned(&mut reg, ckpt, backbone)?;
    let (dir, fp) = prepare_dir(common, "eval", &cfg)?;
    let splits = split(&dataset, &spec.data.split, spec.data.seed)?;
    let report = EvalReport {
        checkpoint: ckpt.display().to_string(),
        train_auc: split_auc(&mut reg, &spec, &splits.train)?,
        valid_auc: split_auc(&mut reg, &spec, &splits.valid)?,
        test_auc: split_auc(&mut reg, &spec, &splits.test)?,
    };
    write_json(&dir.join(format!("eval-{fp}.json")), &report)?;
    let csv = format!(
        "split,auc\ntrain,{}\nvalid,{}\ntest,{}\n",
        fmt_f64(report.train_auc),
        fmt_f64(report.valid_auc),
        fmt_f64(report.test_auc)
    );
    fs::write(dir.join(format!("eval-{fp}.csv")), &csv).map_err(Error::from)?;
    if common.csv {
        let _ = write!(out, "{csv}");
    } else {
        let _ = writeln!(out, "train auc {}", fmt_f64(report.train_auc));
        let _ = writeln!(out, "valid auc {}", fmt_f64(report.valid_auc));
        let _ = writeln!(out, "test auc {}", fmt_f64(report.test_auc));
    }
    Ok(())
}

/// Config key that a sweep kind varies.
fn sweep_axis(kind: sweep::SweepKind) -> &'static str {
    match kind {
        sweep::SweepKind::ModelSize | sweep::SweepKind::Expressivity => "emb",
        sweep::SweepKind::DataSize => "train_fraction",
        sweep::SweepKind::Bottleneck => "bottleneck",
    }
}

#[allow(clippy::too_many_arguments)]
fn sweep_cmd(
    common: &Common,
    model: &ModelFlags,
    kind: &str,
    jobs: usize,
    yes: bool,
    allow_random: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    let kind: sweep::SweepKind = kind.parse().map_err(usage)?;
    let cfg = assemble(common, Some(model))?;
    let axis = sweep_axis(kind);
    if cfg.get(axis).is_none() {
        return Err(usage(format!("sweep kind {kind:?} needs values for `{axis}`")));
    }
    let mut specs = Vec::new();
    for single in cfg.expand() {
        let spec = single_spec(&single)?;
        if kind == sweep::SweepKind::Expressivity {
            let s = sweep::SweepSpec {
                kind,
                grid: vec![spec.model.emb_dim as f64],
                modes: vec![PeftMode::Adaptergnn],
                seeds: vec![spec.train.seed],
                base: spec,
            };
            specs.extend(sweep::expand(&s).map_err(usage)?);
        } else {
            if spec.peft.mode != PeftMode::Full && spec.init == Init::Scratch && !allow_random {
                return Err(usage(format!(
                    "mode {} over a random backbone: set init=pretrained or pass --allow-random-backbone",
                    spec.peft.mode
                )));
            }
            specs.push(spec);
        }
    }
    let _ = writeln!(err, "sweep: {} runs", specs.len());
    if specs.len() > CONFIRM_ABOVE && !yes {
        return Err(usage(format!(
            "{} runs exceed the guardrail of {CONFIRM_ABOVE}; pass --yes to proceed",
            specs.len()
        )));
    }
    let (dir, fp) = prepare_dir(common, "sweep", &cfg)?;
    let results = sweep::run_all(&specs, jobs)?;
    let csv = sweep::to_csv(&results);
    fs::write(dir.join(format!("sweep-{fp}.csv")), &csv).map_err(Error::from)?;
    for r in &results {
        fs::write(dir.join(format!("run-{}.csv", r.fingerprint)), r.record.to_csv()).map_err(Error::from)?;
    }
    if kind == sweep::SweepKind::ModelSize {
        let scratch: Vec<_> = results.iter().filter(|r| r.spec.init == Init::Scratch).cloned().collect();
        if let Ok(report) = crate::gaps::compute_gaps(&[], &scratch) {
            write_json(&dir.join(format!("gaps-{fp}.json")), &report)?;
        }
    }
    if common.csv {
        let _ = write!(out, "{csv}");
    } else {
        let _ = writeln!(out, "{} runs", results.len());
        let _ = writeln!(out, "wrote {}", dir.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct CountReport {
    mode: String,
    backbone_total: u64,
    backbone_trainable: u64,
    peft_total: u64,
    peft_trainable: u64,
    classifier_total: u64,
    classifier_trainable: u64,
    total: u64,
    trainable: u64,
    fraction: f64,
}

fn count_params(common: &Common, model: &ModelFlags, out: &mut dyn Write) -> CliResult<()> {
    let cfg = assemble(common, Some(model))?;
    let spec = single_spec(&cfg)?;
    let mut reg = init_params(&spec.model, 0)?;
    if spec.peft.mode != PeftMode::Full {
        apply_peft(&mut reg, &spec.model, &spec.peft, 0)?;
    }
    let c = reg.count();
    let report = CountReport {
        mode: spec.peft.mode.to_string(),
        backbone_total: c.backbone.total,
        backbone_trainable: c.backbone.trainable,
        peft_total: c.peft.total,
        peft_trainable: c.peft.trainable,
        classifier_total: c.classifier.total,
        classifier_trainable: c.classifier.trainable,
        total: c.total,
        trainable: c.trainable,
        fraction: c.fraction,
    };
    let (dir, fp) = prepare_dir(common, "count-params", &cfg)?;
    write_json(&dir.join(format!("count-params-{fp}.json")), &report)?;
    let csv = format!(
        "group,total,trainable\nbackbone,{},{}\npeft,{},{}\nclassifier,{},{}\nall,{},{}\n",
        c.backbone.total, c.backbone.trainable, c.peft.total, c.peft.trainable, c.classifier.total,
        c.classifier.trainable, c.total, c.trainable
    );
    fs::write(dir.join(format!("count-params-{fp}.csv")), &csv).map_err(Error::from)?;
    if common.csv {
        let _ = write!(out, "{csv}");
    } else {
        let _ = writeln!(out, "mode {}", report.mode);
        let _ = writeln!(out, "backbone {} trainable of {}", c.backbone.trainable, c.backbone.total);
        let _ = writeln!(out, "peft {} trainable of {}", c.peft.trainable, c.peft.total);
        let _ = writeln!(out, "classifier {} trainable of {}", c.classifier.trainable, c.classifier.total);
        let _ = writeln!(out, "total {}", c.total);
        let _ = writeln!(out, "trainable {}", c.trainable);
        let _ = writeln!(out, "fraction {:.6}", c.fraction);
    }
    Ok(())
}

const FLOPS_HEADER: &str = "\
# FLOPs of the GNN layers for one batch of `rows` node rows.
# linear: 2*B*in*out forward; backward 2*B*in*out per needed input/weight grad, B*out bias grad
# relu: B*w forward, B*w backward; batch norm: 8*B*w train / 4*B*w inference forward,
#   8*B*w input grad, 2*B*w affine grads; add: B*w; scalar scale: B*w, grads B*w and 2*B*w
# excluded: encoders, message passing, readout, dropout, classifier
";

fn flops(common: &Common, model: &ModelFlags, rows: u64, out: &mut dyn Write) -> CliResult<()> {
    let cfg = assemble(common, Some(model))?;
    let spec = single_spec(&cfg)?;
    let mut rowsets: Vec<(String, FlopReport, FlopReport)> = Vec::new();
    let full = crate::peft::PeftConfig::new(PeftMode::Full);
    rowsets.push((
        "full".into(),
        estimate_flops(&spec.model, &full, rows, Phase::Train)?,
        estimate_flops(&spec.model, &full, rows, Phase::Infer)?,
    ));
    if spec.peft.mode == PeftMode::Adaptergnn {
        let train = adaptergnn_variants(&spec.model, &spec.peft, rows, Phase::Train)?;
        let infer = adaptergnn_variants(&spec.model, &spec.peft, rows, Phase::Infer)?;
        for ((label, t), (_, i)) in train.into_iter().zip(infer) {
            rowsets.push((label.to_string(), t, i));
        }
    } else if spec.peft.mode != PeftMode::Full {
        rowsets.push((
            spec.peft.mode.to_string(),
            estimate_flops(&spec.model, &spec.peft, rows, Phase::Train)?,
            estimate_flops(&spec.model, &spec.peft, rows, Phase::Infer)?,
        ));
    }
    let mut csv = String::from("variant,train_forward,train_backward,train_total,infer_total\n");
    for (label, t, i) in &rowsets {
        csv.push_str(&format!("{label},{},{},{},{}\n", t.forward, t.backward, t.total(), i.total()));
    }
    let (dir, fp) = prepare_dir(common, "flops", &cfg)?;
    fs::write(dir.join(format!("flops-{fp}.csv")), format!("{FLOPS_HEADER}{csv}")).map_err(Error::from)?;
    if common.csv {
        let _ = write!(out, "{csv}");
    } else {
        let _ = write!(out, "{FLOPS_HEADER}");
        for (label, t, i) in &rowsets {
            let _ = writeln!(out, "{label}: train {} (forward {}, backward {}), inference {}", t.total(), t.forward, t.backward, i.total());
        }
    }
    Ok(())
}

/// Shortest decimal with at least one fractional digit, to 12 places.
fn fmt_decimal(v: f64) -> String {
    let s = format!("{v:.12}");
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

#[allow(clippy::too_many_arguments)]
fn bound_cmd(
    common: &Common,
    log_h: Option<f64>,
    params: Option<u64>,
    c: f64,
    n: u64,
    delta: f64,
    train_error: f64,
    out: &mut dyn Write,
) -> CliResult<()> {
    let input = match (log_h, params) {
        (Some(l), _) => BoundInput { train_error, log_hypothesis_size: l, n, delta },
        (None, Some(p)) => BoundInput::from_param_count(train_error, p, c, n, delta),
        (None, None) => return Err(usage("bound needs --logH or --params")),
    };
    let report = bound(&input).map_err(usage)?;
    let fp = crate::sweep::fingerprint_bytes(serde_json::to_string(&input).map_err(Error::from)?.as_bytes());
    let dir = common.out.join(format!("bound-{fp}"));
    if dir.exists() && !common.force {
        return Err(Failure::Runtime(Error::Argument(format!(
            "{} already exists; pass --force to overwrite",
            dir.display()
        ))));
    }
    fs::create_dir_all(&dir).map_err(Error::from)?;
    let echo = format!(
        "delta={}\nlog_h={}\nn={n}\ntrain_error={}\n",
        input.delta, input.log_hypothesis_size, input.train_error
    );
    fs::write(dir.join("config.txt"), echo).map_err(Error::from)?;
    write_json(&dir.join(format!("bound-{fp}.json")), &report)?;
    if common.csv {
        let _ = writeln!(out, "log_h,n,delta,train_error,gap,bound");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(input.log_hypothesis_size),
            n,
            fmt_f64(delta),
            fmt_f64(train_error),
            fmt_f64(report.gap),
            fmt_f64(report.bound)
        );
    } else {
        let _ = writeln!(out, "gap {}", fmt_decimal(report.gap));
        let _ = writeln!(out, "bound {}", fmt_decimal(report.bound));
    }
    Ok(())
}
