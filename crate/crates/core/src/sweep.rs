//! Experiment runs and the sweep runner.
//!
//! A [`RunSpec`] fully determines one run: data generation, split, model,
//! tuning mode, optimizer and initialisation. Its fingerprint is the first
//! 12 hex digits of the SHA-256 of its JSON form, so a CSV row can be
//! regenerated from the `RunSpec` that produced it.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gin::{init_params, ModelConfig};
use crate::graph::{generate_synthetic, split, Dataset, SplitSpec, SyntheticSpec};
use crate::peft::{apply_peft, backbone_total_formula, PeftConfig, PeftMode};
use crate::registry::ParamRegistry;
use crate::rng::SeedStream;
use crate::train::{load_backbone, pretrain_edgepred, train_supervised, EdgePredConfig, RunRecord, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Random backbone.
    Scratch,
    /// Backbone from EdgePred pre-training on an unlabeled corpus.
    Pretrained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub synthetic: SyntheticSpec,
    pub seed: u64,
    pub split: SplitSpec,
    /// Fraction of the training split actually used.
    pub train_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            synthetic: SyntheticSpec::default(),
            seed: 0,
            split: SplitSpec::default(),
            train_fraction: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    /// Size of the unlabeled corpus (drawn with the data generator under a
    /// separate seed stream).
    pub graphs: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub hide_fraction: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            graphs: 400,
            epochs: 10,
            lr: 1e-3,
            batch_size: 32,
            hide_fraction: EdgePredConfig::default().hide_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub peft: PeftConfig,
    pub train: TrainConfig,
    pub init: Init,
    pub pretrain: PretrainConfig,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            data: DataConfig::default(),
            model: ModelConfig::default(),
            peft: PeftConfig::default(),
            train: TrainConfig::default(),
            init: Init::Scratch,
            pretrain: PretrainConfig::default(),
        }
    }
}

pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))[..12].to_string()
}

impl RunSpec {
    pub fn fingerprint(&self) -> String {
        fingerprint_bytes(&serde_json::to_vec(self).expect("spec serializes"))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.peft.validate(&self.model)?;
        self.train.validate()?;
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "train_fraction {} must lie in (0, 1]",
                self.data.train_fraction
            )));
        }
        if self.init == Init::Pretrained && (self.pretrain.epochs == 0 || self.pretrain.graphs == 0) {
            return Err(Error::Config("pre-training needs at least one epoch and one graph".into()));
        }
        if self.data.synthetic.n_tasks != self.model.num_tasks {
            return Err(Error::Config(format!(
                "model has {} tasks, data has {}",
                self.model.num_tasks, self.data.synthetic.n_tasks
            )));
        }
        if self.data.synthetic.vocab != self.model.vocab {
            return Err(Error::Config("model and data vocabularies differ".into()));
        }
        Ok(())
    }

    /// Pre-training depends on these fields only.
    fn pretrain_key(&self) -> String {
        let key = (&self.data.synthetic, self.data.seed, &self.model, &self.pretrain, self.train.seed);
        fingerprint_bytes(&serde_json::to_vec(&key).expect("key serializes"))
    }
}

/// Training subset size for a fraction of the split: `round(f · n)`, at least 1.
pub fn subset_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n.max(1))
}

/// Train and test sets of a run.
pub fn prepare_data(data: &DataConfig) -> Result<(Dataset, Dataset)> {
    let dataset = generate_synthetic(&data.synthetic, data.seed)?;
    let splits = split(&dataset, &data.split, data.seed)?;
    let n = subset_size(splits.train.len(), data.train_fraction);
    let mut order: Vec<usize> = (0..splits.train.len()).collect();
    order.shuffle(&mut SeedStream::new(data.seed).split("subsample").rng());
    order.truncate(n);
    order.sort_unstable();
    Ok((splits.train.subset(&order), splits.test))
}

pub fn pretrain_corpus(spec: &RunSpec) -> Result<Dataset> {
    let corpus = SyntheticSpec {
        n_graphs: spec.pretrain.graphs,
        ..spec.data.synthetic.clone()
    };
    let seed = SeedStream::new(spec.data.seed).split("pretrain-corpus").key();
    generate_synthetic(&corpus, seed)
}

pub fn pretrain_backbone(spec: &RunSpec) -> Result<ParamRegistry> {
    let corpus = pretrain_corpus(spec)?;
    let cfg = TrainConfig {
        epochs: spec.pretrain.epochs,
        lr: spec.pretrain.lr,
        batch_size: spec.pretrain.batch_size,
        ..spec.train.clone()
    };
    let edge = EdgePredConfig {
        hide_fraction: spec.pretrain.hide_fraction,
    };
    Ok(pretrain_edgepred(&corpus, &spec.model, &cfg, &edge)?.0)
}

/// Shares pre-trained backbones between runs that need the same one.
#[derive(Default)]
pub struct BackboneCache {
    entries: Mutex<HashMap<String, Arc<Mutex<Option<Arc<ParamRegistry>>>>>>,
}

impl BackboneCache {
    pub fn get(&self, spec: &RunSpec) -> Result<Arc<ParamRegistry>> {
        let slot = {
            let mut map = self.entries.lock().expect("cache lock");
            map.entry(spec.pretrain_key()).or_default().clone()
        };
        let mut slot = slot.lock().expect("slot lock");
        if let Some(reg) = slot.as_ref() {
            return Ok(reg.clone());
        }
        let reg = Arc::new(pretrain_backbone(spec)?);
        *slot = Some(reg.clone());
        Ok(reg)
    }
}

/// Registry initialised and configured for a run, before training.
pub fn build_registry(spec: &RunSpec, cache: &BackboneCache) -> Result<ParamRegistry> {
    let seed = spec.train.seed;
    let mut reg = init_params(&spec.model, SeedStream::new(seed).split("init").key())?;
    if spec.init == Init::Pretrained {
        let backbone = cache.get(spec)?;
        load_backbone(&mut reg, &backbone)?;
    }
    if spec.peft.mode != PeftMode::Full {
        apply_peft(&mut reg, &spec.model, &spec.peft, SeedStream::new(seed).split("peft").key())?;
    }
    Ok(reg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub fingerprint: String,
    pub spec: RunSpec,
    pub n_train: usize,
    pub trainable: u64,
    pub total: u64,
    pub record: RunRecord,
}

impl RunResult {
    pub fn train_error(&self) -> f64 {
        self.record.last().train_error()
    }

    pub fn test_error(&self) -> f64 {
        self.record.last().test_error()
    }

    pub fn gap(&self) -> f64 {
        self.record.last().gap()
    }

    pub fn trainable_fraction(&self) -> f64 {
        self.trainable as f64 / self.total as f64
    }
}

pub fn run(spec: &RunSpec, cache: &BackboneCache) -> Result<RunResult> {
    spec.validate()?;
    let fingerprint = spec.fingerprint();
    let (train, test) = prepare_data(&spec.data)?;
    let mut reg = build_registry(spec, cache)?;
    let counts = reg.count();
    let record = train_supervised(&train, &test, &mut reg, &spec.model, &spec.train, &fingerprint)?;
    Ok(RunResult {
        fingerprint,
        spec: spec.clone(),
        n_train: train.len(),
        trainable: counts.trainable,
        total: counts.total,
        record,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    ModelSize,
    DataSize,
    Bottleneck,
    Expressivity,
}

impl std::str::FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "model_size" => Ok(SweepKind::ModelSize),
            "data_size" => Ok(SweepKind::DataSize),
            "bottleneck" => Ok(SweepKind::Bottleneck),
            "expressivity" => Ok(SweepKind::Expressivity),
            _ => Err(Error::Config(format!(
                "unknown sweep kind `{s}` (expected model_size, data_size, bottleneck or expressivity)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub kind: SweepKind,
    /// Embedding sizes, training fractions, or bottleneck sizes.
    pub grid: Vec<f64>,
    pub modes: Vec<PeftMode>,
    pub seeds: Vec<u64>,
    pub base: RunSpec,
}

fn grid_usize(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!("{what} grid value {v} is not a non-negative integer")))
    }
}

/// Full-model embedding size whose trainable count is closest to `target`.
pub fn matched_full_width(model: &ModelConfig, target: u64, max_d: usize) -> usize {
    (1..=max_d.max(1))
        .min_by_key(|&d| {
            let m = ModelConfig { emb_dim: d, mlp_hidden: 2 * d, ..model.clone() };
            backbone_total_formula(&m).abs_diff(target)
        })
        .expect("non-empty range")
}

/// Expands a sweep into run specs and validates every one of them.
pub fn expand(sweep: &SweepSpec) -> Result<Vec<RunSpec>> {
    if sweep.grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    if sweep.seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let modes = if sweep.modes.is_empty() { vec![sweep.base.peft.mode] } else { sweep.modes.clone() };
    let mut specs = Vec::new();
    for &v in &sweep.grid {
        for &seed in &sweep.seeds {
            let mut base = sweep.base.clone();
            base.train.seed = seed;
            match sweep.kind {
                SweepKind::ModelSize => {
                    let d = grid_usize(v, "emb_dim")?;
                    base.model.emb_dim = d;
                    base.model.mlp_hidden = 2 * d;
                    for &mode in &modes {
                        let mut s = base.clone();
                        s.peft.mode = mode;
                        specs.push(s);
                    }
                }
                SweepKind::DataSize => {
                    base.data.train_fraction = v;
                    for &mode in &modes {
                        let mut s = base.clone();
                        s.peft.mode = mode;
                        specs.push(s);
                    }
                }
                SweepKind::Bottleneck => {
                    base.peft.bottleneck = grid_usize(v, "bottleneck")?;
                    for &mode in &modes {
                        let mut s = base.clone();
                        s.peft.mode = mode;
                        specs.push(s);
                    }
                }
                SweepKind::Expressivity => {
                    let d = grid_usize(v, "emb_dim")?;
                    base.model.emb_dim = d;
                    base.model.mlp_hidden = 2 * d;
                    base.init = Init::Scratch;
                    let mut adapted = base.clone();
                    adapted.peft.mode = PeftMode::Adaptergnn;
                    adapted.peft.validate(&adapted.model)?;
                    let target = crate::peft::adaptergnn_trainable_formula(&adapted.model, &adapted.peft);
                    let mut plain = base.clone();
                    plain.peft = PeftConfig::new(PeftMode::Full);
                    let dm = matched_full_width(&base.model, target, d);
                    plain.model.emb_dim = dm;
                    plain.model.mlp_hidden = 2 * dm;
                    specs.push(adapted);
                    specs.push(plain);
                }
            }
        }
    }
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

/// Runs specs on `jobs` worker threads; results are sorted by fingerprint.
pub fn run_all(specs: &[RunSpec], jobs: usize) -> Result<Vec<RunResult>> {
    let cache = BackboneCache::default();
    let next = Mutex::new(0usize);
    let results: Mutex<Vec<Result<RunResult>>> = Mutex::new(Vec::with_capacity(specs.len()));
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(specs.len().max(1)) {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("queue lock");
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(spec) = specs.get(i) else { break };
                let r = run(spec, &cache);
                results.lock().expect("results lock").push(r);
            });
        }
    });
    let mut out = results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.fingerprint.cmp(&b.fingerprint));
    out.dedup_by(|a, b| a.fingerprint == b.fingerprint);
    Ok(out)
}

pub fn run_sweep(sweep: &SweepSpec, jobs: usize) -> Result<Vec<RunResult>> {
    run_all(&expand(sweep)?, jobs)
}

pub const CSV_HEADER: &str = "fingerprint,mode,d,b,n_train,seed,train_err,test_err,test_auc,gap,trainable_frac";

/// One summary row per run, in the given order.
pub fn to_csv(results: &[RunResult]) -> String {
    use crate::train::fmt_f64;
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in results {
        let b = match r.spec.peft.mode {
            PeftMode::Adaptergnn | PeftMode::AdapterSeq | PeftMode::AdapterPar => r.spec.peft.bottleneck,
            _ => 0,
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.fingerprint,
            r.spec.peft.mode,
            r.spec.model.emb_dim,
            b,
            r.n_train,
            r.spec.train.seed,
            fmt_f64(r.train_error()),
            fmt_f64(r.test_error()),
            fmt_f64(r.record.last().test_auc),
            fmt_f64(r.gap()),
            fmt_f64(r.trainable_fraction()),
        );
    }
    out
}

/// Median of finite values; NaN when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
