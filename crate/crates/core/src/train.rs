//! Supervised fine-tuning, EdgePred pre-training and run records.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gin::{predict, Forward, Mode, ModelConfig};
use crate::graph::{Dataset, Graph, GraphBatch};
use crate::metrics::roc_auc;
use crate::registry::{Group, ParamRegistry};
use crate::rng::SeedStream;
use crate::tape::Var;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Hash frozen tensors around every epoch and fail if one changed.
    /// Build-dependent, so not part of the serialized config.
    #[serde(skip, default = "verify_frozen_default")]
    pub verify_frozen: bool,
}

fn verify_frozen_default() -> bool {
    cfg!(debug_assertions)
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            seed: 0,
            verify_frozen: verify_frozen_default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate {} must be finite and ≥ 0", self.lr)));
        }
        Ok(())
    }
}

/// Adam with bias correction, applied only to trainable parameters.
#[derive(Clone, Debug, Default)]
pub struct Adam {
    step: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    /// `grads` maps parameter names to gradients; missing entries count as zero.
    pub fn step(&mut self, reg: &mut ParamRegistry, grads: &BTreeMap<String, Vec<f64>>, cfg: &TrainConfig) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (name, p) in reg.params_mut() {
            if !p.trainable {
                continue;
            }
            let n = p.value.numel();
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            let g = grads.get(name);
            let data = p.value.data_mut();
            for i in 0..n {
                let mut gi = g.map_or(0.0, |g| g[i]);
                if cfg.weight_decay != 0.0 {
                    gi += cfg.weight_decay * data[i];
                }
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            }
        }
    }
}

/// Gradients of trainable bound parameters, keyed by name.
pub fn collect_grads(f: &Forward<'_>, loss: Var) -> BTreeMap<String, Vec<f64>> {
    let grads = f.tape.backward(loss);
    f.bindings()
        .iter()
        .filter_map(|(name, var)| grads.data(*var).map(|g| (name.clone(), g.to_vec())))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_auc: f64,
    pub test_auc: f64,
}

impl EpochRecord {
    pub fn train_error(&self) -> f64 {
        1.0 - self.train_auc
    }

    pub fn test_error(&self) -> f64 {
        1.0 - self.test_auc
    }

    /// Train AUC minus test AUC.
    pub fn gap(&self) -> f64 {
        self.train_auc - self.test_auc
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub fingerprint: String,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub fingerprint: String,
    pub epochs: usize,
    pub final_train_loss: f64,
    pub final_train_auc: f64,
    pub final_test_auc: f64,
    pub train_error: f64,
    pub test_error: f64,
    pub gap_auc: f64,
    pub gap_error: f64,
    pub train_error_proxy: String,
}

impl RunRecord {
    pub fn last(&self) -> &EpochRecord {
        self.epochs.last().expect("record has at least one epoch")
    }

    pub fn summary(&self) -> RunSummary {
        let last = self.last();
        RunSummary {
            fingerprint: self.fingerprint.clone(),
            epochs: self.epochs.len(),
            final_train_loss: last.train_loss,
            final_train_auc: last.train_auc,
            final_test_auc: last.test_auc,
            train_error: last.train_error(),
            test_error: last.test_error(),
            gap_auc: generalization_gap(self),
            gap_error: last.test_error() - last.train_error(),
            train_error_proxy: "1 - train ROC-AUC (ranking metric stands in for 0-1 loss)".into(),
        }
    }

    /// CSV with columns `epoch,train_loss,train_auc,test_auc,gap`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_auc,test_auc,gap\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch,
                fmt_f64(e.train_loss),
                fmt_f64(e.train_auc),
                fmt_f64(e.test_auc),
                fmt_f64(e.gap())
            );
        }
        out
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.10}")
    }
}

/// Final-epoch train ROC-AUC minus test ROC-AUC.
pub fn generalization_gap(record: &RunRecord) -> f64 {
    record.last().gap()
}

/// Eval-mode AUC over a dataset; NaN when undefined.
pub fn evaluate_auc(reg: &mut ParamRegistry, model: &ModelConfig, data: &Dataset) -> Result<f64> {
    let (scores, targets, mask) = predict_dataset(reg, model, data)?;
    match roc_auc(&scores, &targets, &mask, model.num_tasks) {
        Ok(v) => Ok(v),
        Err(Error::MetricUndefined) => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

/// Eval-mode logits for every graph with their targets and mask.
pub fn predict_dataset(
    reg: &mut ParamRegistry,
    model: &ModelConfig,
    data: &Dataset,
) -> Result<(Vec<f64>, Vec<f64>, Vec<bool>)> {
    let mut scores = Vec::new();
    let mut targets = Vec::new();
    let mut mask = Vec::new();
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(256) {
        let batch = GraphBatch::from_dataset(data, chunk)?;
        let logits = predict(reg, model, &batch)?;
        scores.extend_from_slice(logits.data());
        targets.extend_from_slice(&batch.targets);
        mask.extend_from_slice(&batch.mask);
    }
    Ok((scores, targets, mask))
}

/// Runs one optimizer step on a batch and returns the loss, or `None` when
/// the batch has no usable labels.
pub fn train_step(
    reg: &mut ParamRegistry,
    model: &ModelConfig,
    batch: &GraphBatch,
    adam: &mut Adam,
    cfg: &TrainConfig,
    dropout: SeedStream,
) -> Result<Option<f64>> {
    if batch.num_nodes() < 2 {
        return Ok(None);
    }
    let grads = {
        let mut f = Forward::new(reg, model, Mode::Train, dropout);
        let loss = match f.loss(batch) {
            Ok((_, loss)) => loss,
            Err(Error::EmptyLoss) => return Ok(None),
            Err(e) => return Err(e),
        };
        let value = f.tape.value(loss).data()[0];
        if !value.is_finite() {
            return Ok(Some(value));
        }
        (collect_grads(&f, loss), value)
    };
    adam.step(reg, &grads.0, cfg);
    Ok(Some(grads.1))
}

/// Supervised training on `train`, evaluating train and test AUC after each
/// epoch. Only trainable parameters move.
pub fn train_supervised(
    train: &Dataset,
    test: &Dataset,
    reg: &mut ParamRegistry,
    model: &ModelConfig,
    cfg: &TrainConfig,
    fingerprint: &str,
) -> Result<RunRecord> {
    cfg.validate()?;
    model.validate()?;
    if train.is_empty() {
        return Err(Error::Argument("training split is empty".into()));
    }
    let root = SeedStream::new(cfg.seed).split("train");
    let mut adam = Adam::new();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        let frozen = cfg.verify_frozen.then(|| reg.frozen_digests());
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut root.split_index("shuffle", epoch as u64).rng());
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = GraphBatch::from_dataset(train, chunk)?;
            step += 1;
            if let Some(loss) = train_step(reg, model, &batch, &mut adam, cfg, root.split_index("dropout", step))? {
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                loss_sum += loss;
                batches += 1;
            }
        }
        if let Some(before) = &frozen {
            reg.verify_unchanged(before)?;
        }
        let train_loss = if batches == 0 { f64::NAN } else { loss_sum / batches as f64 };
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_auc: evaluate_auc(reg, model, train)?,
            test_auc: evaluate_auc(reg, model, test)?,
        });
    }
    Ok(RunRecord {
        fingerprint: fingerprint.to_string(),
        epochs,
    })
}

/// Settings specific to EdgePred pre-training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgePredConfig {
    /// Fraction of undirected edges hidden from message passing per graph.
    pub hide_fraction: f64,
}

impl Default for EdgePredConfig {
    fn default() -> Self {
        EdgePredConfig { hide_fraction: 0.15 }
    }
}

/// Hidden positive pairs and sampled negative pairs for one graph, in local
/// node ids, plus the graph with the hidden edges removed.
#[derive(Clone, Debug)]
pub struct EdgeTask {
    pub visible: Graph,
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

/// Hides `max(1, round(fraction·|E|))` edges of a graph with at least two
/// edges and samples as many non-adjacent pairs. Graphs with fewer than two
/// edges keep all edges and contribute no pairs.
pub fn edge_task<R: Rng>(graph: &Graph, fraction: f64, rng: &mut R) -> EdgeTask {
    let m = graph.edges.len();
    if m < 2 {
        return EdgeTask {
            visible: graph.clone(),
            positives: Vec::new(),
            negatives: Vec::new(),
        };
    }
    let k = ((fraction * m as f64).round() as usize).clamp(1, m);
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(rng);
    let hidden: BTreeSet<usize> = idx[..k].iter().copied().collect();
    let positives = hidden.iter().map(|&i| (graph.edges[i].u, graph.edges[i].v)).collect();
    let existing: HashSet<(usize, usize)> = graph
        .edges
        .iter()
        .map(|e| (e.u.min(e.v), e.u.max(e.v)))
        .collect();
    let n = graph.num_nodes();
    let mut negatives = Vec::with_capacity(k);
    let mut attempts = 0;
    while negatives.len() < k && attempts < 50 * k {
        attempts += 1;
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v && !existing.contains(&(u.min(v), u.max(v))) {
            negatives.push((u, v));
        }
    }
    EdgeTask {
        visible: graph.without_edges(&hidden),
        positives,
        negatives,
    }
}

/// BCE of `σ(τ·⟨h_u, h_v⟩)` against 1 for positive and 0 for negative
/// pairs. `τ` is the head parameter [`EDGE_TEMPERATURE`] when the registry
/// holds one, else the constant `1/√d`.
pub fn edge_pair_loss(
    f: &mut Forward<'_>,
    node_emb: Var,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> Result<Var> {
    let pairs: Vec<(usize, usize)> = positives.iter().chain(negatives).copied().collect();
    let left: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let right: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let hu = f.tape.gather(node_emb, left.into())?;
    let hv = f.tape.gather(node_emb, right.into())?;
    let prod = f.tape.mul(hu, hv)?;
    let scores = f.tape.row_sum(prod);
    let scores = if f.has(EDGE_TEMPERATURE) {
        let t = f.bind(EDGE_TEMPERATURE)?;
        f.tape.scale_by(scores, t)?
    } else {
        let width = f.tape.value(node_emb).cols().max(1) as f64;
        f.tape.mul_scalar(scores, 1.0 / width.sqrt())
    };
    let targets: Vec<f64> = positives
        .iter()
        .map(|_| 1.0)
        .chain(negatives.iter().map(|_| 0.0))
        .collect();
    let mask = vec![true; targets.len()];
    f.tape.bce_with_logits(scores, &targets, &mask)
}

/// Learnable score temperature of the EdgePred head. Like the classifier
/// it is discarded after pre-training, so the encoder does not have to
/// shrink its output to calibrate pair scores.
pub const EDGE_TEMPERATURE: &str = "edgepred.temperature";

/// Trains the encoder on edge reconstruction. Returns the encoder-only
/// registry (classifier dropped) and per-epoch mean losses.
pub fn pretrain_edgepred(
    dataset: &Dataset,
    model: &ModelConfig,
    cfg: &TrainConfig,
    edge_cfg: &EdgePredConfig,
) -> Result<(ParamRegistry, Vec<f64>)> {
    cfg.validate()?;
    let mut reg = crate::gin::init_params(model, cfg.seed)?;
    for name in ["classifier.weight", "classifier.bias"] {
        reg.remove(name);
    }
    let t0 = 1.0 / (model.emb_dim as f64).sqrt();
    reg.insert(EDGE_TEMPERATURE, crate::tensor::Tensor::scalar(t0), Group::Classifier, true);
    let root = SeedStream::new(cfg.seed).split("edgepred");
    let mut adam = Adam::new();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut root.split_index("shuffle", epoch as u64).rng());
        let mut sampler = root.split_index("pairs", epoch as u64).rng();
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let tasks: Vec<EdgeTask> = chunk
                .iter()
                .map(|&i| edge_task(&dataset.graphs[i], edge_cfg.hide_fraction, &mut sampler))
                .collect();
            let visible: Vec<&Graph> = tasks.iter().map(|t| &t.visible).collect();
            let batch = GraphBatch::new(&visible, &dataset.vocab)?;
            let (mut pos, mut neg) = (Vec::new(), Vec::new());
            for (t, off) in tasks.iter().zip(&batch.node_offsets) {
                pos.extend(t.positives.iter().map(|&(u, v)| (u + off, v + off)));
                neg.extend(t.negatives.iter().map(|&(u, v)| (u + off, v + off)));
            }
            if pos.is_empty() || batch.num_nodes() < 2 {
                continue;
            }
            let (grads, value) = {
                let mut f = Forward::new(&mut reg, model, Mode::Train, root.split_index("dropout", step));
                let h = f.node_embeddings(&batch)?;
                let loss = edge_pair_loss(&mut f, h, &pos, &neg)?;
                let value = f.tape.value(loss).data()[0];
                (collect_grads(&f, loss), value)
            };
            if !value.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            adam.step(&mut reg, &grads, cfg);
            sum += value;
            count += 1;
        }
        losses.push(if count == 0 { f64::NAN } else { sum / count as f64 });
    }
    reg.remove(EDGE_TEMPERATURE);
    Ok((reg, losses))
}

/// Copies every backbone parameter and buffer of `backbone` into `reg`.
pub fn load_backbone(reg: &mut ParamRegistry, backbone: &ParamRegistry) -> Result<()> {
    for (name, p) in backbone.params() {
        if p.group != Group::Backbone {
            continue;
        }
        let dst = reg
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("backbone tensor `{name}` has no slot in the model")))?;
        if dst.value.shape() != p.value.shape() {
            return Err(Error::Shape {
                op: "load_backbone",
                left: dst.value.shape().to_vec(),
                right: p.value.shape().to_vec(),
            });
        }
        dst.value = p.value.clone();
    }
    for (name, b) in backbone.buffers() {
        let dst = reg.buffer_mut(name)?;
        if dst.shape() != b.shape() {
            return Err(Error::Shape {
                op: "load_backbone",
                left: dst.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
        *dst = b.clone();
    }
    Ok(())
}

/// Mean training loss of the first epoch under a given initialisation.
pub fn first_epoch_loss(record: &RunRecord) -> f64 {
    record.epochs[0].train_loss
}
