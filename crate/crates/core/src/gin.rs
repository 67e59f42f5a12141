//! GIN encoder with sum message passing, mean-pool readout and a linear
//! classifier.
//!
//! The forward pass is driven by the registry contents: tuning modules
//! inserted by [`crate::peft::apply_peft`] (adapters, LoRA factors, (IA)³
//! vectors, prompts) are picked up by name, so a registry without them is
//! the plain backbone.

use std::collections::BTreeMap;
use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphBatch, Vocab};
use crate::registry::{Group, ParamRegistry};
use crate::rng::SeedStream;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub emb_dim: usize,
    pub num_layers: usize,
    pub mlp_hidden: usize,
    pub num_tasks: usize,
    pub dropout: f64,
    pub vocab: Vocab,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            emb_dim: 300,
            num_layers: 5,
            mlp_hidden: 600,
            num_tasks: 1,
            dropout: 0.5,
            vocab: Vocab::default(),
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    /// Config with `mlp_hidden = 2·emb_dim`.
    pub fn with_emb(emb_dim: usize, num_layers: usize, num_tasks: usize) -> Self {
        ModelConfig {
            emb_dim,
            num_layers,
            mlp_hidden: 2 * emb_dim,
            num_tasks,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.emb_dim == 0 || self.num_layers == 0 || self.mlp_hidden == 0 || self.num_tasks == 0 {
            return Err(Error::Config(format!(
                "emb_dim, num_layers, mlp_hidden and num_tasks must be ≥ 1 (got {}, {}, {}, {})",
                self.emb_dim, self.num_layers, self.mlp_hidden, self.num_tasks
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub fn layer_prefix(l: usize) -> String {
    format!("layer.{l}")
}

/// Which MLP linears exist in a GIN layer, as `(name, n_in, n_out)`.
pub fn mlp_linears(cfg: &ModelConfig, l: usize) -> [(String, usize, usize); 2] {
    let p = layer_prefix(l);
    [
        (format!("{p}.mlp.0"), cfg.emb_dim, cfg.mlp_hidden),
        (format!("{p}.mlp.2"), cfg.mlp_hidden, cfg.emb_dim),
    ]
}

pub(crate) fn uniform(shape: &[usize], bound: f64, stream: SeedStream) -> Tensor {
    let mut rng = stream.rng();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

pub(crate) fn normal(shape: &[usize], std: f64, stream: SeedStream) -> Tensor {
    let mut rng = stream.rng();
    let dist = Normal::new(0.0, std).expect("std > 0");
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(&mut rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

/// Inserts a linear layer stored as `n_in × n_out` (applied as `x·W + b`).
pub(crate) fn insert_linear(
    reg: &mut ParamRegistry,
    prefix: &str,
    n_in: usize,
    n_out: usize,
    bound: f64,
    group: Group,
    root: SeedStream,
) {
    let w = format!("{prefix}.weight");
    let init = uniform(&[n_in, n_out], bound, root.split(&w));
    reg.insert(w, init, group, true);
    reg.insert(format!("{prefix}.bias"), Tensor::zeros(&[n_out]), group, true);
}

pub(crate) fn insert_batch_norm(reg: &mut ParamRegistry, prefix: &str, d: usize, group: Group) {
    reg.insert(format!("{prefix}.weight"), Tensor::full(&[d], 1.0), group, true);
    reg.insert(format!("{prefix}.bias"), Tensor::zeros(&[d]), group, true);
    reg.insert_buffer(format!("{prefix}.running_mean"), Tensor::zeros(&[d]));
    reg.insert_buffer(format!("{prefix}.running_var"), Tensor::full(&[d], 1.0));
}

/// Fresh backbone plus classifier, every tensor trainable.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamRegistry> {
    cfg.validate()?;
    let root = SeedStream::new(seed).split("init");
    let d = cfg.emb_dim;
    let mut reg = ParamRegistry::new();
    for k in 0..2 {
        let name = format!("encoder.node.{k}");
        let t = normal(&[cfg.vocab.node[k], d], 0.02, root.split(&name));
        reg.insert(name, t, Group::Backbone, true);
        let name = format!("encoder.edge.{k}");
        let t = normal(&[cfg.vocab.edge[k] + 1, d], 0.02, root.split(&name));
        reg.insert(name, t, Group::Backbone, true);
    }
    for l in 0..cfg.num_layers {
        for (prefix, n_in, n_out) in mlp_linears(cfg, l) {
            let bound = 1.0 / (n_in as f64).sqrt();
            insert_linear(&mut reg, &prefix, n_in, n_out, bound, Group::Backbone, root);
        }
        insert_batch_norm(&mut reg, &format!("{}.bn", layer_prefix(l)), d, Group::Backbone);
    }
    insert_linear(
        &mut reg,
        "classifier",
        d,
        cfg.num_tasks,
        1.0 / (d as f64).sqrt(),
        Group::Classifier,
        root,
    );
    Ok(reg)
}

/// Live forward state: the tape, the registry (for batch-norm buffers) and
/// the param-name → tape-leaf bindings.
pub struct Forward<'a> {
    pub tape: Tape,
    pub reg: &'a mut ParamRegistry,
    pub cfg: &'a ModelConfig,
    pub mode: Mode,
    bindings: BTreeMap<String, Var>,
    rng: ChaCha8Rng,
}

#[derive(Clone, Copy, Debug)]
pub struct LayerOutput {
    /// Message-passing result `MP(x_l)`, including any node prompt.
    pub mp: Var,
    /// `BN(MLP(MP(x_l)))`.
    pub backbone: Var,
    /// Layer output `h_l` after tuning modules are added.
    pub out: Var,
}

impl<'a> Forward<'a> {
    pub fn new(reg: &'a mut ParamRegistry, cfg: &'a ModelConfig, mode: Mode, dropout: SeedStream) -> Self {
        Forward {
            tape: Tape::new(),
            reg,
            cfg,
            mode,
            bindings: BTreeMap::new(),
            rng: dropout.rng(),
        }
    }

    pub fn bindings(&self) -> &BTreeMap<String, Var> {
        &self.bindings
    }

    pub fn has(&self, name: &str) -> bool {
        self.reg.contains(name)
    }

    /// Tape leaf for a registry parameter, created once per forward.
    pub fn bind(&mut self, name: &str) -> Result<Var> {
        if let Some(v) = self.bindings.get(name) {
            return Ok(*v);
        }
        let p = self.reg.param(name)?;
        let var = self.tape.leaf(p.value.clone(), p.trainable);
        self.bindings.insert(name.to_string(), var);
        Ok(var)
    }

    /// `x·W + b` with optional (IA)³ input reweighting and LoRA bypass.
    pub fn linear(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let ia3 = format!("{prefix}.ia3");
        let input = if self.has(&ia3) {
            let w = self.bind(&ia3)?;
            self.tape.mul_row(x, w)?
        } else {
            x
        };
        let w = self.bind(&format!("{prefix}.weight"))?;
        let b = self.bind(&format!("{prefix}.bias"))?;
        let xw = self.tape.matmul(input, w)?;
        let mut y = self.tape.add_row(xw, b)?;
        let lora_a = format!("{prefix}.lora_a");
        if self.has(&lora_a) {
            let a = self.bind(&lora_a)?;
            let bb = self.bind(&format!("{prefix}.lora_b"))?;
            let xa = self.tape.matmul(input, a)?;
            let xab = self.tape.matmul(xa, bb)?;
            y = self.tape.add(y, xab)?;
        }
        Ok(y)
    }

    pub fn batch_norm(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let gamma = self.bind(&format!("{prefix}.weight"))?;
        let beta = self.bind(&format!("{prefix}.bias"))?;
        let mean_name = format!("{prefix}.running_mean");
        let var_name = format!("{prefix}.running_var");
        let eps = self.cfg.bn_eps;
        match self.mode {
            Mode::Train => {
                let (y, stats) = self.tape.batch_norm_train(x, gamma, beta, eps)?;
                let m = self.cfg.bn_momentum;
                let rm = self.reg.buffer_mut(&mean_name)?;
                for (r, s) in rm.data_mut().iter_mut().zip(&stats.mean) {
                    *r = (1.0 - m) * *r + m * s;
                }
                let rv = self.reg.buffer_mut(&var_name)?;
                for (r, s) in rv.data_mut().iter_mut().zip(&stats.var_unbiased) {
                    *r = (1.0 - m) * *r + m * s;
                }
                Ok(y)
            }
            Mode::Eval => {
                let rm = self.reg.buffer(&mean_name)?.data().to_vec();
                let rv = self.reg.buffer(&var_name)?.data().to_vec();
                self.tape.batch_norm_eval(x, gamma, beta, &rm, &rv, eps)
            }
        }
    }

    pub fn dropout(&mut self, x: Var) -> Result<Var> {
        let p = self.cfg.dropout;
        self.tape.dropout(x, p, self.mode == Mode::Train, &mut self.rng)
    }

    /// Initial node features (summed attribute embeddings, plus feature
    /// prompt when present) and per-edge embeddings.
    pub fn encode(&mut self, batch: &GraphBatch) -> Result<(Var, Var)> {
        let mut x = None;
        for k in 0..2 {
            let table = self.bind(&format!("encoder.node.{k}"))?;
            let rows = self.tape.gather(table, batch.node_attrs[k].clone())?;
            x = Some(match x {
                None => rows,
                Some(acc) => self.tape.add(acc, rows)?,
            });
        }
        let mut x = x.expect("two attributes");
        if self.has("prompt.feature") {
            let p = self.bind("prompt.feature")?;
            x = self.tape.add_row(x, p)?;
        }
        let mut e = None;
        for k in 0..2 {
            let table = self.bind(&format!("encoder.edge.{k}"))?;
            let rows = self.tape.gather(table, batch.edge_attrs[k].clone())?;
            e = Some(match e {
                None => rows,
                Some(acc) => self.tape.add(acc, rows)?,
            });
        }
        Ok((x, e.expect("two attributes")))
    }

    /// One GIN layer: `h = BN(MLP(MP(x))) + tuning terms`.
    pub fn layer(&mut self, l: usize, x: Var, edge_emb: Var, batch: &GraphBatch) -> Result<LayerOutput> {
        let p = layer_prefix(l);
        let mut mp = message_pass(&mut self.tape, x, batch, edge_emb)?;
        let prompt = format!("{p}.prompt");
        if self.has(&prompt) {
            let v = self.bind(&prompt)?;
            mp = self.tape.add_row(mp, v)?;
        }
        let z = self.linear(&format!("{p}.mlp.0"), mp)?;
        let z = self.tape.relu(z);
        let z = self.linear(&format!("{p}.mlp.2"), z)?;
        let backbone = self.batch_norm(&format!("{p}.bn"), z)?;
        let mut out = backbone;
        for (adapter, scale, input) in [("adapter1", "scale1", x), ("adapter2", "scale2", mp)] {
            let prefix = format!("{p}.{adapter}");
            if self.has(&format!("{prefix}.down.weight")) {
                let a = crate::peft::adapter_forward(self, &prefix, input)?;
                let s = self.bind(&format!("{p}.{scale}"))?;
                let scaled = self.tape.scale_by(a, s)?;
                out = self.tape.add(out, scaled)?;
            }
        }
        for (adapter, input) in [("adapter_par", mp), ("adapter_seq", backbone)] {
            let prefix = format!("{p}.{adapter}");
            if self.has(&format!("{prefix}.down.weight")) {
                let a = crate::peft::adapter_forward(self, &prefix, input)?;
                out = self.tape.add(out, a)?;
            }
        }
        Ok(LayerOutput { mp, backbone, out })
    }

    /// Final node embeddings `h_L`.
    pub fn node_embeddings(&mut self, batch: &GraphBatch) -> Result<Var> {
        let (mut x, edge_emb) = self.encode(batch)?;
        let layers = self.cfg.num_layers;
        for l in 0..layers {
            let h = self.layer(l, x, edge_emb, batch)?.out;
            x = if l + 1 < layers {
                let r = self.tape.relu(h);
                self.dropout(r)?
            } else {
                h
            };
        }
        Ok(x)
    }

    /// Mean-pooled graph embeddings, `G × d`.
    pub fn graph_embeddings(&mut self, batch: &GraphBatch) -> Result<Var> {
        let h = self.node_embeddings(batch)?;
        self.tape.segment_mean(h, batch.graph_id.clone(), batch.num_graphs)
    }

    pub fn classify(&mut self, embeddings: Var) -> Result<Var> {
        self.linear("classifier", embeddings)
    }

    /// Logits `G × T`.
    pub fn logits(&mut self, batch: &GraphBatch) -> Result<Var> {
        let g = self.graph_embeddings(batch)?;
        self.classify(g)
    }

    /// Masked BCE loss on the batch labels.
    pub fn loss(&mut self, batch: &GraphBatch) -> Result<(Var, Var)> {
        let logits = self.logits(batch)?;
        let loss = self.tape.bce_with_logits(logits, &batch.targets, &batch.mask)?;
        Ok((logits, loss))
    }
}

/// `MP(x)_i = Σ_{j→i} (x_j + e_{ji})` over directed edges including self-loops.
pub fn message_pass(tape: &mut Tape, x: Var, batch: &GraphBatch, edge_emb: Var) -> Result<Var> {
    let n = batch.num_nodes();
    if tape.value(x).rows() != n || !tape.value(x).is_matrix() {
        return Err(Error::Shape {
            op: "message_pass",
            left: tape.value(x).shape().to_vec(),
            right: vec![n],
        });
    }
    let src = tape.gather(x, batch.src.clone())?;
    let msg = tape.add(src, edge_emb)?;
    tape.scatter_sum(msg, Rc::clone(&batch.dst), n)
}

/// Eval-mode logits as a plain tensor.
pub fn predict(reg: &mut ParamRegistry, cfg: &ModelConfig, batch: &GraphBatch) -> Result<Tensor> {
    let mut f = Forward::new(reg, cfg, Mode::Eval, SeedStream::new(0));
    let logits = f.logits(batch)?;
    Ok(f.tape.value(logits).clone())
}

/// Eval-mode graph embeddings as a plain tensor.
pub fn embed(reg: &mut ParamRegistry, cfg: &ModelConfig, batch: &GraphBatch) -> Result<Tensor> {
    let mut f = Forward::new(reg, cfg, Mode::Eval, SeedStream::new(0));
    let g = f.graph_embeddings(batch)?;
    Ok(f.tape.value(g).clone())
}
