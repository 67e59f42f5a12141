//! Flat `key=value` experiment configs.
//!
//! Files hold one assignment per line; `#` starts a comment. A value may
//! be a comma-separated list, which sweeps expand Cartesian-style. Keys
//! outside [`KEYS`] are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gin::ModelConfig;
use crate::graph::{SplitMode, SplitSpec, SyntheticSpec, Vocab};
use crate::peft::{PeftConfig, PeftMode};
use crate::sweep::{fingerprint_bytes, DataConfig, Init, PretrainConfig, RunSpec};
use crate::train::TrainConfig;

/// Every accepted key with a short description.
pub const KEYS: &[(&str, &str)] = &[
    ("emb", "embedding width d"),
    ("layers", "number of GIN layers"),
    ("hidden", "MLP hidden width (default 2·emb)"),
    ("tasks", "number of binary tasks"),
    ("dropout", "dropout between layers"),
    ("bn_momentum", "batch-norm running-stat momentum"),
    ("bn_eps", "batch-norm epsilon"),
    ("node_vocab0", "categories of node attribute 0"),
    ("node_vocab1", "categories of node attribute 1"),
    ("edge_vocab0", "categories of edge attribute 0"),
    ("edge_vocab1", "categories of edge attribute 1"),
    ("mode", "tuning mode"),
    ("bottleneck", "adapter bottleneck b"),
    ("lora_rank", "LoRA rank"),
    ("scaling_init", "initial adapter scale"),
    ("tune_backbone_bias", "train backbone MLP biases (true/false)"),
    ("tune_backbone_bn", "train backbone BN affine (true/false)"),
    ("partial_k", "layers tuned by partial_k"),
    ("epochs", "training epochs"),
    ("batch_size", "graphs per batch"),
    ("lr", "Adam learning rate"),
    ("beta1", "Adam beta1"),
    ("beta2", "Adam beta2"),
    ("adam_eps", "Adam epsilon"),
    ("weight_decay", "L2 weight decay"),
    ("seed", "run seed"),
    ("graphs", "synthetic dataset size"),
    ("min_nodes", "smallest synthetic graph"),
    ("max_nodes", "largest synthetic graph"),
    ("edge_prob", "synthetic edge probability"),
    ("edge_prob_same", "edge probability between nodes sharing attribute 0"),
    ("missing_rate", "fraction of missing labels"),
    ("data_seed", "synthetic data seed"),
    ("split", "random or structure"),
    ("train_frac", "train split fraction"),
    ("valid_frac", "validation split fraction"),
    ("test_frac", "test split fraction"),
    ("train_fraction", "fraction of the train split used"),
    ("init", "scratch or pretrained"),
    ("pretrain_graphs", "EdgePred corpus size"),
    ("pretrain_epochs", "EdgePred epochs"),
    ("pretrain_lr", "EdgePred learning rate"),
    ("pretrain_batch_size", "EdgePred batch size"),
    ("hide_fraction", "EdgePred hidden-edge fraction"),
    ("backbone_sha256", "hash of the backbone checkpoint (set automatically)"),
];

pub fn is_known_key(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key=value, got `{line}`"),
            })?;
            cfg.set(k.trim(), v.trim()).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !is_known_key(key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        if value.is_empty() || value.split(',').any(|v| v.trim().is_empty()) {
            return Err(Error::Config(format!("key `{key}` has an empty value")));
        }
        let canonical = value.split(',').map(str::trim).collect::<Vec<_>>().join(",");
        self.values.insert(key.to_string(), canonical);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    /// Applies `other` on top of `self` (other wins).
    pub fn merge(&mut self, other: &ExperimentConfig) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Sorted `key=value` lines; reparses to an equal config.
    pub fn canonical(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// First 12 hex digits of SHA-256 over `command` and the canonical text.
    pub fn fingerprint(&self, command: &str) -> String {
        fingerprint_bytes(format!("{command}\n{}", self.canonical()).as_bytes())
    }

    /// Number of single configs a Cartesian expansion yields.
    pub fn run_count(&self) -> usize {
        self.values.values().map(|v| v.split(',').count()).product()
    }

    /// Cartesian product over comma-separated values, in key order.
    pub fn expand(&self) -> Vec<ExperimentConfig> {
        let mut out = vec![ExperimentConfig::new()];
        for (k, v) in &self.values {
            let mut next = Vec::with_capacity(out.len());
            for base in &out {
                for item in v.split(',') {
                    let mut c = base.clone();
                    c.values.insert(k.clone(), item.to_string());
                    next.push(c);
                }
            }
            out = next;
        }
        out
    }

    fn typed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) if v.contains(',') => Err(Error::Config(format!(
                "key `{key}` has several values ({v}); only sweeps accept lists"
            ))),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::Config(format!("key `{key}`: cannot parse `{v}`: {e}"))),
        }
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.typed(key)?.unwrap_or(default))
    }

    /// Builds a single run spec. List values are an error here.
    pub fn run_spec(&self) -> Result<RunSpec> {
        let md = ModelConfig::default();
        let vocab = Vocab {
            node: [
                self.or("node_vocab0", Vocab::default().node[0])?,
                self.or("node_vocab1", Vocab::default().node[1])?,
            ],
            edge: [
                self.or("edge_vocab0", Vocab::default().edge[0])?,
                self.or("edge_vocab1", Vocab::default().edge[1])?,
            ],
        };
        let emb = self.or("emb", md.emb_dim)?;
        let tasks = self.or("tasks", md.num_tasks)?;
        let model = ModelConfig {
            emb_dim: emb,
            num_layers: self.or("layers", md.num_layers)?,
            mlp_hidden: self.or("hidden", 2 * emb)?,
            num_tasks: tasks,
            dropout: self.or("dropout", md.dropout)?,
            vocab,
            bn_momentum: self.or("bn_momentum", md.bn_momentum)?,
            bn_eps: self.or("bn_eps", md.bn_eps)?,
        };
        let pd = PeftConfig::default();
        let peft = PeftConfig {
            mode: self.or("mode", pd.mode)?,
            bottleneck: self.or("bottleneck", pd.bottleneck)?,
            lora_rank: self.or("lora_rank", pd.lora_rank)?,
            scaling_init: self.or("scaling_init", pd.scaling_init)?,
            tune_backbone_bias: self.typed("tune_backbone_bias")?,
            tune_backbone_bn: self.or("tune_backbone_bn", pd.tune_backbone_bn)?,
            partial_k: self.or("partial_k", pd.partial_k)?,
        };
        let td = TrainConfig::default();
        let train = TrainConfig {
            epochs: self.or("epochs", td.epochs)?,
            batch_size: self.or("batch_size", td.batch_size)?,
            lr: self.or("lr", td.lr)?,
            beta1: self.or("beta1", td.beta1)?,
            beta2: self.or("beta2", td.beta2)?,
            adam_eps: self.or("adam_eps", td.adam_eps)?,
            weight_decay: self.or("weight_decay", td.weight_decay)?,
            seed: self.or("seed", td.seed)?,
            verify_frozen: td.verify_frozen,
        };
        let sd = SyntheticSpec::default();
        let spd = SplitSpec::default();
        let split_mode = match self.get("split") {
            None => spd.mode,
            Some("random") => SplitMode::Random,
            Some("structure") => SplitMode::StructureOrdered,
            Some(other) => {
                return Err(Error::Config(format!("key `split`: expected random or structure, got `{other}`")))
            }
        };
        let data = DataConfig {
            synthetic: SyntheticSpec {
                n_graphs: self.or("graphs", sd.n_graphs)?,
                min_nodes: self.or("min_nodes", sd.min_nodes)?,
                max_nodes: self.or("max_nodes", sd.max_nodes)?,
                edge_prob: self.or("edge_prob", sd.edge_prob)?,
                edge_prob_same: self.typed("edge_prob_same")?,
                vocab,
                n_tasks: tasks,
                missing_rate: self.or("missing_rate", sd.missing_rate)?,
            },
            seed: self.or("data_seed", 0)?,
            split: SplitSpec {
                train: self.or("train_frac", spd.train)?,
                valid: self.or("valid_frac", spd.valid)?,
                test: self.or("test_frac", spd.test)?,
                mode: split_mode,
            },
            train_fraction: self.or("train_fraction", 1.0)?,
        };
        let init = match self.get("init") {
            None | Some("scratch") => Init::Scratch,
            Some("pretrained") => Init::Pretrained,
            Some(other) => {
                return Err(Error::Config(format!("key `init`: expected scratch or pretrained, got `{other}`")))
            }
        };
        let pd = PretrainConfig::default();
        let pretrain = PretrainConfig {
            graphs: self.or("pretrain_graphs", pd.graphs)?,
            epochs: self.or("pretrain_epochs", pd.epochs)?,
            lr: self.or("pretrain_lr", pd.lr)?,
            batch_size: self.or("pretrain_batch_size", pd.batch_size)?,
            hide_fraction: self.or("hide_fraction", pd.hide_fraction)?,
        };
        let spec = RunSpec {
            data,
            model,
            peft,
            train,
            init,
            pretrain,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn mode(&self) -> Result<PeftMode> {
        self.or("mode", PeftMode::Full)
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}
