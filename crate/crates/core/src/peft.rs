//! Parameter-efficient tuning modes.
//!
//! Each mode inserts its own parameters into a [`ParamRegistry`] (group
//! [`Group::Peft`]) and then sets trainable flags. The classifier is always
//! trainable. AdapterGNN adds two bottleneck adapters per layer, one fed the
//! layer input and one fed the message-passing output, each ending in its
//! own batch norm and scaled by a learnable scalar:
//!
//! `h_l = BN(MLP(MP(x_l))) + s1·A1(x_l) + s2·A2(MP(x_l))`,
//! `A(x) = BN(W_up(ReLU(W_down(x))))`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gin::{insert_batch_norm, insert_linear, layer_prefix, mlp_linears, normal, Forward, ModelConfig};
use crate::registry::{Group, ParamRegistry};
use crate::rng::SeedStream;
use crate::tape::Var;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeftMode {
    Full,
    Adaptergnn,
    AdapterSeq,
    AdapterPar,
    Lora,
    Bitfit,
    Ia3,
    PromptFeat,
    PromptNode,
    PartialK,
}

impl PeftMode {
    pub const ALL: [PeftMode; 10] = [
        PeftMode::Full,
        PeftMode::Adaptergnn,
        PeftMode::AdapterSeq,
        PeftMode::AdapterPar,
        PeftMode::Lora,
        PeftMode::Bitfit,
        PeftMode::Ia3,
        PeftMode::PromptFeat,
        PeftMode::PromptNode,
        PeftMode::PartialK,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PeftMode::Full => "full",
            PeftMode::Adaptergnn => "adaptergnn",
            PeftMode::AdapterSeq => "adapter_seq",
            PeftMode::AdapterPar => "adapter_par",
            PeftMode::Lora => "lora",
            PeftMode::Bitfit => "bitfit",
            PeftMode::Ia3 => "ia3",
            PeftMode::PromptFeat => "prompt_feat",
            PeftMode::PromptNode => "prompt_node",
            PeftMode::PartialK => "partial_k",
        }
    }
}

impl fmt::Display for PeftMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PeftMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PeftMode::ALL
            .iter()
            .find(|m| m.as_str() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown tuning mode `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeftConfig {
    pub mode: PeftMode,
    /// Adapter bottleneck width; 0 inserts no adapter (identity mapping).
    pub bottleneck: usize,
    pub lora_rank: usize,
    pub scaling_init: f64,
    /// `None` means the mode default (on for AdapterGNN only).
    pub tune_backbone_bias: Option<bool>,
    pub tune_backbone_bn: bool,
    pub partial_k: usize,
}

impl Default for PeftConfig {
    fn default() -> Self {
        PeftConfig {
            mode: PeftMode::Full,
            bottleneck: 15,
            lora_rank: 4,
            scaling_init: 0.01,
            tune_backbone_bias: None,
            tune_backbone_bn: false,
            partial_k: 1,
        }
    }
}

impl PeftConfig {
    pub fn new(mode: PeftMode) -> Self {
        PeftConfig {
            mode,
            ..Default::default()
        }
    }

    pub fn tunes_backbone_bias(&self) -> bool {
        self.tune_backbone_bias
            .unwrap_or(self.mode == PeftMode::Adaptergnn)
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        let d = model.emb_dim;
        match self.mode {
            PeftMode::Adaptergnn | PeftMode::AdapterSeq | PeftMode::AdapterPar => {
                if self.bottleneck >= d {
                    return Err(Error::Config(format!(
                        "adapter bottleneck {} must be smaller than emb_dim {d}",
                        self.bottleneck
                    )));
                }
            }
            PeftMode::Lora => {
                let max = model.emb_dim.min(model.mlp_hidden);
                if self.lora_rank == 0 || self.lora_rank > max {
                    return Err(Error::Config(format!(
                        "lora_rank {} must lie in [1, {max}]",
                        self.lora_rank
                    )));
                }
            }
            PeftMode::PartialK => {
                if self.partial_k == 0 || self.partial_k > model.num_layers {
                    return Err(Error::Config(format!(
                        "partial_k {} must lie in [1, {}]",
                        self.partial_k, model.num_layers
                    )));
                }
            }
            _ => {}
        }
        if !self.scaling_init.is_finite() {
            return Err(Error::Config("scaling_init must be finite".into()));
        }
        Ok(())
    }
}

/// `A(x) = BN(W_up(ReLU(W_down(x))))` using the adapter's own batch norm.
pub fn adapter_forward(f: &mut Forward<'_>, prefix: &str, x: Var) -> Result<Var> {
    let d = f.cfg.emb_dim;
    if f.tape.value(x).cols() != d {
        return Err(Error::Shape {
            op: "adapter",
            left: f.tape.value(x).shape().to_vec(),
            right: vec![d],
        });
    }
    let h = f.linear(&format!("{prefix}.down"), x)?;
    let h = f.tape.relu(h);
    let h = f.linear(&format!("{prefix}.up"), h)?;
    f.batch_norm(&format!("{prefix}.bn"), h)
}

fn insert_adapter(reg: &mut ParamRegistry, prefix: &str, d: usize, b: usize, root: SeedStream) {
    let bound = 1.0 / (d as f64).sqrt();
    insert_linear(reg, &format!("{prefix}.down"), d, b, bound, Group::Peft, root);
    insert_linear(reg, &format!("{prefix}.up"), b, d, bound, Group::Peft, root);
    insert_batch_norm(reg, &format!("{prefix}.bn"), d, Group::Peft);
}

fn is_mlp_bias(name: &str) -> bool {
    name.starts_with("layer.") && name.contains(".mlp.") && name.ends_with(".bias")
}

fn is_backbone_bn_affine(name: &str) -> bool {
    name.starts_with("layer.") && name.contains(".bn.") && !name.contains("adapter")
}

/// Inserts the mode's modules and sets trainable flags.
pub fn apply_peft(
    reg: &mut ParamRegistry,
    model: &ModelConfig,
    peft: &PeftConfig,
    seed: u64,
) -> Result<()> {
    peft.validate(model)?;
    if reg.mode() != PeftMode::Full || reg.params().any(|(_, p)| p.group == Group::Peft) {
        return Err(Error::Mode {
            expected: "full (no tuning modules)".into(),
            actual: reg.mode().to_string(),
        });
    }
    let root = SeedStream::new(seed).split("peft");
    let d = model.emb_dim;
    let layers = model.num_layers;
    match peft.mode {
        PeftMode::Adaptergnn => {
            for l in 0..layers {
                let p = layer_prefix(l);
                if peft.bottleneck == 0 {
                    continue;
                }
                for i in 1..=2 {
                    insert_adapter(reg, &format!("{p}.adapter{i}"), d, peft.bottleneck, root);
                    reg.insert(
                        format!("{p}.scale{i}"),
                        Tensor::scalar(peft.scaling_init),
                        Group::Peft,
                        true,
                    );
                }
            }
        }
        PeftMode::AdapterSeq | PeftMode::AdapterPar => {
            let kind = if peft.mode == PeftMode::AdapterSeq { "adapter_seq" } else { "adapter_par" };
            if peft.bottleneck > 0 {
                for l in 0..layers {
                    insert_adapter(reg, &format!("{}.{kind}", layer_prefix(l)), d, peft.bottleneck, root);
                }
            }
        }
        PeftMode::Lora => {
            for l in 0..layers {
                for (prefix, n_in, n_out) in mlp_linears(model, l) {
                    let a = format!("{prefix}.lora_a");
                    let init = normal(&[n_in, peft.lora_rank], 0.02, root.split(&a));
                    reg.insert(a, init, Group::Peft, true);
                    reg.insert(
                        format!("{prefix}.lora_b"),
                        Tensor::zeros(&[peft.lora_rank, n_out]),
                        Group::Peft,
                        true,
                    );
                }
            }
        }
        PeftMode::Ia3 => {
            for l in 0..layers {
                for (prefix, n_in, _) in mlp_linears(model, l) {
                    reg.insert(format!("{prefix}.ia3"), Tensor::full(&[n_in], 1.0), Group::Peft, true);
                }
            }
        }
        PeftMode::PromptFeat => {
            reg.insert("prompt.feature", Tensor::zeros(&[d]), Group::Peft, true);
        }
        PeftMode::PromptNode => {
            for l in 0..layers {
                reg.insert(format!("{}.prompt", layer_prefix(l)), Tensor::zeros(&[d]), Group::Peft, true);
            }
        }
        PeftMode::Full | PeftMode::Bitfit | PeftMode::PartialK => {}
    }

    let tune_bias = peft.tunes_backbone_bias();
    let first_tuned_layer = layers.saturating_sub(peft.partial_k);
    let names: Vec<String> = reg.names().map(str::to_string).collect();
    for name in names {
        let group = reg.param(&name)?.group;
        let trainable = match (peft.mode, group) {
            (_, Group::Classifier) => true,
            (PeftMode::Full, _) => true,
            (_, Group::Peft) => true,
            (PeftMode::Adaptergnn | PeftMode::AdapterSeq | PeftMode::AdapterPar, Group::Backbone) => {
                (tune_bias && is_mlp_bias(&name))
                    || (peft.tune_backbone_bn && is_backbone_bn_affine(&name))
            }
            (PeftMode::Bitfit, Group::Backbone) => is_mlp_bias(&name),
            (PeftMode::PromptFeat, Group::Backbone) => is_backbone_bn_affine(&name),
            (PeftMode::PartialK, Group::Backbone) => layer_index(&name)
                .is_some_and(|l| l >= first_tuned_layer),
            (_, Group::Backbone) => false,
        };
        reg.set_trainable(&name, trainable)?;
    }
    reg.set_mode(peft.mode);
    Ok(())
}

/// Layer index of a `layer.{l}.…` parameter.
pub fn layer_index(name: &str) -> Option<usize> {
    name.strip_prefix("layer.")?.split('.').next()?.parse().ok()
}

/// Folds every LoRA pair into its frozen linear (`W ← W + A·B`) and removes
/// the factors. The registry afterwards holds no tuning modules.
pub fn lora_merge(reg: &mut ParamRegistry) -> Result<()> {
    if reg.mode() != PeftMode::Lora {
        return Err(Error::Mode {
            expected: PeftMode::Lora.to_string(),
            actual: reg.mode().to_string(),
        });
    }
    let prefixes: Vec<String> = reg
        .names()
        .filter_map(|n| n.strip_suffix(".lora_a").map(str::to_string))
        .collect();
    for prefix in prefixes {
        let a = reg.remove(&format!("{prefix}.lora_a")).expect("listed");
        let b = reg
            .remove(&format!("{prefix}.lora_b"))
            .ok_or_else(|| Error::Config(format!("`{prefix}.lora_b` missing")))?;
        let delta = a.value.matmul(&b.value)?;
        let w = reg
            .get_mut(&format!("{prefix}.weight"))
            .ok_or_else(|| Error::Config(format!("`{prefix}.weight` missing")))?;
        if w.value.shape() != delta.shape() {
            return Err(Error::Shape {
                op: "lora_merge",
                left: w.value.shape().to_vec(),
                right: delta.shape().to_vec(),
            });
        }
        w.value
            .data_mut()
            .iter_mut()
            .zip(delta.data())
            .for_each(|(w, d)| *w += d);
    }
    reg.set_mode(PeftMode::Full);
    Ok(())
}

/// Closed-form trainable count for AdapterGNN.
pub fn adaptergnn_trainable_formula(model: &ModelConfig, peft: &PeftConfig) -> u64 {
    let (d, b, h, t) = (
        model.emb_dim as u64,
        peft.bottleneck as u64,
        model.mlp_hidden as u64,
        model.num_tasks as u64,
    );
    let adapters = if b == 0 { 0 } else { 2 * (d * b + b + b * d + d + 2 * d) + 2 };
    let bias = if peft.tunes_backbone_bias() { h + d } else { 0 };
    let bn = if peft.tune_backbone_bn { 2 * d } else { 0 };
    model.num_layers as u64 * (adapters + bias + bn) + d * t + t
}

/// Closed-form total count of the plain backbone plus classifier.
pub fn backbone_total_formula(model: &ModelConfig) -> u64 {
    let (d, h, t) = (model.emb_dim as u64, model.mlp_hidden as u64, model.num_tasks as u64);
    let v = model.vocab;
    let encoders = (v.node[0] + v.node[1] + v.edge[0] + 1 + v.edge[1] + 1) as u64 * d;
    let layer = d * h + h + h * d + d + 2 * d;
    encoders + model.num_layers as u64 * layer + d * t + t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gin::init_params;

    fn small() -> ModelConfig {
        ModelConfig {
            emb_dim: 8,
            num_layers: 3,
            mlp_hidden: 16,
            num_tasks: 2,
            ..Default::default()
        }
    }

    #[test]
    fn mode_names_round_trip() {
        for m in PeftMode::ALL {
            assert_eq!(m.as_str().parse::<PeftMode>().unwrap(), m);
        }
        assert!(matches!("prefix".parse::<PeftMode>(), Err(Error::Config(_))));
    }

    #[test]
    fn bitfit_flags_only_biases_and_classifier() {
        let cfg = small();
        let mut reg = init_params(&cfg, 0).unwrap();
        apply_peft(&mut reg, &cfg, &PeftConfig::new(PeftMode::Bitfit), 0).unwrap();
        for (name, p) in reg.params() {
            let expected = name.starts_with("classifier") || is_mlp_bias(name);
            assert_eq!(p.trainable, expected, "{name}");
        }
    }

    #[test]
    fn backbone_weights_frozen_in_peft_modes() {
        let cfg = small();
        for mode in PeftMode::ALL {
            if matches!(mode, PeftMode::Full | PeftMode::PartialK) {
                continue;
            }
            let mut reg = init_params(&cfg, 0).unwrap();
            apply_peft(&mut reg, &cfg, &PeftConfig { bottleneck: 3, ..PeftConfig::new(mode) }, 0).unwrap();
            for (name, p) in reg.params() {
                if p.group == Group::Backbone && name.ends_with(".weight") && name.contains(".mlp.") {
                    assert!(!p.trainable, "{mode}: {name}");
                }
                if p.group == Group::Classifier {
                    assert!(p.trainable);
                }
            }
        }
    }

    #[test]
    fn partial_k_tunes_last_layers() {
        let cfg = small();
        let mut reg = init_params(&cfg, 0).unwrap();
        let peft = PeftConfig { partial_k: 2, ..PeftConfig::new(PeftMode::PartialK) };
        apply_peft(&mut reg, &cfg, &peft, 0).unwrap();
        assert!(!reg.get("layer.0.mlp.0.weight").unwrap().trainable);
        assert!(reg.get("layer.1.mlp.0.weight").unwrap().trainable);
        assert!(reg.get("layer.2.bn.weight").unwrap().trainable);
        assert!(!reg.get("encoder.node.0").unwrap().trainable);
    }

    #[test]
    fn adaptergnn_count_matches_formula() {
        let cfg = small();
        for tune in [true, false] {
            for b in [0, 1, 3, 7] {
                let peft = PeftConfig {
                    bottleneck: b,
                    tune_backbone_bias: Some(tune),
                    ..PeftConfig::new(PeftMode::Adaptergnn)
                };
                let mut reg = init_params(&cfg, 0).unwrap();
                assert_eq!(reg.count().total, backbone_total_formula(&cfg));
                apply_peft(&mut reg, &cfg, &peft, 0).unwrap();
                assert_eq!(reg.count().trainable, adaptergnn_trainable_formula(&cfg, &peft));
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cfg = small();
        let mut reg = init_params(&cfg, 0).unwrap();
        let bad = [
            PeftConfig { bottleneck: 8, ..PeftConfig::new(PeftMode::Adaptergnn) },
            PeftConfig { lora_rank: 0, ..PeftConfig::new(PeftMode::Lora) },
            PeftConfig { lora_rank: 9, ..PeftConfig::new(PeftMode::Lora) },
            PeftConfig { partial_k: 4, ..PeftConfig::new(PeftMode::PartialK) },
        ];
        for p in bad {
            assert!(apply_peft(&mut reg, &cfg, &p, 0).is_err(), "{p:?}");
        }
    }

    #[test]
    fn peft_cannot_be_applied_twice() {
        let cfg = small();
        let mut reg = init_params(&cfg, 0).unwrap();
        apply_peft(&mut reg, &cfg, &PeftConfig::new(PeftMode::Ia3), 0).unwrap();
        assert!(matches!(
            apply_peft(&mut reg, &cfg, &PeftConfig::new(PeftMode::Ia3), 0),
            Err(Error::Mode { .. })
        ));
    }

    #[test]
    fn lora_merge_requires_lora_mode() {
        let cfg = small();
        let mut reg = init_params(&cfg, 0).unwrap();
        assert!(matches!(lora_merge(&mut reg), Err(Error::Mode { .. })));
    }

    #[test]
    fn lora_merge_with_zero_b_is_bitwise_noop() {
        let cfg = small();
        let mut reg = init_params(&cfg, 0).unwrap();
        let before = reg.value("layer.1.mlp.2.weight").unwrap().clone();
        apply_peft(&mut reg, &cfg, &PeftConfig::new(PeftMode::Lora), 0).unwrap();
        lora_merge(&mut reg).unwrap();
        assert_eq!(reg.value("layer.1.mlp.2.weight").unwrap(), &before);
        assert_eq!(reg.count().peft.total, 0);
    }

    #[test]
    fn layer_index_parses() {
        assert_eq!(layer_index("layer.12.mlp.0.bias"), Some(12));
        assert_eq!(layer_index("classifier.bias"), None);
    }
}
