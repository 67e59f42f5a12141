//! Analytic FLOP counts for the GNN layers of one batch.
//!
//! Convention (one multiply-add = 2 FLOPs), per op on a `B × w` activation:
//!
//! | op | forward | backward |
//! |----|---------|----------|
//! | linear `n_in → n_out` | `2·B·n_in·n_out` (bias add not counted) | input grad `2·B·n_in·n_out` if the input needs a gradient; weight grad `2·B·n_in·n_out` if the weight is trainable; bias grad `B·n_out` if the bias is trainable |
//! | LoRA branch rank `r` | `2·B·n_in·r + 2·B·r·n_out + B·n_out` | `2·B·r·n_out` each for the B-factor grad and the hidden grad, `2·B·n_in·r` each for the A-factor grad and the input grad, each only when needed |
//! | (IA)³ rescale | `B·n_in` | `2·B·n_in` vector grad, `B·n_in` input grad |
//! | ReLU | `B·w` | `B·w` if the input needs a gradient |
//! | batch norm | train `8·B·w`, inference `4·B·w` | input grad `8·B·w`; affine grads `2·B·w` if trainable |
//! | add | `B·w` | 0 |
//! | row add (prompt) | `B·w` | `B·w` if the row is trainable |
//! | scalar scale | `B·w` | `B·w` input grad, `2·B·w` scale grad |
//!
//! Only the GNN layers are counted (with the inter-layer ReLU). Encoders,
//! message passing, readout, dropout and the classifier are excluded. A
//! tensor needs a gradient iff a trainable parameter lies upstream of it;
//! backward work is only counted along such paths. `B` is the number of
//! node rows in the batch.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gin::{init_params, layer_prefix, ModelConfig};
use crate::peft::{apply_peft, PeftConfig, PeftMode};
use crate::registry::ParamRegistry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Infer,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopReport {
    pub forward: u64,
    pub backward: u64,
    pub per_layer: Vec<u64>,
}

impl FlopReport {
    pub fn total(&self) -> u64 {
        self.forward + self.backward
    }
}

/// Forward FLOPs of a single dense layer on `rows` inputs.
pub fn linear_flops(rows: u64, n_in: u64, n_out: u64) -> u64 {
    2 * rows * n_in * n_out
}

struct Counter<'a> {
    reg: &'a ParamRegistry,
    rows: u64,
    train: bool,
    fwd: u64,
    bwd: u64,
}

impl Counter<'_> {
    fn trainable(&self, name: &str) -> bool {
        self.train && self.reg.get(name).is_some_and(|p| p.trainable)
    }

    fn has(&self, name: &str) -> bool {
        self.reg.contains(name)
    }

    fn back(&mut self, cond: bool, flops: u64) {
        if self.train && cond {
            self.bwd += flops;
        }
    }

    fn linear(&mut self, prefix: &str, x_g: bool, n_in: u64, n_out: u64) -> bool {
        let b = self.rows;
        let mut x_g = x_g;
        let ia3 = format!("{prefix}.ia3");
        if self.has(&ia3) {
            let t = self.trainable(&ia3);
            self.fwd += b * n_in;
            self.back(t, 2 * b * n_in);
            self.back(x_g, b * n_in);
            x_g |= t;
        }
        let w_t = self.trainable(&format!("{prefix}.weight"));
        let b_t = self.trainable(&format!("{prefix}.bias"));
        self.fwd += linear_flops(b, n_in, n_out);
        self.back(x_g, 2 * b * n_in * n_out);
        self.back(w_t, 2 * b * n_in * n_out);
        self.back(b_t, b * n_out);
        let mut out_g = x_g || w_t || b_t;
        let (a, bf) = (format!("{prefix}.lora_a"), format!("{prefix}.lora_b"));
        if self.has(&a) {
            let r = self.reg.get(&a).expect("present").value.cols() as u64;
            let (a_t, b_t) = (self.trainable(&a), self.trainable(&bf));
            self.fwd += 2 * b * n_in * r + 2 * b * r * n_out + b * n_out;
            let h_g = x_g || a_t;
            self.back(b_t, 2 * b * r * n_out);
            self.back(h_g, 2 * b * r * n_out);
            self.back(a_t, 2 * b * n_in * r);
            self.back(x_g, 2 * b * n_in * r);
            out_g |= h_g || b_t;
        }
        out_g
    }

    fn relu(&mut self, x_g: bool, w: u64) -> bool {
        self.fwd += self.rows * w;
        self.back(x_g, self.rows * w);
        x_g
    }

    fn batch_norm(&mut self, prefix: &str, x_g: bool, w: u64) -> bool {
        let b = self.rows;
        self.fwd += if self.train { 8 * b * w } else { 4 * b * w };
        let affine = self.trainable(&format!("{prefix}.weight")) || self.trainable(&format!("{prefix}.bias"));
        self.back(x_g, 8 * b * w);
        self.back(affine, 2 * b * w);
        x_g || affine
    }

    fn add(&mut self, a_g: bool, b_g: bool, w: u64) -> bool {
        self.fwd += self.rows * w;
        a_g || b_g
    }

    fn add_row(&mut self, name: &str, x_g: bool, w: u64) -> bool {
        let t = self.trainable(name);
        self.fwd += self.rows * w;
        self.back(t, self.rows * w);
        x_g || t
    }

    fn scale(&mut self, name: &str, x_g: bool, w: u64) -> bool {
        let t = self.trainable(name);
        self.fwd += self.rows * w;
        self.back(x_g, self.rows * w);
        self.back(t, 2 * self.rows * w);
        x_g || t
    }

    fn adapter(&mut self, prefix: &str, x_g: bool, d: u64, b: u64) -> bool {
        let h = self.linear(&format!("{prefix}.down"), x_g, d, b);
        let h = self.relu(h, b);
        let h = self.linear(&format!("{prefix}.up"), h, b, d);
        self.batch_norm(&format!("{prefix}.bn"), h, d)
    }

    /// Returns whether the layer output needs a gradient.
    fn layer(&mut self, model: &ModelConfig, l: usize, x_g: bool) -> bool {
        let p = layer_prefix(l);
        let d = model.emb_dim as u64;
        let h = model.mlp_hidden as u64;
        let mut mp_g = x_g;
        let prompt = format!("{p}.prompt");
        if self.has(&prompt) {
            mp_g = self.add_row(&prompt, mp_g, d);
        }
        let z = self.linear(&format!("{p}.mlp.0"), mp_g, d, h);
        let z = self.relu(z, h);
        let z = self.linear(&format!("{p}.mlp.2"), z, h, d);
        let backbone_g = self.batch_norm(&format!("{p}.bn"), z, d);
        let mut out_g = backbone_g;
        for (adapter, scale, input_g) in [("adapter1", "scale1", x_g), ("adapter2", "scale2", mp_g)] {
            let prefix = format!("{p}.{adapter}");
            let down = format!("{prefix}.down.weight");
            if self.has(&down) {
                let b = self.reg.get(&down).expect("present").value.cols() as u64;
                let a = self.adapter(&prefix, input_g, d, b);
                let s = self.scale(&format!("{p}.{scale}"), a, d);
                out_g = self.add(out_g, s, d);
            }
        }
        for (adapter, input_g) in [("adapter_par", mp_g), ("adapter_seq", backbone_g)] {
            let prefix = format!("{p}.{adapter}");
            let down = format!("{prefix}.down.weight");
            if self.has(&down) {
                let b = self.reg.get(&down).expect("present").value.cols() as u64;
                let a = self.adapter(&prefix, input_g, d, b);
                out_g = self.add(out_g, a, d);
            }
        }
        if l + 1 < model.num_layers {
            out_g = self.relu(out_g, d);
        }
        out_g
    }
}

/// FLOPs for a registry as configured (trainable flags are read from it).
pub fn registry_flops(reg: &ParamRegistry, model: &ModelConfig, rows: u64, phase: Phase) -> FlopReport {
    let mut c = Counter {
        reg,
        rows,
        train: phase == Phase::Train,
        fwd: 0,
        bwd: 0,
    };
    let mut x_g = reg
        .params()
        .any(|(n, p)| (n.starts_with("encoder.") || n == "prompt.feature") && p.trainable)
        && c.train;
    let mut per_layer = Vec::with_capacity(model.num_layers);
    for l in 0..model.num_layers {
        let before = c.fwd + c.bwd;
        x_g = c.layer(model, l, x_g);
        per_layer.push(c.fwd + c.bwd - before);
    }
    FlopReport {
        forward: c.fwd,
        backward: c.bwd,
        per_layer,
    }
}

pub fn estimate_flops(model: &ModelConfig, peft: &PeftConfig, rows: u64, phase: Phase) -> Result<FlopReport> {
    model.validate()?;
    let mut reg = init_params(model, 0)?;
    if peft.mode != PeftMode::Full {
        apply_peft(&mut reg, model, peft, 0)?;
    }
    Ok(registry_flops(&reg, model, rows, phase))
}

/// Both AdapterGNN variants: with and without the tunable backbone MLP bias.
pub fn adaptergnn_variants(
    model: &ModelConfig,
    peft: &PeftConfig,
    rows: u64,
    phase: Phase,
) -> Result<[(&'static str, FlopReport); 2]> {
    let with = PeftConfig {
        mode: PeftMode::Adaptergnn,
        tune_backbone_bias: Some(true),
        ..peft.clone()
    };
    let without = PeftConfig {
        tune_backbone_bias: Some(false),
        ..with.clone()
    };
    Ok([
        ("adaptergnn+bias", estimate_flops(model, &with, rows, phase)?),
        ("adaptergnn", estimate_flops(model, &without, rows, phase)?),
    ])
}
