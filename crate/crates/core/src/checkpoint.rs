//! Checkpoint archives.
//!
//! Layout: one line of compact UTF-8 JSON (the manifest), a `\n`, then the
//! payload of little-endian `f32` values. Each manifest entry records the
//! tensor name, shape, dtype and byte offset into the payload. Loading
//! upcasts to `f64`, so a save → load → save cycle is byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::peft::PeftMode;
use crate::registry::{Group, ParamRegistry};
use crate::tensor::Tensor;

pub const FORMAT: &str = "adaptergnn-checkpoint/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Param,
    Buffer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: usize,
    pub kind: EntryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<Group>,
    #[serde(default)]
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub mode: PeftMode,
    /// SHA-256 of the frozen backbone checkpoint a partial checkpoint
    /// builds on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backbone_sha256: Option<String>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<Entry>,
}

fn ckpt_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Which tensors of a registry go into a checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// Everything.
    All,
    /// Backbone parameters and their buffers (no classifier, no tuning modules).
    Backbone,
    /// What a tuning run changes: classifier, tuning modules, trainable
    /// backbone tensors, and every buffer.
    Tuned,
}

fn selected(sel: Selection, group: Group, trainable: bool) -> bool {
    match sel {
        Selection::All => true,
        Selection::Backbone => group == Group::Backbone,
        Selection::Tuned => group != Group::Backbone || trainable,
    }
}

fn buffer_selected(sel: Selection, name: &str) -> bool {
    match sel {
        Selection::Backbone => !name.contains("adapter"),
        _ => true,
    }
}

pub fn encode(
    reg: &ParamRegistry,
    sel: Selection,
    backbone_sha256: Option<String>,
    meta: BTreeMap<String, String>,
) -> Vec<u8> {
    let mut payload: Vec<u8> = Vec::new();
    let mut tensors = Vec::new();
    let mut push = |name: &str, t: &Tensor, kind, group, trainable| {
        tensors.push(Entry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            dtype: "f32".into(),
            offset: payload.len(),
            kind,
            group,
            trainable,
        });
        for v in t.data() {
            payload.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    };
    for (name, p) in reg.params() {
        if selected(sel, p.group, p.trainable) {
            push(name, &p.value, EntryKind::Param, Some(p.group), p.trainable);
        }
    }
    for (name, b) in reg.buffers() {
        if buffer_selected(sel, name) {
            push(name, b, EntryKind::Buffer, None, false);
        }
    }
    let mode = if sel == Selection::Backbone { PeftMode::Full } else { reg.mode() };
    let manifest = Manifest {
        format: FORMAT.into(),
        mode,
        backbone_sha256,
        meta,
        tensors,
    };
    let mut bytes = serde_json::to_vec(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    bytes.extend_from_slice(&payload);
    bytes
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(Manifest, ParamRegistry)> {
    let split = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| ckpt_err(path, "missing manifest terminator"))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes[..split]).map_err(|e| ckpt_err(path, format!("manifest: {e}")))?;
    if manifest.format != FORMAT {
        return Err(ckpt_err(path, format!("unsupported format `{}`", manifest.format)));
    }
    let payload = &bytes[split + 1..];
    let mut reg = ParamRegistry::new();
    for e in &manifest.tensors {
        if e.dtype != "f32" {
            return Err(ckpt_err(path, format!("`{}` has unsupported dtype {}", e.name, e.dtype)));
        }
        let n: usize = e.shape.iter().product();
        let end = e.offset + 4 * n;
        let raw = payload
            .get(e.offset..end)
            .ok_or_else(|| ckpt_err(path, format!("`{}` extends past the payload", e.name)))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let t = Tensor::new(e.shape.clone(), data)?;
        match e.kind {
            EntryKind::Param => reg.insert(e.name.clone(), t, e.group.unwrap_or(Group::Backbone), e.trainable),
            EntryKind::Buffer => reg.insert_buffer(e.name.clone(), t),
        }
    }
    reg.set_mode(manifest.mode);
    Ok((manifest, reg))
}

pub fn save(
    path: &Path,
    reg: &ParamRegistry,
    sel: Selection,
    backbone_sha256: Option<String>,
    meta: BTreeMap<String, String>,
) -> Result<()> {
    fs::write(path, encode(reg, sel, backbone_sha256, meta))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Manifest, ParamRegistry)> {
    let bytes = fs::read(path)?;
    decode(&bytes, path)
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Overlays a partial (tuned) checkpoint onto a registry that already has
/// the matching backbone loaded and tuning modules applied. Fails if the
/// checkpoint was trained against a different backbone file.
pub fn restore_tuned(
    reg: &mut ParamRegistry,
    tuned: &Path,
    backbone: Option<&Path>,
) -> Result<Manifest> {
    let (manifest, saved) = load(tuned)?;
    if let (Some(expected), Some(bb)) = (&manifest.backbone_sha256, backbone) {
        let actual = file_sha256(bb)?;
        if &actual != expected {
            return Err(ckpt_err(
                tuned,
                format!("backbone hash mismatch: checkpoint expects {expected}, {} is {actual}", bb.display()),
            ));
        }
    }
    for (name, p) in saved.params() {
        let dst = reg
            .get_mut(name)
            .ok_or_else(|| ckpt_err(tuned, format!("tensor `{name}` has no slot in the model")))?;
        if dst.value.shape() != p.value.shape() {
            return Err(ckpt_err(tuned, format!("tensor `{name}` has shape {:?}", p.value.shape())));
        }
        dst.value = p.value.clone();
    }
    for (name, b) in saved.buffers() {
        *reg.buffer_mut(name)? = b.clone();
    }
    Ok(manifest)
}

pub fn default_path(dir: &Path, stem: &str, fingerprint: &str) -> PathBuf {
    dir.join(format!("{stem}-{fingerprint}.ckpt"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gin::{init_params, ModelConfig};
    use crate::peft::{apply_peft, PeftConfig};

    fn cfg() -> ModelConfig {
        ModelConfig { emb_dim: 6, num_layers: 2, mlp_hidden: 12, num_tasks: 2, ..Default::default() }
    }

    #[test]
    fn round_trip_is_bit_exact_at_f32() {
        let reg = init_params(&cfg(), 5).unwrap();
        let bytes = encode(&reg, Selection::All, None, BTreeMap::new());
        let (_, loaded) = decode(&bytes, Path::new("mem")).unwrap();
        for (name, p) in reg.params() {
            let q = loaded.get(name).unwrap();
            for (a, b) in p.value.data().iter().zip(q.value.data()) {
                assert_eq!((*a as f32).to_bits(), (*b as f32).to_bits());
            }
        }
        let again = encode(&loaded, Selection::All, None, BTreeMap::new());
        assert_eq!(bytes, again);
    }

    #[test]
    fn backbone_selection_drops_classifier() {
        let reg = init_params(&cfg(), 5).unwrap();
        let bytes = encode(&reg, Selection::Backbone, None, BTreeMap::new());
        let (m, loaded) = decode(&bytes, Path::new("mem")).unwrap();
        assert!(!loaded.contains("classifier.weight"));
        assert!(loaded.contains("layer.1.mlp.2.weight"));
        assert!(m.tensors.iter().any(|e| e.name == "layer.0.bn.running_var"));
    }

    #[test]
    fn tuned_selection_keeps_only_changed_tensors() {
        let c = cfg();
        let mut reg = init_params(&c, 5).unwrap();
        apply_peft(&mut reg, &c, &PeftConfig { bottleneck: 2, ..PeftConfig::new(PeftMode::Adaptergnn) }, 0).unwrap();
        let bytes = encode(&reg, Selection::Tuned, Some("abc".into()), BTreeMap::new());
        let (m, loaded) = decode(&bytes, Path::new("mem")).unwrap();
        assert_eq!(m.backbone_sha256.as_deref(), Some("abc"));
        assert_eq!(m.mode, PeftMode::Adaptergnn);
        assert!(loaded.contains("layer.0.adapter1.down.weight"));
        assert!(loaded.contains("layer.0.mlp.0.bias"));
        assert!(!loaded.contains("layer.0.mlp.0.weight"));
        assert!(!loaded.contains("encoder.node.0"));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let reg = init_params(&cfg(), 5).unwrap();
        let mut bytes = encode(&reg, Selection::All, None, BTreeMap::new());
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(decode(&bytes, Path::new("x")), Err(Error::Checkpoint { .. })));
        assert!(decode(b"not json\n", Path::new("x")).is_err());
    }
}
