//! Named parameter store with per-parameter trainable flags.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::peft::PeftMode;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Backbone,
    Peft,
    Classifier,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub trainable: bool,
    pub group: Group,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamRegistry {
    params: BTreeMap<String, Param>,
    /// Non-trainable state such as batch-norm running statistics.
    buffers: BTreeMap<String, Tensor>,
    mode: PeftMode,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCount {
    pub total: u64,
    pub trainable: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub backbone: GroupCount,
    pub peft: GroupCount,
    pub classifier: GroupCount,
    pub total: u64,
    pub trainable: u64,
    pub fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CountFilter {
    All,
    Trainable,
}

impl Default for ParamRegistry {
    fn default() -> Self {
        ParamRegistry {
            params: BTreeMap::new(),
            buffers: BTreeMap::new(),
            mode: PeftMode::Full,
        }
    }
}

impl ParamRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mode(&self) -> PeftMode {
        self.mode
    }

    pub(crate) fn set_mode(&mut self, mode: PeftMode) {
        self.mode = mode;
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, group: Group, trainable: bool) {
        self.params.insert(
            name.into(),
            Param {
                value,
                trainable,
                group,
            },
        );
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, value: Tensor) {
        self.buffers.insert(name.into(), value);
    }

    pub fn remove(&mut self, name: &str) -> Option<Param> {
        self.params.remove(name)
    }

    pub fn remove_buffer(&mut self, name: &str) -> Option<Tensor> {
        self.buffers.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.get_mut(name)
    }

    pub fn param(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.param(name).map(|p| &p.value)
    }

    pub fn buffer(&self, name: &str) -> Result<&Tensor> {
        self.buffers
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing buffer `{name}`")))
    }

    pub fn buffer_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.buffers
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("missing buffer `{name}`")))
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        self.params
            .get_mut(name)
            .map(|p| p.trainable = trainable)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        self.params.values_mut().for_each(|p| p.trainable = trainable);
    }

    pub fn params(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.params.iter_mut()
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.buffers.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.params
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn count(&self) -> ParamCounts {
        let mut counts = ParamCounts {
            backbone: GroupCount::default(),
            peft: GroupCount::default(),
            classifier: GroupCount::default(),
            total: 0,
            trainable: 0,
            fraction: 0.0,
        };
        for p in self.params.values() {
            let n = p.value.numel() as u64;
            let slot = match p.group {
                Group::Backbone => &mut counts.backbone,
                Group::Peft => &mut counts.peft,
                Group::Classifier => &mut counts.classifier,
            };
            slot.total += n;
            counts.total += n;
            if p.trainable {
                slot.trainable += n;
                counts.trainable += n;
            }
        }
        counts.fraction = if counts.total == 0 {
            0.0
        } else {
            counts.trainable as f64 / counts.total as f64
        };
        counts
    }

    pub fn count_filtered(&self, filter: CountFilter) -> u64 {
        let c = self.count();
        match filter {
            CountFilter::All => c.total,
            CountFilter::Trainable => c.trainable,
        }
    }

    /// Bit-level hash of every frozen parameter.
    pub fn frozen_digests(&self) -> BTreeMap<String, u64> {
        self.params
            .iter()
            .filter(|(_, p)| !p.trainable)
            .map(|(n, p)| (n.clone(), tensor_digest(&p.value)))
            .collect()
    }

    /// Fails if any tensor in `before` changed.
    pub fn verify_unchanged(&self, before: &BTreeMap<String, u64>) -> Result<()> {
        for (name, digest) in before {
            let now = self.params.get(name).map(|p| tensor_digest(&p.value));
            if now != Some(*digest) {
                return Err(Error::FrozenMutated { name: name.clone() });
            }
        }
        Ok(())
    }
}

pub fn tensor_digest(t: &Tensor) -> u64 {
    let mut h = DefaultHasher::new();
    t.shape().hash(&mut h);
    for v in t.data() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}
