use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::transformer::config::{AttentionMode, ModelConfig};

/// Named parameter tensors. Linear layers are stored `[in, out]` so that
/// `y = x · W + b`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelWeights {
    tensors: BTreeMap<String, Tensor>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    /// Uniform in ±1/√fan_in.
    Scaled(usize),
    /// 1 + small noise.
    NormGain,
    /// Small noise around 0.
    NormBias,
}

/// Every tensor a config needs, in canonical order, with its init rule.
fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.embed_dim;
    let h = cfg.mlp_hidden();
    let mut out = Vec::new();
    let mut push = |name: String, dims: Vec<usize>, init: Init| out.push((name, dims, init));

    push("patch_embed.weight".into(), vec![cfg.patch_dim(), d], Init::Scaled(cfg.patch_dim()));
    push("patch_embed.bias".into(), vec![d], Init::Scaled(cfg.patch_dim()));
    if cfg.has_class_token {
        push("cls_token".into(), vec![1, d], Init::Scaled(d));
    }
    match cfg.attention_mode {
        AttentionMode::JointSpaceTime => {
            push("pos_embed".into(), vec![cfg.initial_tokens(), d], Init::Scaled(d));
        }
        AttentionMode::DividedSpaceTime => {
            let rows = cfg.tokens_per_slot() + cfg.protected_count();
            push("pos_embed".into(), vec![rows, d], Init::Scaled(d));
            push("time_embed".into(), vec![cfg.frames, d], Init::Scaled(d));
        }
    }
    for i in 0..cfg.layers {
        let p = format!("blocks.{i}");
        if cfg.attention_mode == AttentionMode::DividedSpaceTime {
            push(format!("{p}.temporal_norm.weight"), vec![d], Init::NormGain);
            push(format!("{p}.temporal_norm.bias"), vec![d], Init::NormBias);
            push(format!("{p}.temporal_attn.qkv.weight"), vec![d, 3 * d], Init::Scaled(d));
            push(format!("{p}.temporal_attn.qkv.bias"), vec![3 * d], Init::Scaled(d));
            push(format!("{p}.temporal_attn.proj.weight"), vec![d, d], Init::Scaled(d));
            push(format!("{p}.temporal_attn.proj.bias"), vec![d], Init::Scaled(d));
        }
        push(format!("{p}.norm1.weight"), vec![d], Init::NormGain);
        push(format!("{p}.norm1.bias"), vec![d], Init::NormBias);
        push(format!("{p}.attn.qkv.weight"), vec![d, 3 * d], Init::Scaled(d));
        push(format!("{p}.attn.qkv.bias"), vec![3 * d], Init::Scaled(d));
        push(format!("{p}.attn.proj.weight"), vec![d, d], Init::Scaled(d));
        push(format!("{p}.attn.proj.bias"), vec![d], Init::Scaled(d));
        push(format!("{p}.norm2.weight"), vec![d], Init::NormGain);
        push(format!("{p}.norm2.bias"), vec![d], Init::NormBias);
        push(format!("{p}.mlp.fc1.weight"), vec![d, h], Init::Scaled(d));
        push(format!("{p}.mlp.fc1.bias"), vec![h], Init::Scaled(d));
        push(format!("{p}.mlp.fc2.weight"), vec![h, d], Init::Scaled(h));
        push(format!("{p}.mlp.fc2.bias"), vec![d], Init::Scaled(h));
    }
    push("norm.weight".into(), vec![d], Init::NormGain);
    push("norm.bias".into(), vec![d], Init::NormBias);
    push("head.weight".into(), vec![d, cfg.num_classes], Init::Scaled(d));
    push("head.bias".into(), vec![cfg.num_classes], Init::Scaled(d));
    out
}

/// Tensor names and dims a config requires, in canonical order.
pub fn expected_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    layout(cfg).into_iter().map(|(n, d, _)| (n, d)).collect()
}

/// Deterministic weights from a ChaCha8 stream: uniform draws in ±1/√fan_in
/// for projections and embeddings, near-identity affine parameters for
/// layer norms.
pub fn init_synthetic_weights(cfg: &ModelConfig, seed: u64) -> Result<ModelWeights> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = BTreeMap::new();
    for (name, dims, init) in layout(cfg) {
        let n: usize = dims.iter().product();
        let data: Vec<f32> = match init {
            Init::Scaled(fan_in) => {
                let bound = 1.0 / (fan_in as f32).sqrt();
                (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
            }
            Init::NormGain => (0..n).map(|_| 1.0 + rng.gen_range(-0.1f32..0.1)).collect(),
            Init::NormBias => (0..n).map(|_| rng.gen_range(-0.1f32..0.1)).collect(),
        };
        tensors.insert(name, Tensor::new(dims, data)?);
    }
    Ok(ModelWeights { tensors })
}

impl ModelWeights {
    /// Wraps a tensor map after checking it is exactly the set `cfg` needs.
    pub fn from_map(cfg: &ModelConfig, tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        let w = Self { tensors };
        w.validate(cfg)?;
        Ok(w)
    }

    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        cfg.validate()?;
        let expected = expected_shapes(cfg);
        for (name, dims) in &expected {
            let t = self
                .tensors
                .get(name)
                .ok_or_else(|| Error::MissingTensor(name.clone()))?;
            if t.dims() != dims.as_slice() {
                return Err(Error::Shape(format!(
                    "{name}: expected {dims:?}, found {:?}",
                    t.dims()
                )));
            }
        }
        if self.tensors.len() != expected.len() {
            let known: std::collections::HashSet<_> = expected.iter().map(|(n, _)| n).collect();
            let extra = self.tensors.keys().find(|k| !known.contains(k)).unwrap();
            return Err(Error::UnexpectedTensor(extra.clone()));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Option<Tensor> {
        self.tensors.insert(name.into(), t)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.remove(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn into_map(self) -> BTreeMap<String, Tensor> {
        self.tensors
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            layers: 2,
            embed_dim: 16,
            heads: 2,
            frames: 2,
            image_size: 8,
            patch: 4,
            num_classes: 5,
            ..ModelConfig::vivit_like()
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = init_synthetic_weights(&tiny(), 1).unwrap();
        let b = init_synthetic_weights(&tiny(), 1).unwrap();
        let c = init_synthetic_weights(&tiny(), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.validate(&tiny()).unwrap();
    }

    #[test]
    fn validation_rejects_missing_and_extra() {
        let mut w = init_synthetic_weights(&tiny(), 1).unwrap();
        w.remove("head.bias");
        assert!(matches!(w.validate(&tiny()), Err(Error::MissingTensor(n)) if n == "head.bias"));

        let mut w = init_synthetic_weights(&tiny(), 1).unwrap();
        w.insert("blocks.9.norm1.weight", Tensor::zeros(&[16]));
        assert!(matches!(w.validate(&tiny()), Err(Error::UnexpectedTensor(_))));

        let mut w = init_synthetic_weights(&tiny(), 1).unwrap();
        w.insert("norm.bias", Tensor::zeros(&[15]));
        assert!(matches!(w.validate(&tiny()), Err(Error::Shape(_))));
    }

    #[test]
    fn divided_mode_has_temporal_set() {
        let cfg = ModelConfig {
            attention_mode: AttentionMode::DividedSpaceTime,
            tubelet_t: 1,
            ..tiny()
        };
        let names: Vec<_> = expected_shapes(&cfg).into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"blocks.1.temporal_attn.qkv.weight".to_string()));
        assert!(names.contains(&"time_embed".to_string()));
    }
}
