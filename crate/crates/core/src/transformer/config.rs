use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttentionMode {
    /// Every token attends to every token across all frames.
    JointSpaceTime,
    /// Temporal attention across frames, then spatial attention per frame.
    DividedSpaceTime,
}

impl FromStr for AttentionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint_space_time" | "joint" => Ok(AttentionMode::JointSpaceTime),
            "divided_space_time" | "divided" => Ok(AttentionMode::DividedSpaceTime),
            other => Err(Error::Config(format!("unknown attention_mode {other:?}"))),
        }
    }
}

impl fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionMode::JointSpaceTime => "joint_space_time",
            AttentionMode::DividedSpaceTime => "divided_space_time",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub attention_mode: AttentionMode,
    pub layers: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    pub frames: usize,
    /// Frames per 3D patch; 1 in divided mode.
    pub tubelet_t: usize,
    /// Spatial patch edge in pixels.
    pub patch: usize,
    pub image_size: usize,
    pub has_class_token: bool,
    pub proportional_attention: bool,
    pub num_classes: usize,
}

impl ModelConfig {
    /// ViViT-B style: 32 frames, 2-frame tubelets, class token.
    pub fn vivit_like() -> Self {
        Self {
            attention_mode: AttentionMode::JointSpaceTime,
            layers: 12,
            embed_dim: 768,
            heads: 12,
            mlp_ratio: 4.0,
            frames: 32,
            tubelet_t: 2,
            patch: 16,
            image_size: 224,
            has_class_token: true,
            proportional_attention: true,
            num_classes: 400,
        }
    }

    /// VideoMAE-B style: 16 frames, 2-frame tubelets, mean-pool readout, no
    /// proportional attention.
    pub fn videomae_like() -> Self {
        Self {
            frames: 16,
            has_class_token: false,
            proportional_attention: false,
            ..Self::vivit_like()
        }
    }

    /// TimeSformer-B style: 8 frames, divided space-time attention.
    pub fn timesformer_like() -> Self {
        Self {
            attention_mode: AttentionMode::DividedSpaceTime,
            frames: 8,
            tubelet_t: 1,
            ..Self::vivit_like()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("layers", self.layers),
            ("embed_dim", self.embed_dim),
            ("heads", self.heads),
            ("frames", self.frames),
            ("tubelet_t", self.tubelet_t),
            ("patch", self.patch),
            ("image_size", self.image_size),
            ("num_classes", self.num_classes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.mlp_ratio > 0.0 && self.mlp_ratio.is_finite()) {
            return Err(Error::Config("mlp_ratio must be positive".into()));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if self.image_size % self.patch != 0 {
            return Err(Error::Config(format!(
                "image_size {} not divisible by patch {}",
                self.image_size, self.patch
            )));
        }
        if self.frames % self.tubelet_t != 0 {
            return Err(Error::Config(format!(
                "frames {} not divisible by tubelet_t {}",
                self.frames, self.tubelet_t
            )));
        }
        if self.attention_mode == AttentionMode::DividedSpaceTime && self.tubelet_t != 1 {
            return Err(Error::Config("divided_space_time requires tubelet_t = 1".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.embed_dim as f64 * self.mlp_ratio).round() as usize
    }

    /// Patches along one image edge.
    pub fn grid(&self) -> usize {
        self.image_size / self.patch
    }

    pub fn tokens_per_slot(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Temporal positions after tubelet embedding.
    pub fn temporal_slots(&self) -> usize {
        self.frames / self.tubelet_t
    }

    pub fn patch_dim(&self) -> usize {
        self.tubelet_t * self.patch * self.patch * 3
    }

    pub fn protected_count(&self) -> usize {
        usize::from(self.has_class_token)
    }

    /// Patch tokens, excluding the class token.
    pub fn patch_tokens(&self) -> usize {
        self.temporal_slots() * self.tokens_per_slot()
    }

    /// Initial sequence length, class token included.
    pub fn initial_tokens(&self) -> usize {
        self.patch_tokens() + self.protected_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_token_counts() {
        assert_eq!(ModelConfig::vivit_like().initial_tokens(), 3137);
        assert_eq!(ModelConfig::videomae_like().initial_tokens(), 1568);
        let ts = ModelConfig::timesformer_like();
        assert_eq!((ts.temporal_slots(), ts.tokens_per_slot()), (8, 196));
        for c in [ModelConfig::vivit_like(), ModelConfig::videomae_like(), ts] {
            c.validate().unwrap();
        }
    }

    #[test]
    fn invalid_configs() {
        let mut c = ModelConfig::vivit_like();
        c.heads = 7;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::timesformer_like();
        c.tubelet_t = 2;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::vivit_like();
        c.frames = 31;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::vivit_like();
        c.image_size = 220;
        assert!(c.validate().is_err());
    }
}
