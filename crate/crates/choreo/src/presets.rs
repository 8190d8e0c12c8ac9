//! Named configurations bundling sequence geometry, motion width,
//! skeleton, and loss weights.

use crate::decoder::DecoderConfig;
use crate::kinematics::Skeleton;
use crate::objectives::LossWeights;

/// Which diffusion stage a decoder serves. The global stage denoises the
/// key-motion sequence, whose length differs from its conditioning
/// window, so it drops the channel-axis scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Global,
    Local,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    /// Global segment length N.
    pub segment_len: usize,
    /// Local window length n.
    pub window_len: usize,
    /// Key-motion clip length.
    pub key_len: usize,
    /// Motion frame width.
    pub motion_dim: usize,
    pub weights: LossWeights,
}

/// Long-form setup: 1024-frame segments, 256-frame windows, 8-frame key
/// clips on the 22-joint skeleton.
pub fn finedance() -> Preset {
    Preset {
        name: "finedance",
        segment_len: 1024,
        window_len: 256,
        key_len: 8,
        motion_dim: 139,
        weights: LossWeights {
            pos: 1.0,
            vel: 2.964,
            acc: 2.964,
            foot: 20.0,
            trans: 0.5,
        },
    }
}

/// Short-form setup: 128-frame segments, 64-frame windows, 4-frame key
/// clips on the 24-joint skeleton.
pub fn aistpp() -> Preset {
    Preset {
        name: "aistpp",
        segment_len: 128,
        window_len: 64,
        key_len: 4,
        motion_dim: 151,
        weights: LossWeights {
            pos: 0.636,
            vel: 2.964,
            acc: 2.964,
            foot: 10.942,
            trans: 0.5,
        },
    }
}

pub fn by_name(name: &str) -> Option<Preset> {
    match name {
        "finedance" => Some(finedance()),
        "aistpp" => Some(aistpp()),
        _ => None,
    }
}

pub const PRESET_NAMES: [&str; 2] = ["finedance", "aistpp"];

impl Preset {
    pub fn skeleton(&self) -> Skeleton {
        match self.motion_dim {
            139 => Skeleton::builtin_22(),
            _ => Skeleton::builtin_24(),
        }
    }

    /// Desk-scale decoder configuration for one stage.
    pub fn decoder_config(&self, stage: Stage) -> DecoderConfig {
        let mut config = DecoderConfig::desk(self.motion_dim);
        config.spatial_block = matches!(stage, Stage::Local);
        config
    }

    /// Small decoder configuration for fast structural runs.
    pub fn tiny_decoder_config(&self, stage: Stage) -> DecoderConfig {
        let mut config = DecoderConfig::tiny(self.motion_dim);
        config.spatial_block = matches!(stage, Stage::Local);
        config
    }
}
