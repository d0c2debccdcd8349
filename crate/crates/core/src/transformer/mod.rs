//! Minimal video transformer: joint or divided space-time attention with a
//! token reduction step inside every layer.

mod attention;
mod config;
mod forward;
mod weights;

pub use attention::{head_mean_keys, log_sizes, proportional_attention};
pub use config::{AttentionMode, ModelConfig};
pub use forward::{forward, merge_keys, patch_embed, ForwardOutput, LAYER_NORM_EPS};
pub(crate) use forward::{check_video, FrameSplit};
pub use weights::{expected_shapes, init_synthetic_weights, ModelWeights};
