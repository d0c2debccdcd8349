use crate::error::{Error, Result};
use crate::merging::{reduce_layer, reduce_layer_in_frame, ReductionPlan, TokenState};
use crate::tensor::Tensor;
use crate::transformer::{merge_keys, patch_embed, AttentionMode, FrameSplit, ModelConfig, ModelWeights};

/// Merging-only rerun of the model: every layer of `plan` reduces tokens
/// with keys from layer `probe_layer`'s norm and QKV projection, applied to
/// the current (merged) embeddings. Attention and MLP are skipped.
pub fn layer_probe(
    cfg: &ModelConfig,
    weights: &ModelWeights,
    plan: &ReductionPlan,
    probe_layer: usize,
    video: &Tensor,
) -> Result<TokenState> {
    if probe_layer >= cfg.layers {
        return Err(Error::Plan(format!(
            "probe layer {probe_layer} outside a {}-layer model",
            cfg.layers
        )));
    }
    let mut state = patch_embed(video, weights, cfg)?;
    match cfg.attention_mode {
        AttentionMode::JointSpaceTime => {
            for layer in 0..plan.layers() {
                if plan.r_per_layer[layer] > 0 {
                    let keys = merge_keys(&state.features, weights, cfg, probe_layer)?;
                    state = reduce_layer(&state, &keys, plan, layer)?;
                }
            }
            Ok(state)
        }
        AttentionMode::DividedSpaceTime => {
            let mut seq = FrameSplit::split(&state, cfg)?;
            for layer in 0..plan.layers() {
                if plan.r_per_layer[layer] == 0 {
                    continue;
                }
                for (f, fr) in seq.frames.iter_mut().enumerate() {
                    let keys = merge_keys(&fr.features, weights, cfg, probe_layer)?;
                    *fr = reduce_layer_in_frame(fr, &keys, plan, layer, f)?;
                }
            }
            seq.join()
        }
    }
}
