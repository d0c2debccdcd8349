use std::ops::Range;

use crate::error::{Error, Result};
use crate::merging::{reduce_layer, reduce_layer_in_frame, ReductionPlan, TokenState};
use crate::tensor::{gelu_in_place, layer_norm, matmul, Tensor};
use crate::transformer::attention::{attend_packed, head_mean_keys, log_sizes};
use crate::transformer::config::{AttentionMode, ModelConfig};
use crate::transformer::weights::ModelWeights;

pub const LAYER_NORM_EPS: f32 = 1e-6;

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub logits: Tensor,
    pub final_state: TokenState,
    /// Live tokens in the whole sequence after each layer (class token
    /// included).
    pub per_layer_counts: Vec<usize>,
    /// Divided mode only: `[layer][frame]` token counts after each layer.
    pub per_frame_counts: Vec<Vec<usize>>,
}

fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut y = matmul(x, w)?;
    y.add_row_bias(b.data())?;
    Ok(y)
}

fn norm(x: &Tensor, weights: &ModelWeights, prefix: &str) -> Result<Tensor> {
    layer_norm(
        x,
        weights.get(&format!("{prefix}.weight"))?.data(),
        weights.get(&format!("{prefix}.bias"))?.data(),
        LAYER_NORM_EPS,
    )
}

/// Packed `[S, 3D]` QKV for `x` under the given norm and attention prefixes.
pub(crate) fn qkv_projection(
    x: &Tensor,
    weights: &ModelWeights,
    norm_prefix: &str,
    attn_prefix: &str,
) -> Result<Tensor> {
    let normed = norm(x, weights, norm_prefix)?;
    linear(
        &normed,
        weights.get(&format!("{attn_prefix}.qkv.weight"))?,
        weights.get(&format!("{attn_prefix}.qkv.bias"))?,
    )
}

/// Head-averaged merge keys for layer `layer`'s (spatial) attention.
pub fn merge_keys(x: &Tensor, weights: &ModelWeights, cfg: &ModelConfig, layer: usize) -> Result<Tensor> {
    let qkv = qkv_projection(
        x,
        weights,
        &format!("blocks.{layer}.norm1"),
        &format!("blocks.{layer}.attn"),
    )?;
    head_mean_keys(&qkv, cfg.heads)
}

/// Attention sub-layer output (after output projection, before the
/// residual add). Each row range in `groups` attends only within itself.
/// Also returns the packed QKV so callers can take merge keys from it.
fn attention_delta(
    x: &Tensor,
    sizes: &[u32],
    groups: &[Range<usize>],
    weights: &ModelWeights,
    cfg: &ModelConfig,
    norm_prefix: &str,
    attn_prefix: &str,
) -> Result<(Tensor, Tensor)> {
    let dim = cfg.embed_dim;
    let qkv = qkv_projection(x, weights, norm_prefix, attn_prefix)?;
    let bias = cfg.proportional_attention.then(|| log_sizes(sizes));
    let mut out = Tensor::zeros(x.dims());
    for g in groups {
        attend_packed(
            &qkv.data()[g.start * 3 * dim..g.end * 3 * dim],
            g.len(),
            dim,
            cfg.heads,
            bias.as_ref().map(|b| &b[g.clone()]),
            &mut out.data_mut()[g.start * dim..g.end * dim],
        )?;
    }
    let delta = linear(
        &out,
        weights.get(&format!("{attn_prefix}.proj.weight"))?,
        weights.get(&format!("{attn_prefix}.proj.bias"))?,
    )?;
    Ok((delta, qkv))
}

fn mlp_residual(x: &mut Tensor, weights: &ModelWeights, layer: usize) -> Result<()> {
    let p = format!("blocks.{layer}");
    let h = norm(x, weights, &format!("{p}.norm2"))?;
    let mut h = linear(
        &h,
        weights.get(&format!("{p}.mlp.fc1.weight"))?,
        weights.get(&format!("{p}.mlp.fc1.bias"))?,
    )?;
    gelu_in_place(h.data_mut());
    let h = linear(
        &h,
        weights.get(&format!("{p}.mlp.fc2.weight"))?,
        weights.get(&format!("{p}.mlp.fc2.bias"))?,
    )?;
    x.add_assign(&h)
}

pub(crate) fn check_video(video: &Tensor, cfg: &ModelConfig) -> Result<()> {
    let want = [cfg.frames, cfg.image_size, cfg.image_size, 3];
    if video.dims() != want {
        return Err(Error::Shape(format!(
            "video {:?}, config expects {want:?}",
            video.dims()
        )));
    }
    Ok(())
}

/// Flattened pixel block for every patch token, `[patch_tokens, patch_dim]`.
/// Tokens are ordered temporal slot, then row, then column; each vector is
/// ordered frame-in-tubelet, row, column, channel.
fn extract_patches(video: &Tensor, cfg: &ModelConfig) -> Tensor {
    let (g, p, t, img) = (cfg.grid(), cfg.patch, cfg.tubelet_t, cfg.image_size);
    let v = video.data();
    let mut data = Vec::with_capacity(cfg.patch_tokens() * cfg.patch_dim());
    for slot in 0..cfg.temporal_slots() {
        for gy in 0..g {
            for gx in 0..g {
                for dt in 0..t {
                    let f = slot * t + dt;
                    for py in 0..p {
                        let y = gy * p + py;
                        let start = ((f * img + y) * img + gx * p) * 3;
                        data.extend_from_slice(&v[start..start + p * 3]);
                    }
                }
            }
        }
    }
    Tensor::new(vec![cfg.patch_tokens(), cfg.patch_dim()], data).expect("patch layout")
}

/// Embeds a `[F, H, W, 3]` clip into the initial token sequence: the class
/// token (if any) at index 0, then patch tokens slot-major. Positional
/// embeddings are added here and never again.
pub fn patch_embed(video: &Tensor, weights: &ModelWeights, cfg: &ModelConfig) -> Result<TokenState> {
    cfg.validate()?;
    check_video(video, cfg)?;
    let d = cfg.embed_dim;
    let patches = extract_patches(video, cfg);
    let tokens = linear(
        &patches,
        weights.get("patch_embed.weight")?,
        weights.get("patch_embed.bias")?,
    )?;
    let c = cfg.protected_count();
    let mut seq = Tensor::zeros(&[cfg.initial_tokens(), d]);
    if cfg.has_class_token {
        seq.row_mut(0).copy_from_slice(weights.get("cls_token")?.data());
    }
    seq.data_mut()[c * d..].copy_from_slice(tokens.data());

    let pos = weights.get("pos_embed")?;
    match cfg.attention_mode {
        AttentionMode::JointSpaceTime => seq.add_assign(pos)?,
        AttentionMode::DividedSpaceTime => {
            let time = weights.get("time_embed")?;
            let per = cfg.tokens_per_slot();
            if c == 1 {
                add_row(seq.row_mut(0), pos.row(0));
            }
            for f in 0..cfg.frames {
                for p in 0..per {
                    let row = seq.row_mut(c + f * per + p);
                    add_row(row, pos.row(c + p));
                    add_row(row, time.row(f));
                }
            }
        }
    }
    let protected: Vec<usize> = (0..c).collect();
    TokenState::initial(seq, &protected)
}

fn add_row(dst: &mut [f32], src: &[f32]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

/// Final norm, class-token or size-weighted mean readout, classifier head.
fn classify(state: &TokenState, weights: &ModelWeights, cfg: &ModelConfig) -> Result<Tensor> {
    let normed = norm(&state.features, weights, "norm")?;
    let pooled: Vec<f32> = if cfg.has_class_token {
        normed.row(0).to_vec()
    } else {
        let total = state.total_size() as f64;
        let mut acc = vec![0.0f64; cfg.embed_dim];
        for (i, &n) in state.sizes.iter().enumerate() {
            for (a, &x) in acc.iter_mut().zip(normed.row(i)) {
                *a += n as f64 * x as f64;
            }
        }
        acc.into_iter().map(|a| (a / total) as f32).collect()
    };
    let pooled = Tensor::new(vec![1, cfg.embed_dim], pooled)?;
    let logits = linear(&pooled, weights.get("head.weight")?, weights.get("head.bias")?)?;
    logits.reshape(vec![cfg.num_classes])
}

fn check_layer(t: &Tensor, layer: usize) -> Result<()> {
    t.check_finite()
        .map_err(|_| Error::NonFiniteActivation { layer })
}

/// Runs the classifier on one clip, reducing tokens in every layer per
/// `plan`.
///
/// Each layer: pre-norm attention, residual add, token reduction using the
/// keys of that attention, pre-norm MLP, residual add. In divided mode the
/// attention is temporal then spatial, and reduction runs per frame.
pub fn forward(
    video: &Tensor,
    weights: &ModelWeights,
    cfg: &ModelConfig,
    plan: &ReductionPlan,
) -> Result<ForwardOutput> {
    if plan.layers() != cfg.layers {
        return Err(Error::Plan(format!(
            "plan has {} layers, model has {}",
            plan.layers(),
            cfg.layers
        )));
    }
    let state = patch_embed(video, weights, cfg)?;
    match cfg.attention_mode {
        AttentionMode::JointSpaceTime => forward_joint(state, weights, cfg, plan),
        AttentionMode::DividedSpaceTime => forward_divided(state, weights, cfg, plan),
    }
}

fn forward_joint(
    mut state: TokenState,
    weights: &ModelWeights,
    cfg: &ModelConfig,
    plan: &ReductionPlan,
) -> Result<ForwardOutput> {
    let mut counts = Vec::with_capacity(cfg.layers);
    for layer in 0..cfg.layers {
        let p = format!("blocks.{layer}");
        let all = [0..state.len()];
        let (delta, qkv) = attention_delta(
            &state.features,
            &state.sizes,
            &all,
            weights,
            cfg,
            &format!("{p}.norm1"),
            &format!("{p}.attn"),
        )?;
        state.features.add_assign(&delta)?;
        if plan.r_per_layer[layer] > 0 {
            let keys = head_mean_keys(&qkv, cfg.heads)?;
            state = reduce_layer(&state, &keys, plan, layer)?;
        }
        mlp_residual(&mut state.features, weights, layer)?;
        check_layer(&state.features, layer)?;
        counts.push(state.len());
    }
    let logits = classify(&state, weights, cfg)?;
    Ok(ForwardOutput {
        logits,
        final_state: state,
        per_layer_counts: counts,
        per_frame_counts: Vec::new(),
    })
}

/// Divided-mode sequence: optional class token plus one state per frame.
/// All frames always hold the same number of tokens.
pub(crate) struct FrameSplit {
    pub cls: Option<TokenState>,
    pub frames: Vec<TokenState>,
}

impl FrameSplit {
    pub fn split(state: &TokenState, cfg: &ModelConfig) -> Result<Self> {
        let c = cfg.protected_count();
        let per = cfg.tokens_per_slot();
        let take = |range: Range<usize>, protected: &[usize]| -> Result<TokenState> {
            let rows: Vec<usize> = range.clone().collect();
            let features = state.features.select_rows(&rows);
            let origins = state.trace[range].iter().map(|t| t[0]).collect();
            TokenState::with_origins(features, origins, protected)
        };
        Ok(Self {
            cls: if c == 1 { Some(take(0..1, &[0])?) } else { None },
            frames: (0..cfg.frames)
                .map(|f| take(c + f * per..c + (f + 1) * per, &[]))
                .collect::<Result<_>>()?,
        })
    }

    pub fn join(&self) -> Result<TokenState> {
        let mut parts = Vec::with_capacity(self.frames.len() + 1);
        parts.extend(self.cls.iter().cloned());
        parts.extend(self.frames.iter().cloned());
        TokenState::concat(&parts)
    }

    pub fn per_frame(&self) -> usize {
        self.frames[0].len()
    }
}

fn forward_divided(
    state: TokenState,
    weights: &ModelWeights,
    cfg: &ModelConfig,
    plan: &ReductionPlan,
) -> Result<ForwardOutput> {
    let d = cfg.embed_dim;
    let nf = cfg.frames;
    let mut seq = FrameSplit::split(&state, cfg)?;
    let mut counts = Vec::with_capacity(cfg.layers);
    let mut frame_counts = Vec::with_capacity(cfg.layers);

    for layer in 0..cfg.layers {
        let p = format!("blocks.{layer}");
        let s = seq.per_frame();

        // Temporal attention: position j of every frame forms one group.
        let mut rows = Vec::with_capacity(s * nf * d);
        let mut sizes = Vec::with_capacity(s * nf);
        for j in 0..s {
            for fr in &seq.frames {
                rows.extend_from_slice(fr.features.row(j));
                sizes.push(fr.sizes[j]);
            }
        }
        let xt = Tensor::new(vec![s * nf, d], rows)?;
        let groups: Vec<_> = (0..s).map(|j| j * nf..(j + 1) * nf).collect();
        let (delta, _) = attention_delta(
            &xt,
            &sizes,
            &groups,
            weights,
            cfg,
            &format!("{p}.temporal_norm"),
            &format!("{p}.temporal_attn"),
        )?;
        for j in 0..s {
            for (f, fr) in seq.frames.iter_mut().enumerate() {
                add_row(fr.features.row_mut(j), delta.row(j * nf + f));
            }
        }

        // Spatial attention: each frame (with the class token prepended)
        // is one group.
        let c = usize::from(seq.cls.is_some());
        let group_len = c + s;
        let mut rows = Vec::with_capacity(nf * group_len * d);
        let mut sizes = Vec::with_capacity(nf * group_len);
        for fr in &seq.frames {
            if let Some(cls) = &seq.cls {
                rows.extend_from_slice(cls.features.data());
                sizes.push(1);
            }
            rows.extend_from_slice(fr.features.data());
            sizes.extend_from_slice(&fr.sizes);
        }
        let xs = Tensor::new(vec![nf * group_len, d], rows)?;
        let groups: Vec<_> = (0..nf).map(|f| f * group_len..(f + 1) * group_len).collect();
        let (delta, qkv) = attention_delta(
            &xs,
            &sizes,
            &groups,
            weights,
            cfg,
            &format!("{p}.norm1"),
            &format!("{p}.attn"),
        )?;
        let keys = if plan.r_per_layer[layer] > 0 {
            Some(head_mean_keys(&qkv, cfg.heads)?)
        } else {
            None
        };
        if let Some(cls) = &mut seq.cls {
            let mut mean = vec![0.0f64; d];
            for f in 0..nf {
                for (m, &v) in mean.iter_mut().zip(delta.row(f * group_len)) {
                    *m += v as f64;
                }
            }
            for (x, m) in cls.features.data_mut().iter_mut().zip(mean) {
                *x += (m / nf as f64) as f32;
            }
        }
        for (f, fr) in seq.frames.iter_mut().enumerate() {
            for j in 0..s {
                add_row(fr.features.row_mut(j), delta.row(f * group_len + c + j));
            }
        }

        if let Some(keys) = keys {
            for (f, fr) in seq.frames.iter_mut().enumerate() {
                let rows: Vec<usize> = (f * group_len + c..(f + 1) * group_len).collect();
                *fr = reduce_layer_in_frame(fr, &keys.select_rows(&rows), plan, layer, f)?;
            }
        }

        let mut joined = seq.join()?;
        mlp_residual(&mut joined.features, weights, layer)?;
        check_layer(&joined.features, layer)?;
        let s_next = seq.per_frame();
        for (i, fr) in seq.cls.iter_mut().chain(seq.frames.iter_mut()).enumerate() {
            let start = if i == 0 && c == 1 { 0 } else { c + (i - c) * s_next };
            let len = fr.len();
            fr.features
                .data_mut()
                .copy_from_slice(&joined.features.data()[start * d..(start + len) * d]);
        }
        counts.push(joined.len());
        frame_counts.push(seq.frames.iter().map(TokenState::len).collect());
    }

    let final_state = seq.join()?;
    let logits = classify(&final_state, weights, cfg)?;
    Ok(ForwardOutput {
        logits,
        final_state,
        per_layer_counts: counts,
        per_frame_counts: frame_counts,
    })
}
