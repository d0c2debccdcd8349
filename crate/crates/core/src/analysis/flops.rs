//! Analytic FLOP model. One multiply-add counts as 2 FLOPs.
//!
//! Per joint layer with `S` tokens entering and `S'` leaving (reduction
//! happens between attention and MLP):
//!
//! - attention: `8·S·D²` (QKV and output projections) + `4·S²·D` (scores
//!   and weighted values)
//! - MLP: `4·S'·D·hidden`, i.e. `16·S'·D²` at the default ratio of 4
//! - merge: `2·|A|·|B|·d` for the key similarities, `d = D / heads`
//!
//! Divided layers sum temporal attention over `s` sequences of `F` tokens,
//! spatial attention over `F` sequences of `s` tokens (plus the class
//! token), and the MLP over every token. Patch embedding and the classifier
//! head are constant in the plan and left out.
//!
//! `total` counts attention and MLP only; the matching cost is reported per
//! layer and in `total_with_merge`, since including it would make a plan
//! with `r = 1` cost more than no reduction at all.

use crate::merging::{effective_r, token_count_trajectory, ReductionPlan, Strategy};
use crate::transformer::{AttentionMode, ModelConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LayerFlops {
    pub attention: u64,
    pub mlp: u64,
    pub merge: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlopReport {
    pub per_layer: Vec<LayerFlops>,
    pub total: u64,
    pub total_with_merge: u64,
    pub baseline_total: u64,
    pub predicted_speedup: f64,
}

fn uses_similarity(strategy: Strategy) -> bool {
    matches!(
        strategy,
        Strategy::Merge | Strategy::Drop | Strategy::Hybrid { .. }
    )
}

/// `2·|A|·|B|·d` for `free` unprotected tokens, or 0 when nothing merges.
fn merge_cost(free: usize, requested: usize, head_dim: u64, strategy: Strategy) -> u64 {
    if !uses_similarity(strategy) || effective_r(requested, free) == 0 {
        return 0;
    }
    let a = free.div_ceil(2) as u64;
    let b = (free / 2) as u64;
    2 * a * b * head_dim
}

fn layer_costs(cfg: &ModelConfig, plan: &ReductionPlan) -> Vec<LayerFlops> {
    let d = cfg.embed_dim as u64;
    let hidden = cfg.mlp_hidden() as u64;
    let hd = cfg.head_dim() as u64;
    let c = cfg.protected_count();
    match cfg.attention_mode {
        AttentionMode::JointSpaceTime => {
            let traj = token_count_trajectory(cfg.initial_tokens(), c, &plan.r_per_layer);
            (0..plan.layers())
                .map(|i| {
                    let (s, s_next) = (traj[i] as u64, traj[i + 1] as u64);
                    LayerFlops {
                        attention: 8 * s * d * d + 4 * s * s * d,
                        mlp: 4 * s_next * d * hidden,
                        merge: merge_cost(traj[i] - c, plan.r_per_layer[i], hd, plan.strategy),
                    }
                })
                .collect()
        }
        AttentionMode::DividedSpaceTime => {
            let f = cfg.frames as u64;
            let cu = c as u64;
            let traj = token_count_trajectory(cfg.tokens_per_slot(), 0, &plan.r_per_layer);
            (0..plan.layers())
                .map(|i| {
                    let (s, s_next) = (traj[i] as u64, traj[i + 1] as u64);
                    let temporal = 8 * f * s * d * d + 4 * s * f * f * d;
                    let spatial = 8 * f * (s + cu) * d * d + 4 * f * (s + cu) * (s + cu) * d;
                    LayerFlops {
                        attention: temporal + spatial,
                        mlp: 4 * (f * s_next + cu) * d * hidden,
                        merge: f * merge_cost(traj[i], plan.r_per_layer[i], hd, plan.strategy),
                    }
                })
                .collect()
        }
    }
}

pub fn count_flops(cfg: &ModelConfig, plan: &ReductionPlan) -> FlopReport {
    let per_layer = layer_costs(cfg, plan);
    let baseline = layer_costs(cfg, &ReductionPlan::none(plan.layers()));
    let total: u64 = per_layer.iter().map(|l| l.attention + l.mlp).sum();
    let total_with_merge = total + per_layer.iter().map(|l| l.merge).sum::<u64>();
    let baseline_total: u64 = baseline.iter().map(|l| l.attention + l.mlp).sum();
    FlopReport {
        per_layer,
        total,
        total_with_merge,
        baseline_total,
        predicted_speedup: baseline_total as f64 / total as f64,
    }
}
