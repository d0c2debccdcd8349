use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::merging::matching::{bipartite_soft_match, partition_alternating};
use crate::merging::plan::{effective_r, ReductionPlan, Strategy};
use crate::merging::state::TokenState;
use crate::tensor::Tensor;

/// Generator for the random baselines: ChaCha8 seeded with the plan seed,
/// one stream per `(layer, frame)` so every layer and frame replays
/// independently of how many draws the others made.
pub fn plan_rng(seed: u64, layer: usize, frame: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((layer as u64) << 32) | frame as u64);
    rng
}

/// Applies `plan` at `layer` to a whole sequence.
pub fn reduce_layer(
    state: &TokenState,
    keys: &Tensor,
    plan: &ReductionPlan,
    layer: usize,
) -> Result<TokenState> {
    reduce_layer_in_frame(state, keys, plan, layer, 0)
}

/// Applies `plan` at `layer` to one frame's token set.
pub fn reduce_layer_in_frame(
    state: &TokenState,
    keys: &Tensor,
    plan: &ReductionPlan,
    layer: usize,
    frame: usize,
) -> Result<TokenState> {
    let requested = *plan.r_per_layer.get(layer).ok_or_else(|| {
        Error::Plan(format!(
            "layer {layer} outside a {}-layer plan",
            plan.layers()
        ))
    })?;
    let mut rng = plan_rng(plan.rng_seed, layer, frame);
    reduce_tokens(state, keys, plan.strategy, requested, &mut rng)
}

/// Removes up to `requested` tokens from `state` using `strategy`.
///
/// `requested` is clamped to half the unprotected token count.
pub fn reduce_tokens(
    state: &TokenState,
    keys: &Tensor,
    strategy: Strategy,
    requested: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TokenState> {
    let (key_rows, _) = keys.matrix_dims()?;
    if key_rows != state.len() {
        return Err(Error::Shape(format!(
            "{key_rows} keys for {} tokens",
            state.len()
        )));
    }
    let free = state.len() - state.protected_count();
    let r = effective_r(requested, free);
    if r < requested {
        log::warn!("clamping r from {requested} to {r} ({free} unprotected tokens)");
    }
    if r == 0 {
        return Ok(state.clone());
    }

    let (a, b) = partition_alternating(state);
    let out = match strategy {
        Strategy::Merge => {
            let m = bipartite_soft_match(keys, &a, &b, r)?;
            let merges: Vec<_> = m.selected.iter().map(|e| (e.src, e.dst)).collect();
            state.merge_and_drop(&merges, &[])
        }
        Strategy::Drop => {
            let m = bipartite_soft_match(keys, &a, &b, r)?;
            let drops: Vec<_> = m.selected.iter().map(|e| e.src).collect();
            state.merge_and_drop(&[], &drops)
        }
        Strategy::Hybrid { threshold } => {
            let m = bipartite_soft_match(keys, &a, &b, r)?;
            let (mut merges, mut drops) = (Vec::new(), Vec::new());
            for e in &m.selected {
                if e.score >= threshold {
                    merges.push((e.src, e.dst));
                } else {
                    drops.push(e.src);
                }
            }
            state.merge_and_drop(&merges, &drops)
        }
        Strategy::RandomDrop => {
            let candidates = state.unprotected_indices();
            let drops: Vec<_> = sample(rng, candidates.len(), r)
                .into_iter()
                .map(|i| candidates[i])
                .collect();
            state.merge_and_drop(&[], &drops)
        }
        Strategy::RandomMerge => {
            let srcs = sample(rng, a.len(), r);
            let dsts = sample(rng, b.len(), r);
            let merges: Vec<_> = srcs
                .into_iter()
                .zip(dsts)
                .map(|(i, j)| (a[i], b[j]))
                .collect();
            state.merge_and_drop(&merges, &[])
        }
    };
    Ok(out)
}
