//! Token reduction: bipartite soft matching over attention keys,
//! size-weighted merging, merge schedules, and the drop/random baselines.

mod matching;
mod plan;
mod reduce;
mod state;

pub use matching::{bipartite_soft_match, edge_order, partition_alternating, BipartiteMatch, Edge};
pub use plan::{
    build_schedule, effective_r, token_count_trajectory, ReductionPlan, ScheduleKind, Strategy,
};
pub use reduce::{plan_rng, reduce_layer, reduce_layer_in_frame, reduce_tokens};
pub use state::TokenState;
