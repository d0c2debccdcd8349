//! Video transformer inference with training-free spatio-temporal token
//! merging.

pub mod analysis;
pub mod error;
pub mod io;
pub mod merging;
pub mod tensor;
pub mod transformer;

pub use error::{Error, Result};
pub use merging::{ReductionPlan, ScheduleKind, Strategy, TokenState};
pub use tensor::Tensor;
pub use transformer::{forward, AttentionMode, ForwardOutput, ModelConfig, ModelWeights};
