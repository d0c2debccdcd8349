//! FLOP accounting, benchmarking, cluster visualization and the layer probe.

mod bench;
mod flops;
mod probe;
mod results;
mod viz;

pub use bench::{config_hash, model_hash, run_benchmark, synthetic_video, BenchResult};
pub use flops::{count_flops, FlopReport, LayerFlops};
pub use probe::layer_probe;
pub use results::{format_results, format_sweep_csv, parse_results, write_text, SweepRow};
pub use viz::{palette_color, patch_assignment, render_cluster_frames, render_clusters};
