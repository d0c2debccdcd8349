//! Line-oriented run records and sweep CSVs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::analysis::bench::BenchResult;
use crate::analysis::flops::FlopReport;
use crate::error::{Error, Result};
use crate::merging::ReductionPlan;

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// `key=value` lines for one benchmarked plan.
pub fn format_results(bench: &BenchResult, flops: &FlopReport, plan: &ReductionPlan) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("config_hash", bench.config_hash.clone());
    kv("strategy", plan.strategy.to_string());
    kv("r_per_layer", join(&plan.r_per_layer));
    kv("seed", plan.rng_seed.to_string());
    kv("wall_seconds", format!("{:.6}", bench.wall_seconds));
    kv("clips_per_second", format!("{:.6}", bench.clips_per_second));
    kv("fps", format!("{:.6}", bench.frames_per_second));
    kv("speedup", format!("{:.6}", bench.measured_speedup));
    kv("predicted_speedup", format!("{:.6}", flops.predicted_speedup));
    kv("flops", flops.total.to_string());
    kv("flops_with_merge", flops.total_with_merge.to_string());
    kv("baseline_flops", flops.baseline_total.to_string());
    kv("per_layer_counts", join(&bench.per_layer_counts));
    s
}

/// Parses `key=value` lines back into pairs, skipping blank lines.
pub fn parse_results(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Bench(format!("malformed results line {l:?}")))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub r_fraction: f64,
    pub predicted_speedup: f64,
    pub measured_speedup: f64,
}

pub fn format_sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("r_fraction,predicted_speedup,measured_speedup\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:.6},{:.6},{:.6}",
            r.r_fraction, r.predicted_speedup, r.measured_speedup
        );
    }
    s
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::flops::count_flops;
    use crate::merging::Strategy;
    use crate::transformer::ModelConfig;

    #[test]
    fn results_round_trip() {
        let cfg = ModelConfig::vivit_like();
        let plan = ReductionPlan::new(vec![300; 12], Strategy::Merge);
        let bench = BenchResult {
            clips_per_second: 0.5,
            frames_per_second: 16.0,
            wall_seconds: 2.0,
            measured_speedup: 2.5,
            config_hash: "abcd".into(),
            model_hash: "ef01".into(),
            samples: vec![2.0; 3],
            per_layer_counts: vec![2837, 2537],
        };
        let text = format_results(&bench, &count_flops(&cfg, &plan), &plan);
        let kv = parse_results(&text).unwrap();
        let get = |k: &str| kv.iter().find(|(a, _)| a == k).unwrap().1.clone();
        assert_eq!(get("config_hash"), "abcd");
        assert_eq!(get("fps"), "16.000000");
        assert_eq!(get("per_layer_counts"), "2837,2537");
        assert!(parse_results("nonsense").is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let csv = format_sweep_csv(&[SweepRow {
            r_fraction: 0.0,
            predicted_speedup: 1.0,
            measured_speedup: 1.0,
        }]);
        assert_eq!(
            csv,
            "r_fraction,predicted_speedup,measured_speedup\n0.000000,1.000000,1.000000\n"
        );
    }
}
