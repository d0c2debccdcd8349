use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How a layer spends its token budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Strategy {
    /// Bipartite soft matching, size-weighted merge.
    Merge,
    /// Same matching, but the A endpoint of each kept edge is deleted.
    Drop,
    RandomDrop,
    /// Random disjoint pairs from the alternating partition, merged.
    RandomMerge,
    /// Merge kept edges with similarity ≥ `threshold`, drop the rest.
    Hybrid { threshold: f64 },
}

impl Strategy {
    pub fn tag(&self) -> &'static str {
        match self {
            Strategy::Merge => "merge",
            Strategy::Drop => "drop",
            Strategy::RandomDrop => "random_drop",
            Strategy::RandomMerge => "random_merge",
            Strategy::Hybrid { .. } => "hybrid",
        }
    }

    /// Parses a strategy tag; `hybrid` needs `threshold`.
    pub fn parse(tag: &str, threshold: Option<f64>) -> Result<Self> {
        Ok(match tag {
            "merge" => Strategy::Merge,
            "drop" => Strategy::Drop,
            "random_drop" => Strategy::RandomDrop,
            "random_merge" => Strategy::RandomMerge,
            "hybrid" => Strategy::Hybrid {
                threshold: threshold
                    .ok_or_else(|| Error::Plan("hybrid strategy needs hybrid_threshold".into()))?,
            },
            other => return Err(Error::UnknownStrategy(other.to_string())),
        })
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Hybrid { threshold } => write!(f, "hybrid(t={threshold})"),
            s => f.write_str(s.tag()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionPlan {
    pub r_per_layer: Vec<usize>,
    pub strategy: Strategy,
    pub rng_seed: u64,
}

impl ReductionPlan {
    pub fn new(r_per_layer: Vec<usize>, strategy: Strategy) -> Self {
        Self {
            r_per_layer,
            strategy,
            rng_seed: 0,
        }
    }

    pub fn none(layers: usize) -> Self {
        Self::new(vec![0; layers], Strategy::Merge)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn layers(&self) -> usize {
        self.r_per_layer.len()
    }

    pub fn is_identity(&self) -> bool {
        self.r_per_layer.iter().all(|&r| r == 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    /// `2r` at the first layer down to 0 at the last.
    Decreasing,
    /// 0 at the first layer up to `2r` at the last.
    Increasing,
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ScheduleKind::Constant),
            "decreasing" => Ok(ScheduleKind::Decreasing),
            "increasing" => Ok(ScheduleKind::Increasing),
            other => Err(Error::Plan(format!("unknown schedule {other:?}"))),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::Decreasing => "decreasing",
            ScheduleKind::Increasing => "increasing",
        })
    }
}

/// `round(num / den)` for non-negative integers, halves rounded up (away
/// from zero).
fn div_round_half_away(num: usize, den: usize) -> usize {
    (2 * num + den) / (2 * den)
}

/// Per-layer merge counts, linearly interpolated for the ramped kinds.
pub fn build_schedule(kind: ScheduleKind, r: usize, layers: usize) -> Vec<usize> {
    if layers <= 1 || kind == ScheduleKind::Constant {
        return vec![r; layers];
    }
    let span = layers - 1;
    (0..layers)
        .map(|i| {
            let step = match kind {
                ScheduleKind::Decreasing => span - i,
                _ => i,
            };
            div_round_half_away(2 * r * step, span)
        })
        .collect()
}

/// Merge count actually applied to a sequence with `free` unprotected tokens.
pub fn effective_r(requested: usize, free: usize) -> usize {
    requested.min(free / 2)
}

/// Token counts `[S0, S1, ..., SL]` under the clamped recurrence
/// `S_{i+1} = S_i - min(r_i, ⌊(S_i - protected) / 2⌋)`.
pub fn token_count_trajectory(s0: usize, protected: usize, r_per_layer: &[usize]) -> Vec<usize> {
    let mut counts = Vec::with_capacity(r_per_layer.len() + 1);
    let mut s = s0;
    counts.push(s);
    for &r in r_per_layer {
        s -= effective_r(r, s.saturating_sub(protected));
        counts.push(s);
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    #[test]
    fn schedule_examples() {
        assert_eq!(build_schedule(ScheduleKind::Constant, 150, 12), vec![150; 12]);
        let dec = build_schedule(ScheduleKind::Decreasing, 10, 4);
        assert_eq!(dec, vec![20, 13, 7, 0]);
        assert_eq!(dec.iter().sum::<usize>(), 40);
        assert_eq!(build_schedule(ScheduleKind::Increasing, 10, 4), vec![0, 7, 13, 20]);
        for kind in [ScheduleKind::Constant, ScheduleKind::Decreasing, ScheduleKind::Increasing] {
            assert_eq!(build_schedule(kind, 9, 1), vec![9]);
        }
    }

    #[test]
    fn half_rounds_away_from_zero() {
        // 2·1·1/2 = 1 exactly; 2·5·1/4 = 2.5 rounds to 3 in both directions.
        assert_eq!(build_schedule(ScheduleKind::Increasing, 5, 5), vec![0, 3, 5, 8, 10]);
        assert_eq!(build_schedule(ScheduleKind::Decreasing, 5, 5), vec![10, 8, 5, 3, 0]);
    }

    #[test]
    fn trajectory_examples() {
        let t = token_count_trajectory(1568, 0, &[150; 12]);
        assert_eq!(
            &t[1..],
            &[1418, 1268, 1118, 968, 818, 668, 518, 368, 218, 109, 55, 28]
        );
        assert_eq!(token_count_trajectory(100, 0, &[0; 5]), vec![100; 6]);
        assert_eq!(token_count_trajectory(3137, 1, &[300; 12])[1], 2837);
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!(Strategy::parse("drop", None).unwrap(), Strategy::Drop);
        assert_eq!(
            Strategy::parse("hybrid", Some(0.4)).unwrap(),
            Strategy::Hybrid { threshold: 0.4 }
        );
        assert!(matches!(Strategy::parse("hybrid", None), Err(Error::Plan(_))));
        assert!(matches!(Strategy::parse("prune", None), Err(Error::UnknownStrategy(_))));
    }

    proptest! {
        #[test]
        fn schedule_sums_within_rounding_slack(r in 0usize..500, layers in 2usize..30) {
            for kind in [ScheduleKind::Constant, ScheduleKind::Decreasing, ScheduleKind::Increasing] {
                let sum = build_schedule(kind, r, layers).iter().sum::<usize>() as f64;
                prop_assert!((sum - (r * layers) as f64).abs() <= layers as f64 / 2.0);
            }
        }

        #[test]
        fn ramps_mirror_each_other(r in 0usize..500, layers in 1usize..30) {
            let mut inc = build_schedule(ScheduleKind::Increasing, r, layers);
            inc.reverse();
            prop_assert_eq!(inc, build_schedule(ScheduleKind::Decreasing, r, layers));
        }
    }
}
