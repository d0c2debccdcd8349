//! Wall-clock throughput of the forward pass.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::merging::ReductionPlan;
use crate::tensor::Tensor;
use crate::transformer::{forward, ModelConfig, ModelWeights};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub clips_per_second: f64,
    pub frames_per_second: f64,
    /// Median over the timed iterations.
    pub wall_seconds: f64,
    /// Baseline median divided by ours.
    pub measured_speedup: f64,
    pub config_hash: String,
    /// Digest of the model config alone; a baseline must share it.
    pub model_hash: String,
    pub samples: Vec<f64>,
    pub per_layer_counts: Vec<usize>,
}

fn model_text(cfg: &ModelConfig) -> String {
    format!(
        "attention_mode={}\nlayers={}\nembed_dim={}\nheads={}\nmlp_ratio={:?}\nframes={}\n\
         tubelet_t={}\npatch={}\nimage_size={}\nhas_class_token={}\n\
         proportional_attention={}\nnum_classes={}\n",
        cfg.attention_mode,
        cfg.layers,
        cfg.embed_dim,
        cfg.heads,
        cfg.mlp_ratio,
        cfg.frames,
        cfg.tubelet_t,
        cfg.patch,
        cfg.image_size,
        cfg.has_class_token,
        cfg.proportional_attention,
        cfg.num_classes,
    )
}

fn plan_text(plan: &ReductionPlan) -> String {
    let r: Vec<String> = plan.r_per_layer.iter().map(ToString::to_string).collect();
    format!(
        "strategy={}\nr_per_layer={}\nseed={}\n",
        plan.strategy,
        r.join(","),
        plan.rng_seed
    )
}

fn digest(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

pub fn model_hash(cfg: &ModelConfig) -> String {
    digest(&model_text(cfg))
}

/// Digest of the canonical text of `cfg` and `plan`.
pub fn config_hash(cfg: &ModelConfig, plan: &ReductionPlan) -> String {
    digest(&(model_text(cfg) + &plan_text(plan)))
}

/// Deterministic `[F, H, W, 3]` clip: a smooth background with a few
/// colored rectangles drifting across frames, plus mild noise.
pub fn synthetic_video(cfg: &ModelConfig, seed: u64) -> Tensor {
    let (f, s) = (cfg.frames, cfg.image_size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boxes: Vec<([f32; 3], [f32; 4], [f32; 2])> = (0..4)
        .map(|_| {
            let color = [rng.gen(), rng.gen(), rng.gen()];
            let w = rng.gen_range(0.15..0.4f32);
            let h = rng.gen_range(0.15..0.4f32);
            let rect = [rng.gen_range(0.0..1.0 - w), rng.gen_range(0.0..1.0 - h), w, h];
            let vel = [rng.gen_range(-0.02..0.02f32), rng.gen_range(-0.02..0.02f32)];
            (color, rect, vel)
        })
        .collect();
    let mut data = Vec::with_capacity(f * s * s * 3);
    for t in 0..f {
        for y in 0..s {
            let fy = (y as f32 + 0.5) / s as f32;
            for x in 0..s {
                let fx = (x as f32 + 0.5) / s as f32;
                let mut px = [0.3 + 0.4 * fx, 0.3 + 0.4 * fy, 0.5];
                for (color, rect, vel) in &boxes {
                    let x0 = (rect[0] + vel[0] * t as f32).rem_euclid(1.0);
                    let y0 = (rect[1] + vel[1] * t as f32).rem_euclid(1.0);
                    if fx >= x0 && fx < x0 + rect[2] && fy >= y0 && fy < y0 + rect[3] {
                        px = *color;
                    }
                }
                for c in px {
                    data.push((c + rng.gen_range(-0.02..0.02f32)).clamp(0.0, 1.0));
                }
            }
        }
    }
    Tensor::new(vec![f, s, s, 3], data).expect("clip layout")
}

fn median(samples: &[f64]) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times `forward` on the synthetic clip: `warmup` untimed runs, then the
/// median of `iters` timed runs.
///
/// `measured_speedup` is taken against `baseline`, which must come from the
/// same model. Without a baseline an identity plan reports 1.0 and any other
/// plan first benchmarks the r=0 plan with the same settings.
pub fn run_benchmark(
    cfg: &ModelConfig,
    weights: &ModelWeights,
    plan: &ReductionPlan,
    warmup: usize,
    iters: usize,
    baseline: Option<&BenchResult>,
) -> Result<BenchResult> {
    if iters < 3 {
        return Err(Error::Bench(format!("iters must be at least 3, got {iters}")));
    }
    let hash = model_hash(cfg);
    if let Some(b) = baseline {
        if b.model_hash != hash {
            return Err(Error::Bench("baseline was recorded for a different model".into()));
        }
    }
    let video = synthetic_video(cfg, 0);
    let mut counts = Vec::new();
    for _ in 0..warmup {
        forward(&video, weights, cfg, plan)?;
    }
    let mut samples = Vec::with_capacity(iters);
    for _ in 0..iters {
        let start = Instant::now();
        let out = forward(&video, weights, cfg, plan)?;
        samples.push(start.elapsed().as_secs_f64());
        counts = out.per_layer_counts;
    }
    let wall = median(&samples);
    log::info!("bench {}: median {wall:.4}s over {iters}", config_hash(cfg, plan));

    let base_wall = match baseline {
        Some(b) => b.wall_seconds,
        None if plan.is_identity() => wall,
        None => {
            let none = ReductionPlan::none(plan.layers());
            run_benchmark(cfg, weights, &none, warmup, iters, None)?.wall_seconds
        }
    };
    let clips = 1.0 / wall;
    Ok(BenchResult {
        clips_per_second: clips,
        frames_per_second: clips * cfg.frames as f64,
        wall_seconds: wall,
        measured_speedup: base_wall / wall,
        config_hash: config_hash(cfg, plan),
        model_hash: hash,
        samples,
        per_layer_counts: counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merging::Strategy;
    use crate::transformer::init_synthetic_weights;

    fn tiny() -> ModelConfig {
        ModelConfig {
            layers: 2,
            embed_dim: 16,
            heads: 2,
            frames: 4,
            image_size: 16,
            patch: 4,
            num_classes: 5,
            ..ModelConfig::vivit_like()
        }
    }

    #[test]
    fn hash_depends_on_plan_and_model() {
        let cfg = tiny();
        let a = config_hash(&cfg, &ReductionPlan::none(2));
        assert_eq!(a, config_hash(&cfg, &ReductionPlan::none(2)));
        assert_eq!(a.len(), 16);
        assert_ne!(a, config_hash(&cfg, &ReductionPlan::new(vec![1, 1], Strategy::Merge)));
        assert_ne!(a, config_hash(&cfg, &ReductionPlan::none(2).with_seed(9)));
        let mut other = cfg.clone();
        other.heads = 4;
        assert_ne!(a, config_hash(&other, &ReductionPlan::none(2)));
    }

    #[test]
    fn synthetic_clip_is_deterministic() {
        let cfg = tiny();
        let v = synthetic_video(&cfg, 3);
        assert_eq!(v.dims(), &[4, 16, 16, 3]);
        assert_eq!(v, synthetic_video(&cfg, 3));
        assert_ne!(v, synthetic_video(&cfg, 4));
        assert!(v.data().iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn bench_fields() {
        let cfg = tiny();
        let w = init_synthetic_weights(&cfg, 1).unwrap();
        let base = run_benchmark(&cfg, &w, &ReductionPlan::none(2), 1, 3, None).unwrap();
        assert_eq!(base.measured_speedup, 1.0);
        assert_eq!(base.samples.len(), 3);
        assert!((base.frames_per_second - base.clips_per_second * 4.0).abs() < 1e-9);
        let plan = ReductionPlan::new(vec![8, 8], Strategy::Merge);
        let r = run_benchmark(&cfg, &w, &plan, 0, 3, Some(&base)).unwrap();
        assert_eq!(r.per_layer_counts, vec![25, 17]);
        assert!(r.measured_speedup > 0.0);
    }

    #[test]
    fn rejects_bad_requests() {
        let cfg = tiny();
        let w = init_synthetic_weights(&cfg, 1).unwrap();
        let plan = ReductionPlan::none(2);
        assert!(matches!(run_benchmark(&cfg, &w, &plan, 0, 2, None), Err(Error::Bench(_))));
        let mut base = run_benchmark(&cfg, &w, &plan, 0, 3, None).unwrap();
        base.model_hash = "other".into();
        assert!(matches!(run_benchmark(&cfg, &w, &plan, 0, 3, Some(&base)), Err(Error::Bench(_))));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
