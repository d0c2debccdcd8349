use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use tokmerge::analysis::{
    config_hash, count_flops, format_results, format_sweep_csv, layer_probe, render_clusters,
    run_benchmark, synthetic_video, write_text, BenchResult, SweepRow,
};
use tokmerge::io::{load_video_ppm, read_weights, write_tensor, write_weights};
use tokmerge::merging::token_count_trajectory;
use tokmerge::transformer::init_synthetic_weights;
use tokmerge::{forward, AttentionMode, ModelWeights, ReductionPlan, Tensor};

use crate::config::RunConfig;
use crate::CliError;

fn load_weights(cfg: &RunConfig) -> Result<ModelWeights, CliError> {
    let path = cfg.weights_path()?;
    read_weights(path, &cfg.model)
        .map_err(|e| CliError::User(format!("cannot load weights from {}: {e}", path.display())))
}

fn load_video(cfg: &RunConfig) -> Result<Tensor, CliError> {
    match &cfg.video_dir {
        Some(dir) => Ok(load_video_ppm(dir, &cfg.model)?),
        None => Ok(synthetic_video(&cfg.model, cfg.plan.seed)),
    }
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    let dir = cfg.out_dir()?;
    fs::create_dir_all(dir).map_err(|e| CliError::User(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Tokens one layer's `r` applies to: the whole patch sequence in joint
/// mode, a single frame in divided mode.
fn merge_unit(cfg: &RunConfig) -> usize {
    match cfg.model.attention_mode {
        AttentionMode::JointSpaceTime => cfg.model.patch_tokens(),
        AttentionMode::DividedSpaceTime => cfg.model.tokens_per_slot(),
    }
}

pub fn schedule(cfg: &RunConfig) -> Result<(), CliError> {
    let m = &cfg.model;
    let plan = cfg.plan.plan(m.layers);
    println!("r = {}", join(&plan.r_per_layer));
    match m.attention_mode {
        AttentionMode::JointSpaceTime => {
            let traj = token_count_trajectory(m.initial_tokens(), m.protected_count(), &plan.r_per_layer);
            println!("tokens = {}", join(&traj));
        }
        AttentionMode::DividedSpaceTime => {
            let traj = token_count_trajectory(m.tokens_per_slot(), 0, &plan.r_per_layer);
            println!("tokens_per_frame = {}", join(&traj));
        }
    }
    println!("predicted_speedup = {:.4}", count_flops(m, &plan).predicted_speedup);
    Ok(())
}

pub fn genweights(cfg: &RunConfig, seed: u64) -> Result<(), CliError> {
    let path = cfg.weights_path()?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::User(format!("cannot create {}: {e}", parent.display())))?;
    }
    let w = init_synthetic_weights(&cfg.model, seed)?;
    write_weights(path, &w)?;
    println!("wrote {} tensors to {}", w.len(), path.display());
    Ok(())
}

pub fn forward_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let weights = load_weights(cfg)?;
    let video = load_video(cfg)?;
    let plan = cfg.plan.plan(cfg.model.layers);
    let out = forward(&video, &weights, &cfg.model, &plan)?;
    let dir = out_dir(cfg)?;
    write_tensor(dir.join("logits.vten"), &out.logits)?;
    let top = out
        .logits
        .data()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut text = String::new();
    let _ = writeln!(text, "config_hash={}", config_hash(&cfg.model, &plan));
    let _ = writeln!(text, "per_layer_counts={}", join(&out.per_layer_counts).replace(' ', ""));
    let _ = writeln!(text, "top_class={top}");
    write_text(dir.join("forward.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn viz(cfg: &RunConfig) -> Result<(), CliError> {
    let weights = load_weights(cfg)?;
    let video = load_video(cfg)?;
    let out = forward(&video, &weights, &cfg.model, &cfg.plan.plan(cfg.model.layers))?;
    let paths = render_clusters(&out.final_state, &video, &cfg.model, out_dir(cfg)?)?;
    println!("tokens = {}", out.final_state.len());
    println!("frames = {}", paths.len());
    Ok(())
}

pub fn probe(cfg: &RunConfig, layer: usize) -> Result<(), CliError> {
    let weights = load_weights(cfg)?;
    let video = load_video(cfg)?;
    let plan = cfg.plan.plan(cfg.model.layers);
    let state = layer_probe(&cfg.model, &weights, &plan, layer, &video)?;
    let paths = render_clusters(&state, &video, &cfg.model, out_dir(cfg)?)?;
    println!("probe_layer = {layer}");
    println!("tokens = {}", state.len());
    println!("frames = {}", paths.len());
    Ok(())
}

pub struct BenchArgs {
    pub iters: usize,
    pub warmup: usize,
    pub sweep: Option<Vec<usize>>,
    /// Run sweep points concurrently on up to this many threads.
    pub parallel: Option<usize>,
}

pub fn bench(cfg: &RunConfig, args: &BenchArgs) -> Result<(), CliError> {
    let weights = load_weights(cfg)?;
    let dir = out_dir(cfg)?;
    let m = &cfg.model;
    let points = args.sweep.clone().unwrap_or_else(|| vec![cfg.plan.r]);
    let plans: Vec<ReductionPlan> = points.iter().map(|&r| cfg.plan.plan_with_r(r, m.layers)).collect();

    let baseline = run_benchmark(m, &weights, &ReductionPlan::none(m.layers), args.warmup, args.iters, None)?;
    let run = |plan: &ReductionPlan| -> Result<BenchResult, CliError> {
        Ok(run_benchmark(m, &weights, plan, args.warmup, args.iters, Some(&baseline))?)
    };
    let results: Vec<BenchResult> = match args.parallel {
        Some(threads) if threads > 1 => {
            let chunk = plans.len().div_ceil(threads);
            std::thread::scope(|s| {
                let handles: Vec<_> = plans
                    .chunks(chunk.max(1))
                    .map(|part| s.spawn(move || part.iter().map(run).collect::<Vec<_>>()))
                    .collect();
                handles
                    .into_iter()
                    .flat_map(|h| h.join().expect("bench worker panicked"))
                    .collect::<Result<_, _>>()
            })?
        }
        _ => plans.iter().map(run).collect::<Result<_, _>>()?,
    };

    let unit = merge_unit(cfg) as f64;
    let mut rows = Vec::with_capacity(plans.len());
    for ((r, plan), res) in points.iter().zip(&plans).zip(&results) {
        let flops = count_flops(m, plan);
        write_text(dir.join(format!("bench_r{r}.txt")), &format_results(res, &flops, plan))?;
        println!(
            "r={r} fps={:.3} speedup={:.3} predicted={:.3}",
            res.frames_per_second, res.measured_speedup, flops.predicted_speedup
        );
        rows.push(SweepRow {
            r_fraction: *r as f64 / unit,
            predicted_speedup: flops.predicted_speedup,
            measured_speedup: res.measured_speedup,
        });
    }
    write_text(dir.join("sweep.csv"), &format_sweep_csv(&rows))?;
    Ok(())
}
