//! `key = value` run configs with `[model]`, `[plan]` and `[io]` sections.
//!
//! ```text
//! [model]
//! attention_mode = joint_space_time
//! layers = 12
//! ...
//! [plan]
//! strategy = merge
//! schedule = constant
//! r = 300
//! [io]
//! weights = weights.vwts
//! out_dir = out
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tokmerge::merging::build_schedule;
use tokmerge::{AttentionMode, ModelConfig, ReductionPlan, ScheduleKind, Strategy};

use crate::CliError;

const MODEL_KEYS: &[&str] = &[
    "attention_mode",
    "layers",
    "embed_dim",
    "heads",
    "mlp_ratio",
    "frames",
    "tubelet_t",
    "patch",
    "image_size",
    "has_class_token",
    "proportional_attention",
    "num_classes",
];
const PLAN_KEYS: &[&str] = &["strategy", "schedule", "r", "hybrid_threshold", "seed"];
const IO_KEYS: &[&str] = &["weights", "video_dir", "out_dir"];

#[derive(Clone, Debug)]
pub struct PlanConfig {
    pub strategy: Strategy,
    pub schedule: ScheduleKind,
    pub r: usize,
    pub seed: u64,
}

impl PlanConfig {
    pub fn plan(&self, layers: usize) -> ReductionPlan {
        self.plan_with_r(self.r, layers)
    }

    pub fn plan_with_r(&self, r: usize, layers: usize) -> ReductionPlan {
        ReductionPlan::new(build_schedule(self.schedule, r, layers), self.strategy).with_seed(self.seed)
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub plan: PlanConfig,
    pub weights: Option<PathBuf>,
    /// Absent means the synthetic clip.
    pub video_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

type Sections = BTreeMap<String, BTreeMap<String, (String, usize)>>;

fn parse_sections(text: &str) -> Result<Sections, CliError> {
    let mut sections = Sections::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !matches!(name, "model" | "plan" | "io") {
                return Err(CliError::User(format!("line {line_no}: unknown section [{name}]")));
            }
            sections.entry(name.to_string()).or_default();
            current = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::User(format!("line {line_no}: expected `key = value`")))?;
        let (key, value) = (key.trim(), value.trim());
        let section = current
            .as_ref()
            .ok_or_else(|| CliError::User(format!("line {line_no}: key {key:?} outside a section")))?;
        let allowed = match section.as_str() {
            "model" => MODEL_KEYS,
            "plan" => PLAN_KEYS,
            _ => IO_KEYS,
        };
        if !allowed.contains(&key) {
            return Err(CliError::User(format!("line {line_no}: unknown key {section}.{key}")));
        }
        let table = sections.get_mut(section).unwrap();
        if table.insert(key.to_string(), (value.to_string(), line_no)).is_some() {
            return Err(CliError::User(format!("line {line_no}: duplicate key {section}.{key}")));
        }
    }
    Ok(sections)
}

struct Table<'a> {
    name: &'a str,
    entries: Option<&'a BTreeMap<String, (String, usize)>>,
}

impl Table<'_> {
    fn raw(&self, key: &str) -> Option<&(String, usize)> {
        self.entries.and_then(|e| e.get(key))
    }

    fn optional<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|(v, line)| {
                v.parse().map_err(|e| {
                    CliError::User(format!("line {line}: bad value {v:?} for {}.{key}: {e}", self.name))
                })
            })
            .transpose()
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.optional(key)?
            .ok_or_else(|| CliError::User(format!("missing required key {}.{key}", self.name)))
    }
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let sections = parse_sections(text)?;
        let table = |name| Table {
            name,
            entries: sections.get(name),
        };
        let (m, p, io) = (table("model"), table("plan"), table("io"));

        let model = ModelConfig {
            attention_mode: m.required::<AttentionMode>("attention_mode")?,
            layers: m.required("layers")?,
            embed_dim: m.required("embed_dim")?,
            heads: m.required("heads")?,
            mlp_ratio: m.optional("mlp_ratio")?.unwrap_or(4.0),
            frames: m.required("frames")?,
            tubelet_t: m.required("tubelet_t")?,
            patch: m.required("patch")?,
            image_size: m.required("image_size")?,
            has_class_token: m.required("has_class_token")?,
            proportional_attention: m.required("proportional_attention")?,
            num_classes: m.required("num_classes")?,
        };
        model
            .validate()
            .map_err(|e| CliError::User(format!("[model]: {e}")))?;

        let tag: String = p.required("strategy")?;
        let threshold: Option<f64> = p.optional("hybrid_threshold")?;
        let strategy = Strategy::parse(&tag, threshold).map_err(|e| CliError::User(format!("plan.strategy: {e}")))?;
        let plan = PlanConfig {
            strategy,
            schedule: p.required("schedule")?,
            r: p.required("r")?,
            seed: p.optional("seed")?.unwrap_or(0),
        };

        let path = |key: &str| -> Result<Option<PathBuf>, CliError> {
            Ok(io.optional::<PathBuf>(key)?.map(|v| base_dir.join(v)))
        };
        Ok(Self {
            model,
            plan,
            weights: path("weights")?,
            video_dir: path("video_dir")?,
            out_dir: path("out_dir")?,
        })
    }

    /// The `io.weights` path; commands that touch weights require it.
    pub fn weights_path(&self) -> Result<&Path, CliError> {
        self.weights
            .as_deref()
            .ok_or_else(|| CliError::User("missing required key io.weights (weights file path)".into()))
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| CliError::User("missing required key io.out_dir".into()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::User(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "\
[model]
attention_mode = joint_space_time
layers = 2
embed_dim = 16
heads = 2
frames = 4
tubelet_t = 2
patch = 4
image_size = 16
has_class_token = true
proportional_attention = true
num_classes = 5

[plan]
strategy = hybrid
hybrid_threshold = 0.8   # merge above, drop below
schedule = decreasing
r = 6
seed = 3

[io]
weights = w.vwts
out_dir = out
";

    fn err(text: &str) -> String {
        match RunConfig::parse(text, Path::new("/cfg")) {
            Err(CliError::User(m)) => m,
            other => panic!("expected user error, got {other:?}"),
        }
    }

    #[test]
    fn parses_full_config() {
        let c = RunConfig::parse(FULL, Path::new("/cfg")).unwrap();
        assert_eq!(c.model.layers, 2);
        assert_eq!(c.model.mlp_ratio, 4.0);
        assert_eq!(c.plan.strategy, Strategy::Hybrid { threshold: 0.8 });
        assert_eq!(c.plan.plan(2).r_per_layer, vec![12, 0]);
        assert_eq!(c.plan.seed, 3);
        assert_eq!(c.weights_path().unwrap(), Path::new("/cfg/w.vwts"));
        assert_eq!(c.video_dir, None);
    }

    #[test]
    fn unknown_key_named() {
        let m = err(&FULL.replace("num_classes = 5", "num_classes = 5\ndepth = 3"));
        assert!(m.contains("model.depth"), "{m}");
    }

    #[test]
    fn missing_key_named() {
        let m = err(&FULL.replace("heads = 2\n", ""));
        assert!(m.contains("model.heads"), "{m}");
        let c = RunConfig::parse(&FULL.replace("weights = w.vwts\n", ""), Path::new("/")).unwrap();
        match c.weights_path() {
            Err(CliError::User(m)) => assert!(m.contains("weights"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values() {
        assert!(err(&FULL.replace("layers = 2", "layers = two")).contains("model.layers"));
        assert!(err(&FULL.replace("strategy = hybrid", "strategy = prune")).contains("strategy"));
        assert!(err(&FULL.replace("heads = 2", "heads = 3")).contains("divisible"));
        assert!(err(&FULL.replace("[io]", "[paths]")).contains("[paths]"));
        assert!(err(&FULL.replace("r = 6", "r = 6\nr = 7")).contains("duplicate"));
    }
}
