//! Plain-text `key=value` pipeline configuration.
//!
//! One setting per line, `#` starts a comment, unknown and repeated keys
//! are errors. [`PipelineConfig::to_text`] writes every key, so the echo
//! heading each report is a complete, re-parseable config.

use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::eval::TopKRule;
use crate::geometry::{GeometryError, GripperModel};
use crate::head::HeadConfig;
use crate::matching::{SampleStrategy, DEFAULT_MATCH_RADIUS};
use crate::synth::{SceneConfig, SceneKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub scenes: usize,
    pub scene_kind: SceneKind,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Surface points per square meter.
    pub density: f64,
    pub n_views: usize,
    pub n_angles: usize,
    pub n_depths: usize,
    /// Spacing of the depth grid; depth `k` sits `k · depth_step` past the point.
    pub depth_step: f64,
    pub max_width: f64,
    pub friction_grid: Vec<f64>,
    pub threshold_mu: f64,
    pub match_radius: f64,
    /// Input points sampled per scene for matching, training and prediction.
    pub samples: usize,
    pub sample_strategy: SampleStrategy,
    pub feature_dim: usize,
    /// The first this-many scenes train the head; the rest are evaluated.
    pub train_scenes: usize,
    pub steps: usize,
    pub rate: f64,
    pub gradcheck_seeds: usize,
    pub topk_rule: TopKRule,
    pub output: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let g = GripperModel::default();
        Self {
            seed: 0,
            scenes: 20,
            scene_kind: SceneKind::Clutter,
            min_objects: 3,
            max_objects: 5,
            density: 20_000.0,
            n_views: 300,
            n_angles: g.angle_count,
            n_depths: g.depth_grid.len(),
            depth_step: g.depth_grid[0],
            max_width: g.max_width,
            friction_grid: g.friction_grid,
            threshold_mu: 0.8,
            match_radius: DEFAULT_MATCH_RADIUS,
            samples: 256,
            sample_strategy: SampleStrategy::FarthestPoint,
            feature_dim: 32,
            train_scenes: 8,
            steps: 100,
            rate: 1e-2,
            gradcheck_seeds: 20,
            topk_rule: TopKRule::Available,
            output: PathBuf::from("econgrasp-out"),
        }
    }
}

fn kind_name(k: SceneKind) -> &'static str {
    match k {
        SceneKind::Clutter => "clutter",
        SceneKind::Plates => "plates",
    }
}

pub fn parse_kind(s: &str) -> Result<SceneKind, String> {
    match s {
        "clutter" => Ok(SceneKind::Clutter),
        "plates" => Ok(SceneKind::Plates),
        _ => Err(format!("unknown scene kind `{s}`")),
    }
}

fn parse_real(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("`{s}` is not a finite number"))
}

fn parse_int<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| format!("`{s}`: {e}"))
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| parse_real(t.trim())).collect()
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "seed",
        "scenes",
        "scene_kind",
        "min_objects",
        "max_objects",
        "density",
        "n_views",
        "n_angles",
        "n_depths",
        "depth_step",
        "max_width",
        "friction_grid",
        "threshold_mu",
        "match_radius",
        "samples",
        "sample_strategy",
        "feature_dim",
        "train_scenes",
        "steps",
        "rate",
        "gradcheck_seeds",
        "topk_rule",
        "output",
    ];

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "seed" => self.seed = parse_int(value)?,
            "scenes" => self.scenes = parse_int(value)?,
            "scene_kind" => self.scene_kind = parse_kind(value)?,
            "min_objects" => self.min_objects = parse_int(value)?,
            "max_objects" => self.max_objects = parse_int(value)?,
            "density" => self.density = parse_real(value)?,
            "n_views" => self.n_views = parse_int(value)?,
            "n_angles" => self.n_angles = parse_int(value)?,
            "n_depths" => self.n_depths = parse_int(value)?,
            "depth_step" => self.depth_step = parse_real(value)?,
            "max_width" => self.max_width = parse_real(value)?,
            "friction_grid" => self.friction_grid = parse_list(value)?,
            "threshold_mu" => self.threshold_mu = parse_real(value)?,
            "match_radius" => self.match_radius = parse_real(value)?,
            "samples" => self.samples = parse_int(value)?,
            "sample_strategy" => self.sample_strategy = value.parse()?,
            "feature_dim" => self.feature_dim = parse_int(value)?,
            "train_scenes" => self.train_scenes = parse_int(value)?,
            "steps" => self.steps = parse_int(value)?,
            "rate" => self.rate = parse_real(value)?,
            "gradcheck_seeds" => self.gradcheck_seeds = parse_int(value)?,
            "topk_rule" => self.topk_rule = value.parse()?,
            "output" => {
                if value.is_empty() {
                    return Err("empty path".into());
                }
                self.output = PathBuf::from(value)
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Defaults overridden by the keys in `text`. The result is not
    /// validated.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| ConfigError::Parse { line, message };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, found `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value)
                .map_err(|m| err(format!("{key}: {m}")))?;
            seen.push(key.to_string());
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let grid: Vec<String> = self
            .friction_grid
            .iter()
            .map(|v| format!("{v:?}"))
            .collect();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").unwrap();
        kv("seed", self.seed.to_string());
        kv("scenes", self.scenes.to_string());
        kv("scene_kind", kind_name(self.scene_kind).into());
        kv("min_objects", self.min_objects.to_string());
        kv("max_objects", self.max_objects.to_string());
        kv("density", format!("{:?}", self.density));
        kv("n_views", self.n_views.to_string());
        kv("n_angles", self.n_angles.to_string());
        kv("n_depths", self.n_depths.to_string());
        kv("depth_step", format!("{:?}", self.depth_step));
        kv("max_width", format!("{:?}", self.max_width));
        kv("friction_grid", grid.join(","));
        kv("threshold_mu", format!("{:?}", self.threshold_mu));
        kv("match_radius", format!("{:?}", self.match_radius));
        kv("samples", self.samples.to_string());
        kv("sample_strategy", self.sample_strategy.to_string());
        kv("feature_dim", self.feature_dim.to_string());
        kv("train_scenes", self.train_scenes.to_string());
        kv("steps", self.steps.to_string());
        kv("rate", format!("{:?}", self.rate));
        kv("gradcheck_seeds", self.gradcheck_seeds.to_string());
        kv("topk_rule", self.topk_rule.to_string());
        kv("output", self.output.display().to_string());
        s
    }

    /// The config as `# key=value` comment lines.
    pub fn echo(&self) -> String {
        self.to_text().lines().map(|l| format!("# {l}\n")).collect()
    }

    pub fn gripper(&self) -> GripperModel {
        GripperModel {
            max_width: self.max_width,
            depth_grid: (1..=self.n_depths)
                .map(|k| k as f64 * self.depth_step)
                .collect(),
            angle_count: self.n_angles,
            friction_grid: self.friction_grid.clone(),
            ..GripperModel::default()
        }
    }

    pub fn scene_config(&self) -> SceneConfig {
        let base = match self.scene_kind {
            SceneKind::Clutter => SceneConfig::default(),
            SceneKind::Plates => SceneConfig::plates(),
        };
        SceneConfig {
            min_objects: self.min_objects,
            max_objects: self.max_objects,
            density: self.density,
            ..base
        }
    }

    pub fn head_config(&self) -> HeadConfig {
        HeadConfig {
            feature_dim: self.feature_dim,
            n_views: self.n_views,
            n_angles: self.n_angles,
            n_depths: self.n_depths,
            ..HeadConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.n_views == 0 {
            return bad("n_views must be positive".into());
        }
        if self.n_views > u32::MAX as usize {
            return bad("n_views does not fit the label header".into());
        }
        if self.n_depths > 255 || self.n_angles > 255 {
            return bad("n_angles and n_depths must fit a byte".into());
        }
        self.gripper()
            .validate()
            .or_else(|e: GeometryError| bad(e.to_string()))?;
        self.scene_config()
            .validate()
            .or_else(|e| bad(e.to_string()))?;
        self.head_config()
            .validate()
            .or_else(|e| bad(e.to_string()))?;
        if self.scenes == 0 {
            return bad("scenes must be positive".into());
        }
        if !(self.threshold_mu > 0.0) {
            return bad("threshold_mu must be positive".into());
        }
        if !(self.match_radius > 0.0) {
            return bad("match_radius must be positive".into());
        }
        if self.samples == 0 {
            return bad("samples must be positive".into());
        }
        if !(self.rate > 0.0) {
            return bad("rate must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let cfg = PipelineConfig {
            seed: 9,
            friction_grid: vec![0.2, 0.4],
            scene_kind: SceneKind::Plates,
            ..PipelineConfig::default()
        };
        let back = PipelineConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.to_text().lines().count(), PipelineConfig::KEYS.len());
    }

    #[test]
    fn bad_lines_are_located() {
        let e = PipelineConfig::parse("seed=1\n\nn_views=x\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 3, .. }));
        assert!(PipelineConfig::parse("seed=1\nseed=2").is_err());
        assert!(PipelineConfig::parse("nope=1").is_err());
        assert!(PipelineConfig::parse("seed").is_err());
    }

    #[test]
    fn zero_views_fail_validation() {
        let cfg = PipelineConfig::parse("n_views=0").unwrap();
        assert!(cfg.validate().is_err());
        assert!(PipelineConfig::default().validate().is_ok());
    }
}
