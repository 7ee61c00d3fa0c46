//! Pipeline settings, read from `key = value` files.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::labeling::ManeuverConfig;
use crate::matching::{EmissionModel, TransitionWeights, DEFAULT_CANDIDATE_RADIUS};
use crate::raster::RenderConfig;
use crate::smoothing::SmootherConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: {message}")]
    BadValue {
        key: String,
        value: String,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub smoother: SmootherConfig,
    pub emission: EmissionModel,
    pub weights: TransitionWeights,
    /// Candidate search radius around each sample (m).
    pub radius: f64,
    pub maneuver: ManeuverConfig,
    pub render: RenderConfig,
    /// Neighbour count for the k-NN baseline.
    pub k: usize,
    /// Worker threads; 0 uses one per core.
    pub workers: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            smoother: SmootherConfig::default(),
            emission: EmissionModel::default(),
            weights: TransitionWeights::default(),
            radius: DEFAULT_CANDIDATE_RADIUS,
            maneuver: ManeuverConfig::default(),
            render: RenderConfig::default(),
            k: 9,
            workers: 0,
            seed: 0,
        }
    }
}

/// Every recognised key, in file order.
pub const KEYS: [&str; 20] = [
    "smoother.sigma_jerk",
    "smoother.sigma_meas",
    "emission.sigma",
    "transition.successor",
    "transition.predecessor",
    "transition.neighbor",
    "transition.self",
    "transition.alpha",
    "candidate_radius",
    "maneuver.offset_threshold",
    "maneuver.stable_samples",
    "maneuver.clip_seconds",
    "maneuver.fallback_seconds",
    "render.grid",
    "render.extent",
    "render.offsets",
    "render.max_augment_deg",
    "knn.k",
    "workers",
    "seed",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        message: e.to_string(),
    })
}

impl PipelineConfig {
    /// Sets one key; values are not range-checked until [`validate`](Self::validate).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "smoother.sigma_jerk" => self.smoother.sigma_jerk = parse(key, v)?,
            "smoother.sigma_meas" => self.smoother.sigma_meas = parse(key, v)?,
            "emission.sigma" => self.emission.sigma = parse(key, v)?,
            "transition.successor" => self.weights.successor = parse(key, v)?,
            "transition.predecessor" => self.weights.predecessor = parse(key, v)?,
            "transition.neighbor" => self.weights.neighbor = parse(key, v)?,
            "transition.self" => self.weights.self_loop = parse(key, v)?,
            "transition.alpha" => self.weights.alpha = parse(key, v)?,
            "candidate_radius" => self.radius = parse(key, v)?,
            "maneuver.offset_threshold" => self.maneuver.offset_threshold = parse(key, v)?,
            "maneuver.stable_samples" => self.maneuver.stable_samples = parse(key, v)?,
            "maneuver.clip_seconds" => self.maneuver.clip_seconds = parse(key, v)?,
            "maneuver.fallback_seconds" => self.maneuver.fallback_seconds = parse(key, v)?,
            "render.grid" => self.render.grid = parse(key, v)?,
            "render.extent" => self.render.extent = parse(key, v)?,
            "render.offsets" => {
                self.render.offsets = v
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_, _>>()?
            }
            "render.max_augment_deg" => self.render.max_augment_deg = parse(key, v)?,
            "knn.k" => self.k = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            self.set(key.trim(), value)
                .map_err(|e| ConfigError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
        }
        Ok(())
    }

    pub fn from_str_validated(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_str(&text)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.smoother.validate().map_err(|e| invalid(&e))?;
        self.emission.validate().map_err(|e| invalid(&e))?;
        self.weights.validate().map_err(|e| invalid(&e))?;
        self.maneuver.validate().map_err(|e| invalid(&e))?;
        self.render.validate().map_err(|e| invalid(&e))?;
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "candidate_radius must be > 0, got {}",
                self.radius
            )));
        }
        if self.k == 0 {
            return Err(ConfigError::Invalid("knn.k must be >= 1".into()));
        }
        Ok(())
    }

    /// Serialises every key; the output parses back to an equal config.
    pub fn to_text(&self) -> String {
        let offsets: Vec<String> = self.render.offsets.iter().map(|o| o.to_string()).collect();
        let values = [
            self.smoother.sigma_jerk.to_string(),
            self.smoother.sigma_meas.to_string(),
            self.emission.sigma.to_string(),
            self.weights.successor.to_string(),
            self.weights.predecessor.to_string(),
            self.weights.neighbor.to_string(),
            self.weights.self_loop.to_string(),
            self.weights.alpha.to_string(),
            self.radius.to_string(),
            self.maneuver.offset_threshold.to_string(),
            self.maneuver.stable_samples.to_string(),
            self.maneuver.clip_seconds.to_string(),
            self.maneuver.fallback_seconds.to_string(),
            self.render.grid.to_string(),
            self.render.extent.to_string(),
            offsets.join(", "),
            self.render.max_augment_deg.to_string(),
            self.k.to_string(),
            self.workers.to_string(),
            self.seed.to_string(),
        ];
        let mut s = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
