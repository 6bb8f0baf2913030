//! Node configuration file: flat `key = value` lines with dotted keys.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are an
//! error. See the README for the full key list.

use std::path::{Path, PathBuf};
use std::time::Duration;

use heatwatch_core::detect::QuadrantSet;
use heatwatch_core::zones::{MotionAction, SafetyConfig, ZonePolicy};
use heatwatch_core::DetectorConfig;
use thiserror::Error;

/// Four frames a second.
pub const DEFAULT_FPS: f64 = 4.0;
pub const DEFAULT_ACK_TIMEOUT: Duration = Duration::from_millis(2000);
pub const DEFAULT_CONNECT_RETRIES: u32 = 50;
pub const DEFAULT_RETRY_INTERVAL: Duration = Duration::from_millis(100);

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value for {key}: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceConfig {
    /// Replays `*.ppm` / `*.pgm` files from a directory in name order.
    Replay { path: PathBuf, fps: f64 },
    /// Renders a named synthetic scene on the fly.
    Synthetic {
        scene: String,
        seed: u64,
        frames: u32,
        fps: f64,
    },
}

impl SourceConfig {
    pub fn fps(&self) -> f64 {
        match self {
            SourceConfig::Replay { fps, .. } | SourceConfig::Synthetic { fps, .. } => *fps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub node_id: String,
    pub source: SourceConfig,
    pub detector: DetectorConfig,
    pub policy: ZonePolicy,
    pub safety: SafetyConfig,
    pub machines: Vec<String>,
    pub edge_sink: Option<String>,
    pub listen: Option<String>,
    pub ack_timeout: Duration,
    pub connect_retries: u32,
    pub retry_interval: Duration,
}

impl NodeConfig {
    /// A config with defaults everywhere except the required fields.
    pub fn new(node_id: impl Into<String>, source: SourceConfig) -> Self {
        Self {
            node_id: node_id.into(),
            source,
            detector: DetectorConfig::default(),
            policy: ZonePolicy::default(),
            safety: SafetyConfig::default(),
            machines: Vec::new(),
            edge_sink: None,
            listen: None,
            ack_timeout: DEFAULT_ACK_TIMEOUT,
            connect_retries: DEFAULT_CONNECT_RETRIES,
            retry_interval: DEFAULT_RETRY_INTERVAL,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::parse(&text)?;
        // Relative replay paths are relative to the config file.
        if let SourceConfig::Replay { path: p, .. } = &mut config.source {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = Raw::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            raw.set(line_no, key.trim(), value.trim())?;
        }
        raw.build()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.node_id.trim().is_empty() {
            return Err(ConfigError::Invalid("node.id must not be empty".into()));
        }
        let fps = self.source.fps();
        if !(fps.is_finite() && fps > 0.0) {
            return Err(ConfigError::Invalid(format!("source.fps must be > 0, got {fps}")));
        }
        if let SourceConfig::Synthetic { frames: 0, .. } = self.source {
            return Err(ConfigError::Invalid("source.frames must be > 0".into()));
        }
        if self.ack_timeout.is_zero() {
            return Err(ConfigError::Invalid("net.ack_timeout_ms must be > 0".into()));
        }
        self.detector
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn frame_period(&self) -> Duration {
        Duration::from_secs_f64(1.0 / self.source.fps())
    }
}

#[derive(Default)]
struct Raw {
    seen: Vec<&'static str>,
    node_id: Option<String>,
    kind: Option<String>,
    path: Option<PathBuf>,
    fps: Option<f64>,
    scene: Option<String>,
    seed: Option<u64>,
    frames: Option<u32>,
    detector: DetectorConfig,
    monitored: Option<QuadrantSet>,
    restricted: Option<QuadrantSet>,
    caution: Option<QuadrantSet>,
    motion_action: Option<MotionAction>,
    release_frames: Option<u32>,
    machines: Vec<String>,
    edge_sink: Option<String>,
    listen: Option<String>,
    ack_timeout_ms: Option<u64>,
    connect_retries: Option<u32>,
    retry_interval_ms: Option<u64>,
}

const KEYS: [&str; 24] = [
    "node.id",
    "source.kind",
    "source.path",
    "source.fps",
    "source.scene",
    "source.seed",
    "source.frames",
    "detector.kernel_size",
    "detector.kernel_sigma",
    "detector.pixel_diff_threshold",
    "detector.active_fraction",
    "detector.ratio_threshold",
    "detector.mean_floor",
    "zones.monitored",
    "zones.restricted",
    "zones.caution",
    "zones.motion_action",
    "safety.release_frames",
    "net.machines",
    "net.edge_sink",
    "net.listen",
    "net.ack_timeout_ms",
    "net.connect_retries",
    "net.retry_interval_ms",
];

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::Value {
        line,
        key: key.to_string(),
        message: e.to_string(),
    })
}

fn endpoint(line: usize, key: &str, value: &str) -> Result<String, ConfigError> {
    match value.rsplit_once(':') {
        Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => Ok(value.to_string()),
        _ => Err(ConfigError::Value {
            line,
            key: key.to_string(),
            message: format!("expected host:port, got {value:?}"),
        }),
    }
}

impl Raw {
    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        let Some(&known) = KEYS.iter().find(|k| **k == key) else {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            });
        };
        if self.seen.contains(&known) {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
            });
        }
        self.seen.push(known);

        let d = &mut self.detector;
        match known {
            "node.id" => self.node_id = Some(value.to_string()),
            "source.kind" => self.kind = Some(value.to_string()),
            "source.path" => self.path = Some(PathBuf::from(value)),
            "source.fps" => self.fps = Some(parse_value(line, key, value)?),
            "source.scene" => self.scene = Some(value.to_string()),
            "source.seed" => self.seed = Some(parse_value(line, key, value)?),
            "source.frames" => self.frames = Some(parse_value(line, key, value)?),
            "detector.kernel_size" => d.kernel_size = parse_value(line, key, value)?,
            "detector.kernel_sigma" => d.kernel_sigma = parse_value(line, key, value)?,
            "detector.pixel_diff_threshold" => d.pixel_diff_threshold = parse_value(line, key, value)?,
            "detector.active_fraction" => d.active_fraction = parse_value(line, key, value)?,
            "detector.ratio_threshold" => d.ratio_threshold = parse_value(line, key, value)?,
            "detector.mean_floor" => d.mean_floor = parse_value(line, key, value)?,
            "zones.monitored" => self.monitored = Some(parse_value(line, key, value)?),
            "zones.restricted" => self.restricted = Some(parse_value(line, key, value)?),
            "zones.caution" => self.caution = Some(parse_value(line, key, value)?),
            "zones.motion_action" => self.motion_action = Some(parse_value(line, key, value)?),
            "safety.release_frames" => self.release_frames = Some(parse_value(line, key, value)?),
            "net.machines" => {
                for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    self.machines.push(endpoint(line, key, part)?);
                }
            }
            "net.edge_sink" => self.edge_sink = Some(endpoint(line, key, value)?),
            "net.listen" => self.listen = Some(endpoint(line, key, value)?),
            "net.ack_timeout_ms" => self.ack_timeout_ms = Some(parse_value(line, key, value)?),
            "net.connect_retries" => self.connect_retries = Some(parse_value(line, key, value)?),
            "net.retry_interval_ms" => self.retry_interval_ms = Some(parse_value(line, key, value)?),
            _ => unreachable!("key list and match arms agree"),
        }
        Ok(())
    }

    fn build(self) -> Result<NodeConfig, ConfigError> {
        let fps = self.fps.unwrap_or(DEFAULT_FPS);
        let source = match self.kind.as_deref() {
            Some("replay") => {
                if self.scene.is_some() || self.seed.is_some() || self.frames.is_some() {
                    return Err(ConfigError::Invalid(
                        "source.scene/seed/frames apply only to source.kind = synthetic".into(),
                    ));
                }
                SourceConfig::Replay {
                    path: self
                        .path
                        .ok_or_else(|| ConfigError::Invalid("source.path is required for replay".into()))?,
                    fps,
                }
            }
            Some("synthetic") => {
                if self.path.is_some() {
                    return Err(ConfigError::Invalid(
                        "source.path applies only to source.kind = replay".into(),
                    ));
                }
                SourceConfig::Synthetic {
                    scene: self
                        .scene
                        .ok_or_else(|| ConfigError::Invalid("source.scene is required for synthetic".into()))?,
                    seed: self.seed.unwrap_or(0),
                    frames: self.frames.unwrap_or(200),
                    fps,
                }
            }
            Some(other) => {
                return Err(ConfigError::Invalid(format!(
                    "source.kind must be replay or synthetic, got {other:?}"
                )))
            }
            None => return Err(ConfigError::Invalid("source.kind is required".into())),
        };

        let node_id = self
            .node_id
            .ok_or_else(|| ConfigError::Invalid("node.id is required".into()))?;
        let defaults = ZonePolicy::default();
        let policy = ZonePolicy::new(
            self.monitored.unwrap_or(defaults.monitored()),
            self.restricted.unwrap_or(defaults.restricted()),
            self.caution.unwrap_or(defaults.caution()),
            self.motion_action.unwrap_or(defaults.motion_action()),
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let safety = match self.release_frames {
            Some(n) => SafetyConfig::new(n).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            None => SafetyConfig::default(),
        };

        let config = NodeConfig {
            node_id,
            source,
            detector: self.detector,
            policy,
            safety,
            machines: self.machines,
            edge_sink: self.edge_sink,
            listen: self.listen,
            ack_timeout: self.ack_timeout_ms.map_or(DEFAULT_ACK_TIMEOUT, Duration::from_millis),
            connect_retries: self.connect_retries.unwrap_or(DEFAULT_CONNECT_RETRIES),
            retry_interval: self
                .retry_interval_ms
                .map_or(DEFAULT_RETRY_INTERVAL, Duration::from_millis),
        };
        config.validate()?;
        Ok(config)
    }
}
