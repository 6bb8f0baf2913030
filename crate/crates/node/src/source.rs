use std::path::{Path, PathBuf};

use heatwatch_core::frame::{read_pnm, RawFrame};
use heatwatch_core::synth::{render_frame, Scene};
use thiserror::Error;

use crate::config::SourceConfig;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("no frames found in {0}")]
    Empty(PathBuf),
    #[error("{0}")]
    Scene(String),
    #[error("frame source failed: {0}")]
    Device(String),
}

/// Where the node's frames come from. `Ok(None)` means the source ended
/// normally; an `Err` is a hardware-style failure and trips the failsafe.
pub trait FrameSource {
    fn next_frame(&mut self) -> Result<Option<RawFrame>, SourceError>;
}

impl<S: FrameSource + ?Sized> FrameSource for Box<S> {
    fn next_frame(&mut self) -> Result<Option<RawFrame>, SourceError> {
        (**self).next_frame()
    }
}

/// Replays every `.ppm` / `.pgm` file in a directory, sorted by file name.
/// Files are listed once at open and read lazily.
#[derive(Debug)]
pub struct DirectorySource {
    files: Vec<PathBuf>,
    next: usize,
}

impl DirectorySource {
    pub fn open(dir: &Path) -> Result<Self, SourceError> {
        let io = |source| SourceError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let mut files = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            if path.is_file() && matches!(ext.to_ascii_lowercase().as_str(), "ppm" | "pgm") {
                files.push(path);
            }
        }
        if files.is_empty() {
            return Err(SourceError::Empty(dir.to_path_buf()));
        }
        files.sort();
        Ok(Self { files, next: 0 })
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

impl FrameSource for DirectorySource {
    fn next_frame(&mut self) -> Result<Option<RawFrame>, SourceError> {
        let Some(path) = self.files.get(self.next) else {
            return Ok(None);
        };
        self.next += 1;
        let bytes = std::fs::read(path).map_err(|source| SourceError::Io {
            path: path.clone(),
            source,
        })?;
        let image = read_pnm(&bytes).map_err(|e| SourceError::Decode {
            path: path.clone(),
            message: e.to_string(),
        })?;
        Ok(Some(image.into_raw()))
    }
}

/// Renders frames of a synthetic scene, identical to what `synth` writes.
#[derive(Debug)]
pub struct SyntheticSource {
    scene: Scene,
    seed: u64,
    frames: u32,
    next: u32,
}

impl SyntheticSource {
    pub fn new(scene: Scene, seed: u64, frames: u32) -> Self {
        Self {
            scene,
            seed,
            frames,
            next: 0,
        }
    }

    pub fn standard(name: &str, seed: u64, frames: u32) -> Result<Self, SourceError> {
        let scene = Scene::standard(name).map_err(|e| SourceError::Scene(e.to_string()))?;
        Ok(Self::new(scene, seed, frames))
    }
}

impl FrameSource for SyntheticSource {
    fn next_frame(&mut self) -> Result<Option<RawFrame>, SourceError> {
        if self.next >= self.frames {
            return Ok(None);
        }
        let frame = render_frame(&self.scene, self.next, self.seed);
        self.next += 1;
        Ok(Some(frame))
    }
}

pub fn open_source(config: &SourceConfig) -> Result<Box<dyn FrameSource + Send>, SourceError> {
    Ok(match config {
        SourceConfig::Replay { path, .. } => Box::new(DirectorySource::open(path)?),
        SourceConfig::Synthetic {
            scene, seed, frames, ..
        } => Box::new(SyntheticSource::standard(scene, *seed, *frames)?),
    })
}
