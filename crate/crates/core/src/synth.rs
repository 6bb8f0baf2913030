//! Deterministic synthetic thermal scenes.
//!
//! A scene is an ambient level plus Gaussian "heat blobs": static equipment
//! and humans that follow piecewise-linear tracks while present. Each frame
//! is rendered as
//!
//! ```text
//! v(p) = clamp(round(ambient + Σ peak · exp(-|p - c|² / 2r²) + N(0, σ²)))
//! ```
//!
//! and written into equal R, G and B channels.
//!
//! # Noise generator
//!
//! Noise comes from ChaCha8 keyed with the 64-bit seed in little-endian
//! order followed by 24 zero bytes, using the frame index as the ChaCha
//! stream id. Pixels draw in row-major order; each pair of pixels consumes
//! two `u64` words turned into uniforms `u = ((w >> 11) + 1) · 2⁻⁵³` and
//! mapped through Box-Muller (cosine branch to the first pixel, sine
//! branch to the second).

use std::f64::consts::PI;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::atomic::write_atomic;
use crate::detect::{Quadrant, QuadrantSet};
use crate::eval::{write_manifest, Label};
use crate::frame::{write_ppm, RawFrame, FRAME_HEIGHT, FRAME_WIDTH};

/// Nominal capture period: four frames per second.
pub const FRAME_PERIOD_MS: u64 = 250;

pub const DEFAULT_AMBIENT: f64 = 30.0;
pub const DEFAULT_NOISE_SIGMA: f64 = 2.0;
pub const HUMAN_PEAK: f64 = 180.0;
pub const HUMAN_RADIUS: f64 = 10.0;
pub const EQUIPMENT_PEAK: f64 = 60.0;
pub const EQUIPMENT_RADIUS: f64 = 6.0;

/// Names accepted by [`Scene::standard`].
pub const STANDARD_SCENES: [&str; 3] = ["walkthrough-42", "empty-room", "static-worker"];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("frame count must be at least 1")]
    NoFrames,
    #[error("unknown scene {0:?}")]
    UnknownScene(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatBlob {
    pub center: (f64, f64),
    pub radius: f64,
    pub peak: f64,
}

impl HeatBlob {
    pub fn human(x: f64, y: f64) -> Self {
        Self {
            center: (x, y),
            radius: HUMAN_RADIUS,
            peak: HUMAN_PEAK,
        }
    }

    pub fn equipment(x: f64, y: f64) -> Self {
        Self {
            center: (x, y),
            radius: EQUIPMENT_RADIUS,
            peak: EQUIPMENT_PEAK,
        }
    }

    fn heat_at(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.center.0;
        let dy = y - self.center.1;
        self.peak * (-(dx * dx + dy * dy) / (2.0 * self.radius * self.radius)).exp()
    }
}

/// A human blob moving through `(frame, x, y)` waypoints, visible for the
/// frames in `present`.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanTrack {
    pub radius: f64,
    pub peak: f64,
    pub waypoints: Vec<(u32, f64, f64)>,
    pub present: Range<u32>,
}

impl HumanTrack {
    pub fn stationary(x: f64, y: f64, present: Range<u32>) -> Self {
        Self {
            radius: HUMAN_RADIUS,
            peak: HUMAN_PEAK,
            waypoints: vec![(present.start, x, y)],
            present,
        }
    }

    pub fn is_present(&self, frame: u32) -> bool {
        self.present.contains(&frame)
    }

    /// Linear interpolation between waypoints, held constant outside them.
    pub fn position(&self, frame: u32) -> (f64, f64) {
        let w = &self.waypoints;
        let first = w[0];
        if frame <= first.0 {
            return (first.1, first.2);
        }
        for pair in w.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if frame <= b.0 {
                let t = (frame - a.0) as f64 / (b.0 - a.0) as f64;
                return (a.1 + t * (b.1 - a.1), a.2 + t * (b.2 - a.2));
            }
        }
        let last = w[w.len() - 1];
        (last.1, last.2)
    }

    pub fn blob_at(&self, frame: u32) -> Option<HeatBlob> {
        self.is_present(frame).then(|| {
            let center = self.position(frame);
            HeatBlob {
                center,
                radius: self.radius,
                peak: self.peak,
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub ambient: f64,
    pub noise_sigma: f64,
    pub equipment: Vec<HeatBlob>,
    pub humans: Vec<HumanTrack>,
}

impl Scene {
    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ambient: DEFAULT_AMBIENT,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            equipment: Vec::new(),
            humans: Vec::new(),
        }
    }

    /// The built-in scenes.
    ///
    /// * `walkthrough-42`: a person enters the top-left quadrant at frame 40
    ///   and walks at one pixel per frame into the top-right quadrant,
    ///   leaving at frame 160; a warm machine sits in the bottom-left.
    /// * `empty-room`: the same machine and nobody else.
    /// * `static-worker`: a person standing still in the bottom-right
    ///   quadrant for frames 20..120, beside the machine.
    pub fn standard(name: &str) -> Result<Self, SynthError> {
        let machine = HeatBlob::equipment(40.0, 90.0);
        let scene = match name {
            "walkthrough-42" => Scene {
                equipment: vec![machine],
                humans: vec![HumanTrack {
                    radius: HUMAN_RADIUS,
                    peak: HUMAN_PEAK,
                    waypoints: vec![(40, 20.0, 30.0), (159, 139.0, 30.0)],
                    present: 40..160,
                }],
                ..Scene::empty(name)
            },
            "empty-room" => Scene {
                equipment: vec![machine],
                ..Scene::empty(name)
            },
            "static-worker" => Scene {
                equipment: vec![machine],
                humans: vec![HumanTrack::stationary(120.0, 90.0, 20..120)],
                ..Scene::empty(name)
            },
            other => return Err(SynthError::UnknownScene(other.to_string())),
        };
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidScene(m));
        if !(0.0..=255.0).contains(&self.ambient) {
            return bad(format!("ambient {} outside [0, 255]", self.ambient));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {}", self.noise_sigma));
        }
        let in_frame =
            |(x, y): (f64, f64)| (0.0..FRAME_WIDTH as f64).contains(&x) && (0.0..FRAME_HEIGHT as f64).contains(&y);
        for b in &self.equipment {
            if b.radius < 1.0 || b.peak <= self.ambient || !in_frame(b.center) {
                return bad(format!("equipment blob {b:?}"));
            }
        }
        for h in &self.humans {
            if h.waypoints.is_empty() || h.radius < 1.0 || h.peak <= self.ambient {
                return bad("human track needs waypoints, radius >= 1, peak > ambient".into());
            }
            if h.waypoints.windows(2).any(|w| w[0].0 >= w[1].0) {
                return bad("waypoint frames must increase".into());
            }
            if h.present.clone().any(|f| !in_frame(h.position(f))) {
                return bad("human leaves the frame while present".into());
            }
        }
        Ok(())
    }

    /// Blobs visible in `frame`: equipment first, then present humans.
    pub fn blobs(&self, frame: u32) -> Vec<HeatBlob> {
        self.equipment
            .iter()
            .copied()
            .chain(self.humans.iter().filter_map(|h| h.blob_at(frame)))
            .collect()
    }

    pub fn ground_truth(&self, frame: u32) -> GroundTruth {
        let mut quadrants = QuadrantSet::EMPTY;
        let mut moving = false;
        for h in self.humans.iter().filter(|h| h.is_present(frame)) {
            let (x, y) = h.position(frame);
            quadrants.insert(Quadrant::containing(x as usize, y as usize, FRAME_WIDTH, FRAME_HEIGHT));
            if frame > 0 && h.position(frame - 1) != (x, y) {
                moving = true;
            }
        }
        let present = self.humans.iter().any(|h| h.is_present(frame));
        GroundTruth {
            label: if present { Label::Positive } else { Label::Negative },
            quadrants,
            moving,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundTruth {
    pub label: Label,
    /// Quadrants containing a present human's centre.
    pub quadrants: QuadrantSet,
    pub moving: bool,
}

fn noise_rng(seed: u64, frame: u32) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(u64::from(frame));
    rng
}

fn unit_open(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Renders one frame of `scene`. Pure in `(scene, frame, seed)`.
pub fn render_frame(scene: &Scene, frame: u32, seed: u64) -> RawFrame {
    let blobs = scene.blobs(frame);
    let mut values = vec![0.0f64; FRAME_WIDTH * FRAME_HEIGHT];
    for (i, v) in values.iter_mut().enumerate() {
        let x = (i % FRAME_WIDTH) as f64;
        let y = (i / FRAME_WIDTH) as f64;
        *v = scene.ambient + blobs.iter().map(|b| b.heat_at(x, y)).sum::<f64>();
    }

    if scene.noise_sigma > 0.0 {
        let mut rng = noise_rng(seed, frame);
        for pair in values.chunks_mut(2) {
            let u1 = unit_open(&mut rng);
            let u2 = unit_open(&mut rng);
            let r = (-2.0 * u1.ln()).sqrt() * scene.noise_sigma;
            let theta = 2.0 * PI * u2;
            pair[0] += r * theta.cos();
            if let Some(second) = pair.get_mut(1) {
                *second += r * theta.sin();
            }
        }
    }

    let data = values
        .iter()
        .flat_map(|&v| {
            let g = v.round().clamp(0.0, 255.0) as u8;
            [g, g, g]
        })
        .collect();
    RawFrame::new(FRAME_WIDTH, FRAME_HEIGHT, data).expect("sensor-sized buffer")
}

pub fn frame_file_name(index: u32) -> String {
    format!("frame_{index:05}.ppm")
}

#[derive(Debug, Clone)]
pub struct SequenceOutput {
    pub manifest_path: PathBuf,
    /// SHA-256 of `manifest.csv`, hex.
    pub manifest_sha256: String,
    /// SHA-256 over the manifest followed by every frame file in order.
    pub content_sha256: String,
    pub truth: Vec<GroundTruth>,
}

/// Renders `n_frames` frames into `out_dir` as `frame_%05d.ppm`, plus
/// `manifest.csv` and a `sequence.txt` sidecar recording the scene, seed
/// and nominal frame period.
pub fn generate_sequence(
    scene: &Scene,
    n_frames: u32,
    seed: u64,
    out_dir: &Path,
) -> Result<SequenceOutput, SynthError> {
    if n_frames == 0 {
        return Err(SynthError::NoFrames);
    }
    scene.validate()?;
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut frame_hasher = Sha256::new();
    let mut names = Vec::with_capacity(n_frames as usize);
    let mut truth = Vec::with_capacity(n_frames as usize);
    for i in 0..n_frames {
        let name = frame_file_name(i);
        let bytes = write_ppm(&render_frame(scene, i, seed));
        let path = out_dir.join(&name);
        write_atomic(&path, &bytes).map_err(io_err(&path))?;
        frame_hasher.update(&bytes);
        names.push(name);
        truth.push(scene.ground_truth(i));
    }

    let manifest = write_manifest(
        names
            .iter()
            .zip(&truth)
            .map(|(n, t)| (n.as_str(), t.label, t.quadrants)),
    );
    let manifest_path = out_dir.join("manifest.csv");
    write_atomic(&manifest_path, &manifest).map_err(io_err(&manifest_path))?;

    let sidecar = format!(
        "scene = {}\nseed = {seed}\nframes = {n_frames}\nframe_period_ms = {FRAME_PERIOD_MS}\n",
        scene.name
    );
    let sidecar_path = out_dir.join("sequence.txt");
    write_atomic(&sidecar_path, sidecar.as_bytes()).map_err(io_err(&sidecar_path))?;

    let manifest_sha256 = hex::encode(Sha256::digest(&manifest));
    let mut content = Sha256::new();
    content.update(&manifest);
    content.update(frame_hasher.finalize());
    Ok(SequenceOutput {
        manifest_path,
        manifest_sha256,
        content_sha256: hex::encode(content.finalize()),
        truth,
    })
}
