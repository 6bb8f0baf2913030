//! Human-presence detectors.
//!
//! * [`MotionDetector`] differences each frame against an adaptive
//!   background and votes positive when enough pixels changed.
//! * [`method_b`] splits the frame into four quadrants and votes positive
//!   when any quadrant is markedly warmer than the frame as a whole.
//! * [`HybridDetector`] runs both on every frame and ORs the votes.

mod motion;
mod roi;

pub use motion::{MotionDetector, MotionResult};
pub use roi::{method_b, Margin, Quadrant, QuadrantSet, RoiConfig, RoiResult};

use serde::Serialize;
use thiserror::Error;

use crate::frame::{FrameError, GrayFrame};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("frame is {got_w}x{got_h} but the background is {want_w}x{want_h}")]
    DimensionMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("invalid detector configuration: {0}")]
    Config(String),
}

/// Fused per-frame verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub frame_seq: u64,
    pub positive: bool,
    pub method_a: MotionResult,
    pub method_b: RoiResult,
}

/// Method B then Method A on the same frame, verdicts ORed.
///
/// Method A is stepped on every frame even when Method B already voted
/// positive, so the background keeps tracking the scene.
#[derive(Debug, Clone)]
pub struct HybridDetector {
    motion: MotionDetector,
    roi: RoiConfig,
    frame_seq: u64,
}

impl HybridDetector {
    pub fn new(motion: MotionDetector, roi: RoiConfig) -> Self {
        Self {
            motion,
            roi,
            frame_seq: 0,
        }
    }

    pub fn motion(&self) -> &MotionDetector {
        &self.motion
    }

    pub fn motion_mut(&mut self) -> &mut MotionDetector {
        &mut self.motion
    }

    pub fn roi(&self) -> &RoiConfig {
        &self.roi
    }

    /// Sequence number of the last processed frame; 0 before the first.
    pub fn frame_seq(&self) -> u64 {
        self.frame_seq
    }

    pub fn step(&mut self, frame: &GrayFrame) -> Result<Detection, DetectError> {
        let method_b = method_b(frame, &self.roi)?;
        let method_a = self.motion.step(frame)?;
        self.frame_seq += 1;
        Ok(Detection {
            frame_seq: self.frame_seq,
            positive: method_a.positive || method_b.positive,
            method_a,
            method_b,
        })
    }
}
