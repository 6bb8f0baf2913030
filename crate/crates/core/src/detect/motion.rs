use serde::Serialize;

use super::DetectError;
use crate::frame::GrayFrame;

/// Outcome of one motion-detector step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MotionResult {
    pub positive: bool,
    pub active_pixel_count: u32,
    pub background_updated: bool,
}

/// Background-differencing motion detector.
///
/// A pixel is active when `|frame - background| > pixel_diff_threshold`.
/// The frame is positive when at least `ceil(active_fraction * pixels)`
/// pixels are active (960 of 19 200 at the default 5%). Negative frames
/// replace the background; positive frames leave it untouched. The first
/// frame only seeds the background and is reported negative.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionDetector {
    background: Option<GrayFrame>,
    pixel_diff_threshold: u8,
    active_fraction: f64,
}

impl Default for MotionDetector {
    fn default() -> Self {
        Self {
            background: None,
            pixel_diff_threshold: Self::DEFAULT_PIXEL_DIFF_THRESHOLD,
            active_fraction: Self::DEFAULT_ACTIVE_FRACTION,
        }
    }
}

impl MotionDetector {
    pub const DEFAULT_PIXEL_DIFF_THRESHOLD: u8 = 25;
    pub const DEFAULT_ACTIVE_FRACTION: f64 = 0.05;

    pub fn new(pixel_diff_threshold: u8, active_fraction: f64) -> Result<Self, DetectError> {
        if pixel_diff_threshold == 0 {
            return Err(DetectError::Config("pixel_diff_threshold must be in [1, 255]".into()));
        }
        if !(active_fraction > 0.0 && active_fraction < 1.0) {
            return Err(DetectError::Config(format!(
                "active_fraction must be in (0, 1), got {active_fraction}"
            )));
        }
        Ok(Self {
            background: None,
            pixel_diff_threshold,
            active_fraction,
        })
    }

    pub fn background(&self) -> Option<&GrayFrame> {
        self.background.as_ref()
    }

    pub fn pixel_diff_threshold(&self) -> u8 {
        self.pixel_diff_threshold
    }

    pub fn active_fraction(&self) -> f64 {
        self.active_fraction
    }

    /// Minimum active-pixel count for a positive vote on a frame of
    /// `pixels` pixels.
    pub fn min_active_pixels(&self, pixels: usize) -> u32 {
        // The epsilon keeps 0.05 * 19200 at 960 despite binary rounding.
        (self.active_fraction * pixels as f64 - 1e-9).ceil().max(0.0) as u32
    }

    pub fn step(&mut self, frame: &GrayFrame) -> Result<MotionResult, DetectError> {
        frame.ensure_sensor_size()?;
        let needed = self.min_active_pixels(frame.data().len());

        let Some(background) = self.background.as_mut() else {
            self.background = Some(frame.clone());
            return Ok(MotionResult {
                positive: false,
                active_pixel_count: 0,
                background_updated: true,
            });
        };
        if !frame.same_shape(background) {
            return Err(DetectError::DimensionMismatch {
                got_w: frame.width(),
                got_h: frame.height(),
                want_w: background.width(),
                want_h: background.height(),
            });
        }

        let threshold = self.pixel_diff_threshold;
        let active = frame
            .data()
            .iter()
            .zip(background.data())
            .filter(|(&p, &b)| p.abs_diff(b) > threshold)
            .count() as u32;

        let positive = active >= needed;
        if !positive {
            background.data_mut().copy_from_slice(frame.data());
        }

        Ok(MotionResult {
            positive,
            active_pixel_count: active,
            background_updated: !positive,
        })
    }

    /// Drops the background so the next frame re-seeds it.
    pub fn reset(&mut self) {
        self.background = None;
    }
}
