//! Detector configuration and the preprocess-then-detect pipeline shared by
//! evaluation, benchmarking and the node loop.

use std::fmt;

use crate::detect::{
    method_b, DetectError, Detection, HybridDetector, MotionDetector, MotionResult, RoiConfig, RoiResult,
};
use crate::frame::{preprocess, GaussianKernel, RawFrame};

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub kernel_size: usize,
    pub kernel_sigma: f64,
    pub pixel_diff_threshold: u8,
    pub active_fraction: f64,
    pub ratio_threshold: f64,
    pub mean_floor: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            kernel_size: GaussianKernel::DEFAULT_SIZE,
            kernel_sigma: GaussianKernel::DEFAULT_SIGMA,
            pixel_diff_threshold: MotionDetector::DEFAULT_PIXEL_DIFF_THRESHOLD,
            active_fraction: MotionDetector::DEFAULT_ACTIVE_FRACTION,
            ratio_threshold: 0.20,
            mean_floor: 1.0,
        }
    }
}

impl fmt::Display for DetectorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "kernel={}x{} sigma={} pixel_diff_threshold={} active_fraction={} ratio_threshold={} mean_floor={}",
            self.kernel_size,
            self.kernel_size,
            self.kernel_sigma,
            self.pixel_diff_threshold,
            self.active_fraction,
            self.ratio_threshold,
            self.mean_floor
        )
    }
}

impl DetectorConfig {
    pub fn kernel(&self) -> Result<GaussianKernel, DetectError> {
        Ok(GaussianKernel::new(self.kernel_size, self.kernel_sigma)?)
    }

    pub fn motion_detector(&self) -> Result<MotionDetector, DetectError> {
        MotionDetector::new(self.pixel_diff_threshold, self.active_fraction)
    }

    pub fn roi(&self) -> Result<RoiConfig, DetectError> {
        RoiConfig::new(self.ratio_threshold, self.mean_floor)
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        self.kernel()?;
        self.motion_detector()?;
        self.roi()?;
        Ok(())
    }
}

/// Raw frame in, fused detection out.
#[derive(Debug, Clone)]
pub struct Pipeline {
    kernel: GaussianKernel,
    detector: HybridDetector,
}

impl Pipeline {
    pub fn new(config: &DetectorConfig) -> Result<Self, DetectError> {
        Ok(Self {
            kernel: config.kernel()?,
            detector: HybridDetector::new(config.motion_detector()?, config.roi()?),
        })
    }

    pub fn process(&mut self, frame: &RawFrame) -> Result<Detection, DetectError> {
        frame.ensure_sensor_size()?;
        let gray = preprocess(frame, &self.kernel);
        self.detector.step(&gray)
    }

    /// Method A alone; advances the same background state `process` would.
    pub fn process_motion(&mut self, frame: &RawFrame) -> Result<MotionResult, DetectError> {
        frame.ensure_sensor_size()?;
        let gray = preprocess(frame, &self.kernel);
        self.detector.motion_mut().step(&gray)
    }

    /// Method B alone; stateless.
    pub fn process_roi(&self, frame: &RawFrame) -> Result<RoiResult, DetectError> {
        frame.ensure_sensor_size()?;
        let gray = preprocess(frame, &self.kernel);
        method_b(&gray, self.detector.roi())
    }

    pub fn frame_seq(&self) -> u64 {
        self.detector.frame_seq()
    }

    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }
}
