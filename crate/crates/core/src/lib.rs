//! Human-presence detection for low-resolution (160x120) thermal imagery.
//!
//! The crate is organised along the processing chain:
//!
//! * [`frame`]: frame types, grayscale conversion, Gaussian smoothing and
//!   binary PGM/PPM I/O.
//! * [`detect`]: the motion (Method A), quadrant region-of-interest
//!   (Method B) and hybrid detectors.
//! * [`pipeline`]: detector configuration and the preprocess-then-detect
//!   chain.
//! * [`zones`]: quadrant-to-zone mapping and the RUN/SLOW/STOP machine.
//! * [`eval`]: annotated datasets, confusion matrices, reports and
//!   latency benchmarking.
//! * [`synth`]: seeded synthetic scenes with ground truth.

pub mod atomic;
pub mod detect;
pub mod eval;
pub mod frame;
pub mod pipeline;
pub mod synth;
pub mod zones;

pub use detect::{Detection, HybridDetector, MotionDetector, Quadrant, QuadrantSet, RoiConfig};
pub use frame::{GaussianKernel, GrayFrame, RawFrame};
pub use pipeline::{DetectorConfig, Pipeline};
