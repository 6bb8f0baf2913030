//! Thermal frame types and the preprocessing pipeline.
//!
//! Frames arrive as RGB-rendered 160x120 images. The detectors never see
//! them directly: [`preprocess`] reduces them to a single intensity plane
//! and applies an isotropic Gaussian smoothing first.

mod kernel;
mod pnm;

pub use kernel::GaussianKernel;
pub use pnm::{read_pgm, read_pnm, read_ppm, write_pgm, write_ppm, PnmImage};

use thiserror::Error;

/// Sensor width in pixels.
pub const FRAME_WIDTH: usize = 160;
/// Sensor height in pixels.
pub const FRAME_HEIGHT: usize = 120;
/// Pixels per frame (19 200).
pub const FRAME_PIXELS: usize = FRAME_WIDTH * FRAME_HEIGHT;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("buffer holds {actual} bytes, expected {expected} for {width}x{height}")]
    BufferSize {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("frame is {width}x{height}, expected {FRAME_WIDTH}x{FRAME_HEIGHT}")]
    UnsupportedSize { width: usize, height: usize },
    #[error("invalid kernel: {0}")]
    Kernel(String),
    #[error("unsupported netpbm format {0:?}")]
    UnsupportedFormat(String),
    #[error("malformed netpbm header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("payload has {0} trailing bytes past the declared dimensions")]
    TrailingData(usize),
}

/// An RGB frame, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RawFrame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, FrameError> {
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(FrameError::BufferSize {
                width,
                height,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    /// A frame with every pixel set to `rgb`.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, data }
    }

    /// Expands an intensity frame into equal R=G=B channels.
    pub fn from_gray(gray: &GrayFrame) -> Self {
        let data = gray.data.iter().flat_map(|&v| [v, v, v]).collect();
        Self {
            width: gray.width,
            height: gray.height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Rejects anything other than the sensor's 160x120 geometry.
    pub fn ensure_sensor_size(&self) -> Result<(), FrameError> {
        ensure_sensor_size(self.width, self.height)
    }
}

/// A single-channel intensity frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, FrameError> {
        let expected = width * height;
        if data.len() != expected {
            return Err(FrameError::BufferSize {
                width,
                height,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    pub fn same_shape(&self, other: &GrayFrame) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_sensor_size(&self) -> Result<(), FrameError> {
        ensure_sensor_size(self.width, self.height)
    }
}

fn ensure_sensor_size(width: usize, height: usize) -> Result<(), FrameError> {
    if width == FRAME_WIDTH && height == FRAME_HEIGHT {
        Ok(())
    } else {
        Err(FrameError::UnsupportedSize { width, height })
    }
}

/// BT.601 luma in integer form: `(299 R + 587 G + 114 B + 500) / 1000`.
///
/// The weights sum to 1000, so equal channels map to themselves exactly and
/// the result can never exceed 255.
#[inline]
pub fn luma(rgb: [u8; 3]) -> u8 {
    let [r, g, b] = rgb.map(u32::from);
    ((299 * r + 587 * g + 114 * b + 500) / 1000) as u8
}

pub fn to_grayscale(frame: &RawFrame) -> GrayFrame {
    let data = frame
        .data
        .chunks_exact(3)
        .map(|px| luma([px[0], px[1], px[2]]))
        .collect();
    GrayFrame {
        width: frame.width,
        height: frame.height,
        data,
    }
}

/// Convolves `frame` with `kernel`, clamping sample coordinates at the
/// borders (replicate edges). Each output is rounded half away from zero.
pub fn gaussian_smooth(frame: &GrayFrame, kernel: &GaussianKernel) -> GrayFrame {
    let (w, h) = (frame.width, frame.height);
    let size = kernel.size();
    let r = size / 2;
    let weights = kernel.weights();
    let src = &frame.data;
    let mut out = vec![0u8; w * h];

    if w == 0 || h == 0 {
        return GrayFrame {
            width: w,
            height: h,
            data: out,
        };
    }

    for y in 0..h {
        let interior_y = y >= r && y + r < h;
        for x in 0..w {
            let mut acc = 0.0f64;
            if interior_y && x >= r && x + r < w {
                for ky in 0..size {
                    let row = &src[(y + ky - r) * w + x - r..][..size];
                    let wrow = &weights[ky * size..][..size];
                    for (p, k) in row.iter().zip(wrow) {
                        acc += f64::from(*p) * k;
                    }
                }
            } else {
                for ky in 0..size {
                    let sy = (y + ky).saturating_sub(r).min(h - 1);
                    for kx in 0..size {
                        let sx = (x + kx).saturating_sub(r).min(w - 1);
                        acc += f64::from(src[sy * w + sx]) * weights[ky * size + kx];
                    }
                }
            }
            out[y * w + x] = round_to_u8(acc);
        }
    }

    GrayFrame {
        width: w,
        height: h,
        data: out,
    }
}

/// Grayscale conversion followed by Gaussian smoothing; the only form in
/// which the detectors consume frames.
pub fn preprocess(frame: &RawFrame, kernel: &GaussianKernel) -> GrayFrame {
    gaussian_smooth(&to_grayscale(frame), kernel)
}

#[inline]
fn round_to_u8(v: f64) -> u8 {
    // f64::round is half-away-from-zero; values here are nonnegative.
    v.round().clamp(0.0, 255.0) as u8
}
