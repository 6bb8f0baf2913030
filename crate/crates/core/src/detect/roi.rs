use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::DetectError;
use crate::frame::GrayFrame;

/// One of the four equal blocks tiling a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Quadrant {
    TopLeft = 0,
    TopRight = 1,
    BottomLeft = 2,
    BottomRight = 3,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::TopLeft,
        Quadrant::TopRight,
        Quadrant::BottomLeft,
        Quadrant::BottomRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Quadrant containing pixel `(x, y)` of a `width`x`height` frame.
    pub fn containing(x: usize, y: usize, width: usize, height: usize) -> Self {
        let right = x >= width / 2;
        let bottom = y >= height / 2;
        match (bottom, right) {
            (false, false) => Quadrant::TopLeft,
            (false, true) => Quadrant::TopRight,
            (true, false) => Quadrant::BottomLeft,
            (true, true) => Quadrant::BottomRight,
        }
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.index())
    }
}

/// A subset of quadrants, stored as a 4-bit mask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct QuadrantSet(u8);

impl QuadrantSet {
    pub const EMPTY: QuadrantSet = QuadrantSet(0);
    pub const ALL: QuadrantSet = QuadrantSet(0b1111);

    pub fn from_bits(bits: u8) -> Self {
        QuadrantSet(bits & 0b1111)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn from_flags(flags: [bool; 4]) -> Self {
        flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .fold(Self::EMPTY, |s, (i, _)| s.with(Quadrant::ALL[i]))
    }

    pub fn with(self, q: Quadrant) -> Self {
        QuadrantSet(self.0 | 1 << q.index())
    }

    pub fn insert(&mut self, q: Quadrant) {
        *self = self.with(q);
    }

    pub fn contains(self, q: Quadrant) -> bool {
        self.0 & (1 << q.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn intersection(self, other: Self) -> Self {
        QuadrantSet(self.0 & other.0)
    }

    pub fn union(self, other: Self) -> Self {
        QuadrantSet(self.0 | other.0)
    }

    pub fn is_subset(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Quadrant> {
        Quadrant::ALL.into_iter().filter(move |q| self.contains(*q))
    }
}

impl FromIterator<Quadrant> for QuadrantSet {
    fn from_iter<I: IntoIterator<Item = Quadrant>>(iter: I) -> Self {
        iter.into_iter().fold(Self::EMPTY, QuadrantSet::with)
    }
}

/// `q0|q2` form; the empty set is the empty string.
impl fmt::Display for QuadrantSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for q in self.iter() {
            if !first {
                f.write_str("|")?;
            }
            write!(f, "{q}")?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for QuadrantSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self::EMPTY);
        }
        s.split('|')
            .map(|tok| match tok.trim() {
                "q0" => Ok(Quadrant::TopLeft),
                "q1" => Ok(Quadrant::TopRight),
                "q2" => Ok(Quadrant::BottomLeft),
                "q3" => Ok(Quadrant::BottomRight),
                other => Err(format!("unknown quadrant token {other:?}")),
            })
            .collect()
    }
}

impl Serialize for QuadrantSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter().map(Quadrant::index))
    }
}

/// A relative margin held in basis points (2000 = 20%), so the quadrant
/// comparison stays in exact integer arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Margin(u32);

impl Margin {
    pub fn from_basis_points(bp: u32) -> Self {
        Margin(bp)
    }

    pub fn from_fraction(fraction: f64) -> Result<Self, DetectError> {
        let bp = (fraction * 10_000.0).round();
        if !(fraction.is_finite() && bp >= 1.0 && bp <= u32::MAX as f64) {
            return Err(DetectError::Config(format!(
                "ratio threshold must be positive, got {fraction}"
            )));
        }
        Ok(Margin(bp as u32))
    }

    pub fn basis_points(self) -> u32 {
        self.0
    }

    pub fn as_fraction(self) -> f64 {
        f64::from(self.0) / 10_000.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiConfig {
    /// A quadrant is of interest when its mean is at least `1 + ratio`
    /// times the frame mean.
    pub ratio_threshold: Margin,
    /// Frames darker than this on average are reported negative outright.
    pub mean_floor: f64,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            ratio_threshold: Margin::from_basis_points(2000),
            mean_floor: 1.0,
        }
    }
}

impl RoiConfig {
    pub fn new(ratio_threshold: f64, mean_floor: f64) -> Result<Self, DetectError> {
        if !(mean_floor.is_finite() && mean_floor >= 0.0) {
            return Err(DetectError::Config(format!(
                "mean_floor must be nonnegative, got {mean_floor}"
            )));
        }
        Ok(Self {
            ratio_threshold: Margin::from_fraction(ratio_threshold)?,
            mean_floor,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoiResult {
    pub positive: bool,
    /// Ordered top-left, top-right, bottom-left, bottom-right.
    pub quadrant_flags: [bool; 4],
    pub frame_mean: f64,
    pub quadrant_means: [f64; 4],
}

impl RoiResult {
    pub fn flagged(&self) -> QuadrantSet {
        QuadrantSet::from_flags(self.quadrant_flags)
    }
}

/// Quadrant region-of-interest detector.
pub fn method_b(frame: &GrayFrame, config: &RoiConfig) -> Result<RoiResult, DetectError> {
    frame.ensure_sensor_size()?;
    let (w, h) = (frame.width(), frame.height());
    let (hw, hh) = (w / 2, h / 2);

    let mut sums = [0u64; 4];
    for (y, row) in frame.data().chunks_exact(w).enumerate() {
        let band = if y < hh { 0 } else { 2 };
        let left: u64 = row[..hw].iter().map(|&v| u64::from(v)).sum();
        let right: u64 = row[hw..].iter().map(|&v| u64::from(v)).sum();
        sums[band] += left;
        sums[band + 1] += right;
    }

    let total: u64 = sums.iter().sum();
    let n_frame = (w * h) as u64;
    let n_quad = (hw * hh) as u64;
    let frame_mean = total as f64 / n_frame as f64;
    let quadrant_means = sums.map(|s| s as f64 / n_quad as f64);

    let mut quadrant_flags = [false; 4];
    if (total as f64) >= config.mean_floor * n_frame as f64 {
        // sum_q / n_quad >= (1 + bp/10^4) * total / n_frame, cross-multiplied.
        let scale = 10_000u128;
        let factor = scale + u128::from(config.ratio_threshold.basis_points());
        let rhs = factor * u128::from(total) * u128::from(n_quad);
        for (flag, &s) in quadrant_flags.iter_mut().zip(&sums) {
            *flag = scale * u128::from(s) * u128::from(n_frame) >= rhs;
        }
    }

    Ok(RoiResult {
        positive: quadrant_flags.iter().any(|&f| f),
        quadrant_flags,
        frame_mean,
        quadrant_means,
    })
}
