//! Detector evaluation against annotated datasets.

mod dataset;
mod report;

pub use dataset::{load_dataset, write_manifest, AnnotatedDataset, DatasetEntry, Label};
pub use report::{format_cell, EvalReport, MethodReport, CSV_HEADER};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::detect::DetectError;
use crate::frame::{read_pnm, FrameError, RawFrame};
use crate::pipeline::{DetectorConfig, Pipeline};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("manifest row {row}: {message}")]
    Manifest { row: usize, message: String },
    #[error("manifest row {row}: frame file {} not found", path.display())]
    MissingFrame { row: usize, path: PathBuf },
    #[error("manifest {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {} has no rows", path.display())]
    Empty { path: PathBuf },
    #[error("frame {index} ({}): {source}", path.display())]
    Frame {
        index: usize,
        path: PathBuf,
        #[source]
        source: FrameError,
    },
    #[error("frame {index}: {source}")]
    Detect {
        index: usize,
        #[source]
        source: DetectError,
    },
    #[error("invalid detector configuration: {0}")]
    Config(#[from] DetectError),
    #[error("cannot score an empty confusion matrix")]
    EmptyMatrix,
    #[error("{frames} frames but {labels} labels")]
    LabelCount { frames: usize, labels: usize },
    #[error("repeat count must be at least 1")]
    ZeroRepeat,
}

/// Which detector an evaluation exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    A,
    B,
    Hybrid,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::A, Method::B, Method::Hybrid];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::A => "a",
            Method::B => "b",
            Method::Hybrid => "hybrid",
        }
    }

    /// Per-frame maximum latency the reference Raspberry Pi deployment met.
    pub fn latency_budget_ms(self) -> f64 {
        match self {
            Method::A => 7.0,
            Method::B => 6.0,
            Method::Hybrid => 10.0,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Method::A => "Method A",
            Method::B => "Method B",
            Method::Hybrid => "Both Methods",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Method::A),
            "b" => Ok(Method::B),
            "hybrid" => Ok(Method::Hybrid),
            other => Err(format!("unknown method {other:?} (expected a, b or hybrid)")),
        }
    }
}

/// A percentage held in hundredths, rounded half away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percent(u64);

impl Percent {
    /// `100 * num / den` to two decimals. `den` must be nonzero.
    pub fn of(num: u64, den: u64) -> Self {
        assert!(den > 0, "percentage of an empty total");
        // round(10^4 * num / den) with ties away from zero, in integers.
        let scaled = u128::from(num) * 10_000 * 2 + u128::from(den);
        Percent((scaled / (2 * u128::from(den))) as u64)
    }

    pub fn hundredths(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn record(&mut self, predicted: bool, label: Label) {
        match (predicted, label) {
            (true, Label::Positive) => self.tp += 1,
            (true, Label::Negative) => self.fp += 1,
            (false, Label::Positive) => self.fn_ += 1,
            (false, Label::Negative) => self.tn += 1,
        }
    }

    pub fn predicted_positive(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn predicted_negative(&self) -> u64 {
        self.fn_ + self.tn
    }

    pub fn actual_positive(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn actual_negative(&self) -> u64 {
        self.fp + self.tn
    }
}

/// `100 * (TP + TN) / total`, two decimals.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<Percent, EvalError> {
    match cm.total() {
        0 => Err(EvalError::EmptyMatrix),
        total => Ok(Percent::of(cm.tp + cm.tn, total)),
    }
}

/// Summary statistics over per-frame latencies, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub samples: usize,
    pub min_ms: f64,
    pub mean_ms: f64,
    pub max_ms: f64,
    /// Nearest-rank 99th percentile.
    pub p99_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(samples_ms: &[f64]) -> Option<Self> {
        if samples_ms.is_empty() {
            return None;
        }
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let rank = ((0.99 * n as f64).ceil() as usize).clamp(1, n);
        Some(Self {
            samples: n,
            min_ms: sorted[0],
            mean_ms: sorted.iter().sum::<f64>() / n as f64,
            max_ms: sorted[n - 1],
            p99_ms: sorted[rank - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetVerdict {
    Pass,
    /// Over budget but within twice the budget.
    Warn,
    Fail,
}

impl BudgetVerdict {
    pub fn judge(p99_ms: f64, budget_ms: f64) -> Self {
        if p99_ms <= budget_ms {
            BudgetVerdict::Pass
        } else if p99_ms <= 2.0 * budget_ms {
            BudgetVerdict::Warn
        } else {
            BudgetVerdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BudgetVerdict::Pass => "PASS",
            BudgetVerdict::Warn => "WARN",
            BudgetVerdict::Fail => "FAIL",
        }
    }
}

/// Outcome of one pass over a dataset.
#[derive(Debug, Clone)]
pub struct EvalRun {
    pub method: Method,
    pub matrix: ConfusionMatrix,
    pub predictions: Vec<bool>,
    pub latencies_ms: Vec<f64>,
}

impl EvalRun {
    pub fn latency(&self) -> Option<LatencyStats> {
        LatencyStats::from_samples(&self.latencies_ms)
    }

    pub fn report(&self) -> Result<MethodReport, EvalError> {
        MethodReport::new(self.method, self.matrix, self.latency())
    }
}

/// Reads and validates one dataset frame. PGM files are expanded to equal
/// RGB channels.
pub fn load_frame(path: &std::path::Path, index: usize) -> Result<RawFrame, EvalError> {
    let bytes = std::fs::read(path).map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let frame = read_pnm(&bytes)
        .map(|img| img.into_raw())
        .and_then(|f| f.ensure_sensor_size().map(|_| f))
        .map_err(|source| EvalError::Frame {
            index,
            path: path.to_path_buf(),
            source,
        })?;
    Ok(frame)
}

/// Loads every frame of `dataset` up front.
pub fn load_frames(dataset: &AnnotatedDataset) -> Result<Vec<RawFrame>, EvalError> {
    dataset
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| load_frame(&e.path, i))
        .collect()
}

/// Runs `method` over the dataset in manifest order with a fresh detector.
///
/// Only preprocessing and detection are timed; frame decoding happens
/// before the clock starts.
pub fn run_eval(dataset: &AnnotatedDataset, config: &DetectorConfig, method: Method) -> Result<EvalRun, EvalError> {
    let mut pipeline = Pipeline::new(config)?;
    let mut run = EvalRun {
        method,
        matrix: ConfusionMatrix::default(),
        predictions: Vec::with_capacity(dataset.len()),
        latencies_ms: Vec::with_capacity(dataset.len()),
    };
    for (index, entry) in dataset.entries().iter().enumerate() {
        let frame = load_frame(&entry.path, index)?;
        let (predicted, ms) =
            timed_predict(&mut pipeline, &frame, method).map_err(|source| EvalError::Detect { index, source })?;
        run.matrix.record(predicted, entry.label);
        run.predictions.push(predicted);
        run.latencies_ms.push(ms);
    }
    Ok(run)
}

/// [`run_eval`] over frames already in memory.
pub fn run_eval_frames(
    frames: &[RawFrame],
    labels: &[Label],
    config: &DetectorConfig,
    method: Method,
) -> Result<EvalRun, EvalError> {
    if frames.len() != labels.len() {
        return Err(EvalError::LabelCount {
            frames: frames.len(),
            labels: labels.len(),
        });
    }
    let mut pipeline = Pipeline::new(config)?;
    let mut run = EvalRun {
        method,
        matrix: ConfusionMatrix::default(),
        predictions: Vec::with_capacity(frames.len()),
        latencies_ms: Vec::with_capacity(frames.len()),
    };
    for (index, (frame, &label)) in frames.iter().zip(labels).enumerate() {
        let (predicted, ms) =
            timed_predict(&mut pipeline, frame, method).map_err(|source| EvalError::Detect { index, source })?;
        run.matrix.record(predicted, label);
        run.predictions.push(predicted);
        run.latencies_ms.push(ms);
    }
    Ok(run)
}

fn timed_predict(pipeline: &mut Pipeline, frame: &RawFrame, method: Method) -> Result<(bool, f64), DetectError> {
    let start = Instant::now();
    let predicted = match method {
        Method::A => pipeline.process_motion(frame)?.positive,
        Method::B => pipeline.process_roi(frame)?.positive,
        Method::Hybrid => pipeline.process(frame)?.positive,
    };
    Ok((predicted, start.elapsed().as_secs_f64() * 1e3))
}

/// In-memory latency benchmark: `repeat` passes over `frames`, each with a
/// fresh detector.
pub fn bench(
    frames: &[RawFrame],
    config: &DetectorConfig,
    method: Method,
    repeat: usize,
) -> Result<LatencyStats, EvalError> {
    if repeat == 0 {
        return Err(EvalError::ZeroRepeat);
    }
    let mut samples = Vec::with_capacity(frames.len() * repeat);
    for _ in 0..repeat {
        let mut pipeline = Pipeline::new(config)?;
        for (index, frame) in frames.iter().enumerate() {
            let (_, ms) =
                timed_predict(&mut pipeline, frame, method).map_err(|source| EvalError::Detect { index, source })?;
            samples.push(ms);
        }
    }
    LatencyStats::from_samples(&samples).ok_or(EvalError::EmptyMatrix)
}
