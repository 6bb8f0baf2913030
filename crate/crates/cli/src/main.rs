//! `heatwatch` command-line tool.
//!
//! Exit status: 0 on success, 1 when `bench` misses a latency budget by more
//! than 2x, 2 on bad usage or input, 3 when a node aborts through its failsafe.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use heatwatch_core::atomic::write_atomic;
use heatwatch_core::eval::{bench, load_dataset, load_frames, run_eval, BudgetVerdict, EvalReport, Method};
use heatwatch_core::frame::{preprocess, read_pnm, write_pgm, GaussianKernel};
use heatwatch_core::synth::{generate_sequence, Scene};
use heatwatch_core::{DetectorConfig, Pipeline};
use heatwatch_node::{run_machine_sim, MachineSimConfig, Node, NodeConfig};

const EXIT_BUDGET: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_FAILSAFE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "heatwatch",
    version,
    about = "Human-presence detection on 160x120 thermal frames"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a PPM/PGM frame to a smoothed grayscale PGM.
    Preprocess {
        /// Input PPM or PGM file.
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Output PGM file.
        #[arg(long = "out", value_name = "PATH")]
        output: PathBuf,
        /// Gaussian kernel size (odd, at least 1).
        #[arg(long, default_value_t = GaussianKernel::DEFAULT_SIZE)]
        kernel: usize,
        /// Gaussian standard deviation in pixels.
        #[arg(long, default_value_t = GaussianKernel::DEFAULT_SIGMA)]
        sigma: f64,
    },
    /// Run the hybrid detector over a frame or a directory of frames and
    /// print one JSON detection per frame.
    Detect {
        /// A PPM/PGM file, or a directory replayed in file-name order.
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        #[command(flatten)]
        detector: DetectorArgs,
    },
    /// Score detectors against an annotated manifest.
    Eval {
        /// manifest.csv with columns frame,label,quadrants.
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::All)]
        method: MethodArg,
        /// Also write the machine-readable report here.
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
        #[command(flatten)]
        detector: DetectorArgs,
    },
    /// Render a synthetic thermal sequence with a manifest.
    Synth {
        /// walkthrough-42, empty-room or static-worker.
        #[arg(long)]
        scene: String,
        #[arg(long)]
        frames: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory, created if missing.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Per-frame latency benchmark over preloaded frames.
    Bench {
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Hybrid)]
        method: MethodArg,
        /// Passes over the frame set, each with a fresh detector.
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        #[command(flatten)]
        detector: DetectorArgs,
    },
    /// Run a safety node from a config file.
    Node {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
    /// Run a robot-controller simulator.
    MachineSim {
        /// Address to listen on, host:port.
        #[arg(long)]
        listen: String,
        #[arg(long, default_value = "machine")]
        id: String,
        /// Append commands to this CSV log.
        #[arg(long, value_name = "PATH")]
        log: Option<PathBuf>,
        /// Delay before each ack, in milliseconds.
        #[arg(long, default_value_t = 0)]
        ack_delay_ms: u64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    A,
    B,
    Hybrid,
    All,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::A => vec![Method::A],
            MethodArg::B => vec![Method::B],
            MethodArg::Hybrid => vec![Method::Hybrid],
            MethodArg::All => Method::ALL.to_vec(),
        }
    }
}

#[derive(Args)]
struct DetectorArgs {
    /// Gaussian kernel size (odd).
    #[arg(long, default_value_t = GaussianKernel::DEFAULT_SIZE)]
    kernel: usize,
    /// Gaussian standard deviation.
    #[arg(long, default_value_t = GaussianKernel::DEFAULT_SIGMA)]
    sigma: f64,
    /// Method A: per-pixel difference above which a pixel is active.
    #[arg(long, default_value_t = 25)]
    pixel_threshold: u8,
    /// Method A: fraction of active pixels that makes a frame positive.
    #[arg(long, default_value_t = 0.05)]
    active_fraction: f64,
    /// Method B: margin by which a quadrant mean must exceed the frame mean.
    #[arg(long, default_value_t = 0.20)]
    ratio_threshold: f64,
    /// Method B: frames with a lower mean are negative outright.
    #[arg(long, default_value_t = 1.0)]
    mean_floor: f64,
}

impl DetectorArgs {
    fn config(&self) -> Result<DetectorConfig, Failure> {
        let config = DetectorConfig {
            kernel_size: self.kernel,
            kernel_sigma: self.sigma,
            pixel_diff_threshold: self.pixel_threshold,
            active_fraction: self.active_fraction,
            ratio_threshold: self.ratio_threshold,
            mean_floor: self.mean_floor,
        };
        config.validate().map_err(input)?;
        Ok(config)
    }
}

struct Failure {
    code: u8,
    message: String,
}

fn input(e: impl Display) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: e.to_string(),
    }
}

fn in_file(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| input(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = match cli.command {
        Command::Node { .. } | Command::MachineSim { .. } => "info",
        _ => "warn",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level)).init();

    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("heatwatch: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Preprocess {
            input: src,
            output,
            kernel,
            sigma,
        } => {
            let kernel = GaussianKernel::new(kernel, sigma).map_err(input)?;
            let bytes = std::fs::read(&src).map_err(in_file(&src))?;
            let frame = read_pnm(&bytes)
                .map_err(|e| input(format!("{}: {e}", src.display())))?
                .into_raw();
            write_atomic(&output, &write_pgm(&preprocess(&frame, &kernel))).map_err(in_file(&output))?;
            Ok(0)
        }
        Command::Detect { input: src, detector } => detect(&src, &detector.config()?),
        Command::Eval {
            manifest,
            method,
            csv,
            detector,
        } => {
            let config = detector.config()?;
            let dataset = load_dataset(&manifest).map_err(input)?;
            let mut methods = Vec::new();
            for m in method.methods() {
                let run = run_eval(&dataset, &config, m).map_err(input)?;
                methods.push(run.report().map_err(input)?);
            }
            let report = EvalReport {
                dataset: dataset.name().to_string(),
                config,
                methods,
            };
            print!("{}", report.render_text());
            if let Some(path) = csv {
                write_atomic(&path, report.render_csv().as_bytes()).map_err(in_file(&path))?;
            }
            Ok(0)
        }
        Command::Synth {
            scene,
            frames,
            seed,
            out,
        } => {
            if frames == 0 {
                return Err(input("--frames must be at least 1"));
            }
            let scene = Scene::standard(&scene).map_err(input)?;
            let result = generate_sequence(&scene, frames, seed, &out).map_err(input)?;
            println!("{}", result.manifest_path.display());
            println!("sha256 {}", result.content_sha256);
            Ok(0)
        }
        Command::Bench {
            manifest,
            method,
            repeat,
            detector,
        } => {
            if repeat == 0 {
                return Err(input("--repeat must be at least 1"));
            }
            let config = detector.config()?;
            let dataset = load_dataset(&manifest).map_err(input)?;
            let frames = load_frames(&dataset).map_err(input)?;
            let mut failed = false;
            for m in method.methods() {
                let stats = bench(&frames, &config, m, repeat).map_err(input)?;
                let budget = m.latency_budget_ms();
                let verdict = BudgetVerdict::judge(stats.p99_ms, budget);
                println!("{}: {} frames x {repeat}", m.title(), frames.len());
                println!(
                    "  latency ms: min {:.3}  mean {:.3}  max {:.3}  p99 {:.3}",
                    stats.min_ms, stats.mean_ms, stats.max_ms, stats.p99_ms
                );
                println!(
                    "  budget {budget} ms: {} (p99 {:.3} ms)",
                    verdict.as_str(),
                    stats.p99_ms
                );
                failed |= verdict == BudgetVerdict::Fail;
            }
            Ok(if failed { EXIT_BUDGET } else { 0 })
        }
        Command::Node { config } => {
            let config = NodeConfig::load(&config).map_err(input)?;
            let mut node = Node::from_config(config).map_err(input)?;
            match node.run() {
                Ok(summary) => {
                    println!(
                        "frames {} positives {} commands {} final {}",
                        summary.frames,
                        summary.positives,
                        summary.commands.len(),
                        summary.final_level
                    );
                    Ok(0)
                }
                Err(e) if e.is_failsafe() => Err(Failure {
                    code: EXIT_FAILSAFE,
                    message: e.to_string(),
                }),
                Err(e) => Err(input(e)),
            }
        }
        Command::MachineSim {
            listen,
            id,
            log,
            ack_delay_ms,
        } => {
            let config = MachineSimConfig {
                machine_id: id,
                log_path: log,
                ack_delay: Duration::from_millis(ack_delay_ms),
            };
            run_machine_sim(listen.as_str(), config).map_err(|e| input(format!("{listen}: {e}")))?;
            Ok(0)
        }
    }
}

fn detect(src: &Path, config: &DetectorConfig) -> Result<u8, Failure> {
    let files = if src.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(src)
            .map_err(in_file(src))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
                p.is_file() && matches!(ext.to_ascii_lowercase().as_str(), "ppm" | "pgm")
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(input(format!("{}: no .ppm or .pgm files", src.display())));
        }
        files
    } else {
        vec![src.to_path_buf()]
    };

    let mut pipeline = Pipeline::new(config).map_err(input)?;
    for path in files {
        let bytes = std::fs::read(&path).map_err(in_file(&path))?;
        let frame = read_pnm(&bytes)
            .map_err(|e| input(format!("{}: {e}", path.display())))?
            .into_raw();
        let detection = pipeline
            .process(&frame)
            .map_err(|e| input(format!("{}: {e}", path.display())))?;
        let mut value = serde_json::to_value(&detection).expect("detections serialize");
        value["frame"] = path.file_name().map(|n| n.to_string_lossy().into_owned()).into();
        println!("{value}");
    }
    Ok(0)
}
