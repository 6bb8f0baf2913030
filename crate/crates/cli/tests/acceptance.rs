//! Acceptance gate. Prints one `criterion N: PASS|FAIL` line per criterion
//! and exits non-zero if any fails.

#[path = "common/oracle.rs"]
mod oracle;

use std::net::TcpListener;
use std::panic::catch_unwind;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitCode, Stdio};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use heatwatch_core::detect::{method_b, HybridDetector, MotionDetector, QuadrantSet, RoiConfig};
use heatwatch_core::eval::{
    accuracy, format_cell, load_dataset, run_eval, write_manifest, ConfusionMatrix, EvalReport, Label, Method,
    MethodReport,
};
use heatwatch_core::frame::{
    read_pgm, read_ppm, write_pgm, write_ppm, GrayFrame, RawFrame, FRAME_HEIGHT, FRAME_PIXELS, FRAME_WIDTH,
};
use heatwatch_core::synth::{generate_sequence, Scene};
use heatwatch_core::zones::{
    occupancy_from_votes, safety_step, MotionAction, Occupancy, Reason, SafetyConfig, SafetyLevel, SafetyState,
    ZonePolicy,
};
use heatwatch_core::DetectorConfig;
use heatwatch_node::machine::read_log;
use heatwatch_node::protocol::{
    decode, encode, Ack, DetectionEvent, Heartbeat, Message, SafetyCommand, StatusDoc, StatusRequest,
};
use heatwatch_node::source::{FrameSource, SourceError, SyntheticSource};
use heatwatch_node::{spawn_machine_sim, MachineSimConfig, Node, NodeConfig, SourceConfig};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_heatwatch");
const MANIFEST_SHA256: &str = "6781c47803f00149a389fcd6318e6e55e7bc64f6e5538829022ffb96020d41f3";
const CONTENT_SHA256: &str = "be89f97572615dc602a4c1ac151503389a93d15f8fb8a6d4d5e932c634d43206";
const RELEASE: u32 = 8;

fn main() -> ExitCode {
    type Check = fn() -> String;
    let criteria: [(&str, Option<u64>, Check); 10] = [
        ("accuracy arithmetic", Some(1), accuracy_tables),
        ("report cells", None, report_cells),
        ("method A boundary", Some(1), method_a_boundary),
        ("method B suite", Some(5), method_b_suite),
        ("hybrid fusion", None, hybrid_fusion),
        ("oracle equivalence", Some(10), oracle_equivalence),
        ("latency budget", Some(30), latency_budget),
        ("fail-safe properties", None, failsafe_properties),
        ("round trips", None, round_trips),
        ("end to end", Some(20), end_to_end),
    ];

    // Failures are reported through the criterion line instead.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (i, (name, limit_s, check)) in criteria.into_iter().enumerate() {
        let n = i + 1;
        let start = Instant::now();
        let outcome = catch_unwind(check);
        let secs = start.elapsed().as_secs_f64();
        let verdict = match outcome {
            Ok(detail) => match limit_s {
                Some(limit) if secs > limit as f64 => Err(format!("{detail}; took {secs:.2}s, limit {limit}s")),
                _ => Ok(detail),
            },
            Err(panic) => Err(panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        match verdict {
            Ok(detail) => println!("criterion {n}: PASS {name}: {detail} ({secs:.2}s)"),
            Err(why) => {
                println!("criterion {n}: FAIL {name}: {why} ({secs:.2}s)");
                failed.push(n);
            }
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}

/// The three published matrices as (tp, fp, fn, tn).
const TABLES: [(u64, u64, u64, u64); 3] = [(1057, 44, 12, 0), (1027, 11, 28, 48), (1040, 16, 17, 41)];

fn accuracy_tables() -> String {
    let want = ["94.97", "96.50", "97.04"];
    let mut got = Vec::new();
    for ((tp, fp, fn_, tn), want) in TABLES.into_iter().zip(want) {
        let acc = accuracy(&ConfusionMatrix::new(tp, fp, fn_, tn)).unwrap().to_string();
        // Hundredths rounded half up in integers.
        let total = tp + fp + fn_ + tn;
        let h = (20_000 * (tp + tn) + total) / (2 * total);
        assert_eq!(format!("{}.{:02}", h / 100, h % 100), want, "integer check");
        assert_eq!(acc, want);
        got.push(acc);
    }
    got.join(" / ")
}

fn report_cells() -> String {
    let (a, h) = (TABLES[0], TABLES[2]);
    let report = EvalReport {
        dataset: "published".into(),
        config: DetectorConfig::default(),
        methods: vec![
            MethodReport::new(Method::A, ConfusionMatrix::new(a.0, a.1, a.2, a.3), None).unwrap(),
            MethodReport::new(Method::Hybrid, ConfusionMatrix::new(h.0, h.1, h.2, h.3), None).unwrap(),
        ],
    };
    let text = report.render_text();
    for cell in [
        "1057 TP (94.97%)",
        "41 TN (3.68%)",
        "44 FP (3.95%)",
        "16 FP (1.44%)",
        "17 FN (1.53%)",
    ] {
        assert!(text.contains(cell), "missing {cell:?} in\n{text}");
    }
    assert_eq!(format_cell(1057, "TP", 1113), "1057 TP (94.97%)");
    assert_eq!(format_cell(41, "TN", 1114), "41 TN (3.68%)");
    "\"1057 TP (94.97%)\" and \"41 TN (3.68%)\" rendered".into()
}

fn gray(f: impl FnMut(usize, usize) -> u8) -> GrayFrame {
    GrayFrame::from_fn(FRAME_WIDTH, FRAME_HEIGHT, f)
}

fn method_a_boundary() -> String {
    let zero = gray(|_, _| 0);
    for k in [0, 959, 960, 961, FRAME_PIXELS] {
        let frame = gray(|x, y| if y * FRAME_WIDTH + x < k { 26 } else { 0 });
        let mut det = MotionDetector::default();
        assert!(!det.step(&zero).unwrap().positive, "bootstrap frame");
        let r = det.step(&frame).unwrap();
        assert_eq!(r.active_pixel_count as usize, k);
        assert_eq!(r.positive, k >= 960, "k={k}");
        let bg = det.background().unwrap();
        if r.positive {
            assert_eq!(bg.data(), zero.data(), "frozen after positive, k={k}");
        } else {
            assert_eq!(bg.data(), frame.data(), "replaced after negative, k={k}");
        }
    }
    "positive iff k >= 960 at k in {0,959,960,961,19200}; background replaced/frozen bit-exactly".into()
}

fn quadrant(x: usize, y: usize) -> usize {
    usize::from(x >= FRAME_WIDTH / 2) + 2 * usize::from(y >= FRAME_HEIGHT / 2)
}

fn blocks(values: [u8; 4]) -> GrayFrame {
    gray(|x, y| values[quadrant(x, y)])
}

fn method_b_suite() -> String {
    let roi = RoiConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);

    for _ in 0..50 {
        let level = rng.next_u32() as u8;
        assert!(
            !method_b(&gray(|_, _| level), &roi).unwrap().positive,
            "uniform {level}"
        );
    }

    for q in 0..4 {
        let mut values = [100; 4];
        values[q] = 200;
        let mut want = [false; 4];
        want[q] = true;
        assert_eq!(method_b(&blocks(values), &roi).unwrap().quadrant_flags, want);
    }

    // Three quadrants at u, one at v: frame sum 4800(3u+v), so the 20% rule
    // is 7v >= 9u for the odd quadrant and u >= 3v for the rest.
    for _ in 0..1000 {
        let (u, v, odd) = (rng.next_u32() as u8, rng.next_u32() as u8, rng.next_u32() as usize % 4);
        let mut values = [u; 4];
        values[odd] = v;
        let flags = method_b(&blocks(values), &roi).unwrap().quadrant_flags;
        let (u, v) = (u32::from(u), u32::from(v));
        for (q, &flag) in flags.iter().enumerate() {
            let want = 3 * u + v >= 4 && if q == odd { 7 * v >= 9 * u } else { u >= 3 * v };
            assert_eq!(flag, want, "u={u} v={v} odd={odd} q={q}");
        }
    }

    let perms: Vec<[usize; 4]> = (0..256)
        .map(|i| [i & 3, (i >> 2) & 3, (i >> 4) & 3, (i >> 6) & 3])
        .filter(|p| (0..4).all(|q| p.contains(&q)))
        .collect();
    assert_eq!(perms.len(), 24);
    let (hw, hh) = (FRAME_WIDTH / 2, FRAME_HEIGHT / 2);
    for _ in 0..100 {
        let levels: [u32; 4] = std::array::from_fn(|_| 20 + rng.next_u32() % 200);
        let noise: Vec<u8> = (0..FRAME_PIXELS).map(|_| (rng.next_u32() % 40) as u8).collect();
        let frame = gray(|x, y| (levels[quadrant(x, y)] + u32::from(noise[y * FRAME_WIDTH + x])) as u8);
        let perm = perms[rng.next_u32() as usize % 24];
        // Block q of `frame` lands at block perm[q].
        let moved = gray(|x, y| {
            let dst = quadrant(x, y);
            let src = perm.iter().position(|&d| d == dst).unwrap();
            frame.get((src % 2) * hw + x % hw, (src / 2) * hh + y % hh)
        });
        let a = method_b(&frame, &roi).unwrap();
        let b = method_b(&moved, &roi).unwrap();
        assert_eq!(a.positive, b.positive);
        for (q, &to) in perm.iter().enumerate() {
            assert_eq!(a.quadrant_flags[q], b.quadrant_flags[to]);
        }
    }
    "50 uniform levels, 4 one-hot layouts, 1000 margin pairs, 100 permuted frames".into()
}

fn hybrid_fusion() -> String {
    let roi = RoiConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut positives = 0;
    for _ in 0..500 {
        let mut hybrid = HybridDetector::new(MotionDetector::default(), roi.clone());
        let mut alone = MotionDetector::default();
        for i in 0..20 {
            let level = (rng.next_u32() % 80) as u8;
            let hot = rng.next_u32() as u8;
            let (ox, oy, size) = (
                rng.next_u32() as usize % 150,
                rng.next_u32() as usize % 110,
                rng.next_u32() as usize % 60,
            );
            let frame = gray(|x, y| {
                if (ox..ox + size).contains(&x) && (oy..oy + size).contains(&y) {
                    hot
                } else {
                    level
                }
            });
            let d = hybrid.step(&frame).unwrap();
            let a = alone.step(&frame).unwrap();
            let b = method_b(&frame, &roi).unwrap();
            assert_eq!(d.frame_seq, i + 1);
            assert_eq!((&d.method_a, &d.method_b), (&a, &b));
            assert_eq!(d.positive, a.positive || b.positive);
            positives += u32::from(d.positive);
        }
    }
    format!("500 sequences x 20 frames, hybrid == A || B on every frame ({positives} positive)")
}

fn synth_walkthrough(frames: u32, dir: &Path) -> PathBuf {
    let out = generate_sequence(&Scene::standard("walkthrough-42").unwrap(), frames, 42, dir).unwrap();
    out.manifest_path
}

fn oracle_equivalence() -> String {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_walkthrough(200, dir.path());
    let (verdicts, truth) = oracle::run_manifest(&manifest);
    let ds = load_dataset(&manifest).unwrap();
    let config = DetectorConfig::default();
    let mut shown = Vec::new();
    for m in Method::ALL {
        let predicted: Vec<bool> = verdicts
            .iter()
            .map(|v| match m {
                Method::A => v.a,
                Method::B => v.b,
                Method::Hybrid => v.a || v.b,
            })
            .collect();
        let [tp, fp, fn_, tn] = oracle::confusion(&predicted, &truth);
        let run = run_eval(&ds, &config, m).unwrap();
        assert_eq!(run.matrix, ConfusionMatrix::new(tp, fp, fn_, tn), "{m}");
        assert_eq!(run.predictions, predicted, "{m}");
        shown.push(format!("{m} {tp}/{fp}/{fn_}/{tn}"));
    }
    format!("tp/fp/fn/tn identical: {}", shown.join(", "))
}

fn latency_budget() -> String {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_walkthrough(1000, dir.path());
    let out = Command::new(BIN)
        .args(["bench", "--method", "all", "--manifest"])
        .arg(&manifest)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_ne!(out.status.code(), Some(1), "over 2x budget:\n{stdout}");
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("1000 frames"), "{stdout}");

    let mut shown = Vec::new();
    let mut budget_lines = stdout.lines().filter_map(|l| l.trim().strip_prefix("budget "));
    for (m, want) in [("A", 7.0), ("B", 6.0), ("hybrid", 10.0)] {
        let line = budget_lines
            .next()
            .unwrap_or_else(|| panic!("no budget line for {m}:\n{stdout}"));
        let budget: f64 = line.split(' ').next().unwrap().parse().unwrap();
        let p99: f64 = line
            .rsplit("p99 ")
            .next()
            .unwrap()
            .trim_end_matches(" ms)")
            .parse()
            .unwrap();
        assert_eq!(budget, want);
        assert!(p99 <= 2.0 * budget, "{m} p99 {p99} ms");
        let note = if p99 > budget { " WARN" } else { "" };
        shown.push(format!("{m} p99 {p99:.3} <= {budget} ms{note}"));
    }
    shown.join(", ")
}

fn policy() -> ZonePolicy {
    ZonePolicy::new(qs("q0|q1"), qs("q1"), qs("q0"), MotionAction::Slow).unwrap()
}

fn qs(s: &str) -> QuadrantSet {
    s.parse().unwrap()
}

const LEVELS: [SafetyLevel; 3] = [SafetyLevel::Run, SafetyLevel::Slow, SafetyLevel::Stop];

/// One occupancy per demand: clear, caution, restricted, motion only.
const CLASSES: [Occupancy; 4] = [
    Occupancy::CLEAR,
    Occupancy {
        restricted_hit: false,
        caution_hit: true,
        motion_only: false,
    },
    Occupancy {
        restricted_hit: true,
        caution_hit: false,
        motion_only: false,
    },
    Occupancy {
        restricted_hit: false,
        caution_hit: false,
        motion_only: true,
    },
];

/// Checks every extension of the current history up to `left` more
/// frames; `run` counts trailing clear frames independently of the machine.
fn enumerate(state: SafetyState, run: u32, left: u32, config: &SafetyConfig, policy: &ZonePolicy) -> u64 {
    if left == 0 {
        return 0;
    }
    let mut visited = 0;
    for occ in CLASSES {
        let (next, t) = safety_step(state, occ, config, policy);
        let run = if occ == Occupancy::CLEAR { run + 1 } else { 0 };
        if next.level < state.level {
            assert!(run >= config.release_frames(), "released after {run} clear frames");
            assert_eq!(next.level as u8 + 1, state.level as u8);
        }
        assert_eq!(t.is_some(), next.level != state.level);
        visited += 1 + enumerate(next, run, left - 1, config, policy);
    }
    visited
}

struct Recording<S> {
    inner: S,
    calls: Arc<Mutex<Vec<Instant>>>,
}

impl<S: FrameSource> FrameSource for Recording<S> {
    fn next_frame(&mut self) -> Result<Option<RawFrame>, SourceError> {
        self.calls.lock().unwrap().push(Instant::now());
        self.inner.next_frame()
    }
}

struct Unplugged<S> {
    inner: S,
    at: u32,
    calls: u32,
}

impl<S: FrameSource> FrameSource for Unplugged<S> {
    fn next_frame(&mut self) -> Result<Option<RawFrame>, SourceError> {
        if self.calls == self.at {
            return Err(SourceError::Device("camera unplugged".into()));
        }
        self.calls += 1;
        self.inner.next_frame()
    }
}

fn node_config(machines: Vec<String>) -> NodeConfig {
    let mut c = NodeConfig::new(
        "mist-accept",
        SourceConfig::Synthetic {
            scene: "walkthrough-42".into(),
            seed: 42,
            frames: 200,
            fps: 1000.0,
        },
    );
    c.policy = policy();
    c.machines = machines;
    c.ack_timeout = Duration::from_secs(3);
    c
}

fn failsafe_properties() -> String {
    // Restricted occupancy stops at once, whatever came before.
    let mut stop_cases = 0;
    for action in [MotionAction::None, MotionAction::Slow, MotionAction::Stop] {
        let policy = ZonePolicy::new(qs("q0|q1"), qs("q1"), qs("q0"), action).unwrap();
        for release in [1, 2, RELEASE, 20] {
            let config = SafetyConfig::new(release).unwrap();
            for level in LEVELS {
                for clear_streak in (0..=release + 2).chain([u32::MAX]) {
                    for bits in 0..16u8 {
                        for motion in [false, true] {
                            let flagged = QuadrantSet::from_bits(bits);
                            let occ = occupancy_from_votes(flagged, motion, &policy);
                            let (next, _) = safety_step(SafetyState { level, clear_streak }, occ, &config, &policy);
                            if flagged.contains(heatwatch_core::Quadrant::TopRight) {
                                assert_eq!(next.level, SafetyLevel::Stop);
                                stop_cases += 1;
                            }
                        }
                    }
                }
            }
        }
    }

    let mut steps = 0;
    let policy = policy();
    for release in [3, RELEASE] {
        let config = SafetyConfig::new(release).unwrap();
        for level in LEVELS {
            steps += enumerate(SafetyState { level, clear_streak: 0 }, 0, 12, &config, &policy);
        }
    }

    // Frame N+1 is never requested before every machine acked frame N's command.
    let sims: Vec<_> = [80, 0]
        .iter()
        .enumerate()
        .map(|(i, &ms)| {
            let mut mc = MachineSimConfig::new(format!("arm-{i}"));
            mc.ack_delay = Duration::from_millis(ms);
            spawn_machine_sim("127.0.0.1:0", mc).unwrap()
        })
        .collect();
    let calls = Arc::new(Mutex::new(Vec::new()));
    let source = Recording {
        inner: SyntheticSource::standard("walkthrough-42", 42, 200).unwrap(),
        calls: Arc::clone(&calls),
    };
    let endpoints = sims.iter().map(|s| s.addr().to_string()).collect();
    let summary = Node::new(node_config(endpoints), Box::new(source))
        .unwrap()
        .run()
        .unwrap();
    let calls = calls.lock().unwrap();
    for sim in &sims {
        let acks = sim.acks();
        assert_eq!(acks.len(), summary.commands.len());
        for (seq, acked_at) in acks {
            assert!(
                calls[seq as usize] >= acked_at,
                "frame after {seq} requested before its ack"
            );
        }
    }

    // A dead source ends in a failsafe STOP one past the last frame.
    let dir = tempfile::tempdir().unwrap();
    let mut mc = MachineSimConfig::new("arm-f");
    mc.log_path = Some(dir.path().join("arm.csv"));
    let sim = spawn_machine_sim("127.0.0.1:0", mc).unwrap();
    let source = Unplugged {
        inner: SyntheticSource::standard("walkthrough-42", 42, 200).unwrap(),
        at: 120,
        calls: 0,
    };
    let err = Node::new(node_config(vec![sim.addr().to_string()]), Box::new(source))
        .unwrap()
        .run()
        .unwrap_err();
    assert!(err.is_failsafe(), "{err}");
    let last = *read_log(&dir.path().join("arm.csv")).unwrap().last().unwrap();
    assert_eq!(
        (last.frame_seq, last.level, last.reason),
        (121, SafetyLevel::Stop, Reason::Failsafe)
    );

    format!(
        "{stop_cases} restricted cases STOP; {steps} steps over sequences <= 12; \
         {} commands acked before next frame; source failure -> STOP@121",
        summary.commands.len()
    )
}

fn round_trips() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut messages = vec![
        Message::Hb(Heartbeat {}),
        Message::StatusReq(StatusRequest {}),
        Message::Ack(Ack {
            frame_seq: 0,
            error: None,
        }),
        Message::nack(u64::MAX, "bad \"line\"\n"),
    ];
    let edges = [0, 1, u64::from(u32::MAX), u64::MAX - 1, u64::MAX];
    for (i, &n) in edges.iter().enumerate() {
        messages.push(Message::Detection(DetectionEvent {
            node_id: format!("node-{i}"),
            frame_seq: n,
            ts_ms: edges[edges.len() - 1 - i],
            method_a: i % 2 == 0,
            method_b: true,
            positive: true,
            quadrants: vec![0, 1, 2, 3][..i % 5].to_vec(),
            active_pixels: [0, 1, u32::MAX][i % 3],
        }));
        messages.push(Message::Safety(SafetyCommand {
            node_id: "n".into(),
            frame_seq: n,
            level: LEVELS[i % 3],
            reason: [
                Reason::Clear,
                Reason::Motion,
                Reason::Caution,
                Reason::Restricted,
                Reason::Failsafe,
            ][i],
        }));
        messages.push(Message::Status(StatusDoc {
            node_id: "n".into(),
            frame_seq: n,
            level: LEVELS[i % 3],
            uptime_ms: n,
            frames: n,
            positives: n,
            commands: n,
        }));
    }
    for _ in 0..1000 {
        messages.push(Message::Ack(Ack {
            frame_seq: rng.next_u64(),
            error: None,
        }));
    }
    for m in &messages {
        let line = encode(m);
        assert!(line.ends_with('\n') && !line[..line.len() - 1].contains('\n'));
        assert_eq!(&decode(&line).unwrap(), m, "{line}");
    }

    for _ in 0..50 {
        let (w, h) = (1 + rng.next_u32() as usize % 200, 1 + rng.next_u32() as usize % 150);
        let mut data = vec![0u8; w * h * 3];
        rng.fill_bytes(&mut data);
        let rgb = RawFrame::new(w, h, data).unwrap();
        assert_eq!(read_ppm(&write_ppm(&rgb)).unwrap(), rgb);
        let g = GrayFrame::from_fn(w, h, |x, y| rgb.pixel(x, y)[0]);
        assert_eq!(read_pgm(&write_pgm(&g)).unwrap(), g);
    }

    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<(String, Label, QuadrantSet)> = (0..300)
        .map(|i| {
            let bits = (rng.next_u32() % 16) as u8;
            let label = if bits == 0 { Label::Negative } else { Label::Positive };
            (format!("f{i:04}.ppm"), label, QuadrantSet::from_bits(bits))
        })
        .collect();
    let blank = write_ppm(&RawFrame::filled(FRAME_WIDTH, FRAME_HEIGHT, [0; 3]));
    for (name, _, _) in &rows {
        std::fs::write(dir.path().join(name), &blank).unwrap();
    }
    std::fs::write(
        dir.path().join("manifest.csv"),
        write_manifest(rows.iter().map(|(n, l, q)| (n.as_str(), *l, *q))),
    )
    .unwrap();
    let ds = load_dataset(&dir.path().join("manifest.csv")).unwrap();
    let back: Vec<_> = ds
        .entries()
        .iter()
        .map(|e| (e.frame.clone(), e.label, e.quadrants))
        .collect();
    assert_eq!(back, rows);

    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let scene = Scene::standard("walkthrough-42").unwrap();
    let x = generate_sequence(&scene, 200, 42, a.path()).unwrap();
    let y = generate_sequence(&scene, 200, 42, b.path()).unwrap();
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
    assert_eq!(x.manifest_sha256, MANIFEST_SHA256);
    assert_eq!(x.content_sha256, CONTENT_SHA256);
    assert_eq!(y.content_sha256, CONTENT_SHA256);
    format!(
        "{} NDJSON messages, 50 PPM/PGM frames, 300 manifest rows; synth byte-identical, sha256 {}",
        messages.len(),
        &CONTENT_SHA256[..12]
    )
}

fn dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (PathBuf::from(p.file_name().unwrap()), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

/// Kills the child on drop so a failed assertion leaves no process behind.
struct Reaped(Child);

impl Drop for Reaped {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn end_to_end() -> String {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    let out = Command::new(BIN)
        .args([
            "synth",
            "--scene",
            "walkthrough-42",
            "--frames",
            "200",
            "--seed",
            "42",
            "--out",
        ])
        .arg(&frames)
        .output()
        .unwrap();
    assert!(out.status.success());

    // Expected command log from the oracle's votes and a plain level walk.
    let (verdicts, _) = oracle::run_manifest(&frames.join("manifest.csv"));
    let mut expected = vec![(0u64, "RUN", "clear")];
    let (mut level, mut streak) = (0usize, 0u32);
    let names = ["RUN", "SLOW", "STOP"];
    for (i, v) in verdicts.iter().enumerate() {
        let (demand, why) = if v.flags[1] {
            (2, "restricted")
        } else if v.flags[0] {
            (1, "caution")
        } else if v.a {
            (1, "motion")
        } else {
            (0, "clear")
        };
        let seq = i as u64 + 1;
        if demand == 0 {
            streak += 1;
            if level > 0 && streak >= RELEASE {
                level -= 1;
                expected.push((seq, names[level], "clear"));
            }
        } else {
            streak = 0;
            if demand > level {
                level = demand;
                expected.push((seq, names[level], why));
            }
        }
    }
    let entry = verdicts.iter().position(|v| v.flags[1]).expect("walker reaches q1") as u64 + 1;
    let last_busy = verdicts.iter().rposition(|v| v.a || v.flags[0] || v.flags[1]).unwrap() as u64 + 1;

    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let log = dir.path().join("arm.csv");
    let _machine = Reaped(
        Command::new(BIN)
            .args([
                "machine-sim",
                "--id",
                "arm-1",
                "--listen",
                &format!("127.0.0.1:{port}"),
                "--log",
            ])
            .arg(&log)
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let config = dir.path().join("node.conf");
    std::fs::write(
        &config,
        format!(
            "node.id = mist-e2e\nsource.kind = replay\nsource.path = frames\nsource.fps = 100\n\
             zones.monitored = q0|q1\nzones.restricted = q1\nzones.caution = q0\nzones.motion_action = slow\n\
             safety.release_frames = {RELEASE}\nnet.machines = 127.0.0.1:{port}\n\
             net.connect_retries = 100\nnet.retry_interval_ms = 50\n"
        ),
    )
    .unwrap();
    let mut node = Reaped(
        Command::new(BIN)
            .args(["node", "--config"])
            .arg(&config)
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let deadline = Instant::now() + Duration::from_secs(18);
    let status = loop {
        if let Some(s) = node.0.try_wait().unwrap() {
            break s;
        }
        assert!(Instant::now() < deadline, "node still running");
        std::thread::sleep(Duration::from_millis(20));
    };
    assert!(status.success(), "node exited with {status}");

    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("ts_ms,frame_seq,level,reason"));
    let got: Vec<(u64, String, String)> = lines
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[1].parse().unwrap(), c[2].to_string(), c[3].to_string())
        })
        .collect();
    let want: Vec<(u64, String, String)> = expected.iter().map(|&(s, l, r)| (s, l.into(), r.into())).collect();
    assert_eq!(got, want, "machine log");

    let stop = got.iter().position(|e| e.1 == "STOP").unwrap();
    assert_eq!(got[stop].0, entry, "STOP at the restricted entry frame");
    let tail: Vec<(u64, &str)> = got[stop + 1..].iter().map(|e| (e.0, e.1.as_str())).collect();
    let release = last_busy + u64::from(RELEASE);
    assert_eq!(tail, [(release, "SLOW"), (release + 1, "RUN")]);
    format!(
        "STOP@{entry}, SLOW@{release}, RUN@{} ({} log entries)",
        release + 1,
        got.len()
    )
}
