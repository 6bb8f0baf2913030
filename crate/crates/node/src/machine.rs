//! Robot-controller simulator: applies safety commands, logs them and acks.

use std::fs::{File, OpenOptions};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use heatwatch_core::zones::{Reason, SafetyLevel};

use crate::now_ms;
use crate::protocol::{decode, write_message, Ack, LineReader, Message, ProtocolError, SafetyCommand};

pub const LOG_HEADER: &str = "ts_ms,frame_seq,level,reason";

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogEntry {
    pub ts_ms: u64,
    pub frame_seq: u64,
    pub level: SafetyLevel,
    pub reason: Reason,
}

impl LogEntry {
    pub fn csv_line(&self) -> String {
        format!("{},{},{},{}", self.ts_ms, self.frame_seq, self.level, self.reason)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Applied {
    Accepted,
    /// frame_seq not above the last accepted one; the command was ignored.
    Stale {
        last: u64,
    },
}

/// A controller powers up stopped and only moves once a node tells it to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    pub machine_id: String,
    pub level: SafetyLevel,
    pub last_command_seq: Option<u64>,
    pub log: Vec<LogEntry>,
}

impl MachineState {
    pub fn new(machine_id: impl Into<String>) -> Self {
        Self {
            machine_id: machine_id.into(),
            level: SafetyLevel::Stop,
            last_command_seq: None,
            log: Vec::new(),
        }
    }

    pub fn apply(&mut self, cmd: &SafetyCommand, ts_ms: u64) -> Applied {
        if let Some(last) = self.last_command_seq {
            if cmd.frame_seq <= last {
                return Applied::Stale { last };
            }
        }
        self.level = cmd.level;
        self.last_command_seq = Some(cmd.frame_seq);
        self.log.push(LogEntry {
            ts_ms,
            frame_seq: cmd.frame_seq,
            level: cmd.level,
            reason: cmd.reason,
        });
        Applied::Accepted
    }
}

#[derive(Debug, Clone)]
pub struct MachineSimConfig {
    pub machine_id: String,
    /// CSV command log, appended to as commands arrive.
    pub log_path: Option<PathBuf>,
    /// Pause before each ack, for fault injection.
    pub ack_delay: Duration,
}

impl MachineSimConfig {
    pub fn new(machine_id: impl Into<String>) -> Self {
        Self {
            machine_id: machine_id.into(),
            log_path: None,
            ack_delay: Duration::ZERO,
        }
    }
}

struct Shared {
    state: Mutex<MachineState>,
    log: Mutex<Option<BufWriter<File>>>,
    ack_delay: Duration,
    acks: Mutex<Vec<(u64, Instant)>>,
    shutdown: AtomicBool,
}

impl Shared {
    fn state(&self) -> MutexGuard<'_, MachineState> {
        lock(&self.state)
    }

    fn handle_line(&self, line: &str) -> Message {
        let msg = match decode(line) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("malformed message: {e}");
                return Message::nack(0, e.to_string());
            }
        };
        match msg {
            Message::Safety(cmd) => {
                let ts = now_ms();
                let applied = self.state().apply(&cmd, ts);
                match applied {
                    Applied::Accepted => {
                        log::info!(
                            "frame_seq {} from {}: {} ({})",
                            cmd.frame_seq,
                            cmd.node_id,
                            cmd.level,
                            cmd.reason
                        );
                        self.append_log(&LogEntry {
                            ts_ms: ts,
                            frame_seq: cmd.frame_seq,
                            level: cmd.level,
                            reason: cmd.reason,
                        });
                    }
                    Applied::Stale { last } => log::warn!(
                        "ignoring frame_seq {} from {}: not above last accepted {last}",
                        cmd.frame_seq,
                        cmd.node_id
                    ),
                }
                if !self.ack_delay.is_zero() {
                    thread::sleep(self.ack_delay);
                }
                Message::ack(cmd.frame_seq)
            }
            Message::Hb(hb) => Message::Hb(hb),
            other => Message::nack(0, format!("unexpected {} message", other.type_name())),
        }
    }

    fn append_log(&self, entry: &LogEntry) {
        let mut guard = lock(&self.log);
        if let Some(w) = guard.as_mut() {
            let res = writeln!(w, "{}", entry.csv_line()).and_then(|_| w.flush());
            if let Err(e) = res {
                log::error!("writing command log: {e}");
            }
        }
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn open_log(path: &Path) -> io::Result<BufWriter<File>> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = BufWriter::new(file);
    if fresh {
        writeln!(w, "{LOG_HEADER}")?;
        w.flush()?;
    }
    Ok(w)
}

/// A running simulator. Dropping the handle stops it.
pub struct MachineSimHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

impl MachineSimHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn state(&self) -> MachineState {
        self.shared.state().clone()
    }

    /// Every successful ack written so far, stamped just before it was sent.
    pub fn acks(&self) -> Vec<(u64, Instant)> {
        lock(&self.shared.acks).clone()
    }

    pub fn shutdown(mut self) -> MachineState {
        self.stop();
        self.state()
    }

    fn stop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Blocks for as long as the simulator runs.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MachineSimHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

pub fn spawn_machine_sim(listen: impl ToSocketAddrs, config: MachineSimConfig) -> io::Result<MachineSimHandle> {
    let listener = TcpListener::bind(listen)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let log = config.log_path.as_deref().map(open_log).transpose()?;
    let shared = Arc::new(Shared {
        state: Mutex::new(MachineState::new(config.machine_id)),
        log: Mutex::new(log),
        ack_delay: config.ack_delay,
        acks: Mutex::new(Vec::new()),
        shutdown: AtomicBool::new(false),
    });
    let s = Arc::clone(&shared);
    let accept = thread::Builder::new()
        .name("machine-accept".into())
        .spawn(move || accept_loop(listener, s))?;
    Ok(MachineSimHandle {
        addr,
        shared,
        accept: Some(accept),
    })
}

/// Serves until the process is killed.
pub fn run_machine_sim(listen: impl ToSocketAddrs, config: MachineSimConfig) -> io::Result<()> {
    let id = config.machine_id.clone();
    let handle = spawn_machine_sim(listen, config)?;
    log::info!("machine {id} listening on {}", handle.addr());
    handle.wait();
    Ok(())
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    let mut workers = Vec::new();
    while !shared.shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::debug!("connection from {peer}");
                let s = Arc::clone(&shared);
                workers.push(thread::spawn(move || {
                    if let Err(e) = serve(stream, &s) {
                        log::debug!("connection from {peer} ended: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::error!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
        workers.retain(|h: &JoinHandle<()>| !h.is_finished());
    }
    for w in workers {
        let _ = w.join();
    }
}

fn serve(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL))?;
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut lines = LineReader::default();
    loop {
        if shared.shutdown.load(Ordering::SeqCst) {
            return Ok(());
        }
        match lines.poll(&mut reader) {
            Ok(Some(line)) => {
                let reply = shared.handle_line(&line);
                // Stamped before the write: the peer cannot see the ack earlier.
                let sent_at = Instant::now();
                write_message(&mut writer, &reply)?;
                if let Message::Ack(Ack { frame_seq, error: None }) = reply {
                    lock(&shared.acks).push((frame_seq, sent_at));
                }
            }
            Ok(None) => {}
            Err(ProtocolError::Closed) => return Ok(()),
            Err(ProtocolError::Io(e)) => return Err(e),
            Err(e) => write_message(&mut writer, &Message::nack(0, e.to_string()))?,
        }
    }
}

/// Reads a command log written by the simulator.
pub fn read_log(path: &Path) -> io::Result<Vec<LogEntry>> {
    let text = std::fs::read_to_string(path)?;
    let bad = |line: &str| io::Error::new(io::ErrorKind::InvalidData, format!("bad log line {line:?}"));
    let mut lines = text.lines();
    if lines.next() != Some(LOG_HEADER) {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "missing log header"));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(line));
            }
            Ok(LogEntry {
                ts_ms: f[0].parse().map_err(|_| bad(line))?,
                frame_seq: f[1].parse().map_err(|_| bad(line))?,
                level: f[2].parse().map_err(|_| bad(line))?,
                reason: f[3].parse().map_err(|_| bad(line))?,
            })
        })
        .collect()
}
