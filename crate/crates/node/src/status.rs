//! Node status counters and the query endpoint that serves them.

use std::io::{self, BufReader};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use heatwatch_core::zones::SafetyLevel;

use crate::link::connect;
use crate::protocol::{read_message, write_message, LineReader, Message, ProtocolError, StatusDoc, StatusRequest};

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, Copy, Default)]
struct Counters {
    frame_seq: u64,
    level: SafetyLevel,
    frames: u64,
    positives: u64,
    commands: u64,
}

#[derive(Debug)]
pub struct StatusBoard {
    node_id: String,
    started: Instant,
    counters: Mutex<Counters>,
}

impl StatusBoard {
    pub fn new(node_id: impl Into<String>) -> Self {
        Self {
            node_id: node_id.into(),
            started: Instant::now(),
            counters: Mutex::new(Counters::default()),
        }
    }

    fn with<R>(&self, f: impl FnOnce(&mut Counters) -> R) -> R {
        f(&mut self.counters.lock().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn record_frame(&self, frame_seq: u64, positive: bool, level: SafetyLevel) {
        self.with(|c| {
            c.frame_seq = frame_seq;
            c.frames += 1;
            c.positives += u64::from(positive);
            c.level = level;
        });
    }

    pub fn record_command(&self, level: SafetyLevel) {
        self.with(|c| {
            c.commands += 1;
            c.level = level;
        });
    }

    pub fn snapshot(&self) -> StatusDoc {
        let c = self.with(|c| *c);
        StatusDoc {
            node_id: self.node_id.clone(),
            frame_seq: c.frame_seq,
            level: c.level,
            uptime_ms: self.started.elapsed().as_millis() as u64,
            frames: c.frames,
            positives: c.positives,
            commands: c.commands,
        }
    }
}

/// Answers `status_req` and `hb` on a TCP port. Dropping it stops serving.
pub struct StatusServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
}

impl StatusServer {
    pub fn spawn(listen: impl ToSocketAddrs, board: Arc<StatusBoard>) -> io::Result<Self> {
        let listener = TcpListener::bind(listen)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let stop = Arc::clone(&shutdown);
        let worker = thread::Builder::new()
            .name("status".into())
            .spawn(move || accept_loop(listener, board, stop))?;
        Ok(Self {
            addr,
            shutdown,
            worker: Some(worker),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for StatusServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn accept_loop(listener: TcpListener, board: Arc<StatusBoard>, stop: Arc<AtomicBool>) {
    let mut workers: Vec<JoinHandle<()>> = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let (b, s) = (Arc::clone(&board), Arc::clone(&stop));
                workers.push(thread::spawn(move || {
                    if let Err(e) = serve(stream, &b, &s) {
                        log::debug!("status connection ended: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::error!("status accept failed: {e}");
                thread::sleep(POLL);
            }
        }
        workers.retain(|w| !w.is_finished());
    }
    for w in workers {
        let _ = w.join();
    }
}

fn serve(stream: TcpStream, board: &StatusBoard, stop: &AtomicBool) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL))?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut lines = LineReader::default();
    while !stop.load(Ordering::SeqCst) {
        let reply = match lines.poll(&mut reader) {
            Ok(None) => continue,
            Ok(Some(line)) => match crate::protocol::decode(&line) {
                Ok(Message::StatusReq(_)) => Message::Status(board.snapshot()),
                Ok(Message::Hb(hb)) => Message::Hb(hb),
                Ok(other) => Message::nack(0, format!("unexpected {} message", other.type_name())),
                Err(e) => Message::nack(0, e.to_string()),
            },
            Err(ProtocolError::Closed) => return Ok(()),
            Err(ProtocolError::Io(e)) => return Err(e),
            Err(e) => Message::nack(0, e.to_string()),
        };
        write_message(&mut writer, &reply)?;
    }
    Ok(())
}

/// Asks a node for its status document.
pub fn status_query(endpoint: &str, timeout: Duration) -> Result<StatusDoc, ProtocolError> {
    let stream = connect(endpoint, timeout)?;
    stream.set_read_timeout(Some(timeout))?;
    let mut writer = stream.try_clone()?;
    write_message(&mut writer, &Message::StatusReq(StatusRequest {}))?;
    match read_message(&mut BufReader::new(stream))? {
        Message::Status(doc) => Ok(doc),
        other => Err(ProtocolError::Invalid(format!(
            "expected status, got {}",
            other.type_name()
        ))),
    }
}
