//! The node service loop: acquire, detect, zone, decide, command.

use std::net::SocketAddr;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use heatwatch_core::zones::{safety_step, zone_occupancy, Reason, SafetyLevel, SafetyState};
use heatwatch_core::{Detection, Pipeline};
use thiserror::Error;

use crate::config::{ConfigError, NodeConfig};
use crate::edge::EdgeSink;
use crate::link::{LinkError, MachineLink};
use crate::now_ms;
use crate::protocol::{DetectionEvent, SafetyCommand};
use crate::source::{open_source, FrameSource, SourceError};
use crate::status::{StatusBoard, StatusServer};

const EDGE_FLUSH_GRACE: Duration = Duration::from_millis(500);

#[derive(Debug, Error)]
pub enum NodeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot open frame source: {0}")]
    OpenSource(SourceError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    /// The loop stopped abnormally after trying to put every machine in STOP.
    #[error("failsafe STOP (frame_seq {failsafe_seq}, {reached}/{total} machines reached): {cause}")]
    Failsafe {
        cause: String,
        failsafe_seq: u64,
        reached: usize,
        total: usize,
    },
}

impl NodeError {
    pub fn is_failsafe(&self) -> bool {
        matches!(self, NodeError::Failsafe { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSummary {
    pub frames: u64,
    pub positives: u64,
    /// Every command sent, starting with the RUN announcement.
    pub commands: Vec<SafetyCommand>,
    pub final_level: SafetyLevel,
    pub edge_sent: u64,
    pub edge_dropped: u64,
}

pub struct Node {
    config: NodeConfig,
    source: Box<dyn FrameSource + Send>,
    pipeline: Pipeline,
    links: Vec<MachineLink>,
    board: Arc<StatusBoard>,
    status: Option<StatusServer>,
    edge: Option<EdgeSink>,
    state: SafetyState,
    commands: Vec<SafetyCommand>,
}

impl Node {
    /// Validates the config, opens the status port and prepares the
    /// pipeline. Machines are connected when `run` starts.
    pub fn new(config: NodeConfig, source: Box<dyn FrameSource + Send>) -> Result<Self, NodeError> {
        config.validate()?;
        let pipeline = Pipeline::new(&config.detector).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if config.machines.is_empty() {
            log::warn!("no machine endpoints configured; safety commands go nowhere");
        }
        let board = Arc::new(StatusBoard::new(config.node_id.clone()));
        let status = match &config.listen {
            Some(addr) => Some(
                StatusServer::spawn(addr.as_str(), Arc::clone(&board)).map_err(|source| NodeError::Bind {
                    addr: addr.clone(),
                    source,
                })?,
            ),
            None => None,
        };
        Ok(Self {
            links: config.machines.iter().map(MachineLink::new).collect(),
            pipeline,
            board,
            status,
            edge: None,
            state: SafetyState::default(),
            commands: Vec::new(),
            source,
            config,
        })
    }

    /// Opens the configured frame source and builds a node around it.
    pub fn from_config(config: NodeConfig) -> Result<Self, NodeError> {
        let source = open_source(&config.source).map_err(NodeError::OpenSource)?;
        Self::new(config, source)
    }

    pub fn status_addr(&self) -> Option<SocketAddr> {
        self.status.as_ref().map(StatusServer::addr)
    }

    pub fn board(&self) -> Arc<StatusBoard> {
        Arc::clone(&self.board)
    }

    /// Runs until the source ends. Any other way out of the loop sends a
    /// failsafe STOP to every reachable machine first. The status endpoint
    /// keeps answering until the node is dropped.
    pub fn run(&mut self) -> Result<NodeSummary, NodeError> {
        self.edge = self.config.edge_sink.clone().map(EdgeSink::spawn);
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| self.run_loop()));
        let result = match outcome {
            Ok(Ok(())) => Ok(()),
            Ok(Err(cause)) => Err(self.failsafe(cause)),
            Err(payload) => {
                let _ = self.failsafe("node loop panicked".into());
                panic::resume_unwind(payload);
            }
        };
        let (edge_sent, edge_dropped) = self.edge.take().map_or((0, 0), |e| e.close(EDGE_FLUSH_GRACE));
        result?;
        let doc = self.board.snapshot();
        Ok(NodeSummary {
            frames: doc.frames,
            positives: doc.positives,
            commands: self.commands.clone(),
            final_level: self.state.level,
            edge_sent,
            edge_dropped,
        })
    }

    fn run_loop(&mut self) -> Result<(), String> {
        self.connect_all()?;
        self.command(0, SafetyLevel::Run, Reason::Clear)?;

        let period = self.config.frame_period();
        let mut next_tick = Instant::now();
        loop {
            let now = Instant::now();
            if now < next_tick {
                thread::sleep(next_tick - now);
                next_tick += period;
            } else {
                // Running behind: don't burst to catch up.
                next_tick = now + period;
            }

            let frame = match self.source.next_frame() {
                Ok(Some(f)) => f,
                Ok(None) => {
                    log::info!("frame source ended after {} frames", self.pipeline.frame_seq());
                    return Ok(());
                }
                Err(e) => return Err(format!("frame source failed: {e}")),
            };
            let detection = self
                .pipeline
                .process(&frame)
                .map_err(|e| format!("frame {}: {e}", self.pipeline.frame_seq() + 1))?;
            self.handle(&detection)?;
        }
    }

    fn handle(&mut self, d: &Detection) -> Result<(), String> {
        let occupancy = zone_occupancy(d, &self.config.policy);
        let (next, transition) = safety_step(self.state, occupancy, &self.config.safety, &self.config.policy);
        self.state = next;
        self.board.record_frame(d.frame_seq, d.positive, next.level);

        if let Some(edge) = &self.edge {
            edge.push(DetectionEvent {
                node_id: self.config.node_id.clone(),
                frame_seq: d.frame_seq,
                ts_ms: now_ms(),
                method_a: d.method_a.positive,
                method_b: d.method_b.positive,
                positive: d.positive,
                quadrants: d.method_b.flagged().iter().map(|q| q.index() as u8).collect(),
                active_pixels: d.method_a.active_pixel_count,
            });
        }

        if let Some(t) = transition {
            log::info!("frame_seq {}: {} -> {} ({})", d.frame_seq, t.from, t.to, t.reason);
            self.command(d.frame_seq, t.to, t.reason)?;
        }
        Ok(())
    }

    fn connect_all(&mut self) -> Result<(), String> {
        let retries = self.config.connect_retries;
        let interval = self.config.retry_interval;
        let timeout = self.config.ack_timeout;
        for link in &mut self.links {
            let mut attempt = 0;
            loop {
                match link.connect(timeout) {
                    Ok(()) => break,
                    Err(e) if attempt < retries => {
                        log::debug!("{e}; retrying");
                        attempt += 1;
                        thread::sleep(interval);
                    }
                    Err(e) => return Err(e.to_string()),
                }
            }
        }
        Ok(())
    }

    /// Sends one command to every machine concurrently and returns once all
    /// have acknowledged it.
    fn command(&mut self, frame_seq: u64, level: SafetyLevel, reason: Reason) -> Result<(), String> {
        let cmd = SafetyCommand {
            node_id: self.config.node_id.clone(),
            frame_seq,
            level,
            reason,
        };
        let failures = broadcast(&mut self.links, &cmd, self.config.ack_timeout);
        self.commands.push(cmd);
        self.board.record_command(level);
        match failures.into_iter().next() {
            None => Ok(()),
            Some(e) => Err(e.to_string()),
        }
    }

    fn failsafe(&mut self, cause: String) -> NodeError {
        let failsafe_seq = self.pipeline.frame_seq() + 1;
        log::error!("{cause}; sending failsafe STOP (frame_seq {failsafe_seq})");
        let cmd = SafetyCommand {
            node_id: self.config.node_id.clone(),
            frame_seq: failsafe_seq,
            level: SafetyLevel::Stop,
            reason: Reason::Failsafe,
        };
        let failures = broadcast(&mut self.links, &cmd, self.config.ack_timeout);
        for f in &failures {
            log::error!("failsafe not delivered: {f}");
        }
        self.state.level = SafetyLevel::Stop;
        self.commands.push(cmd);
        self.board.record_command(SafetyLevel::Stop);
        NodeError::Failsafe {
            cause,
            failsafe_seq,
            reached: self.links.len() - failures.len(),
            total: self.links.len(),
        }
    }
}

fn broadcast(links: &mut [MachineLink], cmd: &SafetyCommand, timeout: Duration) -> Vec<LinkError> {
    thread::scope(|s| {
        let handles: Vec<_> = links
            .iter_mut()
            .map(|link| s.spawn(move || link.send(cmd, timeout)))
            .collect();
        handles
            .into_iter()
            .filter_map(|h| h.join().expect("link thread panicked").err())
            .collect()
    })
}

/// Builds a node from `config` and runs it to completion.
pub fn run_node(config: NodeConfig) -> Result<NodeSummary, NodeError> {
    Node::from_config(config)?.run()
}
