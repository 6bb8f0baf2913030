//! Node-side connection to one machine controller.

use std::io::{self, BufReader};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::protocol::{read_message, write_message, Message, ProtocolError, SafetyCommand};

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("{endpoint}: connect failed: {source}")]
    Connect { endpoint: String, source: io::Error },
    #[error("{endpoint}: no ack for frame_seq {frame_seq} within {timeout:?}")]
    Timeout {
        endpoint: String,
        frame_seq: u64,
        timeout: Duration,
    },
    #[error("{endpoint}: command {frame_seq} rejected: {message}")]
    Rejected {
        endpoint: String,
        frame_seq: u64,
        message: String,
    },
    #[error("{endpoint}: {source}")]
    Protocol { endpoint: String, source: ProtocolError },
}

/// Resolves `endpoint` and connects to the first address that answers.
pub fn connect(endpoint: &str, timeout: Duration) -> io::Result<TcpStream> {
    let mut last = io::Error::new(io::ErrorKind::NotFound, format!("{endpoint} did not resolve"));
    for addr in endpoint.to_socket_addrs()? {
        match TcpStream::connect_timeout(&addr, timeout) {
            Ok(s) => {
                s.set_nodelay(true)?;
                return Ok(s);
            }
            Err(e) => last = e,
        }
    }
    Err(last)
}

#[derive(Debug)]
struct Conn {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
}

#[derive(Debug)]
pub struct MachineLink {
    endpoint: String,
    conn: Option<Conn>,
}

impl MachineLink {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            conn: None,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn is_connected(&self) -> bool {
        self.conn.is_some()
    }

    pub fn connect(&mut self, timeout: Duration) -> Result<(), LinkError> {
        let stream = connect(&self.endpoint, timeout).map_err(|source| LinkError::Connect {
            endpoint: self.endpoint.clone(),
            source,
        })?;
        let reader = stream.try_clone().map_err(|source| LinkError::Connect {
            endpoint: self.endpoint.clone(),
            source,
        })?;
        self.conn = Some(Conn {
            writer: stream,
            reader: BufReader::new(reader),
        });
        Ok(())
    }

    /// Sends `cmd` and waits for its ack. Reconnects once if there is no
    /// live connection. Any failure drops the connection.
    pub fn send(&mut self, cmd: &SafetyCommand, timeout: Duration) -> Result<(), LinkError> {
        let result = self.try_send(cmd, timeout);
        if result.is_err() {
            self.conn = None;
        }
        result
    }

    fn try_send(&mut self, cmd: &SafetyCommand, timeout: Duration) -> Result<(), LinkError> {
        let deadline = Instant::now() + timeout;
        if self.conn.is_none() {
            self.connect(timeout)?;
        }
        let endpoint = self.endpoint.clone();
        let proto = |source: ProtocolError| LinkError::Protocol {
            endpoint: endpoint.clone(),
            source,
        };
        let timed_out = || LinkError::Timeout {
            endpoint: endpoint.clone(),
            frame_seq: cmd.frame_seq,
            timeout,
        };
        let conn = self.conn.as_mut().expect("connected above");
        write_message(&mut conn.writer, &Message::Safety(cmd.clone())).map_err(|e| proto(e.into()))?;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(timed_out());
            }
            conn.writer.set_read_timeout(Some(left)).map_err(|e| proto(e.into()))?;
            match read_message(&mut conn.reader) {
                Ok(Message::Ack(ack)) if ack.frame_seq == cmd.frame_seq => {
                    return match ack.error {
                        None => Ok(()),
                        Some(message) => Err(LinkError::Rejected {
                            endpoint: endpoint.clone(),
                            frame_seq: cmd.frame_seq,
                            message,
                        }),
                    };
                }
                // Late acks for earlier commands and heartbeats.
                Ok(other) => log::debug!("{endpoint}: skipping {}", other.type_name()),
                Err(ProtocolError::Io(e))
                    if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) =>
                {
                    return Err(timed_out())
                }
                Err(e) => return Err(proto(e)),
            }
        }
    }
}
