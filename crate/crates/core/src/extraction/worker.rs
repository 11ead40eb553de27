//! Client side of the NER worker protocol.
//!
//! The protocol is newline-delimited UTF-8 JSON over the worker's stdio or a
//! TCP socket:
//!
//! ```text
//! worker  -> {"ready": true, "protocol": 1}
//! engine  -> {"id": "3", "text": "small pleural effusion"}
//! worker  -> {"id": "3", "entities": [{"text": "pleural effusion", "start": 6, "end": 22, "label": "ENTITY"}]}
//! worker  -> {"id": "4", "error": "message"}
//! ```
//!
//! Offsets are character offsets into the request text. A connection carries
//! one request at a time; [`WorkerPool`] spreads callers over several.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use super::{normalize_entity, Entity, EntitySet};
use crate::text;

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum WorkerError {
    #[error("worker i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("worker timed out after {0:?}")]
    Timeout(Duration),
    #[error("worker closed its output")]
    Closed,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("worker speaks protocol {0}, expected 1")]
    UnsupportedProtocol(u64),
    #[error("protocol violation: invalid span ({start}, {end}) for text of {len} characters")]
    InvalidSpan { start: usize, end: usize, len: usize },
    #[error("worker error: {0}")]
    Remote(String),
}

#[derive(Debug, Deserialize)]
struct WireEntity {
    text: String,
    start: usize,
    end: usize,
    #[serde(default)]
    label: Option<String>,
}

/// One connection to a worker that has completed the handshake.
pub struct WorkerConnection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    outstanding: HashSet<String>,
    next_id: u64,
    timeout: Duration,
    child: Option<Child>,
}

impl WorkerConnection {
    /// Wraps an already-open transport and waits for the handshake line.
    pub fn from_streams<R, W>(reader: R, writer: W, timeout: Duration) -> Result<Self, WorkerError>
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut conn = Self {
            writer: Box::new(writer),
            lines: rx,
            outstanding: HashSet::new(),
            next_id: 0,
            timeout,
            child: None,
        };
        conn.handshake()?;
        Ok(conn)
    }

    /// Launches a worker process and talks to it over its stdin/stdout.
    pub fn spawn(command: &mut Command, timeout: Duration) -> Result<Self, WorkerError> {
        let mut child = command.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        match Self::from_streams(stdout, stdin, timeout) {
            Ok(mut conn) => {
                conn.child = Some(child);
                Ok(conn)
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(e)
            }
        }
    }

    /// Connects to a worker listening on a TCP port.
    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self, WorkerError> {
        let addr = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| WorkerError::Protocol("address resolved to nothing".into()))?;
        let stream = TcpStream::connect_timeout(&addr, timeout)?;
        let reader = stream.try_clone()?;
        Self::from_streams(reader, stream, timeout)
    }

    fn next_line(&mut self) -> Result<Value, WorkerError> {
        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(line) => line?,
            Err(RecvTimeoutError::Timeout) => return Err(WorkerError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => return Err(WorkerError::Closed),
        };
        serde_json::from_str(&line).map_err(|e| WorkerError::Protocol(format!("bad JSON line: {e}")))
    }

    fn handshake(&mut self) -> Result<(), WorkerError> {
        let hello = self.next_line()?;
        if hello.get("ready").and_then(Value::as_bool) != Some(true) {
            return Err(WorkerError::Protocol(format!("expected handshake, got {hello}")));
        }
        match hello.get("protocol").and_then(Value::as_u64) {
            Some(PROTOCOL_VERSION) => Ok(()),
            Some(other) => Err(WorkerError::UnsupportedProtocol(other)),
            None => Err(WorkerError::Protocol("handshake without protocol version".into())),
        }
    }

    /// Sends one text and waits for the matching response.
    pub fn extract(&mut self, source: &str) -> Result<EntitySet, WorkerError> {
        self.next_id += 1;
        let id = self.next_id.to_string();
        let request = serde_json::json!({ "id": id, "text": source });
        writeln!(self.writer, "{request}")?;
        self.writer.flush()?;
        self.outstanding.insert(id.clone());

        loop {
            let mut response = self.next_line()?;
            let resp_id = match response.get("id") {
                Some(Value::String(s)) => s.clone(),
                Some(other) => other.to_string(),
                None => return Err(WorkerError::Protocol(format!("response without id: {response}"))),
            };
            if !self.outstanding.remove(&resp_id) {
                return Err(WorkerError::Protocol(format!("response for unknown id {resp_id:?}")));
            }
            if resp_id != id {
                // A late answer to a request that already timed out.
                log::debug!("discarding stale worker response {resp_id}");
                continue;
            }
            if let Some(err) = response.get("error") {
                let msg = err.as_str().map(str::to_string).unwrap_or_else(|| err.to_string());
                return Err(WorkerError::Remote(msg));
            }
            let entities = response
                .get_mut("entities")
                .map(Value::take)
                .ok_or_else(|| WorkerError::Protocol("response without `entities`".into()))?;
            let entities: Vec<WireEntity> = serde_json::from_value(entities)
                .map_err(|e| WorkerError::Protocol(format!("bad entity list: {e}")))?;
            return to_entity_set(source, entities);
        }
    }
}

impl Drop for WorkerConnection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn to_entity_set(source: &str, wire: Vec<WireEntity>) -> Result<EntitySet, WorkerError> {
    let len = source.chars().count();
    let mut entities = Vec::with_capacity(wire.len());
    for w in wire {
        if w.start >= w.end || w.end > len {
            return Err(WorkerError::InvalidSpan { start: w.start, end: w.end, len });
        }
        let surface = text::char_slice(source, w.start, w.end).expect("span checked");
        if surface != w.text {
            log::warn!("worker text {:?} differs from span text {:?}", w.text, surface);
        }
        let Ok(normalized) = normalize_entity(surface) else {
            log::debug!("skipping degenerate worker entity {surface:?}");
            continue;
        };
        entities.push(Entity {
            surface: surface.to_string(),
            normalized,
            start: w.start,
            end: w.end,
            label: w.label,
        });
    }
    Ok(EntitySet::new(entities))
}

/// A fixed set of worker connections shared between threads.
pub struct WorkerPool {
    conns: Vec<Mutex<WorkerConnection>>,
    next: AtomicUsize,
}

impl WorkerPool {
    pub fn new(conns: Vec<WorkerConnection>) -> Self {
        assert!(!conns.is_empty(), "worker pool needs at least one connection");
        Self { conns: conns.into_iter().map(Mutex::new).collect(), next: AtomicUsize::new(0) }
    }

    pub fn size(&self) -> usize {
        self.conns.len()
    }

    pub fn extract(&self, source: &str) -> Result<EntitySet, WorkerError> {
        let start = self.next.fetch_add(1, Ordering::Relaxed);
        let n = self.conns.len();
        for k in 0..n {
            if let Ok(mut conn) = self.conns[(start + k) % n].try_lock() {
                return conn.extract(source);
            }
        }
        let mut conn = self.conns[start % n].lock().unwrap_or_else(|p| p.into_inner());
        conn.extract(source)
    }
}
