//! Best-effort detection-event delivery to the edge layer.

use std::collections::VecDeque;
use std::io::{BufWriter, Write};
use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::link::connect;
use crate::protocol::{encode, DetectionEvent, Message};

pub const EDGE_QUEUE_DEPTH: usize = 1024;

const RECONNECT_BACKOFF: Duration = Duration::from_millis(200);
const CONNECT_TIMEOUT: Duration = Duration::from_millis(500);

/// Bounded FIFO that evicts its oldest item instead of blocking the producer.
#[derive(Debug)]
pub struct DropOldest<T> {
    items: VecDeque<T>,
    capacity: usize,
    dropped: u64,
}

impl<T> DropOldest<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        Self {
            items: VecDeque::with_capacity(capacity),
            capacity,
            dropped: 0,
        }
    }

    /// Returns the evicted item, if any.
    pub fn push(&mut self, item: T) -> Option<T> {
        let evicted = if self.items.len() == self.capacity {
            self.dropped += 1;
            self.items.pop_front()
        } else {
            None
        };
        self.items.push_back(item);
        evicted
    }

    pub fn pop(&mut self) -> Option<T> {
        self.items.pop_front()
    }

    /// Puts an item back at the head, unless newer items filled the queue.
    pub fn unpop(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push_front(item);
        } else {
            self.dropped += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

struct Shared {
    queue: Mutex<DropOldest<String>>,
    ready: Condvar,
    closing: AtomicBool,
    sent: AtomicU64,
}

/// Streams events to an edge sink from a background thread. The producer
/// never blocks on the network.
pub struct EdgeSink {
    shared: Arc<Shared>,
    worker: Option<JoinHandle<()>>,
}

impl EdgeSink {
    pub fn spawn(endpoint: String) -> Self {
        let shared = Arc::new(Shared {
            queue: Mutex::new(DropOldest::new(EDGE_QUEUE_DEPTH)),
            ready: Condvar::new(),
            closing: AtomicBool::new(false),
            sent: AtomicU64::new(0),
        });
        let s = Arc::clone(&shared);
        let worker = thread::Builder::new()
            .name("edge-sink".into())
            .spawn(move || deliver(&endpoint, &s))
            .expect("spawn edge sink thread");
        Self {
            shared,
            worker: Some(worker),
        }
    }

    pub fn push(&self, event: DetectionEvent) {
        let line = encode(&Message::Detection(event));
        let mut q = self.shared.queue.lock().unwrap_or_else(|e| e.into_inner());
        if q.push(line).is_some() && q.dropped() % 256 == 1 {
            log::warn!("edge sink lagging: {} events dropped so far", q.dropped());
        }
        self.shared.ready.notify_one();
    }

    pub fn sent(&self) -> u64 {
        self.shared.sent.load(Ordering::Relaxed)
    }

    pub fn dropped(&self) -> u64 {
        self.shared.queue.lock().unwrap_or_else(|e| e.into_inner()).dropped()
    }

    /// Flushes for at most `grace`, then stops the worker.
    pub fn close(mut self, grace: Duration) -> (u64, u64) {
        self.finish(grace);
        (self.sent(), self.dropped())
    }

    fn finish(&mut self, grace: Duration) {
        let Some(worker) = self.worker.take() else {
            return;
        };
        let deadline = Instant::now() + grace;
        loop {
            let empty = self.shared.queue.lock().unwrap_or_else(|e| e.into_inner()).is_empty();
            if empty || Instant::now() >= deadline || worker.is_finished() {
                break;
            }
            thread::sleep(Duration::from_millis(5));
        }
        self.shared.closing.store(true, Ordering::SeqCst);
        self.shared.ready.notify_all();
        let _ = worker.join();
    }
}

impl Drop for EdgeSink {
    fn drop(&mut self) {
        self.finish(Duration::ZERO);
    }
}

fn deliver(endpoint: &str, shared: &Shared) {
    let mut conn: Option<BufWriter<TcpStream>> = None;
    loop {
        let line = {
            let mut q = shared.queue.lock().unwrap_or_else(|e| e.into_inner());
            loop {
                if shared.closing.load(Ordering::SeqCst) {
                    return;
                }
                if let Some(line) = q.pop() {
                    break line;
                }
                q = shared
                    .ready
                    .wait_timeout(q, Duration::from_millis(100))
                    .unwrap_or_else(|e| e.into_inner())
                    .0;
            }
        };

        if conn.is_none() {
            match connect(endpoint, CONNECT_TIMEOUT) {
                Ok(stream) => conn = Some(BufWriter::new(stream)),
                Err(e) => {
                    log::debug!("edge sink {endpoint} unreachable: {e}");
                    shared.queue.lock().unwrap_or_else(|e| e.into_inner()).unpop(line);
                    sleep_unless_closing(shared, RECONNECT_BACKOFF);
                    continue;
                }
            }
        }
        let w = conn.as_mut().expect("connected above");
        match w.write_all(line.as_bytes()).and_then(|_| w.flush()) {
            Ok(()) => {
                shared.sent.fetch_add(1, Ordering::Relaxed);
            }
            Err(e) => {
                log::debug!("edge sink {endpoint} write failed: {e}");
                conn = None;
                shared.queue.lock().unwrap_or_else(|e| e.into_inner()).unpop(line);
            }
        }
    }
}

fn sleep_unless_closing(shared: &Shared, total: Duration) {
    let deadline = Instant::now() + total;
    while Instant::now() < deadline && !shared.closing.load(Ordering::SeqCst) {
        thread::sleep(Duration::from_millis(10));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn evicts_oldest_when_full() {
        let mut q = DropOldest::new(3);
        for i in 0..3 {
            assert_eq!(q.push(i), None);
        }
        assert_eq!(q.push(3), Some(0));
        assert_eq!(q.dropped(), 1);
        assert_eq!(q.pop(), Some(1));
        q.unpop(1);
        q.push(4);
        q.unpop(9);
        assert_eq!(q.dropped(), 3);
        assert_eq!(std::iter::from_fn(|| q.pop()).collect::<Vec<_>>(), [2, 3, 4]);
    }

    proptest! {
        #[test]
        fn keeps_the_newest_items(n in 0usize..3000) {
            let mut q = DropOldest::new(EDGE_QUEUE_DEPTH);
            for i in 0..n {
                q.push(i);
            }
            let kept: Vec<usize> = std::iter::from_fn(|| q.pop()).collect();
            let start = n.saturating_sub(EDGE_QUEUE_DEPTH);
            prop_assert_eq!(kept, (start..n).collect::<Vec<_>>());
            prop_assert_eq!(q.dropped(), start as u64);
        }
    }
}
