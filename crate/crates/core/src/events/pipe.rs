//! In-memory full-duplex transport for tests and examples.
//!
//! Each direction records which threads wrote to it so tests can check that
//! only one writer ever used a direction.

use std::collections::{HashSet, VecDeque};
use std::io::{self, Read, Write};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, ThreadId};

use super::transport::{DuplexLink, LinkCloser, Transport, TransportError};

#[derive(Default)]
struct Direction {
    state: Mutex<DirectionState>,
    readable: Condvar,
}

#[derive(Default)]
struct DirectionState {
    data: VecDeque<u8>,
    closed: bool,
    writers: HashSet<ThreadId>,
    bytes_written: u64,
}

impl Direction {
    fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.readable.notify_all();
    }
}

/// One end of a pipe pair.
pub struct PipeEnd {
    incoming: Arc<Direction>,
    outgoing: Arc<Direction>,
}

/// Creates two connected ends: bytes written at one are read at the other.
pub fn pair() -> (PipeEnd, PipeEnd) {
    let a_to_b = Arc::new(Direction::default());
    let b_to_a = Arc::new(Direction::default());
    (
        PipeEnd {
            incoming: Arc::clone(&b_to_a),
            outgoing: Arc::clone(&a_to_b),
        },
        PipeEnd {
            incoming: a_to_b,
            outgoing: b_to_a,
        },
    )
}

impl PipeEnd {
    /// Observer for this end's sending direction; survives `split`.
    pub fn audit(&self) -> PipeAudit {
        PipeAudit {
            direction: Arc::clone(&self.outgoing),
        }
    }

    /// Shuts both directions, as a peer hanging up would.
    pub fn close(&self) {
        self.incoming.close();
        self.outgoing.close();
    }
}

impl Transport for PipeEnd {
    fn split(self) -> Result<DuplexLink, TransportError> {
        if self.incoming.state.lock().unwrap().closed || self.outgoing.state.lock().unwrap().closed {
            return Err(TransportError::TransportClosed);
        }
        let (incoming, outgoing) = (Arc::clone(&self.incoming), Arc::clone(&self.outgoing));
        let closer = LinkCloser::new(move || {
            incoming.close();
            outgoing.close();
        });
        Ok(DuplexLink::new(
            PipeWriter(self.outgoing),
            PipeReader(self.incoming),
            closer,
        ))
    }
}

struct PipeReader(Arc<Direction>);

impl Read for PipeReader {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        let mut state = self.0.state.lock().unwrap();
        loop {
            if !state.data.is_empty() {
                let n = buf.len().min(state.data.len());
                for (slot, byte) in buf.iter_mut().zip(state.data.drain(..n)) {
                    *slot = byte;
                }
                return Ok(n);
            }
            if state.closed {
                return Ok(0);
            }
            state = self.0.readable.wait(state).unwrap();
        }
    }
}

struct PipeWriter(Arc<Direction>);

impl Write for PipeWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let mut state = self.0.state.lock().unwrap();
        if state.closed {
            return Err(io::Error::new(io::ErrorKind::BrokenPipe, "pipe closed"));
        }
        state.writers.insert(thread::current().id());
        state.data.extend(buf);
        state.bytes_written += buf.len() as u64;
        drop(state);
        self.0.readable.notify_all();
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Drop for PipeWriter {
    fn drop(&mut self) {
        self.0.close();
    }
}

/// Read-only view of one pipe direction.
#[derive(Clone)]
pub struct PipeAudit {
    direction: Arc<Direction>,
}

impl PipeAudit {
    /// Number of distinct threads that have written to this direction.
    pub fn writer_threads(&self) -> usize {
        self.direction.state.lock().unwrap().writers.len()
    }

    pub fn bytes_written(&self) -> u64 {
        self.direction.state.lock().unwrap().bytes_written
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_cross_and_close_reads_eof() {
        let (a, b) = pair();
        let mut a = a.split().unwrap();
        let mut b = b.split().unwrap();
        a.tx.write_all(b"hello").unwrap();
        let mut buf = [0u8; 16];
        let n = b.rx.read(&mut buf).unwrap();
        assert_eq!(&buf[..n], b"hello");
        a.closer.close();
        assert_eq!(b.rx.read(&mut buf).unwrap(), 0);
        assert!(b.tx.write_all(b"x").is_err());
    }

    #[test]
    fn closed_end_will_not_split() {
        let (a, _b) = pair();
        a.close();
        assert!(matches!(a.split(), Err(TransportError::TransportClosed)));
    }

    #[test]
    fn audit_counts_writer_threads() {
        let (a, _b) = pair();
        let audit = a.audit();
        let mut link = a.split().unwrap();
        link.tx.write_all(b"1").unwrap();
        let mut tx = link.tx;
        std::thread::spawn(move || tx.write_all(b"2").unwrap()).join().unwrap();
        assert_eq!(audit.writer_threads(), 2);
        assert_eq!(audit.bytes_written(), 2);
    }
}
