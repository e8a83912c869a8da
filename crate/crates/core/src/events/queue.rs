use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("event queue is closed")]
pub struct QueueClosed;

/// Unbounded, thread-safe FIFO shared between producers and the one loop
/// that consumes it.
///
/// A soft cap can be set; exceeding it does not reject events but raises a
/// flag the consuming loop reports through the error hook.
pub struct EventQueue<T> {
    inner: Arc<Inner<T>>,
}

struct Inner<T> {
    state: Mutex<State<T>>,
    ready: Condvar,
    soft_cap: Option<usize>,
}

struct State<T> {
    items: VecDeque<T>,
    closed: bool,
    over_cap: bool,
    overflow_pending: bool,
}

impl<T> Clone for EventQueue<T> {
    fn clone(&self) -> Self {
        EventQueue {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        EventQueue::new()
    }
}

impl<T> std::fmt::Debug for EventQueue<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let state = self.inner.state.lock().unwrap();
        f.debug_struct("EventQueue")
            .field("len", &state.items.len())
            .field("closed", &state.closed)
            .finish()
    }
}

impl<T> EventQueue<T> {
    pub fn new() -> EventQueue<T> {
        EventQueue::build(None)
    }

    pub fn with_soft_cap(cap: usize) -> EventQueue<T> {
        EventQueue::build(Some(cap))
    }

    fn build(soft_cap: Option<usize>) -> EventQueue<T> {
        EventQueue {
            inner: Arc::new(Inner {
                state: Mutex::new(State {
                    items: VecDeque::new(),
                    closed: false,
                    over_cap: false,
                    overflow_pending: false,
                }),
                ready: Condvar::new(),
                soft_cap,
            }),
        }
    }

    pub fn enqueue(&self, event: T) -> Result<(), QueueClosed> {
        let mut state = self.inner.state.lock().unwrap();
        if state.closed {
            return Err(QueueClosed);
        }
        state.items.push_back(event);
        if let Some(cap) = self.inner.soft_cap {
            if state.items.len() > cap && !state.over_cap {
                state.over_cap = true;
                state.overflow_pending = true;
            }
        }
        drop(state);
        self.inner.ready.notify_one();
        Ok(())
    }

    /// Blocks until an event is available. Returns `None` once the queue is
    /// closed and every event enqueued before the close has been handed out.
    pub fn dequeue(&self) -> Option<T> {
        let mut state = self.inner.state.lock().unwrap();
        loop {
            if let Some(item) = state.items.pop_front() {
                if let Some(cap) = self.inner.soft_cap {
                    if state.items.len() <= cap {
                        state.over_cap = false;
                    }
                }
                return Some(item);
            }
            if state.closed {
                return None;
            }
            state = self.inner.ready.wait(state).unwrap();
        }
    }

    /// Rejects further enqueues. Already queued events remain dequeueable.
    pub fn close(&self) {
        self.inner.state.lock().unwrap().closed = true;
        self.inner.ready.notify_all();
    }

    /// Closes and discards whatever is still queued.
    pub fn close_and_clear(&self) {
        let mut state = self.inner.state.lock().unwrap();
        state.closed = true;
        state.items.clear();
        drop(state);
        self.inner.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.state.lock().unwrap().closed
    }

    pub fn len(&self) -> usize {
        self.inner.state.lock().unwrap().items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True once per crossing of the soft cap.
    pub(crate) fn take_overflow(&self) -> bool {
        std::mem::take(&mut self.inner.state.lock().unwrap().overflow_pending)
    }
}
