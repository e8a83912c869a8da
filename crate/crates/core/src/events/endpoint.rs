use std::fmt;
use std::io::{ErrorKind, Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use thiserror::Error;

use super::queue::{EventQueue, QueueClosed};
use super::transport::{DuplexLink, LinkCloser};

/// Which of the two loops a fault came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopSide {
    Inbound,
    Outbound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    Transport,
    Decode,
    Handler,
    /// The queue grew past its soft cap.
    Overflow,
}

/// Anything that went wrong inside a loop. Faults never escape `run`; they
/// are handed to the error hook.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fault {
    pub kind: FaultKind,
    pub side: Option<LoopSide>,
    pub detail: String,
    /// Fatal faults end the run whatever the hook decides.
    pub fatal: bool,
}

impl Fault {
    pub fn transport(detail: impl fmt::Display) -> Fault {
        Fault::new(FaultKind::Transport, detail.to_string(), true)
    }

    pub fn decode(detail: impl fmt::Display, fatal: bool) -> Fault {
        Fault::new(FaultKind::Decode, detail.to_string(), fatal)
    }

    pub fn handler(detail: impl fmt::Display) -> Fault {
        Fault::new(FaultKind::Handler, detail.to_string(), false)
    }

    fn new(kind: FaultKind, detail: String, fatal: bool) -> Fault {
        Fault {
            kind,
            side: None,
            detail,
            fatal,
        }
    }

    fn on_side(mut self, side: LoopSide) -> Fault {
        self.side.get_or_insert(side);
        self
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} fault", self.kind)?;
        if let Some(side) = self.side {
            write!(f, " in {side:?} loop")?;
        }
        write!(f, ": {}", self.detail)
    }
}

impl From<QueueClosed> for Fault {
    fn from(e: QueueClosed) -> Fault {
        Fault::handler(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Stop,
    Continue,
}

type ErrorHook = Box<dyn FnMut(&Fault) -> StopDecision + Send>;

/// Hooks for the local code around one run.
pub struct LocalHooks {
    on_error: ErrorHook,
    on_stop: Option<Box<dyn FnOnce() + Send>>,
}

impl Default for LocalHooks {
    /// Stops on transport faults and on anything fatal, continues otherwise.
    fn default() -> Self {
        LocalHooks {
            on_error: Box::new(|fault| {
                if fault.fatal || fault.kind == FaultKind::Transport {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }),
            on_stop: None,
        }
    }
}

impl LocalHooks {
    pub fn new() -> LocalHooks {
        LocalHooks::default()
    }

    pub fn on_error(mut self, hook: impl FnMut(&Fault) -> StopDecision + Send + 'static) -> LocalHooks {
        self.on_error = Box::new(hook);
        self
    }

    /// Runs once, after both loops have exited.
    pub fn on_stop(mut self, hook: impl FnOnce() + Send + 'static) -> LocalHooks {
        self.on_stop = Some(Box::new(hook));
        self
    }
}

/// Why a run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopCause {
    Requested(String),
    PeerClosed,
    Fault(Fault),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    /// Frames written by the outbound loop.
    pub frames_sent: u64,
    /// Items decoded by the inbound loop and handed to its handler.
    pub frames_received: u64,
    /// Events taken off the queue by the outbound loop.
    pub events_processed: u64,
    /// Faults routed to the error hook.
    pub faults: u64,
    pub cause: StopCause,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("endpoint has already been run")]
    AlreadyRunning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    Running,
    Stopped,
}

/// Turns received bytes into items for the inbound handler.
pub trait Decoder: Send {
    type Item: Send;

    /// Decodes everything `chunk` completes. Faults are returned in stream
    /// position; a fatal one ends the inbound loop.
    fn decode(&mut self, chunk: &[u8]) -> Vec<Result<Self::Item, Fault>>;
}

/// The send direction as seen by the outbound handler.
pub struct OutboundLink {
    tx: Box<dyn Write + Send>,
    frames_sent: u64,
}

impl OutboundLink {
    /// Writes one complete frame.
    pub fn send_frame(&mut self, frame: &[u8]) -> Result<(), Fault> {
        self.tx
            .write_all(frame)
            .and_then(|()| self.tx.flush())
            .map_err(Fault::transport)?;
        self.frames_sent += 1;
        Ok(())
    }

    pub fn frames_sent(&self) -> u64 {
        self.frames_sent
    }
}

type OutboundFn<T> = Box<dyn FnMut(T, &mut OutboundLink) -> Result<(), Fault> + Send>;
type InboundFn<T, I> = Box<dyn FnMut(I, &EndpointHandle<T>) -> Result<(), Fault> + Send>;

struct Control {
    lifecycle: Mutex<Lifecycle>,
    closer: LinkCloser,
}

struct Lifecycle {
    phase: Phase,
    cause: Option<StopCause>,
}

impl Control {
    fn record_cause(&self, cause: StopCause) {
        self.lifecycle.lock().unwrap().cause.get_or_insert(cause);
    }

    fn stopping(&self) -> bool {
        self.lifecycle.lock().unwrap().cause.is_some()
    }
}

/// Thread-safe access to a running (or not yet running) endpoint: enqueue
/// events and request a stop.
pub struct EndpointHandle<T> {
    queue: EventQueue<T>,
    control: Arc<Control>,
}

impl<T> Clone for EndpointHandle<T> {
    fn clone(&self) -> Self {
        EndpointHandle {
            queue: self.queue.clone(),
            control: Arc::clone(&self.control),
        }
    }
}

impl<T> EndpointHandle<T> {
    pub fn enqueue(&self, event: T) -> Result<(), QueueClosed> {
        self.queue.enqueue(event)
    }

    pub fn queue(&self) -> &EventQueue<T> {
        &self.queue
    }

    /// Idempotent. Closes the queue so the outbound loop finishes what was
    /// already enqueued, after which the link is shut and both loops exit.
    /// Only the first cause is kept.
    pub fn stop(&self, cause: impl Into<String>) {
        let idle = {
            let mut lc = self.control.lifecycle.lock().unwrap();
            lc.cause.get_or_insert_with(|| StopCause::Requested(cause.into()));
            lc.phase == Phase::Idle
        };
        self.queue.close();
        if idle {
            self.control.closer.close();
        }
    }

    pub fn phase(&self) -> Phase {
        self.control.lifecycle.lock().unwrap().phase
    }

    pub fn is_stopping(&self) -> bool {
        self.control.stopping()
    }

    /// The first recorded stop cause, if any.
    pub fn stop_cause(&self) -> Option<StopCause> {
        self.control.lifecycle.lock().unwrap().cause.clone()
    }

    fn abort(&self, cause: StopCause) {
        self.control.record_cause(cause);
        self.queue.close_and_clear();
        self.control.closer.close();
    }
}

struct Parts<T, D: Decoder> {
    tx: Box<dyn Write + Send>,
    rx: Box<dyn Read + Send>,
    decoder: D,
    outbound: OutboundFn<T>,
    inbound: InboundFn<T, D::Item>,
    hooks: LocalHooks,
}

/// One role's half of a full-duplex conversation: an event queue, a loop
/// that drains it through the outbound handler onto the send direction, and
/// a loop that decodes the receive direction and feeds the inbound handler.
///
/// The inbound handler usually reacts by enqueueing; the two loops never
/// share a direction of the link.
pub struct EndpointEvents<T, D: Decoder> {
    handle: EndpointHandle<T>,
    parts: Mutex<Option<Parts<T, D>>>,
}

impl<T, D> EndpointEvents<T, D>
where
    T: Send + 'static,
    D: Decoder + 'static,
{
    pub fn new(
        link: DuplexLink,
        decoder: D,
        outbound: impl FnMut(T, &mut OutboundLink) -> Result<(), Fault> + Send + 'static,
        inbound: impl FnMut(D::Item, &EndpointHandle<T>) -> Result<(), Fault> + Send + 'static,
    ) -> Self {
        EndpointEvents::with_queue(link, decoder, EventQueue::new(), outbound, inbound)
    }

    /// Like [`new`](Self::new) with a caller-supplied queue, e.g. one with a
    /// soft cap or with events enqueued ahead of time.
    pub fn with_queue(
        link: DuplexLink,
        decoder: D,
        queue: EventQueue<T>,
        outbound: impl FnMut(T, &mut OutboundLink) -> Result<(), Fault> + Send + 'static,
        inbound: impl FnMut(D::Item, &EndpointHandle<T>) -> Result<(), Fault> + Send + 'static,
    ) -> Self {
        let DuplexLink { tx, rx, closer } = link;
        EndpointEvents {
            handle: EndpointHandle {
                queue,
                control: Arc::new(Control {
                    lifecycle: Mutex::new(Lifecycle {
                        phase: Phase::Idle,
                        cause: None,
                    }),
                    closer,
                }),
            },
            parts: Mutex::new(Some(Parts {
                tx,
                rx,
                decoder,
                outbound: Box::new(outbound),
                inbound: Box::new(inbound),
                hooks: LocalHooks::default(),
            })),
        }
    }

    pub fn hooks(self, hooks: LocalHooks) -> Self {
        if let Some(parts) = self.parts.lock().unwrap().as_mut() {
            parts.hooks = hooks;
        }
        self
    }

    pub fn handle(&self) -> EndpointHandle<T> {
        self.handle.clone()
    }

    pub fn enqueue(&self, event: T) -> Result<(), QueueClosed> {
        self.handle.enqueue(event)
    }

    pub fn stop(&self, cause: impl Into<String>) {
        self.handle.stop(cause)
    }

    /// Runs both loops and blocks until they have exited and the stop hook
    /// has fired.
    pub fn run(&self) -> Result<RunReport, RunError> {
        let parts = self.parts.lock().unwrap().take().ok_or(RunError::AlreadyRunning)?;
        let Parts {
            tx,
            mut rx,
            mut decoder,
            mut outbound,
            mut inbound,
            hooks,
        } = parts;
        let LocalHooks { on_error, on_stop } = hooks;
        let already_stopped = {
            let mut lc = self.handle.control.lifecycle.lock().unwrap();
            lc.phase = Phase::Running;
            lc.cause.is_some()
        };

        let shared = Shared {
            handle: self.handle.clone(),
            on_error: Mutex::new(on_error),
            faults: AtomicU64::new(0),
        };
        let received = AtomicU64::new(0);
        let mut out = OutboundLink { tx, frames_sent: 0 };
        let mut processed = 0u64;

        if !already_stopped {
            thread::scope(|scope| {
                scope.spawn(|| {
                    let n = shared.inbound_loop(&mut *rx, &mut decoder, &mut inbound);
                    received.store(n, Ordering::Relaxed);
                });
                processed = shared.outbound_loop(&mut out, &mut outbound);
                // Wakes the inbound loop if it is still blocked in a read.
                self.handle.control.closer.close();
            });
        }
        self.handle.control.closer.close();
        self.handle.queue.close();

        let cause = {
            let mut lc = self.handle.control.lifecycle.lock().unwrap();
            lc.phase = Phase::Stopped;
            lc.cause.clone().unwrap_or(StopCause::Requested(String::new()))
        };
        if let Some(on_stop) = on_stop {
            on_stop();
        }
        Ok(RunReport {
            frames_sent: out.frames_sent,
            frames_received: received.load(Ordering::Relaxed),
            events_processed: processed,
            faults: shared.faults.load(Ordering::Relaxed),
            cause,
        })
    }
}

struct Shared<T> {
    handle: EndpointHandle<T>,
    on_error: Mutex<ErrorHook>,
    faults: AtomicU64,
}

impl<T> Shared<T> {
    /// Routes a fault to the hook. Returns true if the run must end, in
    /// which case it has already been aborted.
    fn report(&self, fault: Fault) -> bool {
        if self.handle.control.stopping() {
            return true;
        }
        self.faults.fetch_add(1, Ordering::Relaxed);
        let decision = (self.on_error.lock().unwrap())(&fault);
        if fault.fatal || decision == StopDecision::Stop {
            self.handle.abort(StopCause::Fault(fault));
            true
        } else {
            false
        }
    }

    /// Tells the hook about a fault that ends the run regardless.
    fn notify(&self, fault: &Fault) {
        self.faults.fetch_add(1, Ordering::Relaxed);
        let _ = (self.on_error.lock().unwrap())(fault);
    }

    fn outbound_loop(&self, out: &mut OutboundLink, handler: &mut OutboundFn<T>) -> u64 {
        let mut processed = 0;
        while let Some(event) = self.handle.queue.dequeue() {
            processed += 1;
            if let Err(fault) = handler(event, out) {
                if self.report(fault.on_side(LoopSide::Outbound)) {
                    break;
                }
            }
            if self.handle.queue.take_overflow() {
                let fault = Fault::new(FaultKind::Overflow, "queue exceeded its soft cap".into(), false);
                if self.report(fault.on_side(LoopSide::Outbound)) {
                    break;
                }
            }
        }
        processed
    }

    fn inbound_loop<D: Decoder>(&self, rx: &mut dyn Read, decoder: &mut D, handler: &mut InboundFn<T, D::Item>) -> u64 {
        let mut received = 0;
        let mut buf = vec![0u8; 4096];
        'read: loop {
            if self.handle.control.stopping() {
                break;
            }
            let n = match rx.read(&mut buf) {
                Ok(0) => {
                    if !self.handle.control.stopping() {
                        self.notify(&Fault::transport("peer closed the connection").on_side(LoopSide::Inbound));
                        self.handle.abort(StopCause::PeerClosed);
                    }
                    break;
                }
                Ok(n) => n,
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => {
                    self.report(Fault::transport(e).on_side(LoopSide::Inbound));
                    break;
                }
            };
            for item in decoder.decode(&buf[..n]) {
                if self.handle.control.stopping() {
                    break 'read;
                }
                let result = match item {
                    Ok(item) => {
                        received += 1;
                        handler(item, &self.handle)
                    }
                    Err(fault) => Err(fault),
                };
                if let Err(fault) = result {
                    if self.report(fault.on_side(LoopSide::Inbound)) {
                        break 'read;
                    }
                }
            }
        }
        received
    }
}
