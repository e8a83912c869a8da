//! Full-duplex asynchronous event runtime.
//!
//! An [`EndpointEvents`] is one participant's share of a two-party
//! conversation: its own event queue, an outbound loop that owns the send
//! direction, and an inbound loop that owns the receive direction. Two
//! endpoints connected by a transport, one per role, make up the complete
//! pattern; each can send while the other is sending.

mod endpoint;
pub mod irc;
pub mod pipe;
mod queue;
mod transport;

pub use endpoint::{
    Decoder, EndpointEvents, EndpointHandle, Fault, FaultKind, LocalHooks, LoopSide, OutboundLink, Phase, RunError,
    RunReport, StopCause, StopDecision,
};
pub use queue::{EventQueue, QueueClosed};
pub use transport::{DuplexLink, LinkCloser, Transport, TransportError, TCP_WRITE_TIMEOUT};
