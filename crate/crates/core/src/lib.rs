//! An IRC client and server built as two endpoints of one full-duplex
//! conversation.
//!
//! * [`wire`]: message grammar, numerics, CRLF framing.
//! * [`events`]: the endpoint runtime. A queue, an outbound loop owning the
//!   send direction and an inbound loop owning the receive direction.
//! * [`dispatch`]: validated command-tag to handler tables.
//! * [`server`] and [`client`]: the two roles.
//! * [`harness`]: scripted scenarios, the conformance suite, load runs and
//!   curve fits.
//! * [`bridge`]: WebSocket JSON gateway onto a client session.

pub mod bridge;
pub mod client;
pub mod dispatch;
pub mod events;
pub mod harness;
pub mod server;
pub mod wire;
