//! IRC wire format: command tags, line parsing and serialization, the
//! per-command message view, and CRLF framing over a byte stream.

mod command;
mod frame;
mod raw;
mod typed;

pub use command::{CommandTag, SUPPORTED};
pub use frame::{encode_frame, FrameBuffer, FrameError};
pub(crate) use raw::split_params;
pub use raw::{parse_line, serialize, serialize_truncating, ParseError, RawMessage, SerializeError};
pub use typed::{classify, Message, TypedMessage};

/// Maximum frame size in bytes, CRLF included.
pub const MAX_LINE_BYTES: usize = 512;

/// Maximum number of parameters in one message.
pub const MAX_PARAMS: usize = 15;

/// Tags a client may send to a server.
pub fn client_to_server_tags() -> Vec<CommandTag> {
    use CommandTag::*;
    vec![Nick, User, Join, Part, Privmsg, Quit, Ping, Pong]
}

/// Tags a server may send to a client.
pub fn server_to_client_tags() -> Vec<CommandTag> {
    use CommandTag::*;
    let mut tags = vec![Nick, Join, Part, Privmsg, Quit, Ping, Pong, Error];
    tags.extend(SUPPORTED.iter().filter(|t| t.is_numeric()).cloned());
    tags
}
