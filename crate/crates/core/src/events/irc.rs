//! IRC adapter for the endpoint runtime: framing and parsing on the receive
//! side, serialization on the send side.

use super::endpoint::{Decoder, EndpointEvents, Fault, OutboundLink};
use crate::wire::{classify, encode_frame, parse_line, serialize_truncating, FrameBuffer, TypedMessage};

/// Splits CRLF frames, parses and classifies each line.
#[derive(Debug, Default)]
pub struct IrcDecoder {
    frames: FrameBuffer,
}

impl IrcDecoder {
    pub fn new() -> IrcDecoder {
        IrcDecoder::default()
    }
}

impl Decoder for IrcDecoder {
    type Item = TypedMessage;

    fn decode(&mut self, chunk: &[u8]) -> Vec<Result<TypedMessage, Fault>> {
        self.frames
            .split_frames(chunk)
            .into_iter()
            .map(|frame| match frame {
                Ok(line) => parse_line(&line)
                    .map(|raw| classify(&raw))
                    .map_err(|e| Fault::decode(format!("{e}: {line:?}"), false)),
                Err(e) => {
                    let fatal = e.is_fatal();
                    Err(Fault::decode(e, fatal))
                }
            })
            .collect()
    }
}

/// Serializes `msg` and writes it as one frame. A message that cannot be
/// represented is reported as a handler fault and nothing is sent.
pub fn transmit(link: &mut OutboundLink, msg: &TypedMessage) -> Result<(), Fault> {
    let line =
        serialize_truncating(&msg.to_raw()).map_err(|e| Fault::handler(format!("cannot send {}: {e}", msg.tag())))?;
    link.send_frame(&encode_frame(&line))
}

pub type IrcEndpoint = EndpointEvents<TypedMessage, IrcDecoder>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::Message;

    #[test]
    fn decoder_reports_parse_faults_without_stopping() {
        let mut d = IrcDecoder::new();
        let items = d.decode(b"PING a\r\n 1x2 y\r\nPING b\r\n");
        assert_eq!(items.len(), 3);
        assert_eq!(
            items[0].as_ref().unwrap().message,
            Message::Ping {
                token: Some("a".into())
            }
        );
        let fault = items[1].as_ref().unwrap_err();
        assert!(!fault.fatal);
        assert!(items[2].is_ok());
    }

    #[test]
    fn decoder_oversize_is_fatal() {
        let mut d = IrcDecoder::new();
        let items = d.decode(&[b'x'; 600]);
        assert!(items[0].as_ref().unwrap_err().fatal);
    }
}
