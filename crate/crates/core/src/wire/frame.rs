use thiserror::Error;

use super::MAX_LINE_BYTES;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    /// More than `limit` bytes without a line terminator, or a terminated
    /// line longer than the limit. The stream cannot be resynchronised.
    #[error("frame exceeds {limit} bytes")]
    OversizeFrame { limit: usize },
    /// The frame was dropped; the stream continues.
    #[error("frame is not valid UTF-8")]
    InvalidUtf8,
}

impl FrameError {
    pub fn is_fatal(&self) -> bool {
        matches!(self, FrameError::OversizeFrame { .. })
    }
}

/// Reassembles CRLF-delimited lines from arbitrarily chunked bytes.
///
/// Bare LF is accepted as a terminator. Empty lines are skipped. After an
/// oversize error the buffer is poisoned and yields nothing further.
#[derive(Debug, Clone)]
pub struct FrameBuffer {
    pending: Vec<u8>,
    limit: usize,
    poisoned: bool,
}

impl Default for FrameBuffer {
    fn default() -> Self {
        FrameBuffer::new()
    }
}

impl FrameBuffer {
    pub fn new() -> FrameBuffer {
        FrameBuffer::with_limit(MAX_LINE_BYTES)
    }

    /// `limit` counts the terminator.
    pub fn with_limit(limit: usize) -> FrameBuffer {
        FrameBuffer {
            pending: Vec::new(),
            limit,
            poisoned: false,
        }
    }

    pub fn pending(&self) -> &[u8] {
        &self.pending
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned
    }

    /// Appends `incoming` and returns every line it completed, in order.
    pub fn split_frames(&mut self, incoming: &[u8]) -> Vec<Result<String, FrameError>> {
        let mut out = Vec::new();
        if self.poisoned {
            return out;
        }
        self.pending.extend_from_slice(incoming);

        let mut start = 0;
        while let Some(offset) = self.pending[start..].iter().position(|&b| b == b'\n') {
            let end = start + offset;
            // terminator length: 1 for bare LF, 2 for CRLF
            let (line_end, term) = if end > start && self.pending[end - 1] == b'\r' {
                (end - 1, 2)
            } else {
                (end, 1)
            };
            if line_end - start + term > self.limit {
                self.poison(&mut out);
                return out;
            }
            let line = &self.pending[start..line_end];
            if !line.is_empty() {
                out.push(
                    std::str::from_utf8(line)
                        .map(str::to_string)
                        .map_err(|_| FrameError::InvalidUtf8),
                );
            }
            start = end + 1;
        }
        self.pending.drain(..start);

        if self.pending.len() > self.limit {
            self.poison(&mut out);
        }
        out
    }

    fn poison(&mut self, out: &mut Vec<Result<String, FrameError>>) {
        self.poisoned = true;
        self.pending.clear();
        out.push(Err(FrameError::OversizeFrame { limit: self.limit }));
    }
}

/// Encodes one serialized line as a wire frame.
pub fn encode_frame(line: &str) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(line.len() + 2);
    bytes.extend_from_slice(line.as_bytes());
    bytes.extend_from_slice(b"\r\n");
    bytes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(frames: Vec<Result<String, FrameError>>) -> Vec<String> {
        frames.into_iter().map(Result::unwrap).collect()
    }

    #[test]
    fn keeps_partial_line_pending() {
        let mut buf = FrameBuffer::new();
        assert_eq!(ok(buf.split_frames(b"NICK alice\r\nUSER a")), vec!["NICK alice"]);
        assert_eq!(buf.pending(), b"USER a");
    }

    #[test]
    fn reassembles_across_chunks() {
        let mut buf = FrameBuffer::new();
        assert!(buf.split_frames(b"PI").is_empty());
        assert_eq!(ok(buf.split_frames(b"NG t\r\n")), vec!["PING t"]);
        assert!(buf.pending().is_empty());
    }

    #[test]
    fn cr_and_lf_split_across_chunks() {
        let mut buf = FrameBuffer::new();
        assert!(buf.split_frames(b"PING t\r").is_empty());
        assert_eq!(ok(buf.split_frames(b"\n")), vec!["PING t"]);
    }

    #[test]
    fn bare_lf_and_empty_lines() {
        let mut buf = FrameBuffer::new();
        assert_eq!(ok(buf.split_frames(b"\r\n\nA\nB\r\n\r\n")), vec!["A", "B"]);
    }

    #[test]
    fn oversize_without_delimiter_is_fatal() {
        let mut buf = FrameBuffer::new();
        let frames = buf.split_frames(&[b'a'; 520]);
        assert_eq!(frames, vec![Err(FrameError::OversizeFrame { limit: 512 })]);
        assert!(frames[0].as_ref().unwrap_err().is_fatal());
        assert!(buf.is_poisoned());
        assert!(buf.split_frames(b"PING x\r\n").is_empty());
    }

    #[test]
    fn line_at_limit_passes_and_one_over_fails() {
        let mut buf = FrameBuffer::new();
        let mut at = vec![b'a'; 510];
        at.extend_from_slice(b"\r\n");
        assert_eq!(ok(buf.split_frames(&at)).len(), 1);

        let mut over = vec![b'a'; 511];
        over.extend_from_slice(b"\r\n");
        let frames = buf.split_frames(&over);
        assert_eq!(frames, vec![Err(FrameError::OversizeFrame { limit: 512 })]);
    }

    #[test]
    fn pending_exactly_at_limit_waits() {
        let mut buf = FrameBuffer::new();
        let mut almost = vec![b'a'; 510];
        almost.push(b'\r');
        assert!(buf.split_frames(&almost).is_empty());
        assert_eq!(ok(buf.split_frames(b"\n")).len(), 1);
    }

    #[test]
    fn invalid_utf8_drops_only_that_frame() {
        let mut buf = FrameBuffer::new();
        let frames = buf.split_frames(b"A\r\n\xff\xfe\r\nB\r\n");
        assert_eq!(
            frames,
            vec![Ok("A".to_string()), Err(FrameError::InvalidUtf8), Ok("B".to_string())]
        );
        assert!(!buf.is_poisoned());
    }
}
