use thiserror::Error;

use super::command::CommandTag;
use super::{MAX_LINE_BYTES, MAX_PARAMS};

/// An IRC message as it appears on the wire, before any per-command
/// interpretation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawMessage {
    pub source: Option<String>,
    pub command: CommandTag,
    pub params: Vec<String>,
    /// Emit the final parameter with a leading `:` even where the canonical
    /// form would not need one (`USER a 0 * :Alice`). Parsing sets this only
    /// for colons the canonical form would have omitted.
    pub trailing_colon: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty line")]
    EmptyLine,
    #[error("line has no command")]
    MissingCommand,
    #[error("source prefix is empty")]
    EmptySource,
    #[error("command {0:?} is neither letters nor a three-digit numeric")]
    BadCommandShape(String),
    #[error("more than {MAX_PARAMS} parameters")]
    TooManyParams,
    #[error("line contains CR, LF or NUL")]
    IllegalByte,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SerializeError {
    #[error("message is {len} bytes with CRLF, limit is {MAX_LINE_BYTES}")]
    OversizeMessage { len: usize },
    #[error("source must be non-empty and contain no spaces or line breaks")]
    InvalidSource,
    #[error("parameter {index} cannot be represented on the wire")]
    InvalidParam { index: usize },
    #[error("more than {MAX_PARAMS} parameters")]
    TooManyParams,
}

impl RawMessage {
    pub fn new<I, S>(command: CommandTag, params: I) -> RawMessage
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        RawMessage {
            source: None,
            command,
            params: params.into_iter().map(Into::into).collect(),
            trailing_colon: false,
        }
    }

    pub fn with_trailing_colon(mut self) -> RawMessage {
        self.trailing_colon = true;
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> RawMessage {
        self.source = Some(source.into());
        self
    }

    /// Checks the structural invariants that make the message representable.
    pub fn validate(&self) -> Result<(), SerializeError> {
        if let Some(source) = &self.source {
            if source.is_empty() || source.contains(' ') || has_illegal_byte(source) {
                return Err(SerializeError::InvalidSource);
            }
        }
        if self.params.len() > MAX_PARAMS {
            return Err(SerializeError::TooManyParams);
        }
        let last = self.params.len().saturating_sub(1);
        for (index, param) in self.params.iter().enumerate() {
            let middle_ok = !param.is_empty() && !param.contains(' ') && !param.starts_with(':');
            if has_illegal_byte(param) || (index != last && !middle_ok) {
                return Err(SerializeError::InvalidParam { index });
            }
        }
        Ok(())
    }
}

fn has_illegal_byte(s: &str) -> bool {
    s.bytes().any(|b| matches!(b, b'\r' | b'\n' | b'\0'))
}

/// Parses one line (without its terminator).
pub fn parse_line(line: &str) -> Result<RawMessage, ParseError> {
    if has_illegal_byte(line) {
        return Err(ParseError::IllegalByte);
    }
    if line.trim_matches(' ').is_empty() {
        return Err(ParseError::EmptyLine);
    }

    let mut rest = line;
    let mut source = None;
    if let Some(after_colon) = rest.strip_prefix(':') {
        let (token, tail) = split_token(after_colon);
        if token.is_empty() {
            return Err(ParseError::EmptySource);
        }
        source = Some(token.to_string());
        rest = tail;
    }

    let (token, tail) = split_token(rest.trim_start_matches(' '));
    if token.is_empty() {
        return Err(ParseError::MissingCommand);
    }
    let command = CommandTag::from_wire(token).ok_or_else(|| ParseError::BadCommandShape(token.to_string()))?;

    let (params, colon) = split_params_marked(tail)?;
    let trailing_colon = colon && !params.last().is_some_and(|p| needs_colon(p));
    Ok(RawMessage {
        source,
        command,
        params,
        trailing_colon,
    })
}

fn needs_colon(param: &str) -> bool {
    param.is_empty() || param.contains(' ') || param.starts_with(':')
}

/// Splits the parameter section of a line: space-separated middles and an
/// optional `:`-introduced trailing parameter that absorbs the remainder.
pub(crate) fn split_params(rest: &str) -> Result<Vec<String>, ParseError> {
    split_params_marked(rest).map(|(params, _)| params)
}

fn split_params_marked(mut rest: &str) -> Result<(Vec<String>, bool), ParseError> {
    let mut params = Vec::new();
    let mut colon = false;
    loop {
        rest = rest.trim_start_matches(' ');
        if rest.is_empty() {
            break;
        }
        if let Some(trailing) = rest.strip_prefix(':') {
            params.push(trailing.to_string());
            colon = true;
            break;
        }
        let (token, tail) = split_token(rest);
        params.push(token.to_string());
        rest = tail;
    }
    if params.len() > MAX_PARAMS {
        return Err(ParseError::TooManyParams);
    }
    Ok((params, colon))
}

fn split_token(s: &str) -> (&str, &str) {
    match s.find(' ') {
        Some(i) => (&s[..i], &s[i + 1..]),
        None => (s, ""),
    }
}

/// Renders the canonical line, without CRLF.
///
/// The last parameter gets a leading `:` when it is empty, contains a space
/// or begins with `:`, and otherwise only if `trailing_colon` is set.
pub fn serialize(msg: &RawMessage) -> Result<String, SerializeError> {
    msg.validate()?;
    let line = render(msg);
    let len = line.len() + 2;
    if len > MAX_LINE_BYTES {
        return Err(SerializeError::OversizeMessage { len });
    }
    Ok(line)
}

/// Like [`serialize`], but shortens the final parameter (on a character
/// boundary) when the line would exceed the frame limit. Relayed messages
/// gain a source prefix the sender did not pay for, so a line that arrived
/// at the limit can leave over it.
pub fn serialize_truncating(msg: &RawMessage) -> Result<String, SerializeError> {
    match serialize(msg) {
        Err(SerializeError::OversizeMessage { len }) if !msg.params.is_empty() => {
            let mut shortened = msg.clone();
            let last = shortened.params.last_mut().expect("non-empty params");
            let excess = len - MAX_LINE_BYTES;
            if excess > last.len() {
                return Err(SerializeError::OversizeMessage { len });
            }
            let mut cut = last.len() - excess;
            while !last.is_char_boundary(cut) {
                cut -= 1;
            }
            last.truncate(cut);
            // The colon rule may now differ (e.g. the text became empty), which
            // only ever adds one byte; trim once more if that happened.
            match serialize(&shortened) {
                Err(SerializeError::OversizeMessage { .. }) => {
                    let last = shortened.params.last_mut().expect("non-empty params");
                    let mut cut = last.len().saturating_sub(1);
                    while !last.is_char_boundary(cut) {
                        cut -= 1;
                    }
                    last.truncate(cut);
                    serialize(&shortened)
                }
                other => other,
            }
        }
        other => other,
    }
}

fn render(msg: &RawMessage) -> String {
    let mut out = String::with_capacity(64);
    if let Some(source) = &msg.source {
        out.push(':');
        out.push_str(source);
        out.push(' ');
    }
    out.push_str(msg.command.as_wire());
    let count = msg.params.len();
    for (i, param) in msg.params.iter().enumerate() {
        out.push(' ');
        if i + 1 == count && (msg.trailing_colon || needs_colon(param)) {
            out.push(':');
        }
        out.push_str(param);
    }
    out
}
