//! Scripted conversations with a server.
//!
//! A scenario is a text file with one step per line:
//!
//! ```text
//! # comment
//! name testPing
//! connect a
//! register a foo
//! send a PING abcdef
//! expect a :$host PONG $host abcdef
//! expect a 500ms 409|PONG
//! expect-silence a 300
//! expect-closed a
//! sleep 100
//! close a
//! ```
//!
//! `expect` takes an optional timeout (`<n>ms`, default 2000), an optional
//! `:source` pattern, one or more commands joined by `|`, and optional
//! parameter patterns written as an IRC parameter list. Patterns are globs
//! (`*`, `?`). With parameter patterns the count must match exactly unless
//! the last middle pattern is `...`; without them only the command is
//! checked. The next line that is not a PING must match; PINGs are answered
//! and skipped.
//!
//! `register a foo` sends `NICK foo` and `USER foo 0 * :foo` and expects the
//! 001 to 004 burst. `$host` expands to the server's expected hostname and
//! `{x*N}` to N copies of `x`.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::{ErrorKind, Read, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;
use wildmatch::WildMatch;

use crate::wire::{parse_line, split_params, CommandTag, FrameBuffer, RawMessage, SUPPORTED};

pub const DEFAULT_EXPECT_MS: u64 = 2000;
const CLOSE_WAIT_MS: u64 = 2000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ScenarioParseError {
    pub line: usize,
    pub message: String,
}

/// What an `expect` step accepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matcher {
    pub source: Option<String>,
    pub commands: Vec<CommandTag>,
    /// `None` checks the command only.
    pub params: Option<Vec<String>>,
    /// Further parameters beyond `params` are allowed.
    pub open_ended: bool,
}

impl Matcher {
    pub fn matches(&self, msg: &RawMessage) -> bool {
        if !self.commands.contains(&msg.command) {
            return false;
        }
        if let Some(pattern) = &self.source {
            match &msg.source {
                Some(s) if WildMatch::new(pattern).matches(s) => {}
                _ => return false,
            }
        }
        let Some(patterns) = &self.params else {
            return true;
        };
        let count_ok = if self.open_ended {
            msg.params.len() >= patterns.len()
        } else {
            msg.params.len() == patterns.len()
        };
        count_ok
            && patterns
                .iter()
                .zip(&msg.params)
                .all(|(p, v)| WildMatch::new(p).matches(v))
    }
}

impl fmt::Display for Matcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(s) = &self.source {
            write!(f, ":{s} ")?;
        }
        let cmds: Vec<_> = self.commands.iter().map(|c| c.as_wire().to_string()).collect();
        write!(f, "{}", cmds.join("|"))?;
        if let Some(params) = &self.params {
            for p in params {
                write!(f, " [{p}]")?;
            }
            if self.open_ended {
                write!(f, " ...")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Connect {
        alias: String,
    },
    Send {
        alias: String,
        line: String,
    },
    Expect {
        alias: String,
        matcher: Matcher,
        timeout_ms: u64,
    },
    ExpectSilence {
        alias: String,
        ms: u64,
    },
    /// The server closes the connection within the timeout. Lines before
    /// the close are ignored.
    ExpectClosed {
        alias: String,
        timeout_ms: u64,
    },
    Sleep {
        ms: u64,
    },
    Close {
        alias: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    /// Steps with their source line numbers.
    pub steps: Vec<(usize, Step)>,
}

fn resolve_command(token: &str) -> Option<CommandTag> {
    SUPPORTED
        .iter()
        .find(|t| t.symbolic_name().eq_ignore_ascii_case(token))
        .cloned()
        .or_else(|| CommandTag::from_wire(token))
}

/// Expands `{x*N}` repetitions and `$host`.
fn expand(text: &str, hostname: &str) -> Result<String, String> {
    let mut out = String::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = rest[open..].find('}').ok_or("unclosed '{'")? + open;
        let body = &rest[open + 1..close];
        let (unit, count) = body
            .rsplit_once('*')
            .ok_or_else(|| format!("bad repetition {{{body}}}"))?;
        let count: usize = count
            .parse()
            .map_err(|_| format!("bad repetition count in {{{body}}}"))?;
        out.push_str(&unit.repeat(count));
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    Ok(out.replace("$host", hostname))
}

fn parse_ms(token: &str) -> Option<u64> {
    token.strip_suffix("ms").unwrap_or(token).parse().ok()
}

fn parse_matcher(text: &str) -> Result<Matcher, String> {
    let mut rest = text.trim();
    let mut source = None;
    if let Some(after) = rest.strip_prefix(':') {
        let (s, tail) = after.split_once(' ').ok_or("source pattern without a command")?;
        source = Some(s.to_string());
        rest = tail.trim_start();
    }
    let (cmds, tail) = rest.split_once(' ').unwrap_or((rest, ""));
    let commands = cmds
        .split('|')
        .map(|c| resolve_command(c).ok_or_else(|| format!("bad command {c:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    let (params, open_ended) = if tail.trim().is_empty() {
        (None, false)
    } else {
        let mut params = split_params(tail).map_err(|e| e.to_string())?;
        let open = params.last().is_some_and(|p| p == "...");
        if open {
            params.pop();
        }
        (Some(params), open)
    };
    Ok(Matcher {
        source,
        commands,
        params,
        open_ended,
    })
}

impl Scenario {
    /// Parses a scenario. `hostname` is substituted for `$host`.
    pub fn parse(default_name: &str, text: &str, hostname: &str) -> Result<Scenario, ScenarioParseError> {
        let mut name = default_name.to_string();
        let mut steps = Vec::new();
        let mut connected: Vec<String> = Vec::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |message: String| ScenarioParseError { line: line_no, message };
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let line = expand(line, hostname).map_err(err)?;
            let (keyword, rest) = line.split_once(' ').unwrap_or((&line, ""));
            let rest = rest.trim_start();
            let (alias, args) = rest.split_once(' ').unwrap_or((rest, ""));
            let alias = alias.to_string();
            let needs_alias = |steps_alias: &str| -> Result<(), ScenarioParseError> {
                if connected.iter().any(|a| a == steps_alias) {
                    Ok(())
                } else {
                    Err(err(format!("alias {steps_alias:?} used before connect")))
                }
            };
            match keyword {
                "name" => name = rest.to_string(),
                "connect" => {
                    if alias.is_empty() {
                        return Err(err("connect needs an alias".into()));
                    }
                    connected.push(alias.clone());
                    steps.push((line_no, Step::Connect { alias }));
                }
                "send" => {
                    needs_alias(&alias)?;
                    steps.push((
                        line_no,
                        Step::Send {
                            alias,
                            line: args.to_string(),
                        },
                    ));
                }
                "register" => {
                    needs_alias(&alias)?;
                    let nick = args.trim();
                    if nick.is_empty() {
                        return Err(err("register needs a nick".into()));
                    }
                    for line in [format!("NICK {nick}"), format!("USER {nick} 0 * :{nick}")] {
                        steps.push((
                            line_no,
                            Step::Send {
                                alias: alias.clone(),
                                line,
                            },
                        ));
                    }
                    for code in ["001", "002", "003", "004"] {
                        let matcher = parse_matcher(&format!("{code} {nick} ...")).map_err(err)?;
                        steps.push((
                            line_no,
                            Step::Expect {
                                alias: alias.clone(),
                                matcher,
                                timeout_ms: DEFAULT_EXPECT_MS,
                            },
                        ));
                    }
                }
                "expect" => {
                    needs_alias(&alias)?;
                    let (first, tail) = args.split_once(' ').unwrap_or((args, ""));
                    let (timeout_ms, pattern) = match first.strip_suffix("ms").and_then(|n| n.parse().ok()) {
                        Some(ms) => (ms, tail),
                        None => (DEFAULT_EXPECT_MS, args),
                    };
                    if pattern.trim().is_empty() {
                        return Err(err("expect needs a command".into()));
                    }
                    let matcher = parse_matcher(pattern).map_err(err)?;
                    steps.push((
                        line_no,
                        Step::Expect {
                            alias,
                            matcher,
                            timeout_ms,
                        },
                    ));
                }
                "expect-silence" => {
                    needs_alias(&alias)?;
                    let ms = parse_ms(args.trim()).ok_or_else(|| err("expect-silence needs a duration".into()))?;
                    steps.push((line_no, Step::ExpectSilence { alias, ms }));
                }
                "expect-closed" => {
                    needs_alias(&alias)?;
                    let timeout_ms = if args.trim().is_empty() {
                        CLOSE_WAIT_MS
                    } else {
                        parse_ms(args.trim()).ok_or_else(|| err("bad duration".into()))?
                    };
                    steps.push((line_no, Step::ExpectClosed { alias, timeout_ms }));
                }
                "sleep" => {
                    let ms = parse_ms(rest.trim()).ok_or_else(|| err("sleep needs a duration".into()))?;
                    steps.push((line_no, Step::Sleep { ms }));
                }
                "close" => {
                    needs_alias(&alias)?;
                    steps.push((line_no, Step::Close { alias }));
                }
                other => return Err(err(format!("unknown step {other:?}"))),
            }
        }
        Ok(Scenario { name, steps })
    }
}

/// Where scenarios run.
#[derive(Debug, Clone)]
pub struct Target {
    pub host: String,
    pub port: u16,
}

impl Target {
    pub fn new(host: impl Into<String>, port: u16) -> Target {
        Target {
            host: host.into(),
            port,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepFailure {
    pub step: usize,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioOutcome {
    pub name: String,
    pub failure: Option<StepFailure>,
    pub transcript: Vec<String>,
}

impl ScenarioOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

enum Next {
    Line(String),
    Timeout,
    Closed,
}

struct Conn {
    stream: TcpStream,
    frames: FrameBuffer,
    lines: VecDeque<String>,
    closed: bool,
}

impl Conn {
    fn open(target: &Target) -> Result<Conn, String> {
        let addrs = (target.host.as_str(), target.port)
            .to_socket_addrs()
            .map_err(|e| format!("cannot resolve {}:{}: {e}", target.host, target.port))?;
        let mut last = String::from("no address");
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, Duration::from_secs(2)) {
                Ok(stream) => {
                    let _ = stream.set_nodelay(true);
                    return Ok(Conn {
                        stream,
                        frames: FrameBuffer::new(),
                        lines: VecDeque::new(),
                        closed: false,
                    });
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(format!("connect failed: {last}"))
    }

    fn send(&mut self, line: &str) -> Result<(), String> {
        let mut frame = line.as_bytes().to_vec();
        frame.extend_from_slice(b"\r\n");
        self.stream.write_all(&frame).map_err(|e| format!("send failed: {e}"))
    }

    fn next(&mut self, deadline: Instant) -> Next {
        loop {
            if let Some(line) = self.lines.pop_front() {
                return Next::Line(line);
            }
            if self.closed {
                return Next::Closed;
            }
            let now = Instant::now();
            if now >= deadline {
                return Next::Timeout;
            }
            let _ = self.stream.set_read_timeout(Some(deadline - now));
            let mut buf = [0u8; 4096];
            match self.stream.read(&mut buf) {
                Ok(0) => self.closed = true,
                Ok(n) => {
                    for frame in self.frames.split_frames(&buf[..n]) {
                        match frame {
                            Ok(line) => self.lines.push_back(line),
                            Err(e) if e.is_fatal() => self.closed = true,
                            Err(_) => {}
                        }
                    }
                }
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(_) => self.closed = true,
            }
        }
    }
}

struct Run<'a> {
    target: &'a Target,
    conns: BTreeMap<String, Conn>,
    transcript: Vec<String>,
}

impl Run<'_> {
    fn conn(&mut self, alias: &str) -> Result<&mut Conn, String> {
        self.conns
            .get_mut(alias)
            .ok_or_else(|| format!("{alias} is not connected"))
    }

    /// Next line that is not a PING, answering PINGs on the way.
    fn next_non_ping(&mut self, alias: &str, deadline: Instant) -> Result<Next, String> {
        loop {
            let next = self.conn(alias)?.next(deadline);
            let Next::Line(line) = next else {
                return Ok(next);
            };
            self.transcript.push(format!("<< {alias} {line}"));
            match parse_line(&line) {
                Ok(raw) if raw.command == CommandTag::Ping => {
                    let pong = format!("PONG :{}", raw.params.first().map(String::as_str).unwrap_or(""));
                    self.transcript.push(format!(">> {alias} {pong}"));
                    self.conn(alias)?.send(&pong)?;
                }
                _ => return Ok(Next::Line(line)),
            }
        }
    }

    fn step(&mut self, step: &Step) -> Result<(), String> {
        match step {
            Step::Connect { alias } => {
                let conn = Conn::open(self.target)?;
                self.transcript.push(format!("-- {alias} connected"));
                self.conns.insert(alias.clone(), conn);
            }
            Step::Send { alias, line } => {
                self.transcript.push(format!(">> {alias} {line}"));
                self.conn(alias)?.send(line)?;
            }
            Step::Expect {
                alias,
                matcher,
                timeout_ms,
            } => {
                let deadline = Instant::now() + Duration::from_millis(*timeout_ms);
                match self.next_non_ping(alias, deadline)? {
                    Next::Line(line) => {
                        let ok = parse_line(&line).is_ok_and(|raw| matcher.matches(&raw));
                        if !ok {
                            return Err(format!("expected {matcher}, got {line:?}"));
                        }
                    }
                    Next::Timeout => return Err(format!("timed out after {timeout_ms} ms waiting for {matcher}")),
                    Next::Closed => return Err(format!("connection closed while waiting for {matcher}")),
                }
            }
            Step::ExpectSilence { alias, ms } => {
                let deadline = Instant::now() + Duration::from_millis(*ms);
                match self.next_non_ping(alias, deadline)? {
                    Next::Timeout => {}
                    Next::Line(line) => return Err(format!("expected silence, got {line:?}")),
                    Next::Closed => return Err("expected silence, connection closed".to_string()),
                }
            }
            Step::ExpectClosed { alias, timeout_ms } => {
                let deadline = Instant::now() + Duration::from_millis(*timeout_ms);
                loop {
                    match self.next_non_ping(alias, deadline)? {
                        Next::Line(_) => continue,
                        Next::Closed => break,
                        Next::Timeout => return Err(format!("connection still open after {timeout_ms} ms")),
                    }
                }
                self.transcript.push(format!("-- {alias} closed by server"));
            }
            Step::Sleep { ms } => thread::sleep(Duration::from_millis(*ms)),
            Step::Close { alias } => {
                if let Some(conn) = self.conns.remove(alias) {
                    let _ = conn.stream.shutdown(Shutdown::Both);
                }
                self.transcript.push(format!("-- {alias} closed"));
            }
        }
        Ok(())
    }

    /// Quits every connection still open and waits for the server to close
    /// it, so the next scenario starts from a clean server.
    fn teardown(&mut self) {
        let deadline = Instant::now() + Duration::from_millis(CLOSE_WAIT_MS);
        for conn in self.conns.values_mut().filter(|c| !c.closed) {
            let _ = conn.send("QUIT");
        }
        for conn in self.conns.values_mut() {
            while !matches!(conn.next(deadline), Next::Closed | Next::Timeout) {}
            let _ = conn.stream.shutdown(Shutdown::Both);
        }
        self.conns.clear();
    }
}

/// Runs the steps in order and stops at the first failure.
pub fn run_scenario(scenario: &Scenario, target: &Target) -> ScenarioOutcome {
    let mut run = Run {
        target,
        conns: BTreeMap::new(),
        transcript: Vec::new(),
    };
    let mut failure = None;
    for (i, (line, step)) in scenario.steps.iter().enumerate() {
        if let Err(reason) = run.step(step) {
            run.transcript
                .push(format!("!! step {} (line {line}): {reason}", i + 1));
            failure = Some(StepFailure {
                step: i + 1,
                line: *line,
                reason,
            });
            break;
        }
    }
    run.teardown();
    ScenarioOutcome {
        name: scenario.name.clone(),
        failure,
        transcript: run.transcript,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(line: &str) -> RawMessage {
        parse_line(line).unwrap()
    }

    #[test]
    fn matcher_globs_and_counts() {
        let m = parse_matcher(":srv 433 * foo *").unwrap();
        assert!(m.matches(&raw(":srv 433 * foo :Nickname is already in use")));
        assert!(!m.matches(&raw(":other 433 * foo :x")));
        assert!(!m.matches(&raw(":srv 433 * foo")));
        let any = parse_matcher("409|PONG").unwrap();
        assert!(any.matches(&raw(":s 409 * :No origin")));
        assert!(any.matches(&raw(":s PONG s :")));
        let open = parse_matcher("001 alice ...").unwrap();
        assert!(open.matches(&raw(":s 001 alice :Welcome")));
        assert!(!open.matches(&raw(":s 001 bob :Welcome")));
        let sym = parse_matcher("RPL_WELCOME").unwrap();
        assert!(sym.matches(&raw(":s 001 x :y")));
    }

    #[test]
    fn trailing_pattern_with_spaces() {
        let m = parse_matcher(":foo PART #chan :bye for now").unwrap();
        assert!(m.matches(&raw(":foo PART #chan :bye for now")));
        assert!(!m.matches(&raw(":foo PART #chan")));
    }

    #[test]
    fn expansion() {
        assert_eq!(expand("x{a*3}y $host", "h").unwrap(), "xaaay h");
        assert!(expand("{a*}", "h").is_err());
    }

    #[test]
    fn parse_checks_aliases() {
        let err = Scenario::parse("t", "send a NICK x", "h").unwrap_err();
        assert_eq!(err.line, 1);
        let s = Scenario::parse(
            "t",
            "connect a\nregister a foo\nexpect a 500ms :$host PONG $host tok",
            "srv",
        )
        .unwrap();
        assert_eq!(s.steps.len(), 1 + 2 + 4 + 1);
        let Step::Expect {
            matcher, timeout_ms, ..
        } = &s.steps[7].1
        else {
            panic!()
        };
        assert_eq!(*timeout_ms, 500);
        assert_eq!(matcher.source.as_deref(), Some("srv"));
    }

    #[test]
    fn name_directive() {
        let s = Scenario::parse("file", "name testX\nsleep 1", "h").unwrap();
        assert_eq!(s.name, "testX");
    }
}
