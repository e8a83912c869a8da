#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::{Duration, Instant};

use duplex_irc::server::{RunningServer, Server, ServerConfig};
use duplex_irc::wire::{parse_line, CommandTag, RawMessage};

pub const HOST: &str = "My.Little.Server";

pub fn config() -> ServerConfig {
    ServerConfig {
        audit: true,
        ..ServerConfig::new(HOST, 0)
    }
}

pub fn start() -> RunningServer {
    start_with(config())
}

pub fn start_with(cfg: ServerConfig) -> RunningServer {
    Server::new(cfg).unwrap().bind().unwrap()
}

/// A bare line-level connection for poking at the server.
pub struct LineClient {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
}

impl LineClient {
    pub fn connect(server: &RunningServer) -> LineClient {
        let stream = TcpStream::connect(server.local_addr()).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(3))).unwrap();
        LineClient {
            writer: stream.try_clone().unwrap(),
            reader: BufReader::new(stream),
        }
    }

    pub fn send(&mut self, line: &str) {
        self.writer.write_all(format!("{line}\r\n").as_bytes()).unwrap();
    }

    /// Next line, or `None` on close or timeout.
    pub fn recv_line(&mut self) -> Option<String> {
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) | Err(_) => None,
            Ok(_) => Some(line.trim_end_matches(['\r', '\n']).to_string()),
        }
    }

    pub fn recv(&mut self) -> RawMessage {
        let line = self.recv_line().expect("a line from the server");
        parse_line(&line).unwrap()
    }

    /// Skips lines until one with `cmd` arrives.
    pub fn recv_until(&mut self, cmd: CommandTag) -> RawMessage {
        loop {
            let m = self.recv();
            if m.command == cmd {
                return m;
            }
        }
    }

    pub fn register(&mut self, nick: &str) {
        self.send(&format!("NICK {nick}"));
        self.send(&format!("USER {nick} 0 * :{nick}"));
        self.recv_until(CommandTag::RplMyInfo);
    }

    /// Sends a PING and returns every line received before its PONG.
    pub fn sync(&mut self) -> Vec<RawMessage> {
        self.send("PING sync");
        let mut seen = Vec::new();
        loop {
            let m = self.recv();
            if m.command == CommandTag::Pong && m.params.last().map(String::as_str) == Some("sync") {
                return seen;
            }
            seen.push(m);
        }
    }

    pub fn set_timeout(&self, d: Duration) {
        self.writer.set_read_timeout(Some(d)).unwrap();
    }

    /// True if the server closes the connection within `within`.
    pub fn closed_within(&mut self, within: Duration) -> bool {
        let deadline = Instant::now() + within;
        self.set_timeout(within);
        while Instant::now() < deadline {
            let mut line = String::new();
            match self.reader.read_line(&mut line) {
                Ok(0) => return true,
                Ok(_) => continue,
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => return false,
                Err(_) => return true,
            }
        }
        false
    }
}

pub fn wait_until(within: Duration, mut cond: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + within;
    while Instant::now() < deadline {
        if cond() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(5));
    }
    cond()
}
