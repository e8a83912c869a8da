//! WebSocket gateway for browser front ends.
//!
//! One WebSocket session drives one IRC client session. Text frames carry
//! one JSON object each: commands tagged by `op` going in, events tagged by
//! `ev` coming out.
//!
//! ```text
//! -> {"op":"connect","host":"127.0.0.1","port":6667,"nick":"alice","realname":"Alice"}
//! <- {"ev":"registered","text":"Welcome to the Internet Relay Network alice","ts":1700000000000}
//! -> {"op":"join","channel":"#demo"}
//! <- {"ev":"joined","nick":"alice","channel":"#demo","ts":1700000000003}
//! ```

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, TryRecvError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tungstenite::{Message as WsMessage, WebSocket};

use crate::client::{channel_sink, ClientEvent, ClientHandle};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:9667";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum BridgeCommand {
    Connect {
        host: String,
        port: u16,
        nick: String,
        realname: String,
    },
    Join {
        channel: String,
    },
    Part {
        channel: String,
        #[serde(default)]
        reason: Option<String>,
    },
    Privmsg {
        target: String,
        text: String,
    },
    Nick {
        nick: String,
    },
    Quit {
        #[serde(default)]
        reason: Option<String>,
    },
    Raw {
        line: String,
    },
}

/// `ts` is milliseconds since the Unix epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum BridgeEvent {
    Registered {
        text: String,
        ts: u64,
    },
    Message {
        from: String,
        target: String,
        text: String,
        ts: u64,
    },
    Joined {
        nick: String,
        channel: String,
        ts: u64,
    },
    Parted {
        nick: String,
        channel: String,
        ts: u64,
    },
    Names {
        channel: String,
        members: Vec<String>,
        ts: u64,
    },
    NickChanged {
        old: String,
        new: String,
        ts: u64,
    },
    Quit {
        nick: String,
        reason: Option<String>,
        ts: u64,
    },
    ServerError {
        numeric: u16,
        text: String,
        ts: u64,
    },
    Disconnected {
        cause: String,
        ts: u64,
    },
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl BridgeEvent {
    /// `own_nick` becomes the target of direct messages.
    pub fn from_client(event: ClientEvent, own_nick: &str, ts: u64) -> BridgeEvent {
        match event {
            ClientEvent::Registered { text } => BridgeEvent::Registered { text, ts },
            ClientEvent::ChannelMessage { from, channel, text } => BridgeEvent::Message {
                from,
                target: channel,
                text,
                ts,
            },
            ClientEvent::DirectMessage { from, text } => BridgeEvent::Message {
                from,
                target: own_nick.to_string(),
                text,
                ts,
            },
            ClientEvent::Joined { nick, channel } => BridgeEvent::Joined { nick, channel, ts },
            ClientEvent::Parted { nick, channel, .. } => BridgeEvent::Parted { nick, channel, ts },
            ClientEvent::Names { channel, members } => BridgeEvent::Names { channel, members, ts },
            ClientEvent::NickChanged { old, new } => BridgeEvent::NickChanged { old, new, ts },
            ClientEvent::QuitSeen { nick, reason } => BridgeEvent::Quit { nick, reason, ts },
            ClientEvent::ServerError { numeric, text } => BridgeEvent::ServerError { numeric, text, ts },
            ClientEvent::Disconnected { cause } => BridgeEvent::Disconnected { cause, ts },
        }
    }

    fn error(text: impl Into<String>) -> BridgeEvent {
        BridgeEvent::ServerError {
            numeric: 0,
            text: text.into(),
            ts: now_ms(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("websocket session failed: {0}")]
    Session(#[source] Box<tungstenite::Error>),
}

impl From<tungstenite::Error> for BridgeError {
    fn from(e: tungstenite::Error) -> BridgeError {
        BridgeError::Session(Box::new(e))
    }
}

struct Irc {
    handle: ClientHandle,
    events: Receiver<ClientEvent>,
}

/// State of one WebSocket session.
struct Session {
    irc: Option<Irc>,
}

impl Session {
    fn command(&mut self, cmd: BridgeCommand) -> Option<BridgeEvent> {
        if let BridgeCommand::Connect {
            host,
            port,
            nick,
            realname,
        } = cmd
        {
            if self.irc.is_some() {
                return Some(BridgeEvent::error("already connected"));
            }
            let (tx, events) = mpsc::channel();
            let handle = match ClientHandle::connect(&host, port, channel_sink(tx)) {
                Ok(h) => h,
                Err(e) => return Some(BridgeEvent::error(e.to_string())),
            };
            if let Err(e) = handle.register(&nick, &realname) {
                return Some(BridgeEvent::error(e.to_string()));
            }
            self.irc = Some(Irc { handle, events });
            return None;
        }
        let Some(irc) = &self.irc else {
            return Some(BridgeEvent::error("not connected"));
        };
        let h = &irc.handle;
        let result = match cmd {
            BridgeCommand::Connect { .. } => unreachable!(),
            BridgeCommand::Join { channel } => h.join(&channel),
            BridgeCommand::Part { channel, reason } => h.part(&channel, reason.as_deref()),
            BridgeCommand::Privmsg { target, text } => h.privmsg(&target, &text),
            BridgeCommand::Nick { nick } => h.nick(&nick),
            BridgeCommand::Quit { reason } => h.quit(reason.as_deref()),
            BridgeCommand::Raw { line } => h.raw(&line),
        };
        result.err().map(|e| BridgeEvent::error(e.to_string()))
    }

    /// Client events ready to forward. Drops the IRC session once it has
    /// reported its disconnection.
    fn pending_events(&mut self) -> Vec<BridgeEvent> {
        let Some(irc) = &self.irc else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let mut ended = false;
        loop {
            match irc.events.try_recv() {
                Ok(ev) => {
                    ended |= matches!(ev, ClientEvent::Disconnected { .. });
                    let own = irc.handle.state().own_nick.unwrap_or_default();
                    out.push(BridgeEvent::from_client(ev, &own, now_ms()));
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    ended = true;
                    break;
                }
            }
        }
        if ended {
            self.irc = None;
        }
        out
    }

    fn close(&mut self) {
        if let Some(irc) = self.irc.take() {
            let _ = irc.handle.quit(Some("web session closed"));
            irc.handle.stop();
        }
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

/// Serves one WebSocket session until it closes or `shutdown` is set.
pub fn serve_session(stream: TcpStream, poll: Duration, shutdown: &AtomicBool) -> Result<(), BridgeError> {
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.get_mut()
        .set_read_timeout(Some(poll))
        .map_err(tungstenite::Error::Io)?;
    let mut session = Session { irc: None };
    let result = loop {
        if shutdown.load(Ordering::Relaxed) {
            let _ = ws.close(None);
            break Ok(());
        }
        for ev in session.pending_events() {
            if let Err(e) = ws.send(WsMessage::text(ev.to_json())) {
                session.close();
                return Err(e.into());
            }
        }
        match ws.read() {
            Ok(WsMessage::Text(text)) => {
                let reply = match serde_json::from_str::<BridgeCommand>(&text) {
                    Ok(cmd) => session.command(cmd),
                    Err(e) => Some(BridgeEvent::error(format!("malformed command: {e}"))),
                };
                if let Some(ev) = reply {
                    ws.send(WsMessage::text(ev.to_json()))?;
                }
            }
            Ok(WsMessage::Close(_)) => break Ok(()),
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break Ok(()),
            Err(e) => break Err(e.into()),
        }
    };
    session.close();
    result
}

/// A listening bridge. Dropping it stops the accept loop.
pub struct RunningBridge {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl RunningBridge {
    /// Listens on `addr` and serves WebSocket sessions one at a time.
    pub fn bind(addr: &str) -> Result<RunningBridge, BridgeError> {
        let listener = TcpListener::bind(addr).map_err(|source| BridgeError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        let local = listener.local_addr().map_err(|source| BridgeError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&shutdown);
        let accept = thread::Builder::new()
            .name("bridge".into())
            .spawn(move || {
                for conn in listener.incoming() {
                    if flag.load(Ordering::Relaxed) {
                        break;
                    }
                    match conn {
                        Ok(stream) => {
                            if let Err(e) = serve_session(stream, Duration::from_millis(20), &flag) {
                                log::info!("bridge session ended: {e}");
                            }
                        }
                        Err(e) => log::warn!("bridge accept failed: {e}"),
                    }
                }
            })
            .expect("spawn bridge thread");
        Ok(RunningBridge {
            addr: local,
            shutdown,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn wait(mut self) {
        if let Some(t) = self.accept.take() {
            let _ = t.join();
        }
    }
}

impl Drop for RunningBridge {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(500));
        if let Some(t) = self.accept.take() {
            let _ = t.join();
        }
    }
}
