//! The client role.
//!
//! A [`ClientHandle`] runs one [`EndpointEvents`] against a server. Local
//! code drives it through the command API, which only ever enqueues; what
//! the server sends comes back as [`ClientEvent`]s through a sink the
//! embedder supplies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use thiserror::Error;

use crate::dispatch::BranchTable;
use crate::events::irc::{transmit, IrcDecoder};
use crate::events::{
    EndpointEvents, EndpointHandle, Fault, LocalHooks, OutboundLink, QueueClosed, RunReport, StopCause, Transport,
    TransportError,
};
use crate::wire::{
    encode_frame, parse_line, serialize_truncating, server_to_client_tags, CommandTag, Message, ParseError, RawMessage,
    TypedMessage, SUPPORTED,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientEvent {
    /// `text` is the 001 trailing text as sent.
    Registered {
        text: String,
    },
    ChannelMessage {
        from: String,
        channel: String,
        text: String,
    },
    DirectMessage {
        from: String,
        text: String,
    },
    Joined {
        nick: String,
        channel: String,
    },
    Parted {
        nick: String,
        channel: String,
        reason: Option<String>,
    },
    Names {
        channel: String,
        members: Vec<String>,
    },
    NickChanged {
        old: String,
        new: String,
    },
    QuitSeen {
        nick: String,
        reason: Option<String>,
    },
    /// `numeric` is 0 for anything that is not an error reply.
    ServerError {
        numeric: u16,
        text: String,
    },
    Disconnected {
        cause: String,
    },
}

impl fmt::Display for ClientEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClientEvent::Registered { text } => write!(f, "Welcome: {text}"),
            ClientEvent::ChannelMessage { from, channel, text } => write!(f, "[{channel}] <{from}> {text}"),
            ClientEvent::DirectMessage { from, text } => write!(f, "*{from}* {text}"),
            ClientEvent::Joined { nick, channel } => write!(f, "{nick} joined {channel}"),
            ClientEvent::Parted { nick, channel, reason } => {
                write!(f, "{nick} left {channel}")?;
                reason.iter().try_for_each(|r| write!(f, " ({r})"))
            }
            ClientEvent::Names { channel, members } => write!(f, "{channel}: {}", members.join(" ")),
            ClientEvent::NickChanged { old, new } => write!(f, "{old} is now {new}"),
            ClientEvent::QuitSeen { nick, reason } => {
                write!(f, "{nick} quit")?;
                reason.iter().try_for_each(|r| write!(f, " ({r})"))
            }
            ClientEvent::ServerError { numeric, text } => write!(f, "error {numeric:03}: {text}"),
            ClientEvent::Disconnected { cause } => write!(f, "disconnected: {cause}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot connect to {addr}: {source}")]
    ConnectFailure {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    QueueClosed(#[from] QueueClosed),
    #[error("bad raw line: {0}")]
    Parse(#[from] ParseError),
}

/// Client-side view of the conversation so far.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClientState {
    pub own_nick: Option<String>,
    pub registered: bool,
    /// Channel name to the nicks known to be in it.
    pub memberships: BTreeMap<String, BTreeSet<String>>,
    pub pending_names: BTreeMap<String, Vec<String>>,
}

impl ClientState {
    fn is_me(&self, nick: &str) -> bool {
        self.own_nick.as_deref().is_some_and(|me| me.eq_ignore_ascii_case(nick))
    }

    fn channel_key(&self, channel: &str) -> String {
        self.memberships
            .keys()
            .find(|k| k.eq_ignore_ascii_case(channel))
            .cloned()
            .unwrap_or_else(|| channel.to_string())
    }
}

/// What the client's outbound loop sends.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outgoing {
    Message(TypedMessage),
    /// A line given by local code, reproduced as parsed.
    Raw(RawMessage),
}

type Sink = Box<dyn FnMut(ClientEvent) + Send>;

struct Core {
    state: ClientState,
    sink: Sink,
    disconnected: bool,
}

impl Core {
    fn emit(&mut self, event: ClientEvent) {
        if matches!(event, ClientEvent::Disconnected { .. }) {
            if self.disconnected {
                return;
            }
            self.disconnected = true;
        }
        (self.sink)(event);
    }
}

/// Context for the server-to-client branches.
pub struct ClientCtx {
    core: Arc<Mutex<Core>>,
    out: EndpointHandle<Outgoing>,
}

pub type ClientTable = BranchTable<ClientCtx, Result<(), Fault>>;
type Handler = fn(&mut ClientCtx, TypedMessage) -> Result<(), Fault>;

fn source_nick(msg: &TypedMessage) -> String {
    let source = msg.source.as_deref().unwrap_or("");
    source.split('!').next().unwrap_or(source).to_string()
}

fn on_welcome(ctx: &mut ClientCtx, msg: TypedMessage) -> Result<(), Fault> {
    let Message::Welcome { target, text } = msg.message else {
        unreachable!()
    };
    let mut core = ctx.core.lock().unwrap();
    core.state.registered = true;
    if let Some(nick) = target {
        core.state.own_nick = Some(nick);
    }
    core.emit(ClientEvent::Registered {
        text: text.unwrap_or_default(),
    });
    Ok(())
}

fn on_ping(ctx: &mut ClientCtx, msg: TypedMessage) -> Result<(), Fault> {
    let Message::Ping { token } = msg.message else {
        unreachable!()
    };
    let pong = Message::Pong {
        server: None,
        token: Some(token.unwrap_or_default()),
    };
    ctx.out.enqueue(Outgoing::Message(pong.into())).map_err(Fault::from)
}

fn on_privmsg(ctx: &mut ClientCtx, msg: TypedMessage) -> Result<(), Fault> {
    let from = source_nick(&msg);
    let Message::Privmsg { target, text } = msg.message else {
        unreachable!()
    };
    let (target, text) = (target.unwrap_or_default(), text.unwrap_or_default());
    let event = if target.starts_with('#') {
        ClientEvent::ChannelMessage {
            from,
            channel: target,
            text,
        }
    } else {
        ClientEvent::DirectMessage { from, text }
    };
    ctx.core.lock().unwrap().emit(event);
    Ok(())
}

fn on_join(ctx: &mut ClientCtx, msg: TypedMessage) -> Result<(), Fault> {
    let nick = source_nick(&msg);
    let Message::Join { channels, .. } = msg.message else {
        unreachable!()
    };
    let mut core = ctx.core.lock().unwrap();
    for channel in channels {
        let key = core.state.channel_key(&channel);
        core.state.memberships.entry(key).or_default().insert(nick.clone());
        core.emit(ClientEvent::Joined {
            nick: nick.clone(),
            channel,
        });
    }
    Ok(())
}

fn on_part(ctx: &mut ClientCtx, msg: TypedMessage) -> Result<(), Fault> {
    let nick = source_nick(&msg);
    let Message::Part { channel, reason } = msg.message else {
        unreachable!()
    };
    let channel = channel.unwrap_or_default();
    let mut core = ctx.core.lock().unwrap();
    let key = core.state.channel_key(&channel);
    if core.state.is_me(&nick) {
        core.state.memberships.remove(&key);
    } else if let Some(members) = core.state.memberships.get_mut(&key) {
        members.remove(&nick);
    }
    core.emit(ClientEvent::Parted { nick, channel, reason });
    Ok(())
}

fn on_quit(ctx: &mut ClientCtx, msg: TypedMessage) -> Result<(), Fault> {
    let nick = source_nick(&msg);
    let Message::Quit { reason } = msg.message else {
        unreachable!()
    };
    let mut core = ctx.core.lock().unwrap();
    for members in core.state.memberships.values_mut() {
        members.remove(&nick);
    }
    core.emit(ClientEvent::QuitSeen { nick, reason });
    Ok(())
}

fn on_nick(ctx: &mut ClientCtx, msg: TypedMessage) -> Result<(), Fault> {
    let old = source_nick(&msg);
    let Message::Nick { nick } = msg.message else {
        unreachable!()
    };
    let new = nick.unwrap_or_default();
    let mut core = ctx.core.lock().unwrap();
    if core.state.is_me(&old) {
        core.state.own_nick = Some(new.clone());
    }
    for members in core.state.memberships.values_mut() {
        if members.remove(&old) {
            members.insert(new.clone());
        }
    }
    core.emit(ClientEvent::NickChanged { old, new });
    Ok(())
}

fn on_names(ctx: &mut ClientCtx, msg: TypedMessage) -> Result<(), Fault> {
    let Message::NamReply { channel, members, .. } = msg.message else {
        unreachable!()
    };
    let mut core = ctx.core.lock().unwrap();
    let channel = core.state.channel_key(&channel.unwrap_or_default());
    // Strip membership prefixes such as '@' and '+'.
    let names = members
        .unwrap_or_default()
        .into_iter()
        .map(|m| m.trim_start_matches(['@', '+', '%', '~', '&']).to_string());
    core.state.pending_names.entry(channel).or_default().extend(names);
    Ok(())
}

fn on_end_of_names(ctx: &mut ClientCtx, msg: TypedMessage) -> Result<(), Fault> {
    let Message::EndOfNames { channel, .. } = msg.message else {
        unreachable!()
    };
    let mut core = ctx.core.lock().unwrap();
    let channel = core.state.channel_key(&channel.unwrap_or_default());
    let members = core.state.pending_names.remove(&channel).unwrap_or_default();
    core.state
        .memberships
        .insert(channel.clone(), members.iter().cloned().collect());
    core.emit(ClientEvent::Names { channel, members });
    Ok(())
}

fn on_error_reply(ctx: &mut ClientCtx, msg: TypedMessage) -> Result<(), Fault> {
    let Message::Err { code, params } = msg.message else {
        unreachable!()
    };
    let numeric = code.numeric_code().and_then(|c| c.parse().ok()).unwrap_or(0);
    let text = params.get(1..).unwrap_or_default().join(" ");
    ctx.core
        .lock()
        .unwrap()
        .emit(ClientEvent::ServerError { numeric, text });
    Ok(())
}

fn on_error(ctx: &mut ClientCtx, msg: TypedMessage) -> Result<(), Fault> {
    let Message::Error { text } = msg.message else {
        unreachable!()
    };
    let cause = text.unwrap_or_else(|| "server closed the link".to_string());
    ctx.core
        .lock()
        .unwrap()
        .emit(ClientEvent::Disconnected { cause: cause.clone() });
    ctx.out.stop(cause);
    Ok(())
}

fn diagnostic(ctx: &mut ClientCtx, msg: TypedMessage) -> Result<(), Fault> {
    let text = match serialize_truncating(&msg.to_raw()) {
        Ok(line) => format!("unhandled message: {line}"),
        Err(_) => format!("unhandled message: {}", msg.tag()),
    };
    ctx.core
        .lock()
        .unwrap()
        .emit(ClientEvent::ServerError { numeric: 0, text });
    Ok(())
}

fn ignore(_: &mut ClientCtx, _: TypedMessage) -> Result<(), Fault> {
    Ok(())
}

/// The server-to-client branch table.
pub fn server_to_client_table() -> ClientTable {
    let mut table = BranchTable::new(server_to_client_tags(), diagnostic);
    let branches: [(CommandTag, Handler); 14] = [
        (CommandTag::RplWelcome, on_welcome),
        (CommandTag::RplYourHost, ignore),
        (CommandTag::RplCreated, ignore),
        (CommandTag::RplMyInfo, ignore),
        (CommandTag::RplNamReply, on_names),
        (CommandTag::RplEndOfNames, on_end_of_names),
        (CommandTag::Ping, on_ping),
        (CommandTag::Pong, ignore),
        (CommandTag::Privmsg, on_privmsg),
        (CommandTag::Join, on_join),
        (CommandTag::Part, on_part),
        (CommandTag::Quit, on_quit),
        (CommandTag::Nick, on_nick),
        (CommandTag::Error, on_error),
    ];
    for (tag, branch) in branches {
        table.register(tag, branch).expect("distinct tags");
    }
    for code in SUPPORTED.iter().filter(|t| t.is_error_reply()) {
        table.register(code.clone(), on_error_reply).expect("distinct tags");
    }
    table.checked().expect("client table is within capability")
}

fn send(item: Outgoing, out: &mut OutboundLink) -> Result<(), Fault> {
    match item {
        Outgoing::Message(msg) => transmit(out, &msg),
        Outgoing::Raw(raw) => {
            let line = serialize_truncating(&raw).map_err(|e| Fault::handler(format!("cannot send raw line: {e}")))?;
            out.send_frame(&encode_frame(&line))
        }
    }
}

/// A running client session.
pub struct ClientHandle {
    out: EndpointHandle<Outgoing>,
    core: Arc<Mutex<Core>>,
    quitting: AtomicBool,
    runner: Mutex<Option<JoinHandle<RunReport>>>,
}

impl ClientHandle {
    /// Connects over TCP and starts the session. `sink` is called serially
    /// from the receive loop and must not block for long.
    pub fn connect(
        host: &str,
        port: u16,
        sink: impl FnMut(ClientEvent) + Send + 'static,
    ) -> Result<ClientHandle, ClientError> {
        let stream = TcpStream::connect((host, port)).map_err(|source| ClientError::ConnectFailure {
            addr: format!("{host}:{port}"),
            source,
        })?;
        ClientHandle::over(stream, sink)
    }

    /// [`connect`](Self::connect) with events delivered to a channel.
    pub fn connect_channel(host: &str, port: u16) -> Result<(ClientHandle, Receiver<ClientEvent>), ClientError> {
        let (tx, rx) = mpsc::channel();
        let handle = ClientHandle::connect(host, port, channel_sink(tx))?;
        Ok((handle, rx))
    }

    /// Runs a session over any transport.
    pub fn over(
        transport: impl Transport,
        sink: impl FnMut(ClientEvent) + Send + 'static,
    ) -> Result<ClientHandle, ClientError> {
        let link = transport.split()?;
        let core = Arc::new(Mutex::new(Core {
            state: ClientState::default(),
            sink: Box::new(sink),
            disconnected: false,
        }));
        let table = Arc::new(server_to_client_table());
        let inbound_core = Arc::clone(&core);
        let endpoint = EndpointEvents::new(
            link,
            IrcDecoder::new(),
            send,
            move |msg, out: &EndpointHandle<Outgoing>| {
                let mut ctx = ClientCtx {
                    core: Arc::clone(&inbound_core),
                    out: out.clone(),
                };
                table.dispatch(&mut ctx, msg)
            },
        );
        let out = endpoint.handle();
        let stop_core = Arc::clone(&core);
        let stop_out = out.clone();
        let endpoint = endpoint.hooks(LocalHooks::new().on_stop(move || {
            let cause = match stop_out.stop_cause() {
                Some(StopCause::Requested(c)) if !c.is_empty() => c,
                Some(StopCause::Requested(_)) | None => "stopped".to_string(),
                Some(StopCause::PeerClosed) => "connection closed by server".to_string(),
                Some(StopCause::Fault(f)) => f.to_string(),
            };
            stop_core.lock().unwrap().emit(ClientEvent::Disconnected { cause });
        }));
        let runner = thread::Builder::new()
            .name("irc-client".into())
            .spawn(move || endpoint.run().expect("fresh endpoint"))
            .expect("spawn client thread");
        Ok(ClientHandle {
            out,
            core,
            quitting: AtomicBool::new(false),
            runner: Mutex::new(Some(runner)),
        })
    }

    fn enqueue(&self, msg: Message) -> Result<(), ClientError> {
        if self.quitting.load(Ordering::Relaxed) {
            return Err(QueueClosed.into());
        }
        Ok(self.out.enqueue(Outgoing::Message(msg.into()))?)
    }

    pub fn nick(&self, nick: &str) -> Result<(), ClientError> {
        {
            let mut core = self.core.lock().unwrap();
            if !core.state.registered {
                core.state.own_nick = Some(nick.to_string());
            }
        }
        self.enqueue(Message::nick(nick))
    }

    /// `USER <username> 0 * :<realname>`
    pub fn user(&self, username: &str, realname: &str) -> Result<(), ClientError> {
        self.enqueue(Message::user(username, realname))
    }

    /// NICK then USER, back to back.
    pub fn register(&self, nick: &str, realname: &str) -> Result<(), ClientError> {
        self.nick(nick)?;
        self.user(nick, realname)
    }

    pub fn join(&self, channel: &str) -> Result<(), ClientError> {
        self.enqueue(Message::join(channel))
    }

    pub fn part(&self, channel: &str, reason: Option<&str>) -> Result<(), ClientError> {
        self.enqueue(Message::part(channel, reason.map(str::to_string)))
    }

    pub fn privmsg(&self, target: &str, text: &str) -> Result<(), ClientError> {
        self.enqueue(Message::privmsg(target, text))
    }

    /// Sends QUIT. Later commands fail with `QueueClosed`; the session ends
    /// when the server closes the link.
    pub fn quit(&self, reason: Option<&str>) -> Result<(), ClientError> {
        self.enqueue(Message::quit(reason.map(str::to_string)))?;
        self.quitting.store(true, Ordering::Relaxed);
        Ok(())
    }

    /// Sends a line as given. It must parse as an IRC message.
    pub fn raw(&self, line: &str) -> Result<(), ClientError> {
        if self.quitting.load(Ordering::Relaxed) {
            return Err(QueueClosed.into());
        }
        let raw = parse_line(line.trim_end_matches(['\r', '\n']))?;
        Ok(self.out.enqueue(Outgoing::Raw(raw))?)
    }

    pub fn state(&self) -> ClientState {
        self.core.lock().unwrap().state.clone()
    }

    pub fn is_running(&self) -> bool {
        !self.out.is_stopping()
    }

    /// Ends the session after what is already queued has been sent.
    pub fn stop(&self) {
        self.out.stop("stopped by local code");
    }

    /// Waits for the session to end and returns its report. `None` if it
    /// was already collected.
    pub fn wait(&self) -> Option<RunReport> {
        let runner = self.runner.lock().unwrap().take()?;
        runner.join().ok()
    }
}

impl Drop for ClientHandle {
    fn drop(&mut self) {
        self.out.stop("handle dropped");
    }
}

/// A sink forwarding events to a channel. Events after the receiver is
/// gone are dropped.
pub fn channel_sink(tx: Sender<ClientEvent>) -> impl FnMut(ClientEvent) + Send + 'static {
    move |event| {
        let _ = tx.send(event);
    }
}
