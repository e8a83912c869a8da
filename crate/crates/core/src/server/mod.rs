//! The server role.
//!
//! Every accepted connection gets its own [`IrcEndpoint`] running on its own
//! thread, all sharing one [`ServerStore`]. A session's inbound handler
//! dispatches client messages through the server branch table; replies and
//! relays are enqueued, never written directly.

mod handlers;
mod store;

use std::collections::HashMap;
use std::io::Write;
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

pub use handlers::{client_to_server_table, valid_channel, valid_nick, ServerTable, SessionCtx, AUDIT_VERB, VERSION};
pub use store::{
    fold, Announce, InMemoryStore, JoinOutcome, NickClaim, Outbox, PartOutcome, ServerStore, SessionId, SessionInfo,
    UserOutcome,
};

use crate::events::irc::{transmit, IrcDecoder, IrcEndpoint};
use crate::events::{EndpointHandle, FaultKind, LocalHooks, RunReport, StopDecision, Transport, TransportError};
use crate::wire::{Message, TypedMessage};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Source of every server-originated line.
    pub hostname: String,
    pub bind: IpAddr,
    pub port: u16,
    pub max_clients: usize,
    /// Answer the `AUDIT` control line with the delivered PRIVMSG count.
    pub audit: bool,
    /// PING every registered session this often.
    pub ping_interval: Option<Duration>,
    /// Hold back the names reply after a JOIN. For testing interleaving.
    pub names_reply_delay: Option<Duration>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            hostname: "localhost".to_string(),
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 6667,
            max_clients: 4096,
            audit: false,
            ping_interval: None,
            names_reply_delay: None,
        }
    }
}

impl ServerConfig {
    pub fn new(hostname: impl Into<String>, port: u16) -> ServerConfig {
        ServerConfig {
            hostname: hostname.into(),
            port,
            ..ServerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ServerError> {
        if self.hostname.is_empty() || self.hostname.contains(|c: char| c.is_whitespace() || c == ':') {
            return Err(ServerError::BadHostname(self.hostname.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid hostname {0:?}")]
    BadHostname(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Server logic independent of any listener: attach transports to it.
#[derive(Clone)]
pub struct Server {
    cfg: Arc<ServerConfig>,
    store: Arc<dyn ServerStore>,
    table: Arc<ServerTable>,
    sessions: Arc<Mutex<HashMap<SessionId, EndpointHandle<TypedMessage>>>>,
}

impl Server {
    pub fn new(cfg: ServerConfig) -> Result<Server, ServerError> {
        Server::with_store(cfg, Arc::new(InMemoryStore::new()))
    }

    pub fn with_store(cfg: ServerConfig, store: Arc<dyn ServerStore>) -> Result<Server, ServerError> {
        cfg.validate()?;
        let table = Arc::new(client_to_server_table(cfg.audit));
        Ok(Server {
            cfg: Arc::new(cfg),
            store,
            table,
            sessions: Arc::new(Mutex::new(HashMap::new())),
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.cfg
    }

    pub fn store(&self) -> &Arc<dyn ServerStore> {
        &self.store
    }

    /// Builds the endpoint for one connection. Running it serves the
    /// session; when it stops, the session is cleaned up.
    pub fn session(&self, transport: impl Transport) -> Result<(SessionId, IrcEndpoint), ServerError> {
        let link = transport.split()?;
        let queue = Outbox::new();
        let id = self.store.open_session(queue.clone());

        let (store, cfg, table) = (Arc::clone(&self.store), Arc::clone(&self.cfg), Arc::clone(&self.table));
        let endpoint = IrcEndpoint::with_queue(
            link,
            IrcDecoder::new(),
            queue,
            |msg: TypedMessage, out: &mut _| transmit(out, &msg),
            move |msg, out| {
                let mut ctx = SessionCtx {
                    id,
                    store: Arc::clone(&store),
                    cfg: Arc::clone(&cfg),
                    out: out.clone(),
                };
                table.dispatch(&mut ctx, msg)
            },
        );

        let (store, sessions) = (Arc::clone(&self.store), Arc::clone(&self.sessions));
        let hooks = LocalHooks::new()
            .on_error(move |fault| {
                log::debug!("session {id}: {fault}");
                if fault.fatal || fault.kind == FaultKind::Transport {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            })
            .on_stop(move || {
                store.close_session(id, "Connection closed");
                sessions.lock().unwrap().remove(&id);
            });
        let endpoint = endpoint.hooks(hooks);
        self.sessions.lock().unwrap().insert(id, endpoint.handle());
        Ok((id, endpoint))
    }

    /// Serves one connection on a new thread.
    pub fn spawn_session(&self, transport: impl Transport) -> Result<JoinHandle<RunReport>, ServerError> {
        let (id, endpoint) = self.session(transport)?;
        Ok(thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || endpoint.run().expect("fresh endpoint"))
            .expect("spawn session thread"))
    }

    pub fn live_sessions(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    /// Stops every session gracefully.
    pub fn stop_all(&self, cause: &str) {
        let handles: Vec<_> = self.sessions.lock().unwrap().values().cloned().collect();
        for h in handles {
            h.stop(cause.to_string());
        }
    }

    fn ping_all(&self) {
        let ping = TypedMessage::new(Message::Ping {
            token: Some(self.cfg.hostname.clone()),
        })
        .with_source(self.cfg.hostname.clone());
        for outbox in self.store.registered_outboxes() {
            let _ = outbox.enqueue(ping.clone());
        }
    }

    /// Binds the configured address and accepts connections on a
    /// background thread.
    pub fn bind(self) -> Result<RunningServer, ServerError> {
        let addr = SocketAddr::new(self.cfg.bind, self.cfg.port);
        let listener = TcpListener::bind(addr).map_err(|source| ServerError::BindFailure { addr, source })?;
        let local = listener
            .local_addr()
            .map_err(|source| ServerError::BindFailure { addr, source })?;
        let shutdown = Arc::new(AtomicBool::new(false));

        let accept = {
            let server = self.clone();
            let shutdown = Arc::clone(&shutdown);
            thread::Builder::new()
                .name("accept".into())
                .spawn(move || server.accept_loop(listener, &shutdown))
                .expect("spawn accept thread")
        };
        let pinger = self.cfg.ping_interval.map(|every| {
            let server = self.clone();
            let shutdown = Arc::clone(&shutdown);
            thread::spawn(move || {
                let mut next = Instant::now() + every;
                while !shutdown.load(Ordering::Relaxed) {
                    thread::sleep(Duration::from_millis(50).min(every));
                    if Instant::now() >= next {
                        server.ping_all();
                        next += every;
                    }
                }
            })
        });
        log::info!("listening on {local} as {}", self.cfg.hostname);
        Ok(RunningServer {
            server: self,
            addr: local,
            shutdown,
            accept: Some(accept),
            pinger,
        })
    }

    fn accept_loop(&self, listener: TcpListener, shutdown: &AtomicBool) {
        for conn in listener.incoming() {
            if shutdown.load(Ordering::Relaxed) {
                break;
            }
            let mut stream = match conn {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            if self.store.live_sessions() >= self.cfg.max_clients {
                let _ = stream.write_all(b"ERROR :Closing Link: too many connections\r\n");
                continue;
            }
            if let Err(e) = self.spawn_session(stream) {
                log::warn!("could not start session: {e}");
            }
        }
    }
}

/// A bound server. Dropping it shuts it down.
pub struct RunningServer {
    server: Server,
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    pinger: Option<JoinHandle<()>>,
}

impl RunningServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    pub fn server(&self) -> &Server {
        &self.server
    }

    pub fn delivered_privmsg_count(&self) -> u64 {
        self.server.store.delivered_privmsg_count()
    }

    /// Blocks until the accept loop ends (i.e. forever, unless another
    /// thread shuts the server down).
    pub fn wait(mut self) {
        if let Some(accept) = self.accept.take() {
            let _ = accept.join();
        }
    }

    /// Stops accepting, ends every session and waits briefly for them to
    /// clean up. Returns the delivered PRIVMSG count.
    pub fn shutdown(mut self) -> u64 {
        self.stop();
        self.delivered_privmsg_count()
    }

    fn stop(&mut self) {
        if self.shutdown.swap(true, Ordering::Relaxed) {
            return;
        }
        let mut wake = self.addr;
        if wake.ip().is_unspecified() {
            wake.set_ip(IpAddr::V4(Ipv4Addr::LOCALHOST));
        }
        let _ = TcpStream::connect_timeout(&wake, Duration::from_secs(1));
        if let Some(accept) = self.accept.take() {
            let _ = accept.join();
        }
        if let Some(pinger) = self.pinger.take() {
            let _ = pinger.join();
        }
        self.server.stop_all("server shutdown");
        let deadline = Instant::now() + Duration::from_secs(2);
        while self.server.live_sessions() > 0 && Instant::now() < deadline {
            thread::sleep(Duration::from_millis(5));
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.stop();
    }
}
