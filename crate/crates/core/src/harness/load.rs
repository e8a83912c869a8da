//! Many concurrent clients sharing one channel.
//!
//! Each client registers, joins the channel, sends its messages and quits.
//! In barrier mode all clients finish joining before anyone sends and each
//! waits to have received every other client's messages before quitting, so
//! every message reaches every other member: `m·n·(n−1)` deliveries for `n`
//! clients sending `m` messages each.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::{Arc, Barrier};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::fit::LoadRow;
use super::scenario::Target;
use crate::client::{ClientEvent, ClientHandle};
use crate::server::AUDIT_VERB;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("audit query failed: {0}")]
    Audit(String),
}

#[derive(Debug, Clone)]
pub struct LoadRun {
    pub n_clients: usize,
    /// Pause between joining and the first send.
    pub initial_sleep: Duration,
    /// Pause before each send.
    pub inter_send_sleep: Duration,
    pub messages_per_client: usize,
    pub channel: String,
    pub barrier_mode: bool,
    /// Upper bound on any single wait inside a client.
    pub step_timeout: Duration,
}

impl LoadRun {
    /// Clients act as soon as they can.
    pub fn scenario1(n_clients: usize) -> LoadRun {
        LoadRun {
            n_clients,
            initial_sleep: Duration::ZERO,
            inter_send_sleep: Duration::ZERO,
            messages_per_client: 3,
            channel: "#load".to_string(),
            barrier_mode: false,
            step_timeout: Duration::from_secs(20),
        }
    }

    /// Everyone joins, then sends with 100 ms spacing, then waits for all
    /// traffic before quitting.
    pub fn scenario2(n_clients: usize) -> LoadRun {
        LoadRun {
            inter_send_sleep: Duration::from_millis(100),
            barrier_mode: true,
            ..LoadRun::scenario1(n_clients)
        }
    }

    pub fn expected_deliveries(&self) -> Option<u64> {
        let n = self.n_clients as u64;
        self.barrier_mode
            .then(|| self.messages_per_client as u64 * n * n.saturating_sub(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadResult {
    pub n: usize,
    pub seconds: f64,
    /// Channel PRIVMSG deliveries counted by the server during the run.
    pub delivered: u64,
    /// Channel messages the clients saw.
    pub observed: u64,
    pub failures: Vec<String>,
}

impl LoadResult {
    pub fn is_clean(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn row(&self) -> LoadRow {
        LoadRow {
            n: self.n,
            seconds: self.seconds,
            delivered: self.delivered,
        }
    }
}

/// Asks a server started with auditing for its delivered PRIVMSG count.
pub fn audit_count(target: &Target) -> Result<u64, LoadError> {
    let err = |e: std::io::Error| LoadError::Audit(e.to_string());
    let mut stream = TcpStream::connect((target.host.as_str(), target.port)).map_err(err)?;
    stream.set_read_timeout(Some(Duration::from_secs(5))).map_err(err)?;
    stream
        .write_all(format!("{AUDIT_VERB}\r\nQUIT\r\n").as_bytes())
        .map_err(err)?;
    let key = "delivered_privmsg_count=";
    for line in BufReader::new(stream).lines() {
        let line = line.map_err(err)?;
        if let Some(pos) = line.find(key) {
            let digits: String = line[pos + key.len()..]
                .chars()
                .take_while(char::is_ascii_digit)
                .collect();
            return digits
                .parse()
                .map_err(|_| LoadError::Audit(format!("bad audit reply {line:?}")));
        }
        if line.contains(" 421 ") {
            return Err(LoadError::Audit(
                "server does not answer AUDIT; start it with auditing".into(),
            ));
        }
    }
    Err(LoadError::Audit("connection closed before the audit reply".into()))
}

static RUN_SEQ: AtomicU64 = AtomicU64::new(0);

struct Waiter {
    events: Receiver<ClientEvent>,
    channel_messages: u64,
    timeout: Duration,
}

impl Waiter {
    /// Consumes events until `pred` holds, counting channel messages.
    fn until(&mut self, what: &str, mut pred: impl FnMut(&ClientEvent) -> bool) -> Result<(), String> {
        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.events.recv_timeout(left) {
                Ok(ev) => {
                    if matches!(ev, ClientEvent::ChannelMessage { .. }) {
                        self.channel_messages += 1;
                    }
                    if pred(&ev) {
                        return Ok(());
                    }
                    if let ClientEvent::Disconnected { cause } = ev {
                        return Err(format!("disconnected while waiting for {what}: {cause}"));
                    }
                }
                Err(RecvTimeoutError::Timeout) => return Err(format!("timed out waiting for {what}")),
                Err(RecvTimeoutError::Disconnected) => return Err(format!("event stream ended waiting for {what}")),
            }
        }
    }
}

fn client_setup(run: &LoadRun, target: &Target, nick: &str) -> Result<(ClientHandle, Waiter), String> {
    let (handle, events) = ClientHandle::connect_channel(&target.host, target.port).map_err(|e| e.to_string())?;
    let mut waiter = Waiter {
        events,
        channel_messages: 0,
        timeout: run.step_timeout,
    };
    handle.register(nick, nick).map_err(|e| e.to_string())?;
    waiter.until("welcome", |e| matches!(e, ClientEvent::Registered { .. }))?;
    handle.join(&run.channel).map_err(|e| e.to_string())?;
    let channel = run.channel.clone();
    waiter.until(
        "names",
        |e| matches!(e, ClientEvent::Names { channel: c, .. } if c.eq_ignore_ascii_case(&channel)),
    )?;
    Ok((handle, waiter))
}

fn client_traffic(run: &LoadRun, nick: &str, handle: &ClientHandle, waiter: &mut Waiter) -> Result<(), String> {
    thread::sleep(run.initial_sleep);
    for k in 0..run.messages_per_client {
        if !run.inter_send_sleep.is_zero() {
            thread::sleep(run.inter_send_sleep);
        }
        handle
            .privmsg(&run.channel, &format!("message {k} from {nick}"))
            .map_err(|e| e.to_string())?;
    }
    if let Some(_total) = run.expected_deliveries() {
        let want = (run.messages_per_client * run.n_clients.saturating_sub(1)) as u64;
        if waiter.channel_messages < want {
            let mut seen = waiter.channel_messages;
            waiter.until("all channel traffic", |e| {
                if matches!(e, ClientEvent::ChannelMessage { .. }) {
                    seen += 1;
                }
                seen >= want
            })?;
        }
    }
    handle.quit(None).map_err(|e| e.to_string())?;
    waiter.until("disconnect", |e| matches!(e, ClientEvent::Disconnected { .. }))
}

/// Runs one load measurement against a server started with auditing.
pub fn run_load(run: &LoadRun, target: &Target) -> Result<LoadResult, LoadError> {
    let seq = RUN_SEQ.fetch_add(1, Ordering::Relaxed);
    let before = audit_count(target)?;
    let barrier = Arc::new(Barrier::new(run.n_clients.max(1)));
    let start = Instant::now();
    let workers: Vec<_> = (0..run.n_clients)
        .map(|i| {
            let (run, target, barrier) = (run.clone(), target.clone(), Arc::clone(&barrier));
            thread::Builder::new()
                .name(format!("load-{i}"))
                .stack_size(256 * 1024)
                .spawn(move || {
                    let nick = format!("ld{seq}x{i}");
                    let setup = client_setup(&run, &target, &nick);
                    if run.barrier_mode {
                        barrier.wait();
                    }
                    let (handle, mut waiter) = setup.map_err(|e| (e, 0))?;
                    let result = client_traffic(&run, &nick, &handle, &mut waiter);
                    let observed = waiter.channel_messages;
                    drop(handle);
                    result.map(|()| observed).map_err(|e| (e, observed))
                })
                .expect("spawn load client")
        })
        .collect();

    let mut observed = 0;
    let mut failures = Vec::new();
    for (i, w) in workers.into_iter().enumerate() {
        match w.join() {
            Ok(Ok(seen)) => observed += seen,
            Ok(Err((e, seen))) => {
                observed += seen;
                failures.push(format!("client {i}: {e}"));
            }
            Err(_) => failures.push(format!("client {i}: panicked")),
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    let after = audit_count(target)?;
    Ok(LoadResult {
        n: run.n_clients,
        seconds,
        delivered: after - before,
        observed,
        failures,
    })
}
