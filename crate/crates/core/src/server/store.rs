//! Shared server state.
//!
//! Every session of the server reads and updates the same registry of nicks
//! and channels. [`ServerStore`] is the interface the session handlers use;
//! each method is atomic with respect to every other. [`InMemoryStore`] is
//! the shipped implementation, one mutex around everything.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crate::events::EventQueue;
use crate::wire::{CommandTag, Message, TypedMessage};

/// Identifies one client connection for the lifetime of the server process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SessionId(u64);

impl SessionId {
    pub fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// A session's outgoing event queue.
pub type Outbox = EventQueue<TypedMessage>;

/// Snapshot of one session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionInfo {
    pub nick: Option<String>,
    pub username: Option<String>,
    pub realname: Option<String>,
    pub registered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NickClaim {
    /// The nick is now bound to the session.
    Bound {
        previous: Option<String>,
        registered: bool,
    },
    /// The session already holds exactly this nick.
    Unchanged,
    InUse,
    NoSession,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserOutcome {
    Recorded,
    AlreadyRegistered,
    NoSession,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JoinOutcome {
    /// `channel` is the channel's display name; `members` are nicks in join
    /// order, the joiner last.
    Joined {
        channel: String,
        members: Vec<String>,
    },
    AlreadyMember,
    NotRegistered,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartOutcome {
    Parted { channel: String },
    NoSuchChannel,
    NotOnChannel,
    NotRegistered,
}

/// Builds the announcement for a channel event given the channel's display
/// name.
pub type Announce<'a> = &'a dyn Fn(&str) -> TypedMessage;

pub trait ServerStore: Send + Sync {
    fn open_session(&self, outbox: Outbox) -> SessionId;

    fn session(&self, id: SessionId) -> Option<SessionInfo>;

    fn live_sessions(&self) -> usize;

    /// Binds `nick` to the session, releasing any nick it held before.
    fn claim_nick(&self, id: SessionId, nick: &str) -> NickClaim;

    fn set_user(&self, id: SessionId, username: &str, realname: &str) -> UserOutcome;

    /// Marks the session registered if it has both a nick and a username
    /// and is not registered yet. Returns the nick when this call did it.
    fn complete_registration(&self, id: SessionId) -> Option<String>;

    /// Adds the session to `channel` (creating it if needed) and delivers
    /// the announcement to every member, the joiner included, in one step.
    fn join(&self, id: SessionId, channel: &str, announce: Announce<'_>) -> JoinOutcome;

    /// Delivers the announcement to every member, the parter included, then
    /// removes the session; the channel is dropped once empty.
    fn part(&self, id: SessionId, channel: &str, announce: Announce<'_>) -> PartOutcome;

    /// Enqueues `msg` for every member of `channel` except `exclude`.
    /// `None` if there is no such channel.
    fn broadcast(&self, channel: &str, msg: &TypedMessage, exclude: Option<SessionId>) -> Option<usize>;

    /// Enqueues `msg` for the session holding `nick`.
    fn send_to_nick(&self, nick: &str, msg: &TypedMessage) -> bool;

    fn send_to(&self, id: SessionId, msg: &TypedMessage) -> bool;

    /// Enqueues `msg` once for every session sharing a channel with `id`,
    /// and for `id` itself if `include_self`.
    fn announce_to_peers(&self, id: SessionId, msg: &TypedMessage, include_self: bool) -> usize;

    /// Announces `:nick QUIT :reason` to channel peers (once per session),
    /// leaves every channel and releases the nick. The session entry stays
    /// until [`close_session`](Self::close_session).
    fn quit(&self, id: SessionId, reason: &str) -> bool;

    /// [`quit`](Self::quit) if still needed, then forgets the session.
    /// Idempotent.
    fn close_session(&self, id: SessionId, reason: &str);

    fn registered_outboxes(&self) -> Vec<Outbox>;

    /// Channel PRIVMSG deliveries made so far.
    fn delivered_privmsg_count(&self) -> u64;

    /// Current members of a channel, by nick. Empty if no such channel.
    fn channel_members(&self, channel: &str) -> Vec<String>;
}

/// Case-folded key used for nick and channel lookups.
pub fn fold(name: &str) -> String {
    name.to_ascii_lowercase()
}

struct SessionState {
    nick: Option<String>,
    username: Option<String>,
    realname: Option<String>,
    registered: bool,
    quit_done: bool,
    outbox: Outbox,
}

struct Channel {
    name: String,
    members: Vec<SessionId>,
}

#[derive(Default)]
struct Registry {
    sessions: HashMap<SessionId, SessionState>,
    nicks: HashMap<String, SessionId>,
    channels: HashMap<String, Channel>,
}

impl Registry {
    fn deliver(&self, id: SessionId, msg: &TypedMessage) -> bool {
        self.sessions
            .get(&id)
            .is_some_and(|s| s.outbox.enqueue(msg.clone()).is_ok())
    }

    fn nick_of(&self, id: SessionId) -> Option<&str> {
        self.sessions.get(&id)?.nick.as_deref()
    }

    fn peers(&self, id: SessionId) -> Vec<SessionId> {
        let mut peers = Vec::new();
        for channel in self.channels.values() {
            if channel.members.contains(&id) {
                for &m in &channel.members {
                    if m != id && !peers.contains(&m) {
                        peers.push(m);
                    }
                }
            }
        }
        peers
    }

    fn leave_all(&mut self, id: SessionId) {
        self.channels.retain(|_, channel| {
            channel.members.retain(|&m| m != id);
            !channel.members.is_empty()
        });
    }
}

/// Default store: all state behind one lock.
pub struct InMemoryStore {
    registry: Mutex<Registry>,
    next_id: AtomicU64,
    delivered_privmsg: AtomicU64,
    /// Test-only fault: renaming keeps the old nick bound.
    leak_renamed_nicks: bool,
}

impl Default for InMemoryStore {
    fn default() -> Self {
        InMemoryStore::new()
    }
}

impl InMemoryStore {
    pub fn new() -> InMemoryStore {
        InMemoryStore {
            registry: Mutex::new(Registry::default()),
            next_id: AtomicU64::new(1),
            delivered_privmsg: AtomicU64::new(0),
            leak_renamed_nicks: false,
        }
    }

    /// A store with a deliberate bug: a session that changes nick never
    /// releases the old one. Used to check that the conformance suite
    /// notices.
    #[doc(hidden)]
    pub fn with_nick_release_bug() -> InMemoryStore {
        InMemoryStore {
            leak_renamed_nicks: true,
            ..InMemoryStore::new()
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Registry> {
        self.registry.lock().unwrap()
    }
}

impl ServerStore for InMemoryStore {
    fn open_session(&self, outbox: Outbox) -> SessionId {
        let id = SessionId(self.next_id.fetch_add(1, Ordering::Relaxed));
        self.lock().sessions.insert(
            id,
            SessionState {
                nick: None,
                username: None,
                realname: None,
                registered: false,
                quit_done: false,
                outbox,
            },
        );
        id
    }

    fn session(&self, id: SessionId) -> Option<SessionInfo> {
        self.lock().sessions.get(&id).map(|s| SessionInfo {
            nick: s.nick.clone(),
            username: s.username.clone(),
            realname: s.realname.clone(),
            registered: s.registered,
        })
    }

    fn live_sessions(&self) -> usize {
        self.lock().sessions.len()
    }

    fn claim_nick(&self, id: SessionId, nick: &str) -> NickClaim {
        let mut reg = self.lock();
        let key = fold(nick);
        let Some(session) = reg.sessions.get(&id) else {
            return NickClaim::NoSession;
        };
        if session.nick.as_deref() == Some(nick) {
            return NickClaim::Unchanged;
        }
        if reg.nicks.get(&key).is_some_and(|&holder| holder != id) {
            return NickClaim::InUse;
        }
        let registered = session.registered;
        let previous = session.nick.clone();
        if let Some(old) = &previous {
            if !self.leak_renamed_nicks || fold(old) == key {
                reg.nicks.remove(&fold(old));
            }
        }
        reg.nicks.insert(key, id);
        reg.sessions.get_mut(&id).expect("checked above").nick = Some(nick.to_string());
        NickClaim::Bound { previous, registered }
    }

    fn set_user(&self, id: SessionId, username: &str, realname: &str) -> UserOutcome {
        let mut reg = self.lock();
        match reg.sessions.get_mut(&id) {
            None => UserOutcome::NoSession,
            Some(s) if s.registered => UserOutcome::AlreadyRegistered,
            Some(s) => {
                s.username = Some(username.to_string());
                s.realname = Some(realname.to_string());
                UserOutcome::Recorded
            }
        }
    }

    fn complete_registration(&self, id: SessionId) -> Option<String> {
        let mut reg = self.lock();
        let s = reg.sessions.get_mut(&id)?;
        if s.registered || s.username.is_none() {
            return None;
        }
        let nick = s.nick.clone()?;
        s.registered = true;
        Some(nick)
    }

    fn join(&self, id: SessionId, channel: &str, announce: Announce<'_>) -> JoinOutcome {
        let mut reg = self.lock();
        if !reg.sessions.get(&id).is_some_and(|s| s.registered) {
            return JoinOutcome::NotRegistered;
        }
        let entry = reg.channels.entry(fold(channel)).or_insert_with(|| Channel {
            name: channel.to_string(),
            members: Vec::new(),
        });
        if entry.members.contains(&id) {
            return JoinOutcome::AlreadyMember;
        }
        entry.members.push(id);
        let name = entry.name.clone();
        let members = entry.members.clone();
        let msg = announce(&name);
        for &m in &members {
            reg.deliver(m, &msg);
        }
        let nicks = members
            .iter()
            .filter_map(|&m| reg.nick_of(m).map(str::to_string))
            .collect();
        JoinOutcome::Joined {
            channel: name,
            members: nicks,
        }
    }

    fn part(&self, id: SessionId, channel: &str, announce: Announce<'_>) -> PartOutcome {
        let mut reg = self.lock();
        if !reg.sessions.get(&id).is_some_and(|s| s.registered) {
            return PartOutcome::NotRegistered;
        }
        let key = fold(channel);
        let Some(entry) = reg.channels.get(&key) else {
            return PartOutcome::NoSuchChannel;
        };
        if !entry.members.contains(&id) {
            return PartOutcome::NotOnChannel;
        }
        let name = entry.name.clone();
        let msg = announce(&name);
        for &m in &entry.members {
            reg.deliver(m, &msg);
        }
        let entry = reg.channels.get_mut(&key).expect("checked above");
        entry.members.retain(|&m| m != id);
        if entry.members.is_empty() {
            reg.channels.remove(&key);
        }
        PartOutcome::Parted { channel: name }
    }

    fn broadcast(&self, channel: &str, msg: &TypedMessage, exclude: Option<SessionId>) -> Option<usize> {
        let reg = self.lock();
        let entry = reg.channels.get(&fold(channel))?;
        let delivered = entry
            .members
            .iter()
            .filter(|&&m| Some(m) != exclude)
            .filter(|&&m| reg.deliver(m, msg))
            .count();
        if msg.tag() == CommandTag::Privmsg {
            self.delivered_privmsg.fetch_add(delivered as u64, Ordering::Relaxed);
        }
        Some(delivered)
    }

    fn send_to_nick(&self, nick: &str, msg: &TypedMessage) -> bool {
        let reg = self.lock();
        match reg.nicks.get(&fold(nick)) {
            Some(&id) => reg.deliver(id, msg),
            None => false,
        }
    }

    fn send_to(&self, id: SessionId, msg: &TypedMessage) -> bool {
        self.lock().deliver(id, msg)
    }

    fn announce_to_peers(&self, id: SessionId, msg: &TypedMessage, include_self: bool) -> usize {
        let reg = self.lock();
        let mut targets = reg.peers(id);
        if include_self {
            targets.insert(0, id);
        }
        targets.into_iter().filter(|&m| reg.deliver(m, msg)).count()
    }

    fn quit(&self, id: SessionId, reason: &str) -> bool {
        let mut reg = self.lock();
        let Some(session) = reg.sessions.get_mut(&id) else {
            return false;
        };
        if session.quit_done {
            return false;
        }
        session.quit_done = true;
        let nick = session.nick.clone();
        if let Some(nick) = &nick {
            let msg = TypedMessage::new(Message::quit(Some(reason.to_string()))).with_source(nick.clone());
            for peer in reg.peers(id) {
                reg.deliver(peer, &msg);
            }
            if reg.nicks.get(&fold(nick)) == Some(&id) {
                reg.nicks.remove(&fold(nick));
            }
        }
        reg.leave_all(id);
        true
    }

    fn close_session(&self, id: SessionId, reason: &str) {
        self.quit(id, reason);
        self.lock().sessions.remove(&id);
    }

    fn registered_outboxes(&self) -> Vec<Outbox> {
        self.lock()
            .sessions
            .values()
            .filter(|s| s.registered && !s.quit_done)
            .map(|s| s.outbox.clone())
            .collect()
    }

    fn delivered_privmsg_count(&self) -> u64 {
        self.delivered_privmsg.load(Ordering::Relaxed)
    }

    fn channel_members(&self, channel: &str) -> Vec<String> {
        let reg = self.lock();
        reg.channels
            .get(&fold(channel))
            .map(|c| {
                c.members
                    .iter()
                    .filter_map(|&m| reg.nick_of(m).map(str::to_string))
                    .collect()
            })
            .unwrap_or_default()
    }
}
