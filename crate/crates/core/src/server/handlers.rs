//! Server-side handling of client messages, one branch per command.

use std::sync::Arc;
use std::thread;

use super::store::{JoinOutcome, NickClaim, PartOutcome, ServerStore, SessionId, UserOutcome};
use super::ServerConfig;
use crate::dispatch::BranchTable;
use crate::events::{EndpointHandle, Fault};
use crate::wire::{client_to_server_tags, CommandTag, Message, TypedMessage, MAX_LINE_BYTES};

pub const VERSION: &str = concat!("duplex-irc-", env!("CARGO_PKG_VERSION"));

/// Verb of the control line answered when auditing is enabled.
pub const AUDIT_VERB: &str = "AUDIT";

/// Everything a branch needs to act for one session.
pub struct SessionCtx {
    pub id: SessionId,
    pub store: Arc<dyn ServerStore>,
    pub cfg: Arc<ServerConfig>,
    pub out: EndpointHandle<TypedMessage>,
}

pub type ServerTable = BranchTable<SessionCtx, Result<(), Fault>>;
type Handler = fn(&mut SessionCtx, TypedMessage) -> Result<(), Fault>;

impl SessionCtx {
    fn nick_or_star(&self) -> String {
        self.store
            .session(self.id)
            .and_then(|s| s.nick)
            .unwrap_or_else(|| "*".to_string())
    }

    fn registered(&self) -> bool {
        self.store.session(self.id).is_some_and(|s| s.registered)
    }

    fn send(&self, msg: Message) -> Result<(), Fault> {
        self.out
            .enqueue(TypedMessage::new(msg).with_source(self.cfg.hostname.clone()))
            .map_err(Fault::from)
    }

    /// Sends an error numeric; the current nick (or `*`) is prepended.
    fn err(&self, code: CommandTag, rest: &[&str]) -> Result<(), Fault> {
        let mut params = vec![self.nick_or_star()];
        params.extend(rest.iter().map(|s| s.to_string()));
        self.send(Message::error_reply(code, params))
    }

    fn require_registration(&self) -> Result<bool, Fault> {
        if self.registered() {
            return Ok(true);
        }
        self.err(CommandTag::ErrNotRegistered, &["You have not registered"])?;
        Ok(false)
    }

    fn need_more_params(&self, verb: &str) -> Result<(), Fault> {
        self.err(CommandTag::ErrNeedMoreParams, &[verb, "Not enough parameters"])
    }

    fn try_welcome(&self) -> Result<(), Fault> {
        match self.store.complete_registration(self.id) {
            Some(nick) => welcome_burst(self, &nick),
            None => Ok(()),
        }
    }
}

/// 001 to 004, in order, each addressed to `nick`.
fn welcome_burst(ctx: &SessionCtx, nick: &str) -> Result<(), Fault> {
    let host = &ctx.cfg.hostname;
    ctx.send(Message::Welcome {
        target: Some(nick.to_string()),
        text: Some(format!("Welcome to the Internet Relay Network {nick}")),
    })?;
    ctx.send(Message::YourHost {
        params: vec![
            nick.to_string(),
            format!("Your host is {host}, running version {VERSION}"),
        ],
    })?;
    ctx.send(Message::Created {
        params: vec![nick.to_string(), "This server was created today".to_string()],
    })?;
    ctx.send(Message::MyInfo {
        params: vec![
            nick.to_string(),
            host.clone(),
            VERSION.to_string(),
            "i".to_string(),
            "n".to_string(),
        ],
    })
}

/// Nicks may not contain spaces or start with ':', '*', '#' or a digit.
pub fn valid_nick(nick: &str) -> bool {
    let Some(first) = nick.chars().next() else {
        return false;
    };
    !nick.contains(' ') && !matches!(first, ':' | '*' | '#') && !first.is_ascii_digit()
}

pub fn valid_channel(name: &str) -> bool {
    name.len() > 1
        && name.starts_with('#')
        && !name
            .chars()
            .any(|c| c == ' ' || c == ',' || c == '\x07' || c.is_control())
}

fn on_nick(ctx: &mut SessionCtx, msg: TypedMessage) -> Result<(), Fault> {
    let Message::Nick { nick } = msg.message else {
        unreachable!()
    };
    let nick = nick.unwrap_or_default();
    if nick.is_empty() {
        return ctx.err(CommandTag::ErrNoNicknameGiven, &["No nickname given"]);
    }
    if !valid_nick(&nick) {
        return ctx.err(CommandTag::ErrErroneusNickname, &[&nick, "Erroneous nickname"]);
    }
    match ctx.store.claim_nick(ctx.id, &nick) {
        NickClaim::InUse => ctx.err(CommandTag::ErrNicknameInUse, &[&nick, "Nickname is already in use"]),
        NickClaim::Unchanged | NickClaim::NoSession => Ok(()),
        NickClaim::Bound {
            previous: Some(old),
            registered: true,
        } => {
            let announce = TypedMessage::new(Message::nick(nick)).with_source(old);
            ctx.store.announce_to_peers(ctx.id, &announce, true);
            Ok(())
        }
        NickClaim::Bound { .. } => ctx.try_welcome(),
    }
}

fn on_user(ctx: &mut SessionCtx, msg: TypedMessage) -> Result<(), Fault> {
    if ctx.registered() {
        return ctx.err(CommandTag::ErrAlreadyRegistered, &["You may not reregister"]);
    }
    if !msg.has_enough_params() {
        return ctx.need_more_params("USER");
    }
    let Message::User { username, realname, .. } = msg.message else {
        unreachable!()
    };
    match ctx
        .store
        .set_user(ctx.id, &username.unwrap_or_default(), &realname.unwrap_or_default())
    {
        UserOutcome::Recorded => ctx.try_welcome(),
        UserOutcome::AlreadyRegistered => ctx.err(CommandTag::ErrAlreadyRegistered, &["You may not reregister"]),
        UserOutcome::NoSession => Ok(()),
    }
}

fn on_ping(ctx: &mut SessionCtx, msg: TypedMessage) -> Result<(), Fault> {
    match msg.message {
        Message::Ping { token: Some(token) } if !token.is_empty() => ctx.send(Message::Pong {
            server: Some(ctx.cfg.hostname.clone()),
            token: Some(token),
        }),
        _ => ctx.err(CommandTag::ErrNoOrigin, &["No origin specified"]),
    }
}

fn on_join(ctx: &mut SessionCtx, msg: TypedMessage) -> Result<(), Fault> {
    if !ctx.require_registration()? {
        return Ok(());
    }
    if !msg.has_enough_params() {
        return ctx.need_more_params("JOIN");
    }
    let Message::Join { channels, .. } = msg.message else {
        unreachable!()
    };
    let nick = ctx.nick_or_star();
    for name in channels.iter().filter(|c| !c.is_empty()) {
        if !valid_channel(name) {
            ctx.err(CommandTag::ErrNoSuchChannel, &[name, "No such channel"])?;
            continue;
        }
        let announce = |ch: &str| TypedMessage::new(Message::join(ch)).with_source(nick.clone());
        if let JoinOutcome::Joined { channel, members } = ctx.store.join(ctx.id, name, &announce) {
            if let Some(delay) = ctx.cfg.names_reply_delay {
                thread::sleep(delay);
            }
            send_names(ctx, &nick, &channel, &members)?;
        }
    }
    Ok(())
}

/// 353 lines, split so each fits in one frame, then 366.
fn send_names(ctx: &SessionCtx, nick: &str, channel: &str, members: &[String]) -> Result<(), Fault> {
    let overhead = ctx.cfg.hostname.len() + nick.len() + channel.len() + 16;
    let budget = MAX_LINE_BYTES.saturating_sub(overhead + 2).max(1);
    let mut chunk: Vec<String> = Vec::new();
    let mut used = 0;
    let flush = |chunk: &mut Vec<String>| {
        ctx.send(Message::NamReply {
            target: Some(nick.to_string()),
            symbol: Some("=".to_string()),
            channel: Some(channel.to_string()),
            members: Some(std::mem::take(chunk)),
        })
    };
    for m in members {
        if !chunk.is_empty() && used + 1 + m.len() > budget {
            flush(&mut chunk)?;
            used = 0;
        }
        used += m.len() + usize::from(!chunk.is_empty());
        chunk.push(m.clone());
    }
    if !chunk.is_empty() {
        flush(&mut chunk)?;
    }
    ctx.send(Message::EndOfNames {
        target: Some(nick.to_string()),
        channel: Some(channel.to_string()),
        text: Some("End of /NAMES list.".to_string()),
    })
}

fn on_part(ctx: &mut SessionCtx, msg: TypedMessage) -> Result<(), Fault> {
    if !ctx.require_registration()? {
        return Ok(());
    }
    if !msg.has_enough_params() {
        return ctx.need_more_params("PART");
    }
    let Message::Part { channel, reason } = msg.message else {
        unreachable!()
    };
    let nick = ctx.nick_or_star();
    let reason = reason.filter(|r| !r.is_empty());
    for name in channel.unwrap_or_default().split(',').filter(|c| !c.is_empty()) {
        let announce = |ch: &str| TypedMessage::new(Message::part(ch, reason.clone())).with_source(nick.clone());
        match ctx.store.part(ctx.id, name, &announce) {
            PartOutcome::Parted { .. } | PartOutcome::NotRegistered => {}
            PartOutcome::NoSuchChannel => ctx.err(CommandTag::ErrNoSuchChannel, &[name, "No such channel"])?,
            PartOutcome::NotOnChannel => ctx.err(CommandTag::ErrNotOnChannel, &[name, "You're not on that channel"])?,
        }
    }
    Ok(())
}

fn on_privmsg(ctx: &mut SessionCtx, msg: TypedMessage) -> Result<(), Fault> {
    if !ctx.require_registration()? {
        return Ok(());
    }
    if !msg.has_enough_params() {
        return ctx.need_more_params("PRIVMSG");
    }
    let Message::Privmsg {
        target: Some(target),
        text: Some(text),
    } = msg.message
    else {
        unreachable!()
    };
    let nick = ctx.nick_or_star();
    let relay = TypedMessage::new(Message::privmsg(target.clone(), text)).with_source(nick);
    if target.starts_with('#') {
        if ctx.store.broadcast(&target, &relay, Some(ctx.id)).is_none() {
            ctx.err(CommandTag::ErrNoSuchChannel, &[&target, "No such channel"])?;
        }
    } else if !ctx.store.send_to_nick(&target, &relay) {
        ctx.err(CommandTag::ErrNoSuchNick, &[&target, "No such nick/channel"])?;
    }
    Ok(())
}

fn on_quit(ctx: &mut SessionCtx, msg: TypedMessage) -> Result<(), Fault> {
    let Message::Quit { reason } = msg.message else {
        unreachable!()
    };
    let reason = reason
        .filter(|r| !r.is_empty())
        .unwrap_or_else(|| "Client Quit".to_string());
    ctx.store.quit(ctx.id, &reason);
    ctx.send(Message::Error {
        text: Some(format!("Closing Link: {} ({reason})", ctx.cfg.hostname)),
    })?;
    ctx.out.stop("client quit");
    Ok(())
}

fn on_audit(ctx: &mut SessionCtx, _msg: TypedMessage) -> Result<(), Fault> {
    let count = ctx.store.delivered_privmsg_count();
    ctx.send(Message::UnknownCmd {
        verb: "NOTICE".to_string(),
        params: vec![
            ctx.nick_or_star(),
            format!("{AUDIT_VERB} delivered_privmsg_count={count}"),
        ],
    })
}

fn unknown_command(ctx: &mut SessionCtx, msg: TypedMessage) -> Result<(), Fault> {
    let verb = msg.tag().to_string();
    ctx.err(CommandTag::ErrUnknownCommand, &[&verb, "Unknown command"])
}

/// The client-to-server branch table. With `audit`, the `AUDIT` control
/// line is part of the capability and gets its own branch.
pub fn client_to_server_table(audit: bool) -> ServerTable {
    let audit_tag = CommandTag::Unknown(AUDIT_VERB.to_string());
    let mut capability = client_to_server_tags();
    if audit {
        capability.push(audit_tag.clone());
    }
    let mut table = BranchTable::new(capability, unknown_command);
    let branches: [(CommandTag, Handler); 8] = [
        (CommandTag::Nick, on_nick),
        (CommandTag::User, on_user),
        (CommandTag::Ping, on_ping),
        (CommandTag::Pong, |_, _| Ok(())),
        (CommandTag::Join, on_join),
        (CommandTag::Part, on_part),
        (CommandTag::Privmsg, on_privmsg),
        (CommandTag::Quit, on_quit),
    ];
    for (tag, branch) in branches {
        table.register(tag, branch).expect("distinct tags");
    }
    if audit {
        table.register(audit_tag, on_audit).expect("distinct tags");
    }
    table.checked().expect("server table is within capability")
}
