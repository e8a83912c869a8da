//! Per-command view of a [`RawMessage`].
//!
//! Each supported [`CommandTag`] has exactly one [`Message`] variant and
//! vice versa (error replies share the `Err` variant, keyed by their code),
//! so the dynamic variant of a received message and its command tag can be
//! used interchangeably to pick a handler branch.

use super::command::CommandTag;
use super::raw::RawMessage;

/// A classified message plus the source it arrived with (or will be sent
/// with).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedMessage {
    pub source: Option<String>,
    pub message: Message,
}

/// Positional fields are `Option` so that messages with too few parameters
/// are still representable; see [`TypedMessage::has_enough_params`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Nick {
        nick: Option<String>,
    },
    User {
        username: Option<String>,
        mode: Option<String>,
        unused: Option<String>,
        realname: Option<String>,
    },
    Join {
        channels: Vec<String>,
        keys: Option<String>,
    },
    Part {
        channel: Option<String>,
        reason: Option<String>,
    },
    Privmsg {
        target: Option<String>,
        text: Option<String>,
    },
    Quit {
        reason: Option<String>,
    },
    Ping {
        token: Option<String>,
    },
    /// With two parameters the first names the responding server; with one
    /// it is the token.
    Pong {
        server: Option<String>,
        token: Option<String>,
    },
    Error {
        text: Option<String>,
    },
    Welcome {
        target: Option<String>,
        text: Option<String>,
    },
    YourHost {
        params: Vec<String>,
    },
    Created {
        params: Vec<String>,
    },
    MyInfo {
        params: Vec<String>,
    },
    NamReply {
        target: Option<String>,
        symbol: Option<String>,
        channel: Option<String>,
        members: Option<Vec<String>>,
    },
    EndOfNames {
        target: Option<String>,
        channel: Option<String>,
        text: Option<String>,
    },
    /// Any of the supported `ERR_*` numerics.
    Err {
        code: CommandTag,
        params: Vec<String>,
    },
    UnknownCmd {
        verb: String,
        params: Vec<String>,
    },
}

/// Classifies a raw message. Never fails: unsupported verbs become
/// [`Message::UnknownCmd`] and missing parameters stay `None`.
pub fn classify(raw: &RawMessage) -> TypedMessage {
    let mut p = raw.params.iter().cloned();
    let mut next = move || p.next();
    let message = match &raw.command {
        CommandTag::Nick => Message::Nick { nick: next() },
        CommandTag::User => Message::User {
            username: next(),
            mode: next(),
            unused: next(),
            realname: next(),
        },
        CommandTag::Join => Message::Join {
            channels: next()
                .map(|c| c.split(',').map(str::to_string).collect())
                .unwrap_or_default(),
            keys: next(),
        },
        CommandTag::Part => Message::Part {
            channel: next(),
            reason: next(),
        },
        CommandTag::Privmsg => Message::Privmsg {
            target: next(),
            text: next(),
        },
        CommandTag::Quit => Message::Quit { reason: next() },
        CommandTag::Ping => Message::Ping { token: next() },
        CommandTag::Pong => {
            if raw.params.len() >= 2 {
                Message::Pong {
                    server: next(),
                    token: next(),
                }
            } else {
                Message::Pong {
                    server: None,
                    token: next(),
                }
            }
        }
        CommandTag::Error => Message::Error { text: next() },
        CommandTag::RplWelcome => Message::Welcome {
            target: next(),
            text: next(),
        },
        CommandTag::RplYourHost => Message::YourHost {
            params: raw.params.clone(),
        },
        CommandTag::RplCreated => Message::Created {
            params: raw.params.clone(),
        },
        CommandTag::RplMyInfo => Message::MyInfo {
            params: raw.params.clone(),
        },
        CommandTag::RplNamReply => Message::NamReply {
            target: next(),
            symbol: next(),
            channel: next(),
            members: next().map(|m| m.split_whitespace().map(str::to_string).collect()),
        },
        CommandTag::RplEndOfNames => Message::EndOfNames {
            target: next(),
            channel: next(),
            text: next(),
        },
        CommandTag::Unknown(verb) => Message::UnknownCmd {
            verb: verb.clone(),
            params: raw.params.clone(),
        },
        code => Message::Err {
            code: code.clone(),
            params: raw.params.clone(),
        },
    };
    TypedMessage {
        source: raw.source.clone(),
        message,
    }
}

/// Leading run of present values; classification never produces a present
/// field after an absent one.
fn positional<const N: usize>(fields: [&Option<String>; N]) -> Vec<String> {
    fields.iter().map_while(|f| f.as_ref().cloned()).collect()
}

fn present(field: &Option<String>) -> bool {
    field.as_deref().is_some_and(|s| !s.is_empty())
}

impl TypedMessage {
    pub fn new(message: Message) -> TypedMessage {
        TypedMessage { source: None, message }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> TypedMessage {
        self.source = Some(source.into());
        self
    }

    pub fn tag(&self) -> CommandTag {
        self.message.tag()
    }

    /// Reserializes to the raw form. `classify(&m.to_raw()) == m` for every
    /// message produced by [`classify`].
    pub fn to_raw(&self) -> RawMessage {
        let params = match &self.message {
            Message::Nick { nick } => positional([nick]),
            Message::User {
                username,
                mode,
                unused,
                realname,
            } => positional([username, mode, unused, realname]),
            Message::Join { channels, keys } => {
                let mut out = Vec::new();
                if !channels.is_empty() {
                    out.push(channels.join(","));
                    out.extend(keys.clone());
                }
                out
            }
            Message::Part { channel, reason } => positional([channel, reason]),
            Message::Privmsg { target, text } => positional([target, text]),
            Message::Quit { reason } => positional([reason]),
            Message::Ping { token } => positional([token]),
            Message::Pong { server, token } => match server {
                Some(_) => positional([server, token]),
                None => positional([token]),
            },
            Message::Error { text } => positional([text]),
            Message::Welcome { target, text } => positional([target, text]),
            Message::YourHost { params } | Message::Created { params } | Message::MyInfo { params } => params.clone(),
            Message::NamReply {
                target,
                symbol,
                channel,
                members,
            } => {
                let joined = members.as_ref().map(|m| m.join(" "));
                positional([target, symbol, channel, &joined])
            }
            Message::EndOfNames { target, channel, text } => positional([target, channel, text]),
            Message::Err { params, .. } | Message::UnknownCmd { params, .. } => params.clone(),
        };
        // Free-text fields go out as trailing parameters even when a single
        // word, which is how clients and servers conventionally write them.
        let free_text_last = match &self.message {
            Message::User { realname, .. } => realname.is_some(),
            Message::Part { reason, .. } => reason.is_some(),
            Message::Privmsg { text, .. } => text.is_some(),
            Message::Quit { reason } => reason.is_some(),
            Message::Pong { token, .. } => token.is_some(),
            Message::Error { text } => text.is_some(),
            Message::Welcome { text, .. } => text.is_some(),
            Message::NamReply { members, .. } => members.is_some(),
            Message::EndOfNames { text, .. } => text.is_some(),
            _ => false,
        };
        RawMessage {
            source: self.source.clone(),
            command: self.tag(),
            params,
            trailing_colon: free_text_last,
        }
    }

    /// Minimum-arity check. Mandatory fields must be present and non-empty
    /// (NICK 1, USER 4, JOIN 1, PART 1, PRIVMSG 2, PING 1, PONG 1, QUIT 0).
    pub fn has_enough_params(&self) -> bool {
        match &self.message {
            Message::Nick { nick } => present(nick),
            Message::User {
                username,
                mode,
                unused,
                realname,
            } => [username, mode, unused, realname].into_iter().all(present),
            Message::Join { channels, .. } => channels.iter().any(|c| !c.is_empty()),
            Message::Part { channel, .. } => present(channel),
            Message::Privmsg { target, text } => present(target) && present(text),
            Message::Quit { .. } => true,
            Message::Ping { token } => present(token),
            Message::Pong { token, .. } => present(token),
            Message::Error { .. } => true,
            Message::Welcome { target, text } => present(target) && text.is_some(),
            Message::YourHost { params } | Message::Created { params } | Message::MyInfo { params } => {
                !params.is_empty()
            }
            Message::NamReply {
                target,
                symbol,
                channel,
                members,
            } => present(target) && present(symbol) && present(channel) && members.is_some(),
            Message::EndOfNames { target, channel, .. } => present(target) && present(channel),
            Message::Err { params, .. } => !params.is_empty(),
            Message::UnknownCmd { .. } => true,
        }
    }
}

impl Message {
    pub fn tag(&self) -> CommandTag {
        match self {
            Message::Nick { .. } => CommandTag::Nick,
            Message::User { .. } => CommandTag::User,
            Message::Join { .. } => CommandTag::Join,
            Message::Part { .. } => CommandTag::Part,
            Message::Privmsg { .. } => CommandTag::Privmsg,
            Message::Quit { .. } => CommandTag::Quit,
            Message::Ping { .. } => CommandTag::Ping,
            Message::Pong { .. } => CommandTag::Pong,
            Message::Error { .. } => CommandTag::Error,
            Message::Welcome { .. } => CommandTag::RplWelcome,
            Message::YourHost { .. } => CommandTag::RplYourHost,
            Message::Created { .. } => CommandTag::RplCreated,
            Message::MyInfo { .. } => CommandTag::RplMyInfo,
            Message::NamReply { .. } => CommandTag::RplNamReply,
            Message::EndOfNames { .. } => CommandTag::RplEndOfNames,
            Message::Err { code, .. } => code.clone(),
            Message::UnknownCmd { verb, .. } => CommandTag::Unknown(verb.clone()),
        }
    }

    pub fn nick(nick: impl Into<String>) -> Message {
        Message::Nick {
            nick: Some(nick.into()),
        }
    }

    /// `USER <username> 0 * :<realname>`
    pub fn user(username: impl Into<String>, realname: impl Into<String>) -> Message {
        Message::User {
            username: Some(username.into()),
            mode: Some("0".into()),
            unused: Some("*".into()),
            realname: Some(realname.into()),
        }
    }

    pub fn join(channel: impl Into<String>) -> Message {
        Message::Join {
            channels: vec![channel.into()],
            keys: None,
        }
    }

    pub fn part(channel: impl Into<String>, reason: Option<String>) -> Message {
        Message::Part {
            channel: Some(channel.into()),
            reason,
        }
    }

    pub fn privmsg(target: impl Into<String>, text: impl Into<String>) -> Message {
        Message::Privmsg {
            target: Some(target.into()),
            text: Some(text.into()),
        }
    }

    pub fn quit(reason: Option<String>) -> Message {
        Message::Quit { reason }
    }

    pub fn error_reply<I, S>(code: CommandTag, params: I) -> Message
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        debug_assert!(code.is_error_reply(), "{code} is not an error numeric");
        Message::Err {
            code,
            params: params.into_iter().map(Into::into).collect(),
        }
    }
}

impl From<Message> for TypedMessage {
    fn from(message: Message) -> TypedMessage {
        TypedMessage::new(message)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{parse_line, SUPPORTED};

    fn typed(line: &str) -> TypedMessage {
        classify(&parse_line(line).unwrap())
    }

    #[test]
    fn binds_fields() {
        assert_eq!(
            typed("PING tok").message,
            Message::Ping {
                token: Some("tok".into())
            }
        );
        assert!(matches!(
            typed(":s 001 alice :Welcome").message,
            Message::Welcome { .. }
        ));
        assert_eq!(
            typed("FOO x").message,
            Message::UnknownCmd {
                verb: "FOO".into(),
                params: vec!["x".into()]
            }
        );
        assert_eq!(
            typed("JOIN #a,#b").message,
            Message::Join {
                channels: vec!["#a".into(), "#b".into()],
                keys: None
            }
        );
        assert_eq!(
            typed(":s 353 me = #cats :alice bob").message,
            Message::NamReply {
                target: Some("me".into()),
                symbol: Some("=".into()),
                channel: Some("#cats".into()),
                members: Some(vec!["alice".into(), "bob".into()]),
            }
        );
    }

    #[test]
    fn pong_arity_forms() {
        assert_eq!(
            typed("PONG srv :t").message,
            Message::Pong {
                server: Some("srv".into()),
                token: Some("t".into())
            }
        );
        assert_eq!(
            typed("PONG t").message,
            Message::Pong {
                server: None,
                token: Some("t".into())
            }
        );
    }

    #[test]
    fn arity_table() {
        assert!(!typed("PING").has_enough_params());
        assert!(!typed("PING :").has_enough_params());
        assert!(typed("QUIT").has_enough_params());
        assert!(!typed("USER a 0 * :").has_enough_params());
        assert!(!typed("USER a 0 *").has_enough_params());
        assert!(typed("USER a 0 * :A").has_enough_params());
        assert!(!typed("NICK").has_enough_params());
        assert!(!typed("NICK :").has_enough_params());
        assert!(typed("NICK n").has_enough_params());
        assert!(!typed("JOIN").has_enough_params());
        assert!(typed("JOIN #c").has_enough_params());
        assert!(!typed("PART").has_enough_params());
        assert!(!typed("PRIVMSG #c").has_enough_params());
        assert!(!typed("PRIVMSG #c :").has_enough_params());
        assert!(typed("PRIVMSG #c :x").has_enough_params());
        assert!(!typed("PONG").has_enough_params());
    }

    #[test]
    fn user_with_empty_realname_is_short() {
        let m = TypedMessage::new(Message::User {
            username: Some("a".into()),
            mode: Some("0".into()),
            unused: Some("*".into()),
            realname: Some(String::new()),
        });
        assert!(!m.has_enough_params());
    }

    /// Each supported tag yields a variant reporting that same tag, and no
    /// two tags share a variant.
    #[test]
    fn tag_bijection() {
        let mut seen = std::collections::HashSet::new();
        for tag in &SUPPORTED {
            let m = classify(&RawMessage::new(tag.clone(), ["x"]));
            assert_eq!(&m.tag(), tag);
            let kind = (std::mem::discriminant(&m.message), tag.clone());
            assert!(seen.insert(kind));
        }
        let distinct: std::collections::HashSet<_> = SUPPORTED
            .iter()
            .map(|t| classify(&RawMessage::new(t.clone(), ["x"])).message)
            .map(|m| match m {
                Message::Err { code, .. } => format!("Err/{code}"),
                other => format!("{:?}", std::mem::discriminant(&other)),
            })
            .collect();
        assert_eq!(distinct.len(), SUPPORTED.len());
    }

    #[test]
    fn builders_produce_expected_lines() {
        use crate::wire::serialize;
        let line = |m: Message| serialize(&TypedMessage::new(m).to_raw()).unwrap();
        assert_eq!(line(Message::nick("alice")), "NICK alice");
        assert_eq!(line(Message::user("alice", "Alice")), "USER alice 0 * :Alice");
        assert_eq!(
            line(Message::user("alice", "Alice Liddell")),
            "USER alice 0 * :Alice Liddell"
        );
        assert_eq!(
            line(Message::privmsg("#compsci", "Hello there")),
            "PRIVMSG #compsci :Hello there"
        );
        assert_eq!(line(Message::quit(None)), "QUIT");
    }
}
