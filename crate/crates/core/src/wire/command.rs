use std::fmt;

/// The command of an IRC message.
///
/// Numeric replies carry their symbolic names here but are only ever
/// rendered by their three-digit code on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CommandTag {
    Nick,
    User,
    Join,
    Part,
    Privmsg,
    Quit,
    Ping,
    Pong,
    Error,
    RplWelcome,
    RplYourHost,
    RplCreated,
    RplMyInfo,
    RplNamReply,
    RplEndOfNames,
    ErrNoSuchNick,
    ErrNoSuchChannel,
    ErrNoOrigin,
    ErrUnknownCommand,
    ErrNoNicknameGiven,
    ErrErroneusNickname,
    ErrNicknameInUse,
    ErrNotOnChannel,
    ErrNotRegistered,
    ErrNeedMoreParams,
    ErrAlreadyRegistered,
    /// Any well-shaped command this crate does not model. Holds the wire
    /// text as received.
    Unknown(String),
}

/// Every supported tag, in declaration order.
pub const SUPPORTED: [CommandTag; 26] = [
    CommandTag::Nick,
    CommandTag::User,
    CommandTag::Join,
    CommandTag::Part,
    CommandTag::Privmsg,
    CommandTag::Quit,
    CommandTag::Ping,
    CommandTag::Pong,
    CommandTag::Error,
    CommandTag::RplWelcome,
    CommandTag::RplYourHost,
    CommandTag::RplCreated,
    CommandTag::RplMyInfo,
    CommandTag::RplNamReply,
    CommandTag::RplEndOfNames,
    CommandTag::ErrNoSuchNick,
    CommandTag::ErrNoSuchChannel,
    CommandTag::ErrNoOrigin,
    CommandTag::ErrUnknownCommand,
    CommandTag::ErrNoNicknameGiven,
    CommandTag::ErrErroneusNickname,
    CommandTag::ErrNicknameInUse,
    CommandTag::ErrNotOnChannel,
    CommandTag::ErrNotRegistered,
    CommandTag::ErrNeedMoreParams,
    CommandTag::ErrAlreadyRegistered,
];

impl CommandTag {
    /// Resolves a wire token. Letters are matched case-insensitively against
    /// the known verbs; anything else of valid shape becomes `Unknown`.
    ///
    /// Returns `None` if the token is neither 1+ ASCII letters nor exactly
    /// three ASCII digits.
    pub fn from_wire(token: &str) -> Option<CommandTag> {
        let letters = !token.is_empty() && token.bytes().all(|b| b.is_ascii_alphabetic());
        let numeric = token.len() == 3 && token.bytes().all(|b| b.is_ascii_digit());
        if !letters && !numeric {
            return None;
        }
        let known = if letters {
            match token.to_ascii_uppercase().as_str() {
                "NICK" => Some(CommandTag::Nick),
                "USER" => Some(CommandTag::User),
                "JOIN" => Some(CommandTag::Join),
                "PART" => Some(CommandTag::Part),
                "PRIVMSG" => Some(CommandTag::Privmsg),
                "QUIT" => Some(CommandTag::Quit),
                "PING" => Some(CommandTag::Ping),
                "PONG" => Some(CommandTag::Pong),
                "ERROR" => Some(CommandTag::Error),
                _ => None,
            }
        } else {
            SUPPORTED.iter().find(|t| t.numeric_code() == Some(token)).cloned()
        };
        Some(known.unwrap_or_else(|| CommandTag::Unknown(token.to_string())))
    }

    /// The three-digit code for numeric replies.
    pub fn numeric_code(&self) -> Option<&str> {
        let code = match self {
            CommandTag::RplWelcome => "001",
            CommandTag::RplYourHost => "002",
            CommandTag::RplCreated => "003",
            CommandTag::RplMyInfo => "004",
            CommandTag::RplNamReply => "353",
            CommandTag::RplEndOfNames => "366",
            CommandTag::ErrNoSuchNick => "401",
            CommandTag::ErrNoSuchChannel => "403",
            CommandTag::ErrNoOrigin => "409",
            CommandTag::ErrUnknownCommand => "421",
            CommandTag::ErrNoNicknameGiven => "431",
            CommandTag::ErrErroneusNickname => "432",
            CommandTag::ErrNicknameInUse => "433",
            CommandTag::ErrNotOnChannel => "442",
            CommandTag::ErrNotRegistered => "451",
            CommandTag::ErrNeedMoreParams => "461",
            CommandTag::ErrAlreadyRegistered => "462",
            CommandTag::Unknown(text) if text.len() == 3 && text.bytes().all(|b| b.is_ascii_digit()) => text.as_str(),
            _ => return None,
        };
        Some(code)
    }

    /// The text that goes on the wire.
    pub fn as_wire(&self) -> &str {
        match self {
            CommandTag::Nick => "NICK",
            CommandTag::User => "USER",
            CommandTag::Join => "JOIN",
            CommandTag::Part => "PART",
            CommandTag::Privmsg => "PRIVMSG",
            CommandTag::Quit => "QUIT",
            CommandTag::Ping => "PING",
            CommandTag::Pong => "PONG",
            CommandTag::Error => "ERROR",
            CommandTag::Unknown(text) => text,
            numeric => numeric.numeric_code().expect("numeric tag has a code"),
        }
    }

    pub fn is_numeric(&self) -> bool {
        self.numeric_code().is_some()
    }

    /// True for the 4xx/5xx error replies.
    pub fn is_error_reply(&self) -> bool {
        matches!(self.numeric_code(), Some(code) if code.starts_with('4') || code.starts_with('5'))
    }

    /// Symbolic name, e.g. `RPL_WELCOME`. Verbs return their wire form.
    pub fn symbolic_name(&self) -> &str {
        match self {
            CommandTag::RplWelcome => "RPL_WELCOME",
            CommandTag::RplYourHost => "RPL_YOURHOST",
            CommandTag::RplCreated => "RPL_CREATED",
            CommandTag::RplMyInfo => "RPL_MYINFO",
            CommandTag::RplNamReply => "RPL_NAMREPLY",
            CommandTag::RplEndOfNames => "RPL_ENDOFNAMES",
            CommandTag::ErrNoSuchNick => "ERR_NOSUCHNICK",
            CommandTag::ErrNoSuchChannel => "ERR_NOSUCHCHANNEL",
            CommandTag::ErrNoOrigin => "ERR_NOORIGIN",
            CommandTag::ErrUnknownCommand => "ERR_UNKNOWNCOMMAND",
            CommandTag::ErrNoNicknameGiven => "ERR_NONICKNAMEGIVEN",
            CommandTag::ErrErroneusNickname => "ERR_ERRONEUSNICKNAME",
            CommandTag::ErrNicknameInUse => "ERR_NICKNAMEINUSE",
            CommandTag::ErrNotOnChannel => "ERR_NOTONCHANNEL",
            CommandTag::ErrNotRegistered => "ERR_NOTREGISTERED",
            CommandTag::ErrNeedMoreParams => "ERR_NEEDMOREPARAMS",
            CommandTag::ErrAlreadyRegistered => "ERR_ALREADYREGISTERED",
            other => other.as_wire(),
        }
    }
}

impl fmt::Display for CommandTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_wire())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerics_render_as_digits() {
        assert_eq!(CommandTag::RplWelcome.as_wire(), "001");
        assert_eq!(CommandTag::ErrAlreadyRegistered.as_wire(), "462");
        for tag in SUPPORTED.iter().filter(|t| t.is_numeric()) {
            let wire = tag.as_wire();
            assert_eq!(wire.len(), 3);
            assert!(wire.bytes().all(|b| b.is_ascii_digit()), "{wire}");
        }
    }

    #[test]
    fn every_supported_tag_resolves_back_to_itself() {
        for tag in &SUPPORTED {
            assert_eq!(CommandTag::from_wire(tag.as_wire()).as_ref(), Some(tag));
        }
    }

    #[test]
    fn shapes() {
        assert_eq!(CommandTag::from_wire("privmsg"), Some(CommandTag::Privmsg));
        assert_eq!(CommandTag::from_wire("FOO"), Some(CommandTag::Unknown("FOO".into())));
        assert_eq!(CommandTag::from_wire("005"), Some(CommandTag::Unknown("005".into())));
        assert_eq!(CommandTag::from_wire("00"), None);
        assert_eq!(CommandTag::from_wire("0001"), None);
        assert_eq!(CommandTag::from_wire("A1"), None);
        assert_eq!(CommandTag::from_wire(""), None);
    }

    #[test]
    fn error_reply_classification() {
        assert!(CommandTag::ErrNoSuchNick.is_error_reply());
        assert!(!CommandTag::RplNamReply.is_error_reply());
        assert!(!CommandTag::Privmsg.is_error_reply());
        assert!(CommandTag::Unknown("482".into()).is_error_reply());
    }
}
