//! Parse, classify, serialize and frame IRC lines.

use std::error::Error;

use duplex_irc::wire::{
    classify, encode_frame, parse_line, serialize, serialize_truncating, CommandTag, FrameBuffer, Message, RawMessage,
    MAX_LINE_BYTES,
};

pub fn run() -> Result<(), Box<dyn Error>> {
    let raw = parse_line(":bob PRIVMSG #compsci :Hello there")?;
    println!(
        "source={:?} command={} params={:?}",
        raw.source, raw.command, raw.params
    );

    let typed = classify(&raw);
    if let Message::Privmsg { target, text } = &typed.message {
        println!("privmsg to {target:?}: {text:?}");
    }
    assert_eq!(serialize(&typed.to_raw())?, ":bob PRIVMSG #compsci :Hello there");

    // A trailing colon on a single-word last parameter is kept when asked for.
    let user = RawMessage::new(CommandTag::User, ["alice", "0", "*", "Alice"]).with_trailing_colon();
    println!("{}", serialize(&user)?);

    let numeric = parse_line(":My.Little.Server 001 alice :Welcome")?;
    println!("{} is {}", numeric.command.as_wire(), numeric.command.symbolic_name());

    // Bytes arrive in arbitrary pieces; frames come out whole.
    let mut bytes = encode_frame("PING one");
    bytes.extend(encode_frame("PING two"));
    let mut frames = FrameBuffer::new();
    for piece in bytes.chunks(3) {
        for frame in frames.split_frames(piece) {
            println!("frame: {}", frame?);
        }
    }

    let long = RawMessage::new(CommandTag::Privmsg, ["#c".to_string(), "y ".repeat(400)]);
    println!("oversize: {}", serialize(&long).unwrap_err());
    let cut = serialize_truncating(&long)?;
    println!(
        "truncated to {} bytes with CRLF (limit {MAX_LINE_BYTES})",
        cut.len() + 2
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
