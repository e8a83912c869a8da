//! A branch table keyed by command tag, with validation and a fallback.

use std::error::Error;

use duplex_irc::dispatch::BranchTable;
use duplex_irc::server::client_to_server_table;
use duplex_irc::wire::{classify, parse_line, CommandTag, Message};

#[derive(Default)]
struct Counts {
    pings: usize,
    unknown: Vec<String>,
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let mut table = BranchTable::new([CommandTag::Ping, CommandTag::Quit], |c: &mut Counts, m| {
        c.unknown.push(m.tag().to_string());
    });
    table.register(CommandTag::Ping, |c: &mut Counts, _| c.pings += 1)?;
    if let Err(e) = table.register(CommandTag::Ping, |_, _| {}) {
        println!("second PING branch: {e}");
    }
    println!("validation: {}", table.validate());

    let mut counts = Counts::default();
    for line in ["PING a", "PING b", "QUIT", "MODE #c +m"] {
        let (arm, ()) = table.dispatch_traced(&mut counts, classify(&parse_line(line)?));
        println!("{line:12} -> {arm:?}");
    }
    println!("pings={} fallback={:?}", counts.pings, counts.unknown);

    table.register(CommandTag::Join, |_, m| {
        if let Message::Join { channels, .. } = m.message {
            println!("joining {channels:?}");
        }
    })?;
    println!("after JOIN branch: {}", table.validate());

    println!("server table: {}", client_to_server_table(false).validate());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
