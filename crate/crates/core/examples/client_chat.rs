//! Two client handles chatting through an in-process server.

use std::error::Error;
use std::sync::mpsc::Receiver;
use std::time::Duration;

use duplex_irc::client::{ClientEvent, ClientHandle};
use duplex_irc::server::{Server, ServerConfig};

fn until(events: &Receiver<ClientEvent>, who: &str, pred: impl Fn(&ClientEvent) -> bool) -> Result<(), Box<dyn Error>> {
    loop {
        let ev = events.recv_timeout(Duration::from_secs(3))?;
        println!("{who}: {ev}");
        if pred(&ev) {
            return Ok(());
        }
    }
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let server = Server::new(ServerConfig::new("irc.example", 0))?.bind()?;
    let port = server.port();

    let (alice, a) = ClientHandle::connect_channel("127.0.0.1", port)?;
    let (bob, b) = ClientHandle::connect_channel("127.0.0.1", port)?;
    alice.register("alice", "Alice Liddell")?;
    bob.register("bob", "Bob")?;
    until(&a, "alice", |e| matches!(e, ClientEvent::Registered { .. }))?;
    until(&b, "bob", |e| matches!(e, ClientEvent::Registered { .. }))?;

    alice.join("#tea")?;
    until(&a, "alice", |e| matches!(e, ClientEvent::Names { .. }))?;
    bob.join("#tea")?;
    until(&b, "bob", |e| matches!(e, ClientEvent::Names { .. }))?;

    bob.privmsg("#tea", "is there any tea?")?;
    until(&a, "alice", |e| matches!(e, ClientEvent::ChannelMessage { .. }))?;
    alice.privmsg("bob", "there isn't any")?;
    until(&b, "bob", |e| matches!(e, ClientEvent::DirectMessage { .. }))?;

    println!("alice sees {:?}", alice.state().memberships);
    bob.quit(Some("off to the garden"))?;
    until(&a, "alice", |e| matches!(e, ClientEvent::QuitSeen { .. }))?;
    until(&b, "bob", |e| matches!(e, ClientEvent::Disconnected { .. }))?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
