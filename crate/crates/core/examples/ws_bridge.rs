//! A WebSocket bridge in front of an in-process server, driven by a
//! WebSocket client speaking the JSON protocol.

use std::error::Error;

use duplex_irc::bridge::RunningBridge;
use duplex_irc::server::{Server, ServerConfig};
use serde_json::{json, Value};
use tungstenite::Message;

pub fn run() -> Result<(), Box<dyn Error>> {
    let server = Server::new(ServerConfig::new("irc.example", 0))?.bind()?;
    let bridge = RunningBridge::bind("127.0.0.1:0")?;
    let (mut ws, _) = tungstenite::connect(format!("ws://{}", bridge.local_addr()))?;

    let commands = [
        json!({"op": "connect", "host": "127.0.0.1", "port": server.port(), "nick": "web", "realname": "Web User"}),
        json!({"op": "join", "channel": "#demo"}),
        json!({"op": "privmsg", "target": "web", "text": "note to self"}),
        json!({"op": "quit", "reason": "closing tab"}),
    ];
    let waits = ["registered", "names", "message", "disconnected"];
    for (cmd, wait) in commands.iter().zip(waits) {
        println!(">> {cmd}");
        ws.send(Message::Text(cmd.to_string()))?;
        loop {
            let Message::Text(text) = ws.read()? else { continue };
            println!("<< {text}");
            let ev: Value = serde_json::from_str(&text)?;
            if ev["ev"] == wait {
                break;
            }
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
