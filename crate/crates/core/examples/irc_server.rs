//! Starts a server on a free port and walks a raw connection through
//! registration, a channel join and a quit.
//!
//! Pass `--serve` to keep it running for other clients.

use std::error::Error;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use duplex_irc::server::{Server, ServerConfig};

pub fn run() -> Result<(), Box<dyn Error>> {
    let server = Server::new(ServerConfig::new("irc.example", 0))?.bind()?;
    println!("listening on {}", server.local_addr());

    let stream = TcpStream::connect(server.local_addr())?;
    stream.set_read_timeout(Some(Duration::from_secs(2)))?;
    let mut out = stream.try_clone()?;
    let mut lines = BufReader::new(stream).lines();
    out.write_all(b"NICK alice\r\nUSER alice 0 * :Alice\r\nJOIN #demo\r\nQUIT :bye\r\n")?;
    for line in lines.by_ref() {
        let line = line?;
        println!("<< {line}");
        if line.starts_with("ERROR") {
            break;
        }
    }
    println!("live sessions after quit: {}", server.server().live_sessions());
    if std::env::args().any(|a| a == "--serve") {
        server.wait();
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
