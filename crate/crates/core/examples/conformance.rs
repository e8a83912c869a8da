//! Runs the scripted conformance suite against an in-process server, or
//! against `host:port` given on the command line.

use std::error::Error;

use duplex_irc::harness::{conformance_suite, run_suite, Target, SUITE_HOSTNAME};
use duplex_irc::server::{Server, ServerConfig};

pub fn run() -> Result<(), Box<dyn Error>> {
    let external = std::env::args()
        .nth(1)
        .filter(|a| a.rsplit_once(':').is_some_and(|(_, port)| port.parse::<u16>().is_ok()));
    let _local;
    let target = match external {
        Some(addr) => {
            let (host, port) = addr.rsplit_once(':').unwrap_or_default();
            Target::new(host, port.parse()?)
        }
        None => {
            let server = Server::new(ServerConfig::new(SUITE_HOSTNAME, 0))?.bind()?;
            let target = Target::new("127.0.0.1", server.port());
            _local = server;
            target
        }
    };
    let report = run_suite(&conformance_suite(SUITE_HOSTNAME), &target);
    for outcome in &report.outcomes {
        let mark = if outcome.passed() { "ok  " } else { "FAIL" };
        println!("{mark} {}", outcome.name);
        if let Some(f) = &outcome.failure {
            println!("     line {}: {}", f.line, f.reason);
        }
    }
    println!("{report}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
