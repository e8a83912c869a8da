//! Measures a few load runs against an auditing server and fits the
//! timings.

use std::error::Error;
use std::time::Duration;

use duplex_irc::harness::{fit_rows, run_load, write_csv, LoadRun, Model, Target};
use duplex_irc::server::{Server, ServerConfig};

pub fn run() -> Result<(), Box<dyn Error>> {
    let server = Server::new(ServerConfig {
        audit: true,
        ..ServerConfig::new("irc.example", 0)
    })?
    .bind()?;
    let target = Target::new("127.0.0.1", server.port());

    for n in [3, 6] {
        let run = LoadRun {
            inter_send_sleep: Duration::from_millis(20),
            ..LoadRun::scenario2(n)
        };
        let r = run_load(&run, &target)?;
        println!(
            "barrier n={n}: delivered {} expected {:?}",
            r.delivered,
            run.expected_deliveries()
        );
    }

    let mut rows = Vec::new();
    for n in [10, 20, 40, 80] {
        let r = run_load(&LoadRun::scenario1(n), &target)?;
        println!("free n={n}: {:.3}s, {} deliveries", r.seconds, r.delivered);
        rows.push(r.row());
    }
    let mut csv = Vec::new();
    write_csv(&rows, &mut csv)?;
    print!("{}", String::from_utf8(csv)?);
    println!("{}", fit_rows(&rows, Model::Linear)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
