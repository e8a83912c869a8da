use std::fs::File;
use std::io;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};

use duplex_irc::bridge::{RunningBridge, DEFAULT_LISTEN};
use duplex_irc::harness::{
    conformance_suite, fit_rows, read_csv, run_load, run_suite, write_csv, LoadRun, Model, Target, SUITE_HOSTNAME,
    SUITE_PORT,
};
use duplex_irc::server::{InMemoryStore, Server, ServerConfig, ServerStore};

#[derive(Parser)]
#[command(name = "duplex-irc", version, about = "IRC server, client harness and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the server.
    Server {
        /// Source used on every server reply.
        #[arg(default_value = "localhost")]
        hostname: String,
        #[arg(long, default_value_t = 6667)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
        #[arg(long, default_value_t = 4096)]
        max_clients: usize,
        /// Answer AUDIT with the delivered PRIVMSG count and print it on exit.
        #[arg(long)]
        audit: bool,
        /// Seconds between server PINGs (off by default).
        #[arg(long)]
        ping_interval: Option<u64>,
        #[arg(long, hide = true)]
        inject_nick_release_bug: bool,
    },
    /// Run the conformance suite against a server.
    Conform {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = SUITE_PORT)]
        port: u16,
        /// Hostname the server is expected to announce.
        #[arg(long, default_value = SUITE_HOSTNAME)]
        hostname: String,
        /// Print the transcript of failing scenarios.
        #[arg(long, short)]
        verbose: bool,
    },
    /// Measure many clients against an auditing server.
    Load {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 6667)]
        port: u16,
        /// Client counts, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        scenario: u8,
        /// Milliseconds between sends (scenario 2).
        #[arg(long)]
        inter_send_ms: Option<u64>,
        #[arg(long)]
        csv: Option<String>,
    },
    /// Fit seconds against n from a load CSV.
    Fit {
        #[arg(long, default_value = "linear")]
        model: String,
        file: String,
    },
    /// Serve the WebSocket bridge.
    Bridge {
        #[arg(long, default_value = DEFAULT_LISTEN)]
        listen: String,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match command {
        Command::Server {
            hostname,
            port,
            bind,
            max_clients,
            audit,
            ping_interval,
            inject_nick_release_bug,
        } => {
            let cfg = ServerConfig {
                hostname,
                bind,
                port,
                max_clients,
                audit,
                ping_interval: ping_interval.map(Duration::from_secs),
                ..ServerConfig::default()
            };
            let store: Arc<dyn ServerStore> = Arc::new(if inject_nick_release_bug {
                InMemoryStore::with_nick_release_bug()
            } else {
                InMemoryStore::new()
            });
            let running = Server::with_store(cfg, Arc::clone(&store))?.bind()?;
            println!("listening on {}", running.local_addr());
            ctrlc::set_handler(move || {
                if audit {
                    println!("delivered_privmsg_count={}", store.delivered_privmsg_count());
                }
                std::process::exit(0);
            })?;
            running.wait();
            Ok(ExitCode::SUCCESS)
        }
        Command::Conform {
            host,
            port,
            hostname,
            verbose,
        } => {
            let report = run_suite(&conformance_suite(&hostname), &Target::new(host, port));
            for outcome in &report.outcomes {
                let status = if outcome.passed() { "PASSED" } else { "FAILED" };
                println!("{status} {}", outcome.name);
                if let Some(f) = &outcome.failure {
                    println!("    step {} (line {}): {}", f.step, f.line, f.reason);
                    if verbose {
                        for line in &outcome.transcript {
                            println!("    {line}");
                        }
                    }
                }
            }
            println!("{report}");
            Ok(if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Load {
            host,
            port,
            n,
            scenario,
            inter_send_ms,
            csv,
        } => {
            let target = Target::new(host, port);
            let mut rows = Vec::new();
            let mut clean = true;
            for n in n {
                let mut run = if scenario == 1 {
                    LoadRun::scenario1(n)
                } else {
                    LoadRun::scenario2(n)
                };
                if let Some(ms) = inter_send_ms {
                    run.inter_send_sleep = Duration::from_millis(ms);
                }
                let result = run_load(&run, &target)?;
                for f in &result.failures {
                    eprintln!("n={n}: {f}");
                }
                clean &= result.is_clean();
                if let Some(expected) = run.expected_deliveries() {
                    clean &= result.delivered == expected;
                }
                eprintln!(
                    "n={n} seconds={:.3} delivered={} observed={}",
                    result.seconds, result.delivered, result.observed
                );
                rows.push(result.row());
            }
            match csv {
                Some(path) => write_csv(&rows, File::create(path)?)?,
                None => write_csv(&rows, io::stdout().lock())?,
            }
            Ok(if clean { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Fit { model, file } => {
            let model: Model = match model.parse() {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(ExitCode::from(2));
                }
            };
            let rows = read_csv(File::open(file)?)?;
            println!("{}", fit_rows(&rows, model)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Bridge { listen } => {
            let bridge = RunningBridge::bind(&listen)?;
            println!("bridge listening on ws://{}", bridge.local_addr());
            bridge.wait();
            Ok(ExitCode::SUCCESS)
        }
    }
}
