//! One line per acceptance criterion. Exits non-zero if any fails.

mod common;

use std::collections::HashMap;
use std::io::Write;
use std::sync::atomic::{AtomicI64, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use common::{LineClient, HOST};
use duplex_irc::client::{channel_sink, ClientEvent, ClientHandle};
use duplex_irc::dispatch::{BranchTable, DispatchError};
use duplex_irc::events::pipe::{self, PipeEnd};
use duplex_irc::events::{
    Decoder, EndpointEvents, EndpointHandle, Fault, LocalHooks, OutboundLink, Phase, StopDecision, Transport,
};
use duplex_irc::harness::{
    conformance_suite, fit, run_load, run_suite, LoadRun, Model, Target, SUITE_HOSTNAME, SUITE_PORT,
};
use duplex_irc::server::{Server, ServerConfig};
use duplex_irc::wire::{encode_frame, parse_line, serialize, CommandTag, FrameBuffer, RawMessage, SUPPORTED};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn word(rng: &mut StdRng, first: std::ops::RangeInclusive<u8>, len: usize) -> String {
    let mut s = String::new();
    s.push(rng.gen_range(first) as char);
    for _ in 1..len {
        s.push(rng.gen_range(b'!'..=b'~') as char);
    }
    s
}

fn random_message(rng: &mut StdRng) -> RawMessage {
    let command = match rng.gen_range(0..3) {
        0 => SUPPORTED[rng.gen_range(0..SUPPORTED.len())].clone(),
        1 => CommandTag::from_wire(
            &(0..rng.gen_range(1..8))
                .map(|_| rng.gen_range(b'A'..=b'Z') as char)
                .collect::<String>(),
        )
        .unwrap(),
        _ => CommandTag::from_wire(&format!("{:03}", rng.gen_range(0..1000))).unwrap(),
    };
    let mut params: Vec<String> = (0..rng.gen_range(0..14))
        .map(|_| {
            let len = rng.gen_range(1..12);
            // Middle parameters never start with ':'.
            let mut w = word(rng, b'!'..=b'9', len);
            if rng.gen_bool(0.5) {
                w.replace_range(0..1, &(rng.gen_range(b';'..=b'~') as char).to_string());
            }
            w
        })
        .collect();
    if rng.gen_bool(0.6) {
        let len = rng.gen_range(0..40);
        params.push((0..len).map(|_| rng.gen_range(b' '..=b'~') as char).collect());
    }
    let mut m = RawMessage::new(command, params);
    if rng.gen_bool(0.5) {
        let len = rng.gen_range(1..16);
        m.source = Some(word(rng, b'a'..=b'z', len));
    }
    let needs = m
        .params
        .last()
        .is_some_and(|p| p.is_empty() || p.contains(' ') || p.starts_with(':'));
    m.trailing_colon = rng.gen_bool(0.5) && !m.params.is_empty() && !needs;
    m
}

fn wire_fidelity() -> Check {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(2024);
    for i in 0..1000 {
        let m = random_message(&mut rng);
        let line = serialize(&m).map_err(|e| format!("message {i}: {e}"))?;
        let back = parse_line(&line).map_err(|e| format!("{line:?}: {e}"))?;
        ensure(back == m, || format!("round trip changed {line:?}"))?;
    }

    let corpus = include_str!("fixtures/corpus.txt");
    let mut corpus_lines = 0;
    for line in corpus.lines().filter(|l| !l.is_empty()) {
        let raw = parse_line(line).map_err(|e| format!("{line:?}: {e}"))?;
        let again = serialize(&raw).map_err(|e| e.to_string())?;
        ensure(again == line, || format!("{line:?} re-serialized as {again:?}"))?;
        corpus_lines += 1;
    }
    ensure(
        corpus.lines().any(|l| l == ":bob PRIVMSG #compsci :Hello there"),
        || "corpus lacks the channel example".into(),
    )?;

    let mut bytes = Vec::new();
    let mut expected = Vec::new();
    for i in 0..50 {
        let line = format!(":user{i} PRIVMSG #chan :message number {i}");
        bytes.extend(encode_frame(&line));
        expected.push(line);
    }
    for p in 0..200 {
        let mut cuts: Vec<usize> = (0..rng.gen_range(0..60))
            .map(|_| rng.gen_range(0..=bytes.len()))
            .collect();
        cuts.extend([0, bytes.len()]);
        cuts.sort_unstable();
        cuts.dedup();
        let mut fb = FrameBuffer::new();
        let mut got = Vec::new();
        for w in cuts.windows(2) {
            for frame in fb.split_frames(&bytes[w[0]..w[1]]) {
                got.push(frame.map_err(|e| e.to_string())?);
            }
        }
        ensure(got == expected, || format!("partition {p} changed the frames"))?;
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!(
        "1000 round trips, {corpus_lines} corpus lines byte-exact, 200 partitions, {elapsed:.2?}"
    ))
}

fn registration() -> Check {
    let server = common::start();
    let mut c = LineClient::connect(&server);
    let start = Instant::now();
    c.send("NICK alice");
    c.send("USER alice 0 * :Alice");
    let first = c.recv();
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(1))?;
    ensure(first.command == CommandTag::RplWelcome, || {
        format!("first reply was {}", first.command)
    })?;
    ensure(first.source.as_deref() == Some(HOST), || {
        format!("source {:?}", first.source)
    })?;
    let text = first.params.last().cloned().unwrap_or_default();
    ensure(text.starts_with("Welcome"), || format!("text {text:?}"))?;
    Ok(format!("001 first after {elapsed:.2?}: {text:?}"))
}

fn conformance() -> Check {
    let server = Server::new(ServerConfig {
        audit: true,
        ..ServerConfig::new(SUITE_HOSTNAME, SUITE_PORT)
    })
    .map_err(|e| e.to_string())?
    .bind()
    .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let report = run_suite(
        &conformance_suite(SUITE_HOSTNAME),
        &Target::new("127.0.0.1", SUITE_PORT),
    );
    let elapsed = start.elapsed();
    drop(server);
    ensure(report.to_string() == "29 passed", || {
        format!("{report}: {:?}", report.failed())
    })?;
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!("{report} on port {SUITE_PORT} in {elapsed:.2?}"))
}

fn full_duplex_interleaving() -> Check {
    let server = common::start_with(ServerConfig {
        names_reply_delay: Some(Duration::from_millis(300)),
        ..common::config()
    });
    let mut alice = LineClient::connect(&server);
    alice.register("alice");
    alice.send("JOIN #c");
    alice.recv_until(CommandTag::RplEndOfNames);
    let mut bob = LineClient::connect(&server);
    bob.register("bob");
    bob.send("JOIN #c");
    let echo = bob.recv();
    ensure(echo.command == CommandTag::Join, || {
        format!("expected JOIN ack, got {}", echo.command)
    })?;
    alice.recv_until(CommandTag::Join);
    alice.send("PRIVMSG #c :during names");
    let mut order = vec!["JOIN".to_string()];
    loop {
        let m = bob.recv();
        order.push(m.command.as_wire().to_string());
        if m.command == CommandTag::RplEndOfNames {
            break;
        }
    }
    ensure(order == ["JOIN", "PRIVMSG", "353", "366"], || {
        format!("order {order:?}")
    })?;
    Ok(format!("bob saw {}", order.join(" → ")))
}

fn broadcast_law() -> Check {
    let server = common::start();
    let target = Target::new("127.0.0.1", server.port());
    let start = Instant::now();
    let mut seen = Vec::new();
    for n in [5u64, 10, 20] {
        let r = run_load(&LoadRun::scenario2(n as usize), &target).map_err(|e| e.to_string())?;
        ensure(r.is_clean(), || format!("n={n}: {:?}", r.failures))?;
        ensure(r.delivered == 3 * n * (n - 1), || {
            format!("n={n}: delivered {} != {}", r.delivered, 3 * n * (n - 1))
        })?;
        seen.push(format!("n={n}:{}", r.delivered));
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(20))?;
    Ok(format!("{} in {elapsed:.2?}", seen.join(" ")))
}

fn linear_scaling() -> Check {
    let server = common::start();
    let target = Target::new("127.0.0.1", server.port());
    let start = Instant::now();
    let mut points = Vec::new();
    for n in [25usize, 50, 100, 200] {
        let r = run_load(&LoadRun::scenario1(n), &target).map_err(|e| e.to_string())?;
        ensure(r.is_clean(), || format!("n={n}: {:?}", r.failures))?;
        points.push((n as f64, r.seconds));
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(120))?;
    let linear = fit(&points, Model::Linear).map_err(|e| e.to_string())?;
    ensure(linear.r_squared >= 0.9, || {
        format!("linear R^2 {:.4} from {points:?}", linear.r_squared)
    })?;
    let square: Vec<_> = (1..=10).map(|x| (x as f64, (x * x) as f64)).collect();
    let quad = fit(&square, Model::Quadratic).map_err(|e| e.to_string())?;
    ensure((quad.r_squared - 1.0).abs() < 1e-9, || {
        format!("quadratic R^2 {}", quad.r_squared)
    })?;
    Ok(format!(
        "linear R^2 {:.4}, quadratic R^2 on y=x^2 {:.6}, {elapsed:.2?}",
        linear.r_squared, quad.r_squared
    ))
}

#[derive(Default)]
struct Numbers(Vec<u8>);

impl Decoder for Numbers {
    type Item = u64;

    fn decode(&mut self, chunk: &[u8]) -> Vec<Result<u64, Fault>> {
        self.0.extend_from_slice(chunk);
        let mut out = Vec::new();
        while let Some(i) = self.0.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = self.0.drain(..=i).collect();
            let text = String::from_utf8_lossy(&line[..i]).to_string();
            out.push(text.parse().map_err(|_| Fault::decode(format!("bad {text:?}"), false)));
        }
        out
    }
}

fn write_number(v: u64, out: &mut OutboundLink) -> Result<(), Fault> {
    out.send_frame(format!("{v}\n").as_bytes())
}

fn numbers(
    end: PipeEnd,
    inbound: impl FnMut(u64, &EndpointHandle<u64>) -> Result<(), Fault> + Send + 'static,
) -> EndpointEvents<u64, Numbers> {
    EndpointEvents::new(end.split().unwrap(), Numbers::default(), write_number, inbound)
}

fn fifo_eight_producers() -> Result<(), String> {
    let (a, b) = pipe::pair();
    let got = Arc::new(Mutex::new(Vec::new()));
    let sink = Arc::clone(&got);
    let sender = numbers(a, |_, _| Ok(()));
    let receiver = numbers(b, move |v, h| {
        let mut g = sink.lock().unwrap();
        g.push(v);
        if g.len() == 8 * 500 {
            h.stop("done");
        }
        Ok(())
    });
    thread::scope(|s| {
        let r = s.spawn(|| receiver.run());
        let t = s.spawn(|| sender.run());
        let producers: Vec<_> = (0..8u64)
            .map(|p| {
                let h = sender.handle();
                s.spawn(move || (0..500).for_each(|i| h.enqueue(p * 1_000_000 + i).unwrap()))
            })
            .collect();
        producers.into_iter().for_each(|p| p.join().unwrap());
        r.join().unwrap().unwrap();
        sender.stop("done");
        t.join().unwrap().unwrap();
    });
    let got = got.lock().unwrap();
    let mut last: HashMap<u64, u64> = HashMap::new();
    for v in got.iter() {
        if let Some(prev) = last.insert(v / 1_000_000, v % 1_000_000) {
            ensure(v % 1_000_000 > prev, || format!("producer {} reordered", v / 1_000_000))?;
        }
    }
    ensure(got.len() == 4000, || format!("received {}", got.len()))
}

fn ping_pong_saturation() -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(9);
    let seeds: Vec<u64> = (0..1000).map(|_| rng.gen_range(0..8)).collect();
    let left = Arc::new(AtomicI64::new(2 * seeds.iter().map(|&v| v as i64 + 1).sum::<i64>()));
    let (a, b) = pipe::pair();
    let make = |end: PipeEnd| {
        let left = Arc::clone(&left);
        numbers(end, move |v, h| {
            if v > 0 {
                h.enqueue(v - 1)?;
            }
            if left.fetch_sub(1, Ordering::SeqCst) == 1 {
                h.stop("drained");
            }
            Ok(())
        })
    };
    let (x, y) = (make(a), make(b));
    for &v in &seeds {
        x.enqueue(v).unwrap();
        y.enqueue(v).unwrap();
    }
    let (tx, rx) = mpsc::channel();
    thread::scope(|s| {
        s.spawn(|| {
            thread::scope(|inner| {
                inner.spawn(|| x.run());
                inner.spawn(|| y.run());
            });
            let _ = tx.send(());
        });
        let done = rx.recv_timeout(Duration::from_secs(10));
        if done.is_err() {
            x.stop("timeout");
            y.stop("timeout");
        }
        ensure(done.is_ok(), || "ping-pong did not terminate within 10 s".into())
    })?;
    ensure(left.load(Ordering::SeqCst) == 0, || "events lost".into())
}

fn on_stop_once() -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(77);
    for round in 0..100 {
        let (a, b) = pipe::pair();
        let counts = [Arc::new(AtomicUsize::new(0)), Arc::new(AtomicUsize::new(0))];
        let hook = |c: &Arc<AtomicUsize>| {
            let c = Arc::clone(c);
            LocalHooks::new().on_stop(move || {
                c.fetch_add(1, Ordering::SeqCst);
            })
        };
        let x = numbers(a, |_, _| Ok(())).hooks(hook(&counts[0]));
        let y = numbers(b, |_, _| Ok(())).hooks(hook(&counts[1]));
        for v in 0..rng.gen_range(0..100) {
            x.enqueue(v).unwrap();
        }
        let delay = Duration::from_micros(rng.gen_range(0..2000));
        let which = rng.gen_range(0..3);
        thread::scope(|s| {
            let rx = s.spawn(|| x.run());
            let ry = s.spawn(|| y.run());
            thread::sleep(delay);
            match which {
                0 => x.stop("x"),
                1 => y.stop("y"),
                _ => {
                    let h = x.handle();
                    let t = s.spawn(move || h.stop("race"));
                    y.stop("race");
                    t.join().unwrap();
                }
            }
            rx.join().unwrap().unwrap();
            ry.join().unwrap().unwrap();
        });
        for c in &counts {
            let n = c.load(Ordering::SeqCst);
            ensure(n == 1, || format!("round {round}: on_stop ran {n} times"))?;
        }
    }
    Ok(())
}

fn error_decisions() -> Result<(), String> {
    for (decision, want) in [(StopDecision::Continue, vec![1, 2, 3]), (StopDecision::Stop, vec![1])] {
        let (a, b) = pipe::pair();
        let got = Arc::new(Mutex::new(Vec::new()));
        let sink = Arc::clone(&got);
        let ep = numbers(a, move |v, h| {
            sink.lock().unwrap().push(v);
            if v == 3 {
                h.stop("end");
            }
            Ok(())
        })
        .hooks(LocalHooks::new().on_error(move |_| decision));
        let mut far = b.split().unwrap();
        far.tx.write_all(b"1\nbad\n2\n3\n").unwrap();
        thread::scope(|s| s.spawn(|| ep.run()).join().unwrap()).map_err(|e| e.to_string())?;
        far.closer.close();
        let got = got.lock().unwrap().clone();
        ensure(got == want, || format!("{decision:?}: handled {got:?}"))?;
        ensure(ep.handle().phase() == Phase::Stopped, || {
            "endpoint still running".into()
        })?;
    }
    Ok(())
}

fn pattern_properties() -> Check {
    let start = Instant::now();
    fifo_eight_producers().map_err(|e| format!("fifo: {e}"))?;
    ping_pong_saturation().map_err(|e| format!("ping-pong: {e}"))?;
    on_stop_once().map_err(|e| format!("on_stop: {e}"))?;
    error_decisions().map_err(|e| format!("on_error: {e}"))?;
    Ok(format!(
        "fifo x8 producers, 1000-seed ping-pong, 100 stop timings, continue/stop, {:.2?}",
        start.elapsed()
    ))
}

fn dispatch_soundness() -> Check {
    let mut table: BranchTable<(), u8> = BranchTable::new([CommandTag::Ping], |_, _| 0);
    table.register(CommandTag::Ping, |_, _| 1).map_err(|e| e.to_string())?;
    let dup = table.register(CommandTag::Ping, |_, _| 2);
    ensure(dup == Err(DispatchError::DuplicateBranch(CommandTag::Ping)), || {
        format!("{dup:?}")
    })?;
    table.register(CommandTag::Join, |_, _| 3).map_err(|e| e.to_string())?;
    let report = table.validate();
    ensure(!report.ok && report.out_of_capability == [CommandTag::Join], || {
        report.to_string()
    })?;

    let server = common::start();
    let mut c = LineClient::connect(&server);
    c.register("alice");
    c.send("FROB now");
    let reply = c.recv();
    ensure(reply.command == CommandTag::ErrUnknownCommand, || {
        format!("server replied {}", reply.command)
    })?;

    let (near, far) = pipe::pair();
    let (tx, rx) = mpsc::channel();
    let _client = ClientHandle::over(near, channel_sink(tx)).map_err(|e| e.to_string())?;
    let mut link = far.split().unwrap();
    link.tx.write_all(b":srv FROB whatever\r\n").unwrap();
    let ev = rx.recv_timeout(Duration::from_secs(2)).map_err(|e| e.to_string())?;
    ensure(matches!(ev, ClientEvent::ServerError { numeric: 0, .. }), || {
        format!("client emitted {ev:?}")
    })?;
    Ok("duplicate rejected, JOIN flagged out of capability, server 421, client diagnostic".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("wire fidelity", wire_fidelity),
        ("registration exchange", registration),
        ("conformance suite", conformance),
        ("full-duplex interleaving", full_duplex_interleaving),
        ("broadcast law", broadcast_law),
        ("linear scaling", linear_scaling),
        ("pattern properties", pattern_properties),
        ("dispatch soundness", dispatch_soundness),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
