//! Two endpoints over an in-memory pipe, each with its own event queue,
//! send loop and receive loop. They count down a number between them.

use std::error::Error;
use std::thread;

use duplex_irc::events::pipe;
use duplex_irc::events::{
    Decoder, EndpointEvents, EndpointHandle, Fault, LocalHooks, OutboundLink, StopDecision, Transport,
};

#[derive(Default)]
struct Lines(Vec<u8>);

impl Decoder for Lines {
    type Item = u32;

    fn decode(&mut self, chunk: &[u8]) -> Vec<Result<u32, Fault>> {
        self.0.extend_from_slice(chunk);
        let mut out = Vec::new();
        while let Some(i) = self.0.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = self.0.drain(..=i).collect();
            let text = String::from_utf8_lossy(&line[..i]).to_string();
            out.push(text.parse().map_err(|_| Fault::decode(text, false)));
        }
        out
    }
}

fn send(n: u32, out: &mut OutboundLink) -> Result<(), Fault> {
    out.send_frame(format!("{n}\n").as_bytes())
}

fn player(name: &'static str) -> impl FnMut(u32, &EndpointHandle<u32>) -> Result<(), Fault> {
    move |n, me| {
        println!("{name} got {n}");
        if n == 0 {
            me.stop("reached zero");
        } else {
            me.enqueue(n - 1)?;
        }
        Ok(())
    }
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let (left, right) = pipe::pair();
    let hooks = |name: &'static str| {
        LocalHooks::new()
            .on_error(move |f| {
                println!("{name}: {f}");
                StopDecision::Continue
            })
            .on_stop(move || println!("{name} stopped"))
    };
    let ping = EndpointEvents::new(left.split()?, Lines::default(), send, player("ping")).hooks(hooks("ping"));
    let pong = EndpointEvents::new(right.split()?, Lines::default(), send, player("pong")).hooks(hooks("pong"));

    ping.enqueue(6)?;
    let (a, b) = thread::scope(|s| {
        let a = s.spawn(|| ping.run());
        let b = s.spawn(|| pong.run());
        (a.join().unwrap(), b.join().unwrap())
    });
    println!("ping: {:?}", a?);
    println!("pong: {:?}", b?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
