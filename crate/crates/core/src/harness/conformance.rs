//! The conformance suite: one scenario per behaviour of the reference IRC
//! test list, run against a live server.

use std::fmt;

use super::scenario::{run_scenario, Scenario, ScenarioOutcome, Target};

/// Hostname the suite expects the server to announce.
pub const SUITE_HOSTNAME: &str = "My.Little.Server";
/// Port the suite connects to by default.
pub const SUITE_PORT: u16 = 8667;

macro_rules! suite {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../scenarios/", $name, ".irc")))),*]
    };
}

/// Scenario names and sources, in suite order.
pub const SCENARIOS: &[(&str, &str)] = suite![
    "testQuitDisconnects",
    "testQuitErrors",
    "testNickCollision",
    "testEarlyNickCollision",
    "testEmptyRealname",
    "testJoinAllMessages",
    "testJoinNamreply",
    "testJoinTwice",
    "testJoinPartiallyInvalid",
    "testPrivmsg",
    "testPrivmsgNonexistentChannel",
    "testPrivmsgToUser",
    "testPrivmsgNonexistentUser",
    "testLineAtLimit",
    "testPartNotInEmptyChannel",
    "testPartNotInNonEmptyChannel",
    "testBasicPart",
    "testBasicPartRfc2812",
    "testPartMessage",
    "testPing",
    "testPingNoToken",
    "testPingEmptyToken",
    "testQuit",
    "testFailedNickChange",
    "testStarNick",
    "testEmptyNick",
    "testNickRelease",
    "testNickReleaseQuit",
    "testNickReleaseUnregistered",
];

/// Parses the built-in scenarios for a server announcing `hostname`.
pub fn conformance_suite(hostname: &str) -> Vec<Scenario> {
    SCENARIOS
        .iter()
        .map(|(name, text)| Scenario::parse(name, text, hostname).expect("built-in scenario parses"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub outcomes: Vec<ScenarioOutcome>,
}

impl SuiteReport {
    pub fn passed(&self) -> Vec<&str> {
        self.outcomes
            .iter()
            .filter(|o| o.passed())
            .map(|o| o.name.as_str())
            .collect()
    }

    pub fn failed(&self) -> Vec<&str> {
        self.outcomes
            .iter()
            .filter(|o| !o.passed())
            .map(|o| o.name.as_str())
            .collect()
    }

    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(ScenarioOutcome::passed)
    }
}

impl fmt::Display for SuiteReport {
    /// `29 passed` or `27 passed, 2 failed`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let failed = self.failed().len();
        write!(f, "{} passed", self.passed().len())?;
        if failed > 0 {
            write!(f, ", {failed} failed")?;
        }
        Ok(())
    }
}

/// Runs the scenarios one after another against `target`.
pub fn run_suite(scenarios: &[Scenario], target: &Target) -> SuiteReport {
    SuiteReport {
        outcomes: scenarios.iter().map(|s| run_scenario(s, target)).collect(),
    }
}
