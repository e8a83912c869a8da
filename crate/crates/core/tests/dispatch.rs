use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use duplex_irc::client::server_to_client_table;
use duplex_irc::dispatch::{Arm, BranchTable, DispatchError};
use duplex_irc::server::client_to_server_table;
use duplex_irc::wire::{classify, client_to_server_tags, parse_line, server_to_client_tags, CommandTag, SUPPORTED};
use proptest::prelude::*;

type Table = BranchTable<Vec<String>, &'static str>;

fn msg(line: &str) -> duplex_irc::wire::TypedMessage {
    classify(&parse_line(line).unwrap())
}

fn table() -> Table {
    BranchTable::new(
        [CommandTag::Ping, CommandTag::Privmsg, CommandTag::Quit],
        |log: &mut Vec<String>, m| {
            log.push(format!("fallback {}", m.tag()));
            "fallback"
        },
    )
    .with(CommandTag::Ping, |log: &mut Vec<String>, _| {
        log.push("ping".into());
        "ping"
    })
    .unwrap()
    .with(CommandTag::Privmsg, |log: &mut Vec<String>, _| {
        log.push("privmsg".into());
        "privmsg"
    })
    .unwrap()
}

#[test]
fn registered_tags_reach_their_branch() {
    let t = table();
    let mut log = Vec::new();
    assert_eq!(t.dispatch(&mut log, msg("PING x")), "ping");
    assert_eq!(t.dispatch(&mut log, msg("PRIVMSG #c :hi")), "privmsg");
    assert_eq!(t.dispatch(&mut log, msg("QUIT")), "fallback");
    assert_eq!(t.dispatch(&mut log, msg("FROB")), "fallback");
    assert_eq!(log, ["ping", "privmsg", "fallback QUIT", "fallback FROB"]);
}

#[test]
fn duplicate_registration_is_rejected() {
    let mut t = table();
    let err = t.register(CommandTag::Ping, |_, _| "again").unwrap_err();
    assert_eq!(err, DispatchError::DuplicateBranch(CommandTag::Ping));
    let mut log = Vec::new();
    assert_eq!(t.dispatch(&mut log, msg("PING x")), "ping");
}

#[test]
fn merged_duplicates_fail_validation() {
    let mut t = table();
    let other: Table = BranchTable::new([CommandTag::Ping], |_, _| "other")
        .with(CommandTag::Ping, |_, _| "other")
        .unwrap();
    t.merge(other);
    let report = t.validate();
    assert!(!report.ok);
    assert_eq!(report.duplicates, [CommandTag::Ping]);
    assert!(matches!(t.checked(), Err(DispatchError::Invalid(_))));
}

#[test]
fn branches_outside_the_capability_are_flagged() {
    let t = table().with(CommandTag::Join, |_, _| "join").unwrap();
    let report = t.validate();
    assert!(!report.ok);
    assert_eq!(report.out_of_capability, [CommandTag::Join]);
    assert_eq!(report.uncovered, [CommandTag::Quit]);
    assert!(report.to_string().contains("out_of_capability=[JOIN]"));
}

#[test]
fn shipped_tables_validate() {
    for audit in [false, true] {
        let t = client_to_server_table(audit);
        let report = t.validate();
        assert!(report.ok, "{report}");
        assert!(report.uncovered.is_empty(), "{report}");
        let caps: Vec<_> = t.capability().iter().cloned().collect();
        for tag in client_to_server_tags() {
            assert!(caps.contains(&tag));
        }
        assert_eq!(t.arm_for(&CommandTag::Unknown("AUDIT".into())) != Arm::Fallback, audit);
    }
    let t = server_to_client_table();
    let report = t.validate();
    assert!(report.ok, "{report}");
    assert!(report.uncovered.is_empty(), "{report}");
    assert_eq!(t.capability().len(), server_to_client_tags().len());
}

#[test]
fn unsupported_server_verbs_fall_back() {
    let t = client_to_server_table(false);
    for verb in ["MODE", "WHO", "TOPIC", "FROB", "AUDIT"] {
        let tag = CommandTag::from_wire(verb).unwrap();
        assert_eq!(t.arm_for(&tag), Arm::Fallback, "{verb}");
    }
}

fn any_tag() -> impl Strategy<Value = CommandTag> {
    prop_oneof![
        proptest::sample::select(SUPPORTED.to_vec()),
        "[A-Z]{1,8}".prop_map(|s| CommandTag::from_wire(&s).unwrap()),
        "[0-9]{3}".prop_map(|s| CommandTag::from_wire(&s).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// Every message runs exactly one arm, and it is the branch for its tag
    /// when one exists.
    #[test]
    fn exactly_one_arm_runs(
        registered in proptest::collection::btree_set(any_tag(), 0..8),
        probe in any_tag(),
    ) {
        let calls = Arc::new(AtomicUsize::new(0));
        let hit = Arc::clone(&calls);
        let mut t: BranchTable<(), Option<CommandTag>> = BranchTable::new(registered.clone(), move |_, _| {
            hit.fetch_add(1, Ordering::SeqCst);
            None
        });
        for tag in &registered {
            let hit = Arc::clone(&calls);
            let own = tag.clone();
            t.register(tag.clone(), move |_, _| {
                hit.fetch_add(1, Ordering::SeqCst);
                Some(own.clone())
            }).unwrap();
        }
        prop_assert!(t.validate().ok);
        let line = format!("{} x", probe.as_wire());
        let (arm, out) = t.dispatch_traced(&mut (), msg(&line));
        prop_assert_eq!(calls.load(Ordering::SeqCst), 1);
        if registered.contains(&probe) {
            prop_assert_eq!(arm, Arm::Branch(probe.clone()));
            prop_assert_eq!(out, Some(probe));
        } else {
            prop_assert_eq!(arm, Arm::Fallback);
            prop_assert_eq!(out, None);
        }
    }
}
