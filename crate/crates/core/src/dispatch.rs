//! Branch selection driven by the message's own type.
//!
//! A received message's command tag determines its variant, so it also
//! determines which branch of the receiver's handler must run. A
//! [`BranchTable`] maps tags to branches and checks, when it is built, the
//! two conditions that make that choice sound:
//!
//! * every branch tag is something the link can carry (the capability set),
//! * no tag has two branches.
//!
//! A mandatory fallback plays the role of a `default` arm.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::wire::{CommandTag, TypedMessage};

pub type Branch<C, O> = Box<dyn Fn(&mut C, TypedMessage) -> O + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DispatchError {
    #[error("a branch for {0} is already registered")]
    DuplicateBranch(CommandTag),
    #[error("branch table failed validation: {0}")]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub ok: bool,
    pub duplicates: Vec<CommandTag>,
    pub out_of_capability: Vec<CommandTag>,
    /// Capability tags with no branch of their own. These reach the
    /// fallback; reported for information only.
    pub uncovered: Vec<CommandTag>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |tags: &[CommandTag]| {
            tags.iter()
                .map(|t| t.as_wire().to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(
            f,
            "ok={} duplicates=[{}] out_of_capability=[{}] uncovered=[{}]",
            self.ok,
            list(&self.duplicates),
            list(&self.out_of_capability),
            list(&self.uncovered)
        )
    }
}

/// Which arm handled a message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arm {
    Branch(CommandTag),
    Fallback,
}

pub struct BranchTable<C, O> {
    branches: BTreeMap<CommandTag, Branch<C, O>>,
    capability: BTreeSet<CommandTag>,
    fallback: Branch<C, O>,
    duplicates: Vec<CommandTag>,
}

impl<C, O> BranchTable<C, O> {
    pub fn new(
        capability: impl IntoIterator<Item = CommandTag>,
        fallback: impl Fn(&mut C, TypedMessage) -> O + Send + Sync + 'static,
    ) -> Self {
        BranchTable {
            branches: BTreeMap::new(),
            capability: capability.into_iter().collect(),
            fallback: Box::new(fallback),
            duplicates: Vec::new(),
        }
    }

    pub fn register(
        &mut self,
        tag: CommandTag,
        branch: impl Fn(&mut C, TypedMessage) -> O + Send + Sync + 'static,
    ) -> Result<(), DispatchError> {
        if self.branches.contains_key(&tag) {
            return Err(DispatchError::DuplicateBranch(tag));
        }
        self.branches.insert(tag, Box::new(branch));
        Ok(())
    }

    /// Builder form of [`register`](Self::register).
    pub fn with(
        mut self,
        tag: CommandTag,
        branch: impl Fn(&mut C, TypedMessage) -> O + Send + Sync + 'static,
    ) -> Result<Self, DispatchError> {
        self.register(tag, branch)?;
        Ok(self)
    }

    /// Absorbs the branches of `other`. Tags present in both are kept from
    /// `self` and recorded as duplicates, which fails validation.
    pub fn merge(&mut self, other: BranchTable<C, O>) {
        for (tag, branch) in other.branches {
            match self.branches.entry(tag) {
                Entry::Occupied(e) => self.duplicates.push(e.key().clone()),
                Entry::Vacant(e) => {
                    e.insert(branch);
                }
            }
        }
        self.capability.extend(other.capability);
    }

    pub fn validate(&self) -> ValidationReport {
        let mut duplicates = self.duplicates.clone();
        duplicates.sort();
        duplicates.dedup();
        let out_of_capability: Vec<_> = self
            .branches
            .keys()
            .filter(|t| !self.capability.contains(*t))
            .cloned()
            .collect();
        let uncovered: Vec<_> = self
            .capability
            .iter()
            .filter(|t| !self.branches.contains_key(*t))
            .cloned()
            .collect();
        ValidationReport {
            ok: duplicates.is_empty() && out_of_capability.is_empty(),
            duplicates,
            out_of_capability,
            uncovered,
        }
    }

    /// Returns the table if it validates.
    pub fn checked(self) -> Result<Self, DispatchError> {
        let report = self.validate();
        if report.ok {
            Ok(self)
        } else {
            Err(DispatchError::Invalid(report))
        }
    }

    /// Runs exactly one arm: the branch registered for the message's tag,
    /// or the fallback.
    pub fn dispatch(&self, ctx: &mut C, msg: TypedMessage) -> O {
        self.dispatch_traced(ctx, msg).1
    }

    pub fn dispatch_traced(&self, ctx: &mut C, msg: TypedMessage) -> (Arm, O) {
        let tag = msg.tag();
        match self.branches.get(&tag) {
            Some(branch) => (Arm::Branch(tag), branch(ctx, msg)),
            None => (Arm::Fallback, (self.fallback)(ctx, msg)),
        }
    }

    pub fn arm_for(&self, tag: &CommandTag) -> Arm {
        if self.branches.contains_key(tag) {
            Arm::Branch(tag.clone())
        } else {
            Arm::Fallback
        }
    }

    pub fn registered(&self) -> impl Iterator<Item = &CommandTag> {
        self.branches.keys()
    }

    pub fn capability(&self) -> &BTreeSet<CommandTag> {
        &self.capability
    }
}

impl<C, O> fmt::Debug for BranchTable<C, O> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BranchTable")
            .field("branches", &self.branches.keys().collect::<Vec<_>>())
            .field("capability", &self.capability)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{client_to_server_tags, server_to_client_tags, Message};

    type Log = Vec<&'static str>;

    fn table() -> BranchTable<Log, ()> {
        BranchTable::new(client_to_server_tags(), |log: &mut Log, _| log.push("fallback"))
    }

    #[test]
    fn register_distinct_tags() {
        let mut t = table();
        t.register(CommandTag::Ping, |log: &mut Log, _| log.push("ping"))
            .unwrap();
        t.register(CommandTag::Privmsg, |log: &mut Log, _| log.push("privmsg"))
            .unwrap();
    }

    #[test]
    fn duplicate_is_rejected() {
        let mut t = table();
        t.register(CommandTag::Ping, |_: &mut Log, _| ()).unwrap();
        assert_eq!(
            t.register(CommandTag::Ping, |_: &mut Log, _| ()),
            Err(DispatchError::DuplicateBranch(CommandTag::Ping))
        );
    }

    #[test]
    fn full_table_has_nothing_uncovered() {
        let mut t = table();
        for tag in client_to_server_tags() {
            t.register(tag, |_: &mut Log, _| ()).unwrap();
        }
        let report = t.validate();
        assert!(report.ok);
        assert!(report.uncovered.is_empty());
    }

    #[test]
    fn missing_quit_is_advisory() {
        let mut t = table();
        for tag in client_to_server_tags().into_iter().filter(|t| *t != CommandTag::Quit) {
            t.register(tag, |_: &mut Log, _| ()).unwrap();
        }
        let report = t.validate();
        assert!(report.ok);
        assert_eq!(report.uncovered, vec![CommandTag::Quit]);
    }

    #[test]
    fn out_of_capability_branch_fails_validation() {
        let mut t = table();
        t.register(CommandTag::RplWelcome, |_: &mut Log, _| ()).unwrap();
        let report = t.validate();
        assert!(!report.ok);
        assert_eq!(report.out_of_capability, vec![CommandTag::RplWelcome]);
        assert!(matches!(t.checked(), Err(DispatchError::Invalid(_))));
    }

    #[test]
    fn merge_records_duplicates() {
        let mut a = table();
        a.register(CommandTag::Ping, |_: &mut Log, _| ()).unwrap();
        let mut b = table();
        b.register(CommandTag::Ping, |_: &mut Log, _| ()).unwrap();
        b.register(CommandTag::Pong, |_: &mut Log, _| ()).unwrap();
        a.merge(b);
        let report = a.validate();
        assert!(!report.ok);
        assert_eq!(report.duplicates, vec![CommandTag::Ping]);
    }

    #[test]
    fn dispatch_runs_exactly_one_arm() {
        let mut t = table();
        t.register(CommandTag::Ping, |log: &mut Log, _| log.push("ping"))
            .unwrap();
        t.register(CommandTag::Privmsg, |log: &mut Log, _| log.push("privmsg"))
            .unwrap();
        let mut log = Vec::new();
        let (arm, ()) = t.dispatch_traced(&mut log, Message::privmsg("#c", "hi").into());
        assert_eq!(arm, Arm::Branch(CommandTag::Privmsg));
        assert_eq!(log, vec!["privmsg"]);

        let unknown = TypedMessage::new(Message::UnknownCmd {
            verb: "FOO".into(),
            params: vec![],
        });
        let (arm, ()) = t.dispatch_traced(&mut log, unknown);
        assert_eq!(arm, Arm::Fallback);
        assert_eq!(log, vec!["privmsg", "fallback"]);
    }

    #[test]
    fn server_to_client_capability_contains_numerics() {
        let caps = server_to_client_tags();
        assert!(caps.contains(&CommandTag::RplWelcome));
        assert!(!caps.contains(&CommandTag::User));
    }
}
