//! Abstract authority model: subjects, map/grant/access rights, the access
//! control matrix, and the static and dynamic security checks.
//!
//! The capability system in [`crate::refmon`] is checked against this model:
//! an access matrix can be derived from capability holdings and every
//! monitor decision must agree with it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::config::{modify_map, AddressSpaceId, ConfigError, ConfigSpace, Configuration};
use crate::net::{AddrRange, Name};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SubjectId(pub u32);

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuthorityError {
    #[error("unknown subject {0}")]
    UnknownSubject(SubjectId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectRef {
    Memory { base: Name, size: u64 },
    AddressSpace(AddressSpaceId),
}

impl ObjectRef {
    /// Whether holding a right on `self` implies the right on `other`.
    pub fn covers(&self, other: &ObjectRef) -> bool {
        match (self, other) {
            (ObjectRef::Memory { base: a, size: sa }, ObjectRef::Memory { base: b, size: sb }) => {
                a.node == b.node
                    && a.addr <= b.addr
                    && u128::from(b.addr) + u128::from(*sb) <= u128::from(a.addr) + u128::from(*sa)
            }
            (ObjectRef::AddressSpace(a), ObjectRef::AddressSpace(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectRef::Memory { base, size } => write!(f, "mem {base}+{size:#x}"),
            ObjectRef::AddressSpace(a) => write!(f, "space {a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Right {
    Access(ObjectRef),
    Map(ObjectRef),
    Grant(Box<Right>),
}

impl Right {
    pub fn grant(inner: Right) -> Right {
        Right::Grant(Box::new(inner))
    }

    /// The object the innermost right refers to.
    pub fn object(&self) -> ObjectRef {
        match self {
            Right::Access(o) | Right::Map(o) => *o,
            Right::Grant(inner) => inner.object(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Right::Grant(inner) => 1 + inner.depth(),
            _ => 0,
        }
    }

    /// Well-typed: map only on address spaces; access only on memory.
    pub fn is_well_typed(&self) -> bool {
        match self {
            Right::Map(o) => matches!(o, ObjectRef::AddressSpace(_)),
            Right::Access(_) => true,
            Right::Grant(inner) => inner.is_well_typed(),
        }
    }

    pub fn covers(&self, other: &Right) -> bool {
        match (self, other) {
            (Right::Access(a), Right::Access(b)) | (Right::Map(a), Right::Map(b)) => a.covers(b),
            (Right::Grant(a), Right::Grant(b)) => a.covers(b),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    InstallMapping { object: ObjectRef, into: AddressSpaceId },
    GrantRight { right: Right, to: SubjectId },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessControlMatrix {
    pub subjects: BTreeMap<SubjectId, String>,
    pub entries: BTreeMap<(SubjectId, ObjectRef), BTreeSet<Right>>,
    /// Subjects allowed everything (the monitor itself).
    pub trusted: BTreeSet<SubjectId>,
    /// Let `Access` stand in for `Grant(Access)` when installing mappings.
    pub access_implies_grant: bool,
}

impl AccessControlMatrix {
    pub fn add_subject(&mut self, id: SubjectId, label: impl Into<String>) {
        self.subjects.insert(id, label.into());
    }

    pub fn give(&mut self, subject: SubjectId, right: Right) {
        self.entries.entry((subject, right.object())).or_default().insert(right);
    }

    pub fn rights_of(&self, subject: SubjectId) -> impl Iterator<Item = &Right> {
        self.entries
            .iter()
            .filter(move |((s, _), _)| *s == subject)
            .flat_map(|(_, rights)| rights.iter())
    }

    pub fn holds(&self, subject: SubjectId, wanted: &Right) -> bool {
        self.rights_of(subject).any(|r| r.covers(wanted))
    }

    /// Union of two matrices.
    pub fn merge(&mut self, other: &AccessControlMatrix) {
        for (id, label) in &other.subjects {
            self.subjects.entry(*id).or_insert_with(|| label.clone());
        }
        for (key, rights) in &other.entries {
            self.entries.entry(*key).or_default().extend(rights.iter().cloned());
        }
        self.trusted.extend(other.trusted.iter().copied());
    }

    /// A space nobody may insert anywhere (top-level virtual space).
    pub fn is_virtual(&self, asid: AddressSpaceId) -> bool {
        let obj = ObjectRef::AddressSpace(asid);
        !self.entries.values().flatten().any(|r| matches!(r, Right::Grant(_)) && r.object() == obj)
    }

    /// A space nobody may change (physical space).
    pub fn is_physical(&self, asid: AddressSpaceId) -> bool {
        let obj = ObjectRef::AddressSpace(asid);
        !self.entries.values().flatten().any(|r| *r == Right::Map(obj))
    }
}

pub fn acm_allows(
    acm: &AccessControlMatrix,
    subject: SubjectId,
    action: &Action,
) -> Result<bool, AuthorityError> {
    if !acm.subjects.contains_key(&subject) {
        return Err(AuthorityError::UnknownSubject(subject));
    }
    if acm.trusted.contains(&subject) {
        return Ok(true);
    }
    Ok(match action {
        Action::InstallMapping { object, into } => {
            let grant = acm.holds(subject, &Right::grant(Right::Access(*object)))
                || (acm.access_implies_grant && acm.holds(subject, &Right::Access(*object)));
            grant && acm.holds(subject, &Right::Map(ObjectRef::AddressSpace(*into)))
        }
        Action::GrantRight { right, to } => {
            if !acm.subjects.contains_key(to) {
                return Err(AuthorityError::UnknownSubject(*to));
            }
            acm.holds(subject, &Right::grant(right.clone()))
        }
    })
}

/// Provenance of one installed translate entry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MappingRecord {
    pub subject: SubjectId,
    pub object: ObjectRef,
    pub into: AddressSpaceId,
    /// Source range of the entry in `into`. Equals the object size except for
    /// fixed-size register slots, which may be larger.
    pub at: AddrRange,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct World {
    pub cfg: Configuration,
    pub records: Vec<MappingRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SecurityViolation {
    Unauthorized(MappingRecord),
    UnrecordedEntry { asid: AddressSpaceId, src: AddrRange },
    DuplicateRecord { asid: AddressSpaceId, src: AddrRange },
    StaleRecord(MappingRecord),
}

impl fmt::Display for SecurityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SecurityViolation::Unauthorized(r) => write!(
                f,
                "subject {} installed {} into space {} at {} without authority",
                r.subject, r.object, r.into, r.at
            ),
            SecurityViolation::UnrecordedEntry { asid, src } => {
                write!(f, "space {asid} entry {src} has no mapping record")
            }
            SecurityViolation::DuplicateRecord { asid, src } => {
                write!(f, "space {asid} entry {src} has several mapping records")
            }
            SecurityViolation::StaleRecord(r) => {
                write!(f, "record for space {} at {} has no entry", r.into, r.at)
            }
        }
    }
}

/// A world is statically secure when every installed entry has exactly one
/// record and every record's subject was allowed to install it.
pub fn check_static_secure(world: &World, acm: &AccessControlMatrix) -> Vec<SecurityViolation> {
    let mut out = Vec::new();
    for record in &world.records {
        let action = Action::InstallMapping { object: record.object, into: record.into };
        if !acm_allows(acm, record.subject, &action).unwrap_or(false) {
            out.push(SecurityViolation::Unauthorized(record.clone()));
        }
        let live = world
            .cfg
            .node(record.into)
            .is_some_and(|n| n.translate.iter().any(|e| e.src == record.at));
        if !live {
            out.push(SecurityViolation::StaleRecord(record.clone()));
        }
    }
    for (asid, entry) in world.cfg.entries() {
        let n = world.records.iter().filter(|r| r.into == asid && r.at == entry.src).count();
        match n {
            0 => out.push(SecurityViolation::UnrecordedEntry { asid, src: entry.src }),
            1 => {}
            _ => out.push(SecurityViolation::DuplicateRecord { asid, src: entry.src }),
        }
    }
    out
}

/// One abstract state transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transition {
    Install { record: MappingRecord, dest: Name },
    Grant { from: SubjectId, right: Right, to: SubjectId },
}

pub fn check_transition_secure(
    acm: &AccessControlMatrix,
    _world: &World,
    transition: &Transition,
) -> Result<bool, AuthorityError> {
    match transition {
        Transition::Install { record, .. } => acm_allows(
            acm,
            record.subject,
            &Action::InstallMapping { object: record.object, into: record.into },
        ),
        Transition::Grant { from, right, to } => {
            acm_allows(acm, *from, &Action::GrantRight { right: right.clone(), to: *to })
        }
    }
}

/// Applies a transition without checking authority.
pub fn apply_transition(
    cs: &ConfigSpace,
    acm: &AccessControlMatrix,
    world: &World,
    transition: &Transition,
) -> Result<(AccessControlMatrix, World), ConfigError> {
    match transition {
        Transition::Install { record, dest } => {
            let cfg = modify_map(cs, &world.cfg, record.into, record.at, *dest)?;
            let mut records: Vec<_> = world
                .records
                .iter()
                .filter(|r| !(r.into == record.into && record.at.contains_range(&r.at)))
                .cloned()
                .collect();
            records.push(record.clone());
            Ok((acm.clone(), World { cfg, records }))
        }
        Transition::Grant { right, to, .. } => {
            let mut next = acm.clone();
            next.give(*to, right.clone());
            Ok((next, world.clone()))
        }
    }
}
