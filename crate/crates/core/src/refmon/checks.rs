use std::fmt;

use crate::authority::{check_static_secure, SecurityViolation, World};
use crate::config::{in_config_space, AddressSpaceId};
use crate::net::{resolve_range, AddrRange, Name};

use super::{CapType, KernelState, MdbQuery};

/// Which invariants [`KernelState::check`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckSet {
    pub never_accessible: bool,
    pub config_space: bool,
    pub coverage: bool,
    pub static_security: bool,
    pub handles: bool,
}

impl CheckSet {
    pub const ALL: CheckSet = CheckSet {
        never_accessible: true,
        config_space: true,
        coverage: true,
        static_security: true,
        handles: true,
    };
    pub const NONE: CheckSet = CheckSet {
        never_accessible: false,
        config_space: false,
        coverage: false,
        static_security: false,
        handles: false,
    };
}

impl Default for CheckSet {
    fn default() -> Self {
        CheckSet::ALL
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InvariantViolation {
    /// A configured entry reaches bytes of a translation structure.
    TableReachable { space: AddressSpaceId, src: AddrRange, table: Name },
    OutsideConfigSpace(AddressSpaceId),
    UncoveredMemory(Name),
    Security(SecurityViolation),
    DanglingHandle(String),
}

impl fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvariantViolation::TableReachable { space, src, table } => {
                write!(f, "space {space} entry {src} reaches translation structure at {table}")
            }
            InvariantViolation::OutsideConfigSpace(a) => {
                write!(f, "space {a} is outside its configuration space")
            }
            InvariantViolation::UncoveredMemory(n) => write!(f, "no capability covers {n}"),
            InvariantViolation::Security(v) => write!(f, "{v}"),
            InvariantViolation::DanglingHandle(s) => write!(f, "{s}"),
        }
    }
}

impl InvariantViolation {
    pub fn kind(&self) -> &'static str {
        match self {
            InvariantViolation::TableReachable { .. } => "NeverAccessible",
            InvariantViolation::OutsideConfigSpace(_) => "ConfigSpace",
            InvariantViolation::UncoveredMemory(_) => "Coverage",
            InvariantViolation::Security(_) => "StaticSecurity",
            InvariantViolation::DanglingHandle(_) => "Handles",
        }
    }
}

impl KernelState {
    pub fn check(&self, set: CheckSet) -> Vec<InvariantViolation> {
        let mut out = Vec::new();
        if set.never_accessible {
            self.check_never_accessible(&mut out);
        }
        if set.config_space {
            for (&asid, node) in &self.cfg.current {
                if !in_config_space(&self.cs, asid, node).unwrap_or(false) {
                    out.push(InvariantViolation::OutsideConfigSpace(asid));
                }
            }
        }
        if set.coverage {
            self.check_coverage(&mut out);
        }
        if set.static_security {
            let world = World { cfg: self.cfg.clone(), records: self.records() };
            out.extend(
                check_static_secure(&world, &self.history)
                    .into_iter()
                    .map(InvariantViolation::Security),
            );
        }
        if set.handles {
            self.check_handles(&mut out);
        }
        out
    }

    fn check_never_accessible(&self, out: &mut Vec<InvariantViolation>) {
        let net = self.materialized();
        let tables: Vec<_> =
            self.mdb.iter().filter(|c| matches!(c.ctype, CapType::TStructure { .. })).collect();
        if tables.is_empty() {
            return;
        }
        for (space, entry) in self.cfg.entries() {
            let Ok(res) = resolve_range(&net, Name::new(space, entry.src.base()), entry.src.size())
            else {
                continue;
            };
            for (_, name, len) in res.accepted() {
                if let Some(t) = tables.iter().find(|t| {
                    t.base.node == name.node
                        && t.base.addr < name.addr + len
                        && name.addr < t.base.addr + t.size
                }) {
                    out.push(InvariantViolation::TableReachable {
                        space,
                        src: entry.src,
                        table: t.base,
                    });
                }
            }
        }
    }

    fn check_coverage(&self, out: &mut Vec<InvariantViolation>) {
        for &(base, size) in &self.memory {
            let mut caps = self.mdb.query(MdbQuery::Overlap(base, size)).unwrap_or_default();
            caps.sort_by_key(|c| c.base.addr);
            let mut cursor = base.addr;
            let end = base.addr + size;
            for c in caps {
                if c.base.addr > cursor {
                    break;
                }
                cursor = cursor.max(c.base.addr + c.size);
                if cursor >= end {
                    break;
                }
            }
            if cursor < end {
                out.push(InvariantViolation::UncoveredMemory(Name::new(base.node, cursor)));
            }
        }
    }

    fn check_handles(&self, out: &mut Vec<InvariantViolation>) {
        let mut held = 0usize;
        for d in self.dispatchers.values() {
            for (h, c) in d.handles() {
                held += 1;
                if c.owner != d.id || !self.mdb.contains(c) {
                    out.push(InvariantViolation::DanglingHandle(format!(
                        "subject {} handle {h} names a capability outside the database",
                        d.id
                    )));
                }
            }
        }
        if held != self.mdb.len() {
            out.push(InvariantViolation::DanglingHandle(format!(
                "{} capabilities in the database but {held} handles",
                self.mdb.len()
            )));
        }
    }
}
