//! The reference monitor: kernel state, capability operations, and the
//! per-state invariant checks.
//!
//! Every operation is a pure transition: it takes `&KernelState` and returns
//! a new state or an error, leaving the input untouched. Subjects name
//! capabilities only through per-dispatcher [`Handle`]s.

pub mod cap;
mod checks;
pub mod mdb;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

pub use cap::{
    canonical_cmp, is_descendant, type_le, CapId, CapType, Capability, MappingKind, PackedName,
    Payload, Rights, ASID_NODE, CAP_BYTES,
};
pub use checks::{CheckSet, InvariantViolation};
pub use mdb::{Mdb, MdbError, MdbQuery};

use crate::authority::{AccessControlMatrix, MappingRecord, ObjectRef, Right, SubjectId};
use crate::config::{
    clear_map, materialize, modify_map, AddressSpaceId, ConfigConstraint, ConfigError, ConfigSpace,
    Configuration,
};
use crate::net::{preimage, resolve_range, AddrRange, DecodingNet, Name, NetError, NodeId, NodeSpec};

/// The monitor's own subject. Trusted; issues raw configuration changes.
pub const MONITOR: SubjectId = SubjectId(0);

/// Default page size for address spaces derived from translation tables.
pub const PAGE_SIZE: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Handle(pub u32);

impl fmt::Display for Handle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MonitorError {
    #[error("unknown subject {0}")]
    UnknownSubject(SubjectId),
    #[error("subject {subject} holds no capability at {handle}")]
    NotOwner { subject: SubjectId, handle: Handle },
    #[error("cannot retype {from} into {to}")]
    IllegalRetype { from: CapType, to: CapType },
    #[error("range outside the source capability")]
    RangeError,
    #[error("range conflicts with an existing capability or entry")]
    Conflict,
    #[error("an address space was already derived from this table")]
    AlreadyDerived,
    #[error("no free ASID")]
    NoAsidAvailable,
    #[error("ASID range exhausted")]
    Exhausted,
    #[error("subject lacks the {0} right")]
    RightsViolation(&'static str),
    #[error("configuration constraint violated in space {0}")]
    ConstraintViolation(AddressSpaceId),
    #[error("translation structures can never be made accessible")]
    NeverAccessible,
    #[error("objects of type {0} cannot be mapped")]
    NotMappable(CapType),
    #[error("table level mismatch")]
    LevelMismatch,
    #[error("capability is not a mapping")]
    NotAMapping,
    #[error("capability is not in the mapping database")]
    NotInMdb,
    #[error("space {0} is not an active address space")]
    UnknownAddressSpace(AddressSpaceId),
    #[error("mapping target does not reach exactly the object")]
    InvalidVia,
    #[error("deleting this capability would leave memory without a capability")]
    CoverageLoss,
    #[error(transparent)]
    Net(#[from] NetError),
}

impl MonitorError {
    /// Variant name, for terse reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            MonitorError::UnknownSubject(_) => "UnknownSubject",
            MonitorError::NotOwner { .. } => "NotOwner",
            MonitorError::IllegalRetype { .. } => "IllegalRetype",
            MonitorError::RangeError => "RangeError",
            MonitorError::Conflict => "Conflict",
            MonitorError::AlreadyDerived => "AlreadyDerived",
            MonitorError::NoAsidAvailable => "NoAsidAvailable",
            MonitorError::Exhausted => "Exhausted",
            MonitorError::RightsViolation(_) => "RightsViolation",
            MonitorError::ConstraintViolation(_) => "ConstraintViolation",
            MonitorError::NeverAccessible => "NeverAccessible",
            MonitorError::NotMappable(_) => "NotMappable",
            MonitorError::LevelMismatch => "LevelMismatch",
            MonitorError::NotAMapping => "NotAMapping",
            MonitorError::NotInMdb => "NotInMdb",
            MonitorError::UnknownAddressSpace(_) => "UnknownAddressSpace",
            MonitorError::InvalidVia => "InvalidVia",
            MonitorError::CoverageLoss => "CoverageLoss",
            MonitorError::Net(_) => "NetError",
        }
    }
}

impl From<ConfigError> for MonitorError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::UnknownAddressSpace(a) => MonitorError::UnknownAddressSpace(a),
            ConfigError::ConstraintViolation(a) => MonitorError::ConstraintViolation(a),
            ConfigError::OverlapConflict { .. } | ConfigError::NoSuchEntry { .. } => {
                MonitorError::Conflict
            }
        }
    }
}

impl From<MdbError> for MonitorError {
    fn from(_: MdbError) -> Self {
        MonitorError::NotInMdb
    }
}

/// A subject together with its capability space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dispatcher {
    pub id: SubjectId,
    pub label: String,
    cspace: BTreeMap<Handle, Capability>,
    by_cap: BTreeMap<CapId, Handle>,
    next_handle: u32,
}

impl Dispatcher {
    fn new(id: SubjectId, label: String) -> Self {
        Dispatcher { id, label, cspace: BTreeMap::new(), by_cap: BTreeMap::new(), next_handle: 0 }
    }

    pub fn get(&self, h: Handle) -> Option<&Capability> {
        self.cspace.get(&h)
    }

    pub fn handles(&self) -> impl Iterator<Item = (Handle, &Capability)> {
        self.cspace.iter().map(|(h, c)| (*h, c))
    }

    pub fn handle_of(&self, id: CapId) -> Option<Handle> {
        self.by_cap.get(&id).copied()
    }

    fn add(&mut self, cap: Capability) -> Handle {
        let h = Handle(self.next_handle);
        self.next_handle += 1;
        self.cspace.insert(h, cap);
        self.by_cap.insert(cap.id, h);
        h
    }

    fn drop_cap(&mut self, id: CapId) {
        if let Some(h) = self.by_cap.remove(&id) {
            self.cspace.remove(&h);
        }
    }
}

/// Which address space a map operation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TableRef {
    /// A held `AddressSpace` or `TStructure` capability.
    Handle(Handle),
    /// An active address space, found through the subject's capabilities.
    Space(AddressSpaceId),
}

/// Where the new entry points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Via {
    /// The object's canonical base name.
    #[default]
    Canonical,
    /// An explicit name that must reach the object.
    Name(Name),
    /// The object's base as seen from the given node.
    Local(NodeId),
}

#[derive(Debug, Clone)]
pub struct KernelState {
    pub dispatchers: BTreeMap<SubjectId, Dispatcher>,
    pub mdb: Mdb,
    /// Active address spaces.
    pub spaces: BTreeSet<AddressSpaceId>,
    /// Static net, including nodes of derived address spaces.
    pub net: DecodingNet,
    pub cfg: Configuration,
    pub cs: ConfigSpace,
    /// Declared memory regions; every byte keeps at least one capability.
    pub memory: Vec<(Name, u64)>,
    /// Address spaces derived from translation tables.
    pub derived: BTreeSet<AddressSpaceId>,
    /// Entries installed by the monitor itself.
    pub raw_records: Vec<MappingRecord>,
    /// Every right any subject has held so far.
    pub history: AccessControlMatrix,
    next_cap: u64,
}

impl PartialEq for KernelState {
    fn eq(&self, other: &Self) -> bool {
        self.dispatchers == other.dispatchers
            && self.mdb.iter().eq(other.mdb.iter())
            && self.spaces == other.spaces
            && self.net == other.net
            && self.cfg == other.cfg
            && self.cs == other.cs
            && self.memory == other.memory
            && self.derived == other.derived
            && self.raw_records == other.raw_records
            && self.history == other.history
            && self.next_cap == other.next_cap
    }
}

impl Eq for KernelState {}

/// A capability to install during boot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitialCap {
    pub ctype: CapType,
    pub base: Name,
    pub size: u64,
    pub rights: Rights,
    pub owner: SubjectId,
    pub payload: Payload,
}

impl KernelState {
    /// An empty monitor over `net`; dynamic spaces in `cs` become active.
    pub fn new(net: DecodingNet, cs: ConfigSpace) -> Self {
        let mut st = KernelState {
            dispatchers: BTreeMap::new(),
            mdb: Mdb::new(),
            spaces: cs.constraints.keys().copied().collect(),
            net,
            cfg: Configuration::default(),
            cs,
            memory: Vec::new(),
            derived: BTreeSet::new(),
            raw_records: Vec::new(),
            history: AccessControlMatrix::default(),
            next_cap: 0,
        };
        st.add_subject(MONITOR, "monitor");
        st.history.trusted.insert(MONITOR);
        st
    }

    pub fn add_subject(&mut self, id: SubjectId, label: impl Into<String>) {
        let label = label.into();
        self.history.add_subject(id, label.clone());
        self.dispatchers.entry(id).or_insert_with(|| Dispatcher::new(id, label));
    }

    pub fn declare_memory(&mut self, base: Name, size: u64) {
        self.memory.push((base, size));
    }

    /// Installs a boot capability, bypassing derivation rules.
    pub fn install_initial(&mut self, init: InitialCap) -> Result<Handle, MonitorError> {
        Ok(self.install_initial_batch(&[init])?[0])
    }

    /// Installs boot capabilities in order. Nothing is installed on error.
    pub fn install_initial_batch(&mut self, inits: &[InitialCap]) -> Result<Vec<Handle>, MonitorError> {
        for init in inits {
            if !self.dispatchers.contains_key(&init.owner) {
                return Err(MonitorError::UnknownSubject(init.owner));
            }
            let fits = init.base.addr.checked_add(init.size).is_some_and(|e| e <= crate::net::ADDR_LIMIT);
            if init.size == 0 || !fits {
                return Err(MonitorError::RangeError);
            }
        }
        let handles = inits
            .iter()
            .map(|i| self.insert_cap(i.ctype, i.base, i.size, i.rights, i.owner, i.payload))
            .collect();
        self.record_history();
        Ok(handles)
    }

    pub fn dispatcher(&self, s: SubjectId) -> Result<&Dispatcher, MonitorError> {
        self.dispatchers.get(&s).ok_or(MonitorError::UnknownSubject(s))
    }

    pub fn lookup(&self, s: SubjectId, h: Handle) -> Result<Capability, MonitorError> {
        self.dispatcher(s)?
            .get(h)
            .copied()
            .ok_or(MonitorError::NotOwner { subject: s, handle: h })
    }

    pub fn caps(&self) -> impl Iterator<Item = &Capability> {
        self.mdb.iter()
    }

    /// The decoding net with every active configuration applied.
    pub fn materialized(&self) -> DecodingNet {
        materialize(&self.net, &self.cfg).expect("configured spaces are present in the net")
    }

    fn insert_cap(
        &mut self,
        ctype: CapType,
        base: Name,
        size: u64,
        rights: Rights,
        owner: SubjectId,
        payload: Payload,
    ) -> Handle {
        let cap = Capability { id: CapId(self.next_cap), ctype, base, size, rights, owner, payload };
        self.next_cap += 1;
        self.mdb.insert(cap);
        self.dispatchers.get_mut(&owner).expect("owner exists").add(cap)
    }

    fn record_history(&mut self) {
        let now = self.derive_acm();
        self.history.merge(&now);
    }

    fn copies_of(&self, c: &Capability) -> Vec<Capability> {
        self.mdb
            .query(MdbQuery::Inner(c.base, c.size))
            .unwrap_or_default()
            .into_iter()
            .filter(|x| x.id != c.id && x.is_copy_of(c))
            .collect()
    }

    fn derived_space_of(&self, table: &Capability) -> Option<NodeId> {
        self.mdb
            .query(MdbQuery::Inner(table.base, table.size))
            .ok()?
            .into_iter()
            .find(|c| c.ctype == CapType::AddressSpace && c.base == table.base && c.size == table.size)
            .and_then(|c| c.asid())
    }

    /// Translation table backing a derived space.
    fn table_of_space(&self, asid: NodeId) -> Option<Capability> {
        let as_cap = self.mdb.iter().find(|c| c.asid() == Some(asid))?;
        self.mdb
            .query(MdbQuery::Ancestors(*as_cap))
            .ok()?
            .into_iter()
            .find(|c| matches!(c.ctype, CapType::TStructure { .. }) && c.base == as_cap.base && c.size == as_cap.size)
    }

    /// Removes a capability and applies its side effects.
    fn delete_with_effects(&mut self, cap: &Capability) -> Result<(), MonitorError> {
        if !self.mdb.remove(cap) {
            return Ok(());
        }
        if let Some(d) = self.dispatchers.get_mut(&cap.owner) {
            d.drop_cap(cap.id);
        }
        match cap.payload {
            Payload::Mapping { space, slots, .. } => {
                let still_live = self.copies_of(cap).iter().any(|c| c.payload == cap.payload);
                let has_entry = self
                    .cfg
                    .node(space)
                    .is_some_and(|n| n.translate.iter().any(|e| e.src == slots));
                if !still_live && has_entry {
                    self.cfg = clear_map(&self.cs, &self.cfg, space, slots)?;
                }
            }
            Payload::AddressSpace { asid } => {
                if self.copies_of(cap).is_empty() {
                    self.teardown_space(asid)?;
                }
            }
            Payload::None => {}
        }
        Ok(())
    }

    /// Deletes every segment within `asid` and every table entry pointing
    /// into it, then deactivates the space.
    fn teardown_space(&mut self, asid: NodeId) -> Result<(), MonitorError> {
        let doomed: Vec<Capability> = self
            .mdb
            .iter()
            .filter(|c| match c.payload {
                Payload::Mapping { space, kind, dest, .. } => {
                    space == asid || (kind == MappingKind::Table && dest.node == asid)
                }
                _ => false,
            })
            .copied()
            .collect();
        for c in doomed {
            self.delete_with_effects(&c)?;
        }
        self.cfg.current.remove(&asid);
        self.spaces.remove(&asid);
        if self.derived.remove(&asid) {
            self.net.nodes.remove(&asid);
            self.cs.constraints.remove(&asid);
        }
        Ok(())
    }

    fn revoke_cap(&mut self, cap: &Capability) -> Result<(), MonitorError> {
        let mut descendants = self.mdb.query(MdbQuery::Descendants(*cap))?;
        descendants.reverse();
        for d in descendants {
            self.delete_with_effects(&d)?;
        }
        Ok(())
    }

    /// Subject holds a map-right capability for `asid`.
    fn holds_map(&self, s: SubjectId, asid: NodeId) -> bool {
        self.dispatchers.get(&s).is_some_and(|d| {
            d.cspace.values().any(|c| {
                c.ctype == CapType::AddressSpace && c.asid() == Some(asid) && c.rights.contains(Rights::MAP)
            })
        })
    }

    /// Subject holds a frame capability with grant covering the range.
    fn holds_grant(&self, s: SubjectId, base: Name, size: u64) -> bool {
        self.dispatchers.get(&s).is_some_and(|d| {
            d.cspace.values().any(|c| {
                c.ctype == CapType::Frame && c.rights.contains(Rights::GRANT) && c.covers(base, size)
            })
        })
    }

    /// Access matrix read off current capability holdings.
    pub fn derive_acm(&self) -> AccessControlMatrix {
        let mut acm = AccessControlMatrix::default();
        acm.trusted.insert(MONITOR);
        for (id, d) in &self.dispatchers {
            acm.add_subject(*id, d.label.clone());
            for c in d.cspace.values() {
                let mem = ObjectRef::Memory { base: c.base, size: c.size };
                match c.ctype {
                    CapType::Frame => {
                        if c.rights.contains(Rights::ACCESS) {
                            acm.give(*id, Right::Access(mem));
                        }
                        if c.rights.contains(Rights::GRANT) {
                            acm.give(*id, Right::grant(Right::Access(mem)));
                        }
                    }
                    CapType::AddressSpace => {
                        if let (Some(asid), true) = (c.asid(), c.rights.contains(Rights::MAP)) {
                            acm.give(*id, Right::Map(ObjectRef::AddressSpace(asid)));
                        }
                    }
                    CapType::TStructure { .. } => {
                        if let Some(asid) = self.derived_space_of(c) {
                            acm.give(*id, Right::grant(Right::Access(ObjectRef::AddressSpace(asid))));
                        }
                    }
                    _ => {}
                }
            }
        }
        acm
    }

    /// Provenance of every installed entry, one record per entry.
    pub fn records(&self) -> Vec<MappingRecord> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for c in self.mdb.iter() {
            if let Payload::Mapping { kind, space, slots, dest, installer, .. } = c.payload {
                if seen.insert((space, slots)) {
                    let object = match kind {
                        MappingKind::Memory => ObjectRef::Memory { base: c.base, size: c.size },
                        MappingKind::Table => ObjectRef::AddressSpace(dest.node),
                    };
                    out.push(MappingRecord { subject: installer, object, into: space, at: slots });
                }
            }
        }
        out.extend(self.raw_records.iter().cloned());
        out
    }

    // ----- operations -----

    pub fn retype(
        &self,
        subj: SubjectId,
        src: Handle,
        new_type: CapType,
        offset: u64,
        size: u64,
    ) -> Result<(KernelState, Handle), MonitorError> {
        let s = self.lookup(subj, src)?;
        let legal_target = matches!(new_type, CapType::Ram | CapType::Frame)
            || matches!(new_type, CapType::TStructure { level } if level >= 1);
        let legal_source = matches!(s.ctype, CapType::Ram | CapType::Frame | CapType::TStructure { .. });
        if !legal_target || !legal_source || !type_le(s.ctype, new_type) {
            return Err(MonitorError::IllegalRetype { from: s.ctype, to: new_type });
        }
        let end = offset.checked_add(size).ok_or(MonitorError::RangeError)?;
        if size == 0 || end > s.size {
            return Err(MonitorError::RangeError);
        }
        if new_type == s.ctype && size == s.size {
            return Err(MonitorError::IllegalRetype { from: s.ctype, to: new_type });
        }
        let base = s.base.offset(offset);
        let conflict = self.mdb.query(MdbQuery::Overlap(base, size))?.into_iter().any(|c| {
            !(c.covers(s.base, s.size) && type_le(c.ctype, s.ctype))
        });
        if conflict {
            return Err(MonitorError::Conflict);
        }
        let rights = match new_type {
            CapType::Ram | CapType::Frame => s.rights.intersect(Rights::ACCESS.union(Rights::GRANT)),
            _ => Rights::NONE,
        };
        let mut next = self.clone();
        let h = next.insert_cap(new_type, base, size, rights, subj, Payload::None);
        next.record_history();
        Ok((next, h))
    }

    pub fn derive_address_space(
        &self,
        subj: SubjectId,
        table: Handle,
    ) -> Result<(KernelState, Handle), MonitorError> {
        let ts = self.lookup(subj, table)?;
        if !matches!(ts.ctype, CapType::TStructure { .. }) {
            return Err(MonitorError::IllegalRetype { from: ts.ctype, to: CapType::AddressSpace });
        }
        if self.derived_space_of(&ts).is_some() {
            return Err(MonitorError::AlreadyDerived);
        }
        let asid = self.free_asid(subj).ok_or(MonitorError::NoAsidAvailable)?;
        let mut next = self.clone();
        next.net.insert(asid, NodeSpec::default());
        next.cs
            .constraints
            .insert(asid, ConfigConstraint::GranularityContiguous { grain: PAGE_SIZE });
        next.spaces.insert(asid);
        next.derived.insert(asid);
        let h = next.insert_cap(
            CapType::AddressSpace,
            ts.base,
            ts.size,
            Rights::MAP,
            subj,
            Payload::AddressSpace { asid },
        );
        next.record_history();
        Ok((next, h))
    }

    fn asid_in_use(&self, id: u16) -> bool {
        NodeId(id) == ASID_NODE || self.net.contains(NodeId(id)) || self.spaces.contains(&NodeId(id))
    }

    fn free_asid(&self, subj: SubjectId) -> Option<NodeId> {
        let d = self.dispatchers.get(&subj)?;
        for range in d.cspace.values().filter(|c| c.ctype == CapType::AsidRange) {
            let children = self.mdb.query(MdbQuery::Descendants(*range)).ok()?;
            let first = range.base.addr;
            for id in first..first + range.size {
                let taken_by_child = children.iter().any(|c| c.covers(Name::new(ASID_NODE, id), 1));
                if id <= u64::from(u16::MAX) && !taken_by_child && !self.asid_in_use(id as u16) {
                    return Some(NodeId(id as u16));
                }
            }
        }
        None
    }

    pub fn asid_retype(
        &self,
        subj: SubjectId,
        range: Handle,
        count: u64,
    ) -> Result<(KernelState, Handle), MonitorError> {
        let r = self.lookup(subj, range)?;
        if r.ctype != CapType::AsidRange {
            return Err(MonitorError::IllegalRetype { from: r.ctype, to: CapType::AsidRange });
        }
        if count == 0 || count >= r.size {
            return Err(MonitorError::RangeError);
        }
        let children = self.mdb.query(MdbQuery::Descendants(r))?;
        let free = |id: u64| {
            !children.iter().any(|c| c.covers(Name::new(ASID_NODE, id), 1))
                && !self.asid_in_use(id as u16)
        };
        let first = r.base.addr;
        let end = first + r.size;
        let mut start = first;
        while start + count <= end {
            match (start..start + count).find(|&id| !free(id)) {
                Some(busy) => start = busy + 1,
                None => {
                    let mut next = self.clone();
                    let h = next.insert_cap(
                        CapType::AsidRange,
                        Name::new(ASID_NODE, start),
                        count,
                        Rights::NONE,
                        subj,
                        Payload::None,
                    );
                    return Ok((next, h));
                }
            }
        }
        Err(MonitorError::Exhausted)
    }

    /// Installs `object` into an address space at `at`.
    pub fn cap_map(
        &self,
        subj: SubjectId,
        table: TableRef,
        object: Handle,
        at: AddrRange,
        via: Via,
    ) -> Result<(KernelState, Handle), MonitorError> {
        self.dispatcher(subj)?;
        let asid = match table {
            TableRef::Space(a) => a,
            TableRef::Handle(h) => {
                let t = self.lookup(subj, h)?;
                match t.ctype {
                    CapType::AddressSpace => t.asid().expect("address-space payload"),
                    CapType::TStructure { .. } => {
                        self.derived_space_of(&t).ok_or(MonitorError::UnknownAddressSpace(NodeId(0)))?
                    }
                    other => return Err(MonitorError::NotMappable(other)),
                }
            }
        };
        if !self.spaces.contains(&asid) {
            return Err(MonitorError::UnknownAddressSpace(asid));
        }
        let obj = self.lookup(subj, object)?;
        let parent_level = self.table_of_space(asid).map(|t| match t.ctype {
            CapType::TStructure { level } => level,
            _ => unreachable!(),
        });

        let (kind, dest) = match obj.ctype {
            CapType::Frame => {
                if !self.holds_map(subj, asid) {
                    return Err(MonitorError::RightsViolation("map"));
                }
                if !self.holds_grant(subj, obj.base, obj.size) {
                    return Err(MonitorError::RightsViolation("grant"));
                }
                if parent_level.is_some_and(|l| l != 1) {
                    return Err(MonitorError::LevelMismatch);
                }
                let dest = match via {
                    Via::Canonical => obj.base,
                    Via::Name(n) => n,
                    Via::Local(node) => preimage(&self.materialized(), node, obj.base)?
                        .ok_or(MonitorError::InvalidVia)?,
                };
                (MappingKind::Memory, dest)
            }
            CapType::TStructure { level } => {
                let child = self.derived_space_of(&obj).ok_or(MonitorError::NeverAccessible)?;
                let dest = Name::new(child, 0);
                match via {
                    Via::Canonical => {}
                    Via::Name(n) if n == dest => {}
                    Via::Local(n) if n == child => {}
                    _ => return Err(MonitorError::NeverAccessible),
                }
                if !self.holds_map(subj, asid) {
                    return Err(MonitorError::RightsViolation("map"));
                }
                if parent_level != Some(level + 1) {
                    return Err(MonitorError::LevelMismatch);
                }
                (MappingKind::Table, dest)
            }
            other => return Err(MonitorError::NotMappable(other)),
        };

        if kind == MappingKind::Memory {
            self.check_reaches_only(dest, at.size(), &obj)?;
        }
        if self
            .cfg
            .node(asid)
            .is_some_and(|n| n.translate.iter().any(|e| e.src.overlaps(&at)))
        {
            return Err(MonitorError::Conflict);
        }
        let mut next = self.clone();
        next.cfg = modify_map(&next.cs, &next.cfg, asid, at, dest)?;
        let payload = Payload::Mapping {
            kind,
            space: asid,
            table: self.table_of_space(asid).map(|t| t.base),
            slots: at,
            dest,
            installer: subj,
        };
        let h = next.insert_cap(CapType::Mapping, obj.base, obj.size, Rights::NONE, subj, payload);
        next.record_history();
        Ok((next, h))
    }

    /// Every byte reachable from `[dest, dest + len)` lies inside `obj`, and
    /// the first byte reaches the object's base.
    fn check_reaches_only(&self, dest: Name, len: u64, obj: &Capability) -> Result<(), MonitorError> {
        let net = self.materialized();
        if !net.contains(dest.node) {
            return Err(MonitorError::InvalidVia);
        }
        let res = resolve_range(&net, dest, len).map_err(|_| MonitorError::InvalidVia)?;
        let mut reaches_base = false;
        for (offset, name, n) in res.accepted() {
            if !obj.covers(name, n) {
                return Err(MonitorError::InvalidVia);
            }
            reaches_base |= offset == 0 && name == obj.base;
        }
        if reaches_base {
            Ok(())
        } else {
            Err(MonitorError::InvalidVia)
        }
    }

    pub fn cap_unmap(&self, subj: SubjectId, mapping: Handle) -> Result<KernelState, MonitorError> {
        let m = self.lookup(subj, mapping)?;
        if m.ctype != CapType::Mapping {
            return Err(MonitorError::NotAMapping);
        }
        let mut next = self.clone();
        next.delete_with_effects(&m)?;
        Ok(next)
    }

    pub fn cap_copy(
        &self,
        from: SubjectId,
        cap: Handle,
        to: SubjectId,
    ) -> Result<(KernelState, Handle), MonitorError> {
        let c = self.lookup(from, cap)?;
        self.dispatcher(to)?;
        let mut next = self.clone();
        let h = next.insert_cap(c.ctype, c.base, c.size, c.rights, to, c.payload);
        next.record_history();
        Ok((next, h))
    }

    /// Deletes every descendant of the capability; the capability survives.
    pub fn cap_revoke(&self, subj: SubjectId, cap: Handle) -> Result<KernelState, MonitorError> {
        let c = self.lookup(subj, cap)?;
        let mut next = self.clone();
        next.revoke_cap(&c)?;
        Ok(next)
    }

    pub fn cap_delete(&self, subj: SubjectId, cap: Handle) -> Result<KernelState, MonitorError> {
        let c = self.lookup(subj, cap)?;
        let last_copy = self.copies_of(&c).is_empty();
        if last_copy && self.is_sole_cover(&c)? {
            return Err(MonitorError::CoverageLoss);
        }
        let mut next = self.clone();
        if last_copy {
            next.revoke_cap(&c)?;
        }
        next.delete_with_effects(&c)?;
        Ok(next)
    }

    /// `c` covers declared memory that no ancestor covers.
    fn is_sole_cover(&self, c: &Capability) -> Result<bool, MonitorError> {
        let touches_memory = self.memory.iter().any(|(b, s)| {
            b.node == c.base.node && b.addr < c.base.addr + c.size && c.base.addr < b.addr + s
        });
        Ok(touches_memory && self.mdb.query(MdbQuery::Ancestors(*c))?.is_empty())
    }

    /// Monitor-internal configuration change, used for fixed setup.
    pub fn modify_map_raw(
        &self,
        subj: SubjectId,
        space: AddressSpaceId,
        at: AddrRange,
        dest: Name,
    ) -> Result<KernelState, MonitorError> {
        if subj != MONITOR {
            return Err(MonitorError::RightsViolation("monitor"));
        }
        let mut next = self.clone();
        next.cfg = modify_map(&next.cs, &next.cfg, space, at, dest)?;
        next.raw_records.retain(|r| !(r.into == space && at.contains_range(&r.at)));
        next.raw_records.push(MappingRecord {
            subject: MONITOR,
            object: ObjectRef::Memory { base: dest, size: at.size() },
            into: space,
            at,
        });
        Ok(next)
    }
}
