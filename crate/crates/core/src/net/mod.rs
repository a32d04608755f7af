//! Static decoding-net semantics.
//!
//! A [`DecodingNet`] is a directed graph of address spaces. Each node either
//! accepts a local address (the address names real memory or a device
//! register) or translates it into one or more names in other nodes.

mod resolve;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use resolve::{
    decode_step, preimage, resolve, resolve_range, PieceOutcome, RangePiece, RangeResolution, ResolveResult, StepResult,
};

/// Width of a local address in bits.
pub const ADDR_BITS: u32 = 48;
/// One past the largest representable local address.
pub const ADDR_LIMIT: u64 = 1 << ADDR_BITS;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("address {0:#x} exceeds 48 bits")]
    AddressOutOfRange(u64),
    #[error("invalid range base={base:#x} size={size:#x}")]
    InvalidRange { base: u64, size: u64 },
}

/// Local address inside one address space. Always below 2^48.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(u64);

impl Address {
    pub fn new(value: u64) -> Result<Self, NetError> {
        if value < ADDR_LIMIT {
            Ok(Address(value))
        } else {
            Err(NetError::AddressOutOfRange(value))
        }
    }

    pub const fn get(self) -> u64 {
        self.0
    }
}

/// Identifier of an address space (node) in the net.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub u16);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Globally unambiguous address: (node, local address).
///
/// The derived ordering is lexicographic on `(node, addr)`, which is the
/// canonical name order used by the mapping database.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Name {
    pub node: NodeId,
    pub addr: u64,
}

impl Name {
    /// Panics if `addr` does not fit in 48 bits.
    pub fn new(node: NodeId, addr: u64) -> Self {
        assert!(addr < ADDR_LIMIT, "address {addr:#x} exceeds 48 bits");
        Name { node, addr }
    }

    pub fn checked(node: NodeId, addr: u64) -> Result<Self, NetError> {
        Address::new(addr).map(|a| Name { node, addr: a.get() })
    }

    /// Name `delta` bytes further into the same node.
    pub fn offset(self, delta: u64) -> Name {
        Name::new(self.node, self.addr + delta)
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{:#x}", self.node.0, self.addr)
    }
}

/// Non-empty half-open byte range `[base, base + size)` within one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AddrRange {
    base: u64,
    size: u64,
}

impl AddrRange {
    pub fn new(base: u64, size: u64) -> Result<Self, NetError> {
        match base.checked_add(size) {
            Some(end) if size > 0 && end <= ADDR_LIMIT => Ok(AddrRange { base, size }),
            _ => Err(NetError::InvalidRange { base, size }),
        }
    }

    pub fn from_bounds(base: u64, end: u64) -> Result<Self, NetError> {
        if end <= base {
            return Err(NetError::InvalidRange { base, size: 0 });
        }
        AddrRange::new(base, end - base)
    }

    pub const fn base(&self) -> u64 {
        self.base
    }

    pub const fn size(&self) -> u64 {
        self.size
    }

    /// One past the last address.
    pub const fn end(&self) -> u64 {
        self.base + self.size
    }

    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.base && addr < self.end()
    }

    pub fn contains_range(&self, other: &AddrRange) -> bool {
        other.base >= self.base && other.end() <= self.end()
    }

    pub fn overlaps(&self, other: &AddrRange) -> bool {
        self.base < other.end() && other.base < self.end()
    }

    pub fn intersect(&self, other: &AddrRange) -> Option<AddrRange> {
        let base = self.base.max(other.base);
        let end = self.end().min(other.end());
        (base < end).then(|| AddrRange { base, size: end - base })
    }
}

impl fmt::Display for AddrRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:#x}, {:#x})", self.base, self.end())
    }
}

/// Contiguous translation: `src.base + k` maps to `dest.addr + k` for every
/// dest. More than one dest encodes a one-to-many translate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TranslateEntry {
    pub src: AddrRange,
    pub dests: Vec<Name>,
}

impl TranslateEntry {
    pub fn new(src: AddrRange, dest: Name) -> Self {
        TranslateEntry { src, dests: vec![dest] }
    }

    /// Images of `addr` (which must lie in `src`), one per dest.
    pub fn images(&self, addr: u64) -> impl Iterator<Item = Name> + '_ {
        let delta = addr - self.src.base();
        self.dests.iter().map(move |d| d.offset(delta))
    }
}

/// Decode behaviour of one address space.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct NodeSpec {
    pub accept: Vec<AddrRange>,
    pub translate: Vec<TranslateEntry>,
}

impl NodeSpec {
    pub fn accepting(range: AddrRange) -> Self {
        NodeSpec { accept: vec![range], translate: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.accept.is_empty() && self.translate.is_empty()
    }

    pub fn accepts(&self, addr: u64) -> bool {
        self.accept.iter().any(|r| r.contains(addr))
    }

    pub fn entry_for(&self, addr: u64) -> Option<&TranslateEntry> {
        self.translate.iter().find(|e| e.src.contains(addr))
    }
}

/// A finite map from node id to decode behaviour.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecodingNet {
    pub nodes: BTreeMap<NodeId, NodeSpec>,
    /// Permit an address to be both accepted and translated; accept wins.
    pub allow_overlap: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DanglingDest { node: NodeId, dest_node: NodeId },
    DestOutOfBounds { node: NodeId, src: AddrRange, dest: Name },
    OverlappingTranslate { node: NodeId, first: AddrRange, second: AddrRange },
    AcceptTranslateOverlap { node: NodeId, accept: AddrRange, src: AddrRange },
    EmptyDests { node: NodeId, src: AddrRange },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DanglingDest { node, dest_node } => {
                write!(f, "node {node} translates into missing node {dest_node}")
            }
            Violation::DestOutOfBounds { node, src, dest } => {
                write!(f, "node {node} entry {src} -> {dest} leaves the 48-bit space")
            }
            Violation::OverlappingTranslate { node, first, second } => {
                write!(f, "node {node} translate entries {first} and {second} overlap")
            }
            Violation::AcceptTranslateOverlap { node, accept, src } => {
                write!(f, "node {node} accepts {accept} and translates {src}")
            }
            Violation::EmptyDests { node, src } => {
                write!(f, "node {node} entry {src} has no destination")
            }
        }
    }
}

impl DecodingNet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: NodeId, spec: NodeSpec) -> Option<NodeSpec> {
        self.nodes.insert(id, spec)
    }

    pub fn node(&self, id: NodeId) -> Result<&NodeSpec, NetError> {
        self.nodes.get(&id).ok_or(NetError::UnknownNode(id))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }
}

/// Checks closedness, translate disjointness, accept/translate separation and
/// dest bounds. An empty result means the net is well formed.
pub fn net_wellformed(net: &DecodingNet) -> Vec<Violation> {
    let mut out = Vec::new();
    for (&id, spec) in &net.nodes {
        for entry in &spec.translate {
            if entry.dests.is_empty() {
                out.push(Violation::EmptyDests { node: id, src: entry.src });
            }
            for dest in &entry.dests {
                if !net.contains(dest.node) {
                    out.push(Violation::DanglingDest { node: id, dest_node: dest.node });
                }
                if dest.addr.checked_add(entry.src.size()).map_or(true, |e| e > ADDR_LIMIT) {
                    out.push(Violation::DestOutOfBounds { node: id, src: entry.src, dest: *dest });
                }
            }
        }
        for (i, a) in spec.translate.iter().enumerate() {
            for b in &spec.translate[i + 1..] {
                if a.src.overlaps(&b.src) {
                    out.push(Violation::OverlappingTranslate {
                        node: id,
                        first: a.src,
                        second: b.src,
                    });
                }
            }
        }
        if !net.allow_overlap {
            for accept in &spec.accept {
                for entry in spec.translate.iter().filter(|e| e.src.overlaps(accept)) {
                    out.push(Violation::AcceptTranslateOverlap {
                        node: id,
                        accept: *accept,
                        src: entry.src,
                    });
                }
            }
        }
    }
    out
}
