//! Typed capabilities and their canonical order.

use std::cmp::Ordering;
use std::fmt;

use crate::authority::SubjectId;
use crate::net::{AddrRange, Name, NodeId, ADDR_BITS, ADDR_LIMIT};

/// Size of one capability in the mapping database, in bytes.
pub const CAP_BYTES: usize = 64;

/// Reserved node under which ASID ranges are named. Platforms may not use it.
pub const ASID_NODE: NodeId = NodeId(u16::MAX);

/// A [`Name`] packed into 64 bits: ASID in the high 16 bits, address below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PackedName(pub u64);

impl From<Name> for PackedName {
    fn from(n: Name) -> Self {
        PackedName((u64::from(n.node.0) << ADDR_BITS) | n.addr)
    }
}

impl From<PackedName> for Name {
    fn from(p: PackedName) -> Self {
        Name { node: NodeId((p.0 >> ADDR_BITS) as u16), addr: p.0 & (ADDR_LIMIT - 1) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CapType {
    AsidRange,
    Ram,
    Frame,
    /// Translation structure; `level` 1 holds frames, level k holds level k-1.
    TStructure { level: u8 },
    AddressSpace,
    Mapping,
}

impl CapType {
    /// Position in the hierarchy; ancestors have smaller ranks.
    pub fn rank(self) -> u8 {
        match self {
            CapType::AsidRange => 0,
            CapType::Ram => 1,
            CapType::Frame => 2,
            CapType::TStructure { .. } => 3,
            CapType::AddressSpace => 4,
            CapType::Mapping => 5,
        }
    }

    /// Inverse of `Display`.
    pub fn parse(s: &str) -> Option<CapType> {
        Some(match s {
            "asid-range" => CapType::AsidRange,
            "ram" => CapType::Ram,
            "frame" => CapType::Frame,
            "address-space" => CapType::AddressSpace,
            "mapping" => CapType::Mapping,
            _ => CapType::TStructure { level: s.strip_prefix("tstructure:")?.parse().ok()? },
        })
    }

    fn level(self) -> u8 {
        match self {
            CapType::TStructure { level } => level,
            _ => 0,
        }
    }
}

impl fmt::Display for CapType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CapType::AsidRange => f.write_str("asid-range"),
            CapType::Ram => f.write_str("ram"),
            CapType::Frame => f.write_str("frame"),
            CapType::TStructure { level } => write!(f, "tstructure:{level}"),
            CapType::AddressSpace => f.write_str("address-space"),
            CapType::Mapping => f.write_str("mapping"),
        }
    }
}

/// `b` may be derived from `a`.
pub fn type_le(a: CapType, b: CapType) -> bool {
    use CapType::*;
    a == b
        || matches!(
            (a, b),
            (Ram, Frame | TStructure { .. } | AddressSpace | Mapping)
                | (TStructure { .. }, AddressSpace | Mapping)
                | (Frame, Mapping)
        )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rights(u8);

impl Rights {
    pub const NONE: Rights = Rights(0);
    pub const ACCESS: Rights = Rights(1);
    pub const MAP: Rights = Rights(2);
    pub const GRANT: Rights = Rights(4);

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub const fn contains(self, other: Rights) -> bool {
        self.0 & other.0 == other.0
    }

    pub const fn union(self, other: Rights) -> Rights {
        Rights(self.0 | other.0)
    }

    pub const fn intersect(self, other: Rights) -> Rights {
        Rights(self.0 & other.0)
    }

    pub fn parse(s: &str) -> Option<Rights> {
        let mut r = Rights::NONE;
        for part in s.split(',').filter(|p| !p.is_empty() && *p != "none") {
            r = r.union(match part {
                "access" => Rights::ACCESS,
                "map" => Rights::MAP,
                "grant" => Rights::GRANT,
                _ => return None,
            });
        }
        Some(r)
    }
}

impl fmt::Display for Rights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(Rights::ACCESS, "access"), (Rights::MAP, "map"), (Rights::GRANT, "grant")]
            .into_iter()
            .filter(|(r, _)| self.contains(*r))
            .map(|(_, n)| n)
            .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MappingKind {
    /// A frame made reachable through the space.
    Memory,
    /// A lower-level translation table installed into a table slot.
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Payload {
    #[default]
    None,
    AddressSpace { asid: NodeId },
    Mapping {
        kind: MappingKind,
        space: NodeId,
        /// Base of the translation table backing `space`, if RAM-backed.
        table: Option<Name>,
        slots: AddrRange,
        dest: Name,
        installer: SubjectId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CapId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Capability {
    pub id: CapId,
    pub ctype: CapType,
    pub base: Name,
    pub size: u64,
    pub rights: Rights,
    pub owner: SubjectId,
    pub payload: Payload,
}

impl Capability {
    /// Position of the first byte in a single linear space over all nodes.
    pub fn lin_base(&self) -> u128 {
        lin(self.base)
    }

    pub fn lin_end(&self) -> u128 {
        self.lin_base() + u128::from(self.size)
    }

    pub fn range(&self) -> Option<AddrRange> {
        AddrRange::new(self.base.addr, self.size).ok()
    }

    pub fn covers(&self, base: Name, size: u64) -> bool {
        base.node == self.base.node
            && base.addr >= self.base.addr
            && lin(base) + u128::from(size) <= self.lin_end()
    }

    pub fn overlaps(&self, other: &Capability) -> bool {
        self.lin_base() < other.lin_end() && other.lin_base() < self.lin_end()
    }

    /// Same object: identical type, range and payload.
    pub fn is_copy_of(&self, other: &Capability) -> bool {
        self.ctype == other.ctype
            && self.base == other.base
            && self.size == other.size
            && self.payload == other.payload
    }

    pub fn asid(&self) -> Option<NodeId> {
        match self.payload {
            Payload::AddressSpace { asid } => Some(asid),
            _ => None,
        }
    }

    /// Fixed-layout encoding of the capability's fields.
    ///
    /// `[0]` type, `[1]` level, `[2]` rights, `[3]` payload tag, `[4..8]`
    /// owner, `[8..16]` packed base, `[16..24]` size, `[24..64]` payload.
    pub fn to_bytes(&self) -> [u8; CAP_BYTES] {
        let mut b = [0u8; CAP_BYTES];
        b[0] = self.ctype.rank();
        b[1] = self.ctype.level();
        b[2] = self.rights.bits();
        b[4..8].copy_from_slice(&self.owner.0.to_le_bytes());
        b[8..16].copy_from_slice(&PackedName::from(self.base).0.to_le_bytes());
        b[16..24].copy_from_slice(&self.size.to_le_bytes());
        match self.payload {
            Payload::None => {}
            Payload::AddressSpace { asid } => {
                b[3] = 1;
                b[24..26].copy_from_slice(&asid.0.to_le_bytes());
            }
            Payload::Mapping { kind, space, table, slots, dest, installer } => {
                b[3] = match kind {
                    MappingKind::Memory => 2,
                    MappingKind::Table => 3,
                };
                b[24..26].copy_from_slice(&space.0.to_le_bytes());
                b[26] = u8::from(table.is_some());
                b[27..31].copy_from_slice(&installer.0.to_le_bytes());
                let table = table.map_or(0, |t| PackedName::from(t).0);
                b[32..40].copy_from_slice(&table.to_le_bytes());
                b[40..48].copy_from_slice(&slots.base().to_le_bytes());
                b[48..56].copy_from_slice(&slots.size().to_le_bytes());
                b[56..64].copy_from_slice(&PackedName::from(dest).0.to_le_bytes());
            }
        }
        b
    }
}

fn lin(n: Name) -> u128 {
    (u128::from(n.node.0) << ADDR_BITS) | u128::from(n.addr)
}

/// Canonical MDB order: ascending base name, larger size first, ancestor
/// types first. Remaining ties fall to owner, payload and finally id so the
/// order is strict.
pub fn canonical_cmp(a: &Capability, b: &Capability) -> Ordering {
    a.base
        .cmp(&b.base)
        .then(b.size.cmp(&a.size))
        .then(a.ctype.rank().cmp(&b.ctype.rank()))
        .then(a.ctype.level().cmp(&b.ctype.level()))
        .then(a.owner.cmp(&b.owner))
        .then(a.payload.cmp(&b.payload))
        .then(a.id.cmp(&b.id))
}

/// `b` is a descendant of `a`: contained in `a`'s range, in the same node,
/// of a derivable type, and not a copy (same range and type).
pub fn is_descendant(a: &Capability, b: &Capability) -> bool {
    b.base.node == a.base.node
        && b.lin_base() >= a.lin_base()
        && b.lin_end() <= a.lin_end()
        && type_le(a.ctype, b.ctype)
        && !(a.base == b.base && a.size == b.size && a.ctype == b.ctype)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap(ctype: CapType, addr: u64, size: u64) -> Capability {
        Capability {
            id: CapId(0),
            ctype,
            base: Name::new(NodeId(0), addr),
            size,
            rights: Rights::NONE,
            owner: SubjectId(1),
            payload: Payload::None,
        }
    }

    #[test]
    fn packed_name_layout() {
        let n = Name::new(NodeId(0xabcd), 0x1234_5678_9abc);
        let p = PackedName::from(n);
        assert_eq!(p.0, 0xabcd_1234_5678_9abc);
        assert_eq!(Name::from(p), n);
    }

    #[test]
    fn canonical_order_examples() {
        use Ordering::Less;
        assert_eq!(canonical_cmp(&cap(CapType::Ram, 0, 0x2000), &cap(CapType::Ram, 0, 0x1000)), Less);
        assert_eq!(canonical_cmp(&cap(CapType::Ram, 0, 0x1000), &cap(CapType::Ram, 0x1000, 0x1000)), Less);
        assert_eq!(canonical_cmp(&cap(CapType::Ram, 0, 0x1000), &cap(CapType::Frame, 0, 0x1000)), Less);
    }

    #[test]
    fn descendant_examples() {
        let ram = cap(CapType::Ram, 0, 0x10000);
        let frame = cap(CapType::Frame, 0x1000, 0x1000);
        assert!(is_descendant(&ram, &frame));
        assert!(!is_descendant(&frame, &frame));
        let small_ram = cap(CapType::Ram, 0, 0x1000);
        assert!(!is_descendant(&small_ram, &small_ram));
        let ts = cap(CapType::TStructure { level: 1 }, 0, 0x1000);
        assert!(is_descendant(&cap(CapType::Ram, 0, 0x2000), &ts));
        assert!(!is_descendant(&frame, &cap(CapType::Ram, 0x1000, 0x100)));
        let mut other_node = frame;
        other_node.base = Name::new(NodeId(1), 0x1000);
        assert!(!is_descendant(&ram, &other_node));
    }

    #[test]
    fn type_order_is_partial_order() {
        let all = [
            CapType::AsidRange,
            CapType::Ram,
            CapType::Frame,
            CapType::TStructure { level: 1 },
            CapType::TStructure { level: 2 },
            CapType::AddressSpace,
            CapType::Mapping,
        ];
        for a in all {
            assert!(type_le(a, a));
            for b in all {
                if a != b && type_le(a, b) {
                    assert!(!type_le(b, a), "{a} {b}");
                    assert!(a.rank() < b.rank());
                }
                for c in all {
                    if type_le(a, b) && type_le(b, c) {
                        assert!(type_le(a, c), "{a} {b} {c}");
                    }
                }
            }
        }
        assert!(!type_le(CapType::Frame, CapType::Ram));
        assert!(!type_le(CapType::AsidRange, CapType::Ram));
    }

    #[test]
    fn rights_text() {
        let r = Rights::ACCESS.union(Rights::GRANT);
        assert_eq!(r.to_string(), "access,grant");
        assert_eq!(Rights::parse("access,grant"), Some(r));
        assert_eq!(Rights::parse("none"), Some(Rights::NONE));
        assert_eq!(Rights::parse("write"), None);
    }

    #[test]
    fn encoding_fits_and_distinguishes_fields() {
        let mut m = cap(CapType::Mapping, 0x1000, 0x1000);
        m.payload = Payload::Mapping {
            kind: MappingKind::Memory,
            space: NodeId(3),
            table: Some(Name::new(NodeId(0), 0x8000)),
            slots: AddrRange::new(0x4000, 0x1000).unwrap(),
            dest: Name::new(NodeId(0), 0x1000),
            installer: SubjectId(7),
        };
        let bytes = m.to_bytes();
        assert_eq!(bytes.len(), CAP_BYTES);
        let mut m2 = m;
        m2.owner = SubjectId(8);
        assert_ne!(bytes, m2.to_bytes());
    }
}
