//! Dynamic configuration layered over a decoding net.
//!
//! Each dynamic address space has a current [`NodeSpec`]; its
//! [`ConfigConstraint`] describes which node specs the hardware can take.
//! Transitions are pure: they return a new [`Configuration`].

use std::collections::BTreeMap;

use thiserror::Error;

use crate::net::{AddrRange, DecodingNet, Name, NodeId, NodeSpec, TranslateEntry};

/// Address spaces are the configurable subset of net nodes.
pub type AddressSpaceId = NodeId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown address space {0}")]
    UnknownAddressSpace(AddressSpaceId),
    #[error("address space {0}: resulting node is outside its configuration space")]
    ConstraintViolation(AddressSpaceId),
    #[error("address space {asid}: {src} partially overlaps existing entry {existing}")]
    OverlapConflict { asid: AddressSpaceId, src: AddrRange, existing: AddrRange },
    #[error("address space {asid}: no entry for {src}")]
    NoSuchEntry { asid: AddressSpaceId, src: AddrRange },
}

/// Set of node specs an address space may legally take, stated intensionally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigConstraint {
    Unconstrained,
    Fixed(NodeSpec),
    /// Entries aligned to `grain` in base and size, one dest each.
    GranularityContiguous { grain: u64 },
    /// Each entry covers exactly one naturally aligned slot; at most
    /// `num_slots` slots exist, starting at address zero.
    RegisterArray { slot_size: u64, num_slots: u64 },
}

impl ConfigConstraint {
    /// Grain and slot sizes must be powers of two of at least 4 KiB.
    pub fn is_valid(&self) -> bool {
        let ok = |g: u64| g.is_power_of_two() && g >= 4096;
        match self {
            ConfigConstraint::GranularityContiguous { grain } => ok(*grain),
            ConfigConstraint::RegisterArray { slot_size, num_slots } => {
                ok(*slot_size) && *num_slots >= 1
            }
            _ => true,
        }
    }

    pub fn admits(&self, node: &NodeSpec) -> bool {
        match self {
            ConfigConstraint::Unconstrained => true,
            ConfigConstraint::Fixed(spec) => spec == node,
            ConfigConstraint::GranularityContiguous { grain } => node.translate.iter().all(|e| {
                e.dests.len() == 1 && e.src.base() % grain == 0 && e.src.size() % grain == 0
            }),
            ConfigConstraint::RegisterArray { slot_size, num_slots } => {
                node.translate.len() as u64 <= *num_slots
                    && node.translate.iter().all(|e| {
                        e.dests.len() == 1
                            && e.src.size() == *slot_size
                            && e.src.base() % slot_size == 0
                            && e.src.base() / slot_size < *num_slots
                    })
            }
        }
    }

    /// Lowest free source range that can hold `size` bytes given the
    /// entries already in `node`. Register slots are returned whole.
    pub fn allocate(&self, node: Option<&NodeSpec>, size: u64) -> Option<AddrRange> {
        let entries: &[TranslateEntry] = node.map_or(&[], |n| &n.translate);
        let free = |r: &AddrRange| !entries.iter().any(|e| e.src.overlaps(r));
        let first_fit = |grain: u64| {
            let size = size.checked_next_multiple_of(grain)?;
            std::iter::once(0)
                .chain(entries.iter().map(|e| e.src.end().next_multiple_of(grain)))
                .filter_map(|b| AddrRange::new(b, size).ok())
                .filter(free)
                .min_by_key(|r| r.base())
        };
        match self {
            ConfigConstraint::Fixed(_) => None,
            ConfigConstraint::Unconstrained => first_fit(1),
            ConfigConstraint::GranularityContiguous { grain } => first_fit(*grain),
            ConfigConstraint::RegisterArray { slot_size, num_slots } => {
                if size == 0 || size > *slot_size {
                    return None;
                }
                (0..*num_slots)
                    .filter_map(|i| AddrRange::new(i * slot_size, *slot_size).ok())
                    .find(free)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigSpace {
    pub constraints: BTreeMap<AddressSpaceId, ConfigConstraint>,
}

impl ConfigSpace {
    pub fn constraint(&self, asid: AddressSpaceId) -> Result<&ConfigConstraint, ConfigError> {
        self.constraints.get(&asid).ok_or(ConfigError::UnknownAddressSpace(asid))
    }

    pub fn is_dynamic(&self, asid: AddressSpaceId) -> bool {
        self.constraints.contains_key(&asid)
    }
}

/// Current node of each configured address space. Spaces without an entry
/// are treated as an empty node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Configuration {
    pub current: BTreeMap<AddressSpaceId, NodeSpec>,
}

impl Configuration {
    pub fn node(&self, asid: AddressSpaceId) -> Option<&NodeSpec> {
        self.current.get(&asid)
    }

    /// All `(space, entry)` pairs, in space order.
    pub fn entries(&self) -> impl Iterator<Item = (AddressSpaceId, &TranslateEntry)> {
        self.current.iter().flat_map(|(&a, spec)| spec.translate.iter().map(move |e| (a, e)))
    }
}

pub fn in_config_space(
    cs: &ConfigSpace,
    asid: AddressSpaceId,
    node: &NodeSpec,
) -> Result<bool, ConfigError> {
    Ok(cs.constraint(asid)?.admits(node))
}

/// Installs `src -> [dest]` in `asid`, replacing entries that `src` fully
/// covers. Partial overlap is rejected.
pub fn modify_map(
    cs: &ConfigSpace,
    cfg: &Configuration,
    asid: AddressSpaceId,
    src: AddrRange,
    dest: Name,
) -> Result<Configuration, ConfigError> {
    let constraint = cs.constraint(asid)?;
    let mut node = cfg.current.get(&asid).cloned().unwrap_or_default();
    if let Some(partial) = node
        .translate
        .iter()
        .find(|e| e.src.overlaps(&src) && !src.contains_range(&e.src))
    {
        return Err(ConfigError::OverlapConflict { asid, src, existing: partial.src });
    }
    node.translate.retain(|e| !src.contains_range(&e.src));
    let at = node.translate.partition_point(|e| e.src.base() < src.base());
    node.translate.insert(at, TranslateEntry::new(src, dest));
    if !constraint.admits(&node) {
        return Err(ConfigError::ConstraintViolation(asid));
    }
    let mut next = cfg.clone();
    next.current.insert(asid, node);
    Ok(next)
}

/// Removes the entry whose source range is exactly `src`.
pub fn clear_map(
    cs: &ConfigSpace,
    cfg: &Configuration,
    asid: AddressSpaceId,
    src: AddrRange,
) -> Result<Configuration, ConfigError> {
    cs.constraint(asid)?;
    let mut node = cfg.current.get(&asid).cloned().unwrap_or_default();
    let idx = node
        .translate
        .iter()
        .position(|e| e.src == src)
        .ok_or(ConfigError::NoSuchEntry { asid, src })?;
    node.translate.remove(idx);
    let mut next = cfg.clone();
    if node.is_empty() {
        next.current.remove(&asid);
    } else {
        next.current.insert(asid, node);
    }
    Ok(next)
}

/// Replaces each configured node of `net` with its current spec.
pub fn materialize(net: &DecodingNet, cfg: &Configuration) -> Result<DecodingNet, ConfigError> {
    let mut out = net.clone();
    for (&asid, spec) in &cfg.current {
        match out.nodes.get_mut(&asid) {
            Some(slot) => *slot = spec.clone(),
            None => return Err(ConfigError::UnknownAddressSpace(asid)),
        }
    }
    Ok(out)
}
