//! Precomputed local-to-canonical translation tables for cores whose path
//! to memory is entirely static.

use thiserror::Error;

use crate::net::{resolve_range, AddrRange, Name, NetError, NodeId, PieceOutcome};

use super::{NodeKind, PlatformSpec};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum XlateError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("translation from the core crosses configurable node {0}")]
    DynamicOnPath(NodeId),
    #[error("local address {0:#x} reaches more than one name")]
    Ambiguous(u64),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Both directions of one core's static view of memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XlateTable {
    pub core: NodeId,
    /// Maximal local ranges and the canonical name of their first byte,
    /// ordered by local address.
    pub forward: Vec<(AddrRange, Name)>,
    /// The same runs keyed by canonical name, in name order.
    pub inverse: Vec<(Name, AddrRange)>,
}

impl XlateTable {
    pub fn to_canonical(&self, local: u64) -> Option<Name> {
        let i = self.forward.partition_point(|(r, _)| r.end() <= local);
        let (r, n) = self.forward.get(i)?;
        r.contains(local).then(|| n.offset(local - r.base()))
    }

    /// Lowest local address naming `name`.
    pub fn to_local(&self, name: Name) -> Option<u64> {
        self.inverse
            .iter()
            .filter(|(n, r)| n.node == name.node && n.addr <= name.addr && name.addr - n.addr < r.size())
            .map(|(n, r)| r.base() + (name.addr - n.addr))
            .min()
    }
}

pub fn gen_xlate(spec: &PlatformSpec, core: NodeId) -> Result<XlateTable, XlateError> {
    let decl = spec.node(core).ok_or(XlateError::UnknownNode(core))?;
    if decl.kind == NodeKind::Configurable {
        return Err(XlateError::DynamicOnPath(core));
    }
    let net = spec.net();
    let mut runs: Vec<(AddrRange, Name)> =
        decl.spec.accept.iter().map(|r| (*r, Name::new(core, r.base()))).collect();
    for e in &decl.spec.translate {
        let res = resolve_range(&net, Name::new(core, e.src.base()), e.src.size())?;
        for p in &res.pieces {
            let local = e.src.base() + p.offset;
            match p.outcome {
                PieceOutcome::Accepted(name) => runs.push((AddrRange::new(local, p.len)?, name)),
                PieceOutcome::Undecodable(name) => {
                    if spec.node(name.node).is_some_and(|n| n.kind == NodeKind::Configurable) {
                        return Err(XlateError::DynamicOnPath(name.node));
                    }
                }
                PieceOutcome::Loop(_) => {}
            }
        }
    }
    runs.sort_by_key(|(r, _)| r.base());
    let mut forward: Vec<(AddrRange, Name)> = Vec::new();
    for (r, name) in runs {
        if let Some((prev, pname)) = forward.last_mut() {
            if prev.end() > r.base() {
                return Err(XlateError::Ambiguous(r.base()));
            }
            if prev.end() == r.base() && pname.node == name.node && pname.addr + prev.size() == name.addr {
                *prev = AddrRange::new(prev.base(), prev.size() + r.size())?;
                continue;
            }
        }
        forward.push((r, name));
    }
    let mut inverse: Vec<(Name, AddrRange)> = forward.iter().map(|(r, n)| (*n, *r)).collect();
    inverse.sort();
    Ok(XlateTable { core, forward, inverse })
}
