//! Oracles and worlds shared by the integration tests. Nothing here calls
//! the code it is used to check, except to build inputs.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use addrnet_core::authority::SubjectId;
use addrnet_core::config::{ConfigConstraint, ConfigSpace};
use addrnet_core::net::{AddrRange, DecodingNet, Name, NetError, NodeId, NodeSpec, ResolveResult, TranslateEntry, ADDR_LIMIT};
use addrnet_core::refmon::{
    CapId, CapType, Capability, Handle, InitialCap, KernelState, MappingKind, Payload, Rights, TableRef, Via, ASID_NODE,
};
use addrnet_core::trace::MonitorOp;

pub const DEFAULT_SEED: u64 = 0x0add_2e55;

/// `ADDRNET_SEED` if set, else a fixed default.
pub fn seed() -> u64 {
    std::env::var("ADDRNET_SEED")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_SEED)
}

pub fn rng(salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed() ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn r(base: u64, size: u64) -> AddrRange {
    AddrRange::new(base, size).unwrap()
}

pub fn nm(node: u16, addr: u64) -> Name {
    Name::new(NodeId(node), addr)
}

// ---------------------------------------------------------------------------
// Resolution

/// Per-address reference resolver, written straight from the decode rules:
/// accept wins, otherwise the first translate entry covering the address,
/// every destination followed depth first, first failure reported.
pub fn walk(net: &DecodingNet, n: Name) -> Result<ResolveResult, NetError> {
    walk_from(net, n, &mut Vec::new())
}

fn walk_from(net: &DecodingNet, n: Name, path: &mut Vec<Name>) -> Result<ResolveResult, NetError> {
    if let Some(i) = path.iter().position(|p| *p == n) {
        return Ok(ResolveResult::Loop(path[i..].to_vec()));
    }
    let spec = net.nodes.get(&n.node).ok_or(NetError::UnknownNode(n.node))?;
    if spec.accept.iter().any(|a| a.base() <= n.addr && n.addr < a.end()) {
        return Ok(ResolveResult::Accepted(BTreeSet::from([n])));
    }
    let Some(e) = spec.translate.iter().find(|e| e.src.base() <= n.addr && n.addr < e.src.end()) else {
        return Ok(ResolveResult::Undecodable(n));
    };
    path.push(n);
    let mut acc = BTreeSet::new();
    for d in &e.dests {
        match walk_from(net, Name::new(d.node, d.addr + (n.addr - e.src.base())), path)? {
            ResolveResult::Accepted(s) => acc.extend(s),
            other => {
                path.pop();
                return Ok(other);
            }
        }
    }
    path.pop();
    Ok(ResolveResult::Accepted(acc))
}

/// Addresses that together hit every behaviour class of every node.
///
/// Decoding is uniform between consecutive breakpoints once the breakpoints
/// of every destination are pulled back through the entries that reach it,
/// so one probe per interval covers the whole 48-bit space. Probes also
/// include each breakpoint's neighbours. `extra` adds breakpoints, e.g.
/// boundaries of objects whose reachability matters.
pub fn probe_addresses(net: &DecodingNet, extra: &[(NodeId, u64)]) -> BTreeMap<NodeId, BTreeSet<u64>> {
    let mut bp: BTreeMap<NodeId, BTreeSet<u64>> = BTreeMap::new();
    for (&id, spec) in &net.nodes {
        let set = bp.entry(id).or_default();
        set.insert(0);
        for a in spec.accept.iter().chain(spec.translate.iter().map(|e| &e.src)) {
            set.insert(a.base());
            set.insert(a.end());
        }
    }
    for &(id, a) in extra {
        bp.entry(id).or_default().insert(a);
    }
    // Pull back to a fixpoint; bounded so that shifting cycles terminate.
    for _ in 0..=net.nodes.len() {
        let mut grew = false;
        for (&id, spec) in &net.nodes {
            for e in &spec.translate {
                for d in &e.dests {
                    let Some(dst) = bp.get(&d.node) else { continue };
                    let pulled: Vec<u64> = dst
                        .range(d.addr..d.addr.saturating_add(e.src.size()))
                        .map(|b| e.src.base() + (b - d.addr))
                        .collect();
                    let set = bp.get_mut(&id).unwrap();
                    for p in pulled {
                        grew |= set.insert(p);
                    }
                }
            }
        }
        if !grew {
            break;
        }
    }
    bp.into_iter()
        .map(|(id, set)| {
            let pts: Vec<u64> = set.iter().copied().filter(|&b| b < ADDR_LIMIT).collect();
            let mut probes = BTreeSet::new();
            for (i, &b) in pts.iter().enumerate() {
                probes.insert(b);
                if b > 0 {
                    probes.insert(b - 1);
                }
                let next = pts.get(i + 1).copied().unwrap_or(ADDR_LIMIT);
                probes.insert(b + (next - b) / 2);
            }
            probes.insert(ADDR_LIMIT - 1);
            (id, probes)
        })
        .collect()
}

/// Address domain of random nets: small enough to test every address.
pub const DOMAIN: u64 = 256;

/// A random net over `0..DOMAIN` in every node. Most nodes mix accepting,
/// translating and empty segments; some translate entries fan out to two
/// destinations, and some nodes let an accept range overlap a translation.
pub fn random_net(rng: &mut impl Rng, nodes: usize) -> DecodingNet {
    let mut net = DecodingNet::new();
    net.allow_overlap = true;
    for id in 0..nodes {
        let mut cuts: Vec<u64> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(1..DOMAIN)).collect();
        cuts.extend([0, DOMAIN]);
        cuts.sort_unstable();
        cuts.dedup();
        let mut spec = NodeSpec::default();
        for w in cuts.windows(2) {
            let (base, len) = (w[0], w[1] - w[0]);
            match rng.gen_range(0..20) {
                0..=5 => spec.accept.push(r(base, len)),
                6..=15 => {
                    let fan = if rng.gen_bool(0.2) { 2 } else { 1 };
                    let dests = (0..fan)
                        .map(|_| nm(rng.gen_range(0..nodes) as u16, rng.gen_range(0..=DOMAIN - len)))
                        .collect();
                    spec.translate.push(TranslateEntry { src: r(base, len), dests });
                }
                _ => {}
            }
        }
        if rng.gen_bool(0.1) {
            if let Some(e) = spec.translate.first() {
                spec.accept.push(r(e.src.base(), 1));
            }
        }
        net.insert(NodeId(id as u16), spec);
    }
    net
}

// ---------------------------------------------------------------------------
// Routing

/// Hop distances from `src` by plain breadth-first search over an edge list.
pub fn bfs_distances(edges: &BTreeSet<(NodeId, NodeId)>, src: NodeId) -> BTreeMap<NodeId, usize> {
    let mut dist = BTreeMap::from([(src, 0)]);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        for &(_, v) in edges.range((u, NodeId(0))..=(u, NodeId(u16::MAX))) {
            dist.entry(v).or_insert_with(|| {
                queue.push_back(v);
                d + 1
            });
        }
    }
    dist
}

/// Static translate edges plus declared reach edges.
pub fn topology_edges(net: &DecodingNet, reach: &[(NodeId, NodeId)]) -> BTreeSet<(NodeId, NodeId)> {
    let mut edges: BTreeSet<(NodeId, NodeId)> = net
        .nodes
        .iter()
        .flat_map(|(&u, s)| s.translate.iter().flat_map(move |e| e.dests.iter().map(move |d| (u, d.node))))
        .filter(|(_, v)| net.nodes.contains_key(v))
        .collect();
    edges.extend(reach.iter().copied());
    edges
}

/// Marks about a third of the nodes configurable and gives each a few reach
/// edges.
pub fn random_topology(rng: &mut impl Rng, net: &DecodingNet) -> (ConfigSpace, Vec<(NodeId, NodeId)>) {
    let ids: Vec<NodeId> = net.nodes.keys().copied().collect();
    let mut cs = ConfigSpace::default();
    let mut reach = Vec::new();
    for &id in &ids {
        if rng.gen_bool(0.35) {
            cs.constraints.insert(id, ConfigConstraint::Unconstrained);
            for _ in 0..rng.gen_range(0..3) {
                let v = *ids.choose(rng).unwrap();
                if v != id {
                    reach.push((id, v));
                }
            }
        }
    }
    (cs, reach)
}

// ---------------------------------------------------------------------------
// Capabilities

/// Which types may be derived from which, spelled out as child lists.
pub fn derivable(parent: CapType, child: CapType) -> bool {
    use CapType::*;
    match parent {
        AsidRange => child == AsidRange,
        Ram => child != AsidRange,
        Frame => matches!(child, Frame | Mapping),
        TStructure { level } => child == TStructure { level } || matches!(child, AddressSpace | Mapping),
        AddressSpace => child == AddressSpace,
        Mapping => child == Mapping,
    }
}

pub fn same_object(a: &Capability, b: &Capability) -> bool {
    a.base == b.base && a.size == b.size && a.ctype == b.ctype
}

pub fn inside(inner: &Capability, outer: &Capability) -> bool {
    inner.base.node == outer.base.node
        && outer.base.addr <= inner.base.addr
        && inner.base.addr + inner.size <= outer.base.addr + outer.size
}

pub fn descends(parent: &Capability, child: &Capability) -> bool {
    inside(child, parent) && derivable(parent.ctype, child.ctype) && !same_object(parent, child)
}

/// Transitive closure of `descends` starting at `root`, by repeated scans.
pub fn descendant_closure(all: &[Capability], root: &Capability) -> BTreeSet<CapId> {
    let mut found: BTreeSet<CapId> = BTreeSet::new();
    let mut frontier = vec![*root];
    while let Some(p) = frontier.pop() {
        for c in all {
            if descends(&p, c) && found.insert(c.id) {
                frontier.push(*c);
            }
        }
    }
    found
}

pub fn range_overlaps(c: &Capability, base: Name, size: u64) -> bool {
    c.base.node == base.node && c.base.addr < base.addr + size && base.addr < c.base.addr + c.size
}

pub fn range_contains(c: &Capability, base: Name, size: u64) -> bool {
    c.base.node == base.node && c.base.addr <= base.addr && base.addr + size <= c.base.addr + c.size
}

pub fn range_inner(c: &Capability, base: Name, size: u64) -> bool {
    c.base.node == base.node && base.addr <= c.base.addr && c.base.addr + c.size <= base.addr + size
}

const TYPES: [CapType; 7] = [
    CapType::AsidRange,
    CapType::Ram,
    CapType::Frame,
    CapType::TStructure { level: 1 },
    CapType::TStructure { level: 2 },
    CapType::AddressSpace,
    CapType::Mapping,
];

/// Random capabilities clustered in a few nodes so that containment,
/// overlap and exact copies are all common.
pub fn random_caps(rng: &mut impl Rng, count: usize) -> Vec<Capability> {
    (0..count)
        .map(|i| {
            let node = NodeId(rng.gen_range(0..3));
            let unit = 1u64 << rng.gen_range(8..13);
            let base = rng.gen_range(0..64) * 0x100;
            Capability {
                id: CapId(i as u64),
                ctype: *TYPES.choose(rng).unwrap(),
                base: Name::new(node, base),
                size: unit * rng.gen_range(1..5),
                rights: Rights::ACCESS,
                owner: SubjectId(rng.gen_range(1..4)),
                payload: Payload::None,
            }
        })
        .collect()
}

pub fn ids(v: &[Capability]) -> Vec<CapId> {
    let mut out: Vec<CapId> = v.iter().map(|c| c.id).collect();
    out.sort();
    out
}

// ---------------------------------------------------------------------------
// Worlds

pub const DRIVER: SubjectId = SubjectId(1);
pub const PROCESS: SubjectId = SubjectId(2);
pub const DMA: NodeId = NodeId(1);
pub const BUFFER_SIZE: u64 = 0x10000;

/// Host memory behind a DMA-capable IOMMU. The driver holds the IOMMU
/// address space with only the map right (handle h0); the process holds
/// the buffer frame with access and grant (handle h0). Nobody else holds
/// anything.
pub fn split_rights_world() -> KernelState {
    let mut net = DecodingNet::new();
    net.insert(NodeId(0), NodeSpec::accepting(r(0, BUFFER_SIZE)));
    net.insert(DMA, NodeSpec::default());
    let mut cs = ConfigSpace::default();
    cs.constraints.insert(DMA, ConfigConstraint::GranularityContiguous { grain: 0x1000 });
    let mut st = KernelState::new(net, cs);
    st.add_subject(DRIVER, "iommu_driver");
    st.add_subject(PROCESS, "process");
    st.declare_memory(nm(0, 0), BUFFER_SIZE);
    st.install_initial_batch(&[
        InitialCap {
            ctype: CapType::AddressSpace,
            base: Name::new(DMA, 0),
            size: 1 << 32,
            rights: Rights::MAP,
            owner: DRIVER,
            payload: Payload::AddressSpace { asid: DMA },
        },
        InitialCap {
            ctype: CapType::Frame,
            base: nm(0, 0),
            size: BUFFER_SIZE,
            rights: Rights::ACCESS.union(Rights::GRANT),
            owner: PROCESS,
            payload: Payload::None,
        },
    ])
    .unwrap();
    st
}

pub const FUZZ_OWNER: SubjectId = SubjectId(1);
pub const FUZZ_PEER: SubjectId = SubjectId(2);
pub const FUZZ_RAM: u64 = 0x40000;

/// RAM, two configurable spaces (one page-granular, one with four fixed
/// slots) and a block of ASIDs, all held by one subject; a second subject
/// starts empty.
pub fn fuzz_world() -> KernelState {
    let mut net = DecodingNet::new();
    net.insert(NodeId(0), NodeSpec::accepting(r(0, FUZZ_RAM)));
    net.insert(NodeId(1), NodeSpec::default());
    net.insert(NodeId(2), NodeSpec::default());
    let mut cs = ConfigSpace::default();
    cs.constraints.insert(NodeId(1), ConfigConstraint::GranularityContiguous { grain: 0x1000 });
    cs.constraints.insert(NodeId(2), ConfigConstraint::RegisterArray { slot_size: 0x10000, num_slots: 4 });
    let mut st = KernelState::new(net, cs);
    st.add_subject(FUZZ_OWNER, "owner");
    st.add_subject(FUZZ_PEER, "peer");
    st.declare_memory(nm(0, 0), FUZZ_RAM);
    let space = |node: u16, size: u64| InitialCap {
        ctype: CapType::AddressSpace,
        base: nm(node, 0),
        size,
        rights: Rights::MAP,
        owner: FUZZ_OWNER,
        payload: Payload::AddressSpace { asid: NodeId(node) },
    };
    st.install_initial_batch(&[
        InitialCap {
            ctype: CapType::Ram,
            base: nm(0, 0),
            size: FUZZ_RAM,
            rights: Rights::ACCESS.union(Rights::GRANT),
            owner: FUZZ_OWNER,
            payload: Payload::None,
        },
        space(1, 1 << 32),
        space(2, 0x40000),
        InitialCap {
            ctype: CapType::AsidRange,
            base: Name::new(ASID_NODE, 0x40),
            size: 0x40,
            rights: Rights::NONE,
            owner: FUZZ_OWNER,
            payload: Payload::None,
        },
    ])
    .unwrap();
    st
}

/// Shared boot trace of the ARM boards.
pub const ARM_INIT_TRACE: &str = include_str!("../data/arm_init.trace");

// ---------------------------------------------------------------------------
// Random monitor operations

const PAGE: u64 = 0x1000;

fn pick<'a>(rng: &mut impl Rng, held: &'a [(Handle, Capability)], want: impl Fn(&Capability) -> bool) -> Option<&'a (Handle, Capability)> {
    let matching: Vec<&(Handle, Capability)> = held.iter().filter(|(_, c)| want(c)).collect();
    if !matching.is_empty() && rng.gen_bool(0.9) {
        matching.choose(rng).copied()
    } else {
        held.choose(rng)
    }
}

/// An operation that is plausible in `st`: handles exist, types mostly fit,
/// ranges mostly align. The monitor decides whether it is allowed.
pub fn random_op(rng: &mut impl Rng, st: &KernelState) -> MonitorOp {
    let (subject, other) = if rng.gen_bool(0.8) { (FUZZ_OWNER, FUZZ_PEER) } else { (FUZZ_PEER, FUZZ_OWNER) };
    let held: Vec<(Handle, Capability)> =
        st.dispatcher(subject).map(|d| d.handles().map(|(h, c)| (h, *c)).collect()).unwrap_or_default();
    if held.is_empty() {
        let owned: Vec<Handle> = st.dispatcher(other).map(|d| d.handles().map(|(h, _)| h).collect()).unwrap_or_default();
        return MonitorOp::Copy { subject: other, cap: *owned.choose(rng).unwrap_or(&Handle(0)), to: subject };
    }
    let is_table = |c: &Capability| matches!(c.ctype, CapType::TStructure { .. });
    match rng.gen_range(0..100) {
        0..=24 => {
            let &(src, c) = pick(rng, &held, |c| matches!(c.ctype, CapType::Ram | CapType::Frame) || is_table(c)).unwrap();
            let to = *[
                CapType::Frame,
                CapType::Frame,
                CapType::Frame,
                CapType::TStructure { level: 1 },
                CapType::TStructure { level: 1 },
                CapType::TStructure { level: 2 },
                CapType::Ram,
            ]
            .choose(rng)
            .unwrap();
            let size = PAGE * *[1u64, 1, 2, 4, 16].choose(rng).unwrap();
            let offset = PAGE * rng.gen_range(0..(c.size / PAGE).max(1));
            MonitorOp::Retype { subject, src, to, offset, size }
        }
        25..=32 => MonitorOp::DeriveAs { subject, table: pick(rng, &held, is_table).unwrap().0 },
        33..=35 => MonitorOp::AsidRetype {
            subject,
            range: pick(rng, &held, |c| c.ctype == CapType::AsidRange).unwrap().0,
            count: rng.gen_range(1..4),
        },
        36..=65 => {
            let table = if rng.gen_bool(0.5) {
                let spaces: Vec<NodeId> = st.spaces.iter().copied().collect();
                TableRef::Space(*spaces.choose(rng).unwrap_or(&NodeId(1)))
            } else {
                TableRef::Handle(pick(rng, &held, |c| c.ctype == CapType::AddressSpace || is_table(c)).unwrap().0)
            };
            let tables_too = rng.gen_bool(0.3);
            let &(object, obj) = pick(rng, &held, |c| c.ctype == CapType::Frame || (tables_too && is_table(c))).unwrap();
            let size = if rng.gen_bool(0.8) { obj.size } else { PAGE * rng.gen_range(1..5) };
            let base = if rng.gen_bool(0.3) { 0x10000 * rng.gen_range(0..4) } else { PAGE * rng.gen_range(0..64) };
            let nodes: Vec<NodeId> = st.net.nodes.keys().copied().collect();
            let via = match rng.gen_range(0..10) {
                0..=6 => Via::Canonical,
                7 | 8 => Via::Name(Name::new(*nodes.choose(rng).unwrap(), PAGE * rng.gen_range(0..64))),
                _ => Via::Local(*nodes.choose(rng).unwrap()),
            };
            MonitorOp::Map { subject, table, object, at: r(base, size.max(1)), via }
        }
        66..=73 => MonitorOp::Unmap { subject, mapping: pick(rng, &held, |c| c.ctype == CapType::Mapping).unwrap().0 },
        74..=81 => MonitorOp::Copy { subject, cap: held.choose(rng).unwrap().0, to: other },
        82..=87 => MonitorOp::Revoke { subject, cap: held.choose(rng).unwrap().0 },
        _ => MonitorOp::Delete { subject, cap: held.choose(rng).unwrap().0 },
    }
}

/// Describes the first configured entry that lets an address reach a byte
/// of a translation structure, found by walking every probe address of
/// every dynamic entry.
pub fn table_reachable(st: &KernelState) -> Option<String> {
    let tables: Vec<Capability> =
        st.mdb.iter().filter(|c| matches!(c.ctype, CapType::TStructure { .. })).copied().collect();
    if tables.is_empty() {
        return None;
    }
    let net = st.materialized();
    let extra: Vec<(NodeId, u64)> =
        tables.iter().flat_map(|t| [(t.base.node, t.base.addr), (t.base.node, t.base.addr + t.size)]).collect();
    let probes = probe_addresses(&net, &extra);
    for (space, e) in st.cfg.entries() {
        let Some(pts) = probes.get(&space) else { continue };
        for &a in pts.range(e.src.base()..e.src.end()) {
            if let Ok(ResolveResult::Accepted(names)) = walk(&net, Name::new(space, a)) {
                for n in names {
                    if let Some(t) = tables.iter().find(|t| t.base.node == n.node && t.base.addr <= n.addr && n.addr < t.base.addr + t.size) {
                        return Some(format!("{space}:{a:#x} reaches {n} inside {} at {}", t.ctype, t.base));
                    }
                }
            }
        }
    }
    None
}

/// What revoking `root` must delete: its descendant closure, plus the
/// mappings recorded in any address space whose last capability is among
/// them (those spaces cease to exist).
pub fn expected_revocation(all: &[Capability], root: &Capability) -> BTreeSet<CapId> {
    let mut doomed = descendant_closure(all, root);
    loop {
        let mut gone_spaces = BTreeSet::new();
        for c in all.iter().filter(|c| doomed.contains(&c.id)) {
            if let Payload::AddressSpace { asid } = c.payload {
                let survives = all.iter().any(|o| !doomed.contains(&o.id) && same_object(o, c) && o.payload == c.payload);
                if !survives {
                    gone_spaces.insert(asid);
                }
            }
        }
        let mut grew = false;
        for c in all {
            if let Payload::Mapping { space, kind, dest, .. } = c.payload {
                let dead = gone_spaces.contains(&space) || (kind == MappingKind::Table && gone_spaces.contains(&dest.node));
                if dead {
                    grew |= doomed.insert(c.id);
                }
            }
        }
        if !grew {
            return doomed;
        }
    }
}
