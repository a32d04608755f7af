//! Topology graph over address spaces and routing between them.
//!
//! [`route`] runs Dijkstra over a bit-matrix adjacency with a binary heap,
//! stops as soon as the destination is settled, and keeps its scratch state
//! in maps sized by the nodes it touches, so a query near the destination
//! costs about the same however large the graph is. [`route_reference`] is
//! a level-by-level breadth-first search that rescans the whole edge list at
//! every level; it exists as an oracle and as the linear baseline.
//!
//! Both break ties the same way: the predecessor of a node is the
//! smallest-index node one hop closer to the source.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::authority::SubjectId;
use crate::config::{materialize, ConfigError, ConfigSpace, Configuration};
use crate::net::{preimage, resolve, AddrRange, DecodingNet, Name, NetError, NodeId, ResolveResult};
use crate::platform::{NodeKind, PlatformSpec};
use crate::refmon::{Handle, KernelState, TableRef, Via};
use crate::trace::MonitorOp;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopoError {
    #[error("node {0} is not in the topology")]
    UnknownNode(NodeId),
    #[error("no path from {0} to {1}")]
    NoPath(NodeId, NodeId),
}

impl TopoError {
    pub fn kind(&self) -> &'static str {
        match self {
            TopoError::UnknownNode(_) => "UnknownNode",
            TopoError::NoPath(..) => "NoPath",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyGraph {
    n: usize,
    /// 64-bit words per adjacency row.
    words: usize,
    /// Row-major bit matrix: bit `v` of row `u` is set iff `u -> v`.
    adj: Vec<u64>,
    kind: Vec<NodeKind>,
    kernel_managed: Vec<bool>,
    node_to_asid: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    /// Edge list in `(u, v)` order, for the reference router.
    edges: Vec<(usize, usize)>,
}

/// Builds the graph from static translate entries plus the declared edges
/// of configurable nodes.
pub fn build_graph(
    net: &DecodingNet,
    cs: &ConfigSpace,
    reach: &[(NodeId, NodeId)],
    kernel_managed: &BTreeSet<NodeId>,
) -> TopologyGraph {
    let node_to_asid: Vec<NodeId> = net.nodes.keys().copied().collect();
    let index: HashMap<NodeId, usize> = node_to_asid.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let n = node_to_asid.len();
    let words = n.div_ceil(64).max(1);
    let mut g = TopologyGraph {
        n,
        words,
        adj: vec![0; n * words],
        kind: Vec::with_capacity(n),
        kernel_managed: Vec::with_capacity(n),
        node_to_asid,
        index,
        edges: Vec::new(),
    };
    for (id, spec) in &net.nodes {
        g.kind.push(if cs.is_dynamic(*id) {
            NodeKind::Configurable
        } else if spec.translate.is_empty() {
            NodeKind::Accepting
        } else {
            NodeKind::Fixed
        });
        g.kernel_managed.push(kernel_managed.contains(id));
    }
    let mut pairs = BTreeSet::new();
    for (id, spec) in &net.nodes {
        for e in &spec.translate {
            for d in &e.dests {
                pairs.insert((*id, d.node));
            }
        }
    }
    pairs.extend(reach.iter().copied());
    for (u, v) in pairs {
        if let (Some(&u), Some(&v)) = (g.index.get(&u), g.index.get(&v)) {
            g.adj[u * words + v / 64] |= 1 << (v % 64);
            g.edges.push((u, v));
        }
    }
    g
}

impl TopologyGraph {
    pub fn from_platform(spec: &PlatformSpec) -> Self {
        build_graph(&spec.net(), &spec.config_space(), &spec.reach, &spec.kernel_managed())
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        match (self.index.get(&u), self.index.get(&v)) {
            (Some(&u), Some(&v)) => self.adj[u * self.words + v / 64] & (1 << (v % 64)) != 0,
            _ => false,
        }
    }

    pub fn kind(&self, id: NodeId) -> Option<NodeKind> {
        self.index.get(&id).map(|&i| self.kind[i])
    }

    fn idx(&self, id: NodeId) -> Result<usize, TopoError> {
        self.index.get(&id).copied().ok_or(TopoError::UnknownNode(id))
    }

    fn successors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        let row = &self.adj[u * self.words..(u + 1) * self.words];
        row.iter().enumerate().flat_map(|(w, &bits)| {
            let mut bits = bits;
            std::iter::from_fn(move || {
                (bits != 0).then(|| {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    w * 64 + b
                })
            })
        })
    }

    fn blueprint(&self, path: Vec<usize>) -> RouteBlueprint {
        let hops = path
            .windows(2)
            .filter(|w| self.kind[w[0]] == NodeKind::Configurable && !self.kernel_managed[w[0]])
            .map(|w| Hop { asid: self.node_to_asid[w[0]], next: self.node_to_asid[w[1]] })
            .collect();
        RouteBlueprint { path: path.into_iter().map(|i| self.node_to_asid[i]).collect(), hops }
    }

    /// Longest shortest path between any two connected nodes, in hops.
    pub fn diameter(&self) -> usize {
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            out[u].push(v);
        }
        let mut best = 0;
        let mut dist = vec![usize::MAX; self.n];
        for s in 0..self.n {
            dist.fill(usize::MAX);
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                best = best.max(dist[u]);
                for &v in &out[u] {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
        }
        best
    }
}

/// One configurable space to program: entries in `asid` must point into
/// `next`, the following node on the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hop {
    pub asid: NodeId,
    pub next: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteBlueprint {
    /// Every node from source to destination.
    pub path: Vec<NodeId>,
    /// Configurable, monitor-managed nodes on the path, source side first.
    pub hops: Vec<Hop>,
}

impl RouteBlueprint {
    pub fn len(&self) -> usize {
        self.path.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spaces(&self) -> Vec<NodeId> {
        self.hops.iter().map(|h| h.asid).collect()
    }
}

pub fn route(g: &TopologyGraph, src: NodeId, dst: NodeId) -> Result<RouteBlueprint, TopoError> {
    let (s, t) = (g.idx(src)?, g.idx(dst)?);
    let mut dist: HashMap<usize, u32> = HashMap::from([(s, 0)]);
    let mut parent: HashMap<usize, usize> = HashMap::new();
    let mut settled: HashSet<usize> = HashSet::new();
    let mut heap = BinaryHeap::from([Reverse((0u32, s))]);
    while let Some(Reverse((d, u))) = heap.pop() {
        if !settled.insert(u) {
            continue;
        }
        if u == t {
            let mut path = vec![t];
            while let Some(&p) = parent.get(path.last().unwrap()) {
                path.push(p);
            }
            path.reverse();
            return Ok(g.blueprint(path));
        }
        for v in g.successors(u) {
            let nd = d + 1;
            match dist.get(&v) {
                Some(&old) if old < nd => {}
                Some(&old) if old == nd => {
                    if parent.get(&v).is_some_and(|&p| u < p) {
                        parent.insert(v, u);
                    }
                }
                _ => {
                    dist.insert(v, nd);
                    parent.insert(v, u);
                    heap.push(Reverse((nd, v)));
                }
            }
        }
    }
    Err(TopoError::NoPath(src, dst))
}

pub fn route_reference(g: &TopologyGraph, src: NodeId, dst: NodeId) -> Result<RouteBlueprint, TopoError> {
    let (s, t) = (g.idx(src)?, g.idx(dst)?);
    let mut dist: Vec<Option<usize>> = vec![None; g.n];
    dist[s] = Some(0);
    let mut level = 0;
    loop {
        let mut grew = false;
        for &(u, v) in &g.edges {
            if dist[u] == Some(level) && dist[v].is_none() {
                dist[v] = Some(level + 1);
                grew = true;
            }
        }
        if !grew {
            break;
        }
        level += 1;
    }
    let Some(mut d) = dist[t] else {
        return Err(TopoError::NoPath(src, dst));
    };
    let mut path = vec![t];
    let mut v = t;
    while d > 0 {
        v = g
            .edges
            .iter()
            .filter(|&&(a, b)| b == v && dist[a] == Some(d - 1))
            .map(|&(a, _)| a)
            .min()
            .expect("a node at distance d has a predecessor at d-1");
        path.push(v);
        d -= 1;
    }
    path.reverse();
    Ok(g.blueprint(path))
}

/// Map operations that make `object` reachable from the blueprint's source,
/// programming the hop nearest the object first. Each entry is placed at
/// the lowest free slot of its space and points at what the following node
/// calls the object. Authority is checked only when the operations run.
pub fn blueprint_to_ops(bp: &RouteBlueprint, subject: SubjectId, object: Handle, st: &KernelState) -> Vec<MonitorOp> {
    let Ok(obj) = st.lookup(subject, object) else {
        // Emitted anyway; execution rejects them.
        return bp
            .hops
            .iter()
            .rev()
            .map(|h| MonitorOp::Map {
                subject,
                table: TableRef::Space(h.asid),
                object,
                at: AddrRange::new(0, 0x1000).expect("valid"),
                via: Via::Canonical,
            })
            .collect();
    };
    let net = st.materialized();
    let mut target = obj.base;
    let mut ops = Vec::new();
    for hop in bp.hops.iter().rev() {
        let dest = preimage(&net, hop.next, target).ok().flatten().unwrap_or(target);
        let at = st
            .cs
            .constraint(hop.asid)
            .ok()
            .and_then(|c| c.allocate(st.cfg.node(hop.asid), obj.size))
            .unwrap_or_else(|| AddrRange::new(0, obj.size).expect("capability sizes are valid ranges"));
        ops.push(MonitorOp::Map { subject, table: TableRef::Space(hop.asid), object, at, via: Via::Name(dest) });
        target = Name::new(hop.asid, at.base());
    }
    ops
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FullResolveError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Net(#[from] NetError),
}

pub fn resolve_full(net: &DecodingNet, cfg: &Configuration, n: Name) -> Result<ResolveResult, FullResolveError> {
    Ok(resolve(&materialize(net, cfg)?, n)?)
}
