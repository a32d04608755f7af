//! Platform descriptions: the static net, which nodes are configurable and
//! how, the subjects, and the capabilities they start with.

mod builtin;
mod format;
mod xlate;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use builtin::{
    arm, builtin, builtin_names, pcie_scale, xeon_phi, ArmVariant, ARM_DEVICE_BASE, ARM_DRAM_BASE,
    ARM_PRIVATE_BASE, PCIE_BASELINE_NODES,
};
pub use format::{load_platform, print_platform, PLATFORM_HEADER};
pub use xlate::{gen_xlate, XlateError, XlateTable};

use crate::authority::SubjectId;
use crate::config::{ConfigConstraint, ConfigSpace};
use crate::net::{net_wellformed, AddrRange, DecodingNet, Name, NodeId, NodeSpec, TranslateEntry};
use crate::refmon::{CapType, Handle, InitialCap, KernelState, MonitorError, Payload, Rights, ASID_NODE, MONITOR};
use crate::text::ParseError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlatformError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Semantic(String),
    #[error("unknown platform `{0}`")]
    UnknownPlatform(String),
}

impl PlatformError {
    pub fn kind(&self) -> &'static str {
        match self {
            PlatformError::Parse(_) => "ParseError",
            PlatformError::Semantic(_) => "SemanticError",
            PlatformError::UnknownPlatform(_) => "UnknownPlatform",
        }
    }
}

fn semantic(msg: impl Into<String>) -> PlatformError {
    PlatformError::Semantic(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    /// Only accepts; holds memory or device registers.
    Accepting,
    /// Static translation.
    Fixed,
    /// Translation set at run time, within a configuration space.
    Configurable,
}

impl NodeKind {
    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Accepting => "accepting",
            NodeKind::Fixed => "fixed",
            NodeKind::Configurable => "configurable",
        }
    }

    pub fn parse(s: &str) -> Option<NodeKind> {
        [NodeKind::Accepting, NodeKind::Fixed, NodeKind::Configurable]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeDecl {
    pub id: NodeId,
    pub label: String,
    pub kind: NodeKind,
    /// Accept ranges are RAM that must stay covered by capabilities.
    pub ram: bool,
    /// Programmed by a kernel outside the monitor; never part of a blueprint.
    pub kernel_managed: bool,
    /// Present exactly for configurable nodes.
    pub constraint: Option<ConfigConstraint>,
    pub spec: NodeSpec,
}

impl NodeDecl {
    pub fn new(id: u16, label: &str, kind: NodeKind) -> Self {
        NodeDecl {
            id: NodeId(id),
            label: label.to_string(),
            kind,
            ram: false,
            kernel_managed: false,
            constraint: None,
            spec: NodeSpec::default(),
        }
    }

    pub fn accept(mut self, base: u64, size: u64) -> Self {
        self.spec.accept.push(AddrRange::new(base, size).expect("valid accept range"));
        self
    }

    pub fn translate(mut self, base: u64, size: u64, dest: Name) -> Self {
        let src = AddrRange::new(base, size).expect("valid translate range");
        self.spec.translate.push(TranslateEntry::new(src, dest));
        self
    }
}

/// A capability handed out at boot. Address-space capabilities take their
/// ASID from `base.node`; ASID ranges are named under [`ASID_NODE`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapDecl {
    pub ctype: CapType,
    pub base: Name,
    pub size: u64,
    pub rights: Rights,
    pub owner: SubjectId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlatformSpec {
    pub name: String,
    /// In id order.
    pub nodes: Vec<NodeDecl>,
    /// Edges a configurable node can be programmed to reach.
    pub reach: Vec<(NodeId, NodeId)>,
    pub subjects: Vec<(SubjectId, String)>,
    pub caps: Vec<CapDecl>,
}

impl PlatformSpec {
    pub fn node(&self, id: NodeId) -> Option<&NodeDecl> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_by_label(&self, label: &str) -> Option<&NodeDecl> {
        self.nodes.iter().find(|n| n.label == label)
    }

    pub fn subject_by_label(&self, label: &str) -> Option<SubjectId> {
        self.subjects.iter().find(|(_, l)| l == label).map(|(id, _)| *id)
    }

    pub fn net(&self) -> DecodingNet {
        let mut net = DecodingNet::new();
        for n in &self.nodes {
            net.insert(n.id, n.spec.clone());
        }
        net
    }

    pub fn config_space(&self) -> ConfigSpace {
        let mut cs = ConfigSpace::default();
        for n in &self.nodes {
            if let Some(c) = &n.constraint {
                cs.constraints.insert(n.id, c.clone());
            }
        }
        cs
    }

    pub fn kernel_managed(&self) -> BTreeSet<NodeId> {
        self.nodes.iter().filter(|n| n.kernel_managed).map(|n| n.id).collect()
    }

    /// RAM regions, in node order.
    pub fn memory(&self) -> Vec<(Name, u64)> {
        self.nodes
            .iter()
            .filter(|n| n.ram)
            .flat_map(|n| n.spec.accept.iter().map(move |r| (Name::new(n.id, r.base()), r.size())))
            .collect()
    }

    pub fn managed_bytes(&self) -> u64 {
        self.memory().iter().map(|(_, s)| s).sum()
    }

    /// Checks everything the file grammar cannot express.
    pub fn validate(&self) -> Result<(), PlatformError> {
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id) {
                return Err(semantic(format!("duplicate node id {}", n.id)));
            }
            if n.id == ASID_NODE {
                return Err(semantic(format!("node id {} is reserved", n.id)));
            }
            match (n.kind, &n.constraint) {
                (NodeKind::Configurable, None) => {
                    return Err(semantic(format!("configurable node {} has no constraint", n.id)))
                }
                (NodeKind::Configurable, Some(c)) if !c.is_valid() => {
                    return Err(semantic(format!("node {} has an invalid constraint", n.id)))
                }
                (NodeKind::Configurable, Some(_)) if !n.spec.translate.is_empty() => {
                    return Err(semantic(format!("configurable node {} has static entries", n.id)))
                }
                (NodeKind::Accepting, _) if !n.spec.translate.is_empty() => {
                    return Err(semantic(format!("accepting node {} translates", n.id)))
                }
                (NodeKind::Accepting | NodeKind::Fixed, Some(_)) => {
                    return Err(semantic(format!("node {} is not configurable", n.id)))
                }
                _ => {}
            }
            if n.kernel_managed && n.kind != NodeKind::Configurable {
                return Err(semantic(format!("kernel-managed node {} is not configurable", n.id)));
            }
        }
        let mut labels = BTreeSet::new();
        for n in &self.nodes {
            if !labels.insert(n.label.as_str()) {
                return Err(semantic(format!("duplicate node label `{}`", n.label)));
            }
        }
        if let Some(v) = net_wellformed(&self.net()).first() {
            return Err(semantic(v.to_string()));
        }
        for &(u, v) in &self.reach {
            if !ids.contains(&u) || !ids.contains(&v) {
                return Err(semantic(format!("reach {u} -> {v} names an unknown node")));
            }
            if self.node(u).map(|n| n.kind) != Some(NodeKind::Configurable) {
                return Err(semantic(format!("reach source {u} is not configurable")));
            }
        }
        let mut subjects = BTreeSet::from([MONITOR]);
        for (s, _) in &self.subjects {
            if !subjects.insert(*s) {
                return Err(semantic(format!("duplicate or reserved subject {s}")));
            }
        }
        for c in &self.caps {
            if !subjects.contains(&c.owner) {
                return Err(semantic(format!("capability owner {} is not a subject", c.owner)));
            }
            let ok = match c.ctype {
                CapType::AsidRange => c.base.node == ASID_NODE,
                CapType::AddressSpace => {
                    self.node(c.base.node).is_some_and(|n| n.kind == NodeKind::Configurable)
                }
                CapType::Ram | CapType::Frame => self.node(c.base.node).is_some_and(|n| n.ram),
                _ => false,
            };
            if !ok {
                return Err(semantic(format!("capability {} at {} is not allowed at boot", c.ctype, c.base)));
            }
        }
        self.boot().map(|_| ()).map_err(|e| semantic(e.to_string()))
    }

    /// The monitor state right after boot. Each subject's handles number its
    /// capabilities in declaration order.
    pub fn boot(&self) -> Result<KernelState, BootError> {
        let mut st = KernelState::new(self.net(), self.config_space());
        for (id, label) in &self.subjects {
            st.add_subject(*id, label.clone());
        }
        for (base, size) in self.memory() {
            st.declare_memory(base, size);
        }
        let init: Vec<InitialCap> = self
            .caps
            .iter()
            .map(|c| InitialCap {
                ctype: c.ctype,
                base: c.base,
                size: c.size,
                rights: c.rights,
                owner: c.owner,
                payload: match c.ctype {
                    CapType::AddressSpace => Payload::AddressSpace { asid: c.base.node },
                    _ => Payload::None,
                },
            })
            .collect();
        st.install_initial_batch(&init).map_err(BootError::Monitor)?;
        let violations = st.check(crate::refmon::CheckSet::ALL);
        match violations.first() {
            Some(v) => Err(BootError::Invariant(v.to_string())),
            None => Ok(st),
        }
    }

    /// Handles of each subject's boot capabilities, in declaration order.
    pub fn boot_handles(&self) -> BTreeMap<SubjectId, Vec<Handle>> {
        let mut out: BTreeMap<SubjectId, Vec<Handle>> = BTreeMap::new();
        for c in &self.caps {
            let v = out.entry(c.owner).or_default();
            v.push(Handle(v.len() as u32));
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BootError {
    #[error("boot capability rejected: {0}")]
    Monitor(MonitorError),
    #[error("boot state is inconsistent: {0}")]
    Invariant(String),
}

#[cfg(test)]
mod tests;
