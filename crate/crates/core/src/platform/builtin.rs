//! Generated evaluation platforms.
//!
//! Sizes and addresses not fixed by the hardware descriptions are defaults:
//! 4 GiB host DRAM and 8 GiB GDDR on the co-processor board, 32 SMPT slots
//! of 16 GiB, 64 MiB of DRAM on the scaling platform, and for the ARM
//! boards 2 GiB of DRAM seen at 0x8000_0000 plus 256 MiB private regions
//! at 0x4000_0000 (cluster 0) and 0x5000_0000 (cluster 1).

use crate::authority::SubjectId;
use crate::config::ConfigConstraint;
use crate::net::{Name, NodeId, ADDR_LIMIT};
use crate::refmon::{CapType, Rights, ASID_NODE};

use super::{CapDecl, NodeDecl, NodeKind, PlatformError, PlatformSpec};

const MIB: u64 = 1 << 20;
const GIB: u64 = 1 << 30;
const PAGE: u64 = 0x1000;

/// Nodes of the scaling platform before any device is added.
pub const PCIE_BASELINE_NODES: usize = 4;

fn n(node: u16, addr: u64) -> Name {
    Name::new(NodeId(node), addr)
}

fn configurable(id: u16, label: &str, c: ConfigConstraint) -> NodeDecl {
    let mut d = NodeDecl::new(id, label, NodeKind::Configurable);
    d.constraint = Some(c);
    d
}

fn ram(id: u16, label: &str, size: u64) -> NodeDecl {
    let mut d = NodeDecl::new(id, label, NodeKind::Accepting).accept(0, size);
    d.ram = true;
    d
}

fn pages() -> ConfigConstraint {
    ConfigConstraint::GranularityContiguous { grain: PAGE }
}

fn cap(ctype: CapType, base: Name, size: u64, rights: Rights, owner: u32) -> CapDecl {
    CapDecl { ctype, base, size, rights, owner: SubjectId(owner) }
}

fn mem(base: Name, size: u64, owner: u32) -> CapDecl {
    cap(CapType::Ram, base, size, Rights::ACCESS.union(Rights::GRANT), owner)
}

fn space(node: u16, size: u64, owner: u32) -> CapDecl {
    cap(CapType::AddressSpace, n(node, 0), size, Rights::MAP, owner)
}

/// Host DRAM behind a system bus and an IOMMU, an SMPT in front of the
/// IOMMU, and a co-processor core whose MMU its own kernel programs.
///
/// Boot handles: `host_driver` h0 RAM, h1 SMPT, h2 IOMMU, h3 ASIDs;
/// `phi_kernel` h0 core MMU, h1 GDDR.
pub fn xeon_phi() -> PlatformSpec {
    let smpt_slot = 16 * GIB;
    let smpt_slots = 32;
    let mut core = configurable(4, "phi_core", pages());
    core.kernel_managed = true;
    PlatformSpec {
        name: "xeon_phi".into(),
        nodes: vec![
            ram(0, "dram", 4 * GIB),
            NodeDecl::new(1, "sysbus", NodeKind::Fixed).translate(0, 4 * GIB, n(0, 0)),
            configurable(2, "iommu", pages()),
            configurable(3, "smpt", ConfigConstraint::RegisterArray { slot_size: smpt_slot, num_slots: smpt_slots }),
            core,
            ram(5, "gddr", 8 * GIB),
        ],
        reach: vec![(NodeId(2), NodeId(1)), (NodeId(3), NodeId(2)), (NodeId(4), NodeId(3)), (NodeId(4), NodeId(5))],
        subjects: vec![(SubjectId(1), "host_driver".into()), (SubjectId(2), "phi_kernel".into())],
        caps: vec![
            mem(n(0, 0), 4 * GIB, 1),
            space(3, smpt_slot * smpt_slots, 1),
            space(2, ADDR_LIMIT, 1),
            cap(CapType::AsidRange, Name::new(ASID_NODE, 0x100), 0x100, Rights::NONE, 1),
            space(4, ADDR_LIMIT, 2),
            mem(n(5, 0), 8 * GIB, 2),
        ],
    }
}

/// A host with `devices` PCIe devices, each behind its own translation unit
/// that feeds a shared IOMMU. Device `i` is node `4 + 2i`, its unit `5 + 2i`.
///
/// Boot handles of `os`: h0 RAM, h1 IOMMU, h2.. the device units in order.
pub fn pcie_scale(devices: usize) -> Result<PlatformSpec, PlatformError> {
    let last = PCIE_BASELINE_NODES + 2 * devices;
    if last >= usize::from(ASID_NODE.0) {
        return Err(PlatformError::UnknownPlatform(format!("pcie_scale:{devices}")));
    }
    let mut cpu = configurable(3, "cpu_mmu", pages());
    cpu.kernel_managed = true;
    let mut spec = PlatformSpec {
        name: format!("pcie_scale_{devices}"),
        nodes: vec![
            ram(0, "dram", 64 * MIB),
            NodeDecl::new(1, "sysbus", NodeKind::Fixed).translate(0, 64 * MIB, n(0, 0)),
            configurable(2, "iommu", pages()),
            cpu,
        ],
        reach: vec![(NodeId(2), NodeId(1)), (NodeId(3), NodeId(1))],
        subjects: vec![(SubjectId(1), "os".into())],
        caps: vec![mem(n(0, 0), 64 * MIB, 1), space(2, ADDR_LIMIT, 1)],
    };
    for i in 0..devices {
        let dev = (PCIE_BASELINE_NODES + 2 * i) as u16;
        let tu = dev + 1;
        spec.nodes.push(
            NodeDecl::new(dev, &format!("dev{i}"), NodeKind::Fixed).translate(0, 4 * GIB, n(tu, 0)),
        );
        spec.nodes.push(configurable(tu, &format!("tu{i}"), pages()));
        spec.reach.push((NodeId(tu), NodeId(2)));
        spec.caps.push(space(tu, ADDR_LIMIT, 1));
    }
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmVariant {
    Uniform,
    Swapped,
    Private,
    PrivateSwapped,
}

impl ArmVariant {
    pub const ALL: [ArmVariant; 4] =
        [ArmVariant::Uniform, ArmVariant::Swapped, ArmVariant::Private, ArmVariant::PrivateSwapped];

    pub fn name(self) -> &'static str {
        match self {
            ArmVariant::Uniform => "arm_uniform",
            ArmVariant::Swapped => "arm_swapped",
            ArmVariant::Private => "arm_private",
            ArmVariant::PrivateSwapped => "arm_private_swapped",
        }
    }

    fn swapped(self) -> bool {
        matches!(self, ArmVariant::Swapped | ArmVariant::PrivateSwapped)
    }

    fn private(self) -> bool {
        matches!(self, ArmVariant::Private | ArmVariant::PrivateSwapped)
    }
}

/// Local base of DRAM in both clusters.
pub const ARM_DRAM_BASE: u64 = 0x8000_0000;
/// Local bases of the private regions of cluster 0 and cluster 1.
pub const ARM_PRIVATE_BASE: [u64; 2] = [0x4000_0000, 0x5000_0000];
/// Local base of the shared device registers.
pub const ARM_DEVICE_BASE: u64 = 0x1C00_0000;

/// Two clusters, each with a fixed interconnect map and an MMU in front of
/// it. Node ids and boot handles are the same for every variant:
/// `os` h0 DRAM, h1 private0, h2 private1, h3 cluster-0 MMU, h4 cluster-1 MMU.
pub fn arm(variant: ArmVariant) -> PlatformSpec {
    let dram = 2 * GIB;
    let half = dram / 2;
    let private = 256 * MIB;
    let cluster = |c: u16| {
        let mut d = NodeDecl::new(4 + c, &format!("c{c}"), NodeKind::Fixed);
        if variant.private() {
            d = d.translate(ARM_PRIVATE_BASE[c as usize], private, n(2 + c, 0));
        }
        d = d.translate(ARM_DEVICE_BASE, 0x10000, n(1, 0));
        if variant.swapped() && c == 1 {
            d.translate(ARM_DRAM_BASE, half, n(0, half)).translate(ARM_DRAM_BASE + half, half, n(0, 0))
        } else {
            d.translate(ARM_DRAM_BASE, dram, n(0, 0))
        }
    };
    let mut nodes = vec![
        ram(0, "dram", dram),
        NodeDecl::new(1, "dev", NodeKind::Accepting).accept(0, 0x10000),
        ram(2, "private0", private),
        ram(3, "private1", private),
        cluster(0),
        cluster(1),
        configurable(6, "c0_mmu", pages()),
        configurable(7, "c1_mmu", pages()),
    ];
    for node in &mut nodes {
        node.spec.translate.sort_by_key(|e| e.src.base());
    }
    PlatformSpec {
        name: variant.name().into(),
        nodes,
        reach: vec![(NodeId(6), NodeId(4)), (NodeId(7), NodeId(5))],
        subjects: vec![(SubjectId(1), "os".into())],
        caps: vec![
            mem(n(0, 0), dram, 1),
            mem(n(2, 0), private, 1),
            mem(n(3, 0), private, 1),
            space(6, 1 << 32, 1),
            space(7, 1 << 32, 1),
        ],
    }
}

/// Fixed builtin names; `pcie_scale:<n>` is accepted besides these.
pub fn builtin_names() -> Vec<&'static str> {
    let mut v = vec!["xeon_phi"];
    v.extend(ArmVariant::ALL.iter().map(|a| a.name()));
    v
}

pub fn builtin(name: &str) -> Result<PlatformSpec, PlatformError> {
    if name == "xeon_phi" {
        return Ok(xeon_phi());
    }
    if let Some(v) = ArmVariant::ALL.iter().find(|v| v.name() == name) {
        return Ok(arm(*v));
    }
    let count = name
        .strip_prefix("pcie_scale:")
        .or_else(|| name.strip_prefix("pcie_scale(").and_then(|s| s.strip_suffix(')')))
        .and_then(|s| s.parse().ok());
    match count {
        Some(n) => pcie_scale(n),
        None => Err(PlatformError::UnknownPlatform(name.into())),
    }
}
