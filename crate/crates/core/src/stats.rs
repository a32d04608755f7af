//! Capability accounting: how much memory the capability store costs
//! relative to the memory it manages.

use crate::platform::{BootError, PlatformSpec};
use crate::refmon::{CapType, InitialCap, KernelState, MonitorError, Payload, Rights, CAP_BYTES, PAGE_SIZE};
use crate::topo::TopologyGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub capability_count: usize,
    pub bytes_of_capabilities: u64,
    pub managed_memory_bytes: u64,
    /// `bytes_of_capabilities / managed_memory_bytes`, or zero when nothing
    /// is managed.
    pub overhead_ratio: f64,
    pub mdb_depth: u32,
    pub graph_diameter: usize,
}

impl StatsReport {
    pub fn of(st: &KernelState, graph: &TopologyGraph) -> Self {
        let capability_count = st.mdb.len();
        let bytes_of_capabilities = capability_count as u64 * CAP_BYTES as u64;
        let managed_memory_bytes: u64 = st.memory.iter().map(|(_, s)| s).sum();
        let overhead_ratio = if managed_memory_bytes == 0 {
            0.0
        } else {
            bytes_of_capabilities as f64 / managed_memory_bytes as f64
        };
        StatsReport {
            capability_count,
            bytes_of_capabilities,
            managed_memory_bytes,
            overhead_ratio,
            mdb_depth: st.mdb.depth(),
            graph_diameter: graph.diameter(),
        }
    }

    /// Field names and values in a fixed order, for tabular output.
    pub fn fields(&self) -> [(&'static str, String); 6] {
        [
            ("capability_count", self.capability_count.to_string()),
            ("bytes_of_capabilities", self.bytes_of_capabilities.to_string()),
            ("managed_memory_bytes", self.managed_memory_bytes.to_string()),
            ("overhead_ratio", self.overhead_ratio.to_string()),
            ("mdb_depth", self.mdb_depth.to_string()),
            ("graph_diameter", self.graph_diameter.to_string()),
        ]
    }
}

/// The most fragmented state memory can reach: every RAM frame of the
/// platform held as its own Frame capability and nothing else.
pub fn worst_case_state(spec: &PlatformSpec) -> Result<KernelState, BootError> {
    let mut st = KernelState::new(spec.net(), spec.config_space());
    for (id, label) in &spec.subjects {
        st.add_subject(*id, label.clone());
    }
    let owner = spec.subjects.first().map(|(id, _)| *id).unwrap_or(crate::refmon::MONITOR);
    let mut frames = Vec::new();
    for (base, size) in spec.memory() {
        if size % PAGE_SIZE != 0 {
            return Err(BootError::Monitor(MonitorError::RangeError));
        }
        st.declare_memory(base, size);
        frames.extend((0..size / PAGE_SIZE).map(|i| InitialCap {
            ctype: CapType::Frame,
            base: base.offset(i * PAGE_SIZE),
            size: PAGE_SIZE,
            rights: Rights::ACCESS.union(Rights::GRANT),
            owner,
            payload: Payload::None,
        }));
    }
    st.install_initial_batch(&frames).map_err(BootError::Monitor)?;
    Ok(st)
}
