//! Route-query timing on the PCIe scaling platform.
//!
//! Each point builds the graph once, runs a warmup, then times every query
//! separately. Repetitions run one after another on the calling thread so
//! that no two timed queries overlap.

use std::hint::black_box;
use std::time::Instant;

use crate::net::NodeId;
use crate::platform::{pcie_scale, PlatformError, PCIE_BASELINE_NODES};
use crate::topo::{route, route_reference, RouteBlueprint, TopoError, TopologyGraph};

pub const MIN_REPS: usize = 1000;
pub const CSV_HEADER: [&str; 4] = ["device_count", "impl", "median_ns", "p95_ns"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RouteImpl {
    Matrix,
    Reference,
}

impl RouteImpl {
    pub const ALL: [RouteImpl; 2] = [RouteImpl::Matrix, RouteImpl::Reference];

    pub fn name(self) -> &'static str {
        match self {
            RouteImpl::Matrix => "matrix",
            RouteImpl::Reference => "reference",
        }
    }

    pub fn run(self, g: &TopologyGraph, src: NodeId, dst: NodeId) -> Result<RouteBlueprint, TopoError> {
        match self {
            RouteImpl::Matrix => route(g, src, dst),
            RouteImpl::Reference => route_reference(g, src, dst),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchPoint {
    pub device_count: usize,
    pub imp: RouteImpl,
    pub median_ns: u64,
    pub p95_ns: u64,
}

impl BenchPoint {
    pub fn csv_record(&self) -> [String; 4] {
        [
            self.device_count.to_string(),
            self.imp.name().to_string(),
            self.median_ns.to_string(),
            self.p95_ns.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub reps: usize,
    pub warmup: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { reps: MIN_REPS, warmup: 200 }
    }
}

/// Nearest-rank percentile of an ascending slice; `p` in `0..=100`.
pub fn percentile(sorted: &[u64], p: u32) -> u64 {
    assert!(!sorted.is_empty() && p <= 100);
    let rank = (u64::from(p) * sorted.len() as u64).div_ceil(100).max(1);
    sorted[rank as usize - 1]
}

/// The query being timed: from the last device to host DRAM.
pub fn scale_query(devices: usize) -> (NodeId, NodeId) {
    assert!(devices > 0);
    (NodeId((PCIE_BASELINE_NODES + 2 * (devices - 1)) as u16), NodeId(0))
}

pub fn scale_graph(devices: usize) -> Result<TopologyGraph, PlatformError> {
    Ok(TopologyGraph::from_platform(&pcie_scale(devices)?))
}

pub fn time_query(g: &TopologyGraph, imp: RouteImpl, src: NodeId, dst: NodeId, cfg: BenchConfig) -> (u64, u64) {
    for _ in 0..cfg.warmup {
        black_box(imp.run(black_box(g), src, dst)).ok();
    }
    let mut samples: Vec<u64> = (0..cfg.reps.max(1))
        .map(|_| {
            let t = Instant::now();
            black_box(imp.run(black_box(g), src, dst)).ok();
            t.elapsed().as_nanos() as u64
        })
        .collect();
    samples.sort_unstable();
    (percentile(&samples, 50), percentile(&samples, 95))
}

pub fn bench_scale(counts: &[usize], impls: &[RouteImpl], cfg: BenchConfig) -> Result<Vec<BenchPoint>, PlatformError> {
    let mut out = Vec::new();
    for &n in counts {
        let g = scale_graph(n)?;
        let (src, dst) = scale_query(n);
        for &imp in impls {
            let (median_ns, p95_ns) = time_query(&g, imp, src, dst, cfg);
            out.push(BenchPoint { device_count: n, imp, median_ns, p95_ns });
        }
    }
    Ok(out)
}

/// `min, min+step, ...` up to and including `max`.
pub fn device_counts(min: usize, max: usize, step: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (min..=max).step_by(step.max(1)).collect();
    if v.last() != Some(&max) && min <= max {
        v.push(max);
    }
    v
}
