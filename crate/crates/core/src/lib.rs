//! Address-space modelling with decoding nets, plus a capability-based
//! reference monitor that keeps dynamic translation hardware secure.

pub mod authority;
pub mod config;
pub mod net;
pub mod refmon;
pub mod text;
pub mod trace;
pub mod platform;
pub mod topo;
pub mod stats;
pub mod bench;
