//! The safety node and its robot-controller simulator.
//!
//! A node pulls thermal frames from a [`source::FrameSource`], runs the
//! hybrid detector, maps the result onto zones and the safety state machine,
//! and commands machines over newline-delimited JSON on TCP. Safety commands
//! are acknowledged before the next frame is processed; detection events go
//! to an optional edge sink on a best-effort queue. Pixel data never leaves
//! the node.

pub mod config;
pub mod edge;
pub mod link;
pub mod machine;
pub mod node;
pub mod protocol;
pub mod source;
pub mod status;

pub use config::{NodeConfig, SourceConfig};
pub use machine::{run_machine_sim, spawn_machine_sim, MachineSimConfig, MachineSimHandle, MachineState};
pub use node::{run_node, Node, NodeError, NodeSummary};
pub use status::status_query;

/// Milliseconds since the Unix epoch.
pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}
