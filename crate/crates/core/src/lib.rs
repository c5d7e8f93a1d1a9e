//! Detection and ranking of multi-circuit pole risk zones in distribution
//! networks.

pub mod association;
pub mod geometry;
pub mod ingest;
pub mod mcp_detect;
pub mod pipeline;
pub mod prioritize;
pub mod report;
pub mod spatial_index;
pub mod synth;
pub mod zoning;
