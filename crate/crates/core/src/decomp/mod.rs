//! Inverse direction: extraction of partial-tube triples from sampled
//! product immersions, metric classification, sphere recovery for curves,
//! moulding surfaces and the flat-normal-bundle net analysis.

pub mod classify;
pub mod extract;
pub mod moulding;
pub mod net;
pub mod sphere;

#[cfg(test)]
mod tests;

pub use classify::{classify_metric, classify_metric_fn, MetricClass, Verdict};
pub use extract::{extract_tube, substantial_reduction, Certificates, ExtractOptions, ExtractionResult};
pub use moulding::{moulding_reconstruct, MouldingOptions, MouldingResult};
pub use net::{flat_normal_net_analysis, FamilyReport, NetAnalysis, NetOptions, NetSplit};
pub use sphere::{curve_sphere_recovery, SphereRecovery, SphereResiduals};
