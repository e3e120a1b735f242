//! Analysis of multilayer ownership and withholding-tax networks.
//!
//! Firm operating income flows up shareholding chains ([`flow`]); pairs of
//! jurisdiction and sector are scored as sinks and conduits of that value
//! ([`conduit`]); jurisdictions are scored by how much dividend routing
//! passes through them on the withholding-tax network ([`routing`]); the
//! two layers are fused into one score ([`multilayer`]).

pub mod codes;
pub mod conduit;
pub mod flow;
pub mod format;
pub mod ingest;
pub mod model;
pub mod multilayer;
pub mod pipeline;
pub mod report;
pub mod routing;
pub mod score;
pub mod synth;

pub use model::{JurisdictionCode, MultilayerNetwork, PairKey, SectorCode, TaxNetwork};
pub use pipeline::{AnalysisParams, InputPaths, PipelineError};
