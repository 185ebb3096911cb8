//! Semantic and visual mining of adverse drug events (ADE) reported in
//! clinical-trial registries.
//!
//! The crate is organised bottom-up:
//!
//! - [`taxonomy`]: multi-parent classification hierarchies (active
//!   principles, indications, trial types, ADE categories).
//! - [`model`]: trials, periods, patient groups, treatments and ADE
//!   observations, assembled into a validated [`model::Dataset`].
//! - [`ingestion`]: registry XML parsing, regimen extraction, term mapping,
//!   curation CSVs and the native on-disk dataset format.
//! - [`query`]: granularity-aware group matching and the three result sets.
//! - [`normalization`]: per-trial weights, placebo correction, direct/indirect
//!   mixing and aggregation into 26-dimensional [`normalization::AdeProfile`]s.
//! - [`glyph`]: deterministic SVG flower glyphs and the table colour scale.
//! - [`search`]: URL parameter scheme and search response assembly used by
//!   the HTTP service.

pub mod glyph;
pub mod ingestion;
pub mod model;
pub mod normalization;
pub mod query;
pub mod search;
pub mod taxonomy;

pub use model::{Dataset, DatasetSummary};
pub use taxonomy::{NodeKind, Taxonomy, TaxonomyNode};
