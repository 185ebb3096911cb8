//! Test support: seeded random trial datasets and independent brute-force
//! re-implementations of subsumption, matching and aggregation, used as
//! oracles by the property suites, plus the committed pain corpus.

pub mod corpus;
pub mod fixture;
pub mod invariants;
pub mod oracle;

pub use fixture::Fixture;
