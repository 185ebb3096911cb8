//! From registry files to a [`Dataset`](crate::model::Dataset): XML parsing,
//! regimen extraction, term mapping, curation CSVs, dataset building and the
//! native on-disk format.

pub mod build;
pub mod curation;
pub mod regimen;
pub mod store;
pub mod terms;
pub mod xml;

use thiserror::Error;

pub use build::{build_dataset, ingest_files, BuildWarning, IngestPaths};
pub use curation::{
    draft_curation, export_curation_csv, load_curation_csv, parse_curation_rows, rows_to_csv, score_extraction,
    Curation, CurationError, CurationRow, ExtractionScore,
};
pub use regimen::{extract_regimen, RegimenExtraction, RegimenExtractor};
pub use store::{read_dataset, write_dataset, StoreError};
pub use terms::{map_ade_term, SocMap, TermDictionary, TermError};
pub use xml::{parse_registry_xml, RegistryRecord, XmlError};

use crate::model::ModelError;
use crate::taxonomy::TaxonomyError;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{file}: {source}")]
    Xml {
        file: String,
        #[source]
        source: XmlError,
    },
    #[error("taxonomy: {0}")]
    Taxonomy(#[from] TaxonomyError),
    #[error("{trial}: {source}")]
    Term {
        trial: String,
        #[source]
        source: TermError,
    },
    #[error(transparent)]
    TermFile(#[from] TermError),
    #[error(transparent)]
    Curation(#[from] CurationError),
    #[error("curation names group `{group}` of `{trial}`, which the registry file does not declare")]
    UnknownCurationGroup { trial: String, group: String },
    #[error("curation names trial `{0}`, which has no registry file")]
    UnknownCurationTrial(String),
    #[error("two registry files describe trial `{0}`")]
    DuplicateRecord(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub(crate) fn io_error(path: &std::path::Path, err: std::io::Error) -> IngestError {
    IngestError::Io { path: path.display().to_string(), message: err.to_string() }
}
