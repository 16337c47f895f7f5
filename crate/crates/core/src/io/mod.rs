//! File input and output.

pub mod ingest;
pub mod serialize;

pub use ingest::{read_annotation, read_pvalues, AnnotationReport, FileReport, IngestionReport};
pub use serialize::{
    read_json, write_decisions, write_json, write_posteriors, FitDocument, InputRecord, LrtDocument,
    RunSettings, SCHEMA_VERSION,
};
