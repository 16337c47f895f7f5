//! Local and global FDR, likelihood-ratio tests and standard errors.

pub mod chisq;
pub mod fdr;
pub mod lrt;
pub mod stderr;

pub use chisq::chi_square_sf;
pub use fdr::{fdr_report, global_fdr_decisions, local_fdr, FdrDecision, FdrReport};
pub use lrt::{test_enrichment, test_pleiotropy, LrtKind, LrtResult};
pub use stderr::{score_vector, standard_errors, FoldEnrichment, StdErrorReport};
