//! Joint analysis of GWAS p-values from several studies with binary
//! functional annotations.
//!
//! SNPs fall into one of `2^K` association states over `K` studies. Null
//! p-values are uniform and associated p-values follow `Beta(alpha_k, 1)`;
//! annotations are Bernoulli with a state-dependent rate. The model is fitted
//! by EM and yields local and global false discovery rates, likelihood-ratio
//! tests for pleiotropy and annotation enrichment, and standard errors.

pub mod em;
pub mod error;
pub mod inference;
pub mod io;
pub mod model;
pub mod reduce;
pub mod sim;

pub use em::{e_step, fit, EmOptions, FitDiagnostics, FitResult, InitSpec};
pub use error::{GpaError, Result};
pub use inference::{
    chi_square_sf, fdr_report, global_fdr_decisions, local_fdr, standard_errors, test_enrichment,
    test_pleiotropy, FdrReport, LrtKind, LrtResult, StdErrorReport,
};
pub use model::{
    enumerate_states, total_log_likelihood, AnnotationMatrix, AssociationState, GpaParams,
    PValueMatrix, PosteriorMatrix,
};
