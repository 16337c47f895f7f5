//! JSON documents for fitted models and tests, TSV tables for per-SNP output.
//! Every file is written to a temporary sibling and renamed into place.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use super::ingest::{AnnotationReport, IngestionReport};
use crate::em::{EmOptions, FitDiagnostics, FitResult};
use crate::error::{GpaError, Result};
use crate::inference::{FdrReport, LrtResult, StdErrorReport};
use crate::model::{enumerate_states, GpaParams, PValueMatrix, PosteriorMatrix, P_FLOOR};

/// Schema version written to every JSON document.
pub const SCHEMA_VERSION: &str = "1.0";

/// Where the data of a fit came from, enough to re-ingest it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub pvalue_files: Vec<String>,
    pub pvalue_columns: Option<Vec<String>>,
    pub annotation_file: Option<String>,
    pub annotation_columns: Option<Vec<String>>,
    pub fill_missing: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub threads: usize,
    pub chunk_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub gpa_spec_version: String,
    pub study_labels: Vec<String>,
    pub annotation_labels: Vec<String>,
    pub params: GpaParams,
    pub std_errors: Option<StdErrorReport>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub constrained_null: bool,
    pub diagnostics: FitDiagnostics,
    pub options: EmOptions,
    pub inputs: InputRecord,
    pub ingestion: IngestionReport,
    pub annotation_ingestion: Option<AnnotationReport>,
    pub run: RunSettings,
}

impl FitDocument {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fit: &FitResult,
        pvalues: &PValueMatrix,
        annotation_labels: Vec<String>,
        inputs: InputRecord,
        ingestion: IngestionReport,
        annotation_ingestion: Option<AnnotationReport>,
        run: RunSettings,
    ) -> Self {
        Self {
            gpa_spec_version: SCHEMA_VERSION.to_string(),
            study_labels: pvalues.study_labels().to_vec(),
            annotation_labels,
            params: fit.params.clone(),
            std_errors: fit.std_errors.clone(),
            loglik: fit.loglik(),
            iterations: fit.iterations,
            converged: fit.converged,
            constrained_null: fit.constrained_null,
            diagnostics: fit.diagnostics.clone(),
            options: fit.options.clone(),
            inputs,
            ingestion,
            annotation_ingestion,
            run,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtDocument {
    pub gpa_spec_version: String,
    #[serde(flatten)]
    pub result: LrtResult,
    pub inputs: InputRecord,
    pub run: RunSettings,
}

impl LrtDocument {
    /// P-values below the representable floor are written as 0.
    pub fn new(result: &LrtResult, inputs: InputRecord, run: RunSettings) -> Self {
        let mut result = result.clone();
        if result.p_value < P_FLOOR {
            result.p_value = 0.0;
        }
        Self {
            gpa_spec_version: SCHEMA_VERSION.to_string(),
            result,
            inputs,
            run,
        }
    }
}

fn check_version(v: &serde_json::Value, path: &Path) -> Result<()> {
    match v.get("gpa_spec_version").and_then(|s| s.as_str()) {
        Some(SCHEMA_VERSION) => Ok(()),
        Some(other) => Err(GpaError::Data(format!(
            "{}: unsupported schema version {other}",
            path.display()
        ))),
        None => Err(GpaError::Data(format!("{}: missing gpa_spec_version", path.display()))),
    }
}

/// Writes through a temporary file in the target directory, then renames it.
pub fn write_atomic(path: impl AsRef<Path>, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = NamedTempFile::new_in(dir).map_err(|e| GpaError::io(dir, e))?;
    let mut w = BufWriter::new(tmp);
    fill(&mut w).map_err(|e| GpaError::io(path, e))?;
    let tmp = w.into_inner().map_err(|e| GpaError::io(path, e.into_error()))?;
    tmp.persist(path).map_err(|e| GpaError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| GpaError::Numerical(format!("serializing JSON: {e}")))?;
    write_atomic(path, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")
    })
}

/// Reads a versioned JSON document.
pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| GpaError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| GpaError::Data(format!("{}: {e}", path.display())))?;
    check_version(&value, path)?;
    serde_json::from_value(value).map_err(|e| GpaError::Data(format!("{}: {e}", path.display())))
}

/// `snp_id` followed by one posterior column per association state.
pub fn write_posteriors(path: impl AsRef<Path>, snp_ids: &[String], posteriors: &PosteriorMatrix) -> Result<()> {
    let k = posteriors.n_states().trailing_zeros() as usize;
    let states = enumerate_states(k)?;
    if snp_ids.len() != posteriors.n_snps() {
        return Err(GpaError::Config("posterior rows do not match SNP ids".into()));
    }
    write_atomic(path, |w| {
        write!(w, "snp_id")?;
        for s in &states {
            write!(w, "\tstate_{}", s.label())?;
        }
        writeln!(w)?;
        for (id, row) in snp_ids.iter().zip(posteriors.values.rows()) {
            write!(w, "{id}")?;
            for z in row {
                write!(w, "\t{z}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

/// Per-SNP local fdr and 0/1 decision for each study, in input order,
/// followed by one `#` summary line per study.
pub fn write_decisions(
    path: impl AsRef<Path>,
    snp_ids: &[String],
    study_labels: &[String],
    report: &FdrReport,
) -> Result<()> {
    let k = study_labels.len();
    if report.local_fdr.ncols() != k || report.local_fdr.nrows() != snp_ids.len() {
        return Err(GpaError::Config("FDR report does not match SNPs and studies".into()));
    }
    write_atomic(path, |w| {
        write!(w, "snp_id")?;
        for s in study_labels {
            write!(w, "\tlocal_fdr_{s}")?;
        }
        for s in study_labels {
            write!(w, "\tdeclared_{s}")?;
        }
        writeln!(w)?;
        for (j, id) in snp_ids.iter().enumerate() {
            write!(w, "{id}")?;
            for kk in 0..k {
                write!(w, "\t{}", report.local_fdr[[j, kk]])?;
            }
            for kk in 0..k {
                write!(w, "\t{}", u8::from(report.decisions[[j, kk]]))?;
            }
            writeln!(w)?;
        }
        for (kk, s) in study_labels.iter().enumerate() {
            let kappa = report.threshold_kappa[kk].map_or("NA".to_string(), |x| x.to_string());
            let n: usize = report.decisions.column(kk).iter().filter(|&&d| d).count();
            writeln!(
                w,
                "# summary\tstudy={s}\ttau={}\tkappa={kappa}\trealized_fdr={}\tn_declared={n}",
                report.tau, report.realized_global_fdr[kk]
            )?;
        }
        Ok(())
    })
}
