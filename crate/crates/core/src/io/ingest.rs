//! Tab-separated input of p-values and annotations.
//!
//! Files carry a header row and the SNP id in the first column. Rows are
//! joined on SNP id, never by position.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{GpaError, Result};
use crate::model::{clamp_pvalue, AnnotationMatrix, PValueMatrix};

const MISSING_TOKENS: [&str; 6] = ["", "NA", "na", "nan", "NaN", "."];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileReport {
    pub path: String,
    pub rows_read: usize,
    /// Rows whose SNP is absent from at least one other file.
    pub rows_unmatched: usize,
}

/// Bookkeeping of a p-value ingestion.
/// `rows_kept + rows_dropped_missing == snp_intersection_size`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub files: Vec<FileReport>,
    pub snp_intersection_size: usize,
    pub rows_kept: usize,
    /// Rows of the intersection with a missing or non-numeric p-value.
    pub rows_dropped_missing: usize,
    /// Zero (or sub-floor) p-values raised to the floor.
    pub pvalues_clamped_zero: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationReport {
    pub path: String,
    pub rows_read: usize,
    /// Annotation rows whose SNP is not in the analysis set.
    pub rows_unmatched: usize,
    /// Analysis SNPs without an annotation row, filled by `fill_missing`.
    pub filled_missing: usize,
}

struct Table {
    columns: Vec<String>,
    ids: Vec<String>,
    // raw fields of the selected columns, one vector per row
    rows: Vec<Vec<String>>,
    // 1-based data row numbers (header excluded)
    row_numbers: Vec<usize>,
}

fn data_error(path: &Path, row: usize, msg: impl std::fmt::Display) -> GpaError {
    GpaError::Data(format!("{}: data row {row} (line {}): {msg}", path.display(), row + 1))
}

/// Reads the header and the requested columns (all non-id columns when
/// `wanted` is `None`). Columns named in `wanted` but absent are skipped;
/// callers check coverage.
fn read_table(path: &Path, wanted: Option<&[String]>) -> Result<Table> {
    let file = File::open(path).map_err(|e| GpaError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| GpaError::io(path, e))?,
        None => return Err(GpaError::Data(format!("{}: empty file", path.display()))),
    };
    let header: Vec<String> = header
        .trim_end_matches('\r')
        .split('\t')
        .map(str::to_string)
        .collect();
    if header.len() < 2 {
        return Err(GpaError::Data(format!(
            "{}: header needs a SNP id column and at least one value column",
            path.display()
        )));
    }
    let selected: Vec<usize> = match wanted {
        None => (1..header.len()).collect(),
        Some(names) => (1..header.len()).filter(|&c| names.contains(&header[c])).collect(),
    };
    let columns = selected.iter().map(|&c| header[c].clone()).collect();

    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut row_numbers = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| GpaError::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != header.len() {
            return Err(data_error(
                path,
                row,
                format!("expected {} fields, found {}", header.len(), fields.len()),
            ));
        }
        if fields[0].is_empty() {
            return Err(data_error(path, row, "empty SNP id"));
        }
        ids.push(fields[0].to_string());
        rows.push(selected.iter().map(|&c| fields[c].trim().to_string()).collect());
        row_numbers.push(row);
    }
    check_duplicates(path, &ids)?;
    Ok(Table {
        columns,
        ids,
        rows,
        row_numbers,
    })
}

fn check_duplicates(path: &Path, ids: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for id in ids {
        if !seen.insert(id.as_str()) && !dups.contains(&id.as_str()) {
            dups.push(id.as_str());
            if dups.len() == 5 {
                break;
            }
        }
    }
    if dups.is_empty() {
        Ok(())
    } else {
        Err(GpaError::Data(format!(
            "{}: duplicate SNP ids: {}",
            path.display(),
            dups.join(", ")
        )))
    }
}

/// Parses a p-value field: `Ok(None)` for missing or non-numeric entries,
/// an error for numbers outside [0, 1].
fn parse_pvalue(path: &Path, row: usize, field: &str) -> Result<Option<f64>> {
    if MISSING_TOKENS.contains(&field) {
        return Ok(None);
    }
    match field.parse::<f64>() {
        Ok(p) if p.is_nan() => Ok(None),
        Ok(p) if (0.0..=1.0).contains(&p) => Ok(Some(p)),
        Ok(p) => Err(data_error(path, row, format!("p-value {p} is outside [0, 1]"))),
        Err(_) => Ok(None),
    }
}

/// Reads p-values from one or more files and inner-joins them on SNP id,
/// keeping the first file's row order. `columns` restricts the study
/// columns (every named column must occur in some file); by default every
/// non-id column is a study.
pub fn read_pvalues<P: AsRef<Path>>(
    paths: &[P],
    columns: Option<&[String]>,
) -> Result<(PValueMatrix, IngestionReport)> {
    if paths.is_empty() {
        return Err(GpaError::Config("no p-value files given".into()));
    }
    let paths: Vec<PathBuf> = paths.iter().map(|p| p.as_ref().to_path_buf()).collect();
    let tables = paths
        .iter()
        .map(|p| read_table(p, columns))
        .collect::<Result<Vec<_>>>()?;
    if let Some(names) = columns {
        for name in names {
            if !tables.iter().any(|t| t.columns.contains(name)) {
                return Err(GpaError::Config(format!("p-value column '{name}' not found in any input file")));
            }
        }
    }
    for (t, p) in tables.iter().zip(&paths) {
        if t.columns.is_empty() && columns.is_none() {
            return Err(GpaError::Data(format!("{}: no p-value columns", p.display())));
        }
    }

    let lookups: Vec<HashMap<&str, usize>> = tables
        .iter()
        .map(|t| t.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect())
        .collect();
    let in_all = |id: &str| lookups.iter().all(|l| l.contains_key(id));
    let intersection: Vec<&str> = tables[0]
        .ids
        .iter()
        .map(String::as_str)
        .filter(|id| in_all(id))
        .collect();
    let files = tables
        .iter()
        .zip(&paths)
        .map(|(t, p)| FileReport {
            path: p.display().to_string(),
            rows_read: t.ids.len(),
            rows_unmatched: t.ids.len() - intersection.len(),
        })
        .collect();

    let labels: Vec<String> = tables.iter().flat_map(|t| t.columns.iter().cloned()).collect();
    let mut kept_ids = Vec::new();
    let mut values = Vec::new();
    let mut dropped = 0;
    let mut clamped = 0;
    for id in &intersection {
        let mut row = Vec::with_capacity(labels.len());
        let mut row_clamped = 0;
        let mut missing = false;
        for ((t, lookup), path) in tables.iter().zip(&lookups).zip(&paths) {
            let i = lookup[id];
            for field in &t.rows[i] {
                match parse_pvalue(path, t.row_numbers[i], field)? {
                    Some(p) => {
                        let (p, was_clamped) = clamp_pvalue(p);
                        row_clamped += usize::from(was_clamped);
                        row.push(p);
                    }
                    None => missing = true,
                }
            }
        }
        if missing {
            dropped += 1;
        } else {
            clamped += row_clamped;
            kept_ids.push(id.to_string());
            values.extend(row);
        }
    }
    if intersection.is_empty() {
        return Err(GpaError::Data("the input files share no SNP ids".into()));
    }
    if kept_ids.is_empty() {
        return Err(GpaError::Data("every shared SNP has a missing p-value".into()));
    }
    let report = IngestionReport {
        files,
        snp_intersection_size: intersection.len(),
        rows_kept: kept_ids.len(),
        rows_dropped_missing: dropped,
        pvalues_clamped_zero: clamped,
    };
    let values = Array2::from_shape_vec((kept_ids.len(), labels.len()), values)
        .map_err(|e| GpaError::Numerical(e.to_string()))?;
    Ok((PValueMatrix::new(kept_ids, values, labels)?, report))
}

/// Reads 0/1 annotations and aligns them to the SNPs of `pvalues`.
/// Analysis SNPs absent from the file are an error unless `fill_missing`
/// supplies a value for them.
pub fn read_annotation(
    path: impl AsRef<Path>,
    columns: Option<&[String]>,
    pvalues: &PValueMatrix,
    fill_missing: Option<u8>,
) -> Result<(AnnotationMatrix, AnnotationReport)> {
    let path = path.as_ref();
    if let Some(v) = fill_missing {
        if v > 1 {
            return Err(GpaError::Config(format!("fill value must be 0 or 1, got {v}")));
        }
    }
    let table = read_table(path, columns)?;
    if let Some(names) = columns {
        if let Some(name) = names.iter().find(|n| !table.columns.contains(n)) {
            return Err(GpaError::Config(format!(
                "annotation column '{name}' not found in {}",
                path.display()
            )));
        }
    }
    if table.columns.is_empty() {
        return Err(GpaError::Data(format!("{}: no annotation columns", path.display())));
    }
    let d = table.columns.len();
    let mut parsed: HashMap<&str, Vec<u8>> = HashMap::with_capacity(table.ids.len());
    for ((id, fields), &row) in table.ids.iter().zip(&table.rows).zip(&table.row_numbers) {
        let vals = fields
            .iter()
            .map(|f| match f.as_str() {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(data_error(path, row, format!("annotation entry '{other}' is not 0 or 1"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        parsed.insert(id.as_str(), vals);
    }

    let m = pvalues.n_snps();
    let mut values = Array2::zeros((m, d));
    let mut filled = 0;
    let mut matched = 0;
    for (j, id) in pvalues.snp_ids().iter().enumerate() {
        match parsed.get(id.as_str()) {
            Some(vals) => {
                matched += 1;
                for (dd, &v) in vals.iter().enumerate() {
                    values[[j, dd]] = v;
                }
            }
            None => match fill_missing {
                Some(v) => {
                    filled += 1;
                    values.row_mut(j).fill(v);
                }
                None => {
                    return Err(GpaError::Data(format!(
                        "{}: no annotation for SNP {id}; pass a fill value to cover missing SNPs",
                        path.display()
                    )))
                }
            },
        }
    }
    let report = AnnotationReport {
        path: path.display().to_string(),
        rows_read: table.ids.len(),
        rows_unmatched: table.ids.len() - matched,
        filled_missing: filled,
    };
    let ann = AnnotationMatrix::new(pvalues.snp_ids().to_vec(), values, table.columns)?;
    Ok((ann, report))
}
