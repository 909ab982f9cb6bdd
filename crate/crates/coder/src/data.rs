//! LibSVM-format ingestion: parsing, label mapping, feature normalization.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use thiserror::Error;

use crate::sparse::{SparseError, SparseMatrix};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("nonascending index at line {line}")]
    NonAscendingIndex { line: usize },
    #[error("feature index 0 at line {line} (indices are 1-based)")]
    ZeroIndex { line: usize },
    #[error("labels are not binary: found {0} distinct values")]
    NotBinary(usize),
    #[error("label count {labels} does not match row count {rows}")]
    LabelMismatch { labels: usize, rows: usize },
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How features were rescaled at ingestion.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalization {
    None,
    /// Each nonzero row divided by its Euclidean norm.
    UnitRow { row_norms: Vec<f64> },
    /// Each column divided by its max absolute entry (zero columns untouched).
    ColMaxAbs { col_scales: Vec<f64> },
}

/// Requested normalization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationScheme {
    None,
    ScaleToUnitRow,
    ScaleColumnsMaxAbs,
}

impl NormalizationScheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Self::None),
            "unit-row" | "scale_to_unit_row" => Some(Self::ScaleToUnitRow),
            "col-max-abs" | "scale_columns_max_abs" => Some(Self::ScaleColumnsMaxAbs),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::ScaleToUnitRow => "unit-row",
            Self::ScaleColumnsMaxAbs => "col-max-abs",
        }
    }
}

/// A classification mapping applied by [`map_labels`]: the larger raw value
/// became `+1`, the smaller `−1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelMapping {
    pub negative: f64,
    pub positive: f64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub matrix: SparseMatrix,
    pub labels: Vec<f64>,
    pub label_mapping: Option<LabelMapping>,
    pub normalization: Normalization,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(matrix: SparseMatrix, labels: Vec<f64>) -> Result<Self, DataError> {
        if labels.len() != matrix.n_rows() {
            return Err(DataError::LabelMismatch {
                labels: labels.len(),
                rows: matrix.n_rows(),
            });
        }
        Ok(Self {
            matrix,
            labels,
            label_mapping: None,
            normalization: Normalization::None,
            feature_names: None,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.n_cols()
    }

    /// True when every label is exactly ±1.
    pub fn labels_are_signs(&self) -> bool {
        self.labels.iter().all(|&b| b == 1.0 || b == -1.0)
    }
}

/// Parses LibSVM text: `label idx:val idx:val ...` per nonempty line with
/// 1-based strictly ascending indices; `#` starts a comment. The dimension is
/// the larger of `d_hint` and the largest index seen.
pub fn parse_libsvm(reader: impl BufRead, d_hint: Option<usize>) -> Result<Dataset, DataError> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut max_index = 0usize;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let label: f64 = label_tok.parse().map_err(|_| DataError::Parse {
            line: line_no,
            message: format!("non-numeric label `{label_tok}`"),
        })?;
        let mut row: Vec<(usize, f64)> = Vec::new();
        let mut prev_index = 0usize;
        for tok in tokens {
            let (i_str, v_str) = tok.split_once(':').ok_or_else(|| DataError::Parse {
                line: line_no,
                message: format!("expected `index:value`, got `{tok}`"),
            })?;
            let i: usize = i_str.parse().map_err(|_| DataError::Parse {
                line: line_no,
                message: format!("non-numeric index `{i_str}`"),
            })?;
            let v: f64 = v_str.parse().map_err(|_| DataError::Parse {
                line: line_no,
                message: format!("non-numeric value `{v_str}`"),
            })?;
            if i == 0 {
                return Err(DataError::ZeroIndex { line: line_no });
            }
            if i <= prev_index {
                return Err(DataError::NonAscendingIndex { line: line_no });
            }
            prev_index = i;
            max_index = max_index.max(i);
            row.push((i - 1, v));
        }
        labels.push(label);
        rows.push(row);
    }

    let d = max_index.max(d_hint.unwrap_or(0));
    let matrix = SparseMatrix::from_rows(d, &rows)?;
    Dataset::new(matrix, labels)
}

/// Opens a LibSVM file, transparently decompressing when the name ends in
/// `.gz`.
pub fn read_libsvm_path(path: impl AsRef<Path>, d_hint: Option<usize>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        parse_libsvm(BufReader::new(MultiGzDecoder::new(file)), d_hint)
    } else {
        parse_libsvm(BufReader::new(file), d_hint)
    }
}

/// Emits a dataset back to LibSVM text (1-based ascending indices, full
/// precision values).
pub fn write_libsvm(ds: &Dataset, mut w: impl Write) -> std::io::Result<()> {
    for t in 0..ds.n_samples() {
        write!(w, "{}", ds.labels[t])?;
        let (cols, vals) = ds.matrix.row(t);
        for (&c, &v) in cols.iter().zip(vals) {
            write!(w, " {}:{}", c + 1, v)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Maps two-valued raw labels to ±1: the larger raw value becomes `+1`.
pub fn map_labels(ds: Dataset) -> Result<Dataset, DataError> {
    let mut distinct: Vec<f64> = Vec::new();
    for &b in &ds.labels {
        if !distinct.iter().any(|&x| x == b) {
            distinct.push(b);
            if distinct.len() > 2 {
                break;
            }
        }
    }
    if distinct.len() != 2 {
        return Err(DataError::NotBinary(distinct.len()));
    }
    let (lo, hi) = if distinct[0] < distinct[1] {
        (distinct[0], distinct[1])
    } else {
        (distinct[1], distinct[0])
    };
    let labels = ds
        .labels
        .iter()
        .map(|&b| if b == hi { 1.0 } else { -1.0 })
        .collect();
    Ok(Dataset {
        labels,
        label_mapping: Some(LabelMapping { negative: lo, positive: hi }),
        ..ds
    })
}

/// Rescales features. Constants there are preprocessing dependent, so the
/// applied transformation is recorded on the returned dataset.
pub fn normalize_features(ds: Dataset, scheme: NormalizationScheme) -> Dataset {
    match scheme {
        NormalizationScheme::None => ds,
        NormalizationScheme::ScaleToUnitRow => {
            let norms: Vec<f64> = (0..ds.n_samples())
                .map(|t| ds.matrix.row_norm_sq(t).sqrt())
                .collect();
            let matrix = ds
                .matrix
                .map_values(|t, _, v| if norms[t] > 0.0 { v / norms[t] } else { v });
            Dataset {
                matrix,
                normalization: Normalization::UnitRow { row_norms: norms },
                ..ds
            }
        }
        NormalizationScheme::ScaleColumnsMaxAbs => {
            let scales = ds.matrix.col_max_abs();
            let matrix = ds
                .matrix
                .map_values(|_, c, v| if scales[c] > 0.0 { v / scales[c] } else { v });
            Dataset {
                matrix,
                normalization: Normalization::ColMaxAbs { col_scales: scales },
                ..ds
            }
        }
    }
}
