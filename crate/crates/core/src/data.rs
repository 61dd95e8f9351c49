//! Immutable sample containers, validation and CSV ingestion.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CateError, Result};

/// Observed sample: covariates, binary treatment indicator and outcome.
///
/// `tau_true` holds the true individual effect and is only populated for
/// simulated data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    z: Vec<u8>,
    y: Vec<f64>,
    tau_true: Option<Vec<f64>>,
    names: Vec<String>,
}

impl Dataset {
    /// Build a dataset, rejecting anything that violates the invariants.
    pub fn new(x: DMatrix<f64>, z: Vec<u8>, y: Vec<f64>, tau_true: Option<Vec<f64>>) -> Result<Self> {
        let ds = Self::new_unchecked(x, z, y, tau_true);
        let report = validate(&ds);
        if report.is_ok() {
            Ok(ds)
        } else {
            Err(CateError::InvalidData(report.violations.join("; ")))
        }
    }

    /// Build without validation; used by [`validate`] tests and ingestion
    /// diagnostics. Shapes must still agree.
    pub fn new_unchecked(x: DMatrix<f64>, z: Vec<u8>, y: Vec<f64>, tau_true: Option<Vec<f64>>) -> Self {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Dataset { x, z, y, tau_true, names }
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.x.ncols() {
            return Err(CateError::DimensionMismatch {
                expected: self.x.ncols(),
                actual: names.len(),
            });
        }
        self.names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn tau_true(&self) -> Option<&[f64]> {
        self.tau_true.as_deref()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.names
    }

    pub fn is_treated(&self, i: usize) -> bool {
        self.z[i] == 1
    }

    pub fn treated_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.z[i] == 1).collect()
    }

    pub fn control_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.z[i] == 0).collect()
    }

    pub fn n_treated(&self) -> usize {
        self.z.iter().filter(|&&z| z == 1).count()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    /// New dataset made of the given rows (repeats allowed), in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let x = DMatrix::from_fn(rows.len(), self.d(), |r, c| self.x[(rows[r], c)]);
        Dataset {
            x,
            z: rows.iter().map(|&i| self.z[i]).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            tau_true: self.tau_true.as_ref().map(|t| rows.iter().map(|&i| t[i]).collect()),
            names: self.names.clone(),
        }
    }

    /// New dataset restricted to the given covariate columns.
    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        let x = DMatrix::from_fn(self.n(), cols.len(), |r, c| self.x[(r, cols[c])]);
        Dataset {
            x,
            z: self.z.clone(),
            y: self.y.clone(),
            tau_true: self.tau_true.clone(),
            names: cols.iter().map(|&c| self.names[c].clone()).collect(),
        }
    }
}

/// Per-unit estimated propensity (`e_hat`) and prognostic (`p_hat`) scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub e_hat: Vec<f64>,
    pub p_hat: Vec<f64>,
}

impl ScoredSample {
    pub fn new(e_hat: Vec<f64>, p_hat: Vec<f64>) -> Result<Self> {
        if e_hat.len() != p_hat.len() {
            return Err(CateError::InvalidData(format!(
                "score vectors differ in length ({} vs {})",
                e_hat.len(),
                p_hat.len()
            )));
        }
        Ok(ScoredSample { e_hat, p_hat })
    }

    pub fn len(&self) -> usize {
        self.e_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e_hat.is_empty()
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        [self.e_hat[i], self.p_hat[i]]
    }

    pub fn select(&self, rows: &[usize]) -> ScoredSample {
        ScoredSample {
            e_hat: rows.iter().map(|&i| self.e_hat[i]).collect(),
            p_hat: rows.iter().map(|&i| self.p_hat[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, msg: impl Into<String>) {
        self.violations.push(msg.into());
    }
}

/// List every violated dataset invariant. Empty report iff the dataset is usable.
pub fn validate(ds: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = ds.y.len();
    if n < 2 {
        report.push(format!("need at least 2 units, got {n}"));
    }
    if ds.x.ncols() < 1 {
        report.push("need at least 1 covariate");
    }
    if ds.x.nrows() != n {
        report.push(format!("covariate rows ({}) != outcome length ({n})", ds.x.nrows()));
    }
    if ds.z.len() != n {
        report.push(format!("treatment length ({}) != outcome length ({n})", ds.z.len()));
    }
    if let Some(t) = &ds.tau_true {
        if t.len() != n {
            report.push(format!("tau_true length ({}) != outcome length ({n})", t.len()));
        }
    }
    if let Some(i) = ds.z.iter().position(|&z| z > 1) {
        report.push(format!("treatment indicator not binary at row {i}"));
    }
    if !ds.z.is_empty() {
        if !ds.z.contains(&1) {
            report.push("treated arm empty");
        }
        if !ds.z.contains(&0) {
            report.push("control arm empty");
        }
    }
    if let Some(k) = ds.x.iter().position(|v| !v.is_finite()) {
        let rows = ds.x.nrows().max(1);
        report.push(format!(
            "non-finite covariate at row {}, column {}",
            k % rows,
            k / rows
        ));
    }
    if let Some(i) = ds.y.iter().position(|v| !v.is_finite()) {
        report.push(format!("non-finite outcome at row {i}"));
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub eps: f64,
    pub violating_indices: Vec<usize>,
}

impl OverlapReport {
    pub fn count(&self) -> usize {
        self.violating_indices.len()
    }

    pub fn violated(&self) -> bool {
        !self.violating_indices.is_empty()
    }
}

/// Units whose estimated propensity falls outside `[eps, 1 - eps]`.
pub fn check_overlap(scores: &ScoredSample, eps: f64) -> Result<OverlapReport> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(CateError::param("eps", format!("must lie in (0, 0.5), got {eps}")));
    }
    let violating_indices = scores
        .e_hat
        .iter()
        .enumerate()
        .filter(|(_, &e)| !(e >= eps && e <= 1.0 - eps))
        .map(|(i, _)| i)
        .collect();
    Ok(OverlapReport { eps, violating_indices })
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub y_col: String,
    pub z_col: String,
    /// Explicit covariate columns; `None` selects every `x<k>` column in
    /// numeric order.
    pub x_cols: Option<Vec<String>>,
    pub tau_col: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            y_col: "y".into(),
            z_col: "z".into(),
            x_cols: None,
            tau_col: "tau_true".into(),
        }
    }
}

fn covariate_index(name: &str) -> Option<usize> {
    name.strip_prefix('x')?.parse::<usize>().ok()
}

fn parse_cell(headers: &csv::StringRecord, rec: &csv::StringRecord, col: usize, row: usize) -> Result<f64> {
    let raw = rec.get(col).unwrap_or("");
    let v: f64 = raw.parse().map_err(|_| {
        CateError::InvalidData(format!(
            "row {row}, column `{}`: cannot parse {raw:?} as a number",
            &headers[col]
        ))
    })?;
    if !v.is_finite() {
        return Err(CateError::InvalidData(format!(
            "row {row}, column `{}`: non-finite value",
            &headers[col]
        )));
    }
    Ok(v)
}

/// Read a dataset from CSV. Empty or unparsable cells are rejected with
/// their row number; there is no imputation.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let y_idx = find(&schema.y_col).ok_or_else(|| CateError::Schema(format!("missing column `{}`", schema.y_col)))?;
    let z_idx = find(&schema.z_col).ok_or_else(|| CateError::Schema(format!("missing column `{}`", schema.z_col)))?;
    let tau_idx = find(&schema.tau_col);
    let (x_idx, names): (Vec<usize>, Vec<String>) = match &schema.x_cols {
        Some(cols) => {
            let mut idx = Vec::with_capacity(cols.len());
            for c in cols {
                idx.push(find(c).ok_or_else(|| CateError::Schema(format!("missing column `{c}`")))?);
            }
            (idx, cols.clone())
        }
        None => {
            let mut found: Vec<(usize, usize, String)> = headers
                .iter()
                .enumerate()
                .filter_map(|(i, h)| covariate_index(h).map(|k| (k, i, h.to_string())))
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(CateError::Schema("no covariate columns (`x1`, `x2`, ...) found".into()));
            }
            found.into_iter().map(|(_, i, h)| (i, h)).unzip()
        }
    };

    let parse = |rec: &csv::StringRecord, col: usize, row: usize| parse_cell(&headers, rec, col, row);

    let mut xs = Vec::new();
    let mut z = Vec::new();
    let mut y = Vec::new();
    let mut tau = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // data rows are 1-based after the header line
        let row = r + 1;
        y.push(parse(&rec, y_idx, row)?);
        let zv = parse(&rec, z_idx, row)?;
        if zv != 0.0 && zv != 1.0 {
            return Err(CateError::InvalidData(format!("row {row}: treatment must be 0 or 1, got {zv}")));
        }
        z.push(zv as u8);
        for &c in &x_idx {
            xs.push(parse(&rec, c, row)?);
        }
        if let Some(t) = tau_idx {
            tau.push(parse(&rec, t, row)?);
        }
    }
    let n = y.len();
    let x = DMatrix::from_row_slice(n, x_idx.len(), &xs);
    Dataset::new(x, z, y, tau_idx.map(|_| tau))?.with_names(names)
}

/// Read only the named covariate columns, in the given order. Other
/// columns (outcome, treatment) may be present or absent.
pub fn read_covariates<R: Read>(reader: R, names: &[String]) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = Vec::with_capacity(names.len());
    for c in names {
        idx.push(
            headers
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| CateError::Schema(format!("missing column `{c}`")))?,
        );
    }
    let mut xs = Vec::new();
    let mut n = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for &c in &idx {
            xs.push(parse_cell(&headers, &rec, c, r + 1)?);
        }
        n += 1;
    }
    Ok(DMatrix::from_row_slice(n, names.len(), &xs))
}

/// Write a dataset as CSV with columns `y, z, <covariates>[, tau_true]`.
pub fn write_csv<W: Write>(writer: W, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_string(), "z".to_string()];
    header.extend(ds.names.iter().cloned());
    if ds.tau_true.is_some() {
        header.push("tau_true".into());
    }
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(ds.y[i].to_string());
        rec.push(ds.z[i].to_string());
        for j in 0..ds.d() {
            rec.push(ds.x[(i, j)].to_string());
        }
        if let Some(t) = &ds.tau_true {
            rec.push(t[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
