//! CSV ingestion and result files.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::columns::{ColumnSource, FileColumns, InMemoryColumns};
use crate::diagnostics::RefitReport;
use crate::em::{EmConfig, FitResult, IterationTrace};
use crate::error::{Error, Result};
use crate::lasso::LassoConfig;
use crate::model::{Dataset, ModelParams};
use crate::preprocess::{self, TransformMode, TransformSpec};
pub use crate::restart::RestartSummary;
use crate::selection::{Posterior, SelectedColumn};
use crate::sim::SimDesign;

/// Shortest text with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// A numeric table read column-wise from a headed CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map(Vec::len).unwrap_or(0)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.index_of(name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::Schema(format!("no column named `{name}`")))
    }
}

/// Read a CSV with a header row. Every cell must parse as a finite number;
/// rows are numbered from 1 for the first data row.
pub fn read_table(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path)?;
    read_table_from(file, &path.display().to_string())
}

pub fn read_table_from<R: std::io::Read>(reader: R, label: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut seen = HashSet::new();
    for h in &headers {
        if h.is_empty() {
            return Err(Error::Schema(format!("{label}: empty column name in header")));
        }
        if !seen.insert(h) {
            return Err(Error::Schema(format!("{label}: duplicate column name `{h}`")));
        }
    }
    let mut columns = vec![Vec::new(); headers.len()];
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != headers.len() {
            return Err(Error::Cell {
                path: label.to_string(),
                row,
                column: "*".into(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let cell_err = |message: String| Error::Cell {
                path: label.to_string(),
                row,
                column: headers[c].clone(),
                message,
            };
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                return Err(cell_err(format!("missing value `{cell}`")));
            }
            let v: f64 = cell.parse().map_err(|_| cell_err(format!("not a number: `{cell}`")))?;
            if !v.is_finite() {
                return Err(cell_err(format!("non-finite value `{cell}`")));
            }
            columns[c].push(v);
        }
    }
    Ok(Table { headers, columns })
}

/// Write named columns as CSV with full-precision numbers.
pub fn write_columns_csv<W: Write>(out: W, names: &[String], columns: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(names)?;
    let n = columns.first().map(Vec::len).unwrap_or(0);
    for i in 0..n {
        w.write_record(columns.iter().map(|c| fmt_f64(c[i])))?;
    }
    w.flush()?;
    Ok(())
}

/// Which CSV columns play which role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Layout {
    pub response: Option<String>,
    /// Locked-in columns (besides the optional intercept).
    pub locked: Vec<String>,
    /// Putative columns; `None` means every remaining column.
    pub putative: Option<Vec<String>>,
    pub intercept: bool,
    /// Keep putative columns that are non-zero in at least this share of rows.
    pub min_prevalence: Option<f64>,
    pub transform: TransformMode,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            response: None,
            locked: Vec::new(),
            putative: None,
            intercept: true,
            min_prevalence: None,
            transform: TransformMode::None,
        }
    }
}

/// Dataset plus the record of the putative-column transform.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    pub transform: TransformSpec,
}

/// Read a CSV and assemble the dataset according to `layout`.
pub fn ingest_csv(path: &Path, layout: &Layout) -> Result<Ingested> {
    let table = read_table(path)?;
    ingest_table(&table, layout)
}

pub fn ingest_table(table: &Table, layout: &Layout) -> Result<Ingested> {
    let response = layout
        .response
        .as_deref()
        .ok_or_else(|| Error::Schema("layout does not name a response column".into()))?;
    let y = table.column(response)?.to_vec();
    let n = y.len();

    let mut x_names = Vec::new();
    let mut x_cols = Vec::new();
    if layout.intercept {
        x_names.push("(Intercept)".to_string());
        x_cols.push(vec![1.0; n]);
    }
    for name in &layout.locked {
        if name == response {
            return Err(Error::Schema(format!("`{name}` is both response and locked-in")));
        }
        x_cols.push(table.column(name)?.to_vec());
        x_names.push(name.clone());
    }

    let taken: HashSet<&str> =
        std::iter::once(response).chain(layout.locked.iter().map(String::as_str)).collect();
    let putative: Vec<String> = match &layout.putative {
        Some(list) => {
            for name in list {
                if taken.contains(name.as_str()) {
                    return Err(Error::Schema(format!("`{name}` cannot be both putative and {}", "locked-in or response")));
                }
            }
            list.clone()
        }
        None => table.headers.iter().filter(|h| !taken.contains(h.as_str())).cloned().collect(),
    };
    let mut z_cols = putative
        .iter()
        .map(|name| table.column(name).map(<[f64]>::to_vec))
        .collect::<Result<Vec<_>>>()?;
    let mut z_names = putative;

    if let Some(frac) = layout.min_prevalence {
        let keep = preprocess::prevalence_filter(&z_cols, frac);
        z_cols = keep.iter().map(|&k| z_cols[k].clone()).collect();
        z_names = keep.iter().map(|&k| z_names[k].clone()).collect();
    }
    let (z_cols, z_names, transform) = preprocess::apply(&layout.transform, z_cols, z_names)?;
    if z_cols.is_empty() {
        return Err(Error::Schema("no putative columns remain".into()));
    }
    let x = DMatrix::from_iterator(n, x_cols.len(), x_cols.into_iter().flatten());
    let dataset = Dataset::new(
        y,
        x,
        Arc::new(InMemoryColumns::from_columns(z_cols)?),
        x_names,
        z_names,
    )?;
    Ok(Ingested { dataset, transform })
}

/// Move a dataset's putative columns into a file-backed store at `path`.
pub fn spill_to_file(data: &Dataset, path: &Path) -> Result<Dataset> {
    crate::columns::write_column_store(path, data.z_source().as_ref(), data.z_names())?;
    let store: Arc<dyn ColumnSource> = Arc::new(FileColumns::open(path)?);
    data.with_source(store)
}

/// Everything a command needs, as one JSON document. Absent fields take
/// their defaults; unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Write putative columns to this binary store and fit from it.
    pub column_store: Option<PathBuf>,
    pub layout: Layout,
    pub em: EmConfig,
    /// Number of weighted-strategy runs; the lowest-AIC run is reported.
    pub restarts: usize,
    pub lasso: LassoConfig,
    pub simulation: SimDesign,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            output_dir: None,
            column_store: None,
            layout: Layout::default(),
            em: EmConfig::default(),
            restarts: 20,
            lasso: LassoConfig::default(),
            simulation: SimDesign::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.em.validate()?;
        self.lasso.validate()?;
        self.simulation.validate()?;
        if self.restarts == 0 {
            return Err(Error::Schema("restarts must be at least 1".into()));
        }
        if let Some(f) = self.layout.min_prevalence {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Schema("min_prevalence must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Switch every stage to single-threaded execution.
    pub fn set_parallel(&mut self, parallel: bool) {
        self.em.parallel = parallel;
        self.lasso.parallel = parallel;
        self.simulation.parallel = parallel;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iterations: usize,
    pub converged: bool,
    pub initial_log_likelihood: f64,
    pub final_log_likelihood: f64,
    pub moves: Vec<crate::em::MoveRecord>,
}

impl TraceSummary {
    pub fn new(fit: &FitResult, trace: &IterationTrace) -> Self {
        Self {
            iterations: fit.iterations,
            converged: fit.converged,
            initial_log_likelihood: fit.initial_log_likelihood,
            final_log_likelihood: fit.log_likelihood,
            moves: trace.moves().cloned().collect(),
        }
    }
}

/// Top-level result document written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub seed: u64,
    pub params: ModelParams,
    pub selected: Vec<SelectedColumn>,
    pub refit: Option<RefitReport>,
    pub trace: TraceSummary,
    pub restarts: Vec<RestartSummary>,
    pub config: EmConfig,
}

impl FitReport {
    pub fn new(config: &EmConfig, run: &crate::restart::RestartFit) -> Self {
        Self {
            seed: config.seed,
            params: run.fit.params.clone(),
            selected: run.fit.selected.clone(),
            refit: run.refit.clone(),
            trace: TraceSummary::new(&run.fit, &run.trace),
            restarts: run.restarts.clone(),
            config: config.clone(),
        }
    }
}

/// Posterior table: one row per putative column.
pub fn write_posteriors_csv<W: Write>(
    out: W,
    names: &[String],
    posteriors: &[Posterior],
    gamma: &[f64],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["column", "p_minus", "p_null", "p_plus", "gamma"])?;
    for (k, (p, g)) in posteriors.iter().zip(gamma).enumerate() {
        w.write_record([names[k].clone(), fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2]), fmt_f64(*g)])?;
    }
    w.flush()?;
    Ok(())
}
