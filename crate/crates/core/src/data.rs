//! Censored regression datasets: observation triples (x, δ, z) and CSV
//! ingestion with explicit column mapping.

use std::path::Path;

use crate::error::{Error, Result};

/// One observation: time on study, event indicator and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoredObservation {
    /// Observed time x = min(lifetime, censoring time), >= 0.
    pub time: f64,
    /// True when the event was observed, false when censored.
    pub observed: bool,
    /// Covariate vector of the dataset's common dimension p.
    pub covariates: Vec<f64>,
}

impl CensoredObservation {
    pub fn new(time: f64, observed: bool, covariates: Vec<f64>) -> Result<Self> {
        if !(time.is_finite() && time >= 0.0) {
            return Err(Error::Validation(format!("observed time must be finite and >= 0, got {time}")));
        }
        if covariates.iter().any(|z| !z.is_finite()) {
            return Err(Error::Validation("covariates must be finite".into()));
        }
        Ok(CensoredObservation { time, observed, covariates })
    }

    /// Censoring indicator δ as 0/1.
    pub fn delta(&self) -> f64 {
        if self.observed {
            1.0
        } else {
            0.0
        }
    }
}

/// An immutable collection of censored observations sharing covariate
/// dimension `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoredDataset {
    observations: Vec<CensoredObservation>,
    p: usize,
    covariate_names: Vec<String>,
}

impl CensoredDataset {
    pub fn new(observations: Vec<CensoredObservation>, covariate_names: Vec<String>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Validation("dataset has no usable rows".into()));
        }
        let p = observations[0].covariates.len();
        if covariate_names.len() != p {
            return Err(Error::Validation(format!(
                "{} covariate names supplied for dimension {p}",
                covariate_names.len()
            )));
        }
        for (i, obs) in observations.iter().enumerate() {
            if obs.covariates.len() != p {
                return Err(Error::Validation(format!(
                    "observation {} has covariate dimension {} (expected {p})",
                    i + 1,
                    obs.covariates.len()
                )));
            }
        }
        Ok(CensoredDataset { observations, p, covariate_names })
    }

    /// Convenience constructor from parallel vectors.
    pub fn from_parts(times: &[f64], observed: &[bool], covariates: &[Vec<f64>], names: Vec<String>) -> Result<Self> {
        if times.len() != observed.len() || times.len() != covariates.len() {
            return Err(Error::Validation("times, status and covariate lengths differ".into()));
        }
        let obs = times
            .iter()
            .zip(observed)
            .zip(covariates)
            .map(|((&t, &d), z)| CensoredObservation::new(t, d, z.clone()))
            .collect::<Result<Vec<_>>>()?;
        CensoredDataset::new(obs, names)
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Covariate dimension p.
    pub fn covariate_dim(&self) -> usize {
        self.p
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn observations(&self) -> &[CensoredObservation] {
        &self.observations
    }

    pub fn iter(&self) -> std::slice::Iter<'_, CensoredObservation> {
        self.observations.iter()
    }

    /// Number of uncensored observations.
    pub fn event_count(&self) -> usize {
        self.observations.iter().filter(|o| o.observed).count()
    }

    /// Total observed time Σ x_i.
    pub fn total_time(&self) -> f64 {
        self.observations.iter().map(|o| o.time).sum()
    }

    /// Fitting needs at least one observed event.
    pub fn check_fittable(&self) -> Result<()> {
        if self.event_count() == 0 {
            return Err(Error::Validation("no uncensored observation in the dataset; cannot fit".into()));
        }
        Ok(())
    }

    /// Column means of the covariates.
    pub fn covariate_means(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut means = vec![0.0; self.p];
        for obs in &self.observations {
            for (m, z) in means.iter_mut().zip(&obs.covariates) {
                *m += z / n;
            }
        }
        means
    }

    /// Dataset restricted to the covariate columns at `indices`
    /// (0-based, distinct, order preserved). An empty selection yields a
    /// baseline-only dataset.
    pub fn subset_covariates(&self, indices: &[usize]) -> Result<CensoredDataset> {
        let mut seen = vec![false; self.p];
        for &i in indices {
            if i >= self.p {
                return Err(Error::Domain(format!("covariate index {i} out of range for p = {}", self.p)));
            }
            if seen[i] {
                return Err(Error::Domain(format!("covariate index {i} repeated")));
            }
            seen[i] = true;
        }
        let observations = self
            .observations
            .iter()
            .map(|o| CensoredObservation {
                time: o.time,
                observed: o.observed,
                covariates: indices.iter().map(|&i| o.covariates[i]).collect(),
            })
            .collect();
        Ok(CensoredDataset {
            observations,
            p: indices.len(),
            covariate_names: indices.iter().map(|&i| self.covariate_names[i].clone()).collect(),
        })
    }

    /// Serialize to CSV with columns `time,status,<covariates...>`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["time".to_string(), "status".to_string()];
        header.extend(self.covariate_names.iter().cloned());
        w.write_record(&header).map_err(csv_io)?;
        for obs in &self.observations {
            let mut rec = vec![format_full(obs.time), if obs.observed { "1".into() } else { "0".into() }];
            rec.extend(obs.covariates.iter().map(|z| format_full(*z)));
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Full-precision decimal so a write/read cycle is bit-identical.
fn format_full(v: f64) -> String {
    let s = format!("{v}");
    if s.parse::<f64>().map(|r| r.to_bits() == v.to_bits()).unwrap_or(false) {
        s
    } else {
        format!("{v:.17e}")
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Schema(format!("csv write failed: {e}"))
}

/// Column mapping for [`load_csv`].
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub time_column: String,
    pub status_column: String,
    pub covariate_columns: Vec<String>,
    /// When set, a status cell equal to this token (case-sensitive) means
    /// "event observed" and anything else means censored. When unset the
    /// status column must parse as 0 or 1.
    pub status_true_token: Option<String>,
}

/// Load a censored dataset from a CSV file with a header row.
///
/// Rows with missing values in mapped columns are rejected with their row
/// number; a negative or non-numeric time is a parse error naming the row.
pub fn load_csv<P: AsRef<Path>>(path: P, schema: &CsvSchema) -> Result<CensoredDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Schema(format!("cannot open {}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .clone();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header {:?}", headers.iter().collect::<Vec<_>>())))
    };

    let time_idx = col_index(&schema.time_column)?;
    let status_idx = col_index(&schema.status_column)?;
    let cov_idx: Vec<usize> = schema
        .covariate_columns
        .iter()
        .map(|c| col_index(c))
        .collect::<Result<Vec<_>>>()?;

    let mut observations = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse { row, message: format!("malformed record: {e}") })?;
        let cell = |idx: usize, what: &str| -> Result<String> {
            let v = record.get(idx).unwrap_or("").to_string();
            if v.is_empty() {
                return Err(Error::Parse { row, message: format!("missing value in {what} column") });
            }
            Ok(v)
        };

        let time: f64 = cell(time_idx, "time")?
            .parse()
            .map_err(|_| Error::Parse { row, message: format!("non-numeric time '{}'", record.get(time_idx).unwrap_or("")) })?;
        if !(time.is_finite() && time >= 0.0) {
            return Err(Error::Parse { row, message: format!("time must be finite and >= 0, got {time}") });
        }

        let status_raw = cell(status_idx, "status")?;
        let observed = match &schema.status_true_token {
            Some(token) => status_raw == *token,
            None => match status_raw.as_str() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        row,
                        message: format!("status '{other}' is not 0/1 (use a status-true token for other encodings)"),
                    })
                }
            },
        };

        let mut covariates = Vec::with_capacity(cov_idx.len());
        for (&idx, name) in cov_idx.iter().zip(&schema.covariate_columns) {
            let v: f64 = cell(idx, name)?
                .parse()
                .map_err(|_| Error::Parse { row, message: format!("non-numeric value '{}' in column '{name}'", record.get(idx).unwrap_or("")) })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, message: format!("non-finite value in column '{name}'") });
            }
            covariates.push(v);
        }

        observations.push(CensoredObservation { time, observed, covariates });
    }

    if observations.is_empty() {
        return Err(Error::Validation(format!("{} contains no data rows", path.display())));
    }
    CensoredDataset::new(observations, schema.covariate_columns.clone())
}
