//! CSV and JSON formats.
//!
//! Observation files are long-format CSV with a header and an `id` column;
//! rows sharing an id form one observation, in order of first appearance.
//!
//! | kernel                  | columns                    |
//! |-------------------------|----------------------------|
//! | gaussian-location       | `id,value,variance`        |
//! | gaussian-location-scale | `id,value`                 |
//! | poisson-binomial        | `id,at_bats,hits`          |
//! | two-class-gaussian      | `id,label,value`           |
//! | linear-regression       | `id,response,covariate`    |
//! | local-level-ss          | `id,response,covariate`    |
//!
//! Poisson-binomial files take one row per id. A fitted model is stored as
//! JSON ([`FitFile`]); weights at or below `1e-12` are written as 0 and the
//! remaining mass renormalized, with the stored diagnostics recomputed for
//! the written weights.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::apps::baseball::BaseballRecord;
use crate::apps::glucose::Subject;
use crate::error::{Error, Result};
use crate::kernels::{
    likelihood_matrix, CountPairObs, KernelId, KnownVarObs, Observation, RegressionObs, ReplicateObs, SeriesObs,
    TwoClassObs,
};
use crate::model::{kkt_gap, neg_log_likelihood, Atom, FitResult, Grid, MixingWeights, SolverId};

/// Rows of a CSV file with their 1-based line numbers.
struct Table {
    path: String,
    headers: StringRecord,
    rows: Vec<(u64, StringRecord)>,
}

impl Table {
    fn read<R: Read>(reader: R, path: &str) -> Result<Self> {
        let mut rdr = ReaderBuilder::new().trim(Trim::All).flexible(false).from_reader(reader);
        let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            if rec.iter().all(str::is_empty) {
                continue;
            }
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Table {
            path: path.to_string(),
            headers,
            rows,
        })
    }

    fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        Table::read(file, &path.display().to_string())
    }

    fn err(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| self.err(1, format!("missing column '{name}' (header: {})", self.header_line())))
    }

    fn optional_column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn header_line(&self) -> String {
        self.headers.iter().collect::<Vec<_>>().join(",")
    }

    fn field<T: std::str::FromStr>(&self, line: u64, rec: &StringRecord, col: usize) -> Result<T> {
        let raw = rec.get(col).unwrap_or("");
        raw.parse()
            .map_err(|_| self.err(line, format!("column '{}': cannot parse '{raw}'", &self.headers[col])))
    }

    fn float(&self, line: u64, rec: &StringRecord, col: usize) -> Result<f64> {
        let v: f64 = self.field(line, rec, col)?;
        if !v.is_finite() {
            return Err(self.err(line, format!("column '{}': non-finite value", &self.headers[col])));
        }
        Ok(v)
    }

    /// Blank cells read as `None`.
    fn optional_float(&self, line: u64, rec: &StringRecord, col: usize) -> Result<Option<f64>> {
        if rec.get(col).unwrap_or("").is_empty() {
            Ok(None)
        } else {
            self.float(line, rec, col).map(Some)
        }
    }

    /// Row indices grouped by id, groups in order of first appearance.
    fn groups(&self, id_col: usize) -> Vec<(String, Vec<usize>)> {
        let mut order: Vec<(String, Vec<usize>)> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for (i, (_, rec)) in self.rows.iter().enumerate() {
            let id = rec[id_col].to_string();
            match index.get(&id) {
                Some(&g) => order[g].1.push(i),
                None => {
                    index.insert(id.clone(), order.len());
                    order.push((id, vec![i]));
                }
            }
        }
        order
    }
}

fn csv_error(path: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        path: path.to_string(),
        line,
        message: e.to_string(),
    }
}

/// Observations with their ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kernel: KernelId,
    pub ids: Vec<String>,
    pub observations: Vec<Observation>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Reads observations for `kernel` from a CSV file.
pub fn read_observations(path: &Path, kernel: KernelId) -> Result<Dataset> {
    parse_observations(Table::open(path)?, kernel)
}

/// As [`read_observations`] from any reader; `name` is used in messages.
pub fn read_observations_from<R: Read>(reader: R, name: &str, kernel: KernelId) -> Result<Dataset> {
    parse_observations(Table::read(reader, name)?, kernel)
}

fn parse_observations(t: Table, kernel: KernelId) -> Result<Dataset> {
    let id = t.column("id")?;
    let groups = t.groups(id);
    if groups.is_empty() {
        return Err(t.err(1, "no observations"));
    }
    let first_line = |rows: &[usize]| t.rows[rows[0]].0;
    let mut ids = Vec::with_capacity(groups.len());
    let mut observations = Vec::with_capacity(groups.len());
    for (name, rows) in groups {
        let line = first_line(&rows);
        let obs = match kernel {
            KernelId::GaussianLocation => {
                let (v, s) = (t.column("value")?, t.column("variance")?);
                let mut values = Vec::new();
                let mut variances = Vec::new();
                for &r in &rows {
                    let (l, rec) = &t.rows[r];
                    values.push(t.float(*l, rec, v)?);
                    let var = t.float(*l, rec, s)?;
                    if !(var > 0.0) {
                        return Err(t.err(*l, "variance must be positive"));
                    }
                    variances.push(var);
                }
                Observation::KnownVar(KnownVarObs::new(values, variances))
            }
            KernelId::GaussianLocationScale => {
                let v = t.column("value")?;
                let values = rows
                    .iter()
                    .map(|&r| t.float(t.rows[r].0, &t.rows[r].1, v))
                    .collect::<Result<Vec<_>>>()?;
                if values.len() < 2 {
                    return Err(t.err(line, format!("id '{name}' needs at least 2 replicates")));
                }
                Observation::Replicates(ReplicateObs::new(values))
            }
            KernelId::PoissonBinomial => {
                let (a, h) = (t.column("at_bats")?, t.column("hits")?);
                if rows.len() != 1 {
                    let dup = t.rows[rows[1]].0;
                    return Err(t.err(dup, format!("id '{name}' appears more than once")));
                }
                let (l, rec) = &t.rows[rows[0]];
                let pair = CountPairObs::new(t.field(*l, rec, a)?, t.field(*l, rec, h)?)
                    .map_err(|e| t.err(*l, e.to_string()))?;
                Observation::CountPair(pair)
            }
            KernelId::TwoClassGaussian => {
                let (y, v) = (t.column("label")?, t.column("value")?);
                let mut values = Vec::new();
                let mut labels = Vec::new();
                for &r in &rows {
                    let (l, rec) = &t.rows[r];
                    let lab: u8 = t.field(*l, rec, y)?;
                    if lab > 1 {
                        return Err(t.err(*l, "label must be 0 or 1"));
                    }
                    labels.push(lab);
                    values.push(t.optional_float(*l, rec, v)?.unwrap_or(f64::NAN));
                }
                Observation::TwoClass(TwoClassObs::new(values, labels).map_err(|e| t.err(line, e.to_string()))?)
            }
            KernelId::LinearRegression | KernelId::LocalLevelStateSpace => {
                let (y, x) = (t.column("response")?, t.column("covariate")?);
                let mut responses = Vec::new();
                let mut covariates = Vec::new();
                for &r in &rows {
                    let (l, rec) = &t.rows[r];
                    responses.push(t.float(*l, rec, y)?);
                    covariates.push(t.float(*l, rec, x)?);
                }
                if kernel == KernelId::LinearRegression {
                    Observation::Regression(
                        RegressionObs::new(responses, covariates).map_err(|e| t.err(line, e.to_string()))?,
                    )
                } else {
                    Observation::Series(SeriesObs::new(responses, covariates).map_err(|e| t.err(line, e.to_string()))?)
                }
            }
        };
        ids.push(name);
        observations.push(obs);
    }
    Ok(Dataset {
        kernel,
        ids,
        observations,
    })
}

/// Column names of the observation layout for `obs`.
pub fn observation_header(obs: &Observation) -> &'static [&'static str] {
    match obs {
        Observation::KnownVar(_) => &["id", "value", "variance"],
        Observation::Replicates(_) => &["id", "value"],
        Observation::CountPair(_) => &["id", "at_bats", "hits"],
        Observation::TwoClass(_) => &["id", "label", "value"],
        Observation::Regression(_) | Observation::Series(_) => &["id", "response", "covariate"],
    }
}

/// CSV rows for one observation, `id` first.
pub fn observation_rows(id: &str, obs: &Observation) -> Vec<Vec<String>> {
    let row = |cells: &[String]| {
        let mut r = vec![id.to_string()];
        r.extend_from_slice(cells);
        r
    };
    match obs {
        Observation::KnownVar(o) => o
            .values
            .iter()
            .zip(&o.variances)
            .map(|(v, s)| row(&[v.to_string(), s.to_string()]))
            .collect(),
        Observation::Replicates(o) => o.values.iter().map(|v| row(&[v.to_string()])).collect(),
        Observation::CountPair(o) => vec![row(&[o.at_bats.to_string(), o.hits.to_string()])],
        Observation::TwoClass(o) => o
            .values
            .iter()
            .zip(&o.labels)
            .map(|(v, y)| row(&[y.to_string(), if v.is_nan() { String::new() } else { v.to_string() }]))
            .collect(),
        Observation::Regression(RegressionObs { responses, covariates })
        | Observation::Series(SeriesObs {
            responses, covariates, ..
        }) => responses
            .iter()
            .zip(covariates)
            .map(|(y, x)| row(&[y.to_string(), x.to_string()]))
            .collect(),
    }
}

/// Writes `data` in the layout [`read_observations`] expects.
pub fn write_observations<W: Write>(out: W, ids: &[String], data: &[Observation]) -> Result<()> {
    let first = data
        .first()
        .ok_or_else(|| Error::InvalidObservation("nothing to write".into()))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(observation_header(first))?;
    for (id, obs) in ids.iter().zip(data) {
        for r in observation_rows(id, obs) {
            w.write_record(&r)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `player_id,is_pitcher,ab1,h1,ab2,h2`. Rows that fail to parse or
/// have more hits than at-bats are dropped with a warning; a missing column
/// is an error.
pub fn read_baseball(path: &Path) -> Result<Vec<BaseballRecord>> {
    parse_baseball(Table::open(path)?)
}

pub fn read_baseball_from<R: Read>(reader: R, name: &str) -> Result<Vec<BaseballRecord>> {
    parse_baseball(Table::read(reader, name)?)
}

fn parse_baseball(t: Table) -> Result<Vec<BaseballRecord>> {
    let cols = ["player_id", "is_pitcher", "ab1", "h1", "ab2", "h2"]
        .iter()
        .map(|c| t.column(c))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let parsed = (|| -> Result<BaseballRecord> {
            let pitcher: u8 = t.field(*line, rec, cols[1])?;
            if pitcher > 1 {
                return Err(t.err(*line, "is_pitcher must be 0 or 1"));
            }
            let r = BaseballRecord {
                player_id: rec[cols[0]].to_string(),
                is_pitcher: pitcher == 1,
                ab1: t.field(*line, rec, cols[2])?,
                h1: t.field(*line, rec, cols[3])?,
                ab2: t.field(*line, rec, cols[4])?,
                h2: t.field(*line, rec, cols[5])?,
            };
            r.validate().map_err(|e| t.err(*line, e.to_string()))?;
            Ok(r)
        })();
        match parsed {
            Ok(r) => out.push(r),
            Err(e) => warn!("dropping malformed row: {e}"),
        }
    }
    Ok(out)
}

pub fn write_baseball<W: Write>(out: W, records: &[BaseballRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["player_id", "is_pitcher", "ab1", "h1", "ab2", "h2"])?;
    for r in records {
        w.write_record([
            r.player_id.clone(),
            u8::from(r.is_pitcher).to_string(),
            r.ab1.to_string(),
            r.h1.to_string(),
            r.ab2.to_string(),
            r.h2.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A numeric matrix with rows as subjects. Blank cells are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: Vec<Vec<f64>>,
    /// Line number of each row in the source file.
    pub lines: Vec<u64>,
}

/// Reads a numeric CSV. A first line that does not parse as numbers is
/// taken as a header and skipped.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    read_matrix_from(File::open(path)?, &path.display().to_string())
}

pub fn read_matrix_from<R: Read>(reader: R, name: &str) -> Result<Matrix> {
    let mut rdr = ReaderBuilder::new()
        .has_headers(false)
        .trim(Trim::All)
        .flexible(false)
        .from_reader(reader);
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(name, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let cell = |s: &str| -> std::result::Result<f64, ()> {
            if s.is_empty() {
                Ok(f64::NAN)
            } else {
                s.parse::<f64>().map_err(|_| ()).and_then(|v| if v.is_finite() { Ok(v) } else { Err(()) })
            }
        };
        let parsed: std::result::Result<Vec<f64>, usize> =
            rec.iter().enumerate().map(|(c, s)| cell(s).map_err(|_| c)).collect();
        match parsed {
            Ok(r) => {
                rows.push(r);
                lines.push(line);
            }
            Err(_) if i == 0 => {}
            Err(c) => {
                return Err(Error::Parse {
                    path: name.to_string(),
                    line,
                    message: format!("column {}: cannot parse '{}'", c + 1, &rec[c]),
                })
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: name.to_string(),
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok(Matrix { rows, lines })
}

/// Splits the first column off as 0/1 labels.
pub fn split_labels(m: &Matrix, name: &str) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
    let mut x = Vec::with_capacity(m.rows.len());
    let mut y = Vec::with_capacity(m.rows.len());
    for (row, &line) in m.rows.iter().zip(&m.lines) {
        let label = match row.first() {
            Some(&v) if v == 0.0 || v == 1.0 => v as u8,
            _ => {
                return Err(Error::Parse {
                    path: name.to_string(),
                    line,
                    message: "first column must be a 0/1 label".into(),
                })
            }
        };
        y.push(label);
        x.push(row[1..].to_vec());
    }
    Ok((x, y))
}

pub fn write_matrix<W: Write>(out: W, rows: &[Vec<f64>], labels: Option<&[u8]>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for (i, r) in rows.iter().enumerate() {
        let mut rec: Vec<String> = Vec::with_capacity(r.len() + 1);
        if let Some(l) = labels {
            rec.push(l[i].to_string());
        }
        rec.extend(r.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `subject_id,timestamp,fs,isig,cgm`. Rows without both `fs` and
/// `isig` are skipped; `cgm` may be absent or blank. Subjects keep file
/// order; readings keep row order.
pub fn read_glucose(path: &Path) -> Result<Vec<Subject>> {
    parse_glucose(Table::open(path)?)
}

pub fn read_glucose_from<R: Read>(reader: R, name: &str) -> Result<Vec<Subject>> {
    parse_glucose(Table::read(reader, name)?)
}

fn parse_glucose(t: Table) -> Result<Vec<Subject>> {
    let sid = t.column("subject_id")?;
    let ts = t.column("timestamp")?;
    let fs = t.column("fs")?;
    let isig = t.column("isig")?;
    let cgm = t.optional_column("cgm");
    let mut subjects = Vec::new();
    for (id, rows) in t.groups(sid) {
        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut stamps = Vec::new();
        let mut base = Vec::new();
        for &r in &rows {
            let (line, rec) = &t.rows[r];
            let (Some(f), Some(s)) = (t.optional_float(*line, rec, fs)?, t.optional_float(*line, rec, isig)?) else {
                continue;
            };
            if s == 0.0 {
                return Err(t.err(*line, "isig must be nonzero"));
            }
            y.push(f);
            x.push(s);
            stamps.push(rec[ts].to_string());
            base.push(match cgm {
                Some(c) => t.optional_float(*line, rec, c)?.unwrap_or(f64::NAN),
                None => f64::NAN,
            });
        }
        if y.is_empty() {
            warn!("subject {id} has no paired fs/isig readings; skipped");
            continue;
        }
        let mut series = SeriesObs::new(y, x)?;
        series.timestamps = Some(stamps);
        subjects.push(Subject {
            id,
            series,
            cgm: cgm.map(|_| base),
        });
    }
    Ok(subjects)
}

pub fn write_glucose<W: Write>(out: W, subjects: &[Subject]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject_id", "timestamp", "fs", "isig", "cgm"])?;
    for s in subjects {
        for i in 0..s.series.len() {
            let stamp = s
                .series
                .timestamps
                .as_ref()
                .map_or_else(|| i.to_string(), |t| t[i].clone());
            let cgm = s
                .cgm
                .as_ref()
                .map(|c| c[i])
                .filter(|v| v.is_finite())
                .map(|v| v.to_string())
                .unwrap_or_default();
            w.write_record([
                s.id.clone(),
                stamp,
                s.series.responses[i].to_string(),
                s.series.covariates[i].to_string(),
                cgm,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub atoms: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_dim_counts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<[f64; 2]>>,
}

/// A fitted mixing distribution on disk. `neg_log_lik` is the absolute
/// per-observation negative log-likelihood of the stored weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitFile {
    pub kernel: KernelId,
    pub grid: GridFile,
    pub weights: Vec<f64>,
    pub neg_log_lik: f64,
    pub iterations: usize,
    pub kkt_gap: f64,
    pub converged: bool,
    pub solver: SolverId,
    pub seed: Option<u64>,
    pub wall_seconds: f64,
}

impl FitFile {
    /// Sparsifies the weights and recomputes the diagnostics against `data`.
    pub fn new(
        kernel: KernelId,
        grid: &Grid,
        fit: &FitResult,
        data: &[Observation],
        seed: Option<u64>,
        wall_seconds: f64,
    ) -> Result<Self> {
        let weights = fit.weights.sparsified();
        let l = likelihood_matrix(kernel, data, grid)?;
        Ok(FitFile {
            kernel,
            grid: GridFile {
                atoms: grid.atoms().iter().map(|a| a.coords().to_vec()).collect(),
                per_dim_counts: grid.per_dim_counts().map(<[usize]>::to_vec),
                bounds: grid.bounds().map(<[[f64; 2]]>::to_vec),
            },
            neg_log_lik: neg_log_likelihood(&l, &weights)? - l.mean_shift(),
            kkt_gap: kkt_gap(&l, &weights)?,
            weights: weights.into(),
            iterations: fit.iterations,
            converged: fit.converged,
            solver: fit.solver,
            seed,
            wall_seconds,
        })
    }

    pub fn grid(&self) -> Result<Grid> {
        let atoms = self
            .grid
            .atoms
            .iter()
            .map(|a| Atom::new(a.clone()))
            .collect::<Result<Vec<_>>>()?;
        match (&self.grid.per_dim_counts, &self.grid.bounds) {
            (Some(c), Some(b)) => Grid::regular(atoms, c.clone(), b.clone()),
            _ => Grid::new(atoms),
        }
    }

    pub fn weights(&self) -> Result<MixingWeights> {
        MixingWeights::new(self.weights.clone())
    }

    /// Absolute per-observation negative log-likelihood of the stored fit on
    /// `data`.
    pub fn evaluate(&self, data: &[Observation]) -> Result<f64> {
        let grid = self.grid()?;
        let w = self.weights()?;
        if w.len() != grid.len() {
            return Err(Error::Incompatible {
                expected: grid.len(),
                found: w.len(),
            });
        }
        let l = likelihood_matrix(self.kernel, data, &grid)?;
        Ok(neg_log_likelihood(&l, &w)? - l.mean_shift())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }
}
