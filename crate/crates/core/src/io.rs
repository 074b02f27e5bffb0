//! Dataset files, run manifests and result files.
//!
//! Every file is written to a temporary sibling and renamed into place, so
//! a failed run never leaves a partial output behind.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::diagnostics::PosteriorSummary;
use crate::error::{Error, Result};
use crate::experiments::RecoveryReport;
use crate::model::Dataset;
use crate::perm::{ranking_to_ordering, Ordering, Ranking};
use crate::sampler::ChainConfig;

/// How each input row is read: as an ordering (items listed from rank 1
/// to rank K) or as a ranking (the rank of each item).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Ordering,
    Ranking,
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ordering" => Ok(Self::Ordering),
            "ranking" => Ok(Self::Ranking),
            other => Err(Error::param(format!(
                "unknown data format {other:?} (expected ordering or ranking)"
            ))),
        }
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ordering => "ordering",
            Self::Ranking => "ranking",
        })
    }
}

/// Writes through `write` into a temporary file next to `path`, then
/// renames it over `path`.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut out = BufWriter::new(tmp.as_file_mut());
        write(&mut out)?;
        out.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Pretty-printed JSON, written atomically.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        writeln!(w).map_err(|e| Error::io(path, e))
    })
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a dataset from a CSV file of N rows and K 1-based integer columns.
/// A first row that is not all integers is taken as a header.
pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(file, format).map_err(|e| match e {
        Error::Csv { source, .. } => Error::Csv {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// [`load_dataset`] on any reader. Rows are numbered from 1, not counting
/// a header.
pub fn parse_dataset<R: Read>(reader: R, format: DataFormat) -> Result<Dataset> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut orderings = Vec::new();
    let mut width = None;
    let mut row = 0;
    for (index, record) in csv.records().enumerate() {
        let record = record.map_err(|source| Error::Csv {
            path: PathBuf::new(),
            source,
        })?;
        let values: Vec<Option<usize>> = record.iter().map(|f| f.parse().ok()).collect();
        if index == 0 && values.iter().any(Option::is_none) {
            continue;
        }
        row += 1;
        let bad = |reason: String| Error::BadRow { row, reason };
        let values = record
            .iter()
            .zip(&values)
            .map(|(field, v)| {
                v.ok_or_else(|| bad(format!("value {field:?} is not a positive integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(values.len()),
            Some(k) if k != values.len() => {
                return Err(bad(format!("expected {k} columns, found {}", values.len())));
            }
            _ => {}
        }
        let o = match format {
            DataFormat::Ordering => Ordering::from_one_based(&values),
            DataFormat::Ranking => {
                Ranking::from_one_based(&values).map(|r| ranking_to_ordering(&r))
            }
        }
        .map_err(|e| bad(e.to_string()))?;
        orderings.push(o);
    }
    if orderings.is_empty() {
        return Err(Error::Empty("the dataset has no rows".into()));
    }
    Dataset::new(orderings)
}

/// Writes one ordering per row, 1-based, without a header.
pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_atomic(path, |w| {
        for o in dataset.orderings() {
            let line: Vec<String> = o.to_one_based().iter().map(ToString::to_string).collect();
            writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}

/// Where the data of a run came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    File { path: PathBuf, format: DataFormat },
    Simulation { k: usize, n: usize, seed: u64 },
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub source: DataSource,
    pub config: ChainConfig,
    pub chains: usize,
    pub output_dir: PathBuf,
}

impl RunManifest {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::param("at least one chain is needed"));
        }
        self.config.validate()
    }
}

/// Per-chain posterior summary, so agreement between chains can be checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub chain: usize,
    pub seed: u64,
    pub joint_acceptance: f64,
    pub swap_acceptance: f64,
    pub summary: PosteriorSummary,
}

/// Contents of `summary.json`: the pooled summary at the top level, the
/// manifest alongside it, and one entry per chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    #[serde(flatten)]
    pub summary: PosteriorSummary,
    pub seed: u64,
    #[serde(flatten)]
    pub manifest: RunManifest,
    pub per_chain: Vec<ChainReport>,
}

pub fn write_summary(summary: &SummaryFile, path: impl AsRef<Path>) -> Result<()> {
    write_json(summary, path)
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<SummaryFile> {
    read_json(path)
}

fn write_csv_rows<F>(path: &Path, header: &[&str], rows: F) -> Result<()>
where
    F: FnOnce(&mut csv::Writer<&mut dyn Write>) -> csv::Result<()>,
{
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header)
            .and_then(|_| rows(&mut out))
            .and_then(|_| out.flush().map_err(csv::Error::from))
            .map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })
    })
}

/// One row per grid cell. A missing mean mode mass is left empty.
pub fn write_recovery_cells(reports: &[RecoveryReport], path: impl AsRef<Path>) -> Result<()> {
    let header = [
        "k",
        "n",
        "replications",
        "percent_recovered",
        "mean_mode_mass",
        "mean_normalized_kendall",
    ];
    write_csv_rows(path.as_ref(), &header, |out| {
        for r in reports {
            let mass = r.mean_mode_mass.map(|m| m.to_string()).unwrap_or_default();
            out.write_record([
                r.k.to_string(),
                r.n.to_string(),
                r.replications.to_string(),
                r.percent_recovered.to_string(),
                mass,
                r.mean_normalized_kendall.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// One row per replication; reference orders as `W` bit strings.
pub fn write_recovery_replications(
    reports: &[RecoveryReport],
    path: impl AsRef<Path>,
) -> Result<()> {
    let header = [
        "k",
        "n",
        "replication",
        "true_rho",
        "estimate",
        "recovered",
        "mode_mass",
        "normalized_kendall",
    ];
    write_csv_rows(path.as_ref(), &header, |out| {
        for r in reports {
            for x in &r.records {
                out.write_record([
                    r.k.to_string(),
                    r.n.to_string(),
                    x.replication.to_string(),
                    x.true_rho.bits(),
                    x.estimate.bits(),
                    x.recovered.to_string(),
                    x.mode_mass.to_string(),
                    x.distance.to_string(),
                ])?;
            }
        }
        Ok(())
    })
}
