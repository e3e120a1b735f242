//! Score tables on disk, histogram bins and cartogram exports.
//!
//! Every score file starts with a `# manifest-digest: <hex>` comment line
//! tying it to the run that produced it; readers skip `#` lines.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::conduit::{ConduitScore, SinkScore};
use crate::flow::{OwnershipView, ValueFlowResult};
use crate::format::fmt_num;
use crate::model::{JurisdictionCode, PairKey, SectorCode};
use crate::multilayer::MultilayerScore;
use crate::routing::LoadScore;

pub const DIGEST_PREFIX: &str = "# manifest-digest: ";

pub const SINK_HEADER: [&str; 3] = ["jurisdiction", "sector", "S"];
pub const CONDUIT_HEADER: [&str; 7] = ["jurisdiction", "sector", "c_out_raw", "c_in_raw", "C_out", "C_in", "C"];
pub const LOAD_HEADER: [&str; 3] = ["jurisdiction", "l_raw", "L"];
pub const MULTILAYER_HEADER: [&str; 5] = ["jurisdiction", "sector", "M_out", "M_in", "M"];
pub const FLOWS_HEADER: [&str; 3] = ["firm_id", "in_value", "out_value"];
pub const HISTOGRAM_HEADER: [&str; 3] = ["bin_low", "bin_high", "count"];
pub const CARTOGRAM_HEADER: [&str; 2] = ["jurisdiction", "M"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: expected header {expected:?}, found {found:?}")]
    MalformedHeader {
        path: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{path}:{line}: {message}")]
    InvalidValue { path: String, line: u64, message: String },
    #[error("{path}: no column named {column:?}")]
    UnknownColumn { path: String, column: String },
    #[error("bin width must be positive, got {0}")]
    BinWidth(f64),
    #[error("unknown sector {0:?}")]
    UnknownSector(String),
}

impl ReportError {
    pub fn path(&self) -> Option<&str> {
        match self {
            Self::Io { path, .. }
            | Self::Csv { path, .. }
            | Self::MalformedHeader { path, .. }
            | Self::InvalidValue { path, .. }
            | Self::UnknownColumn { path, .. } => Some(path),
            Self::BinWidth(_) | Self::UnknownSector(_) => None,
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.filter(|v| !v.is_nan()).map(fmt_num).unwrap_or_default()
}

/// Writes the digest line (when given) and a CSV body.
struct Table<W: Write> {
    w: csv::Writer<W>,
}

impl<W: Write> Table<W> {
    fn new(mut out: W, digest: Option<&str>, header: &[&str]) -> csv::Result<Self> {
        if let Some(d) = digest {
            writeln!(out, "{DIGEST_PREFIX}{d}")?;
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(header)?;
        Ok(Self { w })
    }

    fn row<I, T>(&mut self, fields: I) -> csv::Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.w.write_record(fields)
    }

    fn finish(mut self) -> csv::Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

pub fn write_sink_scores<W: Write>(out: W, digest: Option<&str>, scores: &[SinkScore]) -> csv::Result<()> {
    let mut t = Table::new(out, digest, &SINK_HEADER)?;
    for s in scores {
        t.row([s.pair.jurisdiction.to_string(), s.pair.sector.to_string(), fmt_num(s.s)])?;
    }
    t.finish()
}

pub fn write_conduit_scores<W: Write>(out: W, digest: Option<&str>, scores: &[ConduitScore]) -> csv::Result<()> {
    let mut t = Table::new(out, digest, &CONDUIT_HEADER)?;
    for s in scores {
        t.row([
            s.pair.jurisdiction.to_string(),
            s.pair.sector.to_string(),
            fmt_num(s.c_out_raw),
            fmt_num(s.c_in_raw),
            opt(s.c_out_std),
            opt(s.c_in_std),
            opt(s.c_combined),
        ])?;
    }
    t.finish()
}

pub fn write_load_scores<W: Write>(out: W, digest: Option<&str>, scores: &[LoadScore]) -> csv::Result<()> {
    let mut t = Table::new(out, digest, &LOAD_HEADER)?;
    for s in scores {
        t.row([s.jurisdiction.to_string(), fmt_num(s.l_raw), opt(s.l_std)])?;
    }
    t.finish()
}

pub fn write_multilayer_scores<W: Write>(out: W, digest: Option<&str>, scores: &[MultilayerScore]) -> csv::Result<()> {
    let mut t = Table::new(out, digest, &MULTILAYER_HEADER)?;
    for s in scores {
        t.row([
            s.pair.jurisdiction.to_string(),
            s.pair.sector.to_string(),
            fmt_num(s.m_out),
            fmt_num(s.m_in),
            fmt_num(s.m),
        ])?;
    }
    t.finish()
}

/// One row per node of the view (collapsed cycles appear as `cycle:<n>`).
pub fn write_flows<W: Write>(out: W, digest: Option<&str>, view: &OwnershipView, flow: &ValueFlowResult) -> csv::Result<()> {
    let mut t = Table::new(out, digest, &FLOWS_HEADER)?;
    for v in 0..view.len() {
        t.row([
            view.label(v as u32).to_owned(),
            fmt_num(flow.in_value[v]),
            fmt_num(flow.out_value[v]),
        ])?;
    }
    t.finish()
}

/// File name of the multilayer table for one beta, e.g.
/// `multilayer_scores_beta0.5.csv`.
pub fn multilayer_file_name(beta: f64) -> String {
    format!("multilayer_scores_beta{beta}.csv")
}

/// Parsed score file: optional digest plus rows as raw strings.
struct Parsed {
    path: String,
    digest: Option<String>,
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn parse_table<R: Read>(input: R, path: &str) -> Result<Parsed, ReportError> {
    let mut text = String::new();
    BufReader::new(input)
        .read_to_string(&mut text)
        .map_err(|source| ReportError::Io { path: path.into(), source })?;
    let digest = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix(DIGEST_PREFIX))
        .map(|d| d.trim().to_owned());
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let csv_err = |source| ReportError::Csv { path: path.into(), source };
    let header = rdr.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(Parsed {
        path: path.into(),
        digest,
        header,
        rows,
    })
}

impl Parsed {
    fn expect_header(&self, expected: &[&str]) -> Result<(), ReportError> {
        if self.header.iter().map(String::as_str).eq(expected.iter().copied()) {
            Ok(())
        } else {
            Err(ReportError::MalformedHeader {
                path: self.path.clone(),
                expected: expected.iter().map(|s| s.to_string()).collect(),
                found: self.header.clone(),
            })
        }
    }

    fn invalid(&self, line: u64, message: String) -> ReportError {
        ReportError::InvalidValue {
            path: self.path.clone(),
            line,
            message,
        }
    }

    fn num(&self, line: u64, raw: &str) -> Result<f64, ReportError> {
        raw.parse().map_err(|_| self.invalid(line, format!("invalid number {raw:?}")))
    }

    fn opt_num(&self, line: u64, raw: &str) -> Result<Option<f64>, ReportError> {
        if raw.is_empty() {
            Ok(None)
        } else {
            self.num(line, raw).map(Some)
        }
    }

    fn code(&self, line: u64, raw: &str) -> Result<JurisdictionCode, ReportError> {
        JurisdictionCode::parse(raw).map_err(|e| self.invalid(line, e.to_string()))
    }

    fn pair(&self, line: u64, j: &str, s: &str) -> Result<PairKey, ReportError> {
        let sector = SectorCode::parse(s).map_err(|e| self.invalid(line, e.to_string()))?;
        Ok(PairKey::new(self.code(line, j)?, sector))
    }

    fn field<'a>(&self, line: u64, row: &'a [String], i: usize) -> Result<&'a str, ReportError> {
        row.get(i)
            .map(String::as_str)
            .ok_or_else(|| self.invalid(line, format!("missing field {}", i + 1)))
    }
}

fn open(path: &Path) -> Result<File, ReportError> {
    File::open(path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A read score table with the digest of the run that wrote it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores<T> {
    pub digest: Option<String>,
    pub rows: Vec<T>,
}

pub fn read_sink_scores<R: Read>(input: R, path: &str) -> Result<Scores<SinkScore>, ReportError> {
    let p = parse_table(input, path)?;
    p.expect_header(&SINK_HEADER)?;
    let mut rows = Vec::with_capacity(p.rows.len());
    for (line, r) in &p.rows {
        let line = *line;
        rows.push(SinkScore {
            pair: p.pair(line, p.field(line, r, 0)?, p.field(line, r, 1)?)?,
            s: p.num(line, p.field(line, r, 2)?)?,
        });
    }
    Ok(Scores { digest: p.digest, rows })
}

pub fn read_conduit_scores<R: Read>(input: R, path: &str) -> Result<Scores<ConduitScore>, ReportError> {
    let p = parse_table(input, path)?;
    p.expect_header(&CONDUIT_HEADER)?;
    let mut rows = Vec::with_capacity(p.rows.len());
    for (line, r) in &p.rows {
        let line = *line;
        rows.push(ConduitScore {
            pair: p.pair(line, p.field(line, r, 0)?, p.field(line, r, 1)?)?,
            c_out_raw: p.num(line, p.field(line, r, 2)?)?,
            c_in_raw: p.num(line, p.field(line, r, 3)?)?,
            c_out_std: p.opt_num(line, p.field(line, r, 4)?)?,
            c_in_std: p.opt_num(line, p.field(line, r, 5)?)?,
            c_combined: p.opt_num(line, p.field(line, r, 6)?)?,
        });
    }
    Ok(Scores { digest: p.digest, rows })
}

pub fn read_load_scores<R: Read>(input: R, path: &str) -> Result<Scores<LoadScore>, ReportError> {
    let p = parse_table(input, path)?;
    p.expect_header(&LOAD_HEADER)?;
    let mut rows = Vec::with_capacity(p.rows.len());
    for (line, r) in &p.rows {
        let line = *line;
        rows.push(LoadScore {
            jurisdiction: p.code(line, p.field(line, r, 0)?)?,
            l_raw: p.num(line, p.field(line, r, 1)?)?,
            l_std: p.opt_num(line, p.field(line, r, 2)?)?,
        });
    }
    Ok(Scores { digest: p.digest, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultilayerRow {
    pub pair: PairKey,
    pub m_out: f64,
    pub m_in: f64,
    pub m: f64,
}

pub fn read_multilayer_scores<R: Read>(input: R, path: &str) -> Result<Scores<MultilayerRow>, ReportError> {
    let p = parse_table(input, path)?;
    p.expect_header(&MULTILAYER_HEADER)?;
    let mut rows = Vec::with_capacity(p.rows.len());
    for (line, r) in &p.rows {
        let line = *line;
        rows.push(MultilayerRow {
            pair: p.pair(line, p.field(line, r, 0)?, p.field(line, r, 1)?)?,
            m_out: p.num(line, p.field(line, r, 2)?)?,
            m_in: p.num(line, p.field(line, r, 3)?)?,
            m: p.num(line, p.field(line, r, 4)?)?,
        });
    }
    Ok(Scores { digest: p.digest, rows })
}

macro_rules! from_path {
    ($name:ident, $reader:ident, $row:ty) => {
        pub fn $name(path: &Path) -> Result<Scores<$row>, ReportError> {
            $reader(open(path)?, &path.display().to_string())
        }
    };
}

from_path!(load_sink_scores, read_sink_scores, SinkScore);
from_path!(load_conduit_scores, read_conduit_scores, ConduitScore);
from_path!(load_load_scores, read_load_scores, LoadScore);
from_path!(load_multilayer_scores, read_multilayer_scores, MultilayerRow);

/// Numeric values of one column of any score file (the last column when
/// `column` is `None`). Empty fields are skipped.
pub fn read_column<R: Read>(input: R, path: &str, column: Option<&str>) -> Result<Scores<f64>, ReportError> {
    let p = parse_table(input, path)?;
    let idx = match column {
        Some(c) => p.header.iter().position(|h| h == c).ok_or_else(|| ReportError::UnknownColumn {
            path: path.into(),
            column: c.into(),
        })?,
        None => p.header.len().checked_sub(1).ok_or_else(|| ReportError::UnknownColumn {
            path: path.into(),
            column: String::new(),
        })?,
    };
    let mut rows = Vec::new();
    for (line, r) in &p.rows {
        if let Some(v) = p.opt_num(*line, p.field(*line, r, idx)?)? {
            rows.push(v);
        }
    }
    Ok(Scores { digest: p.digest, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

/// Equal-width bins on the grid `k * width`, covering every value with no
/// gaps between the lowest and highest occupied bin.
pub fn histogram(values: &[f64], width: f64) -> Result<Vec<Bin>, ReportError> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(ReportError::BinWidth(width));
    }
    let keys: Vec<i64> = values
        .iter()
        .filter(|v| v.is_finite())
        .map(|v| (v / width).floor() as i64)
        .collect();
    let (Some(&lo), Some(&hi)) = (keys.iter().min(), keys.iter().max()) else {
        return Ok(Vec::new());
    };
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for k in keys {
        counts[(k - lo) as usize] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| {
            let k = (lo + i as i64) as f64;
            Bin {
                low: k * width,
                high: (k + 1.0) * width,
                count,
            }
        })
        .collect())
}

pub fn write_histogram<W: Write>(out: W, digest: Option<&str>, bins: &[Bin]) -> csv::Result<()> {
    let mut t = Table::new(out, digest, &HISTOGRAM_HEADER)?;
    for b in bins {
        t.row([fmt_num(b.low), fmt_num(b.high), b.count.to_string()])?;
    }
    t.finish()
}

/// `(jurisdiction, M)` for every scored pair of `sector`, sorted by
/// jurisdiction.
pub fn cartogram(rows: &[MultilayerRow], sector: &str) -> Result<Vec<(JurisdictionCode, f64)>, ReportError> {
    let sector = SectorCode::parse(sector).map_err(|_| ReportError::UnknownSector(sector.into()))?;
    let mut out: Vec<_> = rows
        .iter()
        .filter(|r| r.pair.sector == sector)
        .map(|r| (r.pair.jurisdiction, r.m))
        .collect();
    out.sort_by_key(|(j, _)| *j);
    Ok(out)
}

pub fn write_cartogram<W: Write>(out: W, digest: Option<&str>, rows: &[(JurisdictionCode, f64)]) -> csv::Result<()> {
    let mut t = Table::new(out, digest, &CARTOGRAM_HEADER)?;
    for (j, m) in rows {
        t.row([j.to_string(), fmt_num(*m)])?;
    }
    t.finish()
}
