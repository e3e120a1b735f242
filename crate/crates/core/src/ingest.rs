//! CSV readers and canonical writers for the four input files:
//!
//! | file          | header                                         |
//! |---------------|------------------------------------------------|
//! | firms.csv     | `firm_id,jurisdiction,sector,operating_income` |
//! | ownership.csv | `shareholder_id,owned_id,ratio`                |
//! | tax.csv       | `from,to,rate` (or a square matrix)            |
//! | gdp.csv       | `jurisdiction,gdp`                             |
//!
//! Firm and ownership rows that are incomplete or violate an invariant are
//! dropped and counted. Tax and GDP files are small reference tables and
//! any bad row is a hard error.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::format::fmt_num;
use crate::model::{Firm, JurisdictionCode, ModelError, OwnershipLink, SectorCode, TaxNetwork};

pub const FIRMS_HEADER: [&str; 4] = ["firm_id", "jurisdiction", "sector", "operating_income"];
pub const OWNERSHIP_HEADER: [&str; 3] = ["shareholder_id", "owned_id", "ratio"];
pub const TAX_HEADER: [&str; 3] = ["from", "to", "rate"];
pub const GDP_HEADER: [&str; 2] = ["jurisdiction", "gdp"];

#[derive(Debug, Error)]
pub enum IngestError {
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
    #[error("{path}: malformed header {found:?}, expected {expected:?}")]
    MalformedHeader {
        path: String,
        expected: String,
        found: String,
    },
    #[error("{path}: line {line}: {message}")]
    InvalidRow {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: unrecognized tax table format (expected `from,to,rate` rows or a square matrix)")]
    UnknownFormat { path: String },
    #[error("{path}: {source}")]
    Model {
        path: String,
        #[source]
        source: ModelError,
    },
}

impl IngestError {
    /// The file the error refers to.
    pub fn path(&self) -> &str {
        match self {
            Self::Io { path, .. }
            | Self::Csv { path, .. }
            | Self::MalformedHeader { path, .. }
            | Self::InvalidRow { path, .. }
            | Self::UnknownFormat { path }
            | Self::Model { path, .. } => path,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IngestOptions {
    /// Ownership ratios are given as percentages (`50` means one half).
    pub ratios_as_percent: bool,
    /// Withholding rates are given as percentages.
    pub rates_as_percent: bool,
    /// Drop firms reporting a negative operating income.
    pub exclude_negative_income: bool,
    /// Rate for tax-table pairs that are missing and have no domestic rate.
    pub default_rate: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            ratios_as_percent: false,
            rates_as_percent: false,
            exclude_negative_income: false,
            default_rate: 0.30,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FileReport {
    pub file: String,
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub drop_reasons: BTreeMap<String, usize>,
}

impl FileReport {
    fn new(file: &str) -> Self {
        Self {
            file: file.to_owned(),
            ..Self::default()
        }
    }

    fn drop_row(&mut self, reason: &str) {
        self.rows_dropped += 1;
        *self.drop_reasons.entry(reason.to_owned()).or_default() += 1;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub files: Vec<FileReport>,
    pub warnings: Vec<String>,
}

impl IngestReport {
    pub fn merge(&mut self, other: IngestReport) {
        self.files.extend(other.files);
        self.warnings.extend(other.warnings);
    }

    pub fn rows_dropped(&self) -> usize {
        self.files.iter().map(|f| f.rows_dropped).sum()
    }
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, name: &str, expected: &[&str]) -> Result<(), IngestError> {
    let headers = rdr.headers().map_err(|source| IngestError::Csv {
        path: name.to_owned(),
        source,
    })?;
    let ok = headers.len() == expected.len()
        && headers
            .iter()
            .zip(expected)
            .all(|(h, e)| h.trim_start_matches('\u{feff}').eq_ignore_ascii_case(e));
    if ok {
        Ok(())
    } else {
        Err(IngestError::MalformedHeader {
            path: name.to_owned(),
            expected: expected.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        })
    }
}

fn parse_real(field: &str) -> Option<f64> {
    field.parse::<f64>().ok().filter(|x| x.is_finite())
}

pub fn parse_firms(path: &Path, opts: &IngestOptions) -> Result<(Vec<Firm>, IngestReport), IngestError> {
    read_firms(open(path)?, &path.display().to_string(), opts)
}

pub fn read_firms<R: Read>(input: R, name: &str, opts: &IngestOptions) -> Result<(Vec<Firm>, IngestReport), IngestError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, name, &FIRMS_HEADER)?;
    let mut fr = FileReport::new(name);
    let mut firms = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|source| IngestError::Csv {
            path: name.to_owned(),
            source,
        })?;
        fr.rows_read += 1;
        if rec.len() != FIRMS_HEADER.len() {
            fr.drop_row("malformed row");
            continue;
        }
        let (id, j, s, income) = (&rec[0], &rec[1], &rec[2], &rec[3]);
        let reason = if id.is_empty() {
            Some("missing firm_id")
        } else if j.is_empty() {
            Some("missing jurisdiction")
        } else if s.is_empty() {
            Some("missing sector")
        } else if income.is_empty() {
            Some("missing operating_income")
        } else {
            None
        };
        if let Some(reason) = reason {
            fr.drop_row(reason);
            continue;
        }
        let Ok(jurisdiction) = JurisdictionCode::parse(j) else {
            fr.drop_row("invalid jurisdiction");
            continue;
        };
        let Ok(sector) = SectorCode::parse(s) else {
            fr.drop_row("invalid sector");
            continue;
        };
        let Some(operating_income) = parse_real(income) else {
            fr.drop_row("unparseable operating_income");
            continue;
        };
        if opts.exclude_negative_income && operating_income < 0.0 {
            fr.drop_row("negative operating_income");
            continue;
        }
        firms.push(Firm {
            id: id.to_owned(),
            jurisdiction,
            sector,
            operating_income,
        });
    }
    Ok((
        firms,
        IngestReport {
            files: vec![fr],
            warnings: vec![],
        },
    ))
}

pub fn parse_ownership(path: &Path, opts: &IngestOptions) -> Result<(Vec<OwnershipLink>, IngestReport), IngestError> {
    read_ownership(open(path)?, &path.display().to_string(), opts)
}

pub fn read_ownership<R: Read>(
    input: R,
    name: &str,
    opts: &IngestOptions,
) -> Result<(Vec<OwnershipLink>, IngestReport), IngestError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, name, &OWNERSHIP_HEADER)?;
    let mut fr = FileReport::new(name);
    let mut warnings = Vec::new();
    let mut links: Vec<OwnershipLink> = Vec::new();
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let mut capped = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|source| IngestError::Csv {
            path: name.to_owned(),
            source,
        })?;
        fr.rows_read += 1;
        if rec.len() != OWNERSHIP_HEADER.len() {
            fr.drop_row("malformed row");
            continue;
        }
        let (s, o, r) = (&rec[0], &rec[1], &rec[2]);
        if s.is_empty() || o.is_empty() {
            fr.drop_row("missing firm id");
            continue;
        }
        if r.is_empty() {
            fr.drop_row("missing ratio");
            continue;
        }
        if s == o {
            fr.drop_row("self-loop");
            continue;
        }
        let Some(mut ratio) = parse_real(r) else {
            fr.drop_row("unparseable ratio");
            continue;
        };
        if opts.ratios_as_percent {
            ratio /= 100.0;
        }
        if !(ratio > 0.0 && ratio <= 1.0) {
            fr.drop_row("ratio out of range");
            continue;
        }
        match index.get(&(s.to_owned(), o.to_owned())) {
            Some(&i) => {
                let merged = links[i].ratio + ratio;
                if merged > 1.0 {
                    capped += 1;
                    if warnings.len() < 20 {
                        warnings.push(format!("{name}: duplicate links {s} -> {o} sum to {merged:.4}; capped at 1"));
                    }
                }
                links[i].ratio = merged.min(1.0);
            }
            None => {
                index.insert((s.to_owned(), o.to_owned()), links.len());
                links.push(OwnershipLink {
                    shareholder: s.to_owned(),
                    owned: o.to_owned(),
                    ratio,
                });
            }
        }
    }
    let merged = fr.rows_read - fr.rows_dropped - links.len();
    if merged > 0 {
        warnings.push(format!("{name}: {merged} duplicate link rows merged ({capped} capped at 1)"));
    }
    Ok((
        links,
        IngestReport {
            files: vec![fr],
            warnings,
        },
    ))
}

pub fn parse_tax_matrix(path: &Path, opts: &IngestOptions) -> Result<(TaxNetwork, IngestReport), IngestError> {
    read_tax_matrix(open(path)?, &path.display().to_string(), opts)
}

/// Reads either long-form `from,to,rate` rows or a square matrix whose
/// header row lists destination codes after one leading cell. A long-form
/// row with `from == to` (or a matrix diagonal) gives the origin's domestic
/// statutory rate, which fills that origin's missing pairs; pairs with no
/// domestic rate fall back to `opts.default_rate`.
pub fn read_tax_matrix<R: Read>(input: R, name: &str, opts: &IngestOptions) -> Result<(TaxNetwork, IngestReport), IngestError> {
    let mut rdr = reader(input);
    let headers = rdr
        .headers()
        .map_err(|source| IngestError::Csv {
            path: name.to_owned(),
            source,
        })?
        .clone();
    let long_form = headers.len() == 3
        && headers
            .iter()
            .zip(TAX_HEADER)
            .all(|(h, e)| h.trim_start_matches('\u{feff}').eq_ignore_ascii_case(e));

    let mut fr = FileReport::new(name);
    let mut rates: HashMap<(JurisdictionCode, JurisdictionCode), f64> = HashMap::new();
    let mut domestic: HashMap<JurisdictionCode, f64> = HashMap::new();
    let mut codes: Vec<JurisdictionCode> = Vec::new();

    let bad = |line: u64, message: String| IngestError::InvalidRow {
        path: name.to_owned(),
        line,
        message,
    };
    let code = |raw: &str, line: u64| JurisdictionCode::parse(raw).map_err(|e| bad(line, e.to_string()));
    let rate = |raw: &str, line: u64| -> Result<f64, IngestError> {
        let mut r = parse_real(raw).ok_or_else(|| bad(line, format!("unparseable rate {raw:?}")))?;
        if opts.rates_as_percent {
            r /= 100.0;
        }
        if !(0.0..=1.0).contains(&r) {
            return Err(bad(line, format!("rate {r} outside [0, 1]")));
        }
        Ok(r)
    };

    let mut insert = |from: JurisdictionCode, to: JurisdictionCode, r: f64, line: u64| -> Result<(), IngestError> {
        let prev = if from == to {
            domestic.insert(from, r)
        } else {
            rates.insert((from, to), r)
        };
        if prev.is_some() {
            return Err(bad(line, format!("duplicate rate {from}->{to}")));
        }
        Ok(())
    };

    if long_form {
        for rec in rdr.records() {
            let rec = rec.map_err(|source| IngestError::Csv {
                path: name.to_owned(),
                source,
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            fr.rows_read += 1;
            if rec.len() != 3 {
                return Err(bad(line, "expected 3 fields".into()));
            }
            let (from, to) = (code(&rec[0], line)?, code(&rec[1], line)?);
            let r = rate(&rec[2], line)?;
            codes.push(from);
            codes.push(to);
            insert(from, to, r, line)?;
        }
    } else if headers.len() >= 2 {
        let columns: Vec<JurisdictionCode> = headers
            .iter()
            .skip(1)
            .map(|h| JurisdictionCode::parse(h).map_err(|_| IngestError::UnknownFormat { path: name.to_owned() }))
            .collect::<Result<_, _>>()?;
        codes.extend(&columns);
        for rec in rdr.records() {
            let rec = rec.map_err(|source| IngestError::Csv {
                path: name.to_owned(),
                source,
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            fr.rows_read += 1;
            if rec.len() != headers.len() {
                return Err(bad(line, format!("expected {} fields", headers.len())));
            }
            let from = code(&rec[0], line)?;
            codes.push(from);
            for (cell, &to) in rec.iter().skip(1).zip(&columns) {
                if cell.is_empty() {
                    continue;
                }
                insert(from, to, rate(cell, line)?, line)?;
            }
        }
    } else {
        return Err(IngestError::UnknownFormat { path: name.to_owned() });
    }

    codes.sort();
    codes.dedup();
    let mut filled = 0usize;
    let tax = TaxNetwork::from_fn(codes.iter().copied(), |from, to| {
        Some(rates.get(&(from, to)).copied().unwrap_or_else(|| {
            filled += 1;
            domestic.get(&from).copied().unwrap_or(opts.default_rate)
        }))
    })
    .map_err(|source| IngestError::Model {
        path: name.to_owned(),
        source,
    })?;
    let mut warnings = Vec::new();
    if filled > 0 {
        warnings.push(format!(
            "{name}: {filled} missing jurisdiction pairs filled with domestic or default rates"
        ));
    }
    Ok((
        tax,
        IngestReport {
            files: vec![fr],
            warnings,
        },
    ))
}

pub fn parse_gdp(path: &Path) -> Result<(BTreeMap<JurisdictionCode, f64>, IngestReport), IngestError> {
    read_gdp(open(path)?, &path.display().to_string())
}

pub fn read_gdp<R: Read>(input: R, name: &str) -> Result<(BTreeMap<JurisdictionCode, f64>, IngestReport), IngestError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, name, &GDP_HEADER)?;
    let mut fr = FileReport::new(name);
    let mut gdp = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|source| IngestError::Csv {
            path: name.to_owned(),
            source,
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| IngestError::InvalidRow {
            path: name.to_owned(),
            line,
            message,
        };
        fr.rows_read += 1;
        if rec.len() != 2 {
            return Err(bad("expected 2 fields".into()));
        }
        let code = JurisdictionCode::parse(&rec[0]).map_err(|e| bad(e.to_string()))?;
        let value = parse_real(&rec[1]).ok_or_else(|| bad(format!("unparseable gdp {:?}", &rec[1])))?;
        if value <= 0.0 {
            return Err(bad(format!("non-positive gdp {value} for {code}")));
        }
        if gdp.insert(code, value).is_some() {
            return Err(bad(format!("duplicate gdp for {code}")));
        }
    }
    Ok((
        gdp,
        IngestReport {
            files: vec![fr],
            warnings: vec![],
        },
    ))
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

pub fn write_firms<W: Write>(out: W, firms: &[Firm]) -> csv::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(FIRMS_HEADER)?;
    for f in firms {
        w.write_record([
            f.id.as_str(),
            f.jurisdiction.as_str(),
            &f.sector.to_string(),
            &fmt_num(f.operating_income),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ownership<W: Write>(out: W, links: &[OwnershipLink]) -> csv::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(OWNERSHIP_HEADER)?;
    for l in links {
        w.write_record([l.shareholder.as_str(), l.owned.as_str(), &fmt_num(l.ratio)])?;
    }
    w.flush()?;
    Ok(())
}

/// Long form, every ordered pair of distinct jurisdictions, sorted.
pub fn write_tax<W: Write>(out: W, tax: &TaxNetwork) -> csv::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(TAX_HEADER)?;
    let codes = tax.codes();
    for (i, from) in codes.iter().enumerate() {
        for (k, to) in codes.iter().enumerate() {
            if i != k {
                w.write_record([from.as_str(), to.as_str(), &fmt_num(tax.rate_at(i, k))])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_gdp<W: Write>(out: W, gdp: &BTreeMap<JurisdictionCode, f64>) -> csv::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(GDP_HEADER)?;
    for (code, g) in gdp {
        w.write_record([code.as_str(), &fmt_num(*g)])?;
    }
    w.flush()?;
    Ok(())
}
