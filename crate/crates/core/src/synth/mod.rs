//! Seeded synthetic networks with planted sink and conduit pairs.
//!
//! All randomness comes from one ChaCha8 stream seeded with
//! `ChaCha8Rng::seed_from_u64(seed)` and consumed in a fixed order, so a
//! config always yields the same bundle on every platform.
//!
//! Shape of a generated network:
//!
//! * ordinary firms sit at levels drawn from a truncated geometric
//!   distribution; a level `L > 0` firm owns one firm at level `L - 1` plus
//!   a Poisson number of extra ones. A firm owned by `k` shareholders gives
//!   each a ratio `b / k`, with `b` either 1 or uniform in `[0.5, 1)`.
//! * ordinary firms avoid the planted jurisdictions.
//! * outward structure: a share of the ordinary top firms (no shareholder)
//!   is owned outright by an outward conduit firm, itself owned outright by
//!   a sink firm.
//! * inward structure: sink firms are partly owned (10-30%) by inward
//!   conduit firms, each held outright by a dedicated ordinary top firm.
//! * incomes are log-normal around 1e6; GDP grows with the firm count of a
//!   jurisdiction, with log-normal noise.
//! * withholding rates: each origin gets a statutory rate in `[0.05, 0.35)`
//!   and a treaty with probability 0.6 lowers a pair's rate uniformly below
//!   it. Pairs touching a conduit jurisdiction are taxed below 0.05 and
//!   pairs inside the zero-tax clique not at all.

pub mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use thiserror::Error;

use crate::codes::COUNTRIES;
use crate::ingest::{write_firms, write_gdp, write_ownership, write_tax};
use crate::model::{build_network, Firm, JurisdictionCode, ModelError, MultilayerNetwork, OwnershipLink, PairKey, SectorCode, TaxNetwork};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("infeasible config: {0}")]
    Infeasible(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Jurisdictions used first, in this order; further ones follow the ISO
/// table order.
const PREFERRED_CODES: [&str; 12] = [
    "NLD", "LUX", "IRL", "GBR", "CHE", "DEU", "FRA", "USA", "JPN", "SGP", "HKG", "BMU",
];

const SECTOR_ORDER: &str = "CGKMNFHJBDELAIOPQRSTU";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_jurisdictions: usize,
    pub n_sectors: usize,
    pub n_firms: usize,
    /// Probability of climbing one more ownership level.
    pub continue_prob: f64,
    pub max_depth: usize,
    /// Mean number of extra holdings per firm above level 0.
    pub extra_holdings_mean: f64,
    /// Fraction of the ordinary top firms routed into a sink.
    pub outward_share: f64,
    /// Probability that a sink firm beyond the first few is partly owned by
    /// an inward conduit.
    pub inward_share: f64,
    pub sink_share: f64,
    pub conduit_share: f64,
    pub planted_sinks: Vec<PairKey>,
    pub planted_conduits: Vec<PairKey>,
    pub zero_tax_clique: Vec<JurisdictionCode>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_jurisdictions: 12,
            n_sectors: 6,
            n_firms: 200,
            continue_prob: 0.4,
            max_depth: 4,
            extra_holdings_mean: 0.5,
            outward_share: 0.9,
            inward_share: 0.5,
            sink_share: 0.01,
            conduit_share: 0.06,
            planted_sinks: vec![PairKey::parse("NLD:K").expect("valid pair")],
            planted_conduits: vec![PairKey::parse("LUX:G").expect("valid pair")],
            zero_tax_clique: Vec::new(),
        }
    }
}

fn parse_list<T>(raw: &str, parse: impl Fn(&str) -> Result<T, ModelError>) -> Result<Vec<T>, ModelError> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(parse).collect()
}

impl SynthConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| SynthError::Config { line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("invalid value {v:?} for {key}"))
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "n_jurisdictions" => self.n_jurisdictions = num(key, value)?,
            "n_sectors" => self.n_sectors = num(key, value)?,
            "n_firms" => self.n_firms = num(key, value)?,
            "continue_prob" => self.continue_prob = num(key, value)?,
            "max_depth" => self.max_depth = num(key, value)?,
            "extra_holdings_mean" => self.extra_holdings_mean = num(key, value)?,
            "outward_share" => self.outward_share = num(key, value)?,
            "inward_share" => self.inward_share = num(key, value)?,
            "sink_share" => self.sink_share = num(key, value)?,
            "conduit_share" => self.conduit_share = num(key, value)?,
            "planted_sinks" => self.planted_sinks = parse_list(value, PairKey::parse).map_err(|e| e.to_string())?,
            "planted_conduits" => {
                self.planted_conduits = parse_list(value, PairKey::parse).map_err(|e| e.to_string())?
            }
            "zero_tax_clique" => {
                self.zero_tax_clique = parse_list(value, JurisdictionCode::parse).map_err(|e| e.to_string())?
            }
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// The generated jurisdictions, in generation order.
    pub fn codes(&self) -> Vec<JurisdictionCode> {
        let mut out: Vec<JurisdictionCode> = PREFERRED_CODES
            .iter()
            .map(|c| JurisdictionCode::parse(c).expect("valid code"))
            .collect();
        let extra = COUNTRIES
            .iter()
            .map(|(_, a3, _)| JurisdictionCode::parse(a3).expect("valid code"))
            .filter(|c| !out.contains(c))
            .collect::<Vec<_>>();
        out.extend(extra);
        out.truncate(self.n_jurisdictions);
        out
    }

    pub fn sectors(&self) -> Vec<SectorCode> {
        SECTOR_ORDER
            .chars()
            .take(self.n_sectors)
            .map(|c| SectorCode::parse(&c.to_string()).expect("valid sector"))
            .collect()
    }

    fn validate(&self, codes: &[JurisdictionCode], sectors: &[SectorCode]) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Infeasible(m));
        if self.n_jurisdictions > COUNTRIES.len() {
            return bad(format!("at most {} jurisdictions available", COUNTRIES.len()));
        }
        if !(1..=SECTOR_ORDER.len()).contains(&self.n_sectors) {
            return bad(format!("n_sectors must be in 1..={}", SECTOR_ORDER.len()));
        }
        for (name, p) in [
            ("continue_prob", self.continue_prob),
            ("outward_share", self.outward_share),
            ("inward_share", self.inward_share),
            ("sink_share", self.sink_share),
            ("conduit_share", self.conduit_share),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be within [0, 1]"));
            }
        }
        if !(self.extra_holdings_mean >= 0.0) || !self.extra_holdings_mean.is_finite() {
            return bad("extra_holdings_mean must be non-negative".into());
        }
        if !self.planted_conduits.is_empty() && self.planted_sinks.is_empty() {
            return bad("planted conduits need at least one planted sink".into());
        }
        for p in self.planted_sinks.iter().chain(&self.planted_conduits) {
            if !codes.contains(&p.jurisdiction) {
                return bad(format!("planted pair {p} uses a jurisdiction outside the generated set"));
            }
            if !sectors.contains(&p.sector) {
                return bad(format!("planted pair {p} uses a sector outside the generated set"));
            }
        }
        if let Some(p) = self.planted_sinks.iter().find(|p| self.planted_conduits.contains(p)) {
            return bad(format!("{p} is planted as both sink and conduit"));
        }
        if let Some(c) = self.zero_tax_clique.iter().find(|c| !codes.contains(c)) {
            return bad(format!("zero-tax clique member {c} is not generated"));
        }
        let planted: BTreeSet<_> = self.planted_jurisdictions();
        if codes.iter().all(|c| planted.contains(c)) {
            return bad("no jurisdiction left for ordinary firms".into());
        }
        Ok(())
    }

    fn planted_jurisdictions(&self) -> BTreeSet<JurisdictionCode> {
        self.planted_sinks
            .iter()
            .chain(&self.planted_conduits)
            .map(|p| p.jurisdiction)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub firms: Vec<Firm>,
    pub links: Vec<OwnershipLink>,
    pub tax: TaxNetwork,
    pub gdp: BTreeMap<JurisdictionCode, f64>,
    pub planted_sinks: Vec<PairKey>,
    pub planted_conduits: Vec<PairKey>,
}

impl SynthData {
    pub fn network(&self) -> Result<MultilayerNetwork, ModelError> {
        Ok(build_network(self.firms.clone(), &self.links, self.tax.clone(), &self.gdp)?.0)
    }

    /// Writes `firms.csv`, `ownership.csv`, `tax.csv` and `gdp.csv`.
    pub fn write_bundle(&self, dir: &Path) -> Result<(), SynthError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| SynthError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let files: [(&str, &dyn Fn(&mut BufWriter<File>) -> csv::Result<()>); 4] = [
            ("firms.csv", &|w| write_firms(w, &self.firms)),
            ("ownership.csv", &|w| write_ownership(w, &self.links)),
            ("tax.csv", &|w| write_tax(w, &self.tax)),
            ("gdp.csv", &|w| write_gdp(w, &self.gdp)),
        ];
        for (name, write) in files {
            let path = dir.join(name);
            let mut out = BufWriter::new(File::create(&path).map_err(io(&path))?);
            write(&mut out).map_err(|e| SynthError::Io {
                path: path.display().to_string(),
                source: e.into(),
            })?;
            out.flush().map_err(io(&path))?;
        }
        Ok(())
    }
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData, SynthError> {
    let codes = cfg.codes();
    let sectors = cfg.sectors();
    cfg.validate(&codes, &sectors)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let income = LogNormal::new(1e6f64.ln(), 1.0).expect("valid log-normal");
    let gdp_noise = LogNormal::new(0.0, 0.25).expect("valid log-normal");

    let n = cfg.n_firms;
    let scaled = |share: f64, floor: usize| ((n as f64 * share).round() as usize).max(floor);
    let n_sink = if cfg.planted_sinks.is_empty() { 0 } else { scaled(cfg.sink_share, 2) };
    let n_conduit = if cfg.planted_conduits.is_empty() { 0 } else { scaled(cfg.conduit_share, 3) };
    let n_out = n_conduit.div_ceil(2);
    let n_in = n_conduit - n_out;
    let n_ord = n
        .checked_sub(n_sink + n_conduit)
        .filter(|&o| o > n_in)
        .ok_or_else(|| SynthError::Infeasible(format!("{n} firms cannot hold the planted structure")))?;

    let planted = cfg.planted_jurisdictions();
    let ordinary_codes: Vec<_> = codes.iter().copied().filter(|c| !planted.contains(c)).collect();
    let width = 6.max(n.to_string().len());
    let id = |i: usize| format!("F{:0width$}", i + 1);

    let mut firms = Vec::with_capacity(n);
    let mut level = Vec::with_capacity(n_ord);
    let mut by_level: Vec<Vec<u32>> = vec![Vec::new(); cfg.max_depth + 1];
    for i in 0..n_ord {
        let jurisdiction = ordinary_codes[rng.random_range(0..ordinary_codes.len())];
        let sector = sectors[rng.random_range(0..sectors.len())];
        let mut l = 0;
        while l < cfg.max_depth && rng.random_bool(cfg.continue_prob) {
            l += 1;
        }
        level.push(l);
        by_level[l].push(i as u32);
        firms.push(Firm {
            id: id(i),
            jurisdiction,
            sector,
            operating_income: income.sample(&mut rng),
        });
    }
    for k in 0..n_sink + n_conduit {
        let pair = if k < n_sink {
            cfg.planted_sinks[k % cfg.planted_sinks.len()]
        } else {
            cfg.planted_conduits[(k - n_sink) % cfg.planted_conduits.len()]
        };
        firms.push(Firm {
            id: id(n_ord + k),
            jurisdiction: pair.jurisdiction,
            sector: pair.sector,
            operating_income: income.sample(&mut rng),
        });
    }

    // ordinary holdings, (shareholder, owned)
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let extra = (cfg.extra_holdings_mean > 0.0).then(|| Poisson::new(cfg.extra_holdings_mean).expect("valid mean"));
    let mut held = Vec::new();
    for i in 0..n_ord {
        let l = level[i];
        if l == 0 || by_level[l - 1].is_empty() {
            continue;
        }
        let below = &by_level[l - 1];
        let count = 1 + extra.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        held.clear();
        for _ in 0..count {
            let o = below[rng.random_range(0..below.len())];
            if !held.contains(&o) {
                held.push(o);
                edges.push((i as u32, o));
            }
        }
    }
    let mut inbound = vec![0u32; n];
    for &(_, o) in &edges {
        inbound[o as usize] += 1;
    }
    let mut links: Vec<(u32, u32, f64)> = edges
        .iter()
        .map(|&(s, o)| {
            let base = if rng.random_bool(0.5) { 1.0 } else { rng.random_range(0.5..1.0) };
            (s, o, base / f64::from(inbound[o as usize]))
        })
        .collect();

    let sink_idx = |k: usize| (n_ord + k) as u32;
    let out_idx = |k: usize| (n_ord + n_sink + k) as u32;
    let in_idx = |k: usize| (n_ord + n_sink + n_out + k) as u32;
    let tops: Vec<u32> = (0..n_ord as u32).filter(|&f| inbound[f as usize] == 0).collect();
    if tops.len() <= n_in {
        return Err(SynthError::Infeasible("too few ordinary top firms for the inward structure".into()));
    }
    let parent_pos: BTreeSet<usize> = sample(&mut rng, tops.len(), n_in).into_iter().collect();
    let parents: Vec<u32> = parent_pos.iter().map(|&p| tops[p]).collect();
    if n_out > 0 {
        for (p, &top) in tops.iter().enumerate() {
            if !parent_pos.contains(&p) && rng.random_bool(cfg.outward_share) {
                links.push((out_idx(rng.random_range(0..n_out)), top, 1.0));
            }
        }
        for k in 0..n_out {
            links.push((sink_idx(k % n_sink), out_idx(k), 1.0));
        }
    }
    if n_in > 0 {
        for k in 0..n_sink {
            if k < n_in || rng.random_bool(cfg.inward_share) {
                links.push((in_idx(k % n_in), sink_idx(k), rng.random_range(0.1..0.3)));
            }
        }
        for (k, &parent) in parents.iter().enumerate() {
            links.push((parent, in_idx(k), 1.0));
        }
    }
    links.sort_by_key(|&(s, o, _)| (s, o));
    let links = links
        .into_iter()
        .map(|(s, o, ratio)| OwnershipLink {
            shareholder: firms[s as usize].id.clone(),
            owned: firms[o as usize].id.clone(),
            ratio,
        })
        .collect();

    let mut per_code: BTreeMap<JurisdictionCode, usize> = BTreeMap::new();
    for f in &firms {
        *per_code.entry(f.jurisdiction).or_default() += 1;
    }
    let gdp = codes
        .iter()
        .map(|&c| {
            let count = per_code.get(&c).copied().unwrap_or(0) as f64;
            (c, (count + 1.0) * 1e9 * gdp_noise.sample(&mut rng))
        })
        .collect();

    let conduit_codes: BTreeSet<_> = cfg.planted_conduits.iter().map(|p| p.jurisdiction).collect();
    let clique: BTreeSet<_> = cfg.zero_tax_clique.iter().copied().collect();
    let statutory: Vec<f64> = codes.iter().map(|_| rng.random_range(0.05..0.35)).collect();
    let mut rates = BTreeMap::new();
    for (i, &a) in codes.iter().enumerate() {
        for &b in &codes {
            if a == b {
                continue;
            }
            let rate = if clique.contains(&a) && clique.contains(&b) {
                0.0
            } else if conduit_codes.contains(&a) || conduit_codes.contains(&b) {
                rng.random_range(0.0..0.05)
            } else if rng.random_bool(0.6) {
                rng.random_range(0.0..statutory[i])
            } else {
                statutory[i]
            };
            rates.insert((a, b), round4(rate));
        }
    }
    let tax = TaxNetwork::from_fn(codes.iter().copied(), |a, b| rates.get(&(a, b)).copied())?;

    Ok(SynthData {
        firms,
        links,
        tax,
        gdp,
        planted_sinks: cfg.planted_sinks.clone(),
        planted_conduits: cfg.planted_conduits.clone(),
    })
}
