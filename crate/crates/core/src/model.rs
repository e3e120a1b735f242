//! Multilayer ownership/tax network: the firm layer, the withholding-tax
//! layer, and the firm -> jurisdiction interlayer map.
//!
//! A built [`MultilayerNetwork`] is immutable. Every analysis in this crate
//! borrows it read-only, so it can be shared freely across threads.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid jurisdiction code {0:?}")]
    InvalidJurisdiction(String),
    #[error("invalid sector code {0:?} (expected a NACE section letter A-U)")]
    InvalidSector(String),
    #[error("duplicate firm id {0:?}")]
    DuplicateFirm(String),
    #[error("duplicate ownership link {shareholder:?} -> {owned:?}")]
    DuplicateLink { shareholder: String, owned: String },
    #[error("ownership link {shareholder:?} -> {owned:?} has ratio {ratio} outside (0, 1]")]
    RatioOutOfRange {
        shareholder: String,
        owned: String,
        ratio: f64,
    },
    #[error("firm {0:?} owns itself")]
    SelfLink(String),
    #[error("firm {firm:?} references jurisdiction {code} which is not in the tax layer")]
    UnknownJurisdiction { firm: String, code: JurisdictionCode },
    #[error("firm {firm:?} references jurisdiction {code} which has no GDP")]
    MissingGdp { firm: String, code: JurisdictionCode },
    #[error("jurisdiction {code} has non-positive GDP {gdp} but is referenced by firm {firm:?}")]
    NonPositiveGdp {
        code: JurisdictionCode,
        gdp: f64,
        firm: String,
    },
    #[error("withholding rate {from}->{to} = {rate} outside [0, 1]")]
    RateOutOfRange {
        from: JurisdictionCode,
        to: JurisdictionCode,
        rate: f64,
    },
    #[error("withholding rate {from}->{to} is missing")]
    MissingRate {
        from: JurisdictionCode,
        to: JurisdictionCode,
    },
    #[error("jurisdiction {0} listed twice in the tax layer")]
    DuplicateJurisdiction(JurisdictionCode),
}

/// ISO 3166-1 alpha-3 code, always upper case.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JurisdictionCode([u8; 3]);

impl JurisdictionCode {
    /// Normalizes `raw` to upper-case alpha-3. Two-letter codes are mapped
    /// through the bundled ISO table.
    pub fn parse(raw: &str) -> Result<Self, ModelError> {
        let code = raw.trim().to_ascii_uppercase();
        if !code.bytes().all(|b| b.is_ascii_uppercase()) {
            return Err(ModelError::InvalidJurisdiction(raw.to_owned()));
        }
        match code.len() {
            3 => {
                let b = code.as_bytes();
                Ok(Self([b[0], b[1], b[2]]))
            }
            2 => codes::alpha2_to_alpha3(&code)
                .map(|a3| {
                    let b = a3.as_bytes();
                    Self([b[0], b[1], b[2]])
                })
                .ok_or_else(|| ModelError::InvalidJurisdiction(raw.to_owned())),
            _ => Err(ModelError::InvalidJurisdiction(raw.to_owned())),
        }
    }

    pub fn as_str(&self) -> &str {
        // Constructed only from ASCII upper-case letters.
        std::str::from_utf8(&self.0).expect("ascii")
    }
}

impl fmt::Display for JurisdictionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for JurisdictionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

impl FromStr for JurisdictionCode {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for JurisdictionCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for JurisdictionCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// NACE Rev. 2 section letter.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SectorCode(u8);

impl SectorCode {
    pub fn parse(raw: &str) -> Result<Self, ModelError> {
        let t = raw.trim();
        let mut chars = t.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => {
                let c = c.to_ascii_uppercase();
                if ('A'..='U').contains(&c) {
                    Ok(Self(c as u8))
                } else {
                    Err(ModelError::InvalidSector(raw.to_owned()))
                }
            }
            _ => Err(ModelError::InvalidSector(raw.to_owned())),
        }
    }

    pub fn letter(&self) -> char {
        self.0 as char
    }

    pub fn label(&self) -> &'static str {
        codes::nace_label(self.letter()).unwrap_or("")
    }
}

impl fmt::Display for SectorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl fmt::Debug for SectorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for SectorCode {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

/// Jurisdiction x sector: the unit every centrality is aggregated over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairKey {
    pub jurisdiction: JurisdictionCode,
    pub sector: SectorCode,
}

impl PairKey {
    pub fn new(jurisdiction: JurisdictionCode, sector: SectorCode) -> Self {
        Self {
            jurisdiction,
            sector,
        }
    }

    /// Parses `NLD:K` (the form used by config files and CLI flags).
    pub fn parse(raw: &str) -> Result<Self, ModelError> {
        let (j, s) = raw
            .split_once(':')
            .ok_or_else(|| ModelError::InvalidJurisdiction(raw.to_owned()))?;
        Ok(Self::new(JurisdictionCode::parse(j)?, SectorCode::parse(s)?))
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.jurisdiction, self.sector)
    }
}

impl Serialize for PairKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jurisdiction {
    pub code: JurisdictionCode,
    pub name: String,
    pub gdp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sector {
    pub code: SectorCode,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Firm {
    pub id: String,
    pub jurisdiction: JurisdictionCode,
    pub sector: SectorCode,
    pub operating_income: f64,
}

/// Shareholding link, directed from the shareholder to the owned firm.
#[derive(Debug, Clone, PartialEq)]
pub struct OwnershipLink {
    pub shareholder: String,
    pub owned: String,
    pub ratio: f64,
}

pub fn pair_of(firm: &Firm) -> PairKey {
    PairKey::new(firm.jurisdiction, firm.sector)
}

/// Withholding-tax layer: a complete rate function over ordered pairs of
/// distinct jurisdictions. `rate(j, j)` is never consulted.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxNetwork {
    codes: Vec<JurisdictionCode>,
    // row-major, rates[from * n + to]; diagonal is 0 and unused
    rates: Vec<f64>,
}

impl TaxNetwork {
    /// Builds the layer from a rate function that must be defined for every
    /// ordered pair of distinct codes.
    pub fn from_fn<F>(codes: impl IntoIterator<Item = JurisdictionCode>, mut rate: F) -> Result<Self, ModelError>
    where
        F: FnMut(JurisdictionCode, JurisdictionCode) -> Option<f64>,
    {
        let mut codes: Vec<_> = codes.into_iter().collect();
        codes.sort();
        if let Some(w) = codes.windows(2).find(|w| w[0] == w[1]) {
            return Err(ModelError::DuplicateJurisdiction(w[0]));
        }
        let n = codes.len();
        let mut rates = vec![0.0; n * n];
        for (i, &from) in codes.iter().enumerate() {
            for (k, &to) in codes.iter().enumerate() {
                if i == k {
                    continue;
                }
                let r = rate(from, to).ok_or(ModelError::MissingRate { from, to })?;
                if !(0.0..=1.0).contains(&r) {
                    return Err(ModelError::RateOutOfRange { from, to, rate: r });
                }
                rates[i * n + k] = r;
            }
        }
        Ok(Self { codes, rates })
    }

    pub fn from_map(
        codes: impl IntoIterator<Item = JurisdictionCode>,
        map: &HashMap<(JurisdictionCode, JurisdictionCode), f64>,
    ) -> Result<Self, ModelError> {
        Self::from_fn(codes, |a, b| map.get(&(a, b)).copied())
    }

    /// Sorted jurisdiction codes.
    pub fn codes(&self) -> &[JurisdictionCode] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn index_of(&self, code: JurisdictionCode) -> Option<usize> {
        self.codes.binary_search(&code).ok()
    }

    pub fn contains(&self, code: JurisdictionCode) -> bool {
        self.index_of(code).is_some()
    }

    pub fn rate(&self, from: JurisdictionCode, to: JurisdictionCode) -> Option<f64> {
        if from == to {
            return None;
        }
        let (i, k) = (self.index_of(from)?, self.index_of(to)?);
        Some(self.rate_at(i, k))
    }

    /// Rate by dense index (see [`TaxNetwork::codes`]).
    #[inline]
    pub fn rate_at(&self, from: usize, to: usize) -> f64 {
        self.rates[from * self.codes.len() + to]
    }
}

/// GDP per jurisdiction plus the world total used by every GDP
/// normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct GdpTable {
    values: BTreeMap<JurisdictionCode, f64>,
    total: f64,
}

impl GdpTable {
    pub fn new(values: BTreeMap<JurisdictionCode, f64>) -> Self {
        let total = values.values().sum();
        Self { values, total }
    }

    pub fn get(&self, code: JurisdictionCode) -> Option<f64> {
        self.values.get(&code).copied()
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// `sum_i GDP_i / GDP_j`, the inverse of j's share of world GDP.
    pub fn inverse_share(&self, code: JurisdictionCode) -> Option<f64> {
        self.get(code).filter(|g| *g > 0.0).map(|g| self.total / g)
    }

    pub fn iter(&self) -> impl Iterator<Item = (JurisdictionCode, f64)> + '_ {
        self.values.iter().map(|(c, g)| (*c, *g))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.values.iter().map(|(c, g)| (*c, g * factor)).collect())
    }
}

/// Counts and warnings produced while assembling a network.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BuildReport {
    pub firms: usize,
    pub links: usize,
    pub links_dropped_unknown_firm: usize,
    pub firms_with_inbound_ratio_over_one: usize,
    pub gdp_entries_outside_tax_layer: usize,
    pub warnings: Vec<String>,
}

const MAX_LISTED_WARNINGS: usize = 20;

impl BuildReport {
    fn warn(&mut self, msg: String) {
        if self.warnings.len() < MAX_LISTED_WARNINGS {
            self.warnings.push(msg);
        }
    }
}

/// Compressed adjacency: `targets[offsets[v]..offsets[v + 1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    offsets: Vec<u32>,
    targets: Vec<(u32, f64)>,
}

impl Adjacency {
    /// `edges` are `(from, to, weight)`; neighbours keep input order.
    pub fn from_edges(n: usize, edges: impl Iterator<Item = (u32, u32, f64)> + Clone) -> Self {
        let mut offsets = vec![0u32; n + 1];
        for (from, _, _) in edges.clone() {
            offsets[from as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![(0u32, 0.0); offsets[n] as usize];
        for (from, to, w) in edges {
            let slot = &mut fill[from as usize];
            targets[*slot as usize] = (to, w);
            *slot += 1;
        }
        Self { offsets, targets }
    }

    #[inline]
    pub fn neighbors(&self, v: u32) -> &[(u32, f64)] {
        let v = v as usize;
        &self.targets[self.offsets[v] as usize..self.offsets[v + 1] as usize]
    }

    #[inline]
    pub fn degree(&self, v: u32) -> usize {
        let v = v as usize;
        (self.offsets[v + 1] - self.offsets[v]) as usize
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub shareholder: u32,
    pub owned: u32,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct MultilayerNetwork {
    firms: Vec<Firm>,
    firm_index: HashMap<String, u32>,
    firm_pair: Vec<PairKey>,
    links: Vec<Link>,
    /// owned firm -> its shareholders
    shareholders: Adjacency,
    /// shareholder -> the firms it owns
    holdings: Adjacency,
    tax: TaxNetwork,
    jurisdictions: BTreeMap<JurisdictionCode, Jurisdiction>,
    gdp: GdpTable,
}

impl MultilayerNetwork {
    pub fn firms(&self) -> &[Firm] {
        &self.firms
    }

    pub fn firm(&self, idx: u32) -> &Firm {
        &self.firms[idx as usize]
    }

    pub fn firm_count(&self) -> usize {
        self.firms.len()
    }

    pub fn index_of(&self, id: &str) -> Option<u32> {
        self.firm_index.get(id).copied()
    }

    pub fn pair(&self, idx: u32) -> PairKey {
        self.firm_pair[idx as usize]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn shareholders(&self) -> &Adjacency {
        &self.shareholders
    }

    pub fn holdings(&self) -> &Adjacency {
        &self.holdings
    }

    pub fn tax(&self) -> &TaxNetwork {
        &self.tax
    }

    pub fn gdp(&self) -> &GdpTable {
        &self.gdp
    }

    pub fn jurisdictions(&self) -> &BTreeMap<JurisdictionCode, Jurisdiction> {
        &self.jurisdictions
    }

    /// Interlayer connection of firm `idx`.
    pub fn interlayer(&self, idx: u32) -> JurisdictionCode {
        self.firms[idx as usize].jurisdiction
    }

    /// All pairs occupied by at least one firm, sorted.
    pub fn pairs(&self) -> BTreeSet<PairKey> {
        self.firm_pair.iter().copied().collect()
    }
}

/// Assembles and validates a network. Links whose endpoints are not among
/// `firms` are dropped and counted rather than rejected, since firms are
/// routinely dropped upstream for missing data.
pub fn build_network(
    firms: Vec<Firm>,
    links: &[OwnershipLink],
    tax: TaxNetwork,
    gdp: &BTreeMap<JurisdictionCode, f64>,
) -> Result<(MultilayerNetwork, BuildReport), ModelError> {
    let mut report = BuildReport::default();

    let mut firm_index = HashMap::with_capacity(firms.len());
    for (i, f) in firms.iter().enumerate() {
        if firm_index.insert(f.id.clone(), i as u32).is_some() {
            return Err(ModelError::DuplicateFirm(f.id.clone()));
        }
        if !tax.contains(f.jurisdiction) {
            return Err(ModelError::UnknownJurisdiction {
                firm: f.id.clone(),
                code: f.jurisdiction,
            });
        }
        match gdp.get(&f.jurisdiction) {
            None => {
                return Err(ModelError::MissingGdp {
                    firm: f.id.clone(),
                    code: f.jurisdiction,
                })
            }
            Some(&g) if !(g > 0.0) => {
                return Err(ModelError::NonPositiveGdp {
                    code: f.jurisdiction,
                    gdp: g,
                    firm: f.id.clone(),
                })
            }
            Some(_) => {}
        }
    }

    let mut resolved = Vec::with_capacity(links.len());
    let mut seen = std::collections::HashSet::with_capacity(links.len());
    for l in links {
        if l.shareholder == l.owned {
            return Err(ModelError::SelfLink(l.shareholder.clone()));
        }
        if !(l.ratio > 0.0 && l.ratio <= 1.0) {
            return Err(ModelError::RatioOutOfRange {
                shareholder: l.shareholder.clone(),
                owned: l.owned.clone(),
                ratio: l.ratio,
            });
        }
        let (Some(&s), Some(&o)) = (firm_index.get(&l.shareholder), firm_index.get(&l.owned)) else {
            report.links_dropped_unknown_firm += 1;
            continue;
        };
        if !seen.insert((s, o)) {
            return Err(ModelError::DuplicateLink {
                shareholder: l.shareholder.clone(),
                owned: l.owned.clone(),
            });
        }
        resolved.push(Link {
            shareholder: s,
            owned: o,
            ratio: l.ratio,
        });
    }
    if report.links_dropped_unknown_firm > 0 {
        let n = report.links_dropped_unknown_firm;
        report.warn(format!("{n} ownership links reference unknown firms and were dropped"));
    }

    let n = firms.len();
    let shareholders = Adjacency::from_edges(n, resolved.iter().map(|l| (l.owned, l.shareholder, l.ratio)));
    let holdings = Adjacency::from_edges(n, resolved.iter().map(|l| (l.shareholder, l.owned, l.ratio)));

    for v in 0..n as u32 {
        let inbound: f64 = shareholders.neighbors(v).iter().map(|(_, r)| r).sum();
        if inbound > 1.0 + 1e-9 {
            report.firms_with_inbound_ratio_over_one += 1;
            report.warn(format!(
                "firm {:?}: shareholder ratios sum to {inbound:.4} (> 1)",
                firms[v as usize].id
            ));
        }
    }

    let mut gdp_in_layer = BTreeMap::new();
    for (code, &g) in gdp {
        if tax.contains(*code) {
            gdp_in_layer.insert(*code, g);
        } else {
            report.gdp_entries_outside_tax_layer += 1;
        }
    }
    let jurisdictions = tax
        .codes()
        .iter()
        .map(|&code| {
            let j = Jurisdiction {
                code,
                name: codes::country_name(code.as_str()).unwrap_or(code.as_str()).to_owned(),
                gdp: gdp_in_layer.get(&code).copied().unwrap_or(0.0),
            };
            (code, j)
        })
        .collect();

    let firm_pair = firms.iter().map(pair_of).collect();
    report.firms = n;
    report.links = resolved.len();

    Ok((
        MultilayerNetwork {
            firms,
            firm_index,
            firm_pair,
            links: resolved,
            shareholders,
            holdings,
            tax,
            jurisdictions,
            gdp: GdpTable::new(gdp_in_layer),
        },
        report,
    ))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn code(s: &str) -> JurisdictionCode {
        JurisdictionCode::parse(s).unwrap()
    }

    pub fn sector(s: &str) -> SectorCode {
        SectorCode::parse(s).unwrap()
    }

    pub fn firm(id: &str, j: &str, s: &str, income: f64) -> Firm {
        Firm {
            id: id.into(),
            jurisdiction: code(j),
            sector: sector(s),
            operating_income: income,
        }
    }

    pub fn link(s: &str, o: &str, r: f64) -> OwnershipLink {
        OwnershipLink {
            shareholder: s.into(),
            owned: o.into(),
            ratio: r,
        }
    }

    fn two_layer_tax() -> TaxNetwork {
        TaxNetwork::from_fn([code("NLD"), code("LUX")], |_, _| Some(0.05)).unwrap()
    }

    fn gdp2() -> BTreeMap<JurisdictionCode, f64> {
        [(code("NLD"), 9.1e11), (code("LUX"), 7.0e10)].into_iter().collect()
    }

    #[test]
    fn code_normalization() {
        assert_eq!(code("nld").as_str(), "NLD");
        assert_eq!(code("NL").as_str(), "NLD");
        assert_eq!(code(" lu ").as_str(), "LUX");
        assert!(JurisdictionCode::parse("N1D").is_err());
        assert!(JurisdictionCode::parse("NETH").is_err());
        assert!(SectorCode::parse("V").is_err());
        assert!(SectorCode::parse("KK").is_err());
        assert_eq!(sector("k").letter(), 'K');
    }

    #[test]
    fn empty_ownership_is_valid() {
        let (net, report) = build_network(vec![], &[], two_layer_tax(), &gdp2()).unwrap();
        assert_eq!(net.firm_count(), 0);
        assert_eq!(net.tax().len(), 2);
        assert_eq!(report.links, 0);
    }

    #[test]
    fn unknown_jurisdiction_names_the_firm() {
        let err = build_network(vec![firm("F9", "XXX", "K", 1.0)], &[], two_layer_tax(), &gdp2()).unwrap_err();
        match err {
            ModelError::UnknownJurisdiction { firm, .. } => assert_eq!(firm, "F9"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_string(&[firm("F9", "XXX", "K", 1.0)]).contains("F9"));
    }

    fn err_string(firms: &[Firm]) -> String {
        build_network(firms.to_vec(), &[], two_layer_tax(), &gdp2())
            .unwrap_err()
            .to_string()
    }

    #[test]
    fn three_firms_two_links() {
        let firms = vec![
            firm("A", "NLD", "K", 1.0),
            firm("B", "LUX", "K", 2.0),
            firm("C", "NLD", "G", 3.0),
        ];
        let links = [link("A", "B", 0.5), link("B", "C", 1.0)];
        let (net, report) = build_network(firms, &links, two_layer_tax(), &gdp2()).unwrap();
        assert_eq!(net.firm_count(), 3);
        assert_eq!(net.links().len(), 2);
        // interlayer totality
        let connected = (0..3).filter(|&i| net.tax().contains(net.interlayer(i))).count();
        assert_eq!(connected, 3);
        assert_eq!(report.links_dropped_unknown_firm, 0);
        let b = net.index_of("B").unwrap();
        assert_eq!(net.shareholders().neighbors(b), &[(0, 0.5)]);
        assert_eq!(net.holdings().neighbors(b), &[(2, 1.0)]);
    }

    #[test]
    fn build_errors() {
        let tax = two_layer_tax;
        let dup = vec![firm("A", "NLD", "K", 1.0), firm("A", "LUX", "K", 1.0)];
        assert!(matches!(
            build_network(dup, &[], tax(), &gdp2()),
            Err(ModelError::DuplicateFirm(_))
        ));

        let two = || vec![firm("A", "NLD", "K", 1.0), firm("B", "LUX", "K", 1.0)];
        assert!(matches!(
            build_network(two(), &[link("A", "B", 0.5), link("A", "B", 0.2)], tax(), &gdp2()),
            Err(ModelError::DuplicateLink { .. })
        ));
        assert!(matches!(
            build_network(two(), &[link("A", "B", 1.5)], tax(), &gdp2()),
            Err(ModelError::RatioOutOfRange { .. })
        ));
        assert!(matches!(
            build_network(two(), &[link("A", "B", 0.0)], tax(), &gdp2()),
            Err(ModelError::RatioOutOfRange { .. })
        ));
        let mut bad_gdp = gdp2();
        bad_gdp.insert(code("LUX"), 0.0);
        assert!(matches!(
            build_network(two(), &[], tax(), &bad_gdp),
            Err(ModelError::NonPositiveGdp { .. })
        ));
    }

    #[test]
    fn dangling_links_are_dropped_and_counted() {
        let firms = vec![firm("A", "NLD", "K", 1.0), firm("B", "LUX", "K", 1.0)];
        let links = [link("A", "B", 0.5), link("A", "GONE", 0.5), link("GONE", "B", 0.1)];
        let (net, report) = build_network(firms, &links, two_layer_tax(), &gdp2()).unwrap();
        assert_eq!(net.links().len(), 1);
        assert_eq!(report.links_dropped_unknown_firm, 2);
        // link endpoint closure
        for l in net.links() {
            assert!((l.shareholder as usize) < net.firm_count());
            assert!((l.owned as usize) < net.firm_count());
        }
    }

    #[test]
    fn inbound_ratio_over_one_is_a_warning() {
        let firms = vec![
            firm("A", "NLD", "K", 1.0),
            firm("B", "LUX", "K", 1.0),
            firm("C", "LUX", "G", 1.0),
        ];
        let links = [link("A", "C", 0.7), link("B", "C", 0.6)];
        let (_, report) = build_network(firms, &links, two_layer_tax(), &gdp2()).unwrap();
        assert_eq!(report.firms_with_inbound_ratio_over_one, 1);
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn pair_projection() {
        let a = firm("F1", "NLD", "K", 1.0);
        let b = firm("F2", "NLD", "K", 5.0);
        assert_eq!(pair_of(&a), PairKey::new(code("NLD"), sector("K")));
        assert_eq!(pair_of(&a), pair_of(&b));
        assert_eq!(pair_of(&firm("F3", "LUX", "G", 0.0)).to_string(), "LUX:G");
    }

    #[test]
    fn tax_layer_requires_complete_rates() {
        let missing = TaxNetwork::from_fn([code("NLD"), code("LUX"), code("DEU")], |a, b| {
            (a != code("DEU") || b != code("NLD")).then_some(0.1)
        });
        assert!(matches!(missing, Err(ModelError::MissingRate { .. })));
        let bad = TaxNetwork::from_fn([code("NLD"), code("LUX")], |_, _| Some(1.2));
        assert!(matches!(bad, Err(ModelError::RateOutOfRange { .. })));
    }

    #[test]
    fn gdp_inverse_share() {
        let g = GdpTable::new(gdp2());
        let inv = g.inverse_share(code("LUX")).unwrap();
        assert!((inv - (9.1e11 + 7.0e10) / 7.0e10).abs() < 1e-12);
        assert_eq!(g.inverse_share(code("DEU")), None);
    }
}
