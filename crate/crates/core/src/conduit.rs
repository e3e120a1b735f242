//! Sink and conduit scores of jurisdiction x sector pairs.
//!
//! A sink keeps more value than it passes on, relative to its share of world
//! GDP. Conduits are the non-sink pairs that value crosses on its way into a
//! sink (outward) or on its way out of one (inward).
//!
//! Crediting works chain by chain:
//!
//! * outward: a chain is cut at the first sink firm after its source. The
//!   value entering that sink firm is credited once to every distinct pair
//!   occupied by the firms strictly between source and sink.
//! * inward: the value entering a firm is credited to its pair when the
//!   chain leading to it has passed a sink firm, measured from the last such
//!   sink and only at the first firm of that pair after it.
//!
//! Both totals are computed without enumerating chains. For outward credit,
//! a chain's contribution to pair `P` is attributed to the last `P` firm `x`
//! before the sink: it factors into the sink-free value arriving at `x`
//! times the ratio-weighted number of ways from `x` to a sink that avoid `P`.
//! Inward credit is symmetric, attributed to the first `P` firm after the
//! last sink.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::flow::{total_value, FlowError, OwnershipView, ValueFlowResult, NO_PAIR};
use crate::model::{Adjacency, GdpTable, JurisdictionCode, PairKey};
use crate::score::{combine_euclidean, standardize_series};

pub const DEFAULT_SINK_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConduitError {
    #[error("no GDP for jurisdiction {0}")]
    MissingGdp(JurisdictionCode),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Out,
    In,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SinkScore {
    pub pair: PairKey,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConduitScore {
    pub pair: PairKey,
    pub c_out_raw: f64,
    pub c_in_raw: f64,
    /// Standardized outward score; absent for pairs with no outward credit
    /// or when the series cannot be standardized.
    pub c_out_std: Option<f64>,
    pub c_in_std: Option<f64>,
    /// Present only when both standardized components are.
    pub c_combined: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConduitTable {
    pub scores: Vec<ConduitScore>,
    pub warnings: Vec<String>,
}

/// Raw credited value per pair, before GDP normalization.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConduitCredits {
    pub outward: BTreeMap<PairKey, f64>,
    pub inward: BTreeMap<PairKey, f64>,
}

fn gdp_factor(gdp: &GdpTable, code: JurisdictionCode) -> Result<f64, ConduitError> {
    gdp.inverse_share(code).ok_or(ConduitError::MissingGdp(code))
}

/// `S = (V_in - V_out) / V_total * sum(GDP) / GDP_j`.
pub fn sink_centrality(flow: &ValueFlowResult, gdp: &GdpTable, pair: PairKey) -> Result<f64, ConduitError> {
    let total = total_value(flow)?;
    let factor = gdp_factor(gdp, pair.jurisdiction)?;
    let v_in = flow.pair_in.get(&pair).copied().unwrap_or(0.0);
    let v_out = flow.pair_out.get(&pair).copied().unwrap_or(0.0);
    Ok((v_in - v_out) / total * factor)
}

/// Sink centrality of every pair present in the view, sorted by pair.
pub fn sink_scores(view: &OwnershipView, flow: &ValueFlowResult, gdp: &GdpTable) -> Result<Vec<SinkScore>, ConduitError> {
    view.pairs()
        .iter()
        .map(|&pair| Ok(SinkScore { pair, s: sink_centrality(flow, gdp, pair)? }))
        .collect()
}

/// Pairs scoring strictly above `threshold`.
pub fn identify_sinks(scores: &[SinkScore], threshold: f64) -> BTreeSet<PairKey> {
    scores.iter().filter(|s| s.s > threshold).map(|s| s.pair).collect()
}

/// Per-thread memo for the local searches, reset cheaply by bumping `epoch`.
struct Scratch {
    memo: Vec<f64>,
    stamp: Vec<u32>,
    epoch: u32,
    stack: Vec<(u32, usize, f64)>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            memo: vec![0.0; n],
            stamp: vec![0; n],
            epoch: 0,
            stack: Vec::new(),
        }
    }

    fn next_epoch(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.fill(0);
            self.epoch = 1;
        }
    }
}

struct Walk<'a> {
    adj: &'a Adjacency,
    pair_index: &'a [u32],
    sink: &'a [bool],
    /// whether a sink is reachable from a node along `adj`
    reach: &'a [bool],
    /// value at a sink terminal
    terminal: &'a (dyn Fn(u32) -> f64 + Sync),
}

impl Walk<'_> {
    /// `sum over paths root -> first sink along adj, avoiding pair p in
    /// between, of product(ratio) * terminal(sink)`. Memoized per epoch.
    fn from(&self, root: u32, p: u32, sc: &mut Scratch) -> f64 {
        let epoch = sc.epoch;
        sc.stack.clear();
        sc.stack.push((root, 0, 0.0));
        loop {
            let top = sc.stack.len() - 1;
            let (v, i, acc) = sc.stack[top];
            let edges = self.adj.neighbors(v);
            if i == edges.len() {
                sc.stack.pop();
                if v != root {
                    sc.memo[v as usize] = acc;
                    sc.stamp[v as usize] = epoch;
                }
                match sc.stack.last_mut() {
                    Some(parent) => {
                        let r = self.adj.neighbors(parent.0)[parent.1].1;
                        parent.2 += r * acc;
                        parent.1 += 1;
                    }
                    None => return acc,
                }
                continue;
            }
            let (u, r) = edges[i];
            let ui = u as usize;
            let term = if self.sink[ui] {
                Some((self.terminal)(u))
            } else if self.pair_index[ui] == p || !self.reach[ui] {
                Some(0.0)
            } else if sc.stamp[ui] == epoch {
                Some(sc.memo[ui])
            } else {
                None
            };
            match term {
                Some(t) => {
                    let frame = &mut sc.stack[top];
                    frame.2 += r * t;
                    frame.1 += 1;
                }
                None => sc.stack.push((u, 0, 0.0)),
            }
        }
    }
}

/// Outward and inward credited value of every non-sink pair.
pub fn conduit_credits(view: &OwnershipView, flow: &ValueFlowResult, sinks: &BTreeSet<PairKey>) -> ConduitCredits {
    let n = view.len();
    let pairs = view.pairs();
    let pair_index: Vec<u32> = (0..n as u32).map(|v| view.pair_index(v)).collect();
    let sink_pair: Vec<bool> = pairs.iter().map(|p| sinks.contains(p)).collect();
    let sink: Vec<bool> = pair_index
        .iter()
        .map(|&p| p != NO_PAIR && sink_pair[p as usize])
        .collect();

    let mut credits = ConduitCredits::default();
    if !sink.iter().any(|&s| s) {
        return credits;
    }
    let order = view.flow_order().expect("flow result implies an acyclic view");

    // arrival over paths with no sink strictly between source and node,
    // and sink reachability in both directions
    let mut arrival = vec![0.0; n];
    let mut down_reach = vec![false; n];
    for &v in &order {
        let vi = v as usize;
        down_reach[vi] = sink[vi] || view.holdings().neighbors(v).iter().any(|&(o, _)| down_reach[o as usize]);
        let carry = flow.injected[vi] + if sink[vi] { 0.0 } else { arrival[vi] };
        for &(s, r) in view.shareholders().neighbors(v) {
            arrival[s as usize] += r * carry;
        }
    }
    let mut up_reach = vec![false; n];
    for &v in order.iter().rev() {
        let vi = v as usize;
        up_reach[vi] = sink[vi] || view.shareholders().neighbors(v).iter().any(|&(s, _)| up_reach[s as usize]);
    }

    let mut members: Vec<Vec<u32>> = vec![Vec::new(); pairs.len()];
    for v in 0..n as u32 {
        let p = pair_index[v as usize];
        if p != NO_PAIR && !sink_pair[p as usize] {
            members[p as usize].push(v);
        }
    }

    let one = |_: u32| 1.0;
    let avail = |s: u32| flow.available(s);
    let up = Walk {
        adj: view.shareholders(),
        pair_index: &pair_index,
        sink: &sink,
        reach: &up_reach,
        terminal: &one,
    };
    let down = Walk {
        adj: view.holdings(),
        pair_index: &pair_index,
        sink: &sink,
        reach: &down_reach,
        terminal: &avail,
    };

    let per_pair: Vec<(f64, f64)> = members
        .par_iter()
        .enumerate()
        .map_init(
            || Scratch::new(n),
            |sc, (p, nodes)| {
                let p = p as u32;
                sc.next_epoch();
                let mut out = 0.0;
                for &x in nodes {
                    let a = arrival[x as usize];
                    if a != 0.0 && up_reach[x as usize] {
                        out += a * up.from(x, p, sc);
                    }
                }
                sc.next_epoch();
                let mut inward = 0.0;
                for &x in nodes {
                    if down_reach[x as usize] {
                        inward += down.from(x, p, sc);
                    }
                }
                (out, inward)
            },
        )
        .collect();

    for (p, (&pair, (out, inward))) in pairs.iter().zip(per_pair).enumerate() {
        if sink_pair[p] {
            continue;
        }
        credits.outward.insert(pair, out);
        credits.inward.insert(pair, inward);
    }
    credits
}

/// GDP-normalized credit, `V^sink / V_total * sum(GDP) / GDP_j`. Sink pairs
/// and pairs without credit score 0.
pub fn conduit_raw(
    credits: &ConduitCredits,
    flow: &ValueFlowResult,
    gdp: &GdpTable,
    pair: PairKey,
    direction: Direction,
) -> Result<f64, ConduitError> {
    let total = total_value(flow)?;
    let factor = gdp_factor(gdp, pair.jurisdiction)?;
    let map = match direction {
        Direction::Out => &credits.outward,
        Direction::In => &credits.inward,
    };
    Ok(map.get(&pair).copied().unwrap_or(0.0) / total * factor)
}

/// Standardizes the positive entries of `raw`; the rest stay `None`.
fn standardize_positive(raw: &[f64], label: &str, warnings: &mut Vec<String>) -> Vec<Option<f64>> {
    let idx: Vec<usize> = (0..raw.len()).filter(|&i| raw[i] > 0.0).collect();
    let mut out = vec![None; raw.len()];
    if idx.is_empty() {
        return out;
    }
    let xs: Vec<f64> = idx.iter().map(|&i| raw[i]).collect();
    match standardize_series(&xs) {
        Ok(ys) => {
            for (i, y) in idx.into_iter().zip(ys) {
                out[i] = Some(y);
            }
        }
        Err(e) => warnings.push(format!("{label} conduit scores not standardized: {e}")),
    }
    out
}

/// Conduit scores of every pair in the view, sorted by pair.
pub fn conduit_scores(
    view: &OwnershipView,
    flow: &ValueFlowResult,
    gdp: &GdpTable,
    sinks: &BTreeSet<PairKey>,
) -> Result<ConduitTable, ConduitError> {
    total_value(flow)?;
    let credits = conduit_credits(view, flow, sinks);
    let pairs = view.pairs();
    let mut c_out = Vec::with_capacity(pairs.len());
    let mut c_in = Vec::with_capacity(pairs.len());
    for &pair in pairs {
        c_out.push(conduit_raw(&credits, flow, gdp, pair, Direction::Out)?);
        c_in.push(conduit_raw(&credits, flow, gdp, pair, Direction::In)?);
    }
    let mut warnings = Vec::new();
    if sinks.is_empty() {
        warnings.push("no sink pairs identified; all conduit scores are 0".to_owned());
    }
    let out_std = standardize_positive(&c_out, "outward", &mut warnings);
    let in_std = standardize_positive(&c_in, "inward", &mut warnings);
    let scores = pairs
        .iter()
        .enumerate()
        .map(|(i, &pair)| ConduitScore {
            pair,
            c_out_raw: c_out[i],
            c_in_raw: c_in[i],
            c_out_std: out_std[i],
            c_in_std: in_std[i],
            c_combined: match (out_std[i], in_std[i]) {
                (Some(o), Some(n)) => Some(combine_euclidean(n, o)),
                _ => None,
            },
        })
        .collect();
    Ok(ConduitTable { scores, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{condense_cycles, propagate_value, FlowOptions};
    use crate::model::tests::{code, firm, link};
    use crate::model::{build_network, Firm, MultilayerNetwork, OwnershipLink, TaxNetwork};
    use crate::synth::oracle::oracle_conduit_credits;
    use proptest::prelude::*;

    fn pair(s: &str) -> PairKey {
        PairKey::parse(s).unwrap()
    }

    fn network(firms: Vec<Firm>, links: &[OwnershipLink], gdp: &[(&str, f64)]) -> MultilayerNetwork {
        let codes: Vec<_> = gdp.iter().map(|(c, _)| code(c)).collect();
        let tax = TaxNetwork::from_fn(codes, |_, _| Some(0.1)).unwrap();
        let gdp = gdp.iter().map(|(c, g)| (code(c), *g)).collect();
        build_network(firms, links, tax, &gdp).unwrap().0
    }

    fn scored(net: &MultilayerNetwork, sinks: &[&str]) -> (OwnershipView, ValueFlowResult, ConduitCredits) {
        let (view, _) = condense_cycles(net);
        let flow = propagate_value(&view, FlowOptions::default()).unwrap();
        let sinks: BTreeSet<_> = sinks.iter().map(|s| pair(s)).collect();
        let credits = conduit_credits(&view, &flow, &sinks);
        (view, flow, credits)
    }

    #[test]
    fn sink_centrality_hand_value() {
        // V_in = 0.6 V, V_out = 0.1 V on the pair, GDP share 1/2
        let firms = vec![
            firm("K", "LUX", "C", 100.0),
            firm("S", "NLD", "K", 0.0),
            firm("T", "LUX", "C", 0.0),
        ];
        let links = [link("S", "K", 0.6), link("T", "S", 0.1 / 0.6)];
        let net = network(firms, &links, &[("NLD", 1.0), ("LUX", 1.0)]);
        let (view, _) = condense_cycles(&net);
        let mut flow = propagate_value(&view, FlowOptions::default()).unwrap();
        flow.received_total = 100.0;
        let s = sink_centrality(&flow, net.gdp(), pair("NLD:K")).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn balanced_pair_scores_zero() {
        let firms = vec![firm("K", "LUX", "C", 100.0), firm("S", "NLD", "K", 0.0), firm("T", "LUX", "C", 0.0)];
        let links = [link("S", "K", 1.0), link("T", "S", 1.0)];
        let net = network(firms, &links, &[("NLD", 3.0), ("LUX", 1.0)]);
        let (view, _) = condense_cycles(&net);
        let flow = propagate_value(&view, FlowOptions::default()).unwrap();
        assert_eq!(sink_centrality(&flow, net.gdp(), pair("NLD:K")).unwrap(), 0.0);
    }

    #[test]
    fn identify_sinks_is_strict() {
        let scores = vec![
            SinkScore { pair: pair("AAA:K"), s: 12.0 },
            SinkScore { pair: pair("BBB:K"), s: 9.9 },
            SinkScore { pair: pair("CCC:K"), s: 10.0 },
        ];
        assert_eq!(identify_sinks(&scores, 10.0), [pair("AAA:K")].into_iter().collect());
        assert!(identify_sinks(&[], 10.0).is_empty());
    }

    #[test]
    fn outward_chain_credits_intermediate() {
        // K(100) -> A(P) -> Z(sink)
        let firms = vec![
            firm("K", "DEU", "C", 100.0),
            firm("A", "NLD", "G", 0.0),
            firm("Z", "BMU", "K", 0.0),
        ];
        let links = [link("A", "K", 1.0), link("Z", "A", 1.0)];
        let net = network(firms, &links, &[("DEU", 1.0), ("NLD", 1.0), ("BMU", 1.0)]);
        let (_, _, c) = scored(&net, &["BMU:K"]);
        assert_eq!(c.outward[&pair("NLD:G")], 100.0);
        assert_eq!(c.inward[&pair("NLD:G")], 0.0);
        // the source is not an intermediate
        assert_eq!(c.outward[&pair("DEU:C")], 0.0);
    }

    #[test]
    fn inward_after_sink() {
        // Z(sink, 100) -> A(P)
        let firms = vec![firm("Z", "BMU", "K", 100.0), firm("A", "NLD", "G", 0.0)];
        let net = network(firms, &[link("A", "Z", 1.0)], &[("NLD", 1.0), ("BMU", 1.0)]);
        let (_, _, c) = scored(&net, &["BMU:K"]);
        assert_eq!(c.inward[&pair("NLD:G")], 100.0);
        assert_eq!(c.outward[&pair("NLD:G")], 0.0);
    }

    #[test]
    fn no_sinks_no_credit() {
        let firms = vec![firm("K", "DEU", "C", 100.0), firm("A", "NLD", "G", 0.0)];
        let net = network(firms, &[link("A", "K", 1.0)], &[("DEU", 1.0), ("NLD", 1.0)]);
        let (view, flow, c) = scored(&net, &[]);
        assert!(c.outward.values().chain(c.inward.values()).all(|&v| v == 0.0));
        let table = conduit_scores(&view, &flow, net.gdp(), &BTreeSet::new()).unwrap();
        assert!(table.scores.iter().all(|s| s.c_out_raw == 0.0 && s.c_in_raw == 0.0 && s.c_combined.is_none()));
        assert!(!table.warnings.is_empty());
    }

    #[test]
    fn crediting_stops_at_first_sink_and_counts_pairs_once() {
        // K -> A(P) -> B(P) -> Z1(sink) -> C(Q) -> Z2(sink) -> D(Q) -> E(R)
        let firms = vec![
            firm("K", "DEU", "C", 100.0),
            firm("A", "NLD", "G", 0.0),
            firm("B", "NLD", "G", 0.0),
            firm("Z1", "BMU", "K", 0.0),
            firm("C", "LUX", "K", 0.0),
            firm("Z2", "BMU", "K", 0.0),
            firm("D", "LUX", "K", 0.0),
            firm("E", "IRL", "K", 0.0),
        ];
        let links = [
            link("A", "K", 0.5),
            link("B", "A", 1.0),
            link("Z1", "B", 1.0),
            link("C", "Z1", 1.0),
            link("Z2", "C", 0.5),
            link("D", "Z2", 1.0),
            link("E", "D", 1.0),
        ];
        let gdp = [("DEU", 1.0), ("NLD", 1.0), ("BMU", 1.0), ("LUX", 1.0), ("IRL", 1.0)];
        let net = network(firms, &links, &gdp);
        let (_, _, c) = scored(&net, &["BMU:K"]);
        assert_eq!(c.outward[&pair("NLD:G")], 50.0);
        // C lies between two sinks but the chain was already cut at Z1
        assert_eq!(c.outward[&pair("LUX:K")], 0.0);
        // inward: C measured from Z1 (50), D from Z2 (25)
        assert_eq!(c.inward[&pair("LUX:K")], 75.0);
        assert_eq!(c.inward[&pair("IRL:K")], 25.0);
        assert_eq!(c.inward[&pair("NLD:G")], 0.0);
    }

    #[test]
    fn sinks_and_conduits_are_disjoint() {
        let firms = vec![
            firm("K", "DEU", "C", 100.0),
            firm("A", "BMU", "K", 0.0),
            firm("Z", "BMU", "K", 0.0),
        ];
        let links = [link("A", "K", 1.0), link("Z", "A", 1.0)];
        let net = network(firms, &links, &[("DEU", 1.0), ("BMU", 1.0)]);
        let (view, flow, c) = scored(&net, &["BMU:K"]);
        assert!(!c.outward.contains_key(&pair("BMU:K")));
        let sinks = [pair("BMU:K")].into_iter().collect();
        let table = conduit_scores(&view, &flow, net.gdp(), &sinks).unwrap();
        let row = table.scores.iter().find(|s| s.pair == pair("BMU:K")).unwrap();
        assert_eq!((row.c_out_raw, row.c_in_raw, row.c_combined), (0.0, 0.0, None));
    }

    fn random_dag() -> impl Strategy<Value = (Vec<Firm>, Vec<OwnershipLink>, Vec<usize>)> {
        let codes = ["AAA", "BBB", "CCC", "DDD"];
        (2usize..14)
            .prop_flat_map(move |n| {
                let firms = prop::collection::vec((0usize..4, prop::bool::ANY, 0.0f64..100.0), n);
                let edges = prop::collection::vec((0..n, 0..n, 0.05f64..1.0), 0..3 * n);
                let sinks = prop::collection::vec(0usize..4, 1..3);
                (firms, edges, sinks)
            })
            .prop_map(move |(fs, es, sinks)| {
                let firms: Vec<Firm> = fs
                    .iter()
                    .enumerate()
                    .map(|(i, &(j, k, inc))| firm(&format!("F{i:02}"), codes[j], if k { "K" } else { "G" }, inc))
                    .collect();
                let mut seen = BTreeSet::new();
                let links = es
                    .into_iter()
                    .filter(|(a, b, _)| a != b)
                    // higher index owns lower index keeps the graph acyclic
                    .map(|(a, b, r)| (a.max(b), a.min(b), r))
                    .filter(|(a, b, _)| seen.insert((*a, *b)))
                    .map(|(a, b, r)| link(&format!("F{a:02}"), &format!("F{b:02}"), r))
                    .collect();
                (firms, links, sinks)
            })
    }

    proptest! {
        #[test]
        fn credits_match_path_enumeration((firms, links, sink_codes) in random_dag()) {
            let codes = ["AAA", "BBB", "CCC", "DDD"];
            let gdp: Vec<_> = codes.iter().map(|c| (*c, 1.0)).collect();
            let net = network(firms, &links, &gdp);
            let sinks: BTreeSet<PairKey> = sink_codes.iter().map(|&j| pair(&format!("{}:K", codes[j]))).collect();
            let (view, flow) = {
                let (view, _) = condense_cycles(&net);
                let flow = propagate_value(&view, FlowOptions::default()).unwrap();
                (view, flow)
            };
            let fast = conduit_credits(&view, &flow, &sinks);
            let slow = oracle_conduit_credits(&net, &sinks, crate::flow::Injection::ChainEnds).unwrap();
            for (p, v) in &fast.outward {
                let o = slow.outward.get(p).copied().unwrap_or(0.0);
                prop_assert!((v - o).abs() <= 1e-9 * (1.0 + o.abs()), "out {p}: {v} vs {o}");
            }
            for (p, v) in &fast.inward {
                let o = slow.inward.get(p).copied().unwrap_or(0.0);
                prop_assert!((v - o).abs() <= 1e-9 * (1.0 + o.abs()), "in {p}: {v} vs {o}");
            }
            for p in sinks {
                prop_assert!(!fast.outward.contains_key(&p) && !fast.inward.contains_key(&p));
            }
        }

        #[test]
        fn gdp_scaling_leaves_scores_unchanged((firms, links, sink_codes) in random_dag(), lambda in 1e-3f64..1e3) {
            let codes = ["AAA", "BBB", "CCC", "DDD"];
            let gdp: Vec<_> = codes.iter().enumerate().map(|(i, c)| (*c, 1.0 + i as f64)).collect();
            let scaled_gdp: Vec<_> = gdp.iter().map(|(c, g)| (*c, g * lambda)).collect();
            let a = network(firms.clone(), &links, &gdp);
            let b = network(firms, &links, &scaled_gdp);
            let sinks: BTreeSet<PairKey> = sink_codes.iter().map(|&j| pair(&format!("{}:K", codes[j]))).collect();
            let (view, _) = condense_cycles(&a);
            let flow = propagate_value(&view, FlowOptions::default()).unwrap();
            prop_assume!(flow.received_total > 0.0);
            let sa = sink_scores(&view, &flow, a.gdp()).unwrap();
            let sb = sink_scores(&view, &flow, b.gdp()).unwrap();
            for (x, y) in sa.iter().zip(&sb) {
                prop_assert!((x.s - y.s).abs() <= 1e-12 * (1.0 + x.s.abs()));
            }
            let ca = conduit_scores(&view, &flow, a.gdp(), &sinks).unwrap();
            let cb = conduit_scores(&view, &flow, b.gdp(), &sinks).unwrap();
            for (x, y) in ca.scores.iter().zip(&cb.scores) {
                prop_assert!((x.c_out_raw - y.c_out_raw).abs() <= 1e-12 * (1.0 + x.c_out_raw.abs()));
                prop_assert!((x.c_in_raw - y.c_in_raw).abs() <= 1e-12 * (1.0 + x.c_in_raw.abs()));
            }
        }
    }
}
