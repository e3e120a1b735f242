//! Brute-force reference implementations. Exponential in the input size;
//! used only to check the fast kernels on small inputs.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::flow::Injection;
use crate::model::{JurisdictionCode, MultilayerNetwork, PairKey, TaxNetwork};
use crate::routing::{within_tie, RoutingCostModel};

pub const MAX_ORACLE_FIRMS: usize = 20;
pub const MAX_ORACLE_JURISDICTIONS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle input too large: {size} > {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("ownership graph contains a cycle")]
    Cyclic,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleFlow {
    /// Indexed by firm.
    pub in_value: Vec<f64>,
    pub out_value: Vec<f64>,
}

fn injection(net: &MultilayerNetwork, f: u32, mode: Injection) -> f64 {
    match mode {
        Injection::All => net.firm(f).operating_income,
        Injection::ChainEnds if net.holdings().degree(f) == 0 => net.firm(f).operating_income,
        Injection::ChainEnds => 0.0,
    }
}

/// Visits every ownership chain starting at an injecting firm, calling
/// `visit(path, value)` each time the chain is extended by one firm, where
/// `value` is the value entering the last firm of `path`.
fn walk_chains(
    net: &MultilayerNetwork,
    mode: Injection,
    visit: &mut dyn FnMut(&[u32], f64),
) -> Result<(), OracleError> {
    let n = net.firm_count();
    if n > MAX_ORACLE_FIRMS {
        return Err(OracleError::TooLarge {
            size: n,
            limit: MAX_ORACLE_FIRMS,
        });
    }
    fn go(
        net: &MultilayerNetwork,
        path: &mut Vec<u32>,
        value: f64,
        visit: &mut dyn FnMut(&[u32], f64),
    ) -> Result<(), OracleError> {
        let v = *path.last().expect("non-empty path");
        for &(s, r) in net.shareholders().neighbors(v) {
            if path.contains(&s) {
                return Err(OracleError::Cyclic);
            }
            path.push(s);
            visit(path, value * r);
            go(net, path, value * r, visit)?;
            path.pop();
        }
        Ok(())
    }
    let mut path = Vec::with_capacity(n);
    for f in 0..n as u32 {
        let p = injection(net, f, mode);
        path.clear();
        path.push(f);
        go(net, &mut path, p, visit)?;
    }
    Ok(())
}

/// Value entering and leaving each firm, summed chain by chain.
pub fn oracle_value_flow(net: &MultilayerNetwork, mode: Injection) -> Result<OracleFlow, OracleError> {
    let n = net.firm_count();
    let mut flow = OracleFlow {
        in_value: vec![0.0; n],
        out_value: vec![0.0; n],
    };
    walk_chains(net, mode, &mut |path, value| {
        let k = path.len();
        flow.in_value[path[k - 1] as usize] += value;
        flow.out_value[path[k - 2] as usize] += value;
    })?;
    Ok(flow)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleCredits {
    pub outward: BTreeMap<PairKey, f64>,
    pub inward: BTreeMap<PairKey, f64>,
}

/// Conduit crediting evaluated on every chain prefix.
pub fn oracle_conduit_credits(
    net: &MultilayerNetwork,
    sinks: &BTreeSet<PairKey>,
    mode: Injection,
) -> Result<OracleCredits, OracleError> {
    let mut credits = OracleCredits::default();
    let is_sink = |f: u32| sinks.contains(&net.pair(f));
    walk_chains(net, mode, &mut |path, value| {
        let k = path.len();
        let last = path[k - 1];
        let interior = &path[1..k - 1];
        if is_sink(last) {
            if interior.iter().all(|&f| !is_sink(f)) {
                let distinct: BTreeSet<PairKey> = interior.iter().map(|&f| net.pair(f)).collect();
                for p in distinct {
                    *credits.outward.entry(p).or_insert(0.0) += value;
                }
            }
            return;
        }
        if let Some(j) = path[..k - 1].iter().rposition(|&f| is_sink(f)) {
            let p = net.pair(last);
            if path[j + 1..k - 1].iter().all(|&f| net.pair(f) != p) {
                *credits.inward.entry(p).or_insert(0.0) += value;
            }
        }
    })?;
    Ok(credits)
}

/// All simple routes `o -> d` with at most `max_hops` edges of minimal cost
/// (within the tie tolerance), as vertex index sequences.
pub fn minimal_paths(
    tax: &TaxNetwork,
    cost: RoutingCostModel,
    max_hops: usize,
    o: usize,
    d: usize,
) -> Vec<Vec<usize>> {
    let n = tax.len();
    let mut all: Vec<(f64, Vec<usize>)> = Vec::new();
    fn go(
        tax: &TaxNetwork,
        cost: RoutingCostModel,
        max_hops: usize,
        d: usize,
        path: &mut Vec<usize>,
        c: f64,
        all: &mut Vec<(f64, Vec<usize>)>,
    ) {
        let v = *path.last().expect("non-empty path");
        if v == d {
            all.push((c, path.clone()));
            return;
        }
        if path.len() > max_hops {
            return;
        }
        for u in 0..tax.len() {
            if path.contains(&u) {
                continue;
            }
            let w = cost.edge_cost(tax.rate_at(v, u));
            if !w.is_finite() {
                continue;
            }
            path.push(u);
            go(tax, cost, max_hops, d, path, c + w, all);
            path.pop();
        }
    }
    if o == d || o >= n || d >= n {
        return Vec::new();
    }
    go(tax, cost, max_hops, d, &mut vec![o], 0.0, &mut all);
    let Some(best) = all.iter().map(|(c, _)| *c).min_by(f64::total_cmp) else {
        return Vec::new();
    };
    all.into_iter()
        .filter(|(c, _)| within_tie(*c, best))
        .map(|(_, p)| p)
        .collect()
}

/// Splits `mass` equally among the distinct next vertices after position
/// `depth` of `paths` (all sharing a prefix), crediting intermediates.
fn split(paths: &[&Vec<usize>], depth: usize, mass: f64, d: usize, load: &mut [f64]) {
    let mut groups: BTreeMap<usize, Vec<&Vec<usize>>> = BTreeMap::new();
    for p in paths {
        if let Some(&next) = p.get(depth + 1) {
            groups.entry(next).or_default().push(p);
        }
    }
    let share = mass / groups.len() as f64;
    for (next, group) in groups {
        if next == d {
            continue;
        }
        load[next] += share;
        split(&group, depth + 1, share, d, load);
    }
}

/// Load centrality by enumerating every minimal route of every packet.
pub fn oracle_load(
    tax: &TaxNetwork,
    cost: RoutingCostModel,
    max_hops: usize,
) -> Result<BTreeMap<JurisdictionCode, f64>, OracleError> {
    let n = tax.len();
    if n > MAX_ORACLE_JURISDICTIONS {
        return Err(OracleError::TooLarge {
            size: n,
            limit: MAX_ORACLE_JURISDICTIONS,
        });
    }
    let mut load = vec![0.0; n];
    for o in 0..n {
        for d in 0..n {
            let paths = minimal_paths(tax, cost, max_hops, o, d);
            if paths.is_empty() {
                continue;
            }
            let refs: Vec<&Vec<usize>> = paths.iter().collect();
            split(&refs, 0, 1.0, d, &mut load);
        }
    }
    Ok(tax.codes().iter().copied().zip(load).collect())
}
