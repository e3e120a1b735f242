//! Load centrality over the withholding-tax layer.
//!
//! Every ordered pair of jurisdictions `(o, d)` exchanges one unit "dividend
//! packet". The packet travels along minimal-cost routes, where an edge
//! costs its withholding rate (additive model) or `-ln(1 - rate)`
//! (multiplicative model, i.e. compounded taxation). At each hop the packet
//! mass splits equally among the next jurisdictions that continue some
//! minimal route. A jurisdiction's load is the total packet mass passing
//! through it as an intermediate hop, over all `(o, d)`.
//!
//! Routes are simple paths of at most `max_hops` edges. The cap matters when
//! zero-rate edges tie a direct transfer with arbitrarily many zero-cost
//! detours (e.g. an EU-style zero-withholding clique); it bounds the set of
//! minimal routes and is part of the definition of the score.
//!
//! Engine: for each destination a hop-bounded Bellman-Ford table
//! `dist[h][u]` (cheapest cost from `u` to `d` in at most `h` hops) prunes a
//! depth-first expansion of the route prefix tree; the surviving tree is
//! then swept top-down to split mass.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{JurisdictionCode, TaxNetwork};
use crate::score::{standardize_series, ScoreError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoutingError {
    #[error("max_hops must be at least 1")]
    ZeroHops,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoutingCostModel {
    #[default]
    Additive,
    Multiplicative,
}

impl RoutingCostModel {
    /// Cost of one edge; `INFINITY` means the edge is unusable.
    pub fn edge_cost(self, rate: f64) -> f64 {
        match self {
            Self::Additive => rate,
            Self::Multiplicative if rate >= 1.0 => f64::INFINITY,
            Self::Multiplicative => -(-rate).ln_1p(),
        }
    }
}

impl std::str::FromStr for RoutingCostModel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "additive" => Ok(Self::Additive),
            "multiplicative" => Ok(Self::Multiplicative),
            other => Err(format!("unknown routing cost model {other:?}")),
        }
    }
}

impl std::fmt::Display for RoutingCostModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Additive => "additive",
            Self::Multiplicative => "multiplicative",
        })
    }
}

pub const DEFAULT_MAX_HOPS: usize = 4;

/// Relative tolerance under which two route costs count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[inline]
pub fn within_tie(cost: f64, best: f64) -> bool {
    cost <= best + TIE_TOLERANCE * (1.0 + best.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadScore {
    pub jurisdiction: JurisdictionCode,
    pub l_raw: f64,
    pub l_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadResult {
    /// Raw load per jurisdiction.
    pub loads: BTreeMap<JurisdictionCode, f64>,
    /// Ordered pairs with no finite-cost route within the hop cap; their
    /// packets contribute nothing.
    pub unreachable: Vec<(JurisdictionCode, JurisdictionCode)>,
}

/// Dense cost matrix, `INFINITY` on the diagonal and for unusable edges.
fn cost_matrix(tax: &TaxNetwork, cost: RoutingCostModel) -> Vec<f64> {
    let n = tax.len();
    let mut w = vec![f64::INFINITY; n * n];
    for u in 0..n {
        for v in 0..n {
            if u != v {
                w[u * n + v] = cost.edge_cost(tax.rate_at(u, v));
            }
        }
    }
    w
}

/// `dist[h * n + u]`: cheapest cost from `u` to `dest` using at most `h`
/// edges. Walks and simple paths give the same minimum since costs are
/// non-negative.
fn hop_bounded_distances(w: &[f64], n: usize, dest: usize, max_hops: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; (max_hops + 1) * n];
    dist[dest] = 0.0;
    for h in 1..=max_hops {
        let (prev, cur) = dist.split_at_mut(h * n);
        let prev = &prev[(h - 1) * n..];
        let cur = &mut cur[..n];
        for u in 0..n {
            let mut best = prev[u];
            let row = &w[u * n..(u + 1) * n];
            for v in 0..n {
                let c = row[v] + prev[v];
                if c < best {
                    best = c;
                }
            }
            cur[u] = best;
        }
    }
    dist
}

struct TreeNode {
    vertex: u32,
    parent: u32,
}

struct RouteTree<'a> {
    w: &'a [f64],
    dist: &'a [f64],
    n: usize,
    dest: usize,
    max_hops: usize,
    best: f64,
    on_path: Vec<bool>,
    nodes: Vec<TreeNode>,
}

impl RouteTree<'_> {
    /// Expands the prefix ending at tree node `at` (vertex `v`, `hops` edges,
    /// accumulated `cost`). Returns whether any minimal route completes
    /// below it; dead subtrees are truncated from the arena.
    fn expand(&mut self, at: u32, v: usize, hops: usize, cost: f64) -> bool {
        let n = self.n;
        let remaining = self.max_hops - hops - 1;
        let mut any = false;
        for u in 0..n {
            if self.on_path[u] {
                continue;
            }
            let c = cost + self.w[v * n + u];
            if u == self.dest {
                if within_tie(c, self.best) {
                    self.nodes.push(TreeNode {
                        vertex: u as u32,
                        parent: at,
                    });
                    any = true;
                }
                continue;
            }
            if remaining == 0 || !within_tie(c + self.dist[remaining * n + u], self.best) {
                continue;
            }
            let mark = self.nodes.len();
            self.nodes.push(TreeNode {
                vertex: u as u32,
                parent: at,
            });
            self.on_path[u] = true;
            let alive = self.expand(mark as u32, u, hops + 1, c);
            self.on_path[u] = false;
            if alive {
                any = true;
            } else {
                self.nodes.truncate(mark);
            }
        }
        any
    }
}

/// Load contributed by the packets of every origin toward `dest`.
fn loads_toward(w: &[f64], n: usize, dest: usize, max_hops: usize) -> (Vec<f64>, Vec<usize>) {
    let dist = hop_bounded_distances(w, n, dest, max_hops);
    let mut load = vec![0.0; n];
    let mut unreachable = Vec::new();
    let mut tree = RouteTree {
        w,
        dist: &dist,
        n,
        dest,
        max_hops,
        best: 0.0,
        on_path: vec![false; n],
        nodes: Vec::new(),
    };
    let mut children = Vec::new();
    let mut mass = Vec::new();
    for origin in 0..n {
        if origin == dest {
            continue;
        }
        let best = dist[max_hops * n + origin];
        if !best.is_finite() {
            unreachable.push(origin);
            continue;
        }
        tree.best = best;
        tree.nodes.clear();
        tree.nodes.push(TreeNode {
            vertex: origin as u32,
            parent: u32::MAX,
        });
        tree.on_path[origin] = true;
        let alive = tree.expand(0, origin, 0, 0.0);
        tree.on_path[origin] = false;
        debug_assert!(alive, "finite hop-bounded distance implies a route");

        // preorder arena: parents precede children
        let size = tree.nodes.len();
        children.clear();
        children.resize(size, 0u32);
        for node in &tree.nodes[1..] {
            children[node.parent as usize] += 1;
        }
        mass.clear();
        mass.resize(size, 0.0f64);
        mass[0] = 1.0;
        for i in 1..size {
            let node = &tree.nodes[i];
            let p = node.parent as usize;
            mass[i] = mass[p] / f64::from(children[p]);
            if node.vertex as usize != dest {
                load[node.vertex as usize] += mass[i];
            }
        }
    }
    (load, unreachable)
}

/// Raw load centrality of every jurisdiction in `tax`.
pub fn load_centrality(tax: &TaxNetwork, cost: RoutingCostModel, max_hops: usize) -> Result<LoadResult, RoutingError> {
    if max_hops == 0 {
        return Err(RoutingError::ZeroHops);
    }
    let n = tax.len();
    let w = cost_matrix(tax, cost);
    let per_dest: Vec<(Vec<f64>, Vec<usize>)> = (0..n)
        .into_par_iter()
        .map(|d| loads_toward(&w, n, d, max_hops))
        .collect();

    let codes = tax.codes();
    let mut totals = vec![0.0; n];
    let mut unreachable = Vec::new();
    for (d, (load, lost)) in per_dest.iter().enumerate() {
        for (t, l) in totals.iter_mut().zip(load) {
            *t += l;
        }
        unreachable.extend(lost.iter().map(|&o| (codes[o], codes[d])));
    }
    unreachable.sort();
    Ok(LoadResult {
        loads: codes.iter().copied().zip(totals).collect(),
        unreachable,
    })
}

/// Standardized load, `(l - mean) / sigma + 1`.
pub fn standardize_load(raw: &BTreeMap<JurisdictionCode, f64>) -> Result<BTreeMap<JurisdictionCode, f64>, ScoreError> {
    let values: Vec<f64> = raw.values().copied().collect();
    let std = standardize_series(&values)?;
    Ok(raw.keys().copied().zip(std).collect())
}

/// Raw and standardized load per jurisdiction. A series that cannot be
/// standardized leaves `l_std` empty.
pub fn load_scores(result: &LoadResult) -> (Vec<LoadScore>, Option<ScoreError>) {
    let std = standardize_load(&result.loads);
    let scores = result
        .loads
        .iter()
        .map(|(&jurisdiction, &l_raw)| LoadScore {
            jurisdiction,
            l_raw,
            l_std: std.as_ref().ok().and_then(|m| m.get(&jurisdiction).copied()),
        })
        .collect();
    (scores, std.err())
}
