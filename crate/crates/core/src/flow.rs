//! Value propagation over shareholding chains.
//!
//! Operating income is injected at chain-end firms (firms that own no other
//! firm) and travels up the ownership chain: a shareholder holding ratio `w`
//! of a firm receives `w` times the value available at that firm. The value
//! reaching a firm over a chain is therefore the source income times the
//! product of the ratios along it.
//!
//! Real shareholding data contains cross-holding cycles, so propagation runs
//! on an [`OwnershipView`] in which every strongly connected component with
//! more than one firm is collapsed into a single node.

use std::collections::{BTreeMap, VecDeque};

use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;
use thiserror::Error;

use crate::model::{Adjacency, MultilayerNetwork, PairKey};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("ownership graph contains a cycle through {0:?}")]
    CycleDetected(String),
    #[error("total flowing value is zero; GDP-normalized scores are undefined")]
    ZeroTotal,
}

/// Which firms inject their operating income.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Injection {
    /// Only chain-end firms (own no other firm).
    #[default]
    ChainEnds,
    /// Every firm injects its own income.
    All,
}

/// Definition of the normalizing total `V_total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TotalMode {
    /// Sum of value received by every node.
    #[default]
    Received,
    /// Sum of injected incomes.
    Injected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct FlowOptions {
    pub injection: Injection,
    pub total: TotalMode,
}

/// Collapsed cross-holding components, each listed by member firm id.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CycleReport {
    pub components: Vec<Vec<String>>,
}

/// Sentinel pair index for collapsed components, whose jurisdiction x
/// sector attribution is ambiguous.
pub const NO_PAIR: u32 = u32::MAX;

/// Acyclic view of the ownership layer.
#[derive(Debug, Clone)]
pub struct OwnershipView {
    labels: Vec<String>,
    pair_index: Vec<u32>,
    pairs: Vec<PairKey>,
    income: Vec<f64>,
    shareholders: Adjacency,
    holdings: Adjacency,
    node_of_firm: Vec<u32>,
}

impl OwnershipView {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Firm id, or `cycle:<n>` for a collapsed component.
    pub fn label(&self, v: u32) -> &str {
        &self.labels[v as usize]
    }

    pub fn pair(&self, v: u32) -> Option<PairKey> {
        match self.pair_index[v as usize] {
            NO_PAIR => None,
            i => Some(self.pairs[i as usize]),
        }
    }

    /// Index into [`OwnershipView::pairs`], or [`NO_PAIR`].
    #[inline]
    pub fn pair_index(&self, v: u32) -> u32 {
        self.pair_index[v as usize]
    }

    /// Distinct pairs occupied by unambiguous nodes, sorted.
    pub fn pairs(&self) -> &[PairKey] {
        &self.pairs
    }

    pub fn income(&self, v: u32) -> f64 {
        self.income[v as usize]
    }

    /// node -> its shareholders
    pub fn shareholders(&self) -> &Adjacency {
        &self.shareholders
    }

    /// node -> the nodes it owns
    pub fn holdings(&self) -> &Adjacency {
        &self.holdings
    }

    pub fn node_of_firm(&self, firm: u32) -> u32 {
        self.node_of_firm[firm as usize]
    }

    /// Nodes ordered so that every owned node precedes its shareholders,
    /// i.e. the direction value travels.
    pub fn flow_order(&self) -> Result<Vec<u32>, FlowError> {
        let n = self.len();
        let mut pending: Vec<u32> = (0..n as u32).map(|v| self.holdings.degree(v) as u32).collect();
        let mut order = Vec::with_capacity(n);
        let mut queue: VecDeque<u32> = (0..n as u32).filter(|&v| pending[v as usize] == 0).collect();
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &(s, _) in self.shareholders.neighbors(v) {
                let p = &mut pending[s as usize];
                *p -= 1;
                if *p == 0 {
                    queue.push_back(s);
                }
            }
        }
        if order.len() < n {
            let stuck = (0..n).find(|&v| pending[v] > 0).unwrap_or(0);
            return Err(FlowError::CycleDetected(self.labels[stuck].clone()));
        }
        Ok(order)
    }

    /// Value injected at node `v` under `injection`.
    pub fn injection(&self, v: u32, injection: Injection) -> f64 {
        match injection {
            Injection::All => self.income[v as usize],
            Injection::ChainEnds if self.holdings.degree(v) == 0 => self.income[v as usize],
            Injection::ChainEnds => 0.0,
        }
    }
}

/// Firms that own no other firm: the injection points.
pub fn find_sources(net: &MultilayerNetwork) -> Vec<u32> {
    (0..net.firm_count() as u32)
        .filter(|&f| net.holdings().degree(f) == 0)
        .collect()
}

/// Collapses every cross-holding cycle into one node. Acyclic input yields
/// an identity view (node `i` is firm `i`).
pub fn condense_cycles(net: &MultilayerNetwork) -> (OwnershipView, CycleReport) {
    let n = net.firm_count();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, net.links().len());
    for _ in 0..n {
        graph.add_node(());
    }
    for l in net.links() {
        graph.add_edge(l.shareholder.into(), l.owned.into(), ());
    }
    let mut components: Vec<Vec<u32>> = kosaraju_scc(&graph)
        .into_iter()
        .filter(|c| c.len() > 1)
        .map(|c| {
            let mut members: Vec<u32> = c.into_iter().map(|ix| ix.index() as u32).collect();
            members.sort_unstable();
            members
        })
        .collect();
    components.sort_unstable_by_key(|c| c[0]);

    const UNASSIGNED: u32 = u32::MAX;
    let mut node_of_firm = vec![UNASSIGNED; n];
    for (ci, members) in components.iter().enumerate() {
        for &m in members {
            node_of_firm[m as usize] = ci as u32;
        }
    }
    let mut labels = Vec::with_capacity(n);
    let mut firm_pairs = Vec::with_capacity(n);
    let mut income = Vec::with_capacity(n);
    let mut comp_node = vec![0u32; components.len()];
    for f in 0..n as u32 {
        if node_of_firm[f as usize] == UNASSIGNED {
            node_of_firm[f as usize] = labels.len() as u32 | (1 << 31);
            labels.push(net.firm(f).id.clone());
            firm_pairs.push(Some(net.pair(f)));
            income.push(net.firm(f).operating_income);
        }
    }
    for (ci, members) in components.iter().enumerate() {
        comp_node[ci] = labels.len() as u32;
        labels.push(format!("cycle:{ci}"));
        firm_pairs.push(None);
        income.push(members.iter().map(|&m| net.firm(m).operating_income).sum());
    }
    for slot in node_of_firm.iter_mut() {
        *slot = if *slot & (1 << 31) != 0 {
            *slot & !(1 << 31)
        } else {
            comp_node[*slot as usize]
        };
    }

    let mut pairs: Vec<PairKey> = firm_pairs.iter().flatten().copied().collect();
    pairs.sort_unstable();
    pairs.dedup();
    let pair_index = firm_pairs
        .iter()
        .map(|p| match p {
            Some(p) => pairs.binary_search(p).expect("pair present") as u32,
            None => NO_PAIR,
        })
        .collect();

    let edges: Vec<(u32, u32, f64)> = net
        .links()
        .iter()
        .map(|l| (node_of_firm[l.shareholder as usize], node_of_firm[l.owned as usize], l.ratio))
        .filter(|(s, o, _)| s != o)
        .collect();
    let nodes = labels.len();
    let shareholders = Adjacency::from_edges(nodes, edges.iter().map(|&(s, o, r)| (o, s, r)));
    let holdings = Adjacency::from_edges(nodes, edges.iter().copied());

    let report = CycleReport {
        components: components
            .iter()
            .map(|c| c.iter().map(|&m| net.firm(m).id.clone()).collect())
            .collect(),
    };
    (
        OwnershipView {
            labels,
            pair_index,
            pairs,
            income,
            shareholders,
            holdings,
            node_of_firm,
        },
        report,
    )
}

/// Per-node and per-pair value totals.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFlowResult {
    /// Value entering each node, summed over all chains.
    pub in_value: Vec<f64>,
    /// Value leaving each node toward its shareholders.
    pub out_value: Vec<f64>,
    /// Income injected at each node.
    pub injected: Vec<f64>,
    pub pair_in: BTreeMap<PairKey, f64>,
    pub pair_out: BTreeMap<PairKey, f64>,
    pub received_total: f64,
    pub injected_total: f64,
    pub total_mode: TotalMode,
}

impl ValueFlowResult {
    /// Value available for forwarding at `v`: its injection plus what it
    /// received.
    #[inline]
    pub fn available(&self, v: u32) -> f64 {
        self.injected[v as usize] + self.in_value[v as usize]
    }

    /// `V_total` under the configured mode, without the zero check.
    pub fn v_total(&self) -> f64 {
        match self.total_mode {
            TotalMode::Received => self.received_total,
            TotalMode::Injected => self.injected_total,
        }
    }
}

/// Propagates injected value up every ownership chain with a dynamic
/// program over the view in flow order.
pub fn propagate_value(view: &OwnershipView, opts: FlowOptions) -> Result<ValueFlowResult, FlowError> {
    let order = view.flow_order()?;
    let n = view.len();
    let injected: Vec<f64> = (0..n as u32).map(|v| view.injection(v, opts.injection)).collect();
    let mut in_value = vec![0.0; n];
    let mut out_value = vec![0.0; n];
    for &v in &order {
        let avail = injected[v as usize] + in_value[v as usize];
        let mut out = 0.0;
        for &(s, r) in view.shareholders().neighbors(v) {
            let amount = r * avail;
            in_value[s as usize] += amount;
            out += amount;
        }
        out_value[v as usize] = out;
    }

    let mut pair_in = BTreeMap::new();
    let mut pair_out = BTreeMap::new();
    for v in 0..n as u32 {
        if let Some(p) = view.pair(v) {
            *pair_in.entry(p).or_insert(0.0) += in_value[v as usize];
            *pair_out.entry(p).or_insert(0.0) += out_value[v as usize];
        }
    }
    Ok(ValueFlowResult {
        received_total: in_value.iter().sum(),
        injected_total: injected.iter().sum(),
        in_value,
        out_value,
        injected,
        pair_in,
        pair_out,
        total_mode: opts.total,
    })
}

/// `V_total`, or [`FlowError::ZeroTotal`] when nothing flows.
pub fn total_value(result: &ValueFlowResult) -> Result<f64, FlowError> {
    let total = result.v_total();
    if total == 0.0 || !total.is_finite() {
        Err(FlowError::ZeroTotal)
    } else {
        Ok(total)
    }
}
