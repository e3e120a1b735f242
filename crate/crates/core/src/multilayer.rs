//! Multilayer centrality: conduit scores of the ownership layer weighted
//! against the load of the pair's jurisdiction in the tax layer.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::conduit::ConduitScore;
use crate::model::{JurisdictionCode, PairKey};
use crate::score::combine_euclidean;

pub const CLAMP_EPSILON: f64 = 1e-6;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_REPORT_THRESHOLD: f64 = 2.0;
pub const SWEEP_THRESHOLDS: [f64; 3] = [1.0, 1.5, 2.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MultilayerError {
    #[error("alpha must be positive, got {0}")]
    Alpha(f64),
    #[error("beta must be non-negative, got {0}")]
    Beta(f64),
    #[error("no beta values given")]
    NoBetas,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultilayerScore {
    pub pair: PairKey,
    pub m_out: f64,
    pub m_in: f64,
    pub m: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Inputs of one pair: standardized conduit components and the load of its
/// jurisdiction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairInputs {
    pub pair: PairKey,
    pub c_out: f64,
    pub c_in: f64,
    pub load: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MultilayerTable {
    /// Sorted by descending `m`, ties by pair.
    pub scores: Vec<MultilayerScore>,
    /// Pairs with a conduit or load input at or below zero, scored at the
    /// clamp floor.
    pub clamped_pairs: usize,
    /// Pairs lacking a standardized conduit component or a load score.
    pub excluded_pairs: usize,
}

fn check(alpha: f64, beta: f64) -> Result<(), MultilayerError> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(MultilayerError::Alpha(alpha));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(MultilayerError::Beta(beta));
    }
    Ok(())
}

/// Weighted geometric mean `(c^alpha * l^beta)^(1 / (alpha + beta))` of the
/// inputs clamped to at least [`CLAMP_EPSILON`].
pub fn multilayer_component(c_std: f64, l_std: f64, alpha: f64, beta: f64) -> Result<f64, MultilayerError> {
    check(alpha, beta)?;
    let c = c_std.max(CLAMP_EPSILON);
    let l = l_std.max(CLAMP_EPSILON);
    if beta == 0.0 {
        return Ok(c);
    }
    Ok(((alpha * c.ln() + beta * l.ln()) / (alpha + beta)).exp())
}

pub fn multilayer_score(inputs: &PairInputs, alpha: f64, beta: f64) -> Result<MultilayerScore, MultilayerError> {
    let m_out = multilayer_component(inputs.c_out, inputs.load, alpha, beta)?;
    let m_in = multilayer_component(inputs.c_in, inputs.load, alpha, beta)?;
    Ok(MultilayerScore {
        pair: inputs.pair,
        m_out,
        m_in,
        m: combine_euclidean(m_in, m_out),
        alpha,
        beta,
    })
}

/// Joins conduit scores with jurisdiction loads. Pairs missing either
/// conduit component or a load are dropped; the second value counts them.
pub fn join_inputs(conduits: &[ConduitScore], loads: &BTreeMap<JurisdictionCode, f64>) -> (Vec<PairInputs>, usize) {
    let mut excluded = 0;
    let mut out = Vec::new();
    for c in conduits {
        match (c.c_out_std, c.c_in_std, loads.get(&c.pair.jurisdiction)) {
            (Some(c_out), Some(c_in), Some(&load)) => out.push(PairInputs {
                pair: c.pair,
                c_out,
                c_in,
                load,
            }),
            _ => excluded += 1,
        }
    }
    (out, excluded)
}

fn is_clamped(i: &PairInputs) -> bool {
    i.c_out < CLAMP_EPSILON || i.c_in < CLAMP_EPSILON || i.load < CLAMP_EPSILON
}

pub fn multilayer_table(inputs: &[PairInputs], alpha: f64, beta: f64) -> Result<MultilayerTable, MultilayerError> {
    check(alpha, beta)?;
    let mut scores = inputs
        .iter()
        .map(|i| multilayer_score(i, alpha, beta))
        .collect::<Result<Vec<_>, _>>()?;
    scores.sort_by(|a, b| b.m.total_cmp(&a.m).then(a.pair.cmp(&b.pair)));
    Ok(MultilayerTable {
        scores,
        clamped_pairs: inputs.iter().filter(|i| is_clamped(i)).count(),
        excluded_pairs: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdCount {
    pub threshold: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub beta: f64,
    pub counts: Vec<ThresholdCount>,
    #[serde(skip)]
    pub table: MultilayerTable,
}

/// One ranked table per beta, with the number of pairs above each of
/// [`SWEEP_THRESHOLDS`] and `report_threshold`.
pub fn beta_sweep(
    inputs: &[PairInputs],
    alpha: f64,
    betas: &[f64],
    report_threshold: f64,
) -> Result<Vec<SweepEntry>, MultilayerError> {
    if betas.is_empty() {
        return Err(MultilayerError::NoBetas);
    }
    let mut thresholds = SWEEP_THRESHOLDS.to_vec();
    if !thresholds.contains(&report_threshold) {
        thresholds.push(report_threshold);
    }
    betas
        .iter()
        .map(|&beta| {
            let table = multilayer_table(inputs, alpha, beta)?;
            let counts = thresholds
                .iter()
                .map(|&t| ThresholdCount {
                    threshold: t,
                    pairs: table.scores.iter().filter(|s| s.m > t).count(),
                })
                .collect();
            Ok(SweepEntry { beta, counts, table })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(s: &str) -> PairKey {
        PairKey::parse(s).unwrap()
    }

    #[test]
    fn netherlands_finance_components() {
        let m = multilayer_component(19.37, 3.44, 1.0, 0.5).unwrap();
        assert!((m - 10.88).abs() <= 0.02, "{m}");
        let m = multilayer_component(19.37, 3.44, 1.0, 0.8).unwrap();
        assert!((m - 8.98).abs() <= 0.02, "{m}");
    }

    #[test]
    fn beta_zero_ignores_load() {
        assert_eq!(multilayer_component(3.7, 0.2, 1.0, 0.0).unwrap(), 3.7);
    }

    #[test]
    fn anchor() {
        let s = multilayer_score(&PairInputs { pair: pair("NLD:K"), c_out: 1.0, c_in: 1.0, load: 1.0 }, 1.0, 0.5).unwrap();
        assert_eq!((s.m_out, s.m_in, s.m), (1.0, 1.0, 1.0));
    }

    #[test]
    fn table_six_rows() {
        let rows = [
            ("NLD:K", 19.37, 6.13, 3.44, 10.88, 5.06, 8.49),
            ("LUX:G", 6.18, 10.79, 2.65, 4.66, 6.76, 5.81),
        ];
        for (p, co, ci, l, mo, mi, m) in rows {
            let s = multilayer_score(&PairInputs { pair: pair(p), c_out: co, c_in: ci, load: l }, 1.0, 0.5).unwrap();
            assert!((s.m_out - mo).abs() <= 0.02 && (s.m_in - mi).abs() <= 0.02 && (s.m - m).abs() <= 0.02, "{p}");
        }
    }

    #[test]
    fn invalid_weights() {
        assert_eq!(multilayer_component(1.0, 1.0, 0.0, 0.5), Err(MultilayerError::Alpha(0.0)));
        assert_eq!(multilayer_component(1.0, 1.0, 1.0, -0.1), Err(MultilayerError::Beta(-0.1)));
        assert_eq!(beta_sweep(&[], 1.0, &[], 2.0).unwrap_err(), MultilayerError::NoBetas);
    }

    #[test]
    fn clamping_is_counted() {
        let inputs = [
            PairInputs { pair: pair("NLD:K"), c_out: -0.5, c_in: 1.2, load: 2.0 },
            PairInputs { pair: pair("LUX:K"), c_out: 1.5, c_in: 1.2, load: 2.0 },
        ];
        let t = multilayer_table(&inputs, 1.0, 0.5).unwrap();
        assert_eq!(t.clamped_pairs, 1);
        assert!(t.scores.iter().all(|s| s.m.is_finite()));
        assert_eq!(t.scores[0].pair, pair("LUX:K"));
    }

    #[test]
    fn join_excludes_incomplete_pairs() {
        let c = |p: &str, o: Option<f64>, i: Option<f64>| ConduitScore {
            pair: pair(p),
            c_out_raw: 0.0,
            c_in_raw: 0.0,
            c_out_std: o,
            c_in_std: i,
            c_combined: None,
        };
        let conduits = [c("NLD:K", Some(2.0), Some(1.0)), c("LUX:K", Some(2.0), None), c("IRL:K", Some(1.0), Some(1.0))];
        let loads = [(pair("NLD:K").jurisdiction, 1.5), (pair("LUX:K").jurisdiction, 1.0)].into_iter().collect();
        let (inputs, excluded) = join_inputs(&conduits, &loads);
        assert_eq!(inputs.len(), 1);
        assert_eq!(excluded, 2);
    }

    #[test]
    fn sweep_counts() {
        let inputs = [
            PairInputs { pair: pair("NLD:K"), c_out: 4.0, c_in: 3.0, load: 2.0 },
            PairInputs { pair: pair("LUX:K"), c_out: 1.2, c_in: 1.2, load: 1.2 },
            PairInputs { pair: pair("IRL:K"), c_out: 0.5, c_in: 0.5, load: 0.5 },
        ];
        let sweep = beta_sweep(&inputs, 1.0, &[0.1, 0.5, 0.8], 2.5).unwrap();
        assert_eq!(sweep.len(), 3);
        let counts: Vec<usize> = sweep[0].counts.iter().map(|c| c.pairs).collect();
        assert_eq!(counts, vec![2, 1, 1, 1]);
        assert_eq!(sweep[0].counts[3].threshold, 2.5);
    }

    proptest! {
        #[test]
        fn increasing_in_each_input(c in 0.01f64..50.0, l in 0.01f64..50.0, d in 0.01f64..5.0, beta in 0.05f64..2.0) {
            let base = multilayer_component(c, l, 1.0, beta).unwrap();
            prop_assert!(multilayer_component(c + d, l, 1.0, beta).unwrap() > base);
            prop_assert!(multilayer_component(c, l + d, 1.0, beta).unwrap() > base);
        }

        #[test]
        fn beta_zero_ranks_like_conduit(vals in prop::collection::vec((0.01f64..20.0, 0.01f64..20.0, 0.01f64..10.0), 2..30)) {
            let codes = ["AAA", "BBB", "CCC", "DDD", "EEE", "FFF"];
            let sectors = ["A", "B", "C", "D", "E", "F"];
            let inputs: Vec<PairInputs> = vals
                .iter()
                .enumerate()
                .map(|(i, &(o, n, l))| PairInputs {
                    pair: pair(&format!("{}:{}", codes[i % 6], sectors[i / 6])),
                    c_out: o,
                    c_in: n,
                    load: l,
                })
                .collect();
            let t = multilayer_table(&inputs, 1.0, 0.0).unwrap();
            for s in &t.scores {
                let i = inputs.iter().find(|i| i.pair == s.pair).unwrap();
                prop_assert_eq!(s.m, combine_euclidean(i.c_in, i.c_out));
            }
        }
    }
}
