//! Evaluation against a gold standard: precision/recall/F1 on directed
//! edges and Erdos-Renyi random-graph significance of true-positive counts.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed;

const STAGE_ER: u64 = 0x6576_6c31; // "evl1"

#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    #[serde(skip)]
    pub null_histogram: Option<Vec<u64>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check_edges(edges: &[(usize, usize)], p: usize) -> Result<()> {
    for &(u, v) in edges {
        if u >= p || v >= p {
            return Err(Error::LabelMismatch(format!(
                "edge ({}, {}) outside gene universe of size {}",
                u, v, p
            )));
        }
    }
    Ok(())
}

/// Exact set arithmetic on directed pairs; a reversed edge counts as one
/// false positive plus one false negative.
pub fn precision_recall_f1(
    estimate: &[(usize, usize)],
    truth: &[(usize, usize)],
    p: usize,
) -> Result<EvalReport> {
    check_edges(estimate, p)?;
    check_edges(truth, p)?;
    let est: HashSet<(usize, usize)> = estimate.iter().copied().collect();
    let gold: HashSet<(usize, usize)> = truth.iter().copied().collect();
    let tp = est.intersection(&gold).count();
    let fp = est.len() - tp;
    let fn_ = gold.len() - tp;
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(EvalReport {
        tp,
        fp,
        fn_,
        precision,
        recall,
        f1,
        p_value: None,
        null_histogram: None,
    })
}

/// Null model for the significance test.
#[derive(Debug, Clone)]
pub enum NullMode {
    /// Any directed edge between distinct genes.
    Full,
    /// Sources restricted to the perturbed genes (two-layer designs).
    TwoLayer { sources: Vec<usize> },
}

/// Random directed graphs with exactly |estimate| edges; the p-value is the
/// add-one fraction of trials whose true-positive count reaches the
/// observed one. Returns the report with `p_value` and the TP histogram.
pub fn er_significance(
    estimate: &[(usize, usize)],
    truth: &[(usize, usize)],
    p: usize,
    trials: usize,
    seed_value: u64,
    mode: &NullMode,
) -> Result<EvalReport> {
    if trials == 0 {
        return Err(Error::EmptyInput("trial count"));
    }
    let mut report = precision_recall_f1(estimate, truth, p)?;
    let gold: HashSet<(usize, usize)> = truth.iter().copied().collect();
    let edges = estimate.len();
    let sources: Vec<usize> = match mode {
        NullMode::Full => (0..p).collect(),
        NullMode::TwoLayer { sources } => {
            check_edges(&sources.iter().map(|&s| (s, s.min(p - 1))).collect::<Vec<_>>(), p)?;
            sources.clone()
        }
    };
    let capacity = sources.len() * (p - 1);
    if edges > capacity {
        return Err(Error::EdgeBudgetTooLarge { edges, capacity });
    }
    let tp_counts: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, STAGE_ER, t as u64));
            rand::seq::index::sample(&mut rng, capacity, edges)
                .into_iter()
                .filter(|&idx| {
                    let u = sources[idx / (p - 1)];
                    let r = idx % (p - 1);
                    let v = if r >= u { r + 1 } else { r };
                    gold.contains(&(u, v))
                })
                .count()
        })
        .collect();
    let observed = report.tp;
    let hits = tp_counts.iter().filter(|&&c| c >= observed).count();
    let mut histogram = vec![0u64; edges + 1];
    for &c in &tp_counts {
        histogram[c] += 1;
    }
    report.p_value = Some((hits + 1) as f64 / (trials + 1) as f64);
    report.null_histogram = Some(histogram);
    Ok(report)
}
