//! MAP and NDCG.
//!
//! Average precision treats any label above zero as relevant. NDCG uses gain
//! `2^rel - 1` and discount `1 / log2(i + 1)` for 1-based position `i`. A
//! query without relevant documents scores 0 on both and still counts in the
//! means. The summary "mean NDCG" averages NDCG@1..10.

use std::collections::{BTreeMap, HashMap};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub const MEAN_NDCG_DEPTH: usize = 10;

pub fn default_cutoffs() -> Vec<usize> {
    (1..=MEAN_NDCG_DEPTH).collect()
}

pub fn average_precision(ranked: &[u32]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &rel) in ranked.iter().enumerate() {
        if rel > 0 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

fn dcg(ranked: &[u32], k: usize) -> f64 {
    ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &rel)| (2f64.powi(rel as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

pub fn ndcg_at_k(ranked: &[u32], k: usize) -> f64 {
    let mut ideal = ranked.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal, k);
    if idcg == 0.0 {
        0.0
    } else {
        dcg(ranked, k) / idcg
    }
}

fn mean_ndcg(ranked: &[u32]) -> f64 {
    (1..=MEAN_NDCG_DEPTH).map(|k| ndcg_at_k(ranked, k)).sum::<f64>() / MEAN_NDCG_DEPTH as f64
}

/// A predicted order of one query's documents (indices into the query).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryRanking {
    pub query_id: String,
    pub order: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryEval {
    pub query_id: String,
    pub average_precision: f64,
    /// NDCG at each of the report's cutoffs, in cutoff order.
    pub ndcg: Vec<f64>,
    pub mean_ndcg: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub cutoffs: Vec<usize>,
    pub map: f64,
    pub ndcg_at: BTreeMap<usize, f64>,
    pub mean_ndcg: f64,
    pub per_query: Vec<QueryEval>,
}

/// Scores `rankings` against the labels in `labels`. Every query of the
/// dataset must be ranked exactly once, with a full permutation of its
/// documents. Empty `cutoffs` means 1..=10.
pub fn evaluate(rankings: &[QueryRanking], labels: &Dataset, cutoffs: &[usize]) -> Result<EvalReport> {
    let cutoffs = if cutoffs.is_empty() { default_cutoffs() } else { cutoffs.to_vec() };
    if cutoffs.contains(&0) {
        return Err(Error::input("NDCG cutoffs must be at least 1"));
    }
    if labels.queries.is_empty() {
        return Err(Error::input("no queries to evaluate"));
    }
    let mut by_id: HashMap<&str, &QueryRanking> = HashMap::new();
    for r in rankings {
        if by_id.insert(&r.query_id, r).is_some() {
            return Err(Error::input(format!("query {} ranked twice", r.query_id)));
        }
    }
    if by_id.len() != labels.queries.len() {
        return Err(Error::input(format!(
            "{} ranked queries for {} labeled queries",
            by_id.len(),
            labels.queries.len()
        )));
    }
    let mut per_query = Vec::with_capacity(labels.queries.len());
    for q in &labels.queries {
        let r = by_id
            .get(q.query_id.as_str())
            .ok_or_else(|| Error::input(format!("query {} has no ranking", q.query_id)))?;
        let mut seen = vec![false; q.len()];
        for &d in &r.order {
            if d >= q.len() || std::mem::replace(&mut seen[d], true) {
                return Err(Error::input(format!("ranking of query {} is not a permutation", q.query_id)));
            }
        }
        if r.order.len() != q.len() {
            return Err(Error::input(format!("ranking of query {} is not a permutation", q.query_id)));
        }
        let ranked: Vec<u32> = r.order.iter().map(|&d| q.relevances[d]).collect();
        per_query.push(QueryEval {
            query_id: q.query_id.clone(),
            average_precision: average_precision(&ranked),
            ndcg: cutoffs.iter().map(|&k| ndcg_at_k(&ranked, k)).collect(),
            mean_ndcg: mean_ndcg(&ranked),
        });
    }
    let count = per_query.len() as f64;
    let map = per_query.iter().map(|q| q.average_precision).sum::<f64>() / count;
    let ndcg_at = cutoffs
        .iter()
        .enumerate()
        .map(|(i, &k)| (k, per_query.iter().map(|q| q.ndcg[i]).sum::<f64>() / count))
        .collect();
    let mean = per_query.iter().map(|q| q.mean_ndcg).sum::<f64>() / count;
    Ok(EvalReport { cutoffs, map, ndcg_at, mean_ndcg: mean, per_query })
}
