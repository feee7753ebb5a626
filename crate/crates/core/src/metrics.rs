//! NDCG@k, Recall@k and Precision@k against graded relevance judgments.
//!
//! Gains are exponential (`2^rel - 1`) with a `1 / log2(rank + 1)` discount.
//! A document is relevant when its grade is positive.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::retrieval::RankedList;
use crate::store::Qrels;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QueryMetrics {
    pub ndcg: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_query: BTreeMap<String, QueryMetrics>,
    pub macro_avg: QueryMetrics,
    pub k: usize,
    pub n_evaluated: usize,
    /// Judged queries with no positive grade plus run queries without judgments.
    pub n_skipped: usize,
}

fn gain(relevance: u32) -> f64 {
    (relevance as f64).exp2() - 1.0
}

fn discount(rank: usize) -> f64 {
    // rank is 1-based
    1.0 / ((rank + 1) as f64).log2()
}

fn judged_with_positive<'a>(
    ranking: &RankedList,
    qrels: &'a Qrels,
) -> Option<&'a BTreeMap<String, u32>> {
    qrels
        .get(&ranking.query_id)
        .filter(|docs| docs.values().any(|&r| r > 0))
}

/// NDCG@k, or `None` when the query has no positive judgment.
pub fn ndcg_at_k(ranking: &RankedList, qrels: &Qrels, k: usize) -> Option<f64> {
    let judged = judged_with_positive(ranking, qrels)?;
    let dcg: f64 = ranking
        .doc_ids()
        .take(k)
        .enumerate()
        .map(|(i, doc)| gain(judged.get(doc).copied().unwrap_or(0)) * discount(i + 1))
        .sum();
    let mut ideal: Vec<u32> = judged.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &rel)| gain(rel) * discount(i + 1))
        .sum();
    Some(dcg / idcg)
}

fn hits_at_k(ranking: &RankedList, judged: &BTreeMap<String, u32>, k: usize) -> usize {
    ranking
        .doc_ids()
        .take(k)
        .filter(|doc| judged.get(*doc).is_some_and(|&r| r > 0))
        .count()
}

/// Fraction of the relevant documents found in the top `k`.
pub fn recall_at_k(ranking: &RankedList, qrels: &Qrels, k: usize) -> Option<f64> {
    let judged = judged_with_positive(ranking, qrels)?;
    let relevant = judged.values().filter(|&&r| r > 0).count();
    Some(hits_at_k(ranking, judged, k) as f64 / relevant as f64)
}

/// Relevant documents in the top `k`, divided by `k` even when fewer were returned.
pub fn precision_at_k(ranking: &RankedList, qrels: &Qrels, k: usize) -> Option<f64> {
    let judged = judged_with_positive(ranking, qrels)?;
    Some(hits_at_k(ranking, judged, k) as f64 / k as f64)
}

/// Scores every judged query with at least one positive grade.
///
/// Judged queries missing from the run score zero on every metric.
pub fn evaluate(run: &[RankedList], qrels: &Qrels, k: usize) -> Result<MetricsReport> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut by_query: HashMap<&str, &RankedList> = HashMap::with_capacity(run.len());
    for list in run {
        by_query.entry(list.query_id.as_str()).or_insert(list);
    }

    let mut per_query = BTreeMap::new();
    let mut n_skipped = 0;
    let mut matched = 0;
    for (query, judged) in qrels.iter() {
        if !judged.values().any(|&r| r > 0) {
            n_skipped += 1;
            continue;
        }
        let metrics = match by_query.get(query) {
            Some(list) => {
                matched += 1;
                QueryMetrics {
                    ndcg: ndcg_at_k(list, qrels, k).unwrap_or(0.0),
                    recall: recall_at_k(list, qrels, k).unwrap_or(0.0),
                    precision: precision_at_k(list, qrels, k).unwrap_or(0.0),
                }
            }
            None => QueryMetrics::default(),
        };
        per_query.insert(query.to_owned(), metrics);
    }
    if matched == 0 {
        return Err(Error::NoEvaluableQueries);
    }
    n_skipped += by_query.keys().filter(|q| !qrels.contains_query(q)).count();

    let n = per_query.len() as f64;
    let mut macro_avg = QueryMetrics::default();
    for m in per_query.values() {
        macro_avg.ndcg += m.ndcg;
        macro_avg.recall += m.recall;
        macro_avg.precision += m.precision;
    }
    macro_avg.ndcg /= n;
    macro_avg.recall /= n;
    macro_avg.precision /= n;

    Ok(MetricsReport {
        n_evaluated: per_query.len(),
        per_query,
        macro_avg,
        k,
        n_skipped,
    })
}

pub const MACRO_ROW: &str = "__macro__";

impl MetricsReport {
    /// `query_id<TAB>ndcg<TAB>recall<TAB>precision` rows plus a `__macro__` row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let rows = self
            .per_query
            .iter()
            .map(|(q, m)| (q.as_str(), m))
            .chain(std::iter::once((MACRO_ROW, &self.macro_avg)));
        for (q, m) in rows {
            let _ = writeln!(out, "{q}\t{}\t{}\t{}", m.ndcg, m.recall, m.precision);
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    /// Human-readable summary block.
    pub fn summary(&self) -> String {
        let k = self.k;
        format!(
            "queries evaluated: {}\nqueries skipped:   {}\nNDCG@{k}:      {:.4}\nRecall@{k}:    {:.4}\nPrecision@{k}: {:.4}\n",
            self.n_evaluated,
            self.n_skipped,
            self.macro_avg.ndcg,
            self.macro_avg.recall,
            self.macro_avg.precision,
        )
    }
}
