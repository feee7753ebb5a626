//! Exact top-k cosine retrieval.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Location, Result};
use crate::pca::{self, PcaModel};
use crate::store::EmbeddingMatrix;

/// Ranking of documents for one query, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<(String, f64)>,
}

impl RankedList {
    pub fn doc_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.iter().map(|(d, _)| d.as_str())
    }
}

/// Rankings for a batch of queries plus a count of zero-norm inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalRun {
    pub lists: Vec<RankedList>,
    /// Query and document vectors with zero norm; every score involving
    /// one of them is defined as 0.
    pub zero_norm_vectors: usize,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; 0 when either vector has zero norm.
///
/// Computed as `a·b / sqrt(|a|² |b|²)`, which makes the similarity of a
/// vector with itself exactly 1.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    cosine_from_parts(dot(a, b), dot(a, a), dot(b, b))
}

#[inline]
fn cosine_from_parts(dot: f64, sq_norm_a: f64, sq_norm_b: f64) -> f64 {
    if sq_norm_a == 0.0 || sq_norm_b == 0.0 {
        return 0.0;
    }
    // adding 0.0 folds -0.0 into +0.0 so equal scores compare equal
    dot / (sq_norm_a * sq_norm_b).sqrt() + 0.0
}

/// Descending score, then ascending doc id.
pub fn rank_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// Exact top-`k` documents by cosine similarity for every query.
pub fn retrieve_topk(
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    k: usize,
) -> Result<RetrievalRun> {
    if queries.dim() != docs.dim() {
        return Err(Error::DimensionMismatch {
            expected: queries.dim(),
            found: docs.dim(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let doc_sq_norms: Vec<f64> = docs.rows().map(|d| dot(d, d)).collect();
    let keep = k.min(docs.n_items());

    let lists: Vec<RankedList> = (0..queries.n_items())
        .into_par_iter()
        .map(|qi| {
            let q = queries.row(qi);
            let q_sq_norm = dot(q, q);
            let mut scored: Vec<(String, f64)> = Vec::with_capacity(docs.n_items());
            for (di, d) in docs.rows().enumerate() {
                let score = cosine_from_parts(dot(q, d), q_sq_norm, doc_sq_norms[di]);
                scored.push((docs.id(di).to_owned(), score));
            }
            if keep < scored.len() {
                scored.select_nth_unstable_by(keep - 1, rank_order);
                scored.truncate(keep);
            }
            scored.sort_by(rank_order);
            RankedList {
                query_id: queries.id(qi).to_owned(),
                entries: scored,
            }
        })
        .collect();

    let zero_norm_vectors = doc_sq_norms.iter().filter(|&&n| n == 0.0).count()
        + queries.rows().filter(|q| dot(q, q) == 0.0).count();
    Ok(RetrievalRun {
        lists,
        zero_norm_vectors,
    })
}

/// Projects queries and documents with `model`, then retrieves.
pub fn retrieve_projected(
    model: &PcaModel,
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    k: usize,
) -> Result<RetrievalRun> {
    let q = pca::project(model, queries)?;
    let d = pca::project(model, docs)?;
    retrieve_topk(&q, &d, k)
}

/// Writes `query_id<TAB>doc_id<TAB>rank<TAB>score` lines, rank from 1.
pub fn write_run(lists: &[RankedList], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        for list in lists {
            for (rank, (doc, score)) in list.entries.iter().enumerate() {
                writeln!(out, "{}\t{}\t{}\t{}", list.query_id, doc, rank + 1, score)?;
            }
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

/// Reads a run file; entries are ordered by their rank column.
pub fn load_run(path: impl AsRef<Path>) -> Result<Vec<RankedList>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut order: Vec<String> = Vec::new();
    let mut by_query: HashMap<String, Vec<(usize, String, f64)>> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::format(
                path,
                Location::Line(lineno),
                format!("expected 4 tab-separated columns, found {}", fields.len()),
            ));
        }
        let rank: usize = fields[2]
            .parse()
            .map_err(|_| Error::format(path, Location::Line(lineno), "rank is not an integer"))?;
        let score: f64 = fields[3]
            .parse()
            .map_err(|_| Error::format(path, Location::Line(lineno), "score is not a number"))?;
        let entries = by_query.entry(fields[0].to_owned()).or_insert_with(|| {
            order.push(fields[0].to_owned());
            Vec::new()
        });
        entries.push((rank, fields[1].to_owned(), score));
    }
    Ok(order
        .into_iter()
        .map(|q| {
            let mut entries = by_query.remove(&q).unwrap_or_default();
            entries.sort_by_key(|(rank, _, _)| *rank);
            RankedList {
                query_id: q,
                entries: entries.into_iter().map(|(_, d, s)| (d, s)).collect(),
            }
        })
        .collect())
}
