//! Experimental protocol: compression variants against the uncompressed
//! baseline, retention sweeps, k-fold cross-validation, success rates and
//! similarity-distribution analysis.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Location, Result};
use crate::metrics::{self, MetricsReport};
use crate::pca::{self, FitSource, PcaModel};
use crate::retrieval::{self, cosine_similarity, RankedList, RetrievalRun};
use crate::store::{EmbeddingMatrix, Qrels};
use crate::{DEFAULT_K, DEFAULT_RATIO, DEFAULT_SEED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// Raw embeddings, no projection.
    Baseline,
    /// PCA fitted on query embeddings only.
    QueryCompression,
    /// PCA fitted on queries and documents stacked together.
    QueryDocCompression,
    /// A random subset of coordinates is kept.
    RandomCompression,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Baseline,
        Variant::QueryCompression,
        Variant::QueryDocCompression,
        Variant::RandomCompression,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::QueryCompression => "query_compression",
            Variant::QueryDocCompression => "query_doc_compression",
            Variant::RandomCompression => "random_compression",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub retention_ratio: f64,
    pub k: usize,
    pub seed: u64,
    /// 0 disables cross-validation.
    pub cv_folds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: Variant::QueryCompression,
            retention_ratio: DEFAULT_RATIO,
            k: DEFAULT_K,
            seed: DEFAULT_SEED,
            cv_folds: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn with_ratio(mut self, ratio: f64) -> Self {
        self.retention_ratio = ratio;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.retention_ratio > 0.0 && self.retention_ratio <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "retention ratio must lie in (0, 1], got {}",
                self.retention_ratio
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if self.cv_folds == 1 {
            return Err(Error::InvalidArgument("cv folds must be 0 or at least 2".into()));
        }
        Ok(())
    }
}

/// Fits the projection a variant uses; `None` for the baseline.
pub fn fit_variant_model(
    config: &ExperimentConfig,
    fit_queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
) -> Result<Option<PcaModel>> {
    config.validate()?;
    let d = fit_queries.dim();
    let model = match config.variant {
        Variant::Baseline => return Ok(None),
        Variant::QueryCompression => {
            let spec = pca::resolve_retention(config.retention_ratio, d, fit_queries.n_items())?;
            pca::fit_pca_stacked(&[fit_queries], &spec, FitSource::Queries)?
        }
        Variant::QueryDocCompression => {
            let n = fit_queries.n_items() + docs.n_items();
            let spec = pca::resolve_retention(config.retention_ratio, d, n)?;
            pca::fit_pca_stacked(&[fit_queries, docs], &spec, FitSource::QueriesAndDocuments)?
        }
        Variant::RandomCompression => {
            pca::random_projection_model(d, config.retention_ratio, config.seed)?
        }
    };
    Ok(Some(model))
}

fn retrieve_with(
    model: Option<&PcaModel>,
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    k: usize,
) -> Result<RetrievalRun> {
    match model {
        Some(m) => retrieval::retrieve_projected(m, queries, docs, k),
        None => retrieval::retrieve_topk(queries, docs, k),
    }
}

/// Everything one variant produced.
#[derive(Debug, Clone)]
pub struct VariantOutcome {
    pub config: ExperimentConfig,
    pub model: Option<PcaModel>,
    pub run: RetrievalRun,
    pub report: MetricsReport,
}

/// Fits (if needed), retrieves and evaluates one variant.
pub fn execute_variant(
    config: &ExperimentConfig,
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    qrels: &Qrels,
) -> Result<VariantOutcome> {
    if queries.dim() != docs.dim() {
        return Err(Error::DimensionMismatch {
            expected: queries.dim(),
            found: docs.dim(),
        });
    }
    let model = fit_variant_model(config, queries, docs)?;
    let run = retrieve_with(model.as_ref(), queries, docs, config.k)?;
    let report = metrics::evaluate(&run.lists, qrels, config.k)?;
    Ok(VariantOutcome {
        config: *config,
        model,
        run,
        report,
    })
}

pub fn run_variant(
    config: &ExperimentConfig,
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    qrels: &Qrels,
) -> Result<MetricsReport> {
    execute_variant(config, queries, docs, qrels).map(|o| o.report)
}

/// Runs independent configurations, possibly in parallel; output follows input order.
pub fn execute_all(
    configs: &[ExperimentConfig],
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    qrels: &Qrels,
) -> Result<Vec<VariantOutcome>> {
    configs
        .par_iter()
        .map(|c| execute_variant(c, queries, docs, qrels))
        .collect()
}

/// Dataset and encoder names attached to comparison rows.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunLabels {
    pub dataset: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub dataset: String,
    pub model: String,
    pub variant: Variant,
    pub retention_ratio: f64,
    pub metric_baseline: f64,
    pub metric_variant: f64,
    /// `None` when the baseline metric is zero.
    pub improvement_pct: Option<f64>,
}

/// Relative change in percent, undefined for a zero baseline.
pub fn improvement_pct(baseline: f64, variant: f64) -> Option<f64> {
    (baseline > 0.0).then(|| 100.0 * (variant - baseline) / baseline)
}

/// Builds one row per non-baseline outcome from macro NDCG@k.
pub fn comparison_rows(labels: &RunLabels, outcomes: &[VariantOutcome]) -> Result<Vec<ComparisonRow>> {
    let baseline = outcomes
        .iter()
        .find(|o| o.config.variant == Variant::Baseline)
        .ok_or_else(|| Error::InvalidArgument("comparison needs a baseline run".into()))?;
    let base = baseline.report.macro_avg.ndcg;
    Ok(outcomes
        .iter()
        .filter(|o| o.config.variant != Variant::Baseline)
        .map(|o| ComparisonRow {
            dataset: labels.dataset.clone(),
            model: labels.model.clone(),
            variant: o.config.variant,
            retention_ratio: o.config.retention_ratio,
            metric_baseline: base,
            metric_variant: o.report.macro_avg.ndcg,
            improvement_pct: improvement_pct(base, o.report.macro_avg.ndcg),
        })
        .collect())
}

/// Compares every configuration against the baseline, which must be among them.
pub fn compare(
    configs: &[ExperimentConfig],
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    qrels: &Qrels,
    labels: &RunLabels,
) -> Result<Vec<ComparisonRow>> {
    if !configs.iter().any(|c| c.variant == Variant::Baseline) {
        return Err(Error::InvalidArgument("comparison needs a baseline run".into()));
    }
    let outcomes = execute_all(configs, queries, docs, qrels)?;
    comparison_rows(labels, &outcomes)
}

pub fn comparison_tsv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("dataset\tmodel\tvariant\tratio\tbaseline_ndcg\tvariant_ndcg\timprovement_pct\n");
    for r in rows {
        let pct = r.improvement_pct.map_or_else(|| "NA".to_owned(), |p| p.to_string());
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{pct}",
            r.dataset, r.model, r.variant, r.retention_ratio, r.metric_baseline, r.metric_variant
        );
    }
    out
}

/// Console table; NDCG in points and improvements rounded to one decimal.
pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut out = format!(
        "{:<24} {:>6} {:>10} {:>10} {:>9}\n",
        "variant", "ratio", "baseline", "variant", "gain %"
    );
    for r in rows {
        let pct = r
            .improvement_pct
            .map_or_else(|| "n/a".to_owned(), |p| format!("{p:+.1}"));
        let _ = writeln!(
            out,
            "{:<24} {:>6.2} {:>10.2} {:>10.2} {:>9}",
            r.variant.as_str(),
            r.retention_ratio,
            100.0 * r.metric_baseline,
            100.0 * r.metric_variant,
            pct
        );
    }
    out
}

/// `0.05` followed by `0.1, 0.2, ..., 1.0`.
pub fn default_ratio_grid() -> Vec<f64> {
    std::iter::once(0.05)
        .chain((1..=10).map(|i| i as f64 / 10.0))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub ratio: f64,
    /// Dimensions kept, or `None` for the baseline.
    pub dims: Option<usize>,
    pub report: MetricsReport,
}

/// Evaluates `base.variant` at every ratio in `ratios`.
pub fn retention_sweep(
    ratios: &[f64],
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    qrels: &Qrels,
    base: &ExperimentConfig,
) -> Result<Vec<SweepPoint>> {
    let configs: Vec<ExperimentConfig> = ratios.iter().map(|&r| base.with_ratio(r)).collect();
    for c in &configs {
        c.validate()?;
    }
    let outcomes = execute_all(&configs, queries, docs, qrels)?;
    Ok(outcomes
        .into_iter()
        .map(|o| SweepPoint {
            ratio: o.config.retention_ratio,
            dims: o.model.as_ref().map(PcaModel::n_components),
            report: o.report,
        })
        .collect())
}

pub fn sweep_tsv(points: &[SweepPoint]) -> String {
    let mut out = String::from("ratio\tdims\tndcg\trecall\tprecision\n");
    for p in points {
        let dims = p.dims.map_or_else(|| "NA".to_owned(), |d| d.to_string());
        let m = &p.report.macro_avg;
        let _ = writeln!(out, "{}\t{dims}\t{}\t{}\t{}", p.ratio, m.ndcg, m.recall, m.precision);
    }
    out
}

/// Result of a cross-validated run.
#[derive(Debug, Clone)]
pub struct CrossValidation {
    /// Query ids held out in each fold.
    pub folds: Vec<Vec<String>>,
    /// Held-out rankings, fold by fold.
    pub lists: Vec<RankedList>,
    pub report: MetricsReport,
}

/// Seeded shuffle of `0..n` split into `folds` contiguous parts whose sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / folds, n % folds);
    let mut parts = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        parts.push(order[start..start + len].to_vec());
        start += len;
    }
    parts
}

/// Fits on all but one fold of queries and evaluates on the held-out fold.
///
/// Per-query metrics are pooled over folds and macro-averaged once.
/// Documents are never split; the query+document variant always fits on the
/// full document set plus the training queries.
pub fn cross_validate_detailed(
    folds: usize,
    seed: u64,
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    qrels: &Qrels,
    config: &ExperimentConfig,
) -> Result<CrossValidation> {
    if folds < 2 {
        return Err(Error::InvalidArgument("cross-validation needs at least 2 folds".into()));
    }
    if queries.n_items() < folds {
        return Err(Error::InvalidArgument(format!(
            "{} queries cannot fill {folds} folds",
            queries.n_items()
        )));
    }
    let parts = fold_assignment(queries.n_items(), folds, seed);
    let mut lists = Vec::with_capacity(queries.n_items());
    let mut fold_ids = Vec::with_capacity(folds);
    for (f, held) in parts.iter().enumerate() {
        let train: Vec<usize> = parts
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, p)| p.iter().copied())
            .collect();
        if config.variant == Variant::QueryCompression && train.len() < 2 {
            return Err(Error::Degenerate(format!(
                "fold {f} leaves {} training queries; PCA needs at least 2",
                train.len()
            )));
        }
        let train_q = queries.select(&train)?;
        let held_q = queries.select(held)?;
        let model = fit_variant_model(config, &train_q, docs)?;
        let run = retrieve_with(model.as_ref(), &held_q, docs, config.k)?;
        fold_ids.push(held_q.ids().to_vec());
        lists.extend(run.lists);
    }
    let report = metrics::evaluate(&lists, qrels, config.k)?;
    Ok(CrossValidation {
        folds: fold_ids,
        lists,
        report,
    })
}

pub fn cross_validate(
    folds: usize,
    seed: u64,
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    qrels: &Qrels,
    config: &ExperimentConfig,
) -> Result<MetricsReport> {
    cross_validate_detailed(folds, seed, queries, docs, qrels, config).map(|cv| cv.report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Dataset,
    Model,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuccessCount {
    pub group: String,
    pub wins: usize,
    pub total: usize,
}

fn group_key(row: &ComparisonRow, by: GroupBy) -> &str {
    match by {
        GroupBy::Dataset => &row.dataset,
        GroupBy::Model => &row.model,
    }
}

/// Wins (positive improvement) out of all rows belonging to `group`.
pub fn success_for(rows: &[ComparisonRow], by: GroupBy, group: &str) -> SuccessCount {
    let members: Vec<&ComparisonRow> = rows.iter().filter(|r| group_key(r, by) == group).collect();
    SuccessCount {
        group: group.to_owned(),
        wins: members
            .iter()
            .filter(|r| r.improvement_pct.is_some_and(|p| p > 0.0))
            .count(),
        total: members.len(),
    }
}

/// Success counts for every group present, sorted by group name.
pub fn success_summary(rows: &[ComparisonRow], by: GroupBy) -> Vec<SuccessCount> {
    let groups: BTreeMap<&str, ()> = rows.iter().map(|r| (group_key(r, by), ())).collect();
    groups.into_keys().map(|g| success_for(rows, by, g)).collect()
}

/// Mean and population standard deviation of a set of scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl ScoreStats {
    fn of(scores: &[f64]) -> Option<Self> {
        if scores.is_empty() {
            return None;
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            count: scores.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityDistributions {
    pub relevant: ScoreStats,
    /// Hard negatives; `None` when the baseline top-k holds no unjudged or
    /// zero-graded document.
    pub nonrelevant: Option<ScoreStats>,
}

impl SimilarityDistributions {
    pub fn mean_gap(&self) -> Option<f64> {
        self.nonrelevant.map(|n| self.relevant.mean - n.mean)
    }
}

/// Cosine-score distributions of relevant pairs and hard negatives.
///
/// Relevant pairs are all judged pairs with a positive grade. Hard
/// negatives are documents in the raw-space top-`DEFAULT_K` of a judged
/// query whose grade is 0 or missing. Scores are computed in the projected
/// space when a model is given, in the raw space otherwise.
pub fn similarity_distributions(
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    qrels: &Qrels,
    model: Option<&PcaModel>,
) -> Result<SimilarityDistributions> {
    if qrels.is_empty() {
        return Err(Error::InvalidArgument("qrels are empty".into()));
    }
    let baseline = retrieval::retrieve_topk(queries, docs, DEFAULT_K)?;
    let (q_space, d_space) = match model {
        Some(m) => (pca::project(m, queries)?, pca::project(m, docs)?),
        None => (queries.clone(), docs.clone()),
    };
    let doc_index: HashMap<&str, usize> = docs
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut relevant = Vec::new();
    let mut negatives = Vec::new();
    for (qi, list) in baseline.lists.iter().enumerate() {
        let Some(judged) = qrels.get(&list.query_id) else {
            continue;
        };
        let q = q_space.row(qi);
        for (doc, &grade) in judged {
            if grade > 0 {
                if let Some(&di) = doc_index.get(doc.as_str()) {
                    relevant.push(cosine_similarity(q, d_space.row(di)));
                }
            }
        }
        for doc in list.doc_ids() {
            if judged.get(doc).copied().unwrap_or(0) == 0 {
                negatives.push(cosine_similarity(q, d_space.row(doc_index[doc])));
            }
        }
    }
    let relevant = ScoreStats::of(&relevant)
        .ok_or_else(|| Error::Degenerate("no relevant query-document pairs".into()))?;
    Ok(SimilarityDistributions {
        relevant,
        nonrelevant: ScoreStats::of(&negatives),
    })
}

/// Settings read from a `key = value` experiment manifest.
///
/// Recognized keys: `queries`, `docs`, `qrels` (paths, relative to the
/// manifest), `variants` and `ratios` (comma-separated), `ratio`, `k`,
/// `seed`, `folds`, `dataset`, `model`, `out`. `#` starts a comment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentManifest {
    pub queries: Option<PathBuf>,
    pub docs: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub variants: Option<Vec<Variant>>,
    pub ratios: Option<Vec<f64>>,
    pub ratio: Option<f64>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub dataset: Option<String>,
    pub model: Option<String>,
    pub out: Option<PathBuf>,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<ExperimentManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut m = ExperimentManifest {
        queries: None,
        docs: None,
        qrels: None,
        variants: None,
        ratios: None,
        ratio: None,
        k: None,
        seed: None,
        folds: None,
        dataset: None,
        model: None,
        out: None,
    };
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::format(path, Location::Line(idx + 1), msg);
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad("expected key = value".into()))?;
        let (key, value) = (key.trim(), value.trim());
        let num = |what: &str| bad(format!("{key}: invalid {what} {value:?}"));
        match key {
            "queries" => m.queries = Some(base.join(value)),
            "docs" => m.docs = Some(base.join(value)),
            "qrels" => m.qrels = Some(base.join(value)),
            "out" => m.out = Some(base.join(value)),
            "dataset" => m.dataset = Some(value.to_owned()),
            "model" => m.model = Some(value.to_owned()),
            "variants" => {
                m.variants = Some(
                    value
                        .split(',')
                        .map(|v| v.trim().parse::<Variant>())
                        .collect::<Result<_>>()
                        .map_err(|e| bad(e.to_string()))?,
                )
            }
            "ratios" => m.ratios = Some(parse_ratio_list(value).map_err(|e| bad(e.to_string()))?),
            "ratio" => m.ratio = Some(value.parse().map_err(|_| num("number"))?),
            "k" => m.k = Some(value.parse().map_err(|_| num("count"))?),
            "seed" => m.seed = Some(value.parse().map_err(|_| num("seed"))?),
            "folds" => m.folds = Some(value.parse().map_err(|_| num("count"))?),
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    Ok(m)
}

/// Parses a comma-separated ratio list such as `0.05,0.1,0.2`.
///
/// `...` fills in values up to the one that follows it. The step is the
/// gap between the two preceding values when that gap is a whole multiple
/// of the last written decimal place of the value just before `...`, and
/// that decimal place otherwise: `0.1,0.2,...,0.5` steps by 0.1,
/// `0.1,0.15,...,0.3` by 0.05, and `0.05,0.1,...,1.0` by 0.1.
pub fn parse_ratio_list(text: &str) -> Result<Vec<f64>> {
    let items: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let parse = |s: &str| -> Result<f64> {
        let v: f64 = s
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("invalid ratio {s:?}")))?;
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::InvalidArgument(format!("ratio {v} outside (0, 1]")));
        }
        Ok(v)
    };
    let mut out: Vec<f64> = Vec::new();
    for (i, item) in items.iter().enumerate() {
        if *item != "..." {
            out.push(parse(item)?);
            continue;
        }
        let (Some(prev_text), Some(next_text)) = (i.checked_sub(1).map(|j| items[j]), items.get(i + 1))
        else {
            return Err(Error::InvalidArgument("'...' needs a value on each side".into()));
        };
        let prev = parse(prev_text)?;
        let end = parse(next_text)?;
        let decimals = prev_text.split_once('.').map_or(0, |(_, frac)| frac.len());
        let unit = 10f64.powi(-(decimals as i32));
        let step = match i.checked_sub(2).map(|j| parse(items[j])).transpose()? {
            Some(prev2) if prev > prev2 => {
                let gap = prev - prev2;
                let units = gap / unit;
                if (units - units.round()).abs() < 1e-6 { gap } else { unit }
            }
            _ => unit,
        };
        let mut j = 1;
        loop {
            // rounded to 9 decimals so 0.1 * 3 prints as 0.3
            let v = ((prev + step * j as f64) * 1e9).round() / 1e9;
            if v >= end - 1e-9 {
                break;
            }
            out.push(v);
            j += 1;
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("empty ratio list".into()));
    }
    Ok(out)
}
