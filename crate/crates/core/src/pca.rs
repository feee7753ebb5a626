//! PCA fitting and projection of embeddings into a reduced space.
//!
//! The fit uses the unbiased sample covariance `X̃ᵀX̃ / (k - 1)` of the
//! centered samples, accumulated in row blocks so large corpora never have
//! to be materialized as one dense `k x d` matrix, followed by a symmetric
//! eigendecomposition.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{self, EmbeddingMatrix};

/// Eigenvalues below this are treated as exactly zero.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

const ROW_BLOCK: usize = 1024;

/// Which embeddings a projection was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitSource {
    Queries,
    QueriesAndDocuments,
    Custom,
}

impl fmt::Display for FitSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitSource::Queries => "queries",
            FitSource::QueriesAndDocuments => "queries_and_documents",
            FitSource::Custom => "custom",
        })
    }
}

impl FromStr for FitSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "queries" => Ok(FitSource::Queries),
            "queries_and_documents" => Ok(FitSource::QueriesAndDocuments),
            "custom" => Ok(FitSource::Custom),
            other => Err(Error::InvalidArgument(format!("unknown fit source {other:?}"))),
        }
    }
}

/// A retention ratio together with the number of dimensions it resolves to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetentionSpec {
    pub ratio: f64,
    pub resolved_dim: usize,
}

fn check_ratio(ratio: f64) -> Result<()> {
    if ratio.is_finite() && ratio > 0.0 && ratio <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "retention ratio must lie in (0, 1], got {ratio}"
        )))
    }
}

/// `floor(ratio * d)`, tolerant of products like `0.29 * 100 = 28.999999999999996`.
pub fn kept_dims(ratio: f64, d: usize) -> usize {
    (ratio * d as f64 + 1e-9).floor() as usize
}

/// Resolves a retention ratio to a target dimension.
///
/// The result is `floor(ratio * d)` clamped to `[1, min(d, n_fit_samples - 1)]`:
/// centering `k` samples leaves at most `k - 1` directions with variance.
pub fn resolve_retention(ratio: f64, d: usize, n_fit_samples: usize) -> Result<RetentionSpec> {
    check_ratio(ratio)?;
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let cap = d.min(n_fit_samples.saturating_sub(1).max(1));
    let resolved_dim = kept_dims(ratio, d).clamp(1, cap);
    Ok(RetentionSpec {
        ratio,
        resolved_dim,
    })
}

/// A fitted linear projection `x' = (x - mean) W`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `n_components` rows of length `dim`; row `c` is column `c` of W.
    axes: Vec<f64>,
    eigenvalues: Vec<f64>,
    fitted_on: FitSource,
    n_fit_samples: usize,
    ratio: f64,
}

impl PcaModel {
    /// Assembles a model from parts. `axes` holds one principal axis per row.
    pub fn from_parts(
        mean: Vec<f64>,
        axes: Vec<f64>,
        eigenvalues: Vec<f64>,
        fitted_on: FitSource,
        n_fit_samples: usize,
        ratio: f64,
    ) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 || axes.is_empty() || !axes.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "{} axis values do not fit dimension {dim}",
                axes.len()
            )));
        }
        if axes.len() / dim != eigenvalues.len() {
            return Err(Error::InvalidArgument(format!(
                "{} axes but {} eigenvalues",
                axes.len() / dim,
                eigenvalues.len()
            )));
        }
        if mean.iter().chain(&axes).chain(&eigenvalues).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("model contains non-finite values".into()));
        }
        Ok(Self {
            mean,
            axes,
            eigenvalues,
            fitted_on,
            n_fit_samples,
            ratio,
        })
    }

    /// The identity model: zero mean, `W = I`.
    pub fn identity(dim: usize) -> Self {
        let mut axes = vec![0.0; dim * dim];
        for i in 0..dim {
            axes[i * dim + i] = 1.0;
        }
        Self {
            mean: vec![0.0; dim],
            axes,
            eigenvalues: vec![1.0; dim],
            fitted_on: FitSource::Custom,
            n_fit_samples: 0,
            ratio: 1.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// The `c`-th principal axis (column `c` of W).
    pub fn axis(&self, c: usize) -> &[f64] {
        let d = self.input_dim();
        &self.axes[c * d..(c + 1) * d]
    }

    pub fn axes(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.axes.chunks_exact(self.input_dim())
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn fitted_on(&self) -> FitSource {
        self.fitted_on
    }

    pub fn n_fit_samples(&self) -> usize {
        self.n_fit_samples
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// Projects a single vector.
    pub fn project_row(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_components());
        let mut centered = Vec::with_capacity(x.len());
        centered.extend(x.iter().zip(&self.mean).map(|(a, m)| a - m));
        for axis in self.axes() {
            out.push(centered.iter().zip(axis).map(|(a, w)| a * w).sum());
        }
        out
    }
}

/// Fits PCA on the rows of `samples`.
pub fn fit_pca(samples: &EmbeddingMatrix, retention: &RetentionSpec) -> Result<PcaModel> {
    fit_pca_stacked(&[samples], retention, FitSource::Custom)
}

/// Fits PCA on the row-concatenation of `parts` (no deduplication).
pub fn fit_pca_stacked(
    parts: &[&EmbeddingMatrix],
    retention: &RetentionSpec,
    fitted_on: FitSource,
) -> Result<PcaModel> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("no samples to fit".into()))?;
    let d = first.dim();
    for p in parts {
        if p.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.dim(),
            });
        }
    }
    let k: usize = parts.iter().map(|p| p.n_items()).sum();
    if k < 2 {
        return Err(Error::Degenerate(format!(
            "PCA needs at least 2 samples, got {k}"
        )));
    }
    check_ratio(retention.ratio)?;
    let cap = d.min(k - 1);
    if retention.resolved_dim == 0 || retention.resolved_dim > cap {
        return Err(Error::InvalidArgument(format!(
            "target dimension {} outside [1, {cap}] for {k} samples of dimension {d}",
            retention.resolved_dim
        )));
    }

    let mut mean = vec![0.0; d];
    for p in parts {
        for row in p.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
    }
    for m in &mut mean {
        *m /= k as f64;
    }

    let mut scatter = DMatrix::<f64>::zeros(d, d);
    for p in parts {
        for start in (0..p.n_items()).step_by(ROW_BLOCK) {
            let end = (start + ROW_BLOCK).min(p.n_items());
            let block = DMatrix::from_fn(end - start, d, |i, j| p.row(start + i)[j] - mean[j]);
            scatter += block.tr_mul(&block);
        }
    }
    let mut cov = scatter / (k - 1) as f64;
    // force exact symmetry before the eigensolver
    for i in 0..d {
        for j in 0..i {
            let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = avg;
            cov[(j, i)] = avg;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let target = retention.resolved_dim;
    let mut axes = Vec::with_capacity(target * d);
    let mut eigenvalues = Vec::with_capacity(target);
    for &idx in order.iter().take(target) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        apply_sign_convention(&mut axis);
        axes.extend_from_slice(&axis);
        let lambda = eig.eigenvalues[idx];
        eigenvalues.push(if lambda < EIGENVALUE_FLOOR { 0.0 } else { lambda });
    }

    Ok(PcaModel {
        mean,
        axes,
        eigenvalues,
        fitted_on,
        n_fit_samples: k,
        ratio: retention.ratio,
    })
}

/// Negates `axis` if its largest-magnitude entry (lowest index on ties) is negative.
pub fn apply_sign_convention(axis: &mut [f64]) {
    let mut pivot = 0;
    for (i, v) in axis.iter().enumerate() {
        if v.abs() > axis[pivot].abs() {
            pivot = i;
        }
    }
    if axis.get(pivot).is_some_and(|&v| v < 0.0) {
        for v in axis.iter_mut() {
            *v = -*v;
        }
    }
}

/// Projects every row of `matrix`; ids are kept.
pub fn project(model: &PcaModel, matrix: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if matrix.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            found: matrix.dim(),
        });
    }
    let rows: Vec<Vec<f64>> = (0..matrix.n_items())
        .into_par_iter()
        .map(|i| model.project_row(matrix.row(i)))
        .collect();
    EmbeddingMatrix::new(model.n_components(), rows.concat(), matrix.ids().to_vec())
}

/// Baseline that drops a random subset of coordinates instead of fitting.
///
/// Keeps `floor(ratio * d)` distinct coordinates drawn uniformly without
/// replacement, in ascending order, so `ratio = 1` yields exactly `W = I`.
pub fn random_projection_model(d: usize, ratio: f64, seed: u64) -> Result<PcaModel> {
    check_ratio(ratio)?;
    let keep = kept_dims(ratio, d).min(d);
    if keep == 0 {
        return Err(Error::InvalidArgument(format!(
            "ratio {ratio} keeps no coordinates of {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = rand::seq::index::sample(&mut rng, d, keep).into_vec();
    kept.sort_unstable();
    let mut axes = vec![0.0; keep * d];
    for (c, &coord) in kept.iter().enumerate() {
        axes[c * d + coord] = 1.0;
    }
    Ok(PcaModel {
        mean: vec![0.0; d],
        axes,
        eigenvalues: vec![1.0; keep],
        fitted_on: FitSource::Custom,
        n_fit_samples: 0,
        ratio,
    })
}

#[derive(Serialize, Deserialize)]
struct ModelManifest {
    fitted_on: FitSource,
    n_fit_samples: usize,
    ratio: f64,
    input_dim: usize,
    n_components: usize,
}

/// Files making up a persisted model with the given prefix.
pub struct ModelFiles {
    pub components: PathBuf,
    pub mean: PathBuf,
    pub eigenvalues: PathBuf,
    pub manifest: PathBuf,
}

impl ModelFiles {
    pub fn new(prefix: &Path) -> Self {
        let with = |suffix: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        Self {
            components: with(".components.emb"),
            mean: with(".mean.emb"),
            eigenvalues: with(".eigenvalues.tsv"),
            manifest: with(".json"),
        }
    }
}

/// Persists a model: components (transposed W) and mean as EMB1,
/// eigenvalues as TSV, provenance as a JSON manifest.
pub fn save_model(model: &PcaModel, prefix: impl AsRef<Path>) -> Result<()> {
    let files = ModelFiles::new(prefix.as_ref());
    let ids = (0..model.n_components()).map(|c| format!("pc_{c}")).collect();
    let components = EmbeddingMatrix::new(model.input_dim(), model.axes.clone(), ids)?;
    store::save_embeddings(&components, &files.components)?;
    let mean = EmbeddingMatrix::new(model.input_dim(), model.mean.clone(), vec!["mean".into()])?;
    store::save_embeddings(&mean, &files.mean)?;

    let eigen_text: String = model.eigenvalues.iter().map(|v| format!("{v:e}\n")).collect();
    std::fs::write(&files.eigenvalues, eigen_text).map_err(|e| Error::io(&files.eigenvalues, e))?;

    let manifest = ModelManifest {
        fitted_on: model.fitted_on,
        n_fit_samples: model.n_fit_samples,
        ratio: model.ratio,
        input_dim: model.input_dim(),
        n_components: model.n_components(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&files.manifest, json + "\n").map_err(|e| Error::io(&files.manifest, e))
}

pub fn load_model(prefix: impl AsRef<Path>) -> Result<PcaModel> {
    let files = ModelFiles::new(prefix.as_ref());
    let text = std::fs::read_to_string(&files.manifest).map_err(|e| Error::io(&files.manifest, e))?;
    let manifest: ModelManifest = serde_json::from_str(&text).map_err(|e| {
        Error::format(&files.manifest, crate::error::Location::Line(e.line()), e.to_string())
    })?;
    let components = store::load_embeddings(&files.components)?;
    let mean = store::load_embeddings(&files.mean)?;
    let eigen_text =
        std::fs::read_to_string(&files.eigenvalues).map_err(|e| Error::io(&files.eigenvalues, e))?;
    let mut eigenvalues = Vec::new();
    for (i, line) in eigen_text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: f64 = line.trim().parse().map_err(|_| {
            Error::format(&files.eigenvalues, crate::error::Location::Line(i + 1), "not a number")
        })?;
        eigenvalues.push(v);
    }
    if components.dim() != manifest.input_dim
        || mean.dim() != manifest.input_dim
        || mean.n_items() != 1
        || components.n_items() != manifest.n_components
    {
        return Err(Error::InvalidArgument(format!(
            "model files under {} disagree with the manifest",
            prefix.as_ref().display()
        )));
    }
    PcaModel::from_parts(
        mean.data().to_vec(),
        components.data().to_vec(),
        eigenvalues,
        manifest.fitted_on,
        manifest.n_fit_samples,
        manifest.ratio,
    )
}
