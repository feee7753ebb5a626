//! Paraphrase-robustness familiarity of an encoder with a domain.
//!
//! Text familiarity is the mean cosine similarity between the embedding of a
//! text and the embeddings of its paraphrases; domain familiarity averages it
//! over sampled texts. Embeddings are produced elsewhere; a single matrix
//! carries originals under `<id>` and paraphrases under `<id>#p<j>`.

use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::retrieval::{cosine_similarity, norm};
use crate::store::EmbeddingMatrix;

/// Default number of sampled texts per domain.
pub const DEFAULT_TEXTS: usize = 10;
/// Default number of paraphrases per text.
pub const DEFAULT_PARAPHRASES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ParaphraseSet {
    pub original_id: String,
    pub original: Vec<f64>,
    pub paraphrases: Vec<Vec<f64>>,
}

impl ParaphraseSet {
    pub fn new(
        original_id: impl Into<String>,
        original: Vec<f64>,
        paraphrases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let original_id = original_id.into();
        if paraphrases.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{original_id}: no paraphrases"
            )));
        }
        let dim = original.len();
        for v in std::iter::once(&original).chain(&paraphrases) {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) || norm(v) == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{original_id}: vectors must be finite with nonzero norm"
                )));
            }
        }
        Ok(Self {
            original_id,
            original,
            paraphrases,
        })
    }
}

/// Mean cosine similarity between a text and its paraphrases.
pub fn text_familiarity(set: &ParaphraseSet) -> Result<f64> {
    if set.paraphrases.is_empty() {
        return Err(Error::InvalidArgument("empty paraphrase list".into()));
    }
    let total: f64 = set
        .paraphrases
        .iter()
        .map(|p| cosine_similarity(&set.original, p))
        .sum();
    Ok(total / set.paraphrases.len() as f64)
}

/// Mean text familiarity over `sets`.
pub fn domain_familiarity(sets: &[ParaphraseSet]) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::InvalidArgument("no paraphrase sets".into()));
    }
    let mut total = 0.0;
    for set in sets {
        total += text_familiarity(set)?;
    }
    Ok(total / sets.len() as f64)
}

/// Groups rows by id: `<id>` is an original, `<id>#p<j>` its j-th paraphrase.
///
/// Sets come back sorted by original id, paraphrases by `j`.
pub fn paraphrase_sets(matrix: &EmbeddingMatrix) -> Result<Vec<ParaphraseSet>> {
    #[derive(Default)]
    struct Group {
        original: Option<Vec<f64>>,
        paraphrases: BTreeMap<u32, Vec<f64>>,
    }
    let mut groups: BTreeMap<String, Group> = BTreeMap::new();
    for (row, id) in matrix.ids().iter().enumerate() {
        let vector = matrix.row(row).to_vec();
        match id.rsplit_once("#p") {
            Some((base, j)) if !base.is_empty() && j.parse::<u32>().is_ok() => {
                let j = j.parse().unwrap();
                groups.entry(base.to_owned()).or_default().paraphrases.insert(j, vector);
            }
            _ => groups.entry(id.clone()).or_default().original = Some(vector),
        }
    }
    groups
        .into_iter()
        .map(|(id, g)| {
            let original = g.original.ok_or_else(|| {
                Error::InvalidArgument(format!("paraphrases of {id:?} have no original row"))
            })?;
            ParaphraseSet::new(id, original, g.paraphrases.into_values().collect())
        })
        .collect()
}

/// Pearson correlation with its two-sided t-test p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Correlates domain familiarity with retrieval gain over `(df, gain_pct)` points.
pub fn familiarity_vs_gain(points: &[(f64, f64)]) -> Result<Correlation> {
    let n = points.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs at least 3 points, got {n}"
        )));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidArgument("non-finite point".into()));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate(
            "zero variance in one coordinate; correlation undefined".into(),
        ));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = nf - 2.0;
    let p_value = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok(Correlation { r, p_value, n })
}
