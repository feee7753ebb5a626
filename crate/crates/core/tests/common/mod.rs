//! Test-only oracles and synthetic data. Nothing here calls into the
//! implementation paths it is used to check.

#![allow(dead_code)]

use pca_adapt::{EmbeddingMatrix, Qrels, RankedList};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draw by Box-Muller.
pub fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_rows(rng: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| normal(rng)).collect()).collect()
}

pub fn matrix(rows: &[Vec<f64>], prefix: &str) -> EmbeddingMatrix {
    let ids = (0..rows.len()).map(|i| format!("{prefix}{i:04}")).collect();
    EmbeddingMatrix::from_rows(rows, Some(ids)).unwrap()
}

// ---------------------------------------------------------------------------
// linear algebra oracle

/// Unbiased sample covariance by direct double loop.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / k as f64)
        .collect();
    let mut c = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            let s: f64 = rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum();
            c[a][b] = s / (k as f64 - 1.0);
        }
    }
    c
}

/// Cyclic Jacobi eigensolver for a symmetric matrix.
///
/// Returns eigenpairs sorted by descending eigenvalue; vectors are unit length.
pub fn jacobi_eigen(matrix: &[Vec<f64>]) -> Vec<(f64, Vec<f64>)> {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|i| (a[i][i], v.iter().map(|row| row[i]).collect()))
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs
}

/// Distance between two unit vectors up to a global sign.
pub fn sign_free_distance(a: &[f64], b: &[f64]) -> f64 {
    let plus: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let minus: f64 = a.iter().zip(b).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max);
    plus.min(minus)
}

pub fn quad_form_trace(cov: &[Vec<f64>], basis: &[Vec<f64>]) -> f64 {
    basis
        .iter()
        .map(|v| {
            let cv: Vec<f64> = cov.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect();
            v.iter().zip(&cv).map(|(a, b)| a * b).sum::<f64>()
        })
        .sum()
}

/// Gram-Schmidt orthonormal basis of `count` random directions in `d` dims.
pub fn random_orthonormal(rng: &mut impl Rng, d: usize, count: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() < count {
        let mut v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

// ---------------------------------------------------------------------------
// retrieval oracle

/// Scores every document, sorts the whole list, then truncates.
pub fn brute_force_topk(
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    k: usize,
) -> Vec<RankedList> {
    (0..queries.n_items())
        .map(|qi| {
            let q = queries.row(qi);
            let qq: f64 = q.iter().map(|x| x * x).sum();
            let mut all: Vec<(String, f64)> = (0..docs.n_items())
                .map(|di| {
                    let d = docs.row(di);
                    let dd: f64 = d.iter().map(|x| x * x).sum();
                    let qd: f64 = q.iter().zip(d).map(|(a, b)| a * b).sum();
                    let s = if qq == 0.0 || dd == 0.0 { 0.0 } else { qd / (qq * dd).sqrt() };
                    (docs.id(di).to_owned(), s)
                })
                .collect();
            all.sort_by(|a, b| {
                b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0))
            });
            all.truncate(k);
            RankedList {
                query_id: queries.id(qi).to_owned(),
                entries: all,
            }
        })
        .collect()
}

/// Cosine over mean-centered vectors, with the mean taken from `fit_rows`.
pub fn centered(rows: &[Vec<f64>], fit_rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = fit_rows[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| fit_rows.iter().map(|r| r[j]).sum::<f64>() / fit_rows.len() as f64)
        .collect();
    rows.iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// metric oracle

/// DCG straight from the definition: sum of (2^rel - 1) / log2(1 + rank).
pub fn dcg(grades: &[u32], k: usize) -> f64 {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// All permutations of `items` (Heap's algorithm).
pub fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    fn heap<T: Clone>(k: usize, a: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        heap(k - 1, a, out);
        for i in 0..k - 1 {
            if k % 2 == 0 {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
            heap(k - 1, a, out);
        }
    }
    let mut a = items.to_vec();
    let mut out = Vec::new();
    heap(a.len(), &mut a, &mut out);
    out
}

/// Ideal DCG found by maximizing over every ordering of the judged documents.
pub fn ideal_dcg(judged: &[u32], k: usize) -> f64 {
    permutations(judged)
        .iter()
        .map(|p| dcg(p, k))
        .fold(0.0, f64::max)
}

pub fn ndcg_oracle(ranking: &[u32], judged: &[u32], k: usize) -> f64 {
    dcg(ranking, k) / ideal_dcg(judged, k)
}

// ---------------------------------------------------------------------------
// synthetic domain-shift testbed

pub const TESTBED_DIM: usize = 64;
pub const SIGNAL_DIMS: usize = 8;

/// Embeddings where only the first `SIGNAL_DIMS` coordinates carry topic
/// information and the rest are isotropic noise.
///
/// Each query has its own topic center in the signal subspace; its two
/// relevant documents share the center. Distractor documents come from
/// fresh topics. Per-coordinate noise variance (2.25) sits well below the
/// signal variance (about 9.25), so the signal spans the top principal
/// directions, while the 56 noise coordinates together carry more energy
/// than the signal and dominate raw cosine similarity. A constant offset on
/// every coordinate mimics the anisotropy of real encoders.
pub struct Testbed {
    pub queries: EmbeddingMatrix,
    pub docs: EmbeddingMatrix,
    pub qrels: Qrels,
}

pub struct TestbedParams {
    pub n_queries: usize,
    pub relevant_per_query: usize,
    pub distractors: usize,
    pub topic_scale: f64,
    pub jitter: f64,
    pub noise_scale: f64,
    pub offset: f64,
}

impl Default for TestbedParams {
    fn default() -> Self {
        Self {
            n_queries: 300,
            relevant_per_query: 2,
            distractors: 400,
            topic_scale: 3.0,
            jitter: 0.5,
            noise_scale: 1.5,
            offset: 1.0,
        }
    }
}

pub fn testbed(seed: u64) -> Testbed {
    testbed_with(seed, &TestbedParams::default())
}

pub fn testbed_with(seed: u64, p: &TestbedParams) -> Testbed {
    let mut rng = rng(seed);
    let embed = |center: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..TESTBED_DIM)
            .map(|j| {
                let v = if j < SIGNAL_DIMS {
                    center[j] + p.jitter * normal(rng)
                } else {
                    p.noise_scale * normal(rng)
                };
                v + p.offset
            })
            .collect()
    };
    let topic = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..SIGNAL_DIMS).map(|_| p.topic_scale * normal(rng)).collect()
    };

    let mut q_rows = Vec::new();
    let mut d_rows = Vec::new();
    let mut d_ids = Vec::new();
    let mut qrels = Qrels::new();
    for qi in 0..p.n_queries {
        let center = topic(&mut rng);
        q_rows.push(embed(&center, &mut rng));
        for r in 0..p.relevant_per_query {
            let id = format!("d{qi:04}_{r}");
            d_rows.push(embed(&center, &mut rng));
            qrels.insert(format!("q{qi:04}"), id.clone(), 1);
            d_ids.push(id);
        }
    }
    for x in 0..p.distractors {
        let center = topic(&mut rng);
        d_rows.push(embed(&center, &mut rng));
        d_ids.push(format!("x{x:04}"));
    }
    let q_ids = (0..p.n_queries).map(|i| format!("q{i:04}")).collect();
    Testbed {
        queries: EmbeddingMatrix::from_rows(&q_rows, Some(q_ids)).unwrap(),
        docs: EmbeddingMatrix::from_rows(&d_rows, Some(d_ids)).unwrap(),
        qrels,
    }
}

/// Writes the testbed as EMB1 + ids + qrels into `dir`.
pub fn write_testbed(tb: &Testbed, dir: &std::path::Path) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
    let q = dir.join("queries.emb");
    let d = dir.join("docs.emb");
    let r = dir.join("qrels.tsv");
    pca_adapt::store::save_embeddings(&tb.queries, &q).unwrap();
    pca_adapt::store::save_embeddings(&tb.docs, &d).unwrap();
    let mut text = String::new();
    for (query, docs) in tb.qrels.iter() {
        for (doc, grade) in docs {
            text.push_str(&format!("{query}\t{doc}\t{grade}\n"));
        }
    }
    std::fs::write(&r, text).unwrap();
    (q, d, r)
}
