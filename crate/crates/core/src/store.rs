//! On-disk formats for embedding matrices and relevance judgments.
//!
//! Binary `EMB1` layout (all integers little-endian):
//!
//! | bytes  | content                         |
//! |--------|---------------------------------|
//! | 0..4   | magic `b"EMB1"`                 |
//! | 4      | version, always `1`             |
//! | 5..9   | `n_items` as `u32`              |
//! | 9..13  | `dim` as `u32`                  |
//! | 13..   | `n_items * dim` `f32`, row-major |
//!
//! Row ids live in a sibling file with the extension replaced by `.ids`
//! (one UTF-8 id per line). The text fallback is one row per line with
//! tab-separated decimal floats.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Location, Result};

pub const EMB1_MAGIC: &[u8; 4] = b"EMB1";
pub const EMB1_VERSION: u8 = 1;
pub const EMB1_HEADER_LEN: usize = 13;

/// A dense `n_items x dim` matrix of embeddings with one id per row.
///
/// Values are held as `f64`; files store them as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n_items: usize,
    dim: usize,
    data: Vec<f64>,
    ids: Vec<String>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from row-major data, validating every invariant.
    pub fn new(dim: usize, data: Vec<f64>, ids: Vec<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMatrix("dim must be at least 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidMatrix(format!(
                "{} values do not fill rows of width {dim}",
                data.len()
            )));
        }
        let n_items = data.len() / dim;
        if n_items == 0 {
            return Err(Error::InvalidMatrix("empty matrix".into()));
        }
        if ids.len() != n_items {
            return Err(Error::InvalidMatrix(format!(
                "{} ids for {n_items} rows",
                ids.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        if let Some((row, msg)) = check_ids(&ids) {
            return Err(Error::InvalidMatrix(format!("id of row {row}: {msg}")));
        }
        Ok(Self {
            n_items,
            dim,
            data,
            ids,
        })
    }

    /// Builds a matrix from rows; ids default to `row_0`, `row_1`, ...
    pub fn from_rows(rows: &[Vec<f64>], ids: Option<Vec<String>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::InvalidMatrix(format!(
                "row {bad} has {} values, expected {dim}",
                rows[bad].len()
            )));
        }
        let ids = ids.unwrap_or_else(|| default_ids(rows.len()));
        Self::new(dim, rows.concat(), ids)
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Position of the row with the given id.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Copies the given rows, in order, into a new matrix.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            data.extend_from_slice(self.row(r));
            ids.push(self.ids[r].clone());
        }
        Self::new(self.dim, data, ids)
    }
}

pub(crate) fn default_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("row_{i}")).collect()
}

/// Returns the first offending row and a description, if any.
fn check_ids(ids: &[String]) -> Option<(usize, &'static str)> {
    let mut seen = HashSet::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if id.is_empty() {
            return Some((i, "empty id"));
        }
        if id.contains(['\t', '\n', '\r']) {
            return Some((i, "id contains a tab or line break"));
        }
        if !seen.insert(id.as_str()) {
            return Some((i, "duplicate id"));
        }
    }
    None
}

/// Path of the id sidecar for an embedding file: `q.emb` -> `q.ids`.
pub fn ids_path(path: &Path) -> PathBuf {
    path.with_extension("ids")
}

/// Loads an EMB1 or TSV embedding file, detected by the magic bytes.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (dim, data) = if bytes.starts_with(EMB1_MAGIC) {
        parse_emb1(path, &bytes)?
    } else {
        parse_tsv(path, &bytes)?
    };
    let n_items = data.len() / dim;
    let ids = match load_ids(path)? {
        Some((ids_file, ids)) => {
            if ids.len() != n_items {
                return Err(Error::format(
                    ids_file,
                    Location::Line(ids.len().min(n_items) + 1),
                    format!("{} ids for {n_items} rows", ids.len()),
                ));
            }
            if let Some((row, msg)) = check_ids(&ids) {
                return Err(Error::format(ids_file, Location::Line(row + 1), msg));
            }
            ids
        }
        None => default_ids(n_items),
    };
    EmbeddingMatrix::new(dim, data, ids)
}

/// Formats the file is able to hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Emb1,
    Tsv,
}

impl FileFormat {
    /// `.tsv` and `.txt` are text; everything else is EMB1.
    pub fn from_extension(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") => FileFormat::Tsv,
            _ => FileFormat::Emb1,
        }
    }

    /// Sniffs the magic bytes of an existing file.
    pub fn detect(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(if bytes.starts_with(EMB1_MAGIC) {
            FileFormat::Emb1
        } else {
            FileFormat::Tsv
        })
    }
}

fn parse_emb1(path: &Path, bytes: &[u8]) -> Result<(usize, Vec<f64>)> {
    if bytes.len() < EMB1_HEADER_LEN {
        return Err(Error::format(
            path,
            Location::Byte(bytes.len() as u64),
            "truncated header",
        ));
    }
    if bytes[4] != EMB1_VERSION {
        return Err(Error::format(
            path,
            Location::Byte(4),
            format!("unsupported version {}", bytes[4]),
        ));
    }
    let n_items = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    if n_items == 0 {
        return Err(Error::format(path, Location::Byte(5), "empty matrix"));
    }
    if dim == 0 {
        return Err(Error::format(path, Location::Byte(9), "dim must be at least 1"));
    }
    let payload = &bytes[EMB1_HEADER_LEN..];
    let expected = (n_items as u64) * (dim as u64) * 4;
    if payload.len() as u64 != expected {
        return Err(Error::format(
            path,
            Location::Byte(EMB1_HEADER_LEN as u64),
            format!(
                "payload length mismatch: header declares {n_items}x{dim} ({expected} bytes), found {} bytes",
                payload.len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(n_items * dim);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(
                path,
                Location::Byte((EMB1_HEADER_LEN + 4 * i) as u64),
                format!("non-finite value {v}"),
            ));
        }
        data.push(f64::from(v));
    }
    Ok((dim, data))
}

fn parse_tsv(path: &Path, bytes: &[u8]) -> Result<(usize, Vec<f64>)> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::format(path, Location::Byte(e.valid_up_to() as u64), "invalid UTF-8"))?;
    let mut dim = 0;
    let mut data = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut width = 0;
        for field in line.split('\t') {
            let v: f32 = field.trim().parse().map_err(|_| {
                Error::format(path, Location::Line(lineno), format!("not a number: {field:?}"))
            })?;
            if !v.is_finite() {
                return Err(Error::format(
                    path,
                    Location::Line(lineno),
                    format!("non-finite value {field:?}"),
                ));
            }
            data.push(f64::from(v));
            width += 1;
        }
        if dim == 0 {
            dim = width;
        } else if width != dim {
            return Err(Error::format(
                path,
                Location::Line(lineno),
                format!("row has {width} columns, expected {dim}"),
            ));
        }
    }
    if data.is_empty() {
        return Err(Error::format(path, Location::Line(1), "empty matrix"));
    }
    Ok((dim, data))
}

fn load_ids(path: &Path) -> Result<Option<(PathBuf, Vec<String>)>> {
    let mut candidates = vec![ids_path(path)];
    let mut appended = path.as_os_str().to_owned();
    appended.push(".ids");
    candidates.push(PathBuf::from(appended));
    for candidate in candidates {
        if candidate == path || !candidate.is_file() {
            continue;
        }
        let text = fs::read_to_string(&candidate).map_err(|e| Error::io(&candidate, e))?;
        let ids = text
            .lines()
            .map(|l| l.trim_end_matches('\r').to_string())
            .collect();
        return Ok(Some((candidate, ids)));
    }
    Ok(None)
}

/// Writes `matrix` as EMB1 plus its `.ids` sidecar.
///
/// Values are narrowed to `f32`; a matrix loaded from disk round-trips
/// bit-exactly.
pub fn save_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(EMB1_HEADER_LEN + 4 * matrix.data.len());
    bytes.extend_from_slice(EMB1_MAGIC);
    bytes.push(EMB1_VERSION);
    bytes.extend_from_slice(&header_u32(matrix.n_items, "n_items")?.to_le_bytes());
    bytes.extend_from_slice(&header_u32(matrix.dim, "dim")?.to_le_bytes());
    for &v in &matrix.data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    write_ids(matrix, path)
}

/// Writes `matrix` as tab-separated text plus its `.ids` sidecar.
pub fn save_tsv(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        for row in matrix.rows() {
            for (j, &v) in row.iter().enumerate() {
                if j > 0 {
                    out.write_all(b"\t")?;
                }
                // f32 Display is the shortest string that parses back exactly
                write!(out, "{}", v as f32)?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))?;
    write_ids(matrix, path)
}

/// Saves in the format implied by the extension of `path`.
pub fn save_auto(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match FileFormat::from_extension(path) {
        FileFormat::Emb1 => save_embeddings(matrix, path),
        FileFormat::Tsv => save_tsv(matrix, path),
    }
}

fn header_u32(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value)
        .map_err(|_| Error::InvalidMatrix(format!("{what} = {value} does not fit the EMB1 header")))
}

fn write_ids(matrix: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let ids_file = ids_path(path);
    let mut text = String::with_capacity(matrix.ids.iter().map(|s| s.len() + 1).sum());
    for id in &matrix.ids {
        text.push_str(id);
        text.push('\n');
    }
    fs::write(&ids_file, text).map_err(|e| Error::io(ids_file, e))
}

/// Relevance judgments: query id -> doc id -> graded relevance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    entries: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a judgment; a repeated pair keeps the larger grade.
    pub fn insert(&mut self, query: impl Into<String>, doc: impl Into<String>, relevance: u32) {
        let grade = self
            .entries
            .entry(query.into())
            .or_default()
            .entry(doc.into())
            .or_insert(relevance);
        *grade = (*grade).max(relevance);
    }

    pub fn get(&self, query: &str) -> Option<&BTreeMap<String, u32>> {
        self.entries.get(query)
    }

    pub fn relevance(&self, query: &str, doc: &str) -> u32 {
        self.entries
            .get(query)
            .and_then(|docs| docs.get(doc))
            .copied()
            .unwrap_or(0)
    }

    /// Query ids in sorted order.
    pub fn queries(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains_query(&self, query: &str) -> bool {
        self.entries.contains_key(query)
    }

    /// Number of docs with relevance > 0 for `query`.
    pub fn n_relevant(&self, query: &str) -> usize {
        self.entries
            .get(query)
            .map_or(0, |docs| docs.values().filter(|&&r| r > 0).count())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, u32>)> + '_ {
        self.entries.iter().map(|(q, d)| (q.as_str(), d))
    }
}

impl FromIterator<(String, String, u32)> for Qrels {
    fn from_iter<I: IntoIterator<Item = (String, String, u32)>>(iter: I) -> Self {
        let mut qrels = Qrels::new();
        for (q, d, r) in iter {
            qrels.insert(q, d, r);
        }
        qrels
    }
}

const BEIR_QRELS_HEADER: &str = "query-id\tcorpus-id\tscore";

/// Loads `query_id<TAB>doc_id<TAB>relevance` lines.
///
/// Blank lines are ignored, as is a BEIR-style header on the first line.
pub fn load_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qrels(path, &text)
}

pub(crate) fn parse_qrels(path: &Path, text: &str) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (lineno == 1 && line == BEIR_QRELS_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::format(
                path,
                Location::Line(lineno),
                format!("expected 3 tab-separated columns, found {}", fields.len()),
            ));
        }
        let (query, doc, grade) = (fields[0].trim(), fields[1].trim(), fields[2].trim());
        if query.is_empty() || doc.is_empty() {
            return Err(Error::format(path, Location::Line(lineno), "empty query or doc id"));
        }
        let relevance: u32 = grade.parse().map_err(|_| {
            Error::format(
                path,
                Location::Line(lineno),
                format!("relevance must be a non-negative integer, found {grade:?}"),
            )
        })?;
        qrels.insert(query, doc, relevance);
    }
    Ok(qrels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_emb1(path: &Path, n: u32, d: u32, values: &[f32]) {
        let mut bytes = b"EMB1".to_vec();
        bytes.push(1);
        bytes.extend_from_slice(&n.to_le_bytes());
        bytes.extend_from_slice(&d.to_le_bytes());
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, bytes).unwrap();
    }

    #[test]
    fn loads_emb1_with_synthesized_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.emb");
        write_emb1(&path, 2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let m = load_embeddings(&path).unwrap();
        assert_eq!((m.n_items(), m.dim()), (2, 3));
        assert_eq!(m.row(1), &[4.0, 5.0, 6.0]);
        assert_eq!(m.ids(), &["row_0", "row_1"]);
    }

    #[test]
    fn loads_tsv_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        fs::write(&path, "1.0\t0.0\n0.0\t1.0").unwrap();
        let m = load_embeddings(&path).unwrap();
        assert_eq!(m.data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn short_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.emb");
        write_emb1(&path, 2, 3, &[1.0; 5]);
        let err = load_embeddings(&path).unwrap_err();
        assert!(err.to_string().contains("payload length mismatch"), "{err}");
        assert!(matches!(err, Error::Format { location: Location::Byte(13), .. }));
    }

    #[test]
    fn non_finite_values_are_rejected_with_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.emb");
        write_emb1(&path, 1, 3, &[0.0, f32::NAN, 1.0]);
        let err = load_embeddings(&path).unwrap_err();
        assert!(matches!(err, Error::Format { location: Location::Byte(17), .. }), "{err}");

        let tsv = dir.path().join("inf.tsv");
        fs::write(&tsv, "1\t2\ninf\t0\n").unwrap();
        let err = load_embeddings(&tsv).unwrap_err();
        assert!(matches!(err, Error::Format { location: Location::Line(2), .. }), "{err}");
    }

    #[test]
    fn bad_header_and_ragged_tsv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.emb");
        fs::write(&path, b"EMB1\x01\x02").unwrap();
        assert!(load_embeddings(&path).unwrap_err().to_string().contains("truncated header"));

        let path = dir.path().join("v2.emb");
        write_emb1(&path, 1, 1, &[1.0]);
        let mut bytes = fs::read(&path).unwrap();
        bytes[4] = 2;
        fs::write(&path, bytes).unwrap();
        assert!(load_embeddings(&path).unwrap_err().to_string().contains("version"));

        let tsv = dir.path().join("ragged.tsv");
        fs::write(&tsv, "1\t2\n3\n").unwrap();
        let err = load_embeddings(&tsv).unwrap_err();
        assert!(matches!(err, Error::Format { location: Location::Line(2), .. }));

        let empty = dir.path().join("empty.tsv");
        fs::write(&empty, "").unwrap();
        assert!(load_embeddings(&empty).unwrap_err().to_string().contains("empty matrix"));
    }

    #[test]
    fn duplicate_ids_report_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.emb");
        write_emb1(&path, 3, 1, &[1.0, 2.0, 3.0]);
        fs::write(dir.path().join("m.ids"), "a\nb\na\n").unwrap();
        let err = load_embeddings(&path).unwrap_err();
        assert!(matches!(err, Error::Format { location: Location::Line(3), .. }), "{err}");
    }

    #[test]
    fn single_value_file_is_seventeen_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.emb");
        let m = EmbeddingMatrix::from_rows(&[vec![0.5]], None).unwrap();
        save_embeddings(&m, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 13 + 4);
        assert_eq!(&bytes[13..], &0.5f32.to_le_bytes());
    }

    #[test]
    fn empty_path_is_io_error() {
        let m = EmbeddingMatrix::from_rows(&[vec![0.5]], None).unwrap();
        assert!(matches!(save_embeddings(&m, ""), Err(Error::Io { .. })));
    }

    #[test]
    fn qrels_parsing() {
        let p = Path::new("q.tsv");
        let q = parse_qrels(p, "q1\td7\t1").unwrap();
        assert_eq!(q.relevance("q1", "d7"), 1);

        let q = parse_qrels(p, "q1\td7\t1\nq1\td7\t2\n").unwrap();
        assert_eq!(q.get("q1").unwrap().len(), 1);
        assert_eq!(q.relevance("q1", "d7"), 2);
        let q = parse_qrels(p, "q1\td7\t2\nq1\td7\t1\n").unwrap();
        assert_eq!(q.relevance("q1", "d7"), 2);

        let err = parse_qrels(p, "q1\td7\tabc").unwrap_err();
        assert!(matches!(err, Error::Format { location: Location::Line(1), .. }));
        let err = parse_qrels(p, "q1\td7\t1\nq2\td1\n").unwrap_err();
        assert!(matches!(err, Error::Format { location: Location::Line(2), .. }));
        assert!(parse_qrels(p, "q1\td7\t-1").is_err());

        let q = parse_qrels(p, "query-id\tcorpus-id\tscore\nq\td\t0\n").unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q.n_relevant("q"), 0);
    }

    #[test]
    fn matrix_validation() {
        assert!(EmbeddingMatrix::new(2, vec![1.0, f64::NAN], vec!["a".into()]).is_err());
        assert!(EmbeddingMatrix::new(1, vec![1.0, 2.0], vec!["a".into(), "a".into()]).is_err());
        assert!(EmbeddingMatrix::new(1, vec![1.0], vec![String::new()]).is_err());
        assert!(EmbeddingMatrix::new(1, vec![], vec![]).is_err());
        assert!(EmbeddingMatrix::new(0, vec![], vec![]).is_err());
    }

    fn matrix_strategy() -> impl Strategy<Value = EmbeddingMatrix> {
        (1usize..6, 1usize..6).prop_flat_map(|(n, d)| {
            prop::collection::vec(-1e6f32..1e6f32, n * d).prop_map(move |vals| {
                let data = vals.into_iter().map(f64::from).collect();
                EmbeddingMatrix::new(d, data, (0..n).map(|i| format!("id-{i}")).collect())
                    .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn emb1_round_trip_is_bit_exact(m in matrix_strategy()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.emb");
            save_embeddings(&m, &path).unwrap();
            let back = load_embeddings(&path).unwrap();
            prop_assert_eq!(back.ids(), m.ids());
            let bits = |x: &EmbeddingMatrix| x.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back), bits(&m));
        }

        #[test]
        fn tsv_round_trip_is_exact(m in matrix_strategy()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.tsv");
            save_tsv(&m, &path).unwrap();
            prop_assert_eq!(load_embeddings(&path).unwrap(), m);
        }

        #[test]
        fn qrels_are_order_independent(
            lines in prop::collection::vec((0u8..4, 0u8..6, 0u32..3), 1..20),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let render = |ls: &[(u8, u8, u32)]| ls
                .iter()
                .map(|(q, d, r)| format!("q{q}\td{d}\t{r}\n"))
                .collect::<String>();
            let mut shuffled = lines.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let p = Path::new("q");
            prop_assert_eq!(parse_qrels(p, &render(&lines)).unwrap(), parse_qrels(p, &render(&shuffled)).unwrap());
        }
    }
}
