//! Loading, normalizing and saving word embeddings and gold dictionaries.
//!
//! Embeddings use the word2vec text format: a `"<count> <dim>"` header line
//! followed by one `"<token> <v1> ... <vd>"` line per word. Tokens cannot
//! contain whitespace (the first whitespace ends the token), and tokens are
//! compared by exact byte equality — no case folding or Unicode
//! normalization is applied.
//!
//! Gold dictionaries are plain `"<source> <target>"` pairs, one per line;
//! repeated source words accumulate into a multi-target entry.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg;

/// A vocabulary paired with one dense row per word.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<f64>,
    skipped_duplicates: usize,
}

impl EmbeddingMatrix {
    /// Builds a matrix from parts, validating the type invariants:
    /// unique tokens, one finite row of equal width per word, at least one row.
    pub fn new(words: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if words.is_empty() || vectors.nrows() == 0 {
            return Err(Error::EmptyInput("embedding matrix has no rows".into()));
        }
        if words.len() != vectors.nrows() {
            return Err(Error::DimensionMismatch { left: words.len(), right: vectors.nrows() });
        }
        if !linalg::all_finite(vectors.view()) {
            return Err(Error::InvalidParameter {
                name: "vectors",
                msg: "matrix contains non-finite entries".into(),
            });
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidParameter {
                    name: "words",
                    msg: format!("duplicate token {w:?}"),
                });
            }
        }
        Ok(Self { words, index, vectors, skipped_duplicates: 0 })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    /// Row index of `word`, if present.
    pub fn position(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// How many duplicate tokens were dropped while loading this matrix.
    pub fn skipped_duplicates(&self) -> usize {
        self.skipped_duplicates
    }

    /// Returns a copy with every row scaled to unit Euclidean norm.
    ///
    /// Word order is preserved. Rows that are exactly zero cannot be
    /// normalized and are reported as [`Error::DegenerateVector`].
    pub fn unit_normalized(&self) -> Result<Self> {
        let mut vectors = self.vectors.clone();
        for (i, mut row) in vectors.outer_iter_mut().enumerate() {
            let norm = linalg::row_norm(row.view());
            if norm == 0.0 {
                return Err(Error::DegenerateVector { token: self.words[i].clone() });
            }
            row.mapv_inplace(|v| v / norm);
        }
        Ok(Self {
            words: self.words.clone(),
            index: self.index.clone(),
            vectors,
            skipped_duplicates: self.skipped_duplicates,
        })
    }

    /// Returns a copy whose rows are `self.vectors · map`. Vocabulary and
    /// row order are untouched; only the vector values change.
    pub fn mapped(&self, map: ArrayView2<'_, f64>) -> Result<Self> {
        if map.nrows() != self.dim() {
            return Err(Error::DimensionMismatch { left: self.dim(), right: map.nrows() });
        }
        Ok(Self {
            words: self.words.clone(),
            index: self.index.clone(),
            vectors: self.vectors.dot(&map),
            skipped_duplicates: self.skipped_duplicates,
        })
    }

    /// Keeps only the first `limit` rows (a vocabulary prefix).
    pub fn truncated(&self, limit: usize) -> Result<Self> {
        if limit == 0 {
            return Err(Error::InvalidParameter { name: "limit", msg: "must be positive".into() });
        }
        if limit >= self.len() {
            return Ok(self.clone());
        }
        let words: Vec<String> = self.words[..limit].to_vec();
        let vectors = self.vectors.slice(ndarray::s![..limit, ..]).to_owned();
        let mut out = Self::new(words, vectors)?;
        out.skipped_duplicates = self.skipped_duplicates;
        Ok(out)
    }
}

/// An evaluation dictionary: each source word maps to the set of acceptable
/// translations.
#[derive(Debug, Clone)]
pub struct GoldDictionary {
    entries: Vec<(String, Vec<String>)>,
    pair_count: usize,
}

impl GoldDictionary {
    /// `(source, acceptable targets)` entries, in first-seen source order.
    pub fn entries(&self) -> &[(String, Vec<String>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of distinct `(source, target)` pairs after de-duplication.
    pub fn pair_count(&self) -> usize {
        self.pair_count
    }
}

/// Loads embeddings from the word2vec text format.
///
/// The first `min(header count, vocab_limit)` parseable entries are kept in
/// file order. Tokens repeated after their first occurrence are skipped and
/// counted in [`EmbeddingMatrix::skipped_duplicates`].
pub fn load_embeddings(path: &Path, vocab_limit: Option<usize>) -> Result<EmbeddingMatrix> {
    if let Some(0) = vocab_limit {
        return Err(Error::InvalidParameter { name: "vocab_limit", msg: "must be positive".into() });
    }
    let display = path.display().to_string();
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();

    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Format { path: display.clone(), line: 1, msg: "missing header".into() })?;
    let mut parts = header.split_whitespace();
    let count: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| header_error(&display, &header))?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| header_error(&display, &header))?;
    if parts.next().is_some() || dim == 0 {
        return Err(header_error(&display, &header));
    }

    let keep = vocab_limit.map_or(count, |l| l.min(count));
    let mut words: Vec<String> = Vec::with_capacity(keep.min(1 << 20));
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut data: Vec<f64> = Vec::new();
    let mut skipped_duplicates = 0usize;

    for (line_no, line) in lines.enumerate() {
        if words.len() == keep {
            break;
        }
        let line = line?;
        let line_no = line_no + 2; // 1-based, after the header
        let mut fields = line.split_whitespace();
        let token = match fields.next() {
            Some(t) => t,
            None => {
                return Err(Error::Format {
                    path: display.clone(),
                    line: line_no,
                    msg: "empty line".into(),
                })
            }
        };
        let mut row = Vec::with_capacity(dim);
        for field in fields {
            let v: f64 = field.parse().map_err(|_| Error::Format {
                path: display.clone(),
                line: line_no,
                msg: format!("cannot parse value {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Format {
                    path: display.clone(),
                    line: line_no,
                    msg: format!("non-finite value {field:?}"),
                });
            }
            row.push(v);
        }
        if row.len() != dim {
            return Err(Error::Format {
                path: display.clone(),
                line: line_no,
                msg: format!("expected {dim} values, found {}", row.len()),
            });
        }
        if index.contains_key(token) {
            skipped_duplicates += 1;
            continue;
        }
        index.insert(token.to_string(), words.len());
        words.push(token.to_string());
        data.extend_from_slice(&row);
    }

    if words.is_empty() {
        return Err(Error::EmptyInput(format!("{display}: no embedding rows loaded")));
    }
    let vectors = Array2::from_shape_vec((words.len(), dim), data)
        .expect("row count and dimension were checked during parsing");
    Ok(EmbeddingMatrix { words, index, vectors, skipped_duplicates })
}

fn header_error(path: &str, header: &str) -> Error {
    Error::Format {
        path: path.to_string(),
        line: 1,
        msg: format!("malformed header {header:?}, expected \"<count> <dim>\""),
    }
}

/// Writes embeddings in the word2vec text format with six fractional digits.
///
/// A matrix written by this function loads back with values within `1e-5`
/// of the originals (exactly the printed precision).
pub fn save_embeddings(embeddings: &EmbeddingMatrix, path: &Path) -> Result<()> {
    if embeddings.is_empty() {
        return Err(Error::EmptyInput("refusing to save an empty embedding matrix".into()));
    }
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{} {}", embeddings.len(), embeddings.dim())?;
    for (word, row) in embeddings.words.iter().zip(embeddings.vectors.outer_iter()) {
        write!(w, "{word}")?;
        for v in row.iter() {
            write!(w, " {v:.6}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a gold dictionary of whitespace-separated `"<src> <tgt>"` lines.
///
/// Lines are grouped by source token; exact duplicate pairs collapse.
pub fn load_gold_dictionary(path: &Path) -> Result<GoldDictionary> {
    let display = path.display().to_string();
    let file = File::open(path)?;

    let mut entries: Vec<(String, Vec<String>)> = Vec::new();
    let mut by_source: HashMap<String, usize> = HashMap::new();
    let mut pair_count = 0usize;

    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Format {
                path: display.clone(),
                line: line_no + 1,
                msg: format!("expected 2 fields, found {}", fields.len()),
            });
        }
        let (src, tgt) = (fields[0], fields[1]);
        let slot = match by_source.get(src) {
            Some(&i) => i,
            None => {
                by_source.insert(src.to_string(), entries.len());
                entries.push((src.to_string(), Vec::new()));
                entries.len() - 1
            }
        };
        let targets = &mut entries[slot].1;
        if !targets.iter().any(|t| t == tgt) {
            targets.push(tgt.to_string());
            pair_count += 1;
        }
    }

    if entries.is_empty() {
        return Err(Error::EmptyInput(format!("{display}: dictionary has no entries")));
    }
    Ok(GoldDictionary { entries, pair_count })
}
