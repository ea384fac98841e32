//! Synthetic dictionary construction from aligned embedding spaces.
//!
//! Retrieval always runs on unit-normalized copies of the inputs, so all
//! scores are cosine-based regardless of the caller's scaling. Similarities
//! are computed by blocked matrix products over source-row chunks; chunks
//! are independent and evaluated in parallel, then merged in source order,
//! so results do not depend on the thread count.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::procrustes::AlignedPairMatrices;

/// Target number of f64 similarity entries held per block (~32 MiB).
const BLOCK_ELEMS: usize = 1 << 22;

/// How translation candidates are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalMethod {
    /// Plain cosine nearest neighbour.
    Nn,
    /// Cross-domain similarity local scaling: `2·cos(x,y) - r_T(x) - r_S(y)`,
    /// where `r_T(x)` is the mean cosine of `x` to its k nearest neighbours
    /// in the target space and `r_S(y)` symmetrically in the source space.
    /// Penalizes hub vectors that are near everything.
    Csls,
}

/// An ordered list of `(source_index, target_index)` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BilingualDictionary {
    pairs: Vec<(usize, usize)>,
}

impl BilingualDictionary {
    pub fn from_pairs(pairs: Vec<(usize, usize)>) -> Self {
        Self { pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Identity dictionary `(i, i)` over `n` rows.
    pub fn identity(n: usize) -> Self {
        Self { pairs: (0..n).map(|i| (i, i)).collect() }
    }
}

/// For each source row, the cosine-nearest target row (ties broken by the
/// lowest target index).
pub fn nn_dictionary(source: &EmbeddingMatrix, target: &EmbeddingMatrix) -> Result<BilingualDictionary> {
    let (s, t) = normalized_pair(source, target)?;
    let ranked = rank_rows(s.view(), t.view(), s.view(), RetrievalMethod::Nn, 1, 1)?;
    Ok(BilingualDictionary { pairs: ranked.into_iter().enumerate().map(|(i, r)| (i, r[0])).collect() })
}

/// For each source row, the target row maximising the CSLS score with
/// neighbourhood size `k` (ties broken by the lowest target index).
pub fn csls_dictionary(
    source: &EmbeddingMatrix,
    target: &EmbeddingMatrix,
    k: usize,
) -> Result<BilingualDictionary> {
    let (s, t) = normalized_pair(source, target)?;
    let ranked = rank_rows(s.view(), t.view(), s.view(), RetrievalMethod::Csls, k, 1)?;
    Ok(BilingualDictionary { pairs: ranked.into_iter().enumerate().map(|(i, r)| (i, r[0])).collect() })
}

/// Pairs retrieved in both directions: `(i, j)` such that `(i, j) ∈ ab` and
/// `(j, i) ∈ ba`, ordered by source index.
pub fn mutual_intersection(ab: &BilingualDictionary, ba: &BilingualDictionary) -> BilingualDictionary {
    let reverse: std::collections::HashSet<(usize, usize)> =
        ba.pairs.iter().map(|&(j, i)| (i, j)).collect();
    let mut pairs: Vec<(usize, usize)> =
        ab.pairs.iter().copied().filter(|p| reverse.contains(p)).collect();
    pairs.sort_unstable();
    BilingualDictionary { pairs }
}

/// Stacks the dictionary's source rows of `xa` and target rows of `xb` into
/// row-correspondent matrices.
pub fn compose_pair_matrices(
    dictionary: &BilingualDictionary,
    xa: &EmbeddingMatrix,
    xb: &EmbeddingMatrix,
) -> Result<AlignedPairMatrices> {
    if dictionary.is_empty() {
        return Err(Error::EmptyInput("cannot compose pair matrices from an empty dictionary".into()));
    }
    if xa.dim() != xb.dim() {
        return Err(Error::DimensionMismatch { left: xa.dim(), right: xb.dim() });
    }
    let d = xa.dim();
    let n = dictionary.len();
    let mut a = Array2::zeros((n, d));
    let mut b = Array2::zeros((n, d));
    for (row, &(i, j)) in dictionary.pairs().iter().enumerate() {
        if i >= xa.len() || j >= xb.len() {
            return Err(Error::InvalidParameter {
                name: "dictionary",
                msg: format!("pair ({i}, {j}) is out of bounds for {}x{} vocabularies", xa.len(), xb.len()),
            });
        }
        a.row_mut(row).assign(&xa.row(i));
        b.row_mut(row).assign(&xb.row(j));
    }
    AlignedPairMatrices::new(a, b)
}

fn normalized_pair(
    source: &EmbeddingMatrix,
    target: &EmbeddingMatrix,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch { left: source.dim(), right: target.dim() });
    }
    let s = source.unit_normalized()?;
    let t = target.unit_normalized()?;
    Ok((s.vectors().to_owned(), t.vectors().to_owned()))
}

enum Scorer {
    Cosine,
    Csls { k: usize, r_s: Vec<f64> },
}

impl Scorer {
    /// Ranks one similarity row, descending score, ties by lowest index.
    fn rank(&self, sims: &[f64], top: usize) -> Vec<usize> {
        let mut scored: Vec<(f64, usize)> = match self {
            Scorer::Cosine => sims.iter().copied().zip(0..).collect(),
            Scorer::Csls { k, r_s } => {
                let r_t = top_k_mean(sims, *k);
                sims.iter()
                    .enumerate()
                    .map(|(j, &cos)| (2.0 * cos - r_t - r_s[j], j))
                    .collect()
            }
        };
        let keep = top.min(scored.len());
        if keep < scored.len() {
            scored.select_nth_unstable_by(keep - 1, |a, b| {
                b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1))
            });
            scored.truncate(keep);
        }
        scored.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        scored.into_iter().map(|(_, j)| j).collect()
    }
}

/// Ranks, for every query row, the `top` best target rows.
///
/// All inputs must be unit-normalized. For CSLS, `context` is the full
/// source space used for the `r_S` neighbourhood term; NN ignores it.
pub(crate) fn rank_rows(
    queries: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    context: ArrayView2<'_, f64>,
    method: RetrievalMethod,
    k: usize,
    top: usize,
) -> Result<Vec<Vec<usize>>> {
    if queries.nrows() == 0 || target.nrows() == 0 {
        return Err(Error::EmptyInput("retrieval requires non-empty matrices".into()));
    }
    if queries.ncols() != target.ncols() {
        return Err(Error::DimensionMismatch { left: queries.ncols(), right: target.ncols() });
    }
    let scorer = match method {
        RetrievalMethod::Nn => Scorer::Cosine,
        RetrievalMethod::Csls => {
            if k == 0 || k > target.nrows() || k > context.nrows() {
                return Err(Error::InvalidParameter {
                    name: "k",
                    msg: format!(
                        "neighbourhood size {k} must be in 1..={}",
                        target.nrows().min(context.nrows())
                    ),
                });
            }
            Scorer::Csls { k, r_s: neighbourhood_means(target, context, k) }
        }
    };
    let top = top.min(target.nrows()).max(1);

    let chunk = (BLOCK_ELEMS / target.nrows().max(1)).max(1);
    let blocks: Vec<ArrayView2<'_, f64>> = queries.axis_chunks_iter(Axis(0), chunk).collect();
    let ranked: Vec<Vec<Vec<usize>>> = blocks
        .par_iter()
        .map(|block| {
            let sims = block.dot(&target.t());
            sims.outer_iter()
                .map(|row| scorer.rank(row.as_slice().expect("contiguous similarity row"), top))
                .collect()
        })
        .collect();
    Ok(ranked.into_iter().flatten().collect())
}

/// Mean cosine of every row of `from` to its `k` nearest rows of `to`.
fn neighbourhood_means(from: ArrayView2<'_, f64>, to: ArrayView2<'_, f64>, k: usize) -> Vec<f64> {
    let chunk = (BLOCK_ELEMS / to.nrows().max(1)).max(1);
    let blocks: Vec<ArrayView2<'_, f64>> = from.axis_chunks_iter(Axis(0), chunk).collect();
    let means: Vec<Vec<f64>> = blocks
        .par_iter()
        .map(|block| {
            let sims = block.dot(&to.t());
            sims.outer_iter()
                .map(|row| top_k_mean(row.as_slice().expect("contiguous similarity row"), k))
                .collect()
        })
        .collect();
    means.into_iter().flatten().collect()
}

/// Mean of the `k` largest values.
fn top_k_mean(row: &[f64], k: usize) -> f64 {
    debug_assert!(k >= 1 && k <= row.len());
    let mut v = row.to_vec();
    if k < v.len() {
        v.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
        v.truncate(k);
    }
    v.iter().sum::<f64>() / k as f64
}
