//! BLI evaluation, per-pair distance-change analysis, and IQR outliers.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::embed::{EmbeddingMatrix, GoldDictionary};
use crate::error::{Error, Result};
use crate::linalg;
use crate::procrustes::AlignedPairMatrices;
use crate::retrieval::{rank_rows, RetrievalMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Acc,
    Mrr,
}

/// One evaluation result. Serializes to
/// `{metric, value, evaluated, skipped_oov}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BliResult {
    pub metric: Metric,
    /// Mean score over the evaluated entries, in `[0, 1]`.
    pub value: f64,
    /// Gold entries whose source word is in the source vocabulary.
    pub evaluated: usize,
    /// Gold entries skipped because their source word is out of vocabulary.
    pub skipped_oov: usize,
}

/// Precision at rank 1: the share of evaluated gold entries whose top-1
/// retrieved target is in the acceptable set. Sources missing from the
/// vocabulary are skipped and counted, never scored as zero.
pub fn bli_accuracy(
    source: &EmbeddingMatrix,
    target: &EmbeddingMatrix,
    gold: &GoldDictionary,
    retrieval: RetrievalMethod,
    k: usize,
) -> Result<BliResult> {
    let scores = rank_gold(source, target, gold, retrieval, k, 1)?;
    let evaluated = scores.ranks.len();
    let hits = scores.ranks.iter().filter(|r| **r == Some(1)).count();
    Ok(BliResult {
        metric: Metric::Acc,
        value: hits as f64 / evaluated as f64,
        evaluated,
        skipped_oov: scores.skipped_oov,
    })
}

/// Mean reciprocal rank: per evaluated entry, `1/rank` of the best-ranked
/// acceptable target within `max_rank`, else 0.
pub fn bli_mrr(
    source: &EmbeddingMatrix,
    target: &EmbeddingMatrix,
    gold: &GoldDictionary,
    retrieval: RetrievalMethod,
    k: usize,
    max_rank: usize,
) -> Result<BliResult> {
    if max_rank == 0 {
        return Err(Error::InvalidParameter { name: "max_rank", msg: "must be at least 1".into() });
    }
    let scores = rank_gold(source, target, gold, retrieval, k, max_rank)?;
    let evaluated = scores.ranks.len();
    let total: f64 = scores.ranks.iter().map(|r| r.map_or(0.0, |rank| 1.0 / rank as f64)).sum();
    Ok(BliResult {
        metric: Metric::Mrr,
        value: total / evaluated as f64,
        evaluated,
        skipped_oov: scores.skipped_oov,
    })
}

struct GoldRanks {
    /// Best 1-based rank of an acceptable target per evaluated entry.
    ranks: Vec<Option<usize>>,
    skipped_oov: usize,
}

fn rank_gold(
    source: &EmbeddingMatrix,
    target: &EmbeddingMatrix,
    gold: &GoldDictionary,
    retrieval: RetrievalMethod,
    k: usize,
    max_rank: usize,
) -> Result<GoldRanks> {
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch { left: source.dim(), right: target.dim() });
    }
    if gold.is_empty() {
        return Err(Error::EmptyInput("gold dictionary has no entries".into()));
    }
    let source_n = source.unit_normalized()?;
    let target_n = target.unit_normalized()?;

    let mut query_rows = Vec::new();
    let mut acceptable: Vec<Vec<usize>> = Vec::new();
    let mut skipped_oov = 0usize;
    for (src, targets) in gold.entries() {
        match source_n.position(src) {
            Some(row) => {
                query_rows.push(row);
                acceptable.push(targets.iter().filter_map(|t| target_n.position(t)).collect());
            }
            None => skipped_oov += 1,
        }
    }
    if query_rows.is_empty() {
        return Err(Error::AllOutOfVocabulary { total: gold.len() });
    }

    let dim = source_n.dim();
    let mut queries = Array2::zeros((query_rows.len(), dim));
    for (out_row, &src_row) in query_rows.iter().enumerate() {
        queries.row_mut(out_row).assign(&source_n.row(src_row));
    }

    let ranked = rank_rows(
        queries.view(),
        target_n.vectors(),
        source_n.vectors(),
        retrieval,
        k,
        max_rank,
    )?;

    let ranks = ranked
        .iter()
        .zip(&acceptable)
        .map(|(retrieved, ok)| {
            retrieved
                .iter()
                .position(|j| ok.contains(j))
                .map(|zero_based| zero_based + 1)
        })
        .collect();
    Ok(GoldRanks { ranks, skipped_oov })
}

/// Per-pair Euclidean distances before and after a refinement.
#[derive(Debug, Clone, Serialize)]
pub struct DistanceDeltaRow {
    /// The pair's position in the dictionary the matrices were built from.
    pub pair_id: usize,
    pub original: f64,
    pub refined: f64,
    /// `refined - original`; negative means the pair moved closer.
    pub delta: f64,
}

/// Rows sorted by original distance, ascending.
#[derive(Debug, Clone)]
pub struct DistanceDeltaTable {
    rows: Vec<DistanceDeltaRow>,
}

impl DistanceDeltaTable {
    pub fn rows(&self) -> &[DistanceDeltaRow] {
        &self.rows
    }

    /// CSV with header `pair_id,original,refined,delta`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "pair_id,original,refined,delta")?;
        for row in &self.rows {
            writeln!(w, "{},{},{},{}", row.pair_id, row.original, row.refined, row.delta)?;
        }
        Ok(())
    }
}

/// For every pair `i`, `‖AᵢM_before - Bᵢ‖₂` against `‖AᵢM_after - Bᵢ‖₂`.
pub fn distance_delta(
    pairs: &AlignedPairMatrices,
    map_before: ArrayView2<'_, f64>,
    map_after: ArrayView2<'_, f64>,
) -> DistanceDeltaTable {
    let before = pairs.a().dot(&map_before) - pairs.b();
    let after = pairs.a().dot(&map_after) - pairs.b();
    let mut rows: Vec<DistanceDeltaRow> = before
        .outer_iter()
        .zip(after.outer_iter())
        .enumerate()
        .map(|(pair_id, (b, a))| {
            let original = linalg::row_norm(b);
            let refined = linalg::row_norm(a);
            DistanceDeltaRow { pair_id, original, refined, delta: refined - original }
        })
        .collect();
    rows.sort_by(|x, y| x.original.total_cmp(&y.original).then(x.pair_id.cmp(&y.pair_id)));
    DistanceDeltaTable { rows }
}

/// Indices of values strictly above `Q3 + 1.5·(Q3 - Q1)`.
///
/// Quartiles use linear interpolation between order statistics at position
/// `p·(n - 1)`, the common default of numerical libraries.
pub fn iqr_outliers(values: &[f64]) -> Result<Vec<usize>> {
    if values.len() < 4 {
        return Err(Error::InvalidParameter {
            name: "values",
            msg: format!("need at least 4 values, got {}", values.len()),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter { name: "values", msg: "non-finite values".into() });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let q1 = interpolated_quantile(&sorted, 0.25);
    let q3 = interpolated_quantile(&sorted, 0.75);
    let threshold = q3 + 1.5 * (q3 - q1);
    Ok(values
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| (v > threshold).then_some(i))
        .collect())
}

fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}
