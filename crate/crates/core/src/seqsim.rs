//! SeqSim: sequence similarity from per-frame maximum similarities.
//!
//! For sequences X (T1 x D) and Y (T2 x D), the sequence-level recall is the
//! mean over X's frames of the best dot product against any frame of Y, the
//! precision is the same with roles swapped, and the score is their harmonic
//! mean. With L2-normalized frames the dot products are cosines.
//!
//! Two evaluation paths share one dot-product kernel: a naive reference that
//! materializes the full T1 x T2 similarity matrix, and a tiled path with
//! running row/column maxima whose peak memory stays O(T1 + T2) however long
//! the sequences get. Frame sums are accumulated in f64; the paths agree
//! bit-for-bit, and the naive path stays the oracle for the tiling logic.

use rayon::prelude::*;

use crate::embed::EmbeddingSequence;
use crate::error::{Error, Result};

/// Tile edge (in frames) for the blocked path; sized so an X and a Y tile of
/// typical dimension both sit in L1.
pub const DEFAULT_BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SeqSimScore {
    pub recall_seq: f64,
    pub precision_seq: f64,
    pub f1: f64,
}

/// Harmonic mean, defined as 0 when the denominator is not meaningfully
/// positive (covers the empty-signal and all-negative corners).
fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    let den = precision + recall;
    if den <= 1e-12 {
        0.0
    } else {
        2.0 * precision * recall / den
    }
}

/// Unrolled dot product with eight independent partial sums. The fixed
/// reassociation makes it both fast and reproducible: every caller gets the
/// same rounding for the same inputs.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let x = &a[c * 8..c * 8 + 8];
        let y = &b[c * 8..c * 8 + 8];
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0f32;
    for k in chunks * 8..a.len() {
        tail += a[k] * b[k];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn check_pair(x: &EmbeddingSequence, y: &EmbeddingSequence) -> Result<()> {
    if x.frames() == 0 || y.frames() == 0 {
        return Err(Error::EmptySequence {
            context: "seqsim operand".to_string(),
        });
    }
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            context: "seqsim operands".to_string(),
            expected: x.dim(),
            got: y.dim(),
        });
    }
    Ok(())
}

fn score_from_maxima(row_max: &[f32], col_max: &[f32]) -> SeqSimScore {
    let recall = row_max.iter().map(|&v| v as f64).sum::<f64>() / row_max.len() as f64;
    let precision = col_max.iter().map(|&v| v as f64).sum::<f64>() / col_max.len() as f64;
    SeqSimScore {
        recall_seq: recall,
        precision_seq: precision,
        f1: harmonic_f1(precision, recall),
    }
}

/// Reference implementation: materializes the full similarity matrix, then
/// reduces. Memory O(T1 * T2).
pub fn seqsim_naive(x: &EmbeddingSequence, y: &EmbeddingSequence) -> Result<SeqSimScore> {
    check_pair(x, y)?;
    let (t1, t2) = (x.frames(), y.frames());
    let mut matrix = vec![0.0f32; t1 * t2];
    for i in 0..t1 {
        let xi = x.row(i);
        for j in 0..t2 {
            matrix[i * t2 + j] = dot(xi, y.row(j));
        }
    }
    let row_max: Vec<f32> = (0..t1)
        .map(|i| {
            matrix[i * t2..(i + 1) * t2]
                .iter()
                .copied()
                .fold(f32::NEG_INFINITY, f32::max)
        })
        .collect();
    let col_max: Vec<f32> = (0..t2)
        .map(|j| {
            (0..t1)
                .map(|i| matrix[i * t2 + j])
                .fold(f32::NEG_INFINITY, f32::max)
        })
        .collect();
    Ok(score_from_maxima(&row_max, &col_max))
}

/// Tiled implementation with running maxima; same contract and bit-identical
/// results, but peak memory O(T1 + T2) and cache-friendly access.
pub fn seqsim_fast(x: &EmbeddingSequence, y: &EmbeddingSequence) -> Result<SeqSimScore> {
    seqsim_fast_with_block(x, y, DEFAULT_BLOCK)
}

#[allow(clippy::needless_range_loop)] // index blocking mirrors the tiling
pub fn seqsim_fast_with_block(
    x: &EmbeddingSequence,
    y: &EmbeddingSequence,
    block: usize,
) -> Result<SeqSimScore> {
    check_pair(x, y)?;
    let block = block.max(1);
    let (t1, t2) = (x.frames(), y.frames());
    let mut row_max = vec![f32::NEG_INFINITY; t1];
    let mut col_max = vec![f32::NEG_INFINITY; t2];

    let mut i0 = 0;
    while i0 < t1 {
        let i1 = (i0 + block).min(t1);
        let mut j0 = 0;
        while j0 < t2 {
            let j1 = (j0 + block).min(t2);
            for i in i0..i1 {
                let xi = x.row(i);
                let mut rm = row_max[i];
                for j in j0..j1 {
                    let s = dot(xi, y.row(j));
                    if s > rm {
                        rm = s;
                    }
                    if s > col_max[j] {
                        col_max[j] = s;
                    }
                }
                row_max[i] = rm;
            }
            j0 = j1;
        }
        i0 = i1;
    }
    Ok(score_from_maxima(&row_max, &col_max))
}

/// All-pairs scores between two sequence lists; cell (i, j) is the f1 of
/// `queries[i]` against `targets[j]`. Cells are computed in parallel.
pub fn seqsim_batch(
    queries: &[EmbeddingSequence],
    targets: &[EmbeddingSequence],
) -> Result<Vec<Vec<f64>>> {
    seqsim_batch_with_block(queries, targets, DEFAULT_BLOCK)
}

pub fn seqsim_batch_with_block(
    queries: &[EmbeddingSequence],
    targets: &[EmbeddingSequence],
    block: usize,
) -> Result<Vec<Vec<f64>>> {
    // validate up front so worker errors cannot be silent
    let mut dim = None;
    for (label, list) in [("queries", queries), ("targets", targets)] {
        for (k, seq) in list.iter().enumerate() {
            if seq.frames() == 0 {
                return Err(Error::EmptySequence {
                    context: format!("{label}[{k}]"),
                });
            }
            match dim {
                None => dim = Some(seq.dim()),
                Some(d) if d != seq.dim() => {
                    return Err(Error::DimensionMismatch {
                        context: format!("{label}[{k}]"),
                        expected: d,
                        got: seq.dim(),
                    });
                }
                Some(_) => {}
            }
        }
    }
    Ok(queries
        .par_iter()
        .map(|q| {
            targets
                .iter()
                .map(|t| {
                    seqsim_fast_with_block(q, t, block)
                        .expect("operands validated above")
                        .f1
                })
                .collect()
        })
        .collect())
}
