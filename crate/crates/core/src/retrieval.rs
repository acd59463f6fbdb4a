//! Zero-shot speech-to-speech retrieval between site pairs, recall
//! aggregation into subgroup matrices, and report rendering.
//!
//! For every aligned sentence at the source site, the target-site utterance
//! with the highest SeqSim is retrieved; the retrieval is correct when the
//! retrieved utterance carries the same sentence id. Pair recalls are then
//! averaged, unweighted, over all ordered city pairs of each
//! (source subgroup, target subgroup) cell.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{aligned_sentence_ids, Manifest, Subgroup};
use crate::embed::{EmbeddingSequence, EmbeddingStore};
use crate::error::{Error, Result};
use crate::seqsim::seqsim_fast;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SentenceRetrieval {
    pub sentence_id: u32,
    pub retrieved_sentence_id: u32,
    pub f1_score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairRetrievalResult {
    pub source_site: String,
    pub target_site: String,
    pub n_sentences: usize,
    pub n_correct: usize,
    pub recall: f64,
    /// Aligned sentences dropped because an embedding was missing on either side.
    pub excluded_missing: usize,
    pub per_sentence: Vec<SentenceRetrieval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalPolicy {
    /// Compute same-subgroup cells (over distinct city pairs). Reports leave
    /// the diagonal as "--" when disabled.
    #[serde(default)]
    pub include_diagonal: bool,
    /// A retrieval counts as correct when the true sentence is within the
    /// top k candidates. The reported per-sentence retrieval is always top-1.
    #[serde(default = "default_topk")]
    pub topk: usize,
}

fn default_topk() -> usize {
    1
}

impl Default for RetrievalPolicy {
    fn default() -> Self {
        RetrievalPolicy {
            include_diagonal: false,
            topk: default_topk(),
        }
    }
}

/// Run retrieval from `source` to `target`. Ties in the argmax break toward
/// the smallest sentence id, which keeps results independent of iteration
/// order.
pub fn retrieve_pair(
    store: &EmbeddingStore,
    manifest: &Manifest,
    source: &str,
    target: &str,
    topk: usize,
) -> Result<PairRetrievalResult> {
    if source == target {
        return Err(Error::Config(format!(
            "retrieval requires distinct sites, got `{source}` twice"
        )));
    }
    let topk = topk.max(1);
    let aligned = aligned_sentence_ids(manifest, source, target)?;
    let usable: Vec<u32> = aligned
        .iter()
        .copied()
        .filter(|&s| store.contains(source, s) && store.contains(target, s))
        .collect();
    let excluded_missing = aligned.len() - usable.len();
    if usable.is_empty() {
        return Err(Error::EmptyAlignedSet {
            source_site: source.to_string(),
            target_site: target.to_string(),
        });
    }

    let targets: Vec<(u32, &EmbeddingSequence)> = usable
        .iter()
        .map(|&s| (s, store.get(target, s).expect("filtered above")))
        .collect();

    let outcomes: Vec<(SentenceRetrieval, bool)> = usable
        .par_iter()
        .map(|&query_id| {
            let query = store.get(source, query_id).expect("filtered above");
            // (sentence_id, f1), in ascending id order
            let scored: Vec<(u32, f64)> = targets
                .iter()
                .map(|&(tid, tseq)| {
                    let f1 = seqsim_fast(query, tseq)
                        .expect("store enforces uniform dimension and T >= 1")
                        .f1;
                    (tid, f1)
                })
                .collect();
            let (best_id, best_f1) = scored
                .iter()
                .fold((u32::MAX, f64::NEG_INFINITY), |(bid, bf1), &(tid, f1)| {
                    if f1 > bf1 {
                        (tid, f1)
                    } else {
                        (bid, bf1)
                    }
                });
            let correct = if topk == 1 {
                best_id == query_id
            } else {
                let mut ranked = scored;
                ranked.sort_by(|a, b| {
                    b.1.partial_cmp(&a.1)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.0.cmp(&b.0))
                });
                ranked.iter().take(topk).any(|&(tid, _)| tid == query_id)
            };
            (
                SentenceRetrieval {
                    sentence_id: query_id,
                    retrieved_sentence_id: best_id,
                    f1_score: best_f1,
                },
                correct,
            )
        })
        .collect();

    let n_correct = outcomes.iter().filter(|(_, correct)| *correct).count();
    let per_sentence: Vec<SentenceRetrieval> =
        outcomes.into_iter().map(|(retrieval, _)| retrieval).collect();

    Ok(PairRetrievalResult {
        source_site: source.to_string(),
        target_site: target.to_string(),
        n_sentences: usable.len(),
        n_correct,
        recall: n_correct as f64 / usable.len() as f64,
        excluded_missing,
        per_sentence,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RecallCell {
    pub mean_recall: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone)]
pub struct RecallMatrix {
    /// Report order: standard variety first, then the major subgroups.
    pub subgroups: Vec<Subgroup>,
    pub cells: BTreeMap<(Subgroup, Subgroup), RecallCell>,
    pub include_diagonal: bool,
    /// One line per skipped city pair, carried into report footnotes.
    pub skipped: Vec<String>,
}

impl RecallMatrix {
    pub fn cell(&self, source: &Subgroup, target: &Subgroup) -> Option<&RecallCell> {
        self.cells.get(&(source.clone(), target.clone()))
    }
}

/// Aggregate city-pair recalls into a subgroup-level matrix. The mean is
/// unweighted over pairs; pair counts ride along so cells built from few
/// pairs are visible as such.
pub fn recall_matrix(
    store: &EmbeddingStore,
    manifest: &Manifest,
    policy: &RetrievalPolicy,
) -> Result<(RecallMatrix, Vec<PairRetrievalResult>)> {
    let by_subgroup = manifest.sites_by_subgroup();
    let mut subgroups: Vec<Subgroup> = by_subgroup.keys().cloned().collect();
    subgroups.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));

    // deterministic job list: subgroup cells in report order, site pairs in
    // manifest-sorted order within each cell
    let mut jobs: Vec<(Subgroup, Subgroup, String, String)> = Vec::new();
    for src_sg in &subgroups {
        for tgt_sg in &subgroups {
            if src_sg == tgt_sg && !policy.include_diagonal {
                continue;
            }
            for src_site in &by_subgroup[src_sg] {
                for tgt_site in &by_subgroup[tgt_sg] {
                    if src_site.site_id == tgt_site.site_id {
                        continue;
                    }
                    jobs.push((
                        src_sg.clone(),
                        tgt_sg.clone(),
                        src_site.site_id.clone(),
                        tgt_site.site_id.clone(),
                    ));
                }
            }
        }
    }

    let outcomes: Vec<(Subgroup, Subgroup, Result<PairRetrievalResult>)> = jobs
        .par_iter()
        .map(|(src_sg, tgt_sg, a, b)| {
            (
                src_sg.clone(),
                tgt_sg.clone(),
                retrieve_pair(store, manifest, a, b, policy.topk),
            )
        })
        .collect();

    let mut sums: BTreeMap<(Subgroup, Subgroup), (f64, usize)> = BTreeMap::new();
    let mut skipped = Vec::new();
    let mut pair_results = Vec::new();
    for (src_sg, tgt_sg, outcome) in outcomes {
        match outcome {
            Ok(result) => {
                let entry = sums.entry((src_sg, tgt_sg)).or_insert((0.0, 0));
                entry.0 += result.recall;
                entry.1 += 1;
                pair_results.push(result);
            }
            Err(Error::EmptyAlignedSet {
                source_site,
                target_site,
            }) => {
                skipped.push(format!(
                    "{source_site} -> {target_site}: no aligned sentences with embeddings"
                ));
            }
            Err(other) => return Err(other),
        }
    }

    let cells = sums
        .into_iter()
        .map(|(key, (sum, count))| {
            (
                key,
                RecallCell {
                    mean_recall: sum / count as f64,
                    n_pairs: count,
                },
            )
        })
        .collect();

    Ok((
        RecallMatrix {
            subgroups,
            cells,
            include_diagonal: policy.include_diagonal,
            skipped,
        },
        pair_results,
    ))
}
