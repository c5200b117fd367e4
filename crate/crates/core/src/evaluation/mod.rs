//! Image retrieval metrics: per-query gold ranks, recall@N and median rank.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::corpus::Sample;
use crate::error::{dim_err, Error, Result};
use crate::model::Model;
use crate::numcore::Scalar;

/// Cutoffs reported by [`RetrievalResult`].
pub const RECALL_CUTOFFS: [usize; 3] = [1, 5, 10];

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalResult {
    /// Recall at 1, 5 and 10, in the order of [`RECALL_CUTOFFS`].
    pub recall_at: [f64; 3],
    pub median_rank: f64,
    pub per_query_rank: Vec<usize>,
}

impl RetrievalResult {
    /// Fraction of queries whose gold image ranks within `n`.
    pub fn recall(&self, n: usize) -> f64 {
        recall_at(&self.per_query_rank, n)
    }

    pub fn r1(&self) -> f64 {
        self.recall_at[0]
    }

    pub fn r5(&self) -> f64 {
        self.recall_at[1]
    }

    pub fn r10(&self) -> f64 {
        self.recall_at[2]
    }
}

impl fmt::Display for RetrievalResult {
    /// `R@1,R@5,R@10,medr` as in the training log.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{}",
            self.recall_at[0], self.recall_at[1], self.recall_at[2], self.median_rank
        )
    }
}

fn recall_at(ranks: &[usize], n: usize) -> f64 {
    ranks.iter().filter(|&&r| r <= n).count() as f64 / ranks.len() as f64
}

fn distance<T: Scalar>(u: &[T], i: &[T]) -> T {
    T::one() - u.iter().zip(i).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

/// Rank of the gold image for every query. An image outranks the gold one
/// when it is strictly closer, or equally close with a smaller index.
pub fn rank_images<T, U, I>(utterances: &[U], images: &[I], gold: &[usize]) -> Result<Vec<usize>>
where
    T: Scalar,
    U: AsRef<[T]> + Sync,
    I: AsRef<[T]> + Sync,
{
    if utterances.len() != gold.len() {
        return Err(dim_err("rank_images gold", &[utterances.len()], &[gold.len()]));
    }
    let dim = images.first().map_or(0, |i| i.as_ref().len());
    for v in images.iter().map(AsRef::as_ref).chain(utterances.iter().map(AsRef::as_ref)) {
        if v.len() != dim {
            return Err(dim_err("rank_images embedding", &[dim], &[v.len()]));
        }
    }
    if let Some(&g) = gold.iter().find(|&&g| g >= images.len()) {
        return Err(Error::OutOfRange {
            index: g,
            len: images.len(),
        });
    }
    Ok(utterances
        .par_iter()
        .zip(gold)
        .map(|(u, &g)| {
            let u = u.as_ref();
            let d_gold = distance(u, images[g].as_ref());
            1 + images
                .iter()
                .enumerate()
                .filter(|(k, im)| {
                    let d = distance(u, im.as_ref());
                    d < d_gold || (d == d_gold && *k < g)
                })
                .count()
        })
        .collect())
}

pub fn summarize(ranks: &[usize]) -> Result<RetrievalResult> {
    if ranks.is_empty() {
        return Err(Error::EmptySequence("ranks"));
    }
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let median_rank = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    };
    Ok(RetrievalResult {
        recall_at: RECALL_CUTOFFS.map(|c| recall_at(ranks, c)),
        median_rank,
        per_query_rank: ranks.to_vec(),
    })
}

/// Image retrieval over `samples`: each utterance queries the set of
/// distinct images (by image id, in first-seen order).
pub fn evaluate(model: &Model, samples: &[Sample]) -> Result<RetrievalResult> {
    let (utts, images, gold) = embed_for_retrieval(model, samples)?;
    summarize(&rank_images(&utts, &images, &gold)?)
}

/// Utterance embeddings, distinct image embeddings and the gold image index
/// of every utterance.
#[allow(clippy::type_complexity)]
pub fn embed_for_retrieval(model: &Model, samples: &[Sample]) -> Result<(Vec<Vec<f32>>, Vec<Vec<f32>>, Vec<usize>)> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut distinct: Vec<&Sample> = Vec::new();
    let gold: Vec<usize> = samples
        .iter()
        .map(|s| {
            *index.entry(&s.image_id).or_insert_with(|| {
                distinct.push(s);
                distinct.len() - 1
            })
        })
        .collect();
    let utts = samples
        .par_iter()
        .map(|s| model.embed(&s.utterance))
        .collect::<Result<Vec<_>>>()?;
    let images = distinct
        .par_iter()
        .map(|s| model.encode_image(&s.image))
        .collect::<Result<Vec<_>>>()?;
    Ok((utts, images, gold))
}

/// Writes `id,rank` lines.
pub fn write_rank_dump<W: Write>(mut out: W, ids: &[String], ranks: &[usize]) -> Result<()> {
    if ids.len() != ranks.len() {
        return Err(dim_err("rank dump", &[ids.len()], &[ranks.len()]));
    }
    for (id, r) in ids.iter().zip(ranks) {
        writeln!(out, "{id},{r}")?;
    }
    Ok(())
}
