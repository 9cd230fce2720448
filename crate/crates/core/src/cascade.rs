//! Online hierarchical retrieval: a full-gallery scan at the coarsest level,
//! then ever-smaller re-ranks at each finer level, with an optional
//! matching-probability re-rank of the final head.
//!
//! The pool schedule gives each level a scan budget: level l examines at
//! most `pools[l]` candidates (token 0 = the entire current pool), taken
//! from the head of the previous level's ranking, and re-ranks all of them.
//! The final list is the last level's full ranking.
//!
//! Every scan is exact (no approximate index) and every ordering is
//! deterministic: score descending, ascending id on ties.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::VlmScorer;
use crate::schedule::HierSchedule;
use crate::store::GalleryStore;

/// The query side's per-level embeddings, coarsest first.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding {
    pub id: u64,
    pub levels: Vec<Vec<f32>>,
}

impl QueryEmbedding {
    pub fn new(id: u64, levels: Vec<Vec<f32>>) -> Self {
        Self { id, levels }
    }

    pub fn from_store(store: &GalleryStore, pos: usize) -> Result<Self> {
        let item = store.item(pos)?;
        Ok(Self::new(item.id, item.levels))
    }

    fn check(&self, schedule: &HierSchedule) -> Result<()> {
        if self.levels.len() != schedule.levels() {
            return Err(Error::ScheduleMismatch(format!(
                "query {} has {} levels, store has {}",
                self.id,
                self.levels.len(),
                schedule.levels()
            )));
        }
        for (l, v) in self.levels.iter().enumerate() {
            let expected = schedule.dims()[l] as usize;
            if v.len() != expected {
                return Err(Error::DimMismatch {
                    level: l,
                    expected,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }
}

/// Search-time knobs: pool override, optional re-ranker and its depth.
#[derive(Debug, Clone, Default)]
pub struct CascadeConfig {
    /// Overrides the store's per-level scan budgets when set (same level
    /// count, token 0 = full pool).
    pub pools: Option<Vec<u32>>,
    pub rerank: Option<VlmScorer>,
    /// Re-rank only the final top-R; defaults to the whole final list.
    pub rerank_depth: Option<usize>,
}

/// Per-level record of one cascade pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub level: usize,
    /// Number of candidates examined, after clamping to the current pool.
    pub k: usize,
    pub clamped: bool,
    pub survivors: Vec<u64>,
    pub scores: Vec<f64>,
    pub nanos: u64,
}

/// Full record of one query's cascade: per-level survivors plus the final
/// ranked list (descending score, ascending id on ties).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeTrace {
    pub query_id: u64,
    pub levels: Vec<LevelResult>,
    pub final_ranking: Vec<(u64, f64)>,
    /// Nanoseconds spent in the re-rank stage, when configured.
    pub rerank_nanos: Option<u64>,
}

fn dot_f32(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

fn sort_ranked(list: &mut [(u64, f64)]) {
    list.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Exact top-k by dot product at one level over an explicit candidate set.
pub fn topk_level(
    query: &[f32],
    store: &GalleryStore,
    level: usize,
    candidates: &[u64],
    k: usize,
) -> Result<Vec<(u64, f64)>> {
    let d = store.schedule().dim(level)?;
    if query.len() != d {
        return Err(Error::DimMismatch {
            level,
            expected: d,
            got: query.len(),
        });
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for &id in candidates {
        let v = store.vector_by_id(id, level)?;
        scored.push((id, dot_f32(query, v)));
    }
    sort_ranked(&mut scored);
    scored.truncate(k);
    Ok(scored)
}

/// Independent single-stage baseline: full-gallery top-k at the final level.
/// Deliberately a separate straight-line implementation, not a call into
/// the cascade path.
pub fn brute_force_search(
    query: &[f32],
    store: &GalleryStore,
    k: usize,
) -> Result<Vec<(u64, f64)>> {
    if store.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let level = store.schedule().levels() - 1;
    let d = store.schedule().dim(level)?;
    if query.len() != d {
        return Err(Error::DimMismatch {
            level,
            expected: d,
            got: query.len(),
        });
    }
    let block = store.level_block(level)?;
    let mut scored: Vec<(u64, f64)> = store
        .ids()
        .iter()
        .enumerate()
        .map(|(pos, &id)| (id, dot_f32(query, &block[pos * d..(pos + 1) * d])))
        .collect();
    sort_ranked(&mut scored);
    scored.truncate(k);
    Ok(scored)
}

/// One query through the full cascade: at each level, take at most the
/// level's scan budget from the head of the previous ranking (store order at
/// the coarsest level), score and fully re-rank those candidates, and pass
/// the ranking on. Optionally re-ranks the final head by matching
/// probability.
pub fn cascade_search(
    query: &QueryEmbedding,
    store: &GalleryStore,
    cfg: &CascadeConfig,
) -> Result<CascadeTrace> {
    if store.is_empty() {
        return Err(Error::EmptyGallery);
    }
    query.check(store.schedule())?;
    let levels = store.schedule().levels();
    let pools: &[u32] = match &cfg.pools {
        Some(p) => {
            if p.len() != levels {
                return Err(Error::ScheduleMismatch(format!(
                    "pool override has {} levels, store has {}",
                    p.len(),
                    levels
                )));
            }
            p
        }
        None => store.schedule().pools(),
    };

    let ids = store.ids();
    // Positions into the store, ranked by the previous level (store order
    // before the first level). Scanning by position keeps the hot loop on
    // the contiguous level block instead of per-id lookups.
    let mut candidates: Vec<usize> = (0..store.len()).collect();
    let mut level_results = Vec::with_capacity(levels);
    let mut final_ranking = Vec::new();
    for l in 0..levels {
        let pool = pools[l];
        let clamped = pool != 0 && (pool as usize) > candidates.len();
        let scan = if pool == 0 {
            candidates.len()
        } else {
            (pool as usize).min(candidates.len())
        };
        candidates.truncate(scan);
        let d = store.schedule().dim(l)?;
        let q = &query.levels[l];
        let start = Instant::now();
        let block = store.level_block(l)?;
        let mut ranked: Vec<(usize, f64)> = candidates
            .iter()
            .map(|&pos| (pos, dot_f32(q, &block[pos * d..(pos + 1) * d])))
            .collect();
        ranked.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(ids[a.0].cmp(&ids[b.0])));
        let nanos = start.elapsed().as_nanos() as u64;
        candidates = ranked.iter().map(|&(pos, _)| pos).collect();
        level_results.push(LevelResult {
            level: l,
            k: scan,
            clamped,
            survivors: ranked.iter().map(|&(pos, _)| ids[pos]).collect(),
            scores: ranked.iter().map(|&(_, s)| s).collect(),
            nanos,
        });
        if l == levels - 1 {
            final_ranking = ranked.into_iter().map(|(pos, s)| (ids[pos], s)).collect();
        }
    }

    let mut rerank_nanos = None;
    if let Some(scorer) = &cfg.rerank {
        let depth = cfg.rerank_depth.unwrap_or(final_ranking.len());
        if depth == 0 {
            return Err(Error::InvalidConfig("rerank depth must be >= 1".into()));
        }
        let depth = depth.min(final_ranking.len());
        let start = Instant::now();
        let top_dim = store.schedule().top_dim();
        let q64: Vec<f64> = query.levels[levels - 1].iter().map(|&x| f64::from(x)).collect();
        if scorer.dim != top_dim {
            return Err(Error::DimMismatch {
                level: levels - 1,
                expected: top_dim,
                got: scorer.dim,
            });
        }
        let mut head: Vec<(u64, f64)> = final_ranking[..depth]
            .iter()
            .map(|&(id, _)| {
                let v = store.vector_by_id(id, levels - 1)?;
                let g64: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
                Ok((id, scorer.score(&q64, &g64)?))
            })
            .collect::<Result<_>>()?;
        sort_ranked(&mut head);
        final_ranking.splice(..depth, head);
        rerank_nanos = Some(start.elapsed().as_nanos() as u64);
    }

    Ok(CascadeTrace {
        query_id: query.id,
        levels: level_results,
        final_ranking,
        rerank_nanos,
    })
}

/// Cascade a batch of queries. Results are in query order and identical to
/// the sequential path for any worker budget.
pub fn batch_search(
    queries: &[QueryEmbedding],
    store: &GalleryStore,
    cfg: &CascadeConfig,
    workers: usize,
) -> Result<Vec<CascadeTrace>> {
    if workers == 0 {
        return Err(Error::InvalidConfig("worker budget must be >= 1".into()));
    }
    if workers == 1 {
        return queries.iter().map(|q| cascade_search(q, store, cfg)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    pool.install(|| {
        queries
            .par_iter()
            .map(|q| cascade_search(q, store, cfg))
            .collect()
    })
}
