//! Toy trainer: plain gradient descent on the summed per-level contrastive
//! loss, fitting one affine projection per level per tower, plus an optional
//! matching-scorer phase. Deterministic under (seed, config).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::objectives::{
    hrl_loss, vlm_loss, EolProjection, PairBatch, VlmScorer,
};
use crate::schedule::HierSchedule;
use crate::store::{HierEmbedding, RawItem};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Also fit a matching scorer on final-level embeddings after the
    /// retrieval phase.
    pub train_vlm: bool,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::DegenerateBatch(self.batch_size));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Trained projections for both towers plus the per-epoch loss history.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub query_projs: Vec<EolProjection>,
    pub gallery_projs: Vec<EolProjection>,
    pub vlm: Option<VlmScorer>,
    /// Mean batch loss per epoch of the retrieval phase.
    pub history: Vec<f64>,
    /// Mean loss per epoch of the matching phase, when enabled.
    pub vlm_history: Vec<f64>,
}

fn init_projection(
    rng: &mut ChaCha12Rng,
    level: usize,
    d_in: usize,
    d_out: usize,
) -> EolProjection {
    let scale = 1.0 / (d_in as f64).sqrt();
    let weight = (0..d_out * d_in)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect();
    EolProjection::new(level, d_in, d_out, weight, vec![0.0; d_out]).expect("finite init")
}

/// Fit per-level projections for both towers by gradient descent on the
/// hierarchical retrieval loss over fixed consecutive batches.
pub fn train_eol(
    queries: &[RawItem],
    galleries: &[RawItem],
    schedule: &HierSchedule,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if queries.len() != galleries.len() {
        return Err(Error::ScheduleMismatch(format!(
            "{} queries vs {} galleries",
            queries.len(),
            galleries.len()
        )));
    }
    if queries.len() < cfg.batch_size {
        return Err(Error::InvalidConfig(format!(
            "dataset of {} pairs is smaller than batch size {}",
            queries.len(),
            cfg.batch_size
        )));
    }
    let d_raw = queries
        .first()
        .map(|q| q.raw.len())
        .ok_or(Error::EmptyInput)?;

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut projections: Vec<(EolProjection, EolProjection)> = schedule
        .dims()
        .iter()
        .enumerate()
        .map(|(l, &d)| {
            (
                init_projection(&mut rng, l, d_raw, d as usize),
                init_projection(&mut rng, l, d_raw, d as usize),
            )
        })
        .collect();

    // Fixed consecutive batches; a trailing batch below 2 pairs is dropped.
    let mut batches = Vec::new();
    let mut start = 0;
    while start + 1 < queries.len() {
        let end = (start + cfg.batch_size).min(queries.len());
        if end - start >= 2 {
            let q: Vec<Vec<f64>> = queries[start..end].iter().map(|r| r.raw_f64()).collect();
            let g: Vec<Vec<f64>> = galleries[start..end].iter().map(|r| r.raw_f64()).collect();
            batches.push(PairBatch::new(q, g)?);
        }
        start = end;
    }

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for batch in &batches {
            let (loss, grads) = hrl_loss(batch, &projections)?;
            if !loss.is_finite() {
                return Err(Error::DivergenceDetected(epoch));
            }
            epoch_loss += loss;
            for ((q, g), grad) in projections.iter_mut().zip(&grads) {
                q.step(&grad.query, cfg.learning_rate);
                g.step(&grad.gallery, cfg.learning_rate);
            }
        }
        history.push(epoch_loss / batches.len() as f64);
    }

    let (query_projs, gallery_projs): (Vec<_>, Vec<_>) = projections.into_iter().unzip();

    let mut vlm = None;
    let mut vlm_history = Vec::new();
    if cfg.train_vlm {
        let (scorer, hist) =
            train_vlm_phase(queries, galleries, &query_projs, &gallery_projs, schedule, cfg)?;
        vlm = Some(scorer);
        vlm_history = hist;
    }

    Ok(TrainedModel {
        query_projs,
        gallery_projs,
        vlm,
        history,
        vlm_history,
    })
}

/// Fit the matching scorer on frozen final-level embeddings. Each positive
/// (i, i) is paired with the in-batch negative (i, i+1 mod n).
fn train_vlm_phase(
    queries: &[RawItem],
    galleries: &[RawItem],
    query_projs: &[EolProjection],
    gallery_projs: &[EolProjection],
    schedule: &HierSchedule,
    cfg: &TrainConfig,
) -> Result<(VlmScorer, Vec<f64>)> {
    let top = schedule.levels() - 1;
    let n = queries.len();
    let q_top: Vec<Vec<f64>> = queries
        .iter()
        .map(|r| query_projs[top].project(&r.raw_f64()))
        .collect::<Result<_>>()?;
    let g_top: Vec<Vec<f64>> = galleries
        .iter()
        .map(|r| gallery_projs[top].project(&r.raw_f64()))
        .collect::<Result<_>>()?;

    let mut pairs = Vec::with_capacity(2 * n);
    for i in 0..n {
        pairs.push((q_top[i].clone(), g_top[i].clone(), 1.0));
        pairs.push((q_top[i].clone(), g_top[(i + 1) % n].clone(), 0.0));
    }

    let mut scorer = VlmScorer::zeros(schedule.top_dim());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (loss, grads) = vlm_loss(&scorer, &pairs)?;
        if !loss.is_finite() {
            return Err(Error::DivergenceDetected(epoch));
        }
        for (w, g) in scorer.weight.iter_mut().zip(&grads.weight) {
            *w -= cfg.learning_rate * g;
        }
        scorer.bias -= cfg.learning_rate * grads.bias;
        history.push(loss);
    }
    Ok((scorer, history))
}

/// Apply one tower's per-level projections to raw items, producing store
/// rows. Arithmetic in f64, persisted as f32.
pub fn encode_corpus(
    projections: &[EolProjection],
    items: &[RawItem],
    schedule: &HierSchedule,
) -> Result<Vec<HierEmbedding>> {
    if projections.len() != schedule.levels() {
        return Err(Error::ScheduleMismatch(format!(
            "{} projections for a {}-level schedule",
            projections.len(),
            schedule.levels()
        )));
    }
    for (l, p) in projections.iter().enumerate() {
        if p.d_out != schedule.dims()[l] as usize {
            return Err(Error::DimMismatch {
                level: l,
                expected: schedule.dims()[l] as usize,
                got: p.d_out,
            });
        }
    }
    items
        .iter()
        .map(|item| {
            let raw = item.raw_f64();
            let levels = projections
                .iter()
                .map(|p| {
                    p.project(&raw)
                        .map(|v| v.into_iter().map(|x| x as f32).collect())
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(HierEmbedding::new(item.id, levels))
        })
        .collect()
}
