//! Synthetic paired data: each (query, gallery) pair is two noisy linear
//! views of a shared latent factor. Fully determined by the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::store::RawItem;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub pairs: usize,
    pub d_raw: usize,
    pub latent: usize,
    /// Additive noise scale sigma >= 0.
    pub noise: f64,
    pub seed: u64,
    /// Share one view matrix across both sides; with sigma = 0 this makes
    /// query_i and gallery_i identical.
    pub identical_views: bool,
    /// Extra unpaired gallery-only items drawn from fresh latents.
    pub distractors: usize,
    /// Scale every raw vector to unit L2 norm (after noise), so dot-product
    /// ranking is not skewed by norm spread.
    pub normalize: bool,
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.pairs == 0 || self.d_raw == 0 || self.latent == 0 {
            return Err(Error::InvalidConfig(
                "pairs, d_raw and latent must be positive".into(),
            ));
        }
        if self.noise < 0.0 || !self.noise.is_finite() {
            return Err(Error::InvalidConfig("noise must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// A generated dataset: aligned query/gallery raw items plus the diagonal
/// ground truth. Gallery ids beyond `truth` are distractors.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub queries: Vec<RawItem>,
    pub galleries: Vec<RawItem>,
    /// (query id, matching gallery id) per pair.
    pub truth: Vec<(u64, u64)>,
}

fn random_matrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Vec<f64> {
    let scale = 1.0 / (cols as f64).sqrt();
    (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect()
}

fn view(matrix: &[f64], d_raw: usize, latent: usize, z: &[f64]) -> Vec<f64> {
    (0..d_raw)
        .map(|r| {
            let row = &matrix[r * latent..(r + 1) * latent];
            row.iter().zip(z).map(|(a, b)| a * b).sum()
        })
        .collect()
}

pub fn generate_pairs(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let view_q = random_matrix(&mut rng, cfg.d_raw, cfg.latent);
    let view_g = if cfg.identical_views {
        view_q.clone()
    } else {
        random_matrix(&mut rng, cfg.d_raw, cfg.latent)
    };

    let sample = |rng: &mut ChaCha12Rng, matrix: &[f64], z: &[f64]| -> Vec<f32> {
        let mut v = view(matrix, cfg.d_raw, cfg.latent, z);
        for x in v.iter_mut() {
            *x += cfg.noise * rng.sample::<f64, _>(StandardNormal);
        }
        if cfg.normalize {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in v.iter_mut() {
                    *x /= norm;
                }
            }
        }
        v.into_iter().map(|x| x as f32).collect()
    };

    let mut queries = Vec::with_capacity(cfg.pairs);
    let mut galleries = Vec::with_capacity(cfg.pairs + cfg.distractors);
    let mut truth = Vec::with_capacity(cfg.pairs);
    for i in 0..cfg.pairs {
        let z: Vec<f64> = (0..cfg.latent)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let id = i as u64;
        queries.push(RawItem::new(id, sample(&mut rng, &view_q, &z)));
        galleries.push(RawItem::new(id, sample(&mut rng, &view_g, &z)));
        truth.push((id, id));
    }
    for i in 0..cfg.distractors {
        let z: Vec<f64> = (0..cfg.latent)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let id = (cfg.pairs + i) as u64;
        galleries.push(RawItem::new(id, sample(&mut rng, &view_g, &z)));
    }
    Ok(SynthData {
        queries,
        galleries,
        truth,
    })
}
