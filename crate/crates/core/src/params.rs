//! Persistence for trained parameters, reusing the gallery-store binary
//! format: one item whose level-l vector is the flattened (weight, bias)
//! of the level-l projection. The raw width is recorded in the header.

use std::path::Path;

use crate::error::{Error, Result};
use crate::objectives::{EolProjection, VlmScorer};
use crate::schedule::HierSchedule;
use crate::store::{GalleryStore, HierEmbedding};

/// Save one tower's projections; returns bytes written.
pub fn save_projections(projs: &[EolProjection], path: impl AsRef<Path>) -> Result<u64> {
    if projs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d_raw = projs[0].d_in;
    let dims: Vec<u32> = projs
        .iter()
        .map(|p| {
            if p.d_in != d_raw {
                return Err(Error::ScheduleMismatch(
                    "projections disagree on input width".into(),
                ));
            }
            Ok((p.d_out * d_raw + p.d_out) as u32)
        })
        .collect::<Result<_>>()?;
    let pools = vec![1u32; dims.len()];
    let schedule = HierSchedule::new(dims, pools)?;
    let levels = projs
        .iter()
        .map(|p| p.flat_params().into_iter().map(|x| x as f32).collect())
        .collect();
    let item = HierEmbedding::new(0, levels);
    let store = raw_width_store(schedule, d_raw as u32, vec![item])?;
    store.save(path)
}

pub fn load_projections(path: impl AsRef<Path>) -> Result<Vec<EolProjection>> {
    let store = GalleryStore::load(path)?;
    let d_raw = store.d_raw() as usize;
    if d_raw == 0 || store.len() != 1 {
        return Err(Error::ScheduleMismatch(
            "not a projection parameter file".into(),
        ));
    }
    store
        .schedule()
        .dims()
        .iter()
        .enumerate()
        .map(|(l, &flat_len)| {
            // flat_len = d_out * (d_raw + 1)
            let flat_len = flat_len as usize;
            if flat_len % (d_raw + 1) != 0 {
                return Err(Error::ScheduleMismatch(format!(
                    "level {} parameter block of {} does not factor over width {}",
                    l, flat_len, d_raw
                )));
            }
            let d_out = flat_len / (d_raw + 1);
            let flat: Vec<f64> = store
                .vector(0, l)?
                .iter()
                .map(|&x| f64::from(x))
                .collect();
            EolProjection::from_flat(l, d_raw, d_out, &flat)
        })
        .collect()
}

/// Save a matching scorer as a one-level parameter file `[W row-major.., b]`.
pub fn save_scorer(scorer: &VlmScorer, path: impl AsRef<Path>) -> Result<u64> {
    let schedule = HierSchedule::new(vec![(scorer.dim * scorer.dim + 1) as u32], vec![1])?;
    let mut flat: Vec<f32> = scorer.weight.iter().map(|&x| x as f32).collect();
    flat.push(scorer.bias as f32);
    let item = HierEmbedding::new(0, vec![flat]);
    let store = raw_width_store(schedule, scorer.dim as u32, vec![item])?;
    store.save(path)
}

pub fn load_scorer(path: impl AsRef<Path>) -> Result<VlmScorer> {
    let store = GalleryStore::load(path)?;
    let dim = store.d_raw() as usize;
    if dim == 0 || store.len() != 1 || store.schedule().levels() != 1 {
        return Err(Error::ScheduleMismatch("not a scorer parameter file".into()));
    }
    let flat = store.vector(0, 0)?;
    if flat.len() != dim * dim + 1 {
        return Err(Error::ScheduleMismatch(format!(
            "scorer block of {} does not match dim {}",
            flat.len(),
            dim
        )));
    }
    let weight: Vec<f64> = flat[..dim * dim].iter().map(|&x| f64::from(x)).collect();
    VlmScorer::new(dim, weight, f64::from(flat[dim * dim]))
}

fn raw_width_store(
    schedule: HierSchedule,
    d_raw: u32,
    items: Vec<HierEmbedding>,
) -> Result<GalleryStore> {
    GalleryStore::build_with_width(schedule, d_raw, items)
}
