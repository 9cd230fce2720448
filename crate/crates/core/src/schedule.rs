//! The cascade contract: how many levels, which dimension and which pool
//! size at each level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pool token meaning "the entire current candidate pool". At the coarsest
/// level this is a full gallery scan.
pub const POOL_FULL: u32 = 0;

/// Per-level dimensions and pool sizes of a coarse-to-fine cascade.
///
/// Dimensions are strictly increasing level by level; pool sizes shrink
/// (or stay equal) so each finer level scores fewer candidates at a higher
/// dimension. Pool entries may be [`POOL_FULL`] to mean "no pruning here".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierSchedule {
    dims: Vec<u32>,
    pools: Vec<u32>,
}

impl HierSchedule {
    pub fn new(dims: Vec<u32>, pools: Vec<u32>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidSchedule("need at least one level".into()));
        }
        if dims.len() != pools.len() {
            return Err(Error::InvalidSchedule(format!(
                "dims has {} levels but pools has {}",
                dims.len(),
                pools.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidSchedule("zero dimension".into()));
        }
        for w in dims.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidSchedule(format!(
                    "dims must be strictly increasing, got {} before {}",
                    w[0], w[1]
                )));
            }
        }
        // POOL_FULL sorts as "unbounded" for the monotonicity check.
        let eff = |p: u32| if p == POOL_FULL { u64::MAX } else { u64::from(p) };
        for w in pools.windows(2) {
            if eff(w[0]) < eff(w[1]) {
                return Err(Error::InvalidSchedule(format!(
                    "pools must be non-increasing, got {} before {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { dims, pools })
    }

    /// One-level schedule; used for raw-feature stores and parameter files.
    pub fn flat(dim: u32) -> Self {
        Self {
            dims: vec![dim],
            pools: vec![1],
        }
    }

    pub fn levels(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    pub fn pools(&self) -> &[u32] {
        &self.pools
    }

    pub fn dim(&self, level: usize) -> Result<usize> {
        self.dims
            .get(level)
            .map(|&d| d as usize)
            .ok_or(Error::LevelOutOfRange {
                level,
                levels: self.levels(),
            })
    }

    /// Final-level dimension.
    pub fn top_dim(&self) -> usize {
        *self.dims.last().expect("non-empty") as usize
    }

    /// Effective pool size at `level` given the current candidate count:
    /// [`POOL_FULL`] means the whole pool, anything else is clamped to it.
    pub fn pool_at(&self, level: usize, current: usize) -> Result<usize> {
        let p = *self.pools.get(level).ok_or(Error::LevelOutOfRange {
            level,
            levels: self.levels(),
        })?;
        Ok(if p == POOL_FULL {
            current
        } else {
            (p as usize).min(current)
        })
    }
}
