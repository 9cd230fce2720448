//! Hierarchical embeddings, the immutable gallery store, and its binary
//! on-disk format.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "HVLP" | version u32 | L u32 | item count u64 | d_raw u32
//! | dims L x u32 | pools L x u32 | id table count x u64
//! | payload: per-level blocks (level order, item order, f32)
//! | CRC-64 u64 over everything before it
//! ```
//!
//! Payload blocks are contiguous per level so a cascade level scans one flat
//! slice across all items.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crc::{Crc, CRC_64_XZ};

use crate::error::{Error, Result};
use crate::schedule::HierSchedule;

pub const STORE_MAGIC: [u8; 4] = *b"HVLP";
pub const STORE_VERSION: u32 = 1;

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

/// One item's stack of vectors, coarsest (shortest) first.
#[derive(Debug, Clone, PartialEq)]
pub struct HierEmbedding {
    pub id: u64,
    pub levels: Vec<Vec<f32>>,
}

impl HierEmbedding {
    pub fn new(id: u64, levels: Vec<Vec<f32>>) -> Self {
        Self { id, levels }
    }
}

/// A raw feature vector, the input an early-output projection consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct RawItem {
    pub id: u64,
    pub raw: Vec<f32>,
}

impl RawItem {
    pub fn new(id: u64, raw: Vec<f32>) -> Self {
        Self { id, raw }
    }

    pub fn raw_f64(&self) -> Vec<f64> {
        self.raw.iter().map(|&x| f64::from(x)).collect()
    }
}

/// Immutable collection of hierarchical embeddings, one contiguous block
/// per level. Sealed at build/load time; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct GalleryStore {
    schedule: HierSchedule,
    d_raw: u32,
    ids: Vec<u64>,
    id_index: HashMap<u64, usize>,
    blocks: Vec<Vec<f32>>,
}

impl GalleryStore {
    /// Build a sealed store. Iteration order equals insertion order.
    pub fn build(schedule: HierSchedule, items: Vec<HierEmbedding>) -> Result<Self> {
        Self::build_inner(schedule, 0, items)
    }

    /// Build a one-level store of raw feature vectors, recording their width.
    pub fn build_raw(d_raw: u32, items: Vec<RawItem>) -> Result<Self> {
        let schedule = HierSchedule::flat(d_raw);
        let items = items
            .into_iter()
            .map(|r| HierEmbedding::new(r.id, vec![r.raw]))
            .collect();
        Self::build_inner(schedule, d_raw, items)
    }

    /// Build with an explicit recorded raw width on any schedule; used for
    /// parameter files.
    pub(crate) fn build_with_width(
        schedule: HierSchedule,
        d_raw: u32,
        items: Vec<HierEmbedding>,
    ) -> Result<Self> {
        Self::build_inner(schedule, d_raw, items)
    }

    fn build_inner(
        schedule: HierSchedule,
        d_raw: u32,
        items: Vec<HierEmbedding>,
    ) -> Result<Self> {
        let levels = schedule.levels();
        let mut ids = Vec::with_capacity(items.len());
        let mut id_index = HashMap::with_capacity(items.len());
        let mut blocks: Vec<Vec<f32>> = (0..levels)
            .map(|l| Vec::with_capacity(items.len() * schedule.dims()[l] as usize))
            .collect();

        for item in &items {
            if item.levels.len() != levels {
                return Err(Error::ScheduleMismatch(format!(
                    "item {} has {} levels, schedule has {}",
                    item.id,
                    item.levels.len(),
                    levels
                )));
            }
            for (l, vec) in item.levels.iter().enumerate() {
                let expected = schedule.dims()[l] as usize;
                if vec.len() != expected {
                    return Err(Error::DimMismatch {
                        level: l,
                        expected,
                        got: vec.len(),
                    });
                }
                if vec.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite {
                        id: item.id,
                        level: l,
                    });
                }
            }
            if id_index.insert(item.id, ids.len()).is_some() {
                return Err(Error::DuplicateId(item.id));
            }
            ids.push(item.id);
            for (l, vec) in item.levels.iter().enumerate() {
                blocks[l].extend_from_slice(vec);
            }
        }

        Ok(Self {
            schedule,
            d_raw,
            ids,
            id_index,
            blocks,
        })
    }

    pub fn schedule(&self) -> &HierSchedule {
        &self.schedule
    }

    /// Raw feature width recorded at build time; 0 when absent.
    pub fn d_raw(&self) -> u32 {
        self.d_raw
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn position(&self, id: u64) -> Option<usize> {
        self.id_index.get(&id).copied()
    }

    /// Whole per-level block, item order, row-major.
    pub fn level_block(&self, level: usize) -> Result<&[f32]> {
        self.blocks
            .get(level)
            .map(|b| b.as_slice())
            .ok_or(Error::LevelOutOfRange {
                level,
                levels: self.schedule.levels(),
            })
    }

    /// Level-`level` vector of the item at `pos` (insertion order).
    pub fn vector(&self, pos: usize, level: usize) -> Result<&[f32]> {
        if pos >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: pos,
                len: self.len(),
            });
        }
        let d = self.schedule.dim(level)?;
        Ok(&self.blocks[level][pos * d..(pos + 1) * d])
    }

    pub fn vector_by_id(&self, id: u64, level: usize) -> Result<&[f32]> {
        let pos = self.position(id).ok_or(Error::UnknownId(id))?;
        self.vector(pos, level)
    }

    /// Reconstruct the item at `pos`.
    pub fn item(&self, pos: usize) -> Result<HierEmbedding> {
        let levels = (0..self.schedule.levels())
            .map(|l| self.vector(pos, l).map(|v| v.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(HierEmbedding::new(self.ids[pos], levels))
    }

    /// View a one-level store back as raw items.
    pub fn raw_items(&self) -> Result<Vec<RawItem>> {
        if self.schedule.levels() != 1 {
            return Err(Error::ScheduleMismatch(
                "raw stores have exactly one level".into(),
            ));
        }
        (0..self.len())
            .map(|pos| {
                self.vector(pos, 0)
                    .map(|v| RawItem::new(self.ids[pos], v.to_vec()))
            })
            .collect()
    }

    /// Serialize to `path`; returns total bytes written.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<u64> {
        let bytes = self.to_bytes();
        fs::write(path, &bytes)?;
        Ok(bytes.len() as u64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let levels = self.schedule.levels();
        let payload: usize = self
            .blocks
            .iter()
            .map(|b| b.len() * std::mem::size_of::<f32>())
            .sum();
        let header = 4 + 4 + 4 + 8 + 4 + 8 * levels + 8 * self.len();
        let mut buf = Vec::with_capacity(header + payload + 8);

        buf.extend_from_slice(&STORE_MAGIC);
        buf.extend_from_slice(&STORE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(levels as u32).to_le_bytes());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        buf.extend_from_slice(&self.d_raw.to_le_bytes());
        for &d in self.schedule.dims() {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for &p in self.schedule.pools() {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        for &id in &self.ids {
            buf.extend_from_slice(&id.to_le_bytes());
        }
        for block in &self.blocks {
            for &x in block {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        let checksum = CRC64.checksum(&buf);
        buf.extend_from_slice(&checksum.to_le_bytes());
        buf
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != STORE_MAGIC {
            return Err(Error::BadMagic);
        }
        let version = r.u32()?;
        if version != STORE_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let levels = r.u32()? as usize;
        let count = r.u64()? as usize;
        let d_raw = r.u32()?;
        // Validate lengths implied by the header before allocating anything
        // sized by them, so a corrupt header cannot demand absurd memory.
        if (levels as u128) * 8 > r.remaining() as u128 {
            return Err(Error::TruncatedFile);
        }
        let dims = (0..levels).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let pools = (0..levels).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let schedule = HierSchedule::new(dims, pools)?;
        let row_bytes: u128 = schedule
            .dims()
            .iter()
            .map(|&d| 4 * u128::from(d))
            .sum::<u128>()
            + 8;
        if (count as u128) * row_bytes + 8 != r.remaining() as u128 {
            return Err(Error::TruncatedFile);
        }
        let ids = (0..count).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let mut blocks = Vec::with_capacity(levels);
        for l in 0..levels {
            let n = count * schedule.dims()[l] as usize;
            let mut block = Vec::with_capacity(n);
            for _ in 0..n {
                block.push(r.f32()?);
            }
            blocks.push(block);
        }
        let body_len = r.offset();
        let stored = r.u64()?;
        if r.remaining() != 0 {
            return Err(Error::TruncatedFile); // trailing garbage
        }
        if CRC64.checksum(&bytes[..body_len]) != stored {
            return Err(Error::ChecksumMismatch);
        }

        let mut id_index = HashMap::with_capacity(count);
        for (pos, &id) in ids.iter().enumerate() {
            if id_index.insert(id, pos).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Self {
            schedule,
            d_raw,
            ids,
            id_index,
            blocks,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::TruncatedFile);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn offset(&self) -> usize {
        self.pos
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}
