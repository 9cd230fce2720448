//! Analytic retrieval-time model: single-stage full-dimension scan versus
//! the pipelined cascade, plus a two-lane discrete-event simulator for the
//! encode/search overlap.
//!
//! All totals are exact integer arithmetic in abstract time units (one
//! multiply-accumulate = `unit_mul`, one encoder layer = `t_e`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{HierSchedule, POOL_FULL};

/// Inputs of the analytic model. Candidate counts here are literal (a zero
/// means an empty level), unlike the search-side pool token.
#[derive(Debug, Clone)]
pub struct CostParams {
    /// Encoding time of one transformer layer.
    pub t_e: u64,
    /// Total encoder depth for the single-stage baseline.
    pub encoder_layers: u32,
    /// Cost of one multiply-accumulate.
    pub unit_mul: u64,
    /// Gallery size N.
    pub gallery_size: u64,
    /// Per-level embedding dimensions d_l, coarsest first.
    pub dims: Vec<u32>,
    /// Per-level candidate counts N_l.
    pub level_candidates: Vec<u64>,
    /// Encoder layers between consecutive early outputs.
    pub chunk_layers: u32,
}

impl CostParams {
    pub fn new(
        t_e: u64,
        encoder_layers: u32,
        unit_mul: u64,
        gallery_size: u64,
        dims: Vec<u32>,
        level_candidates: Vec<u64>,
        chunk_layers: u32,
    ) -> Result<Self> {
        if encoder_layers == 0 || unit_mul == 0 || chunk_layers == 0 {
            return Err(Error::InvalidConfig(
                "encoder_layers, unit_mul and chunk_layers must be positive".into(),
            ));
        }
        if dims.is_empty() || dims.len() != level_candidates.len() {
            return Err(Error::InvalidConfig(
                "need matching non-empty dims and candidate counts".into(),
            ));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig("zero dimension".into()));
        }
        let levels = dims.len() as u64;
        if u64::from(chunk_layers) * levels > u64::from(encoder_layers) + u64::from(chunk_layers) {
            return Err(Error::InvalidConfig(format!(
                "{} chunks of {} layers do not fit a {}-layer encoder",
                levels, chunk_layers, encoder_layers
            )));
        }
        Ok(Self {
            t_e,
            encoder_layers,
            unit_mul,
            gallery_size,
            dims,
            level_candidates,
            chunk_layers,
        })
    }

    /// Build from a search schedule; the full-pool token resolves to N.
    pub fn from_schedule(
        t_e: u64,
        encoder_layers: u32,
        unit_mul: u64,
        gallery_size: u64,
        schedule: &HierSchedule,
        chunk_layers: u32,
    ) -> Result<Self> {
        let candidates = schedule
            .pools()
            .iter()
            .map(|&p| {
                if p == POOL_FULL {
                    gallery_size
                } else {
                    u64::from(p)
                }
            })
            .collect();
        Self::new(
            t_e,
            encoder_layers,
            unit_mul,
            gallery_size,
            schedule.dims().to_vec(),
            candidates,
            chunk_layers,
        )
    }

    pub fn levels(&self) -> usize {
        self.dims.len()
    }

    fn chunk(&self) -> u128 {
        u128::from(self.chunk_layers) * u128::from(self.t_e)
    }

    /// Per-level search cost N_l * d_l * unit_mul.
    pub fn search_costs(&self) -> Vec<u128> {
        self.level_candidates
            .iter()
            .zip(&self.dims)
            .map(|(&n, &d)| u128::from(n) * u128::from(d) * u128::from(self.unit_mul))
            .collect()
    }

    /// Per-chunk encode cost, one chunk per level.
    pub fn encode_costs(&self) -> Vec<u128> {
        vec![self.chunk(); self.levels()]
    }
}

/// One overlap window of the hierarchical schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageCost {
    pub level: usize,
    pub encode: u128,
    pub search: u128,
    /// Which side of the max dominated the window.
    pub dominated_by_encode: bool,
    pub window: u128,
}

/// Output of the analytic model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostReport {
    pub traditional: u128,
    pub hierarchical: u128,
    pub speedup: f64,
    /// First encode chunk (nothing to overlap with yet).
    pub lead_in: u128,
    /// Overlap windows for levels 1..L-1.
    pub stages: Vec<StageCost>,
    /// Final search, un-overlapped.
    pub final_search: u128,
}

impl CostReport {
    /// Flat `key = value` rendering for the CLI.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("traditional = {}\n", self.traditional));
        out.push_str(&format!("hierarchical = {}\n", self.hierarchical));
        out.push_str(&format!("speedup = {:.3}\n", self.speedup));
        out.push_str(&format!("lead_in_encode = {}\n", self.lead_in));
        for s in &self.stages {
            out.push_str(&format!(
                "stage_{}_window = {} (encode {}, search {}, {} bound)\n",
                s.level + 1,
                s.window,
                s.encode,
                s.search,
                if s.dominated_by_encode { "encode" } else { "search" }
            ));
        }
        out.push_str(&format!("final_search = {}\n", self.final_search));
        out
    }
}

/// Single-stage baseline: full encode, then a full-gallery scan at the
/// final dimension. `encoder_layers * t_e + N * d_L * unit_mul`.
pub fn traditional_cost(p: &CostParams) -> u128 {
    u128::from(p.encoder_layers) * u128::from(p.t_e)
        + u128::from(p.gallery_size)
            * u128::from(*p.dims.last().expect("non-empty"))
            * u128::from(p.unit_mul)
}

/// Pipelined hierarchical total:
/// `chunk + sum_{l<L} max(chunk, N_l d_l) + N_L d_L`.
pub fn hierarchical_cost(p: &CostParams) -> CostReport {
    let search = p.search_costs();
    let chunk = p.chunk();
    let levels = p.levels();

    let mut total = chunk;
    let mut stages = Vec::with_capacity(levels.saturating_sub(1));
    for (l, &s) in search.iter().take(levels - 1).enumerate() {
        let window = chunk.max(s);
        stages.push(StageCost {
            level: l,
            encode: chunk,
            search: s,
            dominated_by_encode: chunk >= s,
            window,
        });
        total += window;
    }
    let final_search = search[levels - 1];
    total += final_search;

    let traditional = traditional_cost(p);
    CostReport {
        traditional,
        hierarchical: total,
        speedup: traditional as f64 / total as f64,
        lead_in: chunk,
        stages,
        final_search,
    }
}

/// Result of the discrete-event pipeline simulation.
#[derive(Debug, Clone)]
pub struct PipelineSim {
    pub makespan: u128,
    /// One entry per window: true when the encode lane dominated it.
    pub critical_path: Vec<bool>,
}

/// Two-lane discrete-event schedule: within window l the encode of chunk
/// l+1 runs concurrently with the search at level l; a window opens when
/// the previous one fully closes. Fed the analytic stage durations this
/// reproduces `hierarchical_cost` exactly.
pub fn simulate_pipeline(encode: &[u128], search: &[u128]) -> Result<PipelineSim> {
    if encode.len() != search.len() {
        return Err(Error::ScheduleMismatch(format!(
            "{} encode chunks vs {} search stages",
            encode.len(),
            search.len()
        )));
    }
    if encode.is_empty() {
        return Err(Error::EmptyInput);
    }
    let levels = encode.len();
    let mut clock: u128 = encode[0];
    let mut critical_path = vec![true]; // lead-in is encode by definition
    for l in 0..levels - 1 {
        let encode_lane = encode[l + 1];
        let search_lane = search[l];
        clock += encode_lane.max(search_lane);
        critical_path.push(encode_lane >= search_lane);
    }
    clock += search[levels - 1];
    critical_path.push(false); // final search has no overlap partner
    Ok(PipelineSim {
        makespan: clock,
        critical_path,
    })
}
