//! Hierarchical coarse-to-fine embedding retrieval.
//!
//! Items carry a stack of embeddings of increasing dimension. Search scans
//! the whole gallery at the cheapest (lowest-dimension) level, then re-ranks
//! only the shrinking survivor pool at each finer level, optionally topping
//! it off with a learned matching re-rank. The crate also ships the
//! contrastive objectives that fit the per-level projections, an analytic
//! latency model for the pipelined cascade, a synthetic-data trainer, and
//! recall metrics.

pub mod cascade;
pub mod cost;
pub mod error;
pub mod eval;
pub mod objectives;
pub mod params;
pub mod schedule;
pub mod store;
pub mod synth;
pub mod train;

pub use cascade::{
    batch_search, brute_force_search, cascade_search, topk_level, CascadeConfig, CascadeTrace,
    LevelResult, QueryEmbedding,
};
pub use cost::{
    hierarchical_cost, simulate_pipeline, traditional_cost, CostParams, CostReport, PipelineSim,
    StageCost,
};
pub use error::{Error, Result};
pub use eval::{average_recall, recall_at_k, EvalReport};
pub use objectives::{
    finite_diff_grad, hrl_loss, in_batch_softmax, rel_err, retrieval_loss_level, similarity,
    softmax, vlm_loss, EolProjection, LabeledPair, LevelGrads, PairBatch, ProjGrad, VlmGrads,
    VlmScorer,
};
pub use params::{load_projections, load_scorer, save_projections, save_scorer};
pub use schedule::{HierSchedule, POOL_FULL};
pub use store::{GalleryStore, HierEmbedding, RawItem};
pub use synth::{generate_pairs, SynthConfig, SynthData};
pub use train::{encode_corpus, train_eol, TrainConfig, TrainedModel};
