//! Retrieval metrics: recall@K per direction and the average recall over
//! every reported value.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of queries whose ground-truth id appears in their top-k.
pub fn recall_at_k(
    rankings: &[(u64, Vec<u64>)],
    truth: &HashMap<u64, u64>,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if rankings.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut hits = 0usize;
    for (qid, ranked) in rankings {
        let target = truth.get(qid).ok_or(Error::MissingGroundTruth(*qid))?;
        if ranked.iter().take(k).any(|id| id == target) {
            hits += 1;
        }
    }
    Ok(hits as f64 / rankings.len() as f64)
}

/// Arithmetic mean of all reported recall values.
pub fn average_recall(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Per-direction recall table plus the mean over every entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    /// query -> gallery recalls, one per k.
    pub forward: Vec<f64>,
    /// gallery -> query recalls, when evaluated.
    pub backward: Option<Vec<f64>>,
    pub ar: f64,
}

impl EvalReport {
    pub fn new(ks: Vec<usize>, forward: Vec<f64>, backward: Option<Vec<f64>>) -> Result<Self> {
        let mut all = forward.clone();
        if let Some(b) = &backward {
            all.extend_from_slice(b);
        }
        let ar = average_recall(&all)?;
        Ok(Self {
            ks,
            forward,
            backward,
            ar,
        })
    }

    /// Flat `key = value` text.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, r) in self.ks.iter().zip(&self.forward) {
            out.push_str(&format!("forward_r_at_{} = {:.6}\n", k, r));
        }
        if let Some(b) = &self.backward {
            for (k, r) in self.ks.iter().zip(b) {
                out.push_str(&format!("backward_r_at_{} = {:.6}\n", k, r));
            }
        }
        out.push_str(&format!("ar = {:.6}\n", self.ar));
        out
    }

    /// One header row and one value row.
    pub fn to_csv(&self) -> String {
        let mut header = Vec::new();
        let mut row = Vec::new();
        for (k, r) in self.ks.iter().zip(&self.forward) {
            header.push(format!("forward_r_at_{}", k));
            row.push(format!("{:.6}", r));
        }
        if let Some(b) = &self.backward {
            for (k, r) in self.ks.iter().zip(b) {
                header.push(format!("backward_r_at_{}", k));
                row.push(format!("{:.6}", r));
            }
        }
        header.push("ar".into());
        row.push(format!("{:.6}", self.ar));
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}
