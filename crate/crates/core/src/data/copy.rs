//! Variable-delay copy task.

use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Result, SsbError};
use crate::io::{write_flat, FlatArray};
use crate::num::RngStream;

pub const SEQ_LEN: usize = 10;
pub const N_SYMBOLS: usize = 8;
pub const BLANK: usize = 0;
pub const GO: usize = 9;
pub const TOKEN_DIM: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopyTaskConfig {
    pub t_max: usize,
    pub batch_size: usize,
}

impl CopyTaskConfig {
    pub fn new(t_max: usize, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(SsbError::arg("batch size must be positive"));
        }
        Ok(CopyTaskConfig { t_max, batch_size })
    }

    /// Data, longest delay, go token, recall.
    pub fn time_steps(&self) -> usize {
        2 * SEQ_LEN + self.t_max + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskBatch {
    /// One-hot tokens, `batch x time x TOKEN_DIM`.
    pub inputs: Array3<f64>,
    /// Class index per position, `batch x time`.
    pub targets: Array2<usize>,
    /// Recall positions, `batch x time`.
    pub mask: Array2<bool>,
    pub delays: Vec<usize>,
}

impl TaskBatch {
    pub fn batch(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn time_steps(&self) -> usize {
        self.inputs.shape()[1]
    }

    /// Inputs at step `t`, `batch x TOKEN_DIM`.
    pub fn input_at(&self, t: usize) -> Array2<f64> {
        self.inputs.index_axis(ndarray::Axis(1), t).to_owned()
    }

    pub fn targets_at(&self, t: usize) -> Vec<usize> {
        self.targets.column(t).to_vec()
    }

    pub fn export(&self, stem: &Path, cfg: &CopyTaskConfig) -> Result<()> {
        let shape = self.targets.dim();
        let arrays = [
            FlatArray::from_array("inputs", &self.inputs),
            FlatArray::new(
                "targets",
                vec![shape.0, shape.1],
                self.targets.iter().map(|&v| v as f64).collect(),
            )?,
            FlatArray::new(
                "mask",
                vec![shape.0, shape.1],
                self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
            )?,
            FlatArray::new(
                "delays",
                vec![self.delays.len()],
                self.delays.iter().map(|&d| d as f64).collect(),
            )?,
        ];
        write_flat(stem, json!({ "task": "copy", "config": cfg }), &arrays)
    }
}

/// Draws one batch. Delays are uniform on `0..=t_max`, data symbols uniform
/// on `1..=N_SYMBOLS`; padding after recall is blank in and out.
pub fn gen_copy_batch(cfg: &CopyTaskConfig, rng: &mut RngStream) -> TaskBatch {
    let (b, t_len) = (cfg.batch_size, cfg.time_steps());
    let mut inputs = Array3::zeros((b, t_len, TOKEN_DIM));
    let mut targets = Array2::from_elem((b, t_len), BLANK);
    let mut mask = Array2::from_elem((b, t_len), false);
    let mut delays = Vec::with_capacity(b);
    for i in 0..b {
        let symbols: Vec<usize> = (0..SEQ_LEN).map(|_| 1 + rng.below(N_SYMBOLS)).collect();
        let delay = rng.below(cfg.t_max + 1);
        let go = SEQ_LEN + delay;
        for t in 0..t_len {
            inputs[[i, t, BLANK]] = 1.0;
        }
        for (t, &s) in symbols.iter().enumerate() {
            inputs[[i, t, BLANK]] = 0.0;
            inputs[[i, t, s]] = 1.0;
            targets[[i, go + 1 + t]] = s;
            mask[[i, go + 1 + t]] = true;
        }
        inputs[[i, go, BLANK]] = 0.0;
        inputs[[i, go, GO]] = 1.0;
        delays.push(delay);
    }
    TaskBatch {
        inputs,
        targets,
        mask,
        delays,
    }
}

/// Full-sequence cross-entropy of a model that sees the go token but keeps
/// no memory: certain of blank off-recall, uniform over symbols on recall.
pub fn chance_sequence_loss(cfg: &CopyTaskConfig) -> f64 {
    SEQ_LEN as f64 * (N_SYMBOLS as f64).ln() / cfg.time_steps() as f64
}

/// The same memoryless model scored on recall positions only.
pub fn chance_recall_loss() -> f64 {
    (N_SYMBOLS as f64).ln()
}
