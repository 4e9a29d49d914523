//! Pixel-by-pixel sequence datasets under one fixed permutation.

use ndarray::Array2;

use super::idx::IdxDataset;
use crate::error::{Result, SsbError};
use crate::num::RngStream;

pub const VALIDATION_SIZE: usize = 3000;

/// One scalar input per timestep; row `i` is example `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqDataset {
    pub inputs: Array2<f64>,
    pub labels: Vec<u8>,
}

impl SeqDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.inputs.ncols()
    }
}

/// A uniformly random permutation of `0..n`, or the identity for `None`.
pub fn pixel_permutation(n: usize, seed: Option<u64>) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    if let Some(seed) = seed {
        RngStream::new(seed).shuffle(&mut perm);
    }
    perm
}

/// Step `t` of example `i` is pixel `perm[t]` of image `i`.
pub fn sequentialize(ds: &IdxDataset, perm: &[usize]) -> Result<SeqDataset> {
    let p = ds.pixels();
    if perm.len() != p {
        return Err(SsbError::shape(
            format!("permutation of {p}"),
            format!("{}", perm.len()),
        ));
    }
    let mut seen = vec![false; p];
    for &j in perm {
        if j >= p || std::mem::replace(&mut seen[j], true) {
            return Err(SsbError::arg("pixel order is not a permutation"));
        }
    }
    let mut inputs = Array2::zeros((ds.count, p));
    for (i, mut row) in inputs.outer_iter_mut().enumerate() {
        let img = ds.image(i);
        for (t, &j) in perm.iter().enumerate() {
            row[t] = img[j] as f64 * ds.scale;
        }
    }
    Ok(SeqDataset {
        inputs,
        labels: ds.labels.clone(),
    })
}

#[derive(Clone, Debug)]
pub struct SeqSplits {
    pub train: SeqDataset,
    pub val: SeqDataset,
    pub test: SeqDataset,
    pub permutation: Vec<usize>,
}

/// Holds out `n_val` random training examples and applies one permutation
/// (from `perm_seed`) to every split.
pub fn sequential_splits(
    train: &IdxDataset,
    test: &IdxDataset,
    perm_seed: Option<u64>,
    n_val: usize,
    split_seed: u64,
) -> Result<SeqSplits> {
    if n_val >= train.count {
        return Err(SsbError::arg(format!(
            "validation size {n_val} must be below training size {}",
            train.count
        )));
    }
    let mut order: Vec<usize> = (0..train.count).collect();
    RngStream::new(split_seed).shuffle(&mut order);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    train_idx.sort_unstable();
    let mut val_idx = val_idx.to_vec();
    val_idx.sort_unstable();
    let permutation = pixel_permutation(train.pixels(), perm_seed);
    Ok(SeqSplits {
        train: sequentialize(&train.subset(&train_idx), &permutation)?,
        val: sequentialize(&train.subset(&val_idx), &permutation)?,
        test: sequentialize(test, &permutation)?,
        permutation,
    })
}
