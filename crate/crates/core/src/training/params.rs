use std::path::Path;

use ndarray::Array2;
use serde_json::Value;

use crate::autodiff::{GradientSet, Tape, Var};
use crate::error::{Result, SsbError};
use crate::io::{read_flat, write_flat, FlatArray};

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Array2<f64>,
    /// Columns held fixed during training (their gradient is zeroed).
    pub frozen_cols: Vec<usize>,
}

/// Named trainable matrices; a parameter's id is its insertion index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> usize {
        self.params.push(Param {
            name: name.into(),
            value,
            frozen_cols: Vec::new(),
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: usize) -> &Param {
        &self.params[id]
    }

    pub fn value(&self, id: usize) -> &Array2<f64> {
        &self.params[id].value
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Array2<f64> {
        &mut self.params[id].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.params
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| SsbError::arg(format!("no parameter named {name}")))
    }

    /// Zeroes column `col` of parameter `id` and keeps it there.
    pub fn freeze_column(&mut self, id: usize, col: usize) -> Result<()> {
        let p = &mut self.params[id];
        if col >= p.value.ncols() {
            return Err(SsbError::arg(format!("{} has no column {col}", p.name)));
        }
        p.value.column_mut(col).fill(0.0);
        if !p.frozen_cols.contains(&col) {
            p.frozen_cols.push(col);
        }
        Ok(())
    }

    /// Trainable real scalars.
    pub fn count_scalars(&self) -> usize {
        self.params
            .iter()
            .map(|p| p.value.len() - p.frozen_cols.len() * p.value.nrows())
            .sum()
    }

    /// Registers every parameter as a tape leaf, in id order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| tape.param(i, p.value.clone()))
            .collect()
    }

    /// Zeroes gradient entries of frozen columns.
    pub fn mask_frozen(&self, grads: &mut GradientSet) {
        for (id, g) in grads.iter_mut() {
            for &c in &self.params[id].frozen_cols {
                g.column_mut(c).fill(0.0);
            }
        }
    }

    pub fn to_flat(&self, prefix: &str) -> Vec<FlatArray> {
        self.params
            .iter()
            .map(|p| FlatArray::from_array(format!("{prefix}{}", p.name), &p.value))
            .collect()
    }

    /// Overwrites values from arrays named `prefix + name`; shapes must match.
    pub fn load_flat(&mut self, arrays: &[FlatArray], prefix: &str) -> Result<()> {
        for p in &mut self.params {
            let name = format!("{prefix}{}", p.name);
            let a = crate::io::find(arrays, &name)?.to_array2()?;
            if a.dim() != p.value.dim() {
                return Err(SsbError::shape(
                    format!("{name} {:?}", p.value.dim()),
                    format!("{:?}", a.dim()),
                ));
            }
            p.value = a;
        }
        Ok(())
    }

    pub fn save(&self, stem: &Path, meta: Value) -> Result<()> {
        write_flat(stem, meta, &self.to_flat(""))
    }

    /// Loads values into an already-shaped store; returns the header meta.
    pub fn load(&mut self, stem: &Path) -> Result<Value> {
        let (meta, arrays) = read_flat(stem)?;
        if arrays.len() != self.params.len() {
            return Err(SsbError::shape(
                format!("{} parameter arrays", self.params.len()),
                format!("{}", arrays.len()),
            ));
        }
        self.load_flat(&arrays, "")?;
        Ok(meta)
    }
}
