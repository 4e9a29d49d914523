use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::autodiff::GradientSet;
use crate::error::{Result, SsbError};
use crate::io::FlatArray;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = SsbError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(SsbError::arg(format!("unknown optimizer {s}"))),
        }
    }
}

/// Learning rate multiplied by `factor` once `after_steps` updates are done.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub after_steps: u64,
    pub factor: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Global gradient-norm bound.
    pub clip: Option<f64>,
    pub decay: Option<StepDecay>,
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr,
            clip: None,
            decay: None,
        }
    }

    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            lr,
            clip: None,
            decay: None,
        }
    }

    pub fn with_clip(mut self, clip: f64) -> Self {
        self.clip = Some(clip);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(SsbError::arg(format!(
                "learning rate must be finite and >= 0, got {}",
                self.lr
            )));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(SsbError::arg(format!("clip must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut GradientSet, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
        // rounding can leave the result a few ulps above the bound
        while grads.global_norm() > max_norm {
            grads.scale(1.0 - f64::EPSILON);
        }
    }
    norm
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub step: u64,
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, params: &ParamStore) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Array2<f64>> = params.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect();
        Ok(Optimizer {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        })
    }

    pub fn lr(&self) -> f64 {
        match self.config.decay {
            Some(d) if self.step >= d.after_steps => self.config.lr * d.factor,
            _ => self.config.lr,
        }
    }

    /// One update; returns the gradient norm before clipping.
    pub fn update(&mut self, params: &mut ParamStore, grads: &mut GradientSet) -> Result<f64> {
        if grads.len() != params.len() {
            return Err(SsbError::shape(
                format!("{} gradients", params.len()),
                format!("{}", grads.len()),
            ));
        }
        params.mask_frozen(grads);
        let norm = match self.config.clip {
            Some(c) => clip_global_norm(grads, c),
            None => grads.global_norm(),
        };
        let lr = self.lr();
        self.step += 1;
        let t = self.step as i32;
        for (id, g) in grads.iter() {
            if g.dim() != params.value(id).dim() {
                return Err(SsbError::shape(
                    format!("{:?}", params.value(id).dim()),
                    format!("{:?}", g.dim()),
                ));
            }
            match self.config.kind {
                OptimizerKind::Sgd => params.value_mut(id).scaled_add(-lr, g),
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.m[id], &mut self.v[id]);
                    m.zip_mut_with(g, |m, &g| *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g);
                    v.zip_mut_with(g, |v, &g| *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g);
                    let c1 = 1.0 - ADAM_BETA1.powi(t);
                    let c2 = 1.0 - ADAM_BETA2.powi(t);
                    let w = params.value_mut(id);
                    ndarray::Zip::from(w).and(&*m).and(&*v).for_each(|w, &m, &v| {
                        *w -= lr * (m / c1) / ((v / c2).sqrt() + ADAM_EPS);
                    });
                }
            }
        }
        Ok(norm)
    }

    pub fn to_flat(&self, params: &ParamStore) -> Vec<FlatArray> {
        let mut out = Vec::new();
        for (p, (m, v)) in params.iter().zip(self.m.iter().zip(&self.v)) {
            out.push(FlatArray::from_array(format!("adam_m:{}", p.name), m));
            out.push(FlatArray::from_array(format!("adam_v:{}", p.name), v));
        }
        out.push(FlatArray::new("optimizer_step", vec![1], vec![self.step as f64]).expect("1 element"));
        out
    }

    pub fn load_flat(&mut self, params: &ParamStore, arrays: &[FlatArray]) -> Result<()> {
        for (i, p) in params.iter().enumerate() {
            self.m[i] = crate::io::find(arrays, &format!("adam_m:{}", p.name))?.to_array2()?;
            self.v[i] = crate::io::find(arrays, &format!("adam_v:{}", p.name))?.to_array2()?;
        }
        self.step = crate::io::find(arrays, "optimizer_step")?.data[0] as u64;
        Ok(())
    }
}
