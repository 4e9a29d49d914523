//! Forward definitions of the internal layer families.
//!
//! A layer maps `z ↦ W φ(z)`: the radial nonlinearity `φ` first, then a
//! linear map whose structure depends on the family. U(1) and SO(2) layers
//! are complex matrices acting on `k = 2` capsules, O(k) layers are real
//! `N×N` matrices acting as `A ⊗ I_k`, and generic layers are unconstrained
//! real matrices on all `N·k` coordinates.

mod group;
mod radial;
mod state;
mod weights;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use group::{group_act, GroupElement};
pub use radial::{radial_gain, radial_gain_deriv_times_r, radial_nonlinearity, DEFAULT_EPS};
pub use state::CapsuleState;
pub use weights::{
    apply_layer, apply_layer_eps, init_weights, EquivariantWeights, Family, InitScheme, So2Pair,
};

pub(crate) use radial::{radial_backward, radial_forward};
pub(crate) use state::capsule_norms;
pub(crate) use weights::{block_matmul, complex_matmul};

use crate::error::{Result, SsbError};
use crate::io::{find, read_flat, write_flat, FlatArray};
use crate::num::RngStream;

/// A bias-free stack of internal layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<EquivariantWeights>,
    n_capsules: usize,
    capsule_dim: usize,
    eps: f64,
}

impl Network {
    pub fn new(layers: Vec<EquivariantWeights>, n_capsules: usize, capsule_dim: usize) -> Result<Self> {
        for (i, w) in layers.iter().enumerate() {
            if w.n_capsules() != n_capsules || w.capsule_dim() != capsule_dim {
                return Err(SsbError::shape(
                    format!("N={n_capsules} k={capsule_dim}"),
                    format!("layer {i}: N={} k={}", w.n_capsules(), w.capsule_dim()),
                ));
            }
        }
        Ok(Network {
            layers,
            n_capsules,
            capsule_dim,
            eps: DEFAULT_EPS,
        })
    }

    /// `depth` independently drawn layers.
    pub fn random(
        family: Family,
        n_capsules: usize,
        capsule_dim: usize,
        depth: usize,
        sigma_w: f64,
        scheme: InitScheme,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let layers = (0..depth)
            .map(|_| init_weights(family, n_capsules, capsule_dim, sigma_w, scheme, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers, n_capsules, capsule_dim)
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn layers(&self) -> &[EquivariantWeights] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn n_capsules(&self) -> usize {
        self.n_capsules
    }

    pub fn capsule_dim(&self) -> usize {
        self.capsule_dim
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn family(&self) -> Option<Family> {
        self.layers.first().map(EquivariantWeights::family)
    }

    pub fn is_equivariant(&self) -> bool {
        self.layers.iter().all(|w| w.family().is_equivariant())
    }

    pub fn forward(&self, z0: &CapsuleState) -> Result<CapsuleState> {
        let mut z = z0.clone();
        for w in &self.layers {
            z = apply_layer_eps(w, &z, self.eps)?;
        }
        Ok(z)
    }

    /// Pre-activations `z⁰, z¹, …, zᴸ`.
    pub fn trace(&self, z0: &CapsuleState) -> Result<Vec<CapsuleState>> {
        let mut out = Vec::with_capacity(self.layers.len() + 1);
        out.push(z0.clone());
        for w in &self.layers {
            let next = apply_layer_eps(w, out.last().expect("non-empty"), self.eps)?;
            out.push(next);
        }
        Ok(out)
    }
}

/// Provenance stored alongside serialized weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightMeta {
    pub family: Family,
    pub n_capsules: usize,
    pub capsule_dim: usize,
    pub scheme: InitScheme,
    pub sigma_w: f64,
    pub seed: u64,
}

pub fn save_weights(stem: &Path, w: &EquivariantWeights, meta: &WeightMeta) -> Result<()> {
    let arrays = match w {
        EquivariantWeights::U1 { re, im } | EquivariantWeights::So2 { re, im } => {
            vec![FlatArray::from_array("re", re), FlatArray::from_array("im", im)]
        }
        EquivariantWeights::Ok { a, .. } => vec![FlatArray::from_array("a", a)],
        EquivariantWeights::Generic { m, .. } => vec![FlatArray::from_array("m", m)],
    };
    write_flat(stem, serde_json::to_value(meta)?, &arrays)
}

pub fn load_weights(stem: &Path) -> Result<(EquivariantWeights, WeightMeta)> {
    let (meta, arrays) = read_flat(stem)?;
    let meta: WeightMeta = serde_json::from_value(meta)?;
    let k = meta.capsule_dim;
    let w = match meta.family {
        Family::U1 => EquivariantWeights::U1 {
            re: find(&arrays, "re")?.to_array2()?,
            im: find(&arrays, "im")?.to_array2()?,
        },
        Family::So2 => EquivariantWeights::So2 {
            re: find(&arrays, "re")?.to_array2()?,
            im: find(&arrays, "im")?.to_array2()?,
        },
        Family::Ok => EquivariantWeights::Ok {
            a: find(&arrays, "a")?.to_array2()?,
            k,
        },
        Family::Generic => EquivariantWeights::Generic {
            m: find(&arrays, "m")?.to_array2()?,
            k,
        },
    };
    if w.n_capsules() != meta.n_capsules {
        return Err(SsbError::Format {
            offset: 0,
            message: format!(
                "header says N={}, arrays give N={}",
                meta.n_capsules,
                w.n_capsules()
            ),
        });
    }
    Ok((w, meta))
}

#[cfg(test)]
mod tests;
